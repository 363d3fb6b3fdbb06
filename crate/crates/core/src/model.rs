//! The complete pair model: embeddings, shared encoder, matcher and classifier.

use rand::Rng;

use crate::data::{Label, PairExample};
use crate::embeddings::EmbeddingTable;
use crate::encoder::{encode, EncodeTrace, EncoderParams};
use crate::matcher::{logits, match_vectors, ClassifierParams, HeuristicSet};
use crate::numeric::{argmax, softmax, ContractError};
use crate::tree::DepTree;
use crate::vocab::Vocab;

/// How the softmax layer starts out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassifierInit {
    /// All-zero weights and biases: the untrained model predicts uniformly and
    /// its loss is exactly `ln 3`.
    #[default]
    Zero,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub vocab: Vocab,
    pub emb: EmbeddingTable,
    pub enc: EncoderParams,
    pub cls: ClassifierParams,
    pub hs: HeuristicSet,
}

/// Output of a single forward pass over a pair (no dropout).
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: Label,
    pub probs: Vec<f64>,
    pub logits: Vec<f64>,
    pub m: Vec<f64>,
}

impl ModelParams {
    pub fn new<R: Rng + ?Sized>(
        vocab: Vocab,
        emb: EmbeddingTable,
        conv_dim: usize,
        hidden_dim: usize,
        hs: HeuristicSet,
        init: ClassifierInit,
        rng: &mut R,
    ) -> Result<Self, ContractError> {
        let enc = EncoderParams::new(emb.dim(), conv_dim, hidden_dim, vocab.num_relations(), rng);
        let cls = match init {
            ClassifierInit::Zero => ClassifierParams::zeros(hs.dim(hidden_dim)),
            ClassifierInit::Random => ClassifierParams::random(hs.dim(hidden_dim), rng),
        };
        let model = Self {
            vocab,
            emb,
            enc,
            cls,
            hs,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn embed_dim(&self) -> usize {
        self.enc.embed_dim()
    }

    pub fn conv_dim(&self) -> usize {
        self.enc.conv_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.enc.hidden_dim()
    }

    /// Cross-tensor shape consistency.
    pub fn validate(&self) -> Result<(), ContractError> {
        self.enc.validate()?;
        self.cls.validate()?;
        if self.emb.rows() != self.vocab.num_words() {
            return Err(ContractError::dims("embedding rows", self.vocab.num_words(), self.emb.rows()));
        }
        if self.emb.dim() != self.enc.embed_dim() {
            return Err(ContractError::dims("embedding width", self.enc.embed_dim(), self.emb.dim()));
        }
        if self.enc.num_relations() != self.vocab.num_relations() {
            return Err(ContractError::dims(
                "relation matrices",
                self.vocab.num_relations(),
                self.enc.num_relations(),
            ));
        }
        let m_dim = self.hs.dim(self.hidden_dim());
        if self.cls.input_dim() != m_dim {
            return Err(ContractError::dims("classifier input", m_dim, self.cls.input_dim()));
        }
        Ok(())
    }

    pub fn encode(&self, tree: &DepTree) -> Result<(Vec<f64>, EncodeTrace), ContractError> {
        encode(tree, &self.emb, &self.enc)
    }

    /// Matching and classification given two sentence vectors.
    pub fn predict_from_vectors(&self, h1: &[f64], h2: &[f64]) -> Result<Prediction, ContractError> {
        let m = match_vectors(h1, h2, self.hs)?;
        let z = logits(&m, &self.cls)?;
        let probs = softmax(&z)?;
        let label = Label::from_index(argmax(&probs)).expect("three classes");
        Ok(Prediction {
            label,
            probs,
            logits: z,
            m,
        })
    }

    pub fn predict_trees(&self, premise: &DepTree, hypothesis: &DepTree) -> Result<Prediction, ContractError> {
        let (h1, _) = self.encode(premise)?;
        let (h2, _) = self.encode(hypothesis)?;
        self.predict_from_vectors(&h1, &h2)
    }

    pub fn predict(&self, ex: &PairExample) -> Result<Prediction, ContractError> {
        self.predict_trees(&ex.premise, &ex.hypothesis)
    }

    /// Rounds every parameter to the nearest `f32`, the precision of the
    /// model file.
    pub fn quantize_f32(&mut self) {
        let q = |xs: &mut [f64]| xs.iter_mut().for_each(|x| *x = *x as f32 as f64);
        q(self.emb.matrix.as_mut_slice());
        q(self.enc.w_parent.as_mut_slice());
        self.enc.w_rel.iter_mut().for_each(|w| q(w.as_mut_slice()));
        q(&mut self.enc.b_conv);
        q(self.enc.w_hid.as_mut_slice());
        q(&mut self.enc.b_hid);
        q(self.cls.w.as_mut_slice());
        q(&mut self.cls.b);
    }
}
