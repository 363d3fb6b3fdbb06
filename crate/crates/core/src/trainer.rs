//! Mini-batch SGD training with ℓ2 decay on weight matrices, inverted dropout
//! on the matching vector, and a per-epoch power-decay learning rate.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Label, PairExample};
use crate::encoder::{encoder_backward_acc, EncodeTrace, EncoderParams};
use crate::matcher::{
    classifier_backward_acc, cross_entropy_from_logits, logits, match_backward, match_vectors, ClassifierParams,
    HeuristicSet,
};
use crate::model::ModelParams;
use crate::numeric::{argmax, softmax, ContractError, Matrix};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty dataset")]
    EmptyDataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim_embed: usize,
    pub dim_conv: usize,
    pub dim_hidden: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub decay_power: f64,
    pub l2: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub seed: u64,
    pub heuristics: HeuristicSet,
    pub min_relation_freq: usize,
    /// 1 = serial.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim_embed: 300,
            dim_conv: 300,
            dim_hidden: 300,
            batch_size: 50,
            lr0: 1.0,
            decay_power: 0.5,
            l2: 3e-4,
            dropout: 0.1,
            epochs: 10,
            seed: 0,
            heuristics: HeuristicSet::ALL,
            min_relation_freq: crate::vocab::DEFAULT_MIN_RELATION_FREQ,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::Config(msg.to_owned()));
        if self.dim_embed == 0 || self.dim_conv == 0 || self.dim_hidden == 0 {
            return bad("dimensions must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.decay_power >= 0.0 && self.decay_power.is_finite()) {
            return bad("decay power must be non-negative");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 penalty must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout rate must be in [0, 1)");
        }
        if self.threads == 0 {
            return bad("threads must be at least 1");
        }
        Ok(())
    }

    /// Checks that a model matches the configured dimensions.
    pub fn check_model(&self, model: &ModelParams) -> Result<(), TrainError> {
        model.validate()?;
        let dims = (model.embed_dim(), model.conv_dim(), model.hidden_dim());
        if dims != (self.dim_embed, self.dim_conv, self.dim_hidden) || model.hs != self.heuristics {
            return Err(TrainError::Config(format!(
                "model dims {dims:?}/{} do not match config ({}, {}, {})/{}",
                model.hs, self.dim_embed, self.dim_conv, self.dim_hidden, self.heuristics
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Kept entries and the survivor scale `1 / (1 − rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub keep: Vec<bool>,
    pub scale: f64,
}

impl DropoutMask {
    pub fn full(len: usize) -> Self {
        Self {
            keep: vec![true; len],
            scale: 1.0,
        }
    }

    pub fn from_keep(keep: Vec<bool>, rate: f64) -> Self {
        Self {
            keep,
            scale: 1.0 / (1.0 - rate),
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.keep)
            .map(|(&x, &k)| if k { x * self.scale } else { 0.0 })
            .collect()
    }
}

/// Inverted dropout. Eval mode (or rate 0) is the identity.
pub fn apply_dropout<R: Rng + ?Sized>(
    v: &[f64],
    rate: f64,
    rng: &mut R,
    mode: Mode,
) -> Result<(Vec<f64>, DropoutMask), ContractError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(ContractError::new("apply_dropout", format!("rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((v.to_vec(), DropoutMask::full(v.len())));
    }
    let keep: Vec<bool> = v.iter().map(|_| rng.random::<f64>() >= rate).collect();
    let mask = DropoutMask::from_keep(keep, rate);
    Ok((mask.apply(v), mask))
}

/// Gradient accumulator mirroring [`ModelParams`]; embedding rows are sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    pub enc: EncoderParams,
    pub cls: ClassifierParams,
    pub emb: BTreeMap<usize, Vec<f64>>,
}

impl GradBuffer {
    pub fn zeros_for(model: &ModelParams) -> Self {
        Self {
            enc: model.enc.zeros_like(),
            cls: model.cls.zeros_like(),
            emb: BTreeMap::new(),
        }
    }

    /// `self += other`
    pub fn add(&mut self, other: &GradBuffer) {
        self.enc.add_scaled(1.0, &other.enc);
        self.cls.add_scaled(1.0, &other.cls);
        for (&id, row) in &other.emb {
            let acc = self.emb.entry(id).or_insert_with(|| vec![0.0; row.len()]);
            crate::numeric::axpy(1.0, row, acc);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.enc.scale(s);
        self.cls.scale(s);
        for row in self.emb.values_mut() {
            row.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Largest absolute difference to another buffer; missing embedding rows
    /// count as zero.
    pub fn max_abs_diff(&self, other: &GradBuffer) -> f64 {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let mut worst = d(self.enc.w_parent.as_slice(), other.enc.w_parent.as_slice())
            .max(d(&self.enc.b_conv, &other.enc.b_conv))
            .max(d(self.enc.w_hid.as_slice(), other.enc.w_hid.as_slice()))
            .max(d(&self.enc.b_hid, &other.enc.b_hid))
            .max(d(self.cls.w.as_slice(), other.cls.w.as_slice()))
            .max(d(&self.cls.b, &other.cls.b));
        for (a, b) in self.enc.w_rel.iter().zip(&other.enc.w_rel) {
            worst = worst.max(d(a.as_slice(), b.as_slice()));
        }
        for id in self.emb.keys().chain(other.emb.keys()) {
            let zero = vec![0.0; self.enc.embed_dim()];
            let a = self.emb.get(id).unwrap_or(&zero);
            let b = other.emb.get(id).unwrap_or(&zero);
            worst = worst.max(d(a, b));
        }
        worst
    }
}

/// Forward state for one pair.
#[derive(Debug, Clone)]
pub struct PairForward {
    pub trace_premise: EncodeTrace,
    pub trace_hypothesis: EncodeTrace,
    /// Classifier input after dropout.
    pub m: Vec<f64>,
    pub mask: DropoutMask,
    pub logits: Vec<f64>,
    pub loss: f64,
}

impl PairForward {
    pub fn predicted(&self) -> usize {
        argmax(&self.logits)
    }
}

/// Forward pass for one labelled pair. `dropout = None` disables dropout.
pub fn forward_pair(
    ex: &PairExample,
    model: &ModelParams,
    dropout: Option<(f64, &mut ChaCha8Rng)>,
) -> Result<PairForward, ContractError> {
    let (h1, trace_premise) = model.encode(&ex.premise)?;
    let (h2, trace_hypothesis) = model.encode(&ex.hypothesis)?;
    let m_full = match_vectors(&h1, &h2, model.hs)?;
    let (m, mask) = match dropout {
        Some((rate, rng)) => apply_dropout(&m_full, rate, rng, Mode::Train)?,
        None => (m_full.clone(), DropoutMask::full(m_full.len())),
    };
    let z = logits(&m, &model.cls)?;
    let loss = cross_entropy_from_logits(&z, ex.label.index())?;
    Ok(PairForward {
        trace_premise,
        trace_hypothesis,
        m,
        mask,
        logits: z,
        loss,
    })
}

/// Accumulates the gradient of one pair's loss into `grads`.
pub fn backward_pair(fwd: &PairForward, label: Label, model: &ModelParams, grads: &mut GradBuffer) -> Result<(), ContractError> {
    let g_m_dropped = classifier_backward_acc(&fwd.m, &fwd.logits, label.index(), &model.cls, &mut grads.cls)?;
    let g_m = fwd.mask.apply(&g_m_dropped);
    let h1 = &fwd.trace_premise.h;
    let h2 = &fwd.trace_hypothesis.h;
    let (g1, g2) = match_backward(h1, h2, model.hs, &g_m)?;

    encoder_backward_acc(&fwd.trace_premise, &g1, &model.emb, &model.enc, &mut grads.enc, &mut grads.emb)?;
    encoder_backward_acc(&fwd.trace_hypothesis, &g2, &model.emb, &model.enc, &mut grads.enc, &mut grads.emb)
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub loss: f64,
    pub grads: GradBuffer,
    pub predictions: Vec<usize>,
}

fn run_chunk(
    chunk: &[PairExample],
    seeds: &[u64],
    model: &ModelParams,
    dropout: f64,
) -> Result<(f64, GradBuffer, Vec<usize>), ContractError> {
    let mut grads = GradBuffer::zeros_for(model);
    let mut loss = 0.0;
    let mut preds = Vec::with_capacity(chunk.len());
    for (ex, &seed) in chunk.iter().zip(seeds) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fwd = forward_pair(ex, model, (dropout > 0.0).then_some((dropout, &mut rng)))?;
        backward_pair(&fwd, ex.label, model, &mut grads)?;
        loss += fwd.loss;
        preds.push(fwd.predicted());
    }
    Ok((loss, grads, preds))
}

/// Mean loss and mean gradient over a batch, with dropout at
/// `config.dropout`. With `config.threads > 1` the batch is split into
/// contiguous chunks evaluated in parallel and reduced in order.
pub fn forward_backward<R: Rng + ?Sized>(
    batch: &[PairExample],
    model: &ModelParams,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<BatchOutput, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let seeds: Vec<u64> = batch.iter().map(|_| rng.random()).collect();
    let parts = if config.threads > 1 && batch.len() > 1 {
        let chunk = batch.len().div_ceil(config.threads);
        batch
            .par_chunks(chunk)
            .zip(seeds.par_chunks(chunk))
            .map(|(c, s)| run_chunk(c, s, model, config.dropout))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        vec![run_chunk(batch, &seeds, model, config.dropout)?]
    };

    let mut iter = parts.into_iter();
    let (mut loss, mut grads, mut predictions) = iter.next().expect("non-empty batch");
    for (l, g, p) in iter {
        loss += l;
        grads.add(&g);
        predictions.extend(p);
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    Ok(BatchOutput {
        loss: loss / n,
        grads,
        predictions,
    })
}

/// `lr0 · (1 + epoch)^(−κ)`
pub fn lr_at(epoch: usize, config: &TrainConfig) -> f64 {
    config.lr0 * (1.0 + epoch as f64).powf(-config.decay_power)
}

fn decay_step(theta: &mut Matrix, g: &Matrix, lr: f64, l2: f64) {
    for (t, &gi) in theta.as_mut_slice().iter_mut().zip(g.as_slice()) {
        *t -= lr * (gi + 2.0 * l2 * *t);
    }
}

fn plain_step(theta: &mut [f64], g: &[f64], lr: f64) {
    for (t, &gi) in theta.iter_mut().zip(g) {
        *t -= lr * gi;
    }
}

/// One SGD step. Weight matrices get `θ ← θ − lr·(g + 2λθ)`; biases and the
/// embedding rows present in `grads.emb` get `θ ← θ − lr·g`.
pub fn sgd_update(model: &mut ModelParams, grads: &GradBuffer, lr: f64, l2: f64) -> Result<(), ContractError> {
    let shapes_match = grads.enc.w_parent.shape() == model.enc.w_parent.shape()
        && grads.enc.w_rel.len() == model.enc.w_rel.len()
        && grads.enc.w_rel.iter().zip(&model.enc.w_rel).all(|(a, b)| a.shape() == b.shape())
        && grads.enc.b_conv.len() == model.enc.b_conv.len()
        && grads.enc.w_hid.shape() == model.enc.w_hid.shape()
        && grads.enc.b_hid.len() == model.enc.b_hid.len()
        && grads.cls.w.shape() == model.cls.w.shape()
        && grads.cls.b.len() == model.cls.b.len();
    if !shapes_match {
        return Err(ContractError::new("sgd_update", "gradient shapes do not match the model"));
    }
    for (&id, row) in &grads.emb {
        if id >= model.emb.rows() || row.len() != model.emb.dim() {
            return Err(ContractError::new("sgd_update", format!("bad embedding gradient row {id}")));
        }
    }

    decay_step(&mut model.enc.w_parent, &grads.enc.w_parent, lr, l2);
    for (w, g) in model.enc.w_rel.iter_mut().zip(&grads.enc.w_rel) {
        decay_step(w, g, lr, l2);
    }
    decay_step(&mut model.enc.w_hid, &grads.enc.w_hid, lr, l2);
    decay_step(&mut model.cls.w, &grads.cls.w, lr, l2);
    plain_step(&mut model.enc.b_conv, &grads.enc.b_conv, lr);
    plain_step(&mut model.enc.b_hid, &grads.enc.b_hid, lr);
    plain_step(&mut model.cls.b, &grads.cls.b, lr);
    for (&id, row) in &grads.emb {
        plain_step(model.emb.matrix.row_mut(id), row, lr);
    }
    Ok(())
}

/// Accuracy, confusion matrix (rows = gold, columns = predicted) and mean loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub count: usize,
    pub accuracy: f64,
    pub confusion: [[usize; 3]; 3],
    pub mean_loss: f64,
}

fn score(ex: &PairExample, model: &ModelParams) -> Result<(usize, f64), ContractError> {
    let fwd = forward_pair(ex, model, None)?;
    Ok((fwd.predicted(), fwd.loss))
}

fn summarize(data: &[PairExample], scored: Vec<(usize, f64)>) -> Evaluation {
    let mut confusion = [[0usize; 3]; 3];
    let mut loss = 0.0;
    for (ex, (pred, l)) in data.iter().zip(scored) {
        confusion[ex.label.index()][pred] += 1;
        loss += l;
    }
    let correct: usize = (0..3).map(|i| confusion[i][i]).sum();
    let n = data.len() as f64;
    Evaluation {
        count: data.len(),
        accuracy: correct as f64 / n,
        confusion,
        mean_loss: loss / n,
    }
}

/// Serial evaluation without dropout.
pub fn evaluate(model: &ModelParams, data: &[PairExample]) -> Result<Evaluation, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let scored = data.iter().map(|ex| score(ex, model)).collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(data, scored))
}

/// As [`evaluate`], scoring examples on the current rayon pool. Results are
/// identical to the serial version.
pub fn evaluate_par(model: &ModelParams, data: &[PairExample]) -> Result<Evaluation, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let scored = data.par_iter().map(|ex| score(ex, model)).collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(data, scored))
}

/// Class probabilities for every example, no dropout.
pub fn probabilities(model: &ModelParams, ex: &PairExample) -> Result<Vec<f64>, ContractError> {
    softmax(&forward_pair(ex, model, None)?.logits)
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` without a validation set.
    pub valid_acc: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub epoch: usize,
    pub valid_acc: f64,
    pub model: ModelParams,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the last epoch.
    pub model: ModelParams,
    /// Highest validation accuracy seen (first epoch wins ties).
    pub best: Option<Checkpoint>,
    pub log: Vec<EpochRecord>,
}

const SHUFFLE_STREAM: u64 = 1 << 32;
const DROPOUT_STREAM: u64 = 2 << 32;

fn epoch_rng(seed: u64, stream: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream + epoch as u64);
    rng
}

/// Trains `model` in place for `config.epochs` epochs of shuffled mini-batches.
/// `on_epoch` sees each log record as soon as it is produced.
pub fn train(
    mut model: ModelParams,
    train_set: &[PairExample],
    valid_set: &[PairExample],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    config.check_model(&model)?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let pool = if config.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.threads)
                .build()
                .map_err(|e| TrainError::Config(e.to_string()))?,
        )
    } else {
        None
    };
    fn in_pool<T: Send>(pool: &Option<rayon::ThreadPool>, f: impl FnOnce() -> T + Send) -> T {
        match pool {
            Some(p) => p.install(f),
            None => f(),
        }
    }

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<Checkpoint> = None;
    let mut batch = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        let lr = lr_at(epoch, config);
        order.sort_unstable();
        order.shuffle(&mut epoch_rng(config.seed, SHUFFLE_STREAM, epoch));
        let mut dropout_rng = epoch_rng(config.seed, DROPOUT_STREAM, epoch);
        let mut loss_sum = 0.0;
        for idx in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(idx.iter().map(|&i| train_set[i].clone()));
            let seed: u64 = dropout_rng.random();
            let out = in_pool(&pool, || forward_backward(&batch, &model, config, &mut ChaCha8Rng::seed_from_u64(seed)))?;
            loss_sum += out.loss * batch.len() as f64;
            sgd_update(&mut model, &out.grads, lr, config.l2)?;
        }
        let valid_acc = if valid_set.is_empty() {
            None
        } else if pool.is_some() {
            Some(in_pool(&pool, || evaluate_par(&model, valid_set))?.accuracy)
        } else {
            Some(evaluate(&model, valid_set)?.accuracy)
        };
        if let Some(acc) = valid_acc {
            if best.as_ref().is_none_or(|b| acc > b.valid_acc) {
                best = Some(Checkpoint {
                    epoch,
                    valid_acc: acc,
                    model: model.clone(),
                });
            }
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            valid_acc,
            lr,
        };
        on_epoch(&record);
        log.push(record);
    }
    Ok(TrainOutcome { model, best, log })
}
