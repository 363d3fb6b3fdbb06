//! Synthetic corpora for verification runs.
//!
//! * [`random_raw_tree`]: uniformly random attachment trees over a toy
//!   vocabulary.
//! * [`rule_corpus`]: pairs labelled by a token-multiset rule (see
//!   [`rule_label`]).
//! * [`length_corpus`]: pairs of a chosen mean length, for timing.
//! * [`gradcheck_instance`]: a small random model and pair for gradient checks.

use std::collections::HashMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Label, PairExample, RawPair, RawTree};
use crate::embeddings::EmbeddingTable;
use crate::matcher::HeuristicSet;
use crate::model::{ClassifierInit, ModelParams};
use crate::vocab::Vocab;

pub const NEGATION: &str = "not";

pub fn word(i: usize) -> String {
    format!("w{i}")
}

pub fn relation(i: usize) -> String {
    format!("r{i}")
}

/// Random tree over `tokens`: node k (in a random order) attaches to a
/// uniformly chosen earlier node; relation labels are drawn from
/// `r0..r{n_rel}`.
pub fn random_raw_tree<R: Rng + ?Sized>(tokens: Vec<String>, n_rel: usize, rng: &mut R) -> RawTree {
    let n = tokens.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut heads = vec![0; n];
    let mut rels = vec!["root".to_owned(); n];
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        heads[order[k]] = parent + 1;
        rels[order[k]] = relation(rng.random_range(0..n_rel));
    }
    RawTree { tokens, heads, rels }
}

/// Multiset rule: Entailment iff every hypothesis token (with multiplicity)
/// occurs in the premise; otherwise Contradiction iff the hypothesis holds
/// the negation token; otherwise Neutral.
pub fn rule_label(premise: &[String], hypothesis: &[String]) -> Label {
    let mut counts: HashMap<&str, isize> = HashMap::new();
    for t in premise {
        *counts.entry(t).or_default() += 1;
    }
    let mut subset = true;
    for t in hypothesis {
        let c = counts.entry(t).or_default();
        *c -= 1;
        if *c < 0 {
            subset = false;
        }
    }
    if subset {
        Label::Entailment
    } else if hypothesis.iter().any(|t| t == NEGATION) {
        Label::Contradiction
    } else {
        Label::Neutral
    }
}

/// `n` pairs over `vocab_size` words (the negation token is one of them),
/// balanced across the three labels. Premises hold 3–5 distinct
/// non-negation words and hypotheses 3–5 tokens (capped at the premise
/// length). Entailment hypotheses are drawn from the premise, contradiction
/// hypotheses swap one of those words for the negation token, and neutral
/// hypotheses use words absent from the premise. Labels come from
/// [`rule_label`].
pub fn rule_corpus(n: usize, vocab_size: usize, n_rel: usize, seed: u64) -> Vec<RawPair> {
    assert!(vocab_size >= 12, "vocabulary too small for the generator");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let content: Vec<String> = (0..vocab_size - 1).map(word).collect();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let plen = rng.random_range(3..=5);
        let premise: Vec<String> = content.choose_multiple(&mut rng, plen).cloned().collect();
        let hlen = rng.random_range(3..=5).min(plen);
        let mut hyp: Vec<String> = premise.choose_multiple(&mut rng, hlen).cloned().collect();
        match i % 3 {
            0 => {}
            1 => {
                let pos = rng.random_range(0..hyp.len());
                hyp[pos] = NEGATION.to_owned();
            }
            _ => {
                let outside: Vec<&String> = content.iter().filter(|w| !premise.contains(w)).collect();
                hyp = outside.choose_multiple(&mut rng, hlen).map(|w| (*w).clone()).collect();
            }
        }
        hyp.shuffle(&mut rng);
        let label = rule_label(&premise, &hyp);
        out.push(RawPair {
            premise: random_raw_tree(premise, n_rel, &mut rng),
            hypothesis: random_raw_tree(hyp, n_rel, &mut rng),
            label: Some(label.to_string()),
        });
    }
    out
}

/// Pairs whose sentence lengths are drawn uniformly from
/// `mean_len/2 ..= 3·mean_len/2`, with random labels.
pub fn length_corpus(n: usize, mean_len: usize, vocab_size: usize, n_rel: usize, seed: u64) -> Vec<RawPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = (mean_len / 2).max(1);
    let hi = (mean_len * 3 / 2).max(lo);
    let sentence = |rng: &mut ChaCha8Rng| {
        let len = rng.random_range(lo..=hi);
        let toks = (0..len).map(|_| word(rng.random_range(0..vocab_size))).collect();
        random_raw_tree(toks, n_rel, rng)
    };
    (0..n)
        .map(|_| {
            let premise = sentence(&mut rng);
            let hypothesis = sentence(&mut rng);
            let label = Label::ALL[rng.random_range(0..3)];
            RawPair {
                premise,
                hypothesis,
                label: Some(label.to_string()),
            }
        })
        .collect()
}

/// Vocabulary with words `w0..w{n_words}` and relations `r0..r{n_rel}`.
pub fn toy_vocab(n_words: usize, n_rel: usize) -> Vocab {
    let mut v = Vocab::new();
    for i in 0..n_words {
        v.add_word(&word(i));
    }
    for i in 0..n_rel {
        v.add_relation(&relation(i));
    }
    v
}

/// Random model (random classifier included) and a random labelled pair with
/// trees of 2–7 nodes, over 20 words and 5 relations.
pub fn gradcheck_instance(dim: usize, hs: HeuristicSet, seed: u64) -> (ModelParams, PairExample) {
    const WORDS: usize = 20;
    const RELS: usize = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = toy_vocab(WORDS, RELS);
    // embeddings at unit scale so the random instance is not dominated by
    // near-zero activations
    let mut emb = EmbeddingTable::random(vocab.num_words(), dim, &mut rng);
    emb.matrix.scale(10.0);
    let model = ModelParams::new(vocab.clone(), emb, dim, dim, hs, ClassifierInit::Random, &mut rng).expect("consistent toy model");
    let sentence = |rng: &mut ChaCha8Rng| {
        let len = rng.random_range(2..=7);
        let toks = (0..len).map(|_| word(rng.random_range(0..WORDS))).collect();
        random_raw_tree(toks, RELS, rng)
    };
    let premise = sentence(&mut rng).to_tree(&vocab).expect("generated tree is valid");
    let hypothesis = sentence(&mut rng).to_tree(&vocab).expect("generated tree is valid");
    let label = Label::ALL[rng.random_range(0..3)];
    (
        model,
        PairExample {
            premise,
            hypothesis,
            label,
        },
    )
}
