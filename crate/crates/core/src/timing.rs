//! Wall-clock split of prediction time between sentence encoding and
//! matching + classification.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::data::PairExample;
use crate::model::ModelParams;
use crate::numeric::ContractError;

/// Below this many pairs the measurement is noisy.
pub const MIN_STABLE_EXAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingReport {
    pub examples: usize,
    pub total_secs: f64,
    pub encode_secs: f64,
    pub match_secs: f64,
    /// Matching + classification as a percentage of the total.
    pub match_share_pct: f64,
    pub encode_share_pct: f64,
    pub below_stable_size: bool,
}

/// Predicts every pair once, timing the two encoder calls separately from
/// the matcher and softmax.
pub fn timing_report(model: &ModelParams, data: &[PairExample]) -> Result<TimingReport, ContractError> {
    let mut encode = Duration::ZERO;
    let mut matching = Duration::ZERO;
    for ex in data {
        let t0 = Instant::now();
        let (h1, _) = model.encode(&ex.premise)?;
        let (h2, _) = model.encode(&ex.hypothesis)?;
        let t1 = Instant::now();
        let pred = model.predict_from_vectors(&h1, &h2)?;
        let t2 = Instant::now();
        std::hint::black_box(pred);
        encode += t1 - t0;
        matching += t2 - t1;
    }
    let total = encode + matching;
    let pct = |d: Duration| {
        if total.is_zero() {
            0.0
        } else {
            100.0 * d.as_secs_f64() / total.as_secs_f64()
        }
    };
    Ok(TimingReport {
        examples: data.len(),
        total_secs: total.as_secs_f64(),
        encode_secs: encode.as_secs_f64(),
        match_secs: matching.as_secs_f64(),
        match_share_pct: pct(matching),
        encode_share_pct: pct(encode),
        below_stable_size: data.len() < MIN_STABLE_EXAMPLES,
    })
}
