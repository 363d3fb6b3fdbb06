//! Central finite-difference check of the analytic gradients.
//!
//! Every coordinate of every encoder/classifier tensor and every embedding row
//! used by the example is perturbed by `±ε`. A coordinate whose perturbation
//! changes any ReLU sign or pooling winner straddles a kink; it is excluded
//! and counted rather than compared.

use serde::Serialize;

use crate::data::PairExample;
use crate::model::ModelParams;
use crate::numeric::ContractError;
use crate::trainer::{backward_pair, forward_pair, GradBuffer};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Names one parameter tensor of a [`ModelParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tensor {
    WParent,
    WRel(usize),
    BConv,
    WHid,
    BHid,
    ClsW,
    ClsB,
    EmbRow(usize),
}

impl Tensor {
    pub fn name(&self) -> String {
        match self {
            Tensor::WParent => "enc.w_parent".into(),
            Tensor::WRel(i) => format!("enc.w_rel.{i}"),
            Tensor::BConv => "enc.b_conv".into(),
            Tensor::WHid => "enc.w_hid".into(),
            Tensor::BHid => "enc.b_hid".into(),
            Tensor::ClsW => "cls.w".into(),
            Tensor::ClsB => "cls.b".into(),
            Tensor::EmbRow(i) => format!("emb[{i}]"),
        }
    }

    fn slice_mut<'a>(&self, m: &'a mut ModelParams) -> &'a mut [f64] {
        match *self {
            Tensor::WParent => m.enc.w_parent.as_mut_slice(),
            Tensor::WRel(i) => m.enc.w_rel[i].as_mut_slice(),
            Tensor::BConv => &mut m.enc.b_conv,
            Tensor::WHid => m.enc.w_hid.as_mut_slice(),
            Tensor::BHid => &mut m.enc.b_hid,
            Tensor::ClsW => m.cls.w.as_mut_slice(),
            Tensor::ClsB => &mut m.cls.b,
            Tensor::EmbRow(i) => m.emb.matrix.row_mut(i),
        }
    }

    /// Analytic gradient slice; `None` for an embedding row the gradient
    /// never touched (implicitly zero).
    fn grad<'a>(&self, g: &'a GradBuffer) -> Option<&'a [f64]> {
        Some(match *self {
            Tensor::WParent => g.enc.w_parent.as_slice(),
            Tensor::WRel(i) => g.enc.w_rel[i].as_slice(),
            Tensor::BConv => &g.enc.b_conv,
            Tensor::WHid => g.enc.w_hid.as_slice(),
            Tensor::BHid => &g.enc.b_hid,
            Tensor::ClsW => g.cls.w.as_slice(),
            Tensor::ClsB => &g.cls.b,
            Tensor::EmbRow(i) => return g.emb.get(&i).map(Vec::as_slice),
        })
    }
}

/// Tensors checked for one example: all dense tensors plus used embedding rows.
pub fn tensors_for(model: &ModelParams, ex: &PairExample) -> Vec<Tensor> {
    let mut out = vec![Tensor::WParent];
    out.extend((0..model.enc.num_relations()).map(Tensor::WRel));
    out.extend([Tensor::BConv, Tensor::WHid, Tensor::BHid, Tensor::ClsW, Tensor::ClsB]);
    let mut rows: Vec<usize> = ex.premise.tokens().iter().chain(ex.hypothesis.tokens()).copied().collect();
    rows.sort_unstable();
    rows.dedup();
    out.extend(rows.into_iter().map(Tensor::EmbRow));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Tensor and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub excluded_kinks: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }

    /// Combines reports from several instances.
    pub fn merge(mut self, other: GradCheckReport) -> GradCheckReport {
        if other.max_rel_err > self.max_rel_err {
            self.max_rel_err = other.max_rel_err;
            self.worst = other.worst;
        }
        self.checked += other.checked;
        self.excluded_kinks += other.excluded_kinks;
        self
    }
}

impl Default for GradCheckReport {
    fn default() -> Self {
        Self {
            max_rel_err: 0.0,
            worst: None,
            checked: 0,
            excluded_kinks: 0,
        }
    }
}

fn loss_and_pattern(model: &ModelParams, ex: &PairExample) -> Result<(f64, Vec<usize>), ContractError> {
    let fwd = forward_pair(ex, model, None)?;
    let mut pattern = fwd.trace_premise.activation_pattern();
    pattern.extend(fwd.trace_hypothesis.activation_pattern());
    Ok((fwd.loss, pattern))
}

/// Rounding error of the central difference quotient itself. Disagreements
/// below it carry no information, e.g. an exactly cancelling gradient.
pub fn roundoff_bound(lp: f64, lm: f64, eps: f64) -> f64 {
    8.0 * f64::EPSILON * lp.abs().max(lm.abs()).max(1.0) / (2.0 * eps)
}

/// Analytic gradient of one example's loss without dropout.
pub fn analytic_gradient(model: &ModelParams, ex: &PairExample) -> Result<GradBuffer, ContractError> {
    let fwd = forward_pair(ex, model, None)?;
    let mut grads = GradBuffer::zeros_for(model);
    backward_pair(&fwd, ex.label, model, &mut grads)?;
    Ok(grads)
}

/// Compares `analytic` against central differences of the loss on `ex`.
pub fn gradient_check_against(
    model: &ModelParams,
    ex: &PairExample,
    eps: f64,
    analytic: &GradBuffer,
) -> Result<GradCheckReport, ContractError> {
    let (_, base_pattern) = loss_and_pattern(model, ex)?;
    let mut probe = model.clone();
    let mut report = GradCheckReport::default();
    for tensor in tensors_for(model, ex) {
        let len = tensor.slice_mut(&mut probe).len();
        let grad = tensor.grad(analytic);
        for i in 0..len {
            let orig = tensor.slice_mut(&mut probe)[i];
            tensor.slice_mut(&mut probe)[i] = orig + eps;
            let (lp, pp) = loss_and_pattern(&probe, ex)?;
            tensor.slice_mut(&mut probe)[i] = orig - eps;
            let (lm, pm) = loss_and_pattern(&probe, ex)?;
            tensor.slice_mut(&mut probe)[i] = orig;

            if pp != base_pattern || pm != base_pattern {
                report.excluded_kinks += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * eps);
            let a = grad.map_or(0.0, |g| g[i]);
            let err = if (a - numeric).abs() <= roundoff_bound(lp, lm, eps) {
                0.0
            } else {
                relative_error(a, numeric)
            };
            report.checked += 1;
            if err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(err);
                report.worst = Some((tensor.name(), i));
            }
        }
    }
    Ok(report)
}

/// Full-model gradient check for one example (dropout off).
pub fn gradient_check(model: &ModelParams, ex: &PairExample, eps: f64) -> Result<GradCheckReport, ContractError> {
    let analytic = analytic_gradient(model, ex)?;
    gradient_check_against(model, ex, eps, &analytic)
}
