//! Matching heuristics and the softmax classifier.
//!
//! The matching vector is assembled in a fixed order:
//! `[h1; h2]` (concatenation), then `h1 − h2`, then `h1 ∘ h2`, each block
//! present only when its heuristic is enabled.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numeric::{axpy, check_len, init_weight, log_sum_exp, softmax, ContractError, Matrix};

pub const NUM_CLASSES: usize = 3;

/// Active matching heuristics; at least one is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HeuristicSet {
    pub concat: bool,
    pub difference: bool,
    pub product: bool,
}

impl HeuristicSet {
    pub const ALL: HeuristicSet = HeuristicSet {
        concat: true,
        difference: true,
        product: true,
    };

    pub fn new(concat: bool, difference: bool, product: bool) -> Option<Self> {
        (concat || difference || product).then_some(Self {
            concat,
            difference,
            product,
        })
    }

    /// The six ablation variants: ∘, −, cat, cat+∘, cat+−, cat+∘+−.
    pub fn variants() -> [HeuristicSet; 6] {
        let v = |c, d, p| HeuristicSet::new(c, d, p).unwrap();
        [
            v(false, false, true),
            v(false, true, false),
            v(true, false, false),
            v(true, false, true),
            v(true, true, false),
            v(true, true, true),
        ]
    }

    /// Width of the matching vector for sentence vectors of width `n_h`.
    pub fn dim(&self, n_h: usize) -> usize {
        n_h * (2 * usize::from(self.concat) + usize::from(self.difference) + usize::from(self.product))
    }
}

impl Default for HeuristicSet {
    fn default() -> Self {
        Self::ALL
    }
}

impl fmt::Display for HeuristicSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.concat {
            parts.push("cat");
        }
        if self.difference {
            parts.push("diff");
        }
        if self.product {
            parts.push("prod");
        }
        f.write_str(&parts.join(","))
    }
}

impl FromStr for HeuristicSet {
    type Err = String;

    /// Comma-separated names: `cat`, `diff`, `prod`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (mut c, mut d, mut p) = (false, false, false);
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "cat" | "concat" => c = true,
                "diff" | "difference" | "-" => d = true,
                "prod" | "product" | "mul" => p = true,
                other => return Err(format!("unknown heuristic {other:?} (expected cat, diff, prod)")),
            }
        }
        HeuristicSet::new(c, d, p).ok_or_else(|| "at least one heuristic is required".to_owned())
    }
}

/// Builds the matching vector `m`.
pub fn match_vectors(h1: &[f64], h2: &[f64], hs: HeuristicSet) -> Result<Vec<f64>, ContractError> {
    check_len("match_vectors", h2, h1.len())?;
    let mut m = Vec::with_capacity(hs.dim(h1.len()));
    if hs.concat {
        m.extend_from_slice(h1);
        m.extend_from_slice(h2);
    }
    if hs.difference {
        m.extend(h1.iter().zip(h2).map(|(a, b)| a - b));
    }
    if hs.product {
        m.extend(h1.iter().zip(h2).map(|(a, b)| a * b));
    }
    Ok(m)
}

/// Reverse of [`match_vectors`]: splits `g_m` back onto `h1` and `h2`.
pub fn match_backward(h1: &[f64], h2: &[f64], hs: HeuristicSet, g_m: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ContractError> {
    let n = h1.len();
    check_len("match_backward h2", h2, n)?;
    check_len("match_backward g_m", g_m, hs.dim(n))?;
    let mut g1 = vec![0.0; n];
    let mut g2 = vec![0.0; n];
    let mut blocks = g_m.chunks_exact(n.max(1));
    if n == 0 {
        return Ok((g1, g2));
    }
    if hs.concat {
        axpy(1.0, blocks.next().unwrap(), &mut g1);
        axpy(1.0, blocks.next().unwrap(), &mut g2);
    }
    if hs.difference {
        let g = blocks.next().unwrap();
        axpy(1.0, g, &mut g1);
        axpy(-1.0, g, &mut g2);
    }
    if hs.product {
        let g = blocks.next().unwrap();
        for i in 0..n {
            g1[i] += g[i] * h2[i];
            g2[i] += g[i] * h1[i];
        }
    }
    Ok((g1, g2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    /// `3 × dim(m)`
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl ClassifierParams {
    pub fn zeros(input_dim: usize) -> Self {
        Self {
            w: Matrix::zeros(NUM_CLASSES, input_dim),
            b: vec![0.0; NUM_CLASSES],
        }
    }

    pub fn random<R: Rng + ?Sized>(input_dim: usize, rng: &mut R) -> Self {
        Self {
            w: init_weight(NUM_CLASSES, input_dim, rng),
            b: vec![0.0; NUM_CLASSES],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim())
    }

    pub fn validate(&self) -> Result<(), ContractError> {
        if self.w.rows() != NUM_CLASSES {
            return Err(ContractError::dims("ClassifierParams::w rows", NUM_CLASSES, self.w.rows()));
        }
        check_len("ClassifierParams::b", &self.b, NUM_CLASSES)?;
        if !self.w.is_finite() || !self.b.iter().all(|x| x.is_finite()) {
            return Err(ContractError::new("ClassifierParams", "non-finite parameter"));
        }
        Ok(())
    }

    pub fn add_scaled(&mut self, s: f64, other: &ClassifierParams) {
        self.w.add_scaled(s, &other.w);
        axpy(s, &other.b, &mut self.b);
    }

    pub fn scale(&mut self, s: f64) {
        self.w.scale(s);
        self.b.iter_mut().for_each(|x| *x *= s);
    }
}

/// `W_soft · m + b_soft`
pub fn logits(m: &[f64], cls: &ClassifierParams) -> Result<Vec<f64>, ContractError> {
    check_len("classify", m, cls.input_dim())?;
    let mut z = cls.b.clone();
    cls.w.matvec_acc(m, &mut z);
    Ok(z)
}

/// Class probabilities `softmax(W_soft · m + b_soft)`.
pub fn classify(m: &[f64], cls: &ClassifierParams) -> Result<Vec<f64>, ContractError> {
    softmax(&logits(m, cls)?)
}

/// `−ln p[label]` for a probability vector.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64, ContractError> {
    match probs.get(label) {
        Some(p) => Ok(-p.ln()),
        None => Err(ContractError::new("cross_entropy", format!("label {label} out of range"))),
    }
}

/// `−ln softmax(z)[label]` evaluated as `logsumexp(z) − z[label]`.
pub fn cross_entropy_from_logits(z: &[f64], label: usize) -> Result<f64, ContractError> {
    let zl = *z
        .get(label)
        .ok_or_else(|| ContractError::new("cross_entropy", format!("label {label} out of range")))?;
    Ok(log_sum_exp(z)? - zl)
}

/// Softmax-cross-entropy gradient at the classifier, returning
/// `(grad W_soft, grad b_soft, grad m)` accumulated into `acc` for the weights.
pub(crate) fn classifier_backward_acc(
    m: &[f64],
    z: &[f64],
    label: usize,
    cls: &ClassifierParams,
    acc: &mut ClassifierParams,
) -> Result<Vec<f64>, ContractError> {
    check_len("classifier_backward logits", z, NUM_CLASSES)?;
    check_len("classifier_backward m", m, cls.input_dim())?;
    if label >= NUM_CLASSES {
        return Err(ContractError::new("classifier_backward", format!("label {label} out of range")));
    }
    let mut g_z = softmax(z)?;
    g_z[label] -= 1.0;
    acc.w.outer_acc(&g_z, m);
    axpy(1.0, &g_z, &mut acc.b);
    let mut g_m = vec![0.0; m.len()];
    cls.w.matvec_t_acc(&g_z, &mut g_m);
    Ok(g_m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatcherGrads {
    pub cls: ClassifierParams,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
}

/// Gradient of the cross-entropy loss with respect to the classifier and both
/// sentence vectors. `z` are the logits cached from the forward pass.
pub fn matcher_backward(
    h1: &[f64],
    h2: &[f64],
    hs: HeuristicSet,
    cls: &ClassifierParams,
    label: usize,
    z: &[f64],
) -> Result<MatcherGrads, ContractError> {
    let m = match_vectors(h1, h2, hs)?;
    let mut acc = cls.zeros_like();
    let g_m = classifier_backward_acc(&m, z, label, cls, &mut acc)?;
    let (g1, g2) = match_backward(h1, h2, hs, &g_m)?;
    Ok(MatcherGrads { cls: acc, h1: g1, h2: g2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_match_vector() {
        let m = match_vectors(&[1.0, 2.0], &[3.0, 5.0], HeuristicSet::ALL).unwrap();
        assert_eq!(m, vec![1.0, 2.0, 3.0, 5.0, -2.0, -3.0, 3.0, 10.0]);
    }

    #[test]
    fn equal_inputs_zero_difference() {
        let hs = HeuristicSet::new(false, true, false).unwrap();
        assert_eq!(match_vectors(&[1.5, -2.0], &[1.5, -2.0], hs).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn product_only() {
        let hs = HeuristicSet::new(false, false, true).unwrap();
        assert_eq!(match_vectors(&[2.0, 0.0], &[4.0, 9.0], hs).unwrap(), vec![8.0, 0.0]);
        assert!(match_vectors(&[1.0], &[1.0, 2.0], hs).is_err());
    }

    #[test]
    fn parse_and_display() {
        assert_eq!("cat,diff,prod".parse::<HeuristicSet>().unwrap(), HeuristicSet::ALL);
        let hs: HeuristicSet = "prod, cat".parse().unwrap();
        assert_eq!(hs.to_string(), "cat,prod");
        assert!("".parse::<HeuristicSet>().is_err());
        assert!("cat,cosine".parse::<HeuristicSet>().is_err());
        assert!(HeuristicSet::new(false, false, false).is_none());
    }

    #[test]
    fn variant_dims() {
        let dims: Vec<usize> = HeuristicSet::variants().iter().map(|h| h.dim(7)).collect();
        assert_eq!(dims, vec![7, 7, 14, 21, 21, 28]);
    }

    #[test]
    fn classify_cases() {
        let cls = ClassifierParams::zeros(4);
        for p in classify(&[1.0, 2.0, 3.0, 4.0], &cls).unwrap() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let mut cls = ClassifierParams::zeros(1);
        cls.b = vec![2f64.ln(), 0.0, 0.0];
        let p = classify(&[0.0], &cls).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15);
        assert!(classify(&[0.0, 1.0], &cls).is_err());
    }

    #[test]
    fn cross_entropy_cases() {
        let u = cross_entropy(&[1.0 / 3.0; 3], 2).unwrap();
        assert!((u - 3f64.ln()).abs() < 1e-15);
        assert_eq!(cross_entropy(&[1.0, 0.0, 0.0], 0).unwrap(), 0.0);
        assert!((cross_entropy(&[0.7, 0.2, 0.1], 1).unwrap() - 1.6094379124341003).abs() < 1e-12);
        assert!((cross_entropy_from_logits(&[0.0, 0.0, 0.0], 1).unwrap() - 3f64.ln()).abs() < 1e-15);
        // confident logits stay finite
        let l = cross_entropy_from_logits(&[0.0, 800.0, 0.0], 0).unwrap();
        assert!((l - 800.0).abs() < 1e-9);
    }

    #[test]
    fn confident_prediction_has_tiny_gradient() {
        let mut cls = ClassifierParams::zeros(2);
        cls.b = vec![40.0, 0.0, 0.0];
        let hs = HeuristicSet::new(false, true, false).unwrap();
        let z = logits(&match_vectors(&[1.0, 2.0], &[0.5, 0.5], hs).unwrap(), &cls).unwrap();
        let g = matcher_backward(&[1.0, 2.0], &[0.5, 0.5], hs, &cls, 0, &z).unwrap();
        assert!(g.cls.b.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn difference_only_is_antisymmetric() {
        let mut cls = ClassifierParams::zeros(3);
        cls.w = Matrix::from_vec(3, 3, (0..9).map(|i| i as f64 * 0.1 - 0.4).collect()).unwrap();
        let hs = HeuristicSet::new(false, true, false).unwrap();
        let (h1, h2) = ([0.3, -1.0, 2.0], [1.0, 0.5, -0.2]);
        let z = logits(&match_vectors(&h1, &h2, hs).unwrap(), &cls).unwrap();
        let g = matcher_backward(&h1, &h2, hs, &cls, 2, &z).unwrap();
        for (a, b) in g.h1.iter().zip(&g.h2) {
            assert_eq!(*a, -*b);
        }
    }

    proptest! {
        #[test]
        fn swap_negates_difference_fixes_product(
            h1 in prop::collection::vec(-5.0f64..5.0, 4),
            h2 in prop::collection::vec(-5.0f64..5.0, 4),
        ) {
            let hs = HeuristicSet::new(false, true, true).unwrap();
            let a = match_vectors(&h1, &h2, hs).unwrap();
            let b = match_vectors(&h2, &h1, hs).unwrap();
            for i in 0..4 {
                prop_assert_eq!(a[i], -b[i]);
                prop_assert_eq!(a[4 + i], b[4 + i]);
            }
        }

        #[test]
        fn classify_is_a_distribution(m in prop::collection::vec(-1e3f64..1e3, 5), w in prop::collection::vec(-3.0f64..3.0, 15)) {
            let cls = ClassifierParams { w: Matrix::from_vec(3, 5, w).unwrap(), b: vec![0.1, -0.2, 0.3] };
            let p = classify(&m, &cls).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }
}
