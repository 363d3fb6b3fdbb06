//! Tree-based convolutional sentence encoder.
//!
//! At every node the feature detector sees the node itself and its direct
//! children, with one weight matrix per dependency relation:
//!
//! ```text
//! y = ReLU(W_parent · p + Σ_i W_rel[r(c_i)] · c_i + b_conv)
//! ```
//!
//! Feature maps (one per node) are max-pooled per dimension, then a
//! fully-connected ReLU layer produces the sentence vector `h`. Premise and
//! hypothesis are encoded by the same [`EncoderParams`].

use std::collections::BTreeMap;

use rand::Rng;

use crate::embeddings::EmbeddingTable;
use crate::numeric::{check_len, init_bias, init_weight, ContractError, Matrix};
use crate::tree::DepTree;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// `n_c × n_e`, applied to the node at the window's top.
    pub w_parent: Matrix,
    /// One `n_c × n_e` matrix per relation id (UNK-relation and ROOT included).
    pub w_rel: Vec<Matrix>,
    pub b_conv: Vec<f64>,
    /// `n_h × n_c`
    pub w_hid: Matrix,
    pub b_hid: Vec<f64>,
}

impl EncoderParams {
    pub fn new<R: Rng + ?Sized>(n_e: usize, n_c: usize, n_h: usize, n_rel: usize, rng: &mut R) -> Self {
        Self {
            w_parent: init_weight(n_c, n_e, rng),
            w_rel: (0..n_rel).map(|_| init_weight(n_c, n_e, rng)).collect(),
            b_conv: init_bias(n_c),
            w_hid: init_weight(n_h, n_c, rng),
            b_hid: init_bias(n_h),
        }
    }

    pub fn zeros(n_e: usize, n_c: usize, n_h: usize, n_rel: usize) -> Self {
        Self {
            w_parent: Matrix::zeros(n_c, n_e),
            w_rel: vec![Matrix::zeros(n_c, n_e); n_rel],
            b_conv: vec![0.0; n_c],
            w_hid: Matrix::zeros(n_h, n_c),
            b_hid: vec![0.0; n_h],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.embed_dim(), self.conv_dim(), self.hidden_dim(), self.w_rel.len())
    }

    pub fn embed_dim(&self) -> usize {
        self.w_parent.cols()
    }

    pub fn conv_dim(&self) -> usize {
        self.w_parent.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hid.rows()
    }

    pub fn num_relations(&self) -> usize {
        self.w_rel.len()
    }

    pub fn validate(&self) -> Result<(), ContractError> {
        let (n_c, n_e) = self.w_parent.shape();
        for (i, w) in self.w_rel.iter().enumerate() {
            if w.shape() != (n_c, n_e) {
                return Err(ContractError::new(
                    "EncoderParams",
                    format!("relation matrix {i} has shape {:?}, expected {:?}", w.shape(), (n_c, n_e)),
                ));
            }
        }
        check_len("EncoderParams::b_conv", &self.b_conv, n_c)?;
        if self.w_hid.cols() != n_c {
            return Err(ContractError::dims("EncoderParams::w_hid", n_c, self.w_hid.cols()));
        }
        check_len("EncoderParams::b_hid", &self.b_hid, self.hidden_dim())?;
        let finite = self.w_parent.is_finite()
            && self.w_rel.iter().all(Matrix::is_finite)
            && self.w_hid.is_finite()
            && self.b_conv.iter().chain(&self.b_hid).all(|x| x.is_finite());
        if !finite {
            return Err(ContractError::new("EncoderParams", "non-finite parameter"));
        }
        Ok(())
    }

    /// `self += s · other`
    pub fn add_scaled(&mut self, s: f64, other: &EncoderParams) {
        self.w_parent.add_scaled(s, &other.w_parent);
        for (a, b) in self.w_rel.iter_mut().zip(&other.w_rel) {
            a.add_scaled(s, b);
        }
        crate::numeric::axpy(s, &other.b_conv, &mut self.b_conv);
        self.w_hid.add_scaled(s, &other.w_hid);
        crate::numeric::axpy(s, &other.b_hid, &mut self.b_hid);
    }

    pub fn scale(&mut self, s: f64) {
        self.w_parent.scale(s);
        self.w_rel.iter_mut().for_each(|w| w.scale(s));
        self.b_conv.iter_mut().for_each(|x| *x *= s);
        self.w_hid.scale(s);
        self.b_hid.iter_mut().for_each(|x| *x *= s);
    }
}

fn conv_pre_activation(parent: &[f64], children: &[(&[f64], usize)], params: &EncoderParams) -> Vec<f64> {
    let mut out = params.b_conv.clone();
    params.w_parent.matvec_acc(parent, &mut out);
    for &(child, rel) in children {
        params.w_rel[rel].matvec_acc(child, &mut out);
    }
    out
}

/// One convolution window: a parent vector and its `(child vector, relation)`
/// list. An empty child list is the leaf case.
pub fn conv_node(parent: &[f64], children: &[(&[f64], usize)], params: &EncoderParams) -> Result<Vec<f64>, ContractError> {
    let n_e = params.embed_dim();
    check_len("conv_node parent", parent, n_e)?;
    for &(c, rel) in children {
        check_len("conv_node child", c, n_e)?;
        if rel >= params.num_relations() {
            return Err(ContractError::new(
                "conv_node",
                format!("relation id {rel} out of range ({})", params.num_relations()),
            ));
        }
    }
    let mut y = conv_pre_activation(parent, children, params);
    y.iter_mut().for_each(|x| *x = x.max(0.0));
    Ok(y)
}

fn check_inputs(tree: &DepTree, emb: &EmbeddingTable, params: &EncoderParams) -> Result<(), ContractError> {
    if emb.dim() != params.embed_dim() {
        return Err(ContractError::dims("encoder embedding width", params.embed_dim(), emb.dim()));
    }
    if let Some(&t) = tree.tokens().iter().find(|&&t| t >= emb.rows()) {
        return Err(ContractError::new(
            "encoder",
            format!("token id {t} outside embedding table ({} rows)", emb.rows()),
        ));
    }
    if let Some(&r) = tree.relations().iter().find(|&&r| r >= params.num_relations()) {
        return Err(ContractError::new(
            "encoder",
            format!("relation id {r} out of range ({})", params.num_relations()),
        ));
    }
    Ok(())
}

fn convolve_pre(tree: &DepTree, emb: &EmbeddingTable, params: &EncoderParams) -> Vec<Vec<f64>> {
    (0..tree.len())
        .map(|node| {
            let children: Vec<(&[f64], usize)> = tree
                .children(node)
                .iter()
                .map(|&c| (emb.row(tree.token(c)), tree.relation(c)))
                .collect();
            conv_pre_activation(emb.row(tree.token(node)), &children, params)
        })
        .collect()
}

/// One feature map per node.
pub fn tree_convolve(tree: &DepTree, emb: &EmbeddingTable, params: &EncoderParams) -> Result<Vec<Vec<f64>>, ContractError> {
    check_inputs(tree, emb, params)?;
    Ok(convolve_pre(tree, emb, params)
        .into_iter()
        .map(|v| crate::numeric::relu(&v))
        .collect())
}

/// Per-dimension maximum over feature maps, with the winning node for each
/// dimension (smallest node index on ties).
pub fn max_pool(maps: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<usize>), ContractError> {
    let first = maps
        .first()
        .ok_or_else(|| ContractError::new("max_pool", "no feature maps"))?;
    let mut pooled = first.clone();
    let mut argmax = vec![0; first.len()];
    for (node, map) in maps.iter().enumerate().skip(1) {
        check_len("max_pool", map, pooled.len())?;
        for d in 0..map.len() {
            if map[d] > pooled[d] {
                pooled[d] = map[d];
                argmax[d] = node;
            }
        }
    }
    Ok((pooled, argmax))
}

/// Everything the backward pass needs from one forward encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeTrace {
    pub tree: DepTree,
    pub conv_pre: Vec<Vec<f64>>,
    pub feature_maps: Vec<Vec<f64>>,
    pub pooled: Vec<f64>,
    pub argmax: Vec<usize>,
    pub hidden_pre: Vec<f64>,
    pub h: Vec<f64>,
}

impl EncodeTrace {
    /// Sign pattern of every ReLU input plus the pooling winners; two traces
    /// with equal patterns lie on the same linear piece of the encoder.
    pub fn activation_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for v in self.conv_pre.iter().chain(std::iter::once(&self.hidden_pre)) {
            out.extend(v.iter().map(|&x| usize::from(x > 0.0)));
        }
        out.extend_from_slice(&self.argmax);
        out
    }
}

/// Sentence vector `h` and the trace for [`encoder_backward`].
pub fn encode(tree: &DepTree, emb: &EmbeddingTable, params: &EncoderParams) -> Result<(Vec<f64>, EncodeTrace), ContractError> {
    check_inputs(tree, emb, params)?;
    let conv_pre = convolve_pre(tree, emb, params);
    let feature_maps: Vec<Vec<f64>> = conv_pre.iter().map(|v| crate::numeric::relu(v)).collect();
    let (pooled, argmax) = max_pool(&feature_maps)?;
    let mut hidden_pre = params.b_hid.clone();
    params.w_hid.matvec_acc(&pooled, &mut hidden_pre);
    let h = crate::numeric::relu(&hidden_pre);
    let trace = EncodeTrace {
        tree: tree.clone(),
        conv_pre,
        feature_maps,
        pooled,
        argmax,
        hidden_pre,
        h: h.clone(),
    };
    Ok((h, trace))
}

/// Gradients for one or more encodings: dense for the encoder tensors,
/// sparse (row id → gradient) for embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub params: EncoderParams,
    pub embeddings: BTreeMap<usize, Vec<f64>>,
}

/// Exact reverse of [`encode`] for a single upstream gradient `grad_h`.
pub fn encoder_backward(
    trace: &EncodeTrace,
    grad_h: &[f64],
    emb: &EmbeddingTable,
    params: &EncoderParams,
) -> Result<EncoderGrads, ContractError> {
    let mut grads = EncoderGrads {
        params: params.zeros_like(),
        embeddings: BTreeMap::new(),
    };
    encoder_backward_acc(trace, grad_h, emb, params, &mut grads.params, &mut grads.embeddings)?;
    Ok(grads)
}

/// As [`encoder_backward`], accumulating into `grads` and `emb_grads`.
pub fn encoder_backward_acc(
    trace: &EncodeTrace,
    grad_h: &[f64],
    emb: &EmbeddingTable,
    params: &EncoderParams,
    grads: &mut EncoderParams,
    emb_grads: &mut BTreeMap<usize, Vec<f64>>,
) -> Result<(), ContractError> {
    let (n_c, n_h) = (params.conv_dim(), params.hidden_dim());
    check_len("encoder_backward grad_h", grad_h, n_h)?;
    check_len("encoder_backward trace.h", &trace.h, n_h)?;
    check_len("encoder_backward trace.pooled", &trace.pooled, n_c)?;
    if trace.conv_pre.len() != trace.tree.len() || trace.conv_pre.iter().any(|v| v.len() != n_c) {
        return Err(ContractError::new("encoder_backward", "trace does not match parameters"));
    }
    if trace.argmax.len() != n_c || trace.argmax.iter().any(|&a| a >= trace.tree.len()) {
        return Err(ContractError::new("encoder_backward", "invalid pooling argmax"));
    }
    check_inputs(&trace.tree, emb, params)?;

    let g_hidden: Vec<f64> = grad_h
        .iter()
        .zip(&trace.hidden_pre)
        .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
        .collect();
    grads.w_hid.outer_acc(&g_hidden, &trace.pooled);
    crate::numeric::axpy(1.0, &g_hidden, &mut grads.b_hid);
    let mut g_pooled = vec![0.0; n_c];
    params.w_hid.matvec_t_acc(&g_hidden, &mut g_pooled);

    // max pooling routes each dimension to its single winning node
    let tree = &trace.tree;
    let mut g_maps = vec![vec![0.0; n_c]; tree.len()];
    for (d, &node) in trace.argmax.iter().enumerate() {
        g_maps[node][d] += g_pooled[d];
    }

    let n_e = params.embed_dim();
    for (node, g_map) in g_maps.iter().enumerate() {
        let g_pre: Vec<f64> = g_map
            .iter()
            .zip(&trace.conv_pre[node])
            .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
            .collect();
        if g_pre.iter().all(|&g| g == 0.0) {
            continue;
        }
        crate::numeric::axpy(1.0, &g_pre, &mut grads.b_conv);

        let tok = tree.token(node);
        grads.w_parent.outer_acc(&g_pre, emb.row(tok));
        let row = emb_grads.entry(tok).or_insert_with(|| vec![0.0; n_e]);
        params.w_parent.matvec_t_acc(&g_pre, row);

        for &child in tree.children(node) {
            let (ctok, rel) = (tree.token(child), tree.relation(child));
            grads.w_rel[rel].outer_acc(&g_pre, emb.row(ctok));
            let row = emb_grads.entry(ctok).or_insert_with(|| vec![0.0; n_e]);
            params.w_rel[rel].matvec_t_acc(&g_pre, row);
        }
    }
    Ok(())
}
