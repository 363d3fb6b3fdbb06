//! Binary model file.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content                                   |
//! |-------|-------------------------------------------|
//! | 4     | magic `TBCP`                              |
//! | 4     | format version, `u32` = 1                 |
//! | 8     | header length `H`, `u64`                  |
//! | H     | UTF-8 JSON header                         |
//! | rest  | `f32` tensors in manifest order, row-major |
//!
//! The header carries the dimensions, heuristic flags, both vocabulary lists
//! and the tensor manifest (ordered name/shape pairs). Parameters are stored at
//! 32-bit precision; loading widens them back to `f64` exactly.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::EmbeddingTable;
use crate::encoder::EncoderParams;
use crate::matcher::{ClassifierParams, HeuristicSet, NUM_CLASSES};
use crate::model::ModelParams;
use crate::numeric::Matrix;
use crate::vocab::Vocab;

pub const MAGIC: &[u8; 4] = b"TBCP";
pub const FORMAT_VERSION: u32 = 1;
const PREFIX_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("file too short for the fixed prefix")]
    TruncatedPrefix,
    #[error("header length {declared} exceeds the {available} bytes available")]
    TruncatedHeader { declared: u64, available: usize },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("payload truncated inside tensor {tensor}")]
    TruncatedPayload { tensor: String },
    #[error("manifest mismatch: {0}")]
    Manifest(String),
    #[error("{0} trailing bytes after the payload")]
    TrailingBytes(usize),
}

impl ModelFileError {
    /// Stable numeric code per failure kind.
    pub fn code(&self) -> u32 {
        match self {
            ModelFileError::Io(_) => 1,
            ModelFileError::BadMagic(_) => 2,
            ModelFileError::UnsupportedVersion(_) => 3,
            ModelFileError::TruncatedPrefix => 4,
            ModelFileError::TruncatedHeader { .. } => 5,
            ModelFileError::Header(_) => 6,
            ModelFileError::TruncatedPayload { .. } => 7,
            ModelFileError::Manifest(_) => 8,
            ModelFileError::TrailingBytes(_) => 9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub embed: usize,
    pub conv: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub dims: Dims,
    pub heuristics: HeuristicSet,
    pub words: Vec<String>,
    pub relations: Vec<String>,
    pub tensors: Vec<TensorEntry>,
}

fn expected_manifest(dims: Dims, n_words: usize, n_rel: usize, hs: HeuristicSet) -> Vec<TensorEntry> {
    let e = |name: &str, shape: &[usize]| TensorEntry {
        name: name.to_owned(),
        shape: shape.to_vec(),
    };
    let mut out = vec![
        e("embeddings", &[n_words, dims.embed]),
        e("enc.w_parent", &[dims.conv, dims.embed]),
    ];
    out.extend((0..n_rel).map(|i| e(&format!("enc.w_rel.{i}"), &[dims.conv, dims.embed])));
    out.extend([
        e("enc.b_conv", &[dims.conv]),
        e("enc.w_hid", &[dims.hidden, dims.conv]),
        e("enc.b_hid", &[dims.hidden]),
        e("cls.w", &[NUM_CLASSES, hs.dim(dims.hidden)]),
        e("cls.b", &[NUM_CLASSES]),
    ]);
    out
}

fn tensor_slices(model: &ModelParams) -> Vec<&[f64]> {
    let mut out = vec![model.emb.matrix.as_slice(), model.enc.w_parent.as_slice()];
    out.extend(model.enc.w_rel.iter().map(Matrix::as_slice));
    out.extend([
        model.enc.b_conv.as_slice(),
        model.enc.w_hid.as_slice(),
        model.enc.b_hid.as_slice(),
        model.cls.w.as_slice(),
        model.cls.b.as_slice(),
    ]);
    out
}

/// Serializes a model to bytes.
pub fn to_bytes(model: &ModelParams) -> Vec<u8> {
    let dims = Dims {
        embed: model.embed_dim(),
        conv: model.conv_dim(),
        hidden: model.hidden_dim(),
    };
    let header = Header {
        dims,
        heuristics: model.hs,
        words: model.vocab.words().to_vec(),
        relations: model.vocab.relations().to_vec(),
        tensors: expected_manifest(dims, model.vocab.num_words(), model.vocab.num_relations(), model.hs),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let slices = tensor_slices(model);
    let payload: usize = slices.iter().map(|s| s.len() * 4).sum();
    let mut out = Vec::with_capacity(PREFIX_LEN + json.len() + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for s in slices {
        for &x in s {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

pub fn save_model(model: &ModelParams, path: impl AsRef<Path>) -> Result<(), ModelFileError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&to_bytes(model))?;
    f.sync_all()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelParams, ModelFileError> {
    from_bytes(&fs::read(path)?)
}

/// Parses a model file. Never panics on malformed input.
pub fn from_bytes(bytes: &[u8]) -> Result<ModelParams, ModelFileError> {
    if bytes.len() < 4 {
        return Err(ModelFileError::TruncatedPrefix);
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if &magic != MAGIC {
        return Err(ModelFileError::BadMagic(magic));
    }
    if bytes.len() < PREFIX_LEN {
        return Err(ModelFileError::TruncatedPrefix);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(ModelFileError::UnsupportedVersion(version));
    }
    let declared = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let rest = &bytes[PREFIX_LEN..];
    let header_len = usize::try_from(declared)
        .ok()
        .filter(|&h| h <= rest.len())
        .ok_or(ModelFileError::TruncatedHeader {
            declared,
            available: rest.len(),
        })?;
    let header: Header =
        serde_json::from_slice(&rest[..header_len]).map_err(|e| ModelFileError::Header(e.to_string()))?;
    let payload = &rest[header_len..];

    let Header {
        dims,
        heuristics,
        words,
        relations,
        tensors,
    } = header;
    if !(heuristics.concat || heuristics.difference || heuristics.product) {
        return Err(ModelFileError::Header("no matching heuristic enabled".into()));
    }
    if dims.embed == 0 || dims.conv == 0 || dims.hidden == 0 {
        return Err(ModelFileError::Header("zero dimension".into()));
    }
    // every dimension spans at least one tensor, so none can exceed the payload
    if [dims.embed, dims.conv, dims.hidden].iter().any(|&d| d > payload.len()) {
        return Err(ModelFileError::TruncatedPayload {
            tensor: "embeddings".into(),
        });
    }
    let vocab = Vocab::from_lists(words, relations)
        .ok_or_else(|| ModelFileError::Header("vocabulary lists are malformed".into()))?;
    let expected = expected_manifest(dims, vocab.num_words(), vocab.num_relations(), heuristics);
    if tensors != expected {
        return Err(ModelFileError::Manifest(format!(
            "manifest has {} tensors, expected {} for the declared dimensions",
            tensors.len(),
            expected.len()
        )));
    }

    let mut offset = 0usize;
    let mut read = |entry: &TensorEntry| -> Result<Vec<f64>, ModelFileError> {
        let count = entry
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|c| c.checked_mul(4).map(|b| (c, b)));
        let truncated = || ModelFileError::TruncatedPayload {
            tensor: entry.name.clone(),
        };
        let (count, nbytes) = count.ok_or_else(truncated)?;
        let end = offset.checked_add(nbytes).filter(|&e| e <= payload.len()).ok_or_else(truncated)?;
        let mut out = Vec::with_capacity(count);
        for chunk in payload[offset..end].chunks_exact(4) {
            let x = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            if !x.is_finite() {
                return Err(ModelFileError::Manifest(format!("non-finite value in {}", entry.name)));
            }
            out.push(x as f64);
        }
        offset = end;
        Ok(out)
    };

    let matrix = |entry: &TensorEntry, data: Vec<f64>| {
        Matrix::from_vec(entry.shape[0], entry.shape[1], data).map_err(|e| ModelFileError::Manifest(e.to_string()))
    };
    let mut it = expected.iter();
    let mut next = || it.next().expect("manifest length checked");

    let e = next();
    let emb = matrix(e, read(e)?)?;
    let e = next();
    let w_parent = matrix(e, read(e)?)?;
    let mut w_rel = Vec::with_capacity(vocab.num_relations());
    for _ in 0..vocab.num_relations() {
        let e = next();
        w_rel.push(matrix(e, read(e)?)?);
    }
    let b_conv = read(next())?;
    let e = next();
    let w_hid = matrix(e, read(e)?)?;
    let b_hid = read(next())?;
    let e = next();
    let cls_w = matrix(e, read(e)?)?;
    let cls_b = read(next())?;
    if offset != payload.len() {
        return Err(ModelFileError::TrailingBytes(payload.len() - offset));
    }

    let model = ModelParams {
        vocab,
        emb: EmbeddingTable {
            matrix: emb,
            oov_rows: BTreeSet::new(),
        },
        enc: EncoderParams {
            w_parent,
            w_rel,
            b_conv,
            w_hid,
            b_hid,
        },
        cls: ClassifierParams { w: cls_w, b: cls_b },
        hs: heuristics,
    };
    model.validate().map_err(|e| ModelFileError::Manifest(e.to_string()))?;
    Ok(model)
}
