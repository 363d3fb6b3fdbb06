//! Trainable word-vector table and text-format loader.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::DataError;
use crate::numeric::{uniform_vec, Matrix};
use crate::vocab::Vocab;

/// Bound for randomly initialized rows.
pub const OOV_INIT_BOUND: f64 = 0.1;

/// One row per vocabulary entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub matrix: Matrix,
    /// Rows that were initialized randomly rather than loaded.
    pub oov_rows: BTreeSet<usize>,
}

impl EmbeddingTable {
    /// Every row random in `±0.1`.
    pub fn random<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Self {
        let mut matrix = Matrix::zeros(rows, dim);
        for r in 0..rows {
            matrix.row_mut(r).copy_from_slice(&uniform_vec(dim, OOV_INIT_BOUND, rng));
        }
        Self {
            matrix,
            oov_rows: (0..rows).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn row(&self, id: usize) -> &[f64] {
        self.matrix.row(id)
    }
}

pub fn load_embeddings(path: impl AsRef<Path>, vocab: &Vocab, dim: usize, seed: u64) -> Result<EmbeddingTable, DataError> {
    read_embeddings(BufReader::new(File::open(path)?), vocab, dim, seed)
}

/// Reads whitespace-separated `word v1 .. v_dim` lines, with an optional
/// leading `count dim` header. Vocabulary words missing from the input get
/// random rows (seeded) and are listed in `oov_rows`. Words not in the
/// vocabulary are validated and ignored; for duplicated words the first row
/// wins.
pub fn read_embeddings<R: BufRead>(reader: R, vocab: &Vocab, dim: usize, seed: u64) -> Result<EmbeddingTable, DataError> {
    if dim == 0 {
        return Err(DataError::Embedding {
            line: 0,
            msg: "embedding dimension must be positive".into(),
        });
    }
    let mut table = EmbeddingTable::random(vocab.num_words(), dim, &mut ChaCha8Rng::seed_from_u64(seed));
    let mut first = true;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let values: Vec<&str> = fields.collect();
        if std::mem::take(&mut first) && values.len() == 1 {
            if let (Ok(_), Ok(d)) = (word.parse::<u64>(), values[0].parse::<usize>()) {
                if d != dim {
                    return Err(DataError::EmbeddingHeader { expected: dim, got: d });
                }
                continue;
            }
        }
        if values.len() != dim {
            return Err(DataError::Embedding {
                line: line_no,
                msg: format!("expected {dim} values, found {}", values.len()),
            });
        }
        let mut row = Vec::with_capacity(dim);
        for v in values {
            match v.parse::<f64>() {
                Ok(x) if x.is_finite() => row.push(x),
                _ => {
                    return Err(DataError::Embedding {
                        line: line_no,
                        msg: format!("bad value {v:?}"),
                    })
                }
            }
        }
        let id = vocab.word_id(word);
        if vocab.word(id) == Some(word) && table.oov_rows.remove(&id) {
            table.matrix.row_mut(id).copy_from_slice(&row);
        }
    }
    Ok(table)
}
