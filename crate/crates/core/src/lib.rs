//! Sentence-pair classification with a tree-based convolutional encoder.
//!
//! Each sentence arrives as a dependency tree. A convolution window slides
//! over every node and its direct children, max pooling collapses the
//! per-node feature maps into a fixed-size vector, and a hidden layer yields
//! the sentence vector. The premise and hypothesis vectors are combined by
//! matching heuristics (concatenation, difference, product) and classified
//! into entailment / contradiction / neutral by a softmax layer. All
//! gradients are written out by hand and verified against finite
//! differences.

pub mod data;
pub mod embeddings;
pub mod encoder;
pub mod gradcheck;
pub mod matcher;
pub mod model;
pub mod numeric;
pub mod persist;
pub mod stats;
pub mod synth;
pub mod timing;
pub mod trainer;
pub mod tree;
pub mod vocab;

pub use data::{parse_example, DataError, Label, PairExample, RawPair, RawTree};
pub use embeddings::{load_embeddings, read_embeddings, EmbeddingTable};
pub use encoder::{conv_node, encode, encoder_backward, max_pool, tree_convolve, EncodeTrace, EncoderParams};
pub use matcher::{classify, cross_entropy, match_vectors, matcher_backward, ClassifierParams, HeuristicSet};
pub use model::{ClassifierInit, ModelParams, Prediction};
pub use numeric::{ContractError, Matrix};
pub use persist::{load_model, save_model, ModelFileError};
pub use stats::{tree_stats, CorpusStats};
pub use trainer::{evaluate, forward_backward, lr_at, sgd_update, train, Evaluation, TrainConfig, TrainError};
pub use tree::{validate_heads, DepTree, TreeError};
pub use vocab::{build_vocab, Vocab};
