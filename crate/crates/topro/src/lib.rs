//! Token-level prompt decomposition for sequence labeling.
//!
//! The toolkit turns each token of a tagged sentence into its own cloze
//! prompt, scores a fixed set of verbalizer words at the mask position with a
//! pluggable scorer, and decodes the tag whose word wins. Around that core it
//! provides corpus ingestion for CoNLL-style data, per-token cross-entropy
//! fine-tuning with seed management, generative (text-to-text and
//! instruction-prompt) rendering, and weighted-F1 evaluation with
//! cross-language aggregation and method-delta tables.
//!
//! The crate is organized along the pipeline:
//!
//! - [`corpus`] — tag sets, tagged sentences, CoNLL parsing and statistics
//! - [`pvp`] — prompt templates, verbalizers, and all prompt renderings
//! - [`scoring`] — the scorer contract, reference scorers, and the external
//!   backend adapter
//! - [`train`] — loss computation, fine-tuning loops, and seed averaging
//! - [`decode`] — argmax decoding, generated-text parsing, predictions I/O
//! - [`eval`] — weighted F1, language aggregation, deltas, error-case export
//! - [`synth`] — synthetic corpora for desk-scale verification
//!
//! Batch operations over sentences run data-parallel through rayon when the
//! `parallel` feature (on by default) is enabled; every such entry point has
//! a `_seq` twin that always runs sequentially and returns identical results.

pub mod corpus;
pub mod decode;
pub mod eval;
mod parallel;
pub mod pvp;
pub mod scoring;
pub mod synth;
pub mod train;

pub use corpus::{CorpusError, CorpusSplit, LabeledSentence, SplitName, TagScheme, TagSet, Task};
pub use decode::{DecodeError, PredictionRecord};
pub use eval::{EvalError, EvalReport};
pub use pvp::{PromptInstance, PromptTemplate, PvpError, Verbalizer};
pub use scoring::{MaskDistribution, MaskScorer, ScoringError};
pub use train::{TrainConfig, TrainError, TrainRunRecord};

/// Name of the environment variable that locates backend artifacts such as
/// external scorer executables.
pub const CACHE_DIR_ENV: &str = "TOPRO_CACHE_DIR";
