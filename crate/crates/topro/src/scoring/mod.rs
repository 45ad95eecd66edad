//! Scorer contracts and reference scorers.
//!
//! A [`MaskScorer`] answers one question: given a rendered prompt and a list
//! of candidate words, how probable is each candidate at the mask position?
//! Distributions are renormalized over the candidate set, which keeps argmax
//! decoding intact and makes scores comparable across backends with
//! different vocabulary sizes.
//!
//! Three scorers ship with the crate: a lookup oracle for end-to-end
//! verification, a trainable linear-softmax model over deterministic hashed
//! features for desk-scale training runs, and an adapter that speaks a
//! line-delimited JSON protocol to out-of-process pretrained backends.
//! Scoring is safe for concurrent callers; training requires exclusive
//! access.

mod external;
mod gradcheck;
mod linear;
mod oracle;
mod stubs;
mod tiny;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::pvp::PromptInstance;

pub use external::{EndpointSpec, ExternalScorerAdapter, Transport};
pub use gradcheck::{check_scorer_gradients, finite_difference_gradient_check, GradientCheckReport};
pub use oracle::LookupOracleScorer;
pub use stubs::{EchoGoldGenerator, FixedGenerator, SilentGenerator};
pub use tiny::{TinyTokenClassifier, TinyTrainableScorer};

/// Probabilities below this floor are clamped inside logarithms so a single
/// zero cannot produce a non-finite loss; clamp events are counted and
/// reported.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Distributions must sum to one within this slack over their candidates.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// Errors raised by scorers and backend adapters.
#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("candidate `{word}` is unknown to this scorer")]
    UnknownCandidate { word: String },
    #[error("certainty {certainty} must lie in (1/{candidates}, 1]")]
    InvalidCertainty { certainty: f64, candidates: usize },
    #[error("backend unavailable: {reason}")]
    BackendUnavailable { reason: String },
    #[error("backend advertises no mask token; cannot score masked prompts")]
    MaskSymbolMissing,
    #[error("candidate `{word}` tokenizes to {pieces} vocabulary pieces, expected 1")]
    MultiPieceCandidate { word: String, pieces: usize },
    #[error("invalid probability distribution: {reason}")]
    InvalidDistribution { reason: String },
    #[error("scoring protocol error: {reason}")]
    Protocol { reason: String },
    #[error(
        "analytic gradient disagrees with finite differences: max relative error \
         {max_relative_error:e} at coordinate {worst_coordinate} (tolerance {tolerance:e})"
    )]
    GradientMismatch {
        max_relative_error: f64,
        worst_coordinate: usize,
        tolerance: f64,
    },
    #[error("endpoint spec `{spec}`: {reason}")]
    InvalidEndpoint { spec: String, reason: String },
}

/// Probabilities over candidate words for one mask position.
///
/// Non-negative and summing to one over the candidates within
/// [`DISTRIBUTION_TOLERANCE`].
#[derive(Debug, Clone, PartialEq)]
pub struct MaskDistribution {
    probabilities: BTreeMap<String, f64>,
}

impl MaskDistribution {
    /// Wrap probabilities that already sum to one.
    pub fn from_probabilities(
        pairs: impl IntoIterator<Item = (String, f64)>,
    ) -> Result<Self, ScoringError> {
        let probabilities: BTreeMap<String, f64> = pairs.into_iter().collect();
        let mut sum = 0.0;
        for (word, p) in &probabilities {
            if !p.is_finite() || *p < 0.0 {
                return Err(ScoringError::InvalidDistribution {
                    reason: format!("probability {p} for `{word}`"),
                });
            }
            sum += p;
        }
        if probabilities.is_empty() {
            return Err(ScoringError::InvalidDistribution {
                reason: "no candidates".into(),
            });
        }
        if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(ScoringError::InvalidDistribution {
                reason: format!("probabilities sum to {sum}"),
            });
        }
        Ok(Self { probabilities })
    }

    /// Renormalize non-negative weights into probabilities. Weights are
    /// summed in word order, so the result is independent of the order the
    /// pairs arrive in.
    pub fn from_weights(
        pairs: impl IntoIterator<Item = (String, f64)>,
    ) -> Result<Self, ScoringError> {
        let weights: BTreeMap<String, f64> = pairs.into_iter().collect();
        let mut sum = 0.0;
        for (word, w) in &weights {
            if !w.is_finite() || *w < 0.0 {
                return Err(ScoringError::InvalidDistribution {
                    reason: format!("weight {w} for `{word}`"),
                });
            }
            sum += w;
        }
        if weights.is_empty() || sum <= 0.0 {
            return Err(ScoringError::InvalidDistribution {
                reason: "weights sum to zero".into(),
            });
        }
        Self::from_probabilities(weights.into_iter().map(|(word, w)| (word, w / sum)))
    }

    /// Softmax of per-candidate log-probabilities (or any log-space scores).
    pub fn from_log_probs(
        pairs: impl IntoIterator<Item = (String, f64)>,
    ) -> Result<Self, ScoringError> {
        let scores: Vec<(String, f64)> = pairs.into_iter().collect();
        if scores.is_empty() {
            return Err(ScoringError::InvalidDistribution {
                reason: "no candidates".into(),
            });
        }
        for (word, s) in &scores {
            if !s.is_finite() {
                return Err(ScoringError::InvalidDistribution {
                    reason: format!("log-probability {s} for `{word}`"),
                });
            }
        }
        let max = scores.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
        Self::from_weights(scores.into_iter().map(|(word, s)| (word, (s - max).exp())))
    }

    /// The uniform distribution over `candidates`.
    pub fn uniform(candidates: &[String]) -> Result<Self, ScoringError> {
        if candidates.is_empty() {
            return Err(ScoringError::InvalidDistribution {
                reason: "no candidates".into(),
            });
        }
        let p = 1.0 / candidates.len() as f64;
        Self::from_probabilities(candidates.iter().map(|c| (c.clone(), p)))
    }

    /// Probability of `word`, zero when the word is not a candidate.
    pub fn probability(&self, word: &str) -> f64 {
        self.probabilities.get(word).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.probabilities.iter().map(|(w, p)| (w.as_str(), *p))
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }
}

/// Loss of one batch plus the number of probability-floor clamps that
/// occurred inside the logarithms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    pub value: f64,
    pub clamped: usize,
}

/// The scoring contract: probabilities for candidate words at the mask
/// position of each prompt.
///
/// Implementations must be deterministic given fixed parameters, and the
/// probability of a word must not depend on the order of the candidate list.
/// The interface is batch-oriented so adapters can amortize backend calls;
/// single-prompt scoring is a batch of one.
pub trait MaskScorer: Sync {
    fn score_batch(
        &self,
        prompts: &[PromptInstance],
        candidates: &[String],
    ) -> Result<Vec<MaskDistribution>, ScoringError>;

    fn score_mask(
        &self,
        prompt: &PromptInstance,
        candidates: &[String],
    ) -> Result<MaskDistribution, ScoringError> {
        let mut out = self.score_batch(std::slice::from_ref(prompt), candidates)?;
        out.pop().ok_or_else(|| ScoringError::Protocol {
            reason: "scorer returned no distribution for a one-prompt batch".into(),
        })
    }

    /// Number of vocabulary pieces `word` tokenizes to, when the backend can
    /// tell.
    fn vocabulary_probe(&self, _word: &str) -> Option<usize> {
        None
    }
}

/// A scorer whose parameters can be updated by gradient steps. Training
/// requires exclusive access (single writer).
pub trait TrainableScorer: MaskScorer {
    /// Accumulate gradients for one batch and return its summed loss.
    fn accumulate_batch(
        &mut self,
        prompts: &[PromptInstance],
        gold_words: &[String],
        candidates: &[String],
    ) -> Result<BatchLoss, ScoringError>;

    /// Apply the accumulated gradient with the given learning rate and clear
    /// the accumulator.
    fn apply_step(&mut self, learning_rate: f64);

    /// One gradient-descent step on a batch.
    fn train_step(
        &mut self,
        prompts: &[PromptInstance],
        gold_words: &[String],
        candidates: &[String],
        learning_rate: f64,
    ) -> Result<BatchLoss, ScoringError> {
        let loss = self.accumulate_batch(prompts, gold_words, candidates)?;
        self.apply_step(learning_rate);
        Ok(loss)
    }
}

/// A generative backend: free-text continuation for an input prompt.
///
/// Output length is bounded by `max_target_length` in the backend's own
/// units.
pub trait Generator: Sync {
    fn generate(
        &self,
        input: &str,
        max_target_length: usize,
        beam_width: usize,
    ) -> Result<String, ScoringError>;
}
