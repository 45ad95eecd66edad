//! Lookup oracle scorer for end-to-end verification.

use std::collections::HashMap;

use super::{MaskDistribution, MaskScorer, ScoringError};
use crate::corpus::CorpusSplit;
use crate::pvp::{PromptInstance, Verbalizer};

/// A scorer that knows the gold tag of each `(sentence id, token index)`
/// pair and concentrates `certainty` probability mass on its verbalizer
/// word, spreading the remainder uniformly. Prompts it has never seen get a
/// uniform distribution.
///
/// This is a test instrument, not a model: with certainty 1.0 the full
/// pipeline must reproduce the gold tags exactly.
#[derive(Debug, Clone)]
pub struct LookupOracleScorer {
    gold: HashMap<(String, usize), String>,
    verbalizer: Verbalizer,
    certainty: f64,
}

impl LookupOracleScorer {
    /// `certainty` must lie in `(0, 1]`; the per-call lower bound
    /// `1/|candidates|` is enforced when scoring, where the candidate count
    /// is known.
    pub fn new(
        gold: HashMap<(String, usize), String>,
        verbalizer: Verbalizer,
        certainty: f64,
    ) -> Result<Self, ScoringError> {
        if !(certainty > 0.0 && certainty <= 1.0) {
            return Err(ScoringError::InvalidCertainty {
                certainty,
                candidates: 0,
            });
        }
        Ok(Self {
            gold,
            verbalizer,
            certainty,
        })
    }

    /// Build the gold map from every labeled token of a split.
    pub fn from_split(
        split: &CorpusSplit,
        verbalizer: Verbalizer,
        certainty: f64,
    ) -> Result<Self, ScoringError> {
        let mut gold = HashMap::new();
        for sentence in split.sentences() {
            if let Some(tags) = sentence.tags() {
                for (i, tag) in tags.iter().enumerate() {
                    gold.insert((sentence.sentence_id().to_string(), i), tag.clone());
                }
            }
        }
        Self::new(gold, verbalizer, certainty)
    }

    pub fn certainty(&self) -> f64 {
        self.certainty
    }

    pub fn gold_entries(&self) -> impl Iterator<Item = (&(String, usize), &String)> {
        self.gold.iter()
    }

    fn distribution_for(
        &self,
        prompt: &PromptInstance,
        candidates: &[String],
    ) -> Result<MaskDistribution, ScoringError> {
        let key = (prompt.sentence_id.clone(), prompt.token_index);
        let Some(tag) = self.gold.get(&key) else {
            return MaskDistribution::uniform(candidates);
        };
        let word = self.verbalizer.word_for(tag).unwrap_or(tag.as_str());
        if !candidates.iter().any(|c| c == word) {
            return Err(ScoringError::UnknownCandidate {
                word: word.to_string(),
            });
        }
        let k = candidates.len();
        if k == 1 {
            return MaskDistribution::from_probabilities([(word.to_string(), 1.0)]);
        }
        if self.certainty <= 1.0 / k as f64 {
            return Err(ScoringError::InvalidCertainty {
                certainty: self.certainty,
                candidates: k,
            });
        }
        let rest = (1.0 - self.certainty) / (k - 1) as f64;
        MaskDistribution::from_probabilities(candidates.iter().map(|c| {
            let p = if c == word { self.certainty } else { rest };
            (c.clone(), p)
        }))
    }
}

impl MaskScorer for LookupOracleScorer {
    fn score_batch(
        &self,
        prompts: &[PromptInstance],
        candidates: &[String],
    ) -> Result<Vec<MaskDistribution>, ScoringError> {
        prompts
            .iter()
            .map(|p| self.distribution_for(p, candidates))
            .collect()
    }
}
