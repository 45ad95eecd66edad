//! Model artifacts: trained parameters plus the exact pattern-verbalizer
//! pair and config they were trained with.
//!
//! The pair travels inside the artifact so prediction structurally reuses
//! the training-time pattern; `predict` never accepts a pattern from the
//! command line.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use topro::corpus::TagSet;
use topro::pvp::{PromptTemplate, Verbalizer};
use topro::scoring::{LookupOracleScorer, MaskScorer, TinyTokenClassifier, TinyTrainableScorer};
use topro::train::TrainConfig;

use crate::error::CliError;

/// Which pipeline produced the artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Topro,
    Vanilla,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Topro => write!(f, "topro"),
            ModelKind::Vanilla => write!(f, "vanilla"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BackendParams {
    /// Trainable masked-prompt scorer.
    Tiny {
        feature_dim: usize,
        hash_seed: u64,
        context_window: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    /// Per-token baseline classifier.
    TinyClassifier {
        feature_dim: usize,
        hash_seed: u64,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    /// Frozen lookup oracle; entries sorted for stable serialization.
    Oracle {
        certainty: f64,
        gold: Vec<(String, usize, String)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub kind: ModelKind,
    pub task: String,
    pub language: String,
    pub seed: u64,
    pub tagset: TagSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<PromptTemplate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verbalizer: Option<Verbalizer>,
    pub config: TrainConfig,
    pub backend: BackendParams,
}

impl ModelArtifact {
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n")
            .map_err(|e| CliError::data(format!("cannot write `{}`: {e}", path.display())))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::data(format!("cannot read model `{}`: {e}", path.display())))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// The pattern-verbalizer pair this model was trained with.
    pub fn pvp(&self) -> Result<(&PromptTemplate, &Verbalizer), CliError> {
        match (&self.template, &self.verbalizer) {
            (Some(t), Some(v)) => Ok((t, v)),
            _ => Err(CliError::data(
                "model artifact carries no prompt pattern (vanilla model?)",
            )),
        }
    }

    /// Rebuild the masked-prompt scorer recorded in the artifact.
    pub fn mask_scorer(&self) -> Result<Box<dyn MaskScorer>, CliError> {
        match &self.backend {
            BackendParams::Tiny {
                feature_dim,
                hash_seed,
                context_window,
                weights,
                bias,
            } => {
                let (_, verbalizer) = self.pvp()?;
                let mut scorer =
                    TinyTrainableScorer::new(*feature_dim, &self.tagset, verbalizer, *hash_seed)
                        .map_err(|e| CliError::data(e.to_string()))?
                        .with_context_window(*context_window);
                scorer.import_params(weights.clone(), bias.clone());
                Ok(Box::new(scorer))
            }
            BackendParams::Oracle { certainty, gold } => {
                let (_, verbalizer) = self.pvp()?;
                let map: HashMap<(String, usize), String> = gold
                    .iter()
                    .map(|(id, index, tag)| ((id.clone(), *index), tag.clone()))
                    .collect();
                let oracle = LookupOracleScorer::new(map, verbalizer.clone(), *certainty)
                    .map_err(|e| CliError::data(e.to_string()))?;
                Ok(Box::new(oracle))
            }
            BackendParams::TinyClassifier { .. } => Err(CliError::data(
                "vanilla artifacts decode with a token classifier, not a mask scorer",
            )),
        }
    }

    /// Rebuild the baseline token classifier recorded in the artifact.
    pub fn token_classifier(&self) -> Result<TinyTokenClassifier, CliError> {
        match &self.backend {
            BackendParams::TinyClassifier {
                feature_dim,
                hash_seed,
                weights,
                bias,
            } => {
                let mut classifier =
                    TinyTokenClassifier::new(*feature_dim, &self.tagset, *hash_seed)
                        .map_err(|e| CliError::data(e.to_string()))?;
                classifier.import_params(weights.clone(), bias.clone());
                Ok(classifier)
            }
            _ => Err(CliError::data(
                "model artifact does not hold a token classifier",
            )),
        }
    }

    pub fn backend_name(&self) -> &'static str {
        match self.backend {
            BackendParams::Tiny { .. } => "tiny",
            BackendParams::TinyClassifier { .. } => "tiny",
            BackendParams::Oracle { .. } => "oracle",
        }
    }
}
