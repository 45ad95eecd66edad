//! Weighted-F1 scoring, cross-language aggregation, deltas, and error cases.
//!
//! The metric is token-level weighted F1 over all classes, the catch-all
//! class included: per-class F1 weighted by the class's share of the gold
//! tokens. Classes absent from both gold and predictions carry zero weight.
//! A switch excludes the catch-all class for sensitivity analysis, and every
//! metrics document records which convention produced it.
//!
//! Cross-language aggregation averages the per-language scores with the
//! pivot (training) language excluded, since only transfer performance is of
//! interest. Delta tables report signed differences in percentage points.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TagSet;
use crate::decode::PredictionRecord;

/// Errors raised by metric computation.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold and predicted sequences differ in length: {gold} vs {predicted}")]
    LengthMismatch { gold: usize, predicted: usize },
    #[error("tag `{0}` is not in the tag set")]
    UnknownTag(String),
    #[error("cannot score empty tag sequences")]
    EmptyInput,
    #[error("no target languages besides the pivot")]
    NoTargetLanguages,
    #[error("language sets differ: `{0}` present on one side only")]
    LanguageSetMismatch(String),
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
}

/// Metric switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct F1Options {
    /// Score the catch-all class (`O` / `X`) like any other class. Disabling
    /// it reweights over the remaining classes.
    pub include_catch_all: bool,
}

impl Default for F1Options {
    fn default() -> Self {
        Self {
            include_catch_all: true,
        }
    }
}

/// Token-level weighted F1 with the default options.
pub fn weighted_f1(
    gold: &[String],
    predicted: &[String],
    tagset: &TagSet,
) -> Result<f64, EvalError> {
    weighted_f1_with(gold, predicted, tagset, F1Options::default())
}

/// Token-level weighted F1: per-class harmonic mean of precision and recall,
/// weighted by gold support and summed.
pub fn weighted_f1_with(
    gold: &[String],
    predicted: &[String],
    tagset: &TagSet,
    options: F1Options,
) -> Result<f64, EvalError> {
    if gold.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            predicted: predicted.len(),
        });
    }
    if gold.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let class_of = |tag: &String| {
        tagset
            .index_of(tag)
            .ok_or_else(|| EvalError::UnknownTag(tag.clone()))
    };
    let k = tagset.len();
    let mut true_positive = vec![0usize; k];
    let mut false_positive = vec![0usize; k];
    let mut false_negative = vec![0usize; k];
    for (g, p) in gold.iter().zip(predicted) {
        let g = class_of(g)?;
        let p = class_of(p)?;
        if g == p {
            true_positive[g] += 1;
        } else {
            false_negative[g] += 1;
            false_positive[p] += 1;
        }
    }

    let catch_all = tagset.index_of(tagset.catch_all());
    let skipped = |c: usize| !options.include_catch_all && Some(c) == catch_all;
    let total_support: usize = (0..k)
        .filter(|c| !skipped(*c))
        .map(|c| true_positive[c] + false_negative[c])
        .sum();
    if total_support == 0 {
        return Ok(0.0);
    }

    let mut score = 0.0;
    for c in 0..k {
        if skipped(c) {
            continue;
        }
        let support = true_positive[c] + false_negative[c];
        if support == 0 {
            continue;
        }
        let tp = true_positive[c] as f64;
        let predicted_positive = true_positive[c] + false_positive[c];
        let precision = if predicted_positive == 0 {
            0.0
        } else {
            tp / predicted_positive as f64
        };
        let recall = tp / support as f64;
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        score += (support as f64 / total_support as f64) * f1;
    }
    Ok(score)
}

/// Weighted F1 restricted to one sentence.
pub fn sentence_f1(
    gold: &[String],
    predicted: &[String],
    tagset: &TagSet,
) -> Result<f64, EvalError> {
    weighted_f1(gold, predicted, tagset)
}

/// Per-language results with the cross-language aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub method: String,
    pub per_language: BTreeMap<String, f64>,
    pub pivot: String,
    /// The pivot's own score when it was evaluated; never part of the mean.
    pub pivot_score: Option<f64>,
    /// Arithmetic mean over the non-pivot languages. When the pivot is
    /// absent from the results the mean covers all languages.
    pub average_excluding_pivot: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_stddev: Option<BTreeMap<String, f64>>,
}

/// Aggregate per-language scores: arithmetic mean with the pivot language
/// excluded. The pivot's score is retained for reporting. A result set
/// holding only the pivot has no transfer performance to aggregate.
pub fn aggregate_languages(
    per_language: &BTreeMap<String, f64>,
    pivot: &str,
    task: &str,
    method: &str,
) -> Result<EvalReport, EvalError> {
    for score in per_language.values() {
        if !(0.0..=1.0).contains(score) {
            return Err(EvalError::ScoreOutOfRange(*score));
        }
    }
    let targets: Vec<f64> = per_language
        .iter()
        .filter(|(language, _)| language.as_str() != pivot)
        .map(|(_, score)| *score)
        .collect();
    if targets.is_empty() {
        return Err(EvalError::NoTargetLanguages);
    }
    Ok(EvalReport {
        task: task.to_string(),
        method: method.to_string(),
        per_language: per_language.clone(),
        pivot: pivot.to_string(),
        pivot_score: per_language.get(pivot).copied(),
        average_excluding_pivot: targets.iter().sum::<f64>() / targets.len() as f64,
        seed_stddev: None,
    })
}

/// Signed per-language difference `a - b` in percentage points; positive
/// means `a` scored higher. Both maps must cover the same languages.
pub fn delta_table(
    a: &BTreeMap<String, f64>,
    b: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>, EvalError> {
    for language in a.keys() {
        if !b.contains_key(language) {
            return Err(EvalError::LanguageSetMismatch(language.clone()));
        }
    }
    for language in b.keys() {
        if !a.contains_key(language) {
            return Err(EvalError::LanguageSetMismatch(language.clone()));
        }
    }
    Ok(a.iter()
        .map(|(language, score)| (language.clone(), (score - b[language]) * 100.0))
        .collect())
}

/// Render labeled delta columns as TSV: language rows, one column per
/// method pair, `avg.` last.
pub fn render_delta_tsv(columns: &[(String, BTreeMap<String, f64>)]) -> String {
    let mut languages: Vec<&String> = columns.iter().flat_map(|(_, m)| m.keys()).collect();
    languages.sort();
    languages.dedup();
    let mut out = String::from("lang.");
    for (label, _) in columns {
        out.push('\t');
        out.push_str(label);
    }
    out.push('\n');
    for language in &languages {
        out.push_str(language);
        for (_, deltas) in columns {
            out.push('\t');
            match deltas.get(*language) {
                Some(d) => out.push_str(&format!("{d:.2}")),
                None => out.push('-'),
            }
        }
        out.push('\n');
    }
    out.push_str("avg.");
    for (_, deltas) in columns {
        let mean = deltas.values().sum::<f64>() / deltas.len().max(1) as f64;
        out.push('\t');
        out.push_str(&format!("{mean:.2}"));
    }
    out.push('\n');
    out
}

/// One sentence where two methods disagree, with both scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCase {
    pub sentence_id: String,
    pub language: String,
    pub tokens: Vec<String>,
    pub gold_tags: Vec<String>,
    pub tags_a: Vec<String>,
    pub tags_b: Vec<String>,
    pub f1_a: f64,
    pub f1_b: f64,
    pub gap: f64,
}

/// The `k` sentences with the largest per-sentence F1 gap between two
/// prediction sets, largest first. Sentences are matched by id; ties break
/// by sentence id. `k` larger than the corpus returns every matched
/// sentence.
pub fn export_error_cases(
    predictions_a: &[PredictionRecord],
    predictions_b: &[PredictionRecord],
    tagset: &TagSet,
    k: usize,
) -> Result<Vec<ErrorCase>, EvalError> {
    let by_id: BTreeMap<&str, &PredictionRecord> = predictions_b
        .iter()
        .map(|r| (r.sentence_id.as_str(), r))
        .collect();
    let mut cases = Vec::new();
    for a in predictions_a {
        let Some(b) = by_id.get(a.sentence_id.as_str()) else {
            continue;
        };
        let Some(gold) = a.gold_tags.as_ref() else {
            continue;
        };
        let f1_a = sentence_f1(gold, &a.predicted_tags, tagset)?;
        let f1_b = sentence_f1(gold, &b.predicted_tags, tagset)?;
        cases.push(ErrorCase {
            sentence_id: a.sentence_id.clone(),
            language: a.language.clone(),
            tokens: a.tokens.clone(),
            gold_tags: gold.clone(),
            tags_a: a.predicted_tags.clone(),
            tags_b: b.predicted_tags.clone(),
            f1_a,
            f1_b,
            gap: (f1_a - f1_b).abs(),
        });
    }
    cases.sort_by(|x, y| {
        y.gap
            .partial_cmp(&x.gap)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| x.sentence_id.cmp(&y.sentence_id))
    });
    cases.truncate(k);
    Ok(cases)
}

/// Render error cases as a text document with one block per sentence:
/// tokens, gold tags, and both methods' tags with their sentence scores.
pub fn render_error_cases(cases: &[ErrorCase], label_a: &str, label_b: &str) -> String {
    let mut out = String::new();
    for (i, case) in cases.iter().enumerate() {
        out.push_str(&format!(
            "Case {} ({}) {}\n",
            i + 1,
            case.language,
            case.sentence_id
        ));
        out.push_str(&format!("Input: {}\n", case.tokens.join(" ")));
        out.push_str(&format!("True: {}\n", case.gold_tags.join(" ")));
        out.push_str(&format!(
            "{}: {} ({:.2} F1)\n",
            label_a,
            case.tags_a.join(" "),
            case.f1_a
        ));
        out.push_str(&format!(
            "{}: {} ({:.2} F1)\n\n",
            label_b,
            case.tags_b.join(" "),
            case.f1_b
        ));
    }
    out
}

/// The structured metrics file written by evaluation runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub task: String,
    pub method: String,
    pub backend: String,
    pub seeds: Vec<u64>,
    pub per_language: BTreeMap<String, f64>,
    pub pivot: String,
    pub avg_excluding_pivot: f64,
    /// Whether the catch-all class took part in the weighted F1.
    pub includes_catch_all: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_stddev: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<BTreeMap<String, f64>>,
}
