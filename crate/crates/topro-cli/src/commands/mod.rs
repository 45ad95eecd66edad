//! Subcommand implementations.

pub mod evaluate;
pub mod icl;
pub mod ingest;
pub mod predict;
pub mod train;

use std::io::BufReader;
use std::path::Path;

use topro::corpus::{parse_conll, CorpusSplit, SplitName, TagSet};

use crate::error::CliError;

/// Derive `(split, language)` from a `{split}.{lang}.{ext}` file name.
pub(crate) fn split_language_from_name(path: &Path) -> Option<(SplitName, String)> {
    let name = path.file_name()?.to_str()?;
    let mut parts = name.split('.');
    let split: SplitName = parts.next()?.parse().ok()?;
    let language = parts.next()?;
    if language.is_empty() {
        return None;
    }
    Some((split, language.to_string()))
}

pub(crate) fn load_split(
    path: &Path,
    tagset: &TagSet,
    name: SplitName,
    language: &str,
) -> Result<CorpusSplit, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::data(format!("cannot open `{}`: {e}", path.display())))?;
    Ok(parse_conll(BufReader::new(file), tagset, name, language)?)
}

pub(crate) fn parse_seeds_csv(csv: &str) -> Result<Vec<u64>, CliError> {
    let seeds: Result<Vec<u64>, _> = csv.split(',').map(|s| s.trim().parse::<u64>()).collect();
    seeds.map_err(|_| CliError::usage(format!("bad --seeds value `{csv}`: expected comma-separated integers")))
}

/// Corpus-level weighted F1 over prediction records: token streams are
/// concatenated, so every token weighs equally.
pub(crate) fn corpus_f1(
    records: &[topro::decode::PredictionRecord],
    tagset: &TagSet,
    options: topro::eval::F1Options,
) -> Result<f64, CliError> {
    let mut gold = Vec::new();
    let mut predicted = Vec::new();
    for record in records {
        let Some(tags) = record.gold_tags.as_ref() else {
            return Err(CliError::data(format!(
                "sentence `{}` has no gold tags; cannot evaluate",
                record.sentence_id
            )));
        };
        gold.extend(tags.iter().cloned());
        predicted.extend(record.predicted_tags.iter().cloned());
    }
    Ok(topro::eval::weighted_f1_with(&gold, &predicted, tagset, options)?)
}

pub(crate) fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::data(format!("cannot create `{}`: {e}", path.display())))
}
