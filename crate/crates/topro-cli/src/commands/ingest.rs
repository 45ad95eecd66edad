//! `topro ingest` — validate corpora and write a canonical store.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;

use topro::corpus::{
    dataset_stats, serialize_conll, validate_iob2, CorpusError, SplitName, TagScheme,
};

use crate::commands::{ensure_dir, load_split, split_language_from_name};
use crate::error::CliError;
use crate::manifest::{fingerprint, input_name, write_manifest, RunManifest, Stopwatch};

#[derive(Args)]
pub struct IngestArgs {
    /// Task whose tag set validates the corpus (`panx` or `udpos`).
    #[arg(long)]
    task: String,
    /// Directory receiving the validated store.
    #[arg(long)]
    out: PathBuf,
    /// Language code when the file name does not carry one.
    #[arg(long)]
    language: Option<String>,
    /// Split name when the file name does not carry one.
    #[arg(long)]
    split: Option<SplitName>,
    /// Corpus files (`{split}.{lang}.tsv`) or directories of them.
    paths: Vec<PathBuf>,
}

fn expand(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(|e| CliError::data(format!("cannot read `{}`: {e}", path.display())))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(path.clone());
        }
    }
    Ok(files)
}

pub fn run(args: IngestArgs) -> Result<(), CliError> {
    let stopwatch = Stopwatch::start();
    let task: topro::corpus::Task = args
        .task
        .parse()
        .map_err(|e: CorpusError| CliError::usage(e.to_string()))?;
    let tagset = task.tagset();

    let files = expand(&args.paths)?;
    if files.is_empty() {
        return Err(CorpusError::EmptyCorpus.into());
    }

    ensure_dir(&args.out)?;
    let mut splits = Vec::new();
    let mut fingerprints = BTreeMap::new();
    let mut outputs = Vec::new();
    let mut violation_lines = String::new();
    let mut total_violations = 0usize;

    for path in &files {
        let (split_name, language) = match (&args.split, &args.language) {
            (Some(split), Some(language)) => (*split, language.clone()),
            _ => split_language_from_name(path).ok_or_else(|| {
                CliError::usage(format!(
                    "cannot infer split/language from `{}`; name files `{{split}}.{{lang}}.tsv` \
                     or pass --split and --language",
                    path.display()
                ))
            })?,
        };
        let split = load_split(path, &tagset, split_name, &language)?;
        fingerprints.insert(input_name(path), fingerprint(path)?);

        if tagset.scheme() == TagScheme::Iob2 {
            for sentence in split.sentences() {
                for violation in validate_iob2(sentence) {
                    total_violations += 1;
                    violation_lines.push_str(&format!(
                        "{}\t{}\t{}\t{}\n",
                        sentence.sentence_id(),
                        violation.index,
                        violation.tag,
                        violation.previous.as_deref().unwrap_or("-"),
                    ));
                }
            }
        }

        let out_name = format!("{}.{}.tsv", split.name(), split.language());
        std::fs::write(args.out.join(&out_name), serialize_conll(&split))
            .map_err(|e| CliError::data(format!("cannot write `{out_name}`: {e}")))?;
        outputs.push(out_name);
        splits.push(split);
    }

    let stats = dataset_stats(&splits);
    for entry in &stats.splits {
        println!(
            "{}/{}: {} sentences, {} tokens, {} distinct labels",
            entry.split, entry.language, entry.sentences, entry.tokens, entry.distinct_labels
        );
    }
    if total_violations > 0 {
        println!("{total_violations} ill-formed IOB2 positions (see iob2_violations.tsv)");
        std::fs::write(args.out.join("iob2_violations.tsv"), violation_lines)
            .map_err(|e| CliError::data(e.to_string()))?;
        outputs.push("iob2_violations.tsv".into());
    }
    let stats_json = serde_json::to_string_pretty(&stats)?;
    std::fs::write(args.out.join("stats.json"), stats_json + "\n")
        .map_err(|e| CliError::data(e.to_string()))?;
    outputs.push("stats.json".into());

    let mut metrics = BTreeMap::new();
    metrics.insert(
        "sentences".to_string(),
        stats.splits.iter().map(|s| s.sentences).sum::<usize>() as f64,
    );
    metrics.insert(
        "tokens".to_string(),
        stats.splits.iter().map(|s| s.tokens).sum::<usize>() as f64,
    );
    metrics.insert("iob2_violations".to_string(), total_violations as f64);

    write_manifest(
        &args.out.join("manifest.json"),
        &RunManifest {
            command: "ingest".into(),
            task: task.to_string(),
            method: "-".into(),
            backend: "-".into(),
            config: None,
            seeds: Vec::new(),
            data_fingerprints: fingerprints,
            outputs,
            metrics,
            timing: stopwatch.finish(),
        },
    )?;
    Ok(())
}
