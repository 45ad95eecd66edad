//! `topro evaluate` — weighted-F1 reports, delta tables, and error cases.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::PathBuf;

use clap::Args;

use topro::corpus::{CorpusError, Task};
use topro::decode::{read_predictions_tsv, PredictionRecord};
use topro::eval::{
    aggregate_languages, delta_table, export_error_cases, render_delta_tsv, render_error_cases,
    weighted_f1_with, EvalError, F1Options, MetricsDocument,
};

use crate::error::CliError;
use crate::manifest::{fingerprint, input_name, write_manifest, RunManifest, Stopwatch};

#[derive(Args)]
pub struct EvaluateArgs {
    /// Task override when prediction files carry no task metadata.
    #[arg(long)]
    task: Option<String>,
    /// Training language excluded from cross-language averages.
    #[arg(long, default_value = "en")]
    pivot: String,
    /// Metrics JSON to write (one document per method).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Delta-table TSV to write when two methods are evaluated.
    #[arg(long)]
    delta_out: Option<PathBuf>,
    /// Export the K sentences with the largest per-sentence F1 gap.
    #[arg(long, default_value_t = 0)]
    errors: usize,
    /// Error-case document path (stdout when omitted).
    #[arg(long)]
    errors_out: Option<PathBuf>,
    /// Leave the catch-all class (`O`/`X`) out of the weighted F1.
    #[arg(long)]
    exclude_catch_all: bool,
    /// Prediction TSV files written by `topro predict` or `topro icl`.
    files: Vec<PathBuf>,
}

struct MethodData {
    backend: String,
    /// language -> (gold stream, predicted stream)
    tokens: BTreeMap<String, (Vec<String>, Vec<String>)>,
    records: Vec<PredictionRecord>,
}

pub fn run(args: EvaluateArgs) -> Result<(), CliError> {
    let stopwatch = Stopwatch::start();
    if args.files.is_empty() {
        return Err(CliError::usage("no prediction files given"));
    }
    let options = F1Options {
        include_catch_all: !args.exclude_catch_all,
    };

    let mut task: Option<Task> = args
        .task
        .as_deref()
        .map(|t| t.parse().map_err(|e: CorpusError| CliError::usage(e.to_string())))
        .transpose()?;
    let mut methods: Vec<String> = Vec::new();
    let mut data: BTreeMap<String, MethodData> = BTreeMap::new();
    let mut fingerprints = BTreeMap::new();

    for path in &args.files {
        let file = std::fs::File::open(path)
            .map_err(|e| CliError::data(format!("cannot open `{}`: {e}", path.display())))?;
        let (meta, records) = read_predictions_tsv(BufReader::new(file))?;
        fingerprints.insert(input_name(path), fingerprint(path)?);
        if task.is_none() {
            task = meta
                .task
                .as_deref()
                .map(|t| t.parse().map_err(|e: CorpusError| CliError::usage(e.to_string())))
                .transpose()?;
        }
        let language = meta.language.clone().unwrap_or_else(|| "und".to_string());
        let method = meta.method.clone().unwrap_or_else(|| "unknown".to_string());
        if !methods.contains(&method) {
            methods.push(method.clone());
        }
        let entry = data.entry(method).or_insert_with(|| MethodData {
            backend: meta.backend.clone().unwrap_or_else(|| "unknown".to_string()),
            tokens: BTreeMap::new(),
            records: Vec::new(),
        });
        let (gold_stream, predicted_stream) =
            entry.tokens.entry(language).or_insert_with(|| (Vec::new(), Vec::new()));
        for record in &records {
            let Some(gold) = record.gold_tags.as_ref() else {
                return Err(CliError::data(format!(
                    "`{}`: sentence `{}` has no gold tags",
                    path.display(),
                    record.sentence_id
                )));
            };
            gold_stream.extend(gold.iter().cloned());
            predicted_stream.extend(record.predicted_tags.iter().cloned());
        }
        entry.records.extend(records);
    }

    let task = task.ok_or_else(|| {
        CliError::usage("prediction files carry no task metadata; pass --task panx|udpos")
    })?;
    let tagset = task.tagset();

    let mut documents: Vec<MetricsDocument> = Vec::new();
    for method in &methods {
        let method_data = &data[method];
        let mut per_language = BTreeMap::new();
        for (language, (gold, predicted)) in &method_data.tokens {
            per_language.insert(
                language.clone(),
                weighted_f1_with(gold, predicted, &tagset, options)?,
            );
        }
        if !per_language.contains_key(&args.pivot) {
            eprintln!(
                "warning: pivot `{}` not among evaluated languages; averaging over all",
                args.pivot
            );
        }
        let report = match aggregate_languages(&per_language, &args.pivot, &task.to_string(), method)
        {
            Ok(report) => report,
            Err(EvalError::NoTargetLanguages) => {
                eprintln!(
                    "warning: only the pivot `{}` was evaluated; averaging over all languages",
                    args.pivot
                );
                let mean =
                    per_language.values().sum::<f64>() / per_language.len().max(1) as f64;
                topro::eval::EvalReport {
                    task: task.to_string(),
                    method: method.clone(),
                    per_language: per_language.clone(),
                    pivot: args.pivot.clone(),
                    pivot_score: per_language.get(&args.pivot).copied(),
                    average_excluding_pivot: mean,
                    seed_stddev: None,
                }
            }
            Err(e) => return Err(e.into()),
        };
        for (language, f1) in &report.per_language {
            println!("{method} {language}: {:.2}", f1 * 100.0);
        }
        println!(
            "{method} avg (excl. {}): {:.2}",
            args.pivot,
            report.average_excluding_pivot * 100.0
        );
        documents.push(MetricsDocument {
            task: task.to_string(),
            method: method.clone(),
            backend: method_data.backend.clone(),
            seeds: Vec::new(),
            per_language: report.per_language.clone(),
            pivot: args.pivot.clone(),
            avg_excluding_pivot: report.average_excluding_pivot,
            includes_catch_all: options.include_catch_all,
            seed_stddev: None,
            deltas: None,
        });
    }

    let mut delta_rendered = None;
    if methods.len() == 2 {
        let a = &documents[0].per_language;
        let b = &documents[1].per_language;
        let deltas = delta_table(a, b)?;
        let label = format!("{}-{}", methods[0], methods[1]);
        println!("delta ({label}):");
        for (language, delta) in &deltas {
            println!("  {language}: {delta:+.2}");
        }
        delta_rendered = Some(render_delta_tsv(&[(label, deltas.clone())]));
        documents[0].deltas = Some(deltas);
    }

    if let Some(path) = &args.delta_out {
        match &delta_rendered {
            Some(tsv) => std::fs::write(path, tsv)
                .map_err(|e| CliError::data(format!("cannot write `{}`: {e}", path.display())))?,
            None => {
                return Err(CliError::usage(
                    "--delta-out needs exactly two methods to compare",
                ))
            }
        }
    }

    if args.errors > 0 {
        if methods.len() != 2 {
            return Err(CliError::usage("--errors needs exactly two methods to compare"));
        }
        let cases = export_error_cases(
            &data[&methods[0]].records,
            &data[&methods[1]].records,
            &tagset,
            args.errors,
        )?;
        let text = render_error_cases(&cases, &methods[0], &methods[1]);
        match &args.errors_out {
            Some(path) => std::fs::write(path, text)
                .map_err(|e| CliError::data(format!("cannot write `{}`: {e}", path.display())))?,
            None => print!("{text}"),
        }
    }

    if let Some(path) = &args.out {
        let json = if documents.len() == 1 {
            serde_json::to_string_pretty(&documents[0])?
        } else {
            serde_json::to_string_pretty(&documents)?
        };
        std::fs::write(path, json + "\n")
            .map_err(|e| CliError::data(format!("cannot write `{}`: {e}", path.display())))?;

        let mut metrics = BTreeMap::new();
        for document in &documents {
            metrics.insert(
                format!("{}.avg_excluding_pivot", document.method),
                document.avg_excluding_pivot,
            );
        }
        write_manifest(
            &path.with_extension("manifest.json"),
            &RunManifest {
                command: "evaluate".into(),
                task: task.to_string(),
                method: methods.join("+"),
                backend: "-".into(),
                config: None,
                seeds: Vec::new(),
                data_fingerprints: fingerprints,
                outputs: vec![input_name(path)],
                metrics,
                timing: stopwatch.finish(),
            },
        )?;
    }
    Ok(())
}
