//! `topro icl` — instruction-prompt inference with a generative backend.
//!
//! Prompts follow the three-line instruction pattern (candidate words,
//! sentence, per-token question); no parameters are updated anywhere on this
//! path.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;

use topro::corpus::{SplitName, Task};
use topro::decode::{predict_split_generative, write_predictions_tsv, GenerateOptions, PredictionsMeta};
use topro::eval::{aggregate_languages, EvalError, F1Options, MetricsDocument};
use topro::pvp::{builtin_icl_pvp, GenerativePromptKind};
use topro::scoring::{
    EchoGoldGenerator, EndpointSpec, ExternalScorerAdapter, Generator, SilentGenerator,
};
use topro::train::TrainConfig;

use crate::commands::{corpus_f1, ensure_dir, load_split, split_language_from_name};
use crate::error::CliError;
use crate::manifest::{fingerprint, input_name, write_manifest, RunManifest, Stopwatch};

#[derive(Args)]
pub struct IclArgs {
    /// Task to prompt for; the instruction pattern is entity-specific, so
    /// only `panx` is supported.
    #[arg(long)]
    task: String,
    /// Generative backend: `echo` (gold oracle stub), `empty` (silent
    /// stub), or `external:SPEC`.
    #[arg(long)]
    backend: String,
    /// Labeled corpus to tag and score.
    #[arg(long)]
    corpus: PathBuf,
    /// Language code when the corpus file name does not carry one.
    #[arg(long)]
    language: Option<String>,
    /// TOML config supplying `max_target_length` and `num_beam_search`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training language excluded from cross-language averages.
    #[arg(long, default_value = "en")]
    pivot: String,
    /// Output directory for predictions, metrics, and the manifest.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: IclArgs) -> Result<(), CliError> {
    let stopwatch = Stopwatch::start();
    if args.task != "panx" {
        return Err(CliError::usage(
            "icl supports --task panx only: the instruction prompt asks for named entity types",
        ));
    }
    let task = Task::Panx;
    let tagset = task.tagset();
    let (template, verbalizer) = builtin_icl_pvp();

    let config = match &args.config {
        Some(path) => {
            let doc = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read config `{}`: {e}", path.display())))?;
            TrainConfig::from_toml_str(&doc)?
        }
        None => TrainConfig::seq2seq_defaults(),
    };
    let options = GenerateOptions {
        kind: GenerativePromptKind::Icl,
        max_target_length: config.max_target_length.unwrap_or(150),
        beam_width: config.num_beam_search.unwrap_or(3),
        icl_template: Some(template.clone()),
    };

    let (split_name, language) = match &args.language {
        Some(language) => (SplitName::Test, language.clone()),
        None => split_language_from_name(&args.corpus).unwrap_or((SplitName::Test, "und".into())),
    };
    let split = load_split(&args.corpus, &tagset, split_name, &language)?;
    if !split.is_labeled() {
        return Err(CliError::data(
            "icl evaluation needs a labeled corpus (gold tags are required for scoring)",
        ));
    }

    let generator: Box<dyn Generator> = match args.backend.as_str() {
        "echo" => Box::new(EchoGoldGenerator::from_split(
            &split,
            task,
            options.kind,
            options.icl_template.as_ref(),
            &verbalizer,
        )?),
        "empty" => Box::new(SilentGenerator),
        other => match other.strip_prefix("external:") {
            Some(spec) => {
                let spec: EndpointSpec = spec.parse()?;
                Box::new(ExternalScorerAdapter::connect(&spec)?)
            }
            None => {
                return Err(CliError::usage(format!(
                    "unknown backend `{other}`; icl backends: echo, empty, external:SPEC"
                )))
            }
        },
    };

    let records = predict_split_generative(
        generator.as_ref(),
        &split,
        task,
        &tagset,
        &verbalizer,
        &options,
    )?;

    ensure_dir(&args.out)?;
    let meta = PredictionsMeta {
        language: Some(language.clone()),
        task: Some(task.to_string()),
        method: Some("icl".to_string()),
        backend: Some(args.backend.clone()),
    };
    let mut buffer = Vec::new();
    write_predictions_tsv(&mut buffer, &records, &meta)?;
    std::fs::write(args.out.join("predictions.tsv"), buffer)
        .map_err(|e| CliError::data(e.to_string()))?;

    let f1 = corpus_f1(&records, &tagset, F1Options::default())?;
    let mut per_language = BTreeMap::new();
    per_language.insert(language.clone(), f1);
    let avg = match aggregate_languages(&per_language, &args.pivot, "panx", "icl") {
        Ok(report) => report.average_excluding_pivot,
        Err(EvalError::NoTargetLanguages) => {
            eprintln!(
                "warning: only the pivot `{}` was evaluated; reporting its own score",
                args.pivot
            );
            f1
        }
        Err(e) => return Err(e.into()),
    };
    let document = MetricsDocument {
        task: "panx".into(),
        method: "icl".into(),
        backend: args.backend.clone(),
        seeds: Vec::new(),
        per_language: per_language.clone(),
        pivot: args.pivot.clone(),
        avg_excluding_pivot: avg,
        includes_catch_all: true,
        seed_stddev: None,
        deltas: None,
    };
    let json = serde_json::to_string_pretty(&document)?;
    std::fs::write(args.out.join("metrics.json"), json + "\n")
        .map_err(|e| CliError::data(e.to_string()))?;

    let mut fingerprints = BTreeMap::new();
    fingerprints.insert(input_name(&args.corpus), fingerprint(&args.corpus)?);
    let mut metrics = BTreeMap::new();
    metrics.insert(format!("{language}.weighted_f1"), f1);
    write_manifest(
        &args.out.join("manifest.json"),
        &RunManifest {
            command: "icl".into(),
            task: "panx".into(),
            method: "icl".into(),
            backend: args.backend.clone(),
            config: Some(config),
            seeds: Vec::new(),
            data_fingerprints: fingerprints,
            outputs: vec!["predictions.tsv".into(), "metrics.json".into()],
            metrics,
            timing: stopwatch.finish(),
        },
    )?;
    println!("{language}: weighted F1 {:.4} ({} sentences)", f1, records.len());
    Ok(())
}
