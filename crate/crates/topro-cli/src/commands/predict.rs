//! `topro predict` — tag a corpus with a trained model artifact.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;

use topro::corpus::{CorpusError, SplitName, Task};
use topro::decode::{
    predict_split, predict_split_vanilla, write_predictions_tsv, DecodeOptions, PredictionsMeta,
};
use topro::pvp::builtin_pvp;
use topro::scoring::{EndpointSpec, ExternalScorerAdapter};
use topro::train::TrainConfig;

use crate::artifact::{ModelArtifact, ModelKind};
use crate::commands::{load_split, split_language_from_name};
use crate::error::CliError;
use crate::manifest::{fingerprint, input_name, write_manifest, RunManifest, Stopwatch};

#[derive(Args)]
pub struct PredictArgs {
    /// Model artifact written by `topro train` (a `model.json`).
    #[arg(long, conflicts_with = "backend")]
    model: Option<PathBuf>,
    /// Frozen external backend (`external:SPEC`) scored zero-shot with the
    /// task's built-in pattern; requires --task.
    #[arg(long)]
    backend: Option<String>,
    /// Task for --backend mode.
    #[arg(long)]
    task: Option<String>,
    /// Corpus to tag; gold tags are carried through when present.
    #[arg(long)]
    corpus: PathBuf,
    /// Language code when the corpus file name does not carry one.
    #[arg(long)]
    language: Option<String>,
    /// Predictions TSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Rejected: the prediction pattern always comes from the model
    /// artifact, never from the command line.
    #[arg(long)]
    pvp: Option<PathBuf>,
}

pub fn run(args: PredictArgs) -> Result<(), CliError> {
    let stopwatch = Stopwatch::start();
    if args.pvp.is_some() {
        return Err(CliError::usage(
            "--pvp is refused here: predictions must use the pattern the model was trained \
             with, which is stored in the model artifact",
        ));
    }
    let (split_name, language) = match &args.language {
        Some(language) => (
            split_language_from_name(&args.corpus)
                .map(|(s, _)| s)
                .unwrap_or(SplitName::Test),
            language.clone(),
        ),
        None => split_language_from_name(&args.corpus).unwrap_or_else(|| (SplitName::Test, "und".into())),
    };

    let (records, task, method, backend_name, config, seeds, model_fingerprint) =
        match (&args.model, &args.backend) {
            (Some(model_path), None) => {
                let artifact = ModelArtifact::load(model_path)?;
                let split = load_split(&args.corpus, &artifact.tagset, split_name, &language)?;
                let records = match artifact.kind {
                    ModelKind::Topro => {
                        let (template, verbalizer) = artifact.pvp()?;
                        let scorer = artifact.mask_scorer()?;
                        let options = DecodeOptions {
                            max_seq_length: Some(artifact.config.max_seq_length),
                        };
                        predict_split(scorer.as_ref(), &split, template, verbalizer, &options)?
                    }
                    ModelKind::Vanilla => {
                        let classifier = artifact.token_classifier()?;
                        predict_split_vanilla(&classifier, &split)?
                    }
                };
                (
                    records,
                    artifact.task.clone(),
                    artifact.kind.to_string(),
                    artifact.backend_name().to_string(),
                    Some(artifact.config.clone()),
                    vec![artifact.seed],
                    Some((input_name(model_path), fingerprint(model_path)?)),
                )
            }
            (None, Some(backend)) => {
                let spec = backend.strip_prefix("external:").ok_or_else(|| {
                    CliError::usage(format!(
                        "unknown predict backend `{backend}`; only `external:SPEC` scores \
                         without a model artifact"
                    ))
                })?;
                let task_name = args.task.clone().ok_or_else(|| {
                    CliError::usage("--backend needs --task to select the built-in pattern")
                })?;
                let task: Task = task_name
                    .parse()
                    .map_err(|e: CorpusError| CliError::usage(e.to_string()))?;
                let (template, verbalizer) = builtin_pvp(&task_name)?;
                let endpoint: EndpointSpec = spec.parse()?;
                let adapter = ExternalScorerAdapter::connect(&endpoint)?;
                let split = load_split(&args.corpus, &task.tagset(), split_name, &language)?;
                let options = DecodeOptions {
                    max_seq_length: Some(TrainConfig::encoder_defaults().max_seq_length),
                };
                let records = predict_split(&adapter, &split, &template, &verbalizer, &options)?;
                (
                    records,
                    task.to_string(),
                    "topro".to_string(),
                    "external".to_string(),
                    None,
                    Vec::new(),
                    None,
                )
            }
            _ => {
                return Err(CliError::usage(
                    "pass exactly one of --model or --backend external:SPEC",
                ))
            }
        };

    let meta = PredictionsMeta {
        language: Some(language.clone()),
        task: Some(task.clone()),
        method: Some(method.clone()),
        backend: Some(backend_name.clone()),
    };
    let mut buffer = Vec::new();
    write_predictions_tsv(&mut buffer, &records, &meta)?;
    std::fs::write(&args.out, buffer)
        .map_err(|e| CliError::data(format!("cannot write `{}`: {e}", args.out.display())))?;

    let mut fingerprints = BTreeMap::new();
    if let Some((name, hash)) = model_fingerprint {
        fingerprints.insert(name, hash);
    }
    fingerprints.insert(input_name(&args.corpus), fingerprint(&args.corpus)?);
    let mut metrics = BTreeMap::new();
    metrics.insert("sentences".to_string(), records.len() as f64);
    let manifest_path = args.out.with_extension("manifest.json");
    write_manifest(
        &manifest_path,
        &RunManifest {
            command: "predict".into(),
            task,
            method,
            backend: backend_name,
            config,
            seeds,
            data_fingerprints: fingerprints,
            outputs: vec![input_name(&args.out)],
            metrics,
            timing: stopwatch.finish(),
        },
    )?;
    println!("wrote {} sentences to {}", records.len(), args.out.display());
    Ok(())
}
