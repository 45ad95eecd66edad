//! `topro train` — fine-tune a reference scorer over the configured seeds.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;

use topro::corpus::{CorpusError, CorpusSplit, SplitName, TagSet, Task};
use topro::decode::{predict_split, predict_split_vanilla, DecodeOptions};
use topro::eval::F1Options;
use topro::pvp::{builtin_pvp, decompose_split, load_pvp_override, PromptTemplate, Verbalizer};
use topro::scoring::{LookupOracleScorer, TinyTokenClassifier, TinyTrainableScorer};
use topro::train::{
    compute_topro_loss, run_with_seeds, topro_finetune, vanilla_finetune, MetricMap, TrainConfig,
    TrainRunRecord,
};

use crate::artifact::{BackendParams, ModelArtifact, ModelKind};
use crate::commands::{corpus_f1, ensure_dir, load_split, parse_seeds_csv, split_language_from_name};
use crate::error::CliError;
use crate::manifest::{fingerprint, input_name, write_manifest, RunManifest, Stopwatch};

#[derive(Args)]
pub struct TrainArgs {
    /// Task to train for (`panx` or `udpos`).
    #[arg(long)]
    task: String,
    /// Training method: `topro` or `vanilla`.
    #[arg(long)]
    method: String,
    /// Reference backend: `tiny` (trainable) or `oracle` (frozen).
    #[arg(long, default_value = "tiny")]
    backend: String,
    /// Labeled training corpus.
    #[arg(long)]
    train_file: PathBuf,
    /// Optional labeled dev corpus; its loss and F1 are logged only.
    #[arg(long)]
    dev_file: Option<PathBuf>,
    /// TOML config file; defaults mirror the encoder hyperparameters.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seed override.
    #[arg(long)]
    seeds: Option<String>,
    /// Training-language code when the file name does not carry one.
    #[arg(long)]
    language: Option<String>,
    /// Feature dimension of the tiny reference models.
    #[arg(long, default_value_t = 4096)]
    feature_dim: usize,
    /// Gold-word probability mass of the oracle backend.
    #[arg(long, default_value_t = 1.0)]
    certainty: f64,
    /// Pattern-verbalizer override file (travels with the artifact).
    #[arg(long)]
    pvp: Option<PathBuf>,
    /// Output directory for artifacts and manifests.
    #[arg(long)]
    out: PathBuf,
}

struct SeedContext<'a> {
    args: &'a TrainArgs,
    task: Task,
    tagset: &'a TagSet,
    template: &'a PromptTemplate,
    verbalizer: &'a Verbalizer,
    config: &'a TrainConfig,
    train: &'a CorpusSplit,
    dev: Option<&'a CorpusSplit>,
    fingerprints: &'a BTreeMap<String, String>,
}

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let stopwatch = Stopwatch::start();
    let task: Task = args
        .task
        .parse()
        .map_err(|e: CorpusError| CliError::usage(e.to_string()))?;
    match args.method.as_str() {
        "topro" | "vanilla" => {}
        "pt" => {
            return Err(CliError::usage(
                "method `pt` (prompt tuning) is not supported by this toolkit; \
                 supported methods: topro, vanilla",
            ))
        }
        other => {
            return Err(CliError::usage(format!(
                "unknown method `{other}`; supported methods: topro, vanilla"
            )))
        }
    }
    match args.backend.as_str() {
        "tiny" | "oracle" => {}
        other if other.starts_with("external:") => {
            return Err(CliError::usage(
                "the external scoring protocol has no training operation; \
                 train with --backend tiny and predict with the external backend",
            ))
        }
        other => {
            return Err(CliError::usage(format!(
                "unknown backend `{other}`; training backends: tiny, oracle"
            )))
        }
    }
    if args.method == "vanilla" && args.backend == "oracle" {
        return Err(CliError::usage("--backend oracle requires --method topro"));
    }

    let mut config = match &args.config {
        Some(path) => {
            let doc = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read config `{}`: {e}", path.display())))?;
            TrainConfig::from_toml_str(&doc)?
        }
        None => TrainConfig::encoder_defaults(),
    };
    if let Some(csv) = &args.seeds {
        config.seeds = parse_seeds_csv(csv)?;
    }
    config.validate()?;

    let tagset = task.tagset();
    let (template, verbalizer) = match &args.pvp {
        Some(path) => {
            let doc = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read pvp `{}`: {e}", path.display())))?;
            load_pvp_override(&doc, &tagset)?
        }
        None => builtin_pvp(&args.task)?,
    };

    let language = args
        .language
        .clone()
        .or_else(|| split_language_from_name(&args.train_file).map(|(_, l)| l))
        .unwrap_or_else(|| "en".to_string());
    let train = load_split(&args.train_file, &tagset, SplitName::Train, &language)?;
    if !train.is_labeled() {
        return Err(CliError::data("training corpus contains unlabeled sentences"));
    }
    let dev = args
        .dev_file
        .as_ref()
        .map(|path| load_split(path, &tagset, SplitName::Dev, &language))
        .transpose()?;

    let mut fingerprints = BTreeMap::new();
    fingerprints.insert(input_name(&args.train_file), fingerprint(&args.train_file)?);
    if let Some(path) = &args.dev_file {
        fingerprints.insert(input_name(path), fingerprint(path)?);
    }

    ensure_dir(&args.out)?;
    let context = SeedContext {
        args: &args,
        task,
        tagset: &tagset,
        template: &template,
        verbalizer: &verbalizer,
        config: &config,
        train: &train,
        dev: dev.as_ref(),
        fingerprints: &fingerprints,
    };

    let aggregate = run_with_seeds(
        |seed| run_seed(&context, seed).map_err(|e| e.to_string().into()),
        &config,
    )?;

    let mut metrics = BTreeMap::new();
    for (key, value) in &aggregate.mean {
        metrics.insert(format!("mean.{key}"), *value);
    }
    for (key, value) in &aggregate.stddev {
        metrics.insert(format!("stddev.{key}"), *value);
    }
    let outputs: Vec<String> = config
        .seeds
        .iter()
        .flat_map(|seed| {
            [
                format!("seed-{seed}/model.json"),
                format!("seed-{seed}/manifest.json"),
            ]
        })
        .collect();
    write_manifest(
        &args.out.join("manifest.json"),
        &RunManifest {
            command: "train".into(),
            task: task.to_string(),
            method: args.method.clone(),
            backend: args.backend.clone(),
            config: Some(config.clone()),
            seeds: config.seeds.clone(),
            data_fingerprints: fingerprints.clone(),
            outputs,
            metrics,
            timing: stopwatch.finish(),
        },
    )?;

    for (seed, per_seed) in aggregate.seeds.iter().zip(&aggregate.per_seed) {
        let f1 = per_seed.get("train_weighted_f1").copied().unwrap_or(f64::NAN);
        println!("seed {seed}: train weighted F1 {f1:.4}");
    }
    if let Some(mean) = aggregate.mean.get("train_weighted_f1") {
        let sd = aggregate.stddev.get("train_weighted_f1").copied().unwrap_or(0.0);
        println!(
            "mean train weighted F1 {mean:.4} (stddev {sd:.4}) over {} seed(s)",
            aggregate.seeds.len()
        );
    }
    Ok(())
}

fn run_seed(context: &SeedContext<'_>, seed: u64) -> Result<MetricMap, CliError> {
    let seed_stopwatch = Stopwatch::start();
    let seed_dir = context.args.out.join(format!("seed-{seed}"));
    ensure_dir(&seed_dir)?;
    let decode_options = DecodeOptions {
        max_seq_length: Some(context.config.max_seq_length),
    };

    let mut metrics = MetricMap::new();
    let mut loss_curve: Option<Vec<f64>> = None;

    let backend = match (context.args.method.as_str(), context.args.backend.as_str()) {
        ("topro", "tiny") => {
            let mut scorer = TinyTrainableScorer::new(
                context.args.feature_dim,
                context.tagset,
                context.verbalizer,
                seed,
            )?;
            let record = topro_finetune(
                &mut scorer,
                context.train,
                context.template,
                context.verbalizer,
                context.config,
                seed,
            )?;
            let records = predict_split(
                &scorer,
                context.train,
                context.template,
                context.verbalizer,
                &decode_options,
            )?;
            metrics.insert(
                "train_weighted_f1".into(),
                corpus_f1(&records, context.tagset, F1Options::default())?,
            );
            record_metrics(&mut metrics, &record);
            if let Some(dev) = context.dev {
                let prompts: Vec<_> = decompose_split(
                    context.template,
                    dev,
                    Some(context.config.max_seq_length),
                )?
                .into_iter()
                .flatten()
                .collect();
                let loss = compute_topro_loss(&scorer, &prompts, context.verbalizer)?;
                metrics.insert("dev_mean_loss".into(), loss.value / prompts.len() as f64);
            }
            loss_curve = Some(record.epoch_mean_loss.clone());
            let (weights, bias) = scorer.export_params();
            BackendParams::Tiny {
                feature_dim: scorer.feature_dim(),
                hash_seed: scorer.hash_seed(),
                context_window: scorer.context_window(),
                weights,
                bias,
            }
        }
        ("topro", "oracle") => {
            let oracle = LookupOracleScorer::from_split(
                context.train,
                context.verbalizer.clone(),
                context.args.certainty,
            )?;
            let prompts: Vec<_> = decompose_split(
                context.template,
                context.train,
                Some(context.config.max_seq_length),
            )?
            .into_iter()
            .flatten()
            .collect();
            let loss = compute_topro_loss(&oracle, &prompts, context.verbalizer)?;
            metrics.insert("train_mean_loss".into(), loss.value / prompts.len() as f64);
            let records = predict_split(
                &oracle,
                context.train,
                context.template,
                context.verbalizer,
                &decode_options,
            )?;
            metrics.insert(
                "train_weighted_f1".into(),
                corpus_f1(&records, context.tagset, F1Options::default())?,
            );
            let mut gold: Vec<(String, usize, String)> = oracle
                .gold_entries()
                .map(|((id, index), tag)| (id.clone(), *index, tag.clone()))
                .collect();
            gold.sort();
            BackendParams::Oracle {
                certainty: context.args.certainty,
                gold,
            }
        }
        ("vanilla", "tiny") => {
            let mut classifier =
                TinyTokenClassifier::new(context.args.feature_dim, context.tagset, seed)?;
            let record = vanilla_finetune(&mut classifier, context.train, context.config, seed)?;
            let records = predict_split_vanilla(&classifier, context.train)?;
            metrics.insert(
                "train_weighted_f1".into(),
                corpus_f1(&records, context.tagset, F1Options::default())?,
            );
            record_metrics(&mut metrics, &record);
            loss_curve = Some(record.epoch_mean_loss.clone());
            let (weights, bias) = classifier.export_params();
            BackendParams::TinyClassifier {
                feature_dim: classifier.feature_dim(),
                hash_seed: classifier.hash_seed(),
                weights,
                bias,
            }
        }
        _ => unreachable!("combinations are validated before seeds run"),
    };

    let kind = match context.args.method.as_str() {
        "topro" => ModelKind::Topro,
        _ => ModelKind::Vanilla,
    };
    let artifact = ModelArtifact {
        kind,
        task: context.task.to_string(),
        language: context.train.language().to_string(),
        seed,
        tagset: context.tagset.clone(),
        template: (kind == ModelKind::Topro).then(|| context.template.clone()),
        verbalizer: (kind == ModelKind::Topro).then(|| context.verbalizer.clone()),
        config: context.config.clone(),
        backend,
    };
    artifact.save(&seed_dir.join("model.json"))?;

    write_manifest(
        &seed_dir.join("manifest.json"),
        &RunManifest {
            command: "train".into(),
            task: context.task.to_string(),
            method: context.args.method.clone(),
            backend: context.args.backend.clone(),
            config: Some(context.config.clone()),
            seeds: vec![seed],
            data_fingerprints: context.fingerprints.clone(),
            outputs: vec!["model.json".into()],
            metrics: with_loss_curve(metrics.clone(), loss_curve),
            timing: seed_stopwatch.finish(),
        },
    )?;
    Ok(metrics)
}

fn record_metrics(metrics: &mut MetricMap, record: &TrainRunRecord) {
    if let Some(first) = record.epoch_mean_loss.first() {
        metrics.insert("first_epoch_mean_loss".into(), *first);
    }
    if let Some(last) = record.epoch_mean_loss.last() {
        metrics.insert("final_epoch_mean_loss".into(), *last);
    }
    metrics.insert(
        "zero_probability_clamps".into(),
        record.zero_probability_clamps as f64,
    );
}

fn with_loss_curve(mut metrics: MetricMap, curve: Option<Vec<f64>>) -> MetricMap {
    if let Some(curve) = curve {
        for (epoch, loss) in curve.iter().enumerate() {
            metrics.insert(format!("epoch_{epoch:03}_mean_loss"), *loss);
        }
    }
    metrics
}
