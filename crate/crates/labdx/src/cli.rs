//! Command-line interface. Every command reads a TOML run config (or the
//! defaults) and applies flag overrides on top.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use labdx_core::data::synth_generate;
use labdx_core::models::{Architecture, Trainer};
use serde::Serialize;

use crate::checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::experiment::{
    evaluate_model, feature_episodes, feature_transfer, imputation_run, prepare_split,
    split_train_config, trainer_for_split, ModelSpec, PreparedSplit,
};
use crate::io::{
    load_data, write_dataset, write_json, write_jsonl, write_text, DatasetSource, LoadedData,
};
use crate::report::{footer, render_imputation, render_metrics, DiagnosisTable};
use crate::study::Study;
use labdx_core::imputation::{Heuristic, ImputationTable};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Debug, Parser)]
#[command(
    name = "labdx",
    version,
    about = "Diagnosis and imputation from irregular lab-test sequences"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a dataset directory: synthetic episodes, or CSV events when
    /// `data.events` is configured.
    Synth(SynthArgs),
    /// Train one model on one split, checkpointing after every epoch.
    Train(TrainArgs),
    /// Score a trained checkpoint on a split.
    Evaluate(EvaluateArgs),
    /// Compare imputation methods on hidden observations.
    Impute(ImputeArgs),
    /// Export frozen features and score a fresh NN trained on them.
    Features(FeaturesArgs),
    /// Train every configured model over all split seeds and write the tables.
    Report(ReportArgs),
}

/// Flags that override fields of the run config.
#[derive(Clone, Debug, Default, Args)]
pub struct Overrides {
    /// TOML run config; defaults apply when absent.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// nn, ae_nn, vae_nn, rnn_nn or vrnn_nn.
    #[arg(long)]
    pub model: Option<Architecture>,
    /// Hidden width of every network.
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Latent size of the AE, VAE and VRNN.
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Weight of the generative loss.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Weight of the cross-entropy; 0 trains the unsupervised VAE or VRNN.
    #[arg(long)]
    pub disc_weight: Option<f64>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Per-epoch learning-rate factor.
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Epochs without a dev improvement before stopping.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Global gradient-norm cap.
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Seed for synthesis and parameter initialization.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated split seeds.
    #[arg(long, value_delimiter = ',')]
    pub split_seeds: Option<Vec<u64>>,
    /// Share of observed cells hidden when scoring imputation.
    #[arg(long)]
    pub drop_rate: Option<f64>,
    /// Dataset directory written by `synth`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Lab events CSV: episode_id, patient_id, day, test_id, value.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Labels CSV: episode_id, label.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// TOML with num_tests, num_classes and categorical token maps.
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

impl Overrides {
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                })*
            };
        }
        set!(
            model,
            hidden_dim,
            latent_dim,
            eta,
            disc_weight,
            lr,
            lr_decay,
            batch_size,
            max_epochs,
            patience,
            clip_norm,
            seed,
            split_seeds,
            drop_rate
        );
        if let Some(p) = &self.dataset {
            cfg.data.dataset = Some(p.clone());
        }
        if let Some(p) = &self.events {
            cfg.data.events = Some(p.clone());
        }
        if let Some(p) = &self.labels {
            cfg.data.labels = Some(p.clone());
        }
        if let Some(p) = &self.schema {
            cfg.data.schema = Some(p.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Number of synthetic episodes.
    #[arg(long)]
    pub num_episodes: Option<usize>,
    /// Probability that a synthetic cell is missing.
    #[arg(long)]
    pub missing_rate: Option<f64>,
    /// Output dataset directory.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Split seed; defaults to the first configured one.
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Continue from the checkpoint in `--out` if one exists.
    #[arg(long)]
    pub resume: bool,
    /// Directory for checkpoint.json and train_log.jsonl.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl SplitName {
    fn name(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        }
    }

    fn pick(self, split: &PreparedSplit) -> &[labdx_core::data::LabSequence] {
        match self {
            SplitName::Train => &split.train,
            SplitName::Dev => &split.dev,
            SplitName::Test => &split.test,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Finished checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitName,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImputeArgs {
    /// Checkpoint of a VRNN+NN or VRNN model.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Drop seeds; defaults to the run's split seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub drop_rate: Option<f64>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Checkpoint of a VAE+NN, VRNN+NN, VAE or VRNN model.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Skip the frozen-feature table.
    #[arg(long)]
    pub skip_transfer: bool,
    /// Skip the imputation table.
    #[arg(long)]
    pub skip_imputation: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

fn log(msg: &str) {
    eprintln!("{msg}");
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Impute(a) => impute(a),
        Command::Features(a) => features(a),
        Command::Report(a) => report(a),
    }
}

fn synth(args: SynthArgs) -> CliResult<()> {
    let mut cfg = args.overrides.resolve()?;
    if let Some(n) = args.num_episodes {
        cfg.synth.num_episodes = n;
    }
    if let Some(r) = args.missing_rate {
        cfg.synth.missing_rate = r;
    }
    cfg.validate()?;
    let hash = cfg.hash();
    let manifest = if cfg.data.events.is_some() {
        let data = load_data(&cfg.data)?;
        let summary = data.ingest.clone().expect("CSV input carries a summary");
        write_json(&args.out.join("frequency.json"), &summary.frequency)?;
        write_dataset(
            &args.out,
            &data.episodes,
            data.num_classes,
            DatasetSource::Ingested {
                excluded_short: summary.excluded_short,
            },
            &hash,
        )?
    } else {
        let episodes = synth_generate(&cfg.synth, cfg.seed)?;
        write_dataset(
            &args.out,
            &episodes,
            cfg.synth.num_classes,
            DatasetSource::Synthetic {
                seed: cfg.seed,
                generator: cfg.synth.clone(),
            },
            &hash,
        )?
    };
    write_text(&args.out.join("config.toml"), &cfg.to_toml())?;
    log(&format!(
        "wrote {} episodes ({} tests, missing rate {:.4}) to {}",
        manifest.num_episodes,
        manifest.num_tests,
        manifest.missing_rate,
        args.out.display()
    ));
    Ok(())
}

fn load_split(cfg: &RunConfig, split_seed: u64) -> CliResult<(LoadedData, PreparedSplit)> {
    let data = load_data(&cfg.data)?;
    let split = prepare_split(&data.episodes, split_seed)?;
    Ok((data, split))
}

fn train(args: TrainArgs) -> CliResult<()> {
    let cfg = args.overrides.resolve()?;
    let split_seed = args.split_seed.unwrap_or(cfg.split_seeds[0]);
    let (data, split) = load_split(&cfg, split_seed)?;
    let spec = cfg.model_spec();
    let train_cfg = split_train_config(&cfg.train_config(), split_seed);
    let path = args.out.join(CHECKPOINT_FILE);

    let mut trainer = if args.resume && path.exists() {
        let ckpt = Checkpoint::load(&path)?;
        check_resumable(&ckpt, &cfg, split_seed, &data)?;
        if ckpt.complete {
            log("checkpoint already complete; nothing to do");
            return Ok(());
        }
        Trainer::resume(ckpt.model()?, train_cfg, ckpt.train_state)?
    } else {
        trainer_for_split(&split, &spec, data.num_classes, &cfg.train_config())?
    };

    let mut ckpt = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        arch: spec.arch,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        split_seed,
        dataset_digest: data.digest.clone(),
        run_config: cfg.clone(),
        model_config: trainer.model().config().clone(),
        norm_stats: split.stats.clone(),
        params: trainer.model().params().clone(),
        train_state: trainer.state().clone(),
        complete: false,
    };
    while !trainer.is_finished() {
        let e = trainer.run_epoch(&split.train, &split.dev)?;
        log(&format!(
            "epoch {:>3}  lr {:.6}  loss {:.4} (d {:.4}, g {:.4})  grad {:.2}{}  dev loss {:.4}  dev macro-F1 {:.4}{}",
            e.epoch,
            e.lr,
            e.train_loss,
            e.train_discriminative,
            e.train_generative,
            e.max_grad_norm,
            if e.clipped_batches > 0 {
                format!(" ({} clipped)", e.clipped_batches)
            } else {
                String::new()
            },
            e.dev_loss,
            e.dev_macro_f1,
            if e.improved { "  *" } else { "" }
        ));
        ckpt.params = trainer.model().params().clone();
        ckpt.train_state = trainer.state().clone();
        ckpt.save(&path)?;
    }
    let outcome = trainer.into_best();
    ckpt.params = outcome.model.params().clone();
    ckpt.train_state = outcome.state;
    ckpt.complete = true;
    ckpt.save(&path)?;
    write_jsonl(&args.out.join("train_log.jsonl"), &ckpt.train_state.history)?;
    log(&format!(
        "best epoch {:?} ({:?}); checkpoint at {}",
        ckpt.train_state.best_epoch,
        ckpt.train_state.criterion,
        path.display()
    ));
    Ok(())
}

fn check_resumable(
    ckpt: &Checkpoint,
    cfg: &RunConfig,
    split_seed: u64,
    data: &LoadedData,
) -> CliResult<()> {
    if ckpt.config_hash != cfg.hash() {
        return Err(CliError::Config(
            "checkpoint was written under a different config".into(),
        ));
    }
    if ckpt.split_seed != split_seed {
        return Err(CliError::Config(format!(
            "checkpoint uses split seed {}, not {split_seed}",
            ckpt.split_seed
        )));
    }
    check_digest(ckpt, data)
}

fn check_digest(ckpt: &Checkpoint, data: &LoadedData) -> CliResult<()> {
    if ckpt.dataset_digest != data.digest {
        return Err(CliError::Data(
            "dataset differs from the one the checkpoint was trained on".into(),
        ));
    }
    Ok(())
}

/// Loads a checkpoint together with its dataset split.
fn open_checkpoint(path: &Path, arch: &[Architecture]) -> CliResult<(Checkpoint, PreparedSplit)> {
    let ckpt = Checkpoint::load(path)?;
    ckpt.require(arch)?;
    let (data, split) = load_split(&ckpt.run_config, ckpt.split_seed)?;
    check_digest(&ckpt, &data)?;
    if split.stats != ckpt.norm_stats {
        return Err(CliError::Data(
            "normalization statistics differ from the checkpoint's".into(),
        ));
    }
    Ok((ckpt, split))
}

fn evaluate(args: EvaluateArgs) -> CliResult<()> {
    let (ckpt, split) = open_checkpoint(&args.checkpoint, &Architecture::ALL)?;
    let model = ckpt.model()?;
    let report = evaluate_model(
        &model,
        args.split.pick(&split),
        &ckpt.run_config.class_names,
    )?;
    let name = ModelSpec::from_config(model.config()).display_name();
    let title = format!(
        "{name} on the {} split (split seed {}, config {})",
        args.split.name(),
        ckpt.split_seed,
        ckpt.config_hash
    );
    let text = format!(
        "{}\n{}",
        render_metrics(&title, &report),
        footer(ckpt.run_config.patience, ckpt.run_config.max_epochs)
    );
    let stem = format!("metrics_{}", args.split.name());
    write_text(&args.out.join(format!("{stem}.txt")), &text)?;
    write_json(&args.out.join(format!("{stem}.json")), &report)?;
    print!("{text}");
    Ok(())
}

fn impute(args: ImputeArgs) -> CliResult<()> {
    let (ckpt, split) = open_checkpoint(&args.checkpoint, &[Architecture::VrnnNn])?;
    let model = ckpt.model()?;
    let seeds = args
        .seeds
        .unwrap_or_else(|| ckpt.run_config.split_seeds.clone());
    let rate = args.drop_rate.unwrap_or(ckpt.run_config.drop_rate);
    let runs = seeds
        .iter()
        .map(|&s| imputation_run(&model, &split.test, rate, s))
        .collect::<labdx_core::Result<Vec<_>>>()?;
    let table = ImputationTable::from_runs(&runs, Heuristic::Zero.label())?;
    let text = format!(
        "{}\n{}",
        render_imputation(&table, &ckpt.config_hash),
        footer(ckpt.run_config.patience, ckpt.run_config.max_epochs)
    );
    write_text(&args.out.join("imputation.txt"), &text)?;
    write_json(&args.out.join("imputation.json"), &table)?;
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct FeatureRow<'a> {
    episode_id: &'a str,
    split: &'static str,
    label: usize,
    features: Vec<f64>,
}

fn features(args: FeaturesArgs) -> CliResult<()> {
    let (ckpt, split) = open_checkpoint(
        &args.checkpoint,
        &[Architecture::VaeNn, Architecture::VrnnNn],
    )?;
    let model = ckpt.model()?;
    let mut rows = Vec::new();
    for name in [SplitName::Train, SplitName::Dev, SplitName::Test] {
        let seqs = name.pick(&split);
        for (seq, feat) in seqs.iter().zip(feature_episodes(&model, seqs)?) {
            rows.push(FeatureRow {
                episode_id: &seq.episode_id,
                split: name.name(),
                label: seq.label,
                features: feat.values().to_vec(),
            });
        }
    }
    write_jsonl(&args.out.join("features.jsonl"), &rows)?;

    let cfg = &ckpt.run_config;
    let head = ModelSpec {
        arch: Architecture::Nn,
        disc_weight: 1.0,
        ..cfg.model_spec()
    };
    let (_, report) =
        feature_transfer(&model, &split, &head, &cfg.train_config(), &cfg.class_names)?;
    let source = ModelSpec::from_config(model.config()).display_name();
    let title = format!(
        "NN on frozen {source} features, test split (split seed {}, config {})",
        ckpt.split_seed, ckpt.config_hash
    );
    let text = format!(
        "{}\n{}",
        render_metrics(&title, &report),
        footer(cfg.patience, cfg.max_epochs)
    );
    write_text(&args.out.join("features_metrics.txt"), &text)?;
    write_json(&args.out.join("features_metrics.json"), &report)?;
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct StudyReport {
    config_hash: String,
    diagnosis: DiagnosisTable,
    transfer: Option<DiagnosisTable>,
    imputation: Option<ImputationTable>,
}

fn report(args: ReportArgs) -> CliResult<()> {
    let cfg = args.overrides.resolve()?;
    let data = load_data(&cfg.data)?;
    let study = Study::new(&cfg, &data)?;
    let mut logger = |m: &str| log(m);

    let mut trained = Vec::new();
    for &arch in &cfg.report_models {
        trained.push(study.train(&study.spec(arch, 1.0), &mut logger)?);
    }
    let reference = study.spec(Architecture::VrnnNn, 1.0).display_name();
    let diagnosis = study.diagnosis(&trained.iter().collect::<Vec<_>>(), &reference)?;
    let mut text = diagnosis.render("Diagnosis on the test split (mean ± std over split seeds)");

    let find = |arch: Architecture| trained.iter().find(|t| t.models[0].arch() == arch);
    let transfer = if args.skip_transfer {
        None
    } else {
        let mut sources = Vec::new();
        for arch in [Architecture::VaeNn, Architecture::VrnnNn] {
            if let Some(joint) = find(arch) {
                let unsupervised = study.train(&study.spec(arch, 0.0), &mut logger)?;
                sources.push((joint, unsupervised));
            }
        }
        if let Some((last_joint, _)) = sources.last() {
            let reference = last_joint.name.clone();
            let mut refs = Vec::new();
            for (j, u) in &sources {
                refs.push(*j);
                refs.push(u);
            }
            let table = study.transfer(&refs, &reference)?;
            text.push('\n');
            text.push_str(
                &table.render("NN on frozen features, test split (mean ± std over split seeds)"),
            );
            Some(table)
        } else {
            None
        }
    };
    let imputation = match (args.skip_imputation, find(Architecture::VrnnNn)) {
        (false, Some(vrnn)) => {
            let table = study.imputation(vrnn)?;
            text.push('\n');
            text.push_str(&render_imputation(&table, &cfg.hash()));
            Some(table)
        }
        _ => None,
    };
    text.push('\n');
    text.push_str(&footer(cfg.patience, cfg.max_epochs));
    write_text(&args.out.join("report.txt"), &text)?;
    write_json(
        &args.out.join("report.json"),
        &StudyReport {
            config_hash: cfg.hash(),
            diagnosis,
            transfer,
            imputation,
        },
    )?;
    print!("{text}");
    Ok(())
}
