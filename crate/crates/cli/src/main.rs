use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use mtcm_core::checkpoint::{self, peek_kind, ModelKind};
use mtcm_core::config::ExperimentConfig;
use mtcm_core::error::Error;
use mtcm_core::gan::{Gan, GanMode};
use mtcm_core::metrics::{write_report, MeanStd};
use mtcm_core::model::{MtcmModel, TrainLog};
use mtcm_core::pipeline::{
    ablate, method_report, mtcm_run, prepare_data, reproduce_tables, run_pipeline, run_seed, sweep, top1_accuracy,
    train_gan_on, train_mtcm, train_similarity, write_ablation, write_json, AblationVariant, Manifest, METHOD_ROWS,
};
use mtcm_core::similarity::SimilarityModel;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_METRIC_UNDEFINED: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "mtcm", version, about = "Fetching-instruction target classification experiments")]
struct Cli {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration's root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Conditioned,
    Unconditioned,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Variant {
    Classic,
    ClassicSubword,
    ClassicSource,
    Full,
}

impl From<Variant> for AblationVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Classic => AblationVariant::Classic,
            Variant::ClassicSubword => AblationVariant::ClassicSubword,
            Variant::ClassicSource => AblationVariant::ClassicSource,
            Variant::Full => AblationVariant::Full,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate and split a synthetic corpus.
    Generate,
    /// Train the MTCM.
    TrainMtcm,
    /// Train a similarity (hinge-loss) baseline.
    TrainBaseline {
        #[arg(long, value_enum, default_value = "classic")]
        variant: Variant,
    },
    /// Train a latent GAN on a frozen MTCM checkpoint.
    TrainGan {
        #[arg(long)]
        mtcm: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        gamma: Option<usize>,
    },
    /// Evaluate a checkpoint on the test split.
    Evaluate {
        /// MTCM, GAN or baseline checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
        /// MTCM checkpoint providing latents, required for a GAN checkpoint.
        #[arg(long)]
        mtcm: Option<PathBuf>,
    },
    /// Ablation ladder of the similarity models.
    Ablate,
    /// MTCM γ sweep over all seeds.
    Sweep,
    /// Methods × γ, ablation and wrs-mode tables.
    ReproduceTables,
    /// Every stage of one run.
    Run,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::TrainMtcm => "train-mtcm",
            Command::TrainBaseline { .. } => "train-baseline",
            Command::TrainGan { .. } => "train-gan",
            Command::Evaluate { .. } => "evaluate",
            Command::Ablate => "ablate",
            Command::Sweep => "sweep",
            Command::ReproduceTables => "reproduce-tables",
            Command::Run => "run",
        }
    }
}

fn load_config(cli: &Cli) -> Result<(ExperimentConfig, Vec<String>)> {
    let (mut cfg, filled) = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_toml_str(&text)?
        }
        None => (ExperimentConfig::default(), Vec::new()),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok((cfg, filled))
}

fn print_top1(label: &str, value: f64) {
    println!("{label}: top-1 {:.2}%", 100.0 * value);
}

fn run(cli: Cli) -> Result<()> {
    let (cfg, filled) = load_config(&cli)?;
    for f in &filled {
        info!("default applied: {f}");
    }
    let out = cli.out.as_path();
    let hash = cfg.hash();
    let mut manifest = Manifest::new(cli.command.name(), &cfg, &filled);
    let run = run_seed(cfg.seed, 0);
    match &cli.command {
        Command::Generate => {
            let data = prepare_data(&cfg, run)?;
            manifest.add(out, data.export(&out.join("dataset"))?);
            let [tr, va, te] = data.split.parts().map(|p| p.len());
            println!("records: train {tr}, valid {va}, test {te}");
        }
        Command::TrainMtcm => {
            let data = prepare_data(&cfg, run)?;
            let mtcm = train_mtcm(&cfg, &data)?;
            let path = out.join("checkpoints/mtcm.json");
            std::fs::create_dir_all(out.join("checkpoints"))?;
            checkpoint::save(&path, &mtcm.model, &hash)?;
            write_json(&out.join("logs/mtcm_train.json"), &mtcm.log)?;
            manifest.add(out, [path, out.join("logs/mtcm_train.json")]);
            print_top1("MTCM", top1_accuracy(&mtcm.model, &mtcm.samples[2])?);
        }
        Command::TrainBaseline { variant } => {
            let data = prepare_data(&cfg, run)?;
            let variant = AblationVariant::from(*variant);
            let (model, log, samples) = train_similarity(&cfg, &data, variant)?;
            let path = out.join("checkpoints/baseline.json");
            std::fs::create_dir_all(out.join("checkpoints"))?;
            checkpoint::save(&path, &model, &hash)?;
            write_json(&out.join("logs/baseline_train.json"), &log)?;
            manifest.add(out, [path, out.join("logs/baseline_train.json")]);
            print_top1(variant.name(), top1_accuracy(&model, &samples[2])?);
        }
        Command::TrainGan { mtcm, mode, gamma } => {
            let mut cfg = cfg.clone();
            if let Some(m) = mode {
                cfg.gan.mode = match m {
                    Mode::Conditioned => GanMode::Conditioned,
                    Mode::Unconditioned => GanMode::Unconditioned,
                };
            }
            if let Some(g) = gamma {
                cfg.gan.gamma = *g;
            }
            let frozen = load_mtcm(&cfg, mtcm, run)?;
            let (gan, log) = train_gan_on(&cfg, &frozen, cfg.gan.mode, run)?;
            let path = out.join("checkpoints/gan.json");
            std::fs::create_dir_all(out.join("checkpoints"))?;
            checkpoint::save(&path, &gan, &cfg.hash())?;
            write_json(&out.join("logs/gan_train.json"), &log)?;
            manifest = Manifest::new("train-gan", &cfg, &filled);
            manifest.add(out, [path, out.join("logs/gan_train.json")]);
            println!(
                "GAN ({:?}): best epoch {}, collapsed {}, latent Fréchet {}",
                cfg.gan.mode,
                log.best_epoch,
                log.collapsed,
                log.frechet.map(|f| format!("{f:.3}")).unwrap_or_else(|| "n/a".into())
            );
        }
        Command::Evaluate { checkpoint: ck, mtcm } => match peek_kind(ck)? {
            ModelKind::Similarity => {
                let model: SimilarityModel = checkpoint::load(ck)?.model;
                let data = prepare_data(&cfg, run)?;
                let [_, _, test] = data.samples_with(&model.tokenizer, &model.model);
                let top1 = top1_accuracy(&model, &test)?;
                write_json(&out.join("metrics/baseline_top1.json"), &top1)?;
                manifest.add(out, [out.join("metrics/baseline_top1.json")]);
                print_top1("baseline", top1);
            }
            kind => {
                let mtcm_path = match kind {
                    ModelKind::Gan => mtcm.as_deref().context("evaluating a GAN checkpoint needs --mtcm")?,
                    _ => ck.as_path(),
                };
                let frozen = load_mtcm(&cfg, mtcm_path, run)?;
                let test = &frozen.latents[2];
                let mut report = if kind == ModelKind::Gan {
                    let gan: Gan = checkpoint::load(ck)?.model;
                    let row = match gan.config.mode {
                        GanMode::Conditioned => METHOD_ROWS[2],
                        GanMode::Unconditioned => METHOD_ROWS[1],
                    };
                    method_report(row, &gan, test, &cfg.eval.gammas, &cfg, run)?
                } else {
                    method_report(METHOD_ROWS[0], &frozen.model, test, &cfg.eval.gammas, &cfg, run)?
                };
                if kind == ModelKind::Mtcm {
                    let top1 = top1_accuracy(&frozen.model, &frozen.samples[2])?;
                    report.top1_trials = vec![top1];
                    report.top1 = Some(MeanStd { mean: top1, std: 0.0, n: 1 });
                }
                manifest.add(out, write_report(std::slice::from_ref(&report), &out.join("metrics"), "evaluate")?);
                for row in &report.gammas {
                    println!("{} γ={}: E_r {}  F1 {}", report.method, row.gamma, row.region_wise, row.f1);
                }
            }
        },
        Command::Ablate => {
            let rows = ablate(&cfg)?;
            write_json(&out.join("trials/ablation.json"), &rows)?;
            manifest.add(out, [write_ablation(&rows, out, "ablation", &hash)?, out.join("trials/ablation.json")]);
            for r in &rows {
                println!("{:<36} {}", r.method, r.top1);
            }
        }
        Command::Sweep => {
            let report = sweep(&cfg)?;
            write_json(&out.join("trials/sweep.json"), &report)?;
            manifest.add(out, write_report(std::slice::from_ref(&report), out, "sweep")?);
            manifest.add(out, [out.join("trials/sweep.json")]);
            for row in &report.gammas {
                println!("γ={}: E_r {}  F1 {}", row.gamma, row.region_wise, row.f1);
            }
        }
        Command::ReproduceTables => {
            let files = reproduce_tables(&cfg, &filled, out)?;
            println!("methods table: {}", files.methods[0].display());
            println!("ablation table: {}", files.ablation.display());
            println!("wrs table: {}", files.wrs[0].display());
            return Ok(());
        }
        Command::Run => {
            let m = run_pipeline(&cfg, &filled, out)?;
            println!("{} artifacts in {}", m.artifacts.len(), out.display());
            return Ok(());
        }
    }
    manifest.write(out)?;
    Ok(())
}

/// Loads an MTCM checkpoint and computes latents on the configured corpus.
fn load_mtcm(cfg: &ExperimentConfig, path: &Path, run: u64) -> Result<mtcm_core::pipeline::MtcmRun> {
    let ck = checkpoint::load::<MtcmModel>(path)?;
    if ck.config_hash != cfg.hash() {
        log::warn!("{} was trained under config {}, running {}", path.display(), ck.config_hash, cfg.hash());
    }
    let data = prepare_data(cfg, run)?;
    let samples = data.samples_with(&ck.model.tokenizer, &ck.model.config);
    if samples[0].first().is_some_and(|s| s.candidates[0].len() != ck.model.input_dim()) {
        bail!("{} expects candidate features of width {}", path.display(), ck.model.input_dim());
    }
    Ok(mtcm_run(ck.model, TrainLog::default(), samples)?)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Validation(_) | Error::Config(_)) => EXIT_VALIDATION,
        Some(Error::UndefinedMetric(_)) => EXIT_METRIC_UNDEFINED,
        _ => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(Error::Validation(problems)) = e.downcast_ref::<Error>() {
                eprintln!("invalid configuration:");
                for p in problems {
                    eprintln!("  - {p}");
                }
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
