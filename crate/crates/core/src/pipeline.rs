//! End-to-end experiment stages and the results tables built from them.
//!
//! Run `k` of an experiment with root seed `s` uses the run seed
//! `derive_seed(s, "run", k)`; every stage of that run derives its own stream
//! from the run seed, so runs are independent and individually repeatable.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::ExperimentConfig;
use crate::encoder::Tokenizer;
use crate::error::{Error, Result};
use crate::gan::{train_gan, Gan, GanLog, GanMode};
use crate::metrics::{gamma_sweep, mean_std, merge_reports, write_report, MeanStd, MetricReport};
use crate::model::{
    argmax, build_tokenizer, fit, prepare, ModelConfig, MtcmModel, RecordLatents, Sample, Scorer, Top1,
    TokenizerKind, TrainLog,
};
use crate::rng::{derive_seed, rng_for};
use crate::scene::{generate_corpus, split_dataset, write_records, CandidateFeatures, DatasetSplit, SceneConfig};
use crate::similarity::SimilarityModel;

pub const MANIFEST_VERSION: u32 = 1;

/// Row names of the methods × γ tables.
pub const METHOD_ROWS: [&str; 3] = ["MTCM", "MTCM-GAN w/o cond.", "MTCM-GAN w/ cond."];

pub fn run_seed(root: u64, k: usize) -> u64 {
    derive_seed(root, "run", k as u64)
}

/// A generated and split corpus of one run.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub scene: SceneConfig,
    pub split: DatasetSplit,
    pub run: u64,
}

impl PreparedData {
    /// Train, valid and test samples under `tokenizer`.
    pub fn samples_with(&self, tokenizer: &Tokenizer, model: &ModelConfig) -> [Vec<Sample>; 3] {
        let feature_seed = derive_seed(self.run, "features", 0);
        self.split
            .parts()
            .map(|part| prepare(part, tokenizer, model.head, &self.scene, feature_seed))
    }

    /// Builds the tokenizer named by `model` on the training sentences.
    pub fn samples(&self, model: &ModelConfig) -> Result<(Tokenizer, [Vec<Sample>; 3])> {
        let texts: Vec<String> = self.split.train.iter().map(|r| r.text.clone()).collect();
        let tokenizer = build_tokenizer(model, &texts)?;
        let samples = self.samples_with(&tokenizer, model);
        Ok((tokenizer, samples))
    }

    pub fn input_dim(&self) -> usize {
        CandidateFeatures::joined_dim(&self.scene)
    }

    /// Writes `train.jsonl`, `valid.jsonl`, `test.jsonl` and `labels.csv`.
    pub fn export(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, part) in ["train", "valid", "test"].iter().zip(self.split.parts()) {
            let path = dir.join(format!("{name}.jsonl"));
            write_records(BufWriter::new(File::create(&path)?), part)?;
            written.push(path);
        }
        let path = dir.join("labels.csv");
        std::fs::write(&path, self.split.label_table().to_csv())?;
        written.push(path);
        Ok(written)
    }
}

pub fn prepare_data(cfg: &ExperimentConfig, run: u64) -> Result<PreparedData> {
    let scene = cfg.dataset.scene.clone();
    let records = generate_corpus(&scene, cfg.dataset.corpus_size, derive_seed(run, "corpus", 0))?;
    let split = split_dataset(&records, cfg.dataset.split, derive_seed(run, "split", 0))?;
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::Config(format!(
            "dataset.corpus_size = {} leaves an empty train or test split",
            cfg.dataset.corpus_size
        )));
    }
    Ok(PreparedData { scene, split, run })
}

/// A trained MTCM with the latents of every split.
#[derive(Debug, Clone)]
pub struct MtcmRun {
    pub model: MtcmModel,
    pub log: TrainLog,
    pub samples: [Vec<Sample>; 3],
    pub latents: [Vec<RecordLatents>; 3],
}

pub fn latents_of(model: &MtcmModel, samples: &[Sample]) -> Result<Vec<RecordLatents>> {
    samples.iter().map(|s| model.latents(s)).collect()
}

pub fn train_mtcm(cfg: &ExperimentConfig, data: &PreparedData) -> Result<MtcmRun> {
    let (tokenizer, samples) = data.samples(&cfg.model)?;
    let mut model = MtcmModel::new(
        cfg.model.clone(),
        tokenizer,
        data.input_dim(),
        &mut rng_for(data.run, "mtcm-init", 0),
    )?;
    let [train, valid, _] = &samples;
    let log = fit(
        &mut model,
        train,
        valid,
        &cfg.optimizer.train_config(),
        &mut rng_for(data.run, "mtcm-train", 0),
    )?;
    mtcm_run(model, log, samples)
}

/// Wraps an already trained MTCM.
pub fn mtcm_run(model: MtcmModel, log: TrainLog, samples: [Vec<Sample>; 3]) -> Result<MtcmRun> {
    let latents = [
        latents_of(&model, &samples[0])?,
        latents_of(&model, &samples[1])?,
        latents_of(&model, &samples[2])?,
    ];
    Ok(MtcmRun {
        model,
        log,
        samples,
        latents,
    })
}

/// Trains a GAN on the frozen MTCM's training latents.
pub fn train_gan_on(cfg: &ExperimentConfig, mtcm: &MtcmRun, mode: GanMode, run: u64) -> Result<(Gan, GanLog)> {
    let config = crate::gan::GanConfig {
        mode,
        ..cfg.gan.clone()
    };
    let stage = match mode {
        GanMode::Conditioned => "gan-conditioned",
        GanMode::Unconditioned => "gan-unconditioned",
    };
    train_gan(
        config,
        Some(&mtcm.model),
        &mtcm.latents[0],
        &mtcm.latents[1],
        derive_seed(run, stage, 0),
    )
}

/// Fraction of samples whose predicted target is the ground truth.
pub fn top1_accuracy(model: &dyn Top1, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::UndefinedMetric("top-1 accuracy of no samples".into()));
    }
    let mut hits = 0usize;
    for s in samples {
        hits += (model.top1(s)? == s.gt) as usize;
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Top-1 accuracy of a pair scorer: the candidate with the highest score wins.
pub fn latent_top1(scorer: &dyn Scorer, latents: &[RecordLatents]) -> Result<f64> {
    if latents.is_empty() {
        return Err(Error::UndefinedMetric("top-1 accuracy of no records".into()));
    }
    let mut hits = 0usize;
    for l in latents {
        let scores = l.o_v.iter().map(|v| scorer.score(v, &l.o_i)).collect::<Result<Vec<_>>>()?;
        hits += (argmax(&scores) == l.gt) as usize;
    }
    Ok(hits as f64 / latents.len() as f64)
}

/// γ sweep and top-1 of one scorer on test latents of one run.
pub fn method_report(
    method: &str,
    scorer: &dyn Scorer,
    test: &[RecordLatents],
    gammas: &[usize],
    cfg: &ExperimentConfig,
    run: u64,
) -> Result<MetricReport> {
    let rows = gamma_sweep(scorer, test, gammas, cfg.eval.trials, derive_seed(run, "eval", 0))?;
    let top1 = latent_top1(scorer, test)?;
    Ok(MetricReport {
        method: method.into(),
        gammas: rows,
        top1: Some(mean_std(&[top1])?),
        top1_trials: vec![top1],
        trials: cfg.eval.trials,
        seeds: vec![run],
        config_hash: cfg.hash(),
    })
}

/// Per-run results of the three methods, with the GAN logs behind them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodsTrial {
    pub run: u64,
    pub mtcm_best_epoch: usize,
    pub reports: Vec<MetricReport>,
    pub gan_logs: Vec<GanLog>,
}

impl MethodsTrial {
    /// Region-wise accuracy of row `method` at `gamma`.
    pub fn region_wise(&self, method: &str, gamma: usize) -> Option<f64> {
        self.reports
            .iter()
            .find(|r| r.method == method)
            .and_then(|r| r.gamma(gamma))
            .map(|g| g.region_wise.mean)
    }
}

/// Trains MTCM and both GAN variants for run `k` and evaluates them on test.
pub fn methods_trial(cfg: &ExperimentConfig, k: usize, gammas: &[usize]) -> Result<MethodsTrial> {
    let run = run_seed(cfg.seed, k);
    let data = prepare_data(cfg, run)?;
    let mtcm = train_mtcm(cfg, &data)?;
    let test = &mtcm.latents[2];
    let mut reports = vec![method_report(METHOD_ROWS[0], &mtcm.model, test, gammas, cfg, run)?];
    let mut gan_logs = Vec::new();
    for (row, mode) in METHOD_ROWS[1..].iter().zip([GanMode::Unconditioned, GanMode::Conditioned]) {
        let (gan, log) = train_gan_on(cfg, &mtcm, mode, run)?;
        reports.push(method_report(row, &gan, test, gammas, cfg, run)?);
        gan_logs.push(log);
    }
    Ok(MethodsTrial {
        run,
        mtcm_best_epoch: mtcm.log.best_epoch,
        reports,
        gan_logs,
    })
}

/// Merges the per-run reports row by row.
pub fn merge_methods(trials: &[MethodsTrial]) -> Result<Vec<MetricReport>> {
    METHOD_ROWS
        .iter()
        .map(|m| {
            let parts: Vec<MetricReport> = trials
                .iter()
                .flat_map(|t| t.reports.iter().filter(|r| r.method == *m).cloned())
                .collect();
            merge_reports(m, &parts)
        })
        .collect()
}

/// Rungs of the ablation ladder, scored by similarity-based top-1 matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    /// Word-level tokens, hinge loss only.
    Classic,
    ClassicSubword,
    ClassicSource,
    /// Sub-word tokens and the source head.
    Full,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        AblationVariant::Classic,
        AblationVariant::ClassicSubword,
        AblationVariant::ClassicSource,
        AblationVariant::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Classic => "Classic",
            AblationVariant::ClassicSubword => "Classic + Subword",
            AblationVariant::ClassicSource => "Classic + Source",
            AblationVariant::Full => "MTCM (Classic + Subword + Source)",
        }
    }

    pub fn model_config(self, base: &ModelConfig) -> ModelConfig {
        let (tokenizer, source_head) = match self {
            AblationVariant::Classic => (TokenizerKind::Word, false),
            AblationVariant::ClassicSubword => (TokenizerKind::Subword, false),
            AblationVariant::ClassicSource => (TokenizerKind::Word, true),
            AblationVariant::Full => (TokenizerKind::Subword, true),
        };
        ModelConfig {
            tokenizer,
            source_head,
            ..base.clone()
        }
    }
}

/// Trains one similarity model of `variant` on prepared data.
pub fn train_similarity(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    variant: AblationVariant,
) -> Result<(SimilarityModel, TrainLog, [Vec<Sample>; 3])> {
    let model_cfg = variant.model_config(&cfg.model);
    let (tokenizer, samples) = data.samples(&model_cfg)?;
    let mut model = SimilarityModel::new(
        model_cfg,
        cfg.similarity.clone(),
        tokenizer,
        data.input_dim(),
        &mut rng_for(data.run, "similarity-init", 0),
    )?;
    let [train, valid, _] = &samples;
    let log = fit(
        &mut model,
        train,
        valid,
        &cfg.optimizer.train_config(),
        &mut rng_for(data.run, "similarity-train", 0),
    )?;
    Ok((model, log, samples))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub method: String,
    pub top1: MeanStd,
    pub trials: Vec<f64>,
    pub runs: Vec<u64>,
}

/// Test top-1 of every variant in `variants` for run `k`, sharing one corpus.
pub fn ablation_trial(cfg: &ExperimentConfig, k: usize, variants: &[AblationVariant]) -> Result<Vec<f64>> {
    let data = prepare_data(cfg, run_seed(cfg.seed, k))?;
    variants
        .iter()
        .map(|&v| {
            let (model, _, samples) = train_similarity(cfg, &data, v)?;
            top1_accuracy(&model, &samples[2])
        })
        .collect()
}

pub fn ablate(cfg: &ExperimentConfig) -> Result<Vec<AblationRow>> {
    let per_run = (0..cfg.eval.seeds)
        .map(|k| ablation_trial(cfg, k, &AblationVariant::ALL))
        .collect::<Result<Vec<_>>>()?;
    let runs: Vec<u64> = (0..cfg.eval.seeds).map(|k| run_seed(cfg.seed, k)).collect();
    AblationVariant::ALL
        .iter()
        .enumerate()
        .map(|(i, &variant)| {
            let trials: Vec<f64> = per_run.iter().map(|r| r[i]).collect();
            Ok(AblationRow {
                variant,
                method: variant.name().into(),
                top1: mean_std(&trials)?,
                trials,
                runs: runs.clone(),
            })
        })
        .collect()
}

pub fn write_ablation(rows: &[AblationRow], dir: &Path, stem: &str, config_hash: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["method", "top1_mean", "top1_std", "trials", "config_hash"])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            format!("{:.6}", r.top1.mean),
            format!("{:.6}", r.top1.std),
            r.trials.len().to_string(),
            config_hash.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(path)
}

/// The wrs-mode configuration: relative-position features on and γ limited
/// to `eval.wrs_gammas`.
pub fn wrs_config(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.dataset.scene.wrs_mode = true;
    c.eval.gammas = c.eval.wrs_gammas.clone();
    c
}

/// MTCM γ sweep over every run, merged.
pub fn sweep(cfg: &ExperimentConfig) -> Result<MetricReport> {
    let parts = (0..cfg.eval.seeds)
        .map(|k| {
            let run = run_seed(cfg.seed, k);
            let data = prepare_data(cfg, run)?;
            let mtcm = train_mtcm(cfg, &data)?;
            method_report(METHOD_ROWS[0], &mtcm.model, &mtcm.latents[2], &cfg.eval.gammas, cfg, run)
        })
        .collect::<Result<Vec<_>>>()?;
    merge_reports(METHOD_ROWS[0], &parts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    /// Documented defaults filled in for keys the config left out.
    pub defaults_applied: Vec<String>,
    pub config: ExperimentConfig,
    /// Artifacts relative to the output directory.
    pub artifacts: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &ExperimentConfig, defaults_applied: &[String]) -> Self {
        Self {
            manifest_version: MANIFEST_VERSION,
            tool: env!("CARGO_PKG_NAME").into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            defaults_applied: defaults_applied.to_vec(),
            config: cfg.clone(),
            artifacts: Vec::new(),
        }
    }

    pub fn add(&mut self, out: &Path, paths: impl IntoIterator<Item = PathBuf>) {
        for p in paths {
            let rel = p.strip_prefix(out).unwrap_or(&p);
            self.artifacts.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }

    /// Writes `manifest.json` and `config.toml` into `out`.
    pub fn write(&self, out: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("config.toml"), self.config.to_toml_string()?)?;
        let path = out.join("manifest.json");
        write_json(&path, self)?;
        Ok(path)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// One complete run: dataset export, MTCM, conditioned GAN, classic baseline,
/// γ-sweep reports and a manifest.
pub fn run_pipeline(cfg: &ExperimentConfig, defaults_applied: &[String], out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let mut manifest = Manifest::new("run", cfg, defaults_applied);
    let hash = cfg.hash();
    let run = run_seed(cfg.seed, 0);
    let data = prepare_data(cfg, run)?;
    manifest.add(out, data.export(&out.join("dataset"))?);

    let mtcm = train_mtcm(cfg, &data)?;
    let ck = out.join("checkpoints");
    std::fs::create_dir_all(&ck)?;
    checkpoint::save(&ck.join("mtcm.json"), &mtcm.model, &hash)?;
    write_json(&out.join("logs/mtcm_train.json"), &mtcm.log)?;

    let (gan, gan_log) = train_gan_on(cfg, &mtcm, cfg.gan.mode, run)?;
    checkpoint::save(&ck.join("gan.json"), &gan, &hash)?;
    write_json(&out.join("logs/gan_train.json"), &gan_log)?;

    let (baseline, base_log, base_samples) = train_similarity(cfg, &data, AblationVariant::Classic)?;
    checkpoint::save(&ck.join("baseline.json"), &baseline, &hash)?;
    write_json(&out.join("logs/baseline_train.json"), &base_log)?;
    manifest.add(
        out,
        [
            ck.join("mtcm.json"),
            ck.join("gan.json"),
            ck.join("baseline.json"),
            out.join("logs/mtcm_train.json"),
            out.join("logs/gan_train.json"),
            out.join("logs/baseline_train.json"),
        ],
    );

    let test = &mtcm.latents[2];
    let gan_row = match cfg.gan.mode {
        GanMode::Conditioned => METHOD_ROWS[2],
        GanMode::Unconditioned => METHOD_ROWS[1],
    };
    let mut reports = vec![
        method_report(METHOD_ROWS[0], &mtcm.model, test, &cfg.eval.gammas, cfg, run)?,
        method_report(gan_row, &gan, test, &cfg.eval.gammas, cfg, run)?,
    ];
    reports[0].top1_trials = vec![top1_accuracy(&mtcm.model, &mtcm.samples[2])?];
    reports[0].top1 = Some(mean_std(&reports[0].top1_trials)?);
    let metrics = out.join("metrics");
    manifest.add(out, write_report(&reports, &metrics, "report")?);
    write_json(&metrics.join("report.json"), &reports)?;
    let baseline_top1 = top1_accuracy(&baseline, &base_samples[2])?;
    write_json(&metrics.join("baseline_top1.json"), &baseline_top1)?;
    manifest.add(out, [metrics.join("report.json"), metrics.join("baseline_top1.json")]);
    manifest.write(out)?;
    Ok(manifest)
}

/// Paths of the three results tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableFiles {
    pub methods: Vec<PathBuf>,
    pub ablation: PathBuf,
    pub wrs: Vec<PathBuf>,
}

/// Methods × γ, the ablation ladder and the wrs-mode comparison, each over
/// `eval.seeds` runs, with per-run logs under `trials/`.
pub fn reproduce_tables(cfg: &ExperimentConfig, defaults_applied: &[String], out: &Path) -> Result<TableFiles> {
    cfg.validate()?;
    let mut manifest = Manifest::new("reproduce-tables", cfg, defaults_applied);
    let hash = cfg.hash();

    let methods_trials = (0..cfg.eval.seeds)
        .map(|k| methods_trial(cfg, k, &cfg.eval.gammas))
        .collect::<Result<Vec<_>>>()?;
    write_json(&out.join("trials/methods.json"), &methods_trials)?;
    let methods = write_report(&merge_methods(&methods_trials)?, out, "methods")?;

    let rows = ablate(cfg)?;
    write_json(&out.join("trials/ablation.json"), &rows)?;
    let ablation = write_ablation(&rows, out, "ablation", &hash)?;

    let wrs_cfg = wrs_config(cfg);
    let wrs_trials = (0..cfg.eval.seeds)
        .map(|k| methods_trial(&wrs_cfg, k, &wrs_cfg.eval.gammas))
        .collect::<Result<Vec<_>>>()?;
    write_json(&out.join("trials/wrs.json"), &wrs_trials)?;
    let wrs = write_report(&merge_methods(&wrs_trials)?, out, "wrs")?;

    manifest.add(out, methods.iter().cloned());
    manifest.add(out, [ablation.clone()]);
    manifest.add(out, wrs.iter().cloned());
    manifest.add(
        out,
        ["methods", "ablation", "wrs"].map(|s| out.join(format!("trials/{s}.json"))),
    );
    manifest.write(out)?;
    Ok(TableFiles { methods, ablation, wrs })
}
