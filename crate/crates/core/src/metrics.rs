//! Region-wise accuracy, F1, AUC, γ-sweeps and their report files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_pairs, RecordLatents, Scorer};
use crate::rng::rng_for;

/// Decision threshold on the positive-class probability.
pub const THRESHOLD: f64 = 0.5;

/// `E_r`: fraction of pairs whose predicted label equals the true label.
pub fn region_wise_accuracy(predictions: &[bool], labels: &[bool]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::dim("region_wise_accuracy", &[predictions.len()], &[labels.len()]));
    }
    if predictions.is_empty() {
        return Err(Error::UndefinedMetric("region-wise accuracy over an empty pair set".into()));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / predictions.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    /// Counts at `score >= threshold ⇒ positive`.
    pub fn from_scores(scores: &[f64], labels: &[bool], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&s, &l) in scores.iter().zip(labels) {
            match (s >= threshold, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total().max(1) as f64
    }

    /// `2PR / (P + R)`; 0 when `P + R = 0`.
    pub fn f1(&self) -> f64 {
        let p = if self.tp + self.fp == 0 { 0.0 } else { self.tp as f64 / (self.tp + self.fp) as f64 };
        let r = if self.tp + self.fn_ == 0 { 0.0 } else { self.tp as f64 / (self.tp + self.fn_) as f64 };
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from mid-ranks in `O(n log n)`.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::dim("auc", &[scores.len()], &[labels.len()]));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain {
            op: "auc",
            detail: "NaN score".into(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both positive and negative labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryScores {
    pub f1: f64,
    pub auc: f64,
    pub confusion: Confusion,
}

/// F1 at [`THRESHOLD`] and AUC, with the confusion counts behind the F1.
pub fn f1_and_auc(scores: &[f64], labels: &[bool]) -> Result<BinaryScores> {
    let auc = auc(scores, labels)?;
    let confusion = Confusion::from_scores(scores, labels, THRESHOLD);
    Ok(BinaryScores {
        f1: confusion.f1(),
        auc,
        confusion,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (`n − 1` denominator); 0 for a single value.
    pub std: f64,
    pub n: usize,
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.1} ± {:.1}", 100.0 * self.mean, 100.0 * self.std)
    }
}

pub fn mean_std(values: &[f64]) -> Result<MeanStd> {
    let n = values.len();
    if n == 0 {
        return Err(Error::UndefinedMetric("mean over zero trials".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Ok(MeanStd { mean, std, n })
}

/// Metrics of one scorer on one freshly sampled pair set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEvaluation {
    pub gamma: usize,
    pub pairs: usize,
    pub skipped: usize,
    pub region_wise: f64,
    pub f1: f64,
    /// Absent when the pair set holds a single class (γ = 0).
    pub auc: Option<f64>,
    pub confusion: Confusion,
}

/// Builds `R(i)` at ratio `gamma` and scores every pair.
pub fn evaluate_pairs(
    scorer: &dyn Scorer,
    latents: &[RecordLatents],
    gamma: usize,
    rng: &mut impl rand::Rng,
) -> Result<PairEvaluation> {
    let set = build_pairs(latents, gamma, rng);
    let scores: Vec<f64> = set
        .pairs
        .iter()
        .map(|p| scorer.score(p.o_v(latents), p.o_i(latents)))
        .collect::<Result<_>>()?;
    let labels: Vec<bool> = set.pairs.iter().map(|p| p.positive).collect();
    let predicted: Vec<bool> = scores.iter().map(|&s| s >= THRESHOLD).collect();
    let region_wise = region_wise_accuracy(&predicted, &labels)?;
    let confusion = Confusion::from_scores(&scores, &labels, THRESHOLD);
    let auc = match auc(&scores, &labels) {
        Ok(a) => Some(a),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(PairEvaluation {
        gamma,
        pairs: set.pairs.len(),
        skipped: set.skipped,
        region_wise,
        f1: confusion.f1(),
        auc,
        confusion,
    })
}

/// Per-γ summary over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaRow {
    pub gamma: usize,
    pub region_wise: MeanStd,
    pub f1: MeanStd,
    pub auc: Option<MeanStd>,
    /// Per-trial values the summary was computed from.
    pub trials: Vec<PairEvaluation>,
}

impl GammaRow {
    pub fn from_trials(gamma: usize, trials: Vec<PairEvaluation>) -> Result<Self> {
        let er: Vec<f64> = trials.iter().map(|t| t.region_wise).collect();
        let f1: Vec<f64> = trials.iter().map(|t| t.f1).collect();
        let auc: Option<Vec<f64>> = trials.iter().map(|t| t.auc).collect();
        Ok(Self {
            gamma,
            region_wise: mean_std(&er)?,
            f1: mean_std(&f1)?,
            auc: auc.map(|a| mean_std(&a)).transpose()?,
            trials,
        })
    }
}

/// Evaluates `scorer` at every γ with `trials` independent negative draws.
/// Trial `t` at ratio `γ` samples from the stream `(seed, "sweep-γ", t)`.
pub fn gamma_sweep(
    scorer: &dyn Scorer,
    latents: &[RecordLatents],
    gammas: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<GammaRow>> {
    if gammas.is_empty() || trials == 0 {
        return Err(Error::Config("gamma sweep needs at least one gamma and one trial".into()));
    }
    gammas
        .iter()
        .map(|&gamma| {
            let runs = (0..trials)
                .map(|t| evaluate_pairs(scorer, latents, gamma, &mut rng_for(seed, &format!("sweep-{gamma}"), t as u64)))
                .collect::<Result<Vec<_>>>()?;
            GammaRow::from_trials(gamma, runs)
        })
        .collect()
}

/// Results of one method across trials, in the layout of a results table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub gammas: Vec<GammaRow>,
    pub top1: Option<MeanStd>,
    /// Top-1 accuracy of every trial.
    pub top1_trials: Vec<f64>,
    pub trials: usize,
    pub seeds: Vec<u64>,
    pub config_hash: String,
}

impl MetricReport {
    pub fn gamma(&self, gamma: usize) -> Option<&GammaRow> {
        self.gammas.iter().find(|r| r.gamma == gamma)
    }
}

/// Merges per-seed reports of the same method: every statistic is recomputed
/// over the concatenated per-trial values.
pub fn merge_reports(method: &str, parts: &[MetricReport]) -> Result<MetricReport> {
    let first = parts.first().ok_or_else(|| Error::UndefinedMetric("no reports to merge".into()))?;
    let gammas = first
        .gammas
        .iter()
        .map(|row| {
            let trials: Vec<PairEvaluation> = parts
                .iter()
                .flat_map(|p| p.gamma(row.gamma).map(|r| r.trials.clone()).unwrap_or_default())
                .collect();
            GammaRow::from_trials(row.gamma, trials)
        })
        .collect::<Result<_>>()?;
    let top1_trials: Vec<f64> = parts.iter().flat_map(|p| p.top1_trials.clone()).collect();
    Ok(MetricReport {
        method: method.to_string(),
        gammas,
        top1: if top1_trials.is_empty() { None } else { Some(mean_std(&top1_trials)?) },
        top1_trials,
        trials: parts.iter().map(|p| p.trials).sum(),
        seeds: parts.iter().flat_map(|p| p.seeds.clone()).collect(),
        config_hash: first.config_hash.clone(),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Writes `<stem>.csv` (one row per method and γ) and the plot series
/// `<stem>_region_wise.csv`, `<stem>_f1.csv`, `<stem>_auc.csv` (γ against each
/// method). Returns the paths written.
pub fn write_report(reports: &[MetricReport], dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(Error::UndefinedMetric("no reports to write".into()));
    }
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let table = dir.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_path(&table)?;
    w.write_record([
        "method", "gamma", "region_wise_mean", "region_wise_std", "f1_mean", "f1_std", "auc_mean", "auc_std",
        "top1_mean", "top1_std", "trials", "config_hash",
    ])?;
    for r in reports {
        for row in &r.gammas {
            w.write_record([
                r.method.clone(),
                row.gamma.to_string(),
                format!("{:.6}", row.region_wise.mean),
                format!("{:.6}", row.region_wise.std),
                format!("{:.6}", row.f1.mean),
                format!("{:.6}", row.f1.std),
                opt(row.auc.map(|a| a.mean)),
                opt(row.auc.map(|a| a.std)),
                opt(r.top1.map(|t| t.mean)),
                opt(r.top1.map(|t| t.std)),
                r.trials.to_string(),
                r.config_hash.clone(),
            ])?;
        }
    }
    w.flush()?;
    written.push(table);

    type Pick = fn(&GammaRow) -> Option<f64>;
    let series: [(&str, Pick); 3] = [
        ("region_wise", |r| Some(r.region_wise.mean)),
        ("f1", |r| Some(r.f1.mean)),
        ("auc", |r| r.auc.map(|a| a.mean)),
    ];
    let mut gammas: Vec<usize> = reports.iter().flat_map(|r| r.gammas.iter().map(|g| g.gamma)).collect();
    gammas.sort_unstable();
    gammas.dedup();
    for (name, pick) in series {
        let path = dir.join(format!("{stem}_{name}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["gamma".to_string()];
        header.extend(reports.iter().map(|r| r.method.clone()));
        header.push("config_hash".into());
        w.write_record(&header)?;
        for &gamma in &gammas {
            let mut rec = vec![gamma.to_string()];
            rec.extend(reports.iter().map(|r| opt(r.gamma(gamma).and_then(pick))));
            rec.push(reports[0].config_hash.clone());
            w.write_record(&rec)?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] && !labels[j] {
                    den += 1.0;
                    num += if si > sj {
                        1.0
                    } else if si == sj {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn region_wise_accuracy_counts() {
        assert_eq!(region_wise_accuracy(&[true, false], &[true, false]).unwrap(), 1.0);
        assert_eq!(region_wise_accuracy(&[true, true, false, false], &[true, false, false, false]).unwrap(), 0.75);
        assert!(matches!(region_wise_accuracy(&[], &[]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn separated_and_tied_scores() {
        let labels = [true, true, false, false];
        let r = f1_and_auc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap();
        assert_eq!((r.f1, r.auc), (1.0, 1.0));
        assert_eq!(auc(&[0.3; 4], &labels).unwrap(), 0.5);
        assert!(matches!(auc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedMetric(_))));
        assert_eq!(Confusion::from_scores(&[0.1, 0.2], &[true, true], 0.5).f1(), 0.0);
    }

    #[test]
    fn auc_matches_pairwise_count_on_twenty_samples() {
        let mut rng = rng_from_seed(20);
        let scores: Vec<f64> = (0..20).map(|_| (rng.random_range(0..8) as f64) / 8.0).collect();
        let labels: Vec<bool> = (0..20).map(|i| i % 3 == 0).collect();
        assert!((auc(&scores, &labels).unwrap() - brute_auc(&scores, &labels)).abs() < 1e-12);
    }

    #[test]
    fn mean_and_sample_stdev() {
        let m = mean_std(&[0.9, 0.92, 0.94]).unwrap();
        assert!((m.mean - 0.92).abs() < 1e-12);
        assert!((m.std - 0.02).abs() < 1e-12);
        assert_eq!(mean_std(&[0.5]).unwrap().std, 0.0);
        assert!(mean_std(&[]).is_err());
    }

    struct Oracle;

    impl Scorer for Oracle {
        fn score(&self, o_v: &[f64], o_i: &[f64]) -> Result<f64> {
            Ok((o_v == o_i) as u8 as f64)
        }
    }

    fn latents(n_records: usize, seed: u64) -> Vec<RecordLatents> {
        let mut rng = rng_from_seed(seed);
        (0..n_records)
            .map(|r| {
                let n = rng.random_range(2..6);
                let gt = rng.random_range(0..n);
                RecordLatents {
                    scene_id: r as u64,
                    gt,
                    o_i: vec![gt as f64],
                    o_v: (0..n).map(|k| vec![k as f64]).collect(),
                }
            })
            .collect()
    }

    #[test]
    fn perfect_scorer_sweep() {
        let lat = latents(50, 1);
        let rows = gamma_sweep(&Oracle, &lat, &[0, 1, 4], 3, 7).unwrap();
        for row in &rows {
            assert_eq!(row.region_wise.mean, 1.0);
            assert_eq!(row.trials.len(), 3);
        }
        assert!(rows[0].auc.is_none());
        assert_eq!(rows[1].auc.unwrap().mean, 1.0);
        assert_eq!(rows[2].trials[0].pairs, 50 * 5);
        assert_eq!(rows, gamma_sweep(&Oracle, &lat, &[0, 1, 4], 3, 7).unwrap());
    }

    #[test]
    fn merged_statistics_recompute_from_trials() {
        let lat = latents(30, 2);
        let part = |seed| MetricReport {
            method: "m".into(),
            gammas: gamma_sweep(&Oracle, &lat, &[1], 2, seed).unwrap(),
            top1: Some(mean_std(&[0.5 + seed as f64 / 10.0]).unwrap()),
            top1_trials: vec![0.5 + seed as f64 / 10.0],
            trials: 1,
            seeds: vec![seed],
            config_hash: "h".into(),
        };
        let merged = merge_reports("m", &[part(1), part(3)]).unwrap();
        assert_eq!(merged.gammas[0].trials.len(), 4);
        let t = merged.top1.unwrap();
        assert!((t.mean - 0.7).abs() < 1e-12);
        assert!((t.std - (0.02f64).sqrt()).abs() < 1e-12);
        assert_eq!(merged.seeds, vec![1, 3]);
    }

    #[test]
    fn report_files_have_headers_and_hash() {
        let lat = latents(20, 3);
        let rep = MetricReport {
            method: "MTCM".into(),
            gammas: gamma_sweep(&Oracle, &lat, &[1, 2], 2, 0).unwrap(),
            top1: None,
            top1_trials: vec![],
            trials: 2,
            seeds: vec![0],
            config_hash: "abc123".into(),
        };
        let dir = tempfile::tempdir().unwrap();
        let files = write_report(&[rep], dir.path(), "table").unwrap();
        assert_eq!(files.len(), 4);
        let table = std::fs::read_to_string(&files[0]).unwrap();
        assert!(table.starts_with("method,gamma,region_wise_mean"));
        assert!(table.lines().nth(1).unwrap().ends_with(",abc123"));
        let plot = std::fs::read_to_string(&files[1]).unwrap();
        assert_eq!(plot.lines().next().unwrap(), "gamma,MTCM,config_hash");
        assert!(write_report(&[], dir.path(), "x").is_err());
    }
}
