//! The subcommands. Every command reads the configuration and an output
//! directory; files go to fixed places below that directory:
//!
//! ```text
//! data/{train,val,test}.{csv,json}
//! models/seed<s>/target<k>/{final,epoch<e>}.{bin,json}, history.csv
//! eval/{roc.csv,roc.svg,summary.json}
//! boundary/{epoch<e>,truth}.svg
//! ```

use std::path::{Path, PathBuf};

use cssi_core::eval::{
    boundary_grid, density_mask, emit, pooled_confusion, roc, roc_svg, score_matrix, truth_grid, Artifact, Confusion,
    Format, RocCurve, ScoredPrediction,
};
use cssi_core::ncd::{train_with, NcdData, NcdModel};
use cssi_core::oracle::{run_campaign, Campaign, CampaignReport};
use cssi_core::rng;
use cssi_core::{LabeledDataset, ParentSet};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ScoreSource};
use crate::error::{io, LabError, LabResult};

/// Stream tag for the shuffled-score null.
const NULL_TAG: u64 = 0x6e75_6c6c;

pub struct RunDirs {
    root: PathBuf,
}

impl RunDirs {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDirs { root: root.into() }
    }

    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn model_dir(&self, seed: u64, target: usize) -> PathBuf {
        self.root.join("models").join(format!("seed{seed}")).join(format!("target{target}"))
    }

    pub fn final_model(&self, seed: u64, target: usize) -> PathBuf {
        self.model_dir(seed, target).join("final")
    }

    pub fn checkpoint(&self, seed: u64, target: usize, epoch: usize) -> PathBuf {
        self.model_dir(seed, target).join(format!("epoch{epoch}"))
    }

    pub fn eval(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn boundary(&self) -> PathBuf {
        self.root.join("boundary")
    }
}

fn mkdir(p: &Path) -> LabResult<()> {
    std::fs::create_dir_all(p).map_err(io(p))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenReport {
    pub rows: [usize; 3],
    pub dir: PathBuf,
}

pub fn cmd_gen(cfg: &ExperimentConfig, out: &Path) -> LabResult<GenReport> {
    let ds = cfg.dataset.generate()?;
    let (tr, va, te) = ds.split(cfg.dataset.split_ratios())?;
    let dir = RunDirs::new(out).data();
    mkdir(&dir)?;
    for (part, stem) in [(&tr, "train"), (&va, "val"), (&te, "test")] {
        part.save(&dir, stem)?;
    }
    Ok(GenReport { rows: [tr.len(), va.len(), te.len()], dir })
}

fn load_split(dirs: &RunDirs, stem: &str) -> LabResult<LabeledDataset> {
    Ok(LabeledDataset::load(&dirs.data(), stem)?)
}

fn targets(cfg: &ExperimentConfig, ds: &LabeledDataset) -> LabResult<Vec<usize>> {
    let n = ds.meta.n_targets;
    let ts = cfg.eval.targets.clone().unwrap_or_else(|| (0..n).collect());
    if ts.is_empty() || ts.iter().any(|&t| t >= n) {
        return Err(cssi_core::Error::invalid_config("eval.targets", format!("{ts:?} with {n} targets")).into());
    }
    Ok(ts)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    pub seed: u64,
    pub target: usize,
    pub epochs: usize,
    pub final_val_nll: Option<f64>,
    pub checkpoint: PathBuf,
}

pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> LabResult<Vec<TrainReport>> {
    let dirs = RunDirs::new(out);
    let (tr, va) = (load_split(&dirs, "train")?, load_split(&dirs, "val")?);
    let ts = targets(cfg, &tr)?;
    let per_seed: Vec<Vec<TrainReport>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| ts.iter().map(|&t| train_one(cfg, &dirs, &tr, &va, seed, t)).collect::<LabResult<Vec<_>>>())
        .collect::<LabResult<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

fn train_one(
    cfg: &ExperimentConfig,
    dirs: &RunDirs,
    tr: &LabeledDataset,
    va: &LabeledDataset,
    seed: u64,
    target: usize,
) -> LabResult<TrainReport> {
    let run = |source| LabError::Run { seed, target, source };
    let (train, val) = (NcdData::from_dataset(tr, target).map_err(run)?, NcdData::from_dataset(va, target).map_err(run)?);
    let mut hyper = cfg.model.clone();
    hyper.seed = seed;
    let model = NcdModel::for_data(&train, hyper).map_err(run)?;
    let dir = dirs.model_dir(seed, target);
    mkdir(&dir)?;
    let every = cfg.eval.checkpoint_every;
    let (model, history) = train_with(model, &train, &val, |epoch, m| {
        if every > 0 && epoch % every == 0 {
            m.save(&dirs.checkpoint(seed, target, epoch))?;
        }
        Ok(())
    })
    .map_err(run)?;
    let stem = dirs.final_model(seed, target);
    model.save(&stem).map_err(run)?;
    emit(&history, &dir.join("history.csv"), Format::Csv).map_err(run)?;
    Ok(TrainReport {
        seed,
        target,
        epochs: history.records.len(),
        final_val_nll: history.records.last().map(|r| r.val_nll),
        checkpoint: stem,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub std: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Stat {
        let (mean, std) = cssi_core::eval::mean_std(values);
        Stat { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCounts {
    pub threshold: f64,
    #[serde(flatten)]
    pub counts: Confusion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub target: usize,
    pub auc: f64,
    pub null_auc: f64,
    pub confusion: Vec<ThresholdCounts>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    /// Mean AUC over targets.
    pub auc: f64,
    pub null_auc: f64,
    pub targets: Vec<TargetSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub scores: ScoreSource,
    pub test_rows: usize,
    pub auc: Stat,
    pub null_auc: Stat,
    pub seeds: Vec<SeedSummary>,
}

/// The same scores with rows permuted against the truths.
pub fn shuffled_null(preds: &[ScoredPrediction], seed: u64) -> Vec<ScoredPrediction> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.shuffle(&mut rng::seeded(seed));
    order.iter().zip(preds).map(|(&i, p)| ScoredPrediction { scores: preds[i].scores.clone(), truth: p.truth }).collect()
}

fn oracle_scores(truth: &[ParentSet], d: usize) -> Array2<f64> {
    Array2::from_shape_fn((truth.len(), d), |(i, j)| if truth[i].contains(j) { 1.0 } else { 0.0 })
}

pub fn cmd_eval(cfg: &ExperimentConfig, out: &Path) -> LabResult<Summary> {
    let dirs = RunDirs::new(out);
    let te = load_split(&dirs, "test")?;
    let ts = targets(cfg, &te)?;
    let runs: Vec<Vec<(TargetSummary, RocCurve)>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| ts.iter().map(|&t| eval_one(cfg, &dirs, &te, seed, t)).collect::<LabResult<Vec<_>>>())
        .collect::<LabResult<_>>()?;

    let dir = dirs.eval();
    mkdir(&dir)?;
    let mut csv = String::new();
    let mut curves = Vec::new();
    let mut seeds = Vec::new();
    for (&seed, per_target) in cfg.seeds.iter().zip(&runs) {
        for (ts, curve) in per_target {
            let body = curve.to_csv();
            let mut lines = body.lines();
            let header = lines.next().unwrap_or_default();
            if csv.is_empty() {
                csv.push_str(&format!("seed,target,{header}\n"));
            }
            for line in lines {
                csv.push_str(&format!("{seed},{},{line}\n", ts.target));
            }
            curves.push((format!("seed {seed} target {} (AUC {:.4})", ts.target + 1, ts.auc), curve));
        }
        let targets: Vec<TargetSummary> = per_target.iter().map(|(s, _)| s.clone()).collect();
        let n = targets.len() as f64;
        seeds.push(SeedSummary {
            seed,
            auc: targets.iter().map(|t| t.auc).sum::<f64>() / n,
            null_auc: targets.iter().map(|t| t.null_auc).sum::<f64>() / n,
            targets,
        });
    }
    let roc_csv = dir.join("roc.csv");
    std::fs::write(&roc_csv, csv).map_err(io(&roc_csv))?;
    let roc_svg_path = dir.join("roc.svg");
    std::fs::write(&roc_svg_path, roc_svg(&curves)).map_err(io(&roc_svg_path))?;

    let aucs: Vec<f64> = seeds.iter().map(|s| s.auc).collect();
    let nulls: Vec<f64> = seeds.iter().map(|s| s.null_auc).collect();
    let summary = Summary {
        name: cfg.name.clone(),
        scores: cfg.eval.scores,
        test_rows: te.len(),
        auc: Stat::of(&aucs),
        null_auc: Stat::of(&nulls),
        seeds,
    };
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    std::fs::write(&path, text).map_err(io(&path))?;
    Ok(summary)
}

fn eval_one(
    cfg: &ExperimentConfig,
    dirs: &RunDirs,
    te: &LabeledDataset,
    seed: u64,
    target: usize,
) -> LabResult<(TargetSummary, RocCurve)> {
    let run = |source| LabError::Run { seed, target, source };
    let test = NcdData::from_dataset(te, target).map_err(run)?;
    let scores = match cfg.eval.scores {
        ScoreSource::Model => NcdModel::load(&dirs.final_model(seed, target)).and_then(|m| m.parent_scores(test.x.view())),
        ScoreSource::Oracle => Ok(oracle_scores(&test.truth, test.layout.n_vars())),
    }
    .map_err(run)?;
    let preds = score_matrix(scores.view(), &test.truth).map_err(run)?;
    let curve = roc(&preds).map_err(run)?;
    let null_seed = rng::derive_seed(rng::derive_seed(seed, NULL_TAG), target as u64);
    let null_auc = roc(&shuffled_null(&preds, null_seed)).map_err(run)?.auc;
    let confusion = cfg
        .eval
        .thresholds
        .iter()
        .map(|&threshold| ThresholdCounts { threshold, counts: pooled_confusion(&preds, threshold) })
        .collect();
    Ok((TargetSummary { target, auc: curve.auc, null_auc, confusion }, curve))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryReport {
    pub epoch: usize,
    pub path: PathBuf,
    /// Agreement with the true region labels on the cells of above-median
    /// parent density, when the generating system is known.
    pub agreement: Option<f64>,
}

/// One grid plot per epoch checkpoint of the first seed and target.
pub fn cmd_boundary(cfg: &ExperimentConfig, out: &Path, epochs: &[usize]) -> LabResult<Vec<BoundaryReport>> {
    if epochs.is_empty() {
        return Ok(Vec::new());
    }
    let block = cfg
        .eval
        .boundary
        .as_ref()
        .ok_or_else(|| LabError::from(cssi_core::Error::invalid_config("eval.boundary", "missing")))?;
    let dirs = RunDirs::new(out);
    let seed = cfg.seeds[0];
    let target = cfg.eval.targets.as_ref().and_then(|t| t.first().copied()).unwrap_or(0);
    let mut stems = Vec::with_capacity(epochs.len());
    for &epoch in epochs {
        let stem = dirs.checkpoint(seed, target, epoch);
        if !stem.with_extension("json").is_file() {
            return Err(LabError::MissingCheckpoint { epoch, path: stem.with_extension("json") });
        }
        stems.push(stem);
    }
    let dir = dirs.boundary();
    mkdir(&dir)?;
    let scm = cfg.dataset.scm()?;
    let mut truth = None;
    let mut reports = Vec::with_capacity(epochs.len());
    for (&epoch, stem) in epochs.iter().zip(&stems) {
        let model = NcdModel::load(stem)?;
        let spec = block.grid_spec(model.layout().dim())?;
        if truth.is_none() {
            if let Some(scm) = scm.as_ref().filter(|s| s.layout() == model.layout()) {
                let t = truth_grid(scm.decomposition(), &spec)?;
                emit(&t, &dir.join("truth.svg"), Format::Svg)?;
                truth = Some((t, density_mask(scm.parent_law(), &spec)?));
            }
        }
        let grid = boundary_grid(&model, &spec)?;
        let path = dir.join(format!("epoch{epoch}.svg"));
        emit(&grid, &path, Format::Svg)?;
        let agreement = match &truth {
            Some((t, mask)) => Some(grid.agreement(t, Some(mask))?),
            None => None,
        };
        reports.push(BoundaryReport { epoch, path, agreement });
    }
    Ok(reports)
}

pub fn cmd_oracle(campaign: &str, seed: u64, instances: usize) -> LabResult<CampaignReport> {
    Ok(run_campaign(Campaign::parse(campaign)?, seed, instances)?)
}

/// `Violation` unless every instance and fixture of the report passed.
pub fn ensure_passed(report: &CampaignReport) -> LabResult<()> {
    if report.passed() {
        return Ok(());
    }
    let failed: Vec<&str> = report.fixtures.iter().filter(|f| !f.passed).map(|f| f.name.as_str()).collect();
    Err(LabError::Violation(format!(
        "campaign {}: {} of {} checks failed, fixtures failed: {:?}; first: {:?}",
        report.campaign,
        report.violations,
        report.checks,
        failed,
        report.failures.first()
    )))
}

/// gen, train and eval in sequence.
pub fn run_pipeline(cfg: &ExperimentConfig, out: &Path) -> LabResult<Summary> {
    cmd_gen(cfg, out)?;
    cmd_train(cfg, out)?;
    cmd_eval(cfg, out)
}
