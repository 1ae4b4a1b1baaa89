use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{metrics, wilcoxon_signed_rank, HarnessError};
use crate::data::{
    build_window_matrix, derive_features, DayType, FeatureTable, RoadNetwork, SegmentId,
    SpeedStore, WindowSpec,
};
use crate::nmf::{factorize, NmfConfig};
use crate::predictor::{learn, stream_seed, ModelVariant, PredictorConfig, Query};

/// Variant pairs compared by the significance tests.
pub const SIGNIFICANCE_PAIRS: [(ModelVariant, ModelVariant); 4] = [
    (ModelVariant::Gp, ModelVariant::Lgp),
    (ModelVariant::GpSide, ModelVariant::LgpSide),
    (ModelVariant::Lgp, ModelVariant::Lgr),
    (ModelVariant::LgpSide, ModelVariant::LgrSide),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Day to predict; `None` picks the latest day of `day_type` with a full
    /// window before it.
    pub test_day: Option<NaiveDate>,
    pub day_type: DayType,
    /// `None` uses the day type's default.
    pub window_days: Option<usize>,
    pub trial_hours: Vec<u32>,
    pub steps: Vec<usize>,
    pub variants: Vec<ModelVariant>,
    /// Template for every variant; its `variant` field is ignored.
    pub predictor: PredictorConfig,
    pub train_fraction: f64,
    pub seed: u64,
    /// Measure wall-clock runtimes. When off, runtimes are written as 0 so
    /// result files are reproducible byte for byte.
    pub record_timing: bool,
    /// Run trials concurrently; only honoured when timing is off.
    pub parallel_trials: bool,
    pub keep_predictions: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            test_day: None,
            day_type: DayType::Weekday,
            window_days: None,
            trial_hours: (0..24).collect(),
            steps: (1..=6).collect(),
            variants: ModelVariant::ALL.to_vec(),
            predictor: PredictorConfig::new(ModelVariant::Lgp),
            train_fraction: 0.4,
            seed: 0,
            record_timing: true,
            parallel_trials: false,
            keep_predictions: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.steps.is_empty() || self.steps.contains(&0) {
            return bad("steps must be non-empty and each at least 1");
        }
        if self.trial_hours.is_empty() || self.trial_hours.iter().any(|&h| h >= 24) {
            return bad("trial hours must be non-empty and within 0..24");
        }
        if self.variants.is_empty() {
            return bad("no variants selected");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return bad("train fraction must be in (0, 1]");
        }
        if self.window_days == Some(0) {
            return bad("window must span at least one day");
        }
        Ok(())
    }
}

/// Scores of one variant at one trial hour and step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub variant: ModelVariant,
    pub trial_hour: u32,
    pub step: usize,
    pub rmse: f64,
    pub mae: f64,
    pub mape: f64,
    /// Learn plus predict for the whole trial, shared by its step rows.
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificanceRow {
    pub pair: String,
    pub metric: &'static str,
    /// `None` when the test is undefined for the pair.
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
}

impl SignificanceRow {
    pub fn significant(&self) -> bool {
        self.p_value.is_some_and(|p| p < 0.05)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRow {
    pub variant: ModelVariant,
    pub trial_hour: u32,
    pub step: usize,
    pub segment: SegmentId,
    pub t: usize,
    pub mean: f64,
    pub variance: f64,
    pub cluster_i: usize,
    pub cluster_j: usize,
    pub fallback: bool,
    pub truth: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub test_day: NaiveDate,
    pub train_segments: Vec<SegmentId>,
    pub test_segments: Vec<SegmentId>,
    pub results: Vec<TrialResult>,
    /// NMF wall-clock per trial hour (0 without timing).
    pub nmf_runtimes: Vec<(u32, f64)>,
    pub significance: Vec<SignificanceRow>,
    pub predictions: Vec<PredictionRow>,
    /// Scored cells without test-day truth (or past midnight).
    pub skipped_cells: usize,
}

impl ExperimentOutput {
    /// Per-trial metric averaged over steps, in trial-hour order.
    pub fn per_trial(&self, variant: ModelVariant, pick: fn(&TrialResult) -> f64) -> Vec<f64> {
        let mut by_hour: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
        for r in self.results.iter().filter(|r| r.variant == variant) {
            let e = by_hour.entry(r.trial_hour).or_default();
            e.0 += pick(r);
            e.1 += 1;
        }
        by_hour.values().map(|(s, n)| s / *n as f64).collect()
    }

    /// Learn-plus-predict runtime per trial.
    pub fn runtimes(&self, variant: ModelVariant) -> Vec<f64> {
        let mut by_hour: BTreeMap<u32, f64> = BTreeMap::new();
        for r in self.results.iter().filter(|r| r.variant == variant) {
            by_hour.insert(r.trial_hour, r.runtime_s);
        }
        by_hour.into_values().collect()
    }
}

impl ExperimentConfig {
    /// Test day, day type and window length. An unset test day resolves to
    /// the latest day of `day_type` with a full window before it.
    pub fn resolve_day(&self, store: &SpeedStore) -> Result<(NaiveDate, DayType, usize), HarnessError> {
        if let Some(day) = self.test_day {
            let dt = DayType::of(day);
            if dt != self.day_type {
                log::warn!("test day {day} is a {dt}; using {dt} windows");
            }
            return Ok((day, dt, self.window_days.unwrap_or(dt.default_window_days())));
        }
        let window = self.window_days.unwrap_or(self.day_type.default_window_days());
        let matching: Vec<NaiveDate> = store
            .days()
            .filter(|&d| DayType::of(d) == self.day_type)
            .collect();
        match matching.get(window) {
            Some(_) => Ok((*matching.last().expect("non-empty"), self.day_type, window)),
            None => Err(HarnessError::Config(format!(
                "no {0} test day with {1} prior {0} days in the data",
                self.day_type, window
            ))),
        }
    }

    /// Window specification for one trial hour.
    pub fn window(&self, store: &SpeedStore, trial_hour: u32) -> Result<WindowSpec, HarnessError> {
        let (test_day, day_type, window_days) = self.resolve_day(store)?;
        Ok(WindowSpec {
            test_day,
            trial_hour,
            window_days,
            day_type,
        })
    }

    /// Seeded split of `covered` into training and held-out segments, both
    /// sorted. The draw depends only on the seed and the input order.
    pub fn split(&self, covered: &[SegmentId]) -> (Vec<SegmentId>, Vec<SegmentId>) {
        let mut shuffled = covered.to_vec();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(stream_seed(self.seed, u32::MAX, 0)));
        let n_train =
            ((covered.len() as f64 * self.train_fraction).round() as usize).clamp(1, covered.len());
        let mut train = shuffled[..n_train].to_vec();
        let mut test = shuffled[n_train..].to_vec();
        train.sort();
        test.sort();
        (train, test)
    }
}

/// Covered segments of `store` that exist in `network`, sorted.
pub fn covered_segments(network: &RoadNetwork, store: &SpeedStore) -> Vec<SegmentId> {
    let mut out: Vec<SegmentId> = store
        .covered_segments()
        .iter()
        .filter(|s| network.contains(s))
        .cloned()
        .collect();
    out.sort();
    out
}

struct TrialOutput {
    results: Vec<TrialResult>,
    nmf_runtime: f64,
    predictions: Vec<PredictionRow>,
    skipped: usize,
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    hour: u32,
    cfg: &ExperimentConfig,
    network: &RoadNetwork,
    store: &SpeedStore,
    features: &FeatureTable,
    test_day: NaiveDate,
    train: &[SegmentId],
    covered: &[SegmentId],
) -> Result<TrialOutput, HarnessError> {
    let spec = cfg.window(store, hour)?;
    let d = build_window_matrix(store, &spec, train)?;
    let per_day = store.intervals_per_day();
    let cutoff = spec.trial_interval(store.interval_minutes());
    let seed = stream_seed(cfg.seed, hour, 0);

    let mut queries = Vec::new();
    let mut query_step = Vec::new();
    let mut skipped = 0;
    for &step in &cfg.steps {
        let t = cutoff + step;
        if t >= per_day {
            skipped += covered.len();
            continue;
        }
        for s in covered {
            queries.push(Query::new(s.clone(), t));
            query_step.push(step);
        }
    }

    let mut nmf_runtime = 0.0;
    if cfg.variants.iter().any(|v| v.is_nmf()) {
        let nmf = NmfConfig::new(cfg.predictor.k)
            .with_lambda(cfg.predictor.lambda)
            .with_seed(seed)
            .with_max_iters(cfg.predictor.nmf_max_iters);
        let start = Instant::now();
        factorize(&d, &nmf)?;
        if cfg.record_timing {
            nmf_runtime = start.elapsed().as_secs_f64();
        }
    }

    let mut results = Vec::new();
    let mut predictions = Vec::new();
    for &variant in &cfg.variants {
        let mut pcfg = cfg.predictor.clone();
        pcfg.variant = variant;
        pcfg.seed = seed;
        let start = Instant::now();
        let predictor = learn(&d, network, features, &pcfg)?;
        let out = predictor.predict(&queries)?;
        let runtime = if cfg.record_timing {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        };

        let mut per_step: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for (p, &step) in out.iter().zip(&query_step) {
            let truth = store.get(test_day, &p.segment, p.t);
            match truth {
                Some(y) => {
                    let e = per_step.entry(step).or_default();
                    e.0.push(y);
                    e.1.push(p.mean);
                }
                None => skipped += 1,
            }
            if cfg.keep_predictions {
                predictions.push(PredictionRow {
                    variant,
                    trial_hour: hour,
                    step,
                    segment: p.segment.clone(),
                    t: p.t,
                    mean: p.mean,
                    variance: p.variance,
                    cluster_i: p.cluster_i,
                    cluster_j: p.cluster_j,
                    fallback: p.fallback,
                    truth,
                });
            }
        }
        for (step, (y, y_hat)) in per_step {
            let m = metrics(&y, &y_hat)?;
            results.push(TrialResult {
                variant,
                trial_hour: hour,
                step,
                rmse: m.rmse,
                mae: m.mae,
                mape: m.mape,
                runtime_s: runtime,
            });
        }
        log::info!(
            "trial {hour:02}h {variant}: {} GP fits, {runtime:.3}s",
            predictor.fits_performed()
        );
    }
    Ok(TrialOutput {
        results,
        nmf_runtime,
        predictions,
        skipped,
    })
}

/// Runs every trial hour of `cfg` on `store`.
///
/// Covered segments are split once into training rows and held-out
/// segments. For each trial hour the training rows' window matrix is
/// built, each variant is learned and queried at `cutoff + step` for every
/// covered segment, and predictions are scored against the test day.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    network: &RoadNetwork,
    store: &SpeedStore,
) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate()?;
    cfg.predictor.validate()?;
    let (test_day, day_type, _) = cfg.resolve_day(store)?;
    let covered = covered_segments(network, store);
    if covered.is_empty() {
        return Err(HarnessError::Config("no covered segment is in the network".into()));
    }
    let (train, test) = cfg.split(&covered);
    let features = derive_features(network);
    log::info!(
        "test day {test_day} ({day_type}), {} training and {} held-out segments",
        train.len(),
        test.len()
    );

    let run = |&hour: &u32| {
        run_trial(
            hour, cfg, network, store, &features, test_day, &train, &covered,
        )
        .map(|o| (hour, o))
    };
    let trials: Vec<Result<(u32, TrialOutput), HarnessError>> =
        if cfg.parallel_trials && !cfg.record_timing {
            cfg.trial_hours.par_iter().map(run).collect()
        } else {
            cfg.trial_hours.iter().map(run).collect()
        };

    let mut out = ExperimentOutput {
        test_day,
        train_segments: train,
        test_segments: test,
        results: Vec::new(),
        nmf_runtimes: Vec::new(),
        significance: Vec::new(),
        predictions: Vec::new(),
        skipped_cells: 0,
    };
    for trial in trials {
        let (hour, t) = trial?;
        out.results.extend(t.results);
        out.predictions.extend(t.predictions);
        out.skipped_cells += t.skipped;
        if cfg.variants.iter().any(|v| v.is_nmf()) {
            out.nmf_runtimes.push((hour, t.nmf_runtime));
        }
    }

    let picks: [(&'static str, fn(&TrialResult) -> f64); 3] =
        [("rmse", |r| r.rmse), ("mae", |r| r.mae), ("mape", |r| r.mape)];
    for (a, b) in SIGNIFICANCE_PAIRS {
        if !(cfg.variants.contains(&a) && cfg.variants.contains(&b)) {
            continue;
        }
        for (metric, pick) in picks {
            let test = wilcoxon_signed_rank(&out.per_trial(a, pick), &out.per_trial(b, pick)).ok();
            out.significance.push(SignificanceRow {
                pair: format!("{a}_vs_{b}"),
                metric,
                statistic: test.map(|t| t.statistic),
                p_value: test.map(|t| t.p_value),
            });
        }
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn write_file(path: &Path, body: &str) -> Result<(), HarnessError> {
    let mut f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    f.write_all(body.as_bytes()).map_err(|e| HarnessError::io(path, e))
}

/// Writes `results.csv`, `significance.csv`, `summary.csv`,
/// `nmf_runtime.csv` and, when predictions were kept, `predictions.csv`.
pub fn write_outputs(out: &ExperimentOutput, dir: impl AsRef<Path>) -> Result<(), HarnessError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;

    let mut s = String::from("variant,trial_hour,step,rmse,mae,mape,runtime_s\n");
    for r in &out.results {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.variant, r.trial_hour, r.step, r.rmse, r.mae, r.mape, r.runtime_s
        );
    }
    write_file(&dir.join("results.csv"), &s)?;

    let mut s = String::from("pair,metric,statistic,p_value,significant_at_0.05\n");
    for r in &out.significance {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.pair,
            r.metric,
            opt(r.statistic),
            opt(r.p_value),
            u8::from(r.significant())
        );
    }
    write_file(&dir.join("significance.csv"), &s)?;

    // per step over trials, then per-trial means over everything
    let mut s = String::from("variant,step,rmse,mae,mape,runtime_s,trials\n");
    let mut variants: Vec<ModelVariant> = out.results.iter().map(|r| r.variant).collect();
    variants.sort();
    variants.dedup();
    for v in variants {
        let rows: Vec<&TrialResult> = out.results.iter().filter(|r| r.variant == v).collect();
        let mut steps: Vec<usize> = rows.iter().map(|r| r.step).collect();
        steps.sort_unstable();
        steps.dedup();
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
        for step in steps {
            let sel: Vec<&&TrialResult> = rows.iter().filter(|r| r.step == step).collect();
            let col = |f: fn(&TrialResult) -> f64| mean(&sel.iter().map(|r| f(r)).collect::<Vec<_>>());
            let _ = writeln!(
                s,
                "{v},{step},{},{},{},{},{}",
                col(|r| r.rmse),
                col(|r| r.mae),
                col(|r| r.mape),
                col(|r| r.runtime_s),
                sel.len()
            );
        }
        let trials = out.per_trial(v, |r| r.rmse);
        let _ = writeln!(
            s,
            "{v},all,{},{},{},{},{}",
            mean(&trials),
            mean(&out.per_trial(v, |r| r.mae)),
            mean(&out.per_trial(v, |r| r.mape)),
            mean(&out.runtimes(v)),
            trials.len()
        );
    }
    write_file(&dir.join("summary.csv"), &s)?;

    let mut s = String::from("trial_hour,runtime_s\n");
    for (h, r) in &out.nmf_runtimes {
        let _ = writeln!(s, "{h},{r}");
    }
    write_file(&dir.join("nmf_runtime.csv"), &s)?;

    if !out.predictions.is_empty() {
        let mut s = String::from(
            "variant,trial_hour,step,segment_id,t,mean_mph,variance,cluster_i,cluster_j,fallback_flag,truth_mph\n",
        );
        for p in &out.predictions {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                p.variant,
                p.trial_hour,
                p.step,
                p.segment,
                p.t,
                p.mean,
                p.variance,
                p.cluster_i,
                p.cluster_j,
                u8::from(p.fallback),
                opt(p.truth)
            );
        }
        write_file(&dir.join("predictions.csv"), &s)?;
    }
    Ok(())
}
