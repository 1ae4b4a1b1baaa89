use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::LocalizationError;
use crate::data::SpeedMatrix;
use crate::nmf::{factorize_allow_empty, NmfConfig, DEFAULT_LAMBDA, DEFAULT_MAX_ITERS};

/// `1 − Var[y − ŷ] / Var[y]` with `Var[v] = E[v²] − E[v]²`.
pub fn explained_variance(y: &[f64], y_hat: &[f64]) -> Result<f64, LocalizationError> {
    if y.len() != y_hat.len() {
        return Err(LocalizationError::LengthMismatch(y.len(), y_hat.len()));
    }
    if y.len() < 2 {
        return Err(LocalizationError::TooFewValues(y.len()));
    }
    let var = |v: &mut dyn Iterator<Item = f64>| {
        let (mut n, mut s, mut s2) = (0.0, 0.0, 0.0);
        for x in v {
            n += 1.0;
            s += x;
            s2 += x * x;
        }
        let m = s / n;
        s2 / n - m * m
    };
    let var_y = var(&mut y.iter().copied());
    if var_y <= 0.0 {
        return Err(LocalizationError::ZeroVariance);
    }
    let var_r = var(&mut y.iter().zip(y_hat).map(|(a, b)| a - b));
    Ok(1.0 - var_r / var_y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSelectionConfig {
    /// Candidate ranks, each in `1..=min(N, M)`.
    pub ks: Vec<usize>,
    pub folds: usize,
    pub seed: u64,
    /// Applied to every fold's factorization.
    pub lambda: f64,
    pub max_iters: usize,
}

impl KSelectionConfig {
    pub fn new(ks: impl IntoIterator<Item = usize>) -> Self {
        KSelectionConfig {
            ks: ks.into_iter().collect(),
            folds: 10,
            seed: 0,
            lambda: DEFAULT_LAMBDA,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }
}

/// Held-out R² per candidate K and fold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KSelectionReport {
    pub ks: Vec<usize>,
    /// `r2[c][f]` for candidate `ks[c]` and fold `f`.
    pub r2: Vec<Vec<f64>>,
    pub mean_r2: Vec<f64>,
    /// Population standard deviation over folds.
    pub std_r2: Vec<f64>,
    pub chosen: usize,
}

/// Chooses K by `folds`-fold cross-validation of the observed entries of
/// `d`: each fold is hidden in turn, predicted by `WH`, and scored by
/// explained variance. The K with the highest mean wins; ties go to the
/// smaller K.
pub fn select_k(d: &SpeedMatrix, cfg: &KSelectionConfig) -> Result<KSelectionReport, LocalizationError> {
    let max = d.rows().min(d.cols());
    if cfg.ks.is_empty() {
        return Err(LocalizationError::InvalidRange("no candidates".into()));
    }
    if let Some(&k) = cfg.ks.iter().find(|&&k| k == 0 || k > max) {
        return Err(LocalizationError::InvalidRange(format!(
            "K = {k} outside 1..={max}"
        )));
    }
    if cfg.folds < 2 {
        return Err(LocalizationError::InvalidRange(format!(
            "{} folds",
            cfg.folds
        )));
    }

    let mut entries: Vec<(usize, usize, f64)> = d.observed().collect();
    entries.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut folds: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); cfg.folds];
    for (p, e) in entries.into_iter().enumerate() {
        folds[p % cfg.folds].push(e);
    }
    if let Some(f) = folds.iter().position(Vec::is_empty) {
        return Err(LocalizationError::EmptyFold(f + 1));
    }

    let tasks: Vec<(usize, usize)> = (0..cfg.ks.len())
        .flat_map(|c| (0..cfg.folds).map(move |f| (c, f)))
        .collect();
    let scores: Vec<Result<f64, LocalizationError>> = tasks
        .par_iter()
        .map(|&(c, f)| {
            let held: Vec<(usize, usize)> = folds[f].iter().map(|&(i, j, _)| (i, j)).collect();
            let train = d.with_hidden(&held);
            let nmf = NmfConfig::new(cfg.ks[c])
                .with_lambda(cfg.lambda)
                .with_seed(cfg.seed)
                .with_max_iters(cfg.max_iters);
            let fac = factorize_allow_empty(&train, &nmf)?;
            let (w, h) = (fac.w(), fac.h());
            let y: Vec<f64> = folds[f].iter().map(|e| e.2).collect();
            let y_hat: Vec<f64> = folds[f]
                .iter()
                .map(|&(i, j, _)| w.row(i).dot(&h.column(j)))
                .collect();
            explained_variance(&y, &y_hat)
        })
        .collect();

    let mut r2 = vec![Vec::with_capacity(cfg.folds); cfg.ks.len()];
    for ((c, _), s) in tasks.into_iter().zip(scores) {
        r2[c].push(s?);
    }
    let mean_r2: Vec<f64> = r2
        .iter()
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
        .collect();
    let std_r2 = r2
        .iter()
        .zip(&mean_r2)
        .map(|(v, m)| (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt())
        .collect();
    let mut order: Vec<usize> = (0..cfg.ks.len()).collect();
    order.sort_by_key(|&c| cfg.ks[c]);
    let mut best = order[0];
    for &c in &order[1..] {
        if mean_r2[c] > mean_r2[best] {
            best = c;
        }
    }
    Ok(KSelectionReport {
        chosen: cfg.ks[best],
        ks: cfg.ks.clone(),
        r2,
        mean_r2,
        std_r2,
    })
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> LocalizationError + '_ {
    move |source| LocalizationError::Csv {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `k_selection_folds.csv` (`K,fold,r2`) and
/// `k_selection_summary.csv` (`K,mean_r2,std_r2,chosen`) into `dir`.
pub fn write_k_selection_csv(
    report: &KSelectionReport,
    dir: impl AsRef<Path>,
) -> Result<(), LocalizationError> {
    let long = dir.as_ref().join("k_selection_folds.csv");
    let mut w = csv::Writer::from_path(&long).map_err(csv_err(&long))?;
    w.write_record(["K", "fold", "r2"]).map_err(csv_err(&long))?;
    for (k, folds) in report.ks.iter().zip(&report.r2) {
        for (f, r) in folds.iter().enumerate() {
            w.write_record([k.to_string(), (f + 1).to_string(), r.to_string()])
                .map_err(csv_err(&long))?;
        }
    }
    w.flush().map_err(|e| csv_err(&long)(e.into()))?;

    let summary = dir.as_ref().join("k_selection_summary.csv");
    let mut w = csv::Writer::from_path(&summary).map_err(csv_err(&summary))?;
    w.write_record(["K", "mean_r2", "std_r2", "chosen"])
        .map_err(csv_err(&summary))?;
    for ((k, m), s) in report.ks.iter().zip(&report.mean_r2).zip(&report.std_r2) {
        w.write_record([
            k.to_string(),
            m.to_string(),
            s.to_string(),
            u8::from(*k == report.chosen).to_string(),
        ])
        .map_err(csv_err(&summary))?;
    }
    w.flush().map_err(|e| csv_err(&summary)(e.into()))?;
    Ok(())
}
