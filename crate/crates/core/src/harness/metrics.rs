use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::HarnessError;

/// Truth below this speed (mph) is left out of MAPE.
pub const MAPE_MIN_TRUTH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    /// Ratio, not percent.
    pub mape: f64,
}

/// RMSE, MAE and MAPE of `y_hat` against `y`.
pub fn metrics(y: &[f64], y_hat: &[f64]) -> Result<Metrics, HarnessError> {
    if y.len() != y_hat.len() {
        return Err(HarnessError::Metric(format!(
            "{} truths vs {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(HarnessError::Metric("no values".into()));
    }
    let n = y.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut pct = 0.0;
    let mut kept = 0usize;
    for (&a, &b) in y.iter().zip(y_hat) {
        let e = b - a;
        sq += e * e;
        abs += e.abs();
        if a >= MAPE_MIN_TRUTH {
            pct += e.abs() / a;
            kept += 1;
        }
    }
    if kept == 0 {
        return Err(HarnessError::Metric(format!(
            "every truth is below {MAPE_MIN_TRUTH} mph; MAPE undefined"
        )));
    }
    Ok(Metrics {
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        mape: pct / kept as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WilcoxonResult {
    /// `min(W⁺, W⁻)`.
    pub statistic: f64,
    pub p_value: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub exact: bool,
}

/// Largest `n` for which the null distribution is enumerated exactly.
pub const WILCOXON_EXACT_MAX: usize = 25;

/// Two-sided Wilcoxon signed-rank test of paired samples.
///
/// Zero differences are dropped and tied magnitudes get average ranks. For
/// `n ≤ 25` the p-value is exact (the null distribution of the doubled rank
/// sum is counted over all `2ⁿ` sign patterns); beyond that a normal
/// approximation with tie and continuity corrections is used.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult, HarnessError> {
    if a.len() != b.len() {
        return Err(HarnessError::Wilcoxon(format!(
            "{} vs {} values",
            a.len(),
            b.len()
        )));
    }
    let mut diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(HarnessError::Wilcoxon("non-finite difference".into()));
    }
    let n = diffs.len();
    if n < 5 {
        return Err(HarnessError::Wilcoxon(format!(
            "{n} non-zero differences; at least 5 needed"
        )));
    }
    diffs.sort_by(|x, y| x.abs().total_cmp(&y.abs()));

    // doubled ranks keep average ranks integral
    let mut ranks2 = vec![0u64; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[j + 1].abs() == diffs[i].abs() {
            j += 1;
        }
        let r2 = (i + 1 + j + 1) as u64;
        ranks2[i..=j].fill(r2);
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let w_plus2: u64 = diffs
        .iter()
        .zip(&ranks2)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();
    let total2: u64 = ranks2.iter().sum();
    let stat2 = w_plus2.min(total2 - w_plus2);

    let (p, exact) = if n <= WILCOXON_EXACT_MAX {
        // counts[s] = number of sign patterns with doubled positive sum s
        let mut counts = vec![0f64; total2 as usize + 1];
        counts[0] = 1.0;
        let mut reach = 0usize;
        for &r in &ranks2 {
            let r = r as usize;
            for s in (0..=reach).rev() {
                if counts[s] > 0.0 {
                    counts[s + r] += counts[s];
                }
            }
            reach += r;
        }
        let below: f64 = counts[..=stat2 as usize].iter().sum();
        let all = 2f64.powi(n as i32);
        ((2.0 * below / all).min(1.0), true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let stat = stat2 as f64 / 2.0;
        let z = ((stat - mean + 0.5) / var.sqrt()).min(0.0);
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        ((2.0 * normal.cdf(z)).min(1.0), false)
    };
    Ok(WilcoxonResult {
        statistic: stat2 as f64 / 2.0,
        p_value: p,
        n,
        exact,
    })
}
