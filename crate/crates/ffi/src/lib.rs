//! C ABI for `traffic-lgp`.
//!
//! Objects cross the boundary as opaque handles created by `*_load`,
//! `*_learn` or `*_factorize` functions and released with the matching
//! `*_free`. Every fallible function returns a [`TlStatus`]; on failure the
//! message is available from [`tl_last_error`] on the same thread.
//!
//! Handles are not synchronized: a handle may move between threads but must
//! not be used from two threads at once.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ndarray::Array2;
use traffic_lgp::data::{
    build_window_matrix, derive_features, read_network_csv, read_speeds_csv, RoadNetwork,
    SegmentId, SpeedMatrix, SpeedStore,
};
use traffic_lgp::error::ExitCode;
use traffic_lgp::harness::{covered_segments, metrics, wilcoxon_signed_rank, ExperimentConfig};
use traffic_lgp::nmf::{factorize, Factorization, NmfConfig};
use traffic_lgp::predictor::{learn, ModelVariant, PredictorConfig, Query, TrainedPredictor};
use traffic_lgp::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TlStatus {
    Ok = 0,
    /// Bad argument or configuration.
    InvalidArgument = 1,
    /// Unreadable or malformed input data.
    Data = 2,
    /// Factorization or Cholesky failure.
    Numerical = 3,
    /// A required pointer was null.
    NullPointer = 4,
    /// Internal panic caught at the boundary.
    Panic = 5,
}

/// Model variants, in the order gp, gp+, lgp, lgp+, lgr, lgr+.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TlVariant {
    Gp = 0,
    GpSide = 1,
    Lgp = 2,
    LgpSide = 3,
    Lgr = 4,
    LgrSide = 5,
}

fn variant_from(code: u32) -> Option<ModelVariant> {
    ModelVariant::ALL.get(code as usize).copied()
}

/// Predictor settings. Obtain defaults from [`tl_predictor_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TlPredictorConfig {
    /// A [`TlVariant`] value.
    pub variant: u32,
    /// Clusters per axis (lgp) or grid cells per axis (lgr).
    pub k: usize,
    pub lambda: f64,
    pub t_max: usize,
    pub seed: u64,
    pub nmf_max_iters: usize,
    /// Marginal-likelihood evaluations per GP fit.
    pub gp_budget: usize,
    /// Fraction of covered segments used as training rows.
    pub train_fraction: f64,
    /// Non-zero to fit local GPs in parallel.
    pub parallel: u8,
}

/// Prediction for one query.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TlPrediction {
    pub mean: f64,
    pub variance: f64,
    pub cluster_i: usize,
    pub cluster_j: usize,
    /// Non-zero when the query was served by the global GP.
    pub fallback: u8,
}

/// Road network handle.
pub struct TlNetwork(RoadNetwork);

/// Speed observation handle.
pub struct TlSpeeds(SpeedStore);

/// Trained predictor handle.
pub struct TlPredictor(TrainedPredictor);

/// NMF result handle.
pub struct TlFactorization(Factorization);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: TlStatus, msg: impl Into<String>) -> TlStatus {
    set_error(msg);
    status
}

fn from_error(e: impl Into<Error>) -> TlStatus {
    let e = e.into();
    let status = match e.exit_code() {
        ExitCode::Success | ExitCode::Validation => TlStatus::InvalidArgument,
        ExitCode::Data => TlStatus::Data,
        ExitCode::Numerical => TlStatus::Numerical,
    };
    fail(status, e.to_string())
}

/// Runs `f`, converting panics into [`TlStatus::Panic`].
fn guard(f: impl FnOnce() -> TlStatus) -> TlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(TlStatus::Panic, msg)
        }
    }
}

macro_rules! non_null {
    ($($p:ident),*) => {
        $(if $p.is_null() {
            return fail(TlStatus::NullPointer, concat!(stringify!($p), " is null"));
        })*
    };
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, TlStatus> {
    if p.is_null() {
        return Err(fail(TlStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(TlStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize) -> &'a [T] {
    if n == 0 {
        &[]
    } else {
        std::slice::from_raw_parts(p, n)
    }
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reads a road network CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn tl_network_load(path: *const c_char, out: *mut *mut TlNetwork) -> TlStatus {
    guard(|| {
        non_null!(out);
        let path = match str_arg(path, "path") {
            Ok(p) => PathBuf::from(p),
            Err(s) => return s,
        };
        match read_network_csv(path) {
            Ok(n) => {
                *out = Box::into_raw(Box::new(TlNetwork(n)));
                TlStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of segments in the network (0 for null).
///
/// # Safety
/// `network` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tl_network_segment_count(network: *const TlNetwork) -> usize {
    network.as_ref().map_or(0, |n| n.0.edges().len())
}

/// # Safety
/// `network` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tl_network_free(network: *mut TlNetwork) {
    if !network.is_null() {
        drop(Box::from_raw(network));
    }
}

/// Reads speed observations for segments of `network`.
///
/// # Safety
/// `path` must be a NUL-terminated string, `network` a live handle and
/// `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn tl_speeds_load(
    path: *const c_char,
    interval_minutes: u32,
    network: *const TlNetwork,
    out: *mut *mut TlSpeeds,
) -> TlStatus {
    guard(|| {
        non_null!(network, out);
        let path = match str_arg(path, "path") {
            Ok(p) => PathBuf::from(p),
            Err(s) => return s,
        };
        match read_speeds_csv(path, interval_minutes, &(*network).0) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(TlSpeeds(s)));
                TlStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of stored observations (0 for null).
///
/// # Safety
/// `speeds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tl_speeds_observation_count(speeds: *const TlSpeeds) -> usize {
    speeds.as_ref().map_or(0, |s| s.0.observation_count())
}

/// # Safety
/// `speeds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tl_speeds_free(speeds: *mut TlSpeeds) {
    if !speeds.is_null() {
        drop(Box::from_raw(speeds));
    }
}

/// Default settings for a [`TlVariant`] value; unknown values fall back to
/// lgp.
#[no_mangle]
pub extern "C" fn tl_predictor_config_default(variant: u32) -> TlPredictorConfig {
    let v = variant_from(variant).unwrap_or(ModelVariant::Lgp);
    let p = PredictorConfig::new(v);
    TlPredictorConfig {
        variant: ModelVariant::ALL.iter().position(|&x| x == v).unwrap_or(0) as u32,
        k: p.k,
        lambda: p.lambda,
        t_max: p.t_max,
        seed: p.seed,
        nmf_max_iters: p.nmf_max_iters,
        gp_budget: p.fit.budget,
        train_fraction: ExperimentConfig::default().train_fraction,
        parallel: 0,
    }
}

/// Learns a predictor from the window ending at `trial_hour` of `test_day`
/// (`YYYY-MM-DD`, or null for the latest weekday with a full window). The
/// training rows are the seeded split used by the experiment runner.
///
/// # Safety
/// Handles must be live, `config` and `out` valid pointers and `test_day`
/// null or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tl_predictor_learn(
    network: *const TlNetwork,
    speeds: *const TlSpeeds,
    test_day: *const c_char,
    trial_hour: u32,
    config: *const TlPredictorConfig,
    out: *mut *mut TlPredictor,
) -> TlStatus {
    guard(|| {
        non_null!(network, speeds, config, out);
        let (network, store, c) = (&(*network).0, &(*speeds).0, *config);
        let mut exp = ExperimentConfig {
            seed: c.seed,
            train_fraction: c.train_fraction,
            ..ExperimentConfig::default()
        };
        if !test_day.is_null() {
            let day = match str_arg(test_day, "test_day") {
                Ok(d) => d,
                Err(s) => return s,
            };
            match day.parse() {
                Ok(d) => exp.test_day = Some(d),
                Err(e) => return fail(TlStatus::InvalidArgument, format!("test_day: {e}")),
            }
        }
        let Some(variant) = variant_from(c.variant) else {
            return fail(TlStatus::InvalidArgument, format!("unknown variant code {}", c.variant));
        };
        let mut p = PredictorConfig::new(variant);
        p.k = c.k;
        p.lambda = c.lambda;
        p.t_max = c.t_max;
        p.seed = c.seed;
        p.nmf_max_iters = c.nmf_max_iters;
        p.fit.budget = c.gp_budget;
        p.parallel = c.parallel != 0;

        let run = || -> Result<TrainedPredictor, Error> {
            exp.validate()?;
            let covered = covered_segments(network, store);
            if covered.is_empty() {
                return Err(Error::Config("no covered segment is in the network".into()));
            }
            let (train, _) = exp.split(&covered);
            let spec = exp.window(store, trial_hour)?;
            let d = build_window_matrix(store, &spec, &train)?;
            Ok(learn(&d, network, &derive_features(network), &p)?)
        };
        match run() {
            Ok(t) => {
                *out = Box::into_raw(Box::new(TlPredictor(t)));
                TlStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Predicts `n` queries `(segments[q], intervals[q])` into `out[0..n]`.
///
/// # Safety
/// `predictor` must be live; `segments` must hold `n` NUL-terminated
/// strings, `intervals` `n` values and `out` room for `n` results.
#[no_mangle]
pub unsafe extern "C" fn tl_predictor_predict(
    predictor: *const TlPredictor,
    segments: *const *const c_char,
    intervals: *const usize,
    n: usize,
    out: *mut TlPrediction,
) -> TlStatus {
    guard(|| {
        non_null!(predictor);
        if n > 0 {
            non_null!(segments, intervals, out);
        }
        let mut queries = Vec::with_capacity(n);
        for (q, (&s, &t)) in slice_arg(segments, n).iter().zip(slice_arg(intervals, n)).enumerate() {
            match str_arg(s, &format!("segments[{q}]")) {
                Ok(id) => queries.push(Query::new(SegmentId::new(id), t)),
                Err(status) => return status,
            }
        }
        match (*predictor).0.predict(&queries) {
            Ok(preds) => {
                let dst = std::slice::from_raw_parts_mut(out, n);
                for (d, p) in dst.iter_mut().zip(preds) {
                    *d = TlPrediction {
                        mean: p.mean,
                        variance: p.variance,
                        cluster_i: p.cluster_i,
                        cluster_j: p.cluster_j,
                        fallback: u8::from(p.fallback),
                    };
                }
                TlStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of GP fits performed so far (0 for null).
///
/// # Safety
/// `predictor` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tl_predictor_fits(predictor: *const TlPredictor) -> usize {
    predictor.as_ref().map_or(0, |p| p.0.fits_performed())
}

/// # Safety
/// `predictor` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tl_predictor_free(predictor: *mut TlPredictor) {
    if !predictor.is_null() {
        drop(Box::from_raw(predictor));
    }
}

/// RMSE, MAE and MAPE of `n` paired values. MAPE skips truths below 1.
///
/// # Safety
/// `y` and `y_hat` must hold `n` values; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn tl_metrics(
    y: *const f64,
    y_hat: *const f64,
    n: usize,
    rmse: *mut f64,
    mae: *mut f64,
    mape: *mut f64,
) -> TlStatus {
    guard(|| {
        non_null!(rmse, mae, mape);
        if n > 0 {
            non_null!(y, y_hat);
        }
        match metrics(slice_arg(y, n), slice_arg(y_hat, n)) {
            Ok(m) => {
                (*rmse, *mae, *mape) = (m.rmse, m.mae, m.mape);
                TlStatus::Ok
            }
            Err(e) => from_error(Error::Harness(e)),
        }
    })
}

/// Two-sided Wilcoxon signed-rank test of `n` pairs.
///
/// # Safety
/// `a` and `b` must hold `n` values; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn tl_wilcoxon(
    a: *const f64,
    b: *const f64,
    n: usize,
    statistic: *mut f64,
    p_value: *mut f64,
) -> TlStatus {
    guard(|| {
        non_null!(statistic, p_value);
        if n > 0 {
            non_null!(a, b);
        }
        match wilcoxon_signed_rank(slice_arg(a, n), slice_arg(b, n)) {
            Ok(w) => {
                (*statistic, *p_value) = (w.statistic, w.p_value);
                TlStatus::Ok
            }
            Err(e) => from_error(Error::Harness(e)),
        }
    })
}

/// Factorizes a row-major `rows × cols` matrix. `mask` (same layout,
/// non-zero = observed) may be null for a fully observed matrix.
///
/// # Safety
/// `values` must hold `rows·cols` values, `mask` null or as many bytes, and
/// `out` must be writable.
#[allow(clippy::too_many_arguments)]
#[no_mangle]
pub unsafe extern "C" fn tl_nmf_factorize(
    values: *const f64,
    mask: *const u8,
    rows: usize,
    cols: usize,
    k: usize,
    lambda: f64,
    seed: u64,
    max_iters: usize,
    out: *mut *mut TlFactorization,
) -> TlStatus {
    guard(|| {
        non_null!(values, out);
        let Some(len) = rows.checked_mul(cols) else {
            return fail(TlStatus::InvalidArgument, "matrix too large");
        };
        let v = match Array2::from_shape_vec((rows, cols), slice_arg(values, len).to_vec()) {
            Ok(v) => v,
            Err(e) => return fail(TlStatus::InvalidArgument, e.to_string()),
        };
        let d = if mask.is_null() {
            SpeedMatrix::from_dense(v)
        } else {
            let m = slice_arg(mask, len).iter().map(|&b| b != 0).collect();
            let m = Array2::from_shape_vec((rows, cols), m).expect("same shape as values");
            SpeedMatrix::from_masked(v, m)
        };
        let cfg = NmfConfig::new(k)
            .with_lambda(lambda)
            .with_seed(seed)
            .with_max_iters(max_iters);
        match factorize(&d, &cfg) {
            Ok(f) => {
                *out = Box::into_raw(Box::new(TlFactorization(f)));
                TlStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Copies W (`rows × k`, row-major) into `dst`, which holds `len` values.
///
/// # Safety
/// `f` must be live and `dst` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn tl_factorization_w(
    f: *const TlFactorization,
    dst: *mut f64,
    len: usize,
) -> TlStatus {
    guard(|| {
        non_null!(f, dst);
        copy_matrix((*f).0.w(), dst, len)
    })
}

/// Copies H (`k × cols`, row-major) into `dst`, which holds `len` values.
///
/// # Safety
/// `f` must be live and `dst` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn tl_factorization_h(
    f: *const TlFactorization,
    dst: *mut f64,
    len: usize,
) -> TlStatus {
    guard(|| {
        non_null!(f, dst);
        copy_matrix((*f).0.h(), dst, len)
    })
}

unsafe fn copy_matrix(m: &Array2<f64>, dst: *mut f64, len: usize) -> TlStatus {
    if len < m.len() {
        return fail(
            TlStatus::InvalidArgument,
            format!("buffer holds {len} values, {} needed", m.len()),
        );
    }
    let dst = std::slice::from_raw_parts_mut(dst, m.len());
    for (d, v) in dst.iter_mut().zip(m.iter()) {
        *d = *v;
    }
    TlStatus::Ok
}

/// Rank K of the factorization (0 for null).
///
/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tl_factorization_k(f: *const TlFactorization) -> usize {
    f.as_ref().map_or(0, |f| f.0.k())
}

/// Final masked squared residual (NaN for null).
///
/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tl_factorization_residual(f: *const TlFactorization) -> f64 {
    f.as_ref().map_or(f64::NAN, |f| f.0.final_residual())
}

/// # Safety
/// `f` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tl_factorization_free(f: *mut TlFactorization) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}
