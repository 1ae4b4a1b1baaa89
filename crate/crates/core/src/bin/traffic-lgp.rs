use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use traffic_lgp::data::{
    build_window_matrix, derive_features, read_network_csv, read_speeds_csv, DayType, RoadNetwork,
    SegmentId, SpeedMatrix, SpeedStore,
};
use traffic_lgp::gp::RbfForm;
use traffic_lgp::harness::{
    covered_segments, generate_synthetic, run_experiment, write_outputs, write_synthetic,
    ConfigFile, ExperimentConfig, SynthSpec,
};
use traffic_lgp::localization::{select_k, write_k_selection_csv, KSelectionConfig};
use traffic_lgp::nmf::{factorize, write_factorization, NmfConfig};
use traffic_lgp::predictor::{learn, write_predictions_csv, ModelVariant, Query};
use traffic_lgp::{Error, Result};

/// Localized Gaussian-process traffic speed prediction.
#[derive(Debug, Parser)]
#[command(name = "traffic-lgp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic lattice city and its speed records.
    Synth(SynthArgs),
    /// Pick the cluster count K by cross-validated explained variance.
    SelectK(SelectKArgs),
    /// Factorize the window matrix of one trial hour.
    Factorize(FactorizeArgs),
    /// Learn a predictor and write its clusters and fitted GP diagnostics.
    Train(TrainArgs),
    /// Predict speeds 1..steps intervals after a trial hour.
    Predict(PredictArgs),
    /// Run the sliding-window experiment over all trial hours.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Road network CSV.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Speed observations CSV.
    #[arg(long)]
    speeds: Option<PathBuf>,
    /// Length of one interval of day in the speed file.
    #[arg(long, default_value_t = 5)]
    interval_minutes: u32,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// TOML file with experiment settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct WindowArgs {
    /// Day to predict (YYYY-MM-DD); defaults to the latest usable day.
    #[arg(long)]
    test_day: Option<NaiveDate>,
    /// weekday or weekend.
    #[arg(long)]
    day_type: Option<DayType>,
    /// Matching days averaged before the test day.
    #[arg(long)]
    window_days: Option<usize>,
    /// Fraction of covered segments used as training rows.
    #[arg(long)]
    train_fraction: Option<f64>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Clusters per axis (lgp) or grid cells per axis (lgr).
    #[arg(long)]
    k: Option<usize>,
    /// Sparsity weight of the factorization.
    #[arg(long)]
    lambda: Option<f64>,
    /// Training points sampled per GP.
    #[arg(long)]
    t_max: Option<usize>,
    /// Coordinate-descent cycles of the factorization.
    #[arg(long)]
    nmf_iters: Option<usize>,
    /// Marginal-likelihood evaluations per GP fit.
    #[arg(long)]
    gp_budget: Option<usize>,
    /// unsquared or squared.
    #[arg(long, value_parser = parse_form)]
    rbf_form: Option<RbfForm>,
    /// Fit and evaluate local GPs on all cores.
    #[arg(long)]
    parallel: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// TOML file with generator settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    grid_rows: Option<usize>,
    #[arg(long)]
    grid_cols: Option<usize>,
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long)]
    interval_minutes: Option<u32>,
    #[arg(long)]
    spatial_regimes: Option<usize>,
    #[arg(long)]
    temporal_regimes: Option<usize>,
    /// Comma-separated means, spatial-major.
    #[arg(long, value_delimiter = ',')]
    regime_means: Option<Vec<f64>>,
    #[arg(long)]
    diurnal_amplitude: Option<f64>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    missing_rate: Option<f64>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    start_date: Option<NaiveDate>,
}

#[derive(Debug, Args)]
struct SelectKArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    window: WindowArgs,
    #[arg(long, default_value_t = 8)]
    trial_hour: u32,
    #[arg(long, default_value_t = 2)]
    k_min: usize,
    #[arg(long, default_value_t = 10)]
    k_max: usize,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
}

#[derive(Debug, Args)]
struct FactorizeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    window: WindowArgs,
    #[arg(long, default_value_t = 8)]
    trial_hour: u32,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    model_args: ModelArgs,
    /// gp, gp+, lgp, lgp+, lgr or lgr+.
    #[arg(long, default_value = "lgp")]
    model: ModelVariant,
    /// Trial hour whose window is used for training.
    #[arg(long, default_value_t = 8)]
    t: u32,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    model_args: ModelArgs,
    /// gp, gp+, lgp, lgp+, lgr or lgr+.
    #[arg(long, default_value = "lgp")]
    model: ModelVariant,
    /// Trial hour; predictions start one interval after it.
    #[arg(long, default_value_t = 8)]
    t: u32,
    /// Intervals ahead to predict.
    #[arg(long, default_value_t = 6)]
    steps: usize,
    /// Segments to predict (repeatable); defaults to every covered segment.
    #[arg(long = "segment")]
    segments: Vec<String>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    model_args: ModelArgs,
    /// Comma-separated variants; all six by default.
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<ModelVariant>>,
    /// Comma-separated trial hours.
    #[arg(long, value_delimiter = ',')]
    trial_hours: Option<Vec<u32>>,
    /// Comma-separated steps ahead.
    #[arg(long, value_delimiter = ',')]
    steps: Option<Vec<usize>>,
    /// Write zero runtimes so result files are reproducible.
    #[arg(long)]
    no_timing: bool,
    /// Run trials concurrently (needs --no-timing).
    #[arg(long)]
    parallel_trials: bool,
    /// Also write every prediction with its truth.
    #[arg(long)]
    keep_predictions: bool,
}

fn parse_form(s: &str) -> std::result::Result<RbfForm, String> {
    match s.to_ascii_lowercase().as_str() {
        "unsquared" => Ok(RbfForm::Unsquared),
        "squared" => Ok(RbfForm::Squared),
        _ => Err(format!("unknown kernel form {s:?} (expected unsquared or squared)")),
    }
}

fn load(common: &Common) -> Result<(RoadNetwork, SpeedStore)> {
    let network_path = common
        .network
        .as_ref()
        .ok_or_else(|| Error::Config("--network is required".into()))?;
    let speeds_path = common
        .speeds
        .as_ref()
        .ok_or_else(|| Error::Config("--speeds is required".into()))?;
    let network = read_network_csv(network_path)?;
    let store = read_speeds_csv(speeds_path, common.interval_minutes, &network)?;
    log::info!(
        "{} segments, {} observations over {} days",
        network.edges().len(),
        store.observation_count(),
        store.days().count()
    );
    Ok((network, store))
}

/// Defaults, then the config file, then flags.
fn resolve(common: &Common, window: &WindowArgs, model: Option<&ModelArgs>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &common.config {
        ConfigFile::read(path)?.apply(&mut cfg);
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if window.test_day.is_some() {
        cfg.test_day = window.test_day;
    }
    if let Some(d) = window.day_type {
        cfg.day_type = d;
    }
    if window.window_days.is_some() {
        cfg.window_days = window.window_days;
    }
    if let Some(f) = window.train_fraction {
        cfg.train_fraction = f;
    }
    if let Some(m) = model {
        let p = &mut cfg.predictor;
        p.k = m.k.unwrap_or(p.k);
        p.lambda = m.lambda.unwrap_or(p.lambda);
        p.t_max = m.t_max.unwrap_or(p.t_max);
        p.nmf_max_iters = m.nmf_iters.unwrap_or(p.nmf_max_iters);
        p.fit.budget = m.gp_budget.unwrap_or(p.fit.budget);
        p.fit.form = m.rbf_form.unwrap_or(p.fit.form);
        p.parallel |= m.parallel;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Training rows of the window matrix at `hour`.
fn training_matrix(
    cfg: &ExperimentConfig,
    network: &RoadNetwork,
    store: &SpeedStore,
    hour: u32,
) -> Result<(SpeedMatrix, Vec<SegmentId>)> {
    let covered = covered_segments(network, store);
    if covered.is_empty() {
        return Err(Error::Config("no covered segment is in the network".into()));
    }
    let (train, _) = cfg.split(&covered);
    let spec = cfg.window(store, hour)?;
    log::info!(
        "window ending {} {:02}:00, {} prior {} days, {} training rows",
        spec.test_day,
        hour,
        spec.window_days,
        spec.day_type,
        train.len()
    );
    Ok((build_window_matrix(store, &spec, &train)?, covered))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn synth(a: &SynthArgs) -> Result<()> {
    let mut spec = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str::<SynthSpec>(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => SynthSpec::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = &a.$field {
                spec.$field = v.clone();
            })*
        };
    }
    set!(
        seed, grid_rows, grid_cols, segments, interval_minutes, spatial_regimes,
        temporal_regimes, regime_means, diurnal_amplitude, noise_std, missing_rate, days,
        start_date
    );
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let data = generate_synthetic(&spec)?;
    let (network, speeds) = write_synthetic(&data, &out)?;
    let spec_text = toml::to_string(&spec).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&out.join("synth.toml"), &spec_text)?;
    println!("{}\n{}", network.display(), speeds.display());
    Ok(())
}

fn select_k_cmd(a: &SelectKArgs) -> Result<()> {
    let cfg = resolve(&a.common, &a.window, None)?;
    if a.k_min == 0 || a.k_min > a.k_max {
        return Err(Error::Config(format!("bad K range {}..={}", a.k_min, a.k_max)));
    }
    let (network, store) = load(&a.common)?;
    let (d, _) = training_matrix(&cfg, &network, &store, a.trial_hour)?;
    let kcfg = KSelectionConfig {
        folds: a.folds,
        ..KSelectionConfig::new(a.k_min..=a.k_max)
            .with_seed(cfg.seed)
            .with_lambda(a.lambda.unwrap_or(cfg.predictor.lambda))
            .with_max_iters(a.iters.unwrap_or(cfg.predictor.nmf_max_iters))
    };
    let report = select_k(&d, &kcfg)?;
    create_dir(&a.common.out)?;
    write_k_selection_csv(&report, &a.common.out)?;
    for (k, (m, s)) in report.ks.iter().zip(report.mean_r2.iter().zip(&report.std_r2)) {
        println!("K={k:<3} r2={m:.6} ± {s:.6}");
    }
    println!("chosen K = {}", report.chosen);
    Ok(())
}

fn factorize_cmd(a: &FactorizeArgs) -> Result<()> {
    let cfg = resolve(&a.common, &a.window, None)?;
    let (network, store) = load(&a.common)?;
    let (d, _) = training_matrix(&cfg, &network, &store, a.trial_hour)?;
    let nmf = NmfConfig::new(a.k.unwrap_or(cfg.predictor.k))
        .with_lambda(a.lambda.unwrap_or(cfg.predictor.lambda))
        .with_seed(cfg.seed)
        .with_max_iters(a.iters.unwrap_or(cfg.predictor.nmf_max_iters));
    let f = factorize(&d, &nmf)?;
    write_factorization(&a.common.out, &f)?;
    let mut trace = String::from("iteration,residual\n");
    for (i, r) in f.residual_trace().iter().enumerate() {
        trace.push_str(&format!("{i},{r}\n"));
    }
    write_text(&a.common.out.join("residual_trace.csv"), &trace)?;
    let mut rows = String::from("segment_id\n");
    for s in d.segments() {
        rows.push_str(&format!("{s}\n"));
    }
    write_text(&a.common.out.join("rows.csv"), &rows)?;
    println!(
        "K={} iterations={} residual={:.6}",
        f.k(),
        f.iterations(),
        f.final_residual()
    );
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let mut cfg = resolve(&a.common, &a.window, Some(&a.model_args))?;
    cfg.predictor.variant = a.model;
    cfg.predictor.seed = cfg.seed;
    let (network, store) = load(&a.common)?;
    let (d, _) = training_matrix(&cfg, &network, &store, a.t)?;
    let features = derive_features(&network);
    let p = learn(&d, &network, &features, &cfg.predictor)?;
    let out = &a.common.out;
    create_dir(out)?;

    let mut segments = String::from("segment_id\n");
    for s in p.training_segments() {
        segments.push_str(&format!("{s}\n"));
    }
    write_text(&out.join("training_segments.csv"), &segments)?;
    if let Some(f) = p.factorization() {
        write_factorization(out.join("factorization"), f)?;
    }
    if let Some((spatial, temporal)) = p.clusterings() {
        let mut s = String::from("segment_id,cluster_i\n");
        for (seg, label) in spatial.segments().iter().zip(spatial.labels()) {
            s.push_str(&format!("{seg},{label}\n"));
        }
        write_text(&out.join("spatial_clusters.csv"), &s)?;
        let mut s = String::from("t,cluster_j\n");
        for (t, label) in temporal.labels().iter().enumerate() {
            s.push_str(&format!("{t},{label}\n"));
        }
        write_text(&out.join("temporal_clusters.csv"), &s)?;
    }
    if let Some(local) = p.local_subsets() {
        let mut s = String::from("cluster_i,cluster_j,entries\n");
        for (i, j, pool) in local.iter() {
            s.push_str(&format!("{i},{j},{}\n", pool.len()));
        }
        write_text(&out.join("local_pools.csv"), &s)?;
    }
    if let Some(grid) = p.grid() {
        let mut s = String::from("segment_id,cell\n");
        for (seg, cell) in grid.cells() {
            s.push_str(&format!("{seg},{cell}\n"));
        }
        write_text(&out.join("grid_cells.csv"), &s)?;
    }
    for ((i, j), text) in p.fitted_diagnostics() {
        write_text(&out.join(format!("gp_{i}_{j}.toml")), &text)?;
    }
    write_text(&out.join("run.toml"), &ConfigFile::from_experiment(&cfg).to_toml())?;
    println!(
        "{} trained on {} segments, {} GP fits",
        a.model,
        p.training_segments().len(),
        p.fits_performed()
    );
    Ok(())
}

fn predict_cmd(a: &PredictArgs) -> Result<()> {
    let mut cfg = resolve(&a.common, &a.window, Some(&a.model_args))?;
    cfg.predictor.variant = a.model;
    cfg.predictor.seed = cfg.seed;
    if a.steps == 0 {
        return Err(Error::Config("--steps must be at least 1".into()));
    }
    let (network, store) = load(&a.common)?;
    let (d, covered) = training_matrix(&cfg, &network, &store, a.t)?;
    let targets: Vec<SegmentId> = if a.segments.is_empty() {
        covered
    } else {
        a.segments.iter().map(SegmentId::new).collect()
    };
    let cutoff = cfg.window(&store, a.t)?.trial_interval(store.interval_minutes());
    let last = (cutoff + a.steps).min(store.intervals_per_day() - 1);
    if last <= cutoff {
        return Err(Error::Config(format!("trial hour {} leaves no interval to predict", a.t)));
    }
    let queries: Vec<Query> = (cutoff + 1..=last)
        .flat_map(|t| targets.iter().map(move |s| Query::new(s.clone(), t)))
        .collect();
    let features = derive_features(&network);
    let p = learn(&d, &network, &features, &cfg.predictor)?;
    let predictions = p.predict(&queries)?;
    create_dir(&a.common.out)?;
    let path = a.common.out.join("predictions.csv");
    write_predictions_csv(&predictions, &path)?;
    println!("{} predictions written to {}", predictions.len(), path.display());
    Ok(())
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<()> {
    let mut cfg = resolve(&a.common, &a.window, Some(&a.model_args))?;
    if let Some(v) = &a.variants {
        cfg.variants = v.clone();
    }
    if let Some(h) = &a.trial_hours {
        cfg.trial_hours = h.clone();
    }
    if let Some(s) = &a.steps {
        cfg.steps = s.clone();
    }
    if a.no_timing {
        cfg.record_timing = false;
    }
    cfg.parallel_trials |= a.parallel_trials;
    cfg.keep_predictions |= a.keep_predictions;
    if cfg.parallel_trials && cfg.record_timing {
        log::warn!("trials run serially while timing is recorded");
    }
    let (network, store) = load(&a.common)?;
    let out = run_experiment(&cfg, &network, &store)?;
    write_outputs(&out, &a.common.out)?;
    let mut snapshot = ConfigFile::from_experiment(&cfg);
    snapshot.test_day = Some(out.test_day);
    write_text(&a.common.out.join("run.toml"), &snapshot.to_toml())?;
    if out.skipped_cells > 0 {
        log::warn!("{} scored cells had no truth and were skipped", out.skipped_cells);
    }
    for r in &out.significance {
        let p = r.p_value.map_or("NA".to_string(), |p| format!("{p:.4}"));
        println!("{:<14} {:<5} p={p}", r.pair, r.metric);
    }
    println!("results written to {}", a.common.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::SelectK(a) => select_k_cmd(a),
        Command::Factorize(a) => factorize_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
