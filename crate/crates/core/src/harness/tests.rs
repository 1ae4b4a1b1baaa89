use super::*;
use crate::data::DayType;
use crate::predictor::ModelVariant;

fn small_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        grid_rows: 4,
        grid_cols: 4,
        segments: 40,
        interval_minutes: 60,
        days: 8,
        seed,
        ..SynthSpec::default()
    }
}

#[test]
fn synth_is_deterministic_byte_for_byte() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let a = generate_synthetic(&small_spec(3)).unwrap();
    let b = generate_synthetic(&small_spec(3)).unwrap();
    let (na, sa) = write_synthetic(&a, dir_a.path()).unwrap();
    let (nb, sb) = write_synthetic(&b, dir_b.path()).unwrap();
    assert_eq!(std::fs::read(na).unwrap(), std::fs::read(nb).unwrap());
    assert_eq!(std::fs::read(sa).unwrap(), std::fs::read(sb).unwrap());
    let c = generate_synthetic(&small_spec(4)).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn default_spec_has_benchmark_shape() {
    let spec = SynthSpec {
        days: 1,
        ..SynthSpec::default()
    };
    let data = generate_synthetic(&spec).unwrap();
    assert_eq!(data.network.edges().len(), 476);
    let store = data.store().unwrap();
    assert_eq!(store.intervals_per_day(), 288);
    assert_eq!(store.covered_segments().len(), 476);
}

#[test]
fn noiseless_days_repeat_the_template() {
    let spec = SynthSpec {
        noise_std: 0.0,
        missing_rate: 0.0,
        ..small_spec(9)
    };
    let data = generate_synthetic(&spec).unwrap();
    let store = data.store().unwrap();
    let days: Vec<_> = store.days().collect();
    assert_eq!(days.len(), 8);
    for s in store.covered_segments() {
        for j in 0..store.intervals_per_day() {
            let tpl = data.template(s, j).unwrap();
            for &d in &days {
                // records carry four decimals
                let v = store.get(d, s, j).unwrap();
                assert!((v - tpl).abs() <= 5e-5, "{v} vs {tpl}");
            }
        }
    }
}

#[test]
fn every_day_keeps_each_row_and_column() {
    let spec = SynthSpec {
        missing_rate: 0.9,
        ..small_spec(5)
    };
    let data = generate_synthetic(&spec).unwrap();
    let store = data.store().unwrap();
    let m = store.intervals_per_day();
    for d in store.days() {
        for s in store.covered_segments() {
            assert!((0..m).any(|j| store.get(d, s, j).is_some()), "{s} empty on {d}");
        }
        for j in 0..m {
            assert!(store
                .covered_segments()
                .iter()
                .any(|s| store.get(d, s, j).is_some()));
        }
    }
}

#[test]
fn synth_spec_validation() {
    let bad = SynthSpec {
        segments: 1000,
        ..small_spec(0)
    };
    assert!(matches!(generate_synthetic(&bad), Err(HarnessError::Synth(_))));
    let bad = SynthSpec {
        interval_minutes: 7,
        ..small_spec(0)
    };
    assert!(generate_synthetic(&bad).is_err());
}

fn quick_config(variants: Vec<ModelVariant>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        trial_hours: vec![6, 12],
        steps: vec![1, 3],
        variants,
        record_timing: false,
        ..ExperimentConfig::default()
    };
    cfg.predictor.k = 2;
    cfg.predictor.t_max = 120;
    cfg.predictor.nmf_max_iters = 50;
    cfg.predictor.fit.budget = 40;
    cfg
}

#[test]
fn experiment_produces_one_row_per_trial_step_and_variant() {
    let data = generate_synthetic(&small_spec(1)).unwrap();
    let store = data.store().unwrap();
    let cfg = quick_config(vec![ModelVariant::Gp, ModelVariant::Lgp, ModelVariant::Lgr]);
    let out = run_experiment(&cfg, &data.network, &store).unwrap();
    assert_eq!(out.results.len(), 2 * 2 * 3);
    assert_eq!(out.test_day.to_string(), "2024-01-08");
    assert_eq!(out.train_segments.len(), 16);
    assert_eq!(out.train_segments.len() + out.test_segments.len(), 40);
    assert_eq!(out.nmf_runtimes.len(), 2);
    assert!(out.results.iter().all(|r| r.rmse.is_finite() && r.runtime_s == 0.0));
    // two trials are too few for the test
    assert!(out.significance.iter().all(|r| r.p_value.is_none()));
    assert_eq!(out.significance.len(), 6);

    let dir = tempfile::tempdir().unwrap();
    write_outputs(&out, dir.path()).unwrap();
    let sig = std::fs::read_to_string(dir.path().join("significance.csv")).unwrap();
    assert!(sig.lines().nth(1).unwrap().ends_with(",NA,NA,0"));
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().filter(|l| l.contains(",all,")).count(), 3);
    assert!(!dir.path().join("predictions.csv").exists());
}

#[test]
fn experiment_is_deterministic_without_timing() {
    let data = generate_synthetic(&small_spec(2)).unwrap();
    let store = data.store().unwrap();
    let mut cfg = quick_config(vec![ModelVariant::LgpSide, ModelVariant::GpSide]);
    cfg.keep_predictions = true;
    let a = run_experiment(&cfg, &data.network, &store).unwrap();
    cfg.parallel_trials = true;
    let b = run_experiment(&cfg, &data.network, &store).unwrap();
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_outputs(&a, da.path()).unwrap();
    write_outputs(&b, db.path()).unwrap();
    for f in ["results.csv", "summary.csv", "predictions.csv", "significance.csv"] {
        assert_eq!(
            std::fs::read(da.path().join(f)).unwrap(),
            std::fs::read(db.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn noiseless_single_regime_gp_is_near_exact() {
    let spec = SynthSpec {
        spatial_regimes: 1,
        temporal_regimes: 1,
        regime_means: vec![40.0],
        diurnal_amplitude: 0.0,
        noise_std: 0.0,
        missing_rate: 0.0,
        ..small_spec(7)
    };
    let data = generate_synthetic(&spec).unwrap();
    let store = data.store().unwrap();
    let mut cfg = quick_config(vec![ModelVariant::Gp]);
    cfg.steps = vec![3];
    let out = run_experiment(&cfg, &data.network, &store).unwrap();
    for r in &out.results {
        assert!(r.rmse < 0.1, "{r:?}");
    }
}

#[test]
fn explicit_test_day_and_missing_window() {
    let data = generate_synthetic(&small_spec(1)).unwrap();
    let store = data.store().unwrap();
    let mut cfg = quick_config(vec![ModelVariant::Gp]);
    cfg.day_type = DayType::Weekend;
    assert!(matches!(
        run_experiment(&cfg, &data.network, &store),
        Err(HarnessError::Config(_))
    ));
    cfg.day_type = DayType::Weekday;
    cfg.test_day = Some("2024-01-03".parse().unwrap());
    assert!(run_experiment(&cfg, &data.network, &store).is_err());
    cfg.window_days = Some(2);
    let out = run_experiment(&cfg, &data.network, &store).unwrap();
    assert_eq!(out.test_day.to_string(), "2024-01-03");
}

#[test]
fn late_steps_past_midnight_are_skipped() {
    let data = generate_synthetic(&small_spec(1)).unwrap();
    let store = data.store().unwrap();
    let mut cfg = quick_config(vec![ModelVariant::Gp]);
    cfg.trial_hours = vec![22];
    cfg.steps = vec![1, 2, 3];
    let out = run_experiment(&cfg, &data.network, &store).unwrap();
    // hourly intervals: 23 is the only reachable slot
    assert_eq!(out.results.len(), 1);
    assert_eq!(out.results[0].step, 1);
    assert!(out.skipped_cells >= 2 * 40);
}

#[test]
fn config_file_round_trip_and_overlay() {
    let file = ConfigFile::from_toml(
        "k = 7\nvariants = [\"gp\", \"lgp+\"]\nday_type = \"weekend\"\nrbf_form = \"squared\"\n",
    )
    .unwrap();
    let mut cfg = ExperimentConfig::default();
    file.apply(&mut cfg);
    assert_eq!(cfg.predictor.k, 7);
    assert_eq!(cfg.variants, vec![ModelVariant::Gp, ModelVariant::LgpSide]);
    assert_eq!(cfg.day_type, DayType::Weekend);
    assert_eq!(cfg.steps, (1..=6).collect::<Vec<_>>());

    let snapshot = ConfigFile::from_experiment(&cfg);
    let mut again = ExperimentConfig::default();
    ConfigFile::from_toml(&snapshot.to_toml()).unwrap().apply(&mut again);
    assert_eq!(again, cfg);

    assert!(ConfigFile::from_toml("kk = 3").is_err());
}

#[test]
fn experiment_config_validation() {
    let mut cfg = ExperimentConfig {
        steps: vec![0],
        ..ExperimentConfig::default()
    };
    assert!(cfg.validate().is_err());
    cfg.steps = vec![1];
    cfg.trial_hours = vec![24];
    assert!(cfg.validate().is_err());
    cfg.trial_hours = vec![0];
    cfg.train_fraction = 0.0;
    assert!(cfg.validate().is_err());
}
