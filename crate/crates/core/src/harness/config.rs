use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, HarnessError};
use crate::data::DayType;
use crate::gp::RbfForm;
use crate::predictor::ModelVariant;

/// Experiment settings read from a TOML file. Every key is optional; unset
/// keys keep the defaults (or whatever the command line says).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub test_day: Option<NaiveDate>,
    pub day_type: Option<DayType>,
    pub window_days: Option<usize>,
    pub trial_hours: Option<Vec<u32>>,
    pub steps: Option<Vec<usize>>,
    pub variants: Option<Vec<ModelVariant>>,
    pub k: Option<usize>,
    pub lambda: Option<f64>,
    pub t_max: Option<usize>,
    pub nmf_max_iters: Option<usize>,
    pub train_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub record_timing: Option<bool>,
    pub parallel: Option<bool>,
    pub parallel_trials: Option<bool>,
    pub keep_predictions: Option<bool>,
    pub rbf_form: Option<RbfForm>,
    pub gp_budget: Option<usize>,
    pub gp_starts: Option<usize>,
}

impl ConfigFile {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Overlays the keys that are set onto `cfg`.
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = &self.$field {
                    $target = v.clone();
                })*
            };
        }
        if self.test_day.is_some() {
            cfg.test_day = self.test_day;
        }
        if self.window_days.is_some() {
            cfg.window_days = self.window_days;
        }
        set!(
            day_type => cfg.day_type,
            trial_hours => cfg.trial_hours,
            steps => cfg.steps,
            variants => cfg.variants,
            k => cfg.predictor.k,
            lambda => cfg.predictor.lambda,
            t_max => cfg.predictor.t_max,
            nmf_max_iters => cfg.predictor.nmf_max_iters,
            train_fraction => cfg.train_fraction,
            seed => cfg.seed,
            record_timing => cfg.record_timing,
            parallel => cfg.predictor.parallel,
            parallel_trials => cfg.parallel_trials,
            keep_predictions => cfg.keep_predictions,
            rbf_form => cfg.predictor.fit.form,
            gp_budget => cfg.predictor.fit.budget,
            gp_starts => cfg.predictor.fit.starts,
        );
    }

    /// Snapshot of a resolved configuration, suitable for `run.toml`.
    pub fn from_experiment(cfg: &ExperimentConfig) -> Self {
        let p = &cfg.predictor;
        ConfigFile {
            test_day: cfg.test_day,
            day_type: Some(cfg.day_type),
            window_days: cfg.window_days,
            trial_hours: Some(cfg.trial_hours.clone()),
            steps: Some(cfg.steps.clone()),
            variants: Some(cfg.variants.clone()),
            k: Some(p.k),
            lambda: Some(p.lambda),
            t_max: Some(p.t_max),
            nmf_max_iters: Some(p.nmf_max_iters),
            train_fraction: Some(cfg.train_fraction),
            seed: Some(cfg.seed),
            record_timing: Some(cfg.record_timing),
            parallel: Some(p.parallel),
            parallel_trials: Some(cfg.parallel_trials),
            keep_predictions: Some(cfg.keep_predictions),
            rbf_form: Some(p.fit.form),
            gp_budget: Some(p.fit.budget),
            gp_starts: Some(p.fit.starts),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
