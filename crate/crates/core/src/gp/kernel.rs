use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::GpError;

/// Shape of the radial kernel `exp(−‖x − x′‖ / l²)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RbfForm {
    /// Unsquared distance over `l²`; an exponential kernel.
    #[default]
    Unsquared,
    /// Squared distance over `l²`; the squared-exponential kernel.
    Squared,
}

impl RbfForm {
    /// Distance term that enters the exponent for a Euclidean distance `d`.
    #[inline]
    pub fn transform(self, d: f64) -> f64 {
        match self {
            RbfForm::Unsquared => d,
            RbfForm::Squared => d * d,
        }
    }
}

/// Kernel hyperparameters `Θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub spatial_lengthscale: f64,
    pub temporal_lengthscale: f64,
    /// One per node-wise numeric feature, then one per edge-wise numeric
    /// feature. Ignored unless `use_side_info`.
    pub side_lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
    pub use_side_info: bool,
    #[serde(default)]
    pub form: RbfForm,
}

impl KernelConfig {
    pub fn new(spatial: f64, temporal: f64, signal: f64, noise: f64) -> Self {
        KernelConfig {
            spatial_lengthscale: spatial,
            temporal_lengthscale: temporal,
            side_lengthscales: Vec::new(),
            signal_variance: signal,
            noise_variance: noise,
            use_side_info: false,
            form: RbfForm::Unsquared,
        }
    }

    pub fn with_side_info(mut self, lengthscales: Vec<f64>) -> Self {
        self.side_lengthscales = lengthscales;
        self.use_side_info = true;
        self
    }

    pub fn validate(&self) -> Result<(), GpError> {
        let positive = |name: &'static str, value: f64| {
            if value.is_finite() && value > 0.0 {
                Ok(())
            } else {
                Err(GpError::InvalidHyperparameter { name, value })
            }
        };
        positive("spatial_lengthscale", self.spatial_lengthscale)?;
        positive("temporal_lengthscale", self.temporal_lengthscale)?;
        positive("signal_variance", self.signal_variance)?;
        if self.use_side_info {
            for &l in &self.side_lengthscales {
                positive("side_lengthscale", l)?;
            }
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(GpError::InvalidHyperparameter {
                name: "noise_variance",
                value: self.noise_variance,
            });
        }
        Ok(())
    }
}

/// Standardized side information of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SideInfo {
    /// Node-wise numeric features of the tail node `u`.
    pub node_from: Vec<f64>,
    /// Node-wise numeric features of the head node `v`; same length as `node_from`.
    pub node_to: Vec<f64>,
    pub edge_numeric: Vec<f64>,
    /// One-hot block per categorical feature.
    pub edge_categorical: Vec<Vec<f64>>,
}

impl SideInfo {
    /// Number of lengthscales the additive side kernel needs.
    pub fn numeric_groups(&self) -> usize {
        self.node_from.len() + self.edge_numeric.len()
    }

    fn shape(&self) -> (usize, usize, Vec<usize>) {
        (
            self.node_from.len(),
            self.edge_numeric.len(),
            self.edge_categorical.iter().map(Vec::len).collect(),
        )
    }

    pub(crate) fn check_compatible(&self, other: &SideInfo) -> Result<(), GpError> {
        if self.node_from.len() != self.node_to.len() {
            return Err(GpError::SideInfoMismatch(
                "node-wise vectors of u and v differ in length".into(),
            ));
        }
        if self.shape() != other.shape() {
            return Err(GpError::SideInfoMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}

/// Query or training location: a directed segment by its endpoint
/// coordinates, a time of day scaled to `[0, 1)`, optional side information.
#[derive(Debug, Clone, PartialEq)]
pub struct GpInput {
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub time: f64,
    pub side: Option<Arc<SideInfo>>,
}

impl GpInput {
    pub fn new(from: [f64; 2], to: [f64; 2], time: f64) -> Self {
        GpInput {
            from,
            to,
            time,
            side: None,
        }
    }

    pub fn with_side(mut self, side: Arc<SideInfo>) -> Self {
        self.side = Some(side);
        self
    }

    pub(crate) fn is_valid(&self) -> bool {
        self.from.iter().chain(&self.to).all(|c| c.is_finite())
            && (0.0..1.0).contains(&self.time)
    }
}

#[inline]
pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `exp(−‖x − x′‖ / l²)` (or the squared-distance variant).
pub fn rbf(x: &[f64], y: &[f64], lengthscale: f64, form: RbfForm) -> f64 {
    (-form.transform(euclid(x, y)) / (lengthscale * lengthscale)).exp()
}

/// Directed-edge kernel `k(u, u′)·k(v, v′)` on endpoint coordinates.
pub fn edge_kernel(a: &GpInput, b: &GpInput, lengthscale: f64, form: RbfForm) -> f64 {
    rbf(&a.from, &b.from, lengthscale, form) * rbf(&a.to, &b.to, lengthscale, form)
}

/// Additive side-information kernel: per node-wise feature
/// `k(f_u, f_u′)·k(f_v, f_v′)`, per edge-wise numeric feature `k(f_e, f_e′)`,
/// and a one-hot dot product per categorical feature.
pub fn side_kernel(a: &SideInfo, b: &SideInfo, lengthscales: &[f64], form: RbfForm) -> f64 {
    let n_node = a.node_from.len();
    let mut total = 0.0;
    for i in 0..n_node {
        let l = lengthscales[i];
        total += rbf(&[a.node_from[i]], &[b.node_from[i]], l, form)
            * rbf(&[a.node_to[i]], &[b.node_to[i]], l, form);
    }
    for (j, (x, y)) in a.edge_numeric.iter().zip(&b.edge_numeric).enumerate() {
        total += rbf(&[*x], &[*y], lengthscales[n_node + j], form);
    }
    for (x, y) in a.edge_categorical.iter().zip(&b.edge_categorical) {
        total += x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    }
    total
}

/// `σ_f² · k_edge · k_time`, plus the side kernel when enabled.
pub fn spacetime_kernel(a: &GpInput, b: &GpInput, theta: &KernelConfig) -> Result<f64, GpError> {
    let base = theta.signal_variance
        * edge_kernel(a, b, theta.spatial_lengthscale, theta.form)
        * rbf(&[a.time], &[b.time], theta.temporal_lengthscale, theta.form);
    if !theta.use_side_info {
        return Ok(base);
    }
    let (Some(sa), Some(sb)) = (&a.side, &b.side) else {
        return Err(GpError::MissingSideInfo(usize::from(a.side.is_some())));
    };
    sa.check_compatible(sb)?;
    if theta.side_lengthscales.len() != sa.numeric_groups() {
        return Err(GpError::SideInfoMismatch(format!(
            "{} side lengthscales for {} numeric features",
            theta.side_lengthscales.len(),
            sa.numeric_groups()
        )));
    }
    Ok(base + side_kernel(sa, sb, &theta.side_lengthscales, theta.form))
}
