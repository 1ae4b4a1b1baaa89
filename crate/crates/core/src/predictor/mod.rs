//! The six prediction models: a global GP, NMF-localized GPs and
//! grid-localized GPs, each with and without side information.
//!
//! Local GPs are fitted lazily, once per cluster pair (or grid cell), on a
//! uniform sample of at most `T_max` observations of that pair's pool.

mod sampling;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{FeatureTable, RoadNetwork, SegmentId, SpeedMatrix};
use crate::gp::{self, FitOptions, GpError, GpInput, GpModel, SideInfo};
use crate::localization::{
    grid_partition, localize, normalize_membership, temporal_lookup, Entry, GridClustering,
    LocalSubsets, LocalizationError, NeighborIndex, SpatialClustering, TemporalClustering,
};
use crate::nmf::{factorize, Factorization, NmfConfig, NmfError, DEFAULT_LAMBDA, DEFAULT_MAX_ITERS};

pub use sampling::{sample_training, stream_seed};

pub const DEFAULT_T_MAX: usize = 600;
/// Pools smaller than this fall back to the global pool.
pub const MIN_LOCAL_POOL: usize = 5;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Nmf(#[from] NmfError),
    #[error(transparent)]
    Localization(#[from] LocalizationError),
    #[error("invalid predictor configuration: {0}")]
    Config(String),
    #[error("training matrix has no observed entries")]
    EmptyMatrix,
    #[error("training pool is empty")]
    EmptyPool,
    #[error("segment {0} is not in the network or has no features")]
    UnknownSegment(String),
    #[error("unknown model variant {0:?} (expected gp, gp+, lgp, lgp+, lgr or lgr+)")]
    UnknownVariant(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelVariant {
    #[serde(rename = "gp")]
    Gp,
    #[serde(rename = "gp+")]
    GpSide,
    #[serde(rename = "lgp")]
    Lgp,
    #[serde(rename = "lgp+")]
    LgpSide,
    #[serde(rename = "lgr")]
    Lgr,
    #[serde(rename = "lgr+")]
    LgrSide,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 6] = [
        ModelVariant::Gp,
        ModelVariant::GpSide,
        ModelVariant::Lgp,
        ModelVariant::LgpSide,
        ModelVariant::Lgr,
        ModelVariant::LgrSide,
    ];

    pub fn uses_side_info(self) -> bool {
        matches!(
            self,
            ModelVariant::GpSide | ModelVariant::LgpSide | ModelVariant::LgrSide
        )
    }

    pub fn is_local(self) -> bool {
        !matches!(self, ModelVariant::Gp | ModelVariant::GpSide)
    }

    pub fn is_nmf(self) -> bool {
        matches!(self, ModelVariant::Lgp | ModelVariant::LgpSide)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Gp => "gp",
            ModelVariant::GpSide => "gp+",
            ModelVariant::Lgp => "lgp",
            ModelVariant::LgpSide => "lgp+",
            ModelVariant::Lgr => "lgr",
            ModelVariant::LgrSide => "lgr+",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = PredictorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.name() == lower)
            .ok_or_else(|| PredictorError::UnknownVariant(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub variant: ModelVariant,
    /// Clusters per axis (LGP) or grid cells per axis (LGR).
    pub k: usize,
    pub lambda: f64,
    pub t_max: usize,
    pub seed: u64,
    pub nmf_max_iters: usize,
    pub fit: FitOptions,
    /// Fit and evaluate independent local GPs on the rayon pool.
    pub parallel: bool,
}

impl PredictorConfig {
    pub fn new(variant: ModelVariant) -> Self {
        PredictorConfig {
            variant,
            k: 5,
            lambda: DEFAULT_LAMBDA,
            t_max: DEFAULT_T_MAX,
            seed: 0,
            nmf_max_iters: DEFAULT_MAX_ITERS,
            fit: FitOptions::default(),
            parallel: false,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn validate(&self) -> Result<(), PredictorError> {
        if self.t_max < 2 {
            return Err(PredictorError::Config(format!("T_max = {} < 2", self.t_max)));
        }
        if self.variant.is_local() && self.k == 0 {
            return Err(PredictorError::Config("K must be at least 1".into()));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(PredictorError::Config(format!("lambda = {}", self.lambda)));
        }
        Ok(())
    }
}

/// `(segment, absolute interval)`; intervals past the end of the day wrap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub segment: SegmentId,
    pub t: usize,
}

impl Query {
    pub fn new(segment: impl Into<SegmentId>, t: usize) -> Self {
        Query {
            segment: segment.into(),
            t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub segment: SegmentId,
    pub t: usize,
    pub mean: f64,
    pub raw_mean: f64,
    pub variance: f64,
    /// Spatial cluster (LGP), grid cell (LGR) or 1 (GP).
    pub cluster_i: usize,
    /// Temporal cluster (LGP), 0 (LGR) or 1 (GP).
    pub cluster_j: usize,
    /// Served by the global pool because the local pool was too small.
    pub fallback: bool,
}

/// Builds kernel inputs for segments.
#[derive(Debug, Clone)]
struct InputBuilder {
    endpoints: BTreeMap<SegmentId, ([f64; 2], [f64; 2])>,
    side: BTreeMap<SegmentId, Arc<SideInfo>>,
    intervals: usize,
    use_side: bool,
}

impl InputBuilder {
    fn input(&self, segment: &SegmentId, t: usize) -> Result<GpInput, PredictorError> {
        let unknown = || PredictorError::UnknownSegment(segment.to_string());
        let &(from, to) = self.endpoints.get(segment).ok_or_else(unknown)?;
        let time = (t % self.intervals) as f64 / self.intervals as f64;
        let mut x = GpInput::new(from, to, time);
        if self.use_side {
            x = x.with_side(self.side.get(segment).ok_or_else(unknown)?.clone());
        }
        Ok(x)
    }
}

#[derive(Debug)]
enum Routing {
    Global,
    Nmf {
        factorization: Factorization,
        spatial: SpatialClustering,
        temporal: TemporalClustering,
        subsets: LocalSubsets,
        neighbors: NeighborIndex,
    },
    Grid {
        grid: GridClustering,
        pools: Vec<Vec<Entry>>,
    },
}

type Slot = OnceLock<Result<Arc<GpModel>, GpError>>;

/// A learned model. Local GPs are fitted on first use and cached; the
/// predictor can be shared across threads.
#[derive(Debug)]
pub struct TrainedPredictor {
    cfg: PredictorConfig,
    segments: Vec<SegmentId>,
    features: FeatureTable,
    pool: Vec<Entry>,
    builder: InputBuilder,
    routing: Routing,
    /// Slot 0 is the global GP, then one per cluster pair or grid cell.
    slots: Vec<Slot>,
    fits: AtomicUsize,
}

/// Learns a predictor from the training matrix `d` (rows are training
/// segments). Feature standardization statistics are recomputed over the
/// rows of `d`. GP variants fit their global model here; local variants only
/// build their partition.
pub fn learn(
    d: &SpeedMatrix,
    network: &RoadNetwork,
    features: &FeatureTable,
    cfg: &PredictorConfig,
) -> Result<TrainedPredictor, PredictorError> {
    cfg.validate()?;
    if d.nnz() == 0 {
        return Err(PredictorError::EmptyMatrix);
    }
    let features = features.with_stats_from(d.segments());
    let use_side = cfg.variant.uses_side_info();
    let mut builder = InputBuilder {
        endpoints: BTreeMap::new(),
        side: BTreeMap::new(),
        intervals: d.cols(),
        use_side,
    };
    for id in network.segment_ids() {
        if let Some((u, v)) = network.endpoints(id) {
            builder.endpoints.insert(id.clone(), (u.as_array(), v.as_array()));
        }
        if use_side {
            if let Some(s) = features.side_info(id) {
                builder.side.insert(id.clone(), Arc::new(s));
            }
        }
    }
    for s in d.segments() {
        if !builder.endpoints.contains_key(s) {
            return Err(PredictorError::UnknownSegment(s.to_string()));
        }
    }
    let pool: Vec<Entry> = d.observed().collect();

    let (routing, local_slots) = match cfg.variant {
        ModelVariant::Gp | ModelVariant::GpSide => (Routing::Global, 0),
        ModelVariant::Lgp | ModelVariant::LgpSide => {
            let nmf = NmfConfig::new(cfg.k)
                .with_lambda(cfg.lambda)
                .with_seed(cfg.seed)
                .with_max_iters(cfg.nmf_max_iters);
            let factorization = factorize(d, &nmf)?;
            let (spatial, temporal) = normalize_membership(&factorization, d.segments())?;
            let subsets = localize(d, &spatial, &temporal)?;
            let neighbors = NeighborIndex::new(&features, &spatial)?;
            (
                Routing::Nmf {
                    factorization,
                    spatial,
                    temporal,
                    subsets,
                    neighbors,
                },
                cfg.k * cfg.k,
            )
        }
        ModelVariant::Lgr | ModelVariant::LgrSide => {
            let grid = grid_partition(network, d.segments(), cfg.k)?;
            let mut pools = vec![Vec::new(); cfg.k * cfg.k];
            for &(i, j, v) in &pool {
                let cell = grid.cell_of(&d.segments()[i]).expect("every row is gridded");
                pools[cell - 1].push((i, j, v));
            }
            (Routing::Grid { grid, pools }, cfg.k * cfg.k)
        }
    };

    let predictor = TrainedPredictor {
        cfg: cfg.clone(),
        segments: d.segments().to_vec(),
        features,
        pool,
        builder,
        routing,
        slots: (0..=local_slots).map(|_| OnceLock::new()).collect(),
        fits: AtomicUsize::new(0),
    };
    if !cfg.variant.is_local() {
        predictor.model(0)?;
    }
    Ok(predictor)
}

/// Where one query is served.
#[derive(Debug, Clone, Copy)]
struct Route {
    slot: usize,
    i: usize,
    j: usize,
    fallback: bool,
}

impl TrainedPredictor {
    pub fn config(&self) -> &PredictorConfig {
        &self.cfg
    }

    pub fn variant(&self) -> ModelVariant {
        self.cfg.variant
    }

    /// Rows of the training matrix.
    pub fn training_segments(&self) -> &[SegmentId] {
        &self.segments
    }

    pub fn factorization(&self) -> Option<&Factorization> {
        match &self.routing {
            Routing::Nmf { factorization, .. } => Some(factorization),
            _ => None,
        }
    }

    pub fn clusterings(&self) -> Option<(&SpatialClustering, &TemporalClustering)> {
        match &self.routing {
            Routing::Nmf {
                spatial, temporal, ..
            } => Some((spatial, temporal)),
            _ => None,
        }
    }

    pub fn local_subsets(&self) -> Option<&LocalSubsets> {
        match &self.routing {
            Routing::Nmf { subsets, .. } => Some(subsets),
            _ => None,
        }
    }

    pub fn grid(&self) -> Option<&GridClustering> {
        match &self.routing {
            Routing::Grid { grid, .. } => Some(grid),
            _ => None,
        }
    }

    /// Number of GP fits performed so far, including the global one.
    pub fn fits_performed(&self) -> usize {
        self.fits.load(Ordering::SeqCst)
    }

    /// Training-set size of every fitted GP, by slot key `(i, j)`; the
    /// global GP is keyed `(0, 0)`.
    pub fn fitted_models(&self) -> Vec<((usize, usize), usize)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(s, slot)| match slot.get() {
                Some(Ok(m)) => Some((self.slot_key(s), m.len())),
                _ => None,
            })
            .collect()
    }

    /// TOML diagnostics of every fitted GP, keyed like [`fitted_models`].
    ///
    /// [`fitted_models`]: TrainedPredictor::fitted_models
    pub fn fitted_diagnostics(&self) -> Vec<((usize, usize), String)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(s, slot)| match slot.get() {
                Some(Ok(m)) => Some((self.slot_key(s), m.diagnostics())),
                _ => None,
            })
            .collect()
    }

    fn slot_key(&self, slot: usize) -> (usize, usize) {
        if slot == 0 {
            return (0, 0);
        }
        match &self.routing {
            Routing::Nmf { .. } => ((slot - 1) / self.cfg.k + 1, (slot - 1) % self.cfg.k + 1),
            _ => (slot, 0),
        }
    }

    fn slot_pool(&self, slot: usize) -> &[Entry] {
        if slot == 0 {
            return &self.pool;
        }
        match &self.routing {
            Routing::Global => &self.pool,
            Routing::Nmf { subsets, .. } => {
                let (i, j) = self.slot_key(slot);
                subsets.get(i, j)
            }
            Routing::Grid { pools, .. } => &pools[slot - 1],
        }
    }

    /// Stream for a slot. The global GP and cluster pair (1, 1) share
    /// stream `(0, 0)` so that a single-cluster LGP reproduces the GP.
    fn slot_stream(&self, slot: usize) -> u64 {
        let (i, j) = self.slot_key(slot);
        let (a, b) = match &self.routing {
            Routing::Grid { .. } if slot > 0 => (i - 1, 1),
            _ => (i.saturating_sub(1), j.saturating_sub(1)),
        };
        stream_seed(self.cfg.seed, a as u32, b as u32)
    }

    fn fit_slot(&self, slot: usize) -> Result<Arc<GpModel>, GpError> {
        self.fits.fetch_add(1, Ordering::SeqCst);
        let seed = self.slot_stream(slot);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sample = sample_training(self.slot_pool(slot), self.cfg.t_max, &mut rng)
            .map_err(|_| GpError::Empty)?;
        let mut inputs = Vec::with_capacity(sample.len());
        let mut targets = Vec::with_capacity(sample.len());
        for (i, j, v) in sample {
            let x = self
                .builder
                .input(&self.segments[i], j)
                .map_err(|_| GpError::BadInput(i))?;
            inputs.push(x);
            targets.push(v);
        }
        let model = gp::fit(
            &inputs,
            &targets,
            self.cfg.variant.uses_side_info(),
            seed,
            &self.cfg.fit,
        )?;
        log::debug!(
            "{} fitted slot {:?} on {} points",
            self.cfg.variant,
            self.slot_key(slot),
            model.len()
        );
        Ok(Arc::new(model))
    }

    fn model(&self, slot: usize) -> Result<Arc<GpModel>, PredictorError> {
        self.slots[slot]
            .get_or_init(|| self.fit_slot(slot))
            .clone()
            .map_err(PredictorError::from)
    }

    fn route(&self, q: &Query) -> Result<Route, PredictorError> {
        let k = self.cfg.k;
        let (slot, i, j) = match &self.routing {
            Routing::Global => return Ok(Route { slot: 0, i: 1, j: 1, fallback: false }),
            Routing::Nmf {
                spatial,
                temporal,
                neighbors,
                ..
            } => {
                let i = match spatial.label_of(&q.segment) {
                    Some(label) => label,
                    None => {
                        let f = self
                            .features
                            .standardized(&q.segment)
                            .ok_or_else(|| PredictorError::UnknownSegment(q.segment.to_string()))?;
                        neighbors.nearest(&f)?.1
                    }
                };
                let j = temporal_lookup(q.t, temporal);
                (1 + (i - 1) * k + (j - 1), i, j)
            }
            Routing::Grid { grid, .. } => {
                let cell = match grid.cell_of(&q.segment) {
                    Some(c) => c,
                    None => {
                        let (u, v) = self
                            .builder
                            .endpoints
                            .get(&q.segment)
                            .ok_or_else(|| PredictorError::UnknownSegment(q.segment.to_string()))?;
                        grid.cell_at(0.5 * (u[0] + v[0]), 0.5 * (u[1] + v[1]))
                    }
                };
                (cell, cell, 0)
            }
        };
        if self.slot_pool(slot).len() < MIN_LOCAL_POOL {
            return Ok(Route {
                slot: 0,
                i,
                j,
                fallback: true,
            });
        }
        Ok(Route {
            slot,
            i,
            j,
            fallback: false,
        })
    }

    /// Posterior mean and variance per query, in query order. Identical
    /// output with or without `parallel`.
    pub fn predict(&self, queries: &[Query]) -> Result<Vec<Prediction>, PredictorError> {
        let routes: Vec<Route> = queries
            .iter()
            .map(|q| self.route(q))
            .collect::<Result<_, _>>()?;
        let mut by_slot: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (qi, r) in routes.iter().enumerate() {
            by_slot.entry(r.slot).or_default().push(qi);
        }
        let groups: Vec<(usize, Vec<usize>)> = by_slot.into_iter().collect();
        let serve = |(slot, members): &(usize, Vec<usize>)| {
            let model = self.model(*slot)?;
            let inputs: Vec<GpInput> = members
                .iter()
                .map(|&qi| self.builder.input(&queries[qi].segment, queries[qi].t))
                .collect::<Result<_, _>>()?;
            Ok::<_, PredictorError>(model.predict(&inputs)?)
        };
        let results: Vec<_> = if self.cfg.parallel {
            groups.par_iter().map(serve).collect()
        } else {
            groups.iter().map(serve).collect()
        };

        let mut out: Vec<Option<Prediction>> = vec![None; queries.len()];
        for ((_, members), dist) in groups.iter().zip(results) {
            let dist = dist?;
            for (p, &qi) in members.iter().enumerate() {
                let r = routes[qi];
                out[qi] = Some(Prediction {
                    segment: queries[qi].segment.clone(),
                    t: queries[qi].t,
                    mean: dist.mean[p],
                    raw_mean: dist.raw_mean[p],
                    variance: dist.variance[p],
                    cluster_i: r.i,
                    cluster_j: r.j,
                    fallback: r.fallback,
                });
            }
        }
        Ok(out.into_iter().map(|p| p.expect("every query routed")).collect())
    }
}

/// Writes `segment_id,t,mean_mph,variance,cluster_i,cluster_j,fallback_flag`.
pub fn write_predictions<W: Write>(predictions: &[Prediction], mut w: W) -> std::io::Result<()> {
    writeln!(w, "segment_id,t,mean_mph,variance,cluster_i,cluster_j,fallback_flag")?;
    for p in predictions {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p.segment,
            p.t,
            p.mean,
            p.variance,
            p.cluster_i,
            p.cluster_j,
            u8::from(p.fallback)
        )?;
    }
    Ok(())
}

pub fn write_predictions_csv(
    predictions: &[Prediction],
    path: impl AsRef<Path>,
) -> Result<(), PredictorError> {
    let path = path.as_ref();
    let io = |e: std::io::Error| PredictorError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let file = std::fs::File::create(path).map_err(io)?;
    let mut w = std::io::BufWriter::new(file);
    write_predictions(predictions, &mut w).map_err(io)?;
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests;
