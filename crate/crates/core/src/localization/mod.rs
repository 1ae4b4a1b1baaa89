//! From factors to clusters: hard spatial and temporal assignments, query
//! mapping, the per-cluster-pair training subsets, K selection by
//! cross-validation, and the uniform grid used by the LGR baseline.

mod grid;
mod select;

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use thiserror::Error;

use crate::data::{FeatureTable, SegmentId, SpeedMatrix};
use crate::nmf::{Factorization, NmfError};

pub use grid::{grid_partition, GridClustering};
pub use select::{
    explained_variance, select_k, write_k_selection_csv, KSelectionConfig, KSelectionReport,
};

#[derive(Debug, Error)]
pub enum LocalizationError {
    #[error(transparent)]
    Nmf(#[from] NmfError),
    #[error("no training segments to map a query against")]
    NoTrainingSegments,
    #[error("query has {query} features, training segments have {training}")]
    FeatureDimension { query: usize, training: usize },
    #[error("explained variance needs at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("{0} targets but {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("target variance is zero")]
    ZeroVariance,
    #[error("invalid K range: {0}")]
    InvalidRange(String),
    #[error("fold {0} has no entries")]
    EmptyFold(usize),
    #[error("grid needs K >= 1 and at least one segment with coordinates: {0}")]
    Grid(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

/// Scales each row (`by_row`) or column to sum one; all-zero lines become
/// uniform. Returns the 1-based argmax label of every line, lowest index on
/// ties.
fn normalize_lines(m: &Array2<f64>, axis: Axis) -> (Array2<f64>, Vec<usize>) {
    let mut out = m.clone();
    let mut labels = Vec::with_capacity(out.len_of(axis));
    for mut line in out.axis_iter_mut(axis) {
        let sum: f64 = line.sum();
        if sum > 0.0 {
            line.mapv_inplace(|v| v / sum);
        } else {
            let k = line.len() as f64;
            line.fill(1.0 / k);
        }
        let mut best = 0;
        for (c, &v) in line.iter().enumerate() {
            if v > line[best] {
                best = c;
            }
        }
        labels.push(best + 1);
    }
    (out, labels)
}

/// Row-normalized `W̃` and the hard spatial label of every row segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialClustering {
    segments: Vec<SegmentId>,
    membership: Array2<f64>,
    labels: Vec<usize>,
    by_segment: BTreeMap<SegmentId, usize>,
}

impl SpatialClustering {
    /// Clusters the rows of `w`; row `i` belongs to `segments[i]`.
    pub fn from_w(w: &Array2<f64>, segments: &[SegmentId]) -> Result<Self, LocalizationError> {
        if w.nrows() != segments.len() {
            return Err(LocalizationError::Shape(format!(
                "W has {} rows for {} segments",
                w.nrows(),
                segments.len()
            )));
        }
        let (membership, labels) = normalize_lines(w, Axis(0));
        let by_segment = segments.iter().cloned().zip(labels.iter().copied()).collect();
        Ok(SpatialClustering {
            segments: segments.to_vec(),
            membership,
            labels,
            by_segment,
        })
    }

    pub fn k(&self) -> usize {
        self.membership.ncols()
    }

    pub fn membership(&self) -> &Array2<f64> {
        &self.membership
    }

    pub fn segments(&self) -> &[SegmentId] {
        &self.segments
    }

    /// Label in `1..=K` of each row.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_of(&self, segment: &SegmentId) -> Option<usize> {
        self.by_segment.get(segment).copied()
    }
}

/// Column-normalized `H̃` and the hard temporal label of every interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalClustering {
    membership: Array2<f64>,
    labels: Vec<usize>,
}

impl TemporalClustering {
    pub fn from_h(h: &Array2<f64>) -> Self {
        let (membership, labels) = normalize_lines(h, Axis(1));
        TemporalClustering { membership, labels }
    }

    pub fn k(&self) -> usize {
        self.membership.nrows()
    }

    pub fn membership(&self) -> &Array2<f64> {
        &self.membership
    }

    /// Label in `1..=K` of each interval of day.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn intervals(&self) -> usize {
        self.labels.len()
    }
}

/// Hardens a factorization of `D_t` into spatial and temporal clusters.
pub fn normalize_membership(
    f: &Factorization,
    segments: &[SegmentId],
) -> Result<(SpatialClustering, TemporalClustering), LocalizationError> {
    Ok((
        SpatialClustering::from_w(f.w(), segments)?,
        TemporalClustering::from_h(f.h()),
    ))
}

/// Temporal label of absolute interval `t`, wrapping at midnight.
pub fn temporal_lookup(t: usize, temporal: &TemporalClustering) -> usize {
    temporal.labels[t % temporal.intervals()]
}

/// Standardized feature vectors of the clustered segments, ready for
/// repeated nearest-neighbour queries.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    /// Sorted by segment id so the first minimum wins ties.
    points: Vec<(SegmentId, Vec<f64>, usize)>,
}

impl NeighborIndex {
    /// Indexes every segment of `spatial` that has a feature row.
    pub fn new(
        features: &FeatureTable,
        spatial: &SpatialClustering,
    ) -> Result<Self, LocalizationError> {
        let mut points: Vec<_> = spatial
            .segments()
            .iter()
            .zip(spatial.labels())
            .filter_map(|(s, &label)| features.standardized(s).map(|v| (s.clone(), v, label)))
            .collect();
        if points.is_empty() {
            return Err(LocalizationError::NoTrainingSegments);
        }
        points.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(NeighborIndex { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest training segment and its spatial label.
    pub fn nearest(&self, query: &[f64]) -> Result<(&SegmentId, usize), LocalizationError> {
        let dim = self.points[0].1.len();
        if query.len() != dim {
            return Err(LocalizationError::FeatureDimension {
                query: query.len(),
                training: dim,
            });
        }
        let mut best = (f64::INFINITY, 0);
        for (i, (_, p, _)) in self.points.iter().enumerate() {
            let d: f64 = p.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, i);
            }
        }
        let (s, _, label) = &self.points[best.1];
        Ok((s, *label))
    }
}

/// Spatial label of the training segment closest to `query` in standardized
/// feature space; ties go to the lowest segment id.
pub fn nearest_neighbor_map(
    query: &[f64],
    features: &FeatureTable,
    spatial: &SpatialClustering,
) -> Result<usize, LocalizationError> {
    Ok(NeighborIndex::new(features, spatial)?.nearest(query)?.1)
}

/// Observed `(row, column, speed)` triple of `D_t`.
pub type Entry = (usize, usize, f64);

/// The `K × K` family of training pools indexed by `(spatial, temporal)`
/// label pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSubsets {
    k: usize,
    pools: Vec<Vec<Entry>>,
}

impl LocalSubsets {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Pool of labels `(i, j)`, both in `1..=K`.
    pub fn get(&self, i: usize, j: usize) -> &[Entry] {
        &self.pools[(i - 1) * self.k + (j - 1)]
    }

    /// `(i, j, pool)` in row-major label order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &[Entry])> + '_ {
        self.pools
            .iter()
            .enumerate()
            .map(move |(p, v)| (p / self.k + 1, p % self.k + 1, v.as_slice()))
    }

    pub fn total(&self) -> usize {
        self.pools.iter().map(Vec::len).sum()
    }
}

/// Partitions the observed entries of `d` by the labels of their row and
/// column.
pub fn localize(
    d: &SpeedMatrix,
    spatial: &SpatialClustering,
    temporal: &TemporalClustering,
) -> Result<LocalSubsets, LocalizationError> {
    if spatial.labels.len() != d.rows() || temporal.labels.len() != d.cols() {
        return Err(LocalizationError::Shape(format!(
            "clusterings cover {}×{}, matrix is {}×{}",
            spatial.labels.len(),
            temporal.labels.len(),
            d.rows(),
            d.cols()
        )));
    }
    if spatial.k() != temporal.k() {
        return Err(LocalizationError::Shape(format!(
            "spatial K = {} but temporal K = {}",
            spatial.k(),
            temporal.k()
        )));
    }
    let k = spatial.k();
    let mut pools = vec![Vec::new(); k * k];
    for (i, j, v) in d.observed() {
        let p = (spatial.labels[i] - 1) * k + (temporal.labels[j] - 1);
        pools[p].push((i, j, v));
    }
    Ok(LocalSubsets { k, pools })
}
