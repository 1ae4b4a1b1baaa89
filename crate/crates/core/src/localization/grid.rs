use std::collections::BTreeMap;

use super::LocalizationError;
use crate::data::{RoadNetwork, SegmentId};

/// Segments binned by midpoint into a uniform `K × K` lon/lat grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridClustering {
    k: usize,
    /// `(min_lon, min_lat, max_lon, max_lat)` of the segment midpoints.
    bbox: (f64, f64, f64, f64),
    cells: BTreeMap<SegmentId, usize>,
}

impl GridClustering {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        self.bbox
    }

    /// Cell label in `1..=K²`, `row·K + col + 1` with rows along latitude.
    pub fn cell_of(&self, segment: &SegmentId) -> Option<usize> {
        self.cells.get(segment).copied()
    }

    pub fn cells(&self) -> &BTreeMap<SegmentId, usize> {
        &self.cells
    }

    /// Cell of an arbitrary point; points outside the box are clamped to it.
    pub fn cell_at(&self, lon: f64, lat: f64) -> usize {
        let (x0, y0, x1, y1) = self.bbox;
        let col = axis_index(lon, x0, x1, self.k);
        let row = axis_index(lat, y0, y1, self.k);
        row * self.k + col + 1
    }
}

fn axis_index(v: f64, lo: f64, hi: f64, k: usize) -> usize {
    let width = hi - lo;
    if width <= 0.0 {
        return 0;
    }
    let idx = ((v - lo) / width * k as f64).floor();
    (idx.max(0.0) as usize).min(k - 1)
}

/// Uniform `K × K` partition of the bounding box of the covered segments'
/// midpoints. Points on the maximum edge fall in the last row or column.
pub fn grid_partition(
    network: &RoadNetwork,
    segments: &[SegmentId],
    k: usize,
) -> Result<GridClustering, LocalizationError> {
    if k == 0 {
        return Err(LocalizationError::Grid("K = 0".into()));
    }
    if segments.is_empty() {
        return Err(LocalizationError::Grid("no segments".into()));
    }
    let mut mids = Vec::with_capacity(segments.len());
    for s in segments {
        let m = network
            .midpoint(s)
            .ok_or_else(|| LocalizationError::Grid(format!("segment {s} has no coordinates")))?;
        mids.push((s.clone(), m.lon, m.lat));
    }
    let mut bbox = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(_, x, y) in &mids {
        bbox.0 = bbox.0.min(x);
        bbox.1 = bbox.1.min(y);
        bbox.2 = bbox.2.max(x);
        bbox.3 = bbox.3.max(y);
    }
    if bbox.0 == bbox.2 && bbox.1 == bbox.3 {
        log::warn!("all segment midpoints coincide; grid collapses to a single cell");
        return Ok(GridClustering {
            k,
            bbox,
            cells: mids.into_iter().map(|(s, _, _)| (s, 1)).collect(),
        });
    }
    let mut grid = GridClustering {
        k,
        bbox,
        cells: BTreeMap::new(),
    };
    for (s, x, y) in mids {
        let c = grid.cell_at(x, y);
        grid.cells.insert(s, c);
    }
    Ok(grid)
}
