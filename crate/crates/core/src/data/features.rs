use std::collections::{BTreeMap, BTreeSet};

use super::{compute_edge_betweenness, Direction, RoadNetwork, SegmentId};
use crate::gp::SideInfo;

/// Names and category levels of the per-segment features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLayout {
    /// Node-wise numeric features, present once for each endpoint.
    pub node_numeric: Vec<&'static str>,
    pub edge_numeric: Vec<&'static str>,
    /// Categorical features and their levels, in one-hot order.
    pub categorical: Vec<(&'static str, Vec<String>)>,
}

impl FeatureLayout {
    pub fn numeric_names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.node_numeric.iter().chain(&self.edge_numeric).copied()
    }

    /// Length of the flattened `(f_u; f_v; f_(u,v))` vector.
    pub fn flat_len(&self) -> usize {
        2 * self.node_numeric.len()
            + self.edge_numeric.len()
            + self.categorical.iter().map(|(_, l)| l.len()).sum::<usize>()
    }
}

/// Mean and population standard deviation of one numeric feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
}

impl FeatureStats {
    fn from_values(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count().max(1) as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        FeatureStats {
            mean,
            std: var.sqrt(),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.std <= 1e-12 * self.mean.abs().max(1.0)
    }

    pub fn zscore(&self, v: f64) -> f64 {
        if self.is_constant() {
            0.0
        } else {
            (v - self.mean) / self.std
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct RawFeatures {
    node_from: Vec<f64>,
    node_to: Vec<f64>,
    edge_numeric: Vec<f64>,
    /// Index of the active level per categorical feature.
    levels: Vec<usize>,
}

/// Side information for every segment plus standardization statistics.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    layout: FeatureLayout,
    raw: BTreeMap<SegmentId, RawFeatures>,
    /// One entry per node-wise then edge-wise numeric feature.
    stats: Vec<FeatureStats>,
}

/// Degrees, betweenness and edge attributes for every segment, standardized
/// over all segments of the network.
pub fn derive_features(network: &RoadNetwork) -> FeatureTable {
    let degrees = network.all_degrees();
    let betweenness = compute_edge_betweenness(network);
    let road_types: Vec<String> = network
        .edges()
        .values()
        .map(|e| e.attrs.road_type.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let layout = FeatureLayout {
        node_numeric: vec!["degree"],
        edge_numeric: vec!["speed_limit_mph", "lanes", "length_m", "betweenness"],
        categorical: vec![
            ("road_type", road_types.clone()),
            (
                "direction",
                Direction::ALL.iter().map(|d| d.code().to_owned()).collect(),
            ),
            ("one_way", vec!["0".to_owned(), "1".to_owned()]),
        ],
    };

    let raw = network
        .edges()
        .iter()
        .map(|(id, e)| {
            let a = &e.attrs;
            let road_level = road_types
                .binary_search(&a.road_type)
                .expect("level collected above");
            let feats = RawFeatures {
                node_from: vec![degrees[&e.from] as f64],
                node_to: vec![degrees[&e.to] as f64],
                edge_numeric: vec![
                    a.speed_limit_mph,
                    f64::from(a.lanes),
                    a.length_m,
                    betweenness[id],
                ],
                levels: vec![road_level, a.direction.index(), usize::from(a.one_way)],
            };
            (id.clone(), feats)
        })
        .collect();

    let mut table = FeatureTable {
        layout,
        raw,
        stats: Vec::new(),
    };
    let all: Vec<SegmentId> = table.raw.keys().cloned().collect();
    table.stats = table.compute_stats(&all);
    table
}

impl FeatureTable {
    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn stats(&self) -> &[FeatureStats] {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn contains(&self, segment: &SegmentId) -> bool {
        self.raw.contains_key(segment)
    }

    pub fn segments(&self) -> impl Iterator<Item = &SegmentId> {
        self.raw.keys()
    }

    fn compute_stats(&self, segments: &[SegmentId]) -> Vec<FeatureStats> {
        let rows: Vec<&RawFeatures> = segments.iter().filter_map(|s| self.raw.get(s)).collect();
        let mut stats = Vec::new();
        for k in 0..self.layout.node_numeric.len() {
            // both endpoints share one scale
            let vals = rows
                .iter()
                .flat_map(|r| [r.node_from[k], r.node_to[k]]);
            stats.push(FeatureStats::from_values(vals));
        }
        for k in 0..self.layout.edge_numeric.len() {
            stats.push(FeatureStats::from_values(rows.iter().map(|r| r.edge_numeric[k])));
        }
        stats
    }

    /// Copy with standardization statistics recomputed over `segments` only.
    pub fn with_stats_from(&self, segments: &[SegmentId]) -> FeatureTable {
        let mut out = self.clone();
        out.stats = self.compute_stats(segments);
        out
    }

    fn one_hot(&self, r: &RawFeatures) -> Vec<Vec<f64>> {
        self.layout
            .categorical
            .iter()
            .zip(&r.levels)
            .map(|((_, levels), &active)| {
                (0..levels.len())
                    .map(|l| if l == active { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    /// Unscaled `f_r = (f_u; f_v; f_(u,v))` with one-hot categorical blocks.
    pub fn raw_vector(&self, segment: &SegmentId) -> Option<Vec<f64>> {
        let r = self.raw.get(segment)?;
        let mut v = Vec::with_capacity(self.layout.flat_len());
        v.extend(&r.node_from);
        v.extend(&r.node_to);
        v.extend(&r.edge_numeric);
        v.extend(self.one_hot(r).into_iter().flatten());
        Some(v)
    }

    /// Point in the nearest-neighbour distance space: z-scored numeric
    /// features (constant ones dropped) followed by the one-hot blocks.
    pub fn standardized(&self, segment: &SegmentId) -> Option<Vec<f64>> {
        let r = self.raw.get(segment)?;
        let n_node = self.layout.node_numeric.len();
        let mut v = Vec::with_capacity(self.layout.flat_len());
        for (vals, offset) in [(&r.node_from, 0), (&r.node_to, 0), (&r.edge_numeric, n_node)] {
            for (k, &x) in vals.iter().enumerate() {
                let st = &self.stats[offset + k];
                if !st.is_constant() {
                    v.push(st.zscore(x));
                }
            }
        }
        v.extend(self.one_hot(r).into_iter().flatten());
        Some(v)
    }

    /// Kernel side information. Constant features stay in place as zeros.
    pub fn side_info(&self, segment: &SegmentId) -> Option<SideInfo> {
        let r = self.raw.get(segment)?;
        let n_node = self.layout.node_numeric.len();
        let z = |vals: &[f64], offset: usize| -> Vec<f64> {
            vals.iter()
                .enumerate()
                .map(|(k, &x)| self.stats[offset + k].zscore(x))
                .collect()
        };
        Some(SideInfo {
            node_from: z(&r.node_from, 0),
            node_to: z(&r.node_to, 0),
            edge_numeric: z(&r.edge_numeric, n_node),
            edge_categorical: self.one_hot(r),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::network::load_network;
    use crate::data::network::tests::record;

    fn path() -> RoadNetwork {
        let mut bc = record("bc", ("B", 1.0, 0.0), ("C", 2.0, 0.0));
        bc.road_type = "local".into();
        bc.lanes = 1;
        load_network(vec![record("ab", ("A", 0.0, 0.0), ("B", 1.0, 0.0)), bc]).unwrap()
    }

    #[test]
    fn degree_and_betweenness_in_raw_vector() {
        let table = derive_features(&path());
        let ab = table.raw_vector(&SegmentId::new("ab")).unwrap();
        // deg(A)=1, deg(B)=2, speed 35, lanes 2, length 120, betweenness 2
        assert_eq!(&ab[..6], &[1.0, 2.0, 35.0, 2.0, 120.0, 2.0]);
        // road_type levels [arterial, local], direction N, two-way
        assert_eq!(&ab[6..], &[1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(ab.len(), table.layout().flat_len());
    }

    #[test]
    fn identical_attributes_identical_vectors() {
        let net = load_network(vec![
            record("ab", ("A", 0.0, 0.0), ("B", 1.0, 0.0)),
            record("ba", ("B", 1.0, 0.0), ("A", 0.0, 0.0)),
        ])
        .unwrap();
        let table = derive_features(&net);
        assert_eq!(
            table.standardized(&SegmentId::new("ab")),
            table.standardized(&SegmentId::new("ba"))
        );
    }

    #[test]
    fn constant_features_dropped_from_distance_space() {
        let table = derive_features(&path());
        // speed limit and length are constant; betweenness too (2 and 2)
        let v = table.standardized(&SegmentId::new("ab")).unwrap();
        let side = table.side_info(&SegmentId::new("ab")).unwrap();
        assert_eq!(v.len(), 2 + 1 + 8); // degree u, degree v, lanes, one-hot
        assert_eq!(side.edge_numeric.len(), 4);
        assert_eq!(side.edge_numeric[0], 0.0);
    }
}
