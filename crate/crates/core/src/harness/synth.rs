use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::data::{
    load_network, load_speeds, write_network_csv, Direction, EdgeRecord, NodeId, RoadNetwork,
    SegmentId, SpeedRecord, SpeedStore, MINUTES_PER_DAY,
};

const ROAD_TYPES: [&str; 4] = ["arterial", "highway", "collector", "local"];
const ORIGIN: (f64, f64) = (-80.0, 40.44);
const SPACING_DEG: f64 = 0.005;
const METERS_PER_DEG: f64 = 111_000.0;

/// Planted-regime synthetic city.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Directed segments kept from the lattice.
    pub segments: usize,
    pub interval_minutes: u32,
    pub spatial_regimes: usize,
    pub temporal_regimes: usize,
    /// `spatial_regimes × temporal_regimes` means in mph, row-major. Empty
    /// selects [`SynthSpec::default_means`].
    pub regime_means: Vec<f64>,
    /// Relative amplitude of the multiplicative time-of-day profile.
    pub diurnal_amplitude: f64,
    pub noise_std: f64,
    pub missing_rate: f64,
    pub days: usize,
    pub start_date: NaiveDate,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            grid_rows: 12,
            grid_cols: 12,
            segments: 476,
            interval_minutes: 5,
            spatial_regimes: 3,
            temporal_regimes: 3,
            regime_means: Vec::new(),
            diurnal_amplitude: 0.1,
            noise_std: 2.0,
            missing_rate: 0.05,
            days: 8,
            start_date: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            seed: 0,
        }
    }
}

impl SynthSpec {
    /// Lattice edges available: both directions of every grid link.
    pub fn lattice_edges(&self) -> usize {
        2 * (self.grid_rows * self.grid_cols.saturating_sub(1)
            + self.grid_cols * self.grid_rows.saturating_sub(1))
    }

    pub fn intervals(&self) -> usize {
        (MINUTES_PER_DAY / self.interval_minutes.max(1)) as usize
    }

    /// `15 + 10 s + 25·[s ≡ t]` for spatial regime `s` and temporal regime
    /// `t` (indices taken modulo the smaller count).
    pub fn default_means(ks: usize, kt: usize) -> Vec<f64> {
        let m = ks.min(kt).max(1);
        (0..ks)
            .flat_map(|s| {
                (0..kt).map(move |t| 15.0 + 10.0 * s as f64 + if s % m == t % m { 25.0 } else { 0.0 })
            })
            .collect()
    }

    pub fn means(&self) -> Vec<f64> {
        if self.regime_means.is_empty() {
            Self::default_means(self.spatial_regimes, self.temporal_regimes)
        } else {
            self.regime_means.clone()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Synth(m));
        if self.grid_rows < 1 || self.grid_cols < 1 || self.grid_rows * self.grid_cols < 2 {
            return bad("lattice needs at least two nodes".into());
        }
        if self.segments == 0 || self.segments > self.lattice_edges() {
            return bad(format!(
                "{} segments requested, lattice has {}",
                self.segments,
                self.lattice_edges()
            ));
        }
        if self.interval_minutes == 0 || MINUTES_PER_DAY % self.interval_minutes != 0 {
            return bad(format!("interval {} does not divide a day", self.interval_minutes));
        }
        if self.spatial_regimes == 0 || self.temporal_regimes == 0 {
            return bad("regime counts must be positive".into());
        }
        if self.temporal_regimes > self.intervals() {
            return bad("more temporal regimes than intervals".into());
        }
        let means = self.means();
        if means.len() != self.spatial_regimes * self.temporal_regimes {
            return bad(format!(
                "{} regime means for {}×{} regimes",
                means.len(),
                self.spatial_regimes,
                self.temporal_regimes
            ));
        }
        if means.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return bad("regime means must be positive".into());
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!("missing rate {} outside [0, 1)", self.missing_rate));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad(format!("noise std {}", self.noise_std));
        }
        if !(0.0..1.0).contains(&self.diurnal_amplitude) {
            return bad(format!("diurnal amplitude {}", self.diurnal_amplitude));
        }
        if self.days == 0 {
            return bad("no days".into());
        }
        Ok(())
    }
}

/// Generated network, speed records and the planted ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub spec: SynthSpec,
    pub network: RoadNetwork,
    pub records: Vec<SpeedRecord>,
    /// Spatial regime (0-based) of every segment.
    pub spatial_regime: BTreeMap<SegmentId, usize>,
    /// Temporal regime (0-based) of every interval of day.
    pub temporal_regime: Vec<usize>,
}

impl SyntheticData {
    pub fn store(&self) -> Result<SpeedStore, HarnessError> {
        Ok(load_speeds(
            self.records.iter().cloned(),
            self.spec.interval_minutes,
            &self.network,
        )?)
    }

    /// Noise-free speed of a segment at an interval of day.
    pub fn template(&self, segment: &SegmentId, interval: usize) -> Option<f64> {
        let s = *self.spatial_regime.get(segment)?;
        Some(template_speed(&self.spec, &self.spec.means(), s, self.temporal_regime[interval], interval))
    }
}

fn template_speed(spec: &SynthSpec, means: &[f64], s: usize, t: usize, j: usize) -> f64 {
    let m = spec.intervals() as f64;
    let profile = 1.0 + spec.diurnal_amplitude * (2.0 * PI * (j as f64 / m - 0.5)).cos();
    means[s * spec.temporal_regimes + t] * profile
}

/// Lattice links ordered so every prefix is weakly connected: by the larger
/// row-major node index, then the smaller one, forward before reverse.
fn lattice_links(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut links = Vec::new();
    for node in 0..rows * cols {
        let (r, c) = (node / cols, node % cols);
        let mut earlier = Vec::new();
        if r > 0 {
            earlier.push(node - cols);
        }
        if c > 0 {
            earlier.push(node - 1);
        }
        earlier.sort_unstable();
        for e in earlier {
            links.push((e, node));
            links.push((node, e));
        }
    }
    links
}

/// Builds a directed lattice city with `spec.segments` segments and draws
/// `spec.days` days of speeds starting at `spec.start_date`.
///
/// Every segment gets a random spatial regime; its road type, speed limit
/// and lane count are functions of that regime so side information carries
/// the regime. Temporal regimes are contiguous blocks of the day. Speeds are
/// `mean(s, t) · profile(j) + noise`, clamped at 0.5 mph. Entries go missing
/// independently, but every day keeps at least one observation per segment
/// and per interval.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SyntheticData, HarnessError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means = spec.means();
    let links = lattice_links(spec.grid_rows, spec.grid_cols);
    let coord = |node: usize| {
        (
            ORIGIN.0 + (node % spec.grid_cols) as f64 * SPACING_DEG,
            ORIGIN.1 + (node / spec.grid_cols) as f64 * SPACING_DEG,
        )
    };

    let width = spec.segments.to_string().len().max(4);
    let mut records = Vec::with_capacity(spec.segments);
    let mut spatial_regime = BTreeMap::new();
    for (e, &(a, b)) in links.iter().take(spec.segments).enumerate() {
        let s = rng.gen_range(0..spec.spatial_regimes);
        let (pa, pb) = (coord(a), coord(b));
        let direction = if (pb.0 - pa.0).abs() > (pb.1 - pa.1).abs() {
            if pb.0 > pa.0 { Direction::East } else { Direction::West }
        } else if pb.1 > pa.1 {
            Direction::North
        } else {
            Direction::South
        };
        let id = SegmentId::new(format!("seg{e:0width$}"));
        spatial_regime.insert(id.clone(), s);
        records.push(EdgeRecord {
            segment_id: id,
            from_node: NodeId::new(format!("n{a}")),
            to_node: NodeId::new(format!("n{b}")),
            from_lon: pa.0,
            from_lat: pa.1,
            to_lon: pb.0,
            to_lat: pb.1,
            one_way: rng.gen_bool(0.2),
            speed_limit_mph: 25.0 + 10.0 * (s % 5) as f64,
            lanes: 1 + (s % 3) as u32,
            length_m: (SPACING_DEG * METERS_PER_DEG * rng.gen_range(0.9..1.1)).round(),
            road_type: ROAD_TYPES[s % ROAD_TYPES.len()].to_string(),
            direction,
        });
    }
    let network = load_network(records)?;

    let m = spec.intervals();
    let temporal_regime: Vec<usize> = (0..m).map(|j| j * spec.temporal_regimes / m).collect();
    let segments: Vec<SegmentId> = network.segment_ids().cloned().collect();
    let n = segments.len();
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| HarnessError::Synth(e.to_string()))?;

    let mut out = Vec::with_capacity(n * m * spec.days);
    for day in 0..spec.days {
        let date = spec.start_date + Duration::days(day as i64);
        let mut keep = vec![true; n * m];
        if spec.missing_rate > 0.0 {
            for k in keep.iter_mut() {
                *k = !rng.gen_bool(spec.missing_rate);
            }
            for i in 0..n {
                if !keep[i * m..(i + 1) * m].iter().any(|&k| k) {
                    keep[i * m + rng.gen_range(0..m)] = true;
                }
            }
            for j in 0..m {
                if !(0..n).any(|i| keep[i * m + j]) {
                    keep[rng.gen_range(0..n) * m + j] = true;
                }
            }
        }
        for (i, seg) in segments.iter().enumerate() {
            let s = spatial_regime[seg];
            for j in 0..m {
                let base = template_speed(spec, &means, s, temporal_regime[j], j);
                let v = if spec.noise_std > 0.0 {
                    base + noise.sample(&mut rng)
                } else {
                    base
                };
                if !keep[i * m + j] {
                    continue;
                }
                let minute = j as u32 * spec.interval_minutes;
                out.push(SpeedRecord {
                    segment_id: seg.clone(),
                    timestamp: format!(
                        "{}T{:02}:{:02}",
                        date.format("%Y-%m-%d"),
                        minute / 60,
                        minute % 60
                    ),
                    speed_mph: (v.max(0.5) * 1e4).round() / 1e4,
                });
            }
        }
    }

    Ok(SyntheticData {
        spec: spec.clone(),
        network,
        records: out,
        spatial_regime,
        temporal_regime,
    })
}

/// Writes `network.csv` and `speeds.csv` into `dir`.
pub fn write_synthetic(
    data: &SyntheticData,
    dir: impl AsRef<Path>,
) -> Result<(PathBuf, PathBuf), HarnessError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let network_path = dir.join("network.csv");
    write_network_csv(&data.network, &network_path)?;
    let speeds_path = dir.join("speeds.csv");
    let file = std::fs::File::create(&speeds_path).map_err(|e| HarnessError::io(&speeds_path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| HarnessError::io(&speeds_path, e);
    writeln!(w, "segment_id,timestamp,speed_mph").map_err(io)?;
    for r in &data.records {
        writeln!(w, "{},{},{}", r.segment_id, r.timestamp, r.speed_mph).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok((network_path, speeds_path))
}
