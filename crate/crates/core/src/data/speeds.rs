use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::{DataError, RoadNetwork, SegmentId};

pub const MINUTES_PER_DAY: u32 = 1440;

/// One row of the speed CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedRecord {
    pub segment_id: SegmentId,
    pub timestamp: String,
    pub speed_mph: f64,
}

/// One calendar day of interval-mean speeds, dense over covered segments.
#[derive(Debug, Clone)]
pub struct DayObservations {
    /// Row-major `segments × intervals`, NaN where unobserved.
    values: Vec<f64>,
}

/// Observations grouped by calendar day, segment and interval of day.
#[derive(Debug, Clone)]
pub struct SpeedStore {
    interval_minutes: u32,
    segments: Vec<SegmentId>,
    index: HashMap<SegmentId, usize>,
    days: BTreeMap<NaiveDate, DayObservations>,
    skipped_unknown: usize,
}

pub(crate) fn parse_timestamp(raw: &str) -> Result<NaiveDateTime, DataError> {
    let raw = raw.trim();
    NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M")
        .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S"))
        .map_err(|_| DataError::BadTimestamp(raw.to_owned()))
}

pub(crate) fn check_interval(interval_minutes: u32) -> Result<usize, DataError> {
    if interval_minutes == 0 || MINUTES_PER_DAY % interval_minutes != 0 {
        return Err(DataError::BadInterval(interval_minutes));
    }
    Ok((MINUTES_PER_DAY / interval_minutes) as usize)
}

/// Groups observations by (segment, day, interval), flooring timestamps to
/// the interval grid and averaging duplicates. Records for segments missing
/// from `network` are skipped and counted.
pub fn load_speeds<I>(
    records: I,
    interval_minutes: u32,
    network: &RoadNetwork,
) -> Result<SpeedStore, DataError>
where
    I: IntoIterator<Item = SpeedRecord>,
{
    let per_day = check_interval(interval_minutes)?;
    let mut acc: BTreeMap<(NaiveDate, SegmentId, usize), (f64, u32)> = BTreeMap::new();
    let mut skipped_unknown = 0usize;
    for rec in records {
        if !rec.speed_mph.is_finite() {
            return Err(DataError::NonFiniteSpeed {
                segment: rec.segment_id,
            });
        }
        if rec.speed_mph < 0.0 {
            return Err(DataError::NegativeSpeed {
                segment: rec.segment_id,
                speed: rec.speed_mph,
            });
        }
        let ts = parse_timestamp(&rec.timestamp)?;
        if !network.contains(&rec.segment_id) {
            skipped_unknown += 1;
            continue;
        }
        let minute = ts.hour() * 60 + ts.minute();
        let slot = (minute / interval_minutes) as usize;
        let cell = acc
            .entry((ts.date(), rec.segment_id, slot))
            .or_insert((0.0, 0));
        cell.0 += rec.speed_mph;
        cell.1 += 1;
    }
    if skipped_unknown > 0 {
        log::warn!("skipped {skipped_unknown} speed records for unknown segments");
    }

    let mut segments: Vec<SegmentId> = acc.keys().map(|(_, s, _)| s.clone()).collect();
    segments.sort();
    segments.dedup();
    let index: HashMap<SegmentId, usize> = segments
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect();

    let mut days: BTreeMap<NaiveDate, DayObservations> = BTreeMap::new();
    for ((day, seg, slot), (sum, count)) in acc {
        let obs = days.entry(day).or_insert_with(|| DayObservations {
            values: vec![f64::NAN; segments.len() * per_day],
        });
        obs.values[index[&seg] * per_day + slot] = sum / f64::from(count);
    }

    Ok(SpeedStore {
        interval_minutes,
        segments,
        index,
        days,
        skipped_unknown,
    })
}

pub fn read_speeds<R: Read>(
    reader: R,
    label: &str,
    interval_minutes: u32,
    network: &RoadNetwork,
) -> Result<SpeedStore, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let records = rdr
        .deserialize::<SpeedRecord>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| DataError::Csv {
            path: label.to_owned(),
            source,
        })?;
    load_speeds(records, interval_minutes, network)
}

pub fn read_speeds_csv(
    path: impl AsRef<Path>,
    interval_minutes: u32,
    network: &RoadNetwork,
) -> Result<SpeedStore, DataError> {
    let path = path.as_ref();
    let label = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| DataError::Csv {
        path: label.clone(),
        source: e.into(),
    })?;
    read_speeds(std::io::BufReader::new(file), &label, interval_minutes, network)
}

impl SpeedStore {
    pub fn interval_minutes(&self) -> u32 {
        self.interval_minutes
    }

    pub fn intervals_per_day(&self) -> usize {
        (MINUTES_PER_DAY / self.interval_minutes) as usize
    }

    /// Segments with at least one observation, sorted by id.
    pub fn covered_segments(&self) -> &[SegmentId] {
        &self.segments
    }

    pub fn days(&self) -> impl DoubleEndedIterator<Item = NaiveDate> + '_ {
        self.days.keys().copied()
    }

    pub fn has_day(&self, day: NaiveDate) -> bool {
        self.days.contains_key(&day)
    }

    pub fn skipped_unknown(&self) -> usize {
        self.skipped_unknown
    }

    pub fn segment_index(&self, segment: &SegmentId) -> Option<usize> {
        self.index.get(segment).copied()
    }

    pub fn get(&self, day: NaiveDate, segment: &SegmentId, interval: usize) -> Option<f64> {
        let row = self.segment_index(segment)?;
        self.get_by_index(day, row, interval)
    }

    pub(crate) fn get_by_index(&self, day: NaiveDate, row: usize, interval: usize) -> Option<f64> {
        let per_day = self.intervals_per_day();
        if interval >= per_day {
            return None;
        }
        let v = self.days.get(&day)?.values[row * per_day + interval];
        (!v.is_nan()).then_some(v)
    }

    pub fn observation_count(&self) -> usize {
        self.days
            .values()
            .map(|d| d.values.iter().filter(|v| !v.is_nan()).count())
            .sum()
    }
}
