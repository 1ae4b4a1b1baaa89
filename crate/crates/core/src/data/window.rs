use std::fmt;

use chrono::{Datelike, NaiveDate, Weekday};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::speeds::check_interval;
use super::{DataError, SegmentId, SpeedStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayType {
    Weekday,
    Weekend,
}

impl DayType {
    pub fn of(day: NaiveDate) -> Self {
        match day.weekday() {
            Weekday::Sat | Weekday::Sun => DayType::Weekend,
            _ => DayType::Weekday,
        }
    }

    /// Window length that avoids cold starts: five weekdays or three weekend days.
    pub fn default_window_days(self) -> usize {
        match self {
            DayType::Weekday => 5,
            DayType::Weekend => 3,
        }
    }
}

impl fmt::Display for DayType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DayType::Weekday => "weekday",
            DayType::Weekend => "weekend",
        })
    }
}

impl std::str::FromStr for DayType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "weekday" => Ok(DayType::Weekday),
            "weekend" => Ok(DayType::Weekend),
            other => Err(format!("unknown day type {other:?}")),
        }
    }
}

/// Observed speed matrix: rows are segments, columns intervals of the day.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedMatrix {
    values: Array2<f64>,
    mask: Array2<bool>,
    segments: Vec<SegmentId>,
    interval_minutes: u32,
    day_type: DayType,
}

impl SpeedMatrix {
    /// Unobserved cells are stored as 0 regardless of `values`.
    pub fn new(
        mut values: Array2<f64>,
        mask: Array2<bool>,
        segments: Vec<SegmentId>,
        interval_minutes: u32,
        day_type: DayType,
    ) -> Result<Self, DataError> {
        let per_day = check_interval(interval_minutes)?;
        if values.dim() != mask.dim() {
            return Err(DataError::Shape(format!(
                "values {:?} vs mask {:?}",
                values.dim(),
                mask.dim()
            )));
        }
        if values.ncols() != per_day {
            return Err(DataError::Shape(format!(
                "{} columns but {} intervals per day",
                values.ncols(),
                per_day
            )));
        }
        if values.nrows() != segments.len() {
            return Err(DataError::Shape(format!(
                "{} rows but {} segment ids",
                values.nrows(),
                segments.len()
            )));
        }
        for ((i, j), v) in values.indexed_iter_mut() {
            if mask[[i, j]] {
                if !v.is_finite() {
                    return Err(DataError::NonFiniteSpeed {
                        segment: segments[i].clone(),
                    });
                }
                if *v < 0.0 {
                    return Err(DataError::NegativeSpeed {
                        segment: segments[i].clone(),
                        speed: *v,
                    });
                }
            } else {
                *v = 0.0;
            }
        }
        Ok(SpeedMatrix {
            values,
            mask,
            segments,
            interval_minutes,
            day_type,
        })
    }

    /// Fully observed matrix with generated segment ids `s0000..`. The column
    /// count need not match a day grid; interval length is derived when
    /// possible and otherwise reported as 0.
    pub fn from_dense(values: Array2<f64>) -> Self {
        let mask = Array2::from_elem(values.dim(), true);
        Self::from_parts_unchecked(values, mask)
    }

    /// Matrix with an explicit mask and generated ids; columns are not tied to
    /// a day grid. Intended for factorization work on arbitrary shapes.
    pub fn from_masked(values: Array2<f64>, mask: Array2<bool>) -> Self {
        assert_eq!(values.dim(), mask.dim(), "values and mask shapes differ");
        Self::from_parts_unchecked(values, mask)
    }

    fn from_parts_unchecked(mut values: Array2<f64>, mask: Array2<bool>) -> Self {
        values.zip_mut_with(&mask, |v, &m| {
            if !m {
                *v = 0.0;
            }
        });
        let cols = values.ncols() as u32;
        let interval_minutes = if cols > 0 && super::MINUTES_PER_DAY % cols == 0 {
            super::MINUTES_PER_DAY / cols
        } else {
            0
        };
        let segments = (0..values.nrows())
            .map(|i| SegmentId(format!("s{i:04}")))
            .collect();
        SpeedMatrix {
            values,
            mask,
            segments,
            interval_minutes,
            day_type: DayType::Weekday,
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn segments(&self) -> &[SegmentId] {
        &self.segments
    }

    pub fn interval_minutes(&self) -> u32 {
        self.interval_minutes
    }

    pub fn day_type(&self) -> DayType {
        self.day_type
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn nnz(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[[i, j]]
    }

    /// Observed `(row, column, value)` triples in row-major order.
    pub fn observed(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.mask
            .indexed_iter()
            .filter(|(_, &m)| m)
            .map(move |((i, j), _)| (i, j, self.values[[i, j]]))
    }

    /// Same matrix with additional cells hidden.
    pub fn with_hidden(&self, hidden: &[(usize, usize)]) -> SpeedMatrix {
        let mut out = self.clone();
        for &(i, j) in hidden {
            out.mask[[i, j]] = false;
            out.values[[i, j]] = 0.0;
        }
        out
    }

    /// Rows and columns without a single observation.
    pub fn empty_rows_and_columns(&self) -> (Vec<usize>, Vec<usize>) {
        let rows = (0..self.rows())
            .filter(|&i| !self.mask.row(i).iter().any(|&m| m))
            .collect();
        let cols = (0..self.cols())
            .filter(|&j| !self.mask.column(j).iter().any(|&m| m))
            .collect();
        (rows, cols)
    }
}

/// Which days feed a sliding-window matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub test_day: NaiveDate,
    /// Trial hour `t` in `0..24`; test-day intervals after the slot starting
    /// at this hour are excluded.
    pub trial_hour: u32,
    pub window_days: usize,
    pub day_type: DayType,
}

impl WindowSpec {
    pub fn new(test_day: NaiveDate, trial_hour: u32) -> Self {
        let day_type = DayType::of(test_day);
        WindowSpec {
            test_day,
            trial_hour,
            window_days: day_type.default_window_days(),
            day_type,
        }
    }

    /// Interval-of-day index of the trial hour for a given interval length.
    pub fn trial_interval(&self, interval_minutes: u32) -> usize {
        (self.trial_hour * 60 / interval_minutes) as usize
    }
}

/// Averages observations over the `window_days` most recent matching days
/// before the test day, plus the test day's intervals up to the trial slot.
pub fn build_window_matrix(
    store: &SpeedStore,
    spec: &WindowSpec,
    segments: &[SegmentId],
) -> Result<SpeedMatrix, DataError> {
    if spec.trial_hour >= 24 {
        return Err(DataError::BadTrialHour(spec.trial_hour));
    }
    if segments.is_empty() {
        return Err(DataError::NoSegments);
    }
    let per_day = store.intervals_per_day();
    let prior: Vec<NaiveDate> = store
        .days()
        .rev()
        .filter(|&d| d < spec.test_day && DayType::of(d) == spec.day_type)
        .take(spec.window_days)
        .collect();
    if prior.len() < spec.window_days {
        return Err(DataError::InsufficientWindow {
            needed: spec.window_days,
            found: prior.len(),
            day_type: spec.day_type,
            test_day: spec.test_day,
        });
    }
    let cutoff = spec.trial_interval(store.interval_minutes());

    let mut sums = Array2::<f64>::zeros((segments.len(), per_day));
    let mut counts = Array2::<u32>::zeros((segments.len(), per_day));
    for (i, seg) in segments.iter().enumerate() {
        let Some(row) = store.segment_index(seg) else {
            continue;
        };
        for j in 0..per_day {
            let days = prior
                .iter()
                .copied()
                .chain((j <= cutoff).then_some(spec.test_day));
            for day in days {
                if let Some(v) = store.get_by_index(day, row, j) {
                    sums[[i, j]] += v;
                    counts[[i, j]] += 1;
                }
            }
        }
    }
    let mask = counts.mapv(|c| c > 0);
    let mut values = sums;
    values.zip_mut_with(&counts, |s, &c| {
        if c > 0 {
            *s /= f64::from(c);
        }
    });
    let matrix = SpeedMatrix::new(
        values,
        mask,
        segments.to_vec(),
        store.interval_minutes(),
        spec.day_type,
    )?;
    let (rows, columns) = matrix.empty_rows_and_columns();
    if !rows.is_empty() || !columns.is_empty() {
        return Err(DataError::ColdStart {
            rows: rows.into_iter().map(|i| segments[i].clone()).collect(),
            columns,
        });
    }
    Ok(matrix)
}
