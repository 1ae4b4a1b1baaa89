//! Road networks, speed observations and the per-segment feature table.

mod betweenness;
mod features;
pub(crate) mod network;
mod speeds;
mod window;

use std::borrow::Borrow;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use betweenness::compute_edge_betweenness;
pub use features::{derive_features, FeatureLayout, FeatureStats, FeatureTable};
pub use network::{
    load_network, read_network_csv, write_network_csv, Coord, Direction, Edge, EdgeAttributes,
    EdgeRecord, RoadNetwork,
};
pub use speeds::{
    load_speeds, read_speeds_csv, DayObservations, SpeedRecord, SpeedStore, MINUTES_PER_DAY,
};
pub use window::{build_window_matrix, DayType, SpeedMatrix, WindowSpec};

/// Identifier of a directed road segment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SegmentId(pub String);

/// Identifier of a network node (intersection).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

macro_rules! string_id {
    ($ty:ident) => {
        impl $ty {
            pub fn new(id: impl Into<String>) -> Self {
                $ty(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl Borrow<str> for $ty {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $ty {
            fn from(s: &str) -> Self {
                $ty(s.to_owned())
            }
        }
    };
}

string_id!(SegmentId);
string_id!(NodeId);

#[derive(Debug, Error)]
pub enum DataError {
    #[error("network input is empty")]
    EmptyNetwork,
    #[error("duplicate segment id {0}")]
    DuplicateSegment(SegmentId),
    #[error("node {node} has conflicting coordinates {first:?} and {second:?}")]
    CoordinateMismatch {
        node: NodeId,
        first: (f64, f64),
        second: (f64, f64),
    },
    #[error("segment {segment}: invalid attribute {field} = {value}")]
    InvalidAttribute {
        segment: SegmentId,
        field: &'static str,
        value: String,
    },
    #[error("segment {segment}: negative speed {speed}")]
    NegativeSpeed { segment: SegmentId, speed: f64 },
    #[error("segment {segment}: non-finite speed")]
    NonFiniteSpeed { segment: SegmentId },
    #[error("unparseable timestamp {0:?} (expected YYYY-MM-DDTHH:MM)")]
    BadTimestamp(String),
    #[error("interval length {0} minutes does not divide a day")]
    BadInterval(u32),
    #[error("window needs {needed} {day_type} days before {test_day}, found {found}")]
    InsufficientWindow {
        needed: usize,
        found: usize,
        day_type: DayType,
        test_day: chrono::NaiveDate,
    },
    #[error("trial hour {0} outside 0..24")]
    BadTrialHour(u32),
    #[error("cold start: rows without observations {rows:?}, interval columns without observations {columns:?}")]
    ColdStart {
        rows: Vec<SegmentId>,
        columns: Vec<usize>,
    },
    #[error("no segments requested for the window matrix")]
    NoSegments,
    #[error("speed matrix shape mismatch: {0}")]
    Shape(String),
    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}
