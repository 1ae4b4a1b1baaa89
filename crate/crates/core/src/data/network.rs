use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{DataError, NodeId, SegmentId};

/// Longitude/latitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub lon: f64,
    pub lat: f64,
}

impl Coord {
    pub fn new(lon: f64, lat: f64) -> Self {
        Coord { lon, lat }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.lon, self.lat]
    }
}

/// Travel direction of a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    North,
    South,
    East,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::North,
        Direction::South,
        Direction::East,
        Direction::West,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Direction::North => "N",
            Direction::South => "S",
            Direction::East => "E",
            Direction::West => "W",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "N" | "NB" | "NORTH" | "NORTHBOUND" => Ok(Direction::North),
            "S" | "SB" | "SOUTH" | "SOUTHBOUND" => Ok(Direction::South),
            "E" | "EB" | "EAST" | "EASTBOUND" => Ok(Direction::East),
            "W" | "WB" | "WEST" | "WESTBOUND" => Ok(Direction::West),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

impl Serialize for Direction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for Direction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeAttributes {
    pub one_way: bool,
    pub speed_limit_mph: f64,
    pub lanes: u32,
    pub length_m: f64,
    pub road_type: String,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub attrs: EdgeAttributes,
}

/// One row of the network CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub segment_id: SegmentId,
    pub from_node: NodeId,
    pub to_node: NodeId,
    pub from_lon: f64,
    pub from_lat: f64,
    pub to_lon: f64,
    pub to_lat: f64,
    #[serde(serialize_with = "bool_as_digit", deserialize_with = "bool_from_digit")]
    pub one_way: bool,
    pub speed_limit_mph: f64,
    pub lanes: u32,
    pub length_m: f64,
    pub road_type: String,
    pub direction: Direction,
}

fn bool_as_digit<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u8(u8::from(*v))
}

fn bool_from_digit<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    match String::deserialize(d)?.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(serde::de::Error::custom(format!(
            "expected 0 or 1, got {other:?}"
        ))),
    }
}

/// Directed road network. Two-way roads are two edges with distinct ids.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: BTreeMap<NodeId, Coord>,
    edges: BTreeMap<SegmentId, Edge>,
}

impl RoadNetwork {
    pub fn nodes(&self) -> &BTreeMap<NodeId, Coord> {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeMap<SegmentId, Edge> {
        &self.edges
    }

    pub fn edge(&self, id: &SegmentId) -> Option<&Edge> {
        self.edges.get(id)
    }

    pub fn contains(&self, id: &SegmentId) -> bool {
        self.edges.contains_key(id)
    }

    pub fn node_coord(&self, id: &NodeId) -> Option<Coord> {
        self.nodes.get(id).copied()
    }

    /// Endpoint coordinates `(from, to)` of a segment.
    pub fn endpoints(&self, id: &SegmentId) -> Option<(Coord, Coord)> {
        let edge = self.edges.get(id)?;
        Some((self.nodes[&edge.from], self.nodes[&edge.to]))
    }

    pub fn midpoint(&self, id: &SegmentId) -> Option<Coord> {
        self.endpoints(id)
            .map(|(a, b)| Coord::new(0.5 * (a.lon + b.lon), 0.5 * (a.lat + b.lat)))
    }

    /// In-degree plus out-degree of every node.
    pub fn all_degrees(&self) -> BTreeMap<NodeId, usize> {
        let mut deg: BTreeMap<NodeId, usize> = self.nodes.keys().map(|n| (n.clone(), 0)).collect();
        for edge in self.edges.values() {
            *deg.get_mut(&edge.from).expect("validated endpoint") += 1;
            *deg.get_mut(&edge.to).expect("validated endpoint") += 1;
        }
        deg
    }

    pub fn segment_ids(&self) -> impl Iterator<Item = &SegmentId> {
        self.edges.keys()
    }

    pub fn records(&self) -> Vec<EdgeRecord> {
        self.edges
            .iter()
            .map(|(id, e)| {
                let from = self.nodes[&e.from];
                let to = self.nodes[&e.to];
                EdgeRecord {
                    segment_id: id.clone(),
                    from_node: e.from.clone(),
                    to_node: e.to.clone(),
                    from_lon: from.lon,
                    from_lat: from.lat,
                    to_lon: to.lon,
                    to_lat: to.lat,
                    one_way: e.attrs.one_way,
                    speed_limit_mph: e.attrs.speed_limit_mph,
                    lanes: e.attrs.lanes,
                    length_m: e.attrs.length_m,
                    road_type: e.attrs.road_type.clone(),
                    direction: e.attrs.direction,
                }
            })
            .collect()
    }
}

fn validate_attrs(rec: &EdgeRecord) -> Result<(), DataError> {
    let bad = |field: &'static str, value: String| DataError::InvalidAttribute {
        segment: rec.segment_id.clone(),
        field,
        value,
    };
    if !(rec.speed_limit_mph.is_finite() && rec.speed_limit_mph > 0.0) {
        return Err(bad("speed_limit_mph", rec.speed_limit_mph.to_string()));
    }
    if rec.lanes < 1 {
        return Err(bad("lanes", rec.lanes.to_string()));
    }
    if !(rec.length_m.is_finite() && rec.length_m > 0.0) {
        return Err(bad("length_m", rec.length_m.to_string()));
    }
    for (field, v) in [
        ("from_lon", rec.from_lon),
        ("from_lat", rec.from_lat),
        ("to_lon", rec.to_lon),
        ("to_lat", rec.to_lat),
    ] {
        if !v.is_finite() {
            return Err(bad(field, v.to_string()));
        }
    }
    Ok(())
}

fn insert_node(
    nodes: &mut BTreeMap<NodeId, Coord>,
    id: &NodeId,
    coord: Coord,
) -> Result<(), DataError> {
    match nodes.entry(id.clone()) {
        Entry::Vacant(slot) => {
            slot.insert(coord);
            Ok(())
        }
        Entry::Occupied(slot) => {
            let prev = *slot.get();
            if prev == coord {
                Ok(())
            } else {
                Err(DataError::CoordinateMismatch {
                    node: id.clone(),
                    first: (prev.lon, prev.lat),
                    second: (coord.lon, coord.lat),
                })
            }
        }
    }
}

/// Builds a validated network from edge records, deduplicating nodes by id.
pub fn load_network<I>(records: I) -> Result<RoadNetwork, DataError>
where
    I: IntoIterator<Item = EdgeRecord>,
{
    let mut nodes = BTreeMap::new();
    let mut edges = BTreeMap::new();
    for rec in records {
        validate_attrs(&rec)?;
        insert_node(&mut nodes, &rec.from_node, Coord::new(rec.from_lon, rec.from_lat))?;
        insert_node(&mut nodes, &rec.to_node, Coord::new(rec.to_lon, rec.to_lat))?;
        let edge = Edge {
            from: rec.from_node,
            to: rec.to_node,
            attrs: EdgeAttributes {
                one_way: rec.one_way,
                speed_limit_mph: rec.speed_limit_mph,
                lanes: rec.lanes,
                length_m: rec.length_m,
                road_type: rec.road_type,
                direction: rec.direction,
            },
        };
        match edges.entry(rec.segment_id) {
            Entry::Vacant(slot) => {
                slot.insert(edge);
            }
            Entry::Occupied(slot) => return Err(DataError::DuplicateSegment(slot.key().clone())),
        }
    }
    if edges.is_empty() {
        return Err(DataError::EmptyNetwork);
    }
    Ok(RoadNetwork { nodes, edges })
}

pub fn read_network<R: Read>(reader: R, label: &str) -> Result<RoadNetwork, DataError> {
    let csv_err = |source| DataError::Csv {
        path: label.to_owned(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let records = rdr
        .deserialize::<EdgeRecord>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(csv_err)?;
    load_network(records)
}

pub fn read_network_csv(path: impl AsRef<Path>) -> Result<RoadNetwork, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| DataError::Csv {
        path: path.display().to_string(),
        source: e.into(),
    })?;
    read_network(std::io::BufReader::new(file), &path.display().to_string())
}

pub fn write_network<W: Write>(network: &RoadNetwork, writer: W) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    for rec in network.records() {
        wtr.serialize(rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_network_csv(network: &RoadNetwork, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let wrap = |source| DataError::Csv {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(|e| wrap(e.into()))?;
    write_network(network, std::io::BufWriter::new(file)).map_err(wrap)
}
