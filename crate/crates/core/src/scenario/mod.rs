//! Scenario graph types.
//!
//! An [`AtomScenario`] is an ordered run of [`SceneGraph`] frames around one
//! ego vehicle. Every frame holds typed nodes and directional relation edges
//! between them; edges are always rebuilt by [`derive_relations`] so that the
//! geometry and the relation labels never disagree.

mod csv_ingest;
mod relations;
mod signature;
mod store;
mod synth;

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_ingest::{ingest_csv, ingest_reader, CsvSchema, Slicing};
pub use relations::{derive_relations, derive_relations_with, sector_of, RelationConfig};
pub use signature::{signature, RelationSignature};
pub use store::{read_jsonl, write_jsonl, ScenarioRecord, ScenarioStore, STORE_VERSION};
pub use synth::{generate_synthetic, SynthConfig, Template};

/// Resampling tick for every scenario, in seconds.
pub const TICK: f64 = 0.1;

macro_rules! string_id {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Identifier of a node inside a frame. Stable across frames of one scenario.
    NodeId
);
string_id!(
    /// Identifier of a stored scenario.
    ScenarioId
);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Vehicle,
    RoadNode,
}

/// Directional relation between two nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Front,
    FrontLeft,
    FrontRight,
    Rear,
    RearLeft,
    RearRight,
    VehicleToRoadnode,
}

impl Relation {
    pub const DIRECTIONAL: [Relation; 6] = [
        Relation::Front,
        Relation::FrontLeft,
        Relation::RearLeft,
        Relation::Rear,
        Relation::RearRight,
        Relation::FrontRight,
    ];

    pub fn is_directional(self) -> bool {
        self != Relation::VehicleToRoadnode
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Front => "front",
            Relation::FrontLeft => "front_left",
            Relation::FrontRight => "front_right",
            Relation::Rear => "rear",
            Relation::RearLeft => "rear_left",
            Relation::RearRight => "rear_right",
            Relation::VehicleToRoadnode => "vehicle_to_roadnode",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    if !a.is_finite() {
        return a;
    }
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    // rem_euclid maps -π to π already; this catches values that round to -π.
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub node_id: NodeId,
    pub kind: NodeKind,
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub heading: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lane_id: Option<String>,
}

impl NodeState {
    pub fn vehicle(id: impl Into<NodeId>, position: [f64; 2], velocity: [f64; 2], heading: f64) -> Self {
        Self {
            node_id: id.into(),
            kind: NodeKind::Vehicle,
            position,
            velocity,
            heading: wrap_angle(heading),
            lane_id: None,
        }
    }

    /// Road nodes never move.
    pub fn road_node(id: impl Into<NodeId>, position: [f64; 2], lane_id: Option<String>) -> Self {
        Self {
            node_id: id.into(),
            kind: NodeKind::RoadNode,
            position,
            velocity: [0.0, 0.0],
            heading: 0.0,
            lane_id,
        }
    }

    pub fn with_lane(mut self, lane: impl Into<String>) -> Self {
        self.lane_id = Some(lane.into());
        self
    }

    pub fn is_vehicle(&self) -> bool {
        self.kind == NodeKind::Vehicle
    }

    pub fn speed(&self) -> f64 {
        self.velocity[0].hypot(self.velocity[1])
    }

    pub fn distance_to(&self, other: &NodeState) -> f64 {
        (other.position[0] - self.position[0]).hypot(other.position[1] - self.position[1])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub relation: Relation,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub timestamp: f64,
    pub nodes: Vec<NodeState>,
    #[serde(default)]
    pub edges: Vec<RelationEdge>,
}

impl SceneGraph {
    pub fn new(timestamp: f64, nodes: Vec<NodeState>) -> Self {
        Self {
            timestamp,
            nodes,
            edges: Vec::new(),
        }
    }

    pub fn node(&self, id: &NodeId) -> Option<&NodeState> {
        self.nodes.iter().find(|n| &n.node_id == id)
    }

    pub fn vehicles(&self) -> impl Iterator<Item = &NodeState> {
        self.nodes.iter().filter(|n| n.is_vehicle())
    }

    pub fn vehicle_count(&self) -> usize {
        self.vehicles().count()
    }

    /// Checks node/edge invariants: unique node ids, valid endpoints, no
    /// self-loops, at most one edge per ordered pair, stationary road nodes.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for n in &self.nodes {
            if !seen.insert(&n.node_id) {
                return Err(Error::Data(format!("duplicate node id {}", n.node_id)));
            }
            if n.kind == NodeKind::RoadNode && (n.velocity[0] != 0.0 || n.velocity[1] != 0.0) {
                return Err(Error::Data(format!("road node {} has nonzero velocity", n.node_id)));
            }
            if !(n.heading > -PI && n.heading <= PI) {
                return Err(Error::Data(format!("node {} heading {} outside (-pi, pi]", n.node_id, n.heading)));
            }
        }
        let mut pairs = std::collections::HashSet::new();
        for e in &self.edges {
            if e.src == e.dst {
                return Err(Error::Data(format!("self-loop on {}", e.src)));
            }
            if !seen.contains(&e.src) || !seen.contains(&e.dst) {
                return Err(Error::Data(format!("edge {} -> {} references a missing node", e.src, e.dst)));
            }
            if !pairs.insert((&e.src, &e.dst)) {
                return Err(Error::Data(format!("duplicate edge {} -> {}", e.src, e.dst)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomScenario {
    pub scenario_id: ScenarioId,
    pub ego_id: NodeId,
    pub interaction_type: String,
    pub frames: Vec<SceneGraph>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<[f64; 2]>,
}

impl AtomScenario {
    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::Data(format!("scenario {} has no frames", self.scenario_id)));
        }
        for (k, f) in self.frames.iter().enumerate() {
            f.validate()
                .map_err(|e| Error::Data(format!("scenario {} frame {k}: {e}", self.scenario_id)))?;
            if f.node(&self.ego_id).is_none() {
                return Err(Error::Data(format!(
                    "scenario {} frame {k}: ego {} missing",
                    self.scenario_id, self.ego_id
                )));
            }
            if k > 0 && f.timestamp <= self.frames[k - 1].timestamp {
                return Err(Error::Data(format!(
                    "scenario {} frames not strictly increasing at index {k}",
                    self.scenario_id
                )));
            }
        }
        Ok(())
    }

    pub fn ego_at(&self, frame: usize) -> Option<&NodeState> {
        self.frames.get(frame).and_then(|f| f.node(&self.ego_id))
    }

    pub fn duration(&self) -> f64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(a), Some(b)) => b.timestamp - a.timestamp,
            _ => 0.0,
        }
    }

    /// Ego positions as `(t, x, y)` with `t` relative to the first frame.
    pub fn ego_track(&self) -> Vec<(f64, f64, f64)> {
        let t0 = self.frames.first().map(|f| f.timestamp).unwrap_or(0.0);
        self.frames
            .iter()
            .filter_map(|f| f.node(&self.ego_id).map(|n| (f.timestamp - t0, n.position[0], n.position[1])))
            .collect()
    }
}
