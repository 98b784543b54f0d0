use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AtomScenario, NodeState, Relation};

/// Ego-centric relation summary of one frame.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSignature {
    /// Multiset of directional relations on edges leaving the ego, stored as counts.
    pub ego_relations: BTreeMap<Relation, usize>,
    /// `(ego lane, goal lane)` when both are known.
    pub lane_connection: Option<(String, String)>,
}

impl RelationSignature {
    pub fn relation_count(&self) -> usize {
        self.ego_relations.values().sum()
    }

    /// True when `self`'s relation multiset is contained in `other`'s.
    pub fn is_sub_multiset_of(&self, other: &RelationSignature) -> bool {
        self.ego_relations
            .iter()
            .all(|(r, &n)| other.ego_relations.get(r).copied().unwrap_or(0) >= n)
    }
}

/// Extracts the ego's relation signature at `frame_index`.
///
/// Panics if `frame_index` is out of range.
pub fn signature(scenario: &AtomScenario, frame_index: usize) -> RelationSignature {
    let frame = &scenario.frames[frame_index];
    let mut ego_relations = BTreeMap::new();
    for e in &frame.edges {
        if e.src == scenario.ego_id && e.relation.is_directional() {
            *ego_relations.entry(e.relation).or_insert(0) += 1;
        }
    }

    let ego_lane = frame.node(&scenario.ego_id).and_then(|n| n.lane_id.clone());
    let goal_lane = scenario.goal.and_then(|goal| {
        frame
            .nodes
            .iter()
            .filter(|n| !n.is_vehicle() && n.lane_id.is_some())
            .min_by(|a, b| dist(a, goal).total_cmp(&dist(b, goal)))
            .and_then(|n| n.lane_id.clone())
    });
    let lane_connection = match (ego_lane, goal_lane) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    };

    RelationSignature {
        ego_relations,
        lane_connection,
    }
}

fn dist(n: &NodeState, p: [f64; 2]) -> f64 {
    (n.position[0] - p[0]).hypot(n.position[1] - p[1])
}
