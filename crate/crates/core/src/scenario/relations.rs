use super::{wrap_angle, NodeState, Relation, RelationEdge, SceneGraph};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelationConfig {
    /// Vehicle pairs farther apart than this get no directional edge.
    pub radius: f64,
    /// Measure bearings in the source vehicle's heading frame; otherwise in
    /// the world frame (heading 0 = +x).
    pub heading_frame: bool,
}

impl Default for RelationConfig {
    fn default() -> Self {
        Self {
            radius: 50.0,
            heading_frame: true,
        }
    }
}

/// Maps a relative bearing (radians, counter-clockwise positive) to one of
/// the six 60° sectors. The sector starting at -30° is `front`.
pub fn sector_of(bearing: f64) -> Relation {
    let deg = bearing.to_degrees();
    let a = (deg + 30.0).rem_euclid(360.0);
    match (a / 60.0).floor() as i64 {
        0 => Relation::Front,
        1 => Relation::FrontLeft,
        2 => Relation::RearLeft,
        3 => Relation::Rear,
        4 => Relation::RearRight,
        _ => Relation::FrontRight,
    }
}

fn bearing(src: &NodeState, dst: &NodeState, heading_frame: bool) -> f64 {
    let dx = dst.position[0] - src.position[0];
    let dy = dst.position[1] - src.position[1];
    let reference = if heading_frame { src.heading } else { 0.0 };
    wrap_angle(dy.atan2(dx) - reference)
}

/// Rebuilds a frame's edges with the default 50 m radius.
pub fn derive_relations(frame: &SceneGraph, ego_heading_frame: bool) -> SceneGraph {
    derive_relations_with(
        frame,
        &RelationConfig {
            heading_frame: ego_heading_frame,
            ..RelationConfig::default()
        },
    )
}

/// Drops any existing edges and recomputes them from node geometry.
///
/// Every ordered vehicle pair within `cfg.radius` gets exactly one
/// directional relation; every vehicle is linked to its nearest road node.
/// Co-located nodes get a distance clamped to the smallest positive float.
pub fn derive_relations_with(frame: &SceneGraph, cfg: &RelationConfig) -> SceneGraph {
    let mut edges = Vec::new();
    let vehicles: Vec<&NodeState> = frame.vehicles().collect();
    let roads: Vec<&NodeState> = frame.nodes.iter().filter(|n| !n.is_vehicle()).collect();

    for src in &vehicles {
        for dst in &vehicles {
            if src.node_id == dst.node_id {
                continue;
            }
            let d = src.distance_to(dst);
            if d > cfg.radius {
                continue;
            }
            edges.push(RelationEdge {
                src: src.node_id.clone(),
                dst: dst.node_id.clone(),
                relation: sector_of(bearing(src, dst, cfg.heading_frame)),
                distance: d.max(f64::MIN_POSITIVE),
            });
        }
        let nearest = roads
            .iter()
            .map(|r| (src.distance_to(r), *r))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((d, road)) = nearest {
            edges.push(RelationEdge {
                src: src.node_id.clone(),
                dst: road.node_id.clone(),
                relation: Relation::VehicleToRoadnode,
                distance: d.max(f64::MIN_POSITIVE),
            });
        }
    }

    SceneGraph {
        timestamp: frame.timestamp,
        nodes: frame.nodes.clone(),
        edges,
    }
}
