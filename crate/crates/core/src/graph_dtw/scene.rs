use std::cell::RefCell;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::assignment;
use crate::error::{Error, Result};
use crate::scenario::{NodeId, SceneGraph};

/// Ground-cost weights for matching vehicles between two frames.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneCostConfig {
    /// Per meter of position difference.
    pub w_pos: f64,
    /// Per m/s of velocity difference.
    pub w_vel: f64,
    /// Per radian of wrapped heading difference.
    pub w_head: f64,
    /// Charged when matched nodes differ in kind or in same-lane-as-ego status.
    pub type_mismatch_penalty: f64,
    /// Charged per node matched to padding.
    pub unmatched_penalty: f64,
}

impl Default for SceneCostConfig {
    fn default() -> Self {
        Self {
            w_pos: 1.0,
            w_vel: 0.5,
            w_head: 2.0,
            type_mismatch_penalty: 10.0,
            unmatched_penalty: 20.0,
        }
    }
}

impl SceneCostConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.w_pos, self.w_vel, self.w_head, self.type_mismatch_penalty];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("scene cost weights must be finite and >= 0".into()));
        }
        if !(self.unmatched_penalty.is_finite() && self.unmatched_penalty > 0.0) {
            return Err(Error::Config("unmatched_penalty must be > 0".into()));
        }
        Ok(())
    }
}

/// A frame together with the id of its ego vehicle.
#[derive(Clone, Copy, Debug)]
pub struct EgoScene<'a> {
    pub graph: &'a SceneGraph,
    pub ego: &'a NodeId,
}

impl<'a> EgoScene<'a> {
    pub fn new(graph: &'a SceneGraph, ego: &'a NodeId) -> Self {
        Self { graph, ego }
    }
}

/// Vehicle state in the ego frame (ego at origin, heading 0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct LocalNode {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub heading: f64,
    /// Shares the ego's lane; `None` when either lane is unknown.
    pub same_lane: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct LocalFrame {
    pub nodes: Vec<LocalNode>,
}

impl LocalFrame {
    pub fn new(scene: EgoScene<'_>) -> Result<Self> {
        let ego = scene
            .graph
            .node(scene.ego)
            .filter(|n| n.is_vehicle())
            .ok_or_else(|| Error::Input(format!("ego {} not a vehicle in frame", scene.ego)))?;
        let (s, c) = (-ego.heading).sin_cos();
        let rot = |v: [f64; 2]| [c * v[0] - s * v[1], s * v[0] + c * v[1]];
        let nodes: Vec<LocalNode> = scene
            .graph
            .vehicles()
            .map(|n| LocalNode {
                pos: rot([n.position[0] - ego.position[0], n.position[1] - ego.position[1]]),
                vel: rot(n.velocity),
                heading: n.heading - ego.heading,
                same_lane: match (&n.lane_id, &ego.lane_id) {
                    (Some(a), Some(b)) => Some(a == b),
                    _ => None,
                },
            })
            .collect();
        Ok(Self { nodes })
    }
}

/// Absolute wrapped angle difference in `[0, π]`, symmetric in its arguments.
pub(crate) fn heading_gap(a: f64, b: f64) -> f64 {
    let mut d = (a - b).abs();
    if d >= 2.0 * PI {
        d = d.rem_euclid(2.0 * PI);
    }
    d.min(2.0 * PI - d)
}

fn norm(x: f64, y: f64) -> f64 {
    (x * x + y * y).sqrt()
}

pub(crate) fn ground_cost(a: &LocalNode, b: &LocalNode, cfg: &SceneCostConfig) -> f64 {
    let dp = norm(a.pos[0] - b.pos[0], a.pos[1] - b.pos[1]);
    let dv = norm(a.vel[0] - b.vel[0], a.vel[1] - b.vel[1]);
    let dh = heading_gap(a.heading, b.heading);
    let mismatch = match (a.same_lane, b.same_lane) {
        (Some(x), Some(y)) => x != y,
        _ => false,
    };
    cfg.w_pos * dp + cfg.w_vel * dv + cfg.w_head * dh + if mismatch { cfg.type_mismatch_penalty } else { 0.0 }
}

/// Padded square cost matrix between two local frames.
#[cfg(test)]
pub(crate) fn cost_matrix(a: &LocalFrame, b: &LocalFrame, cfg: &SceneCostConfig) -> (Vec<f64>, usize) {
    let mut cost = Vec::new();
    let n = fill_cost(a, b, cfg, &mut cost);
    (cost, n)
}

fn fill_cost(a: &LocalFrame, b: &LocalFrame, cfg: &SceneCostConfig, cost: &mut Vec<f64>) -> usize {
    let n = a.nodes.len().max(b.nodes.len());
    cost.clear();
    cost.resize(n * n, cfg.unmatched_penalty);
    for (i, p) in a.nodes.iter().enumerate() {
        for (j, q) in b.nodes.iter().enumerate() {
            cost[i * n + j] = ground_cost(p, q, cfg);
        }
    }
    n
}

#[derive(Default)]
struct Scratch {
    cost: Vec<f64>,
    assign: Vec<usize>,
    matched: Vec<f64>,
    solver: assignment::Solver,
}

thread_local! {
    static SCRATCH: RefCell<Scratch> = RefCell::new(Scratch::default());
}

pub(crate) fn local_distance(a: &LocalFrame, b: &LocalFrame, cfg: &SceneCostConfig) -> f64 {
    SCRATCH.with(|s| {
        let Scratch {
            cost,
            assign,
            matched,
            solver,
        } = &mut *s.borrow_mut();
        let n = fill_cost(a, b, cfg, cost);
        if n == 0 {
            return 0.0;
        }
        solver.solve_into(cost, n, assign);
        // Summing in sorted order keeps d(a, b) and d(b, a) bit-identical.
        matched.clear();
        matched.extend(assign.iter().enumerate().map(|(i, &j)| cost[i * n + j]));
        matched.sort_unstable_by(f64::total_cmp);
        matched.iter().sum::<f64>() / n as f64
    })
}

/// Optimal-transport distance between two frames after ego-centric
/// normalization: the mean cost of the best vehicle assignment, with
/// padding when vehicle counts differ.
pub fn scene_distance(a: EgoScene<'_>, b: EgoScene<'_>, cfg: &SceneCostConfig) -> Result<f64> {
    cfg.validate()?;
    if a.graph.nodes.is_empty() || b.graph.nodes.is_empty() {
        return Err(Error::Input("scene_distance needs nonempty graphs".into()));
    }
    let la = LocalFrame::new(a)?;
    let lb = LocalFrame::new(b)?;
    Ok(local_distance(&la, &lb, cfg))
}
