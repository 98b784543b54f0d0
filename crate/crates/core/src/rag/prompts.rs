use serde::{Deserialize, Serialize};

use super::quintic::{quintic, AxisState, QuinticCoeffs};
use crate::error::{Error, Result};
use crate::scenario::{derive_relations, AtomScenario, NodeState, SceneGraph, ScenarioId, TICK};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Maneuver {
    LaneKeep,
    LaneLeft,
    LaneRight,
    Decelerate,
}

impl Maneuver {
    /// Assignment order for candidates beyond the fourth wraps around.
    pub const CYCLE: [Maneuver; 4] = [
        Maneuver::LaneKeep,
        Maneuver::LaneLeft,
        Maneuver::LaneRight,
        Maneuver::Decelerate,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Maneuver::LaneKeep => "lane_keep",
            Maneuver::LaneLeft => "lane_left",
            Maneuver::LaneRight => "lane_right",
            Maneuver::Decelerate => "decelerate",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub lane_width: f64,
    /// Terminal speed of the decelerate candidate relative to the current speed.
    pub decel_ratio: f64,
    /// Goal placed this far ahead of the terminal position.
    pub goal_lead: f64,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            lane_width: 3.5,
            decel_ratio: 0.7,
            goal_lead: 30.0,
        }
    }
}

/// Evenly spaced horizons from 3 s to 5 s.
pub fn default_horizons(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![5.0],
        _ => (0..n).map(|k| 3.0 + 2.0 * k as f64 / (n - 1) as f64).collect(),
    }
}

/// One generated future: the maneuver, its ego polynomial in the ego's
/// initial heading frame, and the resulting scenario.
#[derive(Clone, Debug)]
pub struct PromptScenario {
    pub maneuver: Maneuver,
    pub plan: QuinticCoeffs,
    pub scenario: AtomScenario,
}

struct EgoFrame {
    origin: [f64; 2],
    heading: f64,
    along: [f64; 2],
    left: [f64; 2],
}

impl EgoFrame {
    fn to_world(&self, s: f64, d: f64) -> [f64; 2] {
        [
            self.origin[0] + s * self.along[0] + d * self.left[0],
            self.origin[1] + s * self.along[1] + d * self.left[1],
        ]
    }

    fn rotate(&self, s: f64, d: f64) -> [f64; 2] {
        [s * self.along[0] + d * self.left[0], s * self.along[1] + d * self.left[1]]
    }

    fn lateral_of(&self, p: [f64; 2]) -> f64 {
        (p[0] - self.origin[0]) * self.left[0] + (p[1] - self.origin[1]) * self.left[1]
    }
}

/// Lane of the road nodes lying nearest to lateral offset `target`, within half a lane.
fn lane_at(frame: &EgoFrame, roads: &[&NodeState], target: f64, half: f64) -> Option<String> {
    roads
        .iter()
        .filter_map(|r| r.lane_id.as_ref().map(|l| ((frame.lateral_of(r.position) - target).abs(), l)))
        .filter(|(gap, _)| *gap < half)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)))
        .map(|(_, l)| l.clone())
}

/// Builds `horizons.len()` candidate futures starting at the first frame of `current`.
pub fn make_prompt_scenarios(current: &AtomScenario, horizons: &[f64], cfg: &PromptConfig) -> Result<Vec<PromptScenario>> {
    if horizons.is_empty() {
        return Err(Error::Input("at least one horizon is required".into()));
    }
    let first = current
        .frames
        .first()
        .ok_or_else(|| Error::Input(format!("scenario {} has no frames", current.scenario_id)))?;
    let ego = current
        .ego_at(0)
        .filter(|n| n.is_vehicle())
        .ok_or_else(|| Error::Input(format!("ego {} missing from first frame", current.ego_id)))?;
    let frame = EgoFrame {
        origin: ego.position,
        heading: ego.heading,
        along: [ego.heading.cos(), ego.heading.sin()],
        left: [-ego.heading.sin(), ego.heading.cos()],
    };
    let acc = match (current.ego_at(1), current.frames.get(1)) {
        (Some(next), Some(f)) if f.timestamp > first.timestamp => {
            let dt = f.timestamp - first.timestamp;
            [(next.velocity[0] - ego.velocity[0]) / dt, (next.velocity[1] - ego.velocity[1]) / dt]
        }
        _ => [0.0, 0.0],
    };
    let local = |v: [f64; 2]| [v[0] * frame.along[0] + v[1] * frame.along[1], v[0] * frame.left[0] + v[1] * frame.left[1]];
    let (v0, a0) = (local(ego.velocity), local(acc));
    let start = [AxisState::new(0.0, v0[0], a0[0]), AxisState::new(0.0, v0[1], a0[1])];

    let roads: Vec<&NodeState> = first.nodes.iter().filter(|n| !n.is_vehicle()).collect();
    let neighbors: Vec<&NodeState> = first.vehicles().filter(|n| n.node_id != current.ego_id).collect();
    let half = cfg.lane_width / 2.0;

    horizons
        .iter()
        .enumerate()
        .map(|(c, &horizon)| {
            let maneuver = Maneuver::CYCLE[c % Maneuver::CYCLE.len()];
            let (lateral, v_end) = match maneuver {
                Maneuver::LaneKeep => (0.0, v0[0]),
                Maneuver::LaneLeft => (cfg.lane_width, v0[0]),
                Maneuver::LaneRight => (-cfg.lane_width, v0[0]),
                Maneuver::Decelerate => (0.0, cfg.decel_ratio * v0[0]),
            };
            let s_end = 0.5 * (v0[0] + v_end) * horizon;
            let end = [AxisState::new(s_end, v_end, 0.0), AxisState::new(lateral, 0.0, 0.0)];
            let plan = quintic(start, end, horizon)?;
            let target_lane = if lateral == 0.0 {
                ego.lane_id.clone()
            } else {
                lane_at(&frame, &roads, lateral, half)
            };

            let steps = (horizon / TICK).round().max(1.0) as usize;
            let mut frames = Vec::with_capacity(steps + 1);
            for k in 0..=steps {
                let tau = (k as f64 * TICK).min(horizon);
                let [s, d] = plan.eval(tau);
                let vel = frame.rotate(s.v, d.v);
                let heading = if s.v.hypot(d.v) > 1e-6 {
                    frame.heading + d.v.atan2(s.v)
                } else {
                    frame.heading
                };
                let lane = if (d.p - lateral).abs() < (d.p).abs() { target_lane.clone() } else { ego.lane_id.clone() };
                let mut me = NodeState::vehicle(current.ego_id.clone(), frame.to_world(s.p, d.p), vel, heading);
                me.lane_id = lane;
                let mut nodes = Vec::with_capacity(first.nodes.len());
                nodes.push(me);
                for n in &neighbors {
                    let mut m = (*n).clone();
                    m.position = [n.position[0] + n.velocity[0] * tau, n.position[1] + n.velocity[1] * tau];
                    nodes.push(m);
                }
                nodes.extend(roads.iter().map(|r| (*r).clone()));
                frames.push(derive_relations(&SceneGraph::new(first.timestamp + tau, nodes), true));
            }
            let [s_t, _] = plan.eval(horizon);
            let goal = frame.to_world(s_t.p + cfg.goal_lead, lateral);
            Ok(PromptScenario {
                maneuver,
                plan,
                scenario: AtomScenario {
                    scenario_id: ScenarioId::from(format!("{}#p{c}", current.scenario_id)),
                    ego_id: current.ego_id.clone(),
                    interaction_type: current.interaction_type.clone(),
                    frames,
                    goal: Some(goal),
                },
            })
        })
        .collect()
}
