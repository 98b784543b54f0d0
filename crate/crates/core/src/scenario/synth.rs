//! Seeded synthetic scenario corpus: car-following, on-ramp merge and
//! intersection-crossing templates on straight multi-lane roads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_relations, AtomScenario, NodeState, SceneGraph, TICK};

const LANE_WIDTH: f64 = 3.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Following,
    Merge,
    Crossing,
}

impl Template {
    pub const ALL: [Template; 3] = [Template::Following, Template::Merge, Template::Crossing];

    pub fn label(self) -> &'static str {
        match self {
            Template::Following => "following",
            Template::Merge => "merge",
            Template::Crossing => "crossing",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.label() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub lanes: usize,
    /// Inclusive range of vehicles per scenario, ego included.
    pub vehicles: (usize, usize),
    pub duration: f64,
    pub count: usize,
    /// `None` cycles through all templates.
    pub template: Option<Template>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            lanes: 3,
            vehicles: (3, 6),
            duration: 5.0,
            count: 100,
            template: None,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug)]
struct LaneChange {
    start: f64,
    duration: f64,
    from: f64,
    to: f64,
}

impl LaneChange {
    // Minimum-jerk lateral profile.
    fn lateral(&self, t: f64) -> (f64, f64) {
        let tau = ((t - self.start) / self.duration).clamp(0.0, 1.0);
        let s = tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau);
        let ds = if (0.0..1.0).contains(&tau) {
            30.0 * tau * tau * (1.0 - tau) * (1.0 - tau) / self.duration
        } else {
            0.0
        };
        let d = self.to - self.from;
        (self.from + d * s, d * ds)
    }
}

#[derive(Clone, Debug)]
struct Agent {
    id: String,
    x: f64,
    y: f64,
    speed: f64,
    desired: f64,
    /// Travel direction; +x for road traffic, ±y for crossing traffic.
    dir: [f64; 2],
    lane_change: Option<LaneChange>,
    crossing: bool,
    vy: f64,
}

fn idm(v: f64, v0: f64, gap: Option<(f64, f64)>) -> f64 {
    let (a_max, b, s0, t_head): (f64, f64, f64, f64) = (1.5, 2.0, 2.0, 1.2);
    let free = 1.0 - (v / v0.max(0.1)).powi(4);
    let interact = match gap {
        Some((s, dv)) => {
            let s_star = s0 + (v * t_head + v * dv / (2.0 * (a_max * b).sqrt())).max(0.0);
            (s_star / s.max(0.5)).powi(2)
        }
        None => 0.0,
    };
    (a_max * (free - interact)).clamp(-8.0, a_max)
}

fn lane_name(template: Template, agent: &Agent) -> String {
    if agent.crossing {
        return format!("ns_{}", if agent.dir[1] > 0.0 { 0 } else { 1 });
    }
    let prefix = if template == Template::Crossing { "ew" } else { "main" };
    if template == Template::Merge && agent.y < -LANE_WIDTH / 2.0 {
        return "ramp".to_owned();
    }
    let k = (agent.y / LANE_WIDTH).round().max(0.0) as usize;
    format!("{prefix}_{k}")
}

fn road_nodes(template: Template, lanes: usize, cross_x: f64) -> Vec<NodeState> {
    let prefix = if template == Template::Crossing { "ew" } else { "main" };
    let mut out = Vec::new();
    for lane in 0..lanes {
        for k in 0..=10 {
            out.push(NodeState::road_node(
                format!("r_{prefix}_{lane}_{k}"),
                [k as f64 * 25.0, lane as f64 * LANE_WIDTH],
                Some(format!("{prefix}_{lane}")),
            ));
        }
    }
    match template {
        Template::Merge => {
            for k in 0..=4 {
                out.push(NodeState::road_node(
                    format!("r_ramp_{k}"),
                    [k as f64 * 25.0, -LANE_WIDTH],
                    Some("ramp".to_owned()),
                ));
            }
        }
        Template::Crossing => {
            for k in 0..=8 {
                let y = -100.0 + k as f64 * 25.0;
                out.push(NodeState::road_node(format!("r_ns_0_{k}"), [cross_x, y], Some("ns_0".to_owned())));
                out.push(NodeState::road_node(
                    format!("r_ns_1_{k}"),
                    [cross_x + LANE_WIDTH, y],
                    Some("ns_1".to_owned()),
                ));
            }
        }
        Template::Following => {}
    }
    out
}

fn spawn(template: Template, cfg: &SynthConfig, n_vehicles: usize, rng: &mut ChaCha8Rng) -> (Vec<Agent>, f64) {
    let lanes = cfg.lanes.max(1);
    let cross_x = rng.random_range(60.0..110.0);
    let ego_speed = rng.random_range(8.0..22.0);
    let ego_lane = match template {
        Template::Merge => -1.0,
        _ => rng.random_range(0..lanes) as f64,
    };
    let mut agents = vec![Agent {
        id: "ego".to_owned(),
        x: rng.random_range(20.0..40.0),
        y: ego_lane * LANE_WIDTH,
        speed: ego_speed,
        desired: ego_speed * rng.random_range(0.95..1.2),
        dir: [1.0, 0.0],
        lane_change: None,
        crossing: false,
        vy: 0.0,
    }];
    match template {
        Template::Merge => {
            agents[0].lane_change = Some(LaneChange {
                start: rng.random_range(0.3..1.5),
                duration: rng.random_range(2.5..3.5),
                from: -LANE_WIDTH,
                to: 0.0,
            });
        }
        Template::Following => {
            if lanes > 1 && rng.random_bool(0.3) {
                let to = if ego_lane as usize + 1 < lanes && (ego_lane == 0.0 || rng.random_bool(0.5)) {
                    ego_lane + 1.0
                } else {
                    ego_lane - 1.0
                };
                agents[0].lane_change = Some(LaneChange {
                    start: rng.random_range(0.5..2.0),
                    duration: rng.random_range(2.5..4.0),
                    from: ego_lane * LANE_WIDTH,
                    to: to * LANE_WIDTH,
                });
            }
        }
        Template::Crossing => {}
    }

    for k in 1..n_vehicles {
        let id = format!("v{k}");
        // First neighbor always shares the ego's target lane ahead so every
        // scenario has a direct interaction partner.
        let crossing = template == Template::Crossing && k % 2 == 1;
        if crossing {
            let northbound = rng.random_bool(0.5);
            let (dir, lane_x) = if northbound {
                ([0.0, 1.0], cross_x)
            } else {
                ([0.0, -1.0], cross_x + LANE_WIDTH)
            };
            let speed = rng.random_range(6.0..15.0);
            agents.push(Agent {
                id,
                x: lane_x,
                y: -dir[1] * rng.random_range(20.0..45.0),
                speed,
                desired: speed,
                dir,
                lane_change: None,
                crossing: true,
                vy: 0.0,
            });
            continue;
        }
        let lane = if k == 1 {
            ego_lane.max(0.0)
        } else {
            rng.random_range(0..lanes) as f64
        };
        let ahead = if k == 1 { true } else { rng.random_bool(0.6) };
        let offset = rng.random_range(8.0..35.0) * if ahead { 1.0 } else { -1.0 };
        let speed = (ego_speed + rng.random_range(-4.0..4.0)).max(3.0);
        agents.push(Agent {
            id,
            x: agents[0].x + offset + k as f64 * 0.5,
            y: lane * LANE_WIDTH,
            speed,
            desired: speed * rng.random_range(0.9..1.15),
            dir: [1.0, 0.0],
            lane_change: None,
            crossing: false,
            vy: 0.0,
        });
    }
    (agents, cross_x)
}

fn step(agents: &mut [Agent], t: f64) {
    let snapshot: Vec<(f64, f64, f64, bool)> = agents.iter().map(|a| (a.x, a.y, a.speed, a.crossing)).collect();
    for (i, a) in agents.iter_mut().enumerate() {
        if a.crossing {
            a.x += a.dir[0] * a.speed * TICK;
            a.y += a.dir[1] * a.speed * TICK;
            continue;
        }
        let leader = snapshot
            .iter()
            .enumerate()
            .filter(|(j, s)| *j != i && !s.3 && (s.1 - a.y).abs() < LANE_WIDTH / 2.0 && s.0 > a.x)
            .min_by(|x, y| x.1 .0.total_cmp(&y.1 .0))
            .map(|(_, s)| (s.0 - a.x - 4.5, a.speed - s.2));
        let acc = idm(a.speed, a.desired, leader);
        a.speed = (a.speed + acc * TICK).max(0.0);
        a.x += a.speed * TICK;
        if let Some(lc) = &a.lane_change {
            let (y, vy) = lc.lateral(t + TICK);
            a.y = y;
            a.vy = vy;
        }
    }
}

fn frame_of(template: Template, agents: &[Agent], roads: &[NodeState], t: f64) -> SceneGraph {
    let mut nodes: Vec<NodeState> = agents
        .iter()
        .map(|a| {
            let v = if a.crossing {
                [a.dir[0] * a.speed, a.dir[1] * a.speed]
            } else {
                [a.speed, a.vy]
            };
            let heading = if a.crossing { a.dir[1].atan2(a.dir[0]) } else { v[1].atan2(v[0].max(1e-6)) };
            NodeState::vehicle(a.id.as_str(), [a.x, a.y], v, heading).with_lane(lane_name(template, a))
        })
        .collect();
    nodes.extend_from_slice(roads);
    derive_relations(&SceneGraph::new(t, nodes), true)
}

/// Generates `cfg.count` scenarios. Output is a pure function of `cfg`.
pub fn generate_synthetic(cfg: &SynthConfig) -> Vec<AtomScenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let frames_per = ((cfg.duration / TICK).round() as usize).max(1);
    let (lo, hi) = (cfg.vehicles.0.max(1), cfg.vehicles.1.max(cfg.vehicles.0.max(1)));
    (0..cfg.count)
        .map(|k| {
            let template = cfg.template.unwrap_or(Template::ALL[k % Template::ALL.len()]);
            let n = rng.random_range(lo..=hi);
            let (mut agents, cross_x) = spawn(template, cfg, n, &mut rng);
            let roads = road_nodes(template, cfg.lanes.max(1), cross_x);
            let mut frames = Vec::with_capacity(frames_per);
            for f in 0..frames_per {
                let t = f as f64 * TICK;
                frames.push(frame_of(template, &agents, &roads, t));
                step(&mut agents, t);
            }
            let ego_end = frames.last().and_then(|f| f.node(&"ego".into())).map(|n| n.position);
            let goal = ego_end.map(|p| {
                let lane_y = match template {
                    Template::Merge => 0.0,
                    _ => (p[1] / LANE_WIDTH).round() * LANE_WIDTH,
                };
                [p[0] + 30.0, lane_y]
            });
            AtomScenario {
                scenario_id: format!("syn{}-{k:05}", cfg.seed).into(),
                ego_id: "ego".into(),
                interaction_type: template.label().to_owned(),
                frames,
                goal,
            }
        })
        .collect()
}
