use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scenario::{AtomScenario, SceneGraph, ScenarioId};

/// Fixed prompt text around the rendered scenarios. Plain data so it can be
/// edited and loaded from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub instructions: String,
    /// `{horizon}` and `{dt}` are substituted.
    pub task: String,
    pub cot_questions: Vec<String>,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            instructions: "You are the planning module of an automated vehicle (the ego). \
                           Positions are world coordinates in meters, speeds in m/s, headings in degrees \
                           counter-clockwise from +x. Relations are seen from the ego: front, front_left, \
                           rear_left, rear, rear_right, front_right."
                .to_owned(),
            task: "Plan the ego trajectory for the next {horizon} s. Put the waypoints in one fenced block, \
                   one `t,x,y` line every {dt} s starting at t=0, with t in seconds from now. \
                   After the block, state each hazard on its own line starting with `WARNING:`."
                .to_owned(),
            cot_questions: vec![
                "Which vehicles interact with the ego, and in which relation?".to_owned(),
                "Which lane does the ego need to reach its goal?".to_owned(),
                "Is any gap ahead or beside the ego closing?".to_owned(),
                "What did the drivers in the reference cases do in a similar situation?".to_owned(),
                "Which speed and lateral motion keep the plan safe and smooth?".to_owned(),
            ],
        }
    }
}

impl PromptTemplate {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCase {
    pub id: ScenarioId,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub instructions: String,
    pub scenario_description: String,
    pub task: String,
    pub cot_questions: Vec<String>,
    pub reference_cases: Vec<ReferenceCase>,
    /// Set when filtering left nothing to show.
    pub no_reference_cases: bool,
}

impl PromptBundle {
    pub fn new(
        template: &PromptTemplate,
        current: &AtomScenario,
        references: &[&AtomScenario],
        horizon: f64,
        dt: f64,
    ) -> Self {
        Self {
            instructions: template.instructions.clone(),
            scenario_description: describe_scenario(current),
            task: template
                .task
                .replace("{horizon}", &fmt_num(horizon))
                .replace("{dt}", &fmt_num(dt)),
            cot_questions: template.cot_questions.clone(),
            reference_cases: references
                .iter()
                .map(|s| ReferenceCase {
                    id: s.scenario_id.clone(),
                    text: describe_reference(s),
                })
                .collect(),
            no_reference_cases: references.is_empty(),
        }
    }

    /// Plain-text prompt; sections in a fixed order.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# Instructions\n{}\n", self.instructions);
        let _ = writeln!(out, "# Scenario\n{}", self.scenario_description);
        let _ = writeln!(out, "# Task\n{}\n", self.task);
        out.push_str("# Chain of thought\n");
        for (k, q) in self.cot_questions.iter().enumerate() {
            let _ = writeln!(out, "{}. {q}", k + 1);
        }
        out.push_str("\n# Reference cases\n");
        if self.no_reference_cases {
            out.push_str("No matching reference cases were found.\n");
        }
        for (k, c) in self.reference_cases.iter().enumerate() {
            let _ = writeln!(out, "## Case {} ({})\n{}", k + 1, c.id, c.text);
        }
        out
    }
}

/// Fixed two-decimal formatting with `-0.00` folded to `0.00`.
fn fmt2(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".to_owned()
    } else {
        s
    }
}

fn fmt_num(x: f64) -> String {
    let s = format!("{x:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_owned()
}

/// Frames at whole-second offsets from the first frame, plus the last frame.
fn one_hz(s: &AtomScenario) -> Vec<&SceneGraph> {
    let Some(first) = s.frames.first() else { return Vec::new() };
    let mut out = Vec::new();
    let mut next = 0.0;
    for f in &s.frames {
        let t = f.timestamp - first.timestamp;
        if t + 1e-6 >= next {
            out.push(f);
            next = t.round() + 1.0;
        }
    }
    if let Some(last) = s.frames.last() {
        if !std::ptr::eq(*out.last().expect("nonempty"), last) {
            out.push(last);
        }
    }
    out
}

fn describe_frame(s: &AtomScenario, f: &SceneGraph, t0: f64, out: &mut String) {
    let Some(ego) = f.node(&s.ego_id) else { return };
    let lane = ego.lane_id.as_deref().unwrap_or("unknown");
    let _ = write!(
        out,
        "t={}s: ego at ({}, {}) speed {} heading {} lane {}.",
        fmt2(f.timestamp - t0),
        fmt2(ego.position[0]),
        fmt2(ego.position[1]),
        fmt2(ego.speed()),
        fmt2(ego.heading.to_degrees()),
        lane
    );
    for e in f.edges.iter().filter(|e| e.src == s.ego_id && e.relation.is_directional()) {
        if let Some(n) = f.node(&e.dst) {
            let _ = write!(
                out,
                " {} {} at {} m speed {} heading {}.",
                n.node_id,
                e.relation,
                fmt2(e.distance),
                fmt2(n.speed()),
                fmt2(n.heading.to_degrees())
            );
        }
    }
    out.push('\n');
}

/// Ego-centric description of `s`, sampled at 1 Hz.
pub fn describe_scenario(s: &AtomScenario) -> String {
    let t0 = s.frames.first().map_or(0.0, |f| f.timestamp);
    let mut out = format!("Interaction type: {}.\n", s.interaction_type);
    if let Some(g) = s.goal {
        let _ = writeln!(out, "Ego goal: ({}, {}).", fmt2(g[0]), fmt2(g[1]));
    }
    for f in one_hz(s) {
        describe_frame(s, f, t0, &mut out);
    }
    out
}

/// Scenario description followed by the recorded ego track.
pub fn describe_reference(s: &AtomScenario) -> String {
    let mut out = describe_scenario(s);
    out.push_str("Ego track (t,x,y):\n");
    let t0 = s.frames.first().map_or(0.0, |f| f.timestamp);
    for f in one_hz(s) {
        if let Some(e) = f.node(&s.ego_id) {
            let _ = writeln!(out, "{},{},{}", fmt2(f.timestamp - t0), fmt2(e.position[0]), fmt2(e.position[1]));
        }
    }
    out
}
