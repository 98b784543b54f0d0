//! Trajectory CSV ingestion: per-row vehicle states are resampled to the
//! fixed tick and sliced into overlapping atom scenarios.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{derive_relations, wrap_angle, AtomScenario, NodeState, SceneGraph, TICK};
use crate::error::{Error, Result};

/// Column names for each field. `lane` and `label` are optional columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub time: String,
    pub id: String,
    pub x: String,
    pub y: String,
    pub vx: String,
    pub vy: String,
    pub heading: String,
    #[serde(default)]
    pub lane: Option<String>,
    #[serde(default)]
    pub label: Option<String>,
    /// Vehicle id to use as ego; defaults to the smallest id present for the whole window.
    #[serde(default)]
    pub ego: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            time: "time".into(),
            id: "id".into(),
            x: "x".into(),
            y: "y".into(),
            vx: "vx".into(),
            vy: "vy".into(),
            heading: "heading".into(),
            lane: None,
            label: None,
            ego: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slicing {
    pub window: f64,
    pub stride: f64,
}

impl Default for Slicing {
    fn default() -> Self {
        Self {
            window: 5.0,
            stride: 2.5,
        }
    }
}

#[derive(Clone, Debug)]
struct Sample {
    t: f64,
    pos: [f64; 2],
    vel: [f64; 2],
    heading: f64,
    lane: Option<String>,
    label: Option<String>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))
}

fn parse_f64(rec: &csv::StringRecord, idx: usize, name: &str, row: usize) -> Result<f64> {
    let raw = rec.get(idx).unwrap_or("").trim();
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Data(format!("row {row}: column {name:?} value {raw:?} is not a finite number")))
}

fn interpolate(track: &[Sample], t: f64) -> Option<(NodeStateParts, Option<String>)> {
    const EPS: f64 = 1e-6;
    let first = track.first()?;
    let last = track.last()?;
    if t < first.t - EPS || t > last.t + EPS {
        return None;
    }
    let k = track.partition_point(|s| s.t <= t + EPS);
    let (a, b) = if k == 0 {
        (first, first)
    } else if k >= track.len() {
        (last, last)
    } else {
        (&track[k - 1], &track[k])
    };
    let span = b.t - a.t;
    let w = if span > 0.0 { ((t - a.t) / span).clamp(0.0, 1.0) } else { 0.0 };
    let lerp = |p: f64, q: f64| p + (q - p) * w;
    let dh = wrap_angle(b.heading - a.heading);
    Some((
        NodeStateParts {
            pos: [lerp(a.pos[0], b.pos[0]), lerp(a.pos[1], b.pos[1])],
            vel: [lerp(a.vel[0], b.vel[0]), lerp(a.vel[1], b.vel[1])],
            heading: wrap_angle(a.heading + dh * w),
            lane: a.lane.clone(),
        },
        a.label.clone(),
    ))
}

struct NodeStateParts {
    pos: [f64; 2],
    vel: [f64; 2],
    heading: f64,
    lane: Option<String>,
}

/// Reads a trajectory CSV file. Scenario ids are `<file stem>-w<window index>`.
pub fn ingest_csv(path: impl AsRef<Path>, schema: &CsvSchema, slicing: &Slicing) -> Result<Vec<AtomScenario>> {
    let path = path.as_ref();
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("csv").to_owned();
    ingest_reader(std::fs::File::open(path)?, &stem, schema, slicing)
}

pub fn ingest_reader<R: Read>(reader: R, source: &str, schema: &CsvSchema, slicing: &Slicing) -> Result<Vec<AtomScenario>> {
    if !(slicing.window > 0.0) || !(slicing.stride > 0.0) {
        return Err(Error::Config("window and stride must be positive".into()));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let c_time = column(&headers, &schema.time)?;
    let c_id = column(&headers, &schema.id)?;
    let c_x = column(&headers, &schema.x)?;
    let c_y = column(&headers, &schema.y)?;
    let c_vx = column(&headers, &schema.vx)?;
    let c_vy = column(&headers, &schema.vy)?;
    let c_head = column(&headers, &schema.heading)?;
    let c_lane = schema.lane.as_deref().map(|n| column(&headers, n)).transpose()?;
    let c_label = schema.label.as_deref().map(|n| column(&headers, n)).transpose()?;

    let mut tracks: BTreeMap<String, Vec<Sample>> = BTreeMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = row + 2;
        let id = rec.get(c_id).unwrap_or("").trim().to_owned();
        if id.is_empty() {
            return Err(Error::Data(format!("row {row}: empty vehicle id")));
        }
        let opt = |c: Option<usize>| c.and_then(|c| rec.get(c)).map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned);
        let sample = Sample {
            t: parse_f64(&rec, c_time, &schema.time, row)?,
            pos: [parse_f64(&rec, c_x, &schema.x, row)?, parse_f64(&rec, c_y, &schema.y, row)?],
            vel: [parse_f64(&rec, c_vx, &schema.vx, row)?, parse_f64(&rec, c_vy, &schema.vy, row)?],
            heading: wrap_angle(parse_f64(&rec, c_head, &schema.heading, row)?),
            lane: opt(c_lane),
            label: opt(c_label),
        };
        let track = tracks.entry(id.clone()).or_default();
        if let Some(prev) = track.last() {
            if sample.t <= prev.t {
                return Err(Error::Data(format!(
                    "vehicle {id}: non-monotone timestamp {} after {} (row {row})",
                    sample.t, prev.t
                )));
            }
        }
        track.push(sample);
    }
    if tracks.is_empty() {
        return Ok(Vec::new());
    }

    let t0 = tracks.values().map(|t| t[0].t).fold(f64::INFINITY, f64::min);
    let t_end = tracks.values().map(|t| t[t.len() - 1].t).fold(f64::NEG_INFINITY, f64::max);
    let n_ticks = ((t_end - t0) / TICK + 1e-6).floor() as usize + 1;
    let window_ticks = ((slicing.window / TICK).round() as usize).max(1);
    let stride_ticks = ((slicing.stride / TICK).round() as usize).max(1);
    if n_ticks < window_ticks {
        return Ok(Vec::new());
    }
    let n_windows = (n_ticks - window_ticks) / stride_ticks + 1;

    let mut out = Vec::new();
    for w in 0..n_windows {
        let start = w * stride_ticks;
        let times: Vec<f64> = (start..start + window_ticks).map(|k| t0 + k as f64 * TICK).collect();
        let covers = |track: &[Sample]| times.iter().all(|&t| interpolate(track, t).is_some());
        let ego = match &schema.ego {
            Some(e) => tracks.get(e).filter(|t| covers(t)).map(|_| e.clone()),
            None => tracks.iter().find(|(_, t)| covers(t)).map(|(id, _)| id.clone()),
        };
        let Some(ego) = ego else { continue };

        let mut label = None;
        let frames = times
            .iter()
            .map(|&t| {
                let mut nodes = Vec::new();
                for (id, track) in &tracks {
                    if let Some((p, lab)) = interpolate(track, t) {
                        if id == &ego && label.is_none() {
                            label = lab;
                        }
                        let mut n = NodeState::vehicle(id.as_str(), p.pos, p.vel, p.heading);
                        n.lane_id = p.lane;
                        nodes.push(n);
                    }
                }
                derive_relations(&SceneGraph::new(t, nodes), true)
            })
            .collect();
        out.push(AtomScenario {
            scenario_id: format!("{source}-w{w:04}").into(),
            ego_id: ego.into(),
            interaction_type: label.unwrap_or_else(|| "unlabeled".to_owned()),
            frames,
            goal: None,
        });
    }
    Ok(out)
}
