//! Reorganizing retrieved scenarios: arrange per-prompt results into
//! similarity levels, drop candidates whose ego relations do not match the
//! prompt, then pick up to `M` scenarios level by level.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::SearchResult;
use crate::scenario::{signature, AtomScenario, RelationSignature, ScenarioId, ScenarioStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: ScenarioId,
    pub distance: f32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    RelationMismatch,
    Quota,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dropped {
    pub id: ScenarioId,
    pub prompt: usize,
    pub level: usize,
    pub reason: DropReason,
}

/// Candidates grouped by rank: `levels[l][i]` is the `l`-th nearest result
/// for prompt `i` (both zero-based), `None` where that slot is empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalBundle {
    pub prompts: Vec<ScenarioId>,
    pub levels: Vec<Vec<Option<Candidate>>>,
    pub k: usize,
    pub desired_m: usize,
    /// Candidates removed by filtering, in level then prompt order.
    #[serde(default)]
    pub removed: Vec<Dropped>,
}

impl RetrievalBundle {
    pub fn n(&self) -> usize {
        self.prompts.len()
    }

    /// Surviving candidates in walk order as `(level, prompt, candidate)`.
    pub fn walk(&self) -> impl Iterator<Item = (usize, usize, &Candidate)> {
        self.levels
            .iter()
            .enumerate()
            .flat_map(|(l, row)| row.iter().enumerate().filter_map(move |(i, c)| c.as_ref().map(|c| (l, i, c))))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chosen {
    pub id: ScenarioId,
    pub prompt: usize,
    pub level: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RagSelection {
    pub chosen: Vec<Chosen>,
    pub dropped: Vec<Dropped>,
}

impl RagSelection {
    pub fn chosen_ids(&self) -> Vec<ScenarioId> {
        self.chosen.iter().map(|c| c.id.clone()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("selection serializes")
    }
}

/// Transposes per-prompt rankings into `k` levels.
///
/// `results[i]` belongs to `prompts[i]`. Results shorter than `k` leave
/// gaps; entries past `k` are ignored.
pub fn arrange(prompts: &[ScenarioId], results: &[SearchResult], k: usize, desired_m: usize) -> Result<RetrievalBundle> {
    if prompts.len() != results.len() {
        return Err(Error::Input(format!(
            "{} prompts but {} search results",
            prompts.len(),
            results.len()
        )));
    }
    if k == 0 {
        return Err(Error::Config("K must be positive".into()));
    }
    if let Some(i) = results.iter().position(|r| r.neighbor_ids.is_empty()) {
        return Err(Error::Input(format!("search result for prompt {i} is empty")));
    }
    let levels = (0..k)
        .map(|l| {
            results
                .iter()
                .map(|r| {
                    r.neighbor_ids.get(l).map(|id| Candidate {
                        id: id.clone(),
                        distance: r.distances[l],
                    })
                })
                .collect()
        })
        .collect();
    Ok(RetrievalBundle {
        prompts: prompts.to_vec(),
        levels,
        k,
        desired_m,
        removed: Vec::new(),
    })
}

/// Which frames a scenario's relation signature is read from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignatureMode {
    #[default]
    FirstFrame,
    /// Per relation, the count seen in most frames (ties to the smaller
    /// count); the lane connection seen in most frames.
    Majority,
}

pub fn scenario_signature(s: &AtomScenario, mode: SignatureMode) -> RelationSignature {
    match mode {
        SignatureMode::FirstFrame => signature(s, 0),
        SignatureMode::Majority => majority_signature(s),
    }
}

fn majority_signature(s: &AtomScenario) -> RelationSignature {
    let frames: Vec<RelationSignature> = (0..s.frames.len()).map(|k| signature(s, k)).collect();
    let mut ego_relations = BTreeMap::new();
    let relations: HashSet<_> = frames.iter().flat_map(|f| f.ego_relations.keys().copied()).collect();
    for r in relations {
        let mut tally: BTreeMap<usize, usize> = BTreeMap::new();
        for f in &frames {
            *tally.entry(f.ego_relations.get(&r).copied().unwrap_or(0)).or_default() += 1;
        }
        let (&count, _) = tally
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .expect("nonempty tally");
        if count > 0 {
            ego_relations.insert(r, count);
        }
    }
    let mut lanes: BTreeMap<Option<(String, String)>, usize> = BTreeMap::new();
    for f in &frames {
        *lanes.entry(f.lane_connection.clone()).or_default() += 1;
    }
    let lane_connection = lanes
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .and_then(|(l, _)| l);
    RelationSignature {
        ego_relations,
        lane_connection,
    }
}

/// True when a candidate with signature `candidate` may serve a prompt with
/// signature `prompt`.
pub fn relations_match(prompt: &RelationSignature, candidate: &RelationSignature) -> bool {
    let lanes_ok = match (&prompt.lane_connection, &candidate.lane_connection) {
        (Some(a), Some(b)) => a == b,
        _ => true,
    };
    lanes_ok && prompt.is_sub_multiset_of(candidate)
}

/// Removes candidates whose signature does not contain the prompt's.
pub fn relation_filter(
    bundle: &RetrievalBundle,
    prompt_signatures: &[RelationSignature],
    store: &ScenarioStore,
    mode: SignatureMode,
) -> Result<RetrievalBundle> {
    if prompt_signatures.len() != bundle.n() {
        return Err(Error::Input(format!(
            "{} prompt signatures for {} prompts",
            prompt_signatures.len(),
            bundle.n()
        )));
    }
    let mut cache: HashMap<&ScenarioId, RelationSignature> = HashMap::new();
    let mut out = bundle.clone();
    for (l, row) in out.levels.iter_mut().enumerate() {
        for (i, slot) in row.iter_mut().enumerate() {
            let Some(c) = slot else { continue };
            let id = &bundle.levels[l][i].as_ref().expect("slot present").id;
            if !cache.contains_key(id) {
                let s = store
                    .get(id)
                    .ok_or_else(|| Error::Data(format!("candidate {id} not in scenario store")))?;
                cache.insert(id, scenario_signature(s, mode));
            }
            let sig = &cache[id];
            if !relations_match(&prompt_signatures[i], sig) {
                out.removed.push(Dropped {
                    id: c.id.clone(),
                    prompt: i,
                    level: l,
                    reason: DropReason::RelationMismatch,
                });
                *slot = None;
            }
        }
    }
    Ok(out)
}

/// Walks levels in order, prompts in order within a level, taking distinct
/// survivors until `m` are chosen.
pub fn select(bundle: &RetrievalBundle, m: usize) -> RagSelection {
    let mut sel = RagSelection {
        chosen: Vec::new(),
        dropped: bundle.removed.clone(),
    };
    let mut seen = HashSet::new();
    for (level, prompt, c) in bundle.walk() {
        if seen.contains(&c.id) {
            continue;
        }
        if sel.chosen.len() < m {
            seen.insert(c.id.clone());
            sel.chosen.push(Chosen {
                id: c.id.clone(),
                prompt,
                level,
            });
        } else {
            sel.dropped.push(Dropped {
                id: c.id.clone(),
                prompt,
                level,
                reason: DropReason::Quota,
            });
        }
    }
    sel
}
