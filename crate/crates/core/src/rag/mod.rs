//! Retrieval-augmented planning: candidate futures, retrieval, context
//! assembly and the LLM exchange.

mod llm;
mod prompts;
mod quintic;
mod render;

use std::collections::BTreeMap;
use std::sync::{Mutex, MutexGuard, PoisonError};

use serde::{Deserialize, Serialize};

use crate::embed::{embed_batch, EmbeddingModel, GraphDtwLandmarks};
use crate::error::{Error, Result};
use crate::graph_dtw::GraphDtwConfig;
use crate::index::{AnyIndex, SearchParams, SearchResult, SharedIndex};
use crate::reorg::{arrange, relation_filter, scenario_signature, select, RagSelection, SignatureMode};
use crate::scenario::{AtomScenario, ScenarioId, ScenarioStore};

pub use llm::{
    ade, llm_plan, parse_response, prompt_hash, Exchange, HttpClient, LlmClient, MockClient, PlanResponse, RecordingClient,
    ReplayClient,
};
pub use prompts::{default_horizons, make_prompt_scenarios, Maneuver, PromptConfig, PromptScenario};
pub use quintic::{eval_axis, quintic, quintic_axis, AxisState, QuinticCoeffs};
pub use render::{describe_reference, describe_scenario, PromptBundle, PromptTemplate, ReferenceCase};

/// Horizon over which plans are scored.
pub const ADE_HORIZON: f64 = 3.0;

/// Retrieval resources for one interaction type.
pub struct Expert {
    pub interaction_type: String,
    pub model: EmbeddingModel,
    pub landmarks: GraphDtwLandmarks,
    pub index: SharedIndex,
    store: Mutex<ScenarioStore>,
}

impl Expert {
    /// Landmark scenarios are looked up in `store` by the model's landmark ids.
    /// Every stored scenario must carry `interaction_type`.
    pub fn new(
        interaction_type: impl Into<String>,
        model: EmbeddingModel,
        store: ScenarioStore,
        index: AnyIndex,
        cfg: GraphDtwConfig,
    ) -> Result<Self> {
        let interaction_type = interaction_type.into();
        if let Some(s) = store.iter().find(|s| s.interaction_type != interaction_type) {
            return Err(Error::Config(format!(
                "scenario {} has interaction type {:?}, expert serves {interaction_type:?}",
                s.scenario_id, s.interaction_type
            )));
        }
        let landmark_scenarios = model
            .landmarks
            .iter()
            .map(|id| {
                store
                    .get(id)
                    .cloned()
                    .ok_or_else(|| Error::Data(format!("landmark {id} not in scenario store")))
            })
            .collect::<Result<Vec<_>>>()?;
        if !index.is_empty() && index.dim() != model.dim {
            return Err(Error::Config(format!(
                "index dimension {} does not match model dimension {}",
                index.dim(),
                model.dim
            )));
        }
        if let Some(id) = index.ids().iter().find(|id| !store.contains(id)) {
            return Err(Error::Data(format!("indexed scenario {id} not in scenario store")));
        }
        Ok(Self {
            interaction_type,
            landmarks: GraphDtwLandmarks::new(&landmark_scenarios, cfg)?,
            model,
            index: SharedIndex::new(index),
            store: Mutex::new(store),
        })
    }

    pub fn store(&self) -> MutexGuard<'_, ScenarioStore> {
        self.store.lock().unwrap_or_else(PoisonError::into_inner)
    }
}

/// Experts keyed by interaction type.
#[derive(Default)]
pub struct Engine {
    experts: BTreeMap<String, Expert>,
}

impl Engine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, expert: Expert) {
        self.experts.insert(expert.interaction_type.clone(), expert);
    }

    pub fn expert(&self, interaction_type: &str) -> Result<&Expert> {
        self.experts
            .get(interaction_type)
            .ok_or_else(|| Error::Routing(interaction_type.to_owned()))
    }

    pub fn interaction_types(&self) -> impl Iterator<Item = &str> {
        self.experts.keys().map(String::as_str)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RagParams {
    /// Number of candidate futures.
    pub n: usize,
    pub k: usize,
    pub m: usize,
    /// Prompts farther than this from every stored scenario are added to the
    /// database; `None` disables expansion.
    pub expand_threshold: Option<f32>,
    /// One per candidate; `None` uses [`default_horizons`].
    pub horizons: Option<Vec<f64>>,
    pub search: SearchParams,
    pub signature_mode: SignatureMode,
    pub prompt: PromptConfig,
    pub template: PromptTemplate,
    /// Horizon and waypoint spacing requested from the planner.
    pub plan_horizon: f64,
    pub plan_dt: f64,
}

impl Default for RagParams {
    fn default() -> Self {
        Self {
            n: 5,
            k: 4,
            m: 4,
            expand_threshold: Some(10.0),
            horizons: None,
            search: SearchParams {
                ef_search: Some(128),
                nprobe: None,
            },
            signature_mode: SignatureMode::FirstFrame,
            prompt: PromptConfig::default(),
            template: PromptTemplate::default(),
            plan_horizon: ADE_HORIZON,
            plan_dt: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RagOutcome {
    pub bundle: PromptBundle,
    pub selection: RagSelection,
    pub prompts: Vec<PromptScenario>,
    pub results: Vec<SearchResult>,
    /// Prompt scenarios appended to the database by the expansion check.
    pub expanded: Vec<ScenarioId>,
}

/// Candidate futures → embed → search → expansion check → arrange →
/// relation filter → select → prompt.
pub fn run_rag(current: &AtomScenario, engine: &Engine, params: &RagParams) -> Result<RagOutcome> {
    let expert = engine.expert(&current.interaction_type)?;
    if params.n == 0 || params.k == 0 {
        return Err(Error::Config("n and K must be positive".into()));
    }
    let horizons = params.horizons.clone().unwrap_or_else(|| default_horizons(params.n));
    if horizons.len() != params.n {
        return Err(Error::Config(format!("{} horizons for n = {}", horizons.len(), params.n)));
    }
    let prompts = make_prompt_scenarios(current, &horizons, &params.prompt)?;
    let scenarios: Vec<AtomScenario> = prompts.iter().map(|p| p.scenario.clone()).collect();
    let vectors: Vec<Vec<f32>> = embed_batch(&scenarios, &expert.model, &expert.landmarks)?
        .iter()
        .map(|v| v.to_f32())
        .collect();
    let results = expert.index.search_batch(&vectors, params.k, &params.search)?;

    let mut expanded = Vec::new();
    if let Some(threshold) = params.expand_threshold {
        let mut store = expert.store();
        for ((s, v), r) in scenarios.iter().zip(&vectors).zip(&results) {
            if store.contains(&s.scenario_id) {
                continue;
            }
            if expert.index.expand(&mut store, s, v, r, threshold)? {
                expanded.push(s.scenario_id.clone());
            }
        }
    }

    let ids: Vec<ScenarioId> = scenarios.iter().map(|s| s.scenario_id.clone()).collect();
    let bundle = arrange(&ids, &results, params.k, params.m)?;
    let signatures: Vec<_> = scenarios.iter().map(|s| scenario_signature(s, params.signature_mode)).collect();
    let store = expert.store();
    let filtered = relation_filter(&bundle, &signatures, &store, params.signature_mode)?;
    let selection = select(&filtered, params.m);
    let references: Vec<&AtomScenario> = selection
        .chosen
        .iter()
        .map(|c| store.get(&c.id).expect("filtered candidates are stored"))
        .collect();
    let prompt = PromptBundle::new(&params.template, current, &references, params.plan_horizon, params.plan_dt);
    drop(references);
    drop(store);
    Ok(RagOutcome {
        bundle: prompt,
        selection,
        prompts,
        results,
        expanded,
    })
}
