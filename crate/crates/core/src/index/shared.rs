use std::sync::{PoisonError, RwLock, RwLockReadGuard};

use super::{AnyIndex, SearchParams, SearchResult};
use crate::error::{Error, Result};
use crate::scenario::{AtomScenario, ScenarioStore};

/// Single-writer, many-reader wrapper used while serving searches.
///
/// Inserts happen under the write lock, so a reader sees either the index
/// before an insert or after it, never a partially linked node.
#[derive(Debug)]
pub struct SharedIndex {
    inner: RwLock<AnyIndex>,
}

impl SharedIndex {
    pub fn new(index: AnyIndex) -> Self {
        Self {
            inner: RwLock::new(index),
        }
    }

    pub fn read(&self) -> RwLockReadGuard<'_, AnyIndex> {
        self.inner.read().unwrap_or_else(PoisonError::into_inner)
    }

    pub fn into_inner(self) -> AnyIndex {
        self.inner.into_inner().unwrap_or_else(PoisonError::into_inner)
    }

    pub fn len(&self) -> usize {
        self.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.read().is_empty()
    }

    pub fn search_batch<V: AsRef<[f32]> + Sync>(
        &self,
        queries: &[V],
        k: usize,
        params: &SearchParams,
    ) -> Result<Vec<SearchResult>> {
        self.read().search_batch(queries, k, params)
    }

    /// Adds `prompt` when its nearest stored neighbor is farther than `threshold`.
    ///
    /// `result` must come from searching this index with `vector`. The scenario
    /// is appended to `store` first; the index is only touched once that
    /// append succeeded.
    pub fn expand(
        &self,
        store: &mut ScenarioStore,
        prompt: &AtomScenario,
        vector: &[f32],
        result: &SearchResult,
        threshold: f32,
    ) -> Result<bool> {
        let far = result.min_distance().is_none_or(|d| d > threshold);
        if !far {
            return Ok(false);
        }
        let mut index = self.inner.write().unwrap_or_else(PoisonError::into_inner);
        if index.contains(&prompt.scenario_id) || store.contains(&prompt.scenario_id) {
            return Err(Error::Input(format!("scenario {} is already stored", prompt.scenario_id)));
        }
        if !index.is_empty() && vector.len() != index.dim() {
            return Err(Error::Input(format!(
                "vector has dimension {}, index expects {}",
                vector.len(),
                index.dim()
            )));
        }
        store.append(prompt.clone())?;
        index.add(prompt.scenario_id.clone(), vector)?;
        Ok(true)
    }
}
