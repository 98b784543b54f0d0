use super::{check_query, squared_l2, SearchResult, TopK, VectorSet};
use crate::codec::{Decoder, Encoder};
use crate::error::Result;
use crate::scenario::ScenarioId;

/// Exhaustive scan over raw vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatIndex {
    set: VectorSet,
}

impl FlatIndex {
    pub fn build<V: AsRef<[f32]>>(ids: &[ScenarioId], vectors: &[V]) -> Result<Self> {
        Ok(Self {
            set: VectorSet::from_parts(ids, vectors)?,
        })
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.set.dim
    }

    pub fn ids(&self) -> &[ScenarioId] {
        &self.set.ids
    }

    pub fn contains(&self, id: &ScenarioId) -> bool {
        self.set.contains(id)
    }

    pub fn vector(&self, id: &ScenarioId) -> Option<&[f32]> {
        let slot = self.set.ids.iter().position(|x| x == id)?;
        Some(self.set.vector(slot as u32))
    }

    pub fn search(&self, query: &[f32], k: usize) -> Result<SearchResult> {
        check_query(k, self.len(), self.dim(), query)?;
        let n = self.len();
        let mut top = TopK::new(k.min(n), &self.set.ids);
        for slot in 0..n as u32 {
            top.push(squared_l2(query, self.set.vector(slot)), slot);
        }
        Ok(top.into_result(n, k))
    }

    pub fn add(&mut self, id: ScenarioId, vector: &[f32]) -> Result<()> {
        self.set.push(id, vector).map(|_| ())
    }

    pub(crate) fn encode(&self, e: &mut Encoder) {
        self.set.encode(e);
    }

    pub(crate) fn decode(d: &mut Decoder) -> Result<Self> {
        Ok(Self {
            set: VectorSet::decode(d)?,
        })
    }
}
