use std::collections::HashSet;

use super::kmeans::{kmeans, nearest};
use super::{check_query, SearchResult, TopK, KMEANS_ITERATIONS};
use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::scenario::ScenarioId;

/// Product quantizer searched with asymmetric distance tables.
#[derive(Clone, Debug, PartialEq)]
pub struct PqIndex {
    dim: usize,
    chunks: usize,
    /// Centers per chunk, at most 256.
    centers: usize,
    /// `chunks × centers × (dim / chunks)`.
    codebooks: Vec<f32>,
    codes: Vec<u8>,
    ids: Vec<ScenarioId>,
    id_set: HashSet<ScenarioId>,
}

impl PqIndex {
    pub fn build<V: AsRef<[f32]>>(ids: &[ScenarioId], vectors: &[V], num_chunks: usize, seed: u64) -> Result<Self> {
        if ids.len() != vectors.len() || vectors.is_empty() {
            return Err(Error::Input("PQ needs matching, nonempty ids and vectors".into()));
        }
        let dim = vectors[0].as_ref().len();
        if num_chunks == 0 || dim % num_chunks != 0 {
            return Err(Error::Config(format!("dimension {dim} is not divisible into {num_chunks} chunks")));
        }
        if vectors.iter().any(|v| v.as_ref().len() != dim) {
            return Err(Error::Input("vectors must share a dimension".into()));
        }
        let sub = dim / num_chunks;
        let n = vectors.len();
        let centers = n.min(256);
        let mut codebooks = Vec::with_capacity(num_chunks * centers * sub);
        for c in 0..num_chunks {
            let mut slab = Vec::with_capacity(n * sub);
            for v in vectors {
                slab.extend_from_slice(&v.as_ref()[c * sub..(c + 1) * sub]);
            }
            codebooks.extend(kmeans(&slab, sub, centers, KMEANS_ITERATIONS, seed.wrapping_add(c as u64))?);
        }
        let mut index = Self {
            dim,
            chunks: num_chunks,
            centers,
            codebooks,
            codes: Vec::with_capacity(n * num_chunks),
            ids: Vec::with_capacity(n),
            id_set: HashSet::with_capacity(n),
        };
        for (id, v) in ids.iter().zip(vectors) {
            index.add(id.clone(), v.as_ref())?;
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[ScenarioId] {
        &self.ids
    }

    pub fn contains(&self, id: &ScenarioId) -> bool {
        self.id_set.contains(id)
    }

    pub fn num_chunks(&self) -> usize {
        self.chunks
    }

    fn sub(&self) -> usize {
        self.dim / self.chunks
    }

    fn codebook(&self, chunk: usize) -> &[f32] {
        let len = self.centers * self.sub();
        &self.codebooks[chunk * len..(chunk + 1) * len]
    }

    pub fn encode_vector(&self, v: &[f32]) -> Vec<u8> {
        let sub = self.sub();
        (0..self.chunks)
            .map(|c| nearest(&v[c * sub..(c + 1) * sub], self.codebook(c), sub).0 as u8)
            .collect()
    }

    pub fn decode_code(&self, code: &[u8]) -> Vec<f32> {
        let sub = self.sub();
        let mut out = Vec::with_capacity(self.dim);
        for (c, &k) in code.iter().enumerate() {
            let k = k as usize;
            out.extend_from_slice(&self.codebook(c)[k * sub..(k + 1) * sub]);
        }
        out
    }

    pub fn code(&self, slot: usize) -> &[u8] {
        &self.codes[slot * self.chunks..(slot + 1) * self.chunks]
    }

    pub fn search(&self, query: &[f32], k: usize) -> Result<SearchResult> {
        check_query(k, self.len(), self.dim, query)?;
        let sub = self.sub();
        let mut table = vec![0f32; self.chunks * self.centers];
        for c in 0..self.chunks {
            let q = &query[c * sub..(c + 1) * sub];
            for (j, center) in self.codebook(c).chunks_exact(sub).enumerate() {
                table[c * self.centers + j] = super::squared_l2(q, center);
            }
        }
        let n = self.len();
        let mut top = TopK::new(k.min(n), &self.ids);
        for (slot, code) in self.codes.chunks_exact(self.chunks).enumerate() {
            let mut d = 0f32;
            for (c, &j) in code.iter().enumerate() {
                d += table[c * self.centers + j as usize];
            }
            top.push(d, slot as u32);
        }
        Ok(top.into_result(n, k))
    }

    pub fn add(&mut self, id: ScenarioId, vector: &[f32]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Input(format!(
                "vector has dimension {}, index expects {}",
                vector.len(),
                self.dim
            )));
        }
        if self.id_set.contains(&id) {
            return Err(Error::Input(format!("duplicate id {id}")));
        }
        let code = self.encode_vector(vector);
        self.codes.extend_from_slice(&code);
        self.id_set.insert(id.clone());
        self.ids.push(id);
        Ok(())
    }

    pub(crate) fn encode(&self, e: &mut Encoder) {
        e.usize(self.dim);
        e.usize(self.chunks);
        e.usize(self.centers);
        e.f32s(&self.codebooks);
        e.bytes(&self.codes);
        e.usize(self.ids.len());
        for id in &self.ids {
            e.str(id.as_str());
        }
    }

    pub(crate) fn decode(d: &mut Decoder) -> Result<Self> {
        let dim = d.usize()?;
        let chunks = d.usize()?;
        let centers = d.usize()?;
        let codebooks = d.f32s()?;
        let codes = d.bytes()?.to_vec();
        let n = d.usize()?;
        let mut ids = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            ids.push(ScenarioId::from(d.string()?));
        }
        let id_set: HashSet<ScenarioId> = ids.iter().cloned().collect();
        let consistent = chunks > 0
            && dim % chunks == 0
            && (1..=256).contains(&centers)
            && codebooks.len() == centers * dim
            && codes.len() == n * chunks
            && id_set.len() == n
            && codes.iter().all(|&c| (c as usize) < centers);
        if !consistent {
            return Err(Error::Load("inconsistent PQ payload".into()));
        }
        Ok(Self {
            dim,
            chunks,
            centers,
            codebooks,
            codes,
            ids,
            id_set,
        })
    }
}
