//! Nearest-neighbor indexes over embedding vectors: exact Flat plus IVF, PQ
//! and HNSW, a common file format, and the expansion path for new prompts.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::scenario::ScenarioId;

mod flat;
mod hnsw;
mod ivf;
pub(crate) mod kmeans;
mod pq;
mod shared;

pub use flat::FlatIndex;
pub use hnsw::{HnswIndex, HnswParams};
pub use ivf::IvfIndex;
pub use pq::PqIndex;
pub use shared::SharedIndex;

pub const DEFAULT_EF_CONSTRUCTION: usize = 200;
pub const DEFAULT_EF_SEARCH: usize = 64;
pub const DEFAULT_NPROBE: usize = 8;
pub const KMEANS_ITERATIONS: usize = 25;

const MAGIC: &[u8; 8] = b"DRAGIDX\0";
const VERSION: u32 = 1;

/// Squared Euclidean distance with a fixed summation order.
#[inline]
pub fn squared_l2(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            let t = x[k] - y[k];
            acc[k] += t * t;
        }
    }
    let mut tail = 0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += (x - y) * (x - y);
    }
    (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]) + tail
}

/// Top-K answer for one query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub neighbor_ids: Vec<ScenarioId>,
    /// Euclidean distances, ascending.
    pub distances: Vec<f32>,
    /// Set when fewer than the requested K entries exist in the index.
    pub truncated: bool,
}

impl SearchResult {
    pub fn min_distance(&self) -> Option<f32> {
        self.distances.first().copied()
    }

    pub fn len(&self) -> usize {
        self.neighbor_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbor_ids.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SearchParams {
    pub ef_search: Option<usize>,
    pub nprobe: Option<usize>,
}

/// Ids plus row-major f32 vectors with an id → slot map.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct VectorSet {
    pub dim: usize,
    pub ids: Vec<ScenarioId>,
    pub data: Vec<f32>,
    slots: HashMap<ScenarioId, u32>,
}

impl VectorSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ids: Vec::new(),
            data: Vec::new(),
            slots: HashMap::new(),
        }
    }

    pub fn from_parts<V: AsRef<[f32]>>(ids: &[ScenarioId], vectors: &[V]) -> Result<Self> {
        if ids.len() != vectors.len() {
            return Err(Error::Input(format!("{} ids for {} vectors", ids.len(), vectors.len())));
        }
        let dim = vectors.first().map(|v| v.as_ref().len()).unwrap_or(0);
        let mut set = Self::new(dim);
        set.data.reserve(dim * vectors.len());
        for (id, v) in ids.iter().zip(vectors) {
            set.push(id.clone(), v.as_ref())?;
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn check_dim(&self, v: &[f32]) -> Result<()> {
        if v.len() != self.dim || self.dim == 0 {
            return Err(Error::Input(format!(
                "vector has dimension {}, index expects {}",
                v.len(),
                self.dim
            )));
        }
        Ok(())
    }

    pub fn check_new_id(&self, id: &ScenarioId) -> Result<()> {
        if self.slots.contains_key(id) {
            return Err(Error::Input(format!("duplicate id {id}")));
        }
        Ok(())
    }

    pub fn push(&mut self, id: ScenarioId, v: &[f32]) -> Result<u32> {
        if self.ids.is_empty() && self.dim == 0 {
            self.dim = v.len();
        }
        self.check_dim(v)?;
        self.check_new_id(&id)?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input(format!("vector for {id} has non-finite entries")));
        }
        let slot = self.ids.len() as u32;
        self.slots.insert(id.clone(), slot);
        self.ids.push(id);
        self.data.extend_from_slice(v);
        Ok(slot)
    }

    #[inline]
    pub fn vector(&self, slot: u32) -> &[f32] {
        let s = slot as usize * self.dim;
        &self.data[s..s + self.dim]
    }

    pub fn contains(&self, id: &ScenarioId) -> bool {
        self.slots.contains_key(id)
    }

    pub fn encode(&self, e: &mut Encoder) {
        e.usize(self.dim);
        e.usize(self.ids.len());
        for id in &self.ids {
            e.str(id.as_str());
        }
        e.f32s(&self.data);
    }

    pub fn decode(d: &mut Decoder) -> Result<Self> {
        let dim = d.usize()?;
        let n = d.usize()?;
        let mut ids = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            ids.push(ScenarioId::from(d.string()?));
        }
        let data = d.f32s()?;
        if data.len() != n * dim {
            return Err(Error::Load("vector payload does not match id count".into()));
        }
        let slots = ids.iter().enumerate().map(|(k, id)| (id.clone(), k as u32)).collect::<HashMap<_, _>>();
        if slots.len() != n {
            return Err(Error::Load("duplicate ids in index file".into()));
        }
        Ok(Self { dim, ids, data, slots })
    }
}

/// Sorts `(squared distance, slot)` pairs by distance then id and keeps `k`.
pub(crate) fn finish(mut hits: Vec<(f32, u32)>, ids: &[ScenarioId], k: usize, total: usize) -> SearchResult {
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| ids[a.1 as usize].cmp(&ids[b.1 as usize])));
    hits.truncate(k);
    SearchResult {
        neighbor_ids: hits.iter().map(|&(_, s)| ids[s as usize].clone()).collect(),
        distances: hits.iter().map(|&(d, _)| d.sqrt()).collect(),
        truncated: k > total,
    }
}

/// Bounded best-`k` collector ordered by (distance, id).
pub(crate) struct TopK<'a> {
    k: usize,
    ids: &'a [ScenarioId],
    items: Vec<(f32, u32)>,
}

impl<'a> TopK<'a> {
    pub fn new(k: usize, ids: &'a [ScenarioId]) -> Self {
        Self {
            k,
            ids,
            items: Vec::with_capacity(k + 1),
        }
    }

    fn less(&self, a: (f32, u32), b: (f32, u32)) -> bool {
        match a.0.total_cmp(&b.0) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => self.ids[a.1 as usize] < self.ids[b.1 as usize],
        }
    }

    #[inline]
    pub fn push(&mut self, d: f32, slot: u32) {
        if self.items.len() == self.k {
            let worst = self.items[self.k - 1];
            if !self.less((d, slot), worst) {
                return;
            }
            self.items.pop();
        }
        let mut pos = self.items.len();
        while pos > 0 && self.less((d, slot), self.items[pos - 1]) {
            pos -= 1;
        }
        self.items.insert(pos, (d, slot));
    }

    pub fn into_result(self, total: usize, k_requested: usize) -> SearchResult {
        finish(self.items, self.ids, k_requested, total)
    }
}

/// Index type as named on the command line: `flat`, `ivf<k>`, `pq<m>`, `hnsw<M>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IndexSpec {
    Flat,
    Ivf { clusters: usize },
    Pq { chunks: usize },
    Hnsw { m: usize },
}

impl FromStr for IndexSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let num = |prefix: &str| -> Result<usize> {
            lower[prefix.len()..]
                .parse::<usize>()
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| Error::Config(format!("bad index type {s:?}")))
        };
        if lower == "flat" {
            Ok(Self::Flat)
        } else if lower.starts_with("hnsw") {
            Ok(Self::Hnsw { m: num("hnsw")? })
        } else if lower.starts_with("ivf") {
            Ok(Self::Ivf { clusters: num("ivf")? })
        } else if lower.starts_with("pq") {
            Ok(Self::Pq { chunks: num("pq")? })
        } else {
            Err(Error::Config(format!("unknown index type {s:?}")))
        }
    }
}

impl fmt::Display for IndexSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Flat => f.write_str("flat"),
            Self::Ivf { clusters } => write!(f, "ivf{clusters}"),
            Self::Pq { chunks } => write!(f, "pq{chunks}"),
            Self::Hnsw { m } => write!(f, "hnsw{m}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BuildOptions {
    pub ef_construction: usize,
    pub seed: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            ef_construction: DEFAULT_EF_CONSTRUCTION,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub enum AnyIndex {
    Flat(FlatIndex),
    Ivf(IvfIndex),
    Pq(PqIndex),
    Hnsw(HnswIndex),
}

pub fn build_index<V: AsRef<[f32]>>(
    spec: IndexSpec,
    ids: &[ScenarioId],
    vectors: &[V],
    opts: &BuildOptions,
) -> Result<AnyIndex> {
    Ok(match spec {
        IndexSpec::Flat => AnyIndex::Flat(FlatIndex::build(ids, vectors)?),
        IndexSpec::Ivf { clusters } => AnyIndex::Ivf(IvfIndex::build(ids, vectors, clusters, opts.seed)?),
        IndexSpec::Pq { chunks } => AnyIndex::Pq(PqIndex::build(ids, vectors, chunks, opts.seed)?),
        IndexSpec::Hnsw { m } => AnyIndex::Hnsw(HnswIndex::build(
            ids,
            vectors,
            HnswParams {
                m,
                ef_construction: opts.ef_construction,
                seed: opts.seed,
            },
        )?),
    })
}

pub(crate) fn check_query(k: usize, len: usize, dim: usize, q: &[f32]) -> Result<()> {
    if k == 0 {
        return Err(Error::Input("K must be at least 1".into()));
    }
    if len == 0 {
        return Err(Error::Input("search on an empty index".into()));
    }
    if q.len() != dim {
        return Err(Error::Input(format!("query has dimension {}, index expects {dim}", q.len())));
    }
    Ok(())
}

impl AnyIndex {
    pub fn spec(&self) -> IndexSpec {
        match self {
            Self::Flat(_) => IndexSpec::Flat,
            Self::Ivf(i) => IndexSpec::Ivf { clusters: i.num_clusters() },
            Self::Pq(i) => IndexSpec::Pq { chunks: i.num_chunks() },
            Self::Hnsw(i) => IndexSpec::Hnsw { m: i.params().m },
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Flat(i) => i.len(),
            Self::Ivf(i) => i.len(),
            Self::Pq(i) => i.len(),
            Self::Hnsw(i) => i.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Flat(i) => i.dim(),
            Self::Ivf(i) => i.dim(),
            Self::Pq(i) => i.dim(),
            Self::Hnsw(i) => i.dim(),
        }
    }

    pub fn ids(&self) -> &[ScenarioId] {
        match self {
            Self::Flat(i) => i.ids(),
            Self::Ivf(i) => i.ids(),
            Self::Pq(i) => i.ids(),
            Self::Hnsw(i) => i.ids(),
        }
    }

    pub fn contains(&self, id: &ScenarioId) -> bool {
        match self {
            Self::Flat(i) => i.contains(id),
            Self::Ivf(i) => i.contains(id),
            Self::Pq(i) => i.contains(id),
            Self::Hnsw(i) => i.contains(id),
        }
    }

    pub fn search(&self, query: &[f32], k: usize, params: &SearchParams) -> Result<SearchResult> {
        match self {
            Self::Flat(i) => i.search(query, k),
            Self::Ivf(i) => i.search(query, k, params.nprobe),
            Self::Pq(i) => i.search(query, k),
            Self::Hnsw(i) => i.search(query, k, params.ef_search.unwrap_or(DEFAULT_EF_SEARCH)),
        }
    }

    /// Searches every query concurrently; output is aligned with `queries`.
    pub fn search_batch<V: AsRef<[f32]> + Sync>(
        &self,
        queries: &[V],
        k: usize,
        params: &SearchParams,
    ) -> Result<Vec<SearchResult>> {
        queries.par_iter().map(|q| self.search(q.as_ref(), k, params)).collect()
    }

    pub fn add(&mut self, id: ScenarioId, vector: &[f32]) -> Result<()> {
        match self {
            Self::Flat(i) => i.add(id, vector),
            Self::Ivf(i) => i.add(id, vector),
            Self::Pq(i) => i.add(id, vector),
            Self::Hnsw(i) => i.add(id, vector),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new(MAGIC, VERSION);
        match self {
            Self::Flat(i) => {
                e.u8(0);
                i.encode(&mut e);
            }
            Self::Ivf(i) => {
                e.u8(1);
                i.encode(&mut e);
            }
            Self::Pq(i) => {
                e.u8(2);
                i.encode(&mut e);
            }
            Self::Hnsw(i) => {
                e.u8(3);
                i.encode(&mut e);
            }
        }
        e.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut d = Decoder::new(bytes, MAGIC, VERSION)?;
        let index = match d.u8()? {
            0 => Self::Flat(FlatIndex::decode(&mut d)?),
            1 => Self::Ivf(IvfIndex::decode(&mut d)?),
            2 => Self::Pq(PqIndex::decode(&mut d)?),
            3 => Self::Hnsw(HnswIndex::decode(&mut d)?),
            t => return Err(Error::Load(format!("unknown index tag {t}"))),
        };
        d.finish()?;
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
