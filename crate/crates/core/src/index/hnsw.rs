use std::cell::RefCell;
use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::{check_query, finish, squared_l2, SearchResult, VectorSet};
use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::scenario::ScenarioId;

const MAX_LEVEL: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HnswParams {
    /// Neighbor cap on upper layers; layer 0 allows twice as many.
    pub m: usize,
    pub ef_construction: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self {
            m: 32,
            ef_construction: super::DEFAULT_EF_CONSTRUCTION,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Cand {
    dist: f32,
    slot: u32,
}

impl Eq for Cand {}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.slot.cmp(&other.slot))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Default)]
struct Visited {
    marks: Vec<u32>,
    epoch: u32,
}

impl Visited {
    fn reset(&mut self, n: usize) {
        if self.marks.len() < n {
            self.marks.resize(n, 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.marks.iter_mut().for_each(|m| *m = 0);
            self.epoch = 1;
        }
    }

    #[inline]
    fn insert(&mut self, slot: u32) -> bool {
        let m = &mut self.marks[slot as usize];
        if *m == self.epoch {
            false
        } else {
            *m = self.epoch;
            true
        }
    }
}

thread_local! {
    static VISITED: RefCell<Visited> = RefCell::new(Visited::default());
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Geometric level with multiplier `1 / ln M`, a pure function of (seed, slot).
fn draw_level(seed: u64, slot: usize, m: usize) -> usize {
    let bits = splitmix64(seed ^ splitmix64(slot as u64));
    let u = ((bits >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    let ml = 1.0 / (m.max(2) as f64).ln();
    ((-u.ln() * ml).floor() as usize).min(MAX_LEVEL)
}

/// Hierarchical navigable small-world graph.
#[derive(Clone, Debug, PartialEq)]
pub struct HnswIndex {
    params: HnswParams,
    set: VectorSet,
    levels: Vec<u8>,
    /// Layer-0 adjacency, `2M` slots per node.
    layer0: Vec<u32>,
    layer0_len: Vec<u16>,
    /// `upper[slot][l - 1]` for `1 <= l <= levels[slot]`.
    upper: Vec<Vec<Vec<u32>>>,
    entry: Option<u32>,
    max_level: usize,
}

impl HnswIndex {
    pub fn new(dim: usize, params: HnswParams) -> Result<Self> {
        if params.m < 2 {
            return Err(Error::Config(format!("HNSW needs M >= 2, got {}", params.m)));
        }
        if params.ef_construction == 0 {
            return Err(Error::Config("ef_construction must be positive".into()));
        }
        Ok(Self {
            params,
            set: VectorSet::new(dim),
            levels: Vec::new(),
            layer0: Vec::new(),
            layer0_len: Vec::new(),
            upper: Vec::new(),
            entry: None,
            max_level: 0,
        })
    }

    pub fn build<V: AsRef<[f32]>>(ids: &[ScenarioId], vectors: &[V], params: HnswParams) -> Result<Self> {
        if ids.len() != vectors.len() {
            return Err(Error::Input(format!("{} ids for {} vectors", ids.len(), vectors.len())));
        }
        let dim = vectors.first().map(|v| v.as_ref().len()).unwrap_or(0);
        let mut index = Self::new(dim, params)?;
        index.set.data.reserve(dim * vectors.len());
        index.layer0.reserve(2 * params.m * vectors.len());
        for (id, v) in ids.iter().zip(vectors) {
            index.add(id.clone(), v.as_ref())?;
        }
        Ok(index)
    }

    pub fn params(&self) -> HnswParams {
        self.params
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

    pub fn entry_point(&self) -> Option<&ScenarioId> {
        self.entry.map(|e| &self.set.ids[e as usize])
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn level_of(&self, slot: usize) -> usize {
        self.levels[slot] as usize
    }

    fn cap(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.params.m
        } else {
            self.params.m
        }
    }

    /// Adjacency of `slot` on `layer`.
    pub fn neighbors(&self, slot: u32, layer: usize) -> &[u32] {
        if layer == 0 {
            let cap = self.cap(0);
            let s = slot as usize * cap;
            &self.layer0[s..s + self.layer0_len[slot as usize] as usize]
        } else {
            &self.upper[slot as usize][layer - 1]
        }
    }

    fn set_neighbors(&mut self, slot: u32, layer: usize, list: &[u32]) {
        if layer == 0 {
            let cap = self.cap(0);
            let s = slot as usize * cap;
            self.layer0[s..s + list.len()].copy_from_slice(list);
            self.layer0_len[slot as usize] = list.len() as u16;
        } else {
            let l = &mut self.upper[slot as usize][layer - 1];
            l.clear();
            l.extend_from_slice(list);
        }
    }

    #[inline]
    fn dist(&self, q: &[f32], slot: u32) -> f32 {
        squared_l2(q, self.set.vector(slot))
    }

    fn greedy(&self, q: &[f32], mut ep: Cand, layer: usize) -> Cand {
        loop {
            let mut improved = false;
            for &nb in self.neighbors(ep.slot, layer) {
                let c = Cand {
                    dist: self.dist(q, nb),
                    slot: nb,
                };
                if c < ep {
                    ep = c;
                    improved = true;
                }
            }
            if !improved {
                return ep;
            }
        }
    }

    /// Beam search on one layer; returns up to `ef` candidates, ascending.
    fn search_layer(&self, q: &[f32], entries: &[Cand], ef: usize, layer: usize) -> Vec<Cand> {
        VISITED.with(|v| {
            let mut visited = v.borrow_mut();
            visited.reset(self.len());
            let mut frontier: BinaryHeap<Reverse<Cand>> = BinaryHeap::with_capacity(ef * 2);
            let mut best: BinaryHeap<Cand> = BinaryHeap::with_capacity(ef + 1);
            for &e in entries {
                if visited.insert(e.slot) {
                    frontier.push(Reverse(e));
                    best.push(e);
                }
            }
            while best.len() > ef {
                best.pop();
            }
            while let Some(Reverse(c)) = frontier.pop() {
                if best.len() >= ef && c > *best.peek().unwrap() {
                    break;
                }
                for &nb in self.neighbors(c.slot, layer) {
                    if !visited.insert(nb) {
                        continue;
                    }
                    let cand = Cand {
                        dist: self.dist(q, nb),
                        slot: nb,
                    };
                    if best.len() < ef || cand < *best.peek().unwrap() {
                        frontier.push(Reverse(cand));
                        best.push(cand);
                        if best.len() > ef {
                            best.pop();
                        }
                    }
                }
            }
            best.into_sorted_vec()
        })
    }

    /// Keeps a candidate only if it is closer to the base than to every kept neighbor.
    fn select_heuristic(&self, sorted: &[Cand], m: usize) -> Vec<u32> {
        let mut out: Vec<u32> = Vec::with_capacity(m);
        for c in sorted {
            if out.len() >= m {
                break;
            }
            let v = self.set.vector(c.slot);
            if out.iter().all(|&s| squared_l2(v, self.set.vector(s)) >= c.dist) {
                out.push(c.slot);
            }
        }
        out
    }

    pub fn add(&mut self, id: ScenarioId, vector: &[f32]) -> Result<()> {
        let slot = self.set.push(id, vector)?;
        let level = draw_level(self.params.seed, slot as usize, self.params.m);
        self.levels.push(level as u8);
        self.layer0.extend(std::iter::repeat_n(0, self.cap(0)));
        self.layer0_len.push(0);
        self.upper.push(vec![Vec::new(); level]);

        let Some(entry) = self.entry else {
            self.entry = Some(slot);
            self.max_level = level;
            return Ok(());
        };
        let q = self.set.vector(slot).to_vec();
        let mut ep = Cand {
            dist: self.dist(&q, entry),
            slot: entry,
        };
        for layer in (level + 1..=self.max_level).rev() {
            ep = self.greedy(&q, ep, layer);
        }
        let mut entries = vec![ep];
        for layer in (0..=level.min(self.max_level)).rev() {
            let found = self.search_layer(&q, &entries, self.params.ef_construction, layer);
            let chosen = self.select_heuristic(&found, self.params.m);
            self.set_neighbors(slot, layer, &chosen);
            for &nb in &chosen {
                self.link(nb, slot, layer);
            }
            entries = found;
        }
        if level > self.max_level {
            self.max_level = level;
            self.entry = Some(slot);
        }
        Ok(())
    }

    fn link(&mut self, from: u32, to: u32, layer: usize) {
        let cap = self.cap(layer);
        let current = self.neighbors(from, layer);
        if current.len() < cap {
            let mut list = current.to_vec();
            list.push(to);
            self.set_neighbors(from, layer, &list);
            return;
        }
        let base = self.set.vector(from);
        let mut cands: Vec<Cand> = current
            .iter()
            .chain(std::iter::once(&to))
            .map(|&s| Cand {
                dist: squared_l2(base, self.set.vector(s)),
                slot: s,
            })
            .collect();
        cands.sort();
        let kept = self.select_heuristic(&cands, cap);
        self.set_neighbors(from, layer, &kept);
    }

    pub fn search(&self, query: &[f32], k: usize, ef_search: usize) -> Result<SearchResult> {
        check_query(k, self.len(), self.dim(), query)?;
        let entry = self.entry.expect("nonempty index has an entry point");
        let mut ep = Cand {
            dist: self.dist(query, entry),
            slot: entry,
        };
        for layer in (1..=self.max_level).rev() {
            ep = self.greedy(query, ep, layer);
        }
        let found = self.search_layer(query, &[ep], ef_search.max(k), 0);
        let hits = found.into_iter().map(|c| (c.dist, c.slot)).collect();
        Ok(finish(hits, &self.set.ids, k, self.len()))
    }

    /// Checks adjacency bounds, reference validity and the entry-point level.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.len() as u32;
        for slot in 0..n {
            let level = self.levels[slot as usize] as usize;
            if level > self.max_level {
                return Err(Error::Data(format!("node {slot} above the top layer")));
            }
            for layer in 0..=level {
                let list = self.neighbors(slot, layer);
                if list.len() > self.cap(layer) {
                    return Err(Error::Data(format!("node {slot} has {} links on layer {layer}", list.len())));
                }
                for &nb in list {
                    if nb >= n || nb == slot || (self.levels[nb as usize] as usize) < layer {
                        return Err(Error::Data(format!("node {slot} has invalid link {nb} on layer {layer}")));
                    }
                }
            }
        }
        match self.entry {
            None if n > 0 => Err(Error::Data("missing entry point".into())),
            Some(e) if self.levels[e as usize] as usize != self.max_level => {
                Err(Error::Data("entry point is not on the top layer".into()))
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn encode(&self, e: &mut Encoder) {
        e.usize(self.params.m);
        e.usize(self.params.ef_construction);
        e.u64(self.params.seed);
        self.set.encode(e);
        e.bytes(&self.levels);
        e.u32s(&self.layer0);
        let lens: Vec<u32> = self.layer0_len.iter().map(|&l| l as u32).collect();
        e.u32s(&lens);
        for node in &self.upper {
            for list in node {
                e.u32s(list);
            }
        }
        e.u64(self.entry.map(|x| x as u64 + 1).unwrap_or(0));
        e.usize(self.max_level);
    }

    pub(crate) fn decode(d: &mut Decoder) -> Result<Self> {
        let params = HnswParams {
            m: d.usize()?,
            ef_construction: d.usize()?,
            seed: d.u64()?,
        };
        if params.m < 2 || params.m > 1 << 14 {
            return Err(Error::Load("bad HNSW parameters".into()));
        }
        let set = VectorSet::decode(d)?;
        let n = set.len();
        let levels = d.bytes()?.to_vec();
        let layer0 = d.u32s()?;
        let layer0_len: Vec<u16> = d.u32s()?.into_iter().map(|l| l as u16).collect();
        if levels.len() != n || layer0.len() != n * 2 * params.m || layer0_len.len() != n {
            return Err(Error::Load("inconsistent HNSW payload".into()));
        }
        let mut upper = Vec::with_capacity(n);
        for &lvl in &levels {
            let mut lists = Vec::with_capacity(lvl as usize);
            for _ in 0..lvl {
                lists.push(d.u32s()?);
            }
            upper.push(lists);
        }
        let entry = match d.u64()? {
            0 => None,
            e => Some((e - 1) as u32),
        };
        let index = Self {
            params,
            set,
            levels,
            layer0,
            layer0_len,
            upper,
            entry,
            max_level: d.usize()?,
        };
        if index.entry.is_some_and(|e| e as usize >= n) || index.layer0_len.iter().any(|&l| l as usize > 2 * params.m) {
            return Err(Error::Load("inconsistent HNSW payload".into()));
        }
        index.check_invariants().map_err(|e| Error::Load(e.to_string()))?;
        Ok(index)
    }
}
