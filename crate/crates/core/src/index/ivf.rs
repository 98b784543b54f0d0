use super::kmeans::{kmeans, nearest};
use super::{check_query, squared_l2, SearchResult, TopK, VectorSet, DEFAULT_NPROBE, KMEANS_ITERATIONS};
use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::scenario::ScenarioId;

/// Inverted file: k-means coarse quantizer with exact distances inside probed lists.
#[derive(Clone, Debug, PartialEq)]
pub struct IvfIndex {
    set: VectorSet,
    centroids: Vec<f32>,
    lists: Vec<Vec<u32>>,
    nprobe: usize,
}

impl IvfIndex {
    pub fn build<V: AsRef<[f32]>>(ids: &[ScenarioId], vectors: &[V], num_clusters: usize, seed: u64) -> Result<Self> {
        let set = VectorSet::from_parts(ids, vectors)?;
        if num_clusters > set.len() {
            return Err(Error::Config(format!(
                "{num_clusters} clusters requested for {} vectors",
                set.len()
            )));
        }
        let centroids = kmeans(&set.data, set.dim, num_clusters, KMEANS_ITERATIONS, seed)?;
        let mut index = Self {
            lists: vec![Vec::new(); num_clusters],
            centroids,
            nprobe: DEFAULT_NPROBE.min(num_clusters),
            set,
        };
        for slot in 0..index.set.len() as u32 {
            let c = nearest(index.set.vector(slot), &index.centroids, index.set.dim).0;
            index.lists[c].push(slot);
        }
        Ok(index)
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

    pub fn num_clusters(&self) -> usize {
        self.lists.len()
    }

    pub fn lists(&self) -> &[Vec<u32>] {
        &self.lists
    }

    pub fn default_nprobe(&self) -> usize {
        self.nprobe
    }

    pub fn set_default_nprobe(&mut self, nprobe: usize) {
        self.nprobe = nprobe.clamp(1, self.num_clusters());
    }

    pub fn search(&self, query: &[f32], k: usize, nprobe: Option<usize>) -> Result<SearchResult> {
        check_query(k, self.len(), self.dim(), query)?;
        let nprobe = nprobe.unwrap_or(self.nprobe).clamp(1, self.num_clusters());
        let dim = self.set.dim;
        let mut order: Vec<(f32, usize)> = self
            .centroids
            .chunks_exact(dim)
            .enumerate()
            .map(|(c, center)| (squared_l2(query, center), c))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let n = self.len();
        let mut top = TopK::new(k.min(n), &self.set.ids);
        for &(_, c) in &order[..nprobe] {
            for &slot in &self.lists[c] {
                top.push(squared_l2(query, self.set.vector(slot)), slot);
            }
        }
        Ok(top.into_result(n, k))
    }

    pub fn add(&mut self, id: ScenarioId, vector: &[f32]) -> Result<()> {
        self.set.check_dim(vector)?;
        let slot = self.set.push(id, vector)?;
        let c = nearest(vector, &self.centroids, self.set.dim).0;
        self.lists[c].push(slot);
        Ok(())
    }

    pub(crate) fn encode(&self, e: &mut Encoder) {
        self.set.encode(e);
        e.usize(self.nprobe);
        e.f32s(&self.centroids);
        e.usize(self.lists.len());
        for l in &self.lists {
            e.u32s(l);
        }
    }

    pub(crate) fn decode(d: &mut Decoder) -> Result<Self> {
        let set = VectorSet::decode(d)?;
        let nprobe = d.usize()?;
        let centroids = d.f32s()?;
        let k = d.usize()?;
        let mut lists = Vec::with_capacity(k.min(1 << 20));
        for _ in 0..k {
            lists.push(d.u32s()?);
        }
        let total: usize = lists.iter().map(Vec::len).sum();
        if k == 0 || centroids.len() != k * set.dim || total != set.len() || nprobe == 0 || nprobe > k {
            return Err(Error::Load("inconsistent IVF payload".into()));
        }
        if lists.iter().flatten().any(|&s| s as usize >= set.len()) {
            return Err(Error::Load("IVF list references a missing vector".into()));
        }
        Ok(Self {
            set,
            centroids,
            lists,
            nprobe,
        })
    }
}
