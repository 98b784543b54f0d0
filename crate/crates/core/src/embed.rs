//! Metric-aligned scenario embedding.
//!
//! Landmark scenarios are placed by classical MDS on their Graph-DTW
//! matrix: square the distances, double-center, eigendecompose and keep the
//! top eigenpairs. Any other scenario is placed from its distances to the
//! landmarks with the Nyström (landmark-MDS) extension
//! `x = -½ Λ^{-½} Vᵀ (δ² - δ̄²)`, where `δ̄²` holds the column means of the
//! squared landmark matrix. Coordinates are multiplied by a single scale so
//! the farthest landmark pair sits at distance 100.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::graph_dtw::{graph_dtw_prepared, DistanceMatrix, GraphDtwConfig, PreparedScenario};
use crate::scenario::{AtomScenario, ScenarioId};

pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_LANDMARKS: usize = 512;

const MAGIC: &[u8; 8] = b"DRAGEMB\0";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn distance(&self, other: &EmbeddingVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.0.iter().map(|&v| v as f32).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingModel {
    pub dim: usize,
    pub landmarks: Vec<ScenarioId>,
    /// Scaled landmark coordinates, row-major `L × dim`.
    pub landmark_vectors: Vec<f64>,
    /// Column means of the squared landmark distance matrix.
    pub mean_sq_row: Vec<f64>,
    /// Retained eigenvectors, row-major `L × dim`.
    pub eigenvectors: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub scale: f64,
    /// Interaction type this model serves; empty when unrestricted.
    pub interaction_type: String,
}

impl EmbeddingModel {
    pub fn landmark_count(&self) -> usize {
        self.landmarks.len()
    }

    pub fn landmark_vector(&self, k: usize) -> EmbeddingVector {
        EmbeddingVector(self.landmark_vectors[k * self.dim..(k + 1) * self.dim].to_vec())
    }

    /// Nyström placement from raw (unscaled) distances to every landmark.
    pub fn embed_distances(&self, delta: &[f64]) -> Result<EmbeddingVector> {
        let l = self.landmark_count();
        if delta.len() != l {
            return Err(Error::Input(format!("expected {l} landmark distances, got {}", delta.len())));
        }
        let centered: Vec<f64> = delta.iter().zip(&self.mean_sq_row).map(|(d, m)| d * d - m).collect();
        let values = (0..self.dim)
            .map(|c| {
                let dot: f64 = (0..l).map(|k| self.eigenvectors[k * self.dim + c] * centered[k]).sum();
                -0.5 * dot / self.eigenvalues[c].sqrt() * self.scale
            })
            .collect();
        Ok(EmbeddingVector(values))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut e = Encoder::new(MAGIC, VERSION);
        e.usize(self.dim);
        e.usize(self.landmark_count());
        e.f64(self.scale);
        e.str(&self.interaction_type);
        for id in &self.landmarks {
            e.str(id.as_str());
        }
        e.f64s(&self.landmark_vectors);
        e.f64s(&self.mean_sq_row);
        e.f64s(&self.eigenvectors);
        e.f64s(&self.eigenvalues);
        std::fs::write(path, e.finish())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let mut d = Decoder::new(&bytes, MAGIC, VERSION)?;
        let dim = d.usize()?;
        let l = d.usize()?;
        let scale = d.f64()?;
        let interaction_type = d.string()?;
        let landmarks = (0..l).map(|_| d.string().map(ScenarioId)).collect::<Result<Vec<_>>>()?;
        let landmark_vectors = d.f64s()?;
        let mean_sq_row = d.f64s()?;
        let eigenvectors = d.f64s()?;
        let eigenvalues = d.f64s()?;
        d.finish()?;
        if landmark_vectors.len() != l * dim
            || eigenvectors.len() != l * dim
            || mean_sq_row.len() != l
            || eigenvalues.len() != dim
            || !(scale > 0.0)
        {
            return Err(Error::Load("inconsistent embedding model sizes".into()));
        }
        Ok(Self {
            dim,
            landmarks,
            landmark_vectors,
            mean_sq_row,
            eigenvectors,
            eigenvalues,
            scale,
            interaction_type,
        })
    }
}

/// Named vectors, stored as JSON.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VectorTable {
    pub ids: Vec<ScenarioId>,
    pub vectors: Vec<Vec<f64>>,
}

impl VectorTable {
    pub fn new(ids: Vec<ScenarioId>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != vectors.len() {
            return Err(Error::Input(format!("{} ids for {} vectors", ids.len(), vectors.len())));
        }
        if let Some(d) = vectors.first().map(Vec::len) {
            if vectors.iter().any(|v| v.len() != d) {
                return Err(Error::Input("vectors must share a dimension".into()));
            }
        }
        Ok(Self { ids, vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn f32_vectors(&self) -> Vec<Vec<f32>> {
        self.vectors.iter().map(|v| v.iter().map(|&x| x as f32).collect()).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let t: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        Self::new(t.ids, t.vectors)
    }
}

/// Classical MDS over a landmark distance matrix.
pub fn fit(distances: &DistanceMatrix, dim: usize) -> Result<EmbeddingModel> {
    let l = distances.n();
    if dim == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    if l < dim + 1 {
        return Err(Error::Dimension {
            requested: dim,
            usable: l.saturating_sub(1),
        });
    }
    for i in 0..l {
        if distances.get(i, i) != 0.0 {
            return Err(Error::Input(format!("nonzero diagonal at {i}")));
        }
        for j in 0..i {
            let (a, b) = (distances.get(i, j), distances.get(j, i));
            if !a.is_finite() || (a - b).abs() > 1e-9 * a.abs().max(1.0) {
                return Err(Error::Input(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }

    let sq = DMatrix::from_fn(l, l, |i, j| {
        let d = 0.5 * (distances.get(i, j) + distances.get(j, i));
        d * d
    });
    let col_mean: Vec<f64> = (0..l).map(|j| sq.column(j).sum() / l as f64).collect();
    let grand = col_mean.iter().sum::<f64>() / l as f64;
    let b = DMatrix::from_fn(l, l, |i, j| -0.5 * (sq[(i, j)] - col_mean[i] - col_mean[j] + grand));

    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let tol = top * 1e-10 + f64::EPSILON;
    let usable = order.iter().filter(|&&k| eig.eigenvalues[k] > tol).count();
    if usable < dim {
        return Err(Error::Dimension { requested: dim, usable });
    }

    let mut eigenvectors = vec![0.0; l * dim];
    let mut eigenvalues = Vec::with_capacity(dim);
    for (c, &k) in order.iter().take(dim).enumerate() {
        let col = eig.eigenvectors.column(k);
        // Sign convention: largest-magnitude component positive.
        let pivot = (0..l).fold(0, |best, i| if col[i].abs() > col[best].abs() { i } else { best });
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..l {
            eigenvectors[i * dim + c] = sign * col[i];
        }
        eigenvalues.push(eig.eigenvalues[k]);
    }

    let mut raw = vec![0.0; l * dim];
    for i in 0..l {
        for c in 0..dim {
            raw[i * dim + c] = eigenvectors[i * dim + c] * eigenvalues[c].sqrt();
        }
    }
    let mut max_d: f64 = 0.0;
    for i in 0..l {
        for j in 0..i {
            let d: f64 = (0..dim).map(|c| (raw[i * dim + c] - raw[j * dim + c]).powi(2)).sum::<f64>().sqrt();
            max_d = max_d.max(d);
        }
    }
    if !(max_d > 0.0) {
        return Err(Error::Dimension { requested: dim, usable: 0 });
    }
    let scale = 100.0 / max_d;
    let landmark_vectors = raw.iter().map(|v| v * scale).collect();

    Ok(EmbeddingModel {
        dim,
        landmarks: distances.ids.clone(),
        landmark_vectors,
        mean_sq_row: col_mean,
        eigenvectors,
        eigenvalues,
        scale,
        interaction_type: String::new(),
    })
}

/// Farthest-point traversal: a seeded random start, then repeatedly the point
/// whose nearest chosen landmark is farthest (ties to the smaller index).
pub fn select_landmarks(n: usize, count: usize, seed: u64, dist: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    if n == 0 || count == 0 {
        return Vec::new();
    }
    let count = count.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..n);
    let mut chosen = vec![first];
    let mut nearest: Vec<f64> = (0..n).map(|i| dist(first, i)).collect();
    nearest[first] = f64::NEG_INFINITY;
    while chosen.len() < count {
        let (next, _) = nearest
            .iter()
            .enumerate()
            .fold((usize::MAX, f64::NEG_INFINITY), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
        chosen.push(next);
        for i in 0..n {
            if nearest[i] != f64::NEG_INFINITY {
                nearest[i] = nearest[i].min(dist(next, i));
            }
        }
        nearest[next] = f64::NEG_INFINITY;
    }
    chosen
}

/// Source of raw distances from a scenario to each landmark.
pub trait LandmarkDistance: Sync {
    fn landmark_count(&self) -> usize;

    fn distance(&self, scenario: &AtomScenario, landmark: usize) -> Result<f64>;

    fn distances(&self, scenario: &AtomScenario) -> Result<Vec<f64>> {
        (0..self.landmark_count()).map(|k| self.distance(scenario, k)).collect()
    }
}

/// Graph-DTW against a fixed set of prepared landmark scenarios.
pub struct GraphDtwLandmarks {
    ids: Vec<ScenarioId>,
    prepared: Vec<PreparedScenario>,
    cfg: GraphDtwConfig,
}

impl GraphDtwLandmarks {
    /// `landmarks` must be in model order.
    pub fn new(landmarks: &[AtomScenario], cfg: GraphDtwConfig) -> Result<Self> {
        Ok(Self {
            ids: landmarks.iter().map(|s| s.scenario_id.clone()).collect(),
            prepared: landmarks.iter().map(PreparedScenario::new).collect::<Result<_>>()?,
            cfg,
        })
    }

    pub fn ids(&self) -> &[ScenarioId] {
        &self.ids
    }

    fn wrap(&self, k: usize, e: Error) -> Error {
        Error::Landmark {
            landmark: self.ids[k].to_string(),
            source: Box::new(e),
        }
    }
}

impl LandmarkDistance for GraphDtwLandmarks {
    fn landmark_count(&self) -> usize {
        self.prepared.len()
    }

    fn distance(&self, scenario: &AtomScenario, landmark: usize) -> Result<f64> {
        let p = PreparedScenario::new(scenario).map_err(|e| self.wrap(landmark, e))?;
        graph_dtw_prepared(&p, &self.prepared[landmark], &self.cfg).map_err(|e| self.wrap(landmark, e))
    }

    fn distances(&self, scenario: &AtomScenario) -> Result<Vec<f64>> {
        let p = PreparedScenario::new(scenario).map_err(|e| self.wrap(0, e))?;
        self.prepared
            .iter()
            .enumerate()
            .map(|(k, l)| graph_dtw_prepared(&p, l, &self.cfg).map_err(|e| self.wrap(k, e)))
            .collect()
    }
}

impl<F> LandmarkDistance for (usize, F)
where
    F: Fn(&AtomScenario, usize) -> Result<f64> + Sync,
{
    fn landmark_count(&self) -> usize {
        self.0
    }

    fn distance(&self, scenario: &AtomScenario, landmark: usize) -> Result<f64> {
        (self.1)(scenario, landmark)
    }
}

pub fn embed(scenario: &AtomScenario, model: &EmbeddingModel, distance_fn: &dyn LandmarkDistance) -> Result<EmbeddingVector> {
    if distance_fn.landmark_count() != model.landmark_count() {
        return Err(Error::Input("landmark set does not match model".into()));
    }
    model.embed_distances(&distance_fn.distances(scenario)?)
}

/// Order-preserving parallel [`embed`].
pub fn embed_batch(
    scenarios: &[AtomScenario],
    model: &EmbeddingModel,
    distance_fn: &dyn LandmarkDistance,
) -> Result<Vec<EmbeddingVector>> {
    scenarios.par_iter().map(|s| embed(s, model, distance_fn)).collect()
}
