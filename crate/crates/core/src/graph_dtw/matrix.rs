use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{graph_dtw_prepared, GraphDtwConfig, PreparedScenario};
use crate::error::{Error, Result};
use crate::scenario::{AtomScenario, ScenarioId};

/// Symmetric distance matrix with the ids of its rows.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    pub ids: Vec<ScenarioId>,
    data: Vec<f64>,
}

/// JSON sidecar written next to the binary payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixHeader {
    pub version: String,
    pub n: usize,
    pub config_hash: String,
    pub ids: Vec<ScenarioId>,
    pub dtype: String,
    pub layout: String,
}

impl DistanceMatrix {
    pub fn from_fn(ids: Vec<ScenarioId>, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let n = ids.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = f(i, j);
            }
        }
        Self { ids, data }
    }

    pub fn from_rows(ids: Vec<ScenarioId>, data: Vec<f64>) -> Result<Self> {
        if data.len() != ids.len() * ids.len() {
            return Err(Error::Input("matrix data does not match id count".into()));
        }
        Ok(Self { ids, data })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Submatrix over `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let ids = indices.iter().map(|&k| self.ids[k].clone()).collect();
        Self::from_fn(ids, |a, b| self.get(indices[a], indices[b]))
    }

    fn sidecar(path: &Path) -> PathBuf {
        let mut os = path.as_os_str().to_owned();
        os.push(".json");
        PathBuf::from(os)
    }

    /// Writes little-endian f32 row-major data to `path` and the header to `path.json`.
    pub fn save(&self, path: impl AsRef<Path>, config_hash: &str) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        fs::File::create(path)?.write_all(&bytes)?;
        let header = MatrixHeader {
            version: "v1".into(),
            n: self.n(),
            config_hash: config_hash.to_owned(),
            ids: self.ids.clone(),
            dtype: "f32le".into(),
            layout: "row-major".into(),
        };
        fs::write(Self::sidecar(path), serde_json::to_vec_pretty(&header)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, MatrixHeader)> {
        let path = path.as_ref();
        let header: MatrixHeader = serde_json::from_slice(&fs::read(Self::sidecar(path))?)?;
        if header.version != "v1" || header.ids.len() != header.n {
            return Err(Error::Load(format!("bad matrix header for {}", path.display())));
        }
        let bytes = fs::read(path)?;
        if bytes.len() != header.n * header.n * 4 {
            return Err(Error::Load(format!(
                "matrix payload has {} bytes, expected {}",
                bytes.len(),
                header.n * header.n * 4
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Ok((Self { ids: header.ids.clone(), data }, header))
    }
}

/// All-pairs Graph-DTW, upper triangle computed in parallel and mirrored.
pub fn pairwise_matrix(scenarios: &[AtomScenario], cfg: &GraphDtwConfig) -> Result<DistanceMatrix> {
    if scenarios.is_empty() {
        return Err(Error::Input("pairwise_matrix needs at least one scenario".into()));
    }
    let prepared = scenarios
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            PreparedScenario::new(s).map_err(|e| Error::Pair {
                i,
                j: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ids = scenarios.iter().map(|s| s.scenario_id.clone()).collect();
    pairwise_prepared(&prepared, ids, cfg)
}

pub fn pairwise_prepared(prepared: &[PreparedScenario], ids: Vec<ScenarioId>, cfg: &GraphDtwConfig) -> Result<DistanceMatrix> {
    let n = prepared.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| {
            graph_dtw_prepared(&prepared[i], &prepared[j], cfg).map_err(|e| Error::Pair {
                i,
                j,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut data = vec![0.0; n * n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        data[i * n + j] = v;
        data[j * n + i] = v;
    }
    DistanceMatrix::from_rows(ids, data)
}
