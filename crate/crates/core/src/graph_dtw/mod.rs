//! Graph-DTW: optimal-transport matching between scene graphs per frame
//! pair, aligned over time with dynamic time warping.

pub mod assignment;
mod dtw;
mod matrix;
mod scene;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::AtomScenario;

pub use dtw::{dtw_accumulate, dtw_normalized, DtwConfig};
pub use matrix::{pairwise_matrix, pairwise_prepared, DistanceMatrix, MatrixHeader};
pub use scene::{scene_distance, EgoScene, SceneCostConfig};

use scene::{local_distance, LocalFrame};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphDtwConfig {
    pub scene: SceneCostConfig,
    pub dtw: DtwConfig,
}

impl GraphDtwConfig {
    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// A scenario with every frame already in its ego frame, so repeated
/// distance evaluations skip the normalization.
#[derive(Clone, Debug)]
pub struct PreparedScenario {
    frames: Vec<LocalFrame>,
}

impl PreparedScenario {
    pub fn new(s: &AtomScenario) -> Result<Self> {
        if s.frames.is_empty() {
            return Err(Error::Input(format!("scenario {} has no frames", s.scenario_id)));
        }
        let frames = s
            .frames
            .iter()
            .map(|f| LocalFrame::new(EgoScene::new(f, &s.ego_id)))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Input(format!("scenario {}: {e}", s.scenario_id)))?;
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Graph-DTW between two prepared scenarios.
pub fn graph_dtw_prepared(x: &PreparedScenario, y: &PreparedScenario, cfg: &GraphDtwConfig) -> Result<f64> {
    cfg.scene.validate()?;
    dtw_normalized(x.frames.len(), y.frames.len(), &cfg.dtw, |i, j| {
        local_distance(&x.frames[i], &y.frames[j], &cfg.scene)
    })
}

/// Path-length normalized DTW over per-frame scene distances.
pub fn graph_dtw_distance(x: &AtomScenario, y: &AtomScenario, scfg: &SceneCostConfig, dcfg: &DtwConfig) -> Result<f64> {
    let cfg = GraphDtwConfig { scene: *scfg, dtw: *dcfg };
    graph_dtw_prepared(&PreparedScenario::new(x)?, &PreparedScenario::new(y)?, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{derive_relations, generate_synthetic, NodeState, SceneGraph, SynthConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(rng: &mut ChaCha8Rng, n: usize) -> SceneGraph {
        let nodes = (0..n)
            .map(|k| {
                let id = if k == 0 { "ego".to_owned() } else { format!("v{k}") };
                NodeState::vehicle(
                    id,
                    [rng.random_range(-30.0..30.0), rng.random_range(-8.0..8.0)],
                    [rng.random_range(0.0..20.0), rng.random_range(-2.0..2.0)],
                    rng.random_range(-3.0..3.0),
                )
                .with_lane(format!("l{}", rng.random_range(0..2)))
            })
            .collect();
        SceneGraph::new(0.0, nodes)
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        permutations(n - 1)
            .into_iter()
            .flat_map(|p| {
                (0..=p.len()).map(move |k| {
                    let mut q = p.clone();
                    q.insert(k, n - 1);
                    q
                })
            })
            .collect()
    }

    // Independent ground cost written from the definition.
    fn oracle_cost(a: &SceneGraph, b: &SceneGraph, cfg: &SceneCostConfig) -> f64 {
        let local = |g: &SceneGraph| -> Vec<([f64; 4], f64, Option<bool>)> {
            let ego = g.node(&"ego".into()).unwrap();
            let (c, s) = (ego.heading.cos(), ego.heading.sin());
            g.vehicles()
                .map(|n| {
                    let dx = n.position[0] - ego.position[0];
                    let dy = n.position[1] - ego.position[1];
                    let p = [c * dx + s * dy, -s * dx + c * dy];
                    let v = [c * n.velocity[0] + s * n.velocity[1], -s * n.velocity[0] + c * n.velocity[1]];
                    let same = match (&n.lane_id, &ego.lane_id) {
                        (Some(a), Some(b)) => Some(a == b),
                        _ => None,
                    };
                    ([p[0], p[1], v[0], v[1]], n.heading - ego.heading, same)
                })
                .collect()
        };
        let (la, lb) = (local(a), local(b));
        let n = la.len().max(lb.len());
        let pair = |i: usize, j: usize| -> f64 {
            match (la.get(i), lb.get(j)) {
                (Some(p), Some(q)) => {
                    let dp = ((p.0[0] - q.0[0]).powi(2) + (p.0[1] - q.0[1]).powi(2)).sqrt();
                    let dv = ((p.0[2] - q.0[2]).powi(2) + (p.0[3] - q.0[3]).powi(2)).sqrt();
                    let mut dh = (p.1 - q.1).abs() % (2.0 * std::f64::consts::PI);
                    if dh > std::f64::consts::PI {
                        dh = 2.0 * std::f64::consts::PI - dh;
                    }
                    let mm = matches!((p.2, q.2), (Some(x), Some(y)) if x != y);
                    cfg.w_pos * dp + cfg.w_vel * dv + cfg.w_head * dh + if mm { cfg.type_mismatch_penalty } else { 0.0 }
                }
                _ => cfg.unmatched_penalty,
            }
        };
        permutations(n)
            .iter()
            .map(|p| (0..n).map(|i| pair(i, p[i])).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            / n as f64
    }

    #[test]
    fn scene_distance_matches_permutation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = SceneCostConfig::default();
        let ego = "ego".into();
        for _ in 0..60 {
            let (na, nb) = (rng.random_range(1..=5), rng.random_range(1..=5));
            let a = random_frame(&mut rng, na);
            let b = random_frame(&mut rng, nb);
            let d = scene_distance(EgoScene::new(&a, &ego), EgoScene::new(&b, &ego), &cfg).unwrap();
            let o = oracle_cost(&a, &b, &cfg);
            assert!((d - o).abs() <= 1e-9 * o.max(1.0), "{d} vs {o}");
        }
    }

    #[test]
    fn scene_identity_translation_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = SceneCostConfig::default();
        let ego = "ego".into();
        for _ in 0..30 {
            let a = random_frame(&mut rng, 5);
            let d0 = scene_distance(EgoScene::new(&a, &ego), EgoScene::new(&a, &ego), &cfg).unwrap();
            assert_eq!(d0, 0.0);

            let mut moved = a.clone();
            for n in &mut moved.nodes {
                n.position[0] += 123.0;
                n.position[1] -= 45.0;
            }
            let dt = scene_distance(EgoScene::new(&a, &ego), EgoScene::new(&moved, &ego), &cfg).unwrap();
            assert!(dt < 1e-9, "{dt}");

            let b = random_frame(&mut rng, 4);
            let mut shuffled = b.clone();
            shuffled.nodes.reverse();
            let d1 = scene_distance(EgoScene::new(&a, &ego), EgoScene::new(&b, &ego), &cfg).unwrap();
            let d2 = scene_distance(EgoScene::new(&a, &ego), EgoScene::new(&shuffled, &ego), &cfg).unwrap();
            let d3 = scene_distance(EgoScene::new(&b, &ego), EgoScene::new(&a, &ego), &cfg).unwrap();
            assert!((d1 - d2).abs() < 1e-9);
            assert_eq!(d1, d3);
        }
    }

    #[test]
    fn scene_errors() {
        let cfg = SceneCostConfig::default();
        let ego = "ego".into();
        let empty = SceneGraph::new(0.0, vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = random_frame(&mut rng, 2);
        assert!(scene_distance(EgoScene::new(&empty, &ego), EgoScene::new(&a, &ego), &cfg).is_err());
        let bad = SceneCostConfig {
            unmatched_penalty: 0.0,
            ..cfg
        };
        assert!(scene_distance(EgoScene::new(&a, &ego), EgoScene::new(&a, &ego), &bad).is_err());
    }

    #[test]
    fn monotone_in_offset_under_fixed_assignment() {
        // Identity assignment held fixed: cost of matching node k grows with its offset.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = SceneCostConfig::default();
        let a = random_frame(&mut rng, 4);
        let ego = "ego".into();
        let la = LocalFrame::new(EgoScene::new(&a, &ego)).unwrap();
        let mut last = 0.0;
        for step in 0..20 {
            let mut b = a.clone();
            b.nodes[2].position[0] += step as f64 * 0.5;
            let lb = LocalFrame::new(EgoScene::new(&b, &ego)).unwrap();
            let (cost, n) = scene::cost_matrix(&la, &lb, &cfg);
            let held: f64 = (0..n).map(|i| cost[i * n + i]).sum();
            assert!(held >= last - 1e-12);
            last = held;
            let optimal = local_distance(&la, &lb, &cfg) * n as f64;
            assert!(optimal <= held + 1e-9);
        }
    }

    fn scenario_from(frames: Vec<SceneGraph>) -> AtomScenario {
        AtomScenario {
            scenario_id: "x".into(),
            ego_id: "ego".into(),
            interaction_type: "t".into(),
            frames: frames
                .into_iter()
                .enumerate()
                .map(|(k, mut f)| {
                    f.timestamp = k as f64 * 0.1;
                    derive_relations(&f, true)
                })
                .collect(),
            goal: None,
        }
    }

    // Enumerate monotone warping paths; pick min sum, then the longest.
    fn dtw_oracle(c: &[Vec<f64>]) -> f64 {
        fn walk(c: &[Vec<f64>], i: usize, j: usize, sum: f64, len: usize, best: &mut (f64, usize), paths: &mut usize) {
            let sum = sum + c[i][j];
            let len = len + 1;
            let (n, m) = (c.len(), c[0].len());
            if i == n - 1 && j == m - 1 {
                *paths += 1;
                if sum < best.0 || (sum == best.0 && len > best.1) {
                    *best = (sum, len);
                }
                return;
            }
            if i + 1 < n && j + 1 < m {
                walk(c, i + 1, j + 1, sum, len, best, paths);
            }
            if i + 1 < n {
                walk(c, i + 1, j, sum, len, best, paths);
            }
            if j + 1 < m {
                walk(c, i, j + 1, sum, len, best, paths);
            }
        }
        let mut best = (f64::INFINITY, 0);
        let mut paths = 0;
        walk(c, 0, 0, 0.0, 0, &mut best, &mut paths);
        if c.len() == 3 && c[0].len() == 3 {
            assert_eq!(paths, 13);
        }
        best.0 / best.1 as f64
    }

    #[test]
    fn dtw_matches_path_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = GraphDtwConfig::default();
        for _ in 0..50 {
            let x = scenario_from((0..3).map(|_| random_frame(&mut rng, 4)).collect());
            let y = scenario_from((0..3).map(|_| random_frame(&mut rng, 3)).collect());
            let ego = "ego".into();
            let c: Vec<Vec<f64>> = x
                .frames
                .iter()
                .map(|fx| {
                    y.frames
                        .iter()
                        .map(|fy| scene_distance(EgoScene::new(fx, &ego), EgoScene::new(fy, &ego), &cfg.scene).unwrap())
                        .collect()
                })
                .collect();
            let d = graph_dtw_distance(&x, &y, &cfg.scene, &cfg.dtw).unwrap();
            assert_eq!(d, dtw_oracle(&c));
            assert_eq!(d, graph_dtw_distance(&y, &x, &cfg.scene, &cfg.dtw).unwrap());
            // Never above the diagonal average.
            let diag = (0..3).map(|k| c[k][k]).sum::<f64>() / 3.0;
            assert!(d <= diag + 1e-12);
        }
    }

    #[test]
    fn dtw_identity_and_time_stretch() {
        let s = &generate_synthetic(&SynthConfig {
            count: 3,
            duration: 2.0,
            ..SynthConfig::default()
        })[1];
        let cfg = GraphDtwConfig::default();
        assert_eq!(graph_dtw_distance(s, s, &cfg.scene, &cfg.dtw).unwrap(), 0.0);
        let mut stretched = s.clone();
        stretched.frames = s
            .frames
            .iter()
            .flat_map(|f| [f.clone(), f.clone()])
            .enumerate()
            .map(|(k, mut f)| {
                f.timestamp = k as f64 * 0.05;
                f
            })
            .collect();
        assert_eq!(graph_dtw_distance(s, &stretched, &cfg.scene, &cfg.dtw).unwrap(), 0.0);
        let banded = DtwConfig { band_radius: Some(2) };
        assert!(matches!(
            graph_dtw_distance(s, &stretched, &cfg.scene, &banded),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = GraphDtwConfig::default();
        let mut b = a;
        assert_eq!(a.hash(), b.hash());
        b.scene.w_pos = 2.0;
        assert_ne!(a.hash(), b.hash());
    }
}
