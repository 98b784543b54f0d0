//! Kernel density over embedded vectors and the typical-scenario subset built from it.

use std::fs;
use std::path::Path;

use rand::distr::Open01;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::ScenarioId;

pub const DEFAULT_REFERENCE_SIZE: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    /// Kernel standard deviation; Scott's rule on the reference set when `None`.
    pub bandwidth: Option<f64>,
    pub reference_size: usize,
    pub seed: u64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            bandwidth: None,
            reference_size: DEFAULT_REFERENCE_SIZE,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityEstimate {
    pub ids: Vec<ScenarioId>,
    /// Natural log of each density. Ranking uses these; `densities` may lose precision far in the tails.
    pub log_densities: Vec<f64>,
    pub densities: Vec<f64>,
    pub bandwidth: f64,
    pub reference_ids: Vec<ScenarioId>,
}

impl DensityEstimate {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Scott's rule with the root-mean-square of the per-axis standard deviations.
pub fn scott_bandwidth<V: AsRef<[f64]>>(vectors: &[V]) -> f64 {
    let n = vectors.len();
    if n < 2 {
        return 0.0;
    }
    let d = vectors[0].as_ref().len();
    let mut mean = vec![0.0; d];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v.as_ref()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let total_var: f64 = vectors
        .iter()
        .map(|v| sq_dist(v.as_ref(), &mean))
        .sum::<f64>()
        / (n - 1) as f64;
    let sigma = (total_var / d as f64).sqrt();
    sigma * (n as f64).powf(-1.0 / (d as f64 + 4.0))
}

/// Gaussian KDE of every vector against a seeded uniform reference subset.
pub fn estimate_density<V: AsRef<[f64]> + Sync>(
    ids: &[ScenarioId],
    vectors: &[V],
    cfg: &DensityConfig,
) -> Result<DensityEstimate> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::Input(format!("density estimation needs at least 2 vectors, got {n}")));
    }
    if ids.len() != n {
        return Err(Error::Input(format!("{} ids for {n} vectors", ids.len())));
    }
    let d = vectors[0].as_ref().len();
    if d == 0 || vectors.iter().any(|v| v.as_ref().len() != d) {
        return Err(Error::Input("vectors must share a nonzero dimension".into()));
    }
    if cfg.reference_size == 0 {
        return Err(Error::Config("reference_size must be positive".into()));
    }

    let m = n.min(cfg.reference_size);
    let mut reference: Vec<usize> = if m == n {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        sample(&mut rng, n, m).into_vec()
    };
    reference.sort_unstable();
    let refs: Vec<&[f64]> = reference.iter().map(|&k| vectors[k].as_ref()).collect();

    let h = match cfg.bandwidth {
        Some(h) => h,
        None => scott_bandwidth(&refs),
    };
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Config(format!("bandwidth must be positive and finite, got {h}")));
    }

    let inv_two_h2 = 1.0 / (2.0 * h * h);
    let log_norm = -(m as f64).ln() - 0.5 * d as f64 * (2.0 * std::f64::consts::PI * h * h).ln();
    let log_densities: Vec<f64> = vectors
        .par_iter()
        .map(|q| {
            let q = q.as_ref();
            let exps: Vec<f64> = refs.iter().map(|r| -sq_dist(q, r) * inv_two_h2).collect();
            let top = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            top + exps.iter().map(|e| (e - top).exp()).sum::<f64>().ln() + log_norm
        })
        .collect();
    let densities = log_densities.iter().map(|l| l.exp().max(f64::MIN_POSITIVE)).collect();

    Ok(DensityEstimate {
        ids: ids.to_vec(),
        log_densities,
        densities,
        bandwidth: h,
        reference_ids: reference.iter().map(|&k| ids[k].clone()).collect(),
    })
}

/// Which tail of the density distribution is retained in full.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileOrientation {
    /// Keep the lowest-density `(100 - alpha)%`.
    #[default]
    LowTail,
    /// Keep everything at or below the `alpha` percentile.
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsdConfig {
    pub alpha_pct: f64,
    pub beta_pct: f64,
    pub seed: u64,
    #[serde(default)]
    pub orientation: QuantileOrientation,
}

impl Default for TsdConfig {
    fn default() -> Self {
        Self {
            alpha_pct: 90.0,
            beta_pct: 5.0,
            seed: 0,
            orientation: QuantileOrientation::LowTail,
        }
    }
}

impl TsdConfig {
    fn validate(&self) -> Result<()> {
        if !(self.alpha_pct > 0.0 && self.alpha_pct < 100.0) {
            return Err(Error::Config(format!("alpha_pct must be in (0, 100), got {}", self.alpha_pct)));
        }
        if !(0.0..=100.0).contains(&self.beta_pct) {
            return Err(Error::Config(format!("beta_pct must be in [0, 100], got {}", self.beta_pct)));
        }
        Ok(())
    }

    fn low_fraction(&self) -> f64 {
        match self.orientation {
            QuantileOrientation::LowTail => (100.0 - self.alpha_pct) / 100.0,
            QuantileOrientation::Literal => self.alpha_pct / 100.0,
        }
    }
}

/// `ceil(x)` that ignores float noise just above an integer.
fn ceil_count(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Expected TSD size for `n` items.
pub fn tsd_size(n: usize, cfg: &TsdConfig) -> usize {
    let low = ceil_count(cfg.low_fraction() * n as f64).min(n);
    low + ceil_count(cfg.beta_pct / 100.0 * (n - low) as f64).min(n - low)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsdSubset {
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    #[serde(default)]
    pub orientation: QuantileOrientation,
    /// Largest density in the fully retained tail.
    pub threshold: f64,
    pub log_threshold: f64,
    /// Retained ids in corpus order.
    pub retained_ids: Vec<ScenarioId>,
    pub low_count: usize,
    pub sampled_count: usize,
}

impl TsdSubset {
    pub fn len(&self) -> usize {
        self.retained_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.retained_ids.is_empty()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

/// Per-item sampling keys for inverse-density sampling without replacement.
///
/// Key `i` is `ln p_i + ln(-ln u_i)`; the smallest keys win. This is the
/// exponential-keys method `u^(1/w)` with `w = 1/p` in log form. One uniform
/// is drawn per corpus position so keys do not depend on which items compete.
pub(crate) fn sampling_keys(log_densities: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    log_densities
        .iter()
        .map(|lp| {
            let u: f64 = rng.sample(Open01);
            lp + (-u.ln()).ln()
        })
        .collect()
}

/// Keeps the low-density tail in full and samples the rest inversely to density.
pub fn select_tsd(est: &DensityEstimate, cfg: &TsdConfig) -> Result<TsdSubset> {
    cfg.validate()?;
    let n = est.len();
    let low = ceil_count(cfg.low_fraction() * n as f64).min(n);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| est.log_densities[a].total_cmp(&est.log_densities[b]).then(a.cmp(&b)));
    let (low_set, rest) = order.split_at(low);

    let (threshold, log_threshold) = match low_set.last() {
        Some(&k) => (est.densities[k], est.log_densities[k]),
        None => (0.0, f64::NEG_INFINITY),
    };

    let target = ceil_count(cfg.beta_pct / 100.0 * rest.len() as f64).min(rest.len());
    let keys = sampling_keys(&est.log_densities, cfg.seed);
    let mut candidates = rest.to_vec();
    candidates.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));

    let mut keep = vec![false; n];
    for &k in low_set.iter().chain(&candidates[..target]) {
        keep[k] = true;
    }
    let retained_ids = (0..n).filter(|&k| keep[k]).map(|k| est.ids[k].clone()).collect();

    Ok(TsdSubset {
        alpha: cfg.alpha_pct,
        beta: cfg.beta_pct,
        seed: cfg.seed,
        orientation: cfg.orientation,
        threshold,
        log_threshold,
        retained_ids,
        low_count: low,
        sampled_count: target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};
    use std::collections::HashSet;

    fn ids(n: usize) -> Vec<ScenarioId> {
        (0..n).map(|k| format!("s{k:05}").into()).collect()
    }

    fn gaussian_cloud(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); 10.0 * z }).collect::<Vec<f64>>())
            .collect()
    }

    fn estimate_from_logs(logs: Vec<f64>) -> DensityEstimate {
        let n = logs.len();
        DensityEstimate {
            ids: ids(n),
            densities: logs.iter().map(|l| l.exp()).collect(),
            log_densities: logs,
            bandwidth: 1.0,
            reference_ids: ids(n),
        }
    }

    #[test]
    fn identical_vectors_have_equal_density() {
        let v = vec![vec![1.0, 2.0], vec![1.0, 2.0]];
        let cfg = DensityConfig {
            bandwidth: Some(0.5),
            ..DensityConfig::default()
        };
        let est = estimate_density(&ids(2), &v, &cfg).unwrap();
        assert_eq!(est.densities[0], est.densities[1]);
        // Scott's rule collapses on identical points.
        assert!(matches!(
            estimate_density(&ids(2), &v, &DensityConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn matches_direct_kde_sum() {
        let v = gaussian_cloud(100, 3, 7);
        let est = estimate_density(&ids(100), &v, &DensityConfig::default()).unwrap();
        assert_eq!(est.reference_ids.len(), 100);

        // Oracle: plain product-of-Gaussians sum; no log-domain tricks.
        let h = est.bandwidth;
        let norm = (2.0 * std::f64::consts::PI * h * h).powf(-1.5);
        for (i, q) in v.iter().enumerate() {
            let mut s = 0.0;
            for r in &v {
                let mut k = norm;
                for a in 0..3 {
                    k *= (-(q[a] - r[a]).powi(2) / (2.0 * h * h)).exp();
                }
                s += k;
            }
            let p = s / 100.0;
            assert!((est.densities[i] - p).abs() <= 1e-12 * p, "{i}: {} vs {p}", est.densities[i]);
        }

        // Scott oracle: n^(-1/(d+4)) * sqrt(mean per-axis sample variance).
        let mut var = 0.0;
        for a in 0..3 {
            let m: f64 = v.iter().map(|x| x[a]).sum::<f64>() / 100.0;
            var += v.iter().map(|x| (x[a] - m).powi(2)).sum::<f64>() / 99.0;
        }
        let scott = (var / 3.0).sqrt() * 100f64.powf(-1.0 / 7.0);
        assert!((h - scott).abs() < 1e-12 * scott);
    }

    #[test]
    fn outlier_has_minimum_density() {
        let mut v = gaussian_cloud(50, 4, 3);
        for x in v.iter_mut() {
            x.iter_mut().for_each(|c| *c *= 0.1);
        }
        v.push(vec![100.0; 4]);
        let est = estimate_density(&ids(51), &v, &DensityConfig::default()).unwrap();
        let min = est.log_densities[..50].iter().copied().fold(f64::INFINITY, f64::min);
        assert!(est.log_densities[50] < min);
        assert!(est.densities.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn reference_subsample_is_seeded() {
        let v = gaussian_cloud(300, 2, 1);
        let cfg = DensityConfig {
            reference_size: 64,
            seed: 5,
            ..DensityConfig::default()
        };
        let a = estimate_density(&ids(300), &v, &cfg).unwrap();
        let b = estimate_density(&ids(300), &v, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.reference_ids.len(), 64);
        let c = estimate_density(&ids(300), &v, &DensityConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(a.reference_ids, c.reference_ids);
    }

    #[test]
    fn input_errors() {
        let one = vec![vec![0.0]];
        assert!(matches!(
            estimate_density(&ids(1), &one, &DensityConfig::default()),
            Err(Error::Input(_))
        ));
        let ragged = vec![vec![0.0], vec![0.0, 1.0]];
        assert!(estimate_density(&ids(2), &ragged, &DensityConfig::default()).is_err());
        let cfg = DensityConfig {
            bandwidth: Some(0.0),
            ..DensityConfig::default()
        };
        assert!(matches!(
            estimate_density(&ids(2), &[vec![0.0], vec![1.0]], &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn tsd_size_for_default_settings() {
        let cfg = TsdConfig::default();
        // 0.10 * 10000 + 0.05 * 9000
        assert_eq!(tsd_size(10_000, &cfg), 1000 + 450);
        let est = estimate_from_logs((0..10_000).map(|k| -((k * 7919 % 10_000) as f64) / 100.0).collect());
        let tsd = select_tsd(&est, &cfg).unwrap();
        assert_eq!(tsd.len(), 1450);
        assert_eq!((tsd.low_count, tsd.sampled_count), (1000, 450));
        let kept: HashSet<_> = tsd.retained_ids.iter().collect();
        for (k, &lp) in est.log_densities.iter().enumerate() {
            if lp <= tsd.log_threshold {
                assert!(kept.contains(&est.ids[k]));
            }
        }
    }

    #[test]
    fn beta_extremes() {
        let est = estimate_from_logs((0..200).map(|k| (k as f64).sin()).collect());
        let all = select_tsd(
            &est,
            &TsdConfig {
                beta_pct: 100.0,
                ..TsdConfig::default()
            },
        )
        .unwrap();
        assert_eq!(all.retained_ids, est.ids);
        let none = select_tsd(
            &est,
            &TsdConfig {
                beta_pct: 0.0,
                ..TsdConfig::default()
            },
        )
        .unwrap();
        assert_eq!(none.len(), 20);
        assert!(select_tsd(
            &est,
            &TsdConfig {
                alpha_pct: 100.0,
                ..TsdConfig::default()
            }
        )
        .is_err());
    }

    #[test]
    fn literal_orientation_keeps_alpha_share() {
        let est = estimate_from_logs((0..100).map(|k| k as f64).collect());
        let cfg = TsdConfig {
            orientation: QuantileOrientation::Literal,
            beta_pct: 0.0,
            ..TsdConfig::default()
        };
        let tsd = select_tsd(&est, &cfg).unwrap();
        assert_eq!(tsd.len(), 90);
        assert_eq!(tsd.retained_ids, est.ids[..90].to_vec());
    }

    #[test]
    fn uniform_densities_match_reference_sampler() {
        let n = 1000;
        let est = estimate_from_logs(vec![-3.0; n]);
        let cfg = TsdConfig {
            seed: 42,
            ..TsdConfig::default()
        };
        let tsd = select_tsd(&est, &cfg).unwrap();

        // Oracle: direct A-ES keys u^(1/w), largest first, same uniform stream.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let keys: Vec<f64> = (0..n)
            .map(|k| {
                let u: f64 = rng.sample(Open01);
                u.powf(1.0 / (1.0 / est.densities[k]))
            })
            .collect();
        let low: Vec<usize> = (0..100).collect();
        let mut rest: Vec<usize> = (100..n).collect();
        rest.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]));
        let mut expected: Vec<usize> = low.into_iter().chain(rest[..45].iter().copied()).collect();
        expected.sort_unstable();
        let expected: Vec<ScenarioId> = expected.into_iter().map(|k| est.ids[k].clone()).collect();
        assert_eq!(tsd.retained_ids, expected);
    }

    #[test]
    fn first_pick_is_inverse_density_weighted() {
        // Three candidates with densities 1, 2, 4: first-draw probabilities 4/7, 2/7, 1/7.
        let logs = [1.0f64, 2.0, 4.0].map(f64::ln);
        let mut hits = [0usize; 3];
        let trials = 20_000;
        for seed in 0..trials {
            let keys = sampling_keys(&logs, seed);
            let best = (0..3).min_by(|&a, &b| keys[a].total_cmp(&keys[b])).unwrap();
            hits[best] += 1;
        }
        for (k, p) in [4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0].into_iter().enumerate() {
            let f = hits[k] as f64 / trials as f64;
            assert!((f - p).abs() < 0.015, "{k}: {f} vs {p}");
        }
    }

    #[test]
    fn lower_alpha_never_shrinks_tsd() {
        let v = gaussian_cloud(500, 3, 9);
        let est = estimate_density(&ids(500), &v, &DensityConfig::default()).unwrap();
        let mut prev_len = 0;
        let mut prev_low: HashSet<ScenarioId> = HashSet::new();
        for alpha in [95.0, 90.0, 80.0, 60.0, 30.0] {
            let cfg = TsdConfig {
                alpha_pct: alpha,
                seed: 3,
                ..TsdConfig::default()
            };
            let tsd = select_tsd(&est, &cfg).unwrap();
            assert_eq!(tsd.len(), tsd_size(500, &cfg));
            assert!(tsd.len() >= prev_len);
            let low: HashSet<ScenarioId> = (0..500)
                .filter(|&k| est.log_densities[k] <= tsd.log_threshold)
                .map(|k| est.ids[k].clone())
                .collect();
            assert!(low.is_superset(&prev_low));
            prev_len = tsd.len();
            prev_low = low;
        }
    }

    #[test]
    fn manifest_round_trip() {
        let est = estimate_from_logs((0..50).map(|k| -(k as f64)).collect());
        let tsd = select_tsd(&est, &TsdConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tsd.json");
        tsd.save(&p).unwrap();
        assert_eq!(TsdSubset::load(&p).unwrap(), tsd);
        let raw: serde_json::Value = serde_json::from_slice(&std::fs::read(&p).unwrap()).unwrap();
        for key in ["alpha", "beta", "seed", "threshold", "retained_ids"] {
            assert!(raw.get(key).is_some(), "{key}");
        }
    }
}
