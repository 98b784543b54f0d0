//! Benchmark harness: density-aware corpus growth, timed batch search across
//! index types, and the (alpha, beta) sweep.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::distr::{Distribution, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::{estimate_density, scott_bandwidth, select_tsd, DensityConfig, TsdConfig};
use crate::error::{Error, Result};
use crate::index::{build_index, AnyIndex, BuildOptions, FlatIndex, IndexSpec, SearchParams, SearchResult};
use crate::scenario::ScenarioId;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const INTERPOLATION_NEIGHBORS: usize = 10;

/// Grown corpus with the parents and weight behind every generated point.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpandedCorpus {
    pub vectors: Vec<Vec<f64>>,
    /// `None` for original points; `(i, j, lambda)` with `x = lambda·v_i + (1 − lambda)·v_j` otherwise.
    pub parents: Vec<Option<(usize, usize, f64)>>,
}

/// Grows `vectors` to `target_n` by interpolating between a density-weighted
/// point and one of its nearest neighbors. Parents always come from the input.
pub fn expand_corpus(vectors: &[Vec<f64>], target_n: usize, seed: u64) -> Result<ExpandedCorpus> {
    let n = vectors.len();
    if n == 0 {
        return Err(Error::Input("cannot expand an empty corpus".into()));
    }
    if target_n < n {
        return Err(Error::Input(format!("target {target_n} is smaller than the corpus ({n})")));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::Input("vectors must share a dimension".into()));
    }
    let mut out = ExpandedCorpus {
        vectors: vectors.to_vec(),
        parents: vec![None; n],
    };
    if target_n == n {
        return Ok(out);
    }

    let weights: Vec<f64> = if n >= 2 && scott_bandwidth(vectors) > 0.0 {
        let ids: Vec<ScenarioId> = (0..n).map(|k| ScenarioId::from(k.to_string())).collect();
        let est = estimate_density(
            &ids,
            vectors,
            &DensityConfig {
                seed,
                ..DensityConfig::default()
            },
        )?;
        let top = est.log_densities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        est.log_densities.iter().map(|l| (l - top).exp()).collect()
    } else {
        vec![1.0; n]
    };
    let picker = WeightedIndex::new(&weights).map_err(|e| Error::Data(format!("density weights: {e}")))?;

    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let s: f64 = vectors[i].iter().zip(&vectors[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                    (s, j)
                })
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.truncate(INTERPOLATION_NEIGHBORS);
            d.into_iter().map(|(_, j)| j).collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.vectors.reserve(target_n - n);
    out.parents.reserve(target_n - n);
    for _ in n..target_n {
        let i = picker.sample(&mut rng);
        let j = if neighbors[i].is_empty() {
            i
        } else {
            neighbors[i][rng.random_range(0..neighbors[i].len())]
        };
        let lambda: f64 = rng.sample(Open01);
        let x = vectors[i]
            .iter()
            .zip(&vectors[j])
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        out.vectors.push(x);
        out.parents.push(Some((i, j, lambda)));
    }
    Ok(out)
}

/// Index type plus whether it is built over the typical-scenario subset, e.g. `hnsw32-tsd`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BenchMethod {
    pub spec: IndexSpec,
    pub tsd: bool,
}

impl FromStr for BenchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.strip_suffix("-tsd") {
            Some(base) => Ok(Self {
                spec: base.parse()?,
                tsd: true,
            }),
            None => Ok(Self {
                spec: lower.parse()?,
                tsd: false,
            }),
        }
    }
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.spec, if self.tsd { "-tsd" } else { "" })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchCorpus {
    pub ids: Vec<ScenarioId>,
    pub vectors: Vec<Vec<f32>>,
    /// Search batches are cut from these, in order.
    pub queries: Vec<Vec<f32>>,
    /// Fresh vectors inserted to time the add path.
    pub additions: Vec<Vec<f32>>,
}

impl BenchCorpus {
    /// Expands `base` to `n + queries + additions` points and splits off the queries and additions.
    pub fn from_base(base: &[Vec<f64>], n: usize, queries: usize, additions: usize, seed: u64) -> Result<Self> {
        if n < base.len() {
            return Err(Error::Input(format!("corpus size {n} is below the base size {}", base.len())));
        }
        let grown = expand_corpus(base, n + queries + additions, seed)?;
        let mut all: Vec<Vec<f32>> = grown
            .vectors
            .iter()
            .map(|v| v.iter().map(|&x| x as f32).collect())
            .collect();
        // Generated points sit after the originals, so queries and additions are never originals.
        let additions_v = all.split_off(all.len() - additions);
        let queries_v = all.split_off(all.len() - queries);
        Ok(Self {
            ids: (0..all.len()).map(|k| ScenarioId::from(format!("c{k:07}"))).collect(),
            vectors: all,
            queries: queries_v,
            additions: additions_v,
        })
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map(Vec::len).unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchParams {
    pub k: usize,
    pub batch_size: usize,
    pub batches: usize,
    pub warmup: usize,
    pub search: SearchParams,
    pub build: BuildOptions,
    pub tsd: TsdConfig,
    pub density: DensityConfig,
    /// Worker threads for batch search; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for BenchParams {
    fn default() -> Self {
        Self {
            k: 4,
            batch_size: 500,
            batches: 5,
            warmup: 3,
            search: SearchParams::default(),
            build: BuildOptions::default(),
            tsd: TsdConfig::default(),
            density: DensityConfig::default(),
            workers: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusInfo {
    #[serde(rename = "N")]
    pub n: usize,
    pub dim: usize,
    pub tsd: bool,
    /// Vectors actually indexed (|TSD| when `tsd`).
    pub indexed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub method: String,
    pub corpus: CorpusInfo,
    pub k: usize,
    pub queries: usize,
    pub build_ms: f64,
    pub median_batch_search_ms: f64,
    pub mean_batch_search_ms: f64,
    pub batch_search_ms: Vec<f64>,
    pub add_ms: f64,
    pub added: usize,
    /// Overlap with a Flat search over the same indexed vectors.
    pub recall_at_k: f64,
    /// Mean top-1 distance returned by this method.
    pub mean_retrieved_distance: f64,
    /// Mean top-1 distance of Flat over the full corpus.
    pub oracle_mean_distance: f64,
    /// Share of queries whose full-corpus nearest neighbour is indexed and was returned first.
    pub indexed_nn_recovery: Option<f64>,
}

impl BenchReport {
    pub fn validate(&self) -> Result<()> {
        let ok = self.schema_version == REPORT_SCHEMA_VERSION
            && (0.0..=1.0).contains(&self.recall_at_k)
            && self.indexed_nn_recovery.is_none_or(|r| (0.0..=1.0).contains(&r))
            && self.build_ms > 0.0
            && self.median_batch_search_ms > 0.0
            && self.mean_batch_search_ms > 0.0
            && (self.added == 0 || self.add_ms > 0.0)
            && self.corpus.indexed <= self.corpus.n
            && self.method.parse::<BenchMethod>().is_ok();
        if ok {
            Ok(())
        } else {
            Err(Error::Data(format!("invalid bench report for {}", self.method)))
        }
    }
}

fn ms(start: Instant) -> f64 {
    // Clamp so sub-microsecond steps still report a positive time.
    (start.elapsed().as_secs_f64() * 1e3).max(1e-6)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Mean fraction of `truth` ids found in `got`, per query over `k`.
pub fn recall_at_k(got: &[SearchResult], truth: &[SearchResult], k: usize) -> f64 {
    if got.is_empty() {
        return 0.0;
    }
    let total: f64 = got
        .iter()
        .zip(truth)
        .map(|(g, t)| {
            let want: HashSet<&ScenarioId> = t.neighbor_ids.iter().take(k).collect();
            let hit = g.neighbor_ids.iter().take(k).filter(|id| want.contains(id)).count();
            hit as f64 / want.len().max(1) as f64
        })
        .sum();
    total / got.len() as f64
}

fn mean_top1(results: &[SearchResult]) -> f64 {
    let d: Vec<f64> = results.iter().filter_map(|r| r.min_distance()).map(|d| d as f64).collect();
    d.iter().sum::<f64>() / d.len().max(1) as f64
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Indexed subset for a method: everything, or the TSD of the corpus.
pub fn method_subset(corpus: &BenchCorpus, tsd: bool, params: &BenchParams) -> Result<Vec<usize>> {
    if !tsd {
        return Ok((0..corpus.vectors.len()).collect());
    }
    let as_f64: Vec<Vec<f64>> = corpus
        .vectors
        .iter()
        .map(|v| v.iter().map(|&x| x as f64).collect())
        .collect();
    let est = estimate_density(&corpus.ids, &as_f64, &params.density)?;
    let subset = select_tsd(&est, &params.tsd)?;
    let keep: HashSet<&ScenarioId> = subset.retained_ids.iter().collect();
    Ok((0..corpus.ids.len()).filter(|&k| keep.contains(&corpus.ids[k])).collect())
}

fn timed_batches(index: &AnyIndex, corpus: &BenchCorpus, params: &BenchParams) -> Result<(Vec<f64>, Vec<SearchResult>)> {
    let batch = params.batch_size.max(1);
    if corpus.queries.len() < batch {
        return Err(Error::Input(format!(
            "{} queries available for batches of {batch}",
            corpus.queries.len()
        )));
    }
    let batches = corpus.queries.len() / batch;
    let run = |b: usize| index.search_batch(&corpus.queries[b * batch..(b + 1) * batch], params.k, &params.search);
    with_workers(params.workers, || -> Result<(Vec<f64>, Vec<SearchResult>)> {
        for w in 0..params.warmup {
            run(w % batches)?;
        }
        let mut times = Vec::with_capacity(params.batches);
        let mut first = Vec::new();
        for b in 0..params.batches.max(1) {
            let t = Instant::now();
            let r = run(b % batches)?;
            times.push(ms(t));
            if b == 0 {
                first = r;
            }
        }
        Ok((times, first))
    })?
}

/// Builds, times and scores every method on `corpus`. The first query batch is scored.
pub fn bench_search(corpus: &BenchCorpus, methods: &[BenchMethod], params: &BenchParams) -> Result<Vec<BenchReport>> {
    if methods.is_empty() {
        return Err(Error::Input("no methods to benchmark".into()));
    }
    let batch = params.batch_size.max(1);
    let scored = &corpus.queries[..batch.min(corpus.queries.len())];
    let full_flat = FlatIndex::build(&corpus.ids, &corpus.vectors)?;
    let full_truth: Vec<SearchResult> = scored
        .iter()
        .map(|q| full_flat.search(q, params.k))
        .collect::<Result<_>>()?;

    let mut reports = Vec::with_capacity(methods.len());
    for method in methods {
        let subset = method_subset(corpus, method.tsd, params)?;
        let ids: Vec<ScenarioId> = subset.iter().map(|&k| corpus.ids[k].clone()).collect();
        let vectors: Vec<&[f32]> = subset.iter().map(|&k| corpus.vectors[k].as_slice()).collect();

        let t = Instant::now();
        let mut index = build_index(method.spec, &ids, &vectors, &params.build)?;
        let build_ms = ms(t);

        let (times, results) = timed_batches(&index, corpus, params)?;

        let same_flat = FlatIndex::build(&ids, &vectors)?;
        let truth: Vec<SearchResult> = scored
            .iter()
            .map(|q| same_flat.search(q, params.k))
            .collect::<Result<_>>()?;
        let indexed: HashSet<&ScenarioId> = ids.iter().collect();
        let pairs: Vec<(&SearchResult, &SearchResult)> = results
            .iter()
            .zip(&full_truth)
            .filter(|(_, t)| t.neighbor_ids.first().is_some_and(|id| indexed.contains(id)))
            .collect();
        let recovery = (!pairs.is_empty()).then(|| {
            pairs
                .iter()
                .filter(|(r, t)| r.neighbor_ids.first() == t.neighbor_ids.first())
                .count() as f64
                / pairs.len() as f64
        });

        let t = Instant::now();
        for (a, v) in corpus.additions.iter().enumerate() {
            index.add(ScenarioId::from(format!("add{a:07}")), v)?;
        }
        let add_ms = if corpus.additions.is_empty() { 0.0 } else { ms(t) };

        let report = BenchReport {
            schema_version: REPORT_SCHEMA_VERSION,
            method: method.to_string(),
            corpus: CorpusInfo {
                n: corpus.vectors.len(),
                dim: corpus.dim(),
                tsd: method.tsd,
                indexed: ids.len(),
            },
            k: params.k,
            queries: scored.len(),
            build_ms,
            median_batch_search_ms: median(&times),
            mean_batch_search_ms: times.iter().sum::<f64>() / times.len() as f64,
            batch_search_ms: times,
            add_ms,
            added: corpus.additions.len(),
            recall_at_k: recall_at_k(&results, &truth, params.k),
            mean_retrieved_distance: mean_top1(&results),
            oracle_mean_distance: mean_top1(&full_truth),
            indexed_nn_recovery: recovery,
        };
        report.validate()?;
        reports.push(report);
    }
    Ok(reports)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub tsd_size: usize,
    pub median_batch_search_ms: f64,
    pub mean_retrieved_distance: f64,
    pub recall_at_k: f64,
}

/// Grid over (alpha, beta) with HNSW32 on the TSD.
pub fn sweep(corpus: &BenchCorpus, alphas: &[f64], betas: &[f64], params: &BenchParams) -> Result<Vec<SweepRow>> {
    let method = BenchMethod {
        spec: IndexSpec::Hnsw { m: 32 },
        tsd: true,
    };
    let mut rows = Vec::with_capacity(alphas.len() * betas.len());
    for &alpha in alphas {
        for &beta in betas {
            let p = BenchParams {
                tsd: TsdConfig {
                    alpha_pct: alpha,
                    beta_pct: beta,
                    ..params.tsd.clone()
                },
                ..params.clone()
            };
            let r = bench_search(corpus, &[method], &p)?.remove(0);
            rows.push(SweepRow {
                alpha,
                beta,
                tsd_size: r.corpus.indexed,
                median_batch_search_ms: r.median_batch_search_ms,
                mean_retrieved_distance: r.mean_retrieved_distance,
                recall_at_k: r.recall_at_k,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::tsd_size;

    fn base(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| rng.random_range(0.0..100.0)).collect()).collect()
    }

    #[test]
    fn expansion_identity_and_errors() {
        let b = base(20, 3, 1);
        let same = expand_corpus(&b, 20, 0).unwrap();
        assert_eq!(same.vectors, b);
        assert!(same.parents.iter().all(Option::is_none));
        assert!(expand_corpus(&b, 10, 0).is_err());
        assert!(expand_corpus(&[], 10, 0).is_err());
    }

    #[test]
    fn identical_corpus_stays_identical() {
        let b = vec![vec![3.0, -1.0]; 5];
        let grown = expand_corpus(&b, 50, 2).unwrap();
        assert!(grown.vectors.iter().all(|v| v == &b[0]));
    }

    #[test]
    fn new_points_lie_on_parent_segments() {
        let b = base(100, 4, 3);
        let grown = expand_corpus(&b, 1000, 4).unwrap();
        assert_eq!(grown.vectors.len(), 1000);
        for (x, p) in grown.vectors.iter().zip(&grown.parents).skip(100) {
            let (i, j, lambda) = p.unwrap();
            assert!(lambda > 0.0 && lambda < 1.0);
            // Recover lambda from the coordinates and compare.
            let (vi, vj) = (&b[i], &b[j]);
            let axis = (0..4).max_by(|&a, &c| (vi[a] - vj[a]).abs().total_cmp(&(vi[c] - vj[c]).abs())).unwrap();
            let rec = (x[axis] - vj[axis]) / (vi[axis] - vj[axis]);
            assert!((rec - lambda).abs() < 1e-9);
            for a in 0..4 {
                assert!((x[a] - (rec * vi[a] + (1.0 - rec) * vj[a])).abs() < 1e-9);
            }
        }
        assert_eq!(grown, expand_corpus(&b, 1000, 4).unwrap());
    }

    #[test]
    fn method_strings() {
        let m: BenchMethod = "HNSW32-TSD".parse().unwrap();
        assert_eq!(m.to_string(), "hnsw32-tsd");
        assert!(m.tsd);
        assert_eq!("ivf16".parse::<BenchMethod>().unwrap().to_string(), "ivf16");
        assert!("tsd".parse::<BenchMethod>().is_err());
    }

    fn small_corpus() -> BenchCorpus {
        BenchCorpus::from_base(&base(60, 8, 5), 1000, 40, 10, 6).unwrap()
    }

    fn small_params() -> BenchParams {
        BenchParams {
            batch_size: 20,
            batches: 2,
            warmup: 1,
            ..BenchParams::default()
        }
    }

    #[test]
    fn flat_recall_is_one() {
        let c = small_corpus();
        assert_eq!((c.vectors.len(), c.queries.len(), c.additions.len()), (1000, 40, 10));
        let r = bench_search(&c, &["flat".parse().unwrap()], &small_params()).unwrap();
        assert_eq!(r[0].recall_at_k, 1.0);
        assert_eq!(r[0].mean_retrieved_distance, r[0].oracle_mean_distance);
        assert_eq!(r[0].indexed_nn_recovery, Some(1.0));
    }

    #[test]
    fn tsd_report_indexes_fewer_vectors() {
        let c = small_corpus();
        let p = small_params();
        let r = bench_search(&c, &["hnsw32".parse().unwrap(), "hnsw32-tsd".parse().unwrap()], &p).unwrap();
        assert_eq!(r[0].corpus.indexed, 1000);
        assert_eq!(r[1].corpus.indexed, tsd_size(1000, &p.tsd));
        assert!(r[1].corpus.indexed < r[0].corpus.indexed);
    }

    #[test]
    fn report_json_round_trip() {
        let c = small_corpus();
        let r = bench_search(&c, &["ivf8".parse().unwrap()], &small_params()).unwrap().remove(0);
        let text = serde_json::to_string(&r).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in [
            "schema_version",
            "method",
            "corpus",
            "build_ms",
            "mean_batch_search_ms",
            "add_ms",
            "recall_at_k",
            "mean_retrieved_distance",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        for key in ["N", "dim", "tsd"] {
            assert!(v["corpus"].get(key).is_some(), "{key}");
        }
        let back: BenchReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        back.validate().unwrap();
        let mut bad = back;
        bad.recall_at_k = 1.5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn recall_matches_independent_count() {
        let c = small_corpus();
        let ids = &c.ids;
        let hnsw = build_index(
            IndexSpec::Hnsw { m: 4 },
            ids,
            &c.vectors,
            &BuildOptions {
                ef_construction: 8,
                seed: 0,
            },
        )
        .unwrap();
        let flat = FlatIndex::build(ids, &c.vectors).unwrap();
        let p = SearchParams {
            ef_search: Some(4),
            nprobe: None,
        };
        let got = hnsw.search_batch(&c.queries, 4, &p).unwrap();
        let truth: Vec<SearchResult> = c.queries.iter().map(|q| flat.search(q, 4).unwrap()).collect();

        // Oracle: brute-force f64 top-4 with no index code involved.
        let mut hits = 0usize;
        for (q, g) in c.queries.iter().zip(&got) {
            let mut d: Vec<(f64, usize)> = c
                .vectors
                .iter()
                .enumerate()
                .map(|(k, v)| (v.iter().zip(q).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>(), k))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0));
            let top: Vec<&ScenarioId> = d[..4].iter().map(|&(_, k)| &ids[k]).collect();
            hits += g.neighbor_ids.iter().filter(|id| top.contains(id)).count();
        }
        let oracle = hits as f64 / (4 * c.queries.len()) as f64;
        assert!((recall_at_k(&got, &truth, 4) - oracle).abs() < 1e-12);
    }

    #[test]
    fn sweep_rows_and_csv() {
        let c = small_corpus();
        let rows = sweep(&c, &[90.0, 50.0], &[5.0, 30.0], &small_params()).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().any(|r| r.alpha == 90.0 && r.beta == 5.0));
        for pair in rows.chunks(2) {
            assert!(pair[0].tsd_size <= pair[1].tsd_size);
        }
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("alpha,beta,tsd_size,"));
        assert_eq!(text.lines().count(), 5);
    }
}
