//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_ONLY=2,7` runs a subset. Failed criteria are reported but only
//! fail the process under `ACCEPTANCE_STRICT=1`.

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use driving_rag::bench::{bench_search, expand_corpus, BenchCorpus, BenchMethod, BenchParams, BenchReport};
use driving_rag::density::{estimate_density, select_tsd, DensityConfig, TsdConfig};
use driving_rag::embed::{embed_batch, fit, EmbeddingModel, GraphDtwLandmarks};
use driving_rag::graph_dtw::{graph_dtw_distance, pairwise_matrix, scene_distance, DistanceMatrix, EgoScene, GraphDtwConfig};
use driving_rag::index::{build_index, AnyIndex, BuildOptions, IndexSpec, SearchParams, SearchResult, SharedIndex};
use driving_rag::rag::{ade, eval_axis, quintic, AxisState, PlanResponse};
use driving_rag::reorg::{arrange, relation_filter, relations_match, scenario_signature, select, SignatureMode};
use driving_rag::scenario::{
    derive_relations, generate_synthetic, AtomScenario, NodeState, RelationSignature, SceneGraph, ScenarioId,
    ScenarioStore, SynthConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;

struct Shared {
    scenarios: Vec<AtomScenario>,
    matrix: DistanceMatrix,
    model: EmbeddingModel,
    base: Vec<Vec<f64>>,
    held_out: Option<Vec<Vec<f32>>>,
}

impl Shared {
    fn build() -> Result<Self, String> {
        let t = Instant::now();
        let scenarios = generate_synthetic(&SynthConfig {
            count: 200,
            duration: 5.0,
            ..SynthConfig::default()
        });
        let matrix = pairwise_matrix(&scenarios, &GraphDtwConfig::default()).map_err(|e| e.to_string())?;
        let model = fit(&matrix, 64).map_err(|e| e.to_string())?;
        let base = (0..matrix.n()).map(|k| model.landmark_vector(k).0).collect();
        eprintln!("  shared 200-scenario matrix and d=64 model in {:.1} s", t.elapsed().as_secs_f64());
        Ok(Self {
            scenarios,
            matrix,
            model,
            base,
            held_out: None,
        })
    }

    /// 500 scenarios from another generator seed, embedded out of sample.
    fn held_out_queries(&mut self) -> Result<Vec<Vec<f32>>, String> {
        if let Some(q) = &self.held_out {
            return Ok(q.clone());
        }
        let t = Instant::now();
        let held = generate_synthetic(&SynthConfig {
            count: 500,
            duration: 5.0,
            seed: 99,
            ..SynthConfig::default()
        });
        let lm = GraphDtwLandmarks::new(&self.scenarios, GraphDtwConfig::default()).map_err(|e| e.to_string())?;
        let q: Vec<Vec<f32>> = embed_batch(&held, &self.model, &lm)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|v| v.to_f32())
            .collect();
        eprintln!("  embedded 500 held-out queries in {:.1} s", t.elapsed().as_secs_f64());
        self.held_out = Some(q.clone());
        Ok(q)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn methods(list: &str) -> Vec<BenchMethod> {
    list.split(',').map(|m| m.parse().expect("method")).collect()
}

fn params(ef: usize) -> BenchParams {
    let mut p = BenchParams::default();
    p.search.ef_search = Some(ef);
    p
}

fn report<'a>(reports: &'a [BenchReport], method: &str) -> &'a BenchReport {
    reports.iter().find(|r| r.method == method).expect("method reported")
}

// 1 -------------------------------------------------------------------------

fn tsd_size_law(shared: &Shared) -> Outcome {
    let grown = expand_corpus(&shared.base, 10_000, 1).map_err(err)?;
    let ids: Vec<ScenarioId> = (0..grown.vectors.len()).map(|k| format!("c{k}").into()).collect();
    let t = Instant::now();
    let est = estimate_density(&ids, &grown.vectors, &DensityConfig::default()).map_err(err)?;
    let subset = select_tsd(&est, &TsdConfig::default()).map_err(err)?;
    let secs = t.elapsed().as_secs_f64();
    let ratio = subset.len() as f64 / ids.len() as f64;
    let kept: HashSet<&ScenarioId> = subset.retained_ids.iter().collect();
    let missing = (0..ids.len())
        .filter(|&k| est.log_densities[k] <= subset.log_threshold && !kept.contains(&ids[k]))
        .count();
    let ok = (ratio - 0.145).abs() <= 0.005 && missing == 0 && secs < 30.0;
    Ok((
        ok,
        format!("|TSD|/N = {ratio:.4}, low-density vectors dropped = {missing}, runtime {secs:.1} s"),
    ))
}

// 2 -------------------------------------------------------------------------

fn accuracy_neutrality(shared: &mut Shared) -> Outcome {
    let queries = shared.held_out_queries()?;
    let mut corpus = BenchCorpus::from_base(&shared.base, 10_000, 0, 500, 1).map_err(err)?;
    corpus.queries = queries;
    let reports = bench_search(&corpus, &methods("flat,hnsw32-tsd"), &params(128)).map_err(err)?;
    let tsd = report(&reports, "hnsw32-tsd");
    let recovery = tsd.indexed_nn_recovery.ok_or("no query has its true NN inside the subset")?;
    let excess = tsd.mean_retrieved_distance / tsd.oracle_mean_distance - 1.0;
    Ok((
        recovery >= 0.95 && excess <= 0.10,
        format!(
            "NN recovery {:.3} (indexed {}), mean top-1 {:.3} vs Flat-full {:.3} (+{:.1}%)",
            recovery,
            tsd.corpus.indexed,
            tsd.mean_retrieved_distance,
            tsd.oracle_mean_distance,
            100.0 * excess
        ),
    ))
}

// 3 -------------------------------------------------------------------------

fn speedup_direction(shared: &mut Shared) -> Outcome {
    let n = 100_000;
    let queries = shared.held_out_queries()?;
    let mut corpus = BenchCorpus::from_base(&shared.base, n, 0, 0, 1).map_err(err)?;
    corpus.queries = queries;
    let clusters = (n as f64).sqrt().ceil() as usize;
    let list = format!("flat,ivf{clusters},hnsw32,hnsw32-tsd");
    let reports = bench_search(&corpus, &methods(&list), &params(128)).map_err(err)?;
    let t: Vec<f64> = reports.iter().map(|r| r.median_batch_search_ms).collect();
    let speedup = t[0] / t[3];
    let ordered = t.windows(2).all(|w| w[0] > w[1]);
    Ok((
        ordered && speedup >= 5.0,
        format!(
            "median ms per 500 queries: flat {:.1} > ivf{clusters} {:.1} > hnsw32 {:.1} > hnsw32-tsd {:.1}; TSD speedup {:.1}x",
            t[0], t[1], t[2], t[3], speedup
        ),
    ))
}

// 4 -------------------------------------------------------------------------

fn dimension_sweep(fidelity: Option<bool>) -> Outcome {
    // 200 scenarios yield fewer than 256 positive MDS eigenvalues; 720 short ones do not.
    let t = Instant::now();
    let scenarios = generate_synthetic(&SynthConfig {
        count: 720,
        duration: 1.0,
        ..SynthConfig::default()
    });
    let d = pairwise_matrix(&scenarios, &GraphDtwConfig::default()).map_err(err)?;
    eprintln!("  720x720 matrix in {:.1} s", t.elapsed().as_secs_f64());
    let mut cost = Vec::new();
    for dim in [64, 256] {
        let model = fit(&d, dim).map_err(err)?;
        let base: Vec<Vec<f64>> = (0..d.n()).map(|k| model.landmark_vector(k).0).collect();
        let corpus = BenchCorpus::from_base(&base, 10_000, 500, 500, 1).map_err(err)?;
        let r = bench_search(&corpus, &methods("hnsw32-tsd"), &params(128)).map_err(err)?;
        cost.push((r[0].median_batch_search_ms, r[0].add_ms));
    }
    let total: Vec<f64> = cost.iter().map(|(s, a)| s + a).collect();
    let timing = total[0] <= total[1];
    let fid = match fidelity {
        Some(true) => "passes",
        Some(false) => "fails",
        None => "not run",
    };
    Ok((
        timing && fidelity == Some(true),
        format!(
            "search+add d=64 {:.1} ms ({:.1}+{:.1}) vs d=256 {:.1} ms ({:.1}+{:.1}); fidelity at d=64 {fid}",
            total[0], cost[0].0, cost[0].1, total[1], cost[1].0, cost[1].1
        ),
    ))
}

// 5 -------------------------------------------------------------------------

fn random_vectors(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-10.0f32..10.0)).collect())
        .collect()
}

fn ids(n: usize) -> Vec<ScenarioId> {
    (0..n).map(|k| format!("v{k:05}").into()).collect()
}

fn exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sp = SearchParams::default();
    let opts = BuildOptions::default();

    let (n, dim, k) = (1000, 16, 10);
    let vecs = random_vectors(&mut rng, n, dim);
    let names = ids(n);
    let flat = build_index(IndexSpec::Flat, &names, &vecs, &opts).map_err(err)?;
    let queries = random_vectors(&mut rng, 100, dim);
    let mut flat_ok = true;
    for q in &queries {
        let mut order: Vec<(f64, usize)> = vecs
            .iter()
            .enumerate()
            .map(|(i, v)| (v.iter().zip(q).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum::<f64>(), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let want: Vec<&ScenarioId> = order[..k].iter().map(|&(_, i)| &names[i]).collect();
        let got = flat.search(q, k, &sp).map_err(err)?;
        flat_ok &= got.neighbor_ids.iter().collect::<Vec<_>>() == want;
    }

    let n2 = 2000;
    let vecs2 = random_vectors(&mut rng, n2, dim);
    let names2 = ids(n2);
    let hnsw = build_index(IndexSpec::Hnsw { m: 32 }, &names2, &vecs2, &opts).map_err(err)?;
    let flat2 = build_index(IndexSpec::Flat, &names2, &vecs2, &opts).map_err(err)?;
    let q2 = random_vectors(&mut rng, 100, dim);
    let full = SearchParams {
        ef_search: Some(n2),
        nprobe: None,
    };
    let (mut hit, mut total) = (0usize, 0usize);
    for q in &q2 {
        let truth: HashSet<ScenarioId> = flat2.search(q, k, &sp).map_err(err)?.neighbor_ids.into_iter().collect();
        let got = hnsw.search(q, k, &full).map_err(err)?;
        hit += got.neighbor_ids.iter().filter(|id| truth.contains(*id)).count();
        total += truth.len();
    }
    let hnsw_recall = hit as f64 / total as f64;

    let clusters = 32;
    let ivf = build_index(IndexSpec::Ivf { clusters }, &names, &vecs, &opts).map_err(err)?;
    let all = SearchParams {
        ef_search: None,
        nprobe: Some(clusters),
    };
    let mut ivf_ok = true;
    for q in &queries {
        ivf_ok &= ivf.search(q, k, &all).map_err(err)? == flat.search(q, k, &sp).map_err(err)?;
    }
    Ok((
        flat_ok && hnsw_recall == 1.0 && ivf_ok,
        format!("flat = argsort: {flat_ok}; hnsw recall at ef=N: {hnsw_recall:.4}; ivf(all probes) = flat: {ivf_ok}"),
    ))
}

// 6 -------------------------------------------------------------------------

fn embedding_fidelity(shared: &Shared) -> Outcome {
    let (d, m) = (&shared.matrix, &shared.model);
    let n = d.n();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in 0..i {
            let e = m.landmark_vector(i).distance(&m.landmark_vector(j));
            sum += (e - m.scale * d.get(i, j)).abs();
            pairs += 1;
        }
    }
    let mae = sum / pairs as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let pts: Vec<[f64; 5]> = (0..80).map(|_| std::array::from_fn(|_| rng.random_range(-50.0..50.0))).collect();
    let euclid = |a: &[f64; 5], b: &[f64; 5]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let exact = DistanceMatrix::from_fn(ids(pts.len()), |i, j| euclid(&pts[i], &pts[j]));
    let em = fit(&exact, 5).map_err(err)?;
    let mut rel: f64 = 0.0;
    for i in 0..pts.len() {
        for j in 0..i {
            let e = em.landmark_vector(i).distance(&em.landmark_vector(j));
            let t = em.scale * exact.get(i, j);
            rel = rel.max((e - t).abs() / t);
        }
    }
    Ok((
        mae <= 5.0 && rel <= 1e-6,
        format!("Graph-DTW MAE at d=64: {mae:.2} (0-100 scale); Euclidean reconstruction max rel error {rel:.2e}"),
    ))
}

// 7 -------------------------------------------------------------------------

fn random_frame(rng: &mut ChaCha8Rng, n: usize, t: f64) -> SceneGraph {
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
    derive_relations(&SceneGraph::new(t, nodes), true)
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

// Ground cost written from the definition, minimized over every permutation.
fn brute_scene(a: &SceneGraph, b: &SceneGraph, cfg: &GraphDtwConfig) -> f64 {
    let c = cfg.scene;
    let local = |g: &SceneGraph| -> Vec<([f64; 4], f64, bool)> {
        let ego = g.node(&"ego".into()).expect("ego");
        let (co, si) = (ego.heading.cos(), ego.heading.sin());
        g.vehicles()
            .map(|n| {
                let (dx, dy) = (n.position[0] - ego.position[0], n.position[1] - ego.position[1]);
                let (vx, vy) = (n.velocity[0], n.velocity[1]);
                (
                    [co * dx + si * dy, -si * dx + co * dy, co * vx + si * vy, -si * vx + co * vy],
                    n.heading - ego.heading,
                    n.lane_id == ego.lane_id,
                )
            })
            .collect()
    };
    let (la, lb) = (local(a), local(b));
    let n = la.len().max(lb.len());
    let pair = |i: usize, j: usize| match (la.get(i), lb.get(j)) {
        (Some(p), Some(q)) => {
            let dp = (p.0[0] - q.0[0]).hypot(p.0[1] - q.0[1]);
            let dv = (p.0[2] - q.0[2]).hypot(p.0[3] - q.0[3]);
            let two_pi = 2.0 * std::f64::consts::PI;
            let r = (p.1 - q.1).rem_euclid(two_pi);
            let dh = r.min(two_pi - r);
            c.w_pos * dp + c.w_vel * dv + c.w_head * dh + if p.2 != q.2 { c.type_mismatch_penalty } else { 0.0 }
        }
        _ => c.unmatched_penalty,
    };
    permutations(n)
        .iter()
        .map(|p| (0..n).map(|i| pair(i, p[i])).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        / n as f64
}

// Minimum accumulated cost over all monotone paths, normalized by that path's length
// (longest among equal sums).
fn dtw_enumerated(c: &[Vec<f64>]) -> (f64, usize) {
    fn walk(c: &[Vec<f64>], i: usize, j: usize, sum: f64, len: usize, best: &mut (f64, usize), paths: &mut usize) {
        let (sum, len) = (sum + c[i][j], len + 1);
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
    (best.0 / best.1 as f64, paths)
}

fn scenario_of(frames: Vec<SceneGraph>, id: &str) -> AtomScenario {
    AtomScenario {
        scenario_id: id.into(),
        ego_id: "ego".into(),
        interaction_type: "random".into(),
        frames,
        goal: None,
    }
}

fn graph_dtw_correctness(shared: &Shared) -> Outcome {
    let cfg = GraphDtwConfig::default();
    let ego = "ego".into();
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let a = random_frame(&mut rng, 5, 0.0);
        let b = random_frame(&mut rng, 5, 0.0);
        let d = scene_distance(EgoScene::new(&a, &ego), EgoScene::new(&b, &ego), &cfg.scene).map_err(err)?;
        let o = brute_scene(&a, &b, &cfg);
        worst = worst.max((d - o).abs() / o.max(1.0));
    }
    // Same optimum; the two ground-cost codings may differ in the last bits.
    let scene_ok = worst <= 1e-12;

    let mut dtw_ok = true;
    let mut all_13 = true;
    for c in 0..50 {
        let x = scenario_of((0..3).map(|k| random_frame(&mut rng, 4, k as f64 * 0.1)).collect(), &format!("x{c}"));
        let y = scenario_of((0..3).map(|k| random_frame(&mut rng, 3, k as f64 * 0.1)).collect(), &format!("y{c}"));
        let cost: Vec<Vec<f64>> = x
            .frames
            .iter()
            .map(|fx| {
                y.frames
                    .iter()
                    .map(|fy| scene_distance(EgoScene::new(fx, &ego), EgoScene::new(fy, &ego), &cfg.scene).expect("scene"))
                    .collect()
            })
            .collect();
        let (want, paths) = dtw_enumerated(&cost);
        all_13 &= paths == 13;
        dtw_ok &= graph_dtw_distance(&x, &y, &cfg.scene, &cfg.dtw).map_err(err)? == want;
    }

    // Identity and symmetry on random pairs of short synthetic scenarios plus the shared corpus.
    let short = generate_synthetic(&SynthConfig {
        count: 200,
        duration: 1.0,
        seed: 17,
        ..SynthConfig::default()
    });
    let pool: Vec<&AtomScenario> = short.iter().chain(&shared.scenarios).collect();
    let (mut identity, mut symmetric) = (true, true);
    for _ in 0..1000 {
        let a = pool[rng.random_range(0..pool.len())];
        let b = pool[rng.random_range(0..pool.len())];
        let ab = graph_dtw_distance(a, b, &cfg.scene, &cfg.dtw).map_err(err)?;
        let ba = graph_dtw_distance(b, a, &cfg.scene, &cfg.dtw).map_err(err)?;
        symmetric &= ab == ba && ab >= 0.0;
        identity &= graph_dtw_distance(a, a, &cfg.scene, &cfg.dtw).map_err(err)? == 0.0;
    }
    Ok((
        scene_ok && dtw_ok && all_13 && identity && symmetric,
        format!(
            "scene vs 120 permutations max rel diff {worst:.1e}; DTW = 13-path enumeration on 50 cases: {dtw_ok}; identity {identity}; symmetry {symmetric}"
        ),
    ))
}

// 8 -------------------------------------------------------------------------

fn sequential_oracle(
    results: &[SearchResult],
    prompt_sigs: &[RelationSignature],
    sig_of: &dyn Fn(&ScenarioId) -> RelationSignature,
    k: usize,
    m: usize,
) -> Vec<(ScenarioId, usize, usize)> {
    let mut chosen: Vec<(ScenarioId, usize, usize)> = Vec::new();
    for l in 0..k {
        for (i, r) in results.iter().enumerate() {
            let Some(id) = r.neighbor_ids.get(l) else { continue };
            if !relations_match(&prompt_sigs[i], &sig_of(id)) || chosen.iter().any(|c| &c.0 == id) {
                continue;
            }
            if chosen.len() < m {
                chosen.push((id.clone(), i, l));
            }
        }
    }
    chosen
}

fn reorg_conformance() -> Outcome {
    let (n, k, m) = (5, 4, 4);
    let scenarios = generate_synthetic(&SynthConfig {
        count: 60,
        duration: 1.0,
        seed: 8,
        ..SynthConfig::default()
    });
    let store = ScenarioStore::in_memory(scenarios.clone()).map_err(err)?;
    let sig_of = |id: &ScenarioId| scenario_signature(store.get(id).expect("stored"), SignatureMode::FirstFrame);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut equal, mut filtered_ok, mut capped) = (0, true, true);
    let mut chosen_total = 0;
    for b in 0..200 {
        let prompts: Vec<ScenarioId> = (0..n).map(|i| format!("b{b}p{i}").into()).collect();
        let prompt_sigs: Vec<RelationSignature> = (0..n)
            .map(|_| {
                let mut s = sig_of(&scenarios[rng.random_range(0..scenarios.len())].scenario_id);
                for c in s.ego_relations.values_mut() {
                    *c = rng.random_range(0..=*c);
                }
                s.ego_relations.retain(|_, c| *c > 0);
                if rng.random_bool(0.5) {
                    s.lane_connection = None;
                }
                s
            })
            .collect();
        let results: Vec<SearchResult> = (0..n)
            .map(|_| {
                let len = if rng.random_bool(0.1) { rng.random_range(1..k) } else { k };
                let mut picked: Vec<usize> = Vec::new();
                while picked.len() < len {
                    let j = rng.random_range(0..scenarios.len());
                    if !picked.contains(&j) {
                        picked.push(j);
                    }
                }
                let mut dist: Vec<f32> = (0..len).map(|_| rng.random_range(0.0..30.0)).collect();
                dist.sort_by(f32::total_cmp);
                SearchResult {
                    neighbor_ids: picked.iter().map(|&j| scenarios[j].scenario_id.clone()).collect(),
                    distances: dist,
                    truncated: len < k,
                }
            })
            .collect();
        let bundle = arrange(&prompts, &results, k, m).map_err(err)?;
        let filtered = relation_filter(&bundle, &prompt_sigs, &store, SignatureMode::FirstFrame).map_err(err)?;
        let sel = select(&filtered, m);
        let got: Vec<(ScenarioId, usize, usize)> = sel.chosen.iter().map(|c| (c.id.clone(), c.prompt, c.level)).collect();
        if got == sequential_oracle(&results, &prompt_sigs, &sig_of, k, m) {
            equal += 1;
        }
        filtered_ok &= sel.chosen.iter().all(|c| relations_match(&prompt_sigs[c.prompt], &sig_of(&c.id)));
        capped &= sel.chosen.len() <= m;
        chosen_total += sel.chosen.len();
    }
    Ok((
        equal == 200 && filtered_ok && capped,
        format!(
            "{equal}/200 bundles equal the level-walk oracle; relation check {filtered_ok}; |chosen| <= 4 {capped}; mean |chosen| {:.2}",
            chosen_total as f64 / 200.0
        ),
    ))
}

// 9 -------------------------------------------------------------------------

fn expansion(shared: &Shared) -> Outcome {
    let threshold = 10.0f32;
    let vectors: Vec<Vec<f32>> = shared.base.iter().map(|v| v.iter().map(|&x| x as f32).collect()).collect();
    let names: Vec<ScenarioId> = shared.scenarios.iter().map(|s| s.scenario_id.clone()).collect();
    let flat = build_index(IndexSpec::Flat, &names, &vectors, &BuildOptions::default()).map_err(err)?;
    let hnsw = build_index(IndexSpec::Hnsw { m: 32 }, &names, &vectors, &BuildOptions::default()).map_err(err)?;
    let sp = SearchParams {
        ef_search: Some(128),
        nprobe: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut agree, mut novel, mut self_hit, mut untouched) = (0, 0, 0, 0);
    for t in 0..100 {
        let anchor = rng.random_range(0..vectors.len());
        let radius: f32 = rng.random_range(0.0..25.0);
        let dir: Vec<f32> = (0..vectors[0].len()).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f32>().sqrt();
        let v: Vec<f32> = vectors[anchor].iter().zip(&dir).map(|(a, d)| a + radius * d / norm).collect();
        let mut prompt = shared.scenarios[anchor].clone();
        prompt.scenario_id = format!("prompt{t}").into();

        let mut store = ScenarioStore::in_memory(shared.scenarios.clone()).map_err(err)?;
        let shared_index = SharedIndex::new(AnyIndex::from_bytes(&hnsw.to_bytes()).map_err(err)?);
        let r = shared_index.search_batch(&[v.as_slice()], 4, &sp).map_err(err)?.remove(0);
        let added = shared_index.expand(&mut store, &prompt, &v, &r, threshold).map_err(err)?;
        let oracle = flat.search(&v, 1, &sp).map_err(err)?.distances[0] > threshold;
        agree += usize::from(added == oracle);
        if added {
            novel += 1;
            let again = shared_index.search_batch(&[v.as_slice()], 1, &sp).map_err(err)?.remove(0);
            if store.contains(&prompt.scenario_id)
                && again.neighbor_ids[0] == prompt.scenario_id
                && again.distances[0] == 0.0
            {
                self_hit += 1;
            }
        } else if store.len() == names.len() && shared_index.len() == names.len() {
            untouched += 1;
        }
    }
    let in_dist = 100 - novel;
    Ok((
        agree == 100 && self_hit == novel && untouched == in_dist && novel > 0 && in_dist > 0,
        format!(
            "{agree}/100 decisions match Flat; {novel} appended ({self_hit} self-retrieved at 0); {in_dist} in-distribution ({untouched} left the store unchanged)"
        ),
    ))
}

// 10 ------------------------------------------------------------------------

fn quintic_planner() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut state = || {
        AxisState::new(
            rng.random_range(-100.0..100.0),
            rng.random_range(-30.0..30.0),
            rng.random_range(-5.0..5.0),
        )
    };
    let mut worst: f64 = 0.0;
    let mut horizons = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let start = [state(), state()];
        let end = [state(), state()];
        let h = horizons.random_range(0.5..10.0);
        let q = quintic(start, end, h).map_err(err)?;
        for axis in 0..2 {
            let c = if axis == 0 { &q.x } else { &q.y };
            for (t, want) in [(0.0, start[axis]), (h, end[axis])] {
                let got = eval_axis(c, t);
                worst = worst.max((got.p - want.p).abs()).max((got.v - want.v).abs()).max((got.a - want.a).abs());
            }
        }
    }
    let gt: Vec<(f64, f64, f64)> = (0..=6).map(|k| (k as f64 * 0.5, 10.0 + 3.0 * k as f64, -0.7 * k as f64)).collect();
    let plan = PlanResponse {
        waypoints: gt.clone(),
        warnings: Vec::new(),
        raw: String::new(),
    };
    let zero = ade(&plan, &gt, 3.0, 0.5).map_err(err)?;
    Ok((
        worst <= 1e-9 && zero == 0.0,
        format!("max endpoint error over 1000 sets {worst:.1e}; ADE(plan = ground truth) = {zero}"),
    ))
}

// 11 ------------------------------------------------------------------------

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_driving-rag"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(err)?;
    if !out.status.success() {
        return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(())
}

fn pipeline(dir: &Path) -> Result<(Vec<u8>, Vec<u8>), String> {
    run_cli(dir, &["gen", "--count", "200", "--duration", "5", "--out", "s.jsonl"])?;
    let mut experts = Vec::new();
    for t in ["following", "merge", "crossing"] {
        let (d, m, v, s, i) = (
            format!("d_{t}.bin"),
            format!("m_{t}.bin"),
            format!("v_{t}.json"),
            format!("t_{t}.json"),
            format!("i_{t}.bin"),
        );
        run_cli(dir, &["dist", "--store", "s.jsonl", "--interaction", t, "--out", &d])?;
        // About 67 scenarios per type leave too few positive eigenvalues for d=64.
        run_cli(dir, &["fit-embed", "--matrix", &d, "--dim", "16", "--interaction", t, "--out", &m, "--vectors", &v])?;
        run_cli(dir, &["tsd", "--vectors", &v, "--out", &s])?;
        run_cli(dir, &["build", "--vectors", &v, "--tsd", &s, "--out", &i])?;
        experts.push(format!("{m}:{i}"));
    }
    let mut args = vec!["rag-dry-run", "--store", "s.jsonl", "--scenario", "syn1-00008"];
    for e in &experts {
        args.extend(["--expert", e.as_str()]);
    }
    args.extend(["--out", "bundle.txt", "--selection-out", "selection.json"]);
    run_cli(dir, &args)?;
    Ok((
        std::fs::read(dir.join("bundle.txt")).map_err(err)?,
        std::fs::read(dir.join("selection.json")).map_err(err)?,
    ))
}

fn end_to_end() -> Outcome {
    let t = Instant::now();
    let (a, b) = (tempfile::tempdir().map_err(err)?, tempfile::tempdir().map_err(err)?);
    let first = pipeline(a.path())?;
    let one = t.elapsed().as_secs_f64();
    let second = pipeline(b.path())?;
    let secs = t.elapsed().as_secs_f64();
    let cases = String::from_utf8_lossy(&first.0).matches("## Case").count();
    Ok((
        first == second && one < 300.0,
        format!(
            "bundle ({} bytes, {cases} reference cases) and selection identical: {}; one run {one:.1} s, both {secs:.1} s",
            first.0.len(),
            first == second
        ),
    ))
}

// ---------------------------------------------------------------------------

fn main() {
    let only: Option<HashSet<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |c: usize| only.as_ref().is_none_or(|o| o.contains(&c));
    let needs_shared = [1, 2, 3, 4, 6, 7, 9].iter().any(|&c| wanted(c));
    let mut shared = if needs_shared { Some(Shared::build()) } else { None };

    let mut failed = 0;
    let mut record = |c: usize, name: &str, f: &mut dyn FnMut() -> Outcome| -> Option<bool> {
        if !wanted(c) {
            return None;
        }
        let t = Instant::now();
        let outcome = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(o) => o,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into())),
        };
        let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {c:>2} {name}: {detail} [{:.1} s]",
            if ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
        Some(ok)
    };
    let mut with_shared = |f: &mut dyn FnMut(&mut Shared) -> Outcome| -> Outcome {
        match shared.as_mut().expect("shared data requested") {
            Ok(s) => f(s),
            Err(e) => Err(format!("shared corpus: {e}")),
        }
    };

    record(1, "TSD size law", &mut || with_shared(&mut |s| tsd_size_law(s)));
    record(2, "accuracy neutrality", &mut || with_shared(&mut accuracy_neutrality));
    record(3, "speedup direction", &mut || with_shared(&mut speedup_direction));
    if wanted(4) || wanted(6) {
        // Criterion 4 reuses the fidelity result, so 6 is evaluated first.
        let mut r6 = || with_shared(&mut |s| embedding_fidelity(s));
        let six = r6();
        let fidelity = Some(matches!(six, Ok((true, _))));
        record(4, "dimension sweep", &mut || dimension_sweep(fidelity));
        record(5, "exactness oracles", &mut exactness);
        record(6, "embedding fidelity", &mut || six.clone());
    } else {
        record(5, "exactness oracles", &mut exactness);
    }
    record(7, "Graph-DTW correctness", &mut || with_shared(&mut |s| graph_dtw_correctness(s)));
    record(8, "reorganization conformance", &mut reorg_conformance);
    record(9, "expansion", &mut || with_shared(&mut |s| expansion(s)));
    record(10, "quintic planner", &mut quintic_planner);
    record(11, "end-to-end determinism", &mut end_to_end);

    if failed > 0 {
        println!("{failed} criteria failed");
        if std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
        return;
    }
    println!("all criteria passed");
}
