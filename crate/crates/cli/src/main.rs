use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use driving_rag::bench::{bench_search, expand_corpus, sweep, write_sweep_csv, BenchCorpus, BenchMethod, BenchParams};
use driving_rag::density::{estimate_density, select_tsd, DensityConfig, QuantileOrientation, TsdConfig, TsdSubset};
use driving_rag::embed::{embed_batch, fit, select_landmarks, EmbeddingModel, GraphDtwLandmarks, VectorTable};
use driving_rag::graph_dtw::{pairwise_matrix, DistanceMatrix, GraphDtwConfig};
use driving_rag::index::{build_index, AnyIndex, BuildOptions, IndexSpec, SearchParams};
use driving_rag::rag::{
    llm_plan, run_rag, Engine, Expert, HttpClient, LlmClient, MockClient, PromptTemplate, RagParams, RecordingClient,
    ReplayClient,
};
use driving_rag::reorg::SignatureMode;
use driving_rag::scenario::{
    generate_synthetic, ingest_csv, read_jsonl, write_jsonl, AtomScenario, CsvSchema, ScenarioId, ScenarioStore, Slicing,
    SynthConfig, Template,
};
use driving_rag::{Error, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "driving-rag", version, about = "Driving-scenario retrieval for retrieval-augmented planning")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Orientation {
    LowTail,
    Literal,
}

impl From<Orientation> for QuantileOrientation {
    fn from(o: Orientation) -> Self {
        match o {
            Orientation::LowTail => QuantileOrientation::LowTail,
            Orientation::Literal => QuantileOrientation::Literal,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario store.
    Gen {
        #[arg(long, default_value_t = 200)]
        count: usize,
        /// Scenario length in seconds.
        #[arg(long, default_value_t = 5.0)]
        duration: f64,
        /// following, merge or crossing; cycles through all when omitted.
        #[arg(long)]
        template: Option<String>,
        #[arg(long, default_value_t = 3)]
        min_vehicles: usize,
        #[arg(long, default_value_t = 6)]
        max_vehicles: usize,
        #[arg(long, default_value_t = 3)]
        lanes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Slice a trajectory CSV into a scenario store.
    Ingest {
        #[arg(long)]
        csv: PathBuf,
        /// JSON column mapping; defaults to time,id,x,y,vx,vy,heading.
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, default_value_t = 5.0)]
        window: f64,
        #[arg(long, default_value_t = 2.5)]
        stride: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pairwise Graph-DTW matrix over a store.
    Dist {
        #[arg(long)]
        store: PathBuf,
        /// Only scenarios of this interaction type.
        #[arg(long)]
        interaction: Option<String>,
        /// JSON Graph-DTW configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a landmark MDS embedding from a distance matrix.
    FitEmbed {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        /// Landmark count chosen by farthest-point traversal; all rows when omitted.
        #[arg(long)]
        landmarks: Option<usize>,
        /// Interaction type served by this model.
        #[arg(long)]
        interaction: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Also write vectors for every matrix row.
        #[arg(long)]
        vectors: Option<PathBuf>,
    },
    /// Embed scenarios out of sample with a fitted model.
    Embed {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Store holding the landmark scenarios; defaults to --store.
        #[arg(long)]
        landmark_store: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Density-based subset selection.
    Tsd {
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long, default_value_t = 90.0)]
        alpha: f64,
        #[arg(long, default_value_t = 5.0)]
        beta: f64,
        #[arg(long, value_enum, default_value_t = Orientation::LowTail)]
        orientation: Orientation,
        /// Kernel bandwidth; Scott's rule when omitted.
        #[arg(long)]
        bandwidth: Option<f64>,
        #[arg(long, default_value_t = driving_rag::density::DEFAULT_REFERENCE_SIZE)]
        reference_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build and save a vector index.
    Build {
        #[arg(long)]
        vectors: PathBuf,
        /// flat, ivf<clusters>, pq<chunks> or hnsw<M>.
        #[arg(long, default_value = "hnsw32")]
        spec: IndexSpec,
        /// Index only the ids retained in this subset.
        #[arg(long)]
        tsd: Option<PathBuf>,
        #[arg(long, default_value_t = driving_rag::index::DEFAULT_EF_CONSTRUCTION)]
        ef_construction: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Top-K search for a table of query vectors.
    Search {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long)]
        ef_search: Option<usize>,
        #[arg(long)]
        nprobe: Option<usize>,
        /// JSON lines; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grow a vector table by density-weighted interpolation.
    ExpandDb {
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        target_n: usize,
        #[arg(long)]
        out: PathBuf,
        /// JSON list of (i, j, lambda) per generated vector.
        #[arg(long)]
        parents: Option<PathBuf>,
    },
    /// Time index builds and searches on an expanded corpus.
    Bench {
        #[arg(long)]
        vectors: PathBuf,
        /// Indexed corpus size after expansion.
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value = "flat,ivf100,hnsw32,hnsw32-tsd", value_delimiter = ',')]
        methods: Vec<BenchMethod>,
        /// Query vectors; interpolated held-out points when omitted.
        #[arg(long)]
        queries: Option<PathBuf>,
        #[command(flatten)]
        opts: BenchOpts,
        /// JSON report; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid over alpha and beta for HNSW32 on the density subset.
    Sweep {
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value = "50,70,90,95", value_delimiter = ',')]
        alphas: Vec<f64>,
        #[arg(long, default_value = "1,5,10,20", value_delimiter = ',')]
        betas: Vec<f64>,
        #[arg(long)]
        queries: Option<PathBuf>,
        #[command(flatten)]
        opts: BenchOpts,
        /// CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assemble the planning prompt for one scenario without calling a remote model.
    RagDryRun {
        #[arg(long)]
        store: PathBuf,
        /// MODEL:INDEX pair per interaction type; repeatable.
        #[arg(long = "expert", required = true)]
        experts: Vec<String>,
        /// Id of the current scenario.
        #[arg(long)]
        scenario: String,
        /// Store holding the current scenario; defaults to --store.
        #[arg(long)]
        current: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 4)]
        m: usize,
        /// Expansion distance threshold.
        #[arg(long, default_value_t = 10.0)]
        expand_threshold: f32,
        #[arg(long)]
        no_expand: bool,
        #[arg(long, default_value_t = 128)]
        ef_search: usize,
        #[arg(long)]
        majority_signature: bool,
        /// JSON prompt template.
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Prompt text; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Selection trace as JSON.
        #[arg(long)]
        selection_out: Option<PathBuf>,
        /// Also plan with mock, http, or replay:<fixture>.
        #[arg(long)]
        llm: Option<String>,
        /// Append exchanges to this fixture file.
        #[arg(long)]
        record: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct BenchOpts {
    /// Number of generated queries when no query file is given.
    #[arg(long, default_value_t = 500)]
    query_count: usize,
    #[arg(long, default_value_t = 500)]
    additions: usize,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 500)]
    batch_size: usize,
    #[arg(long, default_value_t = 5)]
    batches: usize,
    #[arg(long, default_value_t = 3)]
    warmup: usize,
    #[arg(long)]
    ef_search: Option<usize>,
    #[arg(long)]
    nprobe: Option<usize>,
    #[arg(long, default_value_t = driving_rag::index::DEFAULT_EF_CONSTRUCTION)]
    ef_construction: usize,
    #[arg(long, default_value_t = 90.0)]
    alpha: f64,
    #[arg(long, default_value_t = 5.0)]
    beta: f64,
}

impl BenchOpts {
    fn params(&self, seed: u64, threads: Option<usize>) -> BenchParams {
        BenchParams {
            k: self.k,
            batch_size: self.batch_size,
            batches: self.batches,
            warmup: self.warmup,
            search: SearchParams {
                ef_search: self.ef_search,
                nprobe: self.nprobe,
            },
            build: BuildOptions {
                ef_construction: self.ef_construction,
                seed,
            },
            tsd: TsdConfig {
                alpha_pct: self.alpha,
                beta_pct: self.beta,
                seed,
                ..TsdConfig::default()
            },
            density: DensityConfig {
                seed,
                ..DensityConfig::default()
            },
            workers: threads,
        }
    }

    fn corpus(&self, base: &VectorTable, n: usize, queries: Option<&Path>, seed: u64) -> Result<BenchCorpus> {
        let generated = if queries.is_some() { 0 } else { self.query_count };
        let mut corpus = BenchCorpus::from_base(&base.vectors, n, generated, self.additions, seed)?;
        if let Some(q) = queries {
            corpus.queries = VectorTable::load(q)?.f32_vectors();
        }
        Ok(corpus)
    }
}

fn graph_config(path: Option<&Path>) -> Result<GraphDtwConfig> {
    match path {
        Some(p) => Ok(serde_json::from_slice(&fs::read(p)?)?),
        None => Ok(GraphDtwConfig::default()),
    }
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct SearchLine<'a> {
    query: &'a ScenarioId,
    neighbors: &'a [ScenarioId],
    distances: &'a [f32],
    truncated: bool,
}

fn client_for(spec: &str, current: &AtomScenario, params: &RagParams) -> Result<Box<dyn LlmClient>> {
    if spec == "mock" {
        return Ok(Box::new(MockClient::for_scenario(current, params.plan_horizon, params.plan_dt)?));
    }
    if spec == "http" {
        return Ok(Box::new(HttpClient::from_env()?));
    }
    if let Some(path) = spec.strip_prefix("replay:") {
        return Ok(Box::new(ReplayClient::load(path)?));
    }
    Err(Error::Config(format!("unknown LLM client {spec:?}; use mock, http or replay:<file>")))
}

fn load_expert(pair: &str, scenarios: &[AtomScenario], cfg: GraphDtwConfig) -> Result<Expert> {
    let (model_path, index_path) = pair
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("expert {pair:?} must be MODEL:INDEX")))?;
    let model = EmbeddingModel::load(model_path)?;
    let index = AnyIndex::load(index_path)?;
    let mut kind = model.interaction_type.clone();
    if kind.is_empty() {
        // Untagged model: take the type shared by its landmarks.
        let kinds: BTreeSet<&str> = scenarios
            .iter()
            .filter(|s| model.landmarks.contains(&s.scenario_id))
            .map(|s| s.interaction_type.as_str())
            .collect();
        if kinds.len() != 1 {
            return Err(Error::Config(format!(
                "model {model_path} has no interaction type and its landmarks span {kinds:?}"
            )));
        }
        kind = kinds.into_iter().next().expect("one kind").to_owned();
    }
    let own: Vec<AtomScenario> = scenarios.iter().filter(|s| s.interaction_type == kind).cloned().collect();
    Expert::new(kind, model, ScenarioStore::in_memory(own)?, index, cfg)
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    let started = Instant::now();
    match cli.command {
        Command::Gen {
            count,
            duration,
            template,
            min_vehicles,
            max_vehicles,
            lanes,
            out,
        } => {
            let template = match template {
                Some(t) => Some(Template::parse(&t).ok_or_else(|| Error::Config(format!("unknown template {t:?}")))?),
                None => None,
            };
            let scenarios = generate_synthetic(&SynthConfig {
                lanes,
                vehicles: (min_vehicles, max_vehicles),
                duration,
                count,
                template,
                seed,
            });
            write_jsonl(&out, &scenarios)?;
            eprintln!("wrote {} scenarios to {}", scenarios.len(), out.display());
        }
        Command::Ingest {
            csv,
            schema,
            window,
            stride,
            out,
        } => {
            let schema: CsvSchema = match schema {
                Some(p) => serde_json::from_slice(&fs::read(p)?)?,
                None => CsvSchema::default(),
            };
            let scenarios = ingest_csv(&csv, &schema, &Slicing { window, stride })?;
            write_jsonl(&out, &scenarios)?;
            eprintln!("wrote {} scenarios to {}", scenarios.len(), out.display());
        }
        Command::Dist {
            store,
            interaction,
            config,
            out,
        } => {
            let cfg = graph_config(config.as_deref())?;
            let mut scenarios = read_jsonl(&store)?;
            if let Some(kind) = &interaction {
                scenarios.retain(|s| &s.interaction_type == kind);
            }
            let d = pairwise_matrix(&scenarios, &cfg)?;
            d.save(&out, &cfg.hash())?;
            eprintln!(
                "{}x{} matrix in {:.1} s -> {}",
                d.n(),
                d.n(),
                started.elapsed().as_secs_f64(),
                out.display()
            );
        }
        Command::FitEmbed {
            matrix,
            dim,
            landmarks,
            interaction,
            out,
            vectors,
        } => {
            let (d, _) = DistanceMatrix::load(&matrix)?;
            let n = d.n();
            let chosen: Vec<usize> = match landmarks {
                Some(l) if l < n => select_landmarks(n, l, seed, |i, j| d.get(i, j)),
                _ => (0..n).collect(),
            };
            let mut model = fit(&d.select(&chosen), dim)?;
            model.interaction_type = interaction.unwrap_or_default();
            model.save(&out)?;
            if let Some(vpath) = vectors {
                let mut rows = Vec::with_capacity(n);
                for i in 0..n {
                    match chosen.iter().position(|&c| c == i) {
                        Some(k) => rows.push(model.landmark_vector(k).0),
                        None => {
                            let delta: Vec<f64> = chosen.iter().map(|&c| d.get(i, c)).collect();
                            rows.push(model.embed_distances(&delta)?.0);
                        }
                    }
                }
                VectorTable::new(d.ids.clone(), rows)?.save(&vpath)?;
            }
            eprintln!(
                "fitted d={dim} on {} landmarks (scale {:.4}) -> {}",
                model.landmark_count(),
                model.scale,
                out.display()
            );
        }
        Command::Embed {
            store,
            model,
            landmark_store,
            config,
            out,
        } => {
            let cfg = graph_config(config.as_deref())?;
            let model = EmbeddingModel::load(&model)?;
            let mut scenarios = read_jsonl(&store)?;
            if !model.interaction_type.is_empty() {
                scenarios.retain(|s| s.interaction_type == model.interaction_type);
            }
            let pool = match landmark_store {
                Some(p) => read_jsonl(p)?,
                None => scenarios.clone(),
            };
            let lm_store = ScenarioStore::in_memory(pool)?;
            let lms = model
                .landmarks
                .iter()
                .map(|id| {
                    lm_store
                        .get(id)
                        .cloned()
                        .ok_or_else(|| Error::Data(format!("landmark {id} not found")))
                })
                .collect::<Result<Vec<_>>>()?;
            let landmarks = GraphDtwLandmarks::new(&lms, cfg)?;
            let v = embed_batch(&scenarios, &model, &landmarks)?;
            let table = VectorTable::new(
                scenarios.iter().map(|s| s.scenario_id.clone()).collect(),
                v.into_iter().map(|e| e.0).collect(),
            )?;
            table.save(&out)?;
            eprintln!("embedded {} scenarios -> {}", table.ids.len(), out.display());
        }
        Command::Tsd {
            vectors,
            alpha,
            beta,
            orientation,
            bandwidth,
            reference_size,
            out,
        } => {
            let table = VectorTable::load(&vectors)?;
            let est = estimate_density(
                &table.ids,
                &table.vectors,
                &DensityConfig {
                    bandwidth,
                    reference_size,
                    seed,
                },
            )?;
            let subset = select_tsd(
                &est,
                &TsdConfig {
                    alpha_pct: alpha,
                    beta_pct: beta,
                    seed,
                    orientation: orientation.into(),
                },
            )?;
            subset.save(&out)?;
            eprintln!(
                "kept {} of {} (tail {}, sampled {}), bandwidth {:.4} -> {}",
                subset.len(),
                table.ids.len(),
                subset.low_count,
                subset.sampled_count,
                est.bandwidth,
                out.display()
            );
        }
        Command::Build {
            vectors,
            spec,
            tsd,
            ef_construction,
            out,
        } => {
            let table = VectorTable::load(&vectors)?;
            let (ids, vecs) = match tsd {
                Some(p) => {
                    let keep: BTreeSet<ScenarioId> = TsdSubset::load(p)?.retained_ids.into_iter().collect();
                    let idx: Vec<usize> = (0..table.ids.len()).filter(|&k| keep.contains(&table.ids[k])).collect();
                    if idx.len() != keep.len() {
                        return Err(Error::Data("subset names ids missing from the vector table".into()));
                    }
                    let f = table.f32_vectors();
                    (
                        idx.iter().map(|&k| table.ids[k].clone()).collect::<Vec<_>>(),
                        idx.iter().map(|&k| f[k].clone()).collect::<Vec<_>>(),
                    )
                }
                None => (table.ids.clone(), table.f32_vectors()),
            };
            let index = build_index(spec, &ids, &vecs, &BuildOptions { ef_construction, seed })?;
            index.save(&out)?;
            eprintln!(
                "built {spec} over {} vectors in {:.2} s -> {}",
                index.len(),
                started.elapsed().as_secs_f64(),
                out.display()
            );
        }
        Command::Search {
            index,
            queries,
            k,
            ef_search,
            nprobe,
            out,
        } => {
            let index = AnyIndex::load(&index)?;
            let q = VectorTable::load(&queries)?;
            let results = index.search_batch(&q.f32_vectors(), k, &SearchParams { ef_search, nprobe })?;
            let mut text = String::new();
            for (id, r) in q.ids.iter().zip(&results) {
                text.push_str(&serde_json::to_string(&SearchLine {
                    query: id,
                    neighbors: &r.neighbor_ids,
                    distances: &r.distances,
                    truncated: r.truncated,
                })?);
                text.push('\n');
            }
            write_output(out.as_deref(), text.as_bytes())?;
        }
        Command::ExpandDb {
            vectors,
            target_n,
            out,
            parents,
        } => {
            let table = VectorTable::load(&vectors)?;
            let grown = expand_corpus(&table.vectors, target_n, seed)?;
            let mut ids = table.ids.clone();
            ids.extend((table.ids.len()..target_n).map(|k| ScenarioId::from(format!("x{k:07}"))));
            VectorTable::new(ids, grown.vectors)?.save(&out)?;
            if let Some(p) = parents {
                let generated: Vec<_> = grown.parents.iter().flatten().collect();
                fs::write(p, serde_json::to_vec(&generated)?)?;
            }
            eprintln!("expanded {} -> {target_n} vectors -> {}", table.ids.len(), out.display());
        }
        Command::Bench {
            vectors,
            n,
            methods,
            queries,
            opts,
            out,
        } => {
            let base = VectorTable::load(&vectors)?;
            let corpus = opts.corpus(&base, n, queries.as_deref(), seed)?;
            let reports = bench_search(&corpus, &methods, &opts.params(seed, cli.threads))?;
            for r in &reports {
                eprintln!(
                    "{:<12} indexed {:>7}  build {:>9.1} ms  median batch {:>8.2} ms  add {:>7.1} ms  recall@{} {:.3}  top-1 {:.3} (flat {:.3})",
                    r.method,
                    r.corpus.indexed,
                    r.build_ms,
                    r.median_batch_search_ms,
                    r.add_ms,
                    r.k,
                    r.recall_at_k,
                    r.mean_retrieved_distance,
                    r.oracle_mean_distance
                );
            }
            write_output(out.as_deref(), &serde_json::to_vec_pretty(&reports)?)?;
        }
        Command::Sweep {
            vectors,
            n,
            alphas,
            betas,
            queries,
            opts,
            out,
        } => {
            let base = VectorTable::load(&vectors)?;
            let corpus = opts.corpus(&base, n, queries.as_deref(), seed)?;
            let rows = sweep(&corpus, &alphas, &betas, &opts.params(seed, cli.threads))?;
            let mut buf = Vec::new();
            write_sweep_csv(&rows, &mut buf)?;
            write_output(out.as_deref(), &buf)?;
        }
        Command::RagDryRun {
            store,
            experts,
            scenario,
            current,
            n,
            k,
            m,
            expand_threshold,
            no_expand,
            ef_search,
            majority_signature,
            template,
            config,
            out,
            selection_out,
            llm,
            record,
        } => {
            let cfg = graph_config(config.as_deref())?;
            let scenarios = read_jsonl(&store)?;
            let pool = match &current {
                Some(p) => read_jsonl(p)?,
                None => scenarios.clone(),
            };
            let current = pool
                .iter()
                .find(|s| s.scenario_id.as_str() == scenario)
                .cloned()
                .ok_or_else(|| Error::Input(format!("scenario {scenario} not found")))?;
            let mut engine = Engine::new();
            for pair in &experts {
                engine.insert(load_expert(pair, &scenarios, cfg)?);
            }
            let params = RagParams {
                n,
                k,
                m,
                expand_threshold: (!no_expand).then_some(expand_threshold),
                search: SearchParams {
                    ef_search: Some(ef_search),
                    nprobe: None,
                },
                signature_mode: if majority_signature {
                    SignatureMode::Majority
                } else {
                    SignatureMode::FirstFrame
                },
                template: match template {
                    Some(p) => PromptTemplate::load(p)?,
                    None => PromptTemplate::default(),
                },
                ..RagParams::default()
            };
            let outcome = run_rag(&current, &engine, &params)?;
            write_output(out.as_deref(), outcome.bundle.render().as_bytes())?;
            if let Some(p) = selection_out {
                fs::write(p, outcome.selection.to_json())?;
            }
            eprintln!(
                "{} reference cases, {} dropped, {} prompts added to the in-memory database",
                outcome.selection.chosen.len(),
                outcome.selection.dropped.len(),
                outcome.expanded.len()
            );
            if let Some(spec) = llm {
                let client = client_for(&spec, &current, &params)?;
                let plan = match record {
                    Some(p) => llm_plan(&outcome.bundle, &RecordingClient::new(client, p))?,
                    None => llm_plan(&outcome.bundle, client.as_ref())?,
                };
                eprintln!("plan: {} waypoints", plan.waypoints.len());
                for (t, x, y) in &plan.waypoints {
                    eprintln!("  {t:.2},{x:.3},{y:.3}");
                }
                for w in &plan.warnings {
                    eprintln!("  WARNING: {w}");
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Parse { raw, .. } = &e {
                eprintln!("--- response ---\n{raw}");
            }
            ExitCode::FAILURE
        }
    }
}
