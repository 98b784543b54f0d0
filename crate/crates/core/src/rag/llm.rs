use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::render::PromptBundle;
use crate::error::{Error, Result};
use crate::scenario::AtomScenario;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanResponse {
    /// `(t, x, y)` with strictly increasing `t`.
    pub waypoints: Vec<(f64, f64, f64)>,
    pub warnings: Vec<String>,
    pub raw: String,
}

fn parse_error(message: impl Into<String>, raw: &str) -> Error {
    Error::Parse {
        message: message.into(),
        raw: raw.to_owned(),
    }
}

/// Parses the first fenced block as `t,x,y` lines and collects `WARNING:`
/// lines outside it. A `t,x,y` header line inside the block is allowed.
pub fn parse_response(raw: &str) -> Result<PlanResponse> {
    let mut waypoints = Vec::new();
    let mut warnings = Vec::new();
    let mut fence = 0u8; // 0 before, 1 inside, 2 after the first block
    for (n, line) in raw.lines().enumerate() {
        let line = line.trim();
        if line.starts_with("```") {
            fence = match fence {
                0 => 1,
                1 => 2,
                // Later blocks are ignored but their contents are not warnings.
                _ => 3,
            };
            continue;
        }
        if fence == 3 {
            continue;
        }
        if fence == 1 {
            if line.is_empty() || line.eq_ignore_ascii_case("t,x,y") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let nums: Option<Vec<f64>> = fields.iter().map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite())).collect();
            match nums.as_deref() {
                Some([t, x, y]) => {
                    if waypoints.last().is_some_and(|&(prev, _, _)| *t <= prev) {
                        return Err(parse_error(format!("line {}: time {t} does not increase", n + 1), raw));
                    }
                    waypoints.push((*t, *x, *y));
                }
                _ => return Err(parse_error(format!("line {}: expected t,x,y but got {line:?}", n + 1), raw)),
            }
        } else if let Some(w) = line.strip_prefix("WARNING:") {
            warnings.push(w.trim().to_owned());
        }
    }
    match fence {
        0 => return Err(parse_error("no fenced waypoint block", raw)),
        1 => return Err(parse_error("unterminated fenced block", raw)),
        _ => {}
    }
    if waypoints.is_empty() {
        return Err(parse_error("fenced block has no waypoints", raw));
    }
    Ok(PlanResponse {
        waypoints,
        warnings,
        raw: raw.to_owned(),
    })
}

pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String>;
}

impl<C: LlmClient + ?Sized> LlmClient for Box<C> {
    fn complete(&self, prompt: &str) -> Result<String> {
        (**self).complete(prompt)
    }
}

pub fn llm_plan(bundle: &PromptBundle, client: &dyn LlmClient) -> Result<PlanResponse> {
    parse_response(&client.complete(&bundle.render())?)
}

/// Answers every prompt with the ego's constant-velocity extrapolation.
#[derive(Clone, Debug, PartialEq)]
pub struct MockClient {
    pub start: [f64; 2],
    pub velocity: [f64; 2],
    pub horizon: f64,
    pub dt: f64,
}

impl MockClient {
    pub fn for_scenario(s: &AtomScenario, horizon: f64, dt: f64) -> Result<Self> {
        let ego = s
            .ego_at(0)
            .ok_or_else(|| Error::Input(format!("ego {} missing from first frame", s.ego_id)))?;
        Ok(Self {
            start: ego.position,
            velocity: ego.velocity,
            horizon,
            dt,
        })
    }

    pub fn response_text(&self) -> String {
        let steps = (self.horizon / self.dt).round() as usize;
        let mut out = String::from("Keeping the current speed and lane.\n```\nt,x,y\n");
        for k in 0..=steps {
            let t = k as f64 * self.dt;
            out.push_str(&format!(
                "{t:.2},{:.3},{:.3}\n",
                self.start[0] + self.velocity[0] * t,
                self.start[1] + self.velocity[1] * t
            ));
        }
        out.push_str("```\nWARNING: mock planner ignores surrounding vehicles\n");
        out
    }
}

impl LlmClient for MockClient {
    fn complete(&self, _prompt: &str) -> Result<String> {
        Ok(self.response_text())
    }
}

/// OpenAI-style chat-completions endpoint.
#[derive(Clone, Debug)]
pub struct HttpClient {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpClient {
    pub const ENV_URL: &'static str = "DRIVING_RAG_LLM_URL";
    pub const ENV_MODEL: &'static str = "DRIVING_RAG_LLM_MODEL";
    pub const ENV_KEY: &'static str = "DRIVING_RAG_LLM_API_KEY";

    pub fn from_env() -> Result<Self> {
        let endpoint = std::env::var(Self::ENV_URL).map_err(|_| Error::Config(format!("{} is not set", Self::ENV_URL)))?;
        let model = std::env::var(Self::ENV_MODEL).map_err(|_| Error::Config(format!("{} is not set", Self::ENV_MODEL)))?;
        Ok(Self {
            endpoint,
            model,
            api_key: std::env::var(Self::ENV_KEY).ok(),
            timeout: Duration::from_secs(120),
        })
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatContent,
}

#[derive(Deserialize)]
struct ChatContent {
    content: String,
}

impl LlmClient for HttpClient {
    fn complete(&self, prompt: &str) -> Result<String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let body = ChatRequest {
            model: &self.model,
            messages: vec![ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: 0.0,
        };
        let mut req = client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Error::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Error::Transport(e.to_string()))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Error::Transport(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(Error::Config(format!("HTTP {status}: {text}")));
        }
        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| parse_error(e.to_string(), &text))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| parse_error("response has no choices", &text))
    }
}

/// One logged exchange; fixture files hold one per line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub prompt_sha256: String,
    pub prompt: String,
    pub response: String,
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Forwards to `inner` and appends every exchange to a fixture file.
pub struct RecordingClient<C> {
    inner: C,
    path: PathBuf,
    lock: Mutex<()>,
}

impl<C: LlmClient> RecordingClient<C> {
    pub fn new(inner: C, path: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            path: path.into(),
            lock: Mutex::new(()),
        }
    }
}

impl<C: LlmClient> LlmClient for RecordingClient<C> {
    fn complete(&self, prompt: &str) -> Result<String> {
        let response = self.inner.complete(prompt)?;
        let line = serde_json::to_string(&Exchange {
            prompt_sha256: prompt_hash(prompt),
            prompt: prompt.to_owned(),
            response: response.clone(),
        })?;
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        writeln!(f, "{line}")?;
        Ok(response)
    }
}

/// Serves responses from a fixture file, keyed by prompt hash.
#[derive(Clone, Debug)]
pub struct ReplayClient {
    responses: HashMap<String, String>,
}

impl ReplayClient {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut responses = HashMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let e: Exchange = serde_json::from_str(line)?;
            responses.insert(e.prompt_sha256, e.response);
        }
        Ok(Self { responses })
    }
}

impl LlmClient for ReplayClient {
    fn complete(&self, prompt: &str) -> Result<String> {
        self.responses
            .get(&prompt_hash(prompt))
            .cloned()
            .ok_or_else(|| Error::Input(format!("no recorded response for prompt {}", prompt_hash(prompt))))
    }
}

fn interpolate(track: &[(f64, f64, f64)], t: f64) -> [f64; 2] {
    let k = track.partition_point(|p| p.0 < t);
    if k == 0 {
        return [track[0].1, track[0].2];
    }
    if k == track.len() {
        let l = track[k - 1];
        return [l.1, l.2];
    }
    let (a, b) = (track[k - 1], track[k]);
    let w = (t - a.0) / (b.0 - a.0);
    [a.1 + w * (b.1 - a.1), a.2 + w * (b.2 - a.2)]
}

/// Mean displacement over ticks `0, dt, …, horizon`, tracks linearly interpolated.
/// Times in both tracks are seconds from the plan start.
pub fn ade(plan: &PlanResponse, ground_truth: &[(f64, f64, f64)], horizon: f64, dt: f64) -> Result<f64> {
    let covers = |tr: &[(f64, f64, f64)]| {
        tr.first().is_some_and(|f| f.0 <= 1e-9) && tr.last().is_some_and(|l| l.0 >= horizon - 1e-9)
    };
    if !covers(&plan.waypoints) || !covers(ground_truth) {
        return Err(Error::Input(format!("plan and ground truth must both cover [0, {horizon}] s")));
    }
    if ground_truth.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::Input("ground-truth times must increase".into()));
    }
    let steps = (horizon / dt).round() as usize;
    let mut sum = 0.0;
    for k in 0..=steps {
        let t = (k as f64 * dt).min(horizon);
        let (p, g) = (interpolate(&plan.waypoints, t), interpolate(ground_truth, t));
        sum += (p[0] - g[0]).hypot(p[1] - g[1]);
    }
    Ok(sum / (steps + 1) as f64)
}
