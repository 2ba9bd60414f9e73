//! Benchmark configuration: the JSON file schema, path resolution, and the
//! config digest stamped into every trajectory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use swfbench_core::allocators::PromptVariant;
use swfbench_core::engine::RunConfig;
use swfbench_core::flowbuilder::FeatureSpace;

/// File locations, relative to the working directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub pool: PathBuf,
    pub roster: PathBuf,
    pub flows: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<PathBuf>,
    /// Optional override directory for the prompt text assets; files must
    /// still match the pinned checksums.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_dir: Option<PathBuf>,
}

/// Recipient execution backend; exactly one mode per run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    Cached,
    Synthetic,
    Live {
        endpoint: String,
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_output_tokens: Option<u32>,
    },
}

impl BackendSpec {
    pub fn label(&self) -> &'static str {
        match self {
            BackendSpec::Cached => "cached",
            BackendSpec::Synthetic => "synthetic",
            BackendSpec::Live { .. } => "live",
        }
    }
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_top_k() -> usize {
    3
}

/// One allocator to run; heuristics or an LLM endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case", deny_unknown_fields)]
pub enum AllocatorSpec {
    Random {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tag: Option<String>,
    },
    FairnessOriented {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tag: Option<String>,
    },
    EfficiencyOriented {
        #[serde(default = "default_top_k")]
        k: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tag: Option<String>,
    },
    Hybrid {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tag: Option<String>,
    },
    Llm {
        endpoint: String,
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
        #[serde(default)]
        variant: PromptVariant,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_output_tokens: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tag: Option<String>,
    },
}

impl AllocatorSpec {
    /// The tag trajectories are grouped under; explicit tag wins.
    pub fn tag(&self) -> String {
        match self {
            AllocatorSpec::Random { tag } => tag.clone().unwrap_or_else(|| "random".into()),
            AllocatorSpec::FairnessOriented { tag } => {
                tag.clone().unwrap_or_else(|| "fairness-oriented".into())
            }
            AllocatorSpec::EfficiencyOriented { k, tag } => {
                tag.clone().unwrap_or_else(|| format!("efficiency-top{k}"))
            }
            AllocatorSpec::Hybrid { tag } => tag.clone().unwrap_or_else(|| "hybrid".into()),
            AllocatorSpec::Llm {
                model,
                variant,
                tag,
                ..
            } => tag.clone().unwrap_or_else(|| {
                let mut parts = vec![format!("llm-{model}")];
                match variant.length_mode {
                    swfbench_core::allocators::LengthMode::None => {}
                    swfbench_core::allocators::LengthMode::Concise => parts.push("concise".into()),
                    swfbench_core::allocators::LengthMode::ExtremeShort => {
                        parts.push("extreme-short".into())
                    }
                }
                match variant.influence {
                    swfbench_core::allocators::Influence::None => {}
                    other => parts.push(format!("{other:?}").to_lowercase()),
                }
                parts.join("-")
            }),
        }
    }
}

/// Flow construction parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowBuilderConfig {
    pub k: usize,
    #[serde(default = "default_flow_len")]
    pub flow_len: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub feature_space: FeatureSpace,
}

fn default_flow_len() -> usize {
    50
}

/// HTTP client limits shared by the LLM allocator and the live backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientLimits {
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub initial_backoff_ms: u64,
    #[serde(default = "default_backoff_factor")]
    pub backoff_factor: f64,
    #[serde(default = "default_max_inflight")]
    pub max_inflight: usize,
}

fn default_max_attempts() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    200
}

fn default_backoff_factor() -> f64 {
    2.0
}

fn default_max_inflight() -> usize {
    8
}

impl Default for ClientLimits {
    fn default() -> Self {
        ClientLimits {
            max_attempts: default_max_attempts(),
            initial_backoff_ms: default_backoff_ms(),
            backoff_factor: default_backoff_factor(),
            max_inflight: default_max_inflight(),
        }
    }
}

fn default_workers() -> usize {
    2
}

fn default_batch_id() -> String {
    "batch".into()
}

/// Top-level benchmark configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default = "default_batch_id")]
    pub batch_id: String,
    pub paths: Paths,
    pub backend: BackendSpec,
    pub allocators: Vec<AllocatorSpec>,
    #[serde(default)]
    pub run: RunConfig,
    pub flowbuilder: FlowBuilderConfig,
    #[serde(default)]
    pub client: ClientLimits,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl BenchConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: BenchConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        if config.allocators.is_empty() {
            bail!("config lists no allocators");
        }
        if config.workers == 0 {
            bail!("workers must be at least 1");
        }
        Ok(config)
    }

    /// Resolves every path against the working directory.
    pub fn resolved(&self, workdir: &Path) -> BenchConfig {
        let join = |p: &PathBuf| {
            if p.is_absolute() {
                p.clone()
            } else {
                workdir.join(p)
            }
        };
        let mut resolved = self.clone();
        resolved.paths.pool = join(&self.paths.pool);
        resolved.paths.roster = join(&self.paths.roster);
        resolved.paths.flows = join(&self.paths.flows);
        resolved.paths.output_dir = join(&self.paths.output_dir);
        resolved.paths.cache = self.paths.cache.as_ref().map(&join);
        resolved.paths.synthetic = self.paths.synthetic.as_ref().map(&join);
        resolved.paths.template_dir = self.paths.template_dir.as_ref().map(&join);
        resolved
    }

    /// Digest of the effective configuration and the content of its input
    /// files. Two runs share a digest exactly when nothing that can affect
    /// their trajectories differs (run coordinates aside).
    pub fn digest(&self, workdir: &Path) -> Result<String> {
        let resolved = self.resolved(workdir);
        let mut hasher = Sha256::new();
        #[derive(Serialize)]
        struct DigestView<'a> {
            backend: &'a BackendSpec,
            allocators: &'a [AllocatorSpec],
            run: &'a RunConfig,
            flowbuilder: &'a FlowBuilderConfig,
        }
        let view = DigestView {
            backend: &resolved.backend,
            allocators: &resolved.allocators,
            run: &resolved.run,
            flowbuilder: &resolved.flowbuilder,
        };
        hasher.update(serde_json::to_string(&view).expect("config serializes"));
        for path in [
            Some(&resolved.paths.pool),
            Some(&resolved.paths.roster),
            resolved.paths.cache.as_ref(),
            resolved.paths.synthetic.as_ref(),
        ]
        .into_iter()
        .flatten()
        {
            if path.exists() {
                let bytes = std::fs::read(path)
                    .with_context(|| format!("hashing input {}", path.display()))?;
                hasher.update(&bytes);
            }
        }
        // flows participate when already built
        if resolved.paths.flows.exists() {
            let bytes = std::fs::read(&resolved.paths.flows)?;
            hasher.update(&bytes);
        }
        let digest = hasher.finalize();
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}
