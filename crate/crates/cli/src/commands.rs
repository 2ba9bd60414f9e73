//! Subcommand implementations: validate, build-flows, run, report.

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use swfbench_core::allocators::{Allocator, HeuristicAllocator, LlmAllocator, Strategy};
use swfbench_core::engine::{derive_run_seed, run_flow, EngineError, RunConfig};
use swfbench_core::flowbuilder::{
    assemble_flows, build_orientations, cluster_tasks_with, flows_from_json, flows_to_json,
    FeatureSpace,
};
use swfbench_core::llmclient::{ApiKey, ChatClient, ClientConfig};
use swfbench_core::oracle::{
    load_synthetic_specs, CachedBackend, ExecBackend, LiveBackend, RewardCache, SyntheticAgentSpec,
    SyntheticBackend,
};
use swfbench_core::prompts::{PromptAssets, SCORE_COLUMNS};
use swfbench_core::report::{
    bias_export, leaderboard, leaderboard_markdown, profile_bias, scatter_export, ProfileBias,
};
use swfbench_core::types::{
    load_pool_lenient, load_roster, AgentId, AgentTally, CommunityStats, TaskFlow, TaskSpec,
    Trajectory,
};

use crate::config::{AllocatorSpec, BackendSpec, BenchConfig, ClientLimits};

/// Command failure, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Exit code 1: configuration or input validation failed.
    Validation(String),
    /// Exit code 2: a run or pipeline step aborted at runtime.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(msg) => write!(f, "validation failed: {msg}"),
            CliError::Runtime(msg) => write!(f, "runtime failure: {msg}"),
        }
    }
}

pub struct Ctx {
    pub workdir: PathBuf,
    pub config: BenchConfig,
}

impl Ctx {
    fn digest(&self) -> Result<String, CliError> {
        self.config
            .digest(&self.workdir)
            .map_err(|e| CliError::Runtime(e.to_string()))
    }

    fn assets(&self) -> Result<Arc<PromptAssets>, CliError> {
        let assets = match &self.config.paths.template_dir {
            Some(dir) => PromptAssets::from_dir(dir),
            None => PromptAssets::embedded(),
        }
        .map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(Arc::new(assets))
    }
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

struct Checklist {
    problems: Vec<String>,
}

impl Checklist {
    fn new() -> Self {
        Checklist { problems: vec![] }
    }

    fn ok(&mut self, what: impl AsRef<str>) {
        println!("OK   {}", what.as_ref());
    }

    fn fail(&mut self, what: impl Into<String>) {
        let what = what.into();
        println!("FAIL {what}");
        self.problems.push(what);
    }
}

pub fn cmd_validate(ctx: &Ctx) -> Result<(), CliError> {
    let config = &ctx.config;
    let mut list = Checklist::new();

    // task pool
    let pool = match load_pool_lenient(&config.paths.pool) {
        Ok((tasks, report)) => {
            if report.is_ok() {
                list.ok(format!("pool: {} tasks", tasks.len()));
            } else {
                for violation in &report.violations {
                    list.fail(format!("pool: {violation}"));
                }
            }
            Some(tasks)
        }
        Err(e) => {
            list.fail(format!("pool: {e}"));
            None
        }
    };

    // roster
    let roster = match load_roster(&config.paths.roster) {
        Ok(roster) if roster.len() < 2 => {
            list.fail(format!(
                "roster: needs at least 2 recipients, found {}",
                roster.len()
            ));
            None
        }
        Ok(roster) => {
            list.ok(format!("roster: {} recipients", roster.len()));
            Some(roster)
        }
        Err(e) => {
            list.fail(format!("roster: {e}"));
            None
        }
    };

    // allocator tags must be unique (they key run ids and report groups)
    let mut tags: Vec<String> = config.allocators.iter().map(|a| a.tag()).collect();
    tags.sort();
    for pair in tags.windows(2) {
        if pair[0] == pair[1] {
            list.fail(format!("allocators: duplicate tag {:?}", pair[0]));
        }
    }

    // LLM allocators need the full score table for the system prompt
    let needs_full_scores = config
        .allocators
        .iter()
        .any(|a| matches!(a, AllocatorSpec::Llm { .. }));
    if needs_full_scores {
        if let Some(roster) = &roster {
            for profile in roster {
                for column in SCORE_COLUMNS {
                    if !profile.scores.contains_key(column) {
                        list.fail(format!(
                            "roster: {} is missing the {column} score needed by the LLM prompt",
                            profile.agent_id
                        ));
                    }
                }
            }
        }
        for spec in &config.allocators {
            if let AllocatorSpec::Llm {
                api_key_env: Some(var),
                ..
            } = spec
            {
                if std::env::var(var).is_err() {
                    list.fail(format!("allocators: api key env {var} is not set"));
                }
            }
        }
    }

    // backend inputs
    match &config.backend {
        BackendSpec::Cached => match &config.paths.cache {
            None => list.fail("backend: cached mode needs paths.cache"),
            Some(path) => match RewardCache::load(path) {
                Err(e) => list.fail(format!("cache: {e}")),
                Ok(cache) => {
                    list.ok(format!("cache: {} entries", cache.len()));
                    if let (Some(pool), Some(roster)) = (&pool, &roster) {
                        let ids: Vec<String> = pool.iter().map(|t| t.task_id.clone()).collect();
                        let missing = cache.missing_pairs(&ids, roster);
                        if !missing.is_empty() {
                            for (task, agent) in missing.iter().take(20) {
                                list.fail(format!("cache: missing pair {task}/{agent}"));
                            }
                            if missing.len() > 20 {
                                list.fail(format!(
                                    "cache: ... and {} more missing pairs",
                                    missing.len() - 20
                                ));
                            }
                        }
                    }
                }
            },
        },
        BackendSpec::Synthetic => match &config.paths.synthetic {
            None => list.fail("backend: synthetic mode needs paths.synthetic"),
            Some(path) => match load_synthetic_specs(path) {
                Err(e) => list.fail(format!("synthetic: {e}")),
                Ok(specs) => {
                    list.ok(format!("synthetic: {} agent specs", specs.len()));
                    if let Some(roster) = &roster {
                        for profile in roster {
                            if !specs.iter().any(|s| s.agent_id == profile.agent_id) {
                                list.fail(format!(
                                    "synthetic: no spec for roster agent {}",
                                    profile.agent_id
                                ));
                            }
                        }
                    }
                }
            },
        },
        BackendSpec::Live {
            endpoint,
            api_key_env,
            ..
        } => {
            if endpoint.is_empty() {
                list.fail("backend: live endpoint is empty");
            } else {
                list.ok(format!("live endpoint: {endpoint}"));
            }
            if let Some(var) = api_key_env {
                if std::env::var(var).is_err() {
                    list.fail(format!("backend: api key env {var} is not set"));
                }
            }
        }
    }

    // flows, when already built
    if config.paths.flows.exists() {
        match std::fs::read_to_string(&config.paths.flows)
            .map_err(|e| e.to_string())
            .and_then(|text| flows_from_json(&text).map_err(|e| e.to_string()))
        {
            Err(e) => list.fail(format!("flows: {e}")),
            Ok(flows) => {
                let mut fine = true;
                for flow in &flows {
                    if let Err(e) = flow.validate(config.flowbuilder.flow_len) {
                        list.fail(format!("flows: {e}"));
                        fine = false;
                    }
                }
                if let Some(pool) = &pool {
                    let ids: std::collections::BTreeSet<&str> =
                        pool.iter().map(|t| t.task_id.as_str()).collect();
                    for flow in &flows {
                        for task_id in &flow.task_ids {
                            if !ids.contains(task_id.as_str()) {
                                list.fail(format!(
                                    "flows: {} references unknown task {task_id}",
                                    flow.flow_id
                                ));
                                fine = false;
                            }
                        }
                    }
                }
                if fine {
                    list.ok(format!(
                        "flows: {} flows of length {}",
                        flows.len(),
                        config.flowbuilder.flow_len
                    ));
                }
            }
        }
    } else {
        list.ok("flows: not built yet (run build-flows)");
    }

    // template checksums
    let asset_source = match &config.paths.template_dir {
        Some(dir) => PromptAssets::from_dir(dir),
        None => PromptAssets::embedded(),
    };
    match asset_source {
        Err(e) => list.fail(format!("templates: {e}")),
        Ok(assets) => {
            let violations = assets.checksum_violations();
            if violations.is_empty() {
                list.ok("templates: all checksums match");
            } else {
                for (name, actual) in violations {
                    list.fail(format!(
                        "templates: {name} hashes to {actual}, not its pinned checksum"
                    ));
                }
            }
        }
    }

    if list.problems.is_empty() {
        println!("validate: all checks passed");
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "{} problem(s) found",
            list.problems.len()
        )))
    }
}

// ---------------------------------------------------------------------------
// build-flows
// ---------------------------------------------------------------------------

pub fn cmd_build_flows(ctx: &Ctx, dump_similarity: Option<&Path>) -> Result<(), CliError> {
    let config = &ctx.config;
    let cache_path = config.paths.cache.as_ref().ok_or_else(|| {
        CliError::Validation(
            "build-flows needs paths.cache (flows are cut from graded results)".into(),
        )
    })?;
    let cache = RewardCache::load(cache_path).map_err(|e| CliError::Validation(e.to_string()))?;
    let roster =
        load_roster(&config.paths.roster).map_err(|e| CliError::Validation(e.to_string()))?;

    let vectors =
        build_orientations(&cache, &roster).map_err(|e| CliError::Runtime(e.to_string()))?;
    let matrix = swfbench_core::flowbuilder::similarity_matrix(&vectors)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    if let Some(path) = dump_similarity {
        std::fs::write(path, matrix.to_csv()).map_err(|e| CliError::Runtime(e.to_string()))?;
        println!("wrote similarity matrix to {}", path.display());
    }
    let raw = match config.flowbuilder.feature_space {
        FeatureSpace::SimilarityRows => None,
        FeatureSpace::RawOrientations => Some(vectors.as_slice()),
    };
    let assignment =
        cluster_tasks_with(&matrix, raw, config.flowbuilder.k, config.flowbuilder.seed)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    let batch = assemble_flows(
        &assignment,
        &matrix,
        config.flowbuilder.flow_len,
        config.flowbuilder.seed,
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;

    if let Some(parent) = config.paths.flows.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    std::fs::write(&config.paths.flows, flows_to_json(&batch.flows))
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    let sizes: Vec<usize> = assignment.clusters.iter().map(|c| c.len()).collect();
    let mean_intra = batch
        .flows
        .iter()
        .map(|f| f.cluster_meta.intra_sim)
        .sum::<f64>()
        / batch.flows.len() as f64;
    println!(
        "clusters: {} (sizes {sizes:?}), degenerate tasks excluded: {}",
        assignment.clusters.len(),
        assignment.excluded.len()
    );
    for (cluster, size) in &batch.skipped {
        println!(
            "warning: cluster {cluster} holds {size} tasks (< flow_len {}), skipped",
            config.flowbuilder.flow_len
        );
    }
    println!(
        "flows emitted: {} of length {}, mean intra-flow similarity {mean_intra:.4}",
        batch.flows.len(),
        config.flowbuilder.flow_len
    );
    println!("wrote {}", config.paths.flows.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub allocator_tag: String,
    pub flow_id: String,
    pub seed: u64,
    pub file: String,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub batch_id: String,
    pub config_digest: String,
    pub mode: String,
    /// Live-mode outputs are excluded from byte-reproducibility guarantees.
    pub reproducible: bool,
    pub runs: Vec<RunRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(format!("reading manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Runtime(format!("parsing manifest {}: {e}", path.display())))
    }
}

enum BackendSource {
    Cached(Arc<RewardCache>),
    Synthetic(Arc<Vec<SyntheticAgentSpec>>),
    Live {
        client: Arc<ChatClient>,
        assets: Arc<PromptAssets>,
        endpoint: String,
        model: String,
        api_key: Option<ApiKey>,
        timeout: Duration,
        max_output_tokens: Option<u32>,
    },
}

impl BackendSource {
    fn instantiate(&self, run_seed: u64) -> Box<dyn ExecBackend> {
        match self {
            BackendSource::Cached(cache) => Box::new(CachedBackend::new(cache.clone())),
            BackendSource::Synthetic(specs) => {
                Box::new(SyntheticBackend::new(specs.as_ref().clone(), run_seed))
            }
            BackendSource::Live {
                client,
                assets,
                endpoint,
                model,
                api_key,
                timeout,
                max_output_tokens,
            } => Box::new(LiveBackend::new(
                client.clone(),
                assets.clone(),
                endpoint.clone(),
                model.clone(),
                api_key.clone(),
                *timeout,
                *max_output_tokens,
            )),
        }
    }
}

fn build_client(limits: &ClientLimits) -> Result<Arc<ChatClient>, CliError> {
    ChatClient::new(ClientConfig {
        max_attempts: limits.max_attempts,
        initial_backoff: Duration::from_millis(limits.initial_backoff_ms),
        backoff_factor: limits.backoff_factor,
        max_inflight: limits.max_inflight,
    })
    .map(Arc::new)
    .map_err(|e| CliError::Validation(e.to_string()))
}

fn build_allocator(
    spec: &AllocatorSpec,
    client: &Option<Arc<ChatClient>>,
    assets: &Arc<PromptAssets>,
) -> Result<Box<dyn Allocator>, CliError> {
    let tag = spec.tag();
    Ok(match spec {
        AllocatorSpec::Random { .. } => {
            Box::new(HeuristicAllocator::with_tag(Strategy::Random, tag))
        }
        AllocatorSpec::FairnessOriented { .. } => Box::new(HeuristicAllocator::with_tag(
            Strategy::FairnessOriented,
            tag,
        )),
        AllocatorSpec::EfficiencyOriented { k, .. } => Box::new(HeuristicAllocator::with_tag(
            Strategy::EfficiencyOriented { k: *k },
            tag,
        )),
        AllocatorSpec::Hybrid { .. } => {
            Box::new(HeuristicAllocator::with_tag(Strategy::Hybrid, tag))
        }
        AllocatorSpec::Llm {
            endpoint,
            model,
            api_key_env,
            variant,
            timeout_secs,
            max_output_tokens,
            ..
        } => {
            let client = client
                .as_ref()
                .expect("client built when an llm allocator is configured")
                .clone();
            let api_key = match api_key_env {
                Some(var) => {
                    Some(ApiKey::from_env(var).map_err(|e| CliError::Validation(e.to_string()))?)
                }
                None => None,
            };
            Box::new(LlmAllocator::new(
                client,
                assets.clone(),
                endpoint.clone(),
                model.clone(),
                api_key,
                *variant,
                Duration::from_secs(*timeout_secs),
                *max_output_tokens,
                tag,
            ))
        }
    })
}

fn sanitize_file_stem(run_id: &str) -> String {
    run_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '-'
            }
        })
        .collect()
}

pub fn cmd_run(ctx: &Ctx) -> Result<(), CliError> {
    let config = &ctx.config;
    let digest = ctx.digest()?;
    let assets = ctx.assets()?;

    let (pool_tasks, pool_report) =
        load_pool_lenient(&config.paths.pool).map_err(|e| CliError::Validation(e.to_string()))?;
    if !pool_report.is_ok() {
        return Err(CliError::Validation(format!(
            "pool has {} violation(s); run validate",
            pool_report.violations.len()
        )));
    }
    let pool: BTreeMap<String, TaskSpec> = pool_tasks
        .into_iter()
        .map(|t| (t.task_id.clone(), t))
        .collect();
    let roster = Arc::new(
        load_roster(&config.paths.roster).map_err(|e| CliError::Validation(e.to_string()))?,
    );
    let flows_text = std::fs::read_to_string(&config.paths.flows)
        .map_err(|e| CliError::Validation(format!("flows file: {e} (run build-flows first)")))?;
    let flows = flows_from_json(&flows_text).map_err(|e| CliError::Validation(e.to_string()))?;
    if flows.is_empty() {
        return Err(CliError::Validation("flows file is empty".into()));
    }

    let needs_client = matches!(config.backend, BackendSpec::Live { .. })
        || config
            .allocators
            .iter()
            .any(|a| matches!(a, AllocatorSpec::Llm { .. }));
    let client = if needs_client {
        Some(build_client(&config.client)?)
    } else {
        None
    };

    let backend_source = Arc::new(match &config.backend {
        BackendSpec::Cached => {
            let path = config
                .paths
                .cache
                .as_ref()
                .ok_or_else(|| CliError::Validation("cached mode needs paths.cache".into()))?;
            BackendSource::Cached(Arc::new(
                RewardCache::load(path).map_err(|e| CliError::Validation(e.to_string()))?,
            ))
        }
        BackendSpec::Synthetic => {
            let path = config.paths.synthetic.as_ref().ok_or_else(|| {
                CliError::Validation("synthetic mode needs paths.synthetic".into())
            })?;
            BackendSource::Synthetic(Arc::new(
                load_synthetic_specs(path).map_err(|e| CliError::Validation(e.to_string()))?,
            ))
        }
        BackendSpec::Live {
            endpoint,
            model,
            api_key_env,
            timeout_secs,
            max_output_tokens,
        } => {
            let api_key = match api_key_env {
                Some(var) => {
                    Some(ApiKey::from_env(var).map_err(|e| CliError::Validation(e.to_string()))?)
                }
                None => None,
            };
            BackendSource::Live {
                client: client.clone().expect("client built for live mode"),
                assets: assets.clone(),
                endpoint: endpoint.clone(),
                model: model.clone(),
                api_key,
                timeout: Duration::from_secs(*timeout_secs),
                max_output_tokens: *max_output_tokens,
            }
        }
    });

    std::fs::create_dir_all(&config.paths.output_dir)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    struct Job {
        spec: AllocatorSpec,
        flow: TaskFlow,
    }
    let queue: VecDeque<Job> = config
        .allocators
        .iter()
        .flat_map(|spec| {
            flows.iter().map(move |flow| Job {
                spec: spec.clone(),
                flow: flow.clone(),
            })
        })
        .collect();
    let total_jobs = queue.len();
    let queue = Arc::new(Mutex::new(queue));
    let pool = Arc::new(pool);
    let (sender, receiver) = mpsc::channel::<Result<(Trajectory, Option<String>), String>>();

    let workers = config.workers.min(total_jobs).max(1);
    let mut handles = Vec::new();
    for _ in 0..workers {
        let queue = queue.clone();
        let sender = sender.clone();
        let pool = pool.clone();
        let roster = roster.clone();
        let assets = assets.clone();
        let client = client.clone();
        let backend_source = backend_source.clone();
        let run_base = config.run.clone();
        let digest = digest.clone();
        handles.push(std::thread::spawn(move || loop {
            let job = match queue.lock().expect("queue lock").pop_front() {
                Some(job) => job,
                None => break,
            };
            let tag = job.spec.tag();
            let run_seed = derive_run_seed(run_base.seed, &tag, &job.flow.flow_id);
            let run_config = RunConfig {
                flow_id: job.flow.flow_id.clone(),
                seed: run_seed,
                ..run_base.clone()
            };
            let result = build_allocator(&job.spec, &client, &assets).and_then(|mut allocator| {
                let mut backend = backend_source.instantiate(run_seed);
                match run_flow(
                    &job.flow,
                    &pool,
                    &roster,
                    allocator.as_mut(),
                    backend.as_mut(),
                    &run_config,
                    &digest,
                    &assets,
                ) {
                    Ok(trajectory) => Ok((trajectory, None)),
                    Err(EngineError::Aborted { reason, partial }) => Ok((*partial, Some(reason))),
                    Err(e) => Err(CliError::Runtime(e.to_string())),
                }
            });
            let message = result.map_err(|e| e.to_string());
            if sender.send(message).is_err() {
                break;
            }
        }));
    }
    drop(sender);

    // single-writer collection
    let mut outcomes: Vec<(Trajectory, Option<String>)> = Vec::new();
    for received in receiver {
        match received {
            Ok(outcome) => outcomes.push(outcome),
            Err(message) => {
                for handle in handles {
                    let _ = handle.join();
                }
                return Err(CliError::Runtime(message));
            }
        }
    }
    for handle in handles {
        let _ = handle.join();
    }
    if outcomes.len() != total_jobs {
        return Err(CliError::Runtime(format!(
            "only {} of {total_jobs} runs reported back; a worker died",
            outcomes.len()
        )));
    }
    outcomes.sort_by(|a, b| a.0.run_id.cmp(&b.0.run_id));

    let mut runs = Vec::new();
    let mut aborted_count = 0;
    for (trajectory, aborted) in &outcomes {
        let file = format!("{}.jsonl", sanitize_file_stem(&trajectory.run_id));
        let path = config.paths.output_dir.join(&file);
        let mut buffer = Vec::new();
        trajectory
            .write_ldjson(&mut buffer)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        std::fs::write(&path, buffer).map_err(|e| CliError::Runtime(e.to_string()))?;
        match aborted {
            Some(reason) => {
                aborted_count += 1;
                println!("ABORTED {} ({reason})", trajectory.run_id);
            }
            None => {
                let snapshot = trajectory
                    .final_stats
                    .snapshot(trajectory.events.last().map_or(0, |e| e.round));
                println!(
                    "wrote {} (swf {:.2}, fairness {:.3}, roi {:.2})",
                    path.display(),
                    snapshot.swf,
                    snapshot.fairness,
                    snapshot.roi
                );
            }
        }
        runs.push(RunRecord {
            run_id: trajectory.run_id.clone(),
            allocator_tag: trajectory.allocator_tag.clone(),
            flow_id: trajectory.flow_id.clone(),
            seed: trajectory.seed,
            file,
            aborted: aborted.clone(),
        });
    }

    let manifest = Manifest {
        batch_id: config.batch_id.clone(),
        config_digest: digest,
        mode: config.backend.label().to_string(),
        reproducible: !matches!(config.backend, BackendSpec::Live { .. }),
        runs,
    };
    let manifest_path = config.paths.output_dir.join("manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!(
        "wrote {} ({} runs)",
        manifest_path.display(),
        manifest.runs.len()
    );

    if aborted_count > 0 {
        Err(CliError::Runtime(format!(
            "{aborted_count} of {total_jobs} runs aborted; see manifest"
        )))
    } else {
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

fn merge_stats(trajectories: &[&Trajectory]) -> CommunityStats {
    let mut merged: BTreeMap<AgentId, AgentTally> = BTreeMap::new();
    for trajectory in trajectories {
        for (agent, tally) in &trajectory.final_stats.agents {
            let entry = merged.entry(agent.clone()).or_default();
            entry.task_count += tally.task_count;
            entry.total_reward += tally.total_reward;
            entry.total_cost += tally.total_cost;
            entry.success_count += tally.success_count;
        }
    }
    CommunityStats::from_tallies(merged)
}

pub fn cmd_report(ctx: &Ctx, force: bool) -> Result<(), CliError> {
    let config = &ctx.config;
    let manifest_path = config.paths.output_dir.join("manifest.json");
    let manifest = Manifest::load(&manifest_path)?;

    let mut trajectories = Vec::new();
    let mut skipped_aborted = 0;
    for record in &manifest.runs {
        if record.aborted.is_some() {
            skipped_aborted += 1;
            continue;
        }
        let path = config.paths.output_dir.join(&record.file);
        let trajectory =
            Trajectory::read_ldjson_file(&path).map_err(|e| CliError::Runtime(e.to_string()))?;
        if trajectory.config_digest != manifest.config_digest && !force {
            return Err(CliError::Validation(format!(
                "mixed config digests: {} carries {} but the manifest says {} (use --force to override)",
                record.run_id, trajectory.config_digest, manifest.config_digest
            )));
        }
        trajectories.push(trajectory);
    }
    if trajectories.is_empty() {
        return Err(CliError::Runtime("no completed runs to report".into()));
    }
    if skipped_aborted > 0 {
        println!("note: {skipped_aborted} aborted run(s) excluded");
    }

    let rows = leaderboard(&trajectories).map_err(|e| CliError::Runtime(e.to_string()))?;
    let markdown = leaderboard_markdown(&rows);
    print!("{markdown}");

    let roster =
        load_roster(&config.paths.roster).map_err(|e| CliError::Validation(e.to_string()))?;
    let mut bias_rows: Vec<(String, ProfileBias)> = Vec::new();
    let mut by_tag: BTreeMap<&str, Vec<&Trajectory>> = BTreeMap::new();
    for trajectory in &trajectories {
        by_tag
            .entry(&trajectory.allocator_tag)
            .or_default()
            .push(trajectory);
    }
    for (tag, group) in by_tag {
        // pooled tallies across the allocator's flows, the bias substrate
        let pooled = Trajectory {
            run_id: format!("{tag}__pooled"),
            allocator_tag: tag.to_string(),
            flow_id: "pooled".into(),
            seed: 0,
            config_digest: manifest.config_digest.clone(),
            events: vec![],
            final_stats: merge_stats(&group),
        };
        let bias = profile_bias(&pooled, &roster).map_err(|e| CliError::Runtime(e.to_string()))?;
        bias_rows.push((tag.to_string(), bias));
    }

    let batch = &manifest.batch_id;
    let out = &config.paths.output_dir;
    let leaderboard_path = out.join(format!("leaderboard_{batch}.md"));
    let scatter_path = out.join(format!("scatter_{batch}.csv"));
    let bias_path = out.join(format!("bias_{batch}.csv"));
    std::fs::write(&leaderboard_path, &markdown).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(&scatter_path, scatter_export(&rows))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(&bias_path, bias_export(&bias_rows))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("wrote {}", leaderboard_path.display());
    println!("wrote {}", scatter_path.display());
    println!("wrote {}", bias_path.display());
    Ok(())
}
