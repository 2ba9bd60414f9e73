//! Recipient execution backends, answer grading, and the cost model.
//!
//! Three interchangeable backends stand behind one `execute` contract:
//! a cached lookup over precomputed rewards, a seeded synthetic generator
//! for desk-scale experiments, and a live HTTP executor that sends the
//! task-solving prompt to an OpenAI-style endpoint. Cost is always
//! `output_tokens / throughput` of the executing agent.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::llmclient::{ApiKey, ChatClient, ChatMessage, ChatRequest, ClientError};
use crate::prompts::{render_solve_prompt, PromptAssets};
use crate::types::{AgentId, ExecutionOutcome, RecipientProfile, TaskDomain, TaskSpec};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("cache has no entry for {task_id}/{agent_id}")]
    MissingEntry { task_id: String, agent_id: AgentId },
    #[error("no synthetic spec for agent {0}")]
    MissingSpec(AgentId),
    #[error("synthetic spec for {agent_id} has no success probability for tag {tag:?} (and no \"*\" fallback)")]
    MissingSuccessProb { agent_id: AgentId, tag: String },
    #[error("cache format error at {path} line {line}: {detail}")]
    Format {
        path: String,
        line: u64,
        detail: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("live executor transport: {0}")]
    Transport(#[from] ClientError),
}

/// Normalizes an answer candidate for exact matching: trim, collapse
/// internal whitespace runs to single spaces, case-fold.
pub fn normalize_answer(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Extracts the content of the last parseable `\boxed{...}` in the answer.
///
/// Occurrences are tried from the end, so nested boxes resolve to the
/// innermost content and a trailing unbalanced box falls back to the last
/// complete one (mirroring the answer-tag rule).
fn extract_boxed(answer: &str) -> Option<String> {
    const OPEN: &str = "\\boxed{";
    let mut search_end = answer.len();
    while let Some(pos) = answer[..search_end].rfind(OPEN) {
        let start = pos + OPEN.len();
        let mut depth = 1usize;
        for (offset, ch) in answer[start..].char_indices() {
            match ch {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(answer[start..start + offset].to_string());
                    }
                }
                _ => {}
            }
        }
        search_end = pos;
    }
    None
}

/// Extracts the text between the last complete `<answer>...</answer>` pair.
fn extract_answer_tag(answer: &str) -> Option<String> {
    let close = answer.rfind("</answer>")?;
    let open = answer[..close].rfind("<answer>")?;
    Some(answer[open + "<answer>".len()..close].to_string())
}

/// Grades an answer against the task's ground truth: extract the candidate
/// per the domain's format contract, normalize both sides, exact match.
/// Unparseable answers score 0; there is no partial credit.
pub fn grade(answer: &str, task: &TaskSpec) -> f64 {
    let candidate = match task.domain {
        TaskDomain::Math => extract_boxed(answer),
        TaskDomain::DeepResearch => extract_answer_tag(answer),
    };
    match candidate {
        Some(text) if normalize_answer(&text) == normalize_answer(&task.ground_truth) => 1.0,
        _ => 0.0,
    }
}

/// One precomputed (task, agent) execution result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub task_id: String,
    pub agent_id: AgentId,
    pub reward: f64,
    pub output_tokens: u32,
    pub answer: String,
}

/// Immutable reward/cost cache keyed by (task_id, agent_id).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RewardCache {
    entries: BTreeMap<(String, AgentId), CacheEntry>,
}

impl RewardCache {
    pub fn from_entries(
        entries: impl IntoIterator<Item = CacheEntry>,
    ) -> Result<Self, OracleError> {
        let mut cache = RewardCache::default();
        for (index, entry) in entries.into_iter().enumerate() {
            cache.insert(entry, index as u64 + 2, "<memory>")?;
        }
        Ok(cache)
    }

    fn insert(&mut self, entry: CacheEntry, line: u64, path: &str) -> Result<(), OracleError> {
        let key = (entry.task_id.clone(), entry.agent_id.clone());
        if self.entries.contains_key(&key) {
            return Err(OracleError::Format {
                path: path.to_string(),
                line,
                detail: format!("duplicate key {}/{}", key.0, key.1),
            });
        }
        self.entries.insert(key, entry);
        Ok(())
    }

    /// Loads the CSV cache (header `task_id,agent_id,reward,output_tokens,answer`),
    /// rejecting duplicate keys and malformed rows with their line number.
    pub fn load(path: &Path) -> Result<Self, OracleError> {
        let display = path.display().to_string();
        let mut reader =
            csv::ReaderBuilder::new()
                .from_path(path)
                .map_err(|e| OracleError::Format {
                    path: display.clone(),
                    line: 1,
                    detail: e.to_string(),
                })?;
        let mut cache = RewardCache::default();
        let mut records = reader.deserialize::<CacheEntry>();
        loop {
            let line = records.reader().position().line();
            match records.next() {
                None => break,
                Some(Ok(entry)) => cache.insert(entry, line, &display)?,
                Some(Err(e)) => {
                    return Err(OracleError::Format {
                        path: display,
                        line,
                        detail: e.to_string(),
                    })
                }
            }
        }
        Ok(cache)
    }

    /// Writes entries sorted by (task_id, agent_id) for reproducible diffs.
    pub fn write(entries: &[CacheEntry], path: &Path) -> Result<(), OracleError> {
        let mut sorted: Vec<&CacheEntry> = entries.iter().collect();
        sorted.sort_by(|a, b| (&a.task_id, &a.agent_id).cmp(&(&b.task_id, &b.agent_id)));
        let mut writer = csv::Writer::from_path(path).map_err(|e| OracleError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e),
        })?;
        for entry in sorted {
            writer.serialize(entry).map_err(|e| OracleError::Io {
                path: path.display().to_string(),
                source: std::io::Error::other(e),
            })?;
        }
        writer.flush().map_err(|e| OracleError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn get(&self, task_id: &str, agent_id: &AgentId) -> Option<&CacheEntry> {
        self.entries.get(&(task_id.to_string(), agent_id.clone()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &CacheEntry> {
        self.entries.values()
    }

    /// Distinct task ids present, in sorted order.
    pub fn task_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.entries.keys().map(|(t, _)| t.clone()).collect();
        ids.dedup();
        ids
    }

    /// (task, agent) pairs required by the roster and pool but absent here.
    pub fn missing_pairs(
        &self,
        task_ids: &[String],
        roster: &[RecipientProfile],
    ) -> Vec<(String, AgentId)> {
        let mut missing = Vec::new();
        for task_id in task_ids {
            for profile in roster {
                if self.get(task_id, &profile.agent_id).is_none() {
                    missing.push((task_id.clone(), profile.agent_id.clone()));
                }
            }
        }
        missing
    }
}

/// Parameters of one synthetic recipient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticAgentSpec {
    pub agent_id: AgentId,
    /// Success probability per task `source_tag`; the key `"*"` acts as a
    /// fallback for tags not listed.
    pub success_prob: BTreeMap<String, f64>,
    pub token_mean: f64,
    pub token_dispersion: f64,
}

impl SyntheticAgentSpec {
    pub fn validate(&self) -> Result<(), OracleError> {
        for (tag, p) in &self.success_prob {
            if !(0.0..=1.0).contains(p) {
                return Err(OracleError::Format {
                    path: "<synthetic spec>".into(),
                    line: 0,
                    detail: format!(
                        "{}: success probability for {tag:?} must be in [0,1], got {p}",
                        self.agent_id
                    ),
                });
            }
        }
        if self.token_mean <= 0.0 || self.token_mean.is_nan() {
            return Err(OracleError::Format {
                path: "<synthetic spec>".into(),
                line: 0,
                detail: format!("{}: token_mean must be positive", self.agent_id),
            });
        }
        if self.token_dispersion < 0.0 {
            return Err(OracleError::Format {
                path: "<synthetic spec>".into(),
                line: 0,
                detail: format!("{}: token_dispersion must be non-negative", self.agent_id),
            });
        }
        Ok(())
    }
}

pub fn load_synthetic_specs(path: &Path) -> Result<Vec<SyntheticAgentSpec>, OracleError> {
    let text = std::fs::read_to_string(path).map_err(|source| OracleError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let specs: Vec<SyntheticAgentSpec> =
        serde_json::from_str(&text).map_err(|e| OracleError::Format {
            path: path.display().to_string(),
            line: 0,
            detail: e.to_string(),
        })?;
    for spec in &specs {
        spec.validate()?;
    }
    Ok(specs)
}

/// A recipient execution backend. Implementations may keep per-agent state
/// (the synthetic generator holds one rng stream per agent), hence `&mut`.
pub trait ExecBackend {
    fn execute(
        &mut self,
        agent: &RecipientProfile,
        task: &TaskSpec,
        reward_scale: f64,
    ) -> Result<ExecutionOutcome, OracleError>;

    fn label(&self) -> &'static str;
}

/// Backend answering from a precomputed reward cache.
pub struct CachedBackend {
    cache: Arc<RewardCache>,
}

impl CachedBackend {
    pub fn new(cache: Arc<RewardCache>) -> Self {
        CachedBackend { cache }
    }
}

impl ExecBackend for CachedBackend {
    fn execute(
        &mut self,
        agent: &RecipientProfile,
        task: &TaskSpec,
        reward_scale: f64,
    ) -> Result<ExecutionOutcome, OracleError> {
        let entry = self
            .cache
            .get(&task.task_id, &agent.agent_id)
            .ok_or_else(|| OracleError::MissingEntry {
                task_id: task.task_id.clone(),
                agent_id: agent.agent_id.clone(),
            })?;
        Ok(ExecutionOutcome::new(
            entry.answer.clone(),
            entry.output_tokens,
            entry.reward * reward_scale,
            agent.throughput,
        ))
    }

    fn label(&self) -> &'static str {
        "cached"
    }
}

/// Seeded synthetic backend. Each agent draws from its own ChaCha stream,
/// so the outcome sequence is bit-identical across runs and platforms and
/// parallel runs never contend. Draw order per execution is fixed: success
/// first, then token count.
pub struct SyntheticBackend {
    specs: BTreeMap<AgentId, SyntheticAgentSpec>,
    streams: BTreeMap<AgentId, ChaCha8Rng>,
}

impl SyntheticBackend {
    pub fn new(specs: Vec<SyntheticAgentSpec>, run_seed: u64) -> Self {
        let mut spec_map = BTreeMap::new();
        let mut streams = BTreeMap::new();
        for spec in specs {
            let rng = ChaCha8Rng::from_seed(derive_stream_seed(run_seed, &spec.agent_id));
            streams.insert(spec.agent_id.clone(), rng);
            spec_map.insert(spec.agent_id.clone(), spec);
        }
        SyntheticBackend {
            specs: spec_map,
            streams,
        }
    }
}

/// Per-(run, agent) stream seed: SHA-256 over the run seed and agent id.
fn derive_stream_seed(run_seed: u64, agent_id: &AgentId) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(run_seed.to_le_bytes());
    hasher.update(agent_id.as_str().as_bytes());
    hasher.finalize().into()
}

impl ExecBackend for SyntheticBackend {
    fn execute(
        &mut self,
        agent: &RecipientProfile,
        task: &TaskSpec,
        reward_scale: f64,
    ) -> Result<ExecutionOutcome, OracleError> {
        let spec = self
            .specs
            .get(&agent.agent_id)
            .ok_or_else(|| OracleError::MissingSpec(agent.agent_id.clone()))?;
        let p = spec
            .success_prob
            .get(&task.source_tag)
            .or_else(|| spec.success_prob.get("*"))
            .copied()
            .ok_or_else(|| OracleError::MissingSuccessProb {
                agent_id: agent.agent_id.clone(),
                tag: task.source_tag.clone(),
            })?;
        let rng = self
            .streams
            .get_mut(&agent.agent_id)
            .expect("stream exists for every spec");
        let success = rng.gen::<f64>() < p;
        let lo = (spec.token_mean - spec.token_dispersion).max(0.0).ceil() as u32;
        let hi = (spec.token_mean + spec.token_dispersion).floor() as u32;
        let output_tokens = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let answer = if success {
            match task.domain {
                TaskDomain::Math => format!("\\boxed{{{}}}", task.ground_truth),
                TaskDomain::DeepResearch => format!("<answer> {} </answer>", task.ground_truth),
            }
        } else {
            "No answer found.".to_string()
        };
        let reward = grade(&answer, task) * reward_scale;
        Ok(ExecutionOutcome::new(
            answer,
            output_tokens,
            reward,
            agent.throughput,
        ))
    }

    fn label(&self) -> &'static str {
        "synthetic"
    }
}

/// Live executor: sends the task-solving prompt to an OpenAI-style endpoint
/// and grades whatever comes back. Search tool calls referenced by the deep
/// research prompt are not executed; the prompt goes out as-is.
pub struct LiveBackend {
    client: Arc<ChatClient>,
    assets: Arc<PromptAssets>,
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<ApiKey>,
    pub timeout: Duration,
    pub max_output_tokens: Option<u32>,
}

impl LiveBackend {
    pub fn new(
        client: Arc<ChatClient>,
        assets: Arc<PromptAssets>,
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<ApiKey>,
        timeout: Duration,
        max_output_tokens: Option<u32>,
    ) -> Self {
        LiveBackend {
            client,
            assets,
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            timeout,
            max_output_tokens,
        }
    }
}

impl ExecBackend for LiveBackend {
    fn execute(
        &mut self,
        agent: &RecipientProfile,
        task: &TaskSpec,
        reward_scale: f64,
    ) -> Result<ExecutionOutcome, OracleError> {
        let prompt = render_solve_prompt(&self.assets, task);
        let request = ChatRequest {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            messages: vec![ChatMessage::user(prompt)],
            temperature: 1.0,
            max_output_tokens: self.max_output_tokens,
            timeout: self.timeout,
            api_key: self.api_key.clone(),
        };
        let response = self.client.complete(&request)?;
        let reward = grade(&response.text, task) * reward_scale;
        Ok(ExecutionOutcome::new(
            response.text,
            response.completion_tokens,
            reward,
            agent.throughput,
        ))
    }

    fn label(&self) -> &'static str {
        "live"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn task(domain: TaskDomain, truth: &str) -> TaskSpec {
        TaskSpec {
            task_id: "t1".into(),
            domain,
            prompt: "q".into(),
            ground_truth: truth.into(),
            source_tag: "pool".into(),
        }
    }

    fn profile(id: &str, throughput: f64) -> RecipientProfile {
        RecipientProfile {
            agent_id: AgentId::new(id).unwrap(),
            scores: BTreeMap::from([("Average".to_string(), 50.0)]),
            throughput,
        }
    }

    #[test]
    fn grade_answer_tag() {
        let t = task(TaskDomain::DeepResearch, "Beijing");
        assert_eq!(grade("<answer> Beijing </answer>", &t), 1.0);
        assert_eq!(grade("The capital is Beijing", &t), 0.0);
        assert_eq!(grade("<answer>beijing</answer>", &t), 1.0);
    }

    #[test]
    fn grade_boxed() {
        let t = task(TaskDomain::Math, "10");
        assert_eq!(grade("\\boxed{10}", &t), 1.0);
        assert_eq!(grade("the answer is 10", &t), 0.0);
        assert_eq!(grade("maybe \\boxed{9}, no wait \\boxed{10}", &t), 1.0);
        assert_eq!(grade("\\boxed{\\boxed{10}}", &t), 1.0);
    }

    #[test]
    fn grade_balanced_braces() {
        let t = task(TaskDomain::Math, "\\frac{1}{2}");
        assert_eq!(grade("so \\boxed{\\frac{1}{2}} done", &t), 1.0);
        assert_eq!(grade("\\boxed{\\frac{1}{2}", &t), 0.0); // unbalanced
    }

    #[test]
    fn grade_falls_back_past_unbalanced_trailing_box() {
        let t = task(TaskDomain::Math, "1");
        assert_eq!(grade("\\boxed{1} and then \\boxed{2", &t), 1.0);
        assert_eq!(grade("\\boxed{2} and then \\boxed{1", &t), 0.0);
    }

    #[test]
    fn grade_last_tag_pair_wins() {
        let t = task(TaskDomain::DeepResearch, "Paris");
        assert_eq!(
            grade(
                "<answer>London</answer> actually <answer> Paris </answer>",
                &t
            ),
            1.0
        );
        // unclosed trailing tag falls back to the last complete pair
        assert_eq!(grade("<answer>Paris</answer><answer>Lyon", &t), 1.0);
    }

    #[test]
    fn grade_whitespace_insensitive_and_idempotent() {
        let t = task(TaskDomain::DeepResearch, "  New   York ");
        let answer = "<answer>\n new york\t</answer>";
        assert_eq!(grade(answer, &t), 1.0);
        assert_eq!(grade(answer, &t), 1.0);
    }

    fn sample_entries(n: usize) -> Vec<CacheEntry> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        (0..n)
            .map(|i| CacheEntry {
                task_id: format!("t{}", i / 3),
                agent_id: AgentId::new(["AAA", "BBB", "CCC"][i % 3]).unwrap(),
                reward: if rng.gen::<bool>() { 1.0 } else { 0.0 },
                output_tokens: rng.gen_range(0..2000),
                answer: format!("answer with, commas and \"quotes\" {i}"),
            })
            .collect()
    }

    #[test]
    fn cache_roundtrip_preserves_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.csv");
        let entries = sample_entries(99);
        RewardCache::write(&entries, &path).unwrap();
        let cache = RewardCache::load(&path).unwrap();
        assert_eq!(cache.len(), entries.len());
        let mut expected = entries.clone();
        expected.sort_by(|a, b| (&a.task_id, &a.agent_id).cmp(&(&b.task_id, &b.agent_id)));
        let loaded: Vec<CacheEntry> = cache.entries().cloned().collect();
        assert_eq!(loaded, expected);
    }

    #[test]
    fn cache_rejects_duplicate_key_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.csv");
        std::fs::write(
            &path,
            "task_id,agent_id,reward,output_tokens,answer\nt1,AAA,1,10,x\nt1,AAA,0,20,y\n",
        )
        .unwrap();
        match RewardCache::load(&path) {
            Err(OracleError::Format { line, detail, .. }) => {
                assert_eq!(line, 3);
                assert!(detail.contains("t1/AAA"));
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn cache_rejects_malformed_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.csv");
        std::fs::write(
            &path,
            "task_id,agent_id,reward,output_tokens,answer\nt1,AAA,notanumber,10,x\n",
        )
        .unwrap();
        match RewardCache::load(&path) {
            Err(OracleError::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn empty_cache_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.csv");
        std::fs::write(&path, "task_id,agent_id,reward,output_tokens,answer\n").unwrap();
        let cache = RewardCache::load(&path).unwrap();
        assert!(cache.is_empty());
    }

    #[test]
    fn cached_backend_cost_matches_worked_example() {
        let cache = RewardCache::from_entries([CacheEntry {
            task_id: "t1".into(),
            agent_id: AgentId::new("AAA").unwrap(),
            reward: 1.0,
            output_tokens: 800,
            answer: "a".into(),
        }])
        .unwrap();
        let mut backend = CachedBackend::new(Arc::new(cache));
        let agent = profile("AAA", 7942.57);
        let t = task(TaskDomain::Math, "10");
        let outcome = backend.execute(&agent, &t, 1.0).unwrap();
        assert!((outcome.cost - 0.101).abs() < 5e-4);
        assert_eq!(outcome.reward, 1.0);

        let missing = profile("BBB", 100.0);
        assert!(matches!(
            backend.execute(&missing, &t, 1.0),
            Err(OracleError::MissingEntry { .. })
        ));
    }

    fn synth_spec(id: &str, p: f64) -> SyntheticAgentSpec {
        SyntheticAgentSpec {
            agent_id: AgentId::new(id).unwrap(),
            success_prob: BTreeMap::from([("*".to_string(), p)]),
            token_mean: 500.0,
            token_dispersion: 200.0,
        }
    }

    #[test]
    fn synthetic_always_succeeds_at_prob_one() {
        let mut backend = SyntheticBackend::new(vec![synth_spec("AAA", 1.0)], 9);
        let agent = profile("AAA", 1000.0);
        let t = task(TaskDomain::Math, "42");
        for _ in 0..20 {
            let outcome = backend.execute(&agent, &t, 2.5).unwrap();
            assert_eq!(outcome.reward, 2.5);
            assert!(outcome.cost > 0.0);
        }
    }

    #[test]
    fn synthetic_is_deterministic_for_a_seed() {
        let agent = profile("AAA", 1000.0);
        let t = task(TaskDomain::DeepResearch, "x");
        let run = |seed: u64| -> Vec<ExecutionOutcome> {
            let mut backend = SyntheticBackend::new(vec![synth_spec("AAA", 0.5)], seed);
            (0..50)
                .map(|_| backend.execute(&agent, &t, 1.0).unwrap())
                .collect()
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn synthetic_tag_lookup_and_errors() {
        let mut spec = synth_spec("AAA", 0.0);
        spec.success_prob = BTreeMap::from([("easy".to_string(), 1.0)]);
        let mut backend = SyntheticBackend::new(vec![spec], 1);
        let agent = profile("AAA", 1000.0);
        let mut t = task(TaskDomain::Math, "1");
        t.source_tag = "easy".into();
        assert_eq!(backend.execute(&agent, &t, 1.0).unwrap().reward, 1.0);
        t.source_tag = "hard".into();
        assert!(matches!(
            backend.execute(&agent, &t, 1.0),
            Err(OracleError::MissingSuccessProb { .. })
        ));
        let unknown = profile("ZZZ", 10.0);
        assert!(matches!(
            backend.execute(&unknown, &t, 1.0),
            Err(OracleError::MissingSpec(_))
        ));
    }

    #[test]
    fn cost_is_zero_iff_no_tokens() {
        let mut spec = synth_spec("AAA", 1.0);
        spec.token_mean = 0.5;
        spec.token_dispersion = 0.5;
        let mut backend = SyntheticBackend::new(vec![spec], 3);
        let agent = profile("AAA", 1000.0);
        let t = task(TaskDomain::Math, "1");
        for _ in 0..30 {
            let outcome = backend.execute(&agent, &t, 1.0).unwrap();
            assert_eq!(outcome.cost == 0.0, outcome.output_tokens == 0);
        }
    }

    #[test]
    fn synthetic_spec_validation() {
        let mut spec = synth_spec("AAA", 1.5);
        assert!(spec.validate().is_err());
        spec.success_prob = BTreeMap::from([("*".to_string(), 0.5)]);
        spec.token_mean = 0.0;
        assert!(spec.validate().is_err());
        spec.token_mean = 10.0;
        spec.token_dispersion = -1.0;
        assert!(spec.validate().is_err());
    }
}
