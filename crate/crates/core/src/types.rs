//! Domain types shared by every other module.
//!
//! These are value objects: immutable after construction, cheap to clone,
//! serializable as JSON with field names matching the wire format. Behavior
//! is limited to construction, validation, and (de)serialization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{self, MetricSnapshot};

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid agent id {0:?}: expected three uppercase ASCII letters")]
    InvalidAgentId(String),
    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },
}

/// Anonymized recipient identifier: exactly three uppercase ASCII letters.
/// The format is enforced on every construction path, deserialization
/// included.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AgentId(String);

impl AgentId {
    pub fn new(id: impl Into<String>) -> Result<Self, CoreError> {
        let id = id.into();
        if id.len() == 3 && id.chars().all(|c| c.is_ascii_uppercase()) {
            Ok(AgentId(id))
        } else {
            Err(CoreError::InvalidAgentId(id))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // pad() honors width/alignment flags from format strings
        f.pad(&self.0)
    }
}

impl std::str::FromStr for AgentId {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AgentId::new(s)
    }
}

impl TryFrom<String> for AgentId {
    type Error = CoreError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        AgentId::new(value)
    }
}

impl From<AgentId> for String {
    fn from(id: AgentId) -> String {
        id.0
    }
}

/// Task domain; determines the answer-extraction rule used for grading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskDomain {
    DeepResearch,
    Math,
}

/// A gradeable unit of work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub domain: TaskDomain,
    pub prompt: String,
    pub ground_truth: String,
    pub source_tag: String,
}

/// One pool-validation finding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PoolViolation {
    DuplicateId { task_id: String },
    EmptyGroundTruth { task_id: String },
    EmptyTaskId { index: usize },
    UnknownDomain { task_id: String, domain: String },
}

impl fmt::Display for PoolViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PoolViolation::DuplicateId { task_id } => write!(f, "duplicate task_id {task_id:?}"),
            PoolViolation::EmptyGroundTruth { task_id } => {
                write!(f, "empty ground_truth for task {task_id:?}")
            }
            PoolViolation::EmptyTaskId { index } => write!(f, "empty task_id at index {index}"),
            PoolViolation::UnknownDomain { task_id, domain } => {
                write!(f, "unknown domain {domain:?} for task {task_id:?}")
            }
        }
    }
}

/// Report produced by [`validate_pool`]; purely informational, never mutates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PoolReport {
    pub violations: Vec<PoolViolation>,
}

impl PoolReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a task pool for duplicate ids, empty ids, and empty ground truths.
pub fn validate_pool(tasks: &[TaskSpec]) -> PoolReport {
    let mut report = PoolReport::default();
    let mut seen = BTreeSet::new();
    for (index, task) in tasks.iter().enumerate() {
        if task.task_id.is_empty() {
            report.violations.push(PoolViolation::EmptyTaskId { index });
            continue;
        }
        if !seen.insert(task.task_id.as_str()) {
            report.violations.push(PoolViolation::DuplicateId {
                task_id: task.task_id.clone(),
            });
        }
        if task.ground_truth.trim().is_empty() {
            report.violations.push(PoolViolation::EmptyGroundTruth {
                task_id: task.task_id.clone(),
            });
        }
    }
    report
}

/// Loads a task pool from a JSON array, tolerating rows with an unknown
/// domain string: those rows are skipped and reported instead of aborting
/// the load, so `validate` can itemize them.
pub fn load_pool_lenient(path: &Path) -> Result<(Vec<TaskSpec>, PoolReport), CoreError> {
    let text = std::fs::read_to_string(path).map_err(|source| CoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let raw: Vec<serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| CoreError::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
    let mut tasks = Vec::new();
    let mut extra = Vec::new();
    for value in &raw {
        match serde_json::from_value::<TaskSpec>(value.clone()) {
            Ok(task) => tasks.push(task),
            Err(e) => {
                let task_id = value
                    .get("task_id")
                    .and_then(|v| v.as_str())
                    .unwrap_or("")
                    .to_string();
                let domain = value
                    .get("domain")
                    .and_then(|v| v.as_str())
                    .map(str::to_string);
                match domain {
                    Some(domain) if domain != "deep_research" && domain != "math" => {
                        extra.push(PoolViolation::UnknownDomain { task_id, domain });
                    }
                    _ => {
                        return Err(CoreError::Parse {
                            path: path.display().to_string(),
                            detail: format!("task {task_id:?}: {e}"),
                        })
                    }
                }
            }
        }
    }
    let mut report = validate_pool(&tasks);
    report.violations.extend(extra);
    Ok((tasks, report))
}

/// Metadata attached to a task flow by the flow builder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMeta {
    pub intra_sim: f64,
    pub size: usize,
}

/// An ordered dilemma instance: the task sequence one simulation run walks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFlow {
    pub flow_id: String,
    pub task_ids: Vec<String>,
    pub cluster_meta: ClusterMeta,
}

impl TaskFlow {
    pub fn new(
        flow_id: impl Into<String>,
        task_ids: Vec<String>,
        cluster_meta: ClusterMeta,
    ) -> Result<Self, CoreError> {
        let flow = TaskFlow {
            flow_id: flow_id.into(),
            task_ids,
            cluster_meta,
        };
        flow.check_no_duplicates()?;
        Ok(flow)
    }

    fn check_no_duplicates(&self) -> Result<(), CoreError> {
        let unique: BTreeSet<&String> = self.task_ids.iter().collect();
        if unique.len() != self.task_ids.len() {
            return Err(CoreError::Invalid {
                what: "task flow",
                detail: format!("flow {} contains duplicate task ids", self.flow_id),
            });
        }
        Ok(())
    }

    /// Full invariant check against the configured flow length.
    pub fn validate(&self, expected_len: usize) -> Result<(), CoreError> {
        if self.task_ids.len() != expected_len {
            return Err(CoreError::Invalid {
                what: "task flow",
                detail: format!(
                    "flow {} has {} tasks, expected {expected_len}",
                    self.flow_id,
                    self.task_ids.len()
                ),
            });
        }
        self.check_no_duplicates()
    }
}

/// Anonymized recipient identity: benchmark scores plus serving throughput.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipientProfile {
    pub agent_id: AgentId,
    /// Benchmark columns keyed by name (IFEval, MATH, GPQA, MuSR, MMLU,
    /// Average); `Average` is mandatory.
    pub scores: BTreeMap<String, f64>,
    /// Tokens per second of the backing model; drives the cost model.
    pub throughput: f64,
}

impl RecipientProfile {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !self.scores.contains_key("Average") {
            return Err(CoreError::Invalid {
                what: "recipient profile",
                detail: format!("{} is missing the Average score", self.agent_id),
            });
        }
        if self.throughput <= 0.0 || self.throughput.is_nan() {
            return Err(CoreError::Invalid {
                what: "recipient profile",
                detail: format!("{} has non-positive throughput", self.agent_id),
            });
        }
        Ok(())
    }

    pub fn average(&self) -> f64 {
        self.scores.get("Average").copied().unwrap_or(0.0)
    }
}

/// Loads and validates a roster file (JSON array of profiles).
pub fn load_roster(path: &Path) -> Result<Vec<RecipientProfile>, CoreError> {
    let text = std::fs::read_to_string(path).map_err(|source| CoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let roster: Vec<RecipientProfile> =
        serde_json::from_str(&text).map_err(|e| CoreError::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
    let mut seen = BTreeSet::new();
    for profile in &roster {
        profile.validate()?;
        if !seen.insert(profile.agent_id.clone()) {
            return Err(CoreError::Invalid {
                what: "roster",
                detail: format!("duplicate agent id {}", profile.agent_id),
            });
        }
    }
    Ok(roster)
}

/// A recipient's graded answer to one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub answer: String,
    pub output_tokens: u32,
    pub reward: f64,
    pub cost: f64,
}

impl ExecutionOutcome {
    /// Builds an outcome with `cost = output_tokens / throughput`.
    pub fn new(
        answer: impl Into<String>,
        output_tokens: u32,
        reward: f64,
        throughput: f64,
    ) -> Self {
        ExecutionOutcome {
            answer: answer.into(),
            output_tokens,
            reward,
            cost: output_tokens as f64 / throughput,
        }
    }
}

/// One round of the allocation loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationEvent {
    /// Global 1-based round counter; increments on every attempt.
    pub round: u32,
    pub task_id: String,
    /// 1-based attempt number within the task.
    pub attempt: u32,
    pub reasoning: String,
    pub chosen: AgentId,
    pub answer: String,
    pub reward: f64,
    pub cost: f64,
    pub running_roi: f64,
    pub running_fairness: f64,
}

/// Per-agent running tallies; the primary columns behind every derived stat.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentTally {
    pub task_count: u64,
    pub total_reward: f64,
    pub total_cost: f64,
    pub success_count: u64,
}

/// Community-wide running statistics over one run.
///
/// Every roster agent is present from the start with zero tallies so the
/// Gini substrate always covers the whole community. The global totals are
/// accumulated in event order, separately from the per-agent tallies, so
/// that a sequential sum over the recorded events reproduces them exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityStats {
    pub agents: BTreeMap<AgentId, AgentTally>,
    pub total_reward: f64,
    pub total_cost: f64,
}

impl CommunityStats {
    pub fn new(roster: impl IntoIterator<Item = AgentId>) -> Self {
        CommunityStats {
            agents: roster
                .into_iter()
                .map(|id| (id, AgentTally::default()))
                .collect(),
            total_reward: 0.0,
            total_cost: 0.0,
        }
    }

    /// Builds the stats from hand-written tallies; global totals are summed
    /// per agent in id order.
    pub fn from_tallies(agents: BTreeMap<AgentId, AgentTally>) -> Self {
        let total_reward = agents.values().map(|t| t.total_reward).sum();
        let total_cost = agents.values().map(|t| t.total_cost).sum();
        CommunityStats {
            agents,
            total_reward,
            total_cost,
        }
    }

    /// Folds one allocation event into the tallies. Retries count: every
    /// attempt increments the assignee's task count whether or not it
    /// succeeded.
    pub fn record(&mut self, agent: &AgentId, reward: f64, cost: f64) {
        let tally = self.agents.entry(agent.clone()).or_default();
        tally.task_count += 1;
        tally.total_reward += reward;
        tally.total_cost += cost;
        if reward > 0.0 {
            tally.success_count += 1;
        }
        self.total_reward += reward;
        self.total_cost += cost;
    }

    /// Task counts in agent-id order; the Gini input.
    pub fn counts(&self) -> Vec<f64> {
        self.agents.values().map(|t| t.task_count as f64).collect()
    }

    /// Community ROI: total reward over total cost, 0 before any cost.
    pub fn global_roi(&self) -> f64 {
        if self.total_cost == 0.0 {
            0.0
        } else {
            self.total_reward / self.total_cost
        }
    }

    pub fn gini(&self) -> f64 {
        // at least two agents is a roster invariant; an all-zero vector is 0
        metrics::gini(&self.counts()).unwrap_or(0.0)
    }

    pub fn fairness(&self) -> f64 {
        1.0 - self.gini()
    }

    /// A single agent's reward-over-cost ratio, 0 if it has no cost yet.
    pub fn agent_roi(&self, agent: &AgentId) -> f64 {
        match self.agents.get(agent) {
            Some(t) if t.total_cost > 0.0 => t.total_reward / t.total_cost,
            _ => 0.0,
        }
    }

    /// Fraction of an agent's assignments that succeeded, 0 with no history.
    pub fn success_rate(&self, agent: &AgentId) -> f64 {
        match self.agents.get(agent) {
            Some(t) if t.task_count > 0 => t.success_count as f64 / t.task_count as f64,
            _ => 0.0,
        }
    }

    pub fn snapshot(&self, round: u32) -> MetricSnapshot {
        MetricSnapshot::new(round, self.gini(), self.global_roi())
    }
}

/// The full seeded run record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub run_id: String,
    pub allocator_tag: String,
    pub flow_id: String,
    pub seed: u64,
    pub config_digest: String,
    pub events: Vec<AllocationEvent>,
    pub final_stats: CommunityStats,
}

/// Header record: the trajectory's scalar fields, written as the first line
/// of the line-delimited JSON encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrajectoryHeader {
    record: String,
    run_id: String,
    allocator_tag: String,
    flow_id: String,
    seed: u64,
    config_digest: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct EventLine {
    record: String,
    #[serde(flatten)]
    event: AllocationEvent,
}

#[derive(Debug, Serialize, Deserialize)]
struct FinalLine {
    record: String,
    final_stats: CommunityStats,
}

impl Trajectory {
    /// Recomputes community stats from scratch by folding the events in
    /// order; used to check the incremental tallies.
    pub fn recompute_stats(&self, roster: impl IntoIterator<Item = AgentId>) -> CommunityStats {
        let mut stats = CommunityStats::new(roster);
        for event in &self.events {
            stats.record(&event.chosen, event.reward, event.cost);
        }
        stats
    }

    /// Checks that events are strictly ordered: the global round increases
    /// by one each event and attempts restart at 1 per task.
    pub fn validate_ordering(&self) -> Result<(), CoreError> {
        let mut previous: Option<&AllocationEvent> = None;
        for event in &self.events {
            if let Some(prev) = previous {
                if event.round != prev.round + 1 {
                    return Err(CoreError::Invalid {
                        what: "trajectory",
                        detail: format!(
                            "round {} follows round {}, expected {}",
                            event.round,
                            prev.round,
                            prev.round + 1
                        ),
                    });
                }
                let same_task = event.task_id == prev.task_id;
                let expected_attempt = if same_task { prev.attempt + 1 } else { 1 };
                if event.attempt != expected_attempt {
                    return Err(CoreError::Invalid {
                        what: "trajectory",
                        detail: format!(
                            "attempt {} at round {}, expected {expected_attempt}",
                            event.attempt, event.round
                        ),
                    });
                }
            } else if event.round != 1 || event.attempt != 1 {
                return Err(CoreError::Invalid {
                    what: "trajectory",
                    detail: "first event must be round 1, attempt 1".into(),
                });
            }
            previous = Some(event);
        }
        Ok(())
    }

    /// Line-delimited JSON: header record first, one event per line, final
    /// stats record last.
    pub fn write_ldjson<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = TrajectoryHeader {
            record: "header".into(),
            run_id: self.run_id.clone(),
            allocator_tag: self.allocator_tag.clone(),
            flow_id: self.flow_id.clone(),
            seed: self.seed,
            config_digest: self.config_digest.clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        for event in &self.events {
            let line = EventLine {
                record: "event".into(),
                event: event.clone(),
            };
            writeln!(out, "{}", serde_json::to_string(&line)?)?;
        }
        let final_line = FinalLine {
            record: "final".into(),
            final_stats: self.final_stats.clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&final_line)?)
    }

    pub fn to_ldjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ldjson(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("serde_json emits utf-8")
    }

    pub fn read_ldjson<R: BufRead>(reader: R) -> Result<Self, CoreError> {
        let parse = |detail: String| CoreError::Parse {
            path: "<trajectory>".into(),
            detail,
        };
        let mut lines = reader.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| parse("empty trajectory stream".into()))?
            .map_err(|e| parse(e.to_string()))?;
        let header: TrajectoryHeader =
            serde_json::from_str(&header_line).map_err(|e| parse(format!("header: {e}")))?;
        if header.record != "header" {
            return Err(parse("first record must be the header".into()));
        }
        let mut events = Vec::new();
        let mut final_stats = None;
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(&line)
                .map_err(|e| parse(format!("line {}: {e}", lineno + 2)))?;
            match value.get("record").and_then(|v| v.as_str()) {
                Some("event") => {
                    let ev: EventLine = serde_json::from_value(value)
                        .map_err(|e| parse(format!("line {}: {e}", lineno + 2)))?;
                    events.push(ev.event);
                }
                Some("final") => {
                    let fin: FinalLine = serde_json::from_value(value)
                        .map_err(|e| parse(format!("line {}: {e}", lineno + 2)))?;
                    final_stats = Some(fin.final_stats);
                }
                other => {
                    return Err(parse(format!(
                        "line {}: unknown record {other:?}",
                        lineno + 2
                    )))
                }
            }
        }
        let final_stats = final_stats.ok_or_else(|| parse("missing final stats record".into()))?;
        Ok(Trajectory {
            run_id: header.run_id,
            allocator_tag: header.allocator_tag,
            flow_id: header.flow_id,
            seed: header.seed,
            config_digest: header.config_digest,
            events,
            final_stats,
        })
    }

    pub fn read_ldjson_file(path: &Path) -> Result<Self, CoreError> {
        let file = std::fs::File::open(path).map_err(|source| CoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_ldjson(std::io::BufReader::new(file)).map_err(|e| match e {
            CoreError::Parse { detail, .. } => CoreError::Parse {
                path: path.display().to_string(),
                detail,
            },
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(id: &str, truth: &str) -> TaskSpec {
        TaskSpec {
            task_id: id.into(),
            domain: TaskDomain::Math,
            prompt: format!("solve {id}"),
            ground_truth: truth.into(),
            source_tag: "unit".into(),
        }
    }

    fn sample_event(round: u32, task_id: &str, attempt: u32, reward: f64) -> AllocationEvent {
        AllocationEvent {
            round,
            task_id: task_id.into(),
            attempt,
            reasoning: String::new(),
            chosen: AgentId::new("AAA").unwrap(),
            answer: "x".into(),
            reward,
            cost: 0.5,
            running_roi: 1.0,
            running_fairness: 1.0,
        }
    }

    #[test]
    fn agent_id_format() {
        assert!(AgentId::new("AAA").is_ok());
        assert!(AgentId::new("AAAA").is_err());
        assert!(AgentId::new("aaa").is_err());
        assert!(AgentId::new("A1A").is_err());
    }

    #[test]
    fn agent_id_validated_on_deserialize() {
        assert!(serde_json::from_str::<AgentId>("\"AAA\"").is_ok());
        assert!(serde_json::from_str::<AgentId>("\"bad\"").is_err());
        assert!(serde_json::from_str::<AgentId>("\"ABCD\"").is_err());
        let json = serde_json::to_string(&AgentId::new("XYZ").unwrap()).unwrap();
        assert_eq!(json, "\"XYZ\"");
    }

    #[test]
    fn lenient_pool_load_reports_unknown_domain() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tasks.json");
        std::fs::write(
            &path,
            r#"[
                {"task_id": "t1", "domain": "math", "prompt": "p", "ground_truth": "1", "source_tag": "s"},
                {"task_id": "t2", "domain": "trivia", "prompt": "p", "ground_truth": "2", "source_tag": "s"}
            ]"#,
        )
        .unwrap();
        let (tasks, report) = load_pool_lenient(&path).unwrap();
        assert_eq!(tasks.len(), 1);
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(
            &report.violations[0],
            PoolViolation::UnknownDomain { task_id, domain } if task_id == "t2" && domain == "trivia"
        ));
    }

    #[test]
    fn validate_pool_ok() {
        let report = validate_pool(&[task("t1", "1"), task("t2", "2")]);
        assert!(report.is_ok());
    }

    #[test]
    fn validate_pool_duplicate_id() {
        let report = validate_pool(&[task("t1", "1"), task("t1", "2")]);
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(
            report.violations[0],
            PoolViolation::DuplicateId { .. }
        ));
    }

    #[test]
    fn validate_pool_empty_truth() {
        let report = validate_pool(&[task("t1", "")]);
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(
            report.violations[0],
            PoolViolation::EmptyGroundTruth { .. }
        ));
    }

    #[test]
    fn flow_rejects_duplicates_and_wrong_length() {
        let meta = ClusterMeta {
            intra_sim: 1.0,
            size: 2,
        };
        assert!(TaskFlow::new("f", vec!["a".into(), "a".into()], meta.clone()).is_err());
        let flow = TaskFlow::new("f", vec!["a".into(), "b".into()], meta).unwrap();
        assert!(flow.validate(2).is_ok());
        assert!(flow.validate(50).is_err());
    }

    #[test]
    fn stats_fold_and_derived() {
        let ids = ["AAA", "BBB", "CCC"].map(|s| AgentId::new(s).unwrap());
        let mut stats = CommunityStats::new(ids.clone());
        stats.record(&ids[0], 1.0, 0.25);
        stats.record(&ids[0], 0.0, 0.25);
        stats.record(&ids[1], 1.0, 0.5);
        assert_eq!(stats.counts(), vec![2.0, 1.0, 0.0]);
        assert_eq!(stats.total_reward, 2.0);
        assert_eq!(stats.total_cost, 1.0);
        assert_eq!(stats.global_roi(), 2.0);
        assert_eq!(stats.agent_roi(&ids[0]), 2.0);
        assert_eq!(stats.success_rate(&ids[0]), 0.5);
        assert_eq!(stats.agent_roi(&ids[2]), 0.0);
        let snap = stats.snapshot(3);
        assert_eq!(snap.swf, snap.fairness * snap.roi);
    }

    #[test]
    fn outcome_cost_model() {
        let outcome = ExecutionOutcome::new("ans", 800, 1.0, 7942.57);
        assert!((outcome.cost - 0.100723).abs() < 1e-6);
        let free = ExecutionOutcome::new("", 0, 0.0, 100.0);
        assert_eq!(free.cost, 0.0);
    }

    #[test]
    fn trajectory_roundtrip_and_ordering() {
        let ids = ["AAA", "BBB"].map(|s| AgentId::new(s).unwrap());
        let events = vec![
            sample_event(1, "t1", 1, 0.0),
            sample_event(2, "t1", 2, 1.0),
            sample_event(3, "t2", 1, 1.0),
        ];
        let mut stats = CommunityStats::new(ids.clone());
        for e in &events {
            stats.record(&e.chosen, e.reward, e.cost);
        }
        let trajectory = Trajectory {
            run_id: "run".into(),
            allocator_tag: "random".into(),
            flow_id: "f0".into(),
            seed: 42,
            config_digest: "digest".into(),
            events,
            final_stats: stats,
        };
        trajectory.validate_ordering().unwrap();
        let text = trajectory.to_ldjson();
        let back = Trajectory::read_ldjson(text.as_bytes()).unwrap();
        assert_eq!(back, trajectory);
        assert_eq!(
            back.recompute_stats(ids),
            trajectory.final_stats,
            "fold/recompute equivalence"
        );
    }

    #[test]
    fn trajectory_ordering_violations() {
        let mut t = Trajectory {
            run_id: "r".into(),
            allocator_tag: "a".into(),
            flow_id: "f".into(),
            seed: 0,
            config_digest: "d".into(),
            events: vec![sample_event(2, "t1", 1, 1.0)],
            final_stats: CommunityStats::new([]),
        };
        assert!(t.validate_ordering().is_err());
        t.events = vec![sample_event(1, "t1", 1, 0.0), sample_event(2, "t1", 1, 1.0)];
        assert!(t.validate_ordering().is_err());
    }

    proptest::proptest! {
        #[test]
        fn trajectory_ldjson_roundtrip_arbitrary_text(
            texts in proptest::collection::vec((proptest::arbitrary::any::<String>(), proptest::arbitrary::any::<String>()), 1..6),
        ) {
            let ids = ["AAA", "BBB"].map(|s| AgentId::new(s).unwrap());
            let mut stats = CommunityStats::new(ids.clone());
            let mut events = Vec::new();
            for (i, (reasoning, answer)) in texts.into_iter().enumerate() {
                let event = AllocationEvent {
                    round: i as u32 + 1,
                    task_id: format!("t{i}"),
                    attempt: 1,
                    reasoning,
                    chosen: ids[i % 2].clone(),
                    answer,
                    reward: 1.0,
                    cost: 0.25,
                    running_roi: 4.0,
                    running_fairness: 1.0,
                };
                stats.record(&event.chosen, event.reward, event.cost);
                events.push(event);
            }
            let trajectory = Trajectory {
                run_id: "run".into(),
                allocator_tag: "tag".into(),
                flow_id: "flow".into(),
                seed: 7,
                config_digest: "digest".into(),
                events,
                final_stats: stats,
            };
            let text = trajectory.to_ldjson();
            let back = Trajectory::read_ldjson(text.as_bytes()).unwrap();
            proptest::prop_assert_eq!(back, trajectory);
        }
    }

    #[test]
    fn serialization_roundtrip_all_types() {
        let profile = RecipientProfile {
            agent_id: AgentId::new("AAA").unwrap(),
            scores: BTreeMap::from([("Average".to_string(), 46.6)]),
            throughput: 1234.5,
        };
        let json = serde_json::to_string(&profile).unwrap();
        assert_eq!(
            serde_json::from_str::<RecipientProfile>(&json).unwrap(),
            profile
        );

        let t = task("t1", "42");
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"domain\":\"math\""));
        assert_eq!(serde_json::from_str::<TaskSpec>(&json).unwrap(), t);

        let outcome = ExecutionOutcome::new("a", 10, 1.0, 5.0);
        let json = serde_json::to_string(&outcome).unwrap();
        assert_eq!(
            serde_json::from_str::<ExecutionOutcome>(&json).unwrap(),
            outcome
        );
    }
}
