//! The allocation simulation loop.
//!
//! For each task in a flow: ask the allocator for a recipient, execute the
//! task on the backend, grade, fold the result into the community stats,
//! render the environment feedback, and repeat until the task succeeds or
//! the retry budget is spent. The full run is recorded as a [`Trajectory`].

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::allocators::{Allocator, DecisionContext, TaskOutcome, TurnRecord};
use crate::oracle::ExecBackend;
use crate::prompts::PromptAssets;
use crate::types::{
    AgentId, AllocationEvent, CommunityStats, RecipientProfile, TaskFlow, TaskSpec, Trajectory,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid run config: {0}")]
    Invalid(String),
    #[error("run aborted: {reason}")]
    Aborted {
        reason: String,
        /// Everything recorded up to the failure.
        partial: Box<Trajectory>,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackStyle {
    #[default]
    FullTable,
}

/// Per-run engine settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Maximum reassignments of a failed task before the flow advances.
    #[serde(default = "default_max_retry")]
    pub max_retry: u32,
    #[serde(default)]
    pub flow_id: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_reward_scale")]
    pub reward_scale: f64,
    #[serde(default)]
    pub feedback_style: FeedbackStyle,
    /// Number of most recent turns shown to an LLM allocator.
    #[serde(default = "default_history_window")]
    pub history_window: usize,
}

fn default_max_retry() -> u32 {
    3
}

fn default_reward_scale() -> f64 {
    1.0
}

fn default_history_window() -> usize {
    3
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_retry: default_max_retry(),
            flow_id: String::new(),
            seed: 0,
            reward_scale: default_reward_scale(),
            feedback_style: FeedbackStyle::FullTable,
            history_window: default_history_window(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.reward_scale <= 0.0 || self.reward_scale.is_nan() {
            return Err(EngineError::Invalid("reward_scale must be positive".into()));
        }
        if self.history_window == 0 {
            return Err(EngineError::Invalid(
                "history_window must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Stable per-run seed derived from the batch seed and run coordinates.
pub fn derive_run_seed(base_seed: u64, allocator_tag: &str, flow_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base_seed.to_le_bytes());
    hasher.update(allocator_tag.as_bytes());
    hasher.update(b"/");
    hasher.update(flow_id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

fn trim_decimal(value: f64) -> String {
    let s = format!("{value:.2}");
    let trimmed = s.trim_end_matches('0').trim_end_matches('.');
    if trimmed.is_empty() {
        "0".to_string()
    } else {
        trimmed.to_string()
    }
}

/// Renders the environment feedback shown to the allocator after an event:
/// outcome lead sentence, community summary to two decimals, the per-member
/// track-record table sorted by name, and the fixed caption block.
pub fn render_feedback(
    stats: &CommunityStats,
    last: &AllocationEvent,
    task_outcome: TaskOutcome,
    assets: &PromptAssets,
) -> String {
    let lead = match task_outcome {
        TaskOutcome::Failure => format!(
            "Unfortunately, {} has not completed the task (task id of {}). You can reassign \
             this task to another member within <agent></agent> tags.",
            last.chosen, last.task_id
        ),
        TaskOutcome::Success => format!(
            "Great! {} has completed the task (task id of {}). The environment will present \
             the next task.",
            last.chosen, last.task_id
        ),
    };
    let global_roi = stats.global_roi();
    let mut text = String::new();
    text.push_str(&lead);
    text.push('\n');
    text.push_str(
        "Due to the limited space, the summarized overall review of history task-solving is as follows:\n",
    );
    text.push_str(&format!("The total cost is {:.2}.\n", stats.total_cost));
    text.push_str(&format!(
        "The totol reward is {:.2}. \n",
        stats.total_reward
    ));
    text.push_str(&format!(
        "The overal ROI (e.g., reward / cost) is {global_roi:.2}.\n"
    ));
    text.push_str(&format!("The Gini Coefficient is {:.2}.\n", stats.gini()));
    text.push_str("Statistics of each member are evaluated as below:\n");
    text.push_str("|   | Name| Task Count | Reward |  Cost  | Success% |        ROI|\n");
    text.push_str("|--:|:----|-----------:|-------:|-------:|---------:|-----------:|\n");
    for (index, (agent, tally)) in stats.agents.iter().enumerate() {
        let avg_cost = if tally.task_count > 0 {
            tally.total_cost / tally.task_count as f64
        } else {
            0.0
        };
        let member_roi = stats.agent_roi(agent);
        let level = if member_roi > global_roi {
            "high"
        } else {
            "low"
        };
        let roi_cell = format!("{member_roi:.0} ({level})");
        text.push_str(&format!(
            "|{index:>2} | {agent} |{count:>11} |{reward:>7} |{cost:>7} |{success:>9} |{roi_cell:>11}|\n",
            count = tally.task_count,
            reward = trim_decimal(tally.total_reward),
            cost = format!("{avg_cost:.3}"),
            success = trim_decimal(stats.success_rate(agent)),
        ));
    }
    text.push('\n');
    text.push_str(&assets.feedback_caption);
    text
}

/// Runs one flow to completion under the given allocator and backend.
///
/// Aborts (carrying the partial trajectory) when the allocator's transport
/// permanently fails or when the backend cannot resolve a task.
#[allow(clippy::too_many_arguments)]
pub fn run_flow(
    flow: &TaskFlow,
    pool: &BTreeMap<String, TaskSpec>,
    roster: &[RecipientProfile],
    allocator: &mut dyn Allocator,
    backend: &mut dyn ExecBackend,
    config: &RunConfig,
    config_digest: &str,
    assets: &PromptAssets,
) -> Result<Trajectory, EngineError> {
    config.validate()?;
    if roster.len() < 2 {
        return Err(EngineError::Invalid(
            "roster needs at least 2 recipients".into(),
        ));
    }
    if !config.flow_id.is_empty() && config.flow_id != flow.flow_id {
        return Err(EngineError::Invalid(format!(
            "config names flow {} but the flow is {}",
            config.flow_id, flow.flow_id
        )));
    }
    let profiles_by_id: BTreeMap<&AgentId, &RecipientProfile> =
        roster.iter().map(|p| (&p.agent_id, p)).collect();
    let run_id = format!("{}__{}", allocator.tag(), flow.flow_id);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut stats = CommunityStats::new(roster.iter().map(|p| p.agent_id.clone()));
    let mut events: Vec<AllocationEvent> = Vec::new();
    let mut recent: Vec<TurnRecord> = Vec::new();
    let mut round: u32 = 0;

    macro_rules! abort {
        ($($arg:tt)*) => {
            return Err(EngineError::Aborted {
                reason: format!($($arg)*),
                partial: Box::new(Trajectory {
                    run_id: run_id.clone(),
                    allocator_tag: allocator.tag().to_string(),
                    flow_id: flow.flow_id.clone(),
                    seed: config.seed,
                    config_digest: config_digest.to_string(),
                    events,
                    final_stats: stats,
                }),
            })
        };
    }

    'tasks: for task_id in &flow.task_ids {
        let task = match pool.get(task_id) {
            Some(task) => task,
            None => abort!("task {task_id} is not in the pool"),
        };
        let mut excluded: BTreeSet<AgentId> = BTreeSet::new();
        for attempt in 1..=config.max_retry + 1 {
            round += 1;
            let decision = {
                let ctx = DecisionContext {
                    task,
                    stats: &stats,
                    recent_turns: &recent,
                    profiles: roster,
                    attempt,
                    excluded: &excluded,
                };
                match allocator.decide(&ctx, &mut rng) {
                    Ok(decision) => decision,
                    Err(e) => abort!("allocator failed at round {round}: {e}"),
                }
            };
            let profile = match profiles_by_id.get(&decision.chosen) {
                Some(profile) => *profile,
                None => abort!(
                    "allocator chose {} which is not in the roster",
                    decision.chosen
                ),
            };
            let outcome = match backend.execute(profile, task, config.reward_scale) {
                Ok(outcome) => outcome,
                Err(e) => abort!("backend failed at round {round}: {e}"),
            };
            stats.record(&decision.chosen, outcome.reward, outcome.cost);
            let snapshot = stats.snapshot(round);
            let event = AllocationEvent {
                round,
                task_id: task.task_id.clone(),
                attempt,
                reasoning: decision.reasoning,
                chosen: decision.chosen.clone(),
                answer: outcome.answer,
                reward: outcome.reward,
                cost: outcome.cost,
                running_roi: snapshot.roi,
                running_fairness: snapshot.fairness,
            };
            let task_outcome = if event.reward > 0.0 {
                TaskOutcome::Success
            } else {
                TaskOutcome::Failure
            };
            let feedback = render_feedback(&stats, &event, task_outcome, assets);
            events.push(event);
            recent.push(TurnRecord {
                agent: decision.chosen.clone(),
                outcome: task_outcome,
                feedback,
            });
            if recent.len() > config.history_window {
                recent.remove(0);
            }
            if task_outcome == TaskOutcome::Success {
                continue 'tasks;
            }
            excluded.insert(decision.chosen);
        }
    }

    Ok(Trajectory {
        run_id,
        allocator_tag: allocator.tag().to_string(),
        flow_id: flow.flow_id.clone(),
        seed: config.seed,
        config_digest: config_digest.to_string(),
        events,
        final_stats: stats,
    })
}
