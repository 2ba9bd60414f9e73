//! Allocation strategies behind a single decision contract.
//!
//! Four heuristics (random, fairness-, efficiency-, and hybrid-oriented)
//! plus the LLM allocator, which assembles the system prompt from the
//! pinned templates, queries a chat endpoint, and parses the selection tag
//! out of the completion.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llmclient::{ApiKey, ChatClient, ChatMessage, ChatRequest, ClientError};
use crate::prompts::{render_system_prompt, render_task_statement, PromptAssets, PromptError};
use crate::types::{AgentId, CommunityStats, RecipientProfile, TaskSpec};

/// How many times a protocol-violating completion is re-queried before the
/// allocator falls back to a uniform random choice.
pub const REQUERY_LIMIT: u32 = 3;

#[derive(Debug, Error)]
pub enum AllocatorError {
    #[error("no recipient profiles available")]
    NoProfiles,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Client(#[from] ClientError),
}

/// Whether the task attempt recorded by a turn succeeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskOutcome {
    Success,
    Failure,
}

/// One completed turn as remembered inside the sliding history window.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnRecord {
    pub agent: AgentId,
    pub outcome: TaskOutcome,
    pub feedback: String,
}

/// Everything an allocator sees when deciding one round.
pub struct DecisionContext<'a> {
    pub task: &'a TaskSpec,
    pub stats: &'a CommunityStats,
    /// At most `history_window` most recent turns, oldest first.
    pub recent_turns: &'a [TurnRecord],
    pub profiles: &'a [RecipientProfile],
    /// 1-based attempt number for the current task.
    pub attempt: u32,
    /// Agents that already failed this task. Advisory: strategies are free
    /// to reassign to the same agent.
    pub excluded: &'a BTreeSet<AgentId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub chosen: AgentId,
    pub reasoning: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptBase {
    #[default]
    Vanilla,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthMode {
    #[default]
    None,
    Concise,
    ExtremeShort,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Influence {
    #[default]
    None,
    Temptation,
    Threat,
    Identification,
    Internalization,
}

/// Prompt assembly variant: at most one length constraint and one social
/// influence addendum on top of the vanilla system prompt.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptVariant {
    #[serde(default)]
    pub base: PromptBase,
    #[serde(default)]
    pub length_mode: LengthMode,
    #[serde(default)]
    pub influence: Influence,
}

impl PromptVariant {
    fn addenda<'a>(&self, assets: &'a PromptAssets) -> Vec<&'a str> {
        let mut addenda = Vec::new();
        match self.length_mode {
            LengthMode::None => {}
            LengthMode::Concise => addenda.push(assets.length_concise.as_str()),
            LengthMode::ExtremeShort => addenda.push(assets.length_extreme_short.as_str()),
        }
        match self.influence {
            Influence::None => {}
            Influence::Temptation => addenda.push(assets.influence_temptation.as_str()),
            Influence::Threat => addenda.push(assets.influence_threat.as_str()),
            Influence::Identification => addenda.push(assets.influence_identification.as_str()),
            Influence::Internalization => addenda.push(assets.influence_internalization.as_str()),
        }
        addenda
    }
}

/// Assembles the chat message list for one decision: the system prompt with
/// the roster table and variant addenda, one user turn per remembered
/// environment feedback, and the current task statement last.
pub fn build_prompt(
    ctx: &DecisionContext<'_>,
    variant: &PromptVariant,
    assets: &PromptAssets,
) -> Result<Vec<ChatMessage>, PromptError> {
    let system = render_system_prompt(assets, ctx.profiles, &variant.addenda(assets))?;
    let mut messages = Vec::with_capacity(ctx.recent_turns.len() + 2);
    messages.push(ChatMessage::system(system));
    for turn in ctx.recent_turns {
        messages.push(ChatMessage::user(turn.feedback.clone()));
    }
    messages.push(ChatMessage::user(render_task_statement(ctx.task)));
    Ok(messages)
}

/// Why a completion failed the selection protocol.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolViolation {
    #[error("completion contains no <agent></agent> tag")]
    NoTag,
    #[error("completion names unknown agent {0:?}")]
    UnknownAgent(String),
}

/// Extracts the selected agent from a completion: all `<agent>...</agent>`
/// spans are collected, inner whitespace is trimmed, and the last span must
/// name a valid agent.
///
/// Each closing tag pairs with the nearest preceding opening tag, so a
/// stray unclosed `<agent>` earlier in the text does not swallow the real
/// selection.
pub fn parse_choice(
    completion: &str,
    valid: &BTreeSet<String>,
) -> Result<String, ProtocolViolation> {
    const OPEN: &str = "<agent>";
    const CLOSE: &str = "</agent>";
    let mut cursor = 0;
    let mut last = None;
    while let Some(close_rel) = completion[cursor..].find(CLOSE) {
        let close = cursor + close_rel;
        if let Some(open_rel) = completion[cursor..close].rfind(OPEN) {
            let open = cursor + open_rel + OPEN.len();
            last = Some(completion[open..close].trim().to_string());
        }
        cursor = close + CLOSE.len();
    }
    let name = last.ok_or(ProtocolViolation::NoTag)?;
    if valid.contains(&name) {
        Ok(name)
    } else {
        Err(ProtocolViolation::UnknownAgent(name))
    }
}

/// The decision contract every allocation strategy implements.
pub trait Allocator {
    fn tag(&self) -> &str;

    fn decide(
        &mut self,
        ctx: &DecisionContext<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Decision, AllocatorError>;
}

/// Heuristic strategy selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Strategy {
    /// Uniform over all agents.
    Random,
    /// Fewest tasks so far; ties broken by runtime ROI, then profile
    /// Average, then agent id.
    FairnessOriented,
    /// Uniform over the top-K agents by runtime ROI.
    EfficiencyOriented { k: usize },
    /// Uniform over the top-6 agents by runtime ROI.
    Hybrid,
}

impl Strategy {
    pub fn default_tag(&self) -> String {
        match self {
            Strategy::Random => "random".into(),
            Strategy::FairnessOriented => "fairness-oriented".into(),
            Strategy::EfficiencyOriented { k } => format!("efficiency-top{k}"),
            Strategy::Hybrid => "hybrid".into(),
        }
    }
}

pub struct HeuristicAllocator {
    strategy: Strategy,
    tag: String,
}

impl HeuristicAllocator {
    pub fn new(strategy: Strategy) -> Self {
        let tag = strategy.default_tag();
        HeuristicAllocator { strategy, tag }
    }

    pub fn with_tag(strategy: Strategy, tag: impl Into<String>) -> Self {
        HeuristicAllocator {
            strategy,
            tag: tag.into(),
        }
    }
}

/// Orders agents by runtime attractiveness for the efficiency and hybrid
/// strategies: positive-ROI agents first (by ROI), then cold agents with no
/// history (by profile Average), then agents whose history earned nothing
/// (by profile Average). Agent id breaks remaining ties.
fn rank_by_runtime_roi(ctx: &DecisionContext<'_>) -> Vec<AgentId> {
    let mut ranked: Vec<(u8, f64, &AgentId)> = ctx
        .profiles
        .iter()
        .map(|p| {
            let tally = ctx.stats.agents.get(&p.agent_id);
            let count = tally.map_or(0, |t| t.task_count);
            let roi = ctx.stats.agent_roi(&p.agent_id);
            if roi > 0.0 {
                (0u8, roi, &p.agent_id)
            } else if count == 0 {
                (1u8, p.average(), &p.agent_id)
            } else {
                (2u8, p.average(), &p.agent_id)
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then_with(|| b.1.partial_cmp(&a.1).expect("finite keys"))
            .then_with(|| a.2.cmp(b.2))
    });
    ranked.into_iter().map(|(_, _, id)| id.clone()).collect()
}

fn decide_fairness(ctx: &DecisionContext<'_>) -> AgentId {
    ctx.profiles
        .iter()
        .map(|p| {
            let count = ctx
                .stats
                .agents
                .get(&p.agent_id)
                .map_or(0, |t| t.task_count);
            (
                count,
                ctx.stats.agent_roi(&p.agent_id),
                p.average(),
                &p.agent_id,
            )
        })
        .min_by(|a, b| {
            a.0.cmp(&b.0)
                .then_with(|| b.1.partial_cmp(&a.1).expect("finite roi"))
                .then_with(|| b.2.partial_cmp(&a.2).expect("finite average"))
                .then_with(|| a.3.cmp(b.3))
        })
        .map(|(_, _, _, id)| id.clone())
        .expect("profiles non-empty")
}

impl Allocator for HeuristicAllocator {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn decide(
        &mut self,
        ctx: &DecisionContext<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Decision, AllocatorError> {
        if ctx.profiles.is_empty() {
            return Err(AllocatorError::NoProfiles);
        }
        let chosen = match &self.strategy {
            Strategy::Random => {
                let idx = rng.gen_range(0..ctx.profiles.len());
                ctx.profiles[idx].agent_id.clone()
            }
            Strategy::FairnessOriented => decide_fairness(ctx),
            Strategy::EfficiencyOriented { k } => {
                let ranked = rank_by_runtime_roi(ctx);
                let pool = ranked.len().min((*k).max(1));
                ranked[rng.gen_range(0..pool)].clone()
            }
            Strategy::Hybrid => {
                let ranked = rank_by_runtime_roi(ctx);
                let pool = ranked.len().min(6);
                ranked[rng.gen_range(0..pool)].clone()
            }
        };
        Ok(Decision {
            chosen,
            reasoning: String::new(),
        })
    }
}

/// LLM-backed allocator speaking the chat-completions protocol.
pub struct LlmAllocator {
    client: Arc<ChatClient>,
    assets: Arc<PromptAssets>,
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<ApiKey>,
    pub variant: PromptVariant,
    pub timeout: Duration,
    pub max_output_tokens: Option<u32>,
    tag: String,
}

impl LlmAllocator {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        client: Arc<ChatClient>,
        assets: Arc<PromptAssets>,
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<ApiKey>,
        variant: PromptVariant,
        timeout: Duration,
        max_output_tokens: Option<u32>,
        tag: impl Into<String>,
    ) -> Self {
        LlmAllocator {
            client,
            assets,
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            variant,
            timeout,
            max_output_tokens,
            tag: tag.into(),
        }
    }
}

impl Allocator for LlmAllocator {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn decide(
        &mut self,
        ctx: &DecisionContext<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Decision, AllocatorError> {
        if ctx.profiles.is_empty() {
            return Err(AllocatorError::NoProfiles);
        }
        let messages = build_prompt(ctx, &self.variant, &self.assets)?;
        let request = ChatRequest {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            messages,
            temperature: 1.0,
            max_output_tokens: self.max_output_tokens,
            timeout: self.timeout,
            api_key: self.api_key.clone(),
        };
        let valid: BTreeSet<String> = ctx
            .profiles
            .iter()
            .map(|p| p.agent_id.to_string())
            .collect();
        let mut last_text = String::new();
        for _ in 0..=REQUERY_LIMIT {
            let response = self.client.complete(&request)?;
            last_text = response.text;
            if let Ok(name) = parse_choice(&last_text, &valid) {
                let chosen = ctx
                    .profiles
                    .iter()
                    .find(|p| p.agent_id.as_str() == name)
                    .expect("parse_choice only returns valid names")
                    .agent_id
                    .clone();
                return Ok(Decision {
                    chosen,
                    reasoning: last_text,
                });
            }
        }
        // protocol exhausted: fall back to a uniform random pick and flag it
        let idx = rng.gen_range(0..ctx.profiles.len());
        Ok(Decision {
            chosen: ctx.profiles[idx].agent_id.clone(),
            reasoning: format!("[protocol-violation] {last_text}"),
        })
    }
}
