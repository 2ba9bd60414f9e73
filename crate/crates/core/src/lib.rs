//! Simulation engine for the social-welfare allocation benchmark.
//!
//! A sovereign allocator (heuristic or LLM-backed) distributes a long flow
//! of tasks across a community of recipient agents. Runs are scored by
//! fairness (1 - Gini of per-agent task counts), efficiency (reward over
//! cost), and their product. The crate covers the whole pipeline: domain
//! types, metrics, recipient execution backends, the simulation loop,
//! allocation strategies, dilemma flow construction from graded task pools,
//! and report aggregation.

pub mod allocators;
pub mod engine;
pub mod flowbuilder;
pub mod llmclient;
pub mod metrics;
pub mod oracle;
pub mod prompts;
pub mod report;
pub mod types;

pub use engine::{derive_run_seed, render_feedback, run_flow, RunConfig};
pub use types::{
    AgentId, AllocationEvent, CommunityStats, ExecutionOutcome, RecipientProfile, TaskDomain,
    TaskFlow, TaskSpec, Trajectory,
};
