//! End-to-end engine runs with the LLM allocator against a scripted stub.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use swfbench_core::allocators::{LlmAllocator, PromptVariant};
use swfbench_core::engine::{run_flow, EngineError, RunConfig};
use swfbench_core::llmclient::{ChatClient, ClientConfig};
use swfbench_core::oracle::{SyntheticAgentSpec, SyntheticBackend};
use swfbench_core::prompts::PromptAssets;
use swfbench_core::types::{
    AgentId, ClusterMeta, RecipientProfile, TaskDomain, TaskFlow, TaskSpec,
};

mod common;
use common::{ok_body, spawn_stub};

fn agent(i: usize) -> AgentId {
    AgentId::new(String::from_utf8(vec![b'A' + i as u8; 3]).unwrap()).unwrap()
}

fn roster(n: usize) -> Vec<RecipientProfile> {
    (0..n)
        .map(|i| RecipientProfile {
            agent_id: agent(i),
            scores: swfbench_core::prompts::SCORE_COLUMNS
                .iter()
                .map(|c| (c.to_string(), 40.0 + i as f64))
                .collect(),
            throughput: 1000.0,
        })
        .collect()
}

fn pool(n: usize) -> BTreeMap<String, TaskSpec> {
    (0..n)
        .map(|i| {
            let id = format!("t{i}");
            (
                id.clone(),
                TaskSpec {
                    task_id: id,
                    domain: TaskDomain::Math,
                    prompt: format!("problem {i}"),
                    ground_truth: format!("{i}"),
                    source_tag: "pool".into(),
                },
            )
        })
        .collect()
}

fn flow(pool: &BTreeMap<String, TaskSpec>) -> TaskFlow {
    TaskFlow::new(
        "f0",
        pool.keys().cloned().collect(),
        ClusterMeta {
            intra_sim: 1.0,
            size: pool.len(),
        },
    )
    .unwrap()
}

fn specs(n: usize, success: f64) -> Vec<SyntheticAgentSpec> {
    (0..n)
        .map(|i| SyntheticAgentSpec {
            agent_id: agent(i),
            success_prob: BTreeMap::from([("*".to_string(), success)]),
            token_mean: 300.0,
            token_dispersion: 50.0,
        })
        .collect()
}

fn client(max_attempts: u32) -> Arc<ChatClient> {
    Arc::new(
        ChatClient::new(ClientConfig {
            max_attempts,
            initial_backoff: Duration::from_millis(2),
            backoff_factor: 2.0,
            max_inflight: 2,
        })
        .unwrap(),
    )
}

fn llm_allocator(url: String, attempts: u32) -> LlmAllocator {
    LlmAllocator::new(
        client(attempts),
        Arc::new(PromptAssets::embedded().unwrap()),
        url,
        "stub-model",
        None,
        PromptVariant::default(),
        Duration::from_secs(5),
        None,
        "llm-stub",
    )
}

#[test]
fn llm_allocator_follows_the_tag() {
    let stub = spawn_stub(vec![(
        200,
        ok_body("Given the workload I choose <agent> CCC </agent> here."),
    )]);
    let pool = pool(3);
    let flow = flow(&pool);
    let roster = roster(4);
    let mut backend = SyntheticBackend::new(specs(4, 1.0), 5);
    let mut allocator = llm_allocator(stub.url(), 3);
    let assets = PromptAssets::embedded().unwrap();
    let trajectory = run_flow(
        &flow,
        &pool,
        &roster,
        &mut allocator,
        &mut backend,
        &RunConfig {
            seed: 1,
            ..RunConfig::default()
        },
        "digest",
        &assets,
    )
    .unwrap();
    assert_eq!(trajectory.events.len(), 3);
    assert!(trajectory
        .events
        .iter()
        .all(|e| e.chosen == AgentId::new("CCC").unwrap()));
    assert!(trajectory.events[0].reasoning.contains("I choose"));
    assert_eq!(trajectory.allocator_tag, "llm-stub");
}

#[test]
fn protocol_violations_requery_then_fall_back() {
    // never a valid tag: one initial query plus three re-queries per decision
    let stub = spawn_stub(vec![(200, ok_body("thinking without any selection"))]);
    let pool = pool(1);
    let flow = flow(&pool);
    let roster = roster(3);
    let mut backend = SyntheticBackend::new(specs(3, 1.0), 5);
    let mut allocator = llm_allocator(stub.url(), 1);
    let assets = PromptAssets::embedded().unwrap();
    let trajectory = run_flow(
        &flow,
        &pool,
        &roster,
        &mut allocator,
        &mut backend,
        &RunConfig {
            seed: 9,
            ..RunConfig::default()
        },
        "digest",
        &assets,
    )
    .unwrap();
    assert_eq!(trajectory.events.len(), 1);
    let event = &trajectory.events[0];
    assert!(event.reasoning.starts_with("[protocol-violation]"));
    assert!(roster.iter().any(|p| p.agent_id == event.chosen));
    assert_eq!(stub.hits.load(std::sync::atomic::Ordering::SeqCst), 4);
}

#[test]
fn transport_failure_aborts_with_partial_trajectory() {
    let stub = spawn_stub(vec![(500, String::new())]);
    let pool = pool(2);
    let flow = flow(&pool);
    let roster = roster(3);
    let mut backend = SyntheticBackend::new(specs(3, 1.0), 5);
    let mut allocator = llm_allocator(stub.url(), 2);
    let assets = PromptAssets::embedded().unwrap();
    let err = run_flow(
        &flow,
        &pool,
        &roster,
        &mut allocator,
        &mut backend,
        &RunConfig::default(),
        "digest",
        &assets,
    )
    .unwrap_err();
    match err {
        EngineError::Aborted { reason, partial } => {
            assert!(reason.contains("allocator failed"));
            assert!(partial.events.is_empty());
        }
        other => panic!("expected abort, got {other:?}"),
    }
}
