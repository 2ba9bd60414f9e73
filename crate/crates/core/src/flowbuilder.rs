//! Dilemma construction: orientation vectors, similarity matrix, clustering,
//! and flow assembly.
//!
//! A task's orientation vector is the reward every roster agent earned on it.
//! Tasks whose orientation vectors correlate induce the same performance
//! hierarchy, so clustering them into flows keeps that hierarchy stable over
//! a long run, which is what makes the efficiency-fairness dilemma persist.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::spearman;
use crate::oracle::RewardCache;
use crate::types::{ClusterMeta, RecipientProfile, TaskFlow};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("cache is missing the pair {task_id}/{agent_id}")]
    IncompleteCache { task_id: String, agent_id: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no cluster holds at least {flow_len} tasks; nothing to emit")]
    EmptyOutput { flow_len: usize },
}

/// Per-task fingerprint: every roster agent's reward on the task, in roster
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationVector {
    pub task_id: String,
    pub rewards: Vec<f64>,
}

/// Builds one orientation vector per task in the cache, agents ordered by
/// the roster. Every (task, agent) pair must be present.
pub fn build_orientations(
    cache: &RewardCache,
    roster: &[RecipientProfile],
) -> Result<Vec<OrientationVector>, FlowError> {
    let task_ids = cache.task_ids();
    let mut vectors = Vec::with_capacity(task_ids.len());
    for task_id in task_ids {
        let mut rewards = Vec::with_capacity(roster.len());
        for profile in roster {
            let entry = cache.get(&task_id, &profile.agent_id).ok_or_else(|| {
                FlowError::IncompleteCache {
                    task_id: task_id.clone(),
                    agent_id: profile.agent_id.to_string(),
                }
            })?;
            rewards.push(entry.reward);
        }
        vectors.push(OrientationVector { task_id, rewards });
    }
    Ok(vectors)
}

/// Pairwise Spearman similarities between task orientation vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub task_ids: Vec<String>,
    /// Row-major n x n similarities.
    sims: Vec<f64>,
    /// Tasks whose orientation vector is constant; they carry no hierarchy
    /// signal and have similarity 0 to everything, including themselves.
    pub degenerate: Vec<bool>,
}

impl SimilarityMatrix {
    pub fn n(&self) -> usize {
        self.task_ids.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.sims[i * self.n() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.sims[i * self.n()..(i + 1) * self.n()]
    }

    /// Indices of non-degenerate tasks.
    pub fn active_tasks(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.degenerate[i]).collect()
    }

    /// Mean pairwise similarity over non-degenerate task pairs.
    pub fn pool_mean_similarity(&self) -> f64 {
        let active = self.active_tasks();
        let mut total = 0.0;
        let mut pairs = 0u64;
        for (a, &i) in active.iter().enumerate() {
            for &j in &active[a + 1..] {
                total += self.get(i, j);
                pairs += 1;
            }
        }
        if pairs == 0 {
            0.0
        } else {
            total / pairs as f64
        }
    }

    /// Mean pairwise similarity among the given tasks.
    pub fn mean_similarity_among(&self, indices: &[usize]) -> f64 {
        let mut total = 0.0;
        let mut pairs = 0u64;
        for (a, &i) in indices.iter().enumerate() {
            for &j in &indices[a + 1..] {
                total += self.get(i, j);
                pairs += 1;
            }
        }
        if pairs == 0 {
            0.0
        } else {
            total / pairs as f64
        }
    }

    /// CSV dump for inspection: header row of task ids, then one row per
    /// task with 6-decimal similarities.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task_id");
        for id in &self.task_ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for i in 0..self.n() {
            out.push_str(&self.task_ids[i]);
            for j in 0..self.n() {
                out.push_str(&format!(",{:.6}", self.get(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

/// Computes the pairwise tie-corrected Spearman similarity matrix.
/// Constant vectors are flagged degenerate and get similarity 0 everywhere.
pub fn similarity_matrix(vectors: &[OrientationVector]) -> Result<SimilarityMatrix, FlowError> {
    if vectors.len() < 2 {
        return Err(FlowError::InvalidInput(format!(
            "similarity matrix needs at least 2 tasks, got {}",
            vectors.len()
        )));
    }
    let n = vectors.len();
    let degenerate: Vec<bool> = vectors
        .iter()
        .map(|v| v.rewards.windows(2).all(|w| w[0] == w[1]))
        .collect();
    // rows are independent, so the upper triangle parallelizes cleanly;
    // assembly by row index keeps the result deterministic
    let rows: Result<Vec<Vec<f64>>, FlowError> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; n];
            if degenerate[i] {
                return Ok(row);
            }
            row[i] = 1.0;
            for j in i + 1..n {
                if degenerate[j] {
                    continue;
                }
                let s = spearman(&vectors[i].rewards, &vectors[j].rewards)
                    .map_err(|e| FlowError::InvalidInput(e.to_string()))?;
                row[j] = if s.degenerate { 0.0 } else { s.rho };
            }
            Ok(row)
        })
        .collect();
    let rows = rows?;
    let mut sims = vec![0.0; n * n];
    for (i, row) in rows.into_iter().enumerate() {
        for (j, value) in row.into_iter().enumerate().skip(i) {
            sims[i * n + j] = value;
            sims[j * n + i] = value;
        }
    }
    Ok(SimilarityMatrix {
        task_ids: vectors.iter().map(|v| v.task_id.clone()).collect(),
        sims,
        degenerate,
    })
}

/// Which feature vectors K-means clusters on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSpace {
    /// Each task embeds as its row of the similarity matrix; preserves the
    /// pairwise Spearman structure directly.
    #[default]
    SimilarityRows,
    /// Cluster the raw 0/1 orientation vectors instead; alternate mode for
    /// comparison.
    RawOrientations,
}

/// Result of clustering the non-degenerate tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Matrix indices of member tasks, one list per cluster.
    pub clusters: Vec<Vec<usize>>,
    /// Task ids excluded as degenerate.
    pub excluded: Vec<String>,
    /// Sum of squared distances to centroids after each Lloyd iteration.
    pub inertia_history: Vec<f64>,
}

/// K-means over each task's similarity-profile row (see [`FeatureSpace`]).
///
/// k-means++ seeding from the given seed, at most 100 Lloyd iterations,
/// convergence when no centroid moves more than 1e-6, empty clusters
/// re-seeded from the farthest point. Deterministic for a given seed.
pub fn cluster_tasks(
    matrix: &SimilarityMatrix,
    k: usize,
    seed: u64,
) -> Result<ClusterAssignment, FlowError> {
    cluster_tasks_with(matrix, None, k, seed)
}

/// As [`cluster_tasks`], with a choice of feature space. Raw orientation
/// mode needs the vectors the matrix was built from, in the same order.
pub fn cluster_tasks_with(
    matrix: &SimilarityMatrix,
    raw_vectors: Option<&[OrientationVector]>,
    k: usize,
    seed: u64,
) -> Result<ClusterAssignment, FlowError> {
    let active = matrix.active_tasks();
    if k < 1 || k > active.len() {
        return Err(FlowError::InvalidInput(format!(
            "k must be in 1..={} (non-degenerate tasks), got {k}",
            active.len()
        )));
    }
    let features: Vec<Vec<f64>> = match raw_vectors {
        None => active.iter().map(|&i| matrix.row(i).to_vec()).collect(),
        Some(vectors) => {
            if vectors.len() != matrix.n() {
                return Err(FlowError::InvalidInput(
                    "raw vectors must match the matrix task order".into(),
                ));
            }
            active.iter().map(|&i| vectors[i].rewards.clone()).collect()
        }
    };
    let (assignment, inertia_history) = kmeans(&features, k, seed);
    let mut clusters = vec![Vec::new(); k];
    for (point, &cluster) in assignment.iter().enumerate() {
        clusters[cluster].push(active[point]);
    }
    let excluded = (0..matrix.n())
        .filter(|&i| matrix.degenerate[i])
        .map(|i| matrix.task_ids[i].clone())
        .collect();
    Ok(ClusterAssignment {
        clusters,
        excluded,
        inertia_history,
    })
}

const KMEANS_MAX_ITERS: usize = 100;
const KMEANS_TOL: f64 = 1e-6;

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Plain Lloyd's algorithm with k-means++ seeding. Ties in the assignment
/// step go to the lowest cluster index, keeping the result deterministic.
fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> (Vec<usize>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut assignment = vec![0usize; points.len()];
    let mut inertia_history = Vec::new();

    for _ in 0..KMEANS_MAX_ITERS {
        // assignment step
        let mut inertia = 0.0;
        for (i, point) in points.iter().enumerate() {
            let (best, dist) = centroids
                .iter()
                .enumerate()
                .map(|(c, centroid)| (c, squared_distance(point, centroid)))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
                .expect("k >= 1");
            assignment[i] = best;
            inertia += dist;
        }
        inertia_history.push(inertia);

        // update step
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (point, &cluster) in points.iter().zip(&assignment) {
            counts[cluster] += 1;
            for (acc, v) in sums[cluster].iter_mut().zip(point) {
                *acc += v;
            }
        }
        let mut movement: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed an empty cluster from the farthest point
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = squared_distance(&points[a], &centroids[assignment[a]]);
                        let db = squared_distance(&points[b], &centroids[assignment[b]]);
                        da.partial_cmp(&db).unwrap()
                    })
                    .expect("non-empty point set");
                let moved = squared_distance(&centroids[c], &points[far]).sqrt();
                centroids[c] = points[far].clone();
                assignment[far] = c;
                movement = movement.max(moved);
                continue;
            }
            let mut new_centroid = sums[c].clone();
            for v in &mut new_centroid {
                *v /= counts[c] as f64;
            }
            movement = movement.max(squared_distance(&centroids[c], &new_centroid).sqrt());
            centroids[c] = new_centroid;
        }
        if movement <= KMEANS_TOL {
            break;
        }
    }

    // final assignment against the settled centroids
    for (i, point) in points.iter().enumerate() {
        assignment[i] = centroids
            .iter()
            .enumerate()
            .map(|(c, centroid)| (c, squared_distance(point, centroid)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
            .map(|(c, _)| c)
            .expect("k >= 1");
    }
    (assignment, inertia_history)
}

/// k-means++ seeding: first centroid uniform, the rest sampled with
/// probability proportional to squared distance from the nearest chosen one.
fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())].clone());
    while centroids.len() < k {
        let weights: Vec<f64> = points
            .iter()
            .map(|p| {
                centroids
                    .iter()
                    .map(|c| squared_distance(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let next = if total == 0.0 {
            // all points coincide with chosen centroids; any point works
            rng.gen_range(0..points.len())
        } else {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if target < *w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        };
        centroids.push(points[next].clone());
    }
    centroids
}

/// Flows cut from the clusters, plus the clusters that were too small.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowBatch {
    pub flows: Vec<TaskFlow>,
    /// (cluster index, size) of clusters skipped for holding fewer tasks
    /// than one flow needs.
    pub skipped: Vec<(usize, usize)>,
}

/// Cuts `floor(size / flow_len)` flows from every cluster by seeded sampling
/// without replacement. Flows within a cluster are pairwise disjoint; each
/// flow's `cluster_meta` records its mean intra-flow similarity and the
/// source cluster size.
pub fn assemble_flows(
    assignment: &ClusterAssignment,
    matrix: &SimilarityMatrix,
    flow_len: usize,
    seed: u64,
) -> Result<FlowBatch, FlowError> {
    if flow_len == 0 {
        return Err(FlowError::InvalidInput("flow_len must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flows = Vec::new();
    let mut skipped = Vec::new();
    for (cluster_index, members) in assignment.clusters.iter().enumerate() {
        if members.len() < flow_len {
            skipped.push((cluster_index, members.len()));
            continue;
        }
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        let count = shuffled.len() / flow_len;
        for flow_index in 0..count {
            let chunk = &shuffled[flow_index * flow_len..(flow_index + 1) * flow_len];
            let task_ids: Vec<String> = chunk.iter().map(|&i| matrix.task_ids[i].clone()).collect();
            let meta = ClusterMeta {
                intra_sim: matrix.mean_similarity_among(chunk),
                size: members.len(),
            };
            let flow = TaskFlow::new(
                format!("c{cluster_index:02}-f{flow_index:02}"),
                task_ids,
                meta,
            )
            .map_err(|e| FlowError::InvalidInput(e.to_string()))?;
            flows.push(flow);
        }
    }
    if flows.is_empty() {
        return Err(FlowError::EmptyOutput { flow_len });
    }
    Ok(FlowBatch { flows, skipped })
}

/// Serializes flows as a JSON array in the shared TaskFlow schema.
pub fn flows_to_json(flows: &[TaskFlow]) -> String {
    serde_json::to_string_pretty(flows).expect("flows serialize")
}

pub fn flows_from_json(text: &str) -> Result<Vec<TaskFlow>, FlowError> {
    serde_json::from_str(text).map_err(|e| FlowError::InvalidInput(e.to_string()))
}
