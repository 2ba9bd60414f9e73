//! Aggregation of trajectories into the leaderboard, the scatter export, and
//! the profile-bias correlation analysis.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{aggregate_runs, spearman, spearman_pvalue, MetricSnapshot, MetricsError};
use crate::types::{RecipientProfile, Trajectory};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub allocator_tag: String,
    pub rank: u32,
    pub score: f64,
    pub fairness: f64,
    pub efficiency: f64,
    pub n_runs: usize,
}

fn final_snapshot(trajectory: &Trajectory) -> MetricSnapshot {
    let round = trajectory.events.last().map_or(0, |e| e.round);
    trajectory.final_stats.snapshot(round)
}

/// Aggregates trajectories per allocator and ranks them by score.
///
/// Ranking is dense: tied scores share a rank and the next distinct score
/// takes rank + 1. Ties keep their alphabetical tag order.
pub fn leaderboard(trajectories: &[Trajectory]) -> Result<Vec<LeaderboardRow>, ReportError> {
    if trajectories.is_empty() {
        return Err(ReportError::InvalidInput(
            "leaderboard needs at least one trajectory".into(),
        ));
    }
    let mut groups: BTreeMap<&str, Vec<MetricSnapshot>> = BTreeMap::new();
    for trajectory in trajectories {
        groups
            .entry(&trajectory.allocator_tag)
            .or_default()
            .push(final_snapshot(trajectory));
    }
    let mut rows: Vec<LeaderboardRow> = groups
        .into_iter()
        .map(|(tag, snapshots)| {
            let agg = aggregate_runs(&snapshots)?;
            Ok(LeaderboardRow {
                allocator_tag: tag.to_string(),
                rank: 0,
                score: agg.score,
                fairness: agg.fairness,
                efficiency: agg.efficiency,
                n_runs: snapshots.len(),
            })
        })
        .collect::<Result<_, ReportError>>()?;
    // stable sort keeps the alphabetical tag order within ties
    rows.sort_by(|a, b| b.score.partial_cmp(&a.score).expect("finite scores"));
    let mut rank = 0;
    let mut last_score = f64::INFINITY;
    for row in &mut rows {
        if row.score != last_score {
            rank += 1;
            last_score = row.score;
        }
        row.rank = rank;
    }
    Ok(rows)
}

/// Markdown rendering of the leaderboard.
pub fn leaderboard_markdown(rows: &[LeaderboardRow]) -> String {
    let mut out = String::from("| Rank | Allocator | Score | Fairness | Efficiency | Runs |\n");
    out.push_str("|-----:|:----------|------:|---------:|-----------:|-----:|\n");
    for row in rows {
        out.push_str(&format!(
            "| {} | {} | {:.2} | {:.3} | {:.2} | {} |\n",
            row.rank, row.allocator_tag, row.score, row.fairness, row.efficiency, row.n_runs
        ));
    }
    out
}

/// CSV of (tag, fairness, efficiency, score) at fixed 6-decimal formatting;
/// byte-identical for identical input.
pub fn scatter_export(rows: &[LeaderboardRow]) -> String {
    let mut out = String::from("allocator_tag,fairness,efficiency,score\n");
    for row in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            row.allocator_tag, row.fairness, row.efficiency, row.score
        ));
    }
    out
}

/// Correlation of realized task counts with the initial profile ranking and
/// with realized runtime ROI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileBias {
    pub rho_profile: f64,
    pub p_profile: f64,
    pub profile_significant: bool,
    pub rho_roi: f64,
    pub p_roi: f64,
    pub roi_significant: bool,
    /// Sample size the p-values were computed at (the roster size).
    pub n: usize,
    /// True when the count vector is constant, in which case both rhos are
    /// reported as 0.
    pub degenerate: bool,
}

/// Spearman correlation of per-agent task counts against (i) the profile
/// Average and (ii) the realized per-agent ROI, with two-sided p-values.
/// Stars apply at p < 0.05.
pub fn profile_bias(
    trajectory: &Trajectory,
    profiles: &[RecipientProfile],
) -> Result<ProfileBias, ReportError> {
    if profiles.len() < 4 {
        return Err(ReportError::InvalidInput(
            "profile bias needs at least 4 agents for significance".into(),
        ));
    }
    let stats = &trajectory.final_stats;
    let mut counts = Vec::with_capacity(profiles.len());
    let mut averages = Vec::with_capacity(profiles.len());
    let mut rois = Vec::with_capacity(profiles.len());
    for profile in profiles {
        let tally = stats.agents.get(&profile.agent_id).ok_or_else(|| {
            ReportError::InvalidInput(format!("trajectory has no tally for {}", profile.agent_id))
        })?;
        counts.push(tally.task_count as f64);
        averages.push(profile.average());
        rois.push(stats.agent_roi(&profile.agent_id));
    }
    let n = profiles.len();
    let against_profile = spearman(&counts, &averages)?;
    let against_roi = spearman(&counts, &rois)?;
    let degenerate = against_profile.degenerate || against_roi.degenerate;
    let p_profile = if against_profile.degenerate {
        1.0
    } else {
        spearman_pvalue(against_profile.rho, n)?
    };
    let p_roi = if against_roi.degenerate {
        1.0
    } else {
        spearman_pvalue(against_roi.rho, n)?
    };
    Ok(ProfileBias {
        rho_profile: against_profile.rho,
        p_profile,
        profile_significant: p_profile < 0.05,
        rho_roi: against_roi.rho,
        p_roi,
        roi_significant: p_roi < 0.05,
        n,
        degenerate,
    })
}

/// CSV rendering of per-allocator bias rows; stars mark p < 0.05.
pub fn bias_export(rows: &[(String, ProfileBias)]) -> String {
    let mut out = String::from("allocator_tag,n,rho_profile,p_profile,rho_roi,p_roi,degenerate\n");
    for (tag, bias) in rows {
        out.push_str(&format!(
            "{},{},{:.6}{},{:.6},{:.6}{},{:.6},{}\n",
            tag,
            bias.n,
            bias.rho_profile,
            if bias.profile_significant { "*" } else { "" },
            bias.p_profile,
            bias.rho_roi,
            if bias.roi_significant { "*" } else { "" },
            bias.p_roi,
            bias.degenerate
        ));
    }
    out
}
