//! Prompt and feedback text assets.
//!
//! The allocator system prompt, its length-constraint and social-influence
//! addenda, the recipient task-solving prompts, and the feedback caption all
//! ship as text assets pinned by SHA-256. Tampering with an asset is a
//! configuration error, not a customization point: the benchmark's results
//! are only comparable under the exact prompt text.

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::types::{RecipientProfile, TaskDomain, TaskSpec};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("asset {name} failed its checksum (expected {expected}, got {actual})")]
    ChecksumMismatch {
        name: &'static str,
        expected: &'static str,
        actual: String,
    },
    #[error("asset {name} missing at {path}: {source}")]
    MissingAsset {
        name: &'static str,
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("profile {agent} is missing the {column} score column")]
    MissingScore { agent: String, column: &'static str },
    #[error("template is malformed: {0}")]
    MalformedTemplate(String),
}

const TEAM_MARKER: &str = "---------- Team ----------\n";
const TEAM_END_ANCHOR: &str = "\n\nCaption:";

/// Benchmark score columns rendered into the team table, in order.
pub const SCORE_COLUMNS: [&str; 6] = ["IFEval", "MATH", "GPQA", "MuSR", "MMLU", "Average"];

/// Asset names paired with their pinned SHA-256 checksums.
pub const PINNED_CHECKSUMS: [(&str, &str); 10] = [
    (
        "vanilla",
        "a808053596fe62b578bb09db523d4b4e94ce66ab40211657b0b31713458e0752",
    ),
    (
        "length_concise",
        "7d200c885fe7161de4acef9bffc000ea0495e18272595a648caf80708d53a5d4",
    ),
    (
        "length_extreme_short",
        "22a066d6299a44fc8a93fea6c09bee036f03c410e4842a5e1abf37d0eb377125",
    ),
    (
        "influence_temptation",
        "b9c2305bfe95ce718842b424e357f08f6f01d3d7906dbdc7d496062f81bb0482",
    ),
    (
        "influence_threat",
        "6d12d184b2041e2ab19a1c90fa502430cfa9788fd5eea09982238d4270d7f8e5",
    ),
    (
        "influence_identification",
        "10fd547aaf764959705bca9df2d2982c54efc33086e50bcbd4016b01794b2f12",
    ),
    (
        "influence_internalization",
        "f62707404a1fcf2c1f6e42e78a0470cc39c271f7111ead491e751582d01a78ee",
    ),
    (
        "feedback_caption",
        "21e9435bd14712277e81db32d88605c876f01e5762d83554c0efe5410bb026d8",
    ),
    (
        "solve_deep_research",
        "69c94daa6e5a4be68eebe03ac1e83b6bdb31d46c9c28711fdf655f2e46688cfa",
    ),
    (
        "solve_math",
        "737252d8a04d07c79e4e127ab2a9e3a875c7e859a1984458b5476e3434928bcf",
    ),
];

/// The ten text assets, either compiled in or loaded from a directory.
#[derive(Debug, Clone)]
pub struct PromptAssets {
    pub vanilla: String,
    pub length_concise: String,
    pub length_extreme_short: String,
    pub influence_temptation: String,
    pub influence_threat: String,
    pub influence_identification: String,
    pub influence_internalization: String,
    pub feedback_caption: String,
    pub solve_deep_research: String,
    pub solve_math: String,
}

impl PromptAssets {
    /// The compiled-in assets. Verified against the pinned checksums; a
    /// mismatch here means the build itself shipped tampered assets.
    pub fn embedded() -> Result<Self, PromptError> {
        let assets = PromptAssets {
            vanilla: include_str!("../assets/vanilla.txt").to_string(),
            length_concise: include_str!("../assets/length_concise.txt").to_string(),
            length_extreme_short: include_str!("../assets/length_extreme_short.txt").to_string(),
            influence_temptation: include_str!("../assets/influence_temptation.txt").to_string(),
            influence_threat: include_str!("../assets/influence_threat.txt").to_string(),
            influence_identification: include_str!("../assets/influence_identification.txt")
                .to_string(),
            influence_internalization: include_str!("../assets/influence_internalization.txt")
                .to_string(),
            feedback_caption: include_str!("../assets/feedback_caption.txt").to_string(),
            solve_deep_research: include_str!("../assets/solve_deep_research.txt").to_string(),
            solve_math: include_str!("../assets/solve_math.txt").to_string(),
        };
        assets.verify()?;
        Ok(assets)
    }

    /// Loads `<name>.txt` for every asset from `dir`, rejecting any file
    /// whose bytes do not hash to the pinned checksum.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let read = |name: &'static str| -> Result<String, PromptError> {
            let path = dir.join(format!("{name}.txt"));
            std::fs::read_to_string(&path).map_err(|source| PromptError::MissingAsset {
                name,
                path: path.display().to_string(),
                source,
            })
        };
        let assets = PromptAssets {
            vanilla: read("vanilla")?,
            length_concise: read("length_concise")?,
            length_extreme_short: read("length_extreme_short")?,
            influence_temptation: read("influence_temptation")?,
            influence_threat: read("influence_threat")?,
            influence_identification: read("influence_identification")?,
            influence_internalization: read("influence_internalization")?,
            feedback_caption: read("feedback_caption")?,
            solve_deep_research: read("solve_deep_research")?,
            solve_math: read("solve_math")?,
        };
        assets.verify()?;
        Ok(assets)
    }

    fn by_name(&self, name: &str) -> &str {
        match name {
            "vanilla" => &self.vanilla,
            "length_concise" => &self.length_concise,
            "length_extreme_short" => &self.length_extreme_short,
            "influence_temptation" => &self.influence_temptation,
            "influence_threat" => &self.influence_threat,
            "influence_identification" => &self.influence_identification,
            "influence_internalization" => &self.influence_internalization,
            "feedback_caption" => &self.feedback_caption,
            "solve_deep_research" => &self.solve_deep_research,
            "solve_math" => &self.solve_math,
            other => unreachable!("unknown asset {other}"),
        }
    }

    /// Checks every asset against its pinned checksum; returns the first
    /// failure so callers can name the offending asset.
    pub fn verify(&self) -> Result<(), PromptError> {
        for (name, expected) in PINNED_CHECKSUMS {
            let actual = sha256_hex(self.by_name(name).as_bytes());
            if actual != expected {
                return Err(PromptError::ChecksumMismatch {
                    name,
                    expected,
                    actual,
                });
            }
        }
        Ok(())
    }

    /// All checksum failures, for itemized validation reports.
    pub fn checksum_violations(&self) -> Vec<(&'static str, String)> {
        PINNED_CHECKSUMS
            .iter()
            .filter_map(|(name, expected)| {
                let actual = sha256_hex(self.by_name(name).as_bytes());
                (actual != *expected).then_some((*name, actual))
            })
            .collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Formats a benchmark score the way the profile table prints it: two
/// decimals with a single trailing zero dropped (50.00 -> "50.0").
fn fmt_score(value: f64) -> String {
    let mut s = format!("{value:.2}");
    if s.ends_with('0') {
        s.pop();
    }
    s
}

/// Renders the fixed-width team table interpolated into the system prompt.
/// Rows follow roster order; every score column must be present.
pub fn render_team_table(profiles: &[RecipientProfile]) -> Result<String, PromptError> {
    let mut lines = Vec::with_capacity(profiles.len() + 1);
    let mut header = String::from("name ");
    for (i, column) in SCORE_COLUMNS.iter().enumerate() {
        let width = if i == SCORE_COLUMNS.len() - 1 { 10 } else { 11 };
        header.push_str(&format!("{column:<width$}"));
    }
    lines.push(header);
    for profile in profiles {
        let mut row = format!("{:>4} ", profile.agent_id);
        for (i, column) in SCORE_COLUMNS.iter().enumerate() {
            let value =
                profile
                    .scores
                    .get(*column)
                    .copied()
                    .ok_or_else(|| PromptError::MissingScore {
                        agent: profile.agent_id.to_string(),
                        column,
                    })?;
            let width = if i == SCORE_COLUMNS.len() - 1 { 10 } else { 11 };
            let cell = fmt_score(value);
            row.push_str(&format!("{cell:<width$}"));
        }
        lines.push(row);
    }
    Ok(lines.join("\n"))
}

/// Replaces the team table block of the vanilla template with a freshly
/// rendered one for the given roster, then appends each addendum verbatim.
pub fn render_system_prompt(
    assets: &PromptAssets,
    profiles: &[RecipientProfile],
    addenda: &[&str],
) -> Result<String, PromptError> {
    let template = &assets.vanilla;
    let start = template
        .find(TEAM_MARKER)
        .ok_or_else(|| PromptError::MalformedTemplate("team marker not found".into()))?
        + TEAM_MARKER.len();
    let end = template[start..]
        .find(TEAM_END_ANCHOR)
        .map(|offset| start + offset)
        .ok_or_else(|| PromptError::MalformedTemplate("caption anchor not found".into()))?;
    let table = render_team_table(profiles)?;
    let mut prompt = String::with_capacity(template.len() + table.len());
    prompt.push_str(&template[..start]);
    prompt.push_str(&table);
    prompt.push_str(&template[end..]);
    for addendum in addenda {
        prompt.push_str("\n\n");
        prompt.push_str(addendum);
    }
    Ok(prompt)
}

/// The environment line presenting the current task to the allocator.
pub fn render_task_statement(task: &TaskSpec) -> String {
    format!(
        "Here is a new task (task id of {}): {}",
        task.task_id, task.prompt
    )
}

/// Fills the domain-specific task-solving prompt with the task's question.
/// The templates carry the question placeholder in a few spellings; all are
/// substituted.
pub fn render_solve_prompt(assets: &PromptAssets, task: &TaskSpec) -> String {
    let template = match task.domain {
        TaskDomain::DeepResearch => &assets.solve_deep_research,
        TaskDomain::Math => &assets.solve_math,
    };
    template
        .replace("{$question$}", &task.prompt)
        .replace("{question$}", &task.prompt)
        .replace("{question}", &task.prompt)
}
