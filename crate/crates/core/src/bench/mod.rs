//! Cross-modal retrieval benchmark: 6 directions x 3 taxonomic levels x
//! seen/unseen, each scenario a list of 100-way single-positive tasks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompts::{PromptLevel, PromptTemplate};
use crate::signal::Modality;
use crate::taxonomy::Rank;

mod build;
mod metrics;
mod retrieval;

pub use build::{build_scenarios, scenarios_to_json};
pub use metrics::{
    score, write_metrics_csv, ClassScore, ConsistencyStats, DirectionScore, LevelBlock,
    MetricsReport, ScenarioMetrics, TopK, METRICS_FORMAT,
};
pub use retrieval::{rank_by_similarity, run_benchmark, run_retrieval, EmbeddingTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    A2T,
    T2A,
    A2I,
    I2A,
    I2T,
    T2I,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::A2T,
        Direction::T2A,
        Direction::A2I,
        Direction::I2A,
        Direction::I2T,
        Direction::T2I,
    ];

    pub fn query(self) -> Modality {
        match self {
            Direction::A2T | Direction::A2I => Modality::Audio,
            Direction::T2A | Direction::T2I => Modality::Text,
            Direction::I2A | Direction::I2T => Modality::Image,
        }
    }

    pub fn candidate(self) -> Modality {
        match self {
            Direction::T2A | Direction::I2A => Modality::Audio,
            Direction::A2T | Direction::I2T => Modality::Text,
            Direction::A2I | Direction::T2I => Modality::Image,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::A2T => "A2T",
            Direction::T2A => "T2A",
            Direction::A2I => "A2I",
            Direction::I2A => "I2A",
            Direction::I2T => "I2T",
            Direction::T2I => "T2I",
        }
    }

    /// Whether audio is on either side.
    pub fn involves_audio(self) -> bool {
        self.query() == Modality::Audio || self.candidate() == Modality::Audio
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Direction::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown direction `{s}`")))
    }
}

/// Correctness predicate of a task: same species, or a different species of
/// the same genus / family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Species,
    Genus,
    Family,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Species, Level::Genus, Level::Family];

    pub fn rank(self) -> Rank {
        match self {
            Level::Species => Rank::Species,
            Level::Genus => Rank::Genus,
            Level::Family => Rank::Family,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Species => "species",
            Level::Genus => "genus",
            Level::Family => "family",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Level::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown level `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Seen,
    Unseen,
}

impl Subset {
    pub const ALL: [Subset; 2] = [Subset::Seen, Subset::Unseen];

    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Seen => "seen",
            Subset::Unseen => "unseen",
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Subset::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown subset `{s}`")))
    }
}

/// One retrievable item. For audio and image `index` points into the corpus
/// sample list; for text it is the registry index of the species whose
/// prompt is rendered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleRef {
    pub modality: Modality,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTask {
    pub query: SampleRef,
    pub query_species: usize,
    pub candidates: Vec<SampleRef>,
    pub candidate_species: Vec<usize>,
    pub positive: usize,
    pub level: Level,
    pub subset: Subset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub direction: Direction,
    pub level: Level,
    pub subset: Subset,
    pub tasks: Vec<RetrievalTask>,
}

impl Scenario {
    pub fn name(&self) -> String {
        scenario_name(self.direction, self.level, self.subset)
    }
}

pub fn scenario_name(direction: Direction, level: Level, subset: Subset) -> String {
    format!("{direction}/{level}/{subset}")
}

/// Which of the 36 scenarios to build.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchPlan {
    pub directions: Vec<Direction>,
    pub levels: Vec<Level>,
    pub subsets: Vec<Subset>,
}

impl Default for BenchPlan {
    fn default() -> Self {
        BenchPlan {
            directions: Direction::ALL.to_vec(),
            levels: Level::ALL.to_vec(),
            subsets: Subset::ALL.to_vec(),
        }
    }
}

impl BenchPlan {
    pub fn only(levels: &[Level], subsets: &[Subset]) -> Self {
        BenchPlan {
            directions: Direction::ALL.to_vec(),
            levels: levels.to_vec(),
            subsets: subsets.to_vec(),
        }
    }

    /// Scenario keys in report order: subset, then level, then direction.
    pub fn keys(&self) -> Vec<(Direction, Level, Subset)> {
        let mut out = Vec::new();
        for &s in &self.subsets {
            for &l in &self.levels {
                for &d in &self.directions {
                    out.push((d, l, s));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub tasks_per_scenario: usize,
    /// Database size per task.
    pub k: usize,
    /// Inference template for text queries and candidates.
    pub prompt: PromptTemplate,
    pub prompt_level: PromptLevel,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            tasks_per_scenario: 200,
            k: 100,
            prompt: PromptTemplate::Com,
            prompt_level: PromptLevel::Species,
            seed: 0,
        }
    }
}
