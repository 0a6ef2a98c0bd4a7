use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Direction, Level, Scenario, Subset};
use crate::error::{Error, Result};
use crate::taxonomy::{Rank, Registry};

pub const METRICS_FORMAT: &str = "bvmr1";

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TopK {
    pub top1: f64,
    pub top5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub direction: Direction,
    pub level: Level,
    pub subset: Subset,
    pub n_tasks: usize,
    pub top1: f64,
    pub top5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionScore {
    pub direction: Direction,
    pub top1: f64,
    pub top5: f64,
}

/// One row block of the summary table: every direction at one level and
/// subset, plus the unweighted average over directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelBlock {
    pub level: Level,
    pub subset: Subset,
    pub directions: Vec<DirectionScore>,
    pub average: TopK,
}

/// Species-level accuracy grouped by the query's taxonomic class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub subset: Subset,
    pub class: String,
    pub n_tasks: usize,
    pub top1: f64,
    pub top5: f64,
}

/// Among species-level tasks whose top-1 is wrong, the fraction whose top-1
/// candidate shares the query's genus / family. `None` without errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyStats {
    pub subset: Subset,
    pub n_errors: usize,
    pub genus_consistency: Option<f64>,
    pub family_consistency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub format: String,
    pub k: usize,
    pub scenarios: Vec<ScenarioMetrics>,
    pub blocks: Vec<LevelBlock>,
    pub per_class: Vec<ClassScore>,
    pub consistency: Vec<ConsistencyStats>,
    pub genus_consistency: Option<f64>,
    pub family_consistency: Option<f64>,
    pub notes: Vec<String>,
}

impl MetricsReport {
    pub fn block(&self, level: Level, subset: Subset) -> Option<&LevelBlock> {
        self.blocks
            .iter()
            .find(|b| b.level == level && b.subset == subset)
    }

    pub fn average(&self, level: Level, subset: Subset) -> Option<TopK> {
        self.block(level, subset).map(|b| b.average)
    }

    pub fn scenario(
        &self,
        direction: Direction,
        level: Level,
        subset: Subset,
    ) -> Option<&ScenarioMetrics> {
        self.scenarios
            .iter()
            .find(|s| s.direction == direction && s.level == level && s.subset == subset)
    }
}

#[derive(Default)]
struct Tally {
    n: usize,
    hit1: usize,
    hit5: usize,
}

impl Tally {
    fn add(&mut self, rank: usize) {
        self.n += 1;
        self.hit1 += (rank == 0) as usize;
        self.hit5 += (rank < 5) as usize;
    }

    fn topk(&self) -> TopK {
        let n = self.n.max(1) as f64;
        TopK {
            top1: self.hit1 as f64 / n,
            top5: self.hit5 as f64 / n,
        }
    }
}

fn ratio(hits: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| hits as f64 / n as f64)
}

/// Top-k per scenario, per-level averages, per-class breakdown and the
/// hierarchical consistency of species-level errors. `rankings[s][t]` is the
/// full ranking of task `t` of scenario `s`.
pub fn score(
    reg: &Registry,
    scenarios: &[Scenario],
    rankings: &[Vec<Vec<usize>>],
) -> Result<MetricsReport> {
    let mut k = 0;
    let mut rows = Vec::with_capacity(scenarios.len());
    let mut by_class: BTreeMap<(Subset, String), Tally> = BTreeMap::new();
    let mut errors: BTreeMap<Subset, (usize, usize, usize)> = BTreeMap::new();
    for (si, sc) in scenarios.iter().enumerate() {
        let mut tally = Tally::default();
        for (ti, task) in sc.tasks.iter().enumerate() {
            let ranking = rankings
                .get(si)
                .and_then(|r| r.get(ti))
                .filter(|r| r.len() == task.candidates.len())
                .ok_or_else(|| Error::MissingRanking(format!("{} task {ti}", sc.name())))?;
            k = k.max(task.candidates.len());
            let rank = ranking
                .iter()
                .position(|&c| c == task.positive)
                .ok_or_else(|| {
                    Error::MissingRanking(format!("{} task {ti}: positive not ranked", sc.name()))
                })?;
            tally.add(rank);
            if sc.level == Level::Species {
                let class = reg.get(task.query_species).class_name.clone();
                by_class.entry((sc.subset, class)).or_default().add(rank);
                if rank != 0 {
                    let top = task.candidate_species[ranking[0]];
                    let e = errors.entry(sc.subset).or_default();
                    e.0 += 1;
                    e.1 += reg.shares_rank(top, task.query_species, Rank::Genus) as usize;
                    e.2 += reg.shares_rank(top, task.query_species, Rank::Family) as usize;
                }
            }
        }
        let t = tally.topk();
        rows.push(ScenarioMetrics {
            direction: sc.direction,
            level: sc.level,
            subset: sc.subset,
            n_tasks: tally.n,
            top1: t.top1,
            top5: t.top5,
        });
    }
    if rankings.len() > scenarios.len() {
        return Err(Error::MissingRanking(format!(
            "{} rankings for {} scenarios",
            rankings.len(),
            scenarios.len()
        )));
    }

    let mut blocks = Vec::new();
    for subset in Subset::ALL {
        for level in Level::ALL {
            let directions: Vec<DirectionScore> = Direction::ALL
                .iter()
                .filter_map(|&d| {
                    rows.iter()
                        .find(|r| r.direction == d && r.level == level && r.subset == subset)
                        .map(|r| DirectionScore {
                            direction: d,
                            top1: r.top1,
                            top5: r.top5,
                        })
                })
                .collect();
            if directions.is_empty() {
                continue;
            }
            let n = directions.len() as f64;
            let average = TopK {
                top1: directions.iter().map(|d| d.top1).sum::<f64>() / n,
                top5: directions.iter().map(|d| d.top5).sum::<f64>() / n,
            };
            blocks.push(LevelBlock {
                level,
                subset,
                directions,
                average,
            });
        }
    }

    let per_class = by_class
        .into_iter()
        .map(|((subset, class), t)| {
            let tk = t.topk();
            ClassScore {
                subset,
                class,
                n_tasks: t.n,
                top1: tk.top1,
                top5: tk.top5,
            }
        })
        .collect();
    let consistency: Vec<ConsistencyStats> = errors
        .iter()
        .map(|(&subset, &(n, g, f))| ConsistencyStats {
            subset,
            n_errors: n,
            genus_consistency: ratio(g, n),
            family_consistency: ratio(f, n),
        })
        .collect();
    let (n, g, f) = errors
        .values()
        .fold((0, 0, 0), |a, e| (a.0 + e.0, a.1 + e.1, a.2 + e.2));

    Ok(MetricsReport {
        format: METRICS_FORMAT.into(),
        k,
        scenarios: rows,
        blocks,
        per_class,
        consistency,
        genus_consistency: ratio(g, n),
        family_consistency: ratio(f, n),
        notes: vec![
            "each database holds exactly one candidate satisfying the level predicate, so top-5 counts only the designated positive".into(),
            "distractors come from distinct species (species level) or distinct genera/families (higher levels)".into(),
            "consistency is measured over species-level tasks with a wrong top-1".into(),
        ],
    })
}

pub fn write_metrics_csv<W: Write>(mut w: W, report: &MetricsReport) -> std::io::Result<()> {
    writeln!(w, "direction,level,subset,n_tasks,top1,top5")?;
    for r in &report.scenarios {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.direction, r.level, r.subset, r.n_tasks, r.top1, r.top5
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{RetrievalTask, SampleRef};
    use crate::signal::Modality;
    use crate::taxonomy::{synthetic_registry, TaxonomyShape};

    fn task(query_species: usize, candidate_species: Vec<usize>, positive: usize) -> RetrievalTask {
        let n = candidate_species.len();
        RetrievalTask {
            query: SampleRef {
                modality: Modality::Audio,
                index: 0,
            },
            query_species,
            candidates: (0..n)
                .map(|i| SampleRef {
                    modality: Modality::Text,
                    index: i,
                })
                .collect(),
            candidate_species,
            positive,
            level: Level::Species,
            subset: Subset::Seen,
        }
    }

    fn scenario(tasks: Vec<RetrievalTask>) -> Scenario {
        Scenario {
            direction: Direction::A2T,
            level: Level::Species,
            subset: Subset::Seen,
            tasks,
        }
    }

    #[test]
    fn perfect_rankings_score_one() {
        let reg = synthetic_registry(10, 1, &TaxonomyShape::default()).unwrap();
        let sc = scenario((0..6).map(|q| task(q, (0..10).collect(), q)).collect());
        let rankings = vec![sc
            .tasks
            .iter()
            .map(|t| {
                let mut r: Vec<usize> = (0..10).filter(|&i| i != t.positive).collect();
                r.insert(0, t.positive);
                r
            })
            .collect()];
        let m = score(&reg, &[sc], &rankings).unwrap();
        assert_eq!((m.scenarios[0].top1, m.scenarios[0].top5), (1.0, 1.0));
        assert_eq!(m.genus_consistency, None);
        assert_eq!(m.average(Level::Species, Subset::Seen).unwrap().top1, 1.0);
    }

    #[test]
    fn wrong_top1_in_same_genus_is_fully_consistent() {
        let reg = synthetic_registry(80, 5, &TaxonomyShape::default()).unwrap();
        let pairs: Vec<(usize, usize)> = reg
            .genera()
            .filter(|(_, m)| m.len() >= 2)
            .map(|(_, m)| (m[0], m[1]))
            .collect();
        assert!(!pairs.is_empty());
        let tasks: Vec<_> = pairs
            .iter()
            .map(|&(q, sib)| task(q, vec![q, sib], 0))
            .collect();
        let rankings = vec![vec![vec![1, 0]; tasks.len()]];
        let m = score(&reg, &[scenario(tasks)], &rankings).unwrap();
        assert_eq!(m.scenarios[0].top1, 0.0);
        assert_eq!(m.genus_consistency, Some(1.0));
        assert_eq!(m.family_consistency, Some(1.0));
    }

    #[test]
    fn missing_ranking_is_an_error() {
        let reg = synthetic_registry(4, 1, &TaxonomyShape::default()).unwrap();
        let sc = scenario(vec![task(0, vec![0, 1], 0), task(1, vec![1, 0], 0)]);
        assert!(matches!(
            score(&reg, &[sc], &[vec![vec![0, 1]]]),
            Err(Error::MissingRanking(_))
        ));
    }

    #[test]
    fn task_order_does_not_change_scores() {
        let reg = synthetic_registry(10, 1, &TaxonomyShape::default()).unwrap();
        let tasks: Vec<_> = (0..5).map(|q| task(q, (0..10).collect(), q)).collect();
        let ranks: Vec<Vec<usize>> = (0..5)
            .map(|i| (0..10).map(|j| (i * 3 + j) % 10).collect())
            .collect();
        let a = score(&reg, &[scenario(tasks.clone())], &[ranks.clone()]).unwrap();
        let b = score(
            &reg,
            &[scenario(tasks.into_iter().rev().collect())],
            &[ranks.into_iter().rev().collect()],
        )
        .unwrap();
        assert_eq!(a, b);
    }
}
