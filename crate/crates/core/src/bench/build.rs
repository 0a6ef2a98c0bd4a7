use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use serde::Serialize;

use super::{
    scenario_name, BenchConfig, BenchPlan, Direction, Level, RetrievalTask, SampleRef, Scenario,
    Subset,
};
use crate::error::{Error, Result};
use crate::rng;
use crate::signal::{Corpus, Modality, Split};
use crate::taxonomy::Registry;

/// Species of one subset that have test data in every modality, grouped by
/// the level's taxon.
struct Pool {
    /// Test sample indices per registry species.
    audio: Vec<Vec<usize>>,
    image: Vec<Vec<usize>>,
    /// Group members, groups in name order.
    groups: Vec<Vec<usize>>,
    /// Group of each pooled species.
    group_of: BTreeMap<usize, usize>,
}

impl Pool {
    fn new(reg: &Registry, corpus: &Corpus, level: Level, subset: Subset) -> Self {
        let audio = corpus.by_species(Modality::Audio, Split::Test, reg.len());
        let image = corpus.by_species(Modality::Image, Split::Test, reg.len());
        let mut by_name: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for sp in 0..reg.len() {
            let in_subset = reg.is_unseen(sp) == (subset == Subset::Unseen);
            if !in_subset || audio[sp].is_empty() || image[sp].is_empty() {
                continue;
            }
            let rec = reg.get(sp);
            let key = match level {
                Level::Species => rec.species_id.clone(),
                Level::Genus => rec.genus_name.clone(),
                Level::Family => rec.family_name.clone(),
            };
            by_name.entry(key).or_default().push(sp);
        }
        let groups: Vec<Vec<usize>> = by_name.into_values().collect();
        let group_of = groups
            .iter()
            .enumerate()
            .flat_map(|(g, m)| m.iter().map(move |&sp| (sp, g)))
            .collect();
        Pool {
            audio,
            image,
            groups,
            group_of,
        }
    }

    fn sample_of(&self, sp: usize, modality: Modality, rng: &mut rng::Rng) -> SampleRef {
        let index = match modality {
            Modality::Audio => *self.audio[sp]
                .choose(rng)
                .expect("pooled species have audio"),
            Modality::Image => *self.image[sp]
                .choose(rng)
                .expect("pooled species have images"),
            Modality::Text => sp,
        };
        SampleRef { modality, index }
    }
}

fn build_one(
    reg: &Registry,
    corpus: &Corpus,
    cfg: &BenchConfig,
    direction: Direction,
    level: Level,
    subset: Subset,
) -> Result<Scenario> {
    let name = scenario_name(direction, level, subset);
    let infeasible = |reason: String| Error::Infeasible {
        scenario: name.clone(),
        reason,
    };
    if cfg.k < 2 {
        return Err(infeasible(format!(
            "database size {} leaves no distractors",
            cfg.k
        )));
    }
    let pool = Pool::new(reg, corpus, level, subset);
    if pool.groups.is_empty() {
        return Err(infeasible(format!(
            "no {subset} species with test data in every modality"
        )));
    }
    if pool.groups.len() < cfg.k {
        return Err(infeasible(format!(
            "{k}-way tasks need {k} distinct {what} with test data in every modality, found {n}",
            k = cfg.k,
            what = if level == Level::Species {
                "species".to_string()
            } else {
                format!("{level} groups")
            },
            n = pool.groups.len()
        )));
    }
    // queries must have a positive other than themselves above species level
    let eligible: Vec<usize> = pool
        .groups
        .iter()
        .filter(|m| level == Level::Species || m.len() >= 2)
        .flatten()
        .copied()
        .collect();
    if eligible.is_empty() {
        return Err(infeasible(format!(
            "no {level} holds two {subset} species, so no positive exists"
        )));
    }
    let mut queries: Vec<SampleRef> = eligible
        .iter()
        .flat_map(|&sp| match direction.query() {
            Modality::Audio => pool.audio[sp]
                .iter()
                .map(|&i| SampleRef {
                    modality: Modality::Audio,
                    index: i,
                })
                .collect(),
            Modality::Image => pool.image[sp]
                .iter()
                .map(|&i| SampleRef {
                    modality: Modality::Image,
                    index: i,
                })
                .collect(),
            Modality::Text => vec![SampleRef {
                modality: Modality::Text,
                index: sp,
            }],
        })
        .collect();

    let mut rng = rng::labeled_rng(cfg.seed, &format!("bench/{name}"));
    let query_species = |q: &SampleRef| match q.modality {
        Modality::Audio => corpus.audio[q.index].species as usize,
        Modality::Image => corpus.image[q.index].species as usize,
        Modality::Text => q.index,
    };
    let cand = direction.candidate();
    let mut tasks = Vec::with_capacity(cfg.tasks_per_scenario);
    let mut cursor = queries.len();
    while tasks.len() < cfg.tasks_per_scenario {
        if cursor == queries.len() {
            queries.shuffle(&mut rng);
            cursor = 0;
        }
        let query = queries[cursor];
        cursor += 1;
        let qs = query_species(&query);
        let qg = pool.group_of[&qs];
        let positive_species = match level {
            Level::Species => qs,
            _ => {
                let others: Vec<usize> = pool.groups[qg]
                    .iter()
                    .copied()
                    .filter(|&s| s != qs)
                    .collect();
                *others
                    .choose(&mut rng)
                    .expect("eligible queries have a sibling")
            }
        };
        let other_groups: Vec<usize> = (0..pool.groups.len()).filter(|&g| g != qg).collect();
        let mut species: Vec<usize> = Vec::with_capacity(cfg.k);
        species.push(positive_species);
        for &g in other_groups.choose_multiple(&mut rng, cfg.k - 1) {
            species.push(
                *pool.groups[g]
                    .choose(&mut rng)
                    .expect("groups are non-empty"),
            );
        }
        let mut order: Vec<usize> = (0..cfg.k).collect();
        order.shuffle(&mut rng);
        let candidate_species: Vec<usize> = order.iter().map(|&o| species[o]).collect();
        let positive = order.iter().position(|&o| o == 0).expect("positive placed");
        let candidates = candidate_species
            .iter()
            .map(|&sp| pool.sample_of(sp, cand, &mut rng))
            .collect();
        tasks.push(RetrievalTask {
            query,
            query_species: qs,
            candidates,
            candidate_species,
            positive,
            level,
            subset,
        });
    }
    Ok(Scenario {
        direction,
        level,
        subset,
        tasks,
    })
}

/// Builds every scenario in `plan`. Fails on the first infeasible one, with
/// an error naming it.
pub fn build_scenarios(
    reg: &Registry,
    corpus: &Corpus,
    cfg: &BenchConfig,
    plan: &BenchPlan,
) -> Result<Vec<Scenario>> {
    if cfg.tasks_per_scenario == 0 {
        return Err(Error::InvalidConfig(
            "tasks per scenario must be positive".into(),
        ));
    }
    plan.keys()
        .into_iter()
        .map(|(d, l, s)| build_one(reg, corpus, cfg, d, l, s))
        .collect()
}

#[derive(Serialize)]
struct ScenarioFile<'a, C: Serialize> {
    format: &'static str,
    config: &'a C,
    scenarios: &'a [Scenario],
}

/// Scenario file body with the resolved run configuration embedded.
pub fn scenarios_to_json<C: Serialize>(scenarios: &[Scenario], config: &C) -> Result<String> {
    Ok(serde_json::to_string(&ScenarioFile {
        format: "bvsc1",
        config,
        scenarios,
    })?)
}
