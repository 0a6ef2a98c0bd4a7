//! Seeded end-to-end runs: taxonomy, split, corpus, staged training,
//! benchmark and trait probe. Every subsystem seed is derived from the root
//! seed by label.

use serde::{Deserialize, Serialize};

use crate::bench::{
    build_scenarios, run_benchmark, score, BenchConfig, BenchPlan, EmbeddingTable, MetricsReport,
    Scenario,
};
use crate::error::{Error, Result};
use crate::model::{run_stage, EpochLoss, ModelConfig, ModelState, Stage, TrainConfig};
use crate::prompts::Vocabulary;
use crate::rng::derive_seed;
use crate::signal::{
    derive_traits_from_latents, generate_synthetic_corpus, Modality, SynthConfig, SyntheticCorpus,
};
use crate::taxonomy::{split_seen_unseen, synthetic_registry, Registry, TaxonomyShape};
use crate::traits::{evaluate_probe, train_probe, ProbeConfig, TraitMetrics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub species: usize,
    pub unseen_frac: f64,
    pub taxonomy: TaxonomyShape,
    /// `n_species` and `seed` are overwritten from the fields above.
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub bench: BenchConfig,
    pub plan: BenchPlan,
    pub probe: ProbeConfig,
    pub skip_stages: Vec<u8>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            species: 50,
            unseen_frac: 0.1,
            taxonomy: TaxonomyShape::default(),
            synth: SynthConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            bench: BenchConfig::default(),
            plan: BenchPlan::default(),
            probe: ProbeConfig::default(),
            skip_stages: Vec::new(),
        }
    }
}

impl PipelineConfig {
    /// Copies derived seeds and sizes into the sub-configurations.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.synth.n_species = c.species;
        c.synth.seed = derive_seed(c.seed, "corpus");
        c.train.seed = derive_seed(c.seed, "train");
        c.bench.seed = derive_seed(c.seed, "bench");
        c.probe.seed = derive_seed(c.seed, "probe");
        c
    }

    pub fn runs(&self, stage: Stage) -> bool {
        !self.skip_stages.contains(&stage.index())
    }
}

/// A generated registry (split applied, traits tied to latents) and corpus.
#[derive(Debug, Clone)]
pub struct World {
    pub registry: Registry,
    pub data: SyntheticCorpus,
}

pub fn generate_world(cfg: &PipelineConfig) -> Result<World> {
    let cfg = cfg.resolved();
    let reg = synthetic_registry(
        cfg.species,
        derive_seed(cfg.seed, "taxonomy"),
        &cfg.taxonomy,
    )?;
    let reg = split_seen_unseen(&reg, cfg.unseen_frac, derive_seed(cfg.seed, "split"))?;
    let data = generate_synthetic_corpus(&reg, &cfg.synth)?;
    let registry =
        derive_traits_from_latents(&reg, &data.latents, derive_seed(cfg.seed, "traits"))?;
    Ok(World { registry, data })
}

pub fn init_model(world: &World, cfg: &PipelineConfig) -> Result<ModelState> {
    let cfg = cfg.resolved();
    ModelState::init(
        &cfg.model,
        cfg.synth.audio_dim,
        cfg.synth.image_dim,
        Vocabulary::from_registry(&world.registry),
        derive_seed(cfg.seed, "init"),
    )
}

/// Runs the stages not listed in `skip_stages`, in order.
pub fn train_stages(
    state: &mut ModelState,
    world: &World,
    cfg: &PipelineConfig,
) -> Result<Vec<EpochLoss>> {
    let cfg = cfg.resolved();
    let mut history = Vec::new();
    for stage in Stage::ALL {
        if cfg.runs(stage) && cfg.train.epochs(stage) > 0 {
            let report = run_stage(
                state,
                &world.registry,
                &world.data.corpus,
                stage,
                &cfg.train,
            )?;
            history.extend(report.history);
        }
    }
    if !state.params.is_finite() {
        return Err(Error::InvalidConfig(
            "training diverged to non-finite weights".into(),
        ));
    }
    Ok(history)
}

pub fn evaluate(
    state: &ModelState,
    world: &World,
    cfg: &PipelineConfig,
) -> Result<(Vec<Scenario>, MetricsReport)> {
    let cfg = cfg.resolved();
    let scenarios = build_scenarios(&world.registry, &world.data.corpus, &cfg.bench, &cfg.plan)?;
    let table = EmbeddingTable::compute(
        state,
        &world.registry,
        &world.data.corpus,
        cfg.bench.prompt,
        cfg.bench.prompt_level,
    )?;
    let rankings = run_benchmark(&table, &scenarios)?;
    let report = score(&world.registry, &scenarios, &rankings)?;
    Ok((scenarios, report))
}

pub fn probe(
    state: &ModelState,
    world: &World,
    cfg: &PipelineConfig,
    modality: Modality,
) -> Result<TraitMetrics> {
    let cfg = cfg.resolved();
    let p = train_probe(
        state,
        modality,
        &world.registry,
        &world.data.corpus,
        &cfg.probe,
    )?;
    evaluate_probe(&p, state, modality, &world.registry, &world.data.corpus)
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub world: World,
    pub state: ModelState,
    pub history: Vec<EpochLoss>,
    pub scenarios: Vec<Scenario>,
    pub metrics: MetricsReport,
}

/// Generate, train and benchmark in one call.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let world = generate_world(cfg)?;
    let mut state = init_model(&world, cfg)?;
    let history = train_stages(&mut state, &world, cfg)?;
    let (scenarios, metrics) = evaluate(&state, &world, cfg)?;
    Ok(PipelineOutput {
        world,
        state,
        history,
        scenarios,
        metrics,
    })
}
