//! Command-line front end: `gen-data`, `train`, `bench`, `probe`, `report`.
//!
//! Configuration resolves as defaults, then an optional TOML file, then
//! flags. Artifacts live in the `--out` directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bench::{
    build_scenarios, run_benchmark, scenarios_to_json, score, write_metrics_csv, BenchPlan,
    EmbeddingTable, Level, MetricsReport, Subset,
};
use crate::error::{Error, Result};
use crate::model::{
    load_checkpoint, run_stage_with, save_checkpoint, write_loss_csv, CheckpointMeta, EpochLoss,
    ModelState, Stage,
};
use crate::pipeline::{generate_world, init_model, PipelineConfig, World};
use crate::prompts::{PromptLevel, PromptTemplate, TemplateSampler};
use crate::signal::{
    read_feature_store, write_feature_store, Corpus, Modality, Split, SyntheticCorpus,
};
use crate::taxonomy::{load_registry, write_registry, Registry};
use crate::traits::{evaluate_probe, train_probe, TraitMetrics};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const CORPUS_FILE: &str = "corpus.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const RUN_FORMAT: &str = "bvrun1";

#[derive(Debug, Parser)]
#[command(
    name = "trimodal",
    version,
    about = "Tri-modal contrastive alignment and retrieval benchmark"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic taxonomy and feature corpus.
    GenData,
    /// Train one stage (or all stages in order).
    Train,
    /// Build retrieval scenarios and score a checkpoint.
    Bench,
    /// Fit and evaluate a linear trait probe.
    Probe,
    /// Render a summary table from earlier results.
    Report,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, global = true, default_value = "trimodal-out")]
    pub out: PathBuf,
    /// TOML file with configuration overrides.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub species: Option<usize>,
    #[arg(long, global = true)]
    pub unseen_frac: Option<f64>,
    /// Stage to train (0, 1 or 2); all stages when absent.
    #[arg(long, global = true)]
    pub stage: Option<u8>,
    /// Epochs for the stage(s) being trained.
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch: Option<usize>,
    /// Stage 0/1 learning rate; stage 2 uses half.
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    #[arg(long, global = true)]
    pub tasks_per_scenario: Option<usize>,
    #[arg(long, global = true, value_parser = ["com", "sci", "tax", "scicom", "taxcom"])]
    pub prompt: Option<String>,
    #[arg(long, global = true, value_parser = ["species", "genus", "family"])]
    pub prompt_level: Option<String>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Stage to leave out of the schedule (repeatable).
    #[arg(long = "skip-stage", global = true)]
    pub skip_stage: Vec<u8>,
    /// Benchmark level filter (repeatable).
    #[arg(long, global = true, value_parser = ["species", "genus", "family"])]
    pub level: Vec<String>,
    /// Benchmark subset filter (repeatable).
    #[arg(long, global = true, value_parser = ["seen", "unseen"])]
    pub subset: Vec<String>,
    /// Database size per retrieval task.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Skip infeasible scenarios with a warning instead of failing.
    #[arg(long, global = true)]
    pub skip_infeasible: bool,
    /// Probe input modality.
    #[arg(long, global = true, value_parser = ["audio", "image"])]
    pub modality: Option<String>,
    /// Checkpoint to benchmark or probe; latest stage checkpoint by default.
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
}

/// Fully resolved configuration, embedded in every JSON artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    pub stage: Option<u8>,
    pub skip_infeasible: bool,
    pub probe_modality: Modality,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pipeline: PipelineConfig::default(),
            stage: None,
            skip_infeasible: false,
            probe_modality: Modality::Audio,
            threads: None,
        }
    }
}

impl RunConfig {
    /// Defaults, then `--config`, then the remaining flags.
    pub fn resolve(flags: &Flags) -> Result<Self> {
        let mut cfg = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                toml::from_str::<RunConfig>(&text)
                    .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        let p = &mut cfg.pipeline;
        if let Some(v) = flags.seed {
            p.seed = v;
        }
        if let Some(v) = flags.species {
            p.species = v;
        }
        if let Some(v) = flags.unseen_frac {
            p.unseen_frac = v;
        }
        if let Some(v) = flags.stage {
            Stage::from_index(v)?;
            cfg.stage = Some(v);
        }
        if let Some(v) = flags.epochs {
            for s in Stage::ALL {
                if cfg.stage.is_none_or(|x| x == s.index()) {
                    *stage_epochs(&mut p.train, s) = v;
                }
            }
        }
        if let Some(v) = flags.batch {
            p.train.batch_size = v;
        }
        if let Some(v) = flags.lr {
            p.train.lr = v;
        }
        if let Some(v) = flags.tau {
            p.model.tau = v;
        }
        if let Some(v) = flags.dim {
            p.model.dim = v;
        }
        if let Some(v) = flags.tasks_per_scenario {
            p.bench.tasks_per_scenario = v;
        }
        if let Some(v) = &flags.prompt {
            p.bench.prompt = v.parse::<PromptTemplate>()?;
        }
        if let Some(v) = &flags.prompt_level {
            p.bench.prompt_level = v.parse::<PromptLevel>()?;
        }
        if let Some(v) = flags.k {
            p.bench.k = v;
        }
        for &s in &flags.skip_stage {
            Stage::from_index(s)?;
            if !p.skip_stages.contains(&s) {
                p.skip_stages.push(s);
            }
        }
        if !flags.level.is_empty() {
            p.plan.levels = flags
                .level
                .iter()
                .map(|l| l.parse::<Level>())
                .collect::<Result<_>>()?;
        }
        if !flags.subset.is_empty() {
            p.plan.subsets = flags
                .subset
                .iter()
                .map(|s| s.parse::<Subset>())
                .collect::<Result<_>>()?;
        }
        if let Some(v) = &flags.modality {
            cfg.probe_modality = if v == "image" {
                Modality::Image
            } else {
                Modality::Audio
            };
        }
        cfg.skip_infeasible |= flags.skip_infeasible;
        if flags.threads.is_some() {
            cfg.threads = flags.threads;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let p = &self.pipeline;
        if !(0.0..1.0).contains(&p.unseen_frac) {
            return Err(Error::InvalidConfig(format!(
                "--unseen-frac must lie in [0, 1), got {}",
                p.unseen_frac
            )));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("--threads must be positive".into()));
        }
        if p.model.dim == 0 || !(p.model.tau > 0.0) {
            return Err(Error::InvalidConfig(
                "--dim and --tau must be positive".into(),
            ));
        }
        p.train.validate()
    }
}

fn stage_epochs(t: &mut crate::model::TrainConfig, s: Stage) -> &mut usize {
    match s {
        Stage::ImageText => &mut t.stage0_epochs,
        Stage::AudioText => &mut t.stage1_epochs,
        Stage::Joint => &mut t.stage2_epochs,
    }
}

#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    format: &'static str,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(
    path: &Path,
    format: &'static str,
    config: &RunConfig,
    body: T,
) -> Result<()> {
    let mut s = serde_json::to_string_pretty(&Artifact {
        format,
        config,
        body,
    })?;
    s.push('\n');
    write_text(path, &s)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub species: usize,
    pub seen: usize,
    pub unseen: usize,
    pub unseen_ids: Vec<String>,
    pub audio: SplitCounts,
    pub image: SplitCounts,
    pub audio_dim: usize,
    pub image_dim: usize,
}

impl CorpusSummary {
    fn new(reg: &Registry, corpus: &Corpus, cfg: &RunConfig) -> Self {
        let counts = |m| SplitCounts {
            train: corpus.count(m, Split::Train),
            test: corpus.count(m, Split::Test),
        };
        CorpusSummary {
            species: reg.len(),
            seen: reg.seen_indices().len(),
            unseen: reg.unseen_indices().len(),
            unseen_ids: reg.unseen_ids(),
            audio: counts(Modality::Audio),
            image: counts(Modality::Image),
            audio_dim: cfg.pipeline.synth.audio_dim,
            image_dim: cfg.pipeline.synth.image_dim,
        }
    }
}

#[derive(Deserialize)]
struct CorpusFile {
    format: String,
    #[serde(flatten)]
    summary: CorpusSummary,
}

fn feature_path(out: &Path, m: Modality) -> PathBuf {
    out.join(match m {
        Modality::Audio => "audio.bvf",
        _ => "image.bvf",
    })
}

fn checkpoint_path(out: &Path, stage: Stage) -> PathBuf {
    out.join(format!("stage{}.ckpt", stage.index()))
}

/// Loads the registry (with its split) and corpus written by `gen-data`.
pub fn load_data(out: &Path) -> Result<(Registry, Corpus)> {
    let file: CorpusFile = read_json(&out.join(CORPUS_FILE))?;
    if file.format != "bvcorpus1" {
        return Err(Error::Format(format!(
            "{CORPUS_FILE}: unknown format {:?}",
            file.format
        )));
    }
    let reg = load_registry(out.join(MANIFEST_FILE))?.with_unseen_ids(&file.summary.unseen_ids)?;
    let mut corpus = Corpus::default();
    for m in [Modality::Audio, Modality::Image] {
        let path = feature_path(out, m);
        let (tag, samples) = read_feature_store(&path)?;
        if tag != m {
            return Err(Error::Format(format!(
                "{}: holds {tag:?} features",
                path.display()
            )));
        }
        if let Some(s) = samples.iter().find(|s| s.species as usize >= reg.len()) {
            return Err(Error::Format(format!(
                "{}: species index {} outside registry",
                path.display(),
                s.species
            )));
        }
        match m {
            Modality::Audio => corpus.audio = samples,
            _ => corpus.image = samples,
        }
    }
    Ok((reg, corpus))
}

fn world_from(reg: Registry, corpus: Corpus) -> World {
    World {
        registry: reg,
        data: SyntheticCorpus {
            corpus,
            latents: Vec::new(),
            audio_map: Default::default(),
            image_map: Default::default(),
        },
    }
}

pub fn cmd_gen_data(cfg: &RunConfig, out: &Path) -> Result<String> {
    let p = &cfg.pipeline;
    let k = p.bench.k;
    if p.species < 2 {
        return Err(Error::Infeasible {
            scenario: "gen-data".into(),
            reason: format!(
                "{} species cannot be split seen/unseen; {k}-way retrieval needs at least {k}",
                p.species
            ),
        });
    }
    if p.species < k {
        log::warn!("benchmark infeasible: {k}-way retrieval needs at least {k} species per subset, corpus has {}", p.species);
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let world = generate_world(p)?;
    let reg = &world.registry;
    let corpus = &world.data.corpus;
    let unseen = reg.unseen_indices().len();
    if unseen > 0 && unseen < k {
        log::warn!("benchmark infeasible on the unseen subset: {unseen} unseen species, {k}-way tasks need {k}");
    }
    write_registry(reg, out.join(MANIFEST_FILE))?;
    write_feature_store(
        &feature_path(out, Modality::Audio),
        Modality::Audio,
        &corpus.audio,
    )?;
    write_feature_store(
        &feature_path(out, Modality::Image),
        Modality::Image,
        &corpus.image,
    )?;
    let resolved = RunConfig {
        pipeline: p.resolved(),
        ..cfg.clone()
    };
    let summary = CorpusSummary::new(reg, corpus, &resolved);
    write_json(&out.join(CORPUS_FILE), "bvcorpus1", &resolved, &summary)?;
    Ok(format!(
        "species {} (seen {}, unseen {})\naudio samples: {} train, {} test\nimage samples: {} train, {} test\n",
        summary.species, summary.seen, summary.unseen, summary.audio.train, summary.audio.test, summary.image.train,
        summary.image.test
    ))
}

/// Most recent stage before `stage` that is not skipped.
fn predecessor(stage: Stage, p: &PipelineConfig) -> Option<Stage> {
    Stage::ALL
        .into_iter()
        .filter(|s| *s < stage && p.runs(*s))
        .next_back()
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<String> {
    let p = cfg.pipeline.resolved();
    let (reg, corpus) = load_data(out)?;
    let world = world_from(reg, corpus);
    let stages: Vec<Stage> = match cfg.stage {
        Some(s) => vec![Stage::from_index(s)?],
        None => Stage::ALL.into_iter().filter(|s| p.runs(*s)).collect(),
    };
    let config_value = serde_json::to_value(RunConfig {
        pipeline: p.clone(),
        ..cfg.clone()
    })?;
    let mut state: Option<ModelState> = None;
    let mut summary = String::new();
    for stage in stages {
        let mut current = match state.take() {
            Some(s) => s,
            None => match predecessor(stage, &p) {
                Some(prev) => {
                    let path = checkpoint_path(out, prev);
                    if !path.exists() {
                        return Err(Error::StageOrder(format!(
                            "stage {stage} starts from the stage {prev} checkpoint {}, which does not exist; \
                             train stage {prev} first or pass --skip-stage {prev}",
                            path.display()
                        )));
                    }
                    load_checkpoint(&path)?.state
                }
                None => init_model(&world, &p)?,
            },
        };
        let epochs = p.train.epochs(stage);
        let report = run_stage_with(
            &mut current,
            &world.registry,
            &world.data.corpus,
            stage,
            &p.train,
            epochs,
            &TemplateSampler::uniform(),
        )?;
        let meta = CheckpointMeta {
            stage: stage.index(),
            epoch: epochs,
            seed: p.seed,
            run_config: Some(config_value.clone()),
        };
        save_checkpoint(&checkpoint_path(out, stage), &current, &meta)?;
        write_history(out, stage, &report.history, cfg)?;
        if let Some(last) = report.last() {
            let _ = writeln!(
                summary,
                "stage {stage}: {epochs} epochs, final total loss {:.4} (atc {:.4})",
                last.total, last.atc
            );
        }
        state = Some(current);
    }
    Ok(summary)
}

fn write_history(out: &Path, stage: Stage, history: &[EpochLoss], cfg: &RunConfig) -> Result<()> {
    let csv = out.join(format!("loss_stage{}.csv", stage.index()));
    let mut buf = Vec::new();
    write_loss_csv(&mut buf, history).map_err(|e| Error::io(&csv, e))?;
    fs::write(&csv, buf).map_err(|e| Error::io(&csv, e))?;
    #[derive(Serialize)]
    struct Body<'a> {
        stage: u8,
        history: &'a [EpochLoss],
    }
    write_json(
        &out.join(format!("train_stage{}.json", stage.index())),
        RUN_FORMAT,
        cfg,
        Body {
            stage: stage.index(),
            history,
        },
    )
}

/// The explicit checkpoint, else the latest stage checkpoint in `out`.
fn model_for(out: &Path, checkpoint: Option<&Path>) -> Result<ModelState> {
    let path = match checkpoint {
        Some(p) => p.to_path_buf(),
        None => Stage::ALL
            .into_iter()
            .rev()
            .map(|s| checkpoint_path(out, s))
            .find(|p| p.exists())
            .ok_or_else(|| Error::MissingCheckpoint(checkpoint_path(out, Stage::Joint)))?,
    };
    Ok(load_checkpoint(&path)?.state)
}

fn check_dims(state: &ModelState, corpus: &Corpus) -> Result<()> {
    for (m, want) in [
        (&corpus.audio, state.audio_dim()),
        (&corpus.image, state.image_dim()),
    ] {
        if let Some(s) = m.first() {
            if s.values.len() != want {
                return Err(Error::DimMismatch {
                    expected: want,
                    got: s.values.len(),
                    context: "checkpoint vs corpus features",
                });
            }
        }
    }
    Ok(())
}

pub fn cmd_bench(cfg: &RunConfig, out: &Path, checkpoint: Option<&Path>) -> Result<String> {
    let p = cfg.pipeline.resolved();
    let (reg, corpus) = load_data(out)?;
    let state = model_for(out, checkpoint)?;
    check_dims(&state, &corpus)?;
    let scenarios = if cfg.skip_infeasible {
        let mut kept = Vec::new();
        for (d, l, s) in p.plan.keys() {
            let one = BenchPlan {
                directions: vec![d],
                levels: vec![l],
                subsets: vec![s],
            };
            match build_scenarios(&reg, &corpus, &p.bench, &one) {
                Ok(mut v) => kept.append(&mut v),
                Err(e @ Error::Infeasible { .. }) => log::warn!("skipping: {e}"),
                Err(e) => return Err(e),
            }
        }
        if kept.is_empty() {
            return Err(Error::Infeasible {
                scenario: "bench".into(),
                reason: "every requested scenario is infeasible".into(),
            });
        }
        kept
    } else {
        build_scenarios(&reg, &corpus, &p.bench, &p.plan)?
    };
    let table =
        EmbeddingTable::compute(&state, &reg, &corpus, p.bench.prompt, p.bench.prompt_level)?;
    let rankings = run_benchmark(&table, &scenarios)?;
    let report = score(&reg, &scenarios, &rankings)?;
    let resolved = RunConfig {
        pipeline: p,
        ..cfg.clone()
    };
    write_text(
        &out.join("scenarios.json"),
        &scenarios_to_json(&scenarios, &resolved)?,
    )?;
    write_json(
        &out.join(METRICS_FILE),
        crate::bench::METRICS_FORMAT,
        &resolved,
        MetricsBody { metrics: &report },
    )?;
    let csv = out.join("metrics.csv");
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &report).map_err(|e| Error::io(&csv, e))?;
    fs::write(&csv, buf).map_err(|e| Error::io(&csv, e))?;
    Ok(render_metrics(&report))
}

#[derive(Serialize)]
struct MetricsBody<'a> {
    metrics: &'a MetricsReport,
}

#[derive(Deserialize)]
struct MetricsFile {
    metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TraitsBody {
    modality: Modality,
    traits: TraitMetrics,
}

fn traits_path(out: &Path, m: Modality) -> PathBuf {
    out.join(match m {
        Modality::Image => "traits_image.json",
        _ => "traits_audio.json",
    })
}

pub fn cmd_probe(cfg: &RunConfig, out: &Path, checkpoint: Option<&Path>) -> Result<String> {
    let p = cfg.pipeline.resolved();
    let (reg, corpus) = load_data(out)?;
    let state = model_for(out, checkpoint)?;
    check_dims(&state, &corpus)?;
    let m = cfg.probe_modality;
    let probe = train_probe(&state, m, &reg, &corpus, &p.probe)?;
    let traits = evaluate_probe(&probe, &state, m, &reg, &corpus)?;
    let resolved = RunConfig {
        pipeline: p,
        ..cfg.clone()
    };
    write_json(
        &traits_path(out, m),
        RUN_FORMAT,
        &resolved,
        TraitsBody {
            modality: m,
            traits: traits.clone(),
        },
    )?;
    Ok(render_traits(m, &traits))
}

pub fn cmd_report(out: &Path) -> Result<String> {
    let mut text = String::new();
    let metrics_path = out.join(METRICS_FILE);
    let mut found = false;
    if metrics_path.exists() {
        let file: MetricsFile = read_json(&metrics_path)?;
        text.push_str(&render_metrics(&file.metrics));
        found = true;
    }
    for m in [Modality::Audio, Modality::Image] {
        let path = traits_path(out, m);
        if path.exists() {
            let body: TraitsBody = read_json(&path)?;
            text.push('\n');
            text.push_str(&render_traits(body.modality, &body.traits));
            found = true;
        }
    }
    if !found {
        return Err(Error::io(
            &metrics_path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "run `bench` or `probe` first"),
        ));
    }
    write_text(&out.join("report.txt"), &text)?;
    Ok(text)
}

const DIRECTION_HEADERS: [&str; 6] = [
    "Audio>Text",
    "Text>Audio",
    "Audio>Image",
    "Image>Audio",
    "Image>Text",
    "Text>Image",
];

/// Plain-text summary: per-level blocks with Top-1/Top-5 per direction and
/// the average, then error consistency and per-class accuracy.
pub fn render_metrics(r: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}-way retrieval, Top-1 / Top-5", r.k);
    let _ = write!(s, "{:<16}", "");
    for h in DIRECTION_HEADERS.iter().chain(&["Average"]) {
        let _ = write!(s, " {h:>13}");
    }
    s.push('\n');
    for b in &r.blocks {
        let _ = write!(s, "{:<16}", format!("{} {}", b.level, b.subset));
        for d in crate::bench::Direction::ALL {
            match b.directions.iter().find(|x| x.direction == d) {
                Some(x) => {
                    let _ = write!(s, " {:>13}", format!("{:.3}/{:.3}", x.top1, x.top5));
                }
                None => {
                    let _ = write!(s, " {:>13}", "-");
                }
            }
        }
        let _ = writeln!(
            s,
            " {:>13}",
            format!("{:.3}/{:.3}", b.average.top1, b.average.top5)
        );
    }
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
    let _ = writeln!(
        s,
        "\nwrong species-level top-1: genus consistency {}, family consistency {}",
        fmt(r.genus_consistency),
        fmt(r.family_consistency)
    );
    for c in &r.consistency {
        let _ = writeln!(
            s,
            "  {:<7} {} errors, genus {}, family {}",
            c.subset,
            c.n_errors,
            fmt(c.genus_consistency),
            fmt(c.family_consistency)
        );
    }
    if !r.per_class.is_empty() {
        let _ = writeln!(s, "\nspecies-level accuracy by class");
        for c in &r.per_class {
            let _ = writeln!(
                s,
                "  {:<7} {:<12} n={:<5} top1 {:.3} top5 {:.3}",
                c.subset, c.class, c.n_tasks, c.top1, c.top5
            );
        }
    }
    s
}

pub fn render_traits(m: Modality, t: &TraitMetrics) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "trait probe ({m:?} embeddings, {} unseen-species samples), macro F1",
        t.n_samples
    );
    for cat in &crate::taxonomy::TRAIT_CATEGORIES {
        let _ = writeln!(
            s,
            "  {:<22} {:.3}",
            cat.name,
            t.category(cat.name).unwrap_or(0.0)
        );
    }
    s
}

/// Runs one parsed command and returns the text to print.
pub fn run(cli: &Cli) -> Result<String> {
    let cfg = RunConfig::resolve(&cli.flags)?;
    if let Some(n) = cfg.threads {
        // a pool may already exist when called repeatedly in one process
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::debug!("thread pool already configured: {e}");
        }
    }
    let out = cli.flags.out.as_path();
    let ck = cli.flags.checkpoint.as_deref();
    match cli.command {
        Command::GenData => cmd_gen_data(&cfg, out),
        Command::Train => cmd_train(&cfg, out),
        Command::Bench => cmd_bench(&cfg, out, ck),
        Command::Probe => cmd_probe(&cfg, out, ck),
        Command::Report => cmd_report(out),
    }
}
