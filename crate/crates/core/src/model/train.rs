//! Staged training.
//!
//! * Stage 0: image + text trained on the image-text loss (pretraining).
//! * Stage 1: image and text frozen, audio trained on the audio-text loss.
//! * Stage 2: image frozen, audio + text trained on the full objective at
//!   half the learning rate, with `lambda` ramped linearly over a warm-up.

use std::fmt;
use std::io::Write;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::objective::{objective_loss, Objective};
use super::optim::{AdamW, AdamWConfig};
use super::state::{Batch, FreezeMask, ModelState};
use crate::error::{Error, Result};
use crate::prompts::{render, tokenize, PromptTemplate, TemplateSampler};
use crate::rng;
use crate::signal::{Corpus, Modality, Split};
use crate::taxonomy::Registry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    ImageText = 0,
    AudioText = 1,
    Joint = 2,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::ImageText, Stage::AudioText, Stage::Joint];

    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            0 => Ok(Stage::ImageText),
            1 => Ok(Stage::AudioText),
            2 => Ok(Stage::Joint),
            _ => Err(Error::InvalidConfig(format!(
                "no stage {i}; stages are 0, 1, 2"
            ))),
        }
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn freeze_mask(self) -> FreezeMask {
        match self {
            Stage::ImageText => FreezeMask {
                audio: true,
                image: false,
                text: false,
            },
            Stage::AudioText => FreezeMask {
                audio: false,
                image: true,
                text: true,
            },
            Stage::Joint => FreezeMask {
                audio: false,
                image: true,
                text: false,
            },
        }
    }

    fn anchor(self) -> Modality {
        match self {
            Stage::ImageText => Modality::Image,
            _ => Modality::Audio,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub stage0_epochs: usize,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    /// Learning rate of stages 0 and 1; stage 2 runs at half of it.
    pub lr: f64,
    pub batch_size: usize,
    pub lambda_max: f64,
    pub lambda_warmup_epochs: usize,
    pub adamw: AdamWConfig,
    /// Recordings drawn per species per epoch.
    pub per_species_cap: usize,
    /// Std of the fresh Gaussian jitter added to audio features each time
    /// they are drawn.
    pub augment_sigma: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stage0_epochs: 10,
            stage1_epochs: 30,
            stage2_epochs: 10,
            lr: 1e-4,
            batch_size: 64,
            lambda_max: 0.1,
            lambda_warmup_epochs: 2,
            adamw: AdamWConfig::default(),
            per_species_cap: 20,
            augment_sigma: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0)
            || self.batch_size < 2
            || self.per_species_cap == 0
            || !(self.lambda_max >= 0.0)
        {
            return Err(Error::InvalidConfig(format!(
                "bad training config: {self:?}"
            )));
        }
        if self.lambda_warmup_epochs > self.stage2_epochs {
            return Err(Error::InvalidConfig(format!(
                "lambda warm-up ({}) exceeds stage-2 epochs ({})",
                self.lambda_warmup_epochs, self.stage2_epochs
            )));
        }
        if !(self.augment_sigma >= 0.0) {
            return Err(Error::InvalidConfig("augment_sigma must be >= 0".into()));
        }
        Ok(())
    }

    pub fn learning_rate(&self, stage: Stage) -> f64 {
        match stage {
            Stage::Joint => self.lr * 0.5,
            _ => self.lr,
        }
    }

    pub fn epochs(&self, stage: Stage) -> usize {
        match stage {
            Stage::ImageText => self.stage0_epochs,
            Stage::AudioText => self.stage1_epochs,
            Stage::Joint => self.stage2_epochs,
        }
    }
}

/// Linear warm-up of the auxiliary loss weight, clamped at `lambda_max`.
pub fn lambda_at(step: u64, steps_per_epoch: u64, cfg: &TrainConfig) -> f64 {
    let warmup = cfg.lambda_warmup_epochs as u64 * steps_per_epoch;
    if warmup == 0 {
        return cfg.lambda_max;
    }
    cfg.lambda_max * (step as f64 / warmup as f64).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub stage: u8,
    pub epoch: usize,
    pub atc: f64,
    pub aic: f64,
    pub itc: f64,
    pub total: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StageReport {
    pub history: Vec<EpochLoss>,
    pub steps: u64,
}

impl StageReport {
    pub fn last(&self) -> Option<&EpochLoss> {
        self.history.last()
    }
}

pub const LOSS_CSV_HEADER: &str = "stage,epoch,atc,aic,itc,total,lambda";

pub fn write_loss_csv<W: Write>(mut w: W, rows: &[EpochLoss]) -> std::io::Result<()> {
    writeln!(w, "{LOSS_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.stage, r.epoch, r.atc, r.aic, r.itc, r.total, r.lambda
        )?;
    }
    Ok(())
}

struct Item {
    species: u32,
    audio: usize,
    image: usize,
}

/// Pre-tokenized prompts for every species and template.
struct PromptBank(Vec<[Vec<u32>; 5]>);

impl PromptBank {
    fn new(reg: &Registry, state: &ModelState) -> Self {
        PromptBank(
            reg.records()
                .iter()
                .map(|rec| PromptTemplate::ALL.map(|t| tokenize(&render(rec, t), &state.vocab)))
                .collect(),
        )
    }
}

fn epoch_items(
    reg: &Registry,
    corpus: &Corpus,
    stage: Stage,
    cap: usize,
    rng: &mut rng::Rng,
) -> Vec<Item> {
    let n = reg.len();
    let audio = corpus.by_species(Modality::Audio, Split::Train, n);
    let image = corpus.by_species(Modality::Image, Split::Train, n);
    let mut items = Vec::new();
    for sp in reg.seen_indices() {
        if audio[sp].is_empty() || image[sp].is_empty() {
            continue;
        }
        let (anchors, partners) = match stage.anchor() {
            Modality::Image => (&image[sp], &audio[sp]),
            _ => (&audio[sp], &image[sp]),
        };
        let mut picked = anchors.clone();
        picked.shuffle(rng);
        picked.truncate(cap);
        for a in picked {
            let p = partners[rng.random_range(0..partners.len())];
            let (audio, image) = if stage.anchor() == Modality::Image {
                (p, a)
            } else {
                (a, p)
            };
            items.push(Item {
                species: sp as u32,
                audio,
                image,
            });
        }
    }
    items.shuffle(rng);
    items
}

fn make_batch(
    items: &[Item],
    corpus: &Corpus,
    prompts: &PromptBank,
    sampler: &TemplateSampler,
    jitter: Option<&Normal<f64>>,
    rng: &mut rng::Rng,
) -> Result<Batch> {
    let a_dim = corpus.audio[items[0].audio].values.len();
    let v_dim = corpus.image[items[0].image].values.len();
    let mut audio = Array2::zeros((items.len(), a_dim));
    let mut image = Array2::zeros((items.len(), v_dim));
    let mut tokens = Vec::with_capacity(items.len());
    for (i, it) in items.iter().enumerate() {
        for (dst, &src) in audio
            .row_mut(i)
            .iter_mut()
            .zip(&corpus.audio[it.audio].values)
        {
            *dst = src as f64 + jitter.map_or(0.0, |d| d.sample(rng));
        }
        for (dst, &src) in image
            .row_mut(i)
            .iter_mut()
            .zip(&corpus.image[it.image].values)
        {
            *dst = src as f64;
        }
        let t = sampler.sample(rng);
        tokens.push(prompts.0[it.species as usize][t as usize].clone());
    }
    Batch::new(
        audio,
        image,
        tokens,
        items.iter().map(|it| it.species).collect(),
    )
}

/// Trains one stage in place and returns the per-epoch loss history.
/// The optimizer starts from fresh moments.
pub fn run_stage(
    state: &mut ModelState,
    reg: &Registry,
    corpus: &Corpus,
    stage: Stage,
    cfg: &TrainConfig,
) -> Result<StageReport> {
    run_stage_with(
        state,
        reg,
        corpus,
        stage,
        cfg,
        cfg.epochs(stage),
        &TemplateSampler::uniform(),
    )
}

pub fn run_stage_with(
    state: &mut ModelState,
    reg: &Registry,
    corpus: &Corpus,
    stage: Stage,
    cfg: &TrainConfig,
    epochs: usize,
    sampler: &TemplateSampler,
) -> Result<StageReport> {
    cfg.validate()?;
    if reg.seen_indices().is_empty() {
        return Err(Error::EmptyTraining("no seen species".into()));
    }
    state.freeze = stage.freeze_mask();
    let lr = cfg.learning_rate(stage);
    let prompts = PromptBank::new(reg, state);
    let jitter = (cfg.augment_sigma > 0.0)
        .then(|| Normal::new(0.0, cfg.augment_sigma).expect("sigma checked"));
    let mut rng = rng::labeled_rng(cfg.seed, &format!("train/stage{}", stage.index()));
    let mut opt = AdamW::new(cfg.adamw, &state.params);
    let mut report = StageReport::default();

    let mut steps_per_epoch = None;
    for epoch in 1..=epochs {
        let items = epoch_items(reg, corpus, stage, cfg.per_species_cap, &mut rng);
        if items.len() < 2 {
            return Err(Error::EmptyTraining(format!(
                "stage {stage}: {} training pairs across seen species",
                items.len()
            )));
        }
        let batches: Vec<&[Item]> = items
            .chunks(cfg.batch_size)
            .filter(|c| c.len() >= 2)
            .collect();
        let spe = *steps_per_epoch.get_or_insert(batches.len() as u64);
        let mut sums = [0.0; 4];
        let mut lambda = 0.0;
        for chunk in &batches {
            let objective = match stage {
                Stage::ImageText => Objective::ImageText,
                Stage::AudioText => Objective::Joint { lambda: 0.0 },
                Stage::Joint => {
                    lambda = lambda_at(report.steps, spe, cfg);
                    Objective::Joint { lambda }
                }
            };
            let batch = make_batch(chunk, corpus, &prompts, sampler, jitter.as_ref(), &mut rng)?;
            let (l, g) = objective_loss(state, &batch, objective)?;
            opt.apply(state, &g, lr)?;
            report.steps += 1;
            for (s, v) in sums.iter_mut().zip([l.atc, l.aic, l.itc, l.total]) {
                *s += v;
            }
        }
        let n = batches.len() as f64;
        let row = EpochLoss {
            stage: stage.index(),
            epoch,
            atc: sums[0] / n,
            aic: sums[1] / n,
            itc: sums[2] / n,
            total: sums[3] / n,
            lambda,
        };
        log::info!(
            "stage {} epoch {epoch}: atc {:.4} aic {:.4} itc {:.4} total {:.4} lambda {:.3}",
            stage,
            row.atc,
            row.aic,
            row.itc,
            row.total,
            row.lambda
        );
        report.history.push(row);
    }
    Ok(report)
}
