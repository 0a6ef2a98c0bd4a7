//! Linear trait probes on frozen embeddings.
//!
//! One linear layer maps an embedding to 34 logits. Exclusive categories use
//! a softmax over their slots; every other slot is an independent sigmoid.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{adamw_step, AdamWConfig, ModelState};
use crate::rng;
use crate::signal::{Corpus, FeatureVector, Modality, Split};
use crate::taxonomy::{trait_names, Registry, TraitVector, N_TRAITS, TRAIT_CATEGORIES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub adamw: AdamWConfig,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 20,
            lr: 1e-3,
            batch_size: 2,
            adamw: AdamWConfig::default(),
            seed: 0,
        }
    }
}

/// `weight` is d x 34, `bias` 34, both in trait slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeParams {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ProbeParams {
    pub fn zeros(dim: usize) -> Self {
        ProbeParams {
            weight: Array2::zeros((dim, N_TRAITS)),
            bias: Array1::zeros(N_TRAITS),
        }
    }

    pub fn dim(&self) -> usize {
        self.weight.nrows()
    }

    /// Per-slot probabilities: softmax within exclusive categories, sigmoid
    /// elsewhere.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: x.ncols(),
                context: "probe input",
            });
        }
        let mut z = x.dot(&self.weight) + &self.bias;
        for mut row in z.rows_mut() {
            let mut start = 0;
            for cat in &TRAIT_CATEGORIES {
                let mut seg = row.slice_mut(s![start..start + cat.traits.len()]);
                if cat.exclusive {
                    let m = seg.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    seg.mapv_inplace(|v| (v - m).exp());
                    let sum = seg.sum();
                    seg.mapv_inplace(|v| v / sum);
                } else {
                    seg.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp()));
                }
                start += cat.traits.len();
            }
        }
        Ok(z)
    }

    /// Hard predictions: argmax (lowest slot on ties) in exclusive
    /// categories, threshold 0.5 elsewhere.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<TraitVector>> {
        let p = self.forward(x)?;
        Ok(p.rows()
            .into_iter()
            .map(|row| decide(row.as_slice().expect("row-major")))
            .collect())
    }
}

fn decide(p: &[f64]) -> TraitVector {
    let mut out = [false; N_TRAITS];
    let mut start = 0;
    for cat in &TRAIT_CATEGORIES {
        let n = cat.traits.len();
        if cat.exclusive {
            let best = (0..n).fold(0, |b, i| if p[start + i] > p[start + b] { i } else { b });
            out[start + best] = true;
        } else {
            for i in 0..n {
                out[start + i] = p[start + i] >= 0.5;
            }
        }
        start += n;
    }
    TraitVector(out)
}

/// Summed cross-entropy (softmax categories) and binary cross-entropy (the
/// rest), averaged over rows, with its gradient w.r.t. the logits.
fn loss_and_logit_grad(p: &Array2<f64>, y: &Array2<f64>) -> (f64, Array2<f64>) {
    let n = p.nrows() as f64;
    let mut loss = 0.0;
    let mut start = 0;
    for cat in &TRAIT_CATEGORIES {
        for i in start..start + cat.traits.len() {
            for (pv, yv) in p.column(i).iter().zip(y.column(i)) {
                let pc = pv.clamp(1e-12, 1.0 - 1e-12);
                loss -= yv * pc.ln();
                if !cat.exclusive {
                    loss -= (1.0 - yv) * (1.0 - pc).ln();
                }
            }
        }
        start += cat.traits.len();
    }
    // softmax + CE and sigmoid + BCE both give p - y on the logits
    ((loss / n), (p - y) / n)
}

pub fn labels_matrix(labels: &[TraitVector]) -> Array2<f64> {
    Array2::from_shape_fn((labels.len(), N_TRAITS), |(r, c)| {
        labels[r].0[c] as u8 as f64
    })
}

/// Fits a probe on fixed embeddings `x` with targets `labels`.
pub fn fit_probe(
    x: ArrayView2<f64>,
    labels: &[TraitVector],
    cfg: &ProbeConfig,
) -> Result<ProbeParams> {
    if x.nrows() == 0 {
        return Err(Error::EmptyTraining(
            "no samples for the trait probe".into(),
        ));
    }
    if x.nrows() != labels.len() {
        return Err(Error::DimMismatch {
            expected: x.nrows(),
            got: labels.len(),
            context: "probe labels",
        });
    }
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(Error::InvalidConfig(format!("bad probe config: {cfg:?}")));
    }
    let d = x.ncols();
    let mut rng = rng::labeled_rng(cfg.seed, "probe");
    let init = Normal::new(0.0, 0.01).expect("valid std");
    let mut probe = ProbeParams {
        weight: Array2::from_shape_simple_fn((d, N_TRAITS), || init.sample(&mut rng)),
        bias: Array1::zeros(N_TRAITS),
    };
    let y = labels_matrix(labels);
    let (mut mw, mut vw) = (Array2::zeros((d, N_TRAITS)), Array2::zeros((d, N_TRAITS)));
    let (mut mb, mut vb) = (Array1::zeros(N_TRAITS), Array1::zeros(N_TRAITS));
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut step = 0u64;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb = y.select(Axis(0), chunk);
            let p = probe.forward(xb.view())?;
            let (loss, gz) = loss_and_logit_grad(&p, &yb);
            total += loss * chunk.len() as f64;
            let gw = xb.t().dot(&gz);
            let gb = gz.sum_axis(Axis(0));
            step += 1;
            adamw_step(
                probe.weight.as_slice_mut().expect("row-major"),
                gw.as_slice().expect("row-major"),
                mw.as_slice_mut().expect("row-major"),
                vw.as_slice_mut().expect("row-major"),
                &cfg.adamw,
                cfg.lr,
                step,
            )?;
            adamw_step(
                probe.bias.as_slice_mut().expect("contiguous"),
                gb.as_slice().expect("contiguous"),
                mb.as_slice_mut().expect("contiguous"),
                vb.as_slice_mut().expect("contiguous"),
                &cfg.adamw,
                cfg.lr,
                step,
            )?;
        }
        log::debug!("probe epoch {epoch}: loss {:.4}", total / x.nrows() as f64);
    }
    Ok(probe)
}

/// Embeddings and trait labels of the samples accepted by `keep`.
pub fn probe_dataset(
    state: &ModelState,
    modality: Modality,
    reg: &Registry,
    corpus: &Corpus,
    keep: impl Fn(&FeatureVector) -> bool,
) -> Result<(Array2<f64>, Vec<TraitVector>)> {
    let picked: Vec<&FeatureVector> = corpus
        .samples(modality)
        .iter()
        .filter(|s| keep(s))
        .collect();
    let feats: Vec<&[f32]> = picked.iter().map(|s| s.values.as_slice()).collect();
    let x = match modality {
        Modality::Audio => state.encode_audio_batch(&feats)?,
        Modality::Image => state.encode_image_batch(&feats)?,
        Modality::Text => {
            return Err(Error::InvalidConfig(
                "trait probes take audio or image embeddings".into(),
            ))
        }
    };
    let labels = picked
        .iter()
        .map(|s| {
            reg.records()
                .get(s.species as usize)
                .map(|r| r.traits)
                .ok_or_else(|| Error::UnknownSpecies(s.species.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((x, labels))
}

/// Trains a probe on training-split samples of seen species. The model is
/// only read.
pub fn train_probe(
    state: &ModelState,
    modality: Modality,
    reg: &Registry,
    corpus: &Corpus,
    cfg: &ProbeConfig,
) -> Result<ProbeParams> {
    let (x, labels) = probe_dataset(state, modality, reg, corpus, |s| {
        s.split == Split::Train && !reg.is_unseen(s.species as usize)
    })?;
    fit_probe(x.view(), &labels, cfg)
}

/// Evaluates on every sample of unseen species.
pub fn evaluate_probe(
    probe: &ProbeParams,
    state: &ModelState,
    modality: Modality,
    reg: &Registry,
    corpus: &Corpus,
) -> Result<TraitMetrics> {
    let (x, labels) = probe_dataset(state, modality, reg, corpus, |s| {
        reg.is_unseen(s.species as usize)
    })?;
    if labels.is_empty() {
        return Err(Error::Infeasible {
            scenario: format!("{modality:?} trait probe").to_lowercase(),
            reason: "no samples of unseen species".into(),
        });
    }
    Ok(trait_metrics(&labels, &probe.predict(x.view())?))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TraitScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitMetrics {
    pub n_samples: usize,
    /// Macro F1 over each category's traits, keyed by category name.
    pub categories: BTreeMap<String, f64>,
    pub traits: BTreeMap<String, TraitScore>,
}

impl TraitMetrics {
    pub fn category(&self, name: &str) -> Option<f64> {
        self.categories.get(name).copied()
    }
}

/// F1 of one binary label set; defined as 0 when there are no true positives.
pub fn binary_scores(truth: &[bool], pred: &[bool]) -> TraitScore {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&t, &p) in truth.iter().zip(pred) {
        match (t, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fneg += 1,
            _ => {}
        }
    }
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    TraitScore {
        precision: div(tp, tp + fp),
        recall: div(tp, tp + fneg),
        f1: div(2 * tp, 2 * tp + fp + fneg),
        support: tp + fneg,
    }
}

pub fn trait_metrics(truth: &[TraitVector], pred: &[TraitVector]) -> TraitMetrics {
    let names = trait_names();
    let scores: Vec<TraitScore> = (0..N_TRAITS)
        .map(|i| {
            let t: Vec<bool> = truth.iter().map(|v| v.0[i]).collect();
            let p: Vec<bool> = pred.iter().map(|v| v.0[i]).collect();
            binary_scores(&t, &p)
        })
        .collect();
    let mut categories = BTreeMap::new();
    let mut start = 0;
    for cat in &TRAIT_CATEGORIES {
        let n = cat.traits.len();
        let f1 = scores[start..start + n].iter().map(|s| s.f1).sum::<f64>() / n as f64;
        categories.insert(cat.name.to_string(), f1);
        start += n;
    }
    TraitMetrics {
        n_samples: truth.len(),
        categories,
        traits: names.zip(scores).map(|(n, s)| (n.to_string(), s)).collect(),
    }
}
