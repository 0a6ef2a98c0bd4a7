//! Weighted tri-modal objective with full backpropagation.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::encoder::{
    mlp_backward, mlp_forward, text_backward, text_forward, EncoderParams, Tower,
};
use super::loss::{contrastive_loss, similarity_matrix};
use super::state::{Batch, ModelState};
use crate::error::Result;

/// Which loss terms are active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Image-text only (the pretraining stage).
    ImageText,
    /// `L_ATC + lambda * (L_AIC + L_ITC)`; `lambda = 0` is audio-text only.
    Joint { lambda: f64 },
}

impl Objective {
    /// Weights on (ATC, AIC, ITC).
    pub fn weights(&self) -> (f64, f64, f64) {
        match *self {
            Objective::ImageText => (0.0, 0.0, 1.0),
            Objective::Joint { lambda } => (1.0, lambda, lambda),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub atc: f64,
    pub aic: f64,
    pub itc: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: EncoderParams,
    /// d total / d tau (zero unless the temperature is learnable).
    pub tau: f64,
}

/// Evaluates the objective and the gradient of its weighted total with
/// respect to every parameter. Frozen towers get exactly zero gradient.
pub fn objective_loss(
    state: &ModelState,
    batch: &Batch,
    objective: Objective,
) -> Result<(LossBreakdown, Gradients)> {
    let p = &state.params;
    super::encoder::check_mlp_input(&p.audio, batch.audio.view(), "audio feature")?;
    super::encoder::check_mlp_input(&p.image, batch.image.view(), "image feature")?;
    super::encoder::check_tokens(&p.text, &batch.tokens)?;

    let tau = state.tau;
    let ca = mlp_forward(&p.audio, batch.audio.clone());
    let cv = mlp_forward(&p.image, batch.image.clone());
    let ct = text_forward(&p.text, &batch.tokens);
    let (a, v, t) = (&ca.y, &cv.y, &ct.y);

    let s_at = similarity_matrix(a.view(), t.view(), tau)?;
    let s_ai = similarity_matrix(a.view(), v.view(), tau)?;
    let s_it = similarity_matrix(v.view(), t.view(), tau)?;
    let (l_at, g_at) = contrastive_loss(s_at.view());
    let (l_ai, g_ai) = contrastive_loss(s_ai.view());
    let (l_it, g_it) = contrastive_loss(s_it.view());

    let (w_at, w_ai, w_it) = objective.weights();
    let losses = LossBreakdown {
        atc: l_at,
        aic: l_ai,
        itc: l_it,
        total: w_at * l_at + w_ai * l_ai + w_it * l_it,
    };

    // dL/dS for each weighted term, then chain through S = L R^T / tau
    let g_at = g_at * w_at;
    let g_ai = g_ai * w_ai;
    let g_it = g_it * w_it;
    let inv = 1.0 / tau;

    let mut grads = p.zeros_like();
    if !state.freeze.is_frozen(Tower::Audio) {
        let ga: Array2<f64> = (g_at.dot(t) + g_ai.dot(v)) * inv;
        grads.audio = mlp_backward(&p.audio, &ca, &ga);
    }
    if !state.freeze.is_frozen(Tower::Image) {
        let gv: Array2<f64> = (g_ai.t().dot(a) + g_it.dot(t)) * inv;
        grads.image = mlp_backward(&p.image, &cv, &gv);
    }
    if !state.freeze.is_frozen(Tower::Text) {
        let gt: Array2<f64> = (g_at.t().dot(a) + g_it.t().dot(v)) * inv;
        grads.text = text_backward(&p.text, &ct, &gt);
    }
    let tau_grad = if state.learn_tau {
        -((&g_at * &s_at).sum() + (&g_ai * &s_ai).sum() + (&g_it * &s_it).sum()) * inv
    } else {
        0.0
    };
    Ok((
        losses,
        Gradients {
            params: grads,
            tau: tau_grad,
        },
    ))
}

/// `L_ATC + lambda (L_AIC + L_ITC)` and its gradients.
pub fn total_loss(
    state: &ModelState,
    batch: &Batch,
    lambda: f64,
) -> Result<(LossBreakdown, Gradients)> {
    objective_loss(state, batch, Objective::Joint { lambda })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::state::{FreezeMask, ModelConfig};
    use crate::prompts::Vocabulary;
    use crate::rng::rng_from;
    use crate::taxonomy::{synthetic_registry, TaxonomyShape};
    use rand::Rng as _;

    fn tiny(b: usize, d: usize, seed: u64) -> (ModelState, Batch) {
        let reg = synthetic_registry(6, seed, &TaxonomyShape::default()).unwrap();
        let vocab = Vocabulary::from_registry(&reg);
        let cfg = ModelConfig {
            dim: d,
            hidden: 5,
            text_embed: 4,
            tau: 0.5,
            learn_tau: false,
        };
        let state = ModelState::init(&cfg, 3, 4, vocab.clone(), seed).unwrap();
        let mut rng = rng_from(seed + 100);
        let audio = Array2::from_shape_fn((b, 3), |_| rng.random_range(-1.0..1.0));
        let image = Array2::from_shape_fn((b, 4), |_| rng.random_range(-1.0..1.0));
        let tokens = (0..b)
            .map(|_| {
                (0..3)
                    .map(|_| rng.random_range(1..vocab.len() as u32))
                    .collect()
            })
            .collect();
        let batch = Batch::new(audio, image, tokens, (0..b as u32).collect()).unwrap();
        (state, batch)
    }

    #[test]
    fn lambda_zero_is_atc_alone() {
        let (state, batch) = tiny(4, 4, 1);
        let (l, _) = total_loss(&state, &batch, 0.0).unwrap();
        assert_eq!(l.total, l.atc);
        let (l2, _) = total_loss(&state, &batch, 0.1).unwrap();
        assert!((l2.total - (l.atc + 0.1 * (l.aic + l.itc))).abs() < 1e-12);
    }

    #[test]
    fn frozen_towers_get_zero_gradient() {
        let (mut state, batch) = tiny(3, 4, 2);
        state.freeze = FreezeMask {
            audio: false,
            image: true,
            text: true,
        };
        let (_, g) = total_loss(&state, &batch, 0.1).unwrap();
        for t in g.params.tensors() {
            let nonzero = t.data.iter().any(|&x| x != 0.0);
            assert_eq!(nonzero, t.tower == Tower::Audio, "{:?}.{}", t.tower, t.name);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (mut state, batch) = tiny(3, 4, 3);
        state.learn_tau = true;
        for objective in [Objective::Joint { lambda: 0.1 }, Objective::ImageText] {
            let (_, g) = objective_loss(&state, &batch, objective).unwrap();
            let f = |s: &ModelState| objective_loss(s, &batch, objective).unwrap().0.total;
            let h = 1e-6;
            let grads: Vec<Vec<f64>> = g.params.tensors().iter().map(|t| t.data.to_vec()).collect();
            let n_tensors = grads.len();
            for ti in 0..n_tensors {
                for k in 0..grads[ti].len() {
                    let mut plus = state.clone();
                    plus.params.tensors_mut()[ti].data[k] += h;
                    let mut minus = state.clone();
                    minus.params.tensors_mut()[ti].data[k] -= h;
                    let fd = (f(&plus) - f(&minus)) / (2.0 * h);
                    let an = grads[ti][k];
                    let tol = 1e-4 * an.abs().max(fd.abs()) + 1e-8;
                    assert!(
                        (fd - an).abs() <= tol,
                        "tensor {ti} entry {k}: fd {fd} analytic {an}"
                    );
                }
            }
            let mut plus = state.clone();
            plus.tau += h;
            let mut minus = state.clone();
            minus.tau -= h;
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            assert!(
                (fd - g.tau).abs() <= 1e-4 * fd.abs() + 1e-8,
                "tau: fd {fd} analytic {}",
                g.tau
            );
        }
    }

    #[test]
    fn duplicate_rows_bound_the_loss() {
        let (state, mut batch) = tiny(3, 4, 4);
        let row_a = batch.audio.row(0).to_owned();
        let row_v = batch.image.row(0).to_owned();
        batch.audio.row_mut(1).assign(&row_a);
        batch.image.row_mut(1).assign(&row_v);
        batch.tokens[1] = batch.tokens[0].clone();
        let (l, _) = total_loss(&state, &batch, 0.1).unwrap();
        assert!(l.total.is_finite());
        // rows 0 and 1 are indistinguishable, so each of their four
        // cross-entropy terms is at least ln 2; they carry 4 of the 6 terms
        let bound = 2f64.ln() * 2.0 / 3.0;
        assert!(l.atc >= bound && l.aic >= bound && l.itc >= bound, "{l:?}");
    }
}
