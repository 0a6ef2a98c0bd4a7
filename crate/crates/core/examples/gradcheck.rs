//! Compare analytic gradients of the weighted objective with central finite
//! differences.
//!
//! cargo run --example gradcheck

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use trimodal::model::{total_loss, Batch, ModelConfig, ModelState};
use trimodal::prompts::Vocabulary;
use trimodal::taxonomy::{synthetic_registry, TaxonomyShape};

fn main() -> anyhow::Result<()> {
    let reg = synthetic_registry(10, 1, &TaxonomyShape::default())?;
    let vocab = Vocabulary::from_registry(&reg);
    let cfg = ModelConfig {
        dim: 4,
        hidden: 6,
        text_embed: 5,
        tau: 0.3,
        learn_tau: false,
    };
    let state = ModelState::init(&cfg, 5, 3, vocab.clone(), 2)?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let audio = Array2::from_shape_fn((4, 5), |_| rng.random_range(-1.0..1.0));
    let image = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
    let tokens = (0..4)
        .map(|_| {
            vec![
                rng.random_range(1..vocab.len() as u32),
                rng.random_range(1..vocab.len() as u32),
            ]
        })
        .collect();
    let batch = Batch::new(audio, image, tokens, vec![0, 1, 2, 3])?;
    let lambda = 0.1;

    let (loss, grads) = total_loss(&state, &batch, lambda)?;
    println!(
        "L_ATC {:.5}  L_AIC {:.5}  L_ITC {:.5}  total {:.5}",
        loss.atc, loss.aic, loss.itc, loss.total
    );

    let h = 1e-5;
    let f = |s: &ModelState| total_loss(s, &batch, lambda).map(|(l, _)| l.total);
    let analytic: Vec<Vec<f64>> = grads
        .params
        .tensors()
        .iter()
        .map(|t| t.data.to_vec())
        .collect();
    for (ti, t) in state.params.tensors().iter().enumerate() {
        let mut worst: f64 = 0.0;
        for (k, &an) in analytic[ti].iter().enumerate() {
            let mut plus = state.clone();
            plus.params.tensors_mut()[ti].data[k] += h;
            let mut minus = state.clone();
            minus.params.tensors_mut()[ti].data[k] -= h;
            let fd = (f(&plus)? - f(&minus)?) / (2.0 * h);
            worst = worst.max((fd - an).abs() / an.abs().max(fd.abs()).max(1e-6));
        }
        println!(
            "{:>5}.{:<5} {:>4} entries  max rel err {worst:.1e}",
            t.tower.as_str(),
            t.name,
            t.data.len()
        );
    }
    Ok(())
}
