//! Fit linear trait probes on frozen audio and image embeddings and report
//! per-category F1 on unseen species.
//!
//! cargo run --release --example trait_probe

use trimodal::cli::render_traits;
use trimodal::pipeline::{generate_world, init_model, probe, train_stages, PipelineConfig};
use trimodal::signal::Modality;

fn main() -> anyhow::Result<()> {
    let mut cfg = PipelineConfig {
        seed: 2,
        species: 400,
        unseen_frac: 0.25,
        ..Default::default()
    };
    cfg.train.lr = 1e-3;
    cfg.synth.latent_dim = 4;
    let world = generate_world(&cfg)?;
    let mut state = init_model(&world, &cfg)?;
    train_stages(&mut state, &world, &cfg)?;
    for m in [Modality::Audio, Modality::Image] {
        print!("{}", render_traits(m, &probe(&state, &world, &cfg, m)?));
    }
    Ok(())
}
