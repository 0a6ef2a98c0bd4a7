//! Build a seeded tri-modal corpus and store it as BVF1 feature files.
//!
//! cargo run --example synthetic_corpus

use trimodal::pipeline::{generate_world, PipelineConfig};
use trimodal::signal::{read_feature_store, write_feature_store, Modality, Split};

fn main() -> anyhow::Result<()> {
    let cfg = PipelineConfig {
        seed: 1,
        species: 60,
        unseen_frac: 0.2,
        ..Default::default()
    };
    let world = generate_world(&cfg)?;
    let c = &world.data.corpus;
    for m in [Modality::Audio, Modality::Image] {
        println!(
            "{m:?}: {} train, {} test, dim {}",
            c.count(m, Split::Train),
            c.count(m, Split::Test),
            c.samples(m)[0].values.len()
        );
    }

    // same-species samples sit closer than samples of different species
    let dist = |a: &[f32], b: &[f32]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f32>()
            .sqrt()
    };
    let per = cfg.synth.samples_per_species;
    println!(
        "within species {:.2}, across species {:.2}",
        dist(&c.audio[0].values, &c.audio[1].values),
        dist(&c.audio[0].values, &c.audio[per].values)
    );

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("audio.bvf");
    write_feature_store(&path, Modality::Audio, &c.audio)?;
    let (m, back) = read_feature_store(&path)?;
    println!(
        "{} bytes on disk, {m:?} round trip exact: {}",
        std::fs::metadata(&path)?.len(),
        back == c.audio
    );
    Ok(())
}
