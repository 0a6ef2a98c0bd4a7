//! One call from seed to metrics, plus a rerun showing the report is
//! reproducible byte for byte.
//!
//! cargo run --release --example pipeline

use trimodal::bench::{BenchPlan, Level, Subset};
use trimodal::pipeline::{run_pipeline, PipelineConfig};

fn main() -> anyhow::Result<()> {
    let mut cfg = PipelineConfig {
        seed: 7,
        species: 220,
        unseen_frac: 0.5,
        plan: BenchPlan::only(&[Level::Species], &Subset::ALL),
        ..Default::default()
    };
    cfg.train.lr = 1e-3;

    let start = std::time::Instant::now();
    let out = run_pipeline(&cfg)?;
    println!(
        "trained {} epochs in {:.1}s",
        out.history.len(),
        start.elapsed().as_secs_f64()
    );
    for subset in Subset::ALL {
        let b = out
            .metrics
            .block(Level::Species, subset)
            .expect("planned block");
        let dirs: Vec<String> = b
            .directions
            .iter()
            .map(|d| format!("{} {:.2}", d.direction, d.top1))
            .collect();
        println!(
            "{subset:>6}: avg top1 {:.3} top5 {:.3} | {}",
            b.average.top1,
            b.average.top5,
            dirs.join("  ")
        );
    }
    if let Some(g) = out.metrics.genus_consistency {
        println!(
            "species-level errors landing in the right genus: {:.0}%",
            100.0 * g
        );
    }

    let again = run_pipeline(&cfg)?;
    println!(
        "rerun identical: {}",
        serde_json::to_vec(&out.metrics)? == serde_json::to_vec(&again.metrics)?
    );
    Ok(())
}
