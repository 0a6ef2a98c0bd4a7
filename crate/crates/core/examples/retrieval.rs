//! Train briefly, then score the 100-way retrieval benchmark across all six
//! directions, three levels and both subsets.
//!
//! cargo run --release --example retrieval

use trimodal::bench::{Direction, Level, Subset};
use trimodal::cli::render_metrics;
use trimodal::pipeline::{evaluate, generate_world, init_model, train_stages, PipelineConfig};

fn main() -> anyhow::Result<()> {
    let mut cfg = PipelineConfig {
        seed: 9,
        species: 1200,
        unseen_frac: 0.5,
        ..Default::default()
    };
    cfg.train.lr = 1e-3;
    cfg.bench.tasks_per_scenario = 100;
    let world = generate_world(&cfg)?;
    let mut state = init_model(&world, &cfg)?;

    let (_, untrained) = evaluate(&state, &world, &cfg)?;
    train_stages(&mut state, &world, &cfg)?;
    let (scenarios, report) = evaluate(&state, &world, &cfg)?;

    println!(
        "{} scenarios x {} tasks, K = {}",
        scenarios.len(),
        scenarios[0].tasks.len(),
        report.k
    );
    print!("{}", render_metrics(&report));
    let avg = |r: &trimodal::bench::MetricsReport| {
        r.average(Level::Species, Subset::Seen)
            .map_or(0.0, |t| t.top1)
    };
    println!(
        "species/seen average top1: untrained {:.3}, trained {:.3}",
        avg(&untrained),
        avg(&report)
    );
    if let Some(s) = report.scenario(Direction::A2T, Level::Family, Subset::Unseen) {
        println!("A2T family/unseen: top1 {:.3}, top5 {:.3}", s.top1, s.top5);
    }
    Ok(())
}
