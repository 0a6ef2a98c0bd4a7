//! Three-stage training with per-epoch losses, a loss CSV and a checkpoint.
//!
//! cargo run --release --example training

use trimodal::model::{
    load_checkpoint, run_stage, save_checkpoint, write_loss_csv, CheckpointMeta, Stage,
};
use trimodal::pipeline::{generate_world, init_model, PipelineConfig};

fn main() -> anyhow::Result<()> {
    let mut cfg = PipelineConfig {
        seed: 5,
        species: 120,
        unseen_frac: 0.2,
        ..Default::default()
    };
    cfg.train.lr = 1e-3;
    let cfg = cfg.resolved();
    let world = generate_world(&cfg)?;
    let mut state = init_model(&world, &cfg)?;

    let mut history = Vec::new();
    for stage in Stage::ALL {
        let report = run_stage(
            &mut state,
            &world.registry,
            &world.data.corpus,
            stage,
            &cfg.train,
        )?;
        let (first, last) = (
            &report.history[0],
            report.last().expect("at least one epoch"),
        );
        println!(
            "stage {stage}: {} epochs, {} steps, lr {:.0e}, total loss {:.3} -> {:.3} (ATC {:.3} -> {:.3})",
            report.history.len(),
            report.steps,
            cfg.train.learning_rate(stage),
            first.total,
            last.total,
            first.atc,
            last.atc
        );
        history.extend(report.history);
    }

    let dir = tempfile::tempdir()?;
    let csv = dir.path().join("loss.csv");
    write_loss_csv(std::fs::File::create(&csv)?, &history)?;
    println!(
        "{}",
        std::fs::read_to_string(&csv)?
            .lines()
            .take(3)
            .collect::<Vec<_>>()
            .join("\n")
    );

    let ck = dir.path().join("stage2.ckpt");
    let meta = CheckpointMeta {
        stage: 2,
        epoch: cfg.train.stage2_epochs,
        seed: cfg.seed,
        run_config: None,
    };
    save_checkpoint(&ck, &state, &meta)?;
    let back = load_checkpoint(&ck)?;
    println!(
        "checkpoint {} bytes, stage {}, dim {}",
        std::fs::metadata(&ck)?.len(),
        back.meta.stage,
        back.state.dim()
    );
    Ok(())
}
