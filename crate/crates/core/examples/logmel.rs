//! Log-mel spectrogram and pooled features from a WAV file.
//!
//! cargo run --example logmel            # synthesizes a chirp
//! cargo run --example logmel -- in.wav  # 16-bit PCM input

use std::f64::consts::PI;

use trimodal::signal::{read_wav, resample_nearest, LogMelConfig, LogMelExtractor};

const RATE: u32 = 16_000;

fn chirp(path: &std::path::Path) -> anyhow::Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for i in 0..RATE as usize * 2 {
        let t = i as f64 / RATE as f64;
        // 500 Hz sweeping up to 4 kHz
        let phase = 2.0 * PI * (500.0 * t + 875.0 * t * t);
        w.write_sample((0.5 * phase.sin() * i16::MAX as f64) as i16)?;
    }
    w.finalize()?;
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let path = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            let p = dir.path().join("chirp.wav");
            chirp(&p)?;
            p
        }
    };
    let mut clip = read_wav(&path)?;
    if clip.sample_rate != RATE {
        clip = resample_nearest(&clip, RATE)?;
    }
    println!(
        "{}: {:.2}s at {} Hz",
        path.display(),
        clip.duration_s(),
        clip.sample_rate
    );

    let ex = LogMelExtractor::new(LogMelConfig::default(), clip.sample_rate)?;
    let spec = ex.spectrogram(&clip)?;
    println!(
        "spectrogram: {} frames x {} bands",
        spec.len(),
        spec.first().map_or(0, |f| f.len())
    );
    let centers = ex.band_centers();
    for t in (0..spec.len()).step_by(spec.len().div_ceil(6).max(1)) {
        let peak = (0..spec[t].len())
            .max_by(|&a, &b| spec[t][a].total_cmp(&spec[t][b]))
            .unwrap_or(0);
        let secs = (t * ex.config().hop) as f64 / clip.sample_rate as f64;
        println!(
            "  t = {secs:.2}s  peak band {peak:>2} ({:.0} Hz)",
            centers[peak]
        );
    }

    let pooled = ex.pooled(&clip)?;
    println!(
        "pooled feature: {} values, per-band mean then per-band std",
        pooled.len()
    );
    Ok(())
}
