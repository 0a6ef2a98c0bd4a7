use std::path::Path;

use super::AudioClip;
use crate::error::{Error, Result};

/// Reads a 16-bit PCM WAV file, averaging channels down to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Format(format!(
            "{}: only 16-bit PCM is supported ({:?}, {} bits)",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    let channels = spec.channels.max(1) as usize;
    let raw = reader
        .samples::<i16>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mono = raw
        .chunks(channels)
        .map(|frame| frame.iter().map(|&s| s as f32 / 32768.0).sum::<f32>() / frame.len() as f32)
        .collect();
    AudioClip::new(mono, spec.sample_rate)
}

/// Nearest-neighbour rate conversion. No anti-alias filtering: downsampling
/// folds content above the new Nyquist back into the band.
pub fn resample_nearest(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::InvalidConfig("target rate must be positive".into()));
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let ratio = clip.sample_rate as f64 / target_rate as f64;
    let n_out = ((clip.samples.len() as f64 / ratio).round() as usize).max(1);
    let last = clip.samples.len() - 1;
    let samples = (0..n_out)
        .map(|i| clip.samples[((i as f64 * ratio).round() as usize).min(last)])
        .collect();
    AudioClip::new(samples, target_rate)
}
