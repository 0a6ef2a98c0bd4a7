use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{AudioClip, FeatureVector, Modality, Split};
use crate::error::{Error, Result};

/// Added before the log so silent frames stay finite.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMelConfig {
    pub frame: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    /// `None` means Nyquist.
    pub fmax: Option<f64>,
}

impl Default for LogMelConfig {
    fn default() -> Self {
        LogMelConfig {
            frame: 1024,
            hop: 512,
            n_mels: 64,
            fmin: 0.0,
            fmax: None,
        }
    }
}

impl LogMelConfig {
    pub fn output_dim(&self) -> usize {
        2 * self.n_mels
    }
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Reusable STFT + mel filterbank for one (config, sample rate) pair.
pub struct LogMelExtractor {
    cfg: LogMelConfig,
    sample_rate: u32,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    /// Per mel band: (first FFT bin, weights).
    bands: Vec<(usize, Vec<f64>)>,
    centers_hz: Vec<f64>,
}

impl LogMelExtractor {
    pub fn new(cfg: LogMelConfig, sample_rate: u32) -> Result<Self> {
        if cfg.frame < 2 || cfg.hop == 0 || cfg.n_mels == 0 || sample_rate == 0 {
            return Err(Error::InvalidConfig(format!("bad log-mel config {cfg:?}")));
        }
        let nyquist = sample_rate as f64 / 2.0;
        let fmax = cfg.fmax.unwrap_or(nyquist);
        if !(cfg.fmin >= 0.0 && cfg.fmin < fmax && fmax <= nyquist) {
            return Err(Error::InvalidConfig(format!(
                "mel range [{}, {fmax}] outside [0, {nyquist}]",
                cfg.fmin
            )));
        }

        // periodic Hann
        let window = (0..cfg.frame)
            .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / cfg.frame as f64).cos())
            .collect();

        let (mlo, mhi) = (hz_to_mel(cfg.fmin), hz_to_mel(fmax));
        let points: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let n_bins = cfg.frame / 2 + 1;
        let bin_hz = sample_rate as f64 / cfg.frame as f64;
        let bands = (0..cfg.n_mels)
            .map(|m| {
                let (lo, c, hi) = (points[m], points[m + 1], points[m + 2]);
                let weights: Vec<(usize, f64)> = (0..n_bins)
                    .filter_map(|j| {
                        let f = j as f64 * bin_hz;
                        let w = ((f - lo) / (c - lo)).min((hi - f) / (hi - c));
                        (w > 0.0).then_some((j, w))
                    })
                    .collect();
                match weights.first() {
                    Some(&(start, _)) => (start, weights.iter().map(|&(_, w)| w).collect()),
                    None => (0, Vec::new()),
                }
            })
            .collect();
        let centers_hz = points[1..=cfg.n_mels].to_vec();
        let fft = FftPlanner::new().plan_fft_forward(cfg.frame);
        Ok(LogMelExtractor {
            cfg,
            sample_rate,
            window,
            fft,
            bands,
            centers_hz,
        })
    }

    pub fn config(&self) -> &LogMelConfig {
        &self.cfg
    }

    /// Center frequency of each mel band in Hz.
    pub fn band_centers(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Log-mel spectrogram, one row per frame.
    pub fn spectrogram(&self, clip: &AudioClip) -> Result<Vec<Vec<f64>>> {
        if clip.sample_rate != self.sample_rate {
            return Err(Error::InvalidConfig(format!(
                "extractor built for {} Hz, clip is {} Hz",
                self.sample_rate, clip.sample_rate
            )));
        }
        let frame = self.cfg.frame;
        if clip.samples.len() < frame {
            return Err(Error::ClipTooShort {
                len: clip.samples.len(),
                needed: frame,
            });
        }
        let n_frames = 1 + (clip.samples.len() - frame) / self.cfg.hop;
        let mut buf = vec![Complex::new(0.0, 0.0); frame];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut out = Vec::with_capacity(n_frames);
        for t in 0..n_frames {
            let start = t * self.cfg.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(clip.samples[start + i] as f64 * self.window[i], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            let row = self
                .bands
                .iter()
                .map(|(first, weights)| {
                    let e: f64 = weights
                        .iter()
                        .enumerate()
                        .map(|(k, w)| w * buf[first + k].norm())
                        .sum();
                    (e + LOG_FLOOR).ln()
                })
                .collect();
            out.push(row);
        }
        Ok(out)
    }

    /// Per-band temporal mean followed by per-band standard deviation.
    pub fn pooled(&self, clip: &AudioClip) -> Result<Vec<f64>> {
        let spec = self.spectrogram(clip)?;
        let n = spec.len() as f64;
        let n_mels = self.cfg.n_mels;
        let mut out = vec![0.0; 2 * n_mels];
        for m in 0..n_mels {
            let first = spec[0][m];
            // shift by the first value so a constant band gives exactly zero spread
            let (s1, s2) = spec.iter().fold((0.0, 0.0), |(a, b), row| {
                let d = row[m] - first;
                (a + d, b + d * d)
            });
            let mean_d = s1 / n;
            out[m] = first + mean_d;
            out[n_mels + m] = (s2 / n - mean_d * mean_d).max(0.0).sqrt();
        }
        Ok(out)
    }

    pub fn features(&self, clip: &AudioClip, species: u32, split: Split) -> Result<FeatureVector> {
        Ok(FeatureVector {
            values: self.pooled(clip)?.into_iter().map(|v| v as f32).collect(),
            modality: Modality::Audio,
            species,
            split,
        })
    }
}

/// Pooled log-mel statistics of a clip, dimension `2 * n_mels`.
pub fn logmel_features(clip: &AudioClip, cfg: &LogMelConfig) -> Result<Vec<f64>> {
    LogMelExtractor::new(cfg.clone(), clip.sample_rate)?.pooled(clip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    const RATE: u32 = 16_000;

    fn sine(freq: f64, seconds: f64, amp: f64) -> AudioClip {
        let n = (seconds * RATE as f64) as usize;
        let s = (0..n)
            .map(|i| {
                (amp * (2.0 * std::f64::consts::PI * freq * i as f64 / RATE as f64).sin()) as f32
            })
            .collect();
        AudioClip::new(s, RATE).unwrap()
    }

    /// Oracle: O(N^2) DFT of one Hann-windowed frame, then a triangle
    /// filterbank evaluated straight from the mel definition.
    fn oracle_argmax(clip: &AudioClip, cfg: &LogMelConfig) -> usize {
        let n = cfg.frame;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos();
                clip.samples[i] as f64 * w
            })
            .collect();
        let mags: Vec<f64> = (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, v) in x.iter().enumerate() {
                    let ang = -2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect();
        let top = 2595.0 * (1.0 + (RATE as f64 / 2.0) / 700.0).log10();
        let edge = |i: usize| {
            700.0 * (10f64.powf(top * i as f64 / (cfg.n_mels + 1) as f64 / 2595.0) - 1.0)
        };
        let energy = |m: usize| -> f64 {
            let (lo, c, hi) = (edge(m), edge(m + 1), edge(m + 2));
            mags.iter()
                .enumerate()
                .map(|(k, a)| {
                    let f = k as f64 * RATE as f64 / n as f64;
                    let w = if f > lo && f <= c {
                        (f - lo) / (c - lo)
                    } else if f > c && f < hi {
                        (hi - f) / (hi - c)
                    } else {
                        0.0
                    };
                    w * a
                })
                .sum()
        };
        (0..cfg.n_mels)
            .max_by(|&a, &b| energy(a).total_cmp(&energy(b)))
            .unwrap()
    }

    #[test]
    fn sine_at_band_center_peaks_in_that_band() {
        let cfg = LogMelConfig::default();
        let ex = LogMelExtractor::new(cfg.clone(), RATE).unwrap();
        for k in [12, 25, 40, 55] {
            let clip = sine(ex.band_centers()[k], 1.0, 1.0);
            let pooled = ex.pooled(&clip).unwrap();
            let argmax = (0..cfg.n_mels)
                .max_by(|&a, &b| pooled[a].total_cmp(&pooled[b]))
                .unwrap();
            assert_eq!(oracle_argmax(&clip, &cfg), k);
            assert_eq!(argmax, k);
        }
    }

    #[test]
    fn silent_clip_hits_the_floor() {
        let clip = AudioClip::new(vec![0.0; 8000], RATE).unwrap();
        let f = logmel_features(&clip, &LogMelConfig::default()).unwrap();
        assert_eq!(f.len(), 128);
        for m in 0..64 {
            assert_eq!(f[m], LOG_FLOOR.ln());
            assert_eq!(f[64 + m], 0.0);
        }
    }

    #[test]
    fn white_noise_statistics_are_seed_stable() {
        let noise = |seed| {
            let mut rng = rng_from(seed);
            let d = Normal::new(0.0, 0.3).unwrap();
            let s = (0..RATE as usize * 60)
                .map(|_| d.sample(&mut rng) as f32)
                .collect();
            AudioClip::new(s, RATE).unwrap()
        };
        let cfg = LogMelConfig::default();
        let a = logmel_features(&noise(1), &cfg).unwrap();
        let b = logmel_features(&noise(2), &cfg).unwrap();
        for m in 0..64 {
            assert!((a[m] - b[m]).abs() < 0.1, "band {m}: {} vs {}", a[m], b[m]);
        }
    }

    #[test]
    fn short_clip_rejected() {
        let clip = AudioClip::new(vec![0.1; 1000], RATE).unwrap();
        assert!(matches!(
            logmel_features(&clip, &LogMelConfig::default()),
            Err(Error::ClipTooShort {
                len: 1000,
                needed: 1024
            })
        ));
    }

    #[test]
    fn mel_scale_round_trip() {
        for hz in [0.0, 100.0, 1000.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn finite_and_energy_monotone(
            samples in prop::collection::vec(-1.0f32..1.0, 2048..4096),
            scale in 1.01f32..20.0,
        ) {
            let cfg = LogMelConfig::default();
            let clip = AudioClip::new(samples.clone(), RATE).unwrap();
            let louder = AudioClip::new(samples.iter().map(|s| s * scale).collect(), RATE).unwrap();
            let a = logmel_features(&clip, &cfg).unwrap();
            let b = logmel_features(&louder, &cfg).unwrap();
            prop_assert!(a.iter().chain(b.iter()).all(|v| v.is_finite()));
            for m in 0..cfg.n_mels {
                prop_assert!(b[m] >= a[m] - 1e-9, "band {} dropped: {} -> {}", m, a[m], b[m]);
            }
        }
    }
}
