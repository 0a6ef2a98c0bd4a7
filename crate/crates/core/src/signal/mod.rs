//! Audio front end, feature vectors and the synthetic tri-modal corpus.

mod mel;
mod store;
mod synth;
mod wav;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mel::{hz_to_mel, logmel_features, mel_to_hz, LogMelConfig, LogMelExtractor, LOG_FLOOR};
pub use store::{read_feature_store, write_feature_store, FEATURE_MAGIC};
pub use synth::{
    derive_traits_from_latents, generate_synthetic_corpus, Corpus, SynthConfig, SyntheticCorpus,
};
pub use wav::{read_wav, resample_nearest};

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::ClipTooShort { len: 0, needed: 1 });
        }
        Ok(AudioClip {
            samples,
            sample_rate,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Returns a window of exactly `duration_s * rate` samples: a uniformly
/// positioned slice of a long clip, or the clip zero-padded on the right.
pub fn random_crop<R: rand::Rng + ?Sized>(
    clip: &AudioClip,
    duration_s: f64,
    rng: &mut R,
) -> Result<AudioClip> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "crop duration must be positive, got {duration_s}"
        )));
    }
    let want = (duration_s * clip.sample_rate as f64).round().max(1.0) as usize;
    let len = clip.samples.len();
    let samples = if len >= want {
        let start = rng.random_range(0..=len - want);
        clip.samples[start..start + want].to_vec()
    } else {
        let mut s = clip.samples.clone();
        s.resize(want, 0.0);
        s
    };
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Image,
    Text,
}

impl Modality {
    pub fn tag(self) -> u32 {
        match self {
            Modality::Audio => 0,
            Modality::Image => 1,
            Modality::Text => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(Modality::Audio),
            1 => Ok(Modality::Image),
            2 => Ok(Modality::Text),
            t => Err(Error::Format(format!("unknown modality tag {t}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn tag(self) -> u32 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(Split::Train),
            1 => Ok(Split::Test),
            t => Err(Error::Format(format!("unknown split tag {t}"))),
        }
    }
}

/// One observation in one modality. `species` indexes the registry.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f32>,
    pub modality: Modality,
    pub species: u32,
    pub split: Split,
}
