use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::encoder::{
    check_mlp_input, check_tokens, features_to_matrix, mlp_forward, single_row, text_forward,
    EncoderParams, Mlp, TextEncoder, Tower,
};
use crate::error::{Error, Result};
use crate::prompts::Vocabulary;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Shared embedding dimension.
    pub dim: usize,
    pub hidden: usize,
    pub text_embed: usize,
    pub tau: f64,
    pub learn_tau: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 32,
            hidden: 64,
            text_embed: 32,
            tau: 0.07,
            learn_tau: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FreezeMask {
    pub audio: bool,
    pub image: bool,
    pub text: bool,
}

impl FreezeMask {
    pub fn is_frozen(&self, tower: Tower) -> bool {
        match tower {
            Tower::Audio => self.audio,
            Tower::Image => self.image,
            Tower::Text => self.text,
        }
    }

    pub fn all() -> Self {
        FreezeMask {
            audio: true,
            image: true,
            text: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub params: EncoderParams,
    pub tau: f64,
    pub learn_tau: bool,
    pub freeze: FreezeMask,
    pub vocab: Vocabulary,
}

impl ModelState {
    /// Fresh weights drawn from `seed`.
    pub fn init(
        cfg: &ModelConfig,
        audio_dim: usize,
        image_dim: usize,
        vocab: Vocabulary,
        seed: u64,
    ) -> Result<Self> {
        if cfg.dim == 0
            || cfg.hidden == 0
            || cfg.text_embed == 0
            || audio_dim == 0
            || image_dim == 0
        {
            return Err(Error::InvalidConfig(
                "model dimensions must be positive".into(),
            ));
        }
        if !(cfg.tau > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be positive, got {}",
                cfg.tau
            )));
        }
        let params = EncoderParams {
            audio: Mlp::new(
                audio_dim,
                cfg.hidden,
                cfg.dim,
                &mut rng::labeled_rng(seed, "init/audio"),
            ),
            image: Mlp::new(
                image_dim,
                cfg.hidden,
                cfg.dim,
                &mut rng::labeled_rng(seed, "init/image"),
            ),
            text: TextEncoder::new(
                vocab.len(),
                cfg.text_embed,
                cfg.dim,
                &mut rng::labeled_rng(seed, "init/text"),
            ),
        };
        Ok(ModelState {
            params,
            tau: cfg.tau,
            learn_tau: cfg.learn_tau,
            freeze: FreezeMask::default(),
            vocab,
        })
    }

    pub fn dim(&self) -> usize {
        self.params.audio.w2.nrows()
    }

    pub fn audio_dim(&self) -> usize {
        self.params.audio.input_dim()
    }

    pub fn image_dim(&self) -> usize {
        self.params.image.input_dim()
    }

    pub fn hidden(&self) -> usize {
        self.params.audio.w1.nrows()
    }

    pub fn text_embed_dim(&self) -> usize {
        self.params.text.embed.ncols()
    }

    pub fn encode_audio(&self, feature: &[f32]) -> Result<Array1<f64>> {
        Ok(self.encode_audio_batch(&[feature])?.row(0).to_owned())
    }

    pub fn encode_image(&self, feature: &[f32]) -> Result<Array1<f64>> {
        Ok(self.encode_image_batch(&[feature])?.row(0).to_owned())
    }

    pub fn encode_text(&self, tokens: &[u32]) -> Result<Array1<f64>> {
        Ok(self
            .encode_text_batch(&[tokens.to_vec()])?
            .row(0)
            .to_owned())
    }

    pub fn encode_audio_batch(&self, features: &[&[f32]]) -> Result<Array2<f64>> {
        encode_mlp(&self.params.audio, features, "audio feature")
    }

    pub fn encode_image_batch(&self, features: &[&[f32]]) -> Result<Array2<f64>> {
        encode_mlp(&self.params.image, features, "image feature")
    }

    pub fn encode_text_batch(&self, tokens: &[Vec<u32>]) -> Result<Array2<f64>> {
        check_tokens(&self.params.text, tokens)?;
        Ok(text_forward(&self.params.text, tokens).y)
    }

    pub fn encode_audio_vec(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        let x = single_row(x.view());
        check_mlp_input(&self.params.audio, x.view(), "audio feature")?;
        Ok(mlp_forward(&self.params.audio, x).y.row(0).to_owned())
    }
}

fn encode_mlp(m: &Mlp, features: &[&[f32]], context: &'static str) -> Result<Array2<f64>> {
    let dim = m.input_dim();
    if let Some(bad) = features.iter().find(|f| f.len() != dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            got: bad.len(),
            context,
        });
    }
    Ok(mlp_forward(m, features_to_matrix(features, dim)).y)
}

/// One mini-batch of audio-image-text triples.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub audio: Array2<f64>,
    pub image: Array2<f64>,
    pub tokens: Vec<Vec<u32>>,
    pub species: Vec<u32>,
}

impl Batch {
    pub fn new(
        audio: Array2<f64>,
        image: Array2<f64>,
        tokens: Vec<Vec<u32>>,
        species: Vec<u32>,
    ) -> Result<Self> {
        let b = audio.nrows();
        for (n, what) in [
            (image.nrows(), "image rows"),
            (tokens.len(), "token sequences"),
            (species.len(), "species ids"),
        ] {
            if n != b {
                return Err(Error::DimMismatch {
                    expected: b,
                    got: n,
                    context: what,
                });
            }
        }
        if b < 2 {
            return Err(Error::InvalidConfig(format!(
                "batch size must be >= 2, got {b}"
            )));
        }
        Ok(Batch {
            audio,
            image,
            tokens,
            species,
        })
    }

    pub fn len(&self) -> usize {
        self.species.len()
    }

    pub fn is_empty(&self) -> bool {
        self.species.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{synthetic_registry, TaxonomyShape};

    fn state() -> ModelState {
        let reg = synthetic_registry(10, 1, &TaxonomyShape::default()).unwrap();
        ModelState::init(
            &ModelConfig::default(),
            12,
            8,
            Vocabulary::from_registry(&reg),
            3,
        )
        .unwrap()
    }

    #[test]
    fn encodings_are_unit_and_deterministic() {
        let s = state();
        let x: Vec<f32> = (0..12).map(|i| i as f32 * 0.3 - 1.0).collect();
        let a = s.encode_audio(&x).unwrap();
        assert!((a.dot(&a).sqrt() - 1.0).abs() < 1e-6);
        assert_eq!(a, s.encode_audio(&x).unwrap());
        let v = s.encode_image(&x[..8]).unwrap();
        assert!((v.dot(&v).sqrt() - 1.0).abs() < 1e-6);
        let t = s.encode_text(&[1, 2, 3]).unwrap();
        assert!((t.dot(&t).sqrt() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn encoder_input_errors() {
        let s = state();
        assert!(matches!(
            s.encode_audio(&[0.0; 3]),
            Err(Error::DimMismatch { .. })
        ));
        assert!(s.encode_text(&[]).is_err());
        assert!(s.encode_text(&[u32::MAX]).is_err());
    }

    #[test]
    fn batch_validation() {
        let ok = Batch::new(
            Array2::zeros((2, 3)),
            Array2::zeros((2, 4)),
            vec![vec![1], vec![2]],
            vec![0, 1],
        );
        assert!(ok.is_ok());
        assert!(Batch::new(
            Array2::zeros((1, 3)),
            Array2::zeros((1, 4)),
            vec![vec![1]],
            vec![0]
        )
        .is_err());
        assert!(Batch::new(
            Array2::zeros((2, 3)),
            Array2::zeros((3, 4)),
            vec![vec![1], vec![2]],
            vec![0, 1]
        )
        .is_err());
    }

    #[test]
    fn init_rejects_bad_temperature() {
        let reg = synthetic_registry(4, 1, &TaxonomyShape::default()).unwrap();
        let cfg = ModelConfig {
            tau: 0.0,
            ..ModelConfig::default()
        };
        assert!(ModelState::init(&cfg, 3, 3, Vocabulary::from_registry(&reg), 0).is_err());
    }
}
