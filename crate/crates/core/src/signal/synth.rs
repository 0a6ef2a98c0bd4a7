//! Deterministic synthetic tri-modal corpus.
//!
//! Each species owns a latent vector built from family, genus and species
//! components, so relatives sit close together. Audio and image features are
//! fixed linear maps of the latent plus isotropic Gaussian noise.

use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureVector, Modality, Split};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::taxonomy::{Registry, TraitVector, TRAIT_CATEGORIES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_species: usize,
    pub latent_dim: usize,
    pub audio_dim: usize,
    pub image_dim: usize,
    /// Per species, per modality.
    pub samples_per_species: usize,
    pub noise_sigma: f64,
    pub train_fraction: f64,
    /// Latent variance carried by the family component.
    pub family_share: f64,
    /// Latent variance carried by the genus component.
    pub genus_share: f64,
    /// Optional fixed `audio_dim x latent_dim` map; drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_map: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_map: Option<Vec<Vec<f64>>>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_species: 50,
            latent_dim: 16,
            audio_dim: 128,
            image_dim: 64,
            samples_per_species: 20,
            noise_sigma: 0.5,
            train_fraction: 0.9,
            family_share: 0.3,
            genus_share: 0.2,
            audio_map: None,
            image_map: None,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_species == 0
            || self.latent_dim == 0
            || self.audio_dim == 0
            || self.image_dim == 0
            || self.samples_per_species == 0
        {
            return Err(Error::InvalidConfig(
                "all corpus dimensions must be >= 1".into(),
            ));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidConfig("noise_sigma must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(Error::InvalidConfig(
                "train_fraction must lie in [0, 1]".into(),
            ));
        }
        if self.family_share < 0.0
            || self.genus_share < 0.0
            || self.family_share + self.genus_share > 1.0
        {
            return Err(Error::InvalidConfig(
                "family_share + genus_share must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Train / test counts for one seen species.
    pub fn split_counts(&self) -> (usize, usize) {
        let n = self.samples_per_species;
        let train = ((n as f64) * self.train_fraction + 1e-9).floor() as usize;
        (train, n - train)
    }
}

/// Audio and image samples in registry order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub audio: Vec<FeatureVector>,
    pub image: Vec<FeatureVector>,
}

impl Corpus {
    pub fn samples(&self, modality: Modality) -> &[FeatureVector] {
        match modality {
            Modality::Audio => &self.audio,
            Modality::Image => &self.image,
            Modality::Text => &[],
        }
    }

    /// Sample indices grouped by species for one modality and split.
    pub fn by_species(
        &self,
        modality: Modality,
        split: Split,
        n_species: usize,
    ) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); n_species];
        for (i, s) in self.samples(modality).iter().enumerate() {
            if s.split == split {
                if let Some(slot) = out.get_mut(s.species as usize) {
                    slot.push(i);
                }
            }
        }
        out
    }

    pub fn count(&self, modality: Modality, split: Split) -> usize {
        self.samples(modality)
            .iter()
            .filter(|s| s.split == split)
            .count()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// Per species latent, registry order.
    pub latents: Vec<Array1<f64>>,
    pub audio_map: Array2<f64>,
    pub image_map: Array2<f64>,
}

fn gaussian_vec(rng: &mut Rng, n: usize) -> Array1<f64> {
    Array1::from_iter((0..n).map(|_| StandardNormal.sample(rng)))
}

fn resolve_map(
    given: &Option<Vec<Vec<f64>>>,
    rows: usize,
    cols: usize,
    seed: u64,
    label: &str,
) -> Result<Array2<f64>> {
    match given {
        Some(m) => {
            if m.len() != rows {
                return Err(Error::DimMismatch {
                    expected: rows,
                    got: m.len(),
                    context: "map rows",
                });
            }
            if let Some(r) = m.iter().find(|r| r.len() != cols) {
                return Err(Error::DimMismatch {
                    expected: cols,
                    got: r.len(),
                    context: "map columns",
                });
            }
            Ok(Array2::from_shape_fn((rows, cols), |(i, j)| m[i][j]))
        }
        None => {
            let mut rng = rng::labeled_rng(seed, label);
            let scale = 1.0 / (cols as f64).sqrt();
            Ok(Array2::from_shape_fn((rows, cols), |_| {
                scale * {
                    let x: f64 = StandardNormal.sample(&mut rng);
                    x
                }
            }))
        }
    }
}

fn species_latents(reg: &Registry, cfg: &SynthConfig) -> Vec<Array1<f64>> {
    let m = cfg.latent_dim;
    let wf = cfg.family_share.sqrt();
    let wg = cfg.genus_share.sqrt();
    let ws = (1.0 - cfg.family_share - cfg.genus_share).max(0.0).sqrt();
    (0..reg.len())
        .into_par_iter()
        .map(|i| {
            let rec = reg.get(i);
            let fam = gaussian_vec(
                &mut rng::labeled_rng(cfg.seed, &format!("latent/family/{}", rec.family_name)),
                m,
            );
            let gen = gaussian_vec(
                &mut rng::labeled_rng(cfg.seed, &format!("latent/genus/{}", rec.genus_name)),
                m,
            );
            let own = gaussian_vec(
                &mut rng::labeled_rng(cfg.seed, &format!("latent/species/{}", rec.species_id)),
                m,
            );
            fam * wf + gen * wg + own * ws
        })
        .collect()
}

fn draw(map: &Array2<f64>, z: &Array1<f64>, sigma: f64, rng: &mut Rng) -> Vec<f32> {
    let clean = map.dot(z);
    clean
        .iter()
        .map(|&c| {
            let e: f64 = if sigma > 0.0 {
                {
                    let x: f64 = StandardNormal.sample(rng);
                    sigma * x
                }
            } else {
                0.0
            };
            (c + e) as f32
        })
        .collect()
}

/// Builds the corpus. Seen species are split train/test by
/// `cfg.train_fraction`; unseen species go entirely to test. Each species
/// draws from its own seeded stream, so output does not depend on scheduling.
pub fn generate_synthetic_corpus(reg: &Registry, cfg: &SynthConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    if reg.len() != cfg.n_species {
        return Err(Error::DimMismatch {
            expected: cfg.n_species,
            got: reg.len(),
            context: "registry species count",
        });
    }
    let audio_map = resolve_map(
        &cfg.audio_map,
        cfg.audio_dim,
        cfg.latent_dim,
        cfg.seed,
        "map/audio",
    )?;
    let image_map = resolve_map(
        &cfg.image_map,
        cfg.image_dim,
        cfg.latent_dim,
        cfg.seed,
        "map/image",
    )?;
    let latents = species_latents(reg, cfg);
    let (n_train, _) = cfg.split_counts();
    let n = cfg.samples_per_species;

    let per_species: Vec<(Vec<FeatureVector>, Vec<FeatureVector>)> = (0..reg.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::rng_from(rng::derive_indexed(cfg.seed, "samples", i as u64));
            let unseen = reg.is_unseen(i);
            let mut make = |modality, map: &Array2<f64>| -> Vec<FeatureVector> {
                (0..n)
                    .map(|k| FeatureVector {
                        values: draw(map, &latents[i], cfg.noise_sigma, &mut rng),
                        modality,
                        species: i as u32,
                        split: if unseen || k >= n_train {
                            Split::Test
                        } else {
                            Split::Train
                        },
                    })
                    .collect()
            };
            let audio = make(Modality::Audio, &audio_map);
            let image = make(Modality::Image, &image_map);
            (audio, image)
        })
        .collect();

    let mut corpus = Corpus::default();
    for (a, v) in per_species {
        corpus.audio.extend(a);
        corpus.image.extend(v);
    }
    Ok(SyntheticCorpus {
        corpus,
        latents,
        audio_map,
        image_map,
    })
}

/// Rewrites every species' traits as linear functions of its latent:
/// one-hot categories take the argmax of random projections, the rest
/// threshold a random projection plus offset.
pub fn derive_traits_from_latents(
    reg: &Registry,
    latents: &[Array1<f64>],
    seed: u64,
) -> Result<Registry> {
    if latents.len() != reg.len() {
        return Err(Error::DimMismatch {
            expected: reg.len(),
            got: latents.len(),
            context: "latents",
        });
    }
    let m = latents.first().map_or(0, |z| z.len());
    let mut rng = rng::labeled_rng(seed, "traits/projections");
    let projections: Vec<(Array1<f64>, f64)> = (0..crate::taxonomy::N_TRAITS)
        .map(|_| (gaussian_vec(&mut rng, m), 0.5 * rng.random_range(-1.0..1.0)))
        .collect();
    let traits = latents
        .iter()
        .map(|z| {
            let mut tv = TraitVector::default();
            for cat in &TRAIT_CATEGORIES {
                let scores: Vec<f64> = cat.slots().map(|s| projections[s].0.dot(z)).collect();
                if cat.exclusive {
                    let best = (0..scores.len())
                        .max_by(|&a, &b| scores[a].total_cmp(&scores[b]))
                        .unwrap_or(0);
                    tv.set(cat.slots().start + best, true);
                } else {
                    for (k, s) in cat.slots().enumerate() {
                        tv.set(s, scores[k] + projections[s].1 > 0.0);
                    }
                }
            }
            tv
        })
        .collect();
    reg.with_traits(traits)
}
