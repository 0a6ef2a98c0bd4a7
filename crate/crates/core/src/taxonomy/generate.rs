use std::collections::HashSet;

use rand::Rng as _;

use super::{Registry, TaxonRecord, TraitVector, TRAIT_CATEGORIES};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

const CLASSES: [&str; 5] = ["Aves", "Mammalia", "Amphibia", "Insecta", "Reptilia"];
const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr", "ch", "sh",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
const CODAS: &[&str] = &["", "", "", "n", "r", "s", "l"];

/// Branching of the generated tree. Ranges are inclusive.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TaxonomyShape {
    pub n_classes: usize,
    pub families_per_order: usize,
    pub genera_per_family: (usize, usize),
    pub species_per_genus: (usize, usize),
    /// Probability that a non-exclusive trait is active.
    pub trait_density: f64,
}

impl Default for TaxonomyShape {
    fn default() -> Self {
        TaxonomyShape {
            n_classes: 4,
            families_per_order: 4,
            genera_per_family: (1, 2),
            species_per_genus: (1, 3),
            trait_density: 0.3,
        }
    }
}

struct WordForge {
    used: HashSet<String>,
}

impl WordForge {
    fn new() -> Self {
        let used = ["with", "a", "common", "name"]
            .into_iter()
            .map(String::from)
            .collect();
        WordForge { used }
    }

    fn word(&mut self, rng: &mut Rng, syllables: usize) -> String {
        loop {
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
                w.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
            }
            w.push_str(CODAS[rng.random_range(0..CODAS.len())]);
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn random_traits(rng: &mut Rng, density: f64) -> TraitVector {
    let mut tv = TraitVector::default();
    for cat in &TRAIT_CATEGORIES {
        let slots = cat.slots();
        if cat.exclusive {
            tv.set(slots.start + rng.random_range(0..slots.len()), true);
        } else {
            for s in slots {
                tv.set(s, rng.random_bool(density));
            }
        }
    }
    tv
}

/// Generates a consistent five-rank taxonomy with `n_species` species and
/// pronounceable pseudo-Latin names. Common names are `"<Word> <FamilyNoun>"`,
/// so species of one family share the second word.
pub fn synthetic_registry(n_species: usize, seed: u64, shape: &TaxonomyShape) -> Result<Registry> {
    if n_species == 0 {
        return Err(Error::InvalidConfig("n_species must be positive".into()));
    }
    let (gmin, gmax) = shape.genera_per_family;
    let (smin, smax) = shape.species_per_genus;
    if shape.n_classes == 0
        || shape.n_classes > CLASSES.len()
        || shape.families_per_order == 0
        || gmin == 0
        || gmin > gmax
        || smin == 0
        || smin > smax
        || !(0.0..=1.0).contains(&shape.trait_density)
    {
        return Err(Error::InvalidConfig(format!(
            "bad taxonomy shape {shape:?}"
        )));
    }

    let mut rng = rng::labeled_rng(seed, "taxonomy");
    let mut forge = WordForge::new();

    struct Proto {
        family: usize,
        genus: String,
        epithet: String,
        common: String,
    }
    let mut families: Vec<(String, String)> = Vec::new();
    let mut protos: Vec<Proto> = Vec::with_capacity(n_species);
    while protos.len() < n_species {
        let fam_idx = families.len();
        let stem = forge.word(&mut rng, 2);
        let noun = capitalize(&forge.word(&mut rng, 2));
        families.push((format!("{}idae", capitalize(&stem)), noun.clone()));
        let n_genera = rng.random_range(gmin..=gmax);
        for _ in 0..n_genera {
            let genus = capitalize(&forge.word(&mut rng, 3));
            let n_sp = rng.random_range(smin..=smax);
            for _ in 0..n_sp {
                if protos.len() == n_species {
                    break;
                }
                let epithet = forge.word(&mut rng, 3);
                let common = format!("{} {}", capitalize(&forge.word(&mut rng, 3)), noun);
                protos.push(Proto {
                    family: fam_idx,
                    genus: genus.clone(),
                    epithet,
                    common,
                });
            }
        }
    }

    let n_orders = shape
        .n_classes
        .max(families.len().div_ceil(shape.families_per_order));
    let orders: Vec<(String, &str)> = (0..n_orders)
        .map(|i| {
            let name = format!("{}iformes", capitalize(&forge.word(&mut rng, 2)));
            (name, CLASSES[i % shape.n_classes])
        })
        .collect();
    let family_order: Vec<usize> = (0..families.len())
        .map(|f| {
            if f < n_orders {
                f
            } else {
                rng.random_range(0..n_orders)
            }
        })
        .collect();

    let records = protos
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let (order_name, class_name) = &orders[family_order[p.family]];
            TaxonRecord {
                species_id: format!("sp{i:05}"),
                class_name: class_name.to_string(),
                order_name: order_name.clone(),
                family_name: families[p.family].0.clone(),
                genus_name: p.genus,
                species_epithet: p.epithet,
                common_name: p.common,
                traits: random_traits(&mut rng, shape.trait_density),
            }
        })
        .collect();
    Registry::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::Rank;

    #[test]
    fn generates_requested_count_deterministically() {
        let a = synthetic_registry(137, 9, &TaxonomyShape::default()).unwrap();
        let b = synthetic_registry(137, 9, &TaxonomyShape::default()).unwrap();
        assert_eq!(a.len(), 137);
        assert_eq!(a.records(), b.records());
        let c = synthetic_registry(137, 10, &TaxonomyShape::default()).unwrap();
        assert_ne!(a.records(), c.records());
    }

    #[test]
    fn has_multi_species_genera_and_families() {
        let reg = synthetic_registry(300, 1, &TaxonomyShape::default()).unwrap();
        assert!(reg.genera().any(|(_, m)| m.len() >= 2));
        assert!(reg.families().any(|(_, m)| m.len() >= 2));
        assert!(reg.families().count() >= 60);
    }

    #[test]
    fn rank_sharing_is_monotone() {
        let reg = synthetic_registry(120, 2, &TaxonomyShape::default()).unwrap();
        for a in 0..reg.len() {
            for b in 0..reg.len() {
                for pair in Rank::ALL.windows(2) {
                    let (coarse, fine) = (pair[0], pair[1]);
                    if reg.shares_rank(a, b, fine) {
                        assert!(reg.shares_rank(a, b, coarse));
                    }
                }
            }
        }
    }
}
