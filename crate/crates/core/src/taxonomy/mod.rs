//! Taxonomic hierarchy, trait schema, species registry and the seen/unseen
//! partition.

mod generate;
mod schema;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use generate::{synthetic_registry, TaxonomyShape};
pub use schema::{
    category_by_key, trait_names, trait_slot, TraitCategory, TraitVector, N_TRAITS,
    TRAIT_CATEGORIES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rank {
    Class,
    Order,
    Family,
    Genus,
    Species,
}

impl Rank {
    pub const ALL: [Rank; 5] = [
        Rank::Class,
        Rank::Order,
        Rank::Family,
        Rank::Genus,
        Rank::Species,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonRecord {
    pub species_id: String,
    #[serde(rename = "class")]
    pub class_name: String,
    #[serde(rename = "order")]
    pub order_name: String,
    #[serde(rename = "family")]
    pub family_name: String,
    #[serde(rename = "genus")]
    pub genus_name: String,
    #[serde(rename = "species")]
    pub species_epithet: String,
    pub common_name: String,
    pub traits: TraitVector,
}

impl TaxonRecord {
    /// Name at `rank`. At species rank this is the binomial pair joined by a space.
    pub fn name_at(&self, rank: Rank) -> std::borrow::Cow<'_, str> {
        match rank {
            Rank::Class => self.class_name.as_str().into(),
            Rank::Order => self.order_name.as_str().into(),
            Rank::Family => self.family_name.as_str().into(),
            Rank::Genus => self.genus_name.as_str().into(),
            Rank::Species => format!("{} {}", self.genus_name, self.species_epithet).into(),
        }
    }

    fn validate(&self) -> Result<()> {
        let fields = [
            ("species_id", &self.species_id),
            ("class", &self.class_name),
            ("order", &self.order_name),
            ("family", &self.family_name),
            ("genus", &self.genus_name),
            ("species", &self.species_epithet),
            ("common_name", &self.common_name),
        ];
        for (field, value) in fields {
            if value.trim().is_empty() {
                return Err(Error::Taxonomy(format!(
                    "species `{}` has empty `{field}`",
                    self.species_id
                )));
            }
        }
        self.traits.validate(&self.species_id)
    }
}

/// Immutable set of species with rank indexes and the seen/unseen marks.
#[derive(Debug, Clone)]
pub struct Registry {
    records: Vec<TaxonRecord>,
    by_id: HashMap<String, usize>,
    unseen: Vec<bool>,
    genus_index: BTreeMap<String, Vec<usize>>,
    family_index: BTreeMap<String, Vec<usize>>,
}

impl Registry {
    /// Builds the indexes. All species start out seen.
    pub fn new(records: Vec<TaxonRecord>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(records.len());
        let mut binomials = HashSet::with_capacity(records.len());
        let mut genus_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut family_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut genus_parent: HashMap<&str, &str> = HashMap::new();
        let mut family_parent: HashMap<&str, &str> = HashMap::new();
        let mut order_parent: HashMap<&str, &str> = HashMap::new();

        for (idx, rec) in records.iter().enumerate() {
            rec.validate()?;
            if by_id.insert(rec.species_id.clone(), idx).is_some() {
                return Err(Error::DuplicateId(rec.species_id.clone()));
            }
            if !binomials.insert((rec.genus_name.as_str(), rec.species_epithet.as_str())) {
                return Err(Error::Taxonomy(format!(
                    "binomial `{} {}` appears twice",
                    rec.genus_name, rec.species_epithet
                )));
            }
            check_parent(
                &mut genus_parent,
                &rec.genus_name,
                &rec.family_name,
                "genus",
            )?;
            check_parent(
                &mut family_parent,
                &rec.family_name,
                &rec.order_name,
                "family",
            )?;
            check_parent(&mut order_parent, &rec.order_name, &rec.class_name, "order")?;
            genus_index
                .entry(rec.genus_name.clone())
                .or_default()
                .push(idx);
            family_index
                .entry(rec.family_name.clone())
                .or_default()
                .push(idx);
        }

        let n = records.len();
        Ok(Registry {
            records,
            by_id,
            unseen: vec![false; n],
            genus_index,
            family_index,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[TaxonRecord] {
        &self.records
    }

    pub fn get(&self, idx: usize) -> &TaxonRecord {
        &self.records[idx]
    }

    pub fn index_of(&self, species_id: &str) -> Result<usize> {
        self.by_id
            .get(species_id)
            .copied()
            .ok_or_else(|| Error::UnknownSpecies(species_id.to_string()))
    }

    pub fn is_unseen(&self, idx: usize) -> bool {
        self.unseen[idx]
    }

    pub fn seen_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.unseen[i]).collect()
    }

    pub fn unseen_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.unseen[i]).collect()
    }

    pub fn unseen_ids(&self) -> Vec<String> {
        self.unseen_indices()
            .into_iter()
            .map(|i| self.records[i].species_id.clone())
            .collect()
    }

    /// Returns a copy with exactly the given species marked unseen.
    pub fn with_unseen<I: IntoIterator<Item = usize>>(&self, unseen: I) -> Self {
        let mut out = self.clone();
        out.unseen = vec![false; self.len()];
        for idx in unseen {
            out.unseen[idx] = true;
        }
        out
    }

    pub fn with_unseen_ids<S: AsRef<str>>(&self, ids: &[S]) -> Result<Self> {
        let idx = ids
            .iter()
            .map(|id| self.index_of(id.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.with_unseen(idx))
    }

    pub fn genus_members(&self, genus: &str) -> &[usize] {
        self.genus_index
            .get(genus)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn family_members(&self, family: &str) -> &[usize] {
        self.family_index
            .get(family)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn genera(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.genus_index
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn families(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.family_index
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Index-based variant of [`shared_ancestor`].
    pub fn shares_rank(&self, a: usize, b: usize, rank: Rank) -> bool {
        if a == b {
            return true;
        }
        let (ra, rb) = (&self.records[a], &self.records[b]);
        match rank {
            Rank::Class => ra.class_name == rb.class_name,
            Rank::Order => ra.order_name == rb.order_name,
            Rank::Family => ra.family_name == rb.family_name,
            Rank::Genus => ra.genus_name == rb.genus_name,
            Rank::Species => {
                ra.genus_name == rb.genus_name && ra.species_epithet == rb.species_epithet
            }
        }
    }

    /// Replaces trait vectors (one per species, in registry order).
    pub fn with_traits(&self, traits: Vec<TraitVector>) -> Result<Self> {
        if traits.len() != self.len() {
            return Err(Error::DimMismatch {
                expected: self.len(),
                got: traits.len(),
                context: "trait vectors",
            });
        }
        let mut out = self.clone();
        for (rec, tv) in out.records.iter_mut().zip(traits) {
            tv.validate(&rec.species_id)?;
            rec.traits = tv;
        }
        Ok(out)
    }
}

fn check_parent<'a>(
    parents: &mut HashMap<&'a str, &'a str>,
    child: &'a str,
    parent: &'a str,
    level: &str,
) -> Result<()> {
    match parents.insert(child, parent) {
        Some(prev) if prev != parent => Err(Error::Taxonomy(format!(
            "{level} `{child}` is filed under both `{prev}` and `{parent}`"
        ))),
        _ => Ok(()),
    }
}

/// True iff the two species carry the same name at `rank`.
pub fn shared_ancestor(reg: &Registry, a: &str, b: &str, rank: Rank) -> Result<bool> {
    let ia = reg.index_of(a)?;
    let ib = reg.index_of(b)?;
    Ok(reg.shares_rank(ia, ib, rank))
}

/// Reads a JSON-lines manifest, one [`TaxonRecord`] per non-blank line.
pub fn load_registry(path: impl AsRef<Path>) -> Result<Registry> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_registry(BufReader::new(file))
}

pub fn parse_registry<R: BufRead>(reader: R) -> Result<Registry> {
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TaxonRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    Registry::new(records)
}

pub fn write_registry(reg: &Registry, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for rec in reg.records() {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn unseen_count(n: usize, fraction: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidConfig(format!(
            "unseen fraction must lie in [0, 1), got {fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 species to split, got {n}"
        )));
    }
    // tolerate representation error so that e.g. 325/14133 yields 325
    Ok((((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize).min(n))
}

/// Marks `ceil(fraction * N)` species unseen, chosen uniformly at random.
pub fn split_seen_unseen(reg: &Registry, unseen_fraction: f64, seed: u64) -> Result<Registry> {
    let k = unseen_count(reg.len(), unseen_fraction)?;
    let mut order: Vec<usize> = (0..reg.len()).collect();
    let mut rng = rng::labeled_rng(seed, "split");
    order.shuffle(&mut rng);
    Ok(reg.with_unseen(order.into_iter().take(k)))
}

/// Like [`split_seen_unseen`] but favours species with few samples: each
/// species is drawn without replacement with weight `1 / max(count, 1)`.
pub fn split_seen_unseen_weighted(
    reg: &Registry,
    unseen_fraction: f64,
    seed: u64,
    sample_counts: &[usize],
) -> Result<Registry> {
    if sample_counts.len() != reg.len() {
        return Err(Error::DimMismatch {
            expected: reg.len(),
            got: sample_counts.len(),
            context: "per-species sample counts",
        });
    }
    let k = unseen_count(reg.len(), unseen_fraction)?;
    let mut rng = rng::labeled_rng(seed, "split-weighted");
    // Efraimidis-Spirakis: key = u^(1/w), keep the k largest keys.
    let mut keyed: Vec<(f64, usize)> = sample_counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let w = 1.0 / c.max(1) as f64;
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            (u.ln() / w, i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(reg.with_unseen(keyed.into_iter().take(k).map(|(_, i)| i)))
}
