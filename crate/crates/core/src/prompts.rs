//! Taxonomy-aware text prompts and the word-level vocabulary used by the
//! text encoder.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{Registry, TaxonRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptTemplate {
    Com,
    Sci,
    Tax,
    SciCom,
    TaxCom,
}

impl PromptTemplate {
    pub const ALL: [PromptTemplate; 5] = [
        PromptTemplate::Com,
        PromptTemplate::Sci,
        PromptTemplate::Tax,
        PromptTemplate::SciCom,
        PromptTemplate::TaxCom,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PromptTemplate::Com => "com",
            PromptTemplate::Sci => "sci",
            PromptTemplate::Tax => "tax",
            PromptTemplate::SciCom => "scicom",
            PromptTemplate::TaxCom => "taxcom",
        }
    }
}

impl fmt::Display for PromptTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptTemplate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PromptTemplate::ALL
            .into_iter()
            .find(|t| t.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown prompt template `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub text: String,
    pub source_species: String,
    pub template: PromptTemplate,
}

fn scientific(rec: &TaxonRecord) -> String {
    format!("{} {}", rec.genus_name, rec.species_epithet)
}

fn taxonomic(rec: &TaxonRecord) -> String {
    format!(
        "{} {}, {} {}, {}",
        rec.class_name,
        rec.order_name,
        rec.family_name,
        rec.genus_name,
        scientific(rec)
    )
}

pub fn render(rec: &TaxonRecord, template: PromptTemplate) -> Prompt {
    let text = match template {
        PromptTemplate::Com => rec.common_name.clone(),
        PromptTemplate::Sci => scientific(rec),
        PromptTemplate::Tax => taxonomic(rec),
        PromptTemplate::SciCom => {
            format!("{} with a common name {}", scientific(rec), rec.common_name)
        }
        PromptTemplate::TaxCom => {
            format!("{}, with a common name {}", taxonomic(rec), rec.common_name)
        }
    };
    Prompt {
        text,
        source_species: rec.species_id.clone(),
        template,
    }
}

/// Granularity of text candidates in the benchmark. `Genus` and `Family`
/// render the bare taxon name instead of a species prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PromptLevel {
    #[default]
    Species,
    Genus,
    Family,
}

impl FromStr for PromptLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "species" => Ok(PromptLevel::Species),
            "genus" => Ok(PromptLevel::Genus),
            "family" => Ok(PromptLevel::Family),
            _ => Err(Error::InvalidConfig(format!("unknown prompt level `{s}`"))),
        }
    }
}

pub fn render_at_level(rec: &TaxonRecord, template: PromptTemplate, level: PromptLevel) -> String {
    match level {
        PromptLevel::Species => render(rec, template).text,
        PromptLevel::Genus => rec.genus_name.clone(),
        PromptLevel::Family => rec.family_name.clone(),
    }
}

/// Weighted draw over the five templates. Uniform by default.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSampler {
    cumulative: [f64; 5],
}

impl Default for TemplateSampler {
    fn default() -> Self {
        TemplateSampler::uniform()
    }
}

impl TemplateSampler {
    pub fn uniform() -> Self {
        TemplateSampler::with_weights([1.0; 5]).expect("uniform weights are valid")
    }

    pub fn single(template: PromptTemplate) -> Self {
        let mut w = [0.0; 5];
        w[template as usize] = 1.0;
        TemplateSampler::with_weights(w).expect("one-hot weights are valid")
    }

    pub fn with_weights(weights: [f64; 5]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || total <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "bad template weights {weights:?}"
            )));
        }
        let mut cumulative = [0.0; 5];
        let mut acc = 0.0;
        for (c, w) in cumulative.iter_mut().zip(weights) {
            acc += w / total;
            *c = acc;
        }
        Ok(TemplateSampler { cumulative })
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> PromptTemplate {
        let u: f64 = rng.random();
        let pos = self.cumulative.iter().position(|&c| u < c);
        // u can only miss every bucket through rounding in the last cumulative
        // entry; fall back to the last template with nonzero mass.
        let idx = pos.unwrap_or_else(|| {
            (0..5)
                .rev()
                .find(|&i| i == 0 || self.cumulative[i] > self.cumulative[i - 1])
                .unwrap_or(4)
        });
        PromptTemplate::ALL[idx]
    }
}

/// Uniform template draw.
pub fn sample_template<R: rand::Rng + ?Sized>(rng: &mut R) -> PromptTemplate {
    PromptTemplate::ALL[rng.random_range(0..5)]
}

pub const UNK: u32 = 0;
const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

impl Vocabulary {
    /// Every word any template (or bare taxon prompt) can produce over the registry.
    pub fn from_registry(reg: &Registry) -> Self {
        let mut set = BTreeSet::new();
        for rec in reg.records() {
            for t in [PromptTemplate::TaxCom, PromptTemplate::SciCom] {
                set.extend(words(&render(rec, t).text));
            }
        }
        let mut tokens = vec![UNK_TOKEN.to_string()];
        tokens.extend(set.into_iter().filter(|t| t != UNK_TOKEN));
        Vocabulary::from_tokens(tokens).expect("generated vocabulary is well formed")
    }

    /// Rebuilds a vocabulary from its id-ordered token list (slot 0 is UNK).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(UNK_TOKEN) {
            return Err(Error::Format("vocabulary must start with <unk>".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let ids: Vec<u32> = words(text).map(|w| self.id(&w)).collect();
        if ids.is_empty() && !text.is_empty() {
            return vec![UNK];
        }
        ids
    }
}

pub fn tokenize(prompt: &Prompt, vocab: &Vocabulary) -> Vec<u32> {
    vocab.encode(&prompt.text)
}
