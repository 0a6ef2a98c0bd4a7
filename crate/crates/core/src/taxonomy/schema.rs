//! The fixed 34-slot ecological trait layout.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// One trait category. `exclusive` categories are one-hot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraitCategory {
    pub name: &'static str,
    pub key: &'static str,
    pub exclusive: bool,
    pub traits: &'static [&'static str],
}

pub const TRAIT_CATEGORIES: [TraitCategory; 9] = [
    TraitCategory {
        name: "Diet Type",
        key: "diet_type",
        exclusive: true,
        traits: &["herbivorous", "carnivorous", "omnivorous", "specialized"],
    },
    TraitCategory {
        name: "Activity Pattern",
        key: "activity_pattern",
        exclusive: true,
        traits: &["diurnal", "nocturnal", "crepuscular", "cathemeral"],
    },
    TraitCategory {
        name: "Locomotion Posture",
        key: "locomotion_posture",
        exclusive: true,
        traits: &["quadrupedal", "bipedal", "other"],
    },
    TraitCategory {
        name: "Lifestyle",
        key: "lifestyle",
        exclusive: false,
        traits: &["arboreal", "aquatic", "terrestrial", "fossorial", "aerial"],
    },
    TraitCategory {
        name: "Trophic Role",
        key: "trophic_role",
        exclusive: false,
        traits: &["predator"],
    },
    TraitCategory {
        name: "Habitat",
        key: "habitat",
        exclusive: false,
        traits: &[
            "forest",
            "grassland",
            "desert",
            "wetland",
            "mountain",
            "urban",
        ],
    },
    TraitCategory {
        name: "Climatic Distribution",
        key: "climatic_distribution",
        exclusive: false,
        traits: &["tropical", "subtropical", "temperate", "boreal", "polar"],
    },
    TraitCategory {
        name: "Social Behavior",
        key: "social_behavior",
        exclusive: true,
        traits: &["solitary", "pairing", "grouping", "herding"],
    },
    TraitCategory {
        name: "Migration Status",
        key: "migration_status",
        exclusive: false,
        traits: &["migratory", "resident"],
    },
];

pub const N_TRAITS: usize = 34;

impl TraitCategory {
    /// Slot range of this category inside a [`TraitVector`].
    pub fn slots(&self) -> std::ops::Range<usize> {
        let start = category_offset(self.key);
        start..start + self.traits.len()
    }
}

fn category_offset(key: &str) -> usize {
    let mut offset = 0;
    for cat in &TRAIT_CATEGORIES {
        if cat.key == key {
            return offset;
        }
        offset += cat.traits.len();
    }
    unreachable!("unknown trait category {key}")
}

/// Trait names in slot order.
pub fn trait_names() -> impl Iterator<Item = &'static str> {
    TRAIT_CATEGORIES
        .iter()
        .flat_map(|c| c.traits.iter().copied())
}

pub fn trait_slot(name: &str) -> Option<usize> {
    trait_names().position(|t| t == name)
}

pub fn category_by_key(key: &str) -> Option<(usize, &'static TraitCategory)> {
    TRAIT_CATEGORIES
        .iter()
        .enumerate()
        .find(|(_, c)| c.key == key)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraitVector(pub [bool; N_TRAITS]);

impl Default for TraitVector {
    fn default() -> Self {
        TraitVector([false; N_TRAITS])
    }
}

impl fmt::Debug for TraitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let active: Vec<&str> = trait_names()
            .zip(self.0.iter())
            .filter(|(_, &on)| on)
            .map(|(n, _)| n)
            .collect();
        f.debug_tuple("TraitVector").field(&active).finish()
    }
}

impl TraitVector {
    pub fn get(&self, slot: usize) -> bool {
        self.0[slot]
    }

    pub fn set(&mut self, slot: usize, value: bool) {
        self.0[slot] = value;
    }

    pub fn category(&self, cat: &TraitCategory) -> &[bool] {
        &self.0[cat.slots()]
    }

    /// Checks the one-hot rule on every exclusive category.
    pub fn validate(&self, species_id: &str) -> Result<()> {
        for cat in &TRAIT_CATEGORIES {
            if !cat.exclusive {
                continue;
            }
            let active = self.category(cat).iter().filter(|&&b| b).count();
            if active != 1 {
                return Err(Error::TraitConstraint {
                    species_id: species_id.to_string(),
                    category: cat.name,
                    active,
                });
            }
        }
        Ok(())
    }

    pub fn as_f64(&self) -> [f64; N_TRAITS] {
        let mut out = [0.0; N_TRAITS];
        for (o, &b) in out.iter_mut().zip(self.0.iter()) {
            *o = if b { 1.0 } else { 0.0 };
        }
        out
    }
}

impl Serialize for TraitVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(N_TRAITS))?;
        for (name, value) in trait_names().zip(self.0.iter()) {
            map.serialize_entry(name, value)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for TraitVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = BTreeMap::<String, bool>::deserialize(deserializer)?;
        let mut out = TraitVector::default();
        for (name, value) in &raw {
            let slot = trait_slot(name)
                .ok_or_else(|| D::Error::custom(format!("unknown trait `{name}`")))?;
            out.0[slot] = *value;
        }
        if raw.len() != N_TRAITS {
            let missing: Vec<&str> = trait_names().filter(|n| !raw.contains_key(*n)).collect();
            return Err(D::Error::custom(format!(
                "expected {N_TRAITS} traits, missing {missing:?}"
            )));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_has_34_slots_in_nine_categories() {
        assert_eq!(TRAIT_CATEGORIES.len(), 9);
        assert_eq!(trait_names().count(), N_TRAITS);
        let sizes: Vec<usize> = TRAIT_CATEGORIES.iter().map(|c| c.traits.len()).collect();
        assert_eq!(sizes, vec![4, 4, 3, 5, 1, 6, 5, 4, 2]);
        let exclusive: Vec<&str> = TRAIT_CATEGORIES
            .iter()
            .filter(|c| c.exclusive)
            .map(|c| c.key)
            .collect();
        assert_eq!(
            exclusive,
            vec![
                "diet_type",
                "activity_pattern",
                "locomotion_posture",
                "social_behavior"
            ]
        );
    }

    #[test]
    fn slots_are_contiguous() {
        let mut next = 0;
        for cat in &TRAIT_CATEGORIES {
            assert_eq!(cat.slots().start, next);
            next = cat.slots().end;
        }
        assert_eq!(next, N_TRAITS);
    }

    #[test]
    fn validate_names_offending_category() {
        let mut tv = TraitVector::default();
        for cat in TRAIT_CATEGORIES.iter().filter(|c| c.exclusive) {
            tv.set(cat.slots().start, true);
        }
        tv.validate("x").unwrap();
        tv.set(trait_slot("carnivorous").unwrap(), true);
        match tv.validate("x") {
            Err(Error::TraitConstraint {
                category, active, ..
            }) => {
                assert_eq!(category, "Diet Type");
                assert_eq!(active, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_round_trip_keeps_slot_order() {
        let mut tv = TraitVector::default();
        tv.set(3, true);
        tv.set(33, true);
        let json = serde_json::to_string(&tv).unwrap();
        assert!(json.starts_with("{\"herbivorous\":false"));
        let back: TraitVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, tv);
    }

    #[test]
    fn missing_trait_rejected() {
        let err = serde_json::from_str::<TraitVector>("{\"herbivorous\":true}").unwrap_err();
        assert!(err.to_string().contains("missing"));
    }
}
