//! Generate a taxonomy, split it into seen/unseen species and query shared
//! ancestry.
//!
//! cargo run --example taxonomy

use trimodal::taxonomy::{
    load_registry, shared_ancestor, split_seen_unseen, synthetic_registry, write_registry, Rank,
    TaxonomyShape, TRAIT_CATEGORIES,
};

fn main() -> anyhow::Result<()> {
    let reg = synthetic_registry(40, 7, &TaxonomyShape::default())?;
    let reg = split_seen_unseen(&reg, 0.2, 8)?;
    println!(
        "{} species, {} seen, {} unseen",
        reg.len(),
        reg.seen_indices().len(),
        reg.unseen_indices().len()
    );
    println!(
        "{} genera, {} families",
        reg.genera().count(),
        reg.families().count()
    );

    for rec in reg.records().iter().take(3) {
        println!(
            "{:>8}  {} > {} > {} > {} {}  ({})",
            rec.species_id,
            rec.class_name,
            rec.order_name,
            rec.family_name,
            rec.genus_name,
            rec.species_epithet,
            rec.common_name
        );
        for cat in &TRAIT_CATEGORIES {
            let active: Vec<&str> = cat
                .traits
                .iter()
                .zip(rec.traits.category(cat))
                .filter(|(_, &on)| on)
                .map(|(t, _)| *t)
                .collect();
            println!("          {:<22} {}", cat.name, active.join(", "));
        }
    }

    let (a, b) = (&reg.get(0).species_id, &reg.get(1).species_id);
    for rank in Rank::ALL {
        println!(
            "{a} and {b} share {rank:?}: {}",
            shared_ancestor(&reg, a, b, rank)?
        );
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("manifest.jsonl");
    write_registry(&reg, &path)?;
    let back = load_registry(&path)?;
    println!(
        "manifest round trip: {} records, identical: {}",
        back.len(),
        back.records() == reg.records()
    );
    Ok(())
}
