//! Render the five text templates and tokenize them.
//!
//! cargo run --example prompts

use rand::SeedableRng;
use trimodal::prompts::{
    render, render_at_level, tokenize, PromptLevel, PromptTemplate, TemplateSampler, Vocabulary,
};
use trimodal::taxonomy::{synthetic_registry, TaxonomyShape};

fn main() -> anyhow::Result<()> {
    let reg = synthetic_registry(12, 3, &TaxonomyShape::default())?;
    let vocab = Vocabulary::from_registry(&reg);
    let rec = reg.get(0);

    for t in [
        PromptTemplate::Com,
        PromptTemplate::Sci,
        PromptTemplate::Tax,
        PromptTemplate::SciCom,
        PromptTemplate::TaxCom,
    ] {
        let p = render(rec, t);
        println!(
            "{:<7} {:<70} {:?}",
            t.as_str(),
            p.text,
            tokenize(&p, &vocab)
        );
    }
    for level in [PromptLevel::Genus, PromptLevel::Family] {
        println!(
            "{level:?}-level candidate: {}",
            render_at_level(rec, PromptTemplate::Com, level)
        );
    }

    let sampler = TemplateSampler::uniform();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let draws: Vec<&str> = (0..10).map(|_| sampler.sample(&mut rng).as_str()).collect();
    println!("training draws: {}", draws.join(" "));
    println!("vocabulary: {} tokens", vocab.len());
    Ok(())
}
