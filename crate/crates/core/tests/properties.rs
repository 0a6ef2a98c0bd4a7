use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng as _;

use trimodal::bench::{build_scenarios, score, BenchConfig, BenchPlan, Scenario};
use trimodal::model::{
    lambda_at, total_loss, AdamW, AdamWConfig, Batch, FreezeMask, ModelConfig, ModelState, Stage,
    TrainConfig,
};
use trimodal::pipeline::{generate_world, init_model, PipelineConfig, World};
use trimodal::prompts::{render, PromptTemplate, Vocabulary};
use trimodal::rng::rng_from;
use trimodal::signal::Modality;
use trimodal::taxonomy::{
    shared_ancestor, split_seen_unseen, synthetic_registry, Rank, TaxonomyShape, TraitVector,
    N_TRAITS, TRAIT_CATEGORIES,
};
use trimodal::traits::{train_probe, trait_metrics, ProbeConfig, ProbeParams};

const TEMPLATES: [PromptTemplate; 5] = [
    PromptTemplate::Com,
    PromptTemplate::Sci,
    PromptTemplate::Tax,
    PromptTemplate::SciCom,
    PromptTemplate::TaxCom,
];

fn small_state(seed: u64, dim: usize) -> ModelState {
    let reg = synthetic_registry(8, seed, &TaxonomyShape::default()).unwrap();
    let cfg = ModelConfig {
        dim,
        hidden: 6,
        text_embed: 5,
        ..ModelConfig::default()
    };
    ModelState::init(&cfg, 5, 4, Vocabulary::from_registry(&reg), seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn split_is_a_partition(n in 2usize..300, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let reg = synthetic_registry(n, seed, &TaxonomyShape::default()).unwrap();
        let split = split_seen_unseen(&reg, frac, seed ^ 1);
        prop_assume!(split.is_ok());
        let reg = split.unwrap();
        let seen: BTreeSet<usize> = reg.seen_indices().into_iter().collect();
        let unseen: BTreeSet<usize> = reg.unseen_indices().into_iter().collect();
        prop_assert_eq!(seen.len() + unseen.len(), n);
        prop_assert_eq!(seen.intersection(&unseen).count(), 0);
    }

    #[test]
    fn generated_traits_are_exclusive(n in 1usize..200, seed in any::<u64>()) {
        let reg = synthetic_registry(n, seed, &TaxonomyShape::default()).unwrap();
        for rec in reg.records() {
            for cat in TRAIT_CATEGORIES.iter().filter(|c| c.exclusive) {
                prop_assert_eq!(rec.traits.category(cat).iter().filter(|&&b| b).count(), 1);
            }
        }
    }

    #[test]
    fn shared_ancestor_is_symmetric_and_monotone(n in 2usize..150, seed in any::<u64>(), pairs in prop::collection::vec((any::<usize>(), any::<usize>()), 20)) {
        let reg = synthetic_registry(n, seed, &TaxonomyShape::default()).unwrap();
        for (a, b) in pairs {
            let (a, b) = (&reg.get(a % n).species_id, &reg.get(b % n).species_id);
            let shared: Vec<bool> = Rank::ALL.iter().map(|&r| shared_ancestor(&reg, a, b, r).unwrap()).collect();
            let back: Vec<bool> = Rank::ALL.iter().map(|&r| shared_ancestor(&reg, b, a, r).unwrap()).collect();
            prop_assert_eq!(&shared, &back);
            // Rank::ALL runs coarse to fine: sharing a finer rank implies every coarser one
            for w in shared.windows(2) {
                prop_assert!(!w[1] || w[0]);
            }
        }
    }

    #[test]
    fn render_is_deterministic_and_injective(n in 2usize..200, seed in any::<u64>()) {
        let reg = synthetic_registry(n, seed, &TaxonomyShape::default()).unwrap();
        for t in TEMPLATES {
            let mut seen: HashMap<String, Vec<String>> = HashMap::new();
            for rec in reg.records() {
                let p = render(rec, t);
                prop_assert_eq!(&p, &render(rec, t));
                let key = match t {
                    PromptTemplate::Com => vec![rec.common_name.clone()],
                    PromptTemplate::Sci => vec![rec.genus_name.clone(), rec.species_epithet.clone()],
                    PromptTemplate::Tax => Rank::ALL.iter().map(|&r| rec.name_at(r).into_owned()).collect(),
                    PromptTemplate::SciCom => vec![rec.genus_name.clone(), rec.species_epithet.clone(), rec.common_name.clone()],
                    PromptTemplate::TaxCom => {
                        let mut k: Vec<String> = Rank::ALL.iter().map(|&r| rec.name_at(r).into_owned()).collect();
                        k.push(rec.common_name.clone());
                        k
                    }
                };
                if let Some(prev) = seen.insert(p.text.clone(), key.clone()) {
                    prop_assert_eq!(prev, key, "two distinct records rendered {:?}", p.text);
                }
            }
        }
    }

    #[test]
    fn encoder_outputs_have_unit_norm(seed in any::<u64>(), dim in 1usize..8, scale in prop::sample::select(vec![1e-3, 1.0, 1e3])) {
        let state = small_state(seed, dim);
        let mut rng = rng_from(seed);
        let audio: Vec<f32> = (0..5).map(|_| (rng.random_range(-1.0..1.0) * scale) as f32).collect();
        let image: Vec<f32> = (0..4).map(|_| (rng.random_range(-1.0..1.0) * scale) as f32).collect();
        let tokens: Vec<u32> = (0..3).map(|_| rng.random_range(0..state.vocab.len() as u32)).collect();
        for e in [state.encode_audio(&audio).unwrap(), state.encode_image(&image).unwrap(), state.encode_text(&tokens).unwrap()] {
            prop_assert!((e.dot(&e).sqrt() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn lambda_is_monotone_and_clamped(max in 0.0f64..2.0, warmup in 0usize..5, spe in 1u64..50) {
        let cfg = TrainConfig { lambda_max: max, lambda_warmup_epochs: warmup, ..TrainConfig::default() };
        let mut prev = 0.0;
        for step in 0..(warmup as u64 + 2) * spe {
            let l = lambda_at(step, spe, &cfg);
            prop_assert!(l >= prev && (0.0..=max).contains(&l));
            prev = l;
        }
    }

    #[test]
    fn frozen_towers_stay_bit_identical(seed in any::<u64>(), stage in 0u8..3, steps in 1usize..6) {
        let mut state = small_state(seed, 4);
        state.freeze = Stage::from_index(stage).unwrap().freeze_mask();
        let before = state.params.clone();
        let mut rng = rng_from(seed);
        let mut opt = AdamW::new(AdamWConfig::default(), &state.params);
        for _ in 0..steps {
            let batch = Batch::new(
                Array2::from_shape_fn((3, 5), |_| rng.random_range(-1.0..1.0)),
                Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0)),
                (0..3).map(|_| vec![rng.random_range(1..state.vocab.len() as u32)]).collect(),
                vec![0, 1, 2],
            ).unwrap();
            let (_, g) = total_loss(&state, &batch, 0.1).unwrap();
            opt.apply(&mut state, &g, 1e-2).unwrap();
        }
        for (a, b) in before.tensors().iter().zip(state.params.tensors()) {
            if state.freeze.is_frozen(a.tower) {
                prop_assert!(a.data.iter().zip(b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }

    #[test]
    fn f1_matches_confusion_oracle(n in 1usize..=50, seed in any::<u64>()) {
        let mut rng = rng_from(seed);
        let mut draw = || TraitVector(std::array::from_fn(|_| rng.random_bool(0.3)));
        let truth: Vec<TraitVector> = (0..n).map(|_| draw()).collect();
        let pred: Vec<TraitVector> = (0..n).map(|_| draw()).collect();
        let got = trait_metrics(&truth, &pred);
        let mut slot = 0;
        for cat in &TRAIT_CATEGORIES {
            let mut sum = 0.0;
            for _ in cat.traits {
                let tp = truth.iter().zip(&pred).filter(|(t, p)| t.0[slot] && p.0[slot]).count();
                let fp = truth.iter().zip(&pred).filter(|(t, p)| !t.0[slot] && p.0[slot]).count();
                let fneg = truth.iter().zip(&pred).filter(|(t, p)| t.0[slot] && !p.0[slot]).count();
                sum += if tp == 0 { 0.0 } else { (2 * tp) as f64 / (2 * tp + fp + fneg) as f64 };
                slot += 1;
            }
            prop_assert_eq!(got.category(cat.name), Some(sum / cat.traits.len() as f64));
        }
    }

    #[test]
    fn probe_predictions_respect_exclusivity(seed in any::<u64>(), d in 1usize..8, rows in 1usize..20) {
        let mut rng = rng_from(seed);
        let probe = ProbeParams {
            weight: Array2::from_shape_fn((d, N_TRAITS), |_| rng.random_range(-3.0..3.0)),
            bias: Array1::from_shape_fn(N_TRAITS, |_| rng.random_range(-1.0..1.0)),
        };
        let x = Array2::from_shape_fn((rows, d), |_| rng.random_range(-1.0..1.0));
        for v in probe.predict(x.view()).unwrap() {
            for cat in TRAIT_CATEGORIES.iter().filter(|c| c.exclusive) {
                prop_assert_eq!(v.category(cat).iter().filter(|&&b| b).count(), 1);
            }
        }
    }
}

fn bench_world() -> &'static (World, Vec<Scenario>) {
    static CELL: OnceLock<(World, Vec<Scenario>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = PipelineConfig {
            seed: 2,
            species: 160,
            unseen_frac: 0.5,
            ..Default::default()
        };
        let world = generate_world(&cfg).unwrap();
        let bench = BenchConfig {
            tasks_per_scenario: 12,
            k: 10,
            seed: 3,
            ..Default::default()
        };
        let scenarios = build_scenarios(
            &world.registry,
            &world.data.corpus,
            &bench,
            &BenchPlan::default(),
        )
        .unwrap();
        (world, scenarios)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scores_are_ordered_and_task_order_invariant(seed in any::<u64>()) {
        let (world, scenarios) = bench_world();
        let mut rng = rng_from(seed);
        let rankings: Vec<Vec<Vec<usize>>> = scenarios
            .iter()
            .map(|sc| sc.tasks.iter().map(|t| {
                let mut r: Vec<usize> = (0..t.candidates.len()).collect();
                r.shuffle(&mut rng);
                // bias toward the positive so top1/top5 are not all zero
                if rng.random_bool(0.3) {
                    let at = r.iter().position(|&c| c == t.positive).unwrap();
                    r.swap(0, at);
                }
                r
            }).collect())
            .collect();
        let report = score(&world.registry, scenarios, &rankings).unwrap();
        for s in &report.scenarios {
            prop_assert!(s.top1 <= s.top5);
        }
        let mut shuffled = scenarios.clone();
        let mut shuffled_rankings = rankings.clone();
        for (sc, rk) in shuffled.iter_mut().zip(shuffled_rankings.iter_mut()) {
            let mut order: Vec<usize> = (0..sc.tasks.len()).collect();
            order.shuffle(&mut rng);
            sc.tasks = order.iter().map(|&i| sc.tasks[i].clone()).collect();
            *rk = order.iter().map(|&i| rk[i].clone()).collect();
        }
        let again = score(&world.registry, &shuffled, &shuffled_rankings).unwrap();
        prop_assert_eq!(report, again);
    }
}

#[test]
fn probe_training_leaves_encoder_untouched() {
    let cfg = PipelineConfig {
        seed: 4,
        species: 30,
        ..Default::default()
    };
    let world = generate_world(&cfg).unwrap();
    let mut state = init_model(&world, &cfg).unwrap();
    state.freeze = FreezeMask::all();
    let before = state.clone();
    let probe_cfg = ProbeConfig {
        epochs: 2,
        ..ProbeConfig::default()
    };
    let probe = train_probe(
        &state,
        Modality::Image,
        &world.registry,
        &world.data.corpus,
        &probe_cfg,
    )
    .unwrap();
    assert_eq!(probe.dim(), state.dim());
    assert_eq!(state, before);
}
