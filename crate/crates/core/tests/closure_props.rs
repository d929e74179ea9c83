mod common;

use common::naive::naive_closure;
use common::{fact, scene_strategy};
use proptest::prelude::*;
use qchain::inference::{close, closure_limit};
use qchain::kb::default_kb;
use qchain::oracle::Oracle;
use qchain::scenegen::{generate_scene, GenConfig};
use qchain::spatial::{Question, Relation, Scene, YesNo};

fn grounded_configs() -> impl Iterator<Item = GenConfig> {
    (0..60u64).map(|seed| {
        let n_blocks = (seed % 4) as u32;
        GenConfig {
            n_entities: n_blocks + 2 + (seed % 3) as u32,
            n_blocks,
            k_target: 1 + (seed as u32 % (n_blocks + 1)),
            seed,
            ..GenConfig::default()
        }
    })
}

#[test]
fn generated_scenes_match_naive_fixpoint_and_geometry() {
    let kb = default_kb();
    for cfg in grounded_configs() {
        let gs = generate_scene(&cfg).unwrap();
        let closure = close(&gs.scene, &kb).unwrap();
        assert_eq!(closure.facts(), &naive_closure(&gs.scene, &kb), "seed {}", cfg.seed);
        for f in closure.facts() {
            assert!(gs.holds(f), "seed {}: {f} is false in the grounding", cfg.seed);
        }
    }
}

#[test]
fn adding_a_fact_keeps_derived_facts() {
    let kb = default_kb();
    let base = vec![fact("left(a,b)"), fact("inside(c,a)"), fact("above(d,c)")];
    let before = close(&Scene::from_facts(base.clone()), &kb).unwrap();
    let mut more = base;
    more.push(fact("near(b,d)"));
    let after = close(&Scene::from_facts(more), &kb).unwrap();
    assert!(before.facts().is_subset(after.facts()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn closure_equals_naive_fixpoint(scene in scene_strategy(6, 8)) {
        let kb = default_kb();
        let closure = close(&scene, &kb).unwrap();
        prop_assert_eq!(closure.facts(), &naive_closure(&scene, &kb));
    }

    #[test]
    fn closure_is_monotone_and_bounded(scene in scene_strategy(7, 10), extra in scene_strategy(7, 3)) {
        let kb = default_kb();
        let closure = close(&scene, &kb).unwrap();
        for f in &scene.facts {
            prop_assert!(closure.contains(f));
        }
        prop_assert!(closure.len() <= closure_limit(scene.entities.len()));
        let mut facts = scene.facts.clone();
        facts.extend(extra.facts.iter().cloned());
        let grown = close(&Scene::from_facts(facts), &kb).unwrap();
        prop_assert!(closure.facts().is_subset(grown.facts()));
    }

    #[test]
    fn every_closure_fact_has_a_replayable_chain(scene in scene_strategy(5, 6)) {
        let kb = default_kb();
        let closure = close(&scene, &kb).unwrap();
        for f in closure.facts() {
            let chain = closure.chain(f).unwrap();
            prop_assert_eq!(&chain.target, f);
            prop_assert!(chain.verify(&kb).is_ok());
            for step in chain.rule_steps() {
                let premises: Vec<_> = step.premises.iter().map(|id| chain.step(id).unwrap().fact.clone()).collect();
                let rule = kb.get(step.rule.as_deref().unwrap()).unwrap();
                prop_assert_eq!(rule.apply(&premises), Some(step.fact.clone()));
            }
        }
    }

    #[test]
    fn serialized_closure_is_deterministic(scene in scene_strategy(6, 8)) {
        let kb = default_kb();
        let a = close(&scene, &kb).unwrap();
        let b = close(&scene, &kb).unwrap();
        prop_assert_eq!(a.to_json().to_string(), b.to_json().to_string());
        for f in a.facts() {
            prop_assert_eq!(
                serde_json::to_string(&a.chain(f)).unwrap(),
                serde_json::to_string(&b.chain(f)).unwrap()
            );
        }
    }

    #[test]
    fn find_relation_is_converse_coherent(scene in scene_strategy(5, 7)) {
        let oracle = Oracle::new(&scene, &default_kb()).unwrap();
        let ids: Vec<_> = scene.entities.iter().map(|e| e.id.clone()).collect();
        for a in &ids {
            for b in ids.iter().filter(|b| *b != a) {
                let ab = oracle.answer_fr_set(a, b);
                let ba = oracle.answer_fr_set(b, a);
                for r in Relation::ALL {
                    prop_assert_eq!(ab.contains(&r), ba.contains(&r.converse()));
                }
                if oracle.is_consistent() {
                    for r in Relation::ALL {
                        if let Some(o) = r.opposite() {
                            prop_assert!(!(ab.contains(&r) && ab.contains(&o)));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn yes_iff_in_closure(scene in scene_strategy(5, 6), r in 0..15usize, s in 0..5usize, d in 1..5usize) {
        let oracle = Oracle::new(&scene, &default_kb()).unwrap();
        let n = scene.entities.len();
        let (s, o) = (s % n, (s % n + 1 + d % (n - 1)) % n);
        let f = qchain::Fact::new(Relation::ALL[r], &*scene.entities[s].id, &*scene.entities[o].id).unwrap();
        let ans = oracle.answer(&Question::yn("q", f.clone())).unwrap();
        let yes = ans.answer == qchain::Answer::Yn(YesNo::Yes);
        prop_assert_eq!(yes, oracle.closure().contains(&f));
    }
}

#[test]
fn generated_scenes_are_consistent_and_exclusive() {
    let kb = default_kb();
    for cfg in grounded_configs() {
        let gs = generate_scene(&cfg).unwrap();
        let oracle = Oracle::new(&gs.scene, &kb).unwrap();
        assert!(oracle.is_consistent(), "seed {}", cfg.seed);
    }
}
