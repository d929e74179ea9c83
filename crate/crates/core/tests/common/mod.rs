#![allow(dead_code)]

pub mod naive;

use proptest::prelude::*;
use qchain::spatial::{Entity, Fact, Relation, Scene};

pub const NAMES: [&str; 8] = ["a", "b", "c", "d", "e", "f", "g", "h"];

/// Scenes of up to `max_entities` entities with arbitrary (possibly
/// contradictory) facts.
pub fn scene_strategy(max_entities: usize, max_facts: usize) -> impl Strategy<Value = Scene> {
    (2..=max_entities).prop_flat_map(move |n| {
        prop::collection::vec((0..15usize, 0..n, 1..n), 0..=max_facts).prop_map(move |raw| {
            let facts: Vec<Fact> = raw
                .into_iter()
                .map(|(r, s, d)| Fact::new(Relation::ALL[r], NAMES[s], NAMES[(s + d) % n]).unwrap())
                .collect();
            Scene::new(NAMES[..n].iter().map(|id| Entity::new(*id)).collect(), facts).unwrap()
        })
    })
}

pub fn fact(s: &str) -> Fact {
    s.parse().unwrap()
}
