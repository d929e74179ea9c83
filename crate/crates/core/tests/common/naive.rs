// Brute-force fixpoint: try every binding of every rule against the whole
// fact set, repeat until nothing changes.

use std::collections::{BTreeSet, HashSet};

use qchain::kb::RuleKb;
use qchain::spatial::{Fact, Relation, Scene};

pub fn naive_closure(scene: &Scene, kb: &RuleKb) -> BTreeSet<Fact> {
    let names: Vec<&str> = scene.entities.iter().map(|e| e.id.as_str()).collect();
    let idx = |id: &str| names.iter().position(|n| *n == id).unwrap();
    let mut known: HashSet<(Relation, usize, usize)> =
        scene.facts.iter().map(|f| (f.rel, idx(&f.subj), idx(&f.obj))).collect();
    let n = names.len();
    loop {
        let mut fresh = Vec::new();
        for rule in kb.rules() {
            let mut used = [false; 4];
            for p in rule.premises.iter().chain(std::iter::once(&rule.conclusion)) {
                used[p.subj.index()] = true;
                used[p.obj.index()] = true;
            }
            let slots: Vec<usize> = (0..4).filter(|&i| used[i]).collect();
            let mut binding = [0usize; 4];
            let total = n.pow(slots.len() as u32);
            for code in 0..total {
                let mut c = code;
                for &s in &slots {
                    binding[s] = c % n;
                    c /= n;
                }
                let ok = rule
                    .premises
                    .iter()
                    .all(|p| known.contains(&(p.rel, binding[p.subj.index()], binding[p.obj.index()])));
                if !ok {
                    continue;
                }
                let (s, o) = (
                    binding[rule.conclusion.subj.index()],
                    binding[rule.conclusion.obj.index()],
                );
                if s != o && !known.contains(&(rule.conclusion.rel, s, o)) {
                    fresh.push((rule.conclusion.rel, s, o));
                }
            }
        }
        if fresh.is_empty() {
            break;
        }
        known.extend(fresh);
    }
    known
        .into_iter()
        .map(|(r, s, o)| Fact::new(r, names[s], names[o]).unwrap())
        .collect()
}
