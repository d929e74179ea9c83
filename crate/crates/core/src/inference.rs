//! Forward chaining to a fixpoint, with provenance, and Q-Chain extraction.
//!
//! [`close`] runs semi-naive evaluation: every round matches rules only
//! against bindings that use at least one fact derived in the previous
//! round. All candidate derivations of a fact first reached in round `r` are
//! compared and the smallest by (rule category rank, rule id, premise facts)
//! is recorded, so provenance does not depend on iteration order. A fact
//! first derived in round `r` therefore has a proof tree of height exactly
//! `r`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{Rule, RuleKb};
use crate::spatial::{Fact, Question, Relation, Scene, YesNo};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InferenceError {
    #[error("closure exceeded {limit} facts")]
    ResourceLimit { limit: usize },
}

/// How a derived fact was first obtained.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Derivation {
    pub rule: String,
    pub premises: Vec<Fact>,
    /// Round in which the fact first appeared (1-based).
    pub round: u32,
}

/// The deductive closure of a scene plus one recorded derivation per derived fact.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Closure {
    facts: BTreeSet<Fact>,
    base: BTreeSet<Fact>,
    provenance: BTreeMap<Fact, Derivation>,
    rounds: u32,
}

type Ground = (Relation, u32, u32);

struct Index {
    set: HashSet<Ground>,
    by_rel: HashMap<Relation, Vec<(u32, u32)>>,
    by_subj: HashMap<(Relation, u32), Vec<u32>>,
    by_obj: HashMap<(Relation, u32), Vec<u32>>,
}

impl Index {
    fn new() -> Self {
        Index {
            set: HashSet::new(),
            by_rel: HashMap::new(),
            by_subj: HashMap::new(),
            by_obj: HashMap::new(),
        }
    }

    fn insert(&mut self, g: Ground) -> bool {
        if !self.set.insert(g) {
            return false;
        }
        let (r, s, o) = g;
        self.by_rel.entry(r).or_default().push((s, o));
        self.by_subj.entry((r, s)).or_default().push(o);
        self.by_obj.entry((r, o)).or_default().push(s);
        true
    }

    /// Facts of relation `rel` compatible with the given partial arguments.
    fn matching(&self, rel: Relation, s: Option<u32>, o: Option<u32>) -> Vec<(u32, u32)> {
        match (s, o) {
            (Some(s), Some(o)) => {
                if self.set.contains(&(rel, s, o)) {
                    vec![(s, o)]
                } else {
                    vec![]
                }
            }
            (Some(s), None) => self
                .by_subj
                .get(&(rel, s))
                .map(|os| os.iter().map(|&o| (s, o)).collect())
                .unwrap_or_default(),
            (None, Some(o)) => self
                .by_obj
                .get(&(rel, o))
                .map(|ss| ss.iter().map(|&s| (s, o)).collect())
                .unwrap_or_default(),
            (None, None) => self.by_rel.get(&rel).cloned().unwrap_or_default(),
        }
    }
}

struct Interner<'a> {
    ids: Vec<&'a str>,
    lookup: HashMap<&'a str, u32>,
}

impl<'a> Interner<'a> {
    fn new(scene: &'a Scene) -> Self {
        let ids: Vec<&str> = scene.entities.iter().map(|e| e.id.as_str()).collect();
        let lookup = ids.iter().enumerate().map(|(i, id)| (*id, i as u32)).collect();
        Interner { ids, lookup }
    }

    fn ground(&self, f: &Fact) -> Ground {
        (f.rel, self.lookup[f.subj.as_str()], self.lookup[f.obj.as_str()])
    }

    fn fact(&self, (r, s, o): Ground) -> Fact {
        Fact {
            rel: r,
            subj: self.ids[s as usize].to_string(),
            obj: self.ids[o as usize].to_string(),
        }
    }
}

/// Enumerates complete bindings of `rule` where premise `fixed` is bound to
/// `seed`, calling `emit` with the premises in rule order.
type Emit<'a> = dyn FnMut(Ground, &[(u32, u32)]) + 'a;

fn join(rule: &Rule, fixed: usize, seed: (u32, u32), index: &Index, emit: &mut Emit<'_>) {
    let mut binding: [Option<u32>; 4] = [None; 4];
    let p = rule.premises[fixed];
    binding[p.subj.index()] = Some(seed.0);
    if binding[p.obj.index()].is_some_and(|v| v != seed.1) {
        return;
    }
    binding[p.obj.index()] = Some(seed.1);
    let mut chosen = vec![(0u32, 0u32); rule.premises.len()];
    chosen[fixed] = seed;
    let mut remaining: Vec<usize> = (0..rule.premises.len()).filter(|&i| i != fixed).collect();
    extend(rule, &mut binding, &mut chosen, &mut remaining, index, emit);
}

fn extend(
    rule: &Rule,
    binding: &mut [Option<u32>; 4],
    chosen: &mut Vec<(u32, u32)>,
    remaining: &mut Vec<usize>,
    index: &Index,
    emit: &mut Emit<'_>,
) {
    if remaining.is_empty() {
        let c = rule.conclusion;
        let (s, o) = (binding[c.subj.index()].unwrap(), binding[c.obj.index()].unwrap());
        if s != o {
            emit((c.rel, s, o), chosen);
        }
        return;
    }
    // most constrained premise first
    let pos = (0..remaining.len())
        .max_by_key(|&k| {
            let p = rule.premises[remaining[k]];
            binding[p.subj.index()].is_some() as u8 + binding[p.obj.index()].is_some() as u8
        })
        .unwrap();
    let pi = remaining.swap_remove(pos);
    let p = rule.premises[pi];
    let (bs, bo) = (binding[p.subj.index()], binding[p.obj.index()]);
    for (s, o) in index.matching(p.rel, bs, bo) {
        if p.subj == p.obj && s != o {
            continue;
        }
        binding[p.subj.index()] = Some(s);
        binding[p.obj.index()] = Some(o);
        chosen[pi] = (s, o);
        extend(rule, binding, chosen, remaining, index, emit);
    }
    binding[p.subj.index()] = bs;
    binding[p.obj.index()] = bo;
    remaining.push(pi);
    let last = remaining.len() - 1;
    remaining.swap(pos, last);
}

/// Upper bound on closure size: every relation between every ordered pair.
pub fn closure_limit(entities: usize) -> usize {
    15 * entities * entities.saturating_sub(1)
}

/// Computes the least fixpoint of `scene.facts` under `kb`.
pub fn close(scene: &Scene, kb: &RuleKb) -> Result<Closure, InferenceError> {
    let interner = Interner::new(scene);
    let limit = closure_limit(scene.entities.len());
    let mut index = Index::new();
    let mut delta: Vec<Ground> = Vec::new();
    for f in &scene.facts {
        let g = interner.ground(f);
        if index.insert(g) {
            delta.push(g);
        }
    }
    if index.set.len() > limit {
        return Err(InferenceError::ResourceLimit { limit });
    }

    let mut provenance = BTreeMap::new();
    let mut round = 0u32;
    while !delta.is_empty() {
        round += 1;
        // conclusion -> (rank, rule index, premises) of the preferred derivation
        let mut best: HashMap<Ground, (u8, usize, Vec<Fact>)> = HashMap::new();
        for &(rel, s, o) in &delta {
            for &(ri, pi) in kb.premises_using(rel) {
                let rule = &kb.rules()[ri];
                let rank = rule.category.tie_rank();
                join(rule, pi, (s, o), &index, &mut |concl, chosen| {
                    if index.set.contains(&concl) {
                        return;
                    }
                    let better = match best.get(&concl) {
                        None => true,
                        Some((r0, ri0, prem0)) => {
                            let key0 = (*r0, kb.rules()[*ri0].id.as_str());
                            let key1 = (rank, rule.id.as_str());
                            key1 < key0
                                || (key1 == key0 && {
                                    let prem1 = premises_of(rule, chosen, &interner);
                                    &prem1 < prem0
                                })
                        }
                    };
                    if better {
                        let prem = premises_of(rule, chosen, &interner);
                        best.insert(concl, (rank, ri, prem));
                    }
                });
            }
        }
        let mut fresh: Vec<Ground> = best.keys().copied().collect();
        fresh.sort_unstable_by_key(|g| interner.fact(*g));
        delta.clear();
        for g in fresh {
            let (_, ri, premises) = best.remove(&g).unwrap();
            index.insert(g);
            provenance.insert(
                interner.fact(g),
                Derivation {
                    rule: kb.rules()[ri].id.clone(),
                    premises,
                    round,
                },
            );
            delta.push(g);
        }
        if index.set.len() > limit {
            return Err(InferenceError::ResourceLimit { limit });
        }
    }

    let base: BTreeSet<Fact> = scene.facts.iter().cloned().collect();
    let mut facts = base.clone();
    facts.extend(provenance.keys().cloned());
    Ok(Closure {
        facts,
        base,
        provenance,
        rounds: round.saturating_sub(1),
    })
}

fn premises_of(rule: &Rule, chosen: &[(u32, u32)], interner: &Interner<'_>) -> Vec<Fact> {
    rule.premises
        .iter()
        .zip(chosen)
        .map(|(p, &(s, o))| interner.fact((p.rel, s, o)))
        .collect()
}

impl Closure {
    pub fn facts(&self) -> &BTreeSet<Fact> {
        &self.facts
    }

    pub fn base(&self) -> &BTreeSet<Fact> {
        &self.base
    }

    pub fn contains(&self, fact: &Fact) -> bool {
        self.facts.contains(fact)
    }

    pub fn is_base(&self, fact: &Fact) -> bool {
        self.base.contains(fact)
    }

    pub fn derivation(&self, fact: &Fact) -> Option<&Derivation> {
        self.provenance.get(fact)
    }

    pub fn provenance(&self) -> &BTreeMap<Fact, Derivation> {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    /// Number of rounds that produced new facts.
    pub fn rounds(&self) -> u32 {
        self.rounds
    }

    /// Height of the canonical proof of `fact`: 0 for asserted facts.
    pub fn depth(&self, fact: &Fact) -> Option<u32> {
        if self.base.contains(fact) {
            Some(0)
        } else {
            self.provenance.get(fact).map(|d| d.round)
        }
    }

    /// Relations `r` with `r(subj,obj)` in the closure.
    pub fn relations_between(&self, subj: &str, obj: &str) -> BTreeSet<Relation> {
        Relation::ALL
            .iter()
            .copied()
            .filter(|&rel| {
                self.facts.contains(&Fact {
                    rel,
                    subj: subj.to_string(),
                    obj: obj.to_string(),
                })
            })
            .collect()
    }

    /// Co-occurring members of an exclusive pair, e.g. `left(a,b)` and `right(a,b)`.
    pub fn conflicts(&self) -> Vec<(Fact, Fact)> {
        let mut out = Vec::new();
        for (a, b) in Relation::OPPOSITE_PAIRS {
            for f in self.facts.iter().filter(|f| f.rel == a) {
                let other = f.with_rel(b);
                if self.facts.contains(&other) {
                    out.push((f.clone(), other));
                }
            }
        }
        out
    }

    pub fn is_consistent(&self) -> bool {
        self.conflicts().is_empty()
    }

    /// Rebuilds the canonical resolution tree of `target` from provenance.
    pub fn chain(&self, target: &Fact) -> Option<QChain> {
        if !self.facts.contains(target) {
            return None;
        }
        let mut order: Vec<Fact> = Vec::new();
        let mut seen: BTreeSet<Fact> = BTreeSet::new();
        self.post_order(target, &mut seen, &mut order);

        let (leaves, internal): (Vec<Fact>, Vec<Fact>) = order
            .into_iter()
            .filter(|f| f != target)
            .partition(|f| self.base.contains(f));
        let mut ids: BTreeMap<&Fact, String> = BTreeMap::new();
        let mut steps = Vec::new();
        for (i, fact) in leaves.iter().chain(internal.iter()).enumerate() {
            ids.insert(fact, format!("q{}", i + 1));
        }
        ids.insert(target, "t".to_string());
        for fact in leaves.iter().chain(internal.iter()).chain(std::iter::once(target)) {
            let (rule, premises) = match self.provenance.get(fact) {
                Some(d) => (
                    Some(d.rule.clone()),
                    d.premises.iter().map(|p| ids[p].clone()).collect(),
                ),
                None => (None, Vec::new()),
            };
            steps.push(ChainStep {
                id: ids[fact].clone(),
                fact: fact.clone(),
                rule,
                premises,
            });
        }
        Some(QChain {
            target: target.clone(),
            steps,
        })
    }

    fn post_order(&self, fact: &Fact, seen: &mut BTreeSet<Fact>, out: &mut Vec<Fact>) {
        if !seen.insert(fact.clone()) {
            return;
        }
        if let Some(d) = self.provenance.get(fact) {
            for p in &d.premises {
                self.post_order(p, seen, out);
            }
        }
        out.push(fact.clone());
    }
}

#[derive(Serialize)]
struct DumpEntry<'a> {
    fact: &'a Fact,
    base: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    derivation: Option<&'a Derivation>,
}

impl Closure {
    /// JSON document listing every fact with its base flag and derivation.
    pub fn to_json(&self) -> serde_json::Value {
        let entries: Vec<DumpEntry<'_>> = self
            .facts
            .iter()
            .map(|f| DumpEntry {
                fact: f,
                base: self.base.contains(f),
                derivation: self.provenance.get(f),
            })
            .collect();
        serde_json::json!({
            "facts": entries,
            "rounds": self.rounds,
            "consistent": self.is_consistent(),
        })
    }
}

/// One node of a Q-Chain: an asserted fact (no rule) or a rule application.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStep {
    pub id: String,
    pub fact: Fact,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub premises: Vec<String>,
}

impl ChainStep {
    pub fn is_leaf(&self) -> bool {
        self.rule.is_none()
    }
}

/// A resolution tree in topological order: asserted leaves first, then
/// derived facts, ending with the target (`id = "t"`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawChain")]
pub struct QChain {
    pub target: Fact,
    pub steps: Vec<ChainStep>,
}

#[derive(Deserialize)]
struct RawChain {
    target: Fact,
    steps: Vec<ChainStep>,
}

impl TryFrom<RawChain> for QChain {
    type Error = ChainError;

    fn try_from(raw: RawChain) -> Result<Self, Self::Error> {
        let chain = QChain {
            target: raw.target,
            steps: raw.steps,
        };
        chain.check()?;
        Ok(chain)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("chain has no steps")]
    Empty,
    #[error("duplicate step id `{0}`")]
    DuplicateId(String),
    #[error("step `{step}` refers to unknown or later step `{premise}`")]
    DanglingPremise { step: String, premise: String },
    #[error("last step does not state the target")]
    TargetMismatch,
    #[error("step `{0}` has premises but no rule")]
    MissingRule(String),
    #[error("step `{step}`: rule `{rule}` is not in the rule base")]
    UnknownRule { step: String, rule: String },
    #[error("step `{step}`: rule `{rule}` applied to its premises does not yield {fact}")]
    InvalidStep { step: String, rule: String, fact: String },
}

impl QChain {
    /// Structural checks: unique ids, premises point backwards, ends at target.
    pub fn check(&self) -> Result<(), ChainError> {
        let last = self.steps.last().ok_or(ChainError::Empty)?;
        if last.fact != self.target {
            return Err(ChainError::TargetMismatch);
        }
        let mut seen = BTreeSet::new();
        for step in &self.steps {
            for p in &step.premises {
                if !seen.contains(p.as_str()) {
                    return Err(ChainError::DanglingPremise {
                        step: step.id.clone(),
                        premise: p.clone(),
                    });
                }
            }
            if step.rule.is_none() && !step.premises.is_empty() {
                return Err(ChainError::MissingRule(step.id.clone()));
            }
            if !seen.insert(step.id.as_str()) {
                return Err(ChainError::DuplicateId(step.id.clone()));
            }
        }
        Ok(())
    }

    /// Replays every rule application against `kb`.
    pub fn verify(&self, kb: &RuleKb) -> Result<(), ChainError> {
        self.check()?;
        let by_id: BTreeMap<&str, &Fact> = self.steps.iter().map(|s| (s.id.as_str(), &s.fact)).collect();
        for step in &self.steps {
            let Some(rule_id) = &step.rule else { continue };
            let rule = kb.get(rule_id).ok_or_else(|| ChainError::UnknownRule {
                step: step.id.clone(),
                rule: rule_id.clone(),
            })?;
            let premises: Vec<Fact> = step.premises.iter().map(|p| by_id[p.as_str()].clone()).collect();
            if rule.apply(&premises).as_ref() != Some(&step.fact) {
                return Err(ChainError::InvalidStep {
                    step: step.id.clone(),
                    rule: rule_id.clone(),
                    fact: step.fact.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn step(&self, id: &str) -> Option<&ChainStep> {
        self.steps.iter().find(|s| s.id == id)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &ChainStep> {
        self.steps.iter().filter(|s| s.is_leaf())
    }

    /// Rule applications (internal nodes).
    pub fn rule_steps(&self) -> impl Iterator<Item = &ChainStep> {
        self.steps.iter().filter(|s| !s.is_leaf())
    }

    pub fn step_count(&self) -> usize {
        self.rule_steps().count()
    }

    /// Longest root-to-leaf path counted in rule applications.
    pub fn depth(&self) -> u32 {
        let mut depth: BTreeMap<&str, u32> = BTreeMap::new();
        for step in &self.steps {
            let d = step.premises.iter().map(|p| depth[p.as_str()] + 1).max().unwrap_or(0);
            depth.insert(&step.id, d);
        }
        depth[self.steps.last().unwrap().id.as_str()]
    }

    /// Renames step ids with `prefix` and calls the root `root_id`.
    pub fn relabel(&self, prefix: &str, root_id: &str) -> QChain {
        let last = self.steps.len() - 1;
        let rename: BTreeMap<&str, String> = self
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let id = if i == last {
                    root_id.to_string()
                } else {
                    format!("{prefix}{}", s.id)
                };
                (s.id.as_str(), id)
            })
            .collect();
        QChain {
            target: self.target.clone(),
            steps: self
                .steps
                .iter()
                .map(|s| ChainStep {
                    id: rename[s.id.as_str()].clone(),
                    fact: s.fact.clone(),
                    rule: s.rule.clone(),
                    premises: s.premises.iter().map(|p| rename[p.as_str()].clone()).collect(),
                })
                .collect(),
        }
    }
}

/// Canonical Q-Chain for `target`, or `None` when it is not entailed.
pub fn derive(scene: &Scene, target: &Fact, kb: &RuleKb) -> Result<Option<QChain>, InferenceError> {
    Ok(close(scene, kb)?.chain(target))
}

pub fn chain_depth(chain: &QChain) -> u32 {
    chain.depth()
}

/// One YN question per distinct chain fact, in step order, all answered Yes.
pub fn chain_to_questions(chain: &QChain) -> Vec<(Question, YesNo)> {
    chain
        .steps
        .iter()
        .map(|s| (Question::yn(s.id.clone(), s.fact.clone()), YesNo::Yes))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::default_kb;
    use crate::spatial::parse_fact;

    fn f(s: &str) -> Fact {
        parse_fact(s).unwrap()
    }

    fn fig2() -> Scene {
        Scene::from_facts(vec![f("above(white,orange)"), f("above(red,white)")])
    }

    #[test]
    fn fig2_closure_contains_target() {
        let closure = close(&fig2(), &default_kb()).unwrap();
        assert!(closure.contains(&f("below(orange,red)")));
        assert!(closure.is_consistent());
    }

    #[test]
    fn fig2_chain_matches_the_worked_example() {
        let chain = derive(&fig2(), &f("below(orange,red)"), &default_kb())
            .unwrap()
            .unwrap();
        let summary: Vec<(String, String, Option<String>, Vec<String>)> = chain
            .steps
            .iter()
            .map(|s| (s.id.clone(), s.fact.to_string(), s.rule.clone(), s.premises.clone()))
            .collect();
        let some = |s: &str| Some(s.to_string());
        let ids = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(
            summary,
            vec![
                ("q1".into(), "above(white,orange)".into(), None, vec![]),
                ("q2".into(), "above(red,white)".into(), None, vec![]),
                (
                    "q3".into(),
                    "below(orange,white)".into(),
                    some("conv-above"),
                    ids(&["q1"])
                ),
                ("q4".into(), "below(white,red)".into(), some("conv-above"), ids(&["q2"])),
                (
                    "t".into(),
                    "below(orange,red)".into(),
                    some("trans-below"),
                    ids(&["q3", "q4"])
                ),
            ]
        );
        assert_eq!(chain_depth(&chain), 2);
        assert_eq!(chain.step_count(), 3);
        chain.verify(&default_kb()).unwrap();
        let qs = chain_to_questions(&chain);
        assert_eq!(qs.len(), 5);
        assert!(qs.iter().all(|(_, a)| *a == YesNo::Yes));
    }

    #[test]
    fn asserted_target_gives_single_leaf_chain() {
        let chain = derive(&fig2(), &f("above(red,white)"), &default_kb()).unwrap().unwrap();
        assert_eq!(chain.steps.len(), 1);
        assert_eq!(chain.steps[0].id, "t");
        assert_eq!(chain_depth(&chain), 0);
        assert_eq!(chain_to_questions(&chain).len(), 1);
    }

    #[test]
    fn underivable_target_is_absent() {
        assert!(derive(&fig2(), &f("above(orange,red)"), &default_kb())
            .unwrap()
            .is_none());
    }

    #[test]
    fn empty_scene_closes_to_nothing() {
        let closure = close(&Scene::default(), &default_kb()).unwrap();
        assert!(closure.is_empty());
    }

    #[test]
    fn left_chain_closure() {
        let scene = Scene::from_facts(vec![f("left(a,b)"), f("left(b,c)"), f("left(c,d)")]);
        let closure = close(&scene, &default_kb()).unwrap();
        assert!(closure.contains(&f("left(a,d)")));
        assert!(closure.contains(&f("right(d,a)")));
        // 6 left, 6 right
        assert_eq!(closure.len(), 12);
    }

    #[test]
    fn stacked_converse_steps_count_depth() {
        use crate::kb::{Pattern, Rule, RuleCategory, Var};
        // left -> right -> left ... alternating through a one-way chain of fake relations is
        // impossible with converse pairs alone, so stack converse on alternating subjects.
        let rules = vec![
            Rule::new(
                "c1",
                RuleCategory::Converse,
                vec![Pattern::new(Relation::Left, Var::X, Var::Y)],
                Pattern::new(Relation::Above, Var::Y, Var::X),
            )
            .unwrap(),
            Rule::new(
                "c2",
                RuleCategory::Converse,
                vec![Pattern::new(Relation::Above, Var::X, Var::Y)],
                Pattern::new(Relation::Behind, Var::Y, Var::X),
            )
            .unwrap(),
            Rule::new(
                "c3",
                RuleCategory::Converse,
                vec![Pattern::new(Relation::Behind, Var::X, Var::Y)],
                Pattern::new(Relation::Near, Var::Y, Var::X),
            )
            .unwrap(),
        ];
        let kb = RuleKb::new(rules).unwrap();
        let scene = Scene::from_facts(vec![f("left(a,b)")]);
        let chain = derive(&scene, &f("near(b,a)"), &kb).unwrap().unwrap();
        assert_eq!(chain_depth(&chain), 3);
        assert_eq!(chain.step_count(), 3);
    }

    #[test]
    fn shared_premise_is_emitted_once() {
        // inside(o,a) is used twice: lifting left through a and through b's content.
        let scene = Scene::from_facts(vec![f("inside(o,a)"), f("inside(p,b)"), f("left(a,b)")]);
        let closure = close(&scene, &default_kb()).unwrap();
        let chain = closure.chain(&f("right(p,o)")).unwrap();
        let facts: BTreeSet<&Fact> = chain.steps.iter().map(|s| &s.fact).collect();
        assert_eq!(facts.len(), chain.steps.len());
        chain.verify(&default_kb()).unwrap();
    }

    #[test]
    fn conflicts_are_flagged_not_rejected() {
        let scene = Scene::from_facts(vec![f("left(a,b)"), f("right(a,b)")]);
        let closure = close(&scene, &default_kb()).unwrap();
        assert!(!closure.is_consistent());
        assert!(closure.conflicts().contains(&(f("left(a,b)"), f("right(a,b)"))));
    }

    #[test]
    fn base_facts_have_no_provenance() {
        let closure = close(&fig2(), &default_kb()).unwrap();
        for b in closure.base() {
            assert!(closure.derivation(b).is_none());
        }
        for (fact, d) in closure.provenance() {
            assert!(!closure.is_base(fact));
            assert_eq!(closure.depth(fact), Some(d.round));
        }
    }

    #[test]
    fn chain_json_round_trip_and_validation() {
        let chain = derive(&fig2(), &f("below(orange,red)"), &default_kb())
            .unwrap()
            .unwrap();
        let text = serde_json::to_string(&chain).unwrap();
        assert!(text.starts_with(r#"{"target":{"rel":"below","subj":"orange","obj":"red"},"steps":[{"id":"q1""#));
        let back: QChain = serde_json::from_str(&text).unwrap();
        assert_eq!(back, chain);

        let mut broken = chain.clone();
        broken.steps[2].premises = vec!["q9".into()];
        let text = serde_json::to_string(&broken).unwrap();
        assert!(serde_json::from_str::<QChain>(&text).is_err());

        let mut wrong = chain;
        wrong.steps[2].rule = Some("conv-left".into());
        assert!(matches!(
            wrong.verify(&default_kb()),
            Err(ChainError::InvalidStep { .. })
        ));
    }

    #[test]
    fn relabel_renames_consistently() {
        let chain = derive(&fig2(), &f("below(orange,red)"), &default_kb())
            .unwrap()
            .unwrap();
        let r = chain.relabel("m0", "fr.below");
        assert_eq!(r.steps.last().unwrap().id, "fr.below");
        assert_eq!(r.steps[2].premises, vec!["m0q1".to_string()]);
        r.check().unwrap();
    }

    #[test]
    fn resource_limit_guard() {
        assert_eq!(closure_limit(2), 30);
        assert_eq!(closure_limit(0), 0);
    }
}
