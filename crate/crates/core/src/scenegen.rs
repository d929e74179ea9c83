//! Synthetic grounded scenes and question generation.
//!
//! Every scene is a set of axis-aligned boxes; facts are read off the boxes
//! by [`holds`], which never consults the rule base and so serves as an
//! independent check on inference. Coordinates are integers in quarter units.
//!
//! Axes: x runs left to right, y below to above, z front to behind.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{
    chain_to_constraints, exact_label_constraints, label_var, reverse_pair_constraints, ConstraintError, ConstraintSet,
};
use crate::inference::{InferenceError, QChain};
use crate::kb::{RuleKb, LIFTED};
use crate::oracle::Oracle;
use crate::spatial::{Answer, Entity, Fact, Question, Relation, Scene, YesNo};

/// Grid cells per unit length.
pub const CELLS_PER_UNIT: i64 = 4;
/// Clearance required for a directional relation (0.5 units).
pub const MARGIN: i64 = 2;
/// `near`: farthest-point distance below 2 units.
pub const NEAR_MAX: i64 = 8;
/// `far`: closest-point distance above 6 units.
pub const FAR_MIN: i64 = 24;
const OBJECT_SIDE: i64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [i64; 3],
    pub max: [i64; 3],
}

impl Aabb {
    pub fn new(min: [i64; 3], max: [i64; 3]) -> Self {
        Aabb { min, max }
    }

    /// Corners in units.
    pub fn to_units(&self) -> ([f64; 3], [f64; 3]) {
        let u = |v: [i64; 3]| v.map(|c| c as f64 / CELLS_PER_UNIT as f64);
        (u(self.min), u(self.max))
    }

    fn closed_meet(&self, o: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= o.max[i] && o.min[i] <= self.max[i])
    }

    fn open_meet(&self, o: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] < o.max[i] && o.min[i] < self.max[i])
    }

    fn within(&self, o: &Aabb) -> bool {
        (0..3).all(|i| o.min[i] <= self.min[i] && self.max[i] <= o.max[i])
    }

    fn strictly_within(&self, o: &Aabb) -> bool {
        (0..3).all(|i| o.min[i] < self.min[i] && self.max[i] < o.max[i])
    }

    fn gap_sq(&self, o: &Aabb) -> i64 {
        (0..3)
            .map(|i| (o.min[i] - self.max[i]).max(self.min[i] - o.max[i]).max(0).pow(2))
            .sum()
    }

    fn span_sq(&self, o: &Aabb) -> i64 {
        (0..3)
            .map(|i| {
                (self.max[i] - o.min[i])
                    .abs()
                    .max((o.max[i] - self.min[i]).abs())
                    .pow(2)
            })
            .sum()
    }
}

/// Geometric truth of `rel(a, b)`.
pub fn holds(rel: Relation, a: &Aabb, b: &Aabb) -> bool {
    use Relation::*;
    match rel {
        Left => a.max[0] + MARGIN <= b.min[0],
        Right => b.max[0] + MARGIN <= a.min[0],
        Below => a.max[1] + MARGIN <= b.min[1],
        Above => b.max[1] + MARGIN <= a.min[1],
        Front => a.max[2] + MARGIN <= b.min[2],
        Behind => b.max[2] + MARGIN <= a.min[2],
        Near => a.span_sq(b) < NEAR_MAX * NEAR_MAX,
        Far => a.gap_sq(b) > FAR_MIN * FAR_MIN,
        Disconnected => !a.closed_meet(b),
        Touch => a.closed_meet(b) && !a.open_meet(b),
        Overlap => a.open_meet(b) && !a.within(b) && !b.within(a),
        Inside => a.strictly_within(b),
        Contain => b.strictly_within(a),
        CoveredBy => a != b && a.within(b) && !a.strictly_within(b),
        Cover => a != b && b.within(a) && !b.strictly_within(a),
    }
}

pub fn true_relations(a: &Aabb, b: &Aabb) -> BTreeSet<Relation> {
    Relation::ALL.iter().copied().filter(|&r| holds(r, a, b)).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevealPolicy {
    /// Containment links to each parent plus one fact per adjacent sibling pair.
    #[default]
    Tree,
    /// Every geometrically true fact.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    /// Total entities, blocks included.
    pub n_entities: u32,
    pub n_blocks: u32,
    pub k_target: u32,
    /// When non-empty, each scene draws its target depth from this list instead.
    pub k_choices: Vec<u32>,
    pub reveal_policy: RevealPolicy,
    pub seed: u64,
    /// Fraction of yes/no questions; the rest are find-relation questions.
    pub question_mix: f64,
    /// Fraction of yes/no questions that are false probes.
    pub negative_ratio: f64,
    pub n_scenes: u32,
    pub questions_per_scene: u32,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_entities: 6,
            n_blocks: 2,
            k_target: 2,
            k_choices: Vec::new(),
            reveal_policy: RevealPolicy::Tree,
            seed: 0,
            question_mix: 1.0,
            negative_ratio: 0.5,
            n_scenes: 1,
            questions_per_scene: 1,
        }
    }
}

pub const MAX_DEPTH: u32 = 10;

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::Config(m));
        let ks: Vec<u32> = if self.k_choices.is_empty() {
            vec![self.k_target]
        } else {
            self.k_choices.clone()
        };
        for &k in &ks {
            if !(1..=MAX_DEPTH).contains(&k) {
                return bad(format!("target depth must be in 1..={MAX_DEPTH}, got {k}"));
            }
            if self.n_blocks + 1 < k {
                return bad(format!(
                    "target depth {k} needs at least {} blocks, got {}",
                    k - 1,
                    self.n_blocks
                ));
            }
        }
        if self.n_entities < self.n_blocks + 2 {
            return bad(format!(
                "{} entities leave fewer than two objects besides {} blocks",
                self.n_entities, self.n_blocks
            ));
        }
        for (name, v) in [
            ("question_mix", self.question_mix),
            ("negative_ratio", self.negative_ratio),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error("scene has no derivable fact to ask about")]
    NoCandidate,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GenWarning {
    /// No chain of the requested depth existed; the closest depth was used.
    DepthUnreachable { requested: u32, used: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroundedScene {
    pub placements: BTreeMap<String, Aabb>,
    /// Entity to its enclosing block.
    pub nesting: BTreeMap<String, String>,
    /// Revealed facts.
    pub scene: Scene,
}

impl GroundedScene {
    pub fn holds(&self, fact: &Fact) -> bool {
        match (self.placements.get(&fact.subj), self.placements.get(&fact.obj)) {
            (Some(a), Some(b)) => holds(fact.rel, a, b),
            _ => false,
        }
    }

    /// Every geometrically true fact between distinct entities.
    pub fn true_facts(&self) -> BTreeSet<Fact> {
        let mut out = BTreeSet::new();
        for (s, a) in &self.placements {
            for (o, b) in &self.placements {
                if s != o {
                    for rel in true_relations(a, b) {
                        out.insert(Fact {
                            rel,
                            subj: s.clone(),
                            obj: o.clone(),
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Object,
    Block,
}

struct Node {
    kind: Kind,
    children: Vec<usize>,
    flush_first: bool,
    size: [i64; 3],
    /// Corner relative to the parent's corner.
    offset: [i64; 3],
}

const SIZES: [&str; 3] = ["small", "medium", "large"];
const COLORS: [&str; 8] = ["red", "green", "blue", "yellow", "white", "black", "orange", "purple"];
const SHAPES: [&str; 3] = ["square", "circle", "triangle"];

fn block_name(i: usize) -> String {
    let letter = (b'A' + (i % 26) as u8) as char;
    if i < 26 {
        letter.to_string()
    } else {
        format!("{letter}{}", i / 26)
    }
}

fn sibling_gap(rng: &mut ChaCha8Rng, both_objects: bool, at_root: bool) -> i64 {
    let roll: f64 = rng.gen();
    if roll < 0.10 {
        0
    } else if roll < 0.15 {
        1
    } else if roll < 0.25 && both_objects {
        -1
    } else if roll < 0.35 && at_root {
        rng.gen_range(FAR_MIN + 2..=FAR_MIN + 4)
    } else {
        rng.gen_range(MARGIN..=MARGIN + 3)
    }
}

struct Layout<'a> {
    nodes: &'a mut Vec<Node>,
    rng: &'a mut ChaCha8Rng,
}

impl Layout<'_> {
    /// Sizes `id`'s subtree and places its children; `forced` pins gaps by child index.
    fn measure(&mut self, id: usize, root: bool, forced: &BTreeMap<(usize, usize), i64>) -> [i64; 3] {
        let children = self.nodes[id].children.clone();
        if self.nodes[id].kind == Kind::Object {
            self.nodes[id].size = [OBJECT_SIDE; 3];
            return self.nodes[id].size;
        }
        if children.is_empty() {
            let s = [(); 3].map(|_| self.rng.gen_range(4..=6));
            self.nodes[id].size = s;
            return s;
        }
        let sizes: Vec<[i64; 3]> = children.iter().map(|&c| self.measure(c, false, forced)).collect();
        let axis = self.rng.gen_range(0..3usize);
        let mut size = [0i64; 3];
        let pad = |rng: &mut ChaCha8Rng| if root { 0 } else { rng.gen_range(1..=2) };
        let mut cursor = if self.nodes[id].flush_first { 0 } else { pad(self.rng) };
        for (i, &c) in children.iter().enumerate() {
            if i > 0 {
                let both = self.nodes[children[i - 1]].kind == Kind::Object && self.nodes[c].kind == Kind::Object;
                cursor += forced
                    .get(&(id, i))
                    .copied()
                    .unwrap_or_else(|| sibling_gap(self.rng, both, root));
            }
            self.nodes[c].offset[axis] = cursor;
            cursor += sizes[i][axis];
        }
        size[axis] = cursor + pad(self.rng);
        for p in (0..3).filter(|&p| p != axis) {
            let widest = sizes.iter().map(|s| s[p]).max().unwrap();
            let (lo, hi) = if root { (0, 3) } else { (pad(self.rng), pad(self.rng)) };
            for (i, &c) in children.iter().enumerate() {
                let slack = widest - sizes[i][p] + if root { hi } else { 0 };
                self.nodes[c].offset[p] = lo + self.rng.gen_range(0..=slack);
            }
            size[p] = lo + widest + hi;
        }
        self.nodes[id].size = size;
        size
    }

    fn place(&self, id: usize, origin: [i64; 3], out: &mut Vec<Aabb>) {
        let n = &self.nodes[id];
        let min = [0, 1, 2].map(|i| origin[i] + n.offset[i]);
        out[id] = Aabb::new(min, [0, 1, 2].map(|i| min[i] + n.size[i]));
        for &c in &n.children {
            self.place(c, min, out);
        }
    }
}

/// Builds a grounded scene from `config.seed`.
pub fn generate_scene(config: &GenConfig) -> Result<GroundedScene, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    generate_scene_with(config, &mut rng)
}

/// Builds a grounded scene whose closure contains a fact of depth at least
/// `k_target`: a spine of `k_target − 1` nested blocks and an object, each
/// flush against its parent's face, plus an anchor object beside the
/// outermost block. Partial containment does not compose with itself, so
/// lifting a relation down the spine takes one step per level.
pub fn generate_scene_with(config: &GenConfig, rng: &mut ChaCha8Rng) -> Result<GroundedScene, GenError> {
    config.validate()?;
    let n_blocks = config.n_blocks as usize;
    let n_objects = (config.n_entities - config.n_blocks) as usize;
    let spine_len = config.k_target as usize - 1;

    // node 0 is the virtual root
    let mut nodes: Vec<Node> = vec![Node {
        kind: Kind::Block,
        children: vec![],
        flush_first: false,
        size: [0; 3],
        offset: [0; 3],
    }];
    let mut ids: Vec<String> = vec![String::new()];
    let mut entities: Vec<Entity> = Vec::new();

    let mut combos: Vec<(usize, usize, usize)> = (0..SIZES.len())
        .flat_map(|s| (0..COLORS.len()).flat_map(move |c| (0..SHAPES.len()).map(move |h| (s, c, h))))
        .collect();
    combos.shuffle(rng);
    let new_node = |kind: Kind, nodes: &mut Vec<Node>, ids: &mut Vec<String>, entities: &mut Vec<Entity>| {
        let idx = nodes.len();
        nodes.push(Node {
            kind,
            children: vec![],
            flush_first: false,
            size: [0; 3],
            offset: [0; 3],
        });
        let entity = match kind {
            Kind::Block => {
                let name = block_name(
                    entities
                        .iter()
                        .filter(|e| e.attrs.get("kind").map(String::as_str) == Some("block"))
                        .count(),
                );
                Entity::new(name.clone())
                    .with_attr("kind", "block")
                    .with_attr("name", &name)
            }
            Kind::Object => {
                let n = entities.len()
                    - entities
                        .iter()
                        .filter(|e| e.attrs.get("kind").map(String::as_str) == Some("block"))
                        .count();
                let (s, c, h) = combos[n % combos.len()];
                Entity::new(format!("o{}", n + 1))
                    .with_attr("kind", "object")
                    .with_attr("size", SIZES[s])
                    .with_attr("color", COLORS[c])
                    .with_attr("shape", SHAPES[h])
            }
        };
        ids.push(entity.id.clone());
        entities.push(entity);
        idx
    };

    let spine: Vec<usize> = (0..spine_len)
        .map(|_| new_node(Kind::Block, &mut nodes, &mut ids, &mut entities))
        .collect();
    let deep = new_node(Kind::Object, &mut nodes, &mut ids, &mut entities);
    let anchor = new_node(Kind::Object, &mut nodes, &mut ids, &mut entities);
    for w in spine.windows(2) {
        nodes[w[0]].children.push(w[1]);
        nodes[w[0]].flush_first = true;
    }
    if let Some(&inner) = spine.last() {
        nodes[inner].children.push(deep);
        nodes[inner].flush_first = true;
    }
    let top = spine.first().copied().unwrap_or(deep);

    // spine blocks stay exclusive: anything else inside them could bridge levels
    let mut blocks: Vec<usize> = Vec::new();
    let mut extras: Vec<usize> = Vec::new();
    for _ in spine_len..n_blocks {
        let b = new_node(Kind::Block, &mut nodes, &mut ids, &mut entities);
        nodes[b].flush_first = rng.gen_bool(0.3);
        extras.push(b);
        blocks.push(b);
    }
    for _ in 2..n_objects {
        extras.push(new_node(Kind::Object, &mut nodes, &mut ids, &mut entities));
    }
    extras.shuffle(rng);
    let mut root_items: Vec<usize> = Vec::new();
    for &e in &extras {
        let mut parents: Vec<usize> = vec![0];
        parents.extend(blocks.iter().copied().filter(|&b| b != e && !descends(&nodes, b, e)));
        let p = *parents.choose(rng).unwrap();
        if p == 0 {
            root_items.push(e);
        } else {
            let len = nodes[p].children.len() as u32;
            let at = rng.gen_range(0..=len) as usize;
            nodes[p].children.insert(at, e);
        }
    }
    let pair = if rng.gen_bool(0.5) {
        [top, anchor]
    } else {
        [anchor, top]
    };
    let at = rng.gen_range(0..=root_items.len() as u32) as usize;
    root_items.splice(at..at, pair);
    nodes[0].children = root_items;

    let mut forced = BTreeMap::new();
    forced.insert((0usize, at + 1), rng.gen_range(MARGIN..=MARGIN + 3));
    let mut boxes = vec![Aabb::new([0; 3], [0; 3]); nodes.len()];
    {
        let mut layout = Layout { nodes: &mut nodes, rng };
        layout.measure(0, true, &forced);
        layout.place(0, [0; 3], &mut boxes);
    }

    let mut placements = BTreeMap::new();
    let mut nesting = BTreeMap::new();
    for i in 1..nodes.len() {
        placements.insert(ids[i].clone(), boxes[i]);
        for &c in &nodes[i].children {
            nesting.insert(ids[c].clone(), ids[i].clone());
        }
    }

    let facts = match config.reveal_policy {
        RevealPolicy::Full => {
            let mut all: Vec<Fact> = Vec::new();
            for i in 1..nodes.len() {
                for j in 1..nodes.len() {
                    if i != j {
                        for rel in true_relations(&boxes[i], &boxes[j]) {
                            all.push(Fact::new(rel, ids[i].clone(), ids[j].clone()).unwrap());
                        }
                    }
                }
            }
            all
        }
        RevealPolicy::Tree => {
            let mut revealed = Vec::new();
            let mut reveal = |i: usize, j: usize, allowed: &dyn Fn(Relation) -> bool, rng: &mut ChaCha8Rng| {
                let options: Vec<Relation> = true_relations(&boxes[i], &boxes[j])
                    .into_iter()
                    .filter(|&r| allowed(r))
                    .collect();
                if let Some(&rel) = options.choose(rng) {
                    let fact = Fact::new(rel, ids[i].clone(), ids[j].clone()).unwrap();
                    revealed.push(if rng.gen_bool(0.5) { fact } else { fact.converse() });
                }
            };
            let part_of = |r: Relation| matches!(r, Relation::Inside | Relation::CoveredBy);
            let beside = |r: Relation| {
                !matches!(
                    r,
                    Relation::Inside | Relation::CoveredBy | Relation::Contain | Relation::Cover
                )
            };
            let liftable = |r: Relation| LIFTED.contains(&r);
            let child_lists: Vec<Vec<usize>> = nodes.iter().map(|n| n.children.clone()).collect();
            for (p, children) in child_lists.into_iter().enumerate() {
                for (k, &c) in children.iter().enumerate() {
                    if p != 0 {
                        reveal(c, p, &part_of, rng);
                    }
                    if k > 0 {
                        let prev = children[k - 1];
                        let is_anchor_pair = p == 0 && [prev, c].contains(&top) && [prev, c].contains(&anchor);
                        if is_anchor_pair {
                            reveal(prev, c, &liftable, rng);
                        } else {
                            reveal(prev, c, &beside, rng);
                        }
                    }
                }
            }
            revealed.shuffle(rng);
            revealed
        }
    };

    let scene = Scene::new(entities, facts).expect("generated ids are consistent");
    Ok(GroundedScene {
        placements,
        nesting,
        scene,
    })
}

fn descends(nodes: &[Node], node: usize, ancestor: usize) -> bool {
    nodes[ancestor]
        .children
        .iter()
        .any(|&c| c == node || descends(nodes, node, c))
}

/// One generated training or evaluation example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub scene: Scene,
    pub question: Question,
    pub gold: Answer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<QChain>,
    pub k: u32,
    pub constraints: ConstraintSet,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<GenWarning>,
}

fn pick_by_depth<T: Clone + Ord>(
    items: &BTreeMap<T, u32>,
    used: &BTreeSet<T>,
    k: u32,
    rng: &mut ChaCha8Rng,
) -> Option<(T, u32)> {
    // exact depth first, then unused items, then the deeper of two equally close depths
    let key = |t: &T, d: u32| (d.abs_diff(k), used.contains(t), std::cmp::Reverse(d));
    let best = items.iter().map(|(t, &d)| key(t, d)).min()?;
    let choices: Vec<(&T, &u32)> = items.iter().filter(|(t, &d)| key(t, d) == best).collect();
    let (t, d) = choices.choose(rng)?;
    Some(((*t).clone(), **d))
}

fn depth_warning(k: u32, used: u32) -> Vec<GenWarning> {
    if used == k {
        vec![]
    } else {
        vec![GenWarning::DepthUnreachable { requested: k, used }]
    }
}

/// Questions about `gs` with oracle answers, chains and constraints.
pub fn generate_examples(
    gs: &GroundedScene,
    config: &GenConfig,
    kb: &RuleKb,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Record>, GenError> {
    let oracle = Oracle::new(&gs.scene, kb)?;
    let closure = oracle.closure();
    let depth_of: BTreeMap<Fact, u32> = closure
        .facts()
        .iter()
        .map(|f| (f.clone(), closure.depth(f).unwrap()))
        .collect();
    let with_opposite: BTreeMap<Fact, u32> = depth_of
        .iter()
        .filter(|(f, _)| f.rel.opposite().is_some())
        .map(|(f, d)| (f.clone(), *d))
        .collect();
    let mut pair_depth: BTreeMap<(String, String), u32> = BTreeMap::new();
    for (f, &d) in &depth_of {
        let e = pair_depth.entry((f.subj.clone(), f.obj.clone())).or_insert(0);
        *e = (*e).max(d);
    }

    let k = config.k_target;
    let mut used_facts = BTreeSet::new();
    let mut used_pairs = BTreeSet::new();
    let mut out = Vec::new();
    for _ in 0..config.questions_per_scene {
        let yn = rng.gen_bool(config.question_mix);
        let record = if yn {
            let negative = rng.gen_bool(config.negative_ratio);
            let pool = if negative { &with_opposite } else { &depth_of };
            let (fact, d) = pick_by_depth(pool, &used_facts, k, rng).ok_or(GenError::NoCandidate)?;
            used_facts.insert(fact.clone());
            let chain = closure.chain(&fact).expect("closure fact has a chain");
            let mut constraints = chain_to_constraints(&chain);
            let (question, gold, chain) = if negative {
                let probe = fact.opposite().expect("filtered for an opposite");
                debug_assert!(!gs.holds(&probe) && !closure.contains(&probe));
                let q_neg = Question::yn("n", probe);
                constraints.merge(reverse_pair_constraints(&Question::yn("t", fact), &q_neg)?)?;
                (q_neg, YesNo::No, None)
            } else {
                (Question::yn("t", fact), YesNo::Yes, Some(chain))
            };
            constraints.label_with(|f| closure.contains(f));
            Record {
                scene: gs.scene.clone(),
                question,
                gold: Answer::Yn(gold),
                chain,
                k: d,
                constraints,
                warnings: depth_warning(k, d),
            }
        } else {
            let ((subj, obj), d) = pick_by_depth(&pair_depth, &used_pairs, k, rng).ok_or(GenError::NoCandidate)?;
            used_pairs.insert((subj.clone(), obj.clone()));
            let question = Question::fr("t", subj.clone(), obj.clone());
            let answered = oracle.answer(&question).expect("entities come from the scene");
            let mut constraints = exact_label_constraints(&question)?;
            let mut deepest: Option<&QChain> = None;
            for chain in &answered.chains {
                let label = label_var("t", chain.target.rel);
                constraints.merge(chain_to_constraints(
                    &chain.relabel(&format!("{}.", chain.target.rel), &label),
                ))?;
                if deepest.is_none_or(|c| chain.depth() > c.depth()) {
                    deepest = Some(chain);
                }
            }
            constraints.label_with(|f| closure.contains(f));
            Record {
                scene: gs.scene.clone(),
                gold: answered.answer.clone(),
                chain: deepest.cloned(),
                question,
                k: d,
                constraints,
                warnings: depth_warning(k, d),
            }
        };
        out.push(record);
    }
    Ok(out)
}

/// `n_scenes` scenes with their questions, all drawn from one seeded stream.
pub fn generate(config: &GenConfig, kb: &RuleKb) -> Result<Vec<Record>, GenError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::new();
    for _ in 0..config.n_scenes {
        let cfg = match config.k_choices.choose(&mut rng) {
            Some(&k) => GenConfig {
                k_target: k,
                ..config.clone()
            },
            None => config.clone(),
        };
        let gs = generate_scene_with(&cfg, &mut rng)?;
        out.extend(generate_examples(&gs, &cfg, kb, &mut rng)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::default_kb;

    fn b(min: [i64; 3], max: [i64; 3]) -> Aabb {
        Aabb::new(min, max)
    }

    #[test]
    fn directional_margin() {
        let a = b([0, 0, 0], [2, 2, 2]);
        assert!(holds(Relation::Left, &a, &b([4, 0, 0], [6, 2, 2])));
        assert!(!holds(Relation::Left, &a, &b([3, 0, 0], [5, 2, 2])));
        assert!(holds(Relation::Right, &b([4, 0, 0], [6, 2, 2]), &a));
        assert!(holds(Relation::Above, &b([0, 5, 0], [2, 7, 2]), &a));
        assert!(holds(Relation::Behind, &b([0, 0, 4], [2, 2, 6]), &a));
        assert!(holds(Relation::Front, &a, &b([0, 0, 4], [2, 2, 6])));
    }

    #[test]
    fn topology_is_a_partition_for_distinct_boxes() {
        let a = b([0, 0, 0], [4, 4, 4]);
        let cases = [
            (b([6, 0, 0], [8, 2, 2]), Relation::Disconnected),
            (b([4, 0, 0], [6, 2, 2]), Relation::Touch),
            (b([3, 0, 0], [5, 2, 2]), Relation::Overlap),
            (b([1, 1, 1], [3, 3, 3]), Relation::Contain),
            (b([0, 1, 1], [2, 3, 3]), Relation::Cover),
            (b([-1, -1, -1], [5, 5, 5]), Relation::Inside),
            (b([0, 0, 0], [5, 5, 5]), Relation::CoveredBy),
        ];
        let topo = [
            Relation::Disconnected,
            Relation::Touch,
            Relation::Overlap,
            Relation::Inside,
            Relation::Contain,
            Relation::CoveredBy,
            Relation::Cover,
        ];
        for (other, expected) in cases {
            let held: Vec<Relation> = topo.iter().copied().filter(|&r| holds(r, &a, &other)).collect();
            assert_eq!(held, vec![expected], "{other:?}");
        }
    }

    #[test]
    fn distance_thresholds() {
        let a = b([0, 0, 0], [2, 2, 2]);
        assert!(holds(Relation::Near, &a, &b([2, 0, 0], [4, 2, 2])));
        assert!(!holds(Relation::Near, &a, &b([6, 0, 0], [8, 2, 2])));
        assert!(holds(Relation::Far, &a, &b([27, 0, 0], [29, 2, 2])));
        assert!(!holds(Relation::Far, &a, &b([26, 0, 0], [28, 2, 2])));
    }

    #[test]
    fn config_validation() {
        let bad = GenConfig {
            n_entities: 2,
            n_blocks: 0,
            k_target: 10,
            ..GenConfig::default()
        };
        assert!(matches!(bad.validate(), Err(GenError::Config(_))));
        assert!(GenConfig {
            k_target: 0,
            ..GenConfig::default()
        }
        .validate()
        .is_err());
        assert!(GenConfig {
            negative_ratio: 1.5,
            ..GenConfig::default()
        }
        .validate()
        .is_err());
        assert!(GenConfig::default().validate().is_ok());
    }

    #[test]
    fn minimal_instance() {
        let cfg = GenConfig {
            n_entities: 2,
            n_blocks: 0,
            k_target: 1,
            negative_ratio: 0.0,
            ..GenConfig::default()
        };
        let gs = generate_scene(&cfg).unwrap();
        assert_eq!(gs.scene.facts.len(), 1);
        let recs = generate(&cfg, &default_kb()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].k, 1);
        assert_eq!(recs[0].gold, Answer::Yn(YesNo::Yes));
    }

    #[test]
    fn revealed_facts_are_true() {
        for seed in 0..30 {
            let cfg = GenConfig {
                n_entities: 8,
                n_blocks: 3,
                k_target: 3,
                seed,
                ..GenConfig::default()
            };
            let gs = generate_scene(&cfg).unwrap();
            for f in &gs.scene.facts {
                assert!(gs.holds(f), "seed {seed}: {f}");
            }
            for (child, parent) in &gs.nesting {
                let (c, p) = (&gs.placements[child], &gs.placements[parent]);
                assert!(c.within(p));
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = GenConfig {
            n_entities: 7,
            n_blocks: 3,
            k_target: 4,
            seed: 11,
            question_mix: 0.5,
            questions_per_scene: 3,
            n_scenes: 2,
            ..GenConfig::default()
        };
        let a = serde_json::to_string(&generate(&cfg, &default_kb()).unwrap()).unwrap();
        let b = serde_json::to_string(&generate(&cfg, &default_kb()).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn labels_are_sound_and_constraints_gold_satisfied() {
        let kb = default_kb();
        for seed in 0..20 {
            let cfg = GenConfig {
                n_entities: 7,
                n_blocks: 3,
                k_target: 1 + (seed % 4) as u32,
                seed,
                question_mix: 0.6,
                questions_per_scene: 4,
                ..GenConfig::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gs = generate_scene_with(&cfg, &mut rng).unwrap();
            for r in generate_examples(&gs, &cfg, &kb, &mut rng).unwrap() {
                r.constraints.check().unwrap();
                let gold = r.constraints.gold_assignment();
                for c in &r.constraints.constraints {
                    assert_eq!(c.expr.eval_bool(&gold), Some(true), "seed {seed} {}", c.expr);
                }
                match (&r.question.kind, &r.gold) {
                    (crate::spatial::QuestionKind::Yn { fact }, Answer::Yn(g)) => {
                        assert_eq!(gs.holds(fact), g.is_yes(), "seed {seed}: {fact}");
                    }
                    (crate::spatial::QuestionKind::Fr { subj, obj }, Answer::Fr(rels)) => {
                        assert!(!rels.is_empty());
                        for &rel in rels {
                            assert!(gs.holds(&Fact::new(rel, subj.clone(), obj.clone()).unwrap()));
                        }
                    }
                    _ => panic!("answer kind mismatch"),
                }
                if r.warnings.is_empty() {
                    assert_eq!(r.k, cfg.k_target);
                }
            }
        }
    }
}
