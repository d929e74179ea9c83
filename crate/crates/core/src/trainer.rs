//! A hashed bag-of-tokens logistic model trained on task cross-entropy plus
//! λ-weighted constraint violations.
//!
//! Every truth variable of an example (the primary question and the chain
//! questions its constraints mention) gets a probability from the same
//! forward pass, so constraint gradients flow into the shared weights.
//! Only the primary question is supervised unless `supervise_all` is set.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::Hasher;

use fnv::FnvHasher;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::Deserializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{label_var, LogicExpr, Template};
use crate::render::{render_question, Entities};
use crate::scalar::Scalar;
use crate::scenegen::Record;
use crate::softlogic::{eval_product, ProbAssignment, SoftError, ViolationForm};
use crate::spatial::{Answer, Fact, Question, QuestionKind, Relation, Scene, YesNo};

pub const DEFAULT_DIM: usize = 4096;
pub const HASH_SEED: u64 = 0x5eed_cafe_f00d_0001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Yn,
    Fr,
}

/// Per-template constraint weights. Deserializes from a single number or a
/// map keyed by template name.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lambdas(pub BTreeMap<Template, f64>);

impl Lambdas {
    pub fn uniform(v: f64) -> Self {
        Lambdas(Template::ALL.iter().map(|&t| (t, v)).collect())
    }

    pub fn get(&self, t: Template) -> f64 {
        self.0.get(&t).copied().unwrap_or(0.0)
    }
}

impl Default for Lambdas {
    fn default() -> Self {
        Lambdas::uniform(1.0)
    }
}

impl<'de> Deserialize<'de> for Lambdas {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Uniform(f64),
            PerTemplate(BTreeMap<Template, f64>),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Uniform(v) => Lambdas::uniform(v),
            Raw::PerTemplate(m) => Lambdas(
                Template::ALL
                    .iter()
                    .map(|&t| (t, m.get(&t).copied().unwrap_or(0.0)))
                    .collect(),
            ),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: Lambdas,
    pub lr: f64,
    pub epochs: u32,
    pub seed: u64,
    /// Examples per gradient step; 0 means the whole dataset.
    pub batch_size: usize,
    pub dual_enabled: bool,
    pub dual_lr: f64,
    pub violation_form: ViolationForm,
    pub dim: usize,
    /// Also apply cross-entropy to chain questions, not only the primary one.
    pub supervise_all: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: Lambdas::default(),
            lr: 0.5,
            epochs: 20,
            seed: 0,
            batch_size: 16,
            dual_enabled: false,
            dual_lr: 0.1,
            violation_form: ViolationForm::OneMinus,
            dim: DEFAULT_DIM,
            supervise_all: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if let Some((t, v)) = self.lambda.0.iter().find(|(_, v)| v.is_nan() || **v < 0.0) {
            return bad(format!("lambda for {t} must be non-negative, got {v}"));
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if self.dual_enabled && (self.dual_lr.is_nan() || self.dual_lr < 0.0) {
            return bad(format!("dual_lr must be non-negative, got {}", self.dual_lr));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: u32 },
    #[error(transparent)]
    Soft(#[from] SoftError),
    #[error("example {index}: {message}")]
    Example { index: usize, message: String },
}

/// Linear logistic model over hashed features; one weight row per label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ToyModel<T: Scalar> {
    pub dim: usize,
    pub seed: u64,
    /// Single row scoring yes/no questions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yn: Option<Vec<T>>,
    /// One row per relation, in relation index order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fr: Option<Vec<Vec<T>>>,
}

impl<T: Scalar> ToyModel<T> {
    pub fn zeros(dim: usize, heads: &BTreeSet<Head>) -> Self {
        ToyModel {
            dim,
            seed: HASH_SEED,
            yn: heads.contains(&Head::Yn).then(|| vec![T::zero(); dim]),
            fr: heads
                .contains(&Head::Fr)
                .then(|| vec![vec![T::zero(); dim]; Relation::ALL.len()]),
        }
    }

    fn row(&self, r: RowRef) -> Option<&[T]> {
        match r {
            RowRef::Yn => self.yn.as_deref(),
            RowRef::Fr(i) => self.fr.as_ref().map(|rows| rows[i].as_slice()),
        }
    }

    fn row_mut(&mut self, r: RowRef) -> &mut [T] {
        match r {
            RowRef::Yn => self.yn.as_mut().expect("yes/no head present"),
            RowRef::Fr(i) => &mut self.fr.as_mut().expect("find-relation head present")[i],
        }
    }

    /// All weights, yes/no row first.
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::new();
        if let Some(r) = &self.yn {
            out.extend_from_slice(r);
        }
        for r in self.fr.iter().flatten() {
            out.extend_from_slice(r);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[T]) {
        let mut it = flat.iter().copied();
        if let Some(r) = &mut self.yn {
            r.iter_mut().for_each(|w| *w = it.next().unwrap());
        }
        for r in self.fr.iter_mut().flatten() {
            r.iter_mut().for_each(|w| *w = it.next().unwrap());
        }
    }

    fn score(&self, v: &Variable<T>) -> T {
        let Some(row) = self.row(v.row) else { return T::zero() };
        v.feats.iter().fold(T::zero(), |acc, &(i, x)| acc + row[i as usize] * x)
    }

    /// Probability that `fact` holds, as the head used for `head` questions sees it.
    pub fn prob(&self, fact: &Fact, scene: &Scene, head: Head) -> T {
        let ctx = Context::new(scene);
        sigmoid(self.score(&variable(String::new(), fact, head, &ctx, self.dim, self.seed)))
    }
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum RowRef {
    Yn,
    Fr(usize),
}

#[derive(Clone, Debug)]
struct Variable<T> {
    id: String,
    row: RowRef,
    feats: Vec<(u32, T)>,
}

/// Story facts seen from each entity: (relation from its side, other entity).
struct Context<'a> {
    scene: &'a Scene,
    around: BTreeMap<&'a str, Vec<(Relation, &'a str)>>,
}

impl<'a> Context<'a> {
    fn new(scene: &'a Scene) -> Self {
        let mut around: BTreeMap<&str, Vec<(Relation, &str)>> = BTreeMap::new();
        for f in &scene.facts {
            around.entry(&f.subj).or_default().push((f.rel, &f.obj));
            around.entry(&f.obj).or_default().push((f.rel.converse(), &f.subj));
        }
        Context { scene, around }
    }
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Feature tokens for `fact` asked through `head`.
fn feature_tokens(fact: &Fact, head: Head, ctx: &Context<'_>) -> Vec<String> {
    let ents = Entities::of(ctx.scene);
    let (question, tag) = match head {
        Head::Yn => (Question::yn("", fact.clone()), fact.rel.as_str()),
        Head::Fr => (Question::fr("", fact.subj.clone(), fact.obj.clone()), ""),
    };
    let mut out = vec!["bias".to_string()];
    out.extend(tokens(&render_question(&question, ents)).map(|t| format!("w:{t}")));
    for (role, id, other) in [("s", &fact.subj, &fact.obj), ("o", &fact.obj, &fact.subj)] {
        for &(rel, peer) in ctx.around.get(id.as_str()).into_iter().flatten() {
            if peer == other.as_str() {
                if role == "s" {
                    out.push(format!("d:{tag}>{rel}"));
                }
            } else {
                out.push(format!("{role}:{tag}>{rel}"));
            }
        }
    }
    out
}

fn hash_token(token: &str, seed: u64, dim: usize) -> u32 {
    let mut h = FnvHasher::with_key(seed);
    h.write(token.as_bytes());
    (h.finish() % dim as u64) as u32
}

fn variable<T: Scalar>(id: String, fact: &Fact, head: Head, ctx: &Context<'_>, dim: usize, seed: u64) -> Variable<T> {
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for t in feature_tokens(fact, head, ctx) {
        *counts.entry(hash_token(&t, seed, dim)).or_insert(0.0) += 1.0;
    }
    let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
    let row = match head {
        Head::Yn => RowRef::Yn,
        Head::Fr => RowRef::Fr(fact.rel.index()),
    };
    Variable {
        id,
        row,
        feats: counts.into_iter().map(|(i, c)| (i, T::lit(c / norm))).collect(),
    }
}

/// A record compiled against a feature space.
#[derive(Clone, Debug)]
pub struct Encoded<T> {
    head: Head,
    vars: Vec<Variable<T>>,
    /// (variable index, gold in {0, 1}) pairs under cross-entropy.
    supervised: Vec<(usize, T)>,
    /// Variables scored for accuracy, with gold.
    primary: Vec<(usize, bool)>,
    constraints: Vec<(Template, LogicExpr)>,
}

impl<T: Scalar> Encoded<T> {
    pub fn head(&self) -> Head {
        self.head
    }
}

/// Compiles `record` for a model of dimension `dim`.
pub fn encode<T: Scalar>(record: &Record, dim: usize, supervise_all: bool) -> Result<Encoded<T>, String> {
    let ctx = Context::new(&record.scene);
    let mut vars: Vec<Variable<T>> = Vec::new();
    let add = |id: String, fact: &Fact, head: Head, vars: &mut Vec<Variable<T>>| -> (usize, bool) {
        if let Some(i) = vars.iter().position(|v| v.id == id) {
            return (i, false);
        }
        vars.push(variable(id, fact, head, &ctx, dim, HASH_SEED));
        (vars.len() - 1, true)
    };
    let (head, primary) = match (&record.question.kind, &record.gold) {
        (QuestionKind::Yn { fact }, Answer::Yn(g)) => {
            let (i, _) = add(record.question.id.clone(), fact, Head::Yn, &mut vars);
            (Head::Yn, vec![(i, g.is_yes())])
        }
        (QuestionKind::Fr { subj, obj }, Answer::Fr(gold)) => {
            let mut primary = Vec::new();
            for rel in Relation::ALL {
                let fact = Fact::new(rel, subj.clone(), obj.clone()).map_err(|e| e.to_string())?;
                let (i, _) = add(label_var(&record.question.id, rel), &fact, Head::Fr, &mut vars);
                primary.push((i, gold.contains(&rel)));
            }
            (Head::Fr, primary)
        }
        _ => return Err("answer kind does not match question kind".into()),
    };
    let mut supervised: Vec<(usize, T)> = primary
        .iter()
        .map(|&(i, g)| (i, if g { T::one() } else { T::zero() }))
        .collect();
    for q in &record.constraints.questions {
        let (i, fresh) = add(q.id.clone(), &q.fact, head, &mut vars);
        if supervise_all && fresh {
            if let Some(g) = q.gold {
                supervised.push((i, if g == YesNo::Yes { T::one() } else { T::zero() }));
            }
        }
    }
    let constraints = record
        .constraints
        .constraints
        .iter()
        .map(|c| (c.template, c.expr.clone()))
        .collect();
    Ok(Encoded {
        head,
        vars,
        supervised,
        primary,
        constraints,
    })
}

/// Loss terms of one example.
#[derive(Clone, Debug, PartialEq)]
pub struct LossParts<T> {
    pub task: T,
    pub constraint: T,
    /// Violation summed per template, whatever the weights.
    pub violations: BTreeMap<Template, (T, usize)>,
}

impl<T: Scalar> LossParts<T> {
    pub fn total(&self) -> T {
        self.task + self.constraint
    }
}

fn probabilities<T: Scalar>(model: &ToyModel<T>, ex: &Encoded<T>) -> (Vec<T>, ProbAssignment<T>) {
    let p: Vec<T> = ex.vars.iter().map(|v| sigmoid(model.score(v))).collect();
    let assignment = ex.vars.iter().zip(&p).map(|(v, &p)| (v.id.clone(), p)).collect();
    (p, assignment)
}

/// Loss of `ex` under `model` and its gradient, shaped like the model.
/// Templates with zero weight are measured but add nothing to loss or gradient.
pub fn combined_loss<T: Scalar>(
    model: &ToyModel<T>,
    ex: &Encoded<T>,
    lambda: &Lambdas,
    form: ViolationForm,
    with_grad: bool,
) -> Result<(LossParts<T>, Option<ToyModel<T>>), SoftError> {
    let z: Vec<T> = ex.vars.iter().map(|v| model.score(v)).collect();
    let (p, assignment) = probabilities(model, ex);
    let mut dz = vec![T::zero(); ex.vars.len()];
    let mut task = T::zero();
    for &(i, g) in &ex.supervised {
        task = task + softplus(z[i]) - g * z[i];
        dz[i] = dz[i] + p[i] - g;
    }
    let mut constraint = T::zero();
    let mut violations = BTreeMap::new();
    let var_index: BTreeMap<&str, usize> = ex.vars.iter().enumerate().map(|(i, v)| (v.id.as_str(), i)).collect();
    for (template, expr) in &ex.constraints {
        let eval = eval_product(expr, &assignment)?;
        let h = form.apply(eval.value);
        let entry = violations.entry(*template).or_insert((T::zero(), 0));
        entry.0 = entry.0 + h;
        entry.1 += 1;
        let weight = lambda.get(*template);
        if weight == 0.0 {
            continue;
        }
        let w = T::lit(weight);
        constraint = constraint + w * h;
        if with_grad {
            let dh = form.derivative(eval.value);
            for (id, g) in &eval.grad {
                let i = var_index[id.as_str()];
                dz[i] = dz[i] + w * dh * *g * p[i] * (T::one() - p[i]);
            }
        }
    }
    let grad = with_grad.then(|| {
        let mut g = ToyModel {
            dim: model.dim,
            seed: model.seed,
            yn: model.yn.as_ref().map(|r| vec![T::zero(); r.len()]),
            fr: model
                .fr
                .as_ref()
                .map(|rows| vec![vec![T::zero(); model.dim]; rows.len()]),
        };
        for (v, &d) in ex.vars.iter().zip(&dz) {
            if d == T::zero() || model.row(v.row).is_none() {
                continue;
            }
            let row = g.row_mut(v.row);
            for &(i, x) in &v.feats {
                row[i as usize] = row[i as usize] + d * x;
            }
        }
        g
    });
    Ok((
        LossParts {
            task,
            constraint,
            violations,
        },
        grad,
    ))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub satisfied: usize,
    pub total: usize,
    pub rate: f64,
}

impl Rate {
    fn add(&mut self, ok: bool) {
        self.total += 1;
        self.satisfied += ok as usize;
        self.rate = self.satisfied as f64 / self.total as f64;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub examples: usize,
    pub accuracy: f64,
    pub consistency_rate: f64,
    pub consistency: Rate,
    pub per_template: BTreeMap<Template, Rate>,
}

/// Accuracy on primary questions (exact label set for find-relation) and
/// the share of constraints satisfied by predictions thresholded at 0.5.
pub fn evaluate_encoded<T: Scalar>(model: &ToyModel<T>, data: &[Encoded<T>]) -> Metrics {
    let half = T::lit(0.5);
    let mut correct = 0usize;
    let mut overall = Rate::default();
    let mut per_template: BTreeMap<Template, Rate> = BTreeMap::new();
    for ex in data {
        let (p, _) = probabilities(model, ex);
        if ex.primary.iter().all(|&(i, g)| (p[i] >= half) == g) {
            correct += 1;
        }
        let env: BTreeMap<String, bool> = ex
            .vars
            .iter()
            .zip(&p)
            .map(|(v, &p)| (v.id.clone(), p >= half))
            .collect();
        for (template, expr) in &ex.constraints {
            let ok = expr.eval_bool(&env).unwrap_or(false);
            overall.add(ok);
            per_template.entry(*template).or_default().add(ok);
        }
    }
    let consistency_rate = if overall.total == 0 { 1.0 } else { overall.rate };
    Metrics {
        examples: data.len(),
        accuracy: if data.is_empty() {
            0.0
        } else {
            correct as f64 / data.len() as f64
        },
        consistency_rate,
        consistency: overall,
        per_template,
    }
}

pub fn evaluate<T: Scalar>(model: &ToyModel<T>, records: &[Record]) -> Result<Metrics, TrainError> {
    let data = encode_all::<T>(records, model.dim, false)?;
    Ok(evaluate_encoded(model, &data))
}

pub fn encode_all<T: Scalar>(
    records: &[Record],
    dim: usize,
    supervise_all: bool,
) -> Result<Vec<Encoded<T>>, TrainError> {
    records
        .iter()
        .enumerate()
        .map(|(index, r)| encode(r, dim, supervise_all).map_err(|message| TrainError::Example { index, message }))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: u32,
    pub task_loss: f64,
    pub constraint_loss: f64,
    pub accuracy: f64,
    pub consistency_rate: f64,
    pub lambda: BTreeMap<Template, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub epochs: Vec<EpochStats>,
    pub final_metrics: Metrics,
}

/// Mini-batch gradient descent from zero weights.
pub fn train<T: Scalar>(records: &[Record], config: &TrainConfig) -> Result<(ToyModel<T>, TrainReport), TrainError> {
    config.validate()?;
    let data = encode_all::<T>(records, config.dim, config.supervise_all)?;
    train_encoded(&data, config)
}

pub fn train_encoded<T: Scalar>(
    data: &[Encoded<T>],
    config: &TrainConfig,
) -> Result<(ToyModel<T>, TrainReport), TrainError> {
    config.validate()?;
    let heads: BTreeSet<Head> = data.iter().map(|e| e.head).collect();
    let mut model = ToyModel::<T>::zeros(config.dim, &heads);
    let mut lambda = config.lambda.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch = if config.batch_size == 0 {
        data.len().max(1)
    } else {
        config.batch_size
    };
    let lr = T::lit(config.lr);
    let mut epochs = Vec::new();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut task_sum = T::zero();
        let mut cons_sum = T::zero();
        let mut template_h: BTreeMap<Template, (T, usize)> = BTreeMap::new();
        for chunk in order.chunks(batch) {
            let mut acc: Option<Vec<T>> = None;
            for &i in chunk {
                let (parts, grad) = combined_loss(&model, &data[i], &lambda, config.violation_form, true)?;
                task_sum = task_sum + parts.task;
                cons_sum = cons_sum + parts.constraint;
                for (t, (h, n)) in parts.violations {
                    let e = template_h.entry(t).or_insert((T::zero(), 0));
                    e.0 = e.0 + h;
                    e.1 += n;
                }
                let g = grad.expect("gradient requested").params();
                match &mut acc {
                    None => acc = Some(g),
                    Some(a) => a.iter_mut().zip(g).for_each(|(a, g)| *a = *a + g),
                }
            }
            if !(task_sum + cons_sum).is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch });
            }
            if let Some(g) = acc {
                let scale = lr / T::lit(chunk.len() as f64);
                let mut w = model.params();
                w.iter_mut().zip(&g).for_each(|(w, g)| *w = *w - scale * *g);
                model.set_params(&w);
            }
        }
        if config.dual_enabled {
            for (t, (h, n)) in &template_h {
                let mean = h.as_f64() / *n as f64;
                let v = lambda.0.entry(*t).or_insert(0.0);
                *v = (*v + config.dual_lr * mean).max(0.0);
            }
        }
        let m = evaluate_encoded(&model, data);
        let n = data.len().max(1) as f64;
        epochs.push(EpochStats {
            epoch,
            task_loss: task_sum.as_f64() / n,
            constraint_loss: cons_sum.as_f64() / n,
            accuracy: m.accuracy,
            consistency_rate: m.consistency_rate,
            lambda: lambda.0.clone(),
        });
    }
    let final_metrics = evaluate_encoded(&model, data);
    Ok((
        model,
        TrainReport {
            seed: config.seed,
            epochs,
            final_metrics,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{ConstraintSet, QuestionEntry};
    use crate::kb::default_kb;
    use crate::scenegen::{generate, GenConfig};
    use crate::spatial::parse_fact;

    fn f(s: &str) -> Fact {
        parse_fact(s).unwrap()
    }

    fn dataset(n: u32, seed: u64) -> Vec<Record> {
        let cfg = GenConfig {
            n_entities: 6,
            n_blocks: 2,
            k_target: 2,
            seed,
            n_scenes: n,
            ..GenConfig::default()
        };
        generate(&cfg, &default_kb()).unwrap()
    }

    fn strip(records: &[Record]) -> Vec<Record> {
        records
            .iter()
            .map(|r| Record {
                constraints: ConstraintSet {
                    questions: r.constraints.questions.clone(),
                    constraints: vec![],
                },
                ..r.clone()
            })
            .collect()
    }

    #[test]
    fn no_constraints_means_plain_cross_entropy() {
        let recs = strip(&dataset(3, 1));
        let ex: Encoded<f64> = encode(&recs[0], 64, false).unwrap();
        let model = ToyModel::<f64>::zeros(64, &BTreeSet::from([Head::Yn]));
        let (parts, _) = combined_loss(&model, &ex, &Lambdas::uniform(1.0), ViolationForm::OneMinus, false).unwrap();
        assert!((parts.task - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(parts.constraint, 0.0);
    }

    #[test]
    fn clamped_implication_adds_half() {
        // one-hot features so each question's probability is set by one weight
        let scene = Scene::from_facts(vec![f("left(a,b)"), f("left(b,c)")]);
        let record = Record {
            scene,
            question: Question::yn("q3", f("left(a,c)")),
            gold: Answer::Yn(YesNo::Yes),
            chain: None,
            k: 1,
            constraints: ConstraintSet {
                questions: vec![
                    QuestionEntry {
                        id: "q1".into(),
                        fact: f("left(a,b)"),
                        gold: None,
                    },
                    QuestionEntry {
                        id: "q3".into(),
                        fact: f("left(a,c)"),
                        gold: None,
                    },
                ],
                constraints: vec![crate::constraints::Constraint {
                    id: "c1".into(),
                    template: Template::Symmetric,
                    expr: LogicExpr::implies(LogicExpr::var("q1"), LogicExpr::var("q3")),
                }],
            },
            warnings: vec![],
        };
        let mut ex: Encoded<f64> = encode(&record, 4, false).unwrap();
        ex.vars[0].feats = vec![(0, 1.0)];
        ex.vars[1].feats = vec![(1, 1.0)];
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let mut model = ToyModel::<f64>::zeros(4, &BTreeSet::from([Head::Yn]));
        model.yn = Some(vec![logit(0.45), logit(0.9), 0.0, 0.0]);
        let on = combined_loss(&model, &ex, &Lambdas::uniform(1.0), ViolationForm::OneMinus, false)
            .unwrap()
            .0;
        let off = combined_loss(&model, &ex, &Lambdas::uniform(0.0), ViolationForm::OneMinus, false)
            .unwrap()
            .0;
        assert!((on.total() - off.total() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lambda_zero_matches_stripped_training_bitwise() {
        let recs = dataset(20, 3);
        let cfg = TrainConfig {
            lambda: Lambdas::uniform(0.0),
            epochs: 3,
            dim: 256,
            ..TrainConfig::default()
        };
        let (a, ra) = train::<f64>(&recs, &cfg).unwrap();
        let (b, _) = train::<f64>(&strip(&recs), &cfg).unwrap();
        let bits = |m: &ToyModel<f64>| m.params().iter().map(|w| w.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert!(ra.epochs.iter().all(|e| e.constraint_loss == 0.0));
    }

    #[test]
    fn dual_ascent_is_idle_when_satisfied_and_nonnegative() {
        let recs = dataset(10, 4);
        let cfg = TrainConfig {
            dual_enabled: true,
            epochs: 3,
            dim: 128,
            ..TrainConfig::default()
        };
        let (_, report) = train::<f64>(&recs, &cfg).unwrap();
        for e in &report.epochs {
            assert!(e.lambda.values().all(|v| *v >= 0.0));
        }
        // with no constraints at all there is nothing to violate
        let (_, idle) = train::<f64>(&strip(&recs), &cfg).unwrap();
        assert!(idle.epochs.iter().all(|e| e.lambda == Lambdas::uniform(1.0).0));
    }

    #[test]
    fn full_batch_loss_does_not_increase() {
        // the constraint term has kinks where a ≤ b turns into b/a, so only
        // the smooth task objective is expected to decrease monotonically
        let recs = dataset(30, 5);
        let cfg = TrainConfig {
            lambda: Lambdas::uniform(0.0),
            epochs: 10,
            batch_size: 0,
            lr: 0.05,
            dim: 512,
            ..TrainConfig::default()
        };
        let (_, report) = train::<f64>(&recs, &cfg).unwrap();
        let totals: Vec<f64> = report.epochs.iter().map(|e| e.task_loss + e.constraint_loss).collect();
        for w in totals.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{totals:?}");
        }
    }

    #[test]
    fn gold_predictions_are_consistent() {
        let recs = dataset(10, 6);
        let data: Vec<Encoded<f64>> = encode_all(&recs, 64, false).unwrap();
        for (ex, r) in data.iter().zip(&recs) {
            let gold = r.constraints.gold_assignment();
            let env: BTreeMap<String, bool> = ex
                .vars
                .iter()
                .map(|v| (v.id.clone(), gold.get(&v.id).copied().unwrap_or(false)))
                .collect();
            assert!(ex.constraints.iter().all(|(_, e)| e.eval_bool(&env) == Some(true)));
        }
    }

    #[test]
    fn config_validation_and_lambda_forms() {
        assert!(TrainConfig {
            lr: 0.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            lambda: Lambdas::uniform(-1.0),
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        let c: TrainConfig = serde_json::from_str(r#"{"lambda": 0.5}"#).unwrap();
        assert_eq!(c.lambda.get(Template::ExactL), 0.5);
        let c: TrainConfig = serde_json::from_str(r#"{"lambda": {"reverse": 2.0}}"#).unwrap();
        assert_eq!(c.lambda.get(Template::Reverse), 2.0);
        assert_eq!(c.lambda.get(Template::Transitive), 0.0);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"lamda": 1}"#).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let recs = dataset(5, 7);
        let cfg = TrainConfig {
            epochs: 2,
            dim: 32,
            ..TrainConfig::default()
        };
        let (m, _) = train::<f64>(&recs, &cfg).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let back: ToyModel<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        let (m32, _) = train::<f32>(&recs, &cfg).unwrap();
        assert!(m32.params().iter().all(|w| w.is_finite()));
    }
}
