//! Logical consistency constraints over question truth variables.
//!
//! Expressions serialize as prefix arrays: `["=>", ["var","q1"], ["var","q3"]]`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::inference::{chain_to_questions, QChain};
use crate::spatial::{Fact, Question, QuestionKind, Relation, YesNo};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Value", into = "Value")]
pub enum LogicExpr {
    Var(String),
    Not(Box<LogicExpr>),
    And(Vec<LogicExpr>),
    Or(Vec<LogicExpr>),
    Implies(Box<LogicExpr>, Box<LogicExpr>),
}

impl LogicExpr {
    pub fn var(id: impl Into<String>) -> Self {
        LogicExpr::Var(id.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(e: LogicExpr) -> Self {
        LogicExpr::Not(Box::new(e))
    }

    pub fn implies(a: LogicExpr, b: LogicExpr) -> Self {
        LogicExpr::Implies(Box::new(a), Box::new(b))
    }

    /// Variable ids in first-occurrence order, without repeats.
    pub fn vars(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        self.walk_vars(&mut |v| {
            if seen.insert(v) {
                out.push(v);
            }
        });
        out
    }

    fn walk_vars<'a>(&'a self, f: &mut dyn FnMut(&'a str)) {
        match self {
            LogicExpr::Var(v) => f(v),
            LogicExpr::Not(e) => e.walk_vars(f),
            LogicExpr::And(es) | LogicExpr::Or(es) => es.iter().for_each(|e| e.walk_vars(f)),
            LogicExpr::Implies(a, b) => {
                a.walk_vars(f);
                b.walk_vars(f);
            }
        }
    }

    /// Classical two-valued evaluation; `None` if a variable is unassigned.
    pub fn eval_bool(&self, env: &BTreeMap<String, bool>) -> Option<bool> {
        Some(match self {
            LogicExpr::Var(v) => *env.get(v)?,
            LogicExpr::Not(e) => !e.eval_bool(env)?,
            LogicExpr::And(es) => {
                let mut all = true;
                for e in es {
                    all &= e.eval_bool(env)?;
                }
                all
            }
            LogicExpr::Or(es) => {
                let mut any = false;
                for e in es {
                    any |= e.eval_bool(env)?;
                }
                any
            }
            LogicExpr::Implies(a, b) => !a.eval_bool(env)? || b.eval_bool(env)?,
        })
    }

    pub fn size(&self) -> usize {
        match self {
            LogicExpr::Var(_) => 1,
            LogicExpr::Not(e) => 1 + e.size(),
            LogicExpr::And(es) | LogicExpr::Or(es) => 1 + es.iter().map(LogicExpr::size).sum::<usize>(),
            LogicExpr::Implies(a, b) => 1 + a.size() + b.size(),
        }
    }

    pub fn to_value(&self) -> Value {
        match self {
            LogicExpr::Var(v) => json!(["var", v]),
            LogicExpr::Not(e) => json!(["not", e.to_value()]),
            LogicExpr::And(es) | LogicExpr::Or(es) => {
                let op = if matches!(self, LogicExpr::And(_)) { "and" } else { "or" };
                let mut items = vec![json!(op)];
                items.extend(es.iter().map(LogicExpr::to_value));
                Value::Array(items)
            }
            LogicExpr::Implies(a, b) => json!(["=>", a.to_value(), b.to_value()]),
        }
    }

    pub fn from_value(value: &Value) -> Result<Self, ExprError> {
        let items = value
            .as_array()
            .ok_or_else(|| ExprError(format!("expected an array, found {value}")))?;
        let (head, args) = items
            .split_first()
            .ok_or_else(|| ExprError("empty expression".into()))?;
        let op = head
            .as_str()
            .ok_or_else(|| ExprError(format!("operator must be a string, found {head}")))?;
        let sub = |v: &Value| LogicExpr::from_value(v);
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(ExprError(format!("`{op}` takes {n} argument(s), found {}", args.len())))
            }
        };
        match op {
            "var" => {
                arity(1)?;
                let id = args[0]
                    .as_str()
                    .ok_or_else(|| ExprError(format!("variable id must be a string, found {}", args[0])))?;
                Ok(LogicExpr::Var(id.to_string()))
            }
            "not" => {
                arity(1)?;
                Ok(LogicExpr::not(sub(&args[0])?))
            }
            "=>" => {
                arity(2)?;
                Ok(LogicExpr::implies(sub(&args[0])?, sub(&args[1])?))
            }
            "and" | "or" => {
                if args.is_empty() {
                    return Err(ExprError(format!("`{op}` needs at least one argument")));
                }
                let es = args.iter().map(sub).collect::<Result<Vec<_>, _>>()?;
                Ok(if op == "and" {
                    LogicExpr::And(es)
                } else {
                    LogicExpr::Or(es)
                })
            }
            other => Err(ExprError(format!("unknown operator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed expression: {0}")]
pub struct ExprError(pub String);

impl TryFrom<Value> for LogicExpr {
    type Error = ExprError;

    fn try_from(value: Value) -> Result<Self, Self::Error> {
        LogicExpr::from_value(&value)
    }
}

impl From<LogicExpr> for Value {
    fn from(e: LogicExpr) -> Value {
        e.to_value()
    }
}

impl fmt::Display for LogicExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, es: &[LogicExpr], sep: &str| {
            write!(f, "(")?;
            for (i, e) in es.iter().enumerate() {
                if i > 0 {
                    write!(f, " {sep} ")?;
                }
                write!(f, "{e}")?;
            }
            write!(f, ")")
        };
        match self {
            LogicExpr::Var(v) => write!(f, "T({v})"),
            LogicExpr::Not(e) => write!(f, "¬{e}"),
            LogicExpr::And(es) => join(f, es, "∧"),
            LogicExpr::Or(es) => join(f, es, "∨"),
            LogicExpr::Implies(a, b) => write!(f, "({a} ⇒ {b})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Template {
    #[serde(rename = "symmetric")]
    Symmetric,
    #[serde(rename = "reverse")]
    Reverse,
    #[serde(rename = "transitive")]
    Transitive,
    #[serde(rename = "transitive_topo")]
    TransitiveTopo,
    #[serde(rename = "exactL")]
    ExactL,
}

impl Template {
    pub const ALL: [Template; 5] = [
        Template::Symmetric,
        Template::Reverse,
        Template::Transitive,
        Template::TransitiveTopo,
        Template::ExactL,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Template::Symmetric => "symmetric",
            Template::Reverse => "reverse",
            Template::Transitive => "transitive",
            Template::TransitiveTopo => "transitive_topo",
            Template::ExactL => "exactL",
        }
    }

    /// Template for a rule application with `n` premises.
    pub fn for_premise_count(n: usize) -> Option<Template> {
        match n {
            1 => Some(Template::Symmetric),
            2 => Some(Template::Transitive),
            3 => Some(Template::TransitiveTopo),
            _ => None,
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Template {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Template::ALL
            .into_iter()
            .find(|t| t.as_str() == s.trim())
            .ok_or_else(|| format!("unknown template `{s}`"))
    }
}

/// A truth variable: the yes/no question "does `fact` hold?".
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionEntry {
    pub id: String,
    pub fact: Fact,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<YesNo>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub id: String,
    pub template: Template,
    pub expr: LogicExpr,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSet")]
pub struct ConstraintSet {
    pub questions: Vec<QuestionEntry>,
    pub constraints: Vec<Constraint>,
}

#[derive(Deserialize)]
struct RawSet {
    #[serde(default)]
    questions: Vec<QuestionEntry>,
    #[serde(default)]
    constraints: Vec<Constraint>,
}

impl TryFrom<RawSet> for ConstraintSet {
    type Error = ConstraintError;

    fn try_from(raw: RawSet) -> Result<Self, Self::Error> {
        let set = ConstraintSet {
            questions: raw.questions,
            constraints: raw.constraints,
        };
        set.check()?;
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConstraintError {
    #[error("{0} and {1} are not an exclusive relation pair")]
    NotAnOppositePair(Relation, Relation),
    #[error("`{0}` and `{1}` must ask about the same ordered entity pair")]
    DifferentArguments(String, String),
    #[error("question `{0}` is not a yes/no question")]
    NotYesNo(String),
    #[error("question `{0}` is not a find-relation question")]
    NotFindRelation(String),
    #[error("duplicate question id `{0}`")]
    DuplicateQuestion(String),
    #[error("duplicate constraint id `{0}`")]
    DuplicateConstraint(String),
    #[error("question id `{id}` is used for both {first} and {second}")]
    ConflictingQuestion {
        id: String,
        first: Box<Fact>,
        second: Box<Fact>,
    },
    #[error("constraint `{constraint}` refers to unknown question `{var}`")]
    DanglingVariable { constraint: String, var: String },
}

/// Id of the truth variable for label `rel` of find-relation question `qid`.
pub fn label_var(qid: &str, rel: Relation) -> String {
    format!("{qid}.{rel}")
}

impl ConstraintSet {
    /// Unique ids and no dangling variables.
    pub fn check(&self) -> Result<(), ConstraintError> {
        let mut qids = BTreeSet::new();
        for q in &self.questions {
            if !qids.insert(q.id.as_str()) {
                return Err(ConstraintError::DuplicateQuestion(q.id.clone()));
            }
        }
        let mut cids = BTreeSet::new();
        for c in &self.constraints {
            if !cids.insert(c.id.as_str()) {
                return Err(ConstraintError::DuplicateConstraint(c.id.clone()));
            }
            for v in c.expr.vars() {
                if !qids.contains(v) {
                    return Err(ConstraintError::DanglingVariable {
                        constraint: c.id.clone(),
                        var: v.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn question(&self, id: &str) -> Option<&QuestionEntry> {
        self.questions.iter().find(|q| q.id == id)
    }

    fn push(&mut self, template: Template, expr: LogicExpr) {
        let id = format!("c{}", self.constraints.len() + 1);
        self.constraints.push(Constraint { id, template, expr });
    }

    /// Appends `other`: questions are merged by id (a known gold label wins
    /// over an unknown one), constraints are renumbered after ours.
    pub fn merge(&mut self, other: ConstraintSet) -> Result<(), ConstraintError> {
        for q in other.questions {
            match self.questions.iter_mut().find(|e| e.id == q.id) {
                Some(existing) if existing.fact != q.fact => {
                    return Err(ConstraintError::ConflictingQuestion {
                        id: q.id,
                        first: Box::new(existing.fact.clone()),
                        second: Box::new(q.fact),
                    })
                }
                Some(existing) => {
                    if existing.gold.is_none() {
                        existing.gold = q.gold;
                    }
                }
                None => self.questions.push(q),
            }
        }
        for c in other.constraints {
            self.push(c.template, c.expr);
        }
        Ok(())
    }

    /// Sets gold labels from a truth function over facts.
    pub fn label_with(&mut self, mut truth: impl FnMut(&Fact) -> bool) {
        for q in &mut self.questions {
            q.gold = Some(YesNo::from_bool(truth(&q.fact)));
        }
    }

    /// Gold labels as booleans, for questions that have one.
    pub fn gold_assignment(&self) -> BTreeMap<String, bool> {
        self.questions
            .iter()
            .filter_map(|q| q.gold.map(|g| (q.id.clone(), g.is_yes())))
            .collect()
    }

    pub fn count_by_template(&self) -> BTreeMap<Template, usize> {
        let mut out = BTreeMap::new();
        for c in &self.constraints {
            *out.entry(c.template).or_insert(0) += 1;
        }
        out
    }

    pub fn retain_templates(&mut self, keep: impl Fn(Template) -> bool) {
        let kept: Vec<Constraint> = self.constraints.drain(..).filter(|c| keep(c.template)).collect();
        for c in kept {
            self.push(c.template, c.expr);
        }
    }
}

/// One implication per rule application in `chain`, premises to conclusion.
pub fn chain_to_constraints(chain: &QChain) -> ConstraintSet {
    let mut set = ConstraintSet {
        questions: chain_to_questions(chain)
            .into_iter()
            .map(|(q, gold)| match q.kind {
                QuestionKind::Yn { fact } => QuestionEntry {
                    id: q.id,
                    fact,
                    gold: Some(gold),
                },
                QuestionKind::Fr { .. } => unreachable!("chain questions are yes/no"),
            })
            .collect(),
        constraints: Vec::new(),
    };
    for step in chain.rule_steps() {
        let Some(template) = Template::for_premise_count(step.premises.len()) else {
            continue;
        };
        let body = match step.premises.as_slice() {
            [p] => LogicExpr::var(p),
            ps => LogicExpr::And(ps.iter().map(LogicExpr::var).collect()),
        };
        set.push(template, LogicExpr::implies(body, LogicExpr::var(&step.id)));
    }
    set
}

fn yn_fact(q: &Question) -> Result<&Fact, ConstraintError> {
    match &q.kind {
        QuestionKind::Yn { fact } => Ok(fact),
        QuestionKind::Fr { .. } => Err(ConstraintError::NotYesNo(q.id.clone())),
    }
}

/// `T(pos) ⇒ ¬T(neg)` and `¬T(pos) ⇒ T(neg)` for a question and its opposite.
pub fn reverse_pair_constraints(q_pos: &Question, q_neg: &Question) -> Result<ConstraintSet, ConstraintError> {
    let (fp, fn_) = (yn_fact(q_pos)?, yn_fact(q_neg)?);
    if fp.rel.opposite() != Some(fn_.rel) {
        return Err(ConstraintError::NotAnOppositePair(fp.rel, fn_.rel));
    }
    if (&fp.subj, &fp.obj) != (&fn_.subj, &fn_.obj) {
        return Err(ConstraintError::DifferentArguments(q_pos.id.clone(), q_neg.id.clone()));
    }
    let mut set = ConstraintSet {
        questions: vec![
            QuestionEntry {
                id: q_pos.id.clone(),
                fact: fp.clone(),
                gold: None,
            },
            QuestionEntry {
                id: q_neg.id.clone(),
                fact: fn_.clone(),
                gold: None,
            },
        ],
        constraints: Vec::new(),
    };
    let (p, n) = (LogicExpr::var(&q_pos.id), LogicExpr::var(&q_neg.id));
    set.push(
        Template::Reverse,
        LogicExpr::implies(p.clone(), LogicExpr::not(n.clone())),
    );
    set.push(Template::Reverse, LogicExpr::implies(LogicExpr::not(p), n));
    Ok(set)
}

/// Per-label truth variables for a find-relation question plus one mutual
/// exclusion `¬(A ∧ B)` per exclusive relation pair.
pub fn exact_label_constraints(fr: &Question) -> Result<ConstraintSet, ConstraintError> {
    let QuestionKind::Fr { subj, obj } = &fr.kind else {
        return Err(ConstraintError::NotFindRelation(fr.id.clone()));
    };
    let mut set = ConstraintSet {
        questions: Relation::ALL
            .iter()
            .map(|&rel| QuestionEntry {
                id: label_var(&fr.id, rel),
                fact: Fact {
                    rel,
                    subj: subj.clone(),
                    obj: obj.clone(),
                },
                gold: None,
            })
            .collect(),
        constraints: Vec::new(),
    };
    for (a, b) in Relation::OPPOSITE_PAIRS {
        let expr = LogicExpr::not(LogicExpr::And(vec![
            LogicExpr::var(label_var(&fr.id, a)),
            LogicExpr::var(label_var(&fr.id, b)),
        ]));
        set.push(Template::ExactL, expr);
    }
    Ok(set)
}
