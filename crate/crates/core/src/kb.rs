//! The spatial rule base: rule schemas over the variables `x, y, z, h`.
//!
//! Rules are data. The inference engine interprets premise and conclusion
//! patterns, so a knowledge base can be loaded from JSON, validated, and
//! referenced by rule id in recorded derivations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spatial::{parse_atom, Fact, ParseError, Relation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Var {
    #[serde(rename = "x")]
    X,
    #[serde(rename = "y")]
    Y,
    #[serde(rename = "z")]
    Z,
    #[serde(rename = "h")]
    H,
}

impl Var {
    pub const ALL: [Var; 4] = [Var::X, Var::Y, Var::Z, Var::H];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::Z => "z",
            Var::H => "h",
        }
    }

    fn parse(token: &str) -> Option<Var> {
        Var::ALL.into_iter().find(|v| v.as_str() == token)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `rel(a,b)` over rule variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pattern {
    pub rel: Relation,
    pub subj: Var,
    pub obj: Var,
}

impl Pattern {
    pub const fn new(rel: Relation, subj: Var, obj: Var) -> Self {
        Pattern { rel, subj, obj }
    }

    pub fn vars(&self) -> [Var; 2] {
        [self.subj, self.obj]
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.rel, self.subj, self.obj)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternError {
    #[error(transparent)]
    Syntax(#[from] ParseError),
    #[error("`{0}` is not a rule variable (expected one of x, y, z, h)")]
    NotAVariable(String),
    #[error("pattern repeats variable `{0}`")]
    RepeatedVariable(Var),
}

pub fn parse_pattern(text: &str) -> Result<Pattern, PatternError> {
    let atom = parse_atom(text)?;
    let var = |s: &str| Var::parse(s).ok_or_else(|| PatternError::NotAVariable(s.to_string()));
    let subj = var(&atom.args[0])?;
    let obj = var(&atom.args[1])?;
    if subj == obj {
        return Err(PatternError::RepeatedVariable(subj));
    }
    Ok(Pattern::new(atom.rel, subj, obj))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleCategory {
    Converse,
    Symmetric,
    Transitive,
    TransitiveTopo,
}

impl RuleCategory {
    pub fn premise_count(self) -> usize {
        match self {
            RuleCategory::Converse | RuleCategory::Symmetric => 1,
            RuleCategory::Transitive => 2,
            RuleCategory::TransitiveTopo => 3,
        }
    }

    /// Rank used when several derivations of one fact appear in the same
    /// round: composition steps are kept in preference to restatements.
    pub fn tie_rank(self) -> u8 {
        match self {
            RuleCategory::Transitive => 0,
            RuleCategory::TransitiveTopo => 1,
            RuleCategory::Converse => 2,
            RuleCategory::Symmetric => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RuleCategory::Converse => "converse",
            RuleCategory::Symmetric => "symmetric",
            RuleCategory::Transitive => "transitive",
            RuleCategory::TransitiveTopo => "transitive_topo",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRule", into = "RawRule")]
pub struct Rule {
    pub id: String,
    pub category: RuleCategory,
    pub premises: Vec<Pattern>,
    pub conclusion: Pattern,
}

#[derive(Clone, Serialize, Deserialize)]
struct RawRule {
    id: String,
    category: RuleCategory,
    premises: Vec<String>,
    conclusion: String,
}

impl From<Rule> for RawRule {
    fn from(rule: Rule) -> Self {
        RawRule {
            id: rule.id,
            category: rule.category,
            premises: rule.premises.iter().map(Pattern::to_string).collect(),
            conclusion: rule.conclusion.to_string(),
        }
    }
}

impl TryFrom<RawRule> for Rule {
    type Error = RuleError;

    fn try_from(raw: RawRule) -> Result<Self, Self::Error> {
        let premises = raw
            .premises
            .iter()
            .map(|p| parse_pattern(p))
            .collect::<Result<Vec<_>, _>>()?;
        let conclusion = parse_pattern(&raw.conclusion)?;
        let rule = Rule {
            id: raw.id,
            category: raw.category,
            premises,
            conclusion,
        };
        rule.check()?;
        Ok(rule)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error("{category} rules take {expected} premise(s), found {found}")]
    Arity {
        category: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{0}")]
    Shape(String),
    #[error("conclusion variable `{var}` does not occur in any premise")]
    Unsafe { var: Var },
}

impl Rule {
    pub fn new(
        id: impl Into<String>,
        category: RuleCategory,
        premises: Vec<Pattern>,
        conclusion: Pattern,
    ) -> Result<Self, RuleError> {
        let rule = Rule {
            id: id.into(),
            category,
            premises,
            conclusion,
        };
        rule.check()?;
        Ok(rule)
    }

    /// Safety and per-category shape checks.
    fn check(&self) -> Result<(), RuleError> {
        let bound: BTreeSet<Var> = self.premises.iter().flat_map(Pattern::vars).collect();
        for var in self.conclusion.vars() {
            if !bound.contains(&var) {
                return Err(RuleError::Unsafe { var });
            }
        }
        let expected = self.category.premise_count();
        if self.premises.len() != expected {
            return Err(RuleError::Arity {
                category: self.category.as_str(),
                expected,
                found: self.premises.len(),
            });
        }
        let c = self.conclusion;
        match self.category {
            RuleCategory::Converse | RuleCategory::Symmetric => {
                let p = self.premises[0];
                if (c.subj, c.obj) != (p.obj, p.subj) {
                    return Err(RuleError::Shape(format!(
                        "{} rule must swap its arguments: {p} => {c}",
                        self.category.as_str()
                    )));
                }
                if self.category == RuleCategory::Symmetric && c.rel != p.rel {
                    return Err(RuleError::Shape(format!(
                        "symmetric rule must keep its relation: {p} => {c}"
                    )));
                }
            }
            RuleCategory::Transitive => {
                let (a, b) = (self.premises[0], self.premises[1]);
                if a.obj != b.subj || a.subj == b.obj || (c.subj, c.obj) != (a.subj, b.obj) {
                    return Err(RuleError::Shape(format!(
                        "transitive rule must chain (x,y),(y,z) => (x,z): {a}, {b} => {c}"
                    )));
                }
            }
            RuleCategory::TransitiveTopo => {
                if bound.len() != 4 || c.subj == c.obj {
                    return Err(RuleError::Shape(
                        "transitive_topo rule must relate four distinct variables".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Instantiates the conclusion under `binding` (indexed by [`Var::index`]).
    pub fn conclude(&self, binding: &[Option<&str>; 4]) -> Option<Fact> {
        let s = binding[self.conclusion.subj.index()]?;
        let o = binding[self.conclusion.obj.index()]?;
        Fact::new(self.conclusion.rel, s, o).ok()
    }

    /// Matches `premises` positionally against the rule body and returns the
    /// instantiated conclusion, or `None` when they do not unify.
    pub fn apply(&self, premises: &[Fact]) -> Option<Fact> {
        if premises.len() != self.premises.len() {
            return None;
        }
        let mut binding: [Option<&str>; 4] = [None; 4];
        for (pattern, fact) in self.premises.iter().zip(premises) {
            if pattern.rel != fact.rel {
                return None;
            }
            for (var, value) in [(pattern.subj, &fact.subj), (pattern.obj, &fact.obj)] {
                match binding[var.index()] {
                    Some(bound) if bound != value.as_str() => return None,
                    _ => binding[var.index()] = Some(value.as_str()),
                }
            }
        }
        self.conclude(&binding)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let premises: Vec<String> = self.premises.iter().map(Pattern::to_string).collect();
        write!(f, "{} => {}", premises.join(" & "), self.conclusion)
    }
}

/// An immutable, validated rule set with a premise index.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawKb", into = "RawKb")]
pub struct RuleKb {
    rules: Vec<Rule>,
    #[serde(skip)]
    by_premise: BTreeMap<Relation, Vec<(usize, usize)>>,
}

#[derive(Clone, Serialize, Deserialize)]
struct RawKb {
    rules: Vec<Rule>,
}

impl From<RuleKb> for RawKb {
    fn from(kb: RuleKb) -> Self {
        RawKb { rules: kb.rules }
    }
}

impl TryFrom<RawKb> for RuleKb {
    type Error = KbError;

    fn try_from(raw: RawKb) -> Result<Self, Self::Error> {
        RuleKb::new(raw.rules)
    }
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("cannot read rule file {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("rule file is not valid JSON: {0}")]
    Json(String),
    #[error("rule #{index}: {message}")]
    Schema { index: usize, message: String },
    #[error("rule #{index} (`{id}`) is unsafe: variable `{var}` occurs only in the conclusion")]
    UnsafeRule { index: usize, id: String, var: Var },
    #[error("duplicate rule id `{0}`")]
    DuplicateId(String),
}

impl RuleKb {
    pub fn new(rules: Vec<Rule>) -> Result<Self, KbError> {
        let mut ids = BTreeSet::new();
        for rule in &rules {
            if !ids.insert(rule.id.as_str()) {
                return Err(KbError::DuplicateId(rule.id.clone()));
            }
        }
        let mut by_premise: BTreeMap<Relation, Vec<(usize, usize)>> = BTreeMap::new();
        for (ri, rule) in rules.iter().enumerate() {
            for (pi, p) in rule.premises.iter().enumerate() {
                by_premise.entry(p.rel).or_default().push((ri, pi));
            }
        }
        Ok(RuleKb { rules, by_premise })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// `(rule index, premise index)` pairs whose premise uses `rel`.
    pub fn premises_using(&self, rel: Relation) -> &[(usize, usize)] {
        self.by_premise.get(&rel).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn from_json(text: &str) -> Result<Self, KbError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| KbError::Json(e.to_string()))?;
        let Some(list) = value.get("rules").and_then(|r| r.as_array()) else {
            return Err(KbError::Json("expected an object with a `rules` array".into()));
        };
        let mut rules = Vec::with_capacity(list.len());
        for (index, item) in list.iter().enumerate() {
            let raw: RawRule = serde_json::from_value(item.clone()).map_err(|e| KbError::Schema {
                index,
                message: e.to_string(),
            })?;
            let id = raw.id.clone();
            match Rule::try_from(raw) {
                Ok(rule) => rules.push(rule),
                Err(RuleError::Unsafe { var }) => return Err(KbError::UnsafeRule { index, id, var }),
                Err(e) => {
                    return Err(KbError::Schema {
                        index,
                        message: e.to_string(),
                    })
                }
            }
        }
        RuleKb::new(rules)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rule base serializes")
    }
}

/// Reads and validates a rule-list JSON document.
pub fn load_kb(path: impl AsRef<Path>) -> Result<RuleKb, KbError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| KbError::Io {
        path: path.display().to_string(),
        source,
    })?;
    RuleKb::from_json(&text)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    Duplicate { first: String, second: String },
    MissingMirror { rule: String, expected: String },
    MissingSymmetricRule { relation: Relation },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Duplicate { first, second } => {
                write!(f, "rules `{first}` and `{second}` are identical")
            }
            Diagnostic::MissingMirror { rule, expected } => {
                write!(f, "converse rule `{rule}` has no mirror `{expected}`")
            }
            Diagnostic::MissingSymmetricRule { relation } => {
                write!(f, "symmetric relation `{relation}` has no symmetry rule")
            }
        }
    }
}

/// Lints a rule base. An empty result means clean.
pub fn validate_kb(kb: &RuleKb) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut seen: BTreeMap<(RuleCategory, Vec<Pattern>, Pattern), &str> = BTreeMap::new();
    for rule in kb.rules() {
        let key = (rule.category, rule.premises.clone(), rule.conclusion);
        if let Some(first) = seen.get(&key) {
            out.push(Diagnostic::Duplicate {
                first: first.to_string(),
                second: rule.id.clone(),
            });
        } else {
            seen.insert(key, &rule.id);
        }
    }

    let single: BTreeSet<(Relation, Relation)> = kb
        .rules()
        .iter()
        .filter(|r| r.premises.len() == 1)
        .map(|r| (r.premises[0].rel, r.conclusion.rel))
        .collect();
    for rule in kb.rules().iter().filter(|r| r.category == RuleCategory::Converse) {
        let (from, to) = (rule.premises[0].rel, rule.conclusion.rel);
        if !single.contains(&(to, from)) {
            out.push(Diagnostic::MissingMirror {
                rule: rule.id.clone(),
                expected: format!("{to}(x,y) => {from}(y,x)"),
            });
        }
    }

    let mentioned: BTreeSet<Relation> = kb
        .rules()
        .iter()
        .flat_map(|r| r.premises.iter().chain(std::iter::once(&r.conclusion)))
        .map(|p| p.rel)
        .collect();
    for rel in mentioned.into_iter().filter(|r| r.is_symmetric()) {
        let has_self_rule = kb
            .rules()
            .iter()
            .any(|r| r.category == RuleCategory::Symmetric && r.premises[0].rel == rel);
        if !has_self_rule {
            out.push(Diagnostic::MissingSymmetricRule { relation: rel });
        }
    }
    out
}

/// Relations lifted through containment: directional, distance, and `disconnected`.
pub const LIFTED: [Relation; 9] = [
    Relation::Left,
    Relation::Right,
    Relation::Above,
    Relation::Below,
    Relation::Behind,
    Relation::Front,
    Relation::Near,
    Relation::Far,
    Relation::Disconnected,
];

/// The built-in spatial logic.
///
/// * 10 converse rules (five relation pairs, both directions),
/// * 5 symmetry rules,
/// * 28 transitivity rules: `R∘R ⇒ R` for the eight transitive relations,
///   `inside∘coveredby ⇒ inside`, `contain∘cover ⇒ contain`, and
///   `inside∘X ⇒ X`, `coveredby∘X ⇒ X` for every lifted relation `X`,
/// * 36 containment-lifting rules: `P(x,y) ∧ P(h,z) ∧ X(y,z) ⇒ X(x,h)` for
///   `P ∈ {inside, coveredby}`, and their mirrors
///   `Q(y,x) ∧ Q(z,h) ∧ X(y,z) ⇒ X(x,h)` for `Q ∈ {contain, cover}`.
pub fn default_kb() -> RuleKb {
    use Relation::*;
    use Var::*;
    let mut rules = Vec::new();
    let mut push = |id: String, category, premises: Vec<Pattern>, conclusion| {
        rules.push(Rule::new(id, category, premises, conclusion).expect("built-in rule is valid"));
    };

    for (a, b) in [
        (Above, Below),
        (Below, Above),
        (Left, Right),
        (Right, Left),
        (Front, Behind),
        (Behind, Front),
        (CoveredBy, Cover),
        (Cover, CoveredBy),
        (Inside, Contain),
        (Contain, Inside),
    ] {
        push(
            format!("conv-{a}"),
            RuleCategory::Converse,
            vec![Pattern::new(a, X, Y)],
            Pattern::new(b, Y, X),
        );
    }
    for r in [Near, Far, Touch, Disconnected, Overlap] {
        push(
            format!("sym-{r}"),
            RuleCategory::Symmetric,
            vec![Pattern::new(r, X, Y)],
            Pattern::new(r, Y, X),
        );
    }
    let chain = |first: Relation, second: Relation, out: Relation| {
        (
            vec![Pattern::new(first, X, Y), Pattern::new(second, Y, Z)],
            Pattern::new(out, X, Z),
        )
    };
    for r in [Left, Right, Above, Below, Behind, Front, Inside, Contain] {
        let (p, c) = chain(r, r, r);
        push(format!("trans-{r}"), RuleCategory::Transitive, p, c);
    }
    let (p, c) = chain(Inside, CoveredBy, Inside);
    push("trans-inside-coveredby".into(), RuleCategory::Transitive, p, c);
    let (p, c) = chain(Contain, Cover, Contain);
    push("trans-contain-cover".into(), RuleCategory::Transitive, p, c);
    for part in [Inside, CoveredBy] {
        for r in LIFTED {
            let (p, c) = chain(part, r, r);
            push(format!("trans-{part}-{r}"), RuleCategory::Transitive, p, c);
        }
    }
    for part in [Inside, CoveredBy] {
        for r in LIFTED {
            push(
                format!("topo-{part}-{r}"),
                RuleCategory::TransitiveTopo,
                vec![
                    Pattern::new(part, X, Y),
                    Pattern::new(part, H, Z),
                    Pattern::new(r, Y, Z),
                ],
                Pattern::new(r, X, H),
            );
        }
    }
    for whole in [Contain, Cover] {
        for r in LIFTED {
            push(
                format!("topo-{whole}-{r}"),
                RuleCategory::TransitiveTopo,
                vec![
                    Pattern::new(whole, Y, X),
                    Pattern::new(whole, Z, H),
                    Pattern::new(r, Y, Z),
                ],
                Pattern::new(r, X, H),
            );
        }
    }
    RuleKb::new(rules).expect("built-in rule ids are unique")
}
