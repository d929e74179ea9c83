//! Text renderings of facts, chains and scenes: natural language, chain of
//! thought, predicate form (LR) and symbol form (CoS).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{ChainStep, QChain};
use crate::spatial::{Entity, Fact, Question, QuestionKind, Relation, Scene};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderFormat {
    Nl,
    Cot,
    Lr,
    Cos,
}

impl FromStr for RenderFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nl" => Ok(RenderFormat::Nl),
            "cot" => Ok(RenderFormat::Cot),
            "lr" => Ok(RenderFormat::Lr),
            "cos" => Ok(RenderFormat::Cos),
            other => Err(format!("unknown format `{other}` (expected nl, cot, lr or cos)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoryMode {
    Raw,
    StepByStep,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("no symbol for relation `{0}`")]
    UnsupportedSymbol(Relation),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NlParseError {
    #[error("no relation phrase found in `{0}`")]
    NoRelation(String),
    #[error("`{0}` does not describe a known entity")]
    UnknownDescription(String),
    #[error("sentence states a relation between `{0}` and itself")]
    Reflexive(String),
}

/// Canonical phrase following "is" for each relation.
pub fn phrase(rel: Relation) -> &'static str {
    match rel {
        Relation::Left => "to the left of",
        Relation::Right => "to the right of",
        Relation::Above => "above",
        Relation::Below => "below",
        Relation::Behind => "behind",
        Relation::Front => "in front of",
        Relation::Near => "near",
        Relation::Far => "far from",
        Relation::Disconnected => "disconnected from",
        Relation::Touch => "touching",
        Relation::Overlap => "overlapping",
        Relation::Inside => "inside",
        Relation::Contain => "containing",
        Relation::CoveredBy => "touching the edge of",
        Relation::Cover => "covering",
    }
}

/// Glyph used by the symbol form, where one exists.
pub fn symbol(rel: Relation) -> Option<&'static str> {
    match rel {
        Relation::Left => Some("<"),
        Relation::Right => Some(">"),
        Relation::Above => Some("↑"),
        Relation::Below => Some("↓"),
        Relation::Near => Some("~"),
        Relation::Touch => Some("="),
        _ => None,
    }
}

/// Entity lookup for display attributes; unknown ids render by name.
#[derive(Clone, Copy)]
pub struct Entities<'a>(pub &'a [Entity]);

impl<'a> Entities<'a> {
    pub fn of(scene: &'a Scene) -> Self {
        Entities(&scene.entities)
    }

    pub fn none() -> Self {
        Entities(&[])
    }

    fn get(&self, id: &str) -> Option<&'a Entity> {
        self.0.iter().find(|e| e.id == id)
    }

    fn attrs(&self, id: &str) -> Vec<&'a str> {
        let Some(e) = self.get(id) else { return vec![] };
        ["size", "color", "shape"]
            .iter()
            .filter_map(|k| e.attrs.get(*k).map(String::as_str))
            .collect()
    }

    fn block_name(&self, id: &str) -> Option<&'a str> {
        let e = self.get(id)?;
        (e.attrs.get("kind").map(String::as_str) == Some("block"))
            .then(|| e.attrs.get("name").map(String::as_str).unwrap_or(e.id.as_str()))
    }

    /// Noun phrase: "the large red square", "block A", "the white".
    pub fn noun_phrase(&self, id: &str) -> String {
        if let Some(name) = self.block_name(id) {
            return format!("block {name}");
        }
        let attrs = self.attrs(id);
        if attrs.is_empty() {
            format!("the {id}")
        } else {
            format!("the {}", attrs.join(" "))
        }
    }

    /// Bare description for predicate form: "large red square", "orange".
    pub fn label(&self, id: &str) -> String {
        if let Some(name) = self.block_name(id) {
            return format!("block {name}");
        }
        let attrs = self.attrs(id);
        if attrs.is_empty() {
            id.to_string()
        } else {
            attrs.join(" ")
        }
    }

    /// Attribute tuple for symbol form: "(large, red, square)".
    pub fn tuple(&self, id: &str) -> String {
        if let Some(name) = self.block_name(id) {
            return format!("(block {name})");
        }
        let attrs = self.attrs(id);
        if attrs.is_empty() {
            format!("({id})")
        } else {
            format!("({})", attrs.join(", "))
        }
    }

    fn resolve(&self, np: &str) -> Option<String> {
        let np = np.trim();
        if let Some(e) = self.0.iter().find(|e| self.noun_phrase(&e.id).eq_ignore_ascii_case(np)) {
            return Some(e.id.clone());
        }
        if !self.0.is_empty() {
            return None;
        }
        let lower = np.to_ascii_lowercase();
        let rest = lower.strip_prefix("the ")?;
        let start = np.len() - rest.len();
        Some(np[start..].to_string())
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn clause(fact: &Fact, ents: Entities<'_>) -> String {
    format!(
        "{} is {} {}",
        ents.noun_phrase(&fact.subj),
        phrase(fact.rel),
        ents.noun_phrase(&fact.obj)
    )
}

pub fn render_fact(fact: &Fact, ents: Entities<'_>, format: RenderFormat) -> Result<String, RenderError> {
    Ok(match format {
        RenderFormat::Nl | RenderFormat::Cot => format!("{}.", capitalize(&clause(fact, ents))),
        RenderFormat::Lr => format!(
            "{}({}, {})",
            capitalize(fact.rel.as_str()),
            ents.label(&fact.subj),
            ents.label(&fact.obj)
        ),
        RenderFormat::Cos => {
            let glyph = symbol(fact.rel).ok_or(RenderError::UnsupportedSymbol(fact.rel))?;
            format!("{} {glyph} {}", ents.tuple(&fact.subj), ents.tuple(&fact.obj))
        }
    })
}

/// Inverse of the natural-language rendering.
pub fn parse_nl(sentence: &str, ents: Entities<'_>) -> Result<Fact, NlParseError> {
    let text = sentence.trim().trim_end_matches('.');
    let (rel, at, len) = Relation::ALL
        .iter()
        .filter_map(|&rel| {
            let needle = format!(" is {} ", phrase(rel));
            text.find(&needle).map(|at| (rel, at, needle.len()))
        })
        .max_by_key(|&(_, _, len)| len)
        .ok_or_else(|| NlParseError::NoRelation(sentence.to_string()))?;
    let (subj_np, obj_np) = (&text[..at], &text[at + len..]);
    let subj = ents
        .resolve(subj_np)
        .ok_or_else(|| NlParseError::UnknownDescription(subj_np.to_string()))?;
    let obj = ents
        .resolve(obj_np)
        .ok_or_else(|| NlParseError::UnknownDescription(obj_np.to_string()))?;
    Fact::new(rel, subj, obj).map_err(|e| NlParseError::Reflexive(e.id))
}

pub fn render_question(question: &Question, ents: Entities<'_>) -> String {
    match &question.kind {
        QuestionKind::Yn { fact } => format!(
            "Is {} {} {}?",
            ents.noun_phrase(&fact.subj),
            phrase(fact.rel),
            ents.noun_phrase(&fact.obj)
        ),
        QuestionKind::Fr { subj, obj } => format!(
            "What is the relation of {} to {}?",
            ents.noun_phrase(subj),
            ents.noun_phrase(obj)
        ),
    }
}

fn step_kind(step: &ChainStep, facts: &[&Fact]) -> &'static str {
    match facts.len() {
        1 if facts[0].rel == step.fact.rel => "symmetry",
        1 => "converse",
        2 => "transitivity",
        _ => "topological transitivity",
    }
}

fn lower_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn step_line(
    step: &ChainStep,
    premises: &[&Fact],
    ents: Entities<'_>,
    format: RenderFormat,
) -> Result<String, RenderError> {
    let kind = step_kind(step, premises);
    Ok(match format {
        RenderFormat::Nl | RenderFormat::Cot => {
            let ps: Vec<String> = premises.iter().map(|p| clause(p, ents)).collect();
            format!(
                "Since {}, by {kind} {}.",
                join_and(&ps),
                lower_first(&clause(&step.fact, ents))
            )
        }
        RenderFormat::Lr => {
            let ps = premises
                .iter()
                .map(|p| render_fact(p, ents, format))
                .collect::<Result<Vec<_>, _>>()?;
            format!(
                "{} => {} ({kind})",
                ps.join(" + "),
                render_fact(&step.fact, ents, format)?
            )
        }
        RenderFormat::Cos => {
            let ps = premises
                .iter()
                .map(|p| render_fact(p, ents, format))
                .collect::<Result<Vec<_>, _>>()?;
            format!(
                "{}. Therefore, {} ({kind})",
                ps.join(", "),
                render_fact(&step.fact, ents, format)?
            )
        }
    })
}

fn join_and(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// One line per rule application, then `Answer: Yes`.
pub fn render_chain(chain: &QChain, ents: Entities<'_>, format: RenderFormat) -> Result<String, RenderError> {
    let mut lines = Vec::new();
    for step in chain.rule_steps() {
        let premises: Vec<&Fact> = step
            .premises
            .iter()
            .filter_map(|id| chain.step(id).map(|s| &s.fact))
            .collect();
        lines.push(step_line(step, &premises, ents, format)?);
    }
    if lines.is_empty() {
        lines.push(render_fact(&chain.target, ents, format)?);
    }
    lines.push("Answer: Yes".to_string());
    Ok(lines.join("\n"))
}

/// Scene facts as text: one sentence per fact per line, or grouped by
/// subject into compound sentences.
pub fn render_story(scene: &Scene, mode: StoryMode) -> String {
    let ents = Entities::of(scene);
    match mode {
        StoryMode::StepByStep => scene
            .facts
            .iter()
            .map(|f| format!("{}.", capitalize(&clause(f, ents))))
            .collect::<Vec<_>>()
            .join("\n"),
        StoryMode::Raw => {
            let mut groups: Vec<(&str, Vec<&Fact>)> = Vec::new();
            for f in &scene.facts {
                match groups.iter_mut().find(|(s, _)| *s == f.subj) {
                    Some((_, fs)) => fs.push(f),
                    None => groups.push((&f.subj, vec![f])),
                }
            }
            groups
                .iter()
                .map(|(subj, fs)| {
                    let parts: Vec<String> = fs
                        .iter()
                        .map(|f| format!("{} {}", phrase(f.rel), ents.noun_phrase(&f.obj)))
                        .collect();
                    format!("{} is {}.", capitalize(&ents.noun_phrase(subj)), join_and(&parts))
                })
                .collect::<Vec<_>>()
                .join(" ")
        }
    }
}

impl fmt::Display for RenderFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RenderFormat::Nl => "nl",
            RenderFormat::Cot => "cot",
            RenderFormat::Lr => "lr",
            RenderFormat::Cos => "cos",
        })
    }
}
