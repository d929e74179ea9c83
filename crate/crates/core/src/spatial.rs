//! Spatial vocabulary: relations, entities, ground facts, scenes and questions.
//!
//! Facts are ground atoms `rel(subj,obj)` over opaque entity ids. The textual
//! form `rel(subj,obj)` is accepted by [`parse_fact`] and produced by the
//! `Display` impl, so the two round-trip.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One of the fifteen spatial relation kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Left,
    Right,
    Above,
    Below,
    Behind,
    Front,
    Near,
    Far,
    Disconnected,
    Touch,
    Overlap,
    #[serde(rename = "coveredby")]
    CoveredBy,
    Inside,
    Cover,
    Contain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Directional,
    Distance,
    Topological,
}

impl Relation {
    pub const ALL: [Relation; 15] = [
        Relation::Left,
        Relation::Right,
        Relation::Above,
        Relation::Below,
        Relation::Behind,
        Relation::Front,
        Relation::Near,
        Relation::Far,
        Relation::Disconnected,
        Relation::Touch,
        Relation::Overlap,
        Relation::CoveredBy,
        Relation::Inside,
        Relation::Cover,
        Relation::Contain,
    ];

    /// The five mutually exclusive label pairs.
    pub const OPPOSITE_PAIRS: [(Relation, Relation); 5] = [
        (Relation::Left, Relation::Right),
        (Relation::Above, Relation::Below),
        (Relation::Behind, Relation::Front),
        (Relation::Near, Relation::Far),
        (Relation::Disconnected, Relation::Touch),
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Left => "left",
            Relation::Right => "right",
            Relation::Above => "above",
            Relation::Below => "below",
            Relation::Behind => "behind",
            Relation::Front => "front",
            Relation::Near => "near",
            Relation::Far => "far",
            Relation::Disconnected => "disconnected",
            Relation::Touch => "touch",
            Relation::Overlap => "overlap",
            Relation::CoveredBy => "coveredby",
            Relation::Inside => "inside",
            Relation::Cover => "cover",
            Relation::Contain => "contain",
        }
    }

    /// Position in [`Relation::ALL`]; doubles as the FR classifier row.
    pub fn index(self) -> usize {
        Relation::ALL.iter().position(|r| *r == self).unwrap()
    }

    pub fn category(self) -> Category {
        use Relation::*;
        match self {
            Left | Right | Above | Below | Behind | Front => Category::Directional,
            Near | Far => Category::Distance,
            Disconnected | Touch | Overlap | CoveredBy | Inside | Cover | Contain => Category::Topological,
        }
    }

    /// `r(x,y)` holds iff `converse(r)(y,x)` holds.
    pub fn converse(self) -> Relation {
        use Relation::*;
        match self {
            Left => Right,
            Right => Left,
            Above => Below,
            Below => Above,
            Behind => Front,
            Front => Behind,
            CoveredBy => Cover,
            Cover => CoveredBy,
            Inside => Contain,
            Contain => Inside,
            Near | Far | Touch | Disconnected | Overlap => self,
        }
    }

    pub fn is_symmetric(self) -> bool {
        self.converse() == self
    }

    /// Partner in one of the [`Relation::OPPOSITE_PAIRS`], if any.
    pub fn opposite(self) -> Option<Relation> {
        Relation::OPPOSITE_PAIRS.iter().find_map(|&(a, b)| {
            if a == self {
                Some(b)
            } else if b == self {
                Some(a)
            } else {
                None
            }
        })
    }
}

// Ordered by token so that "lexicographic" tie-breaks match the rendered text.
impl PartialOrd for Relation {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Relation {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.as_str().cmp(other.as_str())
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown relation token `{0}`")]
pub struct UnknownRelation(pub String);

impl FromStr for Relation {
    type Err = UnknownRelation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Relation::ALL
            .iter()
            .copied()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| UnknownRelation(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    /// Display-only attributes (size, color, shape, kind). Never read by inference.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attrs: BTreeMap<String, String>,
}

impl Entity {
    pub fn new(id: impl Into<String>) -> Self {
        Entity {
            id: id.into(),
            attrs: BTreeMap::new(),
        }
    }

    pub fn with_attr(mut self, key: &str, value: &str) -> Self {
        self.attrs.insert(key.to_string(), value.to_string());
        self
    }
}

/// A ground atom `rel(subj,obj)` with `subj != obj`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawFact")]
pub struct Fact {
    pub rel: Relation,
    pub subj: String,
    pub obj: String,
}

#[derive(Deserialize)]
struct RawFact {
    rel: Relation,
    subj: String,
    obj: String,
}

impl TryFrom<RawFact> for Fact {
    type Error = ReflexiveFact;

    fn try_from(raw: RawFact) -> Result<Self, Self::Error> {
        Fact::new(raw.rel, raw.subj, raw.obj)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("reflexive fact {rel}({id},{id})")]
pub struct ReflexiveFact {
    pub rel: Relation,
    pub id: String,
}

impl Fact {
    pub fn new(rel: Relation, subj: impl Into<String>, obj: impl Into<String>) -> Result<Self, ReflexiveFact> {
        let (subj, obj) = (subj.into(), obj.into());
        if subj == obj {
            return Err(ReflexiveFact { rel, id: subj });
        }
        Ok(Fact { rel, subj, obj })
    }

    /// The same situation stated from the other argument.
    pub fn converse(&self) -> Fact {
        Fact {
            rel: self.rel.converse(),
            subj: self.obj.clone(),
            obj: self.subj.clone(),
        }
    }

    /// Same arguments, relation replaced by its exclusive partner.
    pub fn opposite(&self) -> Option<Fact> {
        self.rel.opposite().map(|rel| Fact {
            rel,
            subj: self.subj.clone(),
            obj: self.obj.clone(),
        })
    }

    pub fn with_rel(&self, rel: Relation) -> Fact {
        Fact {
            rel,
            subj: self.subj.clone(),
            obj: self.obj.clone(),
        }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.rel, self.subj, self.obj)
    }
}

impl FromStr for Fact {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_fact(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unknown relation `{token}` at byte {position}")]
    UnknownRelation { token: String, position: usize },
    #[error("malformed fact at byte {position}: expected {expected}")]
    Malformed { expected: &'static str, position: usize },
    #[error("reflexive fact at byte {position}: subject and object are both `{id}`")]
    ReflexiveFact { id: String, position: usize },
}

/// An unchecked `rel(a,b)` atom; arguments may coincide.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Atom {
    pub rel: Relation,
    pub args: [String; 2],
    /// Byte offset of the second argument.
    pub obj_position: usize,
}

fn is_id_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.text[self.pos..].chars().next() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> &'a str {
        let start = self.pos;
        while let Some(c) = self.text[self.pos..].chars().next() {
            if !pred(c) {
                break;
            }
            self.pos += c.len_utf8();
        }
        &self.text[start..self.pos]
    }

    fn expect(&mut self, ch: char, expected: &'static str) -> Result<(), ParseError> {
        self.skip_ws();
        if self.text[self.pos..].starts_with(ch) {
            self.pos += ch.len_utf8();
            Ok(())
        } else {
            Err(ParseError::Malformed {
                expected,
                position: self.pos,
            })
        }
    }

    fn ident(&mut self, expected: &'static str) -> Result<&'a str, ParseError> {
        self.skip_ws();
        let position = self.pos;
        let id = self.take_while(is_id_char);
        if id.is_empty() {
            return Err(ParseError::Malformed { expected, position });
        }
        Ok(id)
    }
}

pub(crate) fn parse_atom(text: &str) -> Result<Atom, ParseError> {
    let mut cur = Cursor { text, pos: 0 };
    cur.skip_ws();
    let rel_pos = cur.pos;
    let token = cur.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
    if token.is_empty() {
        return Err(ParseError::Malformed {
            expected: "relation token",
            position: rel_pos,
        });
    }
    let rel = token.parse::<Relation>().map_err(|_| ParseError::UnknownRelation {
        token: token.to_string(),
        position: rel_pos,
    })?;
    cur.expect('(', "`(`")?;
    let subj = cur.ident("subject id")?.to_string();
    cur.expect(',', "`,`")?;
    cur.skip_ws();
    let obj_position = cur.pos;
    let obj = cur.ident("object id")?.to_string();
    cur.expect(')', "`)`")?;
    cur.skip_ws();
    if cur.pos != text.len() {
        return Err(ParseError::Malformed {
            expected: "end of input",
            position: cur.pos,
        });
    }
    Ok(Atom {
        rel,
        args: [subj, obj],
        obj_position,
    })
}

/// Parses `rel(subj,obj)`, tolerating whitespace around every token.
pub fn parse_fact(text: &str) -> Result<Fact, ParseError> {
    let Atom {
        rel,
        args: [subj, obj],
        obj_position,
    } = parse_atom(text)?;
    if subj == obj {
        return Err(ParseError::ReflexiveFact {
            id: subj,
            position: obj_position,
        });
    }
    Ok(Fact { rel, subj, obj })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SceneError {
    #[error("duplicate entity id `{0}`")]
    DuplicateEntity(String),
    #[error("fact {fact} references undeclared entity `{id}`")]
    UndeclaredEntity { fact: String, id: String },
}

/// A story: declared entities plus the asserted facts about them.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawScene")]
pub struct Scene {
    pub entities: Vec<Entity>,
    pub facts: Vec<Fact>,
}

#[derive(Deserialize)]
struct RawScene {
    #[serde(default)]
    entities: Vec<Entity>,
    #[serde(default)]
    facts: Vec<Fact>,
}

impl TryFrom<RawScene> for Scene {
    type Error = SceneError;

    fn try_from(raw: RawScene) -> Result<Self, Self::Error> {
        Scene::new(raw.entities, raw.facts)
    }
}

impl Scene {
    /// Validates ids and drops repeated facts, keeping first occurrences in order.
    pub fn new(entities: Vec<Entity>, facts: Vec<Fact>) -> Result<Self, SceneError> {
        let mut ids = BTreeSet::new();
        for e in &entities {
            if !ids.insert(e.id.as_str()) {
                return Err(SceneError::DuplicateEntity(e.id.clone()));
            }
        }
        let mut seen = BTreeSet::new();
        let mut unique = Vec::with_capacity(facts.len());
        for f in facts {
            for id in [&f.subj, &f.obj] {
                if !ids.contains(id.as_str()) {
                    return Err(SceneError::UndeclaredEntity {
                        fact: f.to_string(),
                        id: id.clone(),
                    });
                }
            }
            if seen.insert(f.clone()) {
                unique.push(f);
            }
        }
        Ok(Scene {
            entities,
            facts: unique,
        })
    }

    /// Scene whose entities are exactly those mentioned by `facts`, in order of appearance.
    pub fn from_facts(facts: Vec<Fact>) -> Self {
        let mut entities: Vec<Entity> = Vec::new();
        for f in &facts {
            for id in [&f.subj, &f.obj] {
                if !entities.iter().any(|e| &e.id == id) {
                    entities.push(Entity::new(id.clone()));
                }
            }
        }
        Scene::new(entities, facts).expect("entities collected from facts")
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.id == id)
    }

    pub fn has_entity(&self, id: &str) -> bool {
        self.entity(id).is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YesNo {
    Yes,
    No,
}

impl YesNo {
    pub fn from_bool(b: bool) -> Self {
        if b {
            YesNo::Yes
        } else {
            YesNo::No
        }
    }

    pub fn is_yes(self) -> bool {
        self == YesNo::Yes
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum QuestionKind {
    /// "Is `fact` true?"
    Yn { fact: Fact },
    /// "Which relations hold from `subj` to `obj`?"
    Fr { subj: String, obj: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    #[serde(flatten)]
    pub kind: QuestionKind,
}

impl Question {
    pub fn yn(id: impl Into<String>, fact: Fact) -> Self {
        Question {
            id: id.into(),
            kind: QuestionKind::Yn { fact },
        }
    }

    pub fn fr(id: impl Into<String>, subj: impl Into<String>, obj: impl Into<String>) -> Self {
        Question {
            id: id.into(),
            kind: QuestionKind::Fr {
                subj: subj.into(),
                obj: obj.into(),
            },
        }
    }

    pub fn entity_ids(&self) -> [&str; 2] {
        match &self.kind {
            QuestionKind::Yn { fact } => [&fact.subj, &fact.obj],
            QuestionKind::Fr { subj, obj } => [subj, obj],
        }
    }
}

/// Binary answer for YN questions, a (possibly empty) relation set for FR.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Yn(YesNo),
    Fr(BTreeSet<Relation>),
}
