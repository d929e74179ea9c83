//! Closed-world question answering over a scene's deductive closure.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{close, Closure, InferenceError, QChain};
use crate::kb::RuleKb;
use crate::spatial::{Answer, Fact, Question, QuestionKind, Relation, Scene, YesNo};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("question `{question}` mentions unknown entity `{entity}`")]
    UnknownEntity { question: String, entity: String },
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsweredQuestion {
    pub question: Question,
    pub answer: Answer,
    /// One chain per supported fact; empty for a No answer.
    pub chains: Vec<QChain>,
    /// Largest chain depth, 0 when there is no chain.
    pub depth: u32,
    pub consistent: bool,
}

/// A scene closed once and queried many times.
#[derive(Clone, Debug)]
pub struct Oracle {
    scene: Scene,
    closure: Closure,
    consistent: bool,
}

impl Oracle {
    pub fn new(scene: &Scene, kb: &RuleKb) -> Result<Self, InferenceError> {
        let closure = close(scene, kb)?;
        let consistent = closure.is_consistent();
        Ok(Oracle {
            scene: scene.clone(),
            closure,
            consistent,
        })
    }

    pub fn closure(&self) -> &Closure {
        &self.closure
    }

    pub fn is_consistent(&self) -> bool {
        self.consistent
    }

    fn check_entities(&self, question: &Question) -> Result<(), OracleError> {
        for id in question.entity_ids() {
            if !self.scene.has_entity(id) {
                return Err(OracleError::UnknownEntity {
                    question: question.id.clone(),
                    entity: id.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Truth of `fact` under the closed-world reading.
    pub fn holds(&self, fact: &Fact) -> bool {
        self.closure.contains(fact)
    }

    pub fn answer(&self, question: &Question) -> Result<AnsweredQuestion, OracleError> {
        self.check_entities(question)?;
        let (answer, chains) = match &question.kind {
            QuestionKind::Yn { fact } => {
                let chains: Vec<QChain> = self.closure.chain(fact).into_iter().collect();
                (Answer::Yn(YesNo::from_bool(!chains.is_empty())), chains)
            }
            QuestionKind::Fr { subj, obj } => {
                let rels = self.closure.relations_between(subj, obj);
                let chains = rels
                    .iter()
                    .filter_map(|&rel| {
                        self.closure.chain(&Fact {
                            rel,
                            subj: subj.clone(),
                            obj: obj.clone(),
                        })
                    })
                    .collect();
                (Answer::Fr(rels), chains)
            }
        };
        let depth = chains.iter().map(QChain::depth).max().unwrap_or(0);
        Ok(AnsweredQuestion {
            question: question.clone(),
            answer,
            chains,
            depth,
            consistent: self.consistent,
        })
    }

    pub fn answer_fr_set(&self, subj: &str, obj: &str) -> std::collections::BTreeSet<Relation> {
        self.closure.relations_between(subj, obj)
    }
}

pub fn answer_yn(scene: &Scene, fact: &Fact, kb: &RuleKb) -> Result<AnsweredQuestion, OracleError> {
    Oracle::new(scene, kb)?.answer(&Question::yn("q", fact.clone()))
}

pub fn answer_fr(scene: &Scene, subj: &str, obj: &str, kb: &RuleKb) -> Result<AnsweredQuestion, OracleError> {
    Oracle::new(scene, kb)?.answer(&Question::fr("q", subj, obj))
}
