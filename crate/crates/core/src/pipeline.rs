//! One-call composition: derive a chain, compile it to constraints, render
//! the rationale.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{chain_to_constraints, ConstraintSet, Template};
use crate::inference::{derive, InferenceError, QChain};
use crate::kb::RuleKb;
use crate::render::{render_chain, Entities, RenderError, RenderFormat};
use crate::spatial::{Fact, Scene, YesNo};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub format: RenderFormat,
    pub templates: BTreeSet<Template>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            format: RenderFormat::Cot,
            templates: Template::ALL.into_iter().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineRecord {
    pub target: Fact,
    pub answer: YesNo,
    pub chain: Option<QChain>,
    pub constraints: ConstraintSet,
    pub rationale: Option<String>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

/// Underivable targets get answer `No`, no chain and an empty constraint set.
pub fn pipeline(
    scene: &Scene,
    target: &Fact,
    kb: &RuleKb,
    config: &PipelineConfig,
) -> Result<PipelineRecord, PipelineError> {
    let Some(chain) = derive(scene, target, kb)? else {
        return Ok(PipelineRecord {
            target: target.clone(),
            answer: YesNo::No,
            chain: None,
            constraints: ConstraintSet::default(),
            rationale: None,
        });
    };
    let mut constraints = chain_to_constraints(&chain);
    constraints.retain_templates(|t| config.templates.contains(&t));
    let rationale = render_chain(&chain, Entities::of(scene), config.format)?;
    Ok(PipelineRecord {
        target: target.clone(),
        answer: YesNo::Yes,
        chain: Some(chain),
        constraints,
        rationale: Some(rationale),
    })
}
