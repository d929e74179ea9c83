//! Spatial rule inference over qualitative relations, question-chain
//! extraction, logical constraints under the product t-norm, and a small
//! constraint-regularized trainer.
//!
//! Numeric code is generic over [`Scalar`]; the `*F32` / `*F64` aliases fix
//! the precision.

pub mod constraints;
pub mod inference;
pub mod kb;
pub mod oracle;
pub mod pipeline;
pub mod render;
pub mod scalar;
pub mod scenegen;
pub mod softlogic;
pub mod spatial;
pub mod trainer;

pub use constraints::{chain_to_constraints, ConstraintSet, LogicExpr, Template};
pub use inference::{close, derive, Closure, QChain};
pub use kb::{default_kb, RuleKb};
pub use oracle::Oracle;
pub use pipeline::{pipeline, PipelineConfig, PipelineRecord};
pub use render::{render_chain, render_fact, RenderFormat};
pub use scalar::Scalar;
pub use scenegen::{generate, GenConfig, Record};
pub use softlogic::{eval, ProbAssignment, SoftEval};
pub use spatial::{Answer, Entity, Fact, Question, Relation, Scene, YesNo};
pub use trainer::{evaluate, train, ToyModel, TrainConfig};

pub type ProbAssignmentF32 = ProbAssignment<f32>;
pub type ProbAssignmentF64 = ProbAssignment<f64>;
pub type SoftEvalF32 = SoftEval<f32>;
pub type SoftEvalF64 = SoftEval<f64>;
pub type ToyModelF32 = ToyModel<f32>;
pub type ToyModelF64 = ToyModel<f64>;
