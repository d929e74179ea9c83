//! Differentiable evaluation of [`LogicExpr`] under the product t-norm.
//!
//! | connective | value |
//! |---|---|
//! | `¬a` | `1 − a` |
//! | `a ∧ b` | `a·b` |
//! | `a ∨ b` | `a + b − a·b` |
//! | `a ⇒ b` | `1` if `a ≤ b`, else `b / a` |
//!
//! Gradients are exact. At `a = b > 0` an implication takes its value from
//! the first branch and its gradient from the second (`∂/∂b = 1/a`,
//! `∂/∂a = −b/a²`).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{ConstraintSet, LogicExpr};
use crate::scalar::Scalar;

/// Question id to probability of "yes".
pub type ProbAssignment<T> = BTreeMap<String, T>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Semantics {
    #[default]
    Product,
}

/// How a truth value `v` becomes a penalty.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationForm {
    /// `1 − v`
    #[default]
    OneMinus,
    /// `−ln(v + ε)`
    NegLog,
}

pub const NEG_LOG_EPS: f64 = 1e-6;

impl ViolationForm {
    pub fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            ViolationForm::OneMinus => T::one() - v,
            ViolationForm::NegLog => -(v + T::lit(NEG_LOG_EPS)).ln(),
        }
    }

    /// d(penalty)/dv.
    pub fn derivative<T: Scalar>(self, v: T) -> T {
        match self {
            ViolationForm::OneMinus => -T::one(),
            ViolationForm::NegLog => -T::one() / (v + T::lit(NEG_LOG_EPS)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SoftEval<T> {
    pub value: T,
    pub violation: T,
    /// ∂value/∂p for every variable of the expression.
    pub grad: BTreeMap<String, T>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SoftError {
    #[error("no probability for question `{0}`")]
    MissingVariable(String),
    #[error("probability {value} for `{var}` is outside the allowed range")]
    ProbabilityOutOfRange { var: String, value: f64 },
    #[error("an implication is within the finite-difference step of its kink")]
    KinkPoint,
}

fn check_probs<T: Scalar>(expr: &LogicExpr, probs: &ProbAssignment<T>) -> Result<(), SoftError> {
    for v in expr.vars() {
        let p = *probs.get(v).ok_or_else(|| SoftError::MissingVariable(v.to_string()))?;
        if !(p >= T::zero() && p <= T::one()) {
            return Err(SoftError::ProbabilityOutOfRange {
                var: v.to_string(),
                value: p.as_f64(),
            });
        }
    }
    Ok(())
}

fn clamp01<T: Scalar>(v: T) -> T {
    v.max(T::zero()).min(T::one())
}

type Grad<'a, T> = BTreeMap<&'a str, T>;

fn scale<'a, T: Scalar>(g: &Grad<'a, T>, k: T) -> Grad<'a, T> {
    g.iter().map(|(v, d)| (*v, *d * k)).collect()
}

fn axpy<'a, T: Scalar>(acc: &mut Grad<'a, T>, g: &Grad<'a, T>, k: T) {
    for (v, d) in g {
        let e = acc.entry(v).or_insert_with(T::zero);
        *e = *e + *d * k;
    }
}

fn forward<'a, T: Scalar>(e: &'a LogicExpr, p: &ProbAssignment<T>) -> (T, Grad<'a, T>) {
    match e {
        LogicExpr::Var(v) => (p[v.as_str()], BTreeMap::from([(v.as_str(), T::one())])),
        LogicExpr::Not(x) => {
            let (v, g) = forward(x, p);
            (clamp01(T::one() - v), scale(&g, -T::one()))
        }
        LogicExpr::And(xs) | LogicExpr::Or(xs) => {
            let is_and = matches!(e, LogicExpr::And(_));
            let (mut v, mut g) = forward(&xs[0], p);
            for x in &xs[1..] {
                let (w, h) = forward(x, p);
                let mut next;
                if is_and {
                    next = scale(&g, w);
                    axpy(&mut next, &h, v);
                    v = v * w;
                } else {
                    next = scale(&g, T::one() - w);
                    axpy(&mut next, &h, T::one() - v);
                    v = clamp01(v + w - v * w);
                }
                g = next;
            }
            (v, g)
        }
        LogicExpr::Implies(a, b) => {
            let (va, ga) = forward(a, p);
            let (vb, gb) = forward(b, p);
            let value = if va <= vb { T::one() } else { vb / va };
            if va < vb || va == T::zero() {
                return (value, BTreeMap::new());
            }
            let mut g = scale(&gb, T::one() / va);
            axpy(&mut g, &ga, -vb / (va * va));
            (value, g)
        }
    }
}

/// Truth value, violation `1 − value` and gradient of `expr` at `probs`.
pub fn eval_product<T: Scalar>(expr: &LogicExpr, probs: &ProbAssignment<T>) -> Result<SoftEval<T>, SoftError> {
    check_probs(expr, probs)?;
    let (value, g) = forward(expr, probs);
    let mut grad: BTreeMap<String, T> = expr.vars().into_iter().map(|v| (v.to_string(), T::zero())).collect();
    for (v, d) in g {
        *grad.get_mut(v).unwrap() = d;
    }
    Ok(SoftEval {
        value,
        violation: T::one() - value,
        grad,
    })
}

pub fn eval<T: Scalar>(
    semantics: Semantics,
    expr: &LogicExpr,
    probs: &ProbAssignment<T>,
) -> Result<SoftEval<T>, SoftError> {
    match semantics {
        Semantics::Product => eval_product(expr, probs),
    }
}

pub fn violation<T: Scalar>(expr: &LogicExpr, probs: &ProbAssignment<T>) -> Result<T, SoftError> {
    Ok(eval_product(expr, probs)?.violation)
}

/// Evaluates every constraint of `set`, in order.
pub fn eval_set<'a, T: Scalar>(
    set: &'a ConstraintSet,
    probs: &ProbAssignment<T>,
) -> Result<Vec<(&'a str, SoftEval<T>)>, SoftError> {
    set.constraints
        .iter()
        .map(|c| Ok((c.id.as_str(), eval_product(&c.expr, probs)?)))
        .collect()
}

/// Smallest `|v(a) − v(b)|` over the implications in `expr`.
fn min_implication_gap<T: Scalar>(e: &LogicExpr, p: &ProbAssignment<T>) -> Option<T> {
    let min = |x: Option<T>, y: Option<T>| match (x, y) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    match e {
        LogicExpr::Var(_) => None,
        LogicExpr::Not(x) => min_implication_gap(x, p),
        LogicExpr::And(xs) | LogicExpr::Or(xs) => xs.iter().fold(None, |acc, x| min(acc, min_implication_gap(x, p))),
        LogicExpr::Implies(a, b) => {
            let gap = (forward(a, p).0 - forward(b, p).0).abs();
            min(Some(gap), min(min_implication_gap(a, p), min_implication_gap(b, p)))
        }
    }
}

/// Largest relative error `|g − n| / max(|g|, |n|, 1)` between the analytic
/// gradient `g` and central differences `n` with the given step.
pub fn grad_check<T: Scalar>(expr: &LogicExpr, probs: &ProbAssignment<T>, step: T) -> Result<T, SoftError> {
    check_probs(expr, probs)?;
    for v in expr.vars() {
        let p = probs[v];
        if p - step <= T::zero() || p + step >= T::one() {
            return Err(SoftError::ProbabilityOutOfRange {
                var: v.to_string(),
                value: p.as_f64(),
            });
        }
    }
    if let Some(gap) = min_implication_gap(expr, probs) {
        if gap <= T::lit(10.0) * step {
            return Err(SoftError::KinkPoint);
        }
    }
    let analytic = eval_product(expr, probs)?.grad;
    let mut worst = T::zero();
    let mut shifted = probs.clone();
    for v in expr.vars() {
        let p = probs[v];
        shifted.insert(v.to_string(), p + step);
        let up = forward(expr, &shifted).0;
        shifted.insert(v.to_string(), p - step);
        let down = forward(expr, &shifted).0;
        shifted.insert(v.to_string(), p);
        let numeric = (up - down) / (step + step);
        let a = analytic[v];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(T::one());
        worst = worst.max(err);
    }
    Ok(worst)
}
