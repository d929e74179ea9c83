use std::collections::BTreeMap;

use proptest::prelude::*;
use qchain::constraints::LogicExpr;
use qchain::softlogic::{eval_product, ProbAssignment};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VARS: [&str; 3] = ["q1", "q2", "q3"];

fn expr_strategy() -> impl Strategy<Value = LogicExpr> {
    let leaf = (0..3usize).prop_map(|i| LogicExpr::var(VARS[i]));
    leaf.prop_recursive(3, 24, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(LogicExpr::not),
            prop::collection::vec(inner.clone(), 2..=3).prop_map(LogicExpr::And),
            prop::collection::vec(inner.clone(), 2..=3).prop_map(LogicExpr::Or),
            (inner.clone(), inner).prop_map(|(a, b)| LogicExpr::implies(a, b)),
        ]
    })
}

fn probs_strategy() -> impl Strategy<Value = ProbAssignment<f64>> {
    prop::array::uniform3(0.0..=1.0f64).prop_map(|ps| VARS.iter().map(|v| v.to_string()).zip(ps).collect())
}

// Straight from the connective definitions.
fn reference(e: &LogicExpr, p: &ProbAssignment<f64>) -> f64 {
    match e {
        LogicExpr::Var(v) => p[v],
        LogicExpr::Not(x) => 1.0 - reference(x, p),
        LogicExpr::And(xs) => xs.iter().map(|x| reference(x, p)).product(),
        LogicExpr::Or(xs) => xs.iter().map(|x| reference(x, p)).fold(0.0, |a, b| a + b - a * b),
        LogicExpr::Implies(a, b) => {
            let (a, b) = (reference(a, p), reference(b, p));
            if a <= b {
                1.0
            } else {
                b / a
            }
        }
    }
}

fn value(e: &LogicExpr, p: &ProbAssignment<f64>) -> f64 {
    eval_product(e, p).unwrap().value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn matches_reference_and_stays_in_range(e in expr_strategy(), p in probs_strategy()) {
        let r = eval_product(&e, &p).unwrap();
        prop_assert!(r.value.is_finite() && (0.0..=1.0).contains(&r.value));
        prop_assert!((0.0..=1.0).contains(&r.violation));
        prop_assert!((r.value - reference(&e, &p)).abs() <= 1e-12);
        prop_assert!(r.grad.values().all(|g| g.is_finite()));
    }

    #[test]
    fn boolean_corners_agree(e in expr_strategy(), bits in 0u8..8) {
        let env: BTreeMap<String, bool> = VARS.iter().enumerate().map(|(i, v)| (v.to_string(), bits >> i & 1 == 1)).collect();
        let p: ProbAssignment<f64> = env.iter().map(|(k, &b)| (k.clone(), if b { 1.0 } else { 0.0 })).collect();
        let expected = if e.eval_bool(&env).unwrap() { 1.0 } else { 0.0 };
        prop_assert_eq!(value(&e, &p), expected);
    }

    #[test]
    fn implication_monotone_in_consequent(a in 0.0..=1.0f64, b in 0.0..=1.0f64, db in 0.0..=1.0f64) {
        let imp = LogicExpr::implies(LogicExpr::var("q1"), LogicExpr::var("q2"));
        let at = |b: f64| value(&imp, &[("q1".to_string(), a), ("q2".to_string(), b)].into());
        prop_assert!(at((b + db).min(1.0)) >= at(b));
    }

    #[test]
    fn conjunction_monotone(a in 0.0..=1.0f64, b in 0.0..=1.0f64, c in 0.0..=1.0f64, da in 0.0..=1.0f64) {
        let and = LogicExpr::And(vec![LogicExpr::var("q1"), LogicExpr::var("q2"), LogicExpr::var("q3")]);
        let at = |a: f64| value(&and, &[("q1".to_string(), a), ("q2".to_string(), b), ("q3".to_string(), c)].into());
        prop_assert!(at((a + da).min(1.0)) >= at(a));
    }

    #[test]
    fn conjunction_and_disjunction_associate(p in probs_strategy()) {
        let v = |i: usize| LogicExpr::var(VARS[i]);
        for op in [LogicExpr::And as fn(Vec<LogicExpr>) -> LogicExpr, LogicExpr::Or] {
            let flat = value(&op(vec![v(0), v(1), v(2)]), &p);
            let left = value(&op(vec![op(vec![v(0), v(1)]), v(2)]), &p);
            let right = value(&op(vec![v(0), op(vec![v(1), v(2)])]), &p);
            prop_assert!((flat - left).abs() <= 1e-12 && (flat - right).abs() <= 1e-12);
        }
    }
}

fn random_expr(rng: &mut ChaCha8Rng, depth: u32) -> LogicExpr {
    if depth == 0 || rng.gen_bool(0.25) {
        return LogicExpr::var(VARS[rng.gen_range(0..3)]);
    }
    let kids = |n: usize, rng: &mut ChaCha8Rng| (0..n).map(|_| random_expr(rng, depth - 1)).collect::<Vec<_>>();
    match rng.gen_range(0..4) {
        0 => LogicExpr::not(random_expr(rng, depth - 1)),
        1 => {
            let n = rng.gen_range(2..=3);
            LogicExpr::And(kids(n, rng))
        }
        2 => {
            let n = rng.gen_range(2..=3);
            LogicExpr::Or(kids(n, rng))
        }
        _ => LogicExpr::implies(random_expr(rng, depth - 1), random_expr(rng, depth - 1)),
    }
}

fn near_kink(e: &LogicExpr, p: &ProbAssignment<f64>, tol: f64) -> bool {
    match e {
        LogicExpr::Var(_) => false,
        LogicExpr::Not(x) => near_kink(x, p, tol),
        LogicExpr::And(xs) | LogicExpr::Or(xs) => xs.iter().any(|x| near_kink(x, p, tol)),
        LogicExpr::Implies(a, b) => {
            (reference(a, p) - reference(b, p)).abs() <= tol || near_kink(a, p, tol) || near_kink(b, p, tol)
        }
    }
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-6;
    let mut checked = 0;
    while checked < 1000 {
        let e = random_expr(&mut rng, 3);
        let p: ProbAssignment<f64> = VARS
            .iter()
            .map(|v| (v.to_string(), rng.gen_range(0.02..0.98)))
            .collect();
        if near_kink(&e, &p, 1e-4) {
            continue;
        }
        let analytic = eval_product(&e, &p).unwrap().grad;
        for v in e.vars() {
            let mut q = p.clone();
            q.insert(v.to_string(), p[v] + h);
            let up = reference(&e, &q);
            q.insert(v.to_string(), p[v] - h);
            let down = reference(&e, &q);
            let numeric = (up - down) / (2.0 * h);
            let g = analytic[v];
            assert!(
                (g - numeric).abs() <= 1e-5 * g.abs().max(numeric.abs()).max(1.0),
                "{e} at {p:?}: d/d{v} analytic {g} numeric {numeric}"
            );
        }
        checked += 1;
    }
}
