//! Sweep-level invariants on the bundled problems.

use bisolve::bench::{delta_metrics, select_lambda_star, selection_score, sweep, LambdaSet};
use bisolve::diagnostics::lower_level_oracle;
use bisolve::newton::{default_start_ones, solve, Model, SolveStatus, SolverConfig};
use bisolve::suite::{get_problem, small_problem_names, PROBLEM_NAMES};
use bisolve::KnownStatus;

const ORACLE_SLACK: f64 = 1e-3;
const ORACLE_RADIUS: f64 = 3.0;
const ORACLE_POINTS: usize = 61;
const DELTA_GATE: f64 = 0.05;
const MIN_EOC: f64 = 1.5;

/// `(problem, lambda, f at the copy or at y, oracle value)` for every converged value-function run.
fn oracle_rows(use_copy: bool) -> Vec<(String, f64, f64, f64)> {
    let mut out = Vec::new();
    for name in small_problem_names() {
        let (p, _) = get_problem(name).unwrap();
        let d = p.dims();
        let start = default_start_ones(p.as_ref(), Model::Llvf);
        for &lambda in LambdaSet::default_grid().values() {
            let r = solve(Model::Llvf, p.as_ref(), &SolverConfig::with_lambda(lambda), &start).unwrap();
            if r.status != SolveStatus::Converged {
                continue;
            }
            let x = &r.final_point[..d.n];
            let z = &r.final_point[d.nm()..d.nm() + d.m];
            let xz: Vec<f64> = x.iter().chain(z).copied().collect();
            let phi = lower_level_oracle(p.as_ref(), x, z, ORACLE_RADIUS, ORACLE_POINTS).unwrap().phi;
            let f = if use_copy { p.lower_obj(&xz) } else { r.lower_value };
            out.push((name.to_string(), lambda, f, phi));
        }
    }
    out
}

#[test]
fn converged_copy_is_lower_level_optimal() {
    let rows = oracle_rows(true);
    assert!(!rows.is_empty());
    for (name, lambda, f, phi) in rows {
        assert!(f <= phi + ORACLE_SLACK, "{name} lambda {lambda}: f(x, z) = {f}, phi = {phi}");
    }
}

#[test]
#[ignore = "penalized roots leave y short of the lower-level optimum for small lambda; see decisions ledger"]
fn converged_point_is_lower_level_optimal() {
    for (name, lambda, f, phi) in oracle_rows(false) {
        assert!(f <= phi + ORACLE_SLACK, "{name} lambda {lambda}: f(x, y) = {f}, phi = {phi}");
    }
}

#[test]
fn known_values_give_zero_delta() {
    for name in PROBLEM_NAMES {
        let (p, _) = get_problem(name).unwrap();
        let m = p.meta();
        if let (Some(fu), Some(fl)) = (m.upper_known, m.lower_known) {
            if m.status != KnownStatus::Unknown {
                let d = delta_metrics(fu, fl, fu, fl, m.status).unwrap();
                assert_eq!((d.delta_upper, d.delta_lower, d.delta), (0.0, 0.0, 0.0), "{name}");
            }
        }
    }
}

fn lambda_star_deltas() -> Vec<(String, f64, f64)> {
    small_problem_names()
        .filter_map(|name| {
            let (p, _) = get_problem(name).unwrap();
            (p.meta().status == KnownStatus::Optimal).then(|| {
                let start = default_start_ones(p.as_ref(), Model::Llvf);
                let rows = sweep(p.as_ref(), Model::Llvf, &LambdaSet::default_grid(), &SolverConfig::default(), &start);
                let (lambda, row) = select_lambda_star(&rows, p.meta()).unwrap();
                (name.to_string(), lambda, selection_score(row, p.meta()))
            })
        })
        .collect()
}

#[test]
fn lambda_star_delta_small_except_sc98() {
    for (name, lambda, delta) in lambda_star_deltas() {
        if name != "sc98" {
            assert!(delta <= DELTA_GATE, "{name}: delta {delta} at lambda* {lambda}");
        }
    }
}

#[test]
#[ignore = "sc98 from the all-ones start never reaches its optimum; see decisions ledger"]
fn lambda_star_delta_small_everywhere() {
    for (name, lambda, delta) in lambda_star_deltas() {
        assert!(delta <= DELTA_GATE, "{name}: delta {delta} at lambda* {lambda}");
    }
}

#[test]
fn bard91_reaches_optimum_with_fast_rate_in_both_models() {
    let (p, _) = get_problem("bard91").unwrap();
    for model in Model::ALL {
        let start = default_start_ones(p.as_ref(), model);
        let rows = sweep(p.as_ref(), model, &LambdaSet::default_grid(), &SolverConfig::default(), &start);
        let fast = rows.iter().any(|r| {
            r.converged()
                && (r.upper_value - 2.0).abs() < 1e-6
                && (r.lower_value - 12.0).abs() < 1e-6
                && r.eoc.is_some_and(|e| e >= MIN_EOC)
        });
        assert!(fast, "{model}: no fast run to the optimum");
    }
}

#[test]
fn sweep_rows_are_reproducible() {
    for name in ["sc98", "bard91", "boc"] {
        let (p, _) = get_problem(name).unwrap();
        for model in Model::ALL {
            let start = default_start_ones(p.as_ref(), model);
            let lambdas = LambdaSet::new(vec![0.5, 2.0]).unwrap();
            let a = sweep(p.as_ref(), model, &lambdas, &SolverConfig::default(), &start);
            let b = sweep(p.as_ref(), model, &lambdas, &SolverConfig::default(), &start);
            assert!(a.iter().zip(&b).all(|(x, y)| x.same_outcome(y)), "{name} {model}");
        }
    }
}
