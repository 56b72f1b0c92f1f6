//! Browser bindings. Every export takes plain values and returns a JSON string;
//! the `*_json` functions carry the logic and are also callable natively.

use bisolve::bench::{sweep, LambdaSet, SweepRow};
use bisolve::diagnostics::lower_level_oracle;
use bisolve::newton::{default_start, solve, SolveStatus};
use bisolve::suite::{get_problem, PROBLEM_NAMES};
use bisolve::{BilevelProblem, Model, SolverConfig};
use std::sync::Arc;

use serde::Serialize;
use wasm_bindgen::prelude::*;

const ORACLE_RADIUS: f64 = 4.0;
const ORACLE_POINTS: usize = 41;
const MAX_CURVE_SAMPLES: usize = 401;

#[derive(Serialize)]
struct ProblemInfo {
    name: &'static str,
    n: usize,
    m: usize,
    upper_known: Option<f64>,
    lower_known: Option<f64>,
    curve: bool,
}

#[derive(Serialize)]
struct Trace {
    status: String,
    iterations: usize,
    residual_history: Vec<f64>,
    step_sizes: Vec<f64>,
    newton_step_used: Vec<bool>,
    upper_value: f64,
    lower_value: f64,
    eoc: Option<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
}

#[derive(Serialize)]
struct Sweep {
    rows: Vec<SweepRow>,
    upper_known: Option<f64>,
    lower_known: Option<f64>,
}

#[derive(Serialize)]
struct Curve {
    x: Vec<f64>,
    /// Lower-level optimal value.
    phi: Vec<f64>,
    /// Upper objective at the lower-level minimizer.
    upper: Vec<f64>,
    /// `(x, F)` reached by value-function runs over the default penalty grid.
    solutions: Vec<(f64, f64)>,
}

fn parse_model(model: &str) -> Result<Model, String> {
    match model {
        "kkt" => Ok(Model::Kkt),
        "llvf" => Ok(Model::Llvf),
        other => Err(format!("unknown model '{other}'")),
    }
}

fn load(name: &str) -> Result<Arc<dyn BilevelProblem>, String> {
    get_problem(name).map(|(p, _)| p).map_err(|e| e.to_string())
}

fn start_of(problem: &dyn BilevelProblem, model: Model) -> Vec<f64> {
    let d = problem.dims();
    let (x0, y0) = problem.meta().start.clone().unwrap_or_else(|| (vec![1.0; d.n], vec![1.0; d.m]));
    default_start(problem, model, &x0, &y0)
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

fn curve_capable(problem: &dyn BilevelProblem) -> bool {
    let d = problem.dims();
    d.n == 1 && d.m <= 3
}

pub fn problems_json() -> String {
    let list: Vec<ProblemInfo> = PROBLEM_NAMES
        .iter()
        .map(|&name| {
            let p = load(name).expect("registered");
            let d = p.dims();
            ProblemInfo {
                name,
                n: d.n,
                m: d.m,
                upper_known: p.meta().upper_known,
                lower_known: p.meta().lower_known,
                curve: curve_capable(p.as_ref()),
            }
        })
        .collect();
    json(&list)
}

pub fn solve_trace_json(problem: &str, model: &str, lambda: f64) -> Result<String, String> {
    let p = load(problem)?;
    let model = parse_model(model)?;
    let r = solve(model, p.as_ref(), &SolverConfig::with_lambda(lambda), &start_of(p.as_ref(), model))
        .map_err(|e| e.to_string())?;
    let d = p.dims();
    Ok(json(&Trace {
        status: r.status.to_string(),
        iterations: r.iterations,
        upper_value: r.upper_value,
        lower_value: r.lower_value,
        eoc: r.eoc,
        x: r.final_point[..d.n].to_vec(),
        y: r.final_point[d.n..d.n + d.m].to_vec(),
        residual_history: r.residual_history,
        step_sizes: r.step_sizes,
        newton_step_used: r.newton_step_used,
    }))
}

pub fn lambda_sweep_json(problem: &str, model: &str) -> Result<String, String> {
    let p = load(problem)?;
    let model = parse_model(model)?;
    let grid = if problem == "boc" { LambdaSet::boc_grid() } else { LambdaSet::default_grid() };
    let rows = sweep(p.as_ref(), model, &grid, &SolverConfig::default(), &start_of(p.as_ref(), model));
    Ok(json(&Sweep { rows, upper_known: p.meta().upper_known, lower_known: p.meta().lower_known }))
}

pub fn value_curve_json(problem: &str, lo: f64, hi: f64, samples: usize) -> Result<String, String> {
    let p = load(problem)?;
    if !curve_capable(p.as_ref()) {
        return Err(format!("{problem}: curves need one upper-level and at most three lower-level variables"));
    }
    if !(lo < hi) || !(2..=MAX_CURVE_SAMPLES).contains(&samples) {
        return Err(format!("need lo < hi and 2..={MAX_CURVE_SAMPLES} samples"));
    }
    let d = p.dims();
    let mut curve = Curve { x: Vec::new(), phi: Vec::new(), upper: Vec::new(), solutions: Vec::new() };
    let center = vec![0.0; d.m];
    for i in 0..samples {
        let x = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
        // Infeasible x simply leave a gap in the curve.
        if let Ok(o) = lower_level_oracle(p.as_ref(), &[x], &center, ORACLE_RADIUS, ORACLE_POINTS) {
            let xy: Vec<f64> = std::iter::once(x).chain(o.argmin.iter().copied()).collect();
            curve.x.push(x);
            curve.phi.push(o.phi);
            curve.upper.push(p.upper_obj(&xy));
        }
    }
    let start = start_of(p.as_ref(), Model::Llvf);
    for &lambda in LambdaSet::default_grid().values() {
        let r =
            solve(Model::Llvf, p.as_ref(), &SolverConfig::with_lambda(lambda), &start).map_err(|e| e.to_string())?;
        if r.status == SolveStatus::Converged {
            curve.solutions.push((r.final_point[0], r.upper_value));
        }
    }
    Ok(json(&curve))
}

#[wasm_bindgen]
pub fn problems() -> String {
    problems_json()
}

#[wasm_bindgen]
pub fn solve_trace(problem: &str, model: &str, lambda: f64) -> Result<String, JsValue> {
    solve_trace_json(problem, model, lambda).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn lambda_sweep(problem: &str, model: &str) -> Result<String, JsValue> {
    lambda_sweep_json(problem, model).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn value_curve(problem: &str, lo: f64, hi: f64, samples: usize) -> Result<String, JsValue> {
    value_curve_json(problem, lo, hi, samples).map_err(|e| JsValue::from_str(&e))
}
