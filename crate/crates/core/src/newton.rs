//! Globalized semismooth Newton method for the two residual systems.
//!
//! Each iteration solves `W d = -Phi` with `W` a generalized Jacobian element and
//! falls back to the steepest-descent direction of the merit function
//! `Psi = |Phi|^2 / 2` when the Newton direction is unavailable or not a
//! sufficient descent direction. Steps are chosen by Armijo backtracking.

use std::fmt;
use std::str::FromStr;
use web_time::Instant;

use serde::{Deserialize, Serialize};

use crate::kkt::{jacobian_kkt, residual_kkt, KktPoint};
use crate::linalg::{norm_inf, solve_linear, Matrix, Vector};
use crate::llvf::{jacobian_llvf, residual_llvf, LlvfPoint};
use crate::problem::BilevelProblem;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Kkt,
    Llvf,
}

impl Model {
    pub const ALL: [Model; 2] = [Model::Kkt, Model::Llvf];

    pub fn system_len(self, dims: crate::Dims) -> usize {
        match self {
            Model::Kkt => dims.kkt_len(),
            Model::Llvf => dims.llvf_len(),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Kkt => "kkt",
            Model::Llvf => "llvf",
        })
    }
}

impl FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "kkt" => Ok(Model::Kkt),
            "llvf" => Ok(Model::Llvf),
            other => Err(Error::Parse(format!("unknown model '{other}'"))),
        }
    }
}

/// Evaluates the residual of `model` at the flat point `zeta`.
pub fn residual<P: BilevelProblem + ?Sized>(
    model: Model,
    problem: &P,
    lambda: f64,
    zeta: &[f64],
) -> Result<Vector, Error> {
    let dims = problem.dims();
    match model {
        Model::Kkt => residual_kkt(problem, lambda, &KktPoint::from_slice(dims, zeta)?),
        Model::Llvf => residual_llvf(problem, lambda, &LlvfPoint::from_slice(dims, zeta)?),
    }
}

/// Generalized Jacobian element of `model` at the flat point `zeta`.
pub fn jacobian<P: BilevelProblem + ?Sized>(
    model: Model,
    problem: &P,
    lambda: f64,
    zeta: &[f64],
) -> Result<Matrix, Error> {
    let dims = problem.dims();
    match model {
        Model::Kkt => jacobian_kkt(problem, lambda, &KktPoint::from_slice(dims, zeta)?),
        Model::Llvf => jacobian_llvf(problem, lambda, &LlvfPoint::from_slice(dims, zeta)?),
    }
}

/// `|Phi|^2 / 2`.
pub fn merit<P: BilevelProblem + ?Sized>(model: Model, problem: &P, lambda: f64, zeta: &[f64]) -> Result<f64, Error> {
    Ok(0.5 * residual(model, problem, lambda, zeta)?.norm_squared())
}

/// `W' Phi` with `W` the Jacobian element used by the solver.
pub fn merit_gradient<P: BilevelProblem + ?Sized>(
    model: Model,
    problem: &P,
    lambda: f64,
    zeta: &[f64],
) -> Result<Vector, Error> {
    let r = residual(model, problem, lambda, zeta)?;
    Ok(jacobian(model, problem, lambda, zeta)?.transpose() * r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub rho: f64,
    pub sigma: f64,
    pub t: f64,
    pub max_iter: usize,
    pub s_max: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { lambda: 1.0, beta: 1e-8, epsilon: 1e-8, rho: 0.5, sigma: 1e-4, t: 2.1, max_iter: 2000, s_max: 50 }
    }
}

impl SolverConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self { lambda, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let ok = self.lambda > 0.0
            && self.beta > 0.0
            && self.epsilon >= 0.0
            && self.rho > 0.0
            && self.rho < 1.0
            && self.sigma > 0.0
            && self.sigma < 0.5
            && self.t > 2.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Parse(format!("invalid solver configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    LineSearchFailure,
    NumericalBreakdown,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::LineSearchFailure => "line_search_failure",
            SolveStatus::NumericalBreakdown => "numerical_breakdown",
        })
    }
}

impl FromStr for SolveStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "converged" => Ok(SolveStatus::Converged),
            "max_iter" => Ok(SolveStatus::MaxIter),
            "line_search_failure" => Ok(SolveStatus::LineSearchFailure),
            "numerical_breakdown" => Ok(SolveStatus::NumericalBreakdown),
            other => Err(Error::Parse(format!("unknown status '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub model: Model,
    pub lambda: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Euclidean residual norms, one per iterate including the start.
    pub residual_history: Vec<f64>,
    /// Accepted step sizes `rho^s`, one per iteration.
    pub step_sizes: Vec<f64>,
    pub newton_step_used: Vec<bool>,
    pub final_point: Vec<f64>,
    pub final_residual_inf: f64,
    pub upper_value: f64,
    pub lower_value: f64,
    pub eoc: Option<f64>,
    pub wall_time_ms: f64,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().expect("history holds the start")
    }

    pub fn alpha_last(&self) -> Option<f64> {
        self.step_sizes.last().copied()
    }

    /// `(x, y)` part of the final point.
    pub fn final_xy(&self, dims: crate::Dims) -> &[f64] {
        &self.final_point[..dims.nm()]
    }
}

/// Experimental order of convergence from the last three residual norms.
///
/// Undefined with fewer than three entries or when any of the last three is `>= 1`.
pub fn eoc(history: &[f64]) -> Option<f64> {
    if history.len() < 3 {
        return None;
    }
    let tail = &history[history.len() - 3..];
    if tail.iter().any(|r| !(*r < 1.0) || *r < 0.0) {
        return None;
    }
    let (a, b, c) = (tail[0].ln(), tail[1].ln(), tail[2].ln());
    Some((b / a).max(c / b))
}

/// Starting point built from `(x0, y0)`.
///
/// KKT model: `z = -|g|`, `s = 0`, `u = |G|`, `v = w = |g|`.
/// Value-function model: `z = y0`, `u = |G|`, `v = w = |g|`.
pub fn default_start<P: BilevelProblem + ?Sized>(problem: &P, model: Model, x0: &[f64], y0: &[f64]) -> Vec<f64> {
    let dims = problem.dims();
    assert_eq!(x0.len(), dims.n);
    assert_eq!(y0.len(), dims.m);
    let xy: Vec<f64> = x0.iter().chain(y0).copied().collect();
    let g_abs: Vec<f64> = problem.lower_cons(&xy).iter().map(|v| v.abs()).collect();
    let u: Vec<f64> = problem.upper_cons(&xy).iter().map(|v| v.abs()).collect();
    let mut out = xy.clone();
    match model {
        Model::Kkt => {
            out.extend(g_abs.iter().map(|v| -v));
            out.extend(std::iter::repeat_n(0.0, dims.m));
            out.extend(&u);
            out.extend(&g_abs);
            out.extend(&g_abs);
        }
        Model::Llvf => {
            out.extend(y0);
            out.extend(&u);
            out.extend(&g_abs);
            out.extend(&g_abs);
        }
    }
    out
}

/// [`default_start`] at `x0 = 1`, `y0 = 1`.
pub fn default_start_ones<P: BilevelProblem + ?Sized>(problem: &P, model: Model) -> Vec<f64> {
    let d = problem.dims();
    default_start(problem, model, &vec![1.0; d.n], &vec![1.0; d.m])
}

fn all_finite(v: &Vector) -> bool {
    v.iter().all(|e| e.is_finite())
}

struct Trial {
    zeta: Vec<f64>,
    phi: Vector,
    alpha: f64,
}

/// Armijo backtracking along `d`; `None` if no step within `s_max` halvings passes.
fn backtrack<P: BilevelProblem + ?Sized>(
    model: Model,
    problem: &P,
    config: &SolverConfig,
    zeta: &[f64],
    psi: f64,
    slope: f64,
    d: &Vector,
) -> Result<Option<Trial>, Error> {
    let mut alpha = 1.0;
    for _ in 0..=config.s_max {
        let cand: Vec<f64> = zeta.iter().zip(d.iter()).map(|(z, di)| z + alpha * di).collect();
        let phi = residual(model, problem, config.lambda, &cand)?;
        if all_finite(&phi) && 0.5 * phi.norm_squared() <= psi + 2.0 * config.sigma * alpha * slope {
            return Ok(Some(Trial { zeta: cand, phi, alpha }));
        }
        alpha *= config.rho;
    }
    Ok(None)
}

/// Runs the globalized semismooth Newton method from `start`.
pub fn solve<P: BilevelProblem + ?Sized>(
    model: Model,
    problem: &P,
    config: &SolverConfig,
    start: &[f64],
) -> Result<SolveReport, Error> {
    config.validate()?;
    let clock = Instant::now();
    let lambda = config.lambda;
    let mut zeta = start.to_vec();
    let mut phi = residual(model, problem, lambda, &zeta)?;
    let mut history = vec![phi.norm()];
    let mut steps = Vec::new();
    let mut newton_used = Vec::new();

    let status = loop {
        let norm = *history.last().unwrap();
        if !norm.is_finite() {
            break SolveStatus::NumericalBreakdown;
        }
        if norm <= config.epsilon {
            break SolveStatus::Converged;
        }
        if steps.len() >= config.max_iter {
            break SolveStatus::MaxIter;
        }
        let w = jacobian(model, problem, lambda, &zeta)?;
        if w.iter().any(|v| !v.is_finite()) {
            break SolveStatus::NumericalBreakdown;
        }
        let grad = w.transpose() * &phi;
        let psi = 0.5 * phi.norm_squared();

        let newton = solve_linear(&w, &-&phi)
            .ok()
            .filter(|d| all_finite(d) && grad.dot(d) <= -config.beta * d.norm().powf(config.t));
        let mut accepted = None;
        if let Some(d) = &newton {
            accepted = backtrack(model, problem, config, &zeta, psi, grad.dot(d), d)?.map(|t| (t, true));
        }
        if accepted.is_none() {
            let d = -&grad;
            let slope = grad.dot(&d);
            if slope < 0.0 {
                accepted = backtrack(model, problem, config, &zeta, psi, slope, &d)?.map(|t| (t, false));
            }
        }
        match accepted {
            Some((trial, used_newton)) => {
                zeta = trial.zeta;
                phi = trial.phi;
                history.push(phi.norm());
                steps.push(trial.alpha);
                newton_used.push(used_newton);
            }
            None => break SolveStatus::LineSearchFailure,
        }
    };

    let dims = problem.dims();
    let xy = &zeta[..dims.nm()];
    Ok(SolveReport {
        model,
        lambda,
        status,
        iterations: steps.len(),
        eoc: eoc(&history),
        final_residual_inf: norm_inf(&phi),
        upper_value: problem.upper_obj(xy),
        lower_value: problem.lower_obj(xy),
        residual_history: history,
        step_sizes: steps,
        newton_step_used: newton_used,
        final_point: zeta,
        wall_time_ms: clock.elapsed().as_secs_f64() * 1e3,
    })
}
