//! Penalty-parameter sweeps, accuracy metrics, selection of the best penalty
//! value, and CSV / summary reports.

use std::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::newton::{solve, Model, SolveStatus, SolverConfig};
use crate::problem::{BilevelProblem, KnownStatus, ProblemMeta};
use crate::Error;

/// Strictly increasing list of positive penalty parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSet {
    values: Vec<f64>,
}

impl LambdaSet {
    pub fn new(values: Vec<f64>) -> Result<Self, Error> {
        if values.is_empty() {
            return Err(Error::Parse("empty lambda set".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Parse(format!("lambda values must be positive and finite: {values:?}")));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parse(format!("lambda values must be strictly increasing: {values:?}")));
        }
        Ok(Self { values })
    }

    /// `2^lo, 2^(lo + step), ..., 2^hi`.
    pub fn powers_of_two(lo: f64, hi: f64, step: f64) -> Result<Self, Error> {
        if !(step > 0.0) || hi < lo {
            return Err(Error::Parse(format!("bad exponent range {lo}..{hi} step {step}")));
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        Self::new((0..count).map(|i| 2f64.powf(lo + step * i as f64)).collect())
    }

    /// `2^-3, 2^-2, ..., 2^7`.
    pub fn default_grid() -> Self {
        Self::powers_of_two(-3.0, 7.0, 1.0).expect("valid range")
    }

    /// `2^-2, 2^-1.5, ..., 2^2`, used for the optimal control family.
    pub fn boc_grid() -> Self {
        Self::powers_of_two(-2.0, 2.0, 0.5).expect("valid range")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Default for LambdaSet {
    fn default() -> Self {
        Self::default_grid()
    }
}

/// Group A: the KKT-model Jacobian needs no third derivatives; group B: it does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::A => "A",
            Group::B => "B",
        })
    }
}

/// Probes the third-order contraction at five seeded random points.
pub fn group_of<P: BilevelProblem + ?Sized>(problem: &P) -> Group {
    let dims = problem.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    for _ in 0..5 {
        let xy: Vec<f64> = (0..dims.nm()).map(|_| rng.random_range(-1.5..1.5)).collect();
        let z: Vec<f64> = (0..dims.q).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s: Vec<f64> = (0..dims.m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = problem.third_contract(&xy, &z, &s);
        if t.iter().any(|v| !v.is_finite() || v.abs() > 1e-10) {
            return Group::B;
        }
    }
    Group::A
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub problem: String,
    pub model: Model,
    pub lambda: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub wall_time_ms: f64,
    pub upper_value: f64,
    pub lower_value: f64,
    /// Euclidean residual norm at termination.
    pub residual: f64,
    pub eoc: Option<f64>,
    pub alpha_last: Option<f64>,
    pub group: Group,
}

impl SweepRow {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// Equality on every column except timing.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let same_opt = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => a.to_bits() == b.to_bits(),
            (None, None) => true,
            _ => false,
        };
        self.problem == other.problem
            && self.model == other.model
            && self.lambda.to_bits() == other.lambda.to_bits()
            && self.status == other.status
            && self.iterations == other.iterations
            && self.upper_value.to_bits() == other.upper_value.to_bits()
            && self.lower_value.to_bits() == other.lower_value.to_bits()
            && self.residual.to_bits() == other.residual.to_bits()
            && same_opt(self.eoc, other.eoc)
            && same_opt(self.alpha_last, other.alpha_last)
            && self.group == other.group
    }
}

#[cfg(feature = "parallel")]
fn ordered_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn ordered_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.iter().map(f).collect()
}

fn run_row<P: BilevelProblem + ?Sized>(
    problem: &P,
    model: Model,
    lambda: f64,
    config: &SolverConfig,
    start: &[f64],
    group: Group,
) -> SweepRow {
    let cfg = SolverConfig { lambda, ..*config };
    match solve(model, problem, &cfg, start) {
        Ok(r) => SweepRow {
            problem: problem.name().to_string(),
            model,
            lambda,
            status: r.status,
            iterations: r.iterations,
            wall_time_ms: r.wall_time_ms,
            upper_value: r.upper_value,
            lower_value: r.lower_value,
            residual: r.final_residual(),
            eoc: r.eoc,
            alpha_last: r.alpha_last(),
            group,
        },
        Err(_) => SweepRow {
            problem: problem.name().to_string(),
            model,
            lambda,
            status: SolveStatus::NumericalBreakdown,
            iterations: 0,
            wall_time_ms: 0.0,
            upper_value: f64::NAN,
            lower_value: f64::NAN,
            residual: f64::NAN,
            eoc: None,
            alpha_last: None,
            group,
        },
    }
}

/// One independent solve per penalty value, all from `start`; rows come back in
/// `lambdas` order. Solver failures are recorded in the row, never propagated.
pub fn sweep<P: BilevelProblem + ?Sized>(
    problem: &P,
    model: Model,
    lambdas: &LambdaSet,
    config: &SolverConfig,
    start: &[f64],
) -> Vec<SweepRow> {
    let group = group_of(problem);
    ordered_map(lambdas.values(), |&lambda| run_row(problem, model, lambda, config, start, group))
}

/// A problem, model and start point to sweep.
pub struct SweepJob<'a> {
    pub problem: &'a dyn BilevelProblem,
    pub model: Model,
    pub start: Vec<f64>,
}

/// Sweeps several jobs, parallel over jobs and penalty values. Output order is
/// job order, then `lambdas` order.
pub fn sweep_many(jobs: &[SweepJob<'_>], lambdas: &LambdaSet, config: &SolverConfig) -> Vec<SweepRow> {
    let groups: Vec<Group> = ordered_map(jobs, |j| group_of(j.problem));
    let tasks: Vec<(usize, f64)> =
        (0..jobs.len()).flat_map(|j| lambdas.values().iter().map(move |&l| (j, l))).collect();
    ordered_map(&tasks, |&(j, lambda)| {
        let job = &jobs[j];
        run_row(job.problem, job.model, lambda, config, &job.start, groups[j])
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaMetrics {
    pub delta_upper: f64,
    pub delta_lower: f64,
    pub delta: f64,
}

/// Relative deviations from reference values. With an `optimal` reference the
/// combined value is the larger magnitude; with a merely `known` one it is the
/// larger signed value, so it goes negative when both objectives improve.
pub fn delta_metrics(
    upper: f64,
    lower: f64,
    upper_known: f64,
    lower_known: f64,
    status: KnownStatus,
) -> Result<DeltaMetrics, Error> {
    let du = (upper - upper_known) / upper_known.abs().max(1.0);
    let dl = (lower - lower_known) / lower_known.abs().max(1.0);
    let delta = match status {
        KnownStatus::Optimal => du.abs().max(dl.abs()),
        KnownStatus::Known => du.max(dl),
        KnownStatus::Unknown => return Err(Error::UnknownStatus),
    };
    Ok(DeltaMetrics { delta_upper: du, delta_lower: dl, delta })
}

/// Score used to rank a row: `delta` when reference values exist, the upper
/// objective otherwise. Non-finite scores rank last.
pub fn selection_score(row: &SweepRow, meta: &ProblemMeta) -> f64 {
    let score = match (meta.status, meta.upper_known, meta.lower_known) {
        (KnownStatus::Optimal | KnownStatus::Known, Some(fu), Some(fl)) => {
            delta_metrics(row.upper_value, row.lower_value, fu, fl, meta.status).map(|d| d.delta).unwrap_or(f64::NAN)
        }
        _ => row.upper_value,
    };
    if score.is_nan() {
        f64::INFINITY
    } else {
        score
    }
}

/// Best row by [`selection_score`] among converged rows (all rows if none
/// converged); ties go to the smallest penalty. `None` only for empty input.
pub fn select_lambda_star<'a>(rows: &'a [SweepRow], meta: &ProblemMeta) -> Option<(f64, &'a SweepRow)> {
    let any_converged = rows.iter().any(SweepRow::converged);
    rows.iter()
        .filter(|r| !any_converged || r.converged())
        .map(|r| (selection_score(r, meta), r))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.lambda.total_cmp(&b.1.lambda)))
        .map(|(_, r)| (r.lambda, r))
}

pub const CSV_HEADER: [&str; 11] =
    ["problem", "model", "lambda", "status", "iterations", "time_ms", "F", "f", "residual", "eoc", "alpha_last"];

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV text with one line per row under [`CSV_HEADER`].
pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.problem.clone(),
            r.model.to_string(),
            r.lambda.to_string(),
            r.status.to_string(),
            r.iterations.to_string(),
            format!("{:.3}", r.wall_time_ms),
            r.upper_value.to_string(),
            r.lower_value.to_string(),
            r.residual.to_string(),
            opt_field(r.eoc),
            opt_field(r.alpha_last),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// Aggregate over the rows of one `(model, lambda)` cell, optionally restricted to a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub model: Model,
    pub lambda: f64,
    pub group: Option<Group>,
    pub runs: usize,
    pub mean_iterations: f64,
    pub mean_time_ms: f64,
    pub time_per_iter_ms: f64,
    /// Runs that ended without meeting the residual tolerance.
    pub failures: usize,
    /// Runs whose last accepted step was a full step.
    pub full_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: Vec<SummaryCell>,
    pub group_cells: Vec<SummaryCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reports {
    pub csv: String,
    pub summary: Summary,
    pub summary_text: String,
    pub summary_json: String,
}

fn aggregate(model: Model, lambda: f64, group: Option<Group>, rows: &[&SweepRow]) -> SummaryCell {
    let runs = rows.len();
    let iters: usize = rows.iter().map(|r| r.iterations).sum();
    let time: f64 = rows.iter().map(|r| r.wall_time_ms).sum();
    SummaryCell {
        model,
        lambda,
        group,
        runs,
        mean_iterations: if runs > 0 { iters as f64 / runs as f64 } else { 0.0 },
        mean_time_ms: if runs > 0 { time / runs as f64 } else { 0.0 },
        time_per_iter_ms: if iters > 0 { time / iters as f64 } else { 0.0 },
        failures: rows.iter().filter(|r| !r.converged()).count(),
        full_steps: rows.iter().filter(|r| r.alpha_last == Some(1.0)).count(),
    }
}

fn keys(rows: &[SweepRow]) -> Vec<(Model, f64)> {
    let mut out: Vec<(Model, f64)> = Vec::new();
    for r in rows {
        if !out.iter().any(|(m, l)| *m == r.model && l.to_bits() == r.lambda.to_bits()) {
            out.push((r.model, r.lambda));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    out
}

pub fn summarize(rows: &[SweepRow]) -> Summary {
    let mut cells = Vec::new();
    let mut group_cells = Vec::new();
    for (model, lambda) in keys(rows) {
        let sel: Vec<&SweepRow> =
            rows.iter().filter(|r| r.model == model && r.lambda.to_bits() == lambda.to_bits()).collect();
        cells.push(aggregate(model, lambda, None, &sel));
        for g in [Group::A, Group::B] {
            let part: Vec<&SweepRow> = sel.iter().copied().filter(|r| r.group == g).collect();
            if !part.is_empty() {
                group_cells.push(aggregate(model, lambda, Some(g), &part));
            }
        }
    }
    Summary { cells, group_cells }
}

fn summary_table(summary: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<6} {:>10} {:>5} {:>5} {:>10} {:>12} {:>12} {:>8} {:>6}",
        "model", "lambda", "group", "runs", "mean_iter", "mean_ms", "ms_per_iter", "failures", "full"
    );
    for c in summary.cells.iter().chain(&summary.group_cells) {
        let group = c.group.map(|g| g.to_string()).unwrap_or_else(|| "all".into());
        let _ = writeln!(
            out,
            "{:<6} {:>10.4} {:>5} {:>5} {:>10.2} {:>12.3} {:>12.4} {:>8} {:>6}",
            c.model.to_string(),
            c.lambda,
            group,
            c.runs,
            c.mean_iterations,
            c.mean_time_ms,
            c.time_per_iter_ms,
            c.failures,
            c.full_steps
        );
    }
    out
}

/// CSV, plain-text summary table and JSON summary for a set of rows.
pub fn render_reports(rows: &[SweepRow]) -> Reports {
    let summary = summarize(rows);
    Reports {
        csv: rows_to_csv(rows),
        summary_text: summary_table(&summary),
        summary_json: serde_json::to_string_pretty(&summary).expect("summary serializes"),
        summary,
    }
}
