//! Bundled test problems with reference values and stationary-point fixtures.

use std::sync::Arc;

use crate::linalg::{Matrix, Vector};
use crate::newton::Model;
use crate::problem::{AffineMap, BilevelProblem, Dims, KnownStatus, ProblemMeta, QuadForm, QuadraticProblem};
use crate::Error;

/// A known (approximate) root of one of the residual systems.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub model: Model,
    pub lambda: f64,
    /// Full primal-dual vector in the model's variable order.
    pub point: Vec<f64>,
    pub residual_tol: f64,
    pub description: String,
}

/// Point in the KKT-model conventions of [`crate::kkt::check_kkt_stationarity`]
/// (lower multiplier `z >= 0`, `w <= 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct StationarityFixture {
    pub lambda: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub s: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

type ScalarEval = fn(&[f64]) -> f64;
type GradEval = fn(&[f64]) -> Vec<f64>;
type VecEval = fn(&[f64]) -> Vec<f64>;
/// Row-major flattened matrix.
type MatEval = fn(&[f64]) -> Vec<f64>;
type HessIdxEval = fn(&[f64], usize) -> Vec<f64>;
type ThirdEval = fn(&[f64], &[f64], &[f64]) -> Vec<f64>;

/// Problem given by plain function pointers with hand-derived derivatives.
pub struct AnalyticProblem {
    dims: Dims,
    meta: ProblemMeta,
    upper: (ScalarEval, GradEval, MatEval),
    lower: (ScalarEval, GradEval, MatEval),
    upper_cons: (VecEval, MatEval, HessIdxEval),
    lower_cons: (VecEval, MatEval, HessIdxEval),
    third: ThirdEval,
}

impl AnalyticProblem {
    fn k(&self) -> usize {
        self.dims.nm()
    }
    fn square(&self, v: Vec<f64>) -> Matrix {
        Matrix::from_row_slice(self.k(), self.k(), &v)
    }
}

impl BilevelProblem for AnalyticProblem {
    fn dims(&self) -> Dims {
        self.dims
    }
    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }
    fn upper_obj(&self, xy: &[f64]) -> f64 {
        (self.upper.0)(xy)
    }
    fn upper_obj_grad(&self, xy: &[f64]) -> Vector {
        Vector::from_vec((self.upper.1)(xy))
    }
    fn upper_obj_hess(&self, xy: &[f64]) -> Matrix {
        self.square((self.upper.2)(xy))
    }
    fn upper_cons(&self, xy: &[f64]) -> Vector {
        Vector::from_vec((self.upper_cons.0)(xy))
    }
    fn upper_cons_jac(&self, xy: &[f64]) -> Matrix {
        Matrix::from_row_slice(self.dims.p, self.k(), &(self.upper_cons.1)(xy))
    }
    fn upper_cons_hess(&self, xy: &[f64], i: usize) -> Matrix {
        self.square((self.upper_cons.2)(xy, i))
    }
    fn lower_obj(&self, xy: &[f64]) -> f64 {
        (self.lower.0)(xy)
    }
    fn lower_obj_grad(&self, xy: &[f64]) -> Vector {
        Vector::from_vec((self.lower.1)(xy))
    }
    fn lower_obj_hess(&self, xy: &[f64]) -> Matrix {
        self.square((self.lower.2)(xy))
    }
    fn lower_cons(&self, xy: &[f64]) -> Vector {
        Vector::from_vec((self.lower_cons.0)(xy))
    }
    fn lower_cons_jac(&self, xy: &[f64]) -> Matrix {
        Matrix::from_row_slice(self.dims.q, self.k(), &(self.lower_cons.1)(xy))
    }
    fn lower_cons_hess(&self, xy: &[f64], j: usize) -> Matrix {
        self.square((self.lower_cons.2)(xy, j))
    }
    fn third_contract(&self, xy: &[f64], z: &[f64], s: &[f64]) -> Matrix {
        self.square((self.third)(xy, z, s))
    }
}

fn zero2_i(_: &[f64], _: usize) -> Vec<f64> {
    vec![0.0; 4]
}
fn zero3_i(_: &[f64], _: usize) -> Vec<f64> {
    vec![0.0; 9]
}
fn zero2_third(_: &[f64], _: &[f64], _: &[f64]) -> Vec<f64> {
    vec![0.0; 4]
}
fn zero3_third(_: &[f64], _: &[f64], _: &[f64]) -> Vec<f64> {
    vec![0.0; 9]
}
fn empty(_: &[f64]) -> Vec<f64> {
    Vec::new()
}

fn meta(name: &str, status: KnownStatus, upper: f64, lower: f64) -> ProblemMeta {
    ProblemMeta { name: name.to_string(), status, upper_known: Some(upper), lower_known: Some(lower), start: None }
}

fn cat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

/// F = (x-3)^2 + (y-2)^2, G = (-x, x-8), f = (y-5)^2,
/// g = (-2x+y-1, x-2y+2, x+2y-14). Optimum (1, 3).
pub fn sc98() -> AnalyticProblem {
    AnalyticProblem {
        dims: Dims { n: 1, m: 1, p: 2, q: 3 },
        meta: meta("sc98", KnownStatus::Optimal, 5.0, 4.0),
        upper: (
            |w| (w[0] - 3.0).powi(2) + (w[1] - 2.0).powi(2),
            |w| vec![2.0 * (w[0] - 3.0), 2.0 * (w[1] - 2.0)],
            |_| vec![2.0, 0.0, 0.0, 2.0],
        ),
        lower: (|w| (w[1] - 5.0).powi(2), |w| vec![0.0, 2.0 * (w[1] - 5.0)], |_| vec![0.0, 0.0, 0.0, 2.0]),
        upper_cons: (|w| vec![-w[0], w[0] - 8.0], |_| vec![-1.0, 0.0, 1.0, 0.0], zero2_i),
        lower_cons: (
            |w| vec![-2.0 * w[0] + w[1] - 1.0, w[0] - 2.0 * w[1] + 2.0, w[0] + 2.0 * w[1] - 14.0],
            |_| vec![-2.0, 1.0, 1.0, -2.0, 1.0, 2.0],
            zero2_i,
        ),
        third: zero2_third,
    }
}

/// F = x + y2, G = (-x+2, x-4), f = 2 y1 + x y2, g = (x-y1-y2+4, -y1, -y2).
/// Optimum x = 2, y = (6, 0).
pub fn bard91() -> AnalyticProblem {
    AnalyticProblem {
        dims: Dims { n: 1, m: 2, p: 2, q: 3 },
        meta: meta("bard91", KnownStatus::Optimal, 2.0, 12.0),
        upper: (|w| w[0] + w[2], |_| vec![1.0, 0.0, 1.0], |_| vec![0.0; 9]),
        lower: (
            |w| 2.0 * w[1] + w[0] * w[2],
            |w| vec![w[2], 2.0, w[0]],
            |_| vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        ),
        upper_cons: (|w| vec![-w[0] + 2.0, w[0] - 4.0], |_| vec![-1.0, 0.0, 0.0, 1.0, 0.0, 0.0], zero3_i),
        lower_cons: (
            |w| vec![w[0] - w[1] - w[2] + 4.0, -w[1], -w[2]],
            |_| vec![1.0, -1.0, -1.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0],
            zero3_i,
        ),
        // s' grad_y lbar = s1 * 2 + s2 * x - z' grad_y g, whose Hessian in (x, y) is zero
        third: zero3_third,
    }
}

/// F = x^2 + (y1+y2)^2, G = -x + 0.5, f = y1, g = -(x+y1+y2-1, y1, y2).
/// Optimum x = 0.5, y = (0, 0.5).
pub fn lampariello_sagratella() -> AnalyticProblem {
    AnalyticProblem {
        dims: Dims { n: 1, m: 2, p: 1, q: 3 },
        meta: meta("lampariello-sagratella", KnownStatus::Optimal, 0.5, 0.0),
        upper: (
            |w| w[0] * w[0] + (w[1] + w[2]).powi(2),
            |w| {
                let t = 2.0 * (w[1] + w[2]);
                vec![2.0 * w[0], t, t]
            },
            |_| vec![2.0, 0.0, 0.0, 0.0, 2.0, 2.0, 0.0, 2.0, 2.0],
        ),
        lower: (|w| w[1], |_| vec![0.0, 1.0, 0.0], |_| vec![0.0; 9]),
        upper_cons: (|w| vec![-w[0] + 0.5], |_| vec![-1.0, 0.0, 0.0], zero3_i),
        lower_cons: (
            |w| vec![-(w[0] + w[1] + w[2] - 1.0), -w[1], -w[2]],
            |_| vec![-1.0, -1.0, -1.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0],
            zero3_i,
        ),
        third: zero3_third,
    }
}

/// F = x, G = -x, f = y1, g = (y1^2 - y2 - x, y1^2 + y2).
/// Optimum (0, 0); the lower-level KKT model has no solution.
pub fn dempe_dutta_1() -> AnalyticProblem {
    fn g_hess(_: &[f64], _j: usize) -> Vec<f64> {
        // both constraints carry y1^2
        vec![0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0]
    }
    AnalyticProblem {
        dims: Dims { n: 1, m: 2, p: 1, q: 2 },
        meta: meta("dempe-dutta-1", KnownStatus::Optimal, 0.0, 0.0),
        upper: (|w| w[0], |_| vec![1.0, 0.0, 0.0], |_| vec![0.0; 9]),
        lower: (|w| w[1], |_| vec![0.0, 1.0, 0.0], |_| vec![0.0; 9]),
        upper_cons: (|w| vec![-w[0]], |_| vec![-1.0, 0.0, 0.0], zero3_i),
        lower_cons: (
            |w| vec![w[1] * w[1] - w[2] - w[0], w[1] * w[1] + w[2]],
            |w| vec![-1.0, 2.0 * w[1], -1.0, 0.0, 2.0 * w[1], 1.0],
            g_hess,
        ),
        // grad_y lbar = (1 - 2 y1 (z1 + z2), z1 - z2): linear in (x, y)
        third: zero3_third,
    }
}

fn dd_upper() -> (ScalarEval, GradEval, MatEval) {
    (|w| (w[0] - 1.0).powi(2) + w[1] * w[1], |w| vec![2.0 * (w[0] - 1.0), 2.0 * w[1]], |_| vec![2.0, 0.0, 0.0, 2.0])
}

fn dd_lower() -> (ScalarEval, GradEval, MatEval) {
    (
        |w| w[0] * w[0] * w[1],
        |w| vec![2.0 * w[0] * w[1], w[0] * w[0]],
        |w| vec![2.0 * w[1], 2.0 * w[0], 2.0 * w[0], 0.0],
    )
}

/// Hessian in (x, y) of s * (x^2 - 2 z y).
fn dd_third(_: &[f64], _: &[f64], s: &[f64]) -> Vec<f64> {
    vec![2.0 * s[0], 0.0, 0.0, 0.0]
}

/// F = (x-1)^2 + y^2, f = x^2 y, g = y^2. Optimum (1, 0).
pub fn dempe_dutta_2() -> AnalyticProblem {
    AnalyticProblem {
        dims: Dims { n: 1, m: 1, p: 0, q: 1 },
        meta: meta("dempe-dutta-2", KnownStatus::Optimal, 0.0, 0.0),
        upper: dd_upper(),
        lower: dd_lower(),
        upper_cons: (empty, empty, zero2_i),
        lower_cons: (|w| vec![w[1] * w[1]], |w| vec![0.0, 2.0 * w[1]], |_, _| vec![0.0, 0.0, 0.0, 2.0]),
        third: dd_third,
    }
}

/// F = (x-1)^2 + y^2, f = x^2 y, g = y^2 - 1. Optima (1, -1) and (0, 0), both F = 1.
pub fn dempe_dutta_3() -> AnalyticProblem {
    AnalyticProblem {
        dims: Dims { n: 1, m: 1, p: 0, q: 1 },
        meta: meta("dempe-dutta-3", KnownStatus::Known, 1.0, -1.0),
        upper: dd_upper(),
        lower: dd_lower(),
        upper_cons: (empty, empty, zero2_i),
        lower_cons: (|w| vec![w[1] * w[1] - 1.0], |w| vec![0.0, 2.0 * w[1]], |_, _| vec![0.0, 0.0, 0.0, 2.0]),
        third: dd_third,
    }
}

/// F = x^2 + (y-1)^2, G = x, f = x(y-1), g = (-y, y-1).
/// The value function is -x for x > 0 and 0 otherwise. Optimum (0, 1).
pub fn phi_kink() -> AnalyticProblem {
    AnalyticProblem {
        dims: Dims { n: 1, m: 1, p: 1, q: 2 },
        meta: meta("phi-kink", KnownStatus::Optimal, 0.0, 0.0),
        upper: (
            |w| w[0] * w[0] + (w[1] - 1.0).powi(2),
            |w| vec![2.0 * w[0], 2.0 * (w[1] - 1.0)],
            |_| vec![2.0, 0.0, 0.0, 2.0],
        ),
        lower: (|w| w[0] * (w[1] - 1.0), |w| vec![w[1] - 1.0, w[0]], |_| vec![0.0, 1.0, 1.0, 0.0]),
        upper_cons: (|w| vec![w[0]], |_| vec![1.0, 0.0], zero2_i),
        lower_cons: (|w| vec![-w[1], w[1] - 1.0], |_| vec![0.0, -1.0, 0.0, 1.0], zero2_i),
        third: zero2_third,
    }
}

/// Discretized bilevel optimal-control problem with `half_dim` states and controls.
///
/// Variables: `x` in R^2, `y = (y1, y2)` with `y1, y2` in R^h. Data:
///
/// ```text
/// F = 1/2 |(y1; 0) - c|^2 - 1'x,          c = 0.5 * 1
/// G = (-x1 + x2 - 1, -x1, -x2)
/// f = 1/2 |y1 - P x|^2 + sigma/2 |y2 - Q x|^2,   P = Q = ones / h, sigma = 1
/// g = (y2 - 1, -y2 - 1, A y, -A y),         A = [L | -I]
/// ```
///
/// with `L` lower bidiagonal (1 on the diagonal, -1 below), so `A y = 0` is a
/// forward-Euler state equation.
pub fn boc_problem(half_dim: usize) -> QuadraticProblem {
    assert!(half_dim >= 2, "boc_problem needs half_dim >= 2");
    let h = half_dim;
    let m = 2 * h;
    let n = 2;
    let k = n + m;
    let dims = Dims { n, m, p: 3, q: 4 * h };

    // upper: 1/2 |(y1; 0) - c|^2 - d'x with D = I
    let mut upper = QuadForm::zero(k);
    for i in 0..h {
        upper.q[(n + i, n + i)] = 1.0;
        upper.c[n + i] = -0.5;
    }
    upper.c[0] = -1.0;
    upper.c[1] = -1.0;
    // the zero-padded half of (y1; 0) - c contributes a constant
    upper.r = 0.25 * h as f64;

    // lower: 1/2 (y - B x)' S (y - B x) with B = [P; Q], S = diag(I, sigma I)
    let sigma = 1.0;
    let b = Matrix::from_element(m, n, 1.0 / h as f64);
    let mut weight = Matrix::identity(m, m);
    for i in h..m {
        weight[(i, i)] = sigma;
    }
    let mut lower = QuadForm::zero(k);
    let hyx = -(&weight * &b);
    lower.q.view_mut((n, n), (m, m)).copy_from(&weight);
    lower.q.view_mut((n, 0), (m, n)).copy_from(&hyx);
    lower.q.view_mut((0, n), (n, m)).copy_from(&hyx.transpose());
    lower.q.view_mut((0, 0), (n, n)).copy_from(&(b.transpose() * &weight * &b));

    let upper_cons = AffineMap {
        a: Matrix::from_row_slice(3, k, &{
            let mut rows = vec![0.0; 3 * k];
            rows[0] = -1.0;
            rows[1] = 1.0;
            rows[k] = -1.0;
            rows[2 * k + 1] = -1.0;
            rows
        }),
        b: Vector::from_vec(vec![-1.0, 0.0, 0.0]),
    };

    let mut a = Matrix::zeros(4 * h, k);
    let mut off = Vector::zeros(4 * h);
    for i in 0..h {
        // y2_i - u <= 0 and -y2_i + l <= 0 with u = 1, l = -1
        a[(i, n + h + i)] = 1.0;
        off[i] = -1.0;
        a[(h + i, n + h + i)] = -1.0;
        off[h + i] = -1.0;
        // A y = L y1 - y2, split into two inequalities
        a[(2 * h + i, n + i)] = 1.0;
        if i > 0 {
            a[(2 * h + i, n + i - 1)] = -1.0;
        }
        a[(2 * h + i, n + h + i)] = -1.0;
    }
    for i in 0..h {
        for j in 0..k {
            a[(3 * h + i, j)] = -a[(2 * h + i, j)];
        }
    }
    let lower_cons = AffineMap { a, b: off };

    let meta = ProblemMeta {
        name: format!("boc-{h}"),
        status: KnownStatus::Unknown,
        upper_known: None,
        lower_known: None,
        start: None,
    };
    QuadraticProblem::new(meta, dims, upper, lower, upper_cons, lower_cons).expect("generated data is consistent")
}

/// Half dimension used when "boc" is requested by name.
pub const BOC_DEFAULT_HALF_DIM: usize = 10;

pub const PROBLEM_NAMES: &[&str] =
    &["sc98", "bard91", "lampariello-sagratella", "dempe-dutta-1", "dempe-dutta-2", "dempe-dutta-3", "phi-kink", "boc"];

/// Problems with closed-form data (everything except the scalable BOC family).
pub fn small_problem_names() -> impl Iterator<Item = &'static str> {
    PROBLEM_NAMES.iter().copied().filter(|n| *n != "boc")
}

pub fn fixtures(name: &str) -> Vec<Fixture> {
    let fx = |model, lambda, parts: &[&[f64]], tol, description: &str| Fixture {
        model,
        lambda,
        point: cat(parts),
        residual_tol: tol,
        description: description.to_string(),
    };
    match name {
        "sc98" => vec![
            fx(
                Model::Kkt,
                16.0,
                &[&[1.0], &[3.0], &[-4.0, 0.0, 0.0], &[0.0], &[0.0, 0.0], &[62.0, 0.0, 0.0], &[0.0, 48.0, 112.0]],
                1e-8,
                "optimum (1, 3) with exact multipliers",
            ),
            fx(
                Model::Llvf,
                2.0,
                &[&[1.0], &[3.0], &[3.0], &[0.0, 0.0], &[6.0, 0.0, 0.0], &[4.0, 0.0, 0.0]],
                1e-8,
                "optimum (1, 3) with exact multipliers",
            ),
        ],
        "bard91" => vec![
            fx(
                Model::Kkt,
                1.0,
                &[
                    &[2.0],
                    &[6.0, 0.0],
                    &[-2.0, 0.0, 0.0],
                    &[0.0077, -0.0077],
                    &[0.9923, 0.0],
                    &[2.0, 0.0, 1.0],
                    &[0.0, 5.9923, 0.0077],
                ],
                1e-3,
                "optimum (2, 6, 0), multipliers rounded to 4 decimals",
            ),
            fx(
                Model::Llvf,
                2.0,
                &[&[2.0], &[6.0, 0.0], &[5.5207, 0.4793], &[0.0415, 0.0], &[4.0, 0.0, 1.0], &[2.0, 0.0, 0.0]],
                1e-3,
                "optimum (2, 6, 0), multipliers rounded to 4 decimals",
            ),
        ],
        "lampariello-sagratella" => vec![
            fx(
                Model::Kkt,
                1.0,
                &[
                    &[0.5],
                    &[0.0, 0.5],
                    &[0.0, -1.0, 0.0],
                    &[0.0, -0.0061],
                    &[0.0],
                    &[1.0, 1.0, 0.0],
                    &[0.0061, 0.0, 0.5061],
                ],
                1e-3,
                "optimum (0.5, 0, 0.5), multipliers rounded to 4 decimals",
            ),
            fx(
                Model::Llvf,
                1.0,
                &[&[0.5], &[0.0, 0.5], &[0.0, 0.5], &[0.0], &[1.0, 1.0, 0.0], &[0.0, 1.0, 0.0]],
                1e-8,
                "optimum (0.5, 0, 0.5) with exact multipliers",
            ),
        ],
        _ => Vec::new(),
    }
}

/// Stationary point of `dempe-dutta-3` at (1, -1) for lambda = 4.
pub fn dempe_dutta_3_stationarity() -> StationarityFixture {
    StationarityFixture {
        lambda: 4.0,
        x: vec![1.0],
        y: vec![-1.0],
        z: vec![0.5],
        s: vec![0.0],
        u: vec![],
        v: vec![1.0],
        w: vec![0.0],
    }
}

/// Looks up a bundled problem and its fixtures.
pub fn get_problem(name: &str) -> Result<(Arc<dyn BilevelProblem>, Vec<Fixture>), Error> {
    let problem: Arc<dyn BilevelProblem> = match name {
        "sc98" => Arc::new(sc98()),
        "bard91" => Arc::new(bard91()),
        "lampariello-sagratella" => Arc::new(lampariello_sagratella()),
        "dempe-dutta-1" => Arc::new(dempe_dutta_1()),
        "dempe-dutta-2" => Arc::new(dempe_dutta_2()),
        "dempe-dutta-3" => Arc::new(dempe_dutta_3()),
        "phi-kink" => Arc::new(phi_kink()),
        "boc" => Arc::new(boc_problem(BOC_DEFAULT_HALF_DIM)),
        other => return Err(Error::UnknownProblem(other.to_string())),
    };
    Ok((problem, fixtures(name)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_lookup() {
        let (p, fx) = get_problem("sc98").unwrap();
        assert_eq!(p.dims(), Dims { n: 1, m: 1, p: 2, q: 3 });
        assert_eq!(fx.len(), 2);
        assert_eq!(get_problem("bard91").unwrap().0.dims(), Dims { n: 1, m: 2, p: 2, q: 3 });
        assert_eq!(get_problem("lampariello-sagratella").unwrap().0.dims(), Dims { n: 1, m: 2, p: 1, q: 3 });
        assert!(matches!(get_problem("nope"), Err(Error::UnknownProblem(_))));
    }

    #[test]
    fn fixture_lengths_match_models() {
        for name in PROBLEM_NAMES {
            let (p, fx) = get_problem(name).unwrap();
            for f in fx {
                let expect = match f.model {
                    Model::Kkt => p.dims().kkt_len(),
                    Model::Llvf => p.dims().llvf_len(),
                };
                assert_eq!(f.point.len(), expect, "{name} {:?}", f.model);
            }
        }
    }

    #[test]
    fn known_values_at_stated_optima() {
        let check = |p: &dyn BilevelProblem, xy: &[f64]| {
            let m = p.meta();
            assert!((p.upper_obj(xy) - m.upper_known.unwrap()).abs() < 1e-14, "{}", m.name);
            assert!((p.lower_obj(xy) - m.lower_known.unwrap()).abs() < 1e-14, "{}", m.name);
        };
        check(&sc98(), &[1.0, 3.0]);
        check(&bard91(), &[2.0, 6.0, 0.0]);
        check(&lampariello_sagratella(), &[0.5, 0.0, 0.5]);
        check(&dempe_dutta_1(), &[0.0, 0.0, 0.0]);
        check(&dempe_dutta_2(), &[1.0, 0.0]);
        check(&dempe_dutta_3(), &[1.0, -1.0]);
        check(&phi_kink(), &[0.0, 1.0]);
    }

    #[test]
    fn boc_dimensions_and_upper_constraints() {
        assert_eq!(boc_problem(137).dims(), Dims { n: 2, m: 274, p: 3, q: 548 });
        for h in [2, 5, 9] {
            let p = boc_problem(h);
            assert_eq!(p.dims(), Dims { n: 2, m: 2 * h, p: 3, q: 4 * h });
            let mut xy = vec![0.0; 2 + 2 * h];
            xy[3] = 0.7;
            assert_eq!(p.upper_cons(&xy).as_slice(), &[-1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn boc_is_reproducible() {
        let a = boc_problem(6);
        let b = boc_problem(6);
        assert_eq!(a.upper, b.upper);
        assert_eq!(a.lower, b.lower);
        assert_eq!(a.lower_cons, b.lower_cons);
    }
}
