//! Bilevel problem data: dimensions, evaluators and their derivatives.
//!
//! A problem is
//!
//! ```text
//! min_{x,y} F(x,y)  s.t.  G(x,y) <= 0,  y solves  min_y { f(x,y) : g(x,y) <= 0 }
//! ```
//!
//! with `x` in R^n, `y` in R^m, `G` in R^p and `g` in R^q. Every evaluator takes
//! the stacked point `xy = (x, y)` of length `n + m`; Jacobians are `rows x (n+m)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::{Matrix, Vector};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub q: usize,
}

impl Dims {
    pub fn new(n: usize, m: usize, p: usize, q: usize) -> Result<Self, Error> {
        if n == 0 || m == 0 {
            return Err(Error::Dimension(format!("n and m must be positive (got n={n}, m={m})")));
        }
        Ok(Self { n, m, p, q })
    }

    /// Length of the stacked `(x, y)` vector.
    pub fn nm(&self) -> usize {
        self.n + self.m
    }

    /// Size of the KKT-model system: `n + 2m + p + 3q`.
    pub fn kkt_len(&self) -> usize {
        self.n + 2 * self.m + self.p + 3 * self.q
    }

    /// Size of the value-function-model system: `n + 2m + p + 2q`.
    pub fn llvf_len(&self) -> usize {
        self.n + 2 * self.m + self.p + 2 * self.q
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(n={}, m={}, p={}, q={})", self.n, self.m, self.p, self.q)
    }
}

/// Quality label attached to the reference objective values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KnownStatus {
    Optimal,
    Known,
    #[default]
    Unknown,
}

impl fmt::Display for KnownStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KnownStatus::Optimal => "optimal",
            KnownStatus::Known => "known",
            KnownStatus::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ProblemMeta {
    pub name: String,
    pub status: KnownStatus,
    /// Reference upper-level objective value.
    pub upper_known: Option<f64>,
    /// Reference lower-level objective value.
    pub lower_known: Option<f64>,
    /// Starting `(x, y)` published with the problem, if any.
    pub start: Option<(Vec<f64>, Vec<f64>)>,
}

/// Evaluator bundle for a bilevel program.
///
/// Implementations must be pure. Second derivatives of constraints are only
/// ever needed as weighted sums, so `*_cons_hess_sum` is what the solvers call;
/// the default implementations sum the per-component Hessians.
pub trait BilevelProblem: Send + Sync {
    fn dims(&self) -> Dims;
    fn meta(&self) -> &ProblemMeta;

    fn name(&self) -> &str {
        &self.meta().name
    }

    fn upper_obj(&self, xy: &[f64]) -> f64;
    fn upper_obj_grad(&self, xy: &[f64]) -> Vector;
    fn upper_obj_hess(&self, xy: &[f64]) -> Matrix;

    fn upper_cons(&self, xy: &[f64]) -> Vector;
    fn upper_cons_jac(&self, xy: &[f64]) -> Matrix;
    fn upper_cons_hess(&self, xy: &[f64], i: usize) -> Matrix;

    fn lower_obj(&self, xy: &[f64]) -> f64;
    fn lower_obj_grad(&self, xy: &[f64]) -> Vector;
    fn lower_obj_hess(&self, xy: &[f64]) -> Matrix;

    fn lower_cons(&self, xy: &[f64]) -> Vector;
    fn lower_cons_jac(&self, xy: &[f64]) -> Matrix;
    fn lower_cons_hess(&self, xy: &[f64], j: usize) -> Matrix;

    /// `sum_i weights[i] * hess G_i(xy)`.
    fn upper_cons_hess_sum(&self, xy: &[f64], weights: &[f64]) -> Matrix {
        weighted_hess_sum(self.dims().nm(), weights, |i| self.upper_cons_hess(xy, i))
    }

    /// `sum_j weights[j] * hess g_j(xy)`.
    fn lower_cons_hess_sum(&self, xy: &[f64], weights: &[f64]) -> Matrix {
        weighted_hess_sum(self.dims().nm(), weights, |j| self.lower_cons_hess(xy, j))
    }

    /// Hessian in `(x, y)` of the scalar `s' * grad_y lbar(x, y, z)` where
    /// `lbar = f - z'g`. This is the third-order term of the KKT-model Jacobian.
    ///
    /// Defaults to central differences of the analytic second derivatives.
    fn third_contract(&self, xy: &[f64], z: &[f64], s: &[f64]) -> Matrix {
        fd_third_contract(self, xy, z, s).unwrap_or_else(|_| {
            let k = self.dims().nm();
            Matrix::from_element(k, k, f64::NAN)
        })
    }
}

fn weighted_hess_sum(k: usize, weights: &[f64], hess: impl Fn(usize) -> Matrix) -> Matrix {
    let mut out = Matrix::zeros(k, k);
    for (i, &w) in weights.iter().enumerate() {
        if w != 0.0 {
            out += hess(i) * w;
        }
    }
    out
}

/// Hessian of the lower-level Lagrangian `lbar = f - z'g` in `(x, y)`.
pub fn lbar_hess<P: BilevelProblem + ?Sized>(problem: &P, xy: &[f64], z: &[f64]) -> Matrix {
    let neg: Vec<f64> = z.iter().map(|v| -v).collect();
    problem.lower_obj_hess(xy) + problem.lower_cons_hess_sum(xy, &neg)
}

/// Componentwise central-difference step `eps^(1/3) * max(1, |x_i|)`.
fn fd_step(xi: f64) -> f64 {
    f64::EPSILON.cbrt() * xi.abs().max(1.0)
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, point: &[f64]) -> Result<Vector, Error> {
    let mut probe = point.to_vec();
    let mut grad = Vector::zeros(point.len());
    for i in 0..point.len() {
        let h = fd_step(point[i]);
        probe[i] = point[i] + h;
        let fp = f(&probe);
        probe[i] = point[i] - h;
        let fm = f(&probe);
        probe[i] = point[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFiniteEvaluation(format!("probe {i} of fd_gradient")));
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

/// Central-difference Jacobian of a vector function; rows follow the output.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vector, point: &[f64]) -> Result<Matrix, Error> {
    let base = f(point);
    let mut jac = Matrix::zeros(base.len(), point.len());
    let mut probe = point.to_vec();
    for i in 0..point.len() {
        let h = fd_step(point[i]);
        probe[i] = point[i] + h;
        let fp = f(&probe);
        probe[i] = point[i] - h;
        let fm = f(&probe);
        probe[i] = point[i];
        if fp.iter().chain(fm.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation(format!("probe {i} of fd_jacobian")));
        }
        jac.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    Ok(jac)
}

/// Central-difference approximation of [`BilevelProblem::third_contract`].
///
/// Differentiates `v(xy) = hess_lbar(xy)[:, y-block] * s` and symmetrizes.
pub fn fd_third_contract<P: BilevelProblem + ?Sized>(
    problem: &P,
    xy: &[f64],
    z: &[f64],
    s: &[f64],
) -> Result<Matrix, Error> {
    let dims = problem.dims();
    let (n, k) = (dims.n, dims.nm());
    if s.iter().all(|v| *v == 0.0) {
        return Ok(Matrix::zeros(k, k));
    }
    let s_vec = Vector::from_column_slice(s);
    let v = |pt: &[f64]| -> Vector {
        let h = lbar_hess(problem, pt, z);
        h.columns(n, dims.m) * &s_vec
    };
    let jac = fd_jacobian(v, xy)?;
    Ok((&jac + jac.transpose()) * 0.5)
}

/// `w' Q w / 2 + c' w + r` over the stacked `(x, y)` vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadForm {
    pub q: Matrix,
    pub c: Vector,
    pub r: f64,
}

impl QuadForm {
    pub fn zero(k: usize) -> Self {
        Self { q: Matrix::zeros(k, k), c: Vector::zeros(k), r: 0.0 }
    }

    pub fn eval(&self, w: &[f64]) -> f64 {
        let w = Vector::from_column_slice(w);
        0.5 * w.dot(&(&self.q * &w)) + self.c.dot(&w) + self.r
    }

    pub fn grad(&self, w: &[f64]) -> Vector {
        &self.q * Vector::from_column_slice(w) + &self.c
    }
}

/// Affine rows `a_i' w + b_i`, stored as a matrix and offset vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub a: Matrix,
    pub b: Vector,
}

impl AffineMap {
    pub fn empty(k: usize) -> Self {
        Self { a: Matrix::zeros(0, k), b: Vector::zeros(0) }
    }

    pub fn eval(&self, w: &[f64]) -> Vector {
        &self.a * Vector::from_column_slice(w) + &self.b
    }
}

/// Bilevel program with quadratic objectives and affine constraints.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    pub dims: Dims,
    pub meta: ProblemMeta,
    pub upper: QuadForm,
    pub lower: QuadForm,
    pub upper_cons: AffineMap,
    pub lower_cons: AffineMap,
}

impl QuadraticProblem {
    pub fn new(
        meta: ProblemMeta,
        dims: Dims,
        upper: QuadForm,
        lower: QuadForm,
        upper_cons: AffineMap,
        lower_cons: AffineMap,
    ) -> Result<Self, Error> {
        let k = dims.nm();
        for (label, form) in [("F", &upper), ("f", &lower)] {
            if form.q.shape() != (k, k) || form.c.len() != k {
                return Err(Error::Dimension(format!(
                    "{label}: expected Q {k}x{k} and c of length {k}, got Q {}x{} and c of length {}",
                    form.q.nrows(),
                    form.q.ncols(),
                    form.c.len()
                )));
            }
            let asym = (&form.q - form.q.transpose()).abs().max();
            if asym > 1e-10 {
                return Err(Error::Symmetry(format!("{label}.Q asymmetric by {asym:.3e}")));
            }
        }
        for (label, map, rows) in [("G", &upper_cons, dims.p), ("g", &lower_cons, dims.q)] {
            if map.a.shape() != (rows, k) || map.b.len() != rows {
                return Err(Error::Dimension(format!(
                    "{label}: expected {rows} rows of length {k}, got {}x{} with {} offsets",
                    map.a.nrows(),
                    map.a.ncols(),
                    map.b.len()
                )));
            }
        }
        Ok(Self { dims, meta, upper, lower, upper_cons, lower_cons })
    }
}

impl BilevelProblem for QuadraticProblem {
    fn dims(&self) -> Dims {
        self.dims
    }
    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }
    fn upper_obj(&self, xy: &[f64]) -> f64 {
        self.upper.eval(xy)
    }
    fn upper_obj_grad(&self, xy: &[f64]) -> Vector {
        self.upper.grad(xy)
    }
    fn upper_obj_hess(&self, _xy: &[f64]) -> Matrix {
        self.upper.q.clone()
    }
    fn upper_cons(&self, xy: &[f64]) -> Vector {
        self.upper_cons.eval(xy)
    }
    fn upper_cons_jac(&self, _xy: &[f64]) -> Matrix {
        self.upper_cons.a.clone()
    }
    fn upper_cons_hess(&self, _xy: &[f64], _i: usize) -> Matrix {
        let k = self.dims.nm();
        Matrix::zeros(k, k)
    }
    fn lower_obj(&self, xy: &[f64]) -> f64 {
        self.lower.eval(xy)
    }
    fn lower_obj_grad(&self, xy: &[f64]) -> Vector {
        self.lower.grad(xy)
    }
    fn lower_obj_hess(&self, _xy: &[f64]) -> Matrix {
        self.lower.q.clone()
    }
    fn lower_cons(&self, xy: &[f64]) -> Vector {
        self.lower_cons.eval(xy)
    }
    fn lower_cons_jac(&self, _xy: &[f64]) -> Matrix {
        self.lower_cons.a.clone()
    }
    fn lower_cons_hess(&self, _xy: &[f64], _j: usize) -> Matrix {
        let k = self.dims.nm();
        Matrix::zeros(k, k)
    }
    fn upper_cons_hess_sum(&self, _xy: &[f64], _weights: &[f64]) -> Matrix {
        let k = self.dims.nm();
        Matrix::zeros(k, k)
    }
    fn lower_cons_hess_sum(&self, _xy: &[f64], _weights: &[f64]) -> Matrix {
        let k = self.dims.nm();
        Matrix::zeros(k, k)
    }
    fn third_contract(&self, _xy: &[f64], _z: &[f64], _s: &[f64]) -> Matrix {
        let k = self.dims.nm();
        Matrix::zeros(k, k)
    }
}

// ---------------------------------------------------------------------------
// Problem files

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DimsDoc {
    n: usize,
    m: usize,
    p: usize,
    q: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct QuadDoc {
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    c: Vec<f64>,
    #[serde(default)]
    r: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct KnownDoc {
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    f: Option<f64>,
    #[serde(default)]
    status: KnownStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProblemDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    dims: DimsDoc,
    #[serde(rename = "F")]
    upper: QuadDoc,
    f: QuadDoc,
    #[serde(rename = "G", default)]
    upper_cons: Vec<(Vec<f64>, f64)>,
    #[serde(default)]
    g: Vec<(Vec<f64>, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    known: Option<KnownDoc>,
}

fn quad_from_doc(label: &str, doc: &QuadDoc, k: usize) -> Result<QuadForm, Error> {
    if doc.q.len() != k || doc.q.iter().any(|row| row.len() != k) {
        return Err(Error::Dimension(format!("{label}.Q must be {k}x{k}")));
    }
    if doc.c.len() != k {
        return Err(Error::Dimension(format!("{label}.c must have length {k}")));
    }
    let flat: Vec<f64> = doc.q.iter().flatten().copied().collect();
    Ok(QuadForm { q: Matrix::from_row_slice(k, k, &flat), c: Vector::from_vec(doc.c.clone()), r: doc.r })
}

fn affine_from_doc(label: &str, rows: &[(Vec<f64>, f64)], expect: usize, k: usize) -> Result<AffineMap, Error> {
    if rows.len() != expect {
        return Err(Error::Dimension(format!("{label} has {} rows but dims declare {expect}", rows.len())));
    }
    let mut a = Matrix::zeros(expect, k);
    let mut b = Vector::zeros(expect);
    for (i, (row, off)) in rows.iter().enumerate() {
        if row.len() != k {
            return Err(Error::Dimension(format!("{label}[{i}] must have {k} coefficients")));
        }
        a.set_row(i, &nalgebra::RowDVector::from_row_slice(row));
        b[i] = *off;
    }
    Ok(AffineMap { a, b })
}

/// Parses a quadratic/affine problem description (TOML).
///
/// ```toml
/// name = "toy"
/// dims = { n = 1, m = 1, p = 0, q = 1 }
/// F = { Q = [[1.0, 0.0], [0.0, 1.0]], c = [0.0, 0.0], r = 0.0 }
/// f = { Q = [[0.0, 0.0], [0.0, 2.0]], c = [0.0, -1.0] }
/// G = []
/// g = [[[0.0, -1.0], 0.0]]          # each row is [a, b]:  a'(x,y) + b <= 0
/// known = { F = 0.25, f = -0.25, status = "optimal" }
/// ```
pub fn load_quadratic_problem(text: &str) -> Result<QuadraticProblem, Error> {
    let doc: ProblemDoc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let dims = Dims::new(doc.dims.n, doc.dims.m, doc.dims.p, doc.dims.q)?;
    let k = dims.nm();
    let upper = quad_from_doc("F", &doc.upper, k)?;
    let lower = quad_from_doc("f", &doc.f, k)?;
    let upper_cons = affine_from_doc("G", &doc.upper_cons, dims.p, k)?;
    let lower_cons = affine_from_doc("g", &doc.g, dims.q, k)?;
    let known = doc.known.unwrap_or(KnownDoc { upper: None, f: None, status: KnownStatus::Unknown });
    let meta = ProblemMeta {
        name: doc.name.unwrap_or_else(|| "file".to_string()),
        status: known.status,
        upper_known: known.upper,
        lower_known: known.f,
        start: None,
    };
    QuadraticProblem::new(meta, dims, upper, lower, upper_cons, lower_cons)
}

fn quad_to_doc(form: &QuadForm) -> QuadDoc {
    QuadDoc {
        q: form.q.row_iter().map(|r| r.iter().copied().collect()).collect(),
        c: form.c.iter().copied().collect(),
        r: form.r,
    }
}

fn affine_to_doc(map: &AffineMap) -> Vec<(Vec<f64>, f64)> {
    map.a.row_iter().zip(map.b.iter()).map(|(row, b)| (row.iter().copied().collect(), *b)).collect()
}

/// Serializes a quadratic problem in the format read by [`load_quadratic_problem`].
pub fn save_quadratic_problem(problem: &QuadraticProblem) -> String {
    let meta = &problem.meta;
    let doc = ProblemDoc {
        name: Some(meta.name.clone()),
        dims: DimsDoc { n: problem.dims.n, m: problem.dims.m, p: problem.dims.p, q: problem.dims.q },
        upper: quad_to_doc(&problem.upper),
        f: quad_to_doc(&problem.lower),
        upper_cons: affine_to_doc(&problem.upper_cons),
        g: affine_to_doc(&problem.lower_cons),
        known: Some(KnownDoc { upper: meta.upper_known, f: meta.lower_known, status: meta.status }),
    };
    toml::to_string(&doc).expect("problem documents always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_gradient_examples() {
        let g = fd_gradient(|x| x[0] * x[0], &[3.0]).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
        let g = fd_gradient(|_| 4.2, &[1.0, -7.0]).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-8));
        // d/dx x^2 y = 2xy = 4, d/dy = x^2 = 1
        let g = fd_gradient(|p| p[0] * p[0] * p[1], &[1.0, 2.0]).unwrap();
        assert!((g[0] - 4.0).abs() < 1e-6 && (g[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fd_gradient_rejects_nonfinite() {
        let err = fd_gradient(|x| x[0].ln(), &[0.0]);
        assert!(matches!(err, Err(Error::NonFiniteEvaluation(_))));
    }

    const TOY: &str = r#"
        dims = { n = 1, m = 1, p = 0, q = 3 }
        F = { Q = [[1.0, 0.0], [0.0, 1.0]], c = [0.0, 0.0] }
        f = { Q = [[0.0, 0.0], [0.0, 2.0]], c = [0.0, -1.0], r = 0.5 }
        g = [[[1.0, -1.0], 0.0], [[0.0, 1.0], -2.0], [[2.0, 3.0], 1e-1]]
    "#;

    #[test]
    fn load_quadratic_examples() {
        let p = load_quadratic_problem(TOY).unwrap();
        assert_eq!(p.dims(), Dims { n: 1, m: 1, p: 0, q: 3 });
        let grad = p.upper_obj_grad(&[1.0, 1.0]);
        assert_eq!(grad.as_slice(), &[1.0, 1.0]);
        let j1 = p.lower_cons_jac(&[0.0, 0.0]);
        let j2 = p.lower_cons_jac(&[5.0, -3.0]);
        assert_eq!(j1.shape(), (3, 2));
        assert_eq!(j1, j2);
        assert_eq!(p.meta().status, KnownStatus::Unknown);
        assert!(p.third_contract(&[1.0, 2.0], &[1.0, 1.0, 1.0], &[3.0]).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn load_rejects_bad_files() {
        let asym = TOY.replace("Q = [[1.0, 0.0], [0.0, 1.0]]", "Q = [[1.0, 0.5], [0.0, 1.0]]");
        assert!(matches!(load_quadratic_problem(&asym), Err(Error::Symmetry(_))));
        let short = TOY.replace("q = 3", "q = 2");
        assert!(matches!(load_quadratic_problem(&short), Err(Error::Dimension(_))));
        assert!(matches!(load_quadratic_problem("dims = 3"), Err(Error::Parse(_))));
    }

    #[test]
    fn save_then_load_preserves_evaluators() {
        let p = load_quadratic_problem(TOY).unwrap();
        let back = load_quadratic_problem(&save_quadratic_problem(&p)).unwrap();
        for pt in [[0.3, -1.2], [2.0, 0.5], [-4.0, 7.0]] {
            assert_eq!(p.upper_obj(&pt), back.upper_obj(&pt));
            assert_eq!(p.lower_obj(&pt), back.lower_obj(&pt));
            assert_eq!(p.lower_cons(&pt), back.lower_cons(&pt));
        }
    }
}
