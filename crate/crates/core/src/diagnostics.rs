//! Regularity diagnostics at (approximately) stationary points.
//!
//! The checks are the sufficient conditions for nonsingularity of every
//! generalized Jacobian element at a solution: linear independence of active
//! constraint gradients, rank conditions on the lower-level data, and positive
//! curvature of the penalized Lagrangian on a cone of critical directions.
//! Index sets are reported 0-based.

use serde::{Deserialize, Serialize};

use crate::kkt::{jacobian_kkt, residual_kkt, KktPoint};
use crate::linalg::{mat_norm_inf, min_eig_sym, norm_inf, nullspace_basis, numerical_rank, Matrix, Vector};
use crate::llvf::{jacobian_llvf, residual_llvf, LlvfPoint};
use crate::problem::{lbar_hess, BilevelProblem};
use crate::Error;

/// Default activity tolerance before scaling by the multiplier size.
pub const DEFAULT_TAU: f64 = 1e-6;
const RANK_TOL: f64 = 1e-8;
const NULL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexClassification {
    /// Inactive: multiplier zero, constraint strictly negative.
    pub eta: Vec<usize>,
    /// Biactive: multiplier zero, constraint zero.
    pub theta: Vec<usize>,
    /// Strongly active: multiplier positive, constraint zero.
    pub nu: Vec<usize>,
    /// Constraint zero.
    pub active: Vec<usize>,
    /// Pairs that fit none of the above (e.g. positive multiplier on an inactive constraint).
    pub violations: Vec<usize>,
}

/// Sorts the pairs `(c_i, mult_i)` of a complementarity system `c <= 0, mult >= 0`.
pub fn classify(c: &Vector, mult: &Vector, tau: f64) -> IndexClassification {
    assert_eq!(c.len(), mult.len());
    assert!(tau > 0.0);
    let mut out = IndexClassification::default();
    for i in 0..c.len() {
        let zero_mult = mult[i].abs() <= tau;
        let active = c[i].abs() <= tau;
        if zero_mult && c[i] < -tau {
            out.eta.push(i);
        } else if zero_mult && active {
            out.theta.push(i);
        } else if mult[i] > tau && active {
            out.nu.push(i);
        } else {
            out.violations.push(i);
        }
        if active && !out.violations.contains(&i) {
            out.active.push(i);
        }
    }
    out
}

/// `tau * (1 + max |multiplier|)`.
pub fn scaled_tau(tau: f64, multipliers: &[&Vector]) -> f64 {
    let m = multipliers.iter().map(|v| norm_inf(v)).fold(0.0_f64, f64::max);
    tau * (1.0 + m)
}

fn stack_rows(rows: &[Vector], width: usize) -> Matrix {
    let mut out = Matrix::zeros(rows.len(), width);
    for (i, r) in rows.iter().enumerate() {
        out.set_row(i, &r.transpose());
    }
    out
}

fn select_rows(a: &Matrix, idx: &[usize]) -> Vec<Vector> {
    idx.iter().map(|&i| a.row(i).transpose()).collect()
}

/// Rank test of a family of vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCheck {
    pub family_size: usize,
    pub rank: usize,
    pub holds: bool,
}

impl RankCheck {
    fn independent(rows: &[Vector], width: usize) -> Self {
        let rank = numerical_rank(&stack_rows(rows, width), RANK_TOL);
        Self { family_size: rows.len(), rank, holds: rank == rows.len() }
    }

    fn full_column_rank(a: &Matrix) -> Self {
        let rank = numerical_rank(a, RANK_TOL);
        Self { family_size: a.ncols(), rank, holds: rank == a.ncols() }
    }
}

/// Curvature test of a quadratic form on the null space of some equalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureCheck {
    /// Dimension of the direction space.
    pub cone_dim: usize,
    /// Dimension of the subspace of directions that move `(x, y)`.
    pub moving_dim: usize,
    /// Smallest eigenvalue of the form on the moving subspace (`None` if it is `{0}`).
    pub min_eig: Option<f64>,
    /// Size of the coupling between moving and non-moving directions.
    pub coupling: f64,
    pub holds: bool,
}

/// Positive curvature on directions `d` in `null(eq)` with `d[..k] != 0`.
///
/// Directions whose `(x, y)` part vanishes carry a zero block of `hess`, so the
/// form is positive on every admissible direction exactly when it is positive
/// definite on the complement and the complement does not couple to them.
fn curvature_moving(hess: &Matrix, eq: &Matrix, k: usize) -> CurvatureCheck {
    let basis = nullspace_basis(eq, NULL_TOL);
    let dim = basis.ncols();
    let scale = mat_norm_inf(hess).max(1.0);
    if dim == 0 {
        return CurvatureCheck { cone_dim: 0, moving_dim: 0, min_eig: None, coupling: 0.0, holds: true };
    }
    let proj = basis.rows(0, k).into_owned();
    let svd = proj.clone().svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.max().max(1.0);
    let mut moving = Vec::new();
    let mut still = Vec::new();
    // rows of v_t beyond the number of singular values span the kernel
    for i in 0..dim {
        let s = if i < svd.singular_values.len() { svd.singular_values[i] } else { 0.0 };
        if s > 1e-8 * smax {
            moving.push(v_t.row(i).transpose());
        } else {
            still.push(v_t.row(i).transpose());
        }
    }
    if v_t.nrows() < dim {
        // thin SVD of a wide matrix: complete the kernel from null(proj)
        let extra = nullspace_basis(&proj, 1e-8);
        for j in 0..extra.ncols() {
            let c = extra.column(j).into_owned();
            if !still.iter().any(|s: &Vector| (s.dot(&c)).abs() > 1.0 - 1e-12) {
                still.push(c);
            }
        }
    }
    let m_basis = basis.clone() * stack_rows(&moving, dim).transpose();
    let k_basis = basis * stack_rows(&still, dim).transpose();
    let reduced = m_basis.transpose() * hess * &m_basis;
    let coupling = if still.is_empty() || moving.is_empty() {
        0.0
    } else {
        mat_norm_inf(&(m_basis.transpose() * hess * &k_basis))
    };
    let min_eig = if moving.is_empty() { None } else { Some(min_eig_sym(&reduced)) };
    let tol = 1e-8 * scale;
    let holds = min_eig.is_none_or(|e| e > tol) && coupling <= tol;
    CurvatureCheck { cone_dim: dim, moving_dim: moving.len(), min_eig, coupling, holds }
}

/// Positive definiteness of `hess` on `null(eq)`; vacuous if the null space is `{0}`.
fn curvature_plain(hess: &Matrix, eq: &Matrix) -> CurvatureCheck {
    let basis = nullspace_basis(eq, NULL_TOL);
    let dim = basis.ncols();
    if dim == 0 {
        return CurvatureCheck { cone_dim: 0, moving_dim: 0, min_eig: None, coupling: 0.0, holds: true };
    }
    let e = min_eig_sym(&(basis.transpose() * hess * &basis));
    let holds = e > 1e-8 * mat_norm_inf(hess).max(1.0);
    CurvatureCheck { cone_dim: dim, moving_dim: dim, min_eig: Some(e), coupling: 0.0, holds }
}

/// Largest `t` found with `a_i' d <= -t` for unit `d` in `null(eq)`; positive
/// values certify a strictly feasible direction. Approximate: subgradient ascent
/// on the worst row, not an exact linear program.
pub fn mfcq_slack(eq: &Matrix, ineq: &Matrix) -> f64 {
    let width = ineq.ncols();
    if ineq.nrows() == 0 {
        return f64::INFINITY;
    }
    let basis = if eq.nrows() == 0 { Matrix::identity(width, width) } else { nullspace_basis(eq, NULL_TOL) };
    if basis.ncols() == 0 {
        return 0.0;
    }
    let mut b = ineq * &basis;
    for mut row in b.row_iter_mut() {
        let nrm = row.norm();
        if nrm > 0.0 {
            row /= nrm;
        }
    }
    let worst = |c: &Vector| -> (f64, usize) {
        let vals = &b * c;
        let (i, v) =
            vals.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
        (-v, i)
    };
    let mut c = -b.row_sum().transpose();
    if c.norm() == 0.0 {
        c = -b.row(0).transpose();
    }
    if c.norm() == 0.0 {
        return 0.0;
    }
    c.normalize_mut();
    let (mut best, _) = worst(&c);
    for it in 0..2000 {
        let (_, i) = worst(&c);
        let step = 0.5 / (1.0 + it as f64).sqrt();
        c -= b.row(i).transpose() * step;
        let nrm = c.norm();
        if nrm == 0.0 {
            break;
        }
        c /= nrm;
        best = best.max(worst(&c).0);
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktRegularityReport {
    pub lambda: f64,
    pub tau: f64,
    pub residual_inf: f64,
    /// Classification of `(G, u)`.
    pub upper: IndexClassification,
    /// Classification of `(g, v)`.
    pub lower: IndexClassification,
    /// Classification of `(z, w)`.
    pub multiplier: IndexClassification,
    /// Active `grad G`, active `grad g` and the rows of `grad_{xy}(grad_y lbar)`.
    pub general_independence: RankCheck,
    /// Active `grad G` and active `grad g`.
    pub active_independence: RankCheck,
    /// Rows of `grad_y g` over the inactive or biactive multiplier indices.
    pub lower_column_rank: RankCheck,
    pub curvature: CurvatureCheck,
    /// Both conditions of the general-case test.
    pub general_case: bool,
    /// All three conditions of the full-rank test.
    pub full_rank_case: bool,
    /// Rank of the equality gradients of the lower-level stationarity constraint.
    pub mfcq_independence: RankCheck,
    pub mfcq_slack: f64,
    pub notes: Vec<String>,
}

/// Regularity report for a KKT-model point (lower multiplier `z <= 0`).
pub fn kkt_regularity_report<P: BilevelProblem + ?Sized>(
    problem: &P,
    lambda: f64,
    pt: &KktPoint,
    tau: f64,
) -> Result<KktRegularityReport, Error> {
    let dims = problem.dims();
    let (n, m, q) = (dims.n, dims.m, dims.q);
    let k = n + m;
    let xy = pt.xy();
    let residual_inf = norm_inf(&residual_kkt(problem, lambda, pt)?);
    let tau = scaled_tau(tau, &[&pt.u, &pt.v, &pt.w]);

    let g_up = problem.upper_cons(&xy);
    let g = problem.lower_cons(&xy);
    let jg_up = problem.upper_cons_jac(&xy);
    let jg = problem.lower_cons_jac(&xy);
    let upper = classify(&g_up, &pt.u, tau);
    let lower = classify(&g, &pt.v, tau);
    let multiplier = classify(&pt.z, &pt.w, tau);

    let hl = lbar_hess(problem, &xy, pt.z.as_slice());
    let cross: Vec<Vector> = (0..m).map(|i| hl.row(n + i).transpose()).collect();
    let mut active_rows = select_rows(&jg_up, &upper.active);
    active_rows.extend(select_rows(&jg, &lower.active));
    let active_independence = RankCheck::independent(&active_rows, k);
    let mut general_rows = active_rows.clone();
    general_rows.extend(cross.iter().cloned());
    let general_independence = RankCheck::independent(&general_rows, k);

    let mut te: Vec<usize> = multiplier.theta.iter().chain(&multiplier.eta).copied().collect();
    te.sort_unstable();
    let jg_y = jg.columns(n, m).into_owned();
    let lower_column_rank = RankCheck::full_column_rank(&stack_rows(&select_rows(&jg_y, &te), m));

    // critical directions (d_xy, d_z)
    let jac = jacobian_kkt(problem, lambda, pt)?;
    let hess = jac.view((0, 0), (k + q, k + q)).into_owned();
    let mut eq_rows: Vec<Vector> = Vec::new();
    for i in &upper.nu {
        eq_rows.push(pad(&jg_up.row(*i).transpose(), k + q));
    }
    for j in &lower.nu {
        eq_rows.push(pad(&jg.row(*j).transpose(), k + q));
    }
    for j in &multiplier.nu {
        let mut e = Vector::zeros(k + q);
        e[k + j] = 1.0;
        eq_rows.push(e);
    }
    let curvature = curvature_moving(&hess, &stack_rows(&eq_rows, k + q), k);

    // stationarity-constraint gradients in (x, y, z) and active inequality gradients
    let eq_mfcq = jac.view((k + q, 0), (m, k + q)).into_owned();
    let mfcq_independence =
        RankCheck::independent(&(0..m).map(|i| eq_mfcq.row(i).transpose()).collect::<Vec<_>>(), k + q);
    let mut ineq: Vec<Vector> = active_rows.iter().map(|r| pad(r, k + q)).collect();
    for l in &multiplier.active {
        let mut e = Vector::zeros(k + q);
        e[k + l] = 1.0;
        ineq.push(e);
    }
    let mfcq_slack = mfcq_slack(&eq_mfcq, &stack_rows(&ineq, k + q));

    let mut notes = Vec::new();
    if !multiplier.theta.is_empty() || !upper.theta.is_empty() || !lower.theta.is_empty() {
        notes.push("biactive indices present; their rows are left out of the cone equalities".to_string());
    }
    for (label, c) in [("G/u", &upper), ("g/v", &lower), ("z/w", &multiplier)] {
        if !c.violations.is_empty() {
            notes.push(format!("{label}: complementarity violated at {:?}", c.violations));
        }
    }

    let general_case = general_independence.holds && curvature.holds;
    let full_rank_case = active_independence.holds && lower_column_rank.holds && curvature.holds;
    Ok(KktRegularityReport {
        lambda,
        tau,
        residual_inf,
        upper,
        lower,
        multiplier,
        general_independence,
        active_independence,
        lower_column_rank,
        curvature,
        general_case,
        full_rank_case,
        mfcq_independence,
        mfcq_slack,
        notes,
    })
}

fn pad(v: &Vector, len: usize) -> Vector {
    let mut out = Vector::zeros(len);
    out.rows_mut(0, v.len()).copy_from(v);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlvfRegularityReport {
    pub lambda: f64,
    pub tau: f64,
    pub residual_inf: f64,
    pub upper: IndexClassification,
    /// Classification of `(g(x, y), v)`.
    pub lower: IndexClassification,
    /// Classification of `(g(x, z), w)`.
    pub copy: IndexClassification,
    /// Active `grad G` and active `grad g(x, y)`.
    pub active_independence: RankCheck,
    /// Active `grad g(x, z)`.
    pub copy_independence: RankCheck,
    /// No biactive index in the `(g(x, z), w)` pairs.
    pub copy_strict_complementarity: bool,
    pub curvature: CurvatureCheck,
    pub holds: bool,
    pub mfcq_slack: f64,
    pub notes: Vec<String>,
}

/// Regularity report for a value-function-model point.
pub fn llvf_regularity_report<P: BilevelProblem + ?Sized>(
    problem: &P,
    lambda: f64,
    pt: &LlvfPoint,
    tau: f64,
) -> Result<LlvfRegularityReport, Error> {
    let dims = problem.dims();
    let (n, m) = (dims.n, dims.m);
    let k = n + m;
    let (xy, xz) = (pt.xy(), pt.xz());
    let residual_inf = norm_inf(&residual_llvf(problem, lambda, pt)?);
    let tau = scaled_tau(tau, &[&pt.u, &pt.v, &pt.w]);

    let jg_up = problem.upper_cons_jac(&xy);
    let jg_y = problem.lower_cons_jac(&xy);
    let jg_z = problem.lower_cons_jac(&xz);
    let upper = classify(&problem.upper_cons(&xy), &pt.u, tau);
    let lower = classify(&problem.lower_cons(&xy), &pt.v, tau);
    let copy = classify(&problem.lower_cons(&xz), &pt.w, tau);

    let mut active_rows = select_rows(&jg_up, &upper.active);
    active_rows.extend(select_rows(&jg_y, &lower.active));
    let active_independence = RankCheck::independent(&active_rows, k);
    let copy_independence = RankCheck::independent(&select_rows(&jg_z, &copy.active), k);
    let copy_strict_complementarity = copy.theta.is_empty();

    // directions (d_x, d_y, d_z)
    let width = k + m;
    let jac = jacobian_llvf(problem, lambda, pt)?;
    let hess = jac.view((0, 0), (width, width)).into_owned();
    let mut eq_rows: Vec<Vector> = Vec::new();
    for i in &upper.nu {
        eq_rows.push(pad(&jg_up.row(*i).transpose(), width));
    }
    for j in &lower.nu {
        eq_rows.push(pad(&jg_y.row(*j).transpose(), width));
    }
    for j in &copy.nu {
        let mut e = Vector::zeros(width);
        e.rows_mut(0, n).copy_from(&jg_z.row(*j).columns(0, n).transpose());
        e.rows_mut(k, m).copy_from(&jg_z.row(*j).columns(n, m).transpose());
        eq_rows.push(e);
    }
    let curvature = curvature_plain(&hess, &stack_rows(&eq_rows, width));
    let mfcq_slack = mfcq_slack(&Matrix::zeros(0, k), &stack_rows(&active_rows, k));

    let mut notes = Vec::new();
    for (label, c) in [("G/u", &upper), ("g/v", &lower), ("g(x,z)/w", &copy)] {
        if !c.violations.is_empty() {
            notes.push(format!("{label}: complementarity violated at {:?}", c.violations));
        }
    }
    let holds = active_independence.holds && copy_independence.holds && copy_strict_complementarity && curvature.holds;
    Ok(LlvfRegularityReport {
        lambda,
        tau,
        residual_inf,
        upper,
        lower,
        copy,
        active_independence,
        copy_independence,
        copy_strict_complementarity,
        curvature,
        holds,
        mfcq_slack,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub phi: f64,
    pub argmin: Vec<f64>,
}

/// Brute-force estimate of the lower-level optimal value at `x`: grid search over
/// `center +- radius` in every `y` coordinate, then coordinate descent with
/// shrinking steps from the best feasible grid point.
pub fn lower_level_oracle<P: BilevelProblem + ?Sized>(
    problem: &P,
    x: &[f64],
    center: &[f64],
    radius: f64,
    grid_points: usize,
) -> Result<OracleResult, Error> {
    let dims = problem.dims();
    if dims.m > 3 {
        return Err(Error::Dimension(format!("grid oracle supports m <= 3, got m = {}", dims.m)));
    }
    if grid_points < 11 {
        return Err(Error::Dimension(format!("need at least 11 grid points per axis, got {grid_points}")));
    }
    assert_eq!(x.len(), dims.n);
    assert_eq!(center.len(), dims.m);
    let feasible_tol = 1e-8;
    let m = dims.m;
    let eval = |y: &[f64]| -> Option<f64> {
        let xy: Vec<f64> = x.iter().chain(y).copied().collect();
        let g = problem.lower_cons(&xy);
        if g.iter().all(|v| *v <= feasible_tol) {
            let f = problem.lower_obj(&xy);
            f.is_finite().then_some(f)
        } else {
            None
        }
    };
    let h = 2.0 * radius / (grid_points - 1) as f64;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let total = grid_points.pow(m as u32);
    let mut y = vec![0.0; m];
    for idx in 0..total {
        let mut rest = idx;
        for (j, yj) in y.iter_mut().enumerate() {
            *yj = center[j] - radius + h * (rest % grid_points) as f64;
            rest /= grid_points;
        }
        if let Some(f) = eval(&y) {
            if best.as_ref().is_none_or(|(b, _)| f < *b) {
                best = Some((f, y.clone()));
            }
        }
    }
    let (mut fbest, mut ybest) =
        best.ok_or_else(|| Error::InfeasibleGrid(format!("x = {x:?}, radius {radius}, {grid_points} points")))?;
    let mut step = h;
    while step > 1e-10 {
        let mut improved = false;
        for j in 0..m {
            for dir in [-1.0, 1.0] {
                let mut cand = ybest.clone();
                cand[j] += dir * step;
                if let Some(f) = eval(&cand) {
                    if f < fbest {
                        fbest = f;
                        ybest = cand;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(OracleResult { phi: fbest, argmin: ybest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suite::{fixtures, lampariello_sagratella, phi_kink, sc98};

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn classify_examples() {
        let c = classify(&v(&[0.0, -3.0, -7.0]), &v(&[62.0, 0.0, 0.0]), 1e-6);
        assert_eq!(c.nu, vec![0]);
        assert_eq!(c.eta, vec![1, 2]);
        assert!(c.theta.is_empty());
        let c = classify(&v(&[0.0]), &v(&[0.0]), 1e-6);
        assert_eq!(c.theta, vec![0]);
        assert_eq!(c.active, vec![0]);
        let c = classify(&v(&[-1.0]), &v(&[2.0]), 1e-6);
        assert_eq!(c.violations, vec![0]);
    }

    #[test]
    fn oracle_examples() {
        let p = phi_kink();
        let r = lower_level_oracle(&p, &[0.5], &[0.0], 2.0, 41).unwrap();
        assert!((r.phi + 0.5).abs() < 1e-6);
        let r = lower_level_oracle(&p, &[-1.0], &[0.0], 2.0, 41).unwrap();
        assert!(r.phi.abs() < 1e-6);
        let r = lower_level_oracle(&sc98(), &[1.0], &[3.0], 4.0, 41).unwrap();
        assert!((r.argmin[0] - 3.0).abs() < 1e-6 && (r.phi - 4.0).abs() < 1e-6);
        assert!(matches!(lower_level_oracle(&p, &[0.0], &[10.0], 1.0, 11), Err(Error::InfeasibleGrid(_))));
    }

    #[test]
    fn mfcq_variants_differ() {
        let p = lampariello_sagratella();
        let kkt = KktPoint::from_slice(p.dims(), &fixtures("lampariello-sagratella")[0].point).unwrap();
        let r = kkt_regularity_report(&p, 1.0, &kkt, DEFAULT_TAU).unwrap();
        assert!(r.mfcq_independence.holds);
        assert!(r.mfcq_slack <= 1e-8, "slack {}", r.mfcq_slack);
        let ll = LlvfPoint::from_slice(p.dims(), &fixtures("lampariello-sagratella")[1].point).unwrap();
        let r = llvf_regularity_report(&p, 1.0, &ll, DEFAULT_TAU).unwrap();
        assert!(r.mfcq_slack > 1e-3);
    }

    #[test]
    fn curvature_on_sc98_cones() {
        let p = sc98();
        let fx = fixtures("sc98");
        let kkt = KktPoint::from_slice(p.dims(), &fx[0].point).unwrap();
        let r = kkt_regularity_report(&p, 16.0, &kkt, DEFAULT_TAU).unwrap();
        // cone {(d, 2d, d3_1, 0, 0)}: one moving and one still direction, form 10 d^2
        assert_eq!(r.curvature.cone_dim, 2);
        assert_eq!(r.curvature.moving_dim, 1);
        assert!((r.curvature.min_eig.unwrap() - 2.0).abs() < 1e-9);
        let ll = LlvfPoint::from_slice(p.dims(), &fx[1].point).unwrap();
        let r = llvf_regularity_report(&p, 2.0, &ll, DEFAULT_TAU).unwrap();
        // cone spanned by (1, 2, 2)/3 with form value 10/9
        assert_eq!(r.curvature.cone_dim, 1);
        assert!((r.curvature.min_eig.unwrap() - 10.0 / 9.0).abs() < 1e-9);
    }
}
