//! Residual system of the lower-level value-function model.
//!
//! Variables `zeta = (x, y, z, u, v, w)` with lengths `(n, m, m, p, q, q)`; `z` is
//! a second copy of the lower-level variable that stands in for a lower-level
//! solution, and `w` its multiplier. With `l(x, z, w) = f(x, z) + w'g(x, z)`:
//!
//! ```text
//! grad_x F + grad_x G' u + grad_x g(x,y)' v + lambda grad_x f(x,y) - lambda grad_x l(x,z,w) = 0
//! grad_y F + grad_y G' u + grad_y g(x,y)' v + lambda grad_y f(x,y)                         = 0
//! -lambda grad_z l(x,z,w)                                                                  = 0
//! fb(-G, u) = 0,   fb(-g(x,y), v) = 0,   fb(-g(x,z), w) = 0
//! ```

use serde::{Deserialize, Serialize};

use crate::fb::fb_block;
use crate::kkt::{check_len, triple_violation, KktPoint};
use crate::linalg::{mat_norm_inf, Matrix, Vector};
use crate::problem::{BilevelProblem, Dims};
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct LlvfPoint {
    pub x: Vector,
    pub y: Vector,
    pub z: Vector,
    pub u: Vector,
    pub v: Vector,
    pub w: Vector,
}

fn take(data: &[f64], at: &mut usize, len: usize) -> Vector {
    let v = Vector::from_column_slice(&data[*at..*at + len]);
    *at += len;
    v
}

impl LlvfPoint {
    pub fn from_slice(dims: Dims, data: &[f64]) -> Result<Self, Error> {
        check_len("LLVF point", data.len(), dims.llvf_len())?;
        let mut at = 0;
        Ok(Self {
            x: take(data, &mut at, dims.n),
            y: take(data, &mut at, dims.m),
            z: take(data, &mut at, dims.m),
            u: take(data, &mut at, dims.p),
            v: take(data, &mut at, dims.q),
            w: take(data, &mut at, dims.q),
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        [&self.x, &self.y, &self.z, &self.u, &self.v, &self.w].iter().flat_map(|b| b.iter().copied()).collect()
    }

    pub fn xy(&self) -> Vec<f64> {
        self.x.iter().chain(self.y.iter()).copied().collect()
    }

    pub fn xz(&self) -> Vec<f64> {
        self.x.iter().chain(self.z.iter()).copied().collect()
    }

    fn check(&self, dims: Dims) -> Result<(), Error> {
        check_len("x", self.x.len(), dims.n)?;
        check_len("y", self.y.len(), dims.m)?;
        check_len("z", self.z.len(), dims.m)?;
        check_len("u", self.u.len(), dims.p)?;
        check_len("v", self.v.len(), dims.q)?;
        check_len("w", self.w.len(), dims.q)
    }
}

/// Stationarity equations without the complementarity rows, unscaled:
/// returns `(KS-x, KS-y, grad_z l(x, z, w))`.
fn gradient_rows<P: BilevelProblem + ?Sized>(problem: &P, lambda: f64, pt: &LlvfPoint) -> (Vector, Vector) {
    let n = problem.dims().n;
    let (xy, xz) = (pt.xy(), pt.xz());
    let grad_l = problem.lower_obj_grad(&xz) + problem.lower_cons_jac(&xz).transpose() * &pt.w;
    let mut r_xy = problem.upper_obj_grad(&xy)
        + problem.upper_cons_jac(&xy).transpose() * &pt.u
        + problem.lower_cons_jac(&xy).transpose() * &pt.v
        + problem.lower_obj_grad(&xy) * lambda;
    let corr = grad_l.rows(0, n) * lambda;
    let mut head = r_xy.rows_mut(0, n);
    head -= &corr;
    (r_xy, grad_l.rows(n, problem.dims().m).into_owned())
}

/// Residual of the value-function-model system; length `n + 2m + p + 2q`.
pub fn residual_llvf<P: BilevelProblem + ?Sized>(problem: &P, lambda: f64, pt: &LlvfPoint) -> Result<Vector, Error> {
    let dims = problem.dims();
    pt.check(dims)?;
    let Dims { n, m, p, q } = dims;
    let k = n + m;
    let (xy, xz) = (pt.xy(), pt.xz());
    let (r_xy, grad_lz) = gradient_rows(problem, lambda, pt);

    let mut r = Vector::zeros(dims.llvf_len());
    r.rows_mut(0, k).copy_from(&r_xy);
    r.rows_mut(k, m).copy_from(&(grad_lz * -lambda));
    let mut at = k + m;
    let (fb_up, _, _) = fb_block(&-problem.upper_cons(&xy), &pt.u);
    r.rows_mut(at, p).copy_from(&fb_up);
    at += p;
    let (fb_y, _, _) = fb_block(&-problem.lower_cons(&xy), &pt.v);
    r.rows_mut(at, q).copy_from(&fb_y);
    at += q;
    let (fb_z, _, _) = fb_block(&-problem.lower_cons(&xz), &pt.w);
    r.rows_mut(at, q).copy_from(&fb_z);
    Ok(r)
}

/// One element of the generalized Jacobian of [`residual_llvf`]. Only second
/// derivatives of the problem data are needed.
pub fn jacobian_llvf<P: BilevelProblem + ?Sized>(problem: &P, lambda: f64, pt: &LlvfPoint) -> Result<Matrix, Error> {
    let dims = problem.dims();
    pt.check(dims)?;
    let Dims { n, m, p, q } = dims;
    let k = n + m;
    let (xy, xz) = (pt.xy(), pt.xz());
    let total = dims.llvf_len();
    let (cz, cu, cv, cw) = (k, k + m, k + m + p, k + m + p + q);
    let (rz, rg_up, rg_y, rg_z) = (k, k + m, k + m + p, k + m + p + q);

    let h1 = problem.upper_obj_hess(&xy)
        + problem.upper_cons_hess_sum(&xy, pt.u.as_slice())
        + problem.lower_cons_hess_sum(&xy, pt.v.as_slice())
        + problem.lower_obj_hess(&xy) * lambda;
    let h2 = (problem.lower_obj_hess(&xz) + problem.lower_cons_hess_sum(&xz, pt.w.as_slice())) * -lambda;
    let jg_up = problem.upper_cons_jac(&xy);
    let jg_y = problem.lower_cons_jac(&xy);
    let jg_z = problem.lower_cons_jac(&xz);

    let mut jac = Matrix::zeros(total, total);
    jac.view_mut((0, 0), (k, k)).copy_from(&h1);
    let xx = jac.view((0, 0), (n, n)) + h2.view((0, 0), (n, n));
    jac.view_mut((0, 0), (n, n)).copy_from(&xx);
    jac.view_mut((0, cz), (n, m)).copy_from(&h2.view((0, n), (n, m)));
    jac.view_mut((rz, 0), (m, n)).copy_from(&h2.view((n, 0), (m, n)));
    jac.view_mut((rz, cz), (m, m)).copy_from(&h2.view((n, n), (m, m)));

    jac.view_mut((0, cu), (k, p)).copy_from(&jg_up.transpose());
    jac.view_mut((0, cv), (k, q)).copy_from(&jg_y.transpose());
    jac.view_mut((0, cw), (n, q)).copy_from(&(jg_z.columns(0, n).transpose() * -lambda));
    jac.view_mut((rz, cw), (m, q)).copy_from(&(jg_z.columns(n, m).transpose() * -lambda));

    let (_, da, db) = fb_block(&-problem.upper_cons(&xy), &pt.u);
    for i in 0..p {
        jac.view_mut((rg_up + i, 0), (1, k)).copy_from(&(jg_up.row(i) * -da[i]));
        jac[(rg_up + i, cu + i)] = db[i];
    }
    let (_, da, db) = fb_block(&-problem.lower_cons(&xy), &pt.v);
    for j in 0..q {
        jac.view_mut((rg_y + j, 0), (1, k)).copy_from(&(jg_y.row(j) * -da[j]));
        jac[(rg_y + j, cv + j)] = db[j];
    }
    let (_, da, db) = fb_block(&-problem.lower_cons(&xz), &pt.w);
    for j in 0..q {
        let row = jg_z.row(j) * -da[j];
        jac.view_mut((rg_z + j, 0), (1, n)).copy_from(&row.columns(0, n));
        jac.view_mut((rg_z + j, cz), (1, m)).copy_from(&row.columns(n, m));
        jac[(rg_z + j, cw + j)] = db[j];
    }
    Ok(jac)
}

/// Largest violation of the value-function-model stationarity conditions
/// (gradient equations unscaled by `lambda` in the `z` block, all multipliers `>= 0`).
pub fn check_llvf_stationarity<P: BilevelProblem + ?Sized>(
    problem: &P,
    lambda: f64,
    pt: &LlvfPoint,
) -> Result<f64, Error> {
    pt.check(problem.dims())?;
    let (xy, xz) = (pt.xy(), pt.xz());
    let (r_xy, grad_lz) = gradient_rows(problem, lambda, pt);
    let eq = r_xy.iter().chain(grad_lz.iter()).fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let cp = triple_violation(&problem.upper_cons(&xy), &pt.u, 1.0)
        .max(triple_violation(&problem.lower_cons(&xy), &pt.v, 1.0))
        .max(triple_violation(&problem.lower_cons(&xz), &pt.w, 1.0));
    Ok(eq.max(cp))
}

/// Whether the hypotheses of the KKT-to-value-function correspondence hold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapApplicability {
    /// `|z' g(x, y)|`.
    pub complementarity_gap: f64,
    /// Max-norm of the `(x, y)`-Jacobian of `grad_y l(x, y, z)`.
    pub cross_derivative_norm: f64,
    pub gap_is_zero: bool,
    pub cross_derivative_is_zero: bool,
}

const MAP_TOL: f64 = 1e-8;

/// Maps a KKT-model point (in the `z >= 0` convention) to the value-function model:
/// `z := y` for the lower-level copy and the lower multiplier becomes `w`.
pub fn map_kkt_to_llvf<P: BilevelProblem + ?Sized>(
    problem: &P,
    pt: &KktPoint,
) -> Result<(LlvfPoint, MapApplicability), Error> {
    let dims = problem.dims();
    check_len("x", pt.x.len(), dims.n)?;
    check_len("y", pt.y.len(), dims.m)?;
    check_len("z", pt.z.len(), dims.q)?;
    let xy = pt.xy();
    let gap = problem.lower_cons(&xy).dot(&pt.z).abs();
    let h_l = problem.lower_obj_hess(&xy) + problem.lower_cons_hess_sum(&xy, pt.z.as_slice());
    let cross = mat_norm_inf(&h_l.rows(dims.n, dims.m).into_owned());
    let mapped = LlvfPoint {
        x: pt.x.clone(),
        y: pt.y.clone(),
        z: pt.y.clone(),
        u: pt.u.clone(),
        v: pt.v.clone(),
        w: pt.z.clone(),
    };
    let flags = MapApplicability {
        complementarity_gap: gap,
        cross_derivative_norm: cross,
        gap_is_zero: gap <= MAP_TOL,
        cross_derivative_is_zero: cross <= MAP_TOL,
    };
    Ok((mapped, flags))
}
