//! Residual system of the lower-level KKT model.
//!
//! Variables `zeta = (x, y, z, s, u, v, w)` with lengths `(n, m, q, m, p, q, q)`.
//! With `lbar = f - z'g` the system is
//!
//! ```text
//! grad_{xy} F + grad G' u + grad g' (v + lambda z) + grad_{xy}(grad_y lbar)' s = 0
//! lambda g - grad_y g s + w                                                  = 0
//! grad_y lbar                                                                = 0
//! fb(-G, u) = 0,   fb(-g, v) = 0,   fb(-z, w) = 0
//! ```
//!
//! so the lower multiplier `z` is nonpositive at solutions. The checker
//! [`check_kkt_stationarity`] works in the mirrored convention `z >= 0, w <= 0`
//! with `l = f + z'g`; [`to_phi1_coords`] maps between them.

use crate::fb::fb_block;
use crate::linalg::{Matrix, Vector};
use crate::problem::{lbar_hess, BilevelProblem, Dims};
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct KktPoint {
    pub x: Vector,
    pub y: Vector,
    pub z: Vector,
    pub s: Vector,
    pub u: Vector,
    pub v: Vector,
    pub w: Vector,
}

fn take(data: &[f64], at: &mut usize, len: usize) -> Vector {
    let v = Vector::from_column_slice(&data[*at..*at + len]);
    *at += len;
    v
}

pub(crate) fn check_len(label: &str, got: usize, want: usize) -> Result<(), Error> {
    if got != want {
        return Err(Error::Dimension(format!("{label}: expected length {want}, got {got}")));
    }
    Ok(())
}

impl KktPoint {
    pub fn from_slice(dims: Dims, data: &[f64]) -> Result<Self, Error> {
        check_len("KKT point", data.len(), dims.kkt_len())?;
        let mut at = 0;
        Ok(Self {
            x: take(data, &mut at, dims.n),
            y: take(data, &mut at, dims.m),
            z: take(data, &mut at, dims.q),
            s: take(data, &mut at, dims.m),
            u: take(data, &mut at, dims.p),
            v: take(data, &mut at, dims.q),
            w: take(data, &mut at, dims.q),
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        [&self.x, &self.y, &self.z, &self.s, &self.u, &self.v, &self.w].iter().flat_map(|b| b.iter().copied()).collect()
    }

    pub fn xy(&self) -> Vec<f64> {
        self.x.iter().chain(self.y.iter()).copied().collect()
    }

    fn check(&self, dims: Dims) -> Result<(), Error> {
        check_len("x", self.x.len(), dims.n)?;
        check_len("y", self.y.len(), dims.m)?;
        check_len("z", self.z.len(), dims.q)?;
        check_len("s", self.s.len(), dims.m)?;
        check_len("u", self.u.len(), dims.p)?;
        check_len("v", self.v.len(), dims.q)?;
        check_len("w", self.w.len(), dims.q)
    }
}

/// Residual of the KKT-model system; length `n + 2m + p + 3q`.
pub fn residual_kkt<P: BilevelProblem + ?Sized>(problem: &P, lambda: f64, pt: &KktPoint) -> Result<Vector, Error> {
    let dims = problem.dims();
    pt.check(dims)?;
    let Dims { n, m, p, q } = dims;
    let k = n + m;
    let xy = pt.xy();

    let jg_up = problem.upper_cons_jac(&xy);
    let jg = problem.lower_cons_jac(&xy);
    let hl = lbar_hess(problem, &xy, pt.z.as_slice());
    let g = problem.lower_cons(&xy);
    let grad_f = problem.lower_obj_grad(&xy);
    let jg_y = jg.columns(n, m);

    let mut r = Vector::zeros(dims.kkt_len());
    let r_xy = problem.upper_obj_grad(&xy)
        + jg_up.transpose() * &pt.u
        + jg.transpose() * (&pt.v + &pt.z * lambda)
        + hl.columns(n, m) * &pt.s;
    r.rows_mut(0, k).copy_from(&r_xy);

    let r_z = &g * lambda - jg_y * &pt.s + &pt.w;
    r.rows_mut(k, q).copy_from(&r_z);

    let h = grad_f.rows(n, m) - jg_y.transpose() * &pt.z;
    r.rows_mut(k + q, m).copy_from(&h);

    let mut at = k + q + m;
    let (fb_up, _, _) = fb_block(&-problem.upper_cons(&xy), &pt.u);
    r.rows_mut(at, p).copy_from(&fb_up);
    at += p;
    let (fb_lo, _, _) = fb_block(&-g, &pt.v);
    r.rows_mut(at, q).copy_from(&fb_lo);
    at += q;
    let (fb_zw, _, _) = fb_block(&-&pt.z, &pt.w);
    r.rows_mut(at, q).copy_from(&fb_zw);
    Ok(r)
}

/// One element of the generalized Jacobian of [`residual_kkt`].
///
/// This is the exact Jacobian wherever no Fischer-Burmeister pair sits at the
/// origin; degenerate pairs use the element of [`crate::fb::fb_derivative_element`].
pub fn jacobian_kkt<P: BilevelProblem + ?Sized>(problem: &P, lambda: f64, pt: &KktPoint) -> Result<Matrix, Error> {
    let dims = problem.dims();
    pt.check(dims)?;
    let Dims { n, m, p, q } = dims;
    let k = n + m;
    let xy = pt.xy();
    let total = dims.kkt_len();

    // column offsets
    let (cz, cs) = (k, k + q);
    let (cu, cv, cw) = (k + q + m, k + q + m + p, k + 2 * q + m + p);
    // row offsets
    let (rz, rh) = (k, k + q);
    let (rg_up, rg_lo, rzw) = (k + q + m, k + q + m + p, k + 2 * q + m + p);

    let jg_up = problem.upper_cons_jac(&xy);
    let jg = problem.lower_cons_jac(&xy);
    let hl = lbar_hess(problem, &xy, pt.z.as_slice());
    let mult_g: Vec<f64> = pt.v.iter().zip(pt.z.iter()).map(|(v, z)| v + lambda * z).collect();

    let mut jac = Matrix::zeros(total, total);

    let hxy = problem.upper_obj_hess(&xy)
        + problem.upper_cons_hess_sum(&xy, pt.u.as_slice())
        + problem.lower_cons_hess_sum(&xy, &mult_g)
        + problem.third_contract(&xy, pt.z.as_slice(), pt.s.as_slice());
    jac.view_mut((0, 0), (k, k)).copy_from(&hxy);

    // coupling through z: d(R_xy)/dz_j and d(R_z)_j/d(xy) are transposes of each other
    for j in 0..q {
        let hj = problem.lower_cons_hess(&xy, j);
        let col = jg.row(j).transpose() * lambda - hj.columns(n, m) * &pt.s;
        jac.view_mut((0, cz + j), (k, 1)).copy_from(&col);
        jac.view_mut((rz + j, 0), (1, k)).copy_from(&col.transpose());
    }
    jac.view_mut((0, cs), (k, m)).copy_from(&hl.columns(n, m));
    jac.view_mut((0, cu), (k, p)).copy_from(&jg_up.transpose());
    jac.view_mut((0, cv), (k, q)).copy_from(&jg.transpose());

    let jg_y = jg.columns(n, m).into_owned();
    jac.view_mut((rz, cs), (q, m)).copy_from(&-&jg_y);
    for j in 0..q {
        jac[(rz + j, cw + j)] = 1.0;
    }

    jac.view_mut((rh, 0), (m, k)).copy_from(&hl.rows(n, m));
    jac.view_mut((rh, cz), (m, q)).copy_from(&-jg_y.transpose());

    let (_, da, db) = fb_block(&-problem.upper_cons(&xy), &pt.u);
    for i in 0..p {
        let row = jg_up.row(i) * -da[i];
        jac.view_mut((rg_up + i, 0), (1, k)).copy_from(&row);
        jac[(rg_up + i, cu + i)] = db[i];
    }
    let (_, da, db) = fb_block(&-problem.lower_cons(&xy), &pt.v);
    for j in 0..q {
        let row = jg.row(j) * -da[j];
        jac.view_mut((rg_lo + j, 0), (1, k)).copy_from(&row);
        jac[(rg_lo + j, cv + j)] = db[j];
    }
    let (_, da, db) = fb_block(&-&pt.z, &pt.w);
    for j in 0..q {
        jac[(rzw + j, cz + j)] = -da[j];
        jac[(rzw + j, cw + j)] = db[j];
    }
    Ok(jac)
}

/// Flips the lower multiplier and its complementarity partner: `z -> -z`, `w -> -w`.
///
/// The map is an involution, so it also converts back.
pub fn to_phi1_coords(pt: &KktPoint) -> KktPoint {
    KktPoint { z: -&pt.z, w: -&pt.w, ..pt.clone() }
}

/// Largest violation of one sign-constrained complementarity triple
/// `c <= 0, sign * mult >= 0, c * mult = 0`.
pub(crate) fn triple_violation(c: &Vector, mult: &Vector, sign: f64) -> f64 {
    c.iter()
        .zip(mult.iter())
        .fold(0.0_f64, |acc, (c, mu)| acc.max(c.max(0.0)).max((-sign * mu).max(0.0)).max((c * mu).abs()))
}

/// Largest violation of the KKT-model stationarity conditions with `l = f + z'g`,
/// `z >= 0` and `w <= 0`:
///
/// ```text
/// grad F + grad G' u + grad g' (v - lambda z) + grad_{xy}(grad_y l)' s = 0
/// grad_y f + grad_y g' z = 0
/// -lambda g + grad_y g s + w = 0
/// ```
///
/// plus the complementarity triples for `(G, u)`, `(g, v)` and `(-z, w)`.
pub fn check_kkt_stationarity<P: BilevelProblem + ?Sized>(
    problem: &P,
    lambda: f64,
    pt: &KktPoint,
) -> Result<f64, Error> {
    let dims = problem.dims();
    pt.check(dims)?;
    let Dims { n, m, .. } = dims;
    let xy = pt.xy();
    let jg = problem.lower_cons_jac(&xy);
    let jg_y = jg.columns(n, m);
    let g = problem.lower_cons(&xy);
    let up = problem.upper_cons(&xy);
    let h_l = problem.lower_obj_hess(&xy) + problem.lower_cons_hess_sum(&xy, pt.z.as_slice());

    let l_x = problem.upper_obj_grad(&xy)
        + problem.upper_cons_jac(&xy).transpose() * &pt.u
        + jg.transpose() * (&pt.v - &pt.z * lambda)
        + h_l.columns(n, m) * &pt.s;
    let l_eq = problem.lower_obj_grad(&xy).rows(n, m) + jg_y.transpose() * &pt.z;
    let l_z = -&g * lambda + jg_y * &pt.s + &pt.w;

    let eq = [l_x, l_eq.into_owned(), l_z]
        .iter()
        .flat_map(|v| v.iter().map(|e| e.abs()).collect::<Vec<_>>())
        .fold(0.0_f64, f64::max);
    let cp = triple_violation(&up, &pt.u, 1.0)
        .max(triple_violation(&g, &pt.v, 1.0))
        .max(triple_violation(&-&pt.z, &pt.w, -1.0));
    Ok(eq.max(cp))
}

/// `|z' g(x, y)|`; zero certifies S-stationarity of a KKT-model point.
pub fn s_stationarity_gap<P: BilevelProblem + ?Sized>(problem: &P, pt: &KktPoint) -> f64 {
    problem.lower_cons(&pt.xy()).dot(&pt.z).abs()
}
