//! Fischer-Burmeister complementarity function.
//!
//! `fb(a, b) = sqrt(a^2 + b^2) - a - b` vanishes exactly when `a >= 0`, `b >= 0`
//! and `ab = 0`. Callers pass the constraint already negated, so the pair
//! `(-g, v)` encodes `g <= 0, v >= 0, g'v = 0`.

use crate::linalg::Vector;

/// Below this radius a pair is treated as the kink at the origin.
const DEGENERATE_RADIUS: f64 = 1e-14;

pub fn fb(a: f64, b: f64) -> f64 {
    a.hypot(b) - (a + b)
}

/// Partial derivatives of [`fb`], or the chosen generalized element at the kink.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbPairDerivative {
    pub d_a: f64,
    pub d_b: f64,
}

/// Derivative element of `fb` at `(a, b)`.
///
/// Away from the origin this is the gradient. At (or numerically at) the origin
/// it is the limit of the gradient along the direction `(1, 1)`.
pub fn fb_derivative_element(a: f64, b: f64) -> FbPairDerivative {
    let r = a.hypot(b);
    if r < DEGENERATE_RADIUS {
        let d = std::f64::consts::FRAC_1_SQRT_2 - 1.0;
        return FbPairDerivative { d_a: d, d_b: d };
    }
    FbPairDerivative { d_a: a / r - 1.0, d_b: b / r - 1.0 }
}

/// Componentwise `fb(c_i, mult_i)` together with the two derivative vectors.
pub fn fb_block(c: &Vector, mult: &Vector) -> (Vector, Vector, Vector) {
    assert_eq!(c.len(), mult.len(), "fb_block length mismatch");
    let n = c.len();
    let mut values = Vector::zeros(n);
    let mut d_c = Vector::zeros(n);
    let mut d_mult = Vector::zeros(n);
    for i in 0..n {
        values[i] = fb(c[i], mult[i]);
        let d = fb_derivative_element(c[i], mult[i]);
        d_c[i] = d.d_a;
        d_mult[i] = d.d_b;
    }
    (values, d_c, d_mult)
}
