//! Coefficients of the stabilized BDF family and the scalar quantities
//! derived from them.

use crate::error::{Result, SbdfError};
use crate::grid::Field;

/// BDF weights, stabilization scale and signed binomial weights for one order.
///
/// `a[l]` multiplies `phi^{n+1-l}` in the difference quotient (scaled so that
/// `a[0]` is the leading coefficient); `stab[l] = (-1)^l * C(k, l)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeCoeffs {
    pub k: usize,
    pub a: Vec<f64>,
    pub beta: f64,
    pub stab: Vec<f64>,
}

pub fn scheme_coeffs(k: usize) -> Result<SchemeCoeffs> {
    let (a, beta): (Vec<f64>, f64) = match k {
        1 => (vec![1.0, -1.0], 1.0),
        2 => (vec![1.5, -2.0, 0.5], 2.0),
        3 => (vec![11.0 / 6.0, -3.0, 1.5, -1.0 / 3.0], 6.0),
        4 => (vec![25.0 / 12.0, -4.0, 3.0, -4.0 / 3.0, 0.25], 12.0),
        _ => return Err(SbdfError::InvalidOrder(k)),
    };
    Ok(SchemeCoeffs {
        k,
        a,
        beta,
        stab: signed_binomials(k),
    })
}

fn signed_binomials(k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k + 1);
    let mut c = 1.0;
    for l in 0..=k {
        out.push(if l % 2 == 0 { c } else { -c });
        c = c * (k - l) as f64 / (l + 1) as f64;
    }
    out
}

impl SchemeCoeffs {
    pub fn a0(&self) -> f64 {
        self.a[0]
    }

    /// Coefficient of `phi^{n+1-l}` (`l >= 1`) in the history term:
    /// `-beta * a[l] - beta * stab[l] * B * dt`.
    pub fn history_weight(&self, l: usize, b: f64, dt: f64) -> f64 {
        -self.beta * self.a[l] - self.beta * self.stab[l] * b * dt
    }

    /// Divisor of the fixed-point update.
    pub fn divisor(&self, alpha: f64, b: f64, dt: f64, h: f64) -> f64 {
        self.beta * self.a0() + coupling(self, alpha, b, dt, h)
    }
}

fn coupling(c: &SchemeCoeffs, alpha: f64, b: f64, dt: f64, h: f64) -> f64 {
    4.0 * c.beta * alpha * dt / (h * h) + 2.0 * c.beta * b * dt
}

/// Signed-binomial combination `sum_l (-1)^l C(k, l) levels[l]`, with
/// `k = levels.len() - 1` and `levels[0]` the newest.
pub fn backward_difference(levels: &[&Field]) -> Result<Field> {
    if levels.len() < 2 {
        return Err(SbdfError::LevelCount {
            expected: 2,
            got: levels.len(),
        });
    }
    let w = signed_binomials(levels.len() - 1);
    let terms: Vec<(f64, &Field)> = w.iter().copied().zip(levels.iter().copied()).collect();
    Field::linear_combination(&terms)
}

/// Upper bound on the Lipschitz constant of one fixed-point sweep followed
/// by the cut-off.
pub fn contraction_factor(k: usize, alpha: f64, b: f64, dt: f64, h: f64) -> Result<f64> {
    let c = scheme_coeffs(k)?;
    check_nonneg("alpha", alpha)?;
    check_nonneg("B", b)?;
    check_positive("dt", dt)?;
    check_positive("h", h)?;
    let a = coupling(&c, alpha, b, dt, h);
    Ok(a / (c.beta * c.a0() + a))
}

/// `C * min(dt^{k+1}, h^2)`.
pub fn stopping_tolerance(k: usize, dt: f64, h: f64, tol_const: f64) -> Result<f64> {
    scheme_coeffs(k)?;
    check_positive("tol_const", tol_const)?;
    check_positive("dt", dt)?;
    check_positive("h", h)?;
    Ok(tol_const * dt.powi(k as i32 + 1).min(h * h))
}

fn check_nonneg(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(SbdfError::InvalidParameter {
            name,
            reason: format!("must be finite and >= 0, got {v}"),
        })
    }
}

pub(crate) fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(SbdfError::InvalidParameter {
            name,
            reason: format!("must be finite and > 0, got {v}"),
        })
    }
}
