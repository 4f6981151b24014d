//! Closed-form stationary state for the one-dimensional landscape with
//! `b = 1` on `(-a, 0)` and `b = 2` on `(0, a)`, flat fitness `3 - r` and
//! absorbing ends at `±a`.

use std::f64::consts::{FRAC_PI_2, SQRT_2};

use serde::Serialize;

use crate::error::{Error, Result};

/// Open interval known to contain the root `aB`, slightly shrunk so that
/// both tangents stay finite.
pub const EXPLICIT_ROOT_BRACKET: (f64, f64) = (FRAC_PI_2 / SQRT_2 + 1e-9, FRAC_PI_2 - 1e-9);

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Explicit1DSolution {
    pub a: f64,
    pub diffusion: f64,
    pub r: f64,
    /// Root `aB` of `√2 tan(aB√2) = -tan(aB)`.
    pub a_b_root: f64,
    /// Frequency `B` on the right half.
    pub frequency: f64,
    /// `μ = √(2D)`.
    pub mu: f64,
    /// Principal eigenvalue `3 - r - (μB)²`.
    pub m_inf: f64,
    /// `∫_{-a}^0 q / ∫_0^a q`.
    pub mass_ratio: f64,
}

fn root_equation(y: f64) -> f64 {
    SQRT_2 * (y * SQRT_2).tan() + y.tan()
}

/// `j(x) = (1 - cos x) / sin x`.
fn j(x: f64) -> f64 {
    (1.0 - x.cos()) / x.sin()
}

/// The analytic lower bound `1 / (2√(2-√2) - 2 + √2)` on the mass ratio.
pub fn mass_ratio_lower_bound() -> f64 {
    1.0 / (2.0 * (2.0 - SQRT_2).sqrt() - 2.0 + SQRT_2)
}

pub fn explicit_1d(diffusion: f64, a: f64, r: f64) -> Result<Explicit1DSolution> {
    if !(diffusion > 0.0 && a > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "explicit solution needs D > 0 and a > 0, got D = {diffusion}, a = {a}"
        )));
    }
    let (mut lo, mut hi) = EXPLICIT_ROOT_BRACKET;
    debug_assert!(root_equation(lo) < 0.0 && root_equation(hi) > 0.0);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if root_equation(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    let frequency = root / a;
    let mu = (2.0 * diffusion).sqrt();
    Ok(Explicit1DSolution {
        a,
        diffusion,
        r,
        a_b_root: root,
        frequency,
        mu,
        m_inf: 3.0 - r - (mu * frequency).powi(2),
        mass_ratio: j(root * SQRT_2) / j(root) / SQRT_2,
    })
}

impl Explicit1DSolution {
    /// Unnormalized profile on `(-a, 0)`.
    pub fn q1(&self, x: f64) -> f64 {
        let k = self.frequency * SQRT_2;
        -(SQRT_2 / self.frequency) * (x * k).cos() * ((x * k).tan() + (self.a * k).tan())
    }

    /// Unnormalized profile on `(0, a)`.
    pub fn q2(&self, x: f64) -> f64 {
        let b = self.frequency;
        (x * b).cos() * ((self.a * b).tan() - (x * b).tan()) / b
    }

    pub fn left_integral(&self) -> f64 {
        let k = self.frequency * SQRT_2 * self.a;
        -(1.0 - k.cos()) / k.cos() / self.frequency.powi(2)
    }

    pub fn right_integral(&self) -> f64 {
        let y = self.frequency * self.a;
        (1.0 - y.cos()) / y.cos() / self.frequency.powi(2)
    }

    /// Unit-mass density on `[-a, a]`, zero outside.
    pub fn density(&self, x: f64) -> f64 {
        let total = self.left_integral() + self.right_integral();
        if x <= -self.a || x >= self.a {
            0.0
        } else if x < 0.0 {
            self.q1(x) / total
        } else {
            self.q2(x) / total
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_and_ratio() {
        let s = explicit_1d(1e-3, 1.0, 2.0).unwrap();
        assert!((s.a_b_root - 1.338761890).abs() < 1e-8);
        assert!(s.mass_ratio > mass_ratio_lower_bound());
        assert!((mass_ratio_lower_bound() - 1.0583).abs() < 5e-5);
    }

    #[test]
    fn profiles_vanish_at_ends_and_join() {
        let s = explicit_1d(2e-3, 0.7, 1.0).unwrap();
        assert!(s.q1(-0.7).abs() < 1e-12);
        assert!(s.q2(0.7).abs() < 1e-12);
        assert!((s.q1(0.0) - s.q2(0.0)).abs() < 1e-10);
        let ratio = s.left_integral() / s.right_integral();
        assert!((ratio - s.mass_ratio).abs() < 1e-10);
    }

    #[test]
    fn rejects_nonpositive_inputs() {
        assert!(explicit_1d(0.0, 1.0, 0.0).is_err());
        assert!(explicit_1d(1e-3, -1.0, 0.0).is_err());
    }
}
