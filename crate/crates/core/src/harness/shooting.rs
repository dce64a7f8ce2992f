//! Eigenvalue counts on truncated regular problems.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::ode::{self, Control, OdeOptions};
use crate::pruefer::{flip_count, theta_rhs};
use crate::{CoefficientSet, Error, Result};

/// Separated boundary condition; the state `(u, pu')` at the endpoint is a
/// multiple of `(sin α, cos α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
    Angle(f64),
}

impl BoundaryCondition {
    /// Representative of `α` in `(0, π]`.
    pub fn angle(self) -> f64 {
        let a = match self {
            BoundaryCondition::Dirichlet => 0.0,
            BoundaryCondition::Neumann => PI / 2.0,
            BoundaryCondition::Angle(a) => a,
        };
        let r = a.rem_euclid(PI);
        if r == 0.0 {
            PI
        } else {
            r
        }
    }
}

pub const DEFAULT_CAP: i64 = 10_000;

fn check(coeffs: &CoefficientSet, interval: (f64, f64), window: (f64, f64)) -> Result<()> {
    let (a, b) = interval;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::Config(format!("truncation ({a}, {b}) must be a finite interval")));
    }
    if a < coeffs.a || b > coeffs.b {
        return Err(Error::RangeMismatch { lo: a, hi: b });
    }
    if !(window.0 < window.1) {
        return Err(Error::Config(format!("empty window ({}, {})", window.0, window.1)));
    }
    Ok(())
}

/// Prüfer angle at `to`, started from `theta` at `from` (either direction).
pub fn theta_at(coeffs: &CoefficientSet, lambda: f64, from: f64, theta: f64, to: f64, opts: &OdeOptions) -> Result<f64> {
    let out = ode::integrate(
        opts,
        |x, y, dy| dy[0] = theta_rhs(coeffs, lambda, x, y[0]),
        from,
        &[theta],
        to,
        |_| Control::Continue,
    )?;
    Ok(out.y[0])
}

/// Number of eigenvalues in the open window `(λ0, λ1)` of the problem on
/// `interval` with boundary conditions `bc`. The angle at `b` of the solution
/// satisfying the left condition increases with `λ` and passes `β + kπ` exactly
/// at the eigenvalues.
pub fn eigencount_shooting(
    coeffs: &CoefficientSet,
    interval: (f64, f64),
    window: (f64, f64),
    bc: (BoundaryCondition, BoundaryCondition),
    cap: i64,
    opts: &OdeOptions,
) -> Result<i64> {
    check(coeffs, interval, window)?;
    let (a, b) = interval;
    let alpha = bc.0.angle() - PI;
    let beta = bc.1.angle();
    let t0 = theta_at(coeffs, window.0, a, alpha, b, opts)?;
    let t1 = theta_at(coeffs, window.1, a, alpha, b, opts)?;
    let count = flip_count(t0 - beta, t1 - beta);
    if count > cap {
        return Err(Error::WindowTooWide { count, cap });
    }
    Ok(count)
}

/// The same count as weighted sign flips of `W(u_-(λ0), u_+(λ1))` on `(a, b)`,
/// where `u_-` satisfies the left and `u_+` the right condition.
pub fn eigencount_sign_flips(
    coeffs: &CoefficientSet,
    interval: (f64, f64),
    window: (f64, f64),
    bc: (BoundaryCondition, BoundaryCondition),
    opts: &OdeOptions,
) -> Result<i64> {
    check(coeffs, interval, window)?;
    let (a, b) = interval;
    let alpha = bc.0.angle();
    let beta = bc.1.angle();
    let minus_b = theta_at(coeffs, window.0, a, alpha, b, opts)?;
    let plus_a = theta_at(coeffs, window.1, b, beta, a, opts)?;
    Ok(flip_count(plus_a - alpha, beta - minus_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Coefficient;

    fn free() -> CoefficientSet {
        CoefficientSet::schroedinger(Coefficient::from(0.0), 0.0, 10.0).unwrap()
    }

    const DD: (BoundaryCondition, BoundaryCondition) = (BoundaryCondition::Dirichlet, BoundaryCondition::Dirichlet);

    #[test]
    fn free_dirichlet_counts() {
        let o = OdeOptions::default();
        assert_eq!(eigencount_shooting(&free(), (0.0, PI), (0.5, 4.5), DD, DEFAULT_CAP, &o).unwrap(), 2);
        assert_eq!(eigencount_shooting(&free(), (0.0, 1.0), (0.0, 50.0), DD, DEFAULT_CAP, &o).unwrap(), 2);
        assert_eq!(eigencount_sign_flips(&free(), (0.0, PI), (0.5, 4.5), DD, &o).unwrap(), 2);
        assert_eq!(eigencount_sign_flips(&free(), (0.0, 1.0), (0.0, 50.0), DD, &o).unwrap(), 2);
        // below the first eigenvalue
        assert_eq!(eigencount_shooting(&free(), (0.0, PI), (-5.0, 0.5), DD, DEFAULT_CAP, &o).unwrap(), 0);
    }

    #[test]
    fn neumann_includes_zero() {
        let o = OdeOptions::default();
        let nn = (BoundaryCondition::Neumann, BoundaryCondition::Neumann);
        // eigenvalues k², k = 0, 1, 2, ...
        assert_eq!(eigencount_shooting(&free(), (0.0, PI), (-0.5, 4.5), nn, DEFAULT_CAP, &o).unwrap(), 3);
        assert_eq!(eigencount_sign_flips(&free(), (0.0, PI), (-0.5, 4.5), nn, &o).unwrap(), 3);
    }

    #[test]
    fn cap_and_bad_input() {
        let o = OdeOptions::default();
        let r = eigencount_shooting(&free(), (0.0, PI), (0.5, 1000.0), DD, 5, &o);
        assert!(matches!(r, Err(Error::WindowTooWide { count: 31, cap: 5 })));
        assert!(eigencount_shooting(&free(), (0.0, PI), (2.0, 1.0), DD, 5, &o).is_err());
        assert!(eigencount_shooting(&free(), (0.0, 20.0), (0.0, 1.0), DD, 5, &o).is_err());
    }
}
