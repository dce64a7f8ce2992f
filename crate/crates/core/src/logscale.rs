//! Iterated logarithms `log_k`, their products `L_n` and the borderline
//! potentials `Q_n = -1/4 Σ_{j<n} L_j^{-2}`.

use crate::{Error, Result};

/// `e_n` with `e_{-1} = -∞` and `e_n = exp(e_{n-1})`; `log_n` is positive above it.
pub fn threshold(n: i32) -> f64 {
    let mut t = f64::NEG_INFINITY;
    for _ in -1..n {
        t = t.exp();
    }
    t
}

/// `log_k(x)`, with `log|·|` applied to negative intermediate values.
pub fn log_k(k: u32, x: f64) -> f64 {
    let mut v = x;
    for _ in 0..k {
        v = v.abs().ln();
    }
    v
}

/// `L_n(x) = Π_{j=0}^n log_j(x)`; `L_{-1} = 1` is available as `l_n(-1, x)`.
pub fn l_n(n: i32, x: f64) -> f64 {
    let mut v = x;
    let mut prod = 1.0;
    for j in 0..=n {
        if j > 0 {
            v = v.abs().ln();
        }
        prod *= v;
    }
    prod
}

pub fn q_n(n: u32, x: f64) -> f64 {
    let mut v = x;
    let mut prod = 1.0;
    let mut sum = 0.0;
    for j in 0..n {
        if j > 0 {
            v = v.abs().ln();
        }
        prod *= v;
        sum += 1.0 / (prod * prod);
    }
    -0.25 * sum
}

/// `L_n'(x) = L_n(x) Σ_{j=0}^n L_j(x)^{-1}`.
pub fn l_n_prime(n: i32, x: f64) -> f64 {
    if n < 0 {
        return 0.0;
    }
    let mut v = x;
    let mut prod = 1.0;
    let mut sum = 0.0;
    for j in 0..=n {
        if j > 0 {
            v = v.abs().ln();
        }
        prod *= v;
        sum += 1.0 / prod;
    }
    prod * sum
}

/// `Q_n'(x) = 1/2 Σ_{j<n} L_j^{-2} Σ_{i≤j} L_i^{-1}`.
pub fn q_n_prime(n: u32, x: f64) -> f64 {
    let mut v = x;
    let mut prod = 1.0;
    let mut inner = 0.0;
    let mut total = 0.0;
    for j in 0..n {
        if j > 0 {
            v = v.abs().ln();
        }
        prod *= v;
        inner += 1.0 / prod;
        total += inner / (prod * prod);
    }
    0.5 * total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogScaleValues {
    pub log_n: f64,
    pub l_n: f64,
    pub q_n: f64,
}

/// Evaluates `(log_n, L_n, Q_n)` at `x`, requiring `x > e_n`.
pub fn eval_logscale(n: u32, x: f64) -> Result<LogScaleValues> {
    let t = threshold(n as i32);
    if !(x > t) {
        return Err(Error::DomainBelowThreshold { n, x, threshold: t });
    }
    Ok(LogScaleValues {
        log_n: log_k(n, x),
        l_n: l_n(n as i32, x),
        q_n: q_n(n, x),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogScale {
    pub n: u32,
}

impl LogScale {
    pub fn new(n: u32) -> Self {
        Self { n }
    }

    pub fn threshold(&self) -> f64 {
        threshold(self.n as i32)
    }

    pub fn eval(&self, x: f64) -> Result<LogScaleValues> {
        eval_logscale(self.n, x)
    }

    /// Background basis for `-u'' + Q_n u = 0`: `(√L_{n-1}, √L_{n-1} log_n)`
    /// together with quasi-derivatives.
    pub fn basis(&self, x: f64) -> [f64; 4] {
        let n = self.n as i32;
        let lm1 = l_n(n - 1, x);
        let dlm1 = l_n_prime(n - 1, x);
        let u = lm1.sqrt();
        let du = if n == 0 { 0.0 } else { 0.5 * dlm1 / u };
        let lg = log_k(self.n, x);
        let dlg = if n == 0 { 1.0 } else { 1.0 / l_n(n - 1, x) };
        [u, du, u * lg, du * lg + u * dlg]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn thresholds() {
        assert_eq!(threshold(-1), f64::NEG_INFINITY);
        assert_eq!(threshold(0), 0.0);
        assert_eq!(threshold(1), 1.0);
        assert!((threshold(2) - E).abs() < 1e-15);
        assert!((threshold(3) - E.powf(E)).abs() < 1e-13);
    }

    #[test]
    fn conventions() {
        let v = eval_logscale(0, 7.0).unwrap();
        assert_eq!((v.log_n, v.l_n, v.q_n), (7.0, 7.0, 0.0));
        let v = eval_logscale(1, E).unwrap();
        assert!((v.log_n - 1.0).abs() < 1e-15);
        assert!((v.l_n - E).abs() < 1e-15);
        assert!((v.q_n + 0.25 / (E * E)).abs() < 1e-16);
        assert!(eval_logscale(2, 2.0).is_err());
    }

    #[test]
    fn basis_has_unit_wronskian_and_solves_the_equation() {
        for n in 0..3u32 {
            let s = LogScale::new(n);
            let x0 = s.threshold().max(1.0) + 5.0;
            for k in 0..5 {
                let x = x0 * (1.0 + k as f64);
                let b = s.basis(x);
                assert!((b[0] * b[3] - b[1] * b[2] - 1.0).abs() < 1e-12, "n={n}");
                // u'' ≈ Q_n u via centered differences of u'
                let h = 1e-4 * x;
                let d = (s.basis(x + h)[1] - s.basis(x - h)[1]) / (2.0 * h);
                assert!((d - q_n(n, x) * b[0]).abs() < 1e-7 * (1.0 + b[0].abs() / (x * x)));
            }
        }
    }
}
