//! Monotone piecewise-cubic Hermite interpolation (Fritsch–Carlson).

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(Error::InvalidCoefficients(
                "grid needs at least two points and matching lengths".into(),
            ));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) || xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::InvalidCoefficients(
                "grid abscissae must be finite and strictly increasing".into(),
            ));
        }
        let slopes: Vec<f64> = (0..n - 1)
            .map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]))
            .collect();
        let mut ds = vec![0.0; n];
        ds[0] = slopes[0];
        ds[n - 1] = slopes[n - 2];
        for i in 1..n - 1 {
            ds[i] = if slopes[i - 1] * slopes[i] <= 0.0 {
                0.0
            } else {
                (slopes[i - 1] + slopes[i]) / 2.0
            };
        }
        for i in 0..n - 1 {
            if slopes[i] == 0.0 {
                ds[i] = 0.0;
                ds[i + 1] = 0.0;
                continue;
            }
            let a = ds[i] / slopes[i];
            let b = ds[i + 1] / slopes[i];
            let s = a * a + b * b;
            if s > 9.0 {
                let t = 3.0 / s.sqrt();
                ds[i] = t * a * slopes[i];
                ds[i + 1] = t * b * slopes[i];
            }
        }
        Ok(Self { xs, ys, ds })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    fn segment(&self, x: f64) -> usize {
        let i = self.xs.partition_point(|&t| t <= x);
        i.saturating_sub(1).min(self.xs.len() - 2)
    }

    /// Value at `x`; outside the grid the end segments are extended.
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.ds[i] + h01 * self.ys[i + 1] + h11 * h * self.ds[i + 1]
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let d00 = 6.0 * t2 - 6.0 * t;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = -6.0 * t2 + 6.0 * t;
        let d11 = 3.0 * t2 - 2.0 * t;
        (d00 * self.ys[i] + d01 * self.ys[i + 1]) / h + d10 * self.ds[i] + d11 * self.ds[i + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_nodes_and_lines() {
        let m = MonotoneCubic::new(vec![0.0, 1.0, 2.0, 4.0], vec![1.0, 3.0, 5.0, 9.0]).unwrap();
        for &x in &[0.0, 0.5, 1.7, 3.3, 4.0] {
            assert!((m.eval(x) - (1.0 + 2.0 * x)).abs() < 1e-14);
            assert!((m.derivative(x) - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(MonotoneCubic::new(vec![0.0], vec![1.0]).is_err());
        assert!(MonotoneCubic::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(MonotoneCubic::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    proptest! {
        #[test]
        fn preserves_monotonicity(steps in proptest::collection::vec(0.0f64..5.0, 3..20)) {
            let xs: Vec<f64> = (0..steps.len()).map(|i| i as f64).collect();
            let mut acc = 0.0;
            let ys: Vec<f64> = steps.iter().map(|s| { acc += s; acc }).collect();
            let m = MonotoneCubic::new(xs.clone(), ys).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for k in 0..=(10 * (xs.len() - 1)) {
                let v = m.eval(k as f64 / 10.0);
                prop_assert!(v >= prev - 1e-12);
                prev = v;
            }
        }
    }
}
