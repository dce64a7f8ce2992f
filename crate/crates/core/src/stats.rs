//! Small numerical helpers shared by the classifiers.

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return 0.0;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for i in 0..n {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// `n` points geometrically spaced on `[lo, hi]` (both included).
pub fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else if i == 0 {
                lo
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Whether `vals` trends downward: the mean of the last third is below the mean of the first third.
pub fn decreasing_trend(vals: &[f64]) -> bool {
    let n = vals.len();
    if n < 3 {
        return true;
    }
    let k = n / 3;
    let head = vals[..k].iter().sum::<f64>() / k as f64;
    let tail = vals[n - k..].iter().sum::<f64>() / k as f64;
    tail <= head * (1.0 + 1e-9) + 1e-300
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_line() {
        let xs = linspace(0.0, 4.0, 5);
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        assert!((ls_slope(&xs, &ys) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn geomspace_endpoints() {
        let g = geomspace(1.0, 1e6, 7);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[6], 1e6);
        assert!((g[3] - 1e3).abs() < 1e-9);
    }
}
