//! The Wronskian angle `ψ` of a normalized background basis, its Riccati and
//! Sturm–Liouville forms, the Kepler transformation `cot ψ = β₁ cot φ + β₂`
//! and the boundedness classifier on a log scale.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::coeffs::{CoefficientSet, DeltaCoefficients};
use crate::criteria::{CriterionVerdict, Verdict, DEFAULT_MARGIN};
use crate::expr::Expr;
use crate::logscale::{l_n, log_k, q_n, threshold, LogScale};
use crate::ode::{self, Control, DenseOutput, OdeOptions};
use crate::pruefer::{slope_verdict, AngleKind, AngleTrack};
use crate::sl::{wronskian_states, FnSolution, SharedSolution};
use crate::stats::{geomspace, linspace};
use crate::{Coefficient, Error, Result};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A drift function `β` together with its derivative.
#[derive(Clone)]
pub struct Beta {
    f: RealFn,
    df: RealFn,
}

impl fmt::Debug for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Beta")
    }
}

impl Beta {
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            df: Arc::new(df),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c, |_| 0.0)
    }

    /// `β(x) = k x`.
    pub fn linear(k: f64) -> Self {
        Self::new(move |x| k * x, move |_| k)
    }

    pub fn from_expr(e: Expr) -> Self {
        let d = e.derivative();
        Self::new(move |x| e.eval(x), move |x| d.eval(x))
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        (self.df)(x)
    }
}

/// Background solutions `u0`, `v0` with `W(u0, v0) = 1`, optionally with a
/// prescribed drift `β`; without one, `β = v0/u0`.
#[derive(Clone)]
pub struct PhaseBasis {
    pub u0: SharedSolution,
    pub v0: SharedSolution,
    pub beta: Option<Beta>,
}

impl PhaseBasis {
    pub fn new(u0: SharedSolution, v0: SharedSolution) -> Self {
        Self { u0, v0, beta: None }
    }

    /// `u0 = √L_{n−1}`, `v0 = u0 log_n` for `−u'' + Q_n u = 0`, so that `β = log_n`.
    pub fn logscale(n: u32, range: (f64, f64)) -> Self {
        let s = LogScale::new(n);
        let u0 = FnSolution::new(move |x| {
            let b = s.basis(x);
            [b[0], b[1]]
        }, range);
        let v0 = FnSolution::new(move |x| {
            let b = s.basis(x);
            [b[2], b[3]]
        }, range);
        let beta = if n == 0 {
            Beta::linear(1.0)
        } else {
            Beta::new(move |x| log_k(n, x), move |x| 1.0 / l_n(n as i32 - 1, x))
        };
        Self::new(Arc::new(u0), Arc::new(v0)).with_beta(beta)
    }

    pub fn with_beta(mut self, beta: Beta) -> Self {
        self.beta = Some(beta);
        self
    }

    pub fn state(&self, x: f64, c0: &CoefficientSet) -> BasisState {
        let u0 = self.u0.state(x);
        let v0 = self.v0.state(x);
        let (beta, dbeta) = match &self.beta {
            Some(b) => (b.value(x), b.deriv(x)),
            None => (
                v0[0] / u0[0],
                wronskian_states(u0, v0) / (c0.p.eval(x) * u0[0] * u0[0]),
            ),
        };
        BasisState { u0, v0, beta, dbeta }
    }

    pub fn wronskian(&self, x: f64) -> f64 {
        wronskian_states(self.u0.state(x), self.v0.state(x))
    }
}

/// Pointwise basis data: states `(u, pu')` of `u0`, `v0` and `β`, `β'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisState {
    pub u0: [f64; 2],
    pub v0: [f64; 2],
    pub beta: f64,
    pub dbeta: f64,
}

impl BasisState {
    /// `v0 = u0 (1 + I)`, `I' = 1/(p0 u0²)`.
    #[inline]
    pub fn from_dalembert(u: f64, pu: f64, i: f64, p: f64) -> Self {
        let beta = 1.0 + i;
        Self {
            u0: [u, pu],
            v0: [u * beta, pu * beta + 1.0 / u],
            beta,
            dbeta: 1.0 / (p * u * u),
        }
    }
}

/// `ψ' = −Δq (u0 cos ψ − v0 sin ψ)² − Δp (p0u0' cos ψ − p0v0' sin ψ)²`.
#[inline]
pub fn psi_rhs(b: &BasisState, dq: f64, dp: f64, psi: f64) -> f64 {
    let (s, c) = psi.sin_cos();
    let e = b.u0[0] * c - b.v0[0] * s;
    let g = b.u0[1] * c - b.v0[1] * s;
    -dq * e * e - dp * g * g
}

/// `(log R)'` for the amplitude paired with `ψ`.
#[inline]
fn log_r_rhs(b: &BasisState, dq: f64, dp: f64, psi: f64) -> f64 {
    let (s, c) = psi.sin_cos();
    let e = b.u0[0] * c - b.v0[0] * s;
    let f = b.u0[0] * s + b.v0[0] * c;
    let g = b.u0[1] * c - b.v0[1] * s;
    let h = b.u0[1] * s + b.v0[1] * c;
    -dq * e * f - dp * g * h
}

/// Kepler-angle equation for general `β₁`, `β₂`.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn varphi_rhs_general(
    u0: [f64; 2],
    v0: [f64; 2],
    b1: f64,
    db1: f64,
    b2: f64,
    db2: f64,
    dq: f64,
    dp: f64,
    phi: f64,
) -> f64 {
    let (s, c) = phi.sin_cos();
    let e = b1 * u0[0] * c - (v0[0] - b2 * u0[0]) * s;
    let g = b1 * u0[1] * c - (v0[1] - b2 * u0[1]) * s;
    (db1 / b1) * s * c + (db2 / b1) * s * s - (dq / b1) * e * e - (dp / b1) * g * g
}

/// Kepler-angle equation with `β₁ = β₂ = β`.
#[inline]
pub fn varphi_rhs(b: &BasisState, dq: f64, dp: f64, phi: f64) -> f64 {
    varphi_rhs_general(b.u0, b.v0, b.beta, b.dbeta, b.beta, b.dbeta, dq, dp, phi)
}

/// The continuous solution `φ` of `cot ψ = β₁ cot φ + β₂` with `⌊ψ/π⌋ = n`
/// mapped to `sgn(β₁) nπ + (0, π)`.
///
/// At `ψ = nπ` this gives `nπ` for `β₁ > 0` and `−(n − 1)π` for `β₁ < 0`,
/// the value that keeps `φ` continuous.
#[inline]
pub fn kepler_angle(psi: f64, b1: f64, b2: f64) -> f64 {
    let n = (psi / PI).floor();
    let (s, c) = (psi - n * PI).sin_cos();
    let m = c - b2 * s;
    if b1 > 0.0 {
        n * PI + (b1 * s).atan2(m)
    } else {
        -n * PI + (-b1 * s).atan2(-m)
    }
}

/// Inverse of [`kepler_angle`].
#[inline]
pub fn psi_from_kepler(phi: f64, b1: f64, b2: f64) -> f64 {
    let m = (phi / PI).floor();
    let r = phi - m * PI;
    let (s, c) = r.sin_cos();
    let n = if b1 > 0.0 { m } else { -m };
    n * PI + s.atan2(b1 * c + b2 * s)
}

/// `ψ` together with the amplitude `R`: `W(u0, u1) = −R sin ψ`, `W(v0, u1) = −R cos ψ`.
#[derive(Clone)]
pub struct PsiState {
    pub psi: AngleTrack,
    dense: Arc<DenseOutput>,
    pub basis: PhaseBasis,
}

impl PsiState {
    pub fn eval(&self, x: f64) -> f64 {
        self.dense.component(0, x)
    }

    pub fn r(&self, x: f64) -> f64 {
        self.dense.component(1, x).exp()
    }

    pub fn range(&self) -> (f64, f64) {
        self.dense.range()
    }

    pub fn breakpoints(&self) -> &[f64] {
        self.dense.breakpoints()
    }

    /// Largest relative deviation of `(−R sin ψ, −R cos ψ)` from the Wronskians with `u1`.
    pub fn reconstruction_error(&self, u1: &dyn crate::Solution, probes: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for &x in probes {
            let s1 = u1.state(x);
            let w0 = wronskian_states(self.basis.u0.state(x), s1);
            let w1 = wronskian_states(self.basis.v0.state(x), s1);
            let (r, p) = (self.r(x), self.eval(x));
            let err = (w0 + r * p.sin()).abs().max((w1 + r * p.cos()).abs());
            worst = worst.max(err / r);
        }
        worst
    }
}

pub const BASIS_NORMALIZATION_TOL: f64 = 1e-6;

/// Integrates `ψ` and `log R` on `[x0, x1]`; `u1_init` is the state of `u1` at `x0`.
pub fn psi_phase_integrate(
    basis: &PhaseBasis,
    delta: &DeltaCoefficients,
    u1_init: [f64; 2],
    x0: f64,
    x1: f64,
    psi0: Option<f64>,
    opts: &OdeOptions,
) -> Result<PsiState> {
    let w = basis.wronskian(x0);
    if (w - 1.0).abs() > BASIS_NORMALIZATION_TOL {
        return Err(Error::BasisNotNormalized(w));
    }
    let w0 = wronskian_states(basis.u0.state(x0), u1_init);
    let w1 = wronskian_states(basis.v0.state(x0), u1_init);
    let r0 = w0.hypot(w1);
    if r0 == 0.0 {
        return Err(Error::DegenerateState(x0));
    }
    let anchor = (-w0).atan2(-w1);
    let psi0 = match psi0 {
        None => anchor,
        Some(p) => {
            let off = p - anchor - 2.0 * PI * ((p - anchor) / (2.0 * PI)).round();
            if off.abs() > 1e-6 {
                return Err(Error::HypothesisViolated(format!(
                    "psi0 = {p} is inconsistent with the Wronskians at x0 (anchor {anchor})"
                )));
            }
            p
        }
    };
    let b = basis.clone();
    let dense = ode::integrate_dense(
        opts,
        |x, y, dy| {
            let st = BasisState {
                u0: b.u0.state(x),
                v0: b.v0.state(x),
                beta: 1.0,
                dbeta: 0.0,
            };
            let (dq, dp) = (delta.dq(x), delta.dp(x));
            dy[0] = psi_rhs(&st, dq, dp, y[0]);
            dy[1] = log_r_rhs(&st, dq, dp, y[0]);
        },
        x0,
        &[psi0, r0.ln()],
        x1,
    )?;
    let dense = Arc::new(dense);
    Ok(PsiState {
        psi: AngleTrack::from_dense(AngleKind::Psi, dense.clone(), 0),
        dense,
        basis: basis.clone(),
    })
}

/// `η = tan ψ` on a window free of poles.
pub struct Riccati {
    psi: PsiState,
    pub window: (f64, f64),
}

impl Riccati {
    pub fn eta(&self, x: f64) -> f64 {
        self.psi.eval(x).tan()
    }

    /// Largest `|η' − (−Δq (u0 − v0 η)² − Δp (p0u0' − p0v0' η)²)|` with `η'` from finite differences.
    pub fn residual(&self, delta: &DeltaCoefficients, probes: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for &x in probes {
            let h = 1e-4 * x.abs().max(1.0);
            let (lo, hi) = self.window;
            if x - 2.0 * h < lo || x + 2.0 * h > hi {
                continue;
            }
            let fd = (-self.eta(x + 2.0 * h) + 8.0 * self.eta(x + h) - 8.0 * self.eta(x - h)
                + self.eta(x - 2.0 * h))
                / (12.0 * h);
            let (u, v) = (self.psi.basis.u0.state(x), self.psi.basis.v0.state(x));
            let eta = self.eta(x);
            let e = u[0] - v[0] * eta;
            let g = u[1] - v[1] * eta;
            let rhs = -delta.dq(x) * e * e - delta.dp(x) * g * g;
            worst = worst.max((fd - rhs).abs());
        }
        worst
    }
}

pub const POLE_TOL: f64 = 1e-6;

pub fn riccati_transform(psi: &PsiState, lo: f64, hi: f64) -> Result<Riccati> {
    let (a, b) = psi.range();
    if lo < a || hi > b || hi <= lo {
        return Err(Error::RangeMismatch { lo, hi });
    }
    let mut xs: Vec<f64> = psi
        .breakpoints()
        .iter()
        .copied()
        .filter(|&x| x >= lo && x <= hi)
        .collect();
    xs.extend(linspace(lo, hi, 401));
    xs.sort_by(f64::total_cmp);
    // a pole sits wherever ψ crosses π/2 + kπ
    let branch = |x: f64| ((psi.eval(x) - PI / 2.0) / PI).floor();
    let k0 = branch(lo);
    for &x in &xs {
        if branch(x) != k0 || psi.eval(x).cos().abs() < POLE_TOL {
            return Err(Error::PoleInWindow(x));
        }
    }
    Ok(Riccati {
        psi: psi.clone(),
        window: (lo, hi),
    })
}

/// The Sturm–Liouville equation associated with the Riccati equation when `Δp ≡ 0`, `Δq > 0`:
/// `1/p = Δq v0² exp(2∫Δq u0 v0)`, `q = −Δq u0² exp(−2∫Δq u0 v0)`, integrals from `lo`.
pub fn riccati_to_sl(
    basis: &PhaseBasis,
    delta: &DeltaCoefficients,
    lo: f64,
    hi: f64,
    opts: &OdeOptions,
) -> Result<CoefficientSet> {
    let probes: Vec<f64> = if hi / lo.max(1e-300) > 100.0 && lo > 0.0 {
        geomspace(lo, hi, 400)
    } else {
        linspace(lo, hi, 400)
    };
    for &x in &probes {
        if !delta.dp_is_zero() && delta.dp(x) != 0.0 {
            return Err(Error::HypothesisViolated(format!("delta p = {} at x = {x}", delta.dp(x))));
        }
        if !(delta.dq(x) > 0.0) {
            return Err(Error::HypothesisViolated(format!("delta q = {} at x = {x}", delta.dq(x))));
        }
        if basis.v0.u(x) == 0.0 {
            return Err(Error::HypothesisViolated(format!("v0 vanishes at x = {x}")));
        }
    }
    let (u0, v0) = (basis.u0.clone(), basis.v0.clone());
    let dq = delta.delta_q.clone();
    let integral = ode::integrate_dense(
        opts,
        |x, _y, dy| dy[0] = dq.eval(x) * u0.u(x) * v0.u(x),
        lo,
        &[0.0],
        hi,
    )
    .map_err(|e| Error::QuadratureFailure(e.to_string()))?;
    let integral = Arc::new(integral);
    let (i1, i2) = (integral.clone(), integral);
    let (dq1, dq2) = (delta.delta_q.clone(), delta.delta_q.clone());
    let (u0, v0) = (basis.u0.clone(), basis.v0.clone());
    let p = Coefficient::func(move |x| {
        let v = v0.u(x);
        1.0 / (dq1.eval(x) * v * v * (2.0 * i1.component(0, x)).exp())
    });
    let q = Coefficient::func(move |x| {
        let u = u0.u(x);
        -dq2.eval(x) * u * u * (-2.0 * i2.component(0, x)).exp()
    });
    Ok(CoefficientSet::new(p, q, 1.0.into(), lo, hi)?.with_label("associated"))
}

/// Kepler angles sampled on the grid of a `ψ` integration.
#[derive(Clone)]
pub struct KeplerAngles {
    pub beta1: Beta,
    pub beta2: Beta,
    pub varphi: AngleTrack,
    /// Sign of `β₁`.
    pub sign: f64,
    dense: Option<Arc<DenseOutput>>,
}

impl KeplerAngles {
    pub fn eval(&self, x: f64) -> f64 {
        match &self.dense {
            Some(d) => d.component(0, x),
            None => self.varphi.eval(x),
        }
    }

    /// Flip count from `sgn(β₁) φ` on `(c, d)`.
    pub fn flip_count(&self, c: f64, d: f64) -> i64 {
        crate::pruefer::flip_count(self.sign * self.eval(c), self.sign * self.eval(d))
    }
}

fn beta_sign_check(beta1: &Beta, xs: &[f64]) -> Result<f64> {
    let s = beta1.value(xs[0]).signum();
    for &x in xs {
        let b = beta1.value(x);
        if b == 0.0 || b.signum() != s || !b.is_finite() {
            return Err(Error::SignChangeInBeta1(x));
        }
    }
    Ok(s)
}

/// Pointwise Kepler transform of a `ψ` track.
pub fn kepler_transform(psi: &PsiState, beta1: &Beta, beta2: &Beta) -> Result<KeplerAngles> {
    let (lo, hi) = psi.range();
    let mut xs: Vec<f64> = psi.breakpoints().to_vec();
    xs.extend(linspace(lo, hi, 201));
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let sign = beta_sign_check(beta1, &xs)?;
    let grid = xs
        .iter()
        .map(|&x| (x, kepler_angle(psi.eval(x), beta1.value(x), beta2.value(x))))
        .collect();
    Ok(KeplerAngles {
        beta1: beta1.clone(),
        beta2: beta2.clone(),
        varphi: AngleTrack::from_grid(AngleKind::Varphi, grid),
        sign,
        dense: None,
    })
}

/// Integrates the Kepler-angle equation directly.
#[allow(clippy::too_many_arguments)]
pub fn varphi_phase_integrate(
    basis: &PhaseBasis,
    delta: &DeltaCoefficients,
    beta1: &Beta,
    beta2: &Beta,
    varphi0: f64,
    x0: f64,
    x1: f64,
    opts: &OdeOptions,
) -> Result<KeplerAngles> {
    let sign = beta_sign_check(beta1, &[x0])?;
    let mut bad = None;
    let (dense, ok) = ode::integrate_dense_checked(
        opts,
        |x, y, dy| {
            let (b1, b2) = (beta1.value(x), beta2.value(x));
            dy[0] = varphi_rhs_general(
                basis.u0.state(x),
                basis.v0.state(x),
                b1,
                beta1.deriv(x),
                b2,
                beta2.deriv(x),
                delta.dq(x),
                delta.dp(x),
                y[0],
            );
        },
        x0,
        &[varphi0],
        x1,
        |step| {
            let b = beta1.value(step.x1);
            if b == 0.0 || b.signum() != sign {
                bad = Some(step.x1);
                false
            } else {
                true
            }
        },
    )
    .map_err(|e| match e {
        ode::OdeError::NonFinite(x) => Error::SignChangeInBeta1(x),
        other => Error::Ode(other),
    })?;
    if !ok {
        return Err(Error::SignChangeInBeta1(bad.unwrap_or(x1)));
    }
    let dense = Arc::new(dense);
    Ok(KeplerAngles {
        beta1: beta1.clone(),
        beta2: beta2.clone(),
        varphi: AngleTrack::from_dense(AngleKind::Varphi, dense.clone(), 0),
        sign,
        dense: Some(dense),
    })
}

#[derive(Clone)]
pub struct BoundednessOptions {
    pub margin: f64,
    /// Extra `o(ρβ²/L_n(β)²)` term added to `φ'`.
    pub remainder: Option<RealFn>,
    pub tail_points: usize,
    pub k_windows: usize,
    pub slope_tol: f64,
    pub ode: OdeOptions,
}

impl Default for BoundednessOptions {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            remainder: None,
            tail_points: 200,
            k_windows: 5,
            slope_tol: 0.01,
            ode: OdeOptions::default(),
        }
    }
}

/// Classifies `φ' = ρ (sin²φ + sin φ cos φ − β² Q cos²φ) + remainder` by comparing
/// `L_n(β)² (Q − Q_n(β))` against `−1/4` on `[hi/10, hi]`, and confirms the verdict by
/// integrating the equation rescaled to `s = log_{n+1}|β|`.
pub fn classify_ode_boundedness_scale(
    q: impl Fn(f64) -> f64 + Sync,
    beta: &Beta,
    n: u32,
    lo: f64,
    hi: f64,
    options: &BoundednessOptions,
) -> Result<CriterionVerdict> {
    let tail_lo = (hi / 10.0).max(lo);
    let crit = |x: f64| {
        let y = beta.value(x).abs();
        l_n(n as i32, y).powi(2) * (q(x) - q_n(n, y))
    };
    let series: Vec<(f64, f64)> = geomspace(tail_lo, hi, options.tail_points)
        .into_iter()
        .map(|x| (x, crit(x)))
        .collect();
    let mut verdict = CriterionVerdict::from_series(series, options.margin, (tail_lo, hi, 0.0));

    // start above e_n so that log_{n+1}|β| is defined and increasing
    let e_n = threshold(n as i32).max(0.0);
    let start = geomspace(lo.max(1e-12), hi, 4000)
        .into_iter()
        .find(|&x| beta.value(x).abs() > e_n * 1.01 + 1e-9 && beta.value(x).abs() > 0.0);
    let Some(x_start) = start else {
        verdict.downgrade("|beta| never exceeds the scale threshold on the range");
        return Ok(verdict);
    };
    let s0 = log_k(n + 1, beta.value(x_start).abs());
    let s1 = log_k(n + 1, beta.value(hi).abs());
    if !(s1 > s0) {
        verdict.downgrade("|beta| is not increasing on the range");
        return Ok(verdict);
    }
    let schedule = linspace(s0, s1, 2 * options.k_windows + 1);
    let mut samples = Vec::new();
    let mut next = 1usize;
    samples.push((s0, 0.0));
    let rhs = |_s: f64, y: &[f64], dy: &mut [f64]| {
        let x = y[1];
        let yb = beta.value(x).abs();
        let ln = l_n(n as i32, yb);
        let dxds = ln / beta.deriv(x).abs();
        let (sn, cs) = y[0].sin_cos();
        let mut d = sn * sn + sn * cs - ln * ln * (q(x) - q_n(n, yb)) * cs * cs;
        if let Some(r) = &options.remainder {
            d += r(x) * dxds;
        }
        dy[0] = d;
        dy[1] = dxds;
    };
    let res = ode::integrate(&options.ode, rhs, s0, &[0.0, x_start], s1, |step| {
        while next < schedule.len() && schedule[next] <= step.x1 {
            samples.push((schedule[next], step.eval_component(0, schedule[next])));
            next += 1;
        }
        Control::Continue
    });
    match res {
        Err(e) => {
            verdict.downgrade(format!("direct integration failed: {e}"));
        }
        Ok(out) => {
            while next < schedule.len() {
                samples.push((schedule[next], out.y[0]));
                next += 1;
            }
            let scales: Vec<f64> = samples.iter().map(|s| s.0).collect();
            let phases: Vec<f64> = samples.iter().map(|s| s.1 / PI).collect();
            let counts: Vec<i64> = phases.iter().map(|p| p.floor() as i64).collect();
            let (empirical, slope, _) = slope_verdict(&scales, &phases, &counts, options.k_windows, options.slope_tol, 2);
            verdict.notes.push(format!("direct integration: {empirical} (slope {slope:.4e})"));
            if verdict.verdict.is_conclusive() && empirical.is_conclusive() && empirical != verdict.verdict {
                verdict.downgrade("criterion and direct integration disagree");
            }
            if verdict.verdict == Verdict::Inconclusive && empirical.is_conclusive() {
                verdict.notes.push("criterion inside the margin; direct integration is conclusive".into());
            }
        }
    }
    Ok(verdict)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kepler_identity_and_inverse() {
        for &psi in &[-4.0, -0.3, 0.0, 1.0, 3.0, 7.5] {
            assert!((kepler_angle(psi, 1.0, 0.0) - psi).abs() < 1e-14);
            for &(b1, b2) in &[(2.0, 0.5), (0.3, -1.0), (-1.5, 0.7), (-0.2, -3.0)] {
                let phi = kepler_angle(psi, b1, b2);
                assert!((psi_from_kepler(phi, b1, b2) - psi).abs() < 1e-12, "psi={psi} b=({b1},{b2})");
            }
        }
        assert_eq!(kepler_angle(3.0 * PI, 2.0, 1.0), 3.0 * PI);
    }

    #[test]
    fn kepler_is_continuous_for_negative_beta() {
        let (b1, b2) = (-2.0, 0.3);
        let mut prev = kepler_angle(-1.0, b1, b2);
        for k in 1..=4000 {
            let psi = -1.0 + k as f64 * 0.005;
            let phi = kepler_angle(psi, b1, b2);
            assert!((phi - prev).abs() < 0.1, "jump at psi={psi}");
            prev = phi;
        }
    }

    #[test]
    fn floor_compatible_for_positive_beta() {
        for k in 0..200 {
            let psi = -10.0 + 0.1 * k as f64;
            let phi = kepler_angle(psi, 3.0, -2.0);
            assert_eq!((psi / PI).floor(), (phi / PI).floor());
        }
    }
}
