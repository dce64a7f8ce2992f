//! Solutions of `(τ − λ) u = 0` as the first-order system
//! `u' = (pu')/p`, `(pu')' = (q − λ r) u`, plus second-solution constructions.

use std::sync::Arc;

use crate::coeffs::CoefficientSet;
use crate::expr::Expr;
use crate::ode::{self, Control, DenseOutput, OdeOptions};
use crate::{Coefficient, Error, Result};

pub const VANISH_TOL: f64 = 1e-13;
pub const WRONSKIAN_DRIFT_TOL: f64 = 1e-7;

/// Anything that yields `(u, p u')` on an interval.
pub trait Solution: Send + Sync {
    fn state(&self, x: f64) -> [f64; 2];

    /// Interval on which `state` is meaningful.
    fn range(&self) -> (f64, f64);

    fn u(&self, x: f64) -> f64 {
        self.state(x)[0]
    }
}

pub type SharedSolution = Arc<dyn Solution>;

impl<S: Solution + ?Sized> Solution for Arc<S> {
    fn state(&self, x: f64) -> [f64; 2] {
        (**self).state(x)
    }

    fn range(&self) -> (f64, f64) {
        (**self).range()
    }
}

/// Closed-form solution given by an expression for `u`; `pu'` uses the symbolic derivative.
#[derive(Debug, Clone)]
pub struct ExprSolution {
    u: Expr,
    du: Expr,
    p: Coefficient,
    range: (f64, f64),
}

impl ExprSolution {
    pub fn new(u: Expr, p: Coefficient, range: (f64, f64)) -> Self {
        let du = u.derivative();
        Self { u, du, p, range }
    }

    pub fn parse(u: &str, p: Coefficient, range: (f64, f64)) -> Result<Self> {
        let e = Expr::parse(u)?;
        if let Some(s) = e.symbols().into_iter().next() {
            return Err(Error::Unbound(s));
        }
        Ok(Self::new(e, p, range))
    }
}

impl Solution for ExprSolution {
    fn state(&self, x: f64) -> [f64; 2] {
        [self.u.eval(x), self.p.eval(x) * self.du.eval(x)]
    }

    fn range(&self) -> (f64, f64) {
        self.range
    }
}

/// Solution given by a closure returning `(u, pu')`.
#[derive(Clone)]
pub struct FnSolution {
    f: Arc<dyn Fn(f64) -> [f64; 2] + Send + Sync>,
    range: (f64, f64),
}

impl FnSolution {
    pub fn new(f: impl Fn(f64) -> [f64; 2] + Send + Sync + 'static, range: (f64, f64)) -> Self {
        Self {
            f: Arc::new(f),
            range,
        }
    }
}

impl Solution for FnSolution {
    fn state(&self, x: f64) -> [f64; 2] {
        (self.f)(x)
    }

    fn range(&self) -> (f64, f64) {
        self.range
    }
}

#[derive(Clone)]
enum Source {
    Direct(Arc<DenseOutput>),
    /// `v = u I`, `pv' = pu' I + 1/u` with `I' = 1/(p u²)`.
    DAlembert { base: SharedSolution, quad: Arc<DenseOutput> },
    /// `v = u J − pu'/N`, `pv' = pu' J + u/N`, `N = u² + (pu')²`.
    RofeBeketov { base: SharedSolution, quad: Arc<DenseOutput> },
}

/// A numerically integrated solution with dense output.
#[derive(Clone)]
pub struct SolutionTrajectory {
    pub lambda: f64,
    pub init: [f64; 2],
    pub x0: f64,
    source: Source,
}

impl std::fmt::Debug for SolutionTrajectory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SolutionTrajectory")
            .field("lambda", &self.lambda)
            .field("init", &self.init)
            .field("range", &self.range())
            .finish()
    }
}

impl SolutionTrajectory {
    fn dense(&self) -> &DenseOutput {
        match &self.source {
            Source::Direct(d) => d,
            Source::DAlembert { quad, .. } | Source::RofeBeketov { quad, .. } => quad,
        }
    }

    /// `(x, u, pu')` at the integrator's step boundaries, ordered by `x`.
    pub fn samples(&self) -> Vec<(f64, f64, f64)> {
        let mut out: Vec<(f64, f64, f64)> = self
            .dense()
            .breakpoints()
            .iter()
            .map(|&x| {
                let s = self.state(x);
                (x, s[0], s[1])
            })
            .collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }

    /// The auxiliary quadrature (`I` or `J`) for second solutions.
    pub fn quadrature(&self, x: f64) -> Option<f64> {
        match &self.source {
            Source::Direct(_) => None,
            Source::DAlembert { quad, .. } | Source::RofeBeketov { quad, .. } => Some(quad.component(0, x)),
        }
    }
}

impl Solution for SolutionTrajectory {
    fn state(&self, x: f64) -> [f64; 2] {
        match &self.source {
            Source::Direct(d) => [d.component(0, x), d.component(1, x)],
            Source::DAlembert { base, quad } => {
                let [u, w] = base.state(x);
                let i = quad.component(0, x);
                [u * i, w * i + 1.0 / u]
            }
            Source::RofeBeketov { base, quad } => {
                let [u, w] = base.state(x);
                let j = quad.component(0, x);
                let n = u * u + w * w;
                [u * j - w / n, w * j + u / n]
            }
        }
    }

    fn range(&self) -> (f64, f64) {
        self.dense().range()
    }
}

fn check_range(coeffs: &CoefficientSet, x: f64) -> Result<()> {
    if x < coeffs.a || x > coeffs.b || !x.is_finite() {
        return Err(Error::RangeMismatch {
            lo: coeffs.a,
            hi: coeffs.b,
        });
    }
    Ok(())
}

fn check_coeffs_at(coeffs: &CoefficientSet, x: f64) -> Result<()> {
    let p = coeffs.p.eval(x);
    let r = coeffs.r.eval(x);
    if !(p > 0.0) {
        return Err(Error::NonIntegrableCoefficient {
            x,
            what: format!("p = {p} is not positive"),
        });
    }
    if !(r > 0.0) {
        return Err(Error::NonIntegrableCoefficient {
            x,
            what: format!("r = {r} is not positive"),
        });
    }
    Ok(())
}

/// Right-hand side of the first-order system.
#[inline]
pub fn sl_rhs(coeffs: &CoefficientSet, lambda: f64, x: f64, u: f64, w: f64) -> [f64; 2] {
    [
        w / coeffs.p.eval(x),
        (coeffs.q.eval(x) - lambda * coeffs.r.eval(x)) * u,
    ]
}

/// Integrates `τu = λu` from `x0` to `x1` (either direction) starting at `init = (u, pu')`.
pub fn integrate_sl(
    coeffs: &CoefficientSet,
    lambda: f64,
    init: [f64; 2],
    x0: f64,
    x1: f64,
    opts: &OdeOptions,
) -> Result<SolutionTrajectory> {
    check_range(coeffs, x0)?;
    check_range(coeffs, x1)?;
    if init[0].abs() < VANISH_TOL && init[1].abs() < VANISH_TOL {
        return Err(Error::DegenerateState(x0));
    }
    check_coeffs_at(coeffs, x0)?;
    let mut bad = None;
    let (dense, _) = ode::integrate_dense_checked(
        opts,
        |x, y, dy| {
            let d = sl_rhs(coeffs, lambda, x, y[0], y[1]);
            dy[0] = d[0];
            dy[1] = d[1];
        },
        x0,
        &init,
        x1,
        |step| match check_coeffs_at(coeffs, step.x1) {
            Ok(()) => true,
            Err(e) => {
                bad = Some(e);
                false
            }
        },
    )?;
    if let Some(e) = bad {
        return Err(e);
    }
    Ok(SolutionTrajectory {
        lambda,
        init,
        x0,
        source: Source::Direct(Arc::new(dense)),
    })
}

fn sign_check_points(step: &ode::Step, base: &dyn Solution, sign: f64) -> Option<f64> {
    for k in 1..=4 {
        let x = step.x0 + (step.x1 - step.x0) * k as f64 / 4.0;
        if base.u(x) * sign <= 0.0 {
            return Some(x);
        }
    }
    None
}

/// `v₀(x) = u₀(x) ∫_{a0}^x dt / (p₀ u₀²)`, defined while `u₀` keeps its sign.
pub fn dalembert_second_solution(
    coeffs: &CoefficientSet,
    u0: SharedSolution,
    a0: f64,
    x1: f64,
    opts: &OdeOptions,
) -> Result<SolutionTrajectory> {
    let u_start = u0.u(a0);
    if u_start == 0.0 || !u_start.is_finite() {
        return Err(Error::NonPositiveSolution(a0));
    }
    let sign = u_start.signum();
    let mut crossing = None;
    let base = u0.clone();
    let (dense, ok) = ode::integrate_dense_checked(
        opts,
        |x, _y, dy| {
            let u = base.u(x);
            dy[0] = 1.0 / (coeffs.p.eval(x) * u * u);
        },
        a0,
        &[0.0],
        x1,
        |step| match sign_check_points(step, &*base, sign) {
            Some(x) => {
                crossing = Some(x);
                false
            }
            None => true,
        },
    )
    .map_err(|e| match e {
        // 1/u² blowing up means u reached zero
        ode::OdeError::StepUnderflow { x, .. } | ode::OdeError::NonFinite(x) => Error::NonPositiveSolution(x),
        other => Error::Ode(other),
    })?;
    if !ok {
        return Err(Error::NonPositiveSolution(crossing.unwrap_or(a0)));
    }
    let init = [0.0, 1.0 / u_start];
    Ok(SolutionTrajectory {
        lambda: f64::NAN,
        init,
        x0: a0,
        source: Source::DAlembert {
            base: u0,
            quad: Arc::new(dense),
        },
    })
}

/// Second solution with `W(u₀, v₀) = 1` that stays regular through zeros of `u₀`.
pub fn rofe_beketov_second_solution(
    coeffs: &CoefficientSet,
    u0: SharedSolution,
    e: f64,
    x0: f64,
    x1: f64,
    opts: &OdeOptions,
) -> Result<SolutionTrajectory> {
    let [u, w] = u0.state(x0);
    if u * u + w * w < VANISH_TOL * VANISH_TOL {
        return Err(Error::DegenerateState(x0));
    }
    let base = u0.clone();
    let dense = ode::integrate_dense(
        opts,
        |x, _y, dy| {
            let [u, w] = base.state(x);
            let n = u * u + w * w;
            let g = coeffs.q.eval(x) + 1.0 / coeffs.p.eval(x) - e * coeffs.r.eval(x);
            dy[0] = g * (u * u - w * w) / (n * n);
        },
        x0,
        &[0.0],
        x1,
    )
    .map_err(|err| Error::QuadratureFailure(err.to_string()))?;
    let n = u * u + w * w;
    Ok(SolutionTrajectory {
        lambda: e,
        init: [-w / n, u / n],
        x0,
        source: Source::RofeBeketov {
            base: u0,
            quad: Arc::new(dense),
        },
    })
}

/// Modified Wronskian `W(f, g) = f · (pg') − (pf') · g` of two states.
#[inline]
pub fn wronskian_states(f: [f64; 2], g: [f64; 2]) -> f64 {
    f[0] * g[1] - f[1] * g[0]
}

/// Largest deviation of `W(f, g)` from its value at the first probe point.
pub fn wronskian_drift(f: &dyn Solution, g: &dyn Solution, probes: &[f64]) -> f64 {
    let w0 = wronskian_states(f.state(probes[0]), g.state(probes[0]));
    probes
        .iter()
        .map(|&x| (wronskian_states(f.state(x), g.state(x)) - w0).abs())
        .fold(0.0, f64::max)
}

/// Runs the integrator over `[x0, x1]` without storing output, passing every step to `observer`.
pub fn stream_sl<O>(
    coeffs: &CoefficientSet,
    lambda: f64,
    init: [f64; 2],
    x0: f64,
    x1: f64,
    opts: &OdeOptions,
    mut observer: O,
) -> Result<[f64; 2]>
where
    O: FnMut(&ode::Step) -> bool,
{
    let out = ode::integrate(
        opts,
        |x, y, dy| {
            let d = sl_rhs(coeffs, lambda, x, y[0], y[1]);
            dy[0] = d[0];
            dy[1] = d[1];
        },
        x0,
        &init,
        x1,
        |s| if observer(s) { Control::Continue } else { Control::Stop },
    )?;
    Ok([out.y[0], out.y[1]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Coefficient;
    use std::f64::consts::PI;

    fn free(a: f64, b: f64) -> CoefficientSet {
        CoefficientSet::schroedinger(0.0.into(), a, b).unwrap()
    }

    #[test]
    fn constant_and_sine_solutions() {
        let o = OdeOptions::default();
        let t = integrate_sl(&free(0.0, 10.0), 0.0, [1.0, 0.0], 0.0, 10.0, &o).unwrap();
        for (_, u, w) in t.samples() {
            assert!((u - 1.0).abs() < 1e-14 && w.abs() < 1e-14);
        }
        let t = integrate_sl(&free(0.0, 10.0), 1.0, [0.0, 1.0], 0.0, PI, &o).unwrap();
        assert!(t.u(PI).abs() < 1e-8);
    }

    #[test]
    fn sqrt_x_solves_critical_kneser() {
        let c = CoefficientSet::schroedinger(Coefficient::parse("(div -0.25 (pow x 2))").unwrap(), 1.0, f64::INFINITY).unwrap();
        let t = integrate_sl(&c, 0.0, [1.0, 0.5], 1.0, 100.0, &OdeOptions::default()).unwrap();
        assert!((t.u(100.0) - 10.0).abs() < 1e-6);
    }

    #[test]
    fn non_positive_p_is_detected() {
        let c = CoefficientSet::new(Coefficient::parse("(sub 5 x)").unwrap(), 0.0.into(), 1.0.into(), 0.0, 10.0).unwrap();
        let r = integrate_sl(&c, 0.0, [1.0, 0.0], 0.0, 10.0, &OdeOptions::default());
        assert!(matches!(r, Err(Error::NonIntegrableCoefficient { .. }) | Err(Error::Ode(_))));
    }

    #[test]
    fn dalembert_free_case() {
        let c = free(0.0, f64::INFINITY);
        let u0: SharedSolution = Arc::new(ExprSolution::parse("1", 1.0.into(), (0.0, 1e9)).unwrap());
        let v = dalembert_second_solution(&c, u0.clone(), 0.0, 50.0, &OdeOptions::default()).unwrap();
        for &x in &[0.0, 1.0, 17.5, 50.0] {
            assert!((v.u(x) - x).abs() < 1e-10);
            assert!((wronskian_states(u0.state(x), v.state(x)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dalembert_rejects_sign_change() {
        let c = free(0.0, f64::INFINITY);
        let u0: SharedSolution = Arc::new(ExprSolution::parse("(sub 3 x)", 1.0.into(), (0.0, 1e9)).unwrap());
        assert!(matches!(
            dalembert_second_solution(&c, u0, 0.0, 10.0, &OdeOptions::default()),
            Err(Error::NonPositiveSolution(_))
        ));
    }

    #[test]
    fn rofe_beketov_is_regular_through_zeros() {
        let c = free(0.0, f64::INFINITY);
        let u0: SharedSolution = Arc::new(ExprSolution::parse("(sin x)", 1.0.into(), (0.0, 1e9)).unwrap());
        let v = rofe_beketov_second_solution(&c, u0.clone(), 1.0, 0.5, 30.0, &OdeOptions::default()).unwrap();
        for k in 0..10 {
            let x = 0.5 + 2.9 * k as f64;
            assert!((wronskian_states(u0.state(x), v.state(x)) - 1.0).abs() < 1e-12);
            // v solves -v'' = v: check (pv')' = -v numerically
            let h = 1e-4;
            let d = (v.state(x + h)[1] - v.state(x - h)[1]) / (2.0 * h);
            assert!((d + v.u(x)).abs() < 1e-6, "x={x}");
        }
    }
}
