//! Coefficients `(p, q, r)` of a Sturm–Liouville expression
//! `τ u = (1/r)(-(p u')' + q u)` and the differences `Δp`, `Δq` between two of them.

use std::fmt;
use std::sync::Arc;

use crate::expr::Expr;
use crate::interp::MonotoneCubic;
use crate::stats::{geomspace, linspace};
use crate::{Error, Result};

type Func = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Coefficient {
    Const(f64),
    Expr(Arc<Expr>),
    Grid(Arc<MonotoneCubic>),
    Func(Func),
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Const(c) => write!(f, "Const({c})"),
            Coefficient::Expr(e) => write!(f, "Expr({e})"),
            Coefficient::Grid(g) => write!(f, "Grid({:?})", g.range()),
            Coefficient::Func(_) => write!(f, "Func(..)"),
        }
    }
}

impl Coefficient {
    pub fn func(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::Func(Arc::new(f))
    }

    /// Expression coefficient; the expression must be free of parameters.
    pub fn expr(e: Expr) -> Result<Self> {
        if let Some(s) = e.symbols().into_iter().next() {
            return Err(Error::Unbound(s));
        }
        if !e.depends_on_x() {
            return Ok(Coefficient::Const(e.eval(0.0)));
        }
        Ok(Coefficient::Expr(Arc::new(e)))
    }

    pub fn parse(src: &str) -> Result<Self> {
        Self::expr(Expr::parse(src)?)
    }

    pub fn grid(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        Ok(Coefficient::Grid(Arc::new(MonotoneCubic::new(xs, ys)?)))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Coefficient::Const(c) => *c,
            Coefficient::Expr(e) => e.eval(x),
            Coefficient::Grid(g) => g.eval(x),
            Coefficient::Func(f) => f(x),
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Coefficient::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn as_expr(&self) -> Option<Expr> {
        match self {
            Coefficient::Const(c) => Some(Expr::Num(*c)),
            Coefficient::Expr(e) => Some((**e).clone()),
            _ => None,
        }
    }
}

impl From<f64> for Coefficient {
    fn from(c: f64) -> Self {
        Coefficient::Const(c)
    }
}

#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub p: Coefficient,
    pub q: Coefficient,
    pub r: Coefficient,
    /// Regular left endpoint.
    pub a: f64,
    /// Right endpoint, `f64::INFINITY` for a half line (assumed limit point).
    pub b: f64,
    pub period: Option<f64>,
    pub label: String,
}

pub const PERIODICITY_TOL: f64 = 1e-9;

impl CoefficientSet {
    pub fn new(p: Coefficient, q: Coefficient, r: Coefficient, a: f64, b: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::InvalidCoefficients("left endpoint must be finite".into()));
        }
        if !(b > a) {
            return Err(Error::InvalidCoefficients(format!("empty interval ({a}, {b})")));
        }
        Ok(Self {
            p,
            q,
            r,
            a,
            b,
            period: None,
            label: String::new(),
        })
    }

    /// `p = r = 1` with the given potential.
    pub fn schroedinger(q: Coefficient, a: f64, b: f64) -> Result<Self> {
        Self::new(1.0.into(), q, 1.0.into(), a, b)
    }

    pub fn with_period(mut self, period: f64) -> Self {
        self.period = Some(period);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Same coefficients on a different interval.
    pub fn restricted(&self, a: f64, b: f64) -> Result<Self> {
        let mut c = Self::new(self.p.clone(), self.q.clone(), self.r.clone(), a, b)?;
        c.period = self.period;
        c.label = self.label.clone();
        Ok(c)
    }

    pub fn half_line(&self) -> bool {
        self.b.is_infinite()
    }

    /// Sample points used for pointwise checks: dense near `a`, geometric on the tail.
    pub fn check_points(&self, x_max: f64) -> Vec<f64> {
        let hi = if self.b.is_finite() { self.b } else { x_max };
        let span = hi - self.a;
        let mut pts = linspace(self.a, self.a + span.min(10.0), 101);
        if span > 10.0 {
            let lo = (self.a + 10.0).max(1.0);
            pts.extend(geomspace(lo, hi.max(lo * 1.0001), 200));
        }
        pts
    }

    /// Checks positivity of `p` and `r` and, if a period is declared, periodicity.
    pub fn validate(&self, x_max: f64) -> Result<()> {
        for x in self.check_points(x_max) {
            let (p, q, r) = (self.p.eval(x), self.q.eval(x), self.r.eval(x));
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::NonIntegrableCoefficient {
                    x,
                    what: format!("p = {p} is not positive"),
                });
            }
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::NonIntegrableCoefficient {
                    x,
                    what: format!("r = {r} is not positive"),
                });
            }
            if !q.is_finite() {
                return Err(Error::NonIntegrableCoefficient {
                    x,
                    what: format!("q = {q} is not finite"),
                });
            }
        }
        if let Some(l) = self.period {
            if !(l > 0.0) {
                return Err(Error::InvalidCoefficients(format!("period {l} must be positive")));
            }
            for x in linspace(self.a, self.a + 3.0 * l, 61) {
                for (name, c) in [("p", &self.p), ("q", &self.q), ("r", &self.r)] {
                    let d = (c.eval(x + l) - c.eval(x)).abs();
                    if d > PERIODICITY_TOL * (1.0 + c.eval(x).abs()) {
                        return Err(Error::InvalidCoefficients(format!(
                            "{name} is not {l}-periodic at x = {x} (deviation {d:e})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn weight_is_one(&self) -> bool {
        self.r.as_const() == Some(1.0)
    }
}

/// `Δp = 1/p₀ − 1/p₁` and `Δq = q₁ − q₀`.
#[derive(Debug, Clone)]
pub struct DeltaCoefficients {
    pub delta_p: Coefficient,
    pub delta_q: Coefficient,
}

impl DeltaCoefficients {
    pub fn new(delta_p: Coefficient, delta_q: Coefficient) -> Self {
        Self { delta_p, delta_q }
    }

    pub fn only_q(delta_q: Coefficient) -> Self {
        Self::new(Coefficient::Const(0.0), delta_q)
    }

    #[inline]
    pub fn dp(&self, x: f64) -> f64 {
        self.delta_p.eval(x)
    }

    #[inline]
    pub fn dq(&self, x: f64) -> f64 {
        self.delta_q.eval(x)
    }

    pub fn dp_is_zero(&self) -> bool {
        self.delta_p.as_const() == Some(0.0)
    }
}

const WEIGHT_TOL: f64 = 1e-12;

pub fn make_delta(c0: &CoefficientSet, c1: &CoefficientSet) -> Result<DeltaCoefficients> {
    if c0.a != c1.a || c0.b != c1.b {
        return Err(Error::IntervalMismatch);
    }
    let mut worst: f64 = 0.0;
    for x in c0.check_points(1e6) {
        let (r0, r1) = (c0.r.eval(x), c1.r.eval(x));
        worst = worst.max((r0 - r1).abs() / (1.0 + r0.abs()));
    }
    if worst > WEIGHT_TOL {
        return Err(Error::WeightMismatch(worst));
    }

    let delta_p = match (c0.p.as_const(), c1.p.as_const()) {
        (Some(p0), Some(p1)) => Coefficient::Const(1.0 / p0 - 1.0 / p1),
        _ => match (c0.p.as_expr(), c1.p.as_expr()) {
            (Some(e0), Some(e1)) => Coefficient::expr(Expr::Sub(
                Box::new(Expr::Div(Box::new(Expr::Num(1.0)), Box::new(e0))),
                Box::new(Expr::Div(Box::new(Expr::Num(1.0)), Box::new(e1))),
            ))?,
            _ => {
                let (p0, p1) = (c0.p.clone(), c1.p.clone());
                Coefficient::func(move |x| 1.0 / p0.eval(x) - 1.0 / p1.eval(x))
            }
        },
    };
    let delta_q = match (c0.q.as_const(), c1.q.as_const()) {
        (Some(q0), Some(q1)) => Coefficient::Const(q1 - q0),
        _ => {
            let (q0, q1) = (c0.q.clone(), c1.q.clone());
            Coefficient::func(move |x| q1.eval(x) - q0.eval(x))
        }
    };
    let delta = DeltaCoefficients { delta_p, delta_q };
    for x in c0.check_points(1e3).into_iter().step_by(17) {
        let dp = 1.0 / c0.p.eval(x) - 1.0 / c1.p.eval(x);
        let dq = c1.q.eval(x) - c0.q.eval(x);
        debug_assert!((delta.dp(x) - dp).abs() <= 1e-12 * (1.0 + dp.abs()));
        debug_assert!((delta.dq(x) - dq).abs() <= 1e-12 * (1.0 + dq.abs()));
    }
    Ok(delta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kneser(mu: f64) -> CoefficientSet {
        CoefficientSet::schroedinger(Coefficient::func(move |x| mu / (x * x)), 1.0, f64::INFINITY).unwrap()
    }

    #[test]
    fn identical_sets_give_zero_delta() {
        let c = kneser(-1.0);
        let d = make_delta(&c, &c).unwrap();
        for &x in &[1.0, 2.0, 50.0] {
            assert_eq!(d.dp(x), 0.0);
            assert_eq!(d.dq(x), 0.0);
        }
    }

    #[test]
    fn delta_arithmetic() {
        let c0 = kneser(0.0);
        let c1 = kneser(-1.0);
        assert!((make_delta(&c0, &c1).unwrap().dq(2.0) + 0.25).abs() < 1e-15);
        let c2 = CoefficientSet::new(2.0.into(), 0.0.into(), 1.0.into(), 1.0, f64::INFINITY).unwrap();
        assert!((make_delta(&c0, &c2).unwrap().dp(3.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mismatches_are_rejected() {
        let c0 = kneser(0.0);
        let c1 = kneser(0.0).restricted(2.0, f64::INFINITY).unwrap();
        assert!(matches!(make_delta(&c0, &c1), Err(Error::IntervalMismatch)));
        let c2 = CoefficientSet::new(1.0.into(), 0.0.into(), 2.0.into(), 1.0, f64::INFINITY).unwrap();
        assert!(matches!(make_delta(&c0, &c2), Err(Error::WeightMismatch(_))));
    }

    #[test]
    fn validation() {
        let bad = CoefficientSet::new(Coefficient::parse("(sub x 5)").unwrap(), 0.0.into(), 1.0.into(), 1.0, 100.0).unwrap();
        assert!(matches!(bad.validate(100.0), Err(Error::NonIntegrableCoefficient { .. })));
        let periodic = CoefficientSet::schroedinger(Coefficient::parse("(cos x)").unwrap(), 0.0, f64::INFINITY)
            .unwrap()
            .with_period(2.0 * std::f64::consts::PI);
        periodic.validate(1e4).unwrap();
        let wrong = periodic.clone().with_period(3.0);
        assert!(wrong.validate(1e4).is_err());
        assert!(CoefficientSet::new(1.0.into(), 0.0.into(), 1.0.into(), f64::NEG_INFINITY, 0.0).is_err());
    }
}
