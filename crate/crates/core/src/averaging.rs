//! Boundedness of `φ' = ρ (A sin²φ + sin φ cos φ + B cos²φ) + o(ρ)` and moving averages.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::ode::{self, Control, OdeOptions};
use crate::stats::{decreasing_trend, geomspace};
use crate::{Error, Result};

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `∫ρ` over the range must reach this before divergence is believed.
pub const DIVERGENCE_FLOOR: f64 = 30.0;
/// Half-width of the abstention band around `4AB = 1`.
pub const CRITICAL_HALF_WIDTH: f64 = 0.05;
/// Bound on the condrho ratio at the right end of the range.
pub const CONDRHO_TOL: f64 = 0.05;
/// Relative tail variation below which `A`, `B` count as constant.
pub const CONSTANCY_TOL: f64 = 1e-3;

#[derive(Clone)]
pub struct AveragedOde {
    pub rho: RealFn,
    pub a: RealFn,
    pub b: RealFn,
    /// The `o(ρ)` term, if any.
    pub remainder: Option<RealFn>,
    pub range: (f64, f64),
}

impl AveragedOde {
    pub fn new(rho: RealFn, a: RealFn, b: RealFn, range: (f64, f64)) -> Self {
        Self {
            rho,
            a,
            b,
            remainder: None,
            range,
        }
    }

    pub fn constant(a: f64, b: f64, rho: RealFn, range: (f64, f64)) -> Self {
        Self::new(rho, Arc::new(move |_| a), Arc::new(move |_| b), range)
    }

    /// The Kepler-angle equation `φ' = ρ (sin² + sin cos − β²Q cos²)`.
    pub fn kepler(rho: RealFn, beta2_q: RealFn, range: (f64, f64)) -> Self {
        Self::new(rho, Arc::new(|_| 1.0), Arc::new(move |x| -beta2_q(x)), range)
    }

    pub fn with_remainder(mut self, r: RealFn) -> Self {
        self.remainder = Some(r);
        self
    }

    #[inline]
    pub fn rhs(&self, x: f64, phi: f64) -> f64 {
        let (s, c) = phi.sin_cos();
        let mut d = (self.rho)(x) * ((self.a)(x) * s * s + s * c + (self.b)(x) * c * c);
        if let Some(r) = &self.remainder {
            d += r(x);
        }
        d
    }

    /// Integrates `(φ, ∫ρ)` from `φ(lo) = phi0` and returns `(x, ∫ρ, φ)` at every step.
    pub fn integrate(&self, phi0: f64, opts: &OdeOptions) -> Result<Vec<(f64, f64, f64)>> {
        let (lo, hi) = self.range;
        let mut out = vec![(lo, 0.0, phi0)];
        ode::integrate(
            opts,
            |x, y, dy| {
                dy[0] = self.rhs(x, y[0]);
                dy[1] = (self.rho)(x);
            },
            lo,
            &[phi0, 0.0],
            hi,
            |step| {
                out.push((step.x1, step.y1[1], step.y1[0]));
                Control::Continue
            },
        )?;
        Ok(out)
    }

    fn rho_integral(&self, opts: &OdeOptions) -> Result<f64> {
        Ok(ode::quad(opts, |x| (self.rho)(x), self.range.0, self.range.1)?)
    }

    fn tail_grid(&self) -> Vec<f64> {
        let (lo, hi) = self.range;
        let start = if lo > 0.0 { (lo * (hi / lo).powf(0.5)).max(lo) } else { 0.5 * (lo + hi) };
        if start > 0.0 {
            geomspace(start, hi, 64)
        } else {
            crate::stats::linspace(start, hi, 64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Boundedness {
    Unbounded { slope: f64 },
    Bounded,
    Critical,
}

impl Boundedness {
    pub fn label(&self) -> &'static str {
        match self {
            Boundedness::Unbounded { .. } => "Unbounded",
            Boundedness::Bounded => "Bounded",
            Boundedness::Critical => "Critical",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundednessReport {
    pub class: Boundedness,
    pub four_ab: f64,
    /// `(sgn A / 2) √(4AB − 1)` when `4AB > 1`.
    pub slope_predicted: Option<f64>,
    /// Mean of `dφ/d∫ρ`, measured between the first and last crossing of a multiple of `π`.
    pub slope_measured: f64,
    /// Whether the integrated angle stayed within an interval of length `π`.
    pub empirically_bounded: bool,
    pub rho_integral: f64,
    pub notes: Vec<String>,
}

/// Mean winding rate of `φ` per unit of `∫ρ`.
fn measured_slope(track: &[(f64, f64, f64)]) -> f64 {
    let mut crossings: Vec<(f64, f64)> = Vec::new();
    for w in track.windows(2) {
        let (_, s0, p0) = w[0];
        let (_, s1, p1) = w[1];
        let (k0, k1) = ((p0 / PI).floor(), (p1 / PI).floor());
        if k0 != k1 {
            // linear interpolation inside the step is enough for a mean rate
            let target = if p1 > p0 { k1 * PI } else { k0 * PI };
            let t = (target - p0) / (p1 - p0);
            crossings.push((s0 + t * (s1 - s0), target));
        }
    }
    if crossings.len() >= 2 {
        let (s0, p0) = crossings[0];
        let (s1, p1) = *crossings.last().unwrap();
        if s1 > s0 {
            return (p1 - p0) / (s1 - s0);
        }
    }
    let (_, s0, p0) = track[0];
    let (_, s1, p1) = *track.last().unwrap();
    if s1 > s0 {
        (p1 - p0) / (s1 - s0)
    } else {
        0.0
    }
}

fn empirical_bounded(track: &[(f64, f64, f64)]) -> bool {
    let lo = track.iter().map(|t| t.2).fold(f64::INFINITY, f64::min);
    let hi = track.iter().map(|t| t.2).fold(f64::NEG_INFINITY, f64::max);
    hi - lo < PI
}

/// Oscillation trichotomy for asymptotically constant `A`, `B`, confirmed by integration.
pub fn classify_bounded(ode: &AveragedOde, opts: &OdeOptions) -> Result<BoundednessReport> {
    let tail = ode.tail_grid();
    let av: Vec<f64> = tail.iter().map(|&x| (ode.a)(x)).collect();
    let bv: Vec<f64> = tail.iter().map(|&x| (ode.b)(x)).collect();
    let a = *av.last().unwrap();
    let b = *bv.last().unwrap();
    let mut notes = Vec::new();
    let spread = |v: &[f64], c: f64| v.iter().map(|y| (y - c).abs()).fold(0.0, f64::max) / (1.0 + c.abs());
    let constant = spread(&av, a) <= CONSTANCY_TOL && spread(&bv, b) <= CONSTANCY_TOL;
    let rho_integral = ode.rho_integral(opts)?.abs();
    if rho_integral < DIVERGENCE_FLOOR {
        notes.push(format!("∫ρ = {rho_integral:.3} is below the divergence floor {DIVERGENCE_FLOOR}"));
    }
    let track = ode.integrate(0.0, opts)?;
    let slope_measured = measured_slope(&track);
    let empirically_bounded = empirical_bounded(&track);
    let four_ab = 4.0 * a * b;
    let slope_predicted = (four_ab > 1.0).then(|| 0.5 * a.signum() * (four_ab - 1.0).sqrt());

    let mut class = if !constant {
        notes.push("A, B are not asymptotically constant".into());
        Boundedness::Critical
    } else if four_ab > 1.0 + CRITICAL_HALF_WIDTH {
        Boundedness::Unbounded {
            slope: slope_predicted.unwrap(),
        }
    } else if four_ab < 1.0 - CRITICAL_HALF_WIDTH {
        Boundedness::Bounded
    } else {
        Boundedness::Critical
    };
    let agrees = match class {
        Boundedness::Unbounded { .. } => !empirically_bounded,
        Boundedness::Bounded => empirically_bounded,
        Boundedness::Critical => true,
    };
    if !agrees {
        notes.push("direct integration disagrees with the trichotomy".into());
        if rho_integral >= DIVERGENCE_FLOOR {
            class = Boundedness::Critical;
        }
    }
    Ok(BoundednessReport {
        class,
        four_ab,
        slope_predicted,
        slope_measured,
        empirically_bounded,
        rho_integral,
        notes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BelowBound {
    TendsToInfinity,
    BoundedBelow,
    Inconclusive,
}

/// Constant-coefficient verdict for `φ' = ρ (sin²φ + sin φ cos φ − B cos²φ)`, where `B = −ode.b`
/// and `ode.a ≡ 1`; compares the tail range of `B` against `−1/4`.
pub fn classify_bounded_below(ode: &AveragedOde, margin: f64, opts: &OdeOptions) -> Result<(BelowBound, Vec<String>)> {
    let tail = ode.tail_grid();
    if tail.iter().any(|&x| ((ode.a)(x) - 1.0).abs() > 1e-12) {
        return Err(Error::HypothesisViolated("classify_bounded_below needs A ≡ 1".into()));
    }
    let bs: Vec<f64> = tail.iter().map(|&x| -(ode.b)(x)).collect();
    let bmax = bs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bmin = bs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut notes = Vec::new();
    let mut class = if bmax < -0.25 - margin {
        BelowBound::TendsToInfinity
    } else if bmin > -0.25 + margin {
        BelowBound::BoundedBelow
    } else {
        BelowBound::Inconclusive
    };
    let track = ode.integrate(0.0, opts)?;
    let end = track.last().unwrap().2;
    let low = track.iter().map(|t| t.2).fold(f64::INFINITY, f64::min);
    let ok = match class {
        BelowBound::TendsToInfinity => end >= PI,
        BelowBound::BoundedBelow => low > -PI,
        BelowBound::Inconclusive => true,
    };
    if !ok {
        notes.push(format!("direct integration disagrees (φ_end = {end:.3}, min φ = {low:.3})"));
        class = BelowBound::Inconclusive;
    }
    Ok((class, notes))
}

#[derive(Debug, Clone, Serialize)]
pub struct CondRho {
    pub holds: bool,
    /// `(x, (1/ℓ)∫₀^ℓ |ρ(x+t) − ρ(x)| dt / |ρ(x)|)`.
    pub profile: Vec<(f64, f64)>,
}

/// Checks the averaging regularity condition on a geometric grid of `range`.
pub fn check_condrho(rho: &(dyn Fn(f64) -> f64 + Sync), ell: f64, range: (f64, f64), opts: &OdeOptions) -> Result<CondRho> {
    let (lo, hi) = range;
    let grid = if lo > 0.0 {
        geomspace(lo, hi, 40)
    } else {
        crate::stats::linspace(lo, hi, 40)
    };
    let mut profile = Vec::with_capacity(grid.len());
    for x in grid {
        let r0 = rho(x);
        let int = ode::quad(opts, |t| (rho(x + t) - r0).abs(), 0.0, ell)? / ell;
        profile.push((x, int / r0.abs()));
    }
    let ratios: Vec<f64> = profile.iter().map(|p| p.1).collect();
    let last = *ratios.last().unwrap();
    let holds = last.is_finite() && last < CONDRHO_TOL && decreasing_trend(&ratios);
    Ok(CondRho { holds, profile })
}

/// `ḡ(x) = (1/ℓ) ∫_x^{x+ℓ} g`; evaluates to NaN where the quadrature fails.
pub fn moving_average(g: RealFn, ell: f64, opts: OdeOptions) -> RealFn {
    Arc::new(move |x| match ode::quad(&opts, |t| g(t), x, x + ell) {
        Ok(v) => v / ell,
        Err(_) => f64::NAN,
    })
}

/// Replaces `A`, `B` by their moving averages after checking condrho.
pub fn average_phase_ode(ode: &AveragedOde, ell: f64, opts: &OdeOptions) -> Result<AveragedOde> {
    let rho = ode.rho.clone();
    let cond = check_condrho(&*rho, ell, ode.range, opts)?;
    if !cond.holds {
        let last = cond.profile.last().map_or(f64::NAN, |p| p.1);
        return Err(Error::HypothesisViolated(format!("condrho fails (ratio {last:.3e} at the right end)")));
    }
    let small = (ode.rho)(ode.range.1).abs();
    if !(small < 0.1) {
        return Err(Error::HypothesisViolated(format!("ρ is not small on the tail (ρ = {small:.3e})")));
    }
    Ok(AveragedOde {
        rho: ode.rho.clone(),
        a: moving_average(ode.a.clone(), ell, *opts),
        b: moving_average(ode.b.clone(), ell, *opts),
        remainder: ode.remainder.clone(),
        range: ode.range,
    })
}

/// Largest gap on the tail between the integrated averaged angle and the moving
/// average of the integrated original angle, both started from `φ = 0`.
pub fn averaging_discrepancy(original: &AveragedOde, averaged: &AveragedOde, ell: f64, opts: &OdeOptions) -> Result<f64> {
    let (lo, hi) = original.range;
    let hi_avg = hi - ell;
    if !(hi_avg > lo) {
        return Err(Error::RangeMismatch { lo, hi });
    }
    let phi = ode::integrate_dense(opts, |x, y, dy| dy[0] = original.rhs(x, y[0]), lo, &[0.0], hi)?;
    let phibar = ode::integrate_dense(opts, |x, y, dy| dy[0] = averaged.rhs(x, y[0]), lo, &[0.0], hi_avg)?;
    let start = if lo > 0.0 { lo * (hi_avg / lo).sqrt() } else { 0.5 * (lo + hi_avg) };
    let grid = if start > 0.0 { geomspace(start, hi_avg, 40) } else { crate::stats::linspace(start, hi_avg, 40) };
    let mut gap: f64 = 0.0;
    for x in grid {
        let avg = ode::quad(opts, |t| phi.component(0, t), x, x + ell)? / ell;
        gap = gap.max((avg - phibar.component(0, x)).abs());
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv_x() -> RealFn {
        Arc::new(|x: f64| 1.0 / x)
    }

    #[test]
    fn unbounded_with_predicted_slope() {
        let ode = AveragedOde::constant(1.0, 1.0, inv_x(), (1.0, 1e6));
        let r = classify_bounded(&ode, &OdeOptions::default()).unwrap();
        let want = 3f64.sqrt() / 2.0;
        assert_eq!(r.class, Boundedness::Unbounded { slope: want });
        assert!((r.slope_measured - want).abs() < 0.02 * want, "{}", r.slope_measured);
    }

    #[test]
    fn bounded_and_negative_cases() {
        let ode = AveragedOde::constant(1.0, 0.0, inv_x(), (1.0, 1e6));
        let r = classify_bounded(&ode, &OdeOptions::default()).unwrap();
        assert_eq!(r.class, Boundedness::Bounded);
        assert!(r.empirically_bounded);
        let ode = AveragedOde::constant(-1.0, -1.0, inv_x(), (1.0, 1e6));
        let r = classify_bounded(&ode, &OdeOptions::default()).unwrap();
        assert!(r.slope_measured < -0.8);
    }

    #[test]
    fn moving_average_examples() {
        let o = OdeOptions::default();
        let s = moving_average(Arc::new(f64::sin), 2.0 * PI, o);
        for x in [0.0, 1.3, 50.0] {
            assert!(s(x).abs() < 1e-10);
        }
        let sq = moving_average(Arc::new(|t: f64| t * t), 1.0, o);
        assert!((sq(2.0) - 19.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn condrho_examples() {
        let o = OdeOptions::default();
        assert!(check_condrho(&|x: f64| 1.0 / x, 1.0, (10.0, 1e4), &o).unwrap().holds);
        assert!(!check_condrho(&|x: f64| (-x).exp(), 1.0, (1.0, 50.0), &o).unwrap().holds);
        assert!(check_condrho(&|_| 2.0, 1.0, (1.0, 50.0), &o).unwrap().holds);
    }
}
