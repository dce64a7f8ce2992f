//! Prüfer angles, modified Wronskians, weighted sign flips and the
//! relative-oscillation classifier.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::coeffs::{make_delta, CoefficientSet, DeltaCoefficients};
use crate::criteria::{CriterionVerdict, Verdict};
use crate::effective::{kepler_angle, psi_from_kepler, BasisState, PhaseBasis};
use crate::ode::{self, Control, DenseOutput, OdeOptions};
use crate::sl::{self, wronskian_states, Solution, SharedSolution, VANISH_TOL};
use crate::stats::{geomspace, ls_slope};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AngleKind {
    Theta,
    Psi,
    Varphi,
}

/// A continuous angle sampled along `x`, optionally backed by dense output.
#[derive(Debug, Clone)]
pub struct AngleTrack {
    pub kind: AngleKind,
    pub grid: Vec<(f64, f64)>,
    /// Consecutive grid samples differ by less than `π/2`.
    pub winding_safe: bool,
    dense: Option<(Arc<DenseOutput>, usize)>,
}

impl AngleTrack {
    pub fn from_grid(kind: AngleKind, mut grid: Vec<(f64, f64)>) -> Self {
        grid.sort_by(|a, b| a.0.total_cmp(&b.0));
        let winding_safe = grid.windows(2).all(|w| (w[1].1 - w[0].1).abs() < PI / 2.0);
        Self {
            kind,
            grid,
            winding_safe,
            dense: None,
        }
    }

    pub(crate) fn from_dense(kind: AngleKind, dense: Arc<DenseOutput>, component: usize) -> Self {
        let grid = dense
            .breakpoints()
            .iter()
            .map(|&x| (x, dense.component(component, x)))
            .collect();
        let mut t = Self::from_grid(kind, grid);
        t.dense = Some((dense, component));
        t
    }

    pub fn range(&self) -> (f64, f64) {
        (self.grid[0].0, self.grid[self.grid.len() - 1].0)
    }

    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        let (a, b) = self.range();
        lo >= a && hi <= b
    }

    pub fn eval(&self, x: f64) -> f64 {
        if let Some((d, i)) = &self.dense {
            return d.component(*i, x);
        }
        let k = self.grid.partition_point(|s| s.0 <= x);
        if k == 0 {
            return self.grid[0].1;
        }
        if k == self.grid.len() {
            return self.grid[k - 1].1;
        }
        let (x0, y0) = self.grid[k - 1];
        let (x1, y1) = self.grid[k];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Number of crossings of multiples of `π` between consecutive samples, counted upward.
    pub fn crossings(&self) -> i64 {
        let mut n = 0;
        for w in self.grid.windows(2) {
            n += ((w[1].1 / PI).floor() - (w[0].1 / PI).floor()) as i64;
        }
        n
    }
}

/// `θ' = cos²θ / p − (q − λ r) sin²θ`.
#[inline]
pub fn theta_rhs(coeffs: &CoefficientSet, lambda: f64, x: f64, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    c * c / coeffs.p.eval(x) - (coeffs.q.eval(x) - lambda * coeffs.r.eval(x)) * s * s
}

/// `atan2(u, pu')`, the Prüfer angle of a state in `(−π, π]`.
pub fn state_angle(state: [f64; 2]) -> f64 {
    state[0].atan2(state[1])
}

/// Integrates the Prüfer phase equation along the trajectory's range, anchored at `theta0`.
pub fn pruefer_angle(
    coeffs: &CoefficientSet,
    traj: &dyn Solution,
    lambda: f64,
    theta0: f64,
    opts: &OdeOptions,
) -> Result<AngleTrack> {
    let (lo, hi) = traj.range();
    let st = traj.state(lo);
    if st[0].abs() < VANISH_TOL && st[1].abs() < VANISH_TOL {
        return Err(Error::DegenerateState(lo));
    }
    let k = ((theta0 - state_angle(st)) / (2.0 * PI)).round();
    let off = theta0 - state_angle(st) - 2.0 * PI * k;
    if off.abs() > 1e-6 {
        return Err(Error::HypothesisViolated(format!(
            "theta0 = {theta0} does not match the state angle {} mod 2π",
            state_angle(st)
        )));
    }
    let dense = ode::integrate_dense(
        opts,
        |x, y, dy| dy[0] = theta_rhs(coeffs, lambda, x, y[0]),
        lo,
        &[theta0],
        hi,
    )?;
    Ok(AngleTrack::from_dense(AngleKind::Theta, Arc::new(dense), 0))
}

/// `W_x(u0, u1) = u0 · p1 u1' − p0 u0' · u1` on a common range.
pub struct ModifiedWronskian {
    u0: SharedSolution,
    u1: SharedSolution,
    pub range: (f64, f64),
}

impl ModifiedWronskian {
    pub fn eval(&self, x: f64) -> f64 {
        wronskian_states(self.u0.state(x), self.u1.state(x))
    }
}

pub fn modified_wronskian(u0: SharedSolution, u1: SharedSolution) -> Result<ModifiedWronskian> {
    let (a0, b0) = u0.range();
    let (a1, b1) = u1.range();
    let (lo, hi) = (a0.max(a1), b0.min(b1));
    if !(hi > lo) {
        return Err(Error::RangeMismatch { lo, hi });
    }
    Ok(ModifiedWronskian {
        u0,
        u1,
        range: (lo, hi),
    })
}

/// Largest `|W' − (Δq u0 u1 + Δp p0u0' p1u1')|` over the probes, with `W'`
/// from central differences of the dense output.
pub fn wronskian_derivative_check(
    u0: &dyn Solution,
    u1: &dyn Solution,
    delta: &DeltaCoefficients,
    probes: &[f64],
) -> f64 {
    let w = |x: f64| wronskian_states(u0.state(x), u1.state(x));
    let mut worst: f64 = 0.0;
    for &x in probes {
        let h = 1e-4 * x.abs().max(1.0);
        let fd = (-w(x + 2.0 * h) + 8.0 * w(x + h) - 8.0 * w(x - h) + w(x - 2.0 * h)) / (12.0 * h);
        let s0 = u0.state(x);
        let s1 = u1.state(x);
        let rhs = delta.dq(x) * s0[0] * s1[0] + delta.dp(x) * s0[1] * s1[1];
        worst = worst.max((fd - rhs).abs());
    }
    worst
}

/// `#_{(c,d)}(u0, u1)` together with the angle difference at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlipCount {
    pub c: f64,
    pub d: f64,
    pub count: i64,
    pub delta_at_c: f64,
    pub delta_at_d: f64,
}

pub const COUNT_TIE_TOL: f64 = 1e-4;

fn near_multiple_of_pi(x: f64) -> bool {
    let t = x / PI;
    (t - t.round()).abs() < COUNT_TIE_TOL
}

/// `⌈Δ(d)/π⌉ − ⌊Δ(c)/π⌋ − 1`.
#[inline]
pub fn flip_count(delta_c: f64, delta_d: f64) -> i64 {
    (delta_d / PI).ceil() as i64 - (delta_c / PI).floor() as i64 - 1
}

impl FlipCount {
    /// Shifts both values so that `Δ(c) ∈ [0, π)`; the count is unchanged.
    pub fn new(c: f64, d: f64, delta_c: f64, delta_d: f64) -> Self {
        let k = (delta_c / PI).floor();
        let (dc, dd) = (delta_c - k * PI, delta_d - k * PI);
        let dc = if dc >= PI { dc - PI } else { dc.max(0.0) };
        Self {
            c,
            d,
            count: flip_count(delta_c, delta_d),
            delta_at_c: dc,
            delta_at_d: dd,
        }
    }
}

pub fn weighted_sign_flips(theta0: &AngleTrack, theta1: &AngleTrack, c: f64, d: f64) -> Result<FlipCount> {
    if !(theta0.covers(c, d) && theta1.covers(c, d)) || d < c {
        return Err(Error::RangeMismatch { lo: c, hi: d });
    }
    let dc = theta1.eval(c) - theta0.eval(c);
    let dd = theta1.eval(d) - theta0.eval(d);
    Ok(FlipCount::new(c, d, dc, dd))
}

pub const GAP_PRECHECK_TOL: f64 = 1e-3;

/// Whether `(q0 − q1)/r → 0` and `p1/p0 → 1` on the last decade before `x_max`.
pub fn essential_gap_precheck(c0: &CoefficientSet, c1: &CoefficientSet, x_max: f64) -> bool {
    let hi = if c0.b.is_finite() { c0.b } else { x_max };
    let lo = (hi / 10.0).max(c0.a);
    geomspace(lo.max(1e-300), hi, 64).into_iter().all(|x| {
        let dq = (c0.q.eval(x) - c1.q.eval(x)) / c0.r.eval(x);
        let pr = c1.p.eval(x) / c0.p.eval(x);
        dq.abs() <= GAP_PRECHECK_TOL && (pr - 1.0).abs() <= GAP_PRECHECK_TOL
    })
}

/// Background basis used by the classifier.
#[derive(Clone, Default)]
pub enum BasisChoice {
    /// `u0` from a positive background solution, `v0 = u0 (1 + ∫ 1/(p0 u0²))`, `β = v0/u0`.
    #[default]
    Auto,
    Given(PhaseBasis),
    /// Only the classical angles; the verdict uses `Δθ`.
    None,
}

#[derive(Clone)]
pub struct ClassifyOptions {
    /// Window ends `d`; defaults to `K·2 + 1` geometric points on `[a + 1, x_max]`.
    pub schedule: Option<Vec<f64>>,
    pub x_max: f64,
    pub k_windows: usize,
    pub slope_tol: f64,
    pub max_count_range: i64,
    /// Initial state of `u1` at `a`; defaults to the state of `u0`.
    pub u1_init: Option<[f64; 2]>,
    pub basis: BasisChoice,
    pub ode: OdeOptions,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            schedule: None,
            x_max: 1e6,
            k_windows: 5,
            slope_tol: 0.01,
            max_count_range: 2,
            u1_init: None,
            basis: BasisChoice::Auto,
            ode: OdeOptions::default(),
        }
    }
}

impl ClassifyOptions {
    pub fn schedule_for(&self, a: f64) -> Vec<f64> {
        match &self.schedule {
            Some(s) => s.clone(),
            None => geomspace(a + 1.0, self.x_max, 2 * self.k_windows + 1),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowRecord {
    pub d: f64,
    pub count_delta: i64,
    pub count_psi: Option<i64>,
    pub count_phi: Option<i64>,
    /// Value of the series fed to the slope test (in units of `π`).
    pub phase: f64,
    /// Abscissa of the slope test (`log|β(d)|` or `log d`).
    pub scale: f64,
    /// An angle sits within [`COUNT_TIE_TOL`] of a multiple of `π` at `d`, so the
    /// sign of the Wronskian there is below resolution and the counts may differ by one.
    pub tie: bool,
}

impl WindowRecord {
    /// The three counts agree, up to one flip when the window end is a tie.
    pub fn counts_agree(&self) -> bool {
        let slack = if self.tie { 1 } else { 0 };
        [self.count_psi, self.count_phi]
            .into_iter()
            .flatten()
            .all(|c| (c - self.count_delta).abs() <= slack)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RelativeReport {
    pub verdict: Verdict,
    pub slope: f64,
    pub count_range: i64,
    pub windows: Vec<WindowRecord>,
    pub notes: Vec<String>,
    /// Angles at the left endpoint: `(Δ, ψ, φ)`.
    #[serde(skip)]
    pub anchors: (f64, f64, f64),
}

impl RelativeReport {
    pub fn counts(&self) -> Vec<(f64, i64)> {
        self.windows.iter().map(|w| (w.d, w.count_delta)).collect()
    }

    pub fn to_criterion(&self) -> CriterionVerdict {
        let series: Vec<(f64, f64)> = self.windows.iter().map(|w| (w.d, w.phase)).collect();
        let lo = self.windows.first().map_or(0.0, |w| w.d);
        let hi = self.windows.last().map_or(0.0, |w| w.d);
        CriterionVerdict {
            verdict: self.verdict,
            estimate: self.slope,
            limsup: series.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max),
            liminf: series.iter().map(|s| s.1).fold(f64::INFINITY, f64::min),
            margin: 0.0,
            window: (lo, hi, 0.0),
            notes: self.notes.clone(),
            evidence: series,
        }
    }
}

/// Slope test over the last `k + 1` points: a drifting phase means unbounded winding.
pub fn slope_verdict(scales: &[f64], phases: &[f64], counts: &[i64], k: usize, tol: f64, max_range: i64) -> (Verdict, f64, i64) {
    let n = scales.len();
    let from = n.saturating_sub(k + 1);
    let slope = ls_slope(&scales[from..], &phases[from..]);
    let tail = &counts[from..];
    let range = tail.iter().max().copied().unwrap_or(0) - tail.iter().min().copied().unwrap_or(0);
    let verdict = if !slope.is_finite() {
        Verdict::Inconclusive
    } else if slope.abs() > tol {
        Verdict::Oscillatory
    } else if range <= max_range {
        Verdict::Nonoscillatory
    } else {
        Verdict::Inconclusive
    };
    (verdict, slope, range)
}

/// Required relative growth of `∫ 1/(p0 u0²)` over the last decade for a minimal `u0`.
pub const MINIMALITY_INCREMENT: f64 = 0.05;

/// Initial states tried for an automatically chosen positive background solution.
const AUTO_INITS: [[f64; 2]; 4] = [[1.0, 0.0], [1.0, 1.0], [1.0, 10.0], [1.0, 100.0]];

/// Finds a background solution that stays positive on `[a, x_max]`.
pub fn positive_background_init(
    c0: &CoefficientSet,
    lambda: f64,
    x_max: f64,
    opts: &OdeOptions,
) -> Option<[f64; 2]> {
    let a = c0.a;
    'outer: for init in AUTO_INITS {
        let mut positive = true;
        let r = sl::stream_sl(c0, lambda, init, a, x_max, opts, |step| {
            for k in 1..=4 {
                let x = step.x0 + (step.x1 - step.x0) * k as f64 / 4.0;
                if step.eval_component(0, x) <= 0.0 {
                    positive = false;
                    return false;
                }
            }
            true
        });
        if r.is_err() || !positive {
            continue 'outer;
        }
        return Some(init);
    }
    None
}

enum Mode {
    Classical,
    Given(PhaseBasis),
    Auto,
}

fn basis_at(mode: &Mode, c0: &CoefficientSet, x: f64, y: &[f64]) -> Option<BasisState> {
    match mode {
        Mode::Classical => None,
        Mode::Given(b) => Some(b.state(x, c0)),
        Mode::Auto => Some(BasisState::from_dalembert(y[4], y[5], y[6], c0.p.eval(x))),
    }
}

/// Decides whether `τ1 − λ` is relatively oscillatory with respect to `τ0 − λ`
/// at the right endpoint by integrating `θ0`, `θ1`, `ψ` and `φ` jointly.
pub fn classify_relative_oscillation(
    c0: &CoefficientSet,
    c1: &CoefficientSet,
    lambda: f64,
    options: &ClassifyOptions,
) -> Result<RelativeReport> {
    let delta = make_delta(c0, c1)?;
    let a = c0.a;
    let schedule = options.schedule_for(a);
    if schedule.is_empty() || schedule.windows(2).any(|w| w[1] <= w[0]) || schedule[0] <= a {
        return Err(Error::Config("window schedule must be increasing and above a".into()));
    }
    let x_end = *schedule.last().unwrap();
    if x_end > c0.b {
        return Err(Error::RangeMismatch { lo: a, hi: c0.b });
    }
    let opts = &options.ode;
    let mut notes = Vec::new();

    let (mode, u0_init) = match &options.basis {
        BasisChoice::Given(b) => {
            let s = b.u0.state(a);
            (Mode::Given(b.clone()), s)
        }
        BasisChoice::None => (Mode::Classical, [1.0, 0.0]),
        BasisChoice::Auto => match positive_background_init(c0, lambda, x_end, opts) {
            Some(init) => (Mode::Auto, init),
            None => {
                notes.push("no positive background solution found; using the classical angle difference".into());
                (Mode::Classical, [1.0, 0.0])
            }
        },
    };
    let u1_init = options.u1_init.unwrap_or(u0_init);

    let th0 = state_angle(u0_init);
    let mut th1 = state_angle(u1_init);
    // normalize Δ(a) to [0, π)
    let k = ((th1 - th0) / PI).floor();
    th1 -= k * PI;
    // carry Δ = θ1 − θ0 directly so its error is not swamped by the size of θ0
    let mut y0 = vec![th0, th1 - th0];
    let mut psi_a = f64::NAN;
    let mut phi_a = f64::NAN;
    if let Some(b) = basis_at(&mode, c0, a, &[0.0, 0.0, 0.0, 0.0, u0_init[0], u0_init[1], 0.0]) {
        let w0 = wronskian_states(b.u0, u1_init);
        let w1 = wronskian_states(b.v0, u1_init);
        psi_a = (-w0).atan2(-w1);
        phi_a = kepler_angle(psi_a, b.beta, b.beta);
        y0.push(psi_a);
        y0.push(phi_a);
        if matches!(mode, Mode::Auto) {
            y0.extend_from_slice(&[u0_init[0], u0_init[1], 0.0]);
        }
    }
    let has_basis = y0.len() > 2;

    let rhs = |x: f64, y: &[f64], dy: &mut [f64]| {
        dy[0] = theta_rhs(c0, lambda, x, y[0]);
        dy[1] = theta_rhs(c1, lambda, x, y[0] + y[1]) - dy[0];
        if let Some(b) = basis_at(&mode, c0, x, y) {
            let (dq, dp) = (delta.dq(x), delta.dp(x));
            dy[2] = crate::effective::psi_rhs(&b, dq, dp, y[2]);
            dy[3] = crate::effective::varphi_rhs(&b, dq, dp, y[3]);
            if y.len() > 4 {
                let p = c0.p.eval(x);
                dy[4] = y[5] / p;
                dy[5] = (c0.q.eval(x) - lambda * c0.r.eval(x)) * y[4];
                dy[6] = 1.0 / (p * y[4] * y[4]);
            }
        }
    };

    let mut records: Vec<(f64, Vec<f64>)> = Vec::with_capacity(schedule.len());
    let mut next = 0usize;
    let mut buf = vec![0.0; y0.len()];
    let out = ode::integrate(opts, rhs, a, &y0, x_end, |step| {
        while next < schedule.len() && schedule[next] <= step.x1 {
            step.eval(schedule[next], &mut buf);
            records.push((schedule[next], buf.clone()));
            next += 1;
        }
        Control::Continue
    })?;
    while next < schedule.len() {
        records.push((schedule[next], out.y.clone()));
        next += 1;
    }

    let delta_a = th1 - th0;
    let mut windows = Vec::with_capacity(records.len());
    for (d, y) in &records {
        let count_delta = flip_count(delta_a, y[1]);
        let (count_psi, count_phi, phase, scale) = if has_basis {
            let b = basis_at(&mode, c0, *d, y).unwrap();
            let sg = b.beta.signum();
            let cp = flip_count(psi_a, y[2]);
            let cf = flip_count(sg * phi_a, sg * y[3]);
            (Some(cp), Some(cf), sg * y[3] / PI, b.beta.abs().ln())
        } else {
            (None, None, y[1] / PI, d.ln())
        };
        let tie = near_multiple_of_pi(y[1]) || (has_basis && near_multiple_of_pi(y[2]));
        windows.push(WindowRecord {
            d: *d,
            count_delta,
            count_psi,
            count_phi,
            phase,
            scale,
            tie,
        });
    }
    let scales: Vec<f64> = windows.iter().map(|w| w.scale).collect();
    let phases: Vec<f64> = windows.iter().map(|w| w.phase).collect();
    let counts: Vec<i64> = windows.iter().map(|w| w.count_delta).collect();
    let (verdict, slope, count_range) = slope_verdict(
        &scales,
        &phases,
        &counts,
        options.k_windows,
        options.slope_tol,
        options.max_count_range,
    );
    let (mut verdict, slope, count_range) = (verdict, slope, count_range);
    if matches!(mode, Mode::Auto) {
        // the automatic basis needs a minimal u0, i.e. a diverging ∫ 1/(p0 u0²)
        let i_end = records.last().map_or(0.0, |r| r.1[6]);
        let i_dec = records
            .iter()
            .rev()
            .find(|r| r.0 <= x_end / 10.0)
            .map_or(0.0, |r| r.1[6]);
        if (i_end - i_dec) / (1.0 + i_end).abs() <= MINIMALITY_INCREMENT {
            notes.push(format!(
                "background solution is not minimal (integral of 1/(p0 u0^2) grew by {:.3e} over the last decade); supply a basis",
                i_end - i_dec
            ));
            verdict = Verdict::Inconclusive;
        }
    }
    if windows.iter().any(|w| !w.counts_agree()) {
        notes.push("flip counts from the angle difference, psi and varphi disagree".into());
    }
    Ok(RelativeReport {
        verdict,
        slope,
        count_range,
        windows,
        notes,
        anchors: (delta_a, psi_a, phi_a),
    })
}

/// Classical oscillation: slope test on `θ/π` against `log x`.
pub fn classify_classical(coeffs: &CoefficientSet, lambda: f64, options: &ClassifyOptions) -> Result<RelativeReport> {
    let a = coeffs.a;
    let schedule = options.schedule_for(a);
    let x_end = *schedule.last().ok_or_else(|| Error::Config("empty schedule".into()))?;
    let mut records = Vec::new();
    let mut next = 0usize;
    let theta_a = PI / 2.0;
    let out = ode::integrate(
        &options.ode,
        |x, y, dy| dy[0] = theta_rhs(coeffs, lambda, x, y[0]),
        a,
        &[theta_a],
        x_end,
        |step| {
            while next < schedule.len() && schedule[next] <= step.x1 {
                records.push((schedule[next], step.eval_component(0, schedule[next])));
                next += 1;
            }
            Control::Continue
        },
    )?;
    while next < schedule.len() {
        records.push((schedule[next], out.y[0]));
        next += 1;
    }
    let windows: Vec<WindowRecord> = records
        .iter()
        .map(|&(d, th)| {
            let zeros = (th / PI).ceil() as i64 - 1;
            WindowRecord {
                d,
                count_delta: zeros,
                count_psi: None,
                count_phi: None,
                phase: th / PI,
                scale: d.ln(),
                tie: near_multiple_of_pi(th),
            }
        })
        .collect();
    let scales: Vec<f64> = windows.iter().map(|w| w.scale).collect();
    let phases: Vec<f64> = windows.iter().map(|w| w.phase).collect();
    let counts: Vec<i64> = windows.iter().map(|w| w.count_delta).collect();
    let (verdict, slope, count_range) = slope_verdict(
        &scales,
        &phases,
        &counts,
        options.k_windows,
        options.slope_tol,
        options.max_count_range,
    );
    Ok(RelativeReport {
        verdict,
        slope,
        count_range,
        windows,
        notes: Vec::new(),
        anchors: (theta_a, f64::NAN, f64::NAN),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectWindow {
    pub d: f64,
    /// Sign changes of `W(u0, u1)` on `(a, d)`.
    pub wronskian_sign_changes: i64,
    pub zeros_u0: i64,
    pub zeros_u1: i64,
    pub psi: f64,
    pub phi: f64,
    pub phase: f64,
    pub scale: f64,
}

#[derive(Clone)]
struct Tracker {
    psi: f64,
    phi: f64,
    last_w: f64,
    last_u1: f64,
    last_u0: f64,
    sc_w: i64,
    z0: i64,
    z1: i64,
}

fn sign_change(last: &mut f64, v: f64) -> bool {
    let flip = v != 0.0 && *last != 0.0 && (v > 0.0) != (*last > 0.0);
    if v != 0.0 {
        *last = v;
    }
    flip
}

impl Tracker {
    /// Returns false when the unwrapped Kepler angle moved by more than `π/4`.
    fn visit(&mut self, u0: [f64; 2], u1: [f64; 2], b: Option<&BasisState>) -> bool {
        let w = wronskian_states(u0, u1);
        // cancellation noise of an identically vanishing Wronskian is not a sign
        let scale = (u0[0] * u1[1]).abs() + (u0[1] * u1[0]).abs();
        let w = if w.abs() <= WRONSKIAN_NOISE * scale { 0.0 } else { w };
        self.sc_w += sign_change(&mut self.last_w, w) as i64;
        self.z1 += sign_change(&mut self.last_u1, u1[0]) as i64;
        self.z0 += sign_change(&mut self.last_u0, u0[0]) as i64;
        if let Some(b) = b {
            // φ varies on the scale of log|β| while ψ may turn by π over O(1) distances,
            // so unwrap φ and recover ψ from it
            let raw = (-wronskian_states(b.u0, u1)).atan2(-wronskian_states(b.v0, u1));
            let raw_phi = kepler_angle(raw, b.beta, b.beta);
            let jump = raw_phi - self.phi;
            let step = jump - 2.0 * PI * (jump / (2.0 * PI)).round();
            self.phi += step;
            self.psi = psi_from_kepler(self.phi, b.beta, b.beta);
            return step.abs() <= PI / 4.0;
        }
        true
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectReport {
    pub verdict: Verdict,
    pub slope: f64,
    pub windows: Vec<DirectWindow>,
    pub notes: Vec<String>,
}

const DIRECT_SUBSAMPLES: usize = 8;
const WRONSKIAN_NOISE: f64 = 1e-8;
const DIRECT_REFINED: usize = 64;

/// Cross-validation by brute force: integrates the linear systems for `u0`
/// and `u1`, counts zeros and Wronskian sign changes on a fine sample grid
/// and unwraps `atan2` of the Wronskian pair.
pub fn direct_count(
    c0: &CoefficientSet,
    c1: &CoefficientSet,
    lambda: f64,
    options: &ClassifyOptions,
) -> Result<DirectReport> {
    let a = c0.a;
    make_delta(c0, c1)?;
    let schedule = options.schedule_for(a);
    let x_end = *schedule.last().ok_or_else(|| Error::Config("empty schedule".into()))?;
    let opts = &options.ode;
    let mut notes = Vec::new();
    let (mode, u0_init) = match &options.basis {
        BasisChoice::Given(b) => (Mode::Given(b.clone()), b.u0.state(a)),
        BasisChoice::None => (Mode::Classical, [1.0, 0.0]),
        BasisChoice::Auto => match positive_background_init(c0, lambda, x_end, opts) {
            Some(init) => (Mode::Auto, init),
            None => {
                notes.push("no positive background solution found; using Wronskian sign changes".into());
                (Mode::Classical, [1.0, 0.0])
            }
        },
    };
    let u1_init = options.u1_init.unwrap_or(u0_init);
    // layout: [u1, pu1, u0, pu0, I]; u0 is integrated unless a basis is given
    let y0 = vec![u1_init[0], u1_init[1], u0_init[0], u0_init[1], 0.0];

    let rhs = |x: f64, y: &[f64], dy: &mut [f64]| {
        let d1 = sl::sl_rhs(c1, lambda, x, y[0], y[1]);
        let d0 = sl::sl_rhs(c0, lambda, x, y[2], y[3]);
        dy[0] = d1[0];
        dy[1] = d1[1];
        dy[2] = d0[0];
        dy[3] = d0[1];
        dy[4] = if matches!(mode, Mode::Auto) {
            1.0 / (c0.p.eval(x) * y[2] * y[2])
        } else {
            0.0
        };
    };

    let state_at = |x: f64, y: &[f64]| -> ([f64; 2], [f64; 2], Option<BasisState>) {
        let u1 = [y[0], y[1]];
        match &mode {
            Mode::Given(b) => {
                let bs = b.state(x, c0);
                (u1, bs.u0, Some(bs))
            }
            Mode::Auto => (
                u1,
                [y[2], y[3]],
                Some(BasisState::from_dalembert(y[2], y[3], y[4], c0.p.eval(x))),
            ),
            Mode::Classical => (u1, [y[2], y[3]], None),
        }
    };

    let (u1s, u0s, b) = state_at(a, &y0);
    let mut tr = Tracker {
        psi: f64::NAN,
        phi: f64::NAN,
        last_w: wronskian_states(u0s, u1s),
        last_u1: u1s[0],
        last_u0: u0s[0],
        sc_w: 0,
        z0: 0,
        z1: 0,
    };
    if let Some(b) = b {
        tr.psi = (-wronskian_states(b.u0, u1s)).atan2(-wronskian_states(b.v0, u1s));
        tr.phi = kepler_angle(tr.psi, b.beta, b.beta);
    }
    let mut windows = Vec::new();
    let mut next = 0usize;
    let mut buf = vec![0.0; 5];
    let mut failure = None;

    ode::integrate(opts, rhs, a, &y0, x_end, |step| {
        let mut pending = Vec::new();
        let mut j = next;
        while j < schedule.len() && schedule[j] <= step.x1 {
            pending.push(schedule[j]);
            j += 1;
        }
        // coarse subsampling first, a fine one when an angle increment is too large
        for (pass, m) in [DIRECT_SUBSAMPLES, DIRECT_REFINED].into_iter().enumerate() {
            let mut xs: Vec<f64> = (1..=m)
                .map(|k| step.x0 + (step.x1 - step.x0) * k as f64 / m as f64)
                .chain(pending.iter().copied())
                .collect();
            xs.sort_by(f64::total_cmp);
            let mut t = tr.clone();
            let mut recs = Vec::new();
            let mut ok = true;
            for x in xs {
                step.eval(x, &mut buf);
                let (u1, u0, b) = state_at(x, &buf);
                ok &= t.visit(u0, u1, b.as_ref());
                if pending.contains(&x) && !recs.iter().any(|r: &DirectWindow| r.d == x) {
                    let (phase, scale) = match &b {
                        Some(b) => (b.beta.signum() * t.phi / PI, b.beta.abs().ln()),
                        None => (t.sc_w as f64, x.ln()),
                    };
                    recs.push(DirectWindow {
                        d: x,
                        wronskian_sign_changes: t.sc_w,
                        zeros_u0: t.z0,
                        zeros_u1: t.z1,
                        psi: t.psi,
                        phi: t.phi,
                        phase,
                        scale,
                    });
                }
            }
            if ok || pass == 1 {
                if !ok && failure.is_none() {
                    failure = Some(step.x1);
                }
                tr = t;
                windows.extend(recs);
                break;
            }
        }
        next = j;
        Control::Continue
    })?;
    if let Some(x) = failure {
        notes.push(format!("angle increments above π/4 persisted near x = {x}"));
    }
    let scales: Vec<f64> = windows.iter().map(|w| w.scale).collect();
    let phases: Vec<f64> = windows.iter().map(|w| w.phase).collect();
    let counts: Vec<i64> = windows.iter().map(|w| w.wronskian_sign_changes).collect();
    let (verdict, slope, _) = slope_verdict(
        &scales,
        &phases,
        &counts,
        options.k_windows,
        options.slope_tol,
        options.max_count_range,
    );
    Ok(DirectReport {
        verdict,
        slope,
        windows,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sl::{integrate_sl, ExprSolution};
    use crate::Coefficient;

    fn free(a: f64, b: f64) -> CoefficientSet {
        CoefficientSet::schroedinger(0.0.into(), a, b).unwrap()
    }

    #[test]
    fn theta_of_sine_is_x() {
        let c = free(0.0, 20.0);
        let t = integrate_sl(&c, 1.0, [0.0, 1.0], 0.0, 20.0, &OdeOptions::default()).unwrap();
        let th = pruefer_angle(&c, &t, 1.0, 0.0, &OdeOptions::default()).unwrap();
        for &x in &[0.0, 1.0, 7.3, 20.0] {
            assert!((th.eval(x) - x).abs() < 1e-9);
        }
        let t = integrate_sl(&c, 0.0, [1.0, 0.0], 0.0, 20.0, &OdeOptions::default()).unwrap();
        let th = pruefer_angle(&c, &t, 0.0, PI / 2.0, &OdeOptions::default()).unwrap();
        assert!((th.eval(13.0) - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn flip_count_identity_examples() {
        let f = FlipCount::new(0.0, 10.0, 0.0, (2.0f64.sqrt() - 1.0) * 10.0);
        assert_eq!(f.count, 1);
        assert_eq!(flip_count(PI / 2.0, PI / 2.0), 0);
        assert_eq!(flip_count(0.3, 0.3 + 2.0 * PI), 2);
    }

    #[test]
    fn wronskian_closed_form() {
        let u0: SharedSolution = Arc::new(ExprSolution::parse("(sin x)", 1.0.into(), (0.0, 10.0)).unwrap());
        let u1: SharedSolution = Arc::new(ExprSolution::parse("(sin (mul (sqrt 2) x))", 1.0.into(), (0.0, 10.0)).unwrap());
        let w = modified_wronskian(u0, u1).unwrap();
        let s2 = 2.0f64.sqrt();
        let expect = s2 * 1f64.sin() * s2.cos() - 1f64.cos() * s2.sin();
        assert!((w.eval(1.0) - expect).abs() < 1e-14);
    }

    #[test]
    fn gap_precheck() {
        let c0 = free(1.0, f64::INFINITY);
        let c1 = CoefficientSet::schroedinger(Coefficient::parse("(div 1 (pow x 2))").unwrap(), 1.0, f64::INFINITY).unwrap();
        assert!(essential_gap_precheck(&c0, &c1, 1e6));
        let c2 = CoefficientSet::schroedinger(1.0.into(), 1.0, f64::INFINITY).unwrap();
        assert!(!essential_gap_precheck(&c0, &c2, 1e6));
    }
}
