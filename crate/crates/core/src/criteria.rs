//! Critical-constant criteria: every evaluator compares a tail limsup/liminf
//! against `-1/4`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::averaging::{check_condrho, RealFn};
use crate::effective::{Beta, PhaseBasis, BASIS_NORMALIZATION_TOL};
use crate::logscale::{l_n, q_n, threshold};
use crate::ode::{self, OdeOptions};
use crate::pruefer::MINIMALITY_INCREMENT;
use crate::sl::{dalembert_second_solution, wronskian_states, FnSolution, SharedSolution};
use crate::stats::{decreasing_trend, geomspace};
use crate::{Coefficient, CoefficientSet, DeltaCoefficients, Error, Result};

pub const CRITICAL: f64 = -0.25;
pub const DEFAULT_MARGIN: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Oscillatory,
    Nonoscillatory,
    Inconclusive,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::Oscillatory => "Oscillatory",
            Verdict::Nonoscillatory => "Nonoscillatory",
            Verdict::Inconclusive => "Inconclusive",
        }
    }

    pub fn is_conclusive(self) -> bool {
        self != Verdict::Inconclusive
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionVerdict {
    pub verdict: Verdict,
    pub estimate: f64,
    pub limsup: f64,
    pub liminf: f64,
    pub margin: f64,
    /// `(x_lo, x_hi, ell)`; `ell` is 0 for pointwise criteria.
    pub window: (f64, f64, f64),
    pub notes: Vec<String>,
    /// `(x, value)` samples of the quantity compared against `-1/4`.
    #[serde(skip)]
    pub evidence: Vec<(f64, f64)>,
}

impl CriterionVerdict {
    /// Oscillatory if `limsup < -1/4 - margin`, nonoscillatory if `liminf > -1/4 + margin`.
    pub fn from_series(series: Vec<(f64, f64)>, margin: f64, window: (f64, f64, f64)) -> Self {
        let limsup = series.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        let liminf = series.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        let mut notes = Vec::new();
        let finite = series.iter().all(|s| s.1.is_finite()) && !series.is_empty();
        let verdict = if !finite {
            notes.push("non-finite criterion values on the tail".to_string());
            Verdict::Inconclusive
        } else if limsup < CRITICAL - margin {
            Verdict::Oscillatory
        } else if liminf > CRITICAL + margin {
            Verdict::Nonoscillatory
        } else {
            Verdict::Inconclusive
        };
        let estimate = match verdict {
            Verdict::Oscillatory => limsup,
            Verdict::Nonoscillatory => liminf,
            Verdict::Inconclusive => {
                if (limsup - CRITICAL).abs() > (liminf - CRITICAL).abs() {
                    liminf
                } else {
                    limsup
                }
            }
        };
        Self {
            verdict,
            estimate,
            limsup,
            liminf,
            margin,
            window,
            notes,
            evidence: series,
        }
    }

    /// Keeps the estimate but withdraws the verdict.
    pub fn downgrade(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
        self.verdict = Verdict::Inconclusive;
    }
}

/// Oscillatory if `inf_ℓ limsup < -1/4 - margin`, nonoscillatory if `sup_ℓ liminf > -1/4 + margin`.
/// `sweep` holds one tail series per `ℓ`.
pub fn from_ell_sweep(sweep: Vec<(f64, Vec<(f64, f64)>)>, margin: f64, lo: f64, hi: f64) -> CriterionVerdict {
    let mut per_ell: Vec<(f64, CriterionVerdict)> = sweep
        .into_iter()
        .map(|(ell, s)| (ell, CriterionVerdict::from_series(s, margin, (lo, hi, ell))))
        .collect();
    if per_ell.len() == 1 {
        return per_ell.pop().unwrap().1;
    }
    let best_sup = per_ell
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.limsup.total_cmp(&b.1 .1.limsup))
        .map(|(i, _)| i);
    let best_inf = per_ell
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.liminf.total_cmp(&b.1 .1.liminf))
        .map(|(i, _)| i);
    let (Some(i_sup), Some(i_inf)) = (best_sup, best_inf) else {
        return CriterionVerdict::from_series(Vec::new(), margin, (lo, hi, 0.0));
    };
    let limsup = per_ell[i_sup].1.limsup;
    let liminf = per_ell[i_inf].1.liminf;
    let finite = per_ell.iter().all(|(_, v)| v.limsup.is_finite() && v.liminf.is_finite());
    let mut notes = Vec::new();
    let (verdict, pick) = if !finite {
        notes.push("non-finite criterion values on the tail".to_string());
        (Verdict::Inconclusive, i_sup)
    } else if limsup < CRITICAL - margin {
        (Verdict::Oscillatory, i_sup)
    } else if liminf > CRITICAL + margin {
        (Verdict::Nonoscillatory, i_inf)
    } else if (limsup - CRITICAL).abs() > (liminf - CRITICAL).abs() {
        (Verdict::Inconclusive, i_inf)
    } else {
        (Verdict::Inconclusive, i_sup)
    };
    let (ell, chosen) = per_ell.swap_remove(pick);
    let estimate = if pick == i_sup { limsup } else { liminf };
    CriterionVerdict {
        verdict,
        estimate,
        limsup,
        liminf,
        margin,
        window: (lo, hi, ell),
        notes,
        evidence: chosen.evidence,
    }
}

/// Edge data at a boundary point `E` of the essential spectrum:
/// `W(u0, v0) = 1`, growth scale `α` and drift `β`.
#[derive(Clone)]
pub struct AdmissibleEdgeData {
    pub e: f64,
    pub p0: Coefficient,
    pub u0: SharedSolution,
    pub v0: SharedSolution,
    pub alpha: RealFn,
    pub beta: Beta,
}

impl std::fmt::Debug for AdmissibleEdgeData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdmissibleEdgeData").field("e", &self.e).finish_non_exhaustive()
    }
}

/// Pointwise values used by the criteria.
#[derive(Debug, Clone, Copy)]
pub struct EdgePoint {
    pub p0: f64,
    pub u0: [f64; 2],
    pub v0: [f64; 2],
    pub alpha: f64,
    pub beta: f64,
    pub dbeta: f64,
}

impl AdmissibleEdgeData {
    pub fn new(e: f64, p0: Coefficient, u0: SharedSolution, v0: SharedSolution, alpha: RealFn, beta: Beta) -> Self {
        Self {
            e,
            p0,
            u0,
            v0,
            alpha,
            beta,
        }
    }

    /// Data from a normalized basis; `β` defaults to `v0/u0` and `α` to `|u0| + |p0 u0'|`.
    pub fn from_basis(c0: &CoefficientSet, e: f64, basis: &PhaseBasis, alpha: Option<RealFn>) -> Self {
        let beta = match &basis.beta {
            Some(b) => b.clone(),
            None => {
                let (u, v, p) = (basis.u0.clone(), basis.v0.clone(), c0.p.clone());
                let (u2, v2) = (u.clone(), v.clone());
                Beta::new(
                    move |x| v.u(x) / u.u(x),
                    move |x| {
                        let (a, b) = (u2.state(x), v2.state(x));
                        wronskian_states(a, b) / (p.eval(x) * a[0] * a[0])
                    },
                )
            }
        };
        let alpha = alpha.unwrap_or_else(|| {
            let u = basis.u0.clone();
            Arc::new(move |x| {
                let s = u.state(x);
                s[0].abs() + s[1].abs()
            })
        });
        Self::new(e, c0.p.clone(), basis.u0.clone(), basis.v0.clone(), alpha, beta)
    }

    /// Bottom of the spectrum: `u0 > 0` solves `(τ0 − E)u = 0` and `v0` comes from d'Alembert's formula at `a0`.
    pub fn bottom(c0: &CoefficientSet, e: f64, u0: SharedSolution, a0: f64, x1: f64, opts: &OdeOptions) -> Result<Self> {
        let v0 = Arc::new(dalembert_second_solution(c0, u0.clone(), a0, x1, opts)?);
        let basis = PhaseBasis::new(u0, v0);
        Ok(Self::from_basis(c0, e, &basis, None))
    }

    /// Replaces a positive but non-minimal `u0` by the minimal `u0 ∫_x^b 1/(p0 u0²)`, with `u0` as the
    /// new `v0`. The tail of the integral beyond `hi` is extrapolated from the local power-law decay.
    pub fn minimal_from_tail(c0: &CoefficientSet, e: f64, u0: SharedSolution, lo: f64, hi: f64, opts: &OdeOptions) -> Result<Self> {
        let g = |x: f64| {
            let u = u0.u(x);
            1.0 / (c0.p.eval(x) * u * u)
        };
        let far = 100.0 * hi;
        let decay = -(g(2.0 * far) / g(far)).ln() / 2f64.ln();
        if !(decay > 1.0 + 1e-6) {
            return Err(Error::MinimalityViolated(format!(
                "1/(p0 u0²) decays like x^-{decay:.3}; it is not integrable, so u0 is already minimal"
            )));
        }
        let j_far = far * g(far) / (decay - 1.0);
        for x in [lo, hi, far] {
            if !(u0.u(x) > 0.0) {
                return Err(Error::NonPositiveSolution(x));
            }
        }
        let p = c0.p.clone();
        let base = u0.clone();
        let scaled = OdeOptions {
            atol: opts.atol.min(1e-6 * j_far),
            ..*opts
        };
        let dense = ode::integrate_dense(
            &scaled,
            |x, _y, dy| {
                let u = base.u(x);
                dy[0] = -1.0 / (p.eval(x) * u * u);
            },
            far,
            &[j_far],
            lo,
        )?;
        let dense = Arc::new(dense);
        let (d1, b1) = (dense.clone(), u0.clone());
        let new_u0 = FnSolution::new(
            move |x| {
                let j = d1.component(0, x);
                let s = b1.state(x);
                [s[0] * j, s[1] * j - 1.0 / s[0]]
            },
            (lo, far),
        );
        let (d2, d3, p2, b2) = (dense.clone(), dense, c0.p.clone(), u0.clone());
        let beta = Beta::new(
            move |x| 1.0 / d2.component(0, x),
            move |x| {
                let j = d3.component(0, x);
                let u = b2.u(x);
                1.0 / (p2.eval(x) * u * u * j * j)
            },
        );
        let basis = PhaseBasis::new(Arc::new(new_u0), u0).with_beta(beta);
        Ok(Self::from_basis(c0, e, &basis, None))
    }

    #[inline]
    pub fn at(&self, x: f64) -> EdgePoint {
        EdgePoint {
            p0: self.p0.eval(x),
            u0: self.u0.state(x),
            v0: self.v0.state(x),
            alpha: (self.alpha)(x),
            beta: self.beta.value(x),
            dbeta: self.beta.deriv(x),
        }
    }

    /// `ρ = β'/β`.
    pub fn rho(&self, x: f64) -> f64 {
        self.beta.deriv(x) / self.beta.value(x)
    }

    pub fn phase_basis(&self) -> PhaseBasis {
        PhaseBasis::new(self.u0.clone(), self.v0.clone()).with_beta(self.beta.clone())
    }

    /// Tail checks of the admissibility conditions; returns the violated ones.
    pub fn admissibility_violations(&self, lo: f64, hi: f64, ell: f64, opts: &OdeOptions) -> Result<Vec<String>> {
        let grid = geomspace(lo, hi, 120);
        let pts: Vec<EdgePoint> = grid.iter().map(|&x| self.at(x)).collect();
        let mut out = Vec::new();
        let w: f64 = pts
            .iter()
            .map(|p| (wronskian_states(p.u0, p.v0) - 1.0).abs())
            .fold(0.0, f64::max);
        if w > BASIS_NORMALIZATION_TOL {
            out.push(format!("W(u0, v0) deviates from 1 by {w:.3e}"));
        }
        let growth: Vec<f64> = pts.iter().map(|p| p.u0[0].abs().max(p.u0[1].abs()) / p.alpha).collect();
        if !bounded(&growth) {
            out.push("(u0, p0 u0') is not O(alpha)".into());
        }
        let drift: Vec<f64> = pts
            .iter()
            .map(|p| {
                let d = (p.v0[0] - p.beta * p.u0[0]).abs().max((p.v0[1] - p.beta * p.u0[1]).abs());
                d / (p.alpha * p.beta.abs())
            })
            .collect();
        if !vanishing(&drift) {
            out.push("(v0, p0 v0') - beta (u0, p0 u0') is not o(alpha beta)".into());
        }
        let rho: Vec<f64> = grid.iter().map(|&x| self.rho(x)).collect();
        if rho.iter().any(|r| !(*r > 0.0)) {
            out.push("rho = beta'/beta is not positive".into());
        } else if !vanishing(&rho) {
            out.push("rho = beta'/beta is not o(1)".into());
        }
        if ell > 0.0 {
            let cond = check_condrho(&|x| self.rho(x), ell, (lo, hi), opts)?;
            if !cond.holds {
                out.push(format!("condrho fails for ell = {ell}"));
            }
        }
        Ok(out)
    }
}

/// Floor below which an envelope counts as vanishing outright.
pub const ENVELOPE_FLOOR: f64 = 1e-9;
/// Allowed growth of a bounded envelope between the first and last third of the tail.
pub const BOUNDED_GROWTH: f64 = 2.0;

/// `|h| → 0` on the tail: negligible, or trending down.
pub fn vanishing(vals: &[f64]) -> bool {
    let abs: Vec<f64> = vals.iter().map(|v| v.abs()).collect();
    if abs.iter().any(|v| !v.is_finite()) {
        return false;
    }
    abs.iter().copied().fold(0.0, f64::max) <= ENVELOPE_FLOOR || decreasing_trend(&abs)
}

/// `h = O(1)` on the tail: finite, and the last third does not outgrow the first.
pub fn bounded(vals: &[f64]) -> bool {
    let abs: Vec<f64> = vals.iter().map(|v| v.abs()).collect();
    if abs.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let n = abs.len();
    if n < 3 {
        return true;
    }
    let k = n / 3;
    let head = abs[..k].iter().copied().fold(0.0, f64::max);
    let tail = abs[n - k..].iter().copied().fold(0.0, f64::max);
    tail <= BOUNDED_GROWTH * head + ENVELOPE_FLOOR
}

#[derive(Debug, Clone)]
pub struct CriterionOptions {
    /// Right end of the truncated tail (clipped to `b`).
    pub x_max: f64,
    pub tail_points: usize,
    pub margin: f64,
    /// Hypothesis failures become errors instead of downgrading the verdict.
    pub strict: bool,
    /// `ℓ` values for the `inf_ℓ`/`sup_ℓ` forms; the single `ell` argument is used when empty.
    pub ell_grid: Vec<f64>,
    pub ode: OdeOptions,
}

impl Default for CriterionOptions {
    fn default() -> Self {
        Self {
            x_max: 1e6,
            tail_points: 200,
            margin: DEFAULT_MARGIN,
            strict: false,
            ell_grid: Vec::new(),
            ode: OdeOptions::default(),
        }
    }
}

impl CriterionOptions {
    fn tail(&self, hi: f64) -> (f64, f64, Vec<f64>) {
        let lo = hi / 10.0;
        (lo, hi, geomspace(lo, hi, self.tail_points))
    }

    fn ells(&self, ell: f64) -> Vec<f64> {
        if self.ell_grid.is_empty() {
            vec![ell]
        } else {
            self.ell_grid.clone()
        }
    }
}

/// Default `ℓ`-grid `ℓ₀ 2^k`, `k = 0..count`.
pub fn ell_grid(ell0: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| ell0 * 2f64.powi(k as i32)).collect()
}

fn require(v: &mut CriterionVerdict, ok: bool, what: &str, strict: bool) -> Result<()> {
    if ok {
        return Ok(());
    }
    if strict {
        return Err(Error::HypothesisViolated(what.to_string()));
    }
    v.downgrade(format!("hypothesis violated: {what}"));
    Ok(())
}

/// Uses `β = v0/u0` and `β → ∞` as the minimality test for a positive `u0`.
fn check_minimal(edge: &AdmissibleEdgeData, lo: f64, hi: f64) -> Result<()> {
    for x in geomspace(lo, hi, 50) {
        if !(edge.u0.u(x) > 0.0) {
            return Err(Error::NonPositiveSolution(x));
        }
    }
    let (b_lo, b_hi) = (edge.beta.value(lo), edge.beta.value(hi));
    let growth = (b_hi - b_lo) / b_hi.abs();
    if !(growth >= MINIMALITY_INCREMENT) {
        return Err(Error::MinimalityViolated(format!(
            "∫ 1/(p0 u0²) grows only by a factor {growth:.3e} over [{lo:e}, {hi:e}]"
        )));
    }
    Ok(())
}

fn x_hi(edge_range: Option<(f64, f64)>, opts: &CriterionOptions) -> f64 {
    match edge_range {
        Some((_, b)) => opts.x_max.min(b),
        None => opts.x_max,
    }
}

#[inline]
fn weighted(p: &EdgePoint, delta: &DeltaCoefficients, x: f64) -> f64 {
    p.u0[0] * p.u0[0] * delta.dq(x) + p.u0[1] * p.u0[1] * delta.dp(x)
}

/// Pointwise criterion: `p0 v0² (u0² Δq + (p0 u0')² Δp)` on the tail.
pub fn criterion_gu(edge: &AdmissibleEdgeData, delta: &DeltaCoefficients, options: &CriterionOptions) -> Result<CriterionVerdict> {
    criterion_gu_scale(edge, delta, 0, options)
}

/// Iterated-logarithm scale of [`criterion_gu`]:
/// `L_n(β)² (p0 u0² (u0² Δq + (p0 u0')² Δp) − Q_n(β))` with `β = v0/u0`.
pub fn criterion_gu_scale(edge: &AdmissibleEdgeData, delta: &DeltaCoefficients, n: u32, options: &CriterionOptions) -> Result<CriterionVerdict> {
    let hi = x_hi(Some(edge.u0.range()), options);
    let (lo, hi, grid) = options.tail(hi);
    check_minimal(edge, lo, hi)?;
    let mut series = Vec::with_capacity(grid.len());
    let mut env_a = Vec::with_capacity(grid.len());
    let mut env_b = Vec::with_capacity(grid.len());
    for &x in &grid {
        let p = edge.at(x);
        let beta = p.beta.abs();
        if n > 0 && beta <= threshold(n as i32) {
            return Err(Error::DomainBelowThreshold {
                n,
                x: beta,
                threshold: threshold(n as i32),
            });
        }
        let ln2 = l_n(n as i32, beta).powi(2);
        let val = if n == 0 {
            p.p0 * p.v0[0] * p.v0[0] * weighted(&p, delta, x)
        } else {
            ln2 * (p.p0 * p.u0[0] * p.u0[0] * weighted(&p, delta, x) - q_n(n, beta))
        };
        series.push((x, val));
        let scale = ln2 / (beta * beta);
        env_a.push(p.p0 * p.v0[0] * p.u0[1] * delta.dp(x) * scale);
        env_b.push(p.p0 * delta.dp(x) * scale);
    }
    let mut v = CriterionVerdict::from_series(series, options.margin, (lo, hi, 0.0));
    require(&mut v, vanishing(&env_a), "p0 v0 p0 u0' Δp is not o(β²/L_n(β)²)", options.strict)?;
    require(&mut v, vanishing(&env_b), "p0 Δp is not o(β²/L_n(β)²)", options.strict)?;
    Ok(v)
}

/// Criterion against `p0 = 1`, `q0 = Q_n` on `(e_n, ∞)`:
/// `L_n(x)² (Δq + δ_n Δp / (4x²))` with `δ_0 = 0`, `δ_n = 1` otherwise.
pub fn criterion_khwh(n: u32, c1: &CoefficientSet, options: &CriterionOptions) -> Result<CriterionVerdict> {
    let hi = options.x_max.min(c1.b);
    let (lo, hi, grid) = options.tail(hi);
    let e_n = threshold(n as i32);
    if lo <= e_n {
        return Err(Error::DomainBelowThreshold { n, x: lo, threshold: e_n });
    }
    let delta_n = if n == 0 { 0.0 } else { 1.0 };
    let mut series = Vec::with_capacity(grid.len());
    let mut env = Vec::with_capacity(grid.len());
    for &x in &grid {
        let p1 = c1.p.eval(x);
        let dq = c1.q.eval(x) - q_n(n, x);
        let dp = 1.0 - 1.0 / p1;
        let ln = l_n(n as i32, x);
        series.push((x, ln * ln * (dq + delta_n * dp / (4.0 * x * x))));
        env.push((p1 - 1.0) * ln / x);
    }
    let mut v = CriterionVerdict::from_series(series, options.margin, (lo, hi, 0.0));
    require(&mut v, vanishing(&env), "p1 - 1 is not o(x/L_n(x))", options.strict)?;
    Ok(v)
}

/// Shared shape of the averaged criteria:
/// `(L_n(β)²/β²) ((1/ℓ)∫_x^{x+ℓ} β² Q − β² Q_n(β))` swept over the `ℓ`-grid.
fn averaged_scale(
    edge: &AdmissibleEdgeData,
    q: &(dyn Fn(f64) -> f64 + Sync),
    n: u32,
    ells: &[f64],
    hi: f64,
    options: &CriterionOptions,
) -> Result<CriterionVerdict> {
    let ell_max = ells.iter().copied().fold(0.0, f64::max);
    let (lo, hi, grid) = options.tail(hi - ell_max);
    let e_n = threshold(n as i32);
    if n > 0 && edge.beta.value(lo).abs() <= e_n {
        return Err(Error::DomainBelowThreshold {
            n,
            x: edge.beta.value(lo).abs(),
            threshold: e_n,
        });
    }
    let integrand = |t: f64| edge.beta.value(t).powi(2) * q(t);
    let mut sweep = Vec::with_capacity(ells.len());
    for &ell in ells {
        let series: Result<Vec<(f64, f64)>> = grid
            .par_iter()
            .map(|&x| {
                let avg = ode::quad(&options.ode, integrand, x, x + ell)? / ell;
                let beta = edge.beta.value(x).abs();
                let val = if n == 0 {
                    avg
                } else {
                    l_n(n as i32, beta).powi(2) / (beta * beta) * (avg - beta * beta * q_n(n, beta))
                };
                Ok((x, val))
            })
            .collect();
        sweep.push((ell, series?));
    }
    Ok(from_ell_sweep(sweep, options.margin, lo, hi))
}

/// Averaged criterion at the bottom of the spectrum, with `Q = p0 u0² (u0² Δq + (p0 u0')² Δp)`.
pub fn criterion_gu_averaged(
    edge: &AdmissibleEdgeData,
    delta: &DeltaCoefficients,
    n: u32,
    ell: f64,
    options: &CriterionOptions,
) -> Result<CriterionVerdict> {
    let hi = x_hi(Some(edge.u0.range()), options);
    let (lo, hi_t, grid) = options.tail(hi);
    check_minimal(edge, lo, hi_t)?;
    let q = |x: f64| {
        let p = edge.at(x);
        p.p0 * p.u0[0] * p.u0[0] * weighted(&p, delta, x)
    };
    let ells = options.ells(ell);
    let mut v = averaged_scale(edge, &q, n, &ells, hi, options)?;
    let mut size = Vec::with_capacity(grid.len());
    let mut env_a = Vec::with_capacity(grid.len());
    let mut env_b = Vec::with_capacity(grid.len());
    let mut rho = Vec::with_capacity(grid.len());
    for &x in &grid {
        let p = edge.at(x);
        let beta = p.beta.abs();
        let scale = if n == 0 { 1.0 } else { l_n(n as i32, beta).powi(2) / (beta * beta) };
        size.push(p.p0 * p.v0[0] * p.v0[0] * weighted(&p, delta, x));
        env_a.push(p.p0 * p.v0[0] * p.u0[1] * delta.dp(x) * scale);
        env_b.push(p.p0 * delta.dp(x) * scale);
        rho.push(1.0 / (p.p0 * p.u0[0] * p.v0[0]));
    }
    require(&mut v, bounded(&size), "p0 v0² (u0² Δq + (p0 u0')² Δp) is not O(1)", options.strict)?;
    require(&mut v, vanishing(&env_a), "p0 v0 p0 u0' Δp does not vanish", options.strict)?;
    require(&mut v, vanishing(&env_b), "p0 Δp does not vanish", options.strict)?;
    require(&mut v, vanishing(&rho), "ρ = 1/(p0 u0 v0) is not o(1)", options.strict)?;
    let rho_fn = |x: f64| {
        let p = edge.at(x);
        1.0 / (p.p0 * p.u0[0] * p.v0[0])
    };
    for &l in &ells {
        let cond = check_condrho(&rho_fn, l, (lo, hi_t), &options.ode)?;
        require(&mut v, cond.holds, &format!("condrho fails for ell = {l}"), options.strict)?;
    }
    Ok(v)
}

/// Averaged criterion at an admissible edge:
/// `(1/ℓ)∫_x^{x+ℓ} (β²/β') (u0² Δq + (p0 u0')² Δp)`, `inf`/`sup` over the `ℓ`-grid.
pub fn criterion_main(edge: &AdmissibleEdgeData, delta: &DeltaCoefficients, ell: f64, options: &CriterionOptions) -> Result<CriterionVerdict> {
    criterion_main_scale(edge, delta, 0, ell, options)
}

/// Iterated-logarithm scale of [`criterion_main`] with `Q = (u0² Δq + (p0 u0')² Δp)/β'`.
pub fn criterion_main_scale(
    edge: &AdmissibleEdgeData,
    delta: &DeltaCoefficients,
    n: u32,
    ell: f64,
    options: &CriterionOptions,
) -> Result<CriterionVerdict> {
    let hi = x_hi(Some(edge.u0.range()), options);
    let ells = options.ells(ell);
    let ell_max = ells.iter().copied().fold(0.0, f64::max);
    let (lo, hi_t, grid) = options.tail(hi - ell_max);
    let violations = edge.admissibility_violations(lo, hi_t, ell_max, &options.ode)?;
    if options.strict && !violations.is_empty() {
        return Err(Error::NotAdmissible(violations.join("; ")));
    }
    let q = |x: f64| {
        let p = edge.at(x);
        weighted(&p, delta, x) / p.dbeta
    };
    let mut v = averaged_scale(edge, &q, n, &ells, hi, options)?;
    for what in violations {
        v.downgrade(format!("edge not admissible: {what}"));
    }
    let mut env_q = Vec::with_capacity(grid.len());
    let mut env_p = Vec::with_capacity(grid.len());
    for &x in &grid {
        let p = edge.at(x);
        let w = p.alpha * p.alpha * p.beta * p.beta / p.dbeta;
        env_q.push(delta.dq(x) * w);
        env_p.push(delta.dp(x) * w);
    }
    require(&mut v, bounded(&env_q), "Δq is not O(β'/(α²β²))", options.strict)?;
    require(&mut v, bounded(&env_p), "Δp is not O(β'/(α²β²))", options.strict)?;
    if n > 0 {
        let growing = edge.beta.value(hi_t).abs() > edge.beta.value(lo).abs();
        require(&mut v, growing, "β does not tend to infinity", options.strict)?;
    }
    Ok(v)
}

/// Hille–Wintner quantity `x ∫_x^∞ q1` on the tail.
pub fn criterion_hille_wintner(c1: &CoefficientSet, options: &CriterionOptions) -> Result<CriterionVerdict> {
    let hi = options.x_max.min(c1.b);
    let (lo, hi, grid) = options.tail(hi);
    if c1.b.is_finite() {
        return Err(Error::NotIntegrable("the right endpoint must be infinite".into()));
    }
    let series: Result<Vec<(f64, f64)>> = grid
        .par_iter()
        .map(|&x| {
            // t = x e^w maps the tail to a finite w-range; the factor x keeps the integrand O(1)
            let g = |w: f64| {
                let t = x * w.exp();
                c1.q.eval(t) * t * x
            };
            let short = ode::quad(&options.ode, g, 0.0, HW_SPAN)?;
            let long = short + ode::quad(&options.ode, g, HW_SPAN, 2.0 * HW_SPAN)?;
            if !long.is_finite() || (long - short).abs() > 1e-6 * long.abs() + 1e-14 {
                return Err(Error::NotIntegrable(format!(
                    "∫_x^∞ q1 does not settle at x = {x:e} ({short:e} vs {long:e})"
                )));
            }
            Ok((x, long))
        })
        .collect();
    Ok(CriterionVerdict::from_series(series?, options.margin, (lo, hi, 0.0)))
}

/// Range of `w` in the substitution `t = x e^w` before the tail is declared negligible.
const HW_SPAN: f64 = 40.0;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Expr;

    fn free_edge() -> AdmissibleEdgeData {
        let u0 = FnSolution::new(|_| [1.0, 0.0], (1.0, f64::INFINITY));
        let v0 = FnSolution::new(|x| [x, 1.0], (1.0, f64::INFINITY));
        let basis = PhaseBasis::new(Arc::new(u0), Arc::new(v0)).with_beta(Beta::linear(1.0));
        let c0 = CoefficientSet::schroedinger(0.0.into(), 1.0, f64::INFINITY).unwrap();
        AdmissibleEdgeData::from_basis(&c0, 0.0, &basis, Some(Arc::new(|_| 1.0)))
    }

    fn kneser(mu: f64) -> DeltaCoefficients {
        DeltaCoefficients::only_q(Coefficient::func(move |x| mu / (x * x)))
    }

    #[test]
    fn kneser_value_is_mu() {
        let o = CriterionOptions::default();
        for (mu, want) in [(-1.0, Verdict::Oscillatory), (-0.25, Verdict::Inconclusive), (0.0, Verdict::Nonoscillatory)] {
            let v = criterion_gu(&free_edge(), &kneser(mu), &o).unwrap();
            assert!((v.estimate - mu).abs() < 1e-12);
            assert_eq!(v.verdict, want);
            let s = criterion_gu_scale(&free_edge(), &kneser(mu), 0, &o).unwrap();
            assert_eq!(s.estimate, v.estimate);
        }
    }

    #[test]
    fn khwh_scale_one() {
        let o = CriterionOptions::default();
        for mu in [-0.5, 0.0] {
            let q = Expr::parse(&format!("(add (div -0.25 (pow x 2)) (div {mu} (pow (mul x (log x)) 2)))")).unwrap();
            let c1 = CoefficientSet::schroedinger(Coefficient::expr(q).unwrap(), std::f64::consts::E, f64::INFINITY).unwrap();
            let v = criterion_khwh(1, &c1, &o).unwrap();
            assert!((v.estimate - mu).abs() < 1e-9, "{}", v.estimate);
        }
        let c1 = CoefficientSet::new(Coefficient::func(|x| 1.0 + 1.0 / x), 0.0.into(), 1.0.into(), 1.0, f64::INFINITY).unwrap();
        let v = criterion_khwh(0, &c1, &o).unwrap();
        assert_eq!(v.estimate, 0.0);
        assert_eq!(v.verdict, Verdict::Nonoscillatory);
    }

    #[test]
    fn free_background_on_scale_one() {
        let o = CriterionOptions::default();
        let delta = DeltaCoefficients::only_q(Coefficient::func(|x: f64| -0.25 / (x * x) - 0.5 / (x * x.ln()).powi(2)));
        let v = criterion_gu_scale(&free_edge(), &delta, 1, &o).unwrap();
        assert!((v.estimate + 0.5).abs() < 1e-9);
        assert_eq!(v.verdict, Verdict::Oscillatory);
    }

    #[test]
    fn averaging_removes_the_oscillation() {
        let o = CriterionOptions::default();
        let delta = DeltaCoefficients::only_q(Coefficient::func(|t: f64| (-0.5 + t.sin()) / (t * t)));
        let point = criterion_gu(&free_edge(), &delta, &o).unwrap();
        assert_eq!(point.verdict, Verdict::Inconclusive);
        let avg = criterion_gu_averaged(&free_edge(), &delta, 0, 2.0 * std::f64::consts::PI, &o).unwrap();
        assert_eq!(avg.verdict, Verdict::Oscillatory);
        assert!((avg.estimate + 0.5).abs() < 1e-6, "{}", avg.estimate);
        let main = criterion_main(&free_edge(), &delta, 2.0 * std::f64::consts::PI, &o).unwrap();
        assert!((main.estimate - avg.estimate).abs() < 1e-9);
    }

    #[test]
    fn hille_wintner_examples() {
        let o = CriterionOptions::default();
        let c = |f: fn(f64) -> f64| CoefficientSet::schroedinger(Coefficient::func(f), 1.0, f64::INFINITY).unwrap();
        let v = criterion_hille_wintner(&c(|x| -1.0 / (x * x)), &o).unwrap();
        assert!((v.estimate + 1.0).abs() < 1e-8);
        let v = criterion_hille_wintner(&c(|_| 0.0), &o).unwrap();
        assert_eq!(v.verdict, Verdict::Nonoscillatory);
        let v = criterion_hille_wintner(&c(|x| -x.powf(-1.5)), &o).unwrap();
        assert_eq!(v.verdict, Verdict::Oscillatory);
        assert!((v.limsup + 2.0 * 1e5f64.sqrt()).abs() < 1e-3);
        assert!(matches!(criterion_hille_wintner(&c(|x| 1.0 / x), &o), Err(Error::NotIntegrable(_))));
    }

    #[test]
    fn non_minimal_solution_is_rejected_and_repaired() {
        let o = CriterionOptions::default();
        let c0 = CoefficientSet::schroedinger(0.0.into(), 1.0, f64::INFINITY).unwrap();
        let u = Arc::new(FnSolution::new(|x| [x, 1.0], (1.0, f64::INFINITY)));
        let edge = AdmissibleEdgeData::bottom(&c0, 0.0, u.clone(), 1.0, 2e6, &o.ode).unwrap();
        assert!(matches!(criterion_gu(&edge, &kneser(-1.0), &o), Err(Error::MinimalityViolated(_))));
        let fixed = AdmissibleEdgeData::minimal_from_tail(&c0, 0.0, u, 1.0, 2e6, &o.ode).unwrap();
        let v = criterion_gu(&fixed, &kneser(-1.0), &o).unwrap();
        assert!((v.estimate + 1.0).abs() < 1e-6, "{}", v.estimate);
    }
}
