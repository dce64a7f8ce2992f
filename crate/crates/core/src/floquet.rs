//! Periodic backgrounds: monodromy, discriminant, multipliers, Weyl m-functions,
//! band edges and the edge data that feed the periodic criteria.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::criteria::AdmissibleEdgeData;
use crate::effective::Beta;
use crate::ode::{self, DenseOutput, OdeOptions};
use crate::sl::{sl_rhs, FnSolution, SharedSolution};
use crate::stats::linspace;
use crate::{CoefficientSet, Error, Result};

/// `|s(z, ℓ)|` below this (relative to `ℓ`) triggers a base-point shift.
pub const BASEPOINT_TOL: f64 = 1e-8;
/// Grid points per unit of the z-range scanned for sign changes of `|D| - 2`.
const SCAN_POINTS: usize = 400;

fn period_of(coeffs: &CoefficientSet) -> Result<f64> {
    match coeffs.period {
        Some(l) if l > 0.0 => Ok(l),
        _ => Err(Error::InvalidCoefficients("a period is required".into())),
    }
}

/// The fundamental system `c`, `s` on one period from `x0`, with the quadratures
/// `∫ r c²`, `∫ r c s`, `∫ r s²`.
#[derive(Clone)]
pub struct Fundamental {
    pub x0: f64,
    pub ell: f64,
    pub z: f64,
    dense: Arc<DenseOutput>,
}

impl Fundamental {
    pub fn new(coeffs: &CoefficientSet, z: f64, x0: f64, opts: &OdeOptions) -> Result<Self> {
        let ell = period_of(coeffs)?;
        let dense = ode::integrate_dense(
            opts,
            |x, y, dy| {
                let c = sl_rhs(coeffs, z, x, y[0], y[1]);
                let s = sl_rhs(coeffs, z, x, y[2], y[3]);
                let r = coeffs.r.eval(x);
                dy[0] = c[0];
                dy[1] = c[1];
                dy[2] = s[0];
                dy[3] = s[1];
                dy[4] = r * y[0] * y[0];
                dy[5] = r * y[0] * y[2];
                dy[6] = r * y[2] * y[2];
            },
            x0,
            &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            x0 + ell,
        )?;
        Ok(Self {
            x0,
            ell,
            z,
            dense: Arc::new(dense),
        })
    }

    fn end(&self) -> Vec<f64> {
        self.dense.eval_vec(self.x0 + self.ell)
    }

    /// `[[c(ℓ), s(ℓ)], [p c'(ℓ), p s'(ℓ)]]`.
    pub fn monodromy(&self) -> [[f64; 2]; 2] {
        let e = self.end();
        [[e[0], e[2]], [e[1], e[3]]]
    }

    /// States `(c, pc')` and `(s, ps')` at `x ∈ [x0, x0 + ℓ]`.
    pub fn states(&self, x: f64) -> ([f64; 2], [f64; 2]) {
        let mut v = [0.0; 7];
        self.dense.eval(x, &mut v);
        ([v[0], v[1]], [v[2], v[3]])
    }

    /// `Ḋ(z) = −s(z,ℓ) ∫ u₊ u₋ r`, with the product expanded through `c`, `s`
    /// and `det M = 1`, so the expression stays regular when `s(z,ℓ) = 0`.
    pub fn dot_d(&self) -> f64 {
        let e = self.end();
        let (c, pc, s, ps) = (e[0], e[1], e[2], e[3]);
        -(s * e[4] + (ps - c) * e[5] - pc * e[6])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FloquetData {
    pub period: f64,
    pub z: f64,
    pub base_point: f64,
    pub monodromy: [[f64; 2]; 2],
    pub discriminant: f64,
    /// Multipliers `(re, im)`, ordered so that `|ρ₊| ≤ 1` (positive imaginary part inside bands).
    pub rho_plus: (f64, f64),
    pub rho_minus: (f64, f64),
    /// Weyl m-values `(re, im)`; absent when `s(z, ℓ)` vanishes.
    pub m_plus: Option<(f64, f64)>,
    pub m_minus: Option<(f64, f64)>,
}

fn c2t(c: Complex64) -> (f64, f64) {
    (c.re, c.im)
}

/// `ρ± = (D ∓ √(D² − 4))/2` on the branch with `|ρ₊| ≤ 1`.
pub fn multipliers(d: f64) -> (Complex64, Complex64) {
    let disc = d * d - 4.0;
    if disc >= 0.0 {
        let r = disc.sqrt();
        let (a, b) = ((d - r) / 2.0, (d + r) / 2.0);
        if a.abs() <= b.abs() {
            (Complex64::new(a, 0.0), Complex64::new(b, 0.0))
        } else {
            (Complex64::new(b, 0.0), Complex64::new(a, 0.0))
        }
    } else {
        let im = (-disc).sqrt() / 2.0;
        (Complex64::new(d / 2.0, im), Complex64::new(d / 2.0, -im))
    }
}

/// Monodromy data at the base point `coeffs.a`.
pub fn monodromy(coeffs: &CoefficientSet, z: f64, opts: &OdeOptions) -> Result<FloquetData> {
    monodromy_at(coeffs, z, coeffs.a, opts)
}

pub fn monodromy_at(coeffs: &CoefficientSet, z: f64, x0: f64, opts: &OdeOptions) -> Result<FloquetData> {
    let f = Fundamental::new(coeffs, z, x0, opts)?;
    let m = f.monodromy();
    let d = m[0][0] + m[1][1];
    let (rp, rm) = multipliers(d);
    let (c, s) = (m[0][0], m[0][1]);
    let (mp, mm) = if s.abs() < BASEPOINT_TOL * f.ell {
        (None, None)
    } else {
        (Some(c2t((rp - c) / s)), Some(c2t((rm - c) / s)))
    };
    Ok(FloquetData {
        period: f.ell,
        z,
        base_point: x0,
        monodromy: m,
        discriminant: d,
        rho_plus: c2t(rp),
        rho_minus: c2t(rm),
        m_plus: mp,
        m_minus: mm,
    })
}

pub fn discriminant(coeffs: &CoefficientSet, z: f64, opts: &OdeOptions) -> Result<f64> {
    let m = Fundamental::new(coeffs, z, coeffs.a, opts)?.monodromy();
    Ok(m[0][0] + m[1][1])
}

/// `(z, D(z))` over the grid, evaluated in parallel.
pub fn discriminant_curve(coeffs: &CoefficientSet, z_grid: &[f64], opts: &OdeOptions) -> Result<Vec<(f64, f64)>> {
    z_grid
        .par_iter()
        .map(|&z| Ok((z, discriminant(coeffs, z, opts)?)))
        .collect()
}

/// `Ḋ(z)` by quadrature of the monodromy entries.
pub fn dot_d_via_lemma(coeffs: &CoefficientSet, z: f64, opts: &OdeOptions) -> Result<f64> {
    Ok(Fundamental::new(coeffs, z, coeffs.a, opts)?.dot_d())
}

/// Central difference of `D`, the independent oracle for [`dot_d_via_lemma`].
pub fn dot_d_finite_difference(coeffs: &CoefficientSet, z: f64, h: f64, opts: &OdeOptions) -> Result<f64> {
    Ok((discriminant(coeffs, z + h, opts)? - discriminant(coeffs, z - h, opts)?) / (2.0 * h))
}

/// `m± = (ρ± − c(z,ℓ))/s(z,ℓ)`.
pub fn weyl_m(coeffs: &CoefficientSet, z: f64, opts: &OdeOptions) -> Result<(Complex64, Complex64)> {
    let data = monodromy(coeffs, z, opts)?;
    match (data.m_plus, data.m_minus) {
        (Some(p), Some(m)) => Ok((Complex64::new(p.0, p.1), Complex64::new(m.0, m.1))),
        _ => Err(Error::DegenerateBasePoint(data.monodromy[0][1])),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EdgeKind {
    /// The band lies above the edge.
    Lower,
    /// The band lies below the edge.
    Upper,
}

#[derive(Debug, Clone, Serialize)]
pub struct BandEdge {
    pub index: usize,
    pub e: f64,
    pub kind: EdgeKind,
    /// `sgn D(E)`.
    pub sigma: f64,
    pub base_point: f64,
    pub s_ell: f64,
    pub dot_d: f64,
    /// `(1/ℓ)∫ u₀² r` with the normalized `u₀`; equals `|Ḋ(E)|/ℓ²`.
    pub c_q: f64,
    /// `−ℓ²/|D|'(E)`; absent for closed gaps.
    pub mu_c: Option<f64>,
    pub closed: bool,
    /// `r ≢ 1`: `μ_c` is outside the corollary's setting.
    pub weight_flag: bool,
}

fn bisect(f: &(dyn Fn(f64) -> Result<f64> + Sync), mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo)?;
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Picks a base point with `|s(E, ℓ)|` away from zero.
fn fundamental_at_edge(coeffs: &CoefficientSet, e: f64, opts: &OdeOptions) -> Result<(Fundamental, bool)> {
    let ell = period_of(coeffs)?;
    let mut last = 0.0;
    for shift in [0.0, 0.25, 0.5, 0.75] {
        let f = Fundamental::new(coeffs, e, coeffs.a + shift * ell, opts)?;
        let m = f.monodromy();
        last = m[0][1];
        if m[0][1].abs() >= BASEPOINT_TOL * ell {
            return Ok((f, false));
        }
        if m[1][0].abs() < BASEPOINT_TOL / ell {
            // M = ±I: both solutions are (anti)periodic, a closed gap
            return Ok((f, true));
        }
    }
    Err(Error::DegenerateBasePoint(last))
}

/// Locates the edges in `[z_lo, z_hi]` where `D = ±2` with a sign change, by scanning and bisection.
pub fn find_band_edges(coeffs: &CoefficientSet, z_lo: f64, z_hi: f64, root_tol: f64, opts: &OdeOptions) -> Result<Vec<BandEdge>> {
    let ell = period_of(coeffs)?;
    let n = SCAN_POINTS.max(((z_hi - z_lo) * 40.0) as usize);
    let grid = linspace(z_lo, z_hi, n);
    let curve = discriminant_curve(coeffs, &grid, opts)?;
    let mut roots = Vec::new();
    for w in curve.windows(2) {
        let ((z0, d0), (z1, d1)) = (w[0], w[1]);
        for target in [2.0, -2.0] {
            let (f0, f1) = (d0 - target, d1 - target);
            if f0 == 0.0 || (f0 > 0.0) != (f1 > 0.0) && f1 != 0.0 {
                let f = |z: f64| Ok(discriminant(coeffs, z, opts)? - target);
                let e = if f0 == 0.0 { z0 } else { bisect(&f, z0, z1, root_tol)? };
                let above = discriminant(coeffs, e + 0.25 * (z1 - z0), opts)?;
                let kind = if above.abs() < 2.0 { EdgeKind::Lower } else { EdgeKind::Upper };
                roots.push((e, kind));
            }
        }
    }
    if roots.is_empty() {
        return Err(Error::NoBracket);
    }
    roots.sort_by(|a, b| a.0.total_cmp(&b.0));
    roots.dedup_by(|a, b| (a.0 - b.0).abs() <= 10.0 * root_tol);
    let weight_flag = !coeffs.weight_is_one();
    roots
        .into_iter()
        .enumerate()
        .map(|(index, (e, kind))| {
            let (f, closed) = fundamental_at_edge(coeffs, e, opts)?;
            let m = f.monodromy();
            let d = m[0][0] + m[1][1];
            let sigma = d.signum();
            let dot_d = f.dot_d();
            let s_ell = m[0][1];
            let c_q = if closed { f64::NAN } else { edge_c_q(coeffs, &f, opts)? };
            let mu_c = (!closed).then(|| -ell * ell / (sigma * dot_d));
            Ok(BandEdge {
                index,
                e,
                kind,
                sigma,
                base_point: f.x0,
                s_ell,
                dot_d,
                c_q,
                mu_c,
                closed,
                weight_flag,
            })
        })
        .collect()
}

/// Normalized `u₀ = √(|s(E,ℓ)|/ℓ) (c + m s)` with `m = (σ − c(E,ℓ))/s(E,ℓ)`, and
/// `v₀ = √(ℓ/|s(E,ℓ)|) s`, on one period from the base point.
struct EdgeBasis {
    f: Fundamental,
    sigma: f64,
    s_ell: f64,
    m: f64,
    ku: f64,
    kv: f64,
}

impl EdgeBasis {
    fn new(f: Fundamental) -> Self {
        let mono = f.monodromy();
        let s_ell = mono[0][1];
        let sigma = (mono[0][0] + mono[1][1]).signum();
        let m = (sigma - mono[0][0]) / s_ell;
        let ku = (s_ell.abs() / f.ell).sqrt();
        Self {
            sigma,
            s_ell,
            m,
            ku,
            kv: 1.0 / ku,
            f,
        }
    }

    fn on_period(&self, t: f64) -> ([f64; 2], [f64; 2]) {
        let (c, s) = self.f.states(t);
        let u = [self.ku * (c[0] + self.m * s[0]), self.ku * (c[1] + self.m * s[1])];
        (u, [self.kv * s[0], self.kv * s[1]])
    }

    /// `u(x) = σ^k u(t)`, `s(x) = σ^k s(t) + k σ^(k−1) s_ℓ u(t)` for `x = t + kℓ`.
    fn at(&self, x: f64) -> ([f64; 2], [f64; 2]) {
        let (x0, ell) = (self.f.x0, self.f.ell);
        let k = ((x - x0) / ell).floor();
        let t = (x - k * ell).clamp(x0, x0 + ell);
        let sk = if self.sigma < 0.0 && (k as i64).rem_euclid(2) == 1 { -1.0 } else { 1.0 };
        let (u, v) = self.on_period(t);
        // √(ℓ/|s_ℓ|) s_ℓ u(t) = sgn(s_ℓ) ℓ u₀(t)
        let shift = k * sk * self.sigma * self.s_ell.signum() * ell;
        (
            [sk * u[0], sk * u[1]],
            [sk * v[0] + shift * u[0], sk * v[1] + shift * u[1]],
        )
    }
}

fn edge_c_q(coeffs: &CoefficientSet, f: &Fundamental, opts: &OdeOptions) -> Result<f64> {
    let b = EdgeBasis::new(f.clone());
    let int = ode::quad(
        opts,
        |x| {
            let u = b.on_period(x).0[0];
            u * u * coeffs.r.eval(x)
        },
        f.x0,
        f.x0 + f.ell,
    )?;
    Ok(int / f.ell)
}

/// Edge data of a band edge, extended quasi-periodically to the whole line.
pub struct EdgeConstruction {
    pub data: AdmissibleEdgeData,
    /// Largest `|s(E, x+ℓ) − σ s(E, x) − s(E,ℓ) u(E, x)|` over one period (direct integration).
    pub quasi_periodic_residual: f64,
    /// Largest `|u(E, x+ℓ) − σ u(E, x)|` over one period.
    pub periodic_residual: f64,
    pub c_q: f64,
    pub mu_c: Option<f64>,
}

/// `u₀ = √(|s_ℓ|/ℓ) u(E,·)`, `v₀ = √(ℓ/|s_ℓ|) s(E,·)`, `α ≡ 1`, `β = sgn(D(E) s_ℓ) x`.
pub fn edge_admissible_data(coeffs: &CoefficientSet, edge: &BandEdge, opts: &OdeOptions) -> Result<EdgeConstruction> {
    if edge.closed {
        return Err(Error::DegenerateBasePoint(edge.s_ell));
    }
    let f = Fundamental::new(coeffs, edge.e, edge.base_point, opts)?;
    let m = f.monodromy();
    let (ell, x0) = (f.ell, f.x0);
    let s_ell = m[0][1];
    if s_ell.abs() < BASEPOINT_TOL * ell {
        return Err(Error::DegenerateBasePoint(s_ell));
    }
    let sigma = (m[0][0] + m[1][1]).signum();
    let sign = (sigma * s_ell).signum();
    let basis = Arc::new(EdgeBasis::new(f.clone()));
    let bu = basis.clone();
    let u0 = FnSolution::new(move |x| bu.at(x).0, (f64::NEG_INFINITY, f64::INFINITY));
    let bv = basis.clone();
    let v0 = FnSolution::new(move |x| bv.at(x).1, (f64::NEG_INFINITY, f64::INFINITY));
    let u0: SharedSolution = Arc::new(u0);
    let v0: SharedSolution = Arc::new(v0);

    // direct integration over two periods as the oracle for the extension
    let (mut qp, mut pr) = (0.0f64, 0.0f64);
    let s_traj = crate::sl::integrate_sl(coeffs, edge.e, [0.0, 1.0], x0, x0 + 2.0 * ell, opts)?;
    let u_init = basis.on_period(x0).0;
    let u_traj = crate::sl::integrate_sl(coeffs, edge.e, u_init, x0, x0 + 2.0 * ell, opts)?;
    use crate::Solution;
    let norm = (s_ell.abs() / ell).sqrt();
    for t in linspace(x0, x0 + ell, 64) {
        let u_t = u_traj.u(t) / norm;
        qp = qp.max((s_traj.u(t + ell) - sigma * s_traj.u(t) - s_ell * u_t).abs());
        pr = pr.max((u_traj.u(t + ell) - sigma * u_traj.u(t)).abs());
    }

    let c_q = edge_c_q(coeffs, &f, opts)?;
    let dot_d = f.dot_d();
    let mu_c = Some(-ell * ell / (sigma * dot_d));
    let data = AdmissibleEdgeData::new(edge.e, coeffs.p.clone(), u0, v0, Arc::new(|_| 1.0), Beta::linear(sign));
    Ok(EdgeConstruction {
        data,
        quasi_periodic_residual: qp,
        periodic_residual: pr,
        c_q,
        mu_c,
    })
}
