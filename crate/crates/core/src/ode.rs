//! Adaptive Dormand–Prince 5(4) integrator with continuous (dense) output.
//!
//! Every numerical pipeline in the crate runs through [`integrate`]: the
//! Sturm–Liouville systems, the angle equations, and all quadratures (which
//! are integrated as extra state components so they share one error control).

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at x = {x} (h = {h:e})")]
    StepUnderflow { x: f64, h: f64 },
    #[error("maximum number of steps ({0}) exceeded")]
    MaxSteps(usize),
    #[error("non-finite state encountered at x = {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on |h|.
    pub h_max: f64,
    pub h_init: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h_max: f64::INFINITY,
            h_init: None,
            max_steps: 50_000_000,
        }
    }
}

impl OdeOptions {
    pub fn with_tol(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }
}

// Butcher tableau (Dormand & Prince 1980) and the continuous extension of
// Hairer, Nørsett & Wanner.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step together with its continuous extension.
pub struct Step<'a> {
    pub x0: f64,
    pub x1: f64,
    pub y0: &'a [f64],
    pub y1: &'a [f64],
    cont: &'a [f64],
}

impl Step<'_> {
    pub fn dim(&self) -> usize {
        self.y0.len()
    }

    pub fn eval(&self, x: f64, out: &mut [f64]) {
        eval_cont(self.cont, self.y0.len(), self.x0, self.x1 - self.x0, x, out);
    }

    pub fn eval_component(&self, i: usize, x: f64) -> f64 {
        eval_cont_component(self.cont, self.y0.len(), self.x0, self.x1 - self.x0, x, i)
    }
}

fn eval_cont(cont: &[f64], n: usize, x0: f64, h: f64, x: f64, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate().take(n) {
        *o = eval_cont_component(cont, n, x0, h, x, i);
    }
}

#[inline]
fn eval_cont_component(cont: &[f64], n: usize, x0: f64, h: f64, x: f64, i: usize) -> f64 {
    let s = if h == 0.0 { 0.0 } else { (x - x0) / h };
    let s1 = 1.0 - s;
    cont[i] + s * (cont[n + i] + s1 * (cont[2 * n + i] + s * (cont[3 * n + i] + s1 * cont[4 * n + i])))
}

pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub x: f64,
    pub y: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    /// True when the observer requested an early stop.
    pub stopped: bool,
}

fn error_norm(y0: &[f64], y1: &[f64], err: &[f64], opts: &OdeOptions) -> f64 {
    let n = y0.len();
    let mut acc = 0.0;
    for i in 0..n {
        let sc = opts.atol + opts.rtol * y0[i].abs().max(y1[i].abs());
        let e = err[i] / sc;
        acc += e * e;
    }
    (acc / n as f64).sqrt()
}

fn initial_step<F>(f: &mut F, x0: f64, y0: &[f64], k1: &[f64], dir: f64, opts: &OdeOptions) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..n {
        let sk = opts.atol + opts.rtol * y0[i].abs();
        dnf += (k1[i] / sk).powi(2);
        dny += (y0[i] / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(opts.h_max);
    let y1: Vec<f64> = (0..n).map(|i| y0[i] + dir * h * k1[i]).collect();
    let mut k2 = vec![0.0; n];
    f(x0 + dir * h, &y1, &mut k2);
    let mut der2 = 0.0;
    for i in 0..n {
        let sk = opts.atol + opts.rtol * y0[i].abs();
        der2 += ((k2[i] - k1[i]) / sk).powi(2);
    }
    let der2 = der2.sqrt() / h;
    let der12 = der2.max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    h = (100.0 * h).min(h1).min(opts.h_max);
    h
}

/// Integrates `y' = f(x, y)` from `x0` to `x1` (either direction), handing
/// every accepted step to `observer`.
pub fn integrate<F, O>(
    opts: &OdeOptions,
    mut f: F,
    x0: f64,
    y0: &[f64],
    x1: f64,
    mut observer: O,
) -> Result<Outcome, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(&Step) -> Control,
{
    let n = y0.len();
    let mut x = x0;
    let mut y = y0.to_vec();
    if x1 == x0 {
        return Ok(Outcome {
            x,
            y,
            accepted: 0,
            rejected: 0,
            stopped: false,
        });
    }
    let dir = (x1 - x0).signum();
    let span = (x1 - x0).abs();

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut cont = vec![0.0; 5 * n];

    f(x, &y, &mut k1);
    if k1.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite(x));
    }
    let mut h = match opts.h_init {
        Some(h) => h.abs(),
        None => initial_step(&mut f, x, &y, &k1, dir, opts),
    }
    .min(span)
    .min(opts.h_max);

    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;

    loop {
        if accepted + rejected >= opts.max_steps {
            return Err(OdeError::MaxSteps(opts.max_steps));
        }
        let remaining = (x1 - x).abs();
        let mut last = false;
        if h >= remaining * (1.0 - 1e-12) {
            h = remaining;
            last = true;
        }
        let min_h = 1e-14 * x.abs().max(1.0);
        if h < min_h && !last {
            return Err(OdeError::StepUnderflow { x, h });
        }
        let hs = dir * h;

        for i in 0..n {
            ytmp[i] = y[i] + hs * A21 * k1[i];
        }
        f(x + C2 * hs, &ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
        }
        f(x + C3 * hs, &ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(x + C4 * hs, &ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(x + C5 * hs, &ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] = y[i]
                + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let xph = if last { x1 } else { x + hs };
        f(xph, &ytmp, &mut k6);
        for i in 0..n {
            ynew[i] = y[i]
                + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(xph, &ynew, &mut k7);
        for i in 0..n {
            err[i] = hs
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let finite = ynew.iter().chain(k7.iter()).all(|v| v.is_finite());
        let e = if finite {
            error_norm(&y, &ynew, &err, opts)
        } else {
            f64::INFINITY
        };

        if e <= 1.0 {
            // Lund stabilisation (beta = 0.04) as in DOPRI5.
            let fac11 = e.max(1e-300).powf(0.2 - 0.04 * 0.75);
            let mut fac = fac11 / fac_old.powf(0.04);
            fac = (fac / 0.9).clamp(1.0 / 10.0, 5.0);
            let mut h_new = h / fac;
            fac_old = e.max(1e-4);
            if last_rejected {
                h_new = h_new.min(h);
            }

            for i in 0..n {
                let ydiff = ynew[i] - y[i];
                let bspl = hs * k1[i] - ydiff;
                cont[i] = y[i];
                cont[n + i] = ydiff;
                cont[2 * n + i] = bspl;
                cont[3 * n + i] = ydiff - hs * k7[i] - bspl;
                cont[4 * n + i] = hs
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            accepted += 1;
            let step = Step {
                x0: x,
                x1: xph,
                y0: &y,
                y1: &ynew,
                cont: &cont,
            };
            let control = observer(&step);
            x = xph;
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            if let Control::Stop = control {
                return Ok(Outcome {
                    x,
                    y,
                    accepted,
                    rejected,
                    stopped: true,
                });
            }
            if last {
                return Ok(Outcome {
                    x,
                    y,
                    accepted,
                    rejected,
                    stopped: false,
                });
            }
            h = h_new.min(opts.h_max);
            last_rejected = false;
        } else {
            rejected += 1;
            last_rejected = true;
            if !finite {
                h *= 0.1;
            } else {
                let fac11 = e.powf(0.2 - 0.04 * 0.75);
                h /= (fac11 / 0.9).min(10.0);
            }
            if h < 1e-14 * x.abs().max(1.0) {
                if !finite {
                    return Err(OdeError::NonFinite(x));
                }
                return Err(OdeError::StepUnderflow { x, h });
            }
        }
    }
}

/// Stored continuous solution over the whole integration range.
#[derive(Debug, Clone)]
pub struct DenseOutput {
    n: usize,
    /// Step boundaries in integration order (monotone, either direction).
    xs: Vec<f64>,
    conts: Vec<f64>,
    last: Vec<f64>,
}

impl DenseOutput {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn start(&self) -> f64 {
        self.xs[0]
    }

    pub fn end(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    /// `(min, max)` of the covered interval.
    pub fn range(&self) -> (f64, f64) {
        let (a, b) = (self.start(), self.end());
        (a.min(b), a.max(b))
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.xs
    }

    pub fn steps(&self) -> usize {
        self.xs.len() - 1
    }

    fn locate(&self, x: f64) -> usize {
        let steps = self.steps();
        if steps == 0 {
            return 0;
        }
        let forward = self.end() >= self.start();
        // index i such that x lies in [xs[i], xs[i+1]]
        let idx = if forward {
            self.xs.partition_point(|&t| t <= x)
        } else {
            self.xs.partition_point(|&t| t >= x)
        };
        idx.saturating_sub(1).min(steps - 1)
    }

    pub fn eval(&self, x: f64, out: &mut [f64]) {
        if self.steps() == 0 {
            out[..self.n].copy_from_slice(&self.last);
            return;
        }
        let i = self.locate(x);
        let h = self.xs[i + 1] - self.xs[i];
        let c = &self.conts[5 * self.n * i..5 * self.n * (i + 1)];
        eval_cont(c, self.n, self.xs[i], h, x, out);
    }

    pub fn eval_vec(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.eval(x, &mut out);
        out
    }

    pub fn component(&self, i: usize, x: f64) -> f64 {
        if self.steps() == 0 {
            return self.last[i];
        }
        let k = self.locate(x);
        let h = self.xs[k + 1] - self.xs[k];
        let c = &self.conts[5 * self.n * k..5 * self.n * (k + 1)];
        eval_cont_component(c, self.n, self.xs[k], h, x, i)
    }

    /// State at the step boundary with index `i`.
    pub fn node(&self, i: usize) -> Vec<f64> {
        if i == self.steps() {
            return self.last.clone();
        }
        let c = &self.conts[5 * self.n * i..5 * self.n * i + self.n];
        c.to_vec()
    }
}

pub fn integrate_dense<F>(
    opts: &OdeOptions,
    f: F,
    x0: f64,
    y0: &[f64],
    x1: f64,
) -> Result<DenseOutput, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    integrate_dense_checked(opts, f, x0, y0, x1, |_| true).map(|(d, _)| d)
}

/// Like [`integrate_dense`] but stops as soon as `accept` rejects a step's
/// endpoint state; the returned flag is false in that case.
pub fn integrate_dense_checked<F, C>(
    opts: &OdeOptions,
    f: F,
    x0: f64,
    y0: &[f64],
    x1: f64,
    mut accept: C,
) -> Result<(DenseOutput, bool), OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    C: FnMut(&Step) -> bool,
{
    let n = y0.len();
    let mut xs = vec![x0];
    let mut conts = Vec::new();
    let mut ok = true;
    let outcome = integrate(opts, f, x0, y0, x1, |step| {
        xs.push(step.x1);
        conts.extend_from_slice(step.cont);
        if accept(step) {
            Control::Continue
        } else {
            ok = false;
            Control::Stop
        }
    })?;
    Ok((
        DenseOutput {
            n,
            xs,
            conts,
            last: outcome.y,
        },
        ok,
    ))
}

/// `∫_a^b g(t) dt` through the integrator.
pub fn quad<G>(opts: &OdeOptions, g: G, a: f64, b: f64) -> Result<f64, OdeError>
where
    G: Fn(f64) -> f64,
{
    let out = integrate(
        opts,
        |x, _y, dy| dy[0] = g(x),
        a,
        &[0.0],
        b,
        |_| Control::Continue,
    )?;
    Ok(out.y[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_matches_closed_form() {
        let opts = OdeOptions::default();
        let d = integrate_dense(&opts, |_x, y, dy| {
            dy[0] = y[1];
            dy[1] = -y[0];
        }, 0.0, &[0.0, 1.0], 20.0)
        .unwrap();
        for k in 0..=200 {
            let x = 0.1 * k as f64;
            let y = d.eval_vec(x);
            assert!((y[0] - x.sin()).abs() < 1e-8, "x={x} {}", y[0] - x.sin());
            assert!((y[1] - x.cos()).abs() < 1e-8);
        }
    }

    #[test]
    fn backward_integration_and_dense_lookup() {
        let opts = OdeOptions::default();
        let d = integrate_dense(&opts, |_x, y, dy| dy[0] = y[0], 1.0, &[1.0], -2.0).unwrap();
        assert_eq!(d.range(), (-2.0, 1.0));
        for &x in &[1.0, 0.3, -0.7, -2.0] {
            let v = d.component(0, x);
            assert!((v - (x - 1.0f64).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn quadrature_of_polynomial() {
        let v = quad(&OdeOptions::default(), |t| t * t, 2.0, 3.0).unwrap();
        assert!((v - 19.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_length_interval_is_identity() {
        let out = integrate(&OdeOptions::default(), |_x, _y, dy| dy[0] = 1.0, 1.0, &[5.0], 1.0, |_| Control::Continue).unwrap();
        assert_eq!(out.y, vec![5.0]);
        assert_eq!(out.accepted, 0);
    }

    #[test]
    fn blow_up_reports_error() {
        // y' = y^2, y(0)=1 explodes at x = 1
        let r = integrate(&OdeOptions::default(), |_x, y, dy| dy[0] = y[0] * y[0], 0.0, &[1.0], 2.0, |_| Control::Continue);
        assert!(r.is_err());
    }
}
