//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//!
//! Reference values come from closed forms worked out here or from the
//! golden table below; tolerances are pinned as constants.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use relosc::averaging::{classify_bounded, AveragedOde, RealFn};
use relosc::criteria::{criterion_main, Verdict};
use relosc::effective::PhaseBasis;
use relosc::floquet::{self, edge_admissible_data, find_band_edges};
use relosc::harness::config::ExperimentConfig;
use relosc::harness::run::{CrossCheck, ExperimentReport};
use relosc::harness::shooting::{eigencount_shooting, eigencount_sign_flips, BoundaryCondition, DEFAULT_CAP};
use relosc::harness::{run_experiment, RunMode};
use relosc::pruefer::{classify_relative_oscillation, direct_count, flip_count, BasisChoice, ClassifyOptions, FlipCount};
use relosc::{Coefficient, CoefficientSet, OdeOptions};

const KNESER_ZERO_SLACK: i64 = 1;
const LEMMA_SLOPE_REL: f64 = 0.02;
const FLOQUET_D_TOL: f64 = 1e-8;
const FLOQUET_DOT_D_TOL: f64 = 1e-8;
const FLOQUET_DET_TOL: f64 = 1e-9;
const CQ_REL_TOL: f64 = 1e-5;
const MATHIEU_E0_TOL: f64 = 1e-9;
const THRESHOLD_REL: f64 = 0.05;

/// `mathieu_a(0, q = 2) / 4` for `−u'' + cos(x) u = E u`, computed with scipy.
const MATHIEU_E0: f64 = -0.37848922126413004;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn config(name: &str) -> ExperimentConfig {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", name].iter().collect();
    ExperimentConfig::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn schroedinger(q: impl Fn(f64) -> f64 + Send + Sync + 'static, a: f64) -> CoefficientSet {
    CoefficientSet::schroedinger(Coefficient::func(q), a, f64::INFINITY).unwrap()
}

fn kneser() -> Outcome {
    let c0 = schroedinger(|_| 0.0, 1.0);
    let opts = ClassifyOptions {
        x_max: 1e6,
        ..ClassifyOptions::default()
    };
    let mut bad = Vec::new();
    let cases = [(-1.0, Verdict::Oscillatory), (-0.5, Verdict::Oscillatory), (-0.3, Verdict::Oscillatory), (-0.2, Verdict::Nonoscillatory), (0.0, Verdict::Nonoscillatory), (1.0, Verdict::Nonoscillatory)];
    let mut zero_detail = String::new();
    for (mu, want) in cases {
        let c1 = schroedinger(move |x| mu / (x * x), 1.0);
        let r = classify_relative_oscillation(&c0, &c1, 0.0, &opts).unwrap();
        let d = direct_count(&c0, &c1, 0.0, &opts).unwrap();
        if r.verdict != want || d.verdict != want {
            bad.push(format!("mu={mu}: classifier {} direct {}", r.verdict, d.verdict));
        }
        if mu == -1.0 {
            // u1(1) = 1, u1'(1) = 0 gives u1 = √x·R cos(k log x + π/6), k = √3/2, so the
            // zeros in (1, X] number ⌊k log X/π − 1/3⌋ + 1
            let last = d.windows.last().unwrap();
            let k = 3f64.sqrt() / 2.0;
            let want = (k * last.d.ln() / PI - 1.0 / 3.0).floor() as i64 + 1;
            zero_detail = format!("zeros of u1 on (1, {:.0e}]: {} vs closed form {want}", last.d, last.zeros_u1);
            if (last.zeros_u1 - want).abs() > KNESER_ZERO_SLACK {
                bad.push(zero_detail.clone());
            }
        }
    }
    outcome(bad.is_empty(), if bad.is_empty() { zero_detail } else { bad.join("; ") })
}

fn whh() -> Outcome {
    let e = std::f64::consts::E;
    let q0 = |x: f64| -0.25 / (x * x);
    let c0 = schroedinger(q0, e);
    let opts = ClassifyOptions {
        x_max: 1e6,
        basis: BasisChoice::Given(PhaseBasis::logscale(1, (e, f64::INFINITY))),
        ..ClassifyOptions::default()
    };
    let mut bad = Vec::new();
    let mut slopes = Vec::new();
    for (mu, want) in [(-0.5, Verdict::Oscillatory), (0.0, Verdict::Nonoscillatory)] {
        let c1 = schroedinger(move |x| q0(x) + mu / (x * x.ln()).powi(2), e);
        let r = classify_relative_oscillation(&c0, &c1, 0.0, &opts).unwrap();
        let d = direct_count(&c0, &c1, 0.0, &opts).unwrap();
        slopes.push(format!("mu={mu}: slope {:.4}/{:.4}", r.slope, d.slope));
        if r.verdict != want || d.verdict != want {
            bad.push(format!("mu={mu}: classifier {} direct {}", r.verdict, d.verdict));
        }
    }
    outcome(bad.is_empty(), if bad.is_empty() { slopes.join(", ") } else { bad.join("; ") })
}

fn slope_law() -> Outcome {
    let o = OdeOptions::default();
    let rho: RealFn = Arc::new(|_| 1.0);
    let mut bad = Vec::new();
    let mut worst: f64 = 0.0;
    for four_ab in [0.5, 0.9, 1.1, 2.0, 4.0] {
        for a in [1.0, 2.0, -1.0] {
            let b = four_ab / (4.0 * a);
            let ode = AveragedOde::constant(a, b, rho.clone(), (0.0, 2000.0));
            let r = classify_bounded(&ode, &o).unwrap();
            if r.empirically_bounded != (four_ab < 1.0) {
                bad.push(format!("A={a} B={b}: bounded={}", r.empirically_bounded));
            }
            if four_ab >= 1.2 {
                let want = 0.5 * a.signum() * (four_ab - 1.0f64).sqrt();
                let rel = (r.slope_measured - want).abs() / want.abs();
                worst = worst.max(rel);
                if rel > LEMMA_SLOPE_REL {
                    bad.push(format!("A={a} B={b}: slope {} vs {want}", r.slope_measured));
                }
            }
        }
    }
    outcome(bad.is_empty(), if bad.is_empty() { format!("worst slope error {:.2e}", worst) } else { bad.join("; ") })
}

fn free_floquet() -> Outcome {
    let o = OdeOptions {
        rtol: 1e-12,
        atol: 1e-14,
        ..OdeOptions::default()
    };
    let mut err_d: f64 = 0.0;
    let mut err_det: f64 = 0.0;
    let mut err_dot: f64 = 0.0;
    for ell in [1.0, 2.0] {
        let c = CoefficientSet::schroedinger(Coefficient::from(0.0), 0.0, f64::INFINITY).unwrap().with_period(ell);
        for i in 0..=48 {
            let z = -2.0 + 0.25 * i as f64;
            let want = if z >= 0.0 { 2.0 * (z.sqrt() * ell).cos() } else { 2.0 * ((-z).sqrt() * ell).cosh() };
            let f = floquet::monodromy(&c, z, &o).unwrap();
            let m = f.monodromy;
            err_d = err_d.max((f.discriminant - want).abs());
            err_det = err_det.max((m[0][0] * m[1][1] - m[0][1] * m[1][0] - 1.0).abs());
        }
        let dd = floquet::dot_d_via_lemma(&c, 0.0, &o).unwrap();
        err_dot = err_dot.max((dd + ell * ell).abs());
    }
    let pass = err_d <= FLOQUET_D_TOL && err_dot <= FLOQUET_DOT_D_TOL && err_det <= FLOQUET_DET_TOL;
    outcome(pass, format!("|D - 2cos| {err_d:.1e}, |Ddot(0) + l^2| {err_dot:.1e}, |det M - 1| {err_det:.1e}"))
}

fn mathieu_background() -> CoefficientSet {
    CoefficientSet::schroedinger(Coefficient::parse("(cos x)").unwrap(), 0.0, f64::INFINITY)
        .unwrap()
        .with_period(2.0 * PI)
}

fn mathieu_cq() -> Outcome {
    let o = OdeOptions::default();
    let c = mathieu_background();
    let edges = find_band_edges(&c, -1.0, 0.0, 1e-13, &o).unwrap();
    let e0 = &edges[0];
    let ec = edge_admissible_data(&c, e0, &o).unwrap();
    let ell = 2.0 * PI;
    let bridge = e0.dot_d.abs() / (ell * ell);
    let rel = (ec.c_q - bridge).abs() / bridge;
    let pass = (e0.e - MATHIEU_E0).abs() <= MATHIEU_E0_TOL && rel <= CQ_REL_TOL;
    outcome(
        pass,
        format!("E0 = {:.14} (golden {MATHIEU_E0}), mean u0^2 = {:.10}, |Ddot|/l^2 = {:.10}, rel {rel:.1e}", e0.e, ec.c_q, bridge),
    )
}

fn rows_for<'a>(report: &'a ExperimentReport, criterion: &str) -> Vec<&'a relosc::harness::run::CriterionRow> {
    report.rows.iter().filter(|r| r.criterion == criterion).collect()
}

fn periodic_threshold() -> Outcome {
    let cfg = config("mathieu.cfg");
    let report = run_experiment(&cfg, RunMode::Full).unwrap();
    let mut bad = Vec::new();
    let mut est = Vec::new();
    let main = rows_for(&report, "main");
    for r in &main {
        let want = if r.value < 0.0 { Verdict::Oscillatory } else { Verdict::Nonoscillatory };
        est.push(format!("mu={}: {:.5}", r.value, r.estimate));
        if (r.estimate - r.value).abs() > THRESHOLD_REL * r.value.abs() || r.verdict != Some(want) || r.cross != CrossCheck::Agree {
            bad.push(format!("mu={}: {:?} est {} cross {}", r.value, r.verdict, r.estimate, r.cross.label()));
        }
    }
    if main.len() != 2 || main[0].verdict == main[1].verdict {
        bad.push("expected two opposite verdicts".into());
    }
    // the bundled run uses the golden E0 through the band search; check directly too
    let o = OdeOptions::default();
    let c = mathieu_background();
    let edges = find_band_edges(&c, -1.0, 0.0, 1e-13, &o).unwrap();
    let ec = edge_admissible_data(&c, &edges[0], &o).unwrap();
    let mu_c = ec.mu_c.unwrap();
    let c0 = c.restricted(2.0 * PI, f64::INFINITY).unwrap();
    let c1 = schroedinger(move |x| x.cos() + mu_c * 0.5 / (x * x), 2.0 * PI);
    let delta = relosc::coeffs::make_delta(&c0, &c1).unwrap();
    let opts = relosc::criteria::CriterionOptions {
        x_max: 1e4 * 2.0 * PI,
        ..Default::default()
    };
    let v = criterion_main(&ec.data, &delta, 2.0 * PI, &opts).unwrap();
    if (v.estimate - 0.5).abs() > THRESHOLD_REL * 0.5 {
        bad.push(format!("direct criterion_main estimate {}", v.estimate));
    }
    outcome(bad.is_empty(), if bad.is_empty() { est.join(", ") } else { bad.join("; ") })
}

fn averaged() -> Outcome {
    let cfg = config("averaged.cfg");
    let report = run_experiment(&cfg, RunMode::Full).unwrap();
    let mut bad = Vec::new();
    for r in rows_for(&report, "gu") {
        if r.verdict != Some(Verdict::Inconclusive) {
            bad.push(format!("pointwise mu={}: {:?}", r.value, r.verdict));
        }
    }
    let av = rows_for(&report, "gu_averaged");
    for m in [-0.5, 0.1] {
        let Some(r) = av.iter().find(|r| r.value == m) else {
            bad.push(format!("no averaged row at mu={m}"));
            continue;
        };
        let want = if m + 0.25 < 0.0 { Verdict::Oscillatory } else { Verdict::Nonoscillatory };
        if r.verdict != Some(want) || r.cross != CrossCheck::Agree {
            bad.push(format!("averaged mu={m}: {:?} cross {}", r.verdict, r.cross.label()));
        }
    }
    outcome(bad.is_empty(), if bad.is_empty() { format!("{} averaged rows agree with direct counts", av.len()) } else { bad.join("; ") })
}

/// Sign flips of `W(sin x, sin(√2 x)/√2)` on `(c, d)` counted on a fine grid
/// against the angle formula with closed-form Prüfer angles.
fn flip_identity() -> Result<usize, String> {
    let s2 = 2f64.sqrt();
    // θ of (sin kx, k cos kx), continuous: the branch follows kx
    let theta = |k: f64, x: f64| {
        let t = (k * x).sin().atan2(k * (k * x).cos());
        let turns = ((k * x - t) / PI).round();
        t + turns * PI
    };
    let w = |x: f64| x.sin() * (s2 * x).cos() - x.cos() * (s2 * x).sin() / s2;
    let mut checked = 0;
    for (c, d) in [(0.3, 10.0), (0.3, 40.0), (5.0, 25.0), (1.0, 100.0), (17.0, 18.0)] {
        let n = 200_000;
        let mut last = w(c);
        let mut flips = 0i64;
        for i in 1..=n {
            let x = c + (d - c) * i as f64 / n as f64;
            let v = w(x);
            if v != 0.0 && last != 0.0 && (v > 0.0) != (last > 0.0) {
                flips += 1;
            }
            if v != 0.0 {
                last = v;
            }
        }
        let dc = theta(s2, c) - theta(1.0, c);
        let dd = theta(s2, d) - theta(1.0, d);
        let f = FlipCount::new(c, d, dc, dd);
        if f.count != flips || flip_count(dc, dd) != flips || !(0.0..PI).contains(&f.delta_at_c) {
            return Err(format!("({c}, {d}): formula {} vs grid {flips}", f.count));
        }
        checked += 1;
    }
    Ok(checked)
}

fn consistency() -> Outcome {
    let mut bad = Vec::new();
    let mut instances = 0;
    for name in ["kneser.cfg", "whh.cfg", "free_floquet.cfg", "averaged.cfg", "mathieu.cfg"] {
        let report = run_experiment(&config(name), RunMode::Classify).unwrap();
        for c in &report.cross {
            instances += 1;
            if !c.counts_agree || c.error.is_some() {
                bad.push(format!("{name} {}={}: counts disagree", c.param, c.value));
            }
        }
    }
    match flip_identity() {
        Ok(_) => {}
        Err(e) => bad.push(e),
    }
    let o = OdeOptions::default();
    let dd = (BoundaryCondition::Dirichlet, BoundaryCondition::Dirichlet);
    let free = CoefficientSet::schroedinger(Coefficient::from(0.0), 0.0, 10.0).unwrap();
    let linear = CoefficientSet::schroedinger(Coefficient::parse("x").unwrap(), 0.0, 10.0).unwrap();
    let mathieu = mathieu_background();
    // (coefficients, interval, window, closed-form count if known)
    let shots: [(&CoefficientSet, (f64, f64), (f64, f64), Option<i64>); 4] = [
        (&free, (0.0, PI), (0.5, 4.5), Some(2)),
        (&free, (0.0, 1.0), (0.0, 50.0), Some(2)),
        (&linear, (0.0, 3.0), (0.0, 40.0), None),
        (&mathieu, (0.0, 2.0 * PI), (-1.0, 5.0), None),
    ];
    let mut counts = Vec::new();
    for (c, iv, win, want) in shots {
        let s = eigencount_shooting(c, iv, win, dd, DEFAULT_CAP, &o).unwrap();
        let f = eigencount_sign_flips(c, iv, win, dd, &o).unwrap();
        counts.push(s);
        if s != f || want.is_some_and(|w| w != s) {
            bad.push(format!("shooting {s} vs sign flips {f} (closed form {want:?}) on {iv:?} {win:?}"));
        }
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() { format!("{instances} bundled instances, shooting counts {counts:?}") } else { bad.join("; ") },
    )
}

fn main() {
    let suite: [(&str, fn() -> Outcome); 8] = [
        ("1 Kneser threshold", kneser),
        ("2 log scale n=1", whh),
        ("3 trichotomy and slope law", slope_law),
        ("4 free Floquet goldens", free_floquet),
        ("5 C_q bridge at Mathieu E0", mathieu_cq),
        ("6 periodic threshold at Mathieu E0", periodic_threshold),
        ("7 averaged criterion", averaged),
        ("8 consistency suite", consistency),
    ];
    let mut failed = 0;
    for (name, f) in suite {
        let t = Instant::now();
        let r = std::panic::catch_unwind(f).unwrap_or_else(|_| outcome(false, "panicked"));
        let took: Duration = t.elapsed();
        println!("{} [{name}] {} ({:.1}s)", if r.pass { "PASS" } else { "FAIL" }, r.detail, took.as_secs_f64());
        failed += usize::from(!r.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
