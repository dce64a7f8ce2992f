//! Experiment driver.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{BasisKind, CriterionName, CriterionSpec, EnergySpec, ExperimentConfig};
use crate::coeffs::make_delta;
use crate::criteria::{self, AdmissibleEdgeData, CriterionOptions, CriterionVerdict, Verdict};
use crate::effective::{Beta, PhaseBasis};
use crate::expr::Expr;
use crate::floquet::{self, BandEdge, EdgeKind};
use crate::pruefer::{self, BasisChoice, ClassifyOptions, DirectReport, RelativeReport};
use crate::sl::ExprSolution;
use crate::stats::linspace;
use crate::{CoefficientSet, Error, OdeOptions, Result};

/// Which pipelines a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Band table, criteria, classifier and direct counts.
    Full,
    /// Band table and discriminant curve only.
    Bands,
    /// Classifier and direct counts only, whatever the criteria list says.
    Classify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CrossCheck {
    Agree,
    Disagree,
    /// Conclusive verdict without a conclusive direct count.
    NotCrossValidated,
    /// Inconclusive or failed row; nothing to compare.
    NotApplicable,
}

impl CrossCheck {
    pub fn label(self) -> &'static str {
        match self {
            CrossCheck::Agree => "agree",
            CrossCheck::Disagree => "disagree",
            CrossCheck::NotCrossValidated => "not-cross-validated",
            CrossCheck::NotApplicable => "n/a",
        }
    }

    fn of(verdict: Option<Verdict>, direct: Option<Verdict>) -> Self {
        match (verdict, direct) {
            (Some(v), _) if !v.is_conclusive() => CrossCheck::NotApplicable,
            (None, _) => CrossCheck::NotApplicable,
            (Some(v), Some(d)) if d.is_conclusive() => {
                if v == d {
                    CrossCheck::Agree
                } else {
                    CrossCheck::Disagree
                }
            }
            _ => CrossCheck::NotCrossValidated,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionRow {
    pub criterion: String,
    pub n: u32,
    /// 0 for pointwise criteria.
    pub ell: f64,
    pub param: String,
    pub value: f64,
    pub verdict: Option<Verdict>,
    pub estimate: f64,
    pub limsup: f64,
    pub liminf: f64,
    pub margin: f64,
    pub notes: Vec<String>,
    pub error: Option<String>,
    pub direct_verdict: Option<Verdict>,
    pub cross: CrossCheck,
    #[serde(skip)]
    pub evidence: Vec<(f64, f64)>,
}

/// Classifier against direct counting at one sweep point.
#[derive(Debug, Clone, Serialize)]
pub struct CrossRow {
    pub param: String,
    pub value: f64,
    pub classifier: Option<Verdict>,
    pub classifier_slope: f64,
    pub direct: Option<Verdict>,
    pub direct_slope: f64,
    /// ψ-, φ- and Δθ-based counts agree in every window.
    pub counts_agree: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CountRow {
    pub value: f64,
    pub d: f64,
    pub count: i64,
    pub count_psi: Option<i64>,
    pub count_phi: Option<i64>,
    pub wronskian_sign_changes: Option<i64>,
    pub tie: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BandRow {
    pub n: usize,
    pub e: f64,
    pub kind: String,
    pub sigma: f64,
    pub s_ell: f64,
    pub c_q: f64,
    pub mu_c: Option<f64>,
    pub closed: bool,
    pub weight_flag: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlotPoint {
    pub series: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub crate_version: String,
    /// No randomness is used; kept for the record format.
    pub seeds: Vec<u64>,
    pub energy: Option<f64>,
    pub x_max: f64,
    pub rtol: f64,
    pub atol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub rows: Vec<CriterionRow>,
    pub cross: Vec<CrossRow>,
    pub counts: Vec<CountRow>,
    pub bands: Vec<BandRow>,
    pub discriminant: Vec<(f64, f64)>,
    pub plot: Vec<PlotPoint>,
    pub errors: Vec<String>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success,
    Inconclusive,
    Error,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::Error => 1,
            ExitStatus::Inconclusive => 2,
        }
    }
}

impl ExperimentReport {
    /// Errors dominate; any inconclusive, disagreeing or unvalidated row gives `Inconclusive`.
    pub fn exit_status(&self) -> ExitStatus {
        let failed = !self.errors.is_empty()
            || self.rows.iter().any(|r| r.error.is_some())
            || self.cross.iter().any(|r| r.error.is_some());
        if failed {
            return ExitStatus::Error;
        }
        let open = self.rows.iter().any(|r| {
            !r.verdict.is_some_and(Verdict::is_conclusive) || matches!(r.cross, CrossCheck::Disagree | CrossCheck::NotCrossValidated)
        }) || self.cross.iter().any(|r| {
            !r.counts_agree || !r.classifier.is_some_and(Verdict::is_conclusive) || r.classifier != r.direct
        });
        if open {
            ExitStatus::Inconclusive
        } else {
            ExitStatus::Success
        }
    }
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let digest = Sha256::digest(cfg.canonical_json().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn ode_options(cfg: &ExperimentConfig) -> OdeOptions {
    OdeOptions {
        rtol: cfg.numerics.rtol,
        atol: cfg.numerics.atol,
        ..OdeOptions::default()
    }
}

fn band_row(e: &BandEdge) -> BandRow {
    BandRow {
        n: e.index,
        e: e.e,
        kind: match e.kind {
            EdgeKind::Lower => "lower".into(),
            EdgeKind::Upper => "upper".into(),
        },
        sigma: e.sigma,
        s_ell: e.s_ell,
        c_q: e.c_q,
        mu_c: e.mu_c,
        closed: e.closed,
        weight_flag: e.weight_flag,
    }
}

struct Setup {
    c0: CoefficientSet,
    energy: f64,
    mu_c: Option<f64>,
    edge: Option<AdmissibleEdgeData>,
    basis: BasisChoice,
}

fn explicit_edge(cfg: &ExperimentConfig, c0: &CoefficientSet, energy: f64) -> Result<Option<AdmissibleEdgeData>> {
    let Some(desc) = &cfg.edge else { return Ok(None) };
    let range = (c0.a, c0.b);
    let u0 = Arc::new(ExprSolution::new(Expr::parse(&desc.u0)?.bind(&cfg.params)?, c0.p.clone(), range));
    let v0 = Arc::new(ExprSolution::new(Expr::parse(&desc.v0)?.bind(&cfg.params)?, c0.p.clone(), range));
    let mut basis = PhaseBasis::new(u0, v0);
    if let Some(b) = &desc.beta {
        basis = basis.with_beta(Beta::from_expr(Expr::parse(b)?.bind(&cfg.params)?));
    }
    let probe = c0.a + 1.0;
    let w = basis.wronskian(probe);
    if (w - 1.0).abs() > 1e-8 {
        return Err(Error::BasisNotNormalized(w));
    }
    Ok(Some(AdmissibleEdgeData::from_basis(c0, energy, &basis, None)))
}

fn setup(cfg: &ExperimentConfig, edges: &[BandEdge], ode: &OdeOptions) -> Result<Setup> {
    let c0 = cfg.background_set(&cfg.params)?;
    let (energy, mu_c, mut edge) = match cfg.energy {
        EnergySpec::Value(e) => (e, None, explicit_edge(cfg, &c0, e)?),
        EnergySpec::BandEdge(n) => {
            let be = edges
                .iter()
                .find(|e| e.index == n)
                .ok_or_else(|| Error::Config(format!("band edge {n} not found in the bands range")))?;
            let ec = floquet::edge_admissible_data(&c0, be, ode)?;
            (be.e, ec.mu_c, Some(ec.data))
        }
    };
    let kind = cfg.basis.as_deref().map(|b| cfg.basis_kind(b)).transpose()?.unwrap_or(BasisKind::Auto);
    if let (BasisKind::LogScale(n), None) = (kind, &edge) {
        let basis = PhaseBasis::logscale(n, (c0.a, c0.b));
        edge = Some(AdmissibleEdgeData::from_basis(&c0, energy, &basis, None));
    }
    let basis = match kind {
        BasisKind::Auto => BasisChoice::Auto,
        BasisKind::None => BasisChoice::None,
        BasisKind::Edge => BasisChoice::Given(
            edge.as_ref()
                .ok_or_else(|| Error::Config("basis `edge` without edge data".into()))?
                .phase_basis(),
        ),
        BasisKind::LogScale(n) => BasisChoice::Given(PhaseBasis::logscale(n, (c0.a, c0.b))),
    };
    Ok(Setup {
        c0,
        energy,
        mu_c,
        edge,
        basis,
    })
}

struct PointResult {
    rows: Vec<CriterionRow>,
    cross: Option<CrossRow>,
    counts: Vec<CountRow>,
    plot: Vec<PlotPoint>,
}

fn classify_options(cfg: &ExperimentConfig, basis: BasisChoice, ode: &OdeOptions) -> ClassifyOptions {
    let mut o = ClassifyOptions {
        x_max: cfg.x_max(),
        schedule: cfg.numerics.schedule.clone(),
        basis,
        ode: ode.clone(),
        ..ClassifyOptions::default()
    };
    if let Some(t) = cfg.numerics.slope_tol {
        o.slope_tol = t;
    }
    if let Some(k) = cfg.numerics.k_windows {
        o.k_windows = k;
    }
    o
}

fn criterion_options(cfg: &ExperimentConfig, spec: &CriterionSpec, ode: &OdeOptions) -> CriterionOptions {
    let mut o = CriterionOptions {
        x_max: cfg.x_max(),
        margin: cfg.numerics.margin,
        ell_grid: spec.ell_grid.clone(),
        ode: ode.clone(),
        ..CriterionOptions::default()
    };
    if let Some(t) = cfg.numerics.tail_points {
        o.tail_points = t;
    }
    o
}

fn run_criterion(
    cfg: &ExperimentConfig,
    spec: &CriterionSpec,
    setup: &Setup,
    c1: &CoefficientSet,
    classified: Option<&RelativeReport>,
    ode: &OdeOptions,
) -> Result<(f64, CriterionVerdict)> {
    let opts = criterion_options(cfg, spec, ode);
    let ell = spec.ell.unwrap_or_else(|| cfg.default_ell());
    let need_edge = || {
        setup
            .edge
            .as_ref()
            .ok_or_else(|| Error::Config(format!("criterion `{}` has no edge data", spec.name.label())))
    };
    let delta = || make_delta(&setup.c0, c1);
    Ok(match spec.name {
        CriterionName::Gu => (0.0, criteria::criterion_gu_scale(need_edge()?, &delta()?, spec.n, &opts)?),
        CriterionName::GuAveraged => (ell, criteria::criterion_gu_averaged(need_edge()?, &delta()?, spec.n, ell, &opts)?),
        CriterionName::Main => (ell, criteria::criterion_main_scale(need_edge()?, &delta()?, spec.n, ell, &opts)?),
        CriterionName::Khwh => (0.0, criteria::criterion_khwh(spec.n, c1, &opts)?),
        CriterionName::HilleWintner => (0.0, criteria::criterion_hille_wintner(c1, &opts)?),
        CriterionName::Classify => match classified {
            Some(r) => (0.0, r.to_criterion()),
            None => return Err(Error::Config("classifier did not run".into())),
        },
    })
}

fn run_point(
    cfg: &ExperimentConfig,
    criteria_list: &[CriterionSpec],
    setup: &Setup,
    point: &Option<(String, f64)>,
    ode: &OdeOptions,
) -> PointResult {
    let (param, value) = point.clone().unwrap_or_else(|| (String::new(), 0.0));
    let mut params: BTreeMap<String, f64> = cfg.params.clone();
    if point.is_some() {
        params.insert(param.clone(), value);
    }
    if let Some(m) = setup.mu_c {
        params.insert("mu_c".into(), m);
    }
    let tag = if point.is_some() { format!("{param}={value}") } else { "base".into() };
    let mut out = PointResult {
        rows: Vec::new(),
        cross: None,
        counts: Vec::new(),
        plot: Vec::new(),
    };
    let c1 = cfg.perturbed_set(&params);
    let copts = classify_options(cfg, setup.basis.clone(), ode);
    let (classified, direct): (Result<RelativeReport>, Result<DirectReport>) = match &c1 {
        Ok(c1) => rayon::join(
            || pruefer::classify_relative_oscillation(&setup.c0, c1, setup.energy, &copts),
            || pruefer::direct_count(&setup.c0, c1, setup.energy, &copts),
        ),
        Err(e) => (Err(e.clone()), Err(e.clone())),
    };
    let direct_verdict = direct.as_ref().ok().map(|d| d.verdict);
    let error = match (&classified, &direct) {
        (Err(e), _) | (_, Err(e)) => Some(e.to_string()),
        _ => None,
    };
    if let Ok(r) = &classified {
        let wsc: BTreeMap<u64, i64> = direct
            .as_ref()
            .map(|d| d.windows.iter().map(|w| (w.d.to_bits(), w.wronskian_sign_changes)).collect())
            .unwrap_or_default();
        for w in &r.windows {
            out.counts.push(CountRow {
                value,
                d: w.d,
                count: w.count_delta,
                count_psi: w.count_psi,
                count_phi: w.count_phi,
                wronskian_sign_changes: wsc.get(&w.d.to_bits()).copied(),
                tie: w.tie,
            });
            out.plot.push(PlotPoint {
                series: format!("phase:{tag}"),
                x: w.scale,
                y: w.phase,
            });
        }
    }
    if let Ok(d) = &direct {
        for w in &d.windows {
            out.plot.push(PlotPoint {
                series: format!("direct:{tag}"),
                x: w.scale,
                y: w.phase,
            });
        }
    }
    out.cross = Some(CrossRow {
        param: param.clone(),
        value,
        classifier: classified.as_ref().ok().map(|r| r.verdict),
        classifier_slope: classified.as_ref().map_or(f64::NAN, |r| r.slope),
        direct: direct_verdict,
        direct_slope: direct.as_ref().map_or(f64::NAN, |d| d.slope),
        counts_agree: classified.as_ref().is_ok_and(|r| r.windows.iter().all(|w| w.counts_agree())),
        error,
    });

    for spec in criteria_list {
        let result = match &c1 {
            Ok(c1) => run_criterion(cfg, spec, setup, c1, classified.as_ref().ok(), ode),
            Err(e) => Err(e.clone()),
        };
        let row = match result {
            Ok((ell, v)) => {
                for &(x, y) in &v.evidence {
                    out.plot.push(PlotPoint {
                        series: format!("{}:{tag}", spec.name.label()),
                        x,
                        y,
                    });
                }
                CriterionRow {
                    criterion: spec.name.label().into(),
                    n: spec.n,
                    ell,
                    param: param.clone(),
                    value,
                    verdict: Some(v.verdict),
                    estimate: v.estimate,
                    limsup: v.limsup,
                    liminf: v.liminf,
                    margin: v.margin,
                    notes: v.notes,
                    error: None,
                    direct_verdict,
                    cross: CrossCheck::of(Some(v.verdict), direct_verdict),
                    evidence: v.evidence,
                }
            }
            Err(e) => CriterionRow {
                criterion: spec.name.label().into(),
                n: spec.n,
                ell: spec.ell.unwrap_or(0.0),
                param: param.clone(),
                value,
                verdict: None,
                estimate: f64::NAN,
                limsup: f64::NAN,
                liminf: f64::NAN,
                margin: cfg.numerics.margin,
                notes: Vec::new(),
                error: Some(e.to_string()),
                direct_verdict,
                cross: CrossCheck::NotApplicable,
                evidence: Vec::new(),
            },
        };
        out.rows.push(row);
    }
    out
}

/// Runs every configured pipeline. Per-row failures are recorded in the report;
/// only an invalid configuration is an error.
pub fn run_experiment(cfg: &ExperimentConfig, mode: RunMode) -> Result<ExperimentReport> {
    cfg.validate()?;
    let ode = ode_options(cfg);
    let mut report = ExperimentReport {
        name: cfg.name.clone(),
        rows: Vec::new(),
        cross: Vec::new(),
        counts: Vec::new(),
        bands: Vec::new(),
        discriminant: Vec::new(),
        plot: Vec::new(),
        errors: Vec::new(),
        provenance: Provenance {
            config_sha256: config_hash(cfg),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            seeds: Vec::new(),
            energy: None,
            x_max: cfg.x_max(),
            rtol: ode.rtol,
            atol: ode.atol,
        },
    };

    let mut edges = Vec::new();
    if let Some(bs) = &cfg.bands {
        let c0 = cfg.background_set(&cfg.params)?;
        let grid = linspace(bs.z_lo, bs.z_hi, bs.points);
        let (found, curve) = rayon::join(
            || floquet::find_band_edges(&c0, bs.z_lo, bs.z_hi, bs.root_tol, &ode),
            || floquet::discriminant_curve(&c0, &grid, &ode),
        );
        match found {
            Ok(e) => edges = e,
            Err(e) => report.errors.push(format!("bands: {e}")),
        }
        match curve {
            Ok(c) => report.discriminant = c,
            Err(e) => report.errors.push(format!("discriminant: {e}")),
        }
        report.bands = edges.iter().map(band_row).collect();
        report.plot.extend(report.discriminant.iter().map(|&(z, d)| PlotPoint {
            series: "discriminant".into(),
            x: z,
            y: d,
        }));
    }
    if mode == RunMode::Bands {
        return Ok(report);
    }

    let criteria_list: Vec<CriterionSpec> = match mode {
        RunMode::Classify => vec![CriterionSpec {
            name: CriterionName::Classify,
            n: 0,
            ell: None,
            ell_grid: Vec::new(),
        }],
        _ => cfg.criteria.clone(),
    };
    if criteria_list.is_empty() {
        return Ok(report);
    }
    let setup = match setup(cfg, &edges, &ode) {
        Ok(s) => s,
        Err(e) => {
            report.errors.push(format!("setup: {e}"));
            return Ok(report);
        }
    };
    report.provenance.energy = Some(setup.energy);

    let points = cfg.sweep_points();
    let results: Vec<PointResult> = points
        .par_iter()
        .map(|p| run_point(cfg, &criteria_list, &setup, p, &ode))
        .collect();
    for r in results {
        report.rows.extend(r.rows);
        report.cross.extend(r.cross);
        report.counts.extend(r.counts);
        report.plot.extend(r.plot);
    }
    Ok(report)
}
