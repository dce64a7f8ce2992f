//! Experiment configuration: JSON with coefficient expressions embedded as strings.
//!
//! ```json
//! {
//!   "name": "kneser",
//!   "interval": { "a": 1.0 },
//!   "background": { "q": "0" },
//!   "perturbation": { "q": "(div mu (pow x 2))" },
//!   "energy": 0.0,
//!   "sweep": { "name": "mu", "values": [-1.0, -0.2] },
//!   "edge": { "u0": "1", "v0": "x" },
//!   "criteria": [ { "name": "gu" }, { "name": "classify" } ]
//! }
//! ```
//!
//! Perturbation expressions may use `p0`, `q0`, `r0` for the background
//! coefficients and `mu_c` for the critical coupling of a band edge.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::expr::Expr;
use crate::logscale::threshold;
use crate::{Coefficient, CoefficientSet, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub interval: Interval,
    pub background: CoefficientsDesc,
    #[serde(default)]
    pub perturbation: Option<CoefficientsDesc>,
    #[serde(default)]
    pub energy: EnergySpec,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub basis: Option<String>,
    #[serde(default)]
    pub edge: Option<EdgeDesc>,
    #[serde(default)]
    pub criteria: Vec<CriterionSpec>,
    #[serde(default)]
    pub bands: Option<BandsSpec>,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub outputs: Outputs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub a: f64,
    /// `null` or missing means `+∞`.
    #[serde(default)]
    pub b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientDesc {
    Number(f64),
    Expr(String),
    Grid { x: Vec<f64>, y: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsDesc {
    #[serde(default)]
    pub p: Option<CoefficientDesc>,
    #[serde(default)]
    pub q: Option<CoefficientDesc>,
    #[serde(default)]
    pub r: Option<CoefficientDesc>,
    /// Period `ℓ` of the background, required for band edges.
    #[serde(default)]
    pub period: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnergySpec {
    Value(f64),
    #[serde(with = "band_edge")]
    BandEdge(usize),
}

impl Default for EnergySpec {
    fn default() -> Self {
        EnergySpec::Value(0.0)
    }
}

mod band_edge {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(n: &usize, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("band-edge:{n}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
        let s = String::deserialize(d)?;
        s.strip_prefix("band-edge:")
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| D::Error::custom(format!("energy `{s}` is neither a number nor band-edge:<n>")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub name: String,
    pub values: Vec<f64>,
}

/// Explicit admissible edge data: `u0`, `v0` solve the background equation
/// at the energy with `W(u0, v0) = 1`; `beta` defaults to `v0/u0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDesc {
    pub u0: String,
    pub v0: String,
    #[serde(default)]
    pub beta: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionName {
    Gu,
    GuAveraged,
    Main,
    Khwh,
    HilleWintner,
    Classify,
}

impl CriterionName {
    pub fn label(self) -> &'static str {
        match self {
            CriterionName::Gu => "gu",
            CriterionName::GuAveraged => "gu_averaged",
            CriterionName::Main => "main",
            CriterionName::Khwh => "khwh",
            CriterionName::HilleWintner => "hille_wintner",
            CriterionName::Classify => "classify",
        }
    }

    /// Criteria that need admissible edge data `(u0, v0, β)`.
    pub fn needs_edge(self) -> bool {
        matches!(self, CriterionName::Gu | CriterionName::GuAveraged | CriterionName::Main)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionSpec {
    pub name: CriterionName,
    #[serde(default)]
    pub n: u32,
    #[serde(default)]
    pub ell: Option<f64>,
    #[serde(default)]
    pub ell_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandsSpec {
    pub z_lo: f64,
    pub z_hi: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_root_tol")]
    pub root_tol: f64,
}

fn default_points() -> usize {
    200
}

fn default_root_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default)]
    pub x_max: Option<f64>,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default)]
    pub slope_tol: Option<f64>,
    #[serde(default)]
    pub k_windows: Option<usize>,
    /// Explicit window ends for the classifier.
    #[serde(default)]
    pub schedule: Option<Vec<f64>>,
    #[serde(default)]
    pub tail_points: Option<usize>,
}

fn default_rtol() -> f64 {
    1e-10
}

fn default_atol() -> f64 {
    1e-12
}

fn default_margin() -> f64 {
    crate::criteria::DEFAULT_MARGIN
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            x_max: None,
            rtol: default_rtol(),
            atol: default_atol(),
            margin: default_margin(),
            slope_tol: None,
            k_windows: None,
            schedule: None,
            tail_points: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    /// File name prefix; defaults to the experiment name.
    #[serde(default)]
    pub prefix: Option<String>,
    /// Output directory; the CLI flag and environment variable take precedence.
    #[serde(default)]
    pub dir: Option<String>,
}

/// Names the perturbation may use besides the parameters.
const BACKGROUND_SYMBOLS: [&str; 3] = ["p0", "q0", "r0"];
const EDGE_SYMBOL: &str = "mu_c";

impl ExperimentConfig {
    pub fn from_json(src: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(src).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&src)
    }

    /// Canonical JSON, the input of the provenance hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn b(&self) -> f64 {
        self.interval.b.unwrap_or(f64::INFINITY)
    }

    pub fn period(&self) -> Option<f64> {
        self.background.period
    }

    pub fn prefix(&self) -> &str {
        self.outputs.prefix.as_deref().unwrap_or(&self.name)
    }

    /// `10⁴ ℓ` for periodic backgrounds, `10⁶` otherwise, clipped to `b`.
    pub fn x_max(&self) -> f64 {
        let x = self.numerics.x_max.unwrap_or(match self.period() {
            Some(ell) => 1e4 * ell,
            None => 1e6,
        });
        x.min(self.b())
    }

    /// Sweep points `(name, value)`; a single unnamed point without a sweep.
    pub fn sweep_points(&self) -> Vec<Option<(String, f64)>> {
        match &self.sweep {
            Some(s) => s.values.iter().map(|&v| Some((s.name.clone(), v))).collect(),
            None => vec![None],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("invalid experiment name `{}`", self.name));
        }
        if let Some(p) = &self.outputs.prefix {
            if p.is_empty() || p.contains(['/', '\\']) {
                return bad(format!("invalid output prefix `{p}`"));
            }
        }
        let (a, b) = (self.interval.a, self.b());
        if !a.is_finite() || b.is_nan() || a >= b {
            return bad(format!("interval ({a}, {b}) is empty"));
        }
        if let Some(ell) = self.period() {
            if !(ell > 0.0 && ell.is_finite()) {
                return bad(format!("period {ell} must be positive"));
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() || s.values.iter().any(|v| !v.is_finite()) {
                return bad(format!("sweep over `{}` needs finite values", s.name));
            }
            if self.params.contains_key(&s.name) {
                return bad(format!("`{}` is both a parameter and the sweep variable", s.name));
            }
        }
        if self.params.values().any(|v| !v.is_finite()) {
            return bad("parameters must be finite".into());
        }
        let band_edge = matches!(self.energy, EnergySpec::BandEdge(_));
        if let EnergySpec::Value(e) = self.energy {
            if !e.is_finite() {
                return bad("energy must be finite".into());
            }
        }
        if band_edge && (self.period().is_none() || self.bands.is_none()) {
            return bad("band-edge energies need `background.period` and a `bands` range".into());
        }
        if let Some(bs) = &self.bands {
            if self.period().is_none() {
                return bad("`bands` needs `background.period`".into());
            }
            if !(bs.z_lo < bs.z_hi) || bs.points < 2 || !(bs.root_tol > 0.0) {
                return bad("bands: need z_lo < z_hi, points >= 2, root_tol > 0".into());
            }
        }
        let n = &self.numerics;
        if !(n.rtol > 0.0 && n.atol > 0.0 && n.margin >= 0.0) {
            return bad("numerics: rtol, atol must be positive and margin non-negative".into());
        }
        if let Some(s) = &n.schedule {
            if s.is_empty() || s.windows(2).any(|w| !(w[1] > w[0])) || !(s[0] > a) {
                return bad("numerics.schedule must be increasing and above a".into());
            }
        }
        // symbol binding is checked by building the sets; the background may not depend on the sweep
        self.background_set(&self.params)?;
        let mut probe = self.params.clone();
        if let Some(s) = &self.sweep {
            probe.insert(s.name.clone(), 0.0);
        }
        if self.perturbation.is_some() {
            if band_edge {
                probe.insert(EDGE_SYMBOL.into(), 1.0);
            }
            self.perturbed_set(&probe)?;
        } else if !self.criteria.is_empty() {
            return bad("criteria need a `perturbation`".into());
        }
        if let Some(e) = &self.edge {
            for src in [Some(&e.u0), Some(&e.v0), e.beta.as_ref()].into_iter().flatten() {
                Expr::parse(src)?.bind(&self.params)?;
            }
        }
        if let Some(basis) = &self.basis {
            self.basis_kind(basis)?;
        }
        let x_max = self.x_max();
        let mut scale: f64 = 0.0;
        for c in &self.criteria {
            if c.name.needs_edge() && self.edge.is_none() && !band_edge && !self.basis.as_deref().is_some_and(|b| b.starts_with("logscale:")) {
                return bad(format!("criterion `{}` needs `edge` data, a logscale basis or a band-edge energy", c.name.label()));
            }
            let ell = c.ell.or(self.period());
            if matches!(c.name, CriterionName::GuAveraged | CriterionName::Main) && ell.is_none() && c.ell_grid.is_empty() {
                return bad(format!("criterion `{}` needs `ell`", c.name.label()));
            }
            if let Some(l) = ell {
                if !(l > 0.0 && l.is_finite()) {
                    return bad(format!("criterion `{}`: ell must be positive", c.name.label()));
                }
                scale = scale.max(l);
            }
            if c.ell_grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
                return bad(format!("criterion `{}`: ell_grid must be positive", c.name.label()));
            }
            scale = c.ell_grid.iter().fold(scale, |m, l| m.max(*l));
            if c.n > 0 {
                scale = scale.max(threshold(c.n as i32));
            }
        }
        if !self.criteria.is_empty() && !(x_max > 10.0 * scale) {
            return bad(format!("x_max = {x_max} must exceed 10·max(ell, e_n) = {}", 10.0 * scale));
        }
        if !self.criteria.is_empty() && !(x_max > a + 1.0) {
            return bad(format!("x_max = {x_max} must exceed a + 1"));
        }
        Ok(())
    }

    pub(crate) fn basis_kind(&self, s: &str) -> Result<BasisKind> {
        Ok(match s {
            "auto" => BasisKind::Auto,
            "none" => BasisKind::None,
            "edge" => {
                if self.edge.is_none() && !matches!(self.energy, EnergySpec::BandEdge(_)) {
                    return Err(Error::Config("basis `edge` needs `edge` data or a band-edge energy".into()));
                }
                BasisKind::Edge
            }
            _ => match s.strip_prefix("logscale:").and_then(|n| n.parse::<u32>().ok()) {
                Some(n) => BasisKind::LogScale(n),
                None => return Err(Error::Config(format!("unknown basis `{s}`"))),
            },
        })
    }

    pub fn background_set(&self, params: &BTreeMap<String, f64>) -> Result<CoefficientSet> {
        let bg = &self.background;
        let p = build_coefficient(bg.p.as_ref(), 1.0, &BTreeMap::new(), params)?;
        let q = build_coefficient(bg.q.as_ref(), 0.0, &BTreeMap::new(), params)?;
        let r = build_coefficient(bg.r.as_ref(), 1.0, &BTreeMap::new(), params)?;
        let mut set = CoefficientSet::new(p, q, r, self.interval.a, self.b())?.with_label(format!("{}:background", self.name));
        if let Some(ell) = bg.period {
            set = set.with_period(ell);
        }
        Ok(set)
    }

    /// Perturbed set; `params` must bind the sweep variable and `mu_c` if used.
    pub fn perturbed_set(&self, params: &BTreeMap<String, f64>) -> Result<CoefficientSet> {
        let pt = self
            .perturbation
            .as_ref()
            .ok_or_else(|| Error::Config("no perturbation".into()))?;
        if pt.r.is_some() {
            return Err(Error::Config("the perturbation shares the background weight r".into()));
        }
        let bg = &self.background;
        let mut table = BTreeMap::new();
        for (sym, desc, default) in [("p0", &bg.p, 1.0), ("q0", &bg.q, 0.0), ("r0", &bg.r, 1.0)] {
            let e = match desc {
                None => Expr::num(default),
                Some(CoefficientDesc::Number(v)) => Expr::num(*v),
                Some(CoefficientDesc::Expr(s)) => Expr::parse(s)?,
                Some(CoefficientDesc::Grid { .. }) => Expr::Sym(format!("{sym}_grid")),
            };
            table.insert(sym.to_string(), e);
        }
        let p = build_coefficient(pt.p.as_ref().or(bg.p.as_ref()), 1.0, &table, params)?;
        let q = build_coefficient(pt.q.as_ref().or(bg.q.as_ref()), 0.0, &table, params)?;
        let r = build_coefficient(bg.r.as_ref(), 1.0, &BTreeMap::new(), params)?;
        CoefficientSet::new(p, q, r, self.interval.a, self.b()).map(|s| s.with_label(format!("{}:perturbed", self.name)))
    }

    /// Default `ℓ` for averaged criteria.
    pub fn default_ell(&self) -> f64 {
        self.period().unwrap_or(2.0 * PI)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BasisKind {
    Auto,
    None,
    Edge,
    LogScale(u32),
}

fn build_coefficient(
    desc: Option<&CoefficientDesc>,
    default: f64,
    table: &BTreeMap<String, Expr>,
    params: &BTreeMap<String, f64>,
) -> Result<Coefficient> {
    match desc {
        None => Ok(Coefficient::from(default)),
        Some(CoefficientDesc::Number(v)) => Ok(Coefficient::from(*v)),
        Some(CoefficientDesc::Grid { x, y }) => Coefficient::grid(x.clone(), y.clone()),
        Some(CoefficientDesc::Expr(s)) => {
            let e = Expr::parse(s)?;
            let e = if table.is_empty() { e } else { e.substitute(table) };
            if let Some(sym) = e.symbols().into_iter().find(|s| s.ends_with("_grid")) {
                return Err(Error::Config(format!(
                    "`{}` refers to a sampled background coefficient; write it out",
                    sym.trim_end_matches("_grid")
                )));
            }
            if let Some(sym) = e.symbols().into_iter().find(|s| BACKGROUND_SYMBOLS.contains(&s.as_str()) && table.is_empty()) {
                return Err(Error::Config(format!("background coefficients cannot refer to `{sym}`")));
            }
            Coefficient::expr(e.bind(params)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KNESER: &str = r#"{
        "name": "k",
        "interval": { "a": 1.0 },
        "background": { "q": "0" },
        "perturbation": { "q": "(div mu (pow x 2))" },
        "energy": 0.0,
        "sweep": { "name": "mu", "values": [-1.0, 0.0] },
        "edge": { "u0": "1", "v0": "x" },
        "criteria": [ { "name": "gu" } ]
    }"#;

    #[test]
    fn parses_and_builds() {
        let cfg = ExperimentConfig::from_json(KNESER).unwrap();
        assert_eq!(cfg.x_max(), 1e6);
        let mut p = BTreeMap::new();
        p.insert("mu".to_string(), -0.5);
        let c1 = cfg.perturbed_set(&p).unwrap();
        assert!((c1.q.eval(2.0) + 0.125).abs() < 1e-15);
    }

    #[test]
    fn energy_forms() {
        let e: EnergySpec = serde_json::from_str("\"band-edge:3\"").unwrap();
        assert_eq!(e, EnergySpec::BandEdge(3));
        let e: EnergySpec = serde_json::from_str("-0.5").unwrap();
        assert_eq!(e, EnergySpec::Value(-0.5));
        assert!(serde_json::from_str::<EnergySpec>("\"edge:3\"").is_err());
        assert_eq!(serde_json::to_string(&EnergySpec::BandEdge(2)).unwrap(), "\"band-edge:2\"");
    }

    #[test]
    fn rejects_unbound_and_unknown() {
        let src = KNESER.replace("(div mu (pow x 2))", "(div nu (pow x 2))");
        assert!(matches!(ExperimentConfig::from_json(&src), Err(Error::Unbound(_))));
        let src = KNESER.replace("\"gu\"", "\"nope\"");
        assert!(matches!(ExperimentConfig::from_json(&src), Err(Error::Config(_))));
        let src = KNESER.replace("-1.0, 0.0", "");
        assert!(ExperimentConfig::from_json(&src).is_err());
    }

    #[test]
    fn perturbation_sees_background() {
        let src = KNESER
            .replace("\"q\": \"0\"", "\"q\": \"(neg (div 0.25 (pow x 2)))\"")
            .replace("(div mu (pow x 2))", "(add q0 (div mu (pow x 2)))");
        let cfg = ExperimentConfig::from_json(&src).unwrap();
        let mut p = BTreeMap::new();
        p.insert("mu".to_string(), 1.0);
        let c1 = cfg.perturbed_set(&p).unwrap();
        assert!((c1.q.eval(2.0) - 0.1875).abs() < 1e-15);
    }
}
