//! Byte-stable CSV and JSON output: fixed column order, 17 significant digits, LF line ends.

use std::path::{Path, PathBuf};

use super::run::ExperimentReport;
use crate::averaging::BoundednessReport;
use crate::criteria::Verdict;
use crate::{Error, Result};

/// `v` with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn opt_i64(v: Option<i64>) -> String {
    v.map(|c| c.to_string()).unwrap_or_default()
}

fn opt_verdict(v: Option<Verdict>) -> String {
    v.map(|v| v.label().to_string()).unwrap_or_else(|| "error".into())
}

/// Writes a table with the given header.
pub fn csv_string<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r.into_iter().collect::<Vec<_>>()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

fn pairs_csv(header: [&str; 2], xs: &[(f64, f64)]) -> String {
    csv_string(&header, xs.iter().map(|&(x, y)| [fmt_f64(x), fmt_f64(y)]))
}

/// `criterion,n,ell,param,value,estimate,margin,verdict,direct_verdict,cross,notes`.
pub fn criteria_csv(report: &ExperimentReport) -> String {
    csv_string(
        &["criterion", "n", "ell", "param", "value", "estimate", "margin", "verdict", "direct_verdict", "cross", "notes"],
        report.rows.iter().map(|r| {
            let notes = match &r.error {
                Some(e) => e.clone(),
                None => r.notes.join("; "),
            };
            [
                r.criterion.clone(),
                r.n.to_string(),
                fmt_f64(r.ell),
                r.param.clone(),
                fmt_f64(r.value),
                fmt_f64(r.estimate),
                fmt_f64(r.margin),
                opt_verdict(r.verdict),
                r.direct_verdict.map(|v| v.label().to_string()).unwrap_or_default(),
                r.cross.label().to_string(),
                notes,
            ]
        }),
    )
}

/// `param,value,classifier,classifier_slope,direct,direct_slope,counts_agree`.
pub fn cross_csv(report: &ExperimentReport) -> String {
    csv_string(
        &["param", "value", "classifier", "classifier_slope", "direct", "direct_slope", "counts_agree"],
        report.cross.iter().map(|r| {
            [
                r.param.clone(),
                fmt_f64(r.value),
                opt_verdict(r.classifier),
                fmt_f64(r.classifier_slope),
                opt_verdict(r.direct),
                fmt_f64(r.direct_slope),
                r.counts_agree.to_string(),
            ]
        }),
    )
}

/// `value,d,count,count_psi,count_phi,wronskian_sign_changes,tie`.
pub fn counts_csv(report: &ExperimentReport) -> String {
    csv_string(
        &["value", "d", "count", "count_psi", "count_phi", "wronskian_sign_changes", "tie"],
        report.counts.iter().map(|c| {
            [
                fmt_f64(c.value),
                fmt_f64(c.d),
                c.count.to_string(),
                opt_i64(c.count_psi),
                opt_i64(c.count_phi),
                opt_i64(c.wronskian_sign_changes),
                c.tie.to_string(),
            ]
        }),
    )
}

/// `n,E_n,kind,sigma,s_ell,C_q,mu_c`.
pub fn bands_csv(report: &ExperimentReport) -> String {
    csv_string(
        &["n", "E_n", "kind", "sigma", "s_ell", "C_q", "mu_c"],
        report.bands.iter().map(|b| {
            [
                b.n.to_string(),
                fmt_f64(b.e),
                b.kind.clone(),
                fmt_f64(b.sigma),
                fmt_f64(b.s_ell),
                fmt_f64(b.c_q),
                opt_f64(b.mu_c),
            ]
        }),
    )
}

/// `z,D`.
pub fn discriminant_csv(curve: &[(f64, f64)]) -> String {
    pairs_csv(["z", "D"], curve)
}

/// Long format `series,x,y`.
pub fn plot_csv(report: &ExperimentReport) -> String {
    csv_string(
        &["series", "x", "y"],
        report.plot.iter().map(|p| [p.series.clone(), fmt_f64(p.x), fmt_f64(p.y)]),
    )
}

/// `d,count`.
pub fn count_sequence_csv(counts: &[(f64, i64)]) -> String {
    csv_string(&["d", "count"], counts.iter().map(|&(d, c)| [fmt_f64(d), c.to_string()]))
}

/// `x,angle`.
pub fn angle_track_csv(samples: &[(f64, f64)]) -> String {
    pairs_csv(["x", "angle"], samples)
}

/// `x,u,pu`.
pub fn trajectory_csv(samples: &[(f64, f64, f64)]) -> String {
    csv_string(&["x", "u", "pu"], samples.iter().map(|&(x, u, pu)| [fmt_f64(x), fmt_f64(u), fmt_f64(pu)]))
}

/// `A,B,fourAB,verdict,slope_measured,slope_predicted` for constant-coefficient grids.
pub fn boundedness_csv(rows: &[(f64, f64, BoundednessReport)]) -> String {
    csv_string(
        &["A", "B", "fourAB", "verdict", "slope_measured", "slope_predicted"],
        rows.iter().map(|(a, b, r)| {
            [
                fmt_f64(*a),
                fmt_f64(*b),
                fmt_f64(r.four_ab),
                r.class.label().to_string(),
                fmt_f64(r.slope_measured),
                opt_f64(r.slope_predicted),
            ]
        }),
    )
}

pub fn report_json(report: &ExperimentReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Criterion rows to `path`.
pub fn emit_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    write(path, &criteria_csv(report))
}

pub fn emit_plotdata(report: &ExperimentReport, path: &Path) -> Result<()> {
    write(path, &plot_csv(report))
}

/// Writes `<prefix>.criteria.csv`, `.cross.csv`, `.counts.csv`, `.plot.csv`, `.report.json`
/// and, when bands were computed, `.bands.csv` and `.discriminant.csv`.
pub fn write_outputs(report: &ExperimentReport, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<(&str, String)> = vec![
        ("criteria.csv", criteria_csv(report)),
        ("cross.csv", cross_csv(report)),
        ("counts.csv", counts_csv(report)),
        ("plot.csv", plot_csv(report)),
        ("report.json", report_json(report)),
    ];
    if !report.bands.is_empty() || !report.discriminant.is_empty() {
        files.push(("bands.csv", bands_csv(report)));
        files.push(("discriminant.csv", discriminant_csv(&report.discriminant)));
    }
    let mut written = Vec::with_capacity(files.len());
    for (suffix, body) in files {
        let path = dir.join(format!("{prefix}.{suffix}"));
        write(&path, &body)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
        assert_eq!(fmt_f64(f64::NAN), "nan");
        let back: f64 = fmt_f64(std::f64::consts::PI).parse().unwrap();
        assert_eq!(back, std::f64::consts::PI);
    }

    #[test]
    fn lf_and_quoting() {
        let s = csv_string(&["a", "b"], [["x,y".to_string(), "1".to_string()]]);
        assert_eq!(s, "a,b\n\"x,y\",1\n");
        assert!(!s.contains('\r'));
    }
}
