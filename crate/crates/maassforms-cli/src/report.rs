//! Emission of check reports (JSON) and the human-readable discriminant
//! tables.

use maassforms::bigarith::make_context;
use maassforms::error::{Error, Result};
use maassforms::harness::{nearest_integer, CheckReport, LValueRecord};
use maassforms::maassform::{delta_to_index, CoefficientTable};
use maassforms::solver::ErrorReport;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::Path;

pub fn check_report_json(r: &CheckReport) -> Value {
    json!({
        "name": r.name,
        "passed": r.passed,
        "threshold": r.threshold,
        "items": r.items.iter().map(|i| json!({
            "label": i.label,
            "measured": i.measured,
            "pass": i.pass,
        })).collect::<Vec<_>>(),
    })
}

pub fn error_report_json(r: &ErrorReport) -> Value {
    json!({
        "residual_bound": format!("{:.6e}", r.residual_bound.to_f64()),
        "inv_norm": format!("{:.6e}", r.inv_norm.to_f64()),
        "coeff_bound": format!("{:.6e}", r.coeff_bound.to_f64()),
        "pivot_growth": if r.pivot_growth.is_finite() {
            Value::from(r.pivot_growth)
        } else {
            Value::Null
        },
        "empirical_y_discrepancy": r.empirical_y_discrepancy.as_ref()
            .map(|d| format!("{:.6e}", d.to_f64())),
    })
}

/// Reconstructs the certified-bound report from persisted table metadata, so
/// `check` runs can print the certified bound next to measured discrepancies.
pub fn meta_error_report(table: &CoefficientTable) -> Option<ErrorReport> {
    let meta = table.meta();
    Some(ErrorReport {
        residual_bound: meta.residual_bound.clone()?,
        inv_norm: meta.inv_norm.clone()?,
        coeff_bound: meta.coeff_bound.clone()?,
        pivot_growth: f64::NAN,
        empirical_y_discrepancy: None,
    })
}

pub fn write_report(
    path: &Path,
    error_report: Option<&ErrorReport>,
    checks: &[CheckReport],
) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .map_err(|e| Error::invalid(format!("cannot create {}: {e}", dir.display())))?;
        }
    }
    let doc = json!({
        "error_report": error_report.map(error_report_json),
        "checks": checks.iter().map(check_report_json).collect::<Vec<_>>(),
        "all_passed": checks.iter().all(|c| c.passed),
    });
    std::fs::write(path, serde_json::to_string_pretty(&doc).unwrap())
        .map_err(|e| Error::invalid(format!("cannot write {}: {e}", path.display())))
}

/// The discriminant table in the familiar layout, sorted by Delta: label,
/// holomorphic coefficient, optional imported L'-value, nearest-integer
/// distance.  Only canonically labeled entries (smallest residue) appear, so
/// each Delta prints once.
pub fn render_delta_table(
    table: &CoefficientTable,
    lvalues: Option<&[LValueRecord]>,
    digits_shown: usize,
) -> Result<String> {
    let ctx = make_context(table.meta().precision_digits)?;
    let lmap: BTreeMap<i64, &LValueRecord> = lvalues
        .map(|rs| rs.iter().map(|r| (r.delta, r)).collect())
        .unwrap_or_default();

    let mut rows: Vec<(i64, String, String, String)> = Vec::new();
    for (&(n, h), e) in table.entries() {
        if n <= 0 {
            continue; // the c^+ table lists holomorphic coefficients only
        }
        let delta = maassforms::maassform::index_to_delta(table.params(), n);
        match delta_to_index(table.params(), delta) {
            Ok((cn, ch)) if (cn, ch) == (n, h) => {}
            _ => continue, // non-canonical residue; same Delta appears once
        }
        let (_, dist) = nearest_integer(e.value.real(), &ctx);
        let value = format!("{:+.*e}", digits_shown, e.value.real());
        let lv = lmap
            .get(&delta)
            .map(|r| r.value.clone())
            .unwrap_or_else(|| "-".to_string());
        rows.push((delta, value, lv, format!("{:.1e}", dist.to_f64())));
    }
    rows.sort_by_key(|r| r.0);

    let mut out = String::new();
    out.push_str(&format!(
        "{:>8}  {:<28}  {:<22}  {}\n",
        "Delta", "c+(Delta)", "L'", "dist-to-int"
    ));
    for (delta, value, lv, dist) in rows {
        out.push_str(&format!("{delta:>8}  {value:<28}  {lv:<22}  {dist}\n"));
    }
    Ok(out)
}
