//! Report files. Everything except `timing.json` is a pure function of the
//! scenario and the code version.

use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use crate::checks::Check;
use crate::converge::ConvergenceReport;
use crate::runner::{ScenarioReport, TimingRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Failures first, otherwise report order.
pub fn ordered_checks<'a>(reports: impl IntoIterator<Item = &'a ScenarioReport>) -> Vec<&'a Check> {
    let mut all: Vec<&Check> = reports.into_iter().flat_map(|r| &r.checks).collect();
    all.sort_by_key(|c| c.pass);
    all
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> io::Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)
}

pub fn checks_csv(checks: &[&Check]) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scenario", "check", "anchor", "value", "tolerance", "comparison", "pass", "detail"])?;
    for c in checks {
        w.write_record([
            c.scenario.as_str(),
            c.id.as_str(),
            c.anchor.as_str(),
            &format!("{:e}", c.value),
            &format!("{:e}", c.tolerance),
            match c.comparison {
                crate::checks::Comparison::AtMost => "<=",
                crate::checks::Comparison::AtLeast => ">=",
            },
            if c.pass { "PASS" } else { "FAIL" },
            c.detail.as_str(),
        ])?;
    }
    w.into_inner().map_err(|e| e.into_error())
}

pub fn flux_csv(reports: &[ScenarioReport]) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scenario", "path", "kind", "cycle", "period", "oracle", "abs_diff"])?;
    for row in reports.iter().flat_map(|r| &r.flux) {
        w.write_record([
            row.scenario.clone(),
            row.path.clone(),
            row.kind.clone(),
            row.cycle.to_string(),
            format!("{:.17e}", row.period),
            format!("{:.17e}", row.oracle),
            format!("{:e}", row.delta),
        ])?;
    }
    w.into_inner().map_err(|e| e.into_error())
}

/// `report.json`, `checks.csv`, `flux.csv` and `timing.json` under `dir`.
pub fn emit(dir: &Path, reports: &[ScenarioReport], timing: &[TimingRow], formats: &[Format]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    if formats.contains(&Format::Json) {
        write_json(&dir.join("report.json"), reports)?;
        write_json(&dir.join("timing.json"), timing)?;
    }
    if formats.contains(&Format::Csv) {
        fs::write(dir.join("checks.csv"), checks_csv(&ordered_checks(reports))?)?;
        fs::write(dir.join("flux.csv"), flux_csv(reports)?)?;
    }
    Ok(())
}

pub fn emit_convergence(dir: &Path, report: &ConvergenceReport, timing: &[TimingRow]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("convergence.json"), report)?;
    write_json(&dir.join("timing.json"), timing)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scenario", "quantity", "level", "error"])?;
    for series in &report.series {
        for (level, err) in &series.points {
            w.write_record([
                report.scenario.clone(),
                series.quantity.clone(),
                level.to_string(),
                format!("{err:e}"),
            ])?;
        }
    }
    fs::write(dir.join("convergence.csv"), w.into_inner().map_err(|e| e.into_error())?)?;
    let checks: Vec<&Check> = {
        let mut c: Vec<&Check> = report.checks.iter().collect();
        c.sort_by_key(|c| c.pass);
        c
    };
    fs::write(dir.join("checks.csv"), checks_csv(&checks)?)
}
