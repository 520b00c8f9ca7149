//! Report serialization: full JSON, the flat CSV table and the stdout verdict table.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::verify::{ExperimentConfig, ExperimentReport};

/// Everything written to `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub variety: String,
    pub config: ExperimentConfig,
    pub experiments: Vec<ExperimentReport>,
    pub verdict: bool,
}

impl RunReport {
    pub fn new(variety: &str, config: ExperimentConfig, experiments: Vec<ExperimentReport>) -> Self {
        let verdict = experiments.iter().all(|e| e.verdict);
        Self { variety: variety.into(), config, experiments, verdict }
    }
}

pub const CSV_COLUMNS: [&str; 8] = ["experiment", "variety", "param", "predicted", "fitted", "ci_lo", "ci_hi", "verdict"];

fn row_verdict(pass: bool, gated: bool) -> &'static str {
    match (gated, pass) {
        (true, true) => "pass",
        (true, false) => "fail",
        (false, _) => "info",
    }
}

pub fn to_json(report: &RunReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn to_csv(report: &RunReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for e in &report.experiments {
        for r in &e.rows {
            let predicted = r.predicted.map(|p| p.to_string()).unwrap_or_default();
            w.write_record([
                e.name.as_str(),
                e.variety.as_str(),
                r.param.as_str(),
                predicted.as_str(),
                &r.fitted.to_string(),
                &r.ci_lo.to_string(),
                &r.ci_hi.to_string(),
                row_verdict(r.pass, r.gated),
            ])
            .map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Writes `report.json` and `tables.csv` into `dir`, creating it if needed.
pub fn write_reports(report: &RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), to_json(report)?)?;
    std::fs::write(dir.join("tables.csv"), to_csv(report)?)?;
    Ok(())
}

/// One line per experiment and one per failed gated row.
pub fn verdict_table(report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<20} {:<12} {:>7} {:>9}  verdict", "experiment", "variety", "checks", "time[s]");
    for e in &report.experiments {
        let gated = e.gated_rows().count();
        let passed = e.gated_rows().filter(|r| r.pass).count();
        let _ = writeln!(
            s,
            "{:<20} {:<12} {:>3}/{:<3} {:>9.1}  {}",
            e.name,
            e.variety,
            passed,
            gated,
            e.runtime_s,
            if e.verdict { "PASS" } else { "FAIL" }
        );
        for r in e.gated_rows().filter(|r| !r.pass) {
            let _ = writeln!(s, "    failed: {} = {:.6} ({})", r.param, r.fitted, r.criterion);
        }
    }
    let _ = writeln!(s, "overall: {}", if report.verdict { "PASS" } else { "FAIL" });
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunReport {
        let rep: ExperimentReport = serde_json::from_value(serde_json::json!({
            "name": "demo", "variety": "a1", "seed": 1, "samples": 1000, "parameters": {},
            "rows": [
                {"param": "slope, alpha=1", "predicted": 3.0, "fitted": 2.99, "ci_lo": 2.9, "ci_hi": 3.1,
                 "criterion": "c", "pass": true, "gated": true},
                {"param": "info", "predicted": null, "fitted": 1.0, "ci_lo": 1.0, "ci_hi": 1.0,
                 "criterion": "c", "pass": false, "gated": false}
            ],
            "tables": [], "notes": [], "verdict": true
        }))
        .unwrap();
        RunReport::new("a1", ExperimentConfig::default(), vec![rep])
    }

    #[test]
    fn csv_has_the_fixed_columns_and_quotes_commas() {
        let csv = to_csv(&sample()).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
        assert_eq!(lines.next().unwrap(), "demo,a1,\"slope, alpha=1\",3,2.99,2.9,3.1,pass");
        assert_eq!(lines.next().unwrap(), "demo,a1,info,,1,1,1,info");
    }

    #[test]
    fn json_round_trips() {
        let r = sample();
        let back: RunReport = serde_json::from_str(&to_json(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(verdict_table(&r).contains("overall: PASS"));
    }
}
