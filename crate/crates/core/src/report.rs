//! CSV, markdown and manifest output.
//!
//! The CSV is the canonical artifact: one row per cell, numbers written in
//! shortest round-trip form, `,` separated, `\n` terminated. Markdown is a
//! rendering of the same values at two decimals and can be regenerated from
//! the CSV alone.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{Confounding, ExperimentConfig, Scenario};
use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::harness::{CellResult, EstimatorStats, GridReport, ScenarioSummary, EXCLUDED_ATE};

const BASE_COLUMNS: [&str; 6] = [
    "scenario",
    "degree",
    "confounding",
    "ate_true",
    "pi_nominal",
    "pi_empirical_mean",
];
const TRAILING_COLUMNS: [&str; 3] = ["cell_index", "n_effective", "retries"];

/// Header row of the results CSV, in output order.
pub fn csv_columns() -> Vec<String> {
    let mut cols: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
    for e in Estimator::ALL {
        cols.push(format!("{}_ate", e.key()));
        cols.push(format!("{}_err", e.key()));
    }
    for suffix in ["ate_sd", "err_mean", "err_sd"] {
        for e in Estimator::ALL {
            cols.push(format!("{}_{suffix}", e.key()));
        }
    }
    cols.extend(TRAILING_COLUMNS.iter().map(|s| s.to_string()));
    cols
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn cell_record(cell: &CellResult) -> Vec<String> {
    let mut rec = vec![
        cell.scenario.id(),
        cell.scenario.degree.to_string(),
        cell.scenario.confounding.as_str().to_string(),
        num(cell.ate_true),
        num(cell.pi_nominal),
        num(cell.pi_empirical_mean),
    ];
    let field = |e: Estimator, f: fn(&EstimatorStats) -> f64| cell.get(e).map(|s| num(f(s))).unwrap_or_default();
    for e in Estimator::ALL {
        rec.push(field(e, |s| s.mean_ate_sim));
        rec.push(field(e, |s| s.error_pct));
    }
    let extras: [fn(&EstimatorStats) -> f64; 3] = [|s| s.sd_ate_sim, |s| s.mean_error_pct, |s| s.sd_error_pct];
    for f in extras {
        for e in Estimator::ALL {
            rec.push(field(e, f));
        }
    }
    rec.push(cell.cell_index.to_string());
    rec.push(cell.n_effective.to_string());
    rec.push(cell.retries.to_string());
    rec
}

pub fn write_csv<W: Write>(report: &GridReport, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(csv_columns())?;
    for cell in &report.cells {
        w.write_record(cell_record(cell))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

fn check_partial(report: &GridReport, allow_partial: bool) -> Result<()> {
    if !report.is_complete() && !allow_partial {
        return Err(Error::Incomplete {
            aborted: report.aborted.len(),
        });
    }
    Ok(())
}

/// Write the results CSV to `path`.
pub fn emit_csv(report: &GridReport, path: &Path, allow_partial: bool) -> Result<()> {
    check_partial(report, allow_partial)?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(report, std::io::BufWriter::new(file))
}

fn parse_f64(rec: &csv::StringRecord, idx: usize, name: &str) -> Result<f64> {
    rec.get(idx)
        .unwrap_or("")
        .parse()
        .map_err(|_| Error::InvalidData(format!("column `{name}` is not a number")))
}

fn parse_usize(rec: &csv::StringRecord, idx: usize, name: &str) -> Result<usize> {
    rec.get(idx)
        .unwrap_or("")
        .parse()
        .map_err(|_| Error::InvalidData(format!("column `{name}` is not a count")))
}

/// Read cells back from a results CSV.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<CellResult>> {
    let mut r = csv::ReaderBuilder::new().from_reader(reader);
    let headers = r.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidData(format!("missing column `{name}`")))
    };
    let expected = csv_columns();
    let idx: Vec<usize> = expected.iter().map(|c| column(c)).collect::<Result<_>>()?;
    let at = |name: &str| idx[expected.iter().position(|c| c == name).expect("known column")];

    let mut cells = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let scenario = Scenario::parse_id(rec.get(at("scenario")).unwrap_or(""))?;
        let degree = parse_usize(&rec, at("degree"), "degree")? as u32;
        let confounding = Confounding::parse(rec.get(at("confounding")).unwrap_or(""))?;
        if scenario != Scenario::new(confounding, degree) {
            return Err(Error::InvalidData(format!(
                "scenario {scenario} disagrees with its degree/confounding columns"
            )));
        }
        let mut stats = Vec::new();
        for e in Estimator::ALL {
            let ate_col = format!("{}_ate", e.key());
            if rec.get(at(&ate_col)).unwrap_or("").is_empty() {
                continue;
            }
            let get = |suffix: &str| {
                let name = format!("{}_{suffix}", e.key());
                parse_f64(&rec, at(&name), &name)
            };
            stats.push((
                e,
                EstimatorStats {
                    mean_ate_sim: get("ate")?,
                    sd_ate_sim: get("ate_sd")?,
                    error_pct: get("err")?,
                    mean_error_pct: get("err_mean")?,
                    sd_error_pct: get("err_sd")?,
                },
            ));
        }
        cells.push(CellResult {
            scenario,
            ate_true: parse_f64(&rec, at("ate_true"), "ate_true")?,
            pi_nominal: parse_f64(&rec, at("pi_nominal"), "pi_nominal")?,
            cell_index: parse_usize(&rec, at("cell_index"), "cell_index")? as u64,
            pi_empirical_mean: parse_f64(&rec, at("pi_empirical_mean"), "pi_empirical_mean")?,
            n_effective: parse_usize(&rec, at("n_effective"), "n_effective")?,
            retries: parse_usize(&rec, at("retries"), "retries")?,
            stats,
        });
    }
    Ok(cells)
}

/// Load a results CSV into a report (summaries recomputed, no provenance).
pub fn load_csv(path: &Path) -> Result<GridReport> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(GridReport::from_cells(read_csv(file)?, Vec::new(), None))
}

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

fn estimators_in(report: &GridReport) -> Vec<Estimator> {
    Estimator::ALL
        .into_iter()
        .filter(|e| report.cells.iter().any(|c| c.get(*e).is_some()))
        .collect()
}

fn summary_table(out: &mut String, summaries: &[ScenarioSummary], estimators: &[Estimator]) {
    let _ = write!(out, "| Scenario |");
    for e in estimators {
        let _ = write!(out, " {} |", e.label());
    }
    let _ = write!(out, "\n|---|");
    for _ in estimators {
        out.push_str("---:|");
    }
    out.push('\n');
    for s in summaries {
        let _ = write!(out, "| {} ({}) |", s.scenario.id(), s.scenario.description());
        for e in estimators {
            let _ = write!(out, " {} |", s.get(*e).map(fmt2).unwrap_or_default());
        }
        out.push('\n');
    }
    out.push('\n');
}

/// Render per-scenario tables and the two summary tables.
pub fn render_markdown(report: &GridReport) -> String {
    let estimators = estimators_in(report);
    let mut out = String::from("# Counterfactual prediction simulation results\n\n");
    if let Some(p) = &report.provenance {
        let _ = writeln!(
            out,
            "master_seed = {}, n_samples = {}, n_replicates = {}, version {}\n",
            p.config.master_seed, p.config.n_samples, p.config.n_replicates, p.version
        );
    }
    for scenario in report.scenarios() {
        let _ = writeln!(out, "## Scenario {}: {}\n", scenario.id(), scenario.description());
        out.push_str("| ATE_true | π |");
        for e in &estimators {
            let _ = write!(out, " {0} | E({0}) |", e.label());
        }
        out.push_str("\n|---:|---:|");
        for _ in &estimators {
            out.push_str("---:|---:|");
        }
        out.push('\n');
        let mut previous: Option<f64> = None;
        for cell in report.cells_for(scenario) {
            let label = if previous == Some(cell.ate_true) {
                String::new()
            } else {
                num(cell.ate_true)
            };
            previous = Some(cell.ate_true);
            let _ = write!(out, "| {label} | {} |", num(cell.pi_nominal));
            for e in &estimators {
                match cell.get(*e) {
                    Some(s) => {
                        let _ = write!(out, " {} | {} |", fmt2(s.mean_ate_sim), fmt2(s.error_pct));
                    }
                    None => out.push_str("  |  |"),
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out.push_str("## Mean absolute percentage errors\n\n");
    summary_table(&mut out, &report.overall, &estimators);
    if let Some(excluding) = &report.excluding {
        let _ = writeln!(out, "## Mean absolute percentage errors excluding ATE_true = {EXCLUDED_ATE}\n");
        summary_table(&mut out, excluding, &estimators);
    }
    if !report.is_complete() {
        out.push_str("## Aborted cells\n\n");
        for a in &report.aborted {
            let _ = writeln!(out, "- {} ate_true={} pi={}: {}", a.scenario, a.ate_true, a.pi, a.reason);
        }
    }
    out
}

pub fn emit_markdown(report: &GridReport, path: &Path, allow_partial: bool) -> Result<()> {
    check_partial(report, allow_partial)?;
    std::fs::write(path, render_markdown(report)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Completed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCell {
    pub scenario: String,
    pub ate_true: f64,
    pub pi_nominal: f64,
    pub cell_index: u64,
    pub status: CellStatus,
    pub n_effective: usize,
    pub retries: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
}

/// Run record written next to the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub master_seed: u64,
    pub started_at: String,
    pub finished_at: String,
    pub complete: bool,
    pub total_retries: usize,
    pub config: ExperimentConfig,
    pub cells: Vec<ManifestCell>,
}

impl RunManifest {
    pub fn new(report: &GridReport, config: &ExperimentConfig, started_at: String, finished_at: String) -> Self {
        let mut cells: Vec<ManifestCell> = report
            .cells
            .iter()
            .map(|c| ManifestCell {
                scenario: c.scenario.id(),
                ate_true: c.ate_true,
                pi_nominal: c.pi_nominal,
                cell_index: c.cell_index,
                status: CellStatus::Completed,
                n_effective: c.n_effective,
                retries: c.retries,
                reason: None,
            })
            .collect();
        cells.extend(report.aborted.iter().map(|a| ManifestCell {
            scenario: a.scenario.clone(),
            ate_true: a.ate_true,
            pi_nominal: a.pi,
            cell_index: a.cell_index,
            status: CellStatus::Aborted,
            n_effective: 0,
            retries: 0,
            reason: Some(a.reason.clone()),
        }));
        cells.sort_by_key(|c| c.cell_index);
        RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: config.master_seed,
            started_at,
            finished_at,
            complete: report.is_complete(),
            total_retries: report.total_retries(),
            config: config.clone(),
            cells,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Method;

    fn sample_report() -> GridReport {
        let mut cells = Vec::new();
        for scenario in [Scenario::DEFAULTS[0], Scenario::DEFAULTS[3]] {
            for (ai, ate) in [-10.0, 0.1, 10.0].into_iter().enumerate() {
                for (pi_i, pi) in [0.1, 0.9].into_iter().enumerate() {
                    let k = (ai * 2 + pi_i) as f64;
                    let st = |off: f64| EstimatorStats {
                        mean_ate_sim: ate + 0.0123456789 * (k + off),
                        sd_ate_sim: 0.3 + off,
                        error_pct: 1.0 / 3.0 + k + off,
                        mean_error_pct: 2.0 + k,
                        sd_error_pct: 0.5,
                    };
                    cells.push(CellResult {
                        scenario,
                        ate_true: ate,
                        pi_nominal: pi,
                        cell_index: scenario.stable_index() * 1_000_000 + (ai * 1000 + pi_i) as u64,
                        pi_empirical_mean: 0.498765,
                        n_effective: 200,
                        retries: ai,
                        stats: vec![(Estimator::Naive, st(0.0)), (Estimator::Model(Method::Lm), st(1.0))],
                    });
                }
            }
        }
        GridReport::from_cells(cells, vec![], None)
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let report = sample_report();
        let mut buf = Vec::new();
        write_csv(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().count(), report.cells.len() + 1);
        let cells = read_csv(buf.as_slice()).unwrap();
        assert_eq!(cells, report.cells);
    }

    #[test]
    fn header_layout() {
        let cols = csv_columns();
        assert_eq!(
            &cols[..14],
            &[
                "scenario",
                "degree",
                "confounding",
                "ate_true",
                "pi_nominal",
                "pi_empirical_mean",
                "naive_ate",
                "naive_err",
                "lm_ate",
                "lm_err",
                "lasso_ate",
                "lasso_err",
                "rf_ate",
                "rf_err"
            ]
        );
        assert_eq!(cols.last().unwrap(), "retries");
    }

    #[test]
    fn missing_methods_are_blank() {
        let report = sample_report();
        let mut buf = Vec::new();
        write_csv(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[10], "");
        assert_eq!(row[12], "");
    }

    #[test]
    fn markdown_blocks_and_rounding() {
        let report = sample_report();
        let md = render_markdown(&report);
        assert!(md.contains("## Scenario 1a: no confounding, linear"));
        assert!(md.contains("| ATE_true | π | Naive | E(Naive) | LM | E(LM) |"));
        // first row of a block carries the effect size, the next one does not
        assert!(md.contains("| -10 | 0.1 | -10.00 | 0.33 |"));
        assert!(md.contains("|  | 0.9 | -9.99 | 1.33 |"));
        assert!(md.contains("excluding ATE_true = 0.1"));
    }

    #[test]
    fn incomplete_report_requires_permission() {
        let mut report = sample_report();
        report.aborted.push(crate::harness::AbortedCell {
            scenario: "1a".into(),
            ate_true: 5.0,
            pi: 0.5,
            cell_index: 3,
            reason: "test".into(),
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        assert!(matches!(emit_csv(&report, &path, false), Err(Error::Incomplete { aborted: 1 })));
        emit_csv(&report, &path, true).unwrap();
        assert!(render_markdown(&report).contains("## Aborted cells"));
    }

    #[test]
    fn unwritable_path() {
        let report = sample_report();
        let err = emit_csv(&report, Path::new("/nonexistent-dir/x.csv"), false).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
