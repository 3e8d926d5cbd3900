//! Monte-Carlo grid runner.
//!
//! A cell is one (scenario, ate_true, pi) combination. Each replicate of a
//! cell derives its own streams from `(master_seed, cell_index, replicate)`,
//! so replicates are independent of execution order and thread count.
//! Per-replicate results are collected by index and reduced with
//! compensated sums.

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Confounding, ExperimentConfig, Scenario, ScenarioConfig};
use crate::datagen::{generate_dataset, CellDataSpec, OutcomeParams, TreatmentRule};
use crate::error::{Error, Result};
use crate::estimator::{estimate_all, pct_error, AteEstimates, Estimator};
use crate::stats::{compensated_sum, Moments};

/// The effect size whose cells are left out of the stable summaries.
pub const EXCLUDED_ATE: f64 = 0.1;

/// Largest fraction of replicates that may be lost to degenerate splits
/// before a cell is aborted.
pub const MAX_DEGENERATE_FRACTION: f64 = 0.01;

/// Stable seed index of a cell, independent of which other scenarios run.
pub fn cell_index(scenario: &Scenario, ate_index: usize, pi_index: usize) -> u64 {
    scenario.stable_index() * 1_000_000 + ate_index as u64 * 1_000 + pi_index as u64
}

/// Replicate statistics for one estimator in one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorStats {
    /// Mean of the per-replicate estimates.
    pub mean_ate_sim: f64,
    /// Sample standard deviation of the per-replicate estimates.
    pub sd_ate_sim: f64,
    /// Percentage error of `mean_ate_sim`; this is the cell's tabulated error.
    pub error_pct: f64,
    /// Mean of the per-replicate percentage errors.
    pub mean_error_pct: f64,
    pub sd_error_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub scenario: Scenario,
    pub ate_true: f64,
    pub pi_nominal: f64,
    pub cell_index: u64,
    pub pi_empirical_mean: f64,
    /// Replicates that produced estimates.
    pub n_effective: usize,
    /// Degenerate draws that were redrawn.
    pub retries: usize,
    /// Ordered as [`Estimator::ALL`], restricted to the estimators that ran.
    pub stats: Vec<(Estimator, EstimatorStats)>,
}

impl CellResult {
    pub fn get(&self, estimator: Estimator) -> Option<&EstimatorStats> {
        self.stats.iter().find(|(e, _)| *e == estimator).map(|(_, s)| s)
    }

    /// Standard error of `mean_ate_sim`.
    pub fn standard_error(&self, estimator: Estimator) -> Option<f64> {
        self.get(estimator)
            .map(|s| s.sd_ate_sim / (self.n_effective as f64).sqrt())
    }
}

/// Reduce per-replicate estimates to cell statistics. The result does not
/// depend on the order of `replicates` beyond compensated-sum rounding.
pub fn aggregate(ate_true: f64, replicates: &[AteEstimates]) -> Result<(f64, Vec<(Estimator, EstimatorStats)>)> {
    if replicates.is_empty() {
        return Err(Error::InvalidData("no completed replicates to aggregate".into()));
    }
    let pi_mean = compensated_sum(replicates.iter().map(|r| r.pi_empirical)) / replicates.len() as f64;
    let mut stats = Vec::new();
    for estimator in Estimator::ALL {
        if replicates[0].get(estimator).is_none() {
            continue;
        }
        let mut ate = Moments::default();
        let mut err = Moments::default();
        for r in replicates {
            let (a, e) = r
                .get(estimator)
                .ok_or_else(|| Error::InvalidData(format!("replicate is missing {estimator}")))?;
            ate.push(a);
            err.push(e);
        }
        let mean_ate_sim = ate.mean();
        stats.push((
            estimator,
            EstimatorStats {
                mean_ate_sim,
                sd_ate_sim: ate.sd(),
                error_pct: pct_error(mean_ate_sim, ate_true)?,
                mean_error_pct: err.mean(),
                sd_error_pct: err.sd(),
            },
        ));
    }
    Ok((pi_mean, stats))
}

enum ReplicateOutcome {
    Done { estimates: AteEstimates, retries: usize },
    Degenerate { retries: usize },
}

fn run_replicate(
    config: &ScenarioConfig,
    spec: &CellDataSpec,
    ate_true: f64,
    replicate: u64,
) -> Result<ReplicateOutcome> {
    let mut retries = 0;
    for attempt in 0..=1u64 {
        match generate_dataset(spec, replicate, attempt) {
            Ok(data) => {
                let key = spec.replicate_key(replicate, attempt);
                let estimates = estimate_all(&data, ate_true, &config.methods, &config.models, &key)?;
                return Ok(ReplicateOutcome::Done { estimates, retries });
            }
            Err(Error::DegenerateSplit { treated, control }) => {
                warn!(
                    "cell {} replicate {replicate} attempt {attempt}: degenerate split ({treated} treated, {control} control)",
                    spec.cell_index
                );
                if attempt == 0 {
                    retries += 1;
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ReplicateOutcome::Degenerate { retries })
}

/// Data-generation settings for one cell.
pub fn cell_data_spec(config: &ScenarioConfig, ate_true: f64, pi: f64, cell_index: u64) -> CellDataSpec {
    let treatment = match config.scenario.confounding {
        Confounding::None => TreatmentRule::Randomized { pi },
        Confounding::SingleX3 => TreatmentRule::Confounded(config.confounding_rule),
    };
    CellDataSpec {
        n_samples: config.n_samples,
        covariates: config.covariates.clone(),
        outcome: OutcomeParams::new(config.outcome.clone(), ate_true, config.scenario.degree),
        treatment,
        master_seed: config.master_seed,
        cell_index,
    }
}

/// Run every replicate of one cell on the current rayon pool.
pub fn run_cell(config: &ScenarioConfig, ate_true: f64, pi: f64, cell_index: u64) -> Result<CellResult> {
    let order: Vec<u64> = (0..config.n_replicates as u64).collect();
    run_cell_in_order(config, ate_true, pi, cell_index, &order)
}

/// [`run_cell`] with the replicates executed and accumulated in the given
/// order, which must be a permutation of `0..n_replicates`.
pub fn run_cell_in_order(
    config: &ScenarioConfig,
    ate_true: f64,
    pi: f64,
    cell_index: u64,
    order: &[u64],
) -> Result<CellResult> {
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if !sorted.iter().copied().eq(0..config.n_replicates as u64) {
        return Err(Error::invalid("order", "must be a permutation of the replicate indices"));
    }
    let spec = cell_data_spec(config, ate_true, pi, cell_index);
    let abort = |reason: String| Error::CellAborted {
        scenario: config.scenario.id(),
        ate_true,
        pi,
        reason,
    };
    let outcomes: Vec<ReplicateOutcome> = order
        .par_iter()
        .map(|&r| run_replicate(config, &spec, ate_true, r))
        .collect::<Result<_>>()
        .map_err(|e| abort(e.to_string()))?;

    let mut retries = 0;
    let mut degenerate = 0;
    let mut completed = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        match outcome {
            ReplicateOutcome::Done { estimates, retries: r } => {
                retries += r;
                completed.push(estimates);
            }
            ReplicateOutcome::Degenerate { retries: r } => {
                retries += r;
                degenerate += 1;
            }
        }
    }
    if degenerate as f64 > MAX_DEGENERATE_FRACTION * config.n_replicates as f64 || completed.is_empty() {
        return Err(abort(format!(
            "{degenerate} of {} replicates stayed degenerate after a retry",
            config.n_replicates
        )));
    }
    let (pi_empirical_mean, stats) = aggregate(ate_true, &completed).map_err(|e| abort(e.to_string()))?;
    Ok(CellResult {
        scenario: config.scenario,
        ate_true,
        pi_nominal: pi,
        cell_index,
        pi_empirical_mean,
        n_effective: completed.len(),
        retries,
        stats,
    })
}

/// Mean tabulated error per estimator over a set of cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSummary {
    pub scenario: Scenario,
    pub n_cells: usize,
    pub mean_errors: Vec<(Estimator, f64)>,
}

impl ScenarioSummary {
    pub fn get(&self, estimator: Estimator) -> Option<f64> {
        self.mean_errors.iter().find(|(e, _)| *e == estimator).map(|(_, v)| *v)
    }
}

/// A cell that could not be completed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortedCell {
    pub scenario: String,
    pub ate_true: f64,
    pub pi: f64,
    pub cell_index: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportProvenance {
    pub config: ExperimentConfig,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    pub cells: Vec<CellResult>,
    pub aborted: Vec<AbortedCell>,
    pub overall: Vec<ScenarioSummary>,
    /// Summaries without the `EXCLUDED_ATE` cells; `None` when the grid
    /// does not contain that value or nothing would remain.
    pub excluding: Option<Vec<ScenarioSummary>>,
    pub provenance: Option<ReportProvenance>,
}

impl GridReport {
    /// Build a report, computing the per-scenario summaries from `cells`.
    pub fn from_cells(cells: Vec<CellResult>, aborted: Vec<AbortedCell>, provenance: Option<ReportProvenance>) -> Self {
        let overall = summarize(&cells, |_| true);
        let mut report = GridReport {
            cells,
            aborted,
            overall,
            excluding: None,
            provenance,
        };
        report.excluding = summarize_excluding(&report, EXCLUDED_ATE).ok();
        report
    }

    pub fn is_complete(&self) -> bool {
        self.aborted.is_empty()
    }

    pub fn scenarios(&self) -> Vec<Scenario> {
        let mut seen = Vec::new();
        for c in &self.cells {
            if !seen.contains(&c.scenario) {
                seen.push(c.scenario);
            }
        }
        seen
    }

    pub fn cells_for(&self, scenario: Scenario) -> impl Iterator<Item = &CellResult> + '_ {
        self.cells.iter().filter(move |c| c.scenario == scenario)
    }

    pub fn total_retries(&self) -> usize {
        self.cells.iter().map(|c| c.retries).sum()
    }
}

fn summarize(cells: &[CellResult], keep: impl Fn(&CellResult) -> bool) -> Vec<ScenarioSummary> {
    let mut scenarios: Vec<Scenario> = Vec::new();
    for c in cells {
        if !scenarios.contains(&c.scenario) {
            scenarios.push(c.scenario);
        }
    }
    scenarios
        .into_iter()
        .filter_map(|scenario| {
            let kept: Vec<&CellResult> = cells.iter().filter(|c| c.scenario == scenario && keep(c)).collect();
            if kept.is_empty() {
                return None;
            }
            let mean_errors = Estimator::ALL
                .iter()
                .filter(|e| kept.iter().all(|c| c.get(**e).is_some()))
                .map(|&e| {
                    let total = compensated_sum(kept.iter().map(|c| c.get(e).map_or(f64::NAN, |s| s.error_pct)));
                    (e, total / kept.len() as f64)
                })
                .collect();
            Some(ScenarioSummary {
                scenario,
                n_cells: kept.len(),
                mean_errors,
            })
        })
        .collect()
}

/// Per-scenario mean errors over the cells whose `ate_true` differs from
/// `excluded_ate`.
pub fn summarize_excluding(report: &GridReport, excluded_ate: f64) -> Result<Vec<ScenarioSummary>> {
    if !report.cells.iter().any(|c| c.ate_true == excluded_ate) {
        return Err(Error::invalid(
            "excluded_ate",
            format!("{excluded_ate} does not occur in the grid"),
        ));
    }
    let summaries = summarize(&report.cells, |c| c.ate_true != excluded_ate);
    if summaries.is_empty() {
        return Err(Error::EmptySummary { excluded: excluded_ate });
    }
    Ok(summaries)
}

/// Run every cell of every configured scenario. Cells that abort are
/// recorded and the report is marked incomplete; the remaining cells still
/// run.
pub fn run_grid(config: &ExperimentConfig) -> Result<GridReport> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))?;
    let scenario_configs = config.scenario_configs();
    let total = scenario_configs.len() * config.ate_true_grid.len() * config.pi_grid.len();

    let mut cells = Vec::with_capacity(total);
    let mut aborted = Vec::new();
    pool.install(|| {
        for sc in &scenario_configs {
            for (ai, &ate_true) in sc.ate_true_grid.iter().enumerate() {
                for (pi_i, &pi) in sc.pi_grid.iter().enumerate() {
                    let index = cell_index(&sc.scenario, ai, pi_i);
                    match run_cell(sc, ate_true, pi, index) {
                        Ok(cell) => {
                            info!(
                                "[{}/{}] scenario {} ate_true={} pi={} done ({} replicates)",
                                cells.len() + aborted.len() + 1,
                                total,
                                sc.scenario,
                                ate_true,
                                pi,
                                cell.n_effective
                            );
                            cells.push(cell);
                        }
                        Err(e) => {
                            warn!("{e}");
                            aborted.push(AbortedCell {
                                scenario: sc.scenario.id(),
                                ate_true,
                                pi,
                                cell_index: index,
                                reason: e.to_string(),
                            });
                        }
                    }
                }
            }
        }
    });
    let provenance = ReportProvenance {
        config: config.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    Ok(GridReport::from_cells(cells, aborted, Some(provenance)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::MethodEstimate;
    use crate::models::Method;

    fn stats(error_pct: f64) -> EstimatorStats {
        EstimatorStats {
            mean_ate_sim: 0.0,
            sd_ate_sim: 0.0,
            error_pct,
            mean_error_pct: error_pct,
            sd_error_pct: 0.0,
        }
    }

    fn cell(scenario: Scenario, ate_true: f64, err: f64) -> CellResult {
        CellResult {
            scenario,
            ate_true,
            pi_nominal: 0.5,
            cell_index: 0,
            pi_empirical_mean: 0.5,
            n_effective: 10,
            retries: 0,
            stats: vec![(Estimator::Naive, stats(err)), (Estimator::Model(Method::Lm), stats(err / 2.0))],
        }
    }

    #[test]
    fn summaries_average_cell_errors() {
        let s = Scenario::DEFAULTS[0];
        let cells = vec![cell(s, -10.0, 1.0), cell(s, 0.1, 100.0), cell(s, 10.0, 3.0)];
        let report = GridReport::from_cells(cells, vec![], None);
        assert_eq!(report.overall[0].get(Estimator::Naive), Some(104.0 / 3.0));
        let excl = report.excluding.as_ref().unwrap();
        assert_eq!(excl[0].n_cells, 2);
        assert_eq!(excl[0].get(Estimator::Naive), Some(2.0));
        assert_eq!(excl[0].get(Estimator::Model(Method::Lm)), Some(1.0));
        assert_eq!(excl[0].get(Estimator::Model(Method::Rf)), None);
    }

    #[test]
    fn excluding_everything_is_an_error() {
        let s = Scenario::DEFAULTS[0];
        let report = GridReport::from_cells(vec![cell(s, 0.1, 5.0)], vec![], None);
        assert!(matches!(
            summarize_excluding(&report, 0.1),
            Err(Error::EmptySummary { .. })
        ));
        assert!(report.excluding.is_none());
        assert!(summarize_excluding(&report, 7.0).is_err());
    }

    #[test]
    fn cell_indices_are_stable_and_distinct() {
        let mut seen = std::collections::HashSet::new();
        for s in Scenario::DEFAULTS {
            for a in 0..5 {
                for p in 0..5 {
                    assert!(seen.insert(cell_index(&s, a, p)));
                }
            }
        }
        assert_eq!(cell_index(&Scenario::DEFAULTS[3], 2, 4), 3_002_004);
    }

    #[test]
    fn aggregate_reports_error_of_mean() {
        let reps: Vec<AteEstimates> = [9.0, 11.0, 13.0]
            .iter()
            .map(|&a| AteEstimates {
                ate_naive: a,
                error_naive_pct: pct_error(a, 10.0).unwrap(),
                pi_empirical: 0.5,
                methods: vec![MethodEstimate {
                    method: Method::Lm,
                    ate_sim: a,
                    error_pct: pct_error(a, 10.0).unwrap(),
                }],
            })
            .collect();
        let (pi, s) = aggregate(10.0, &reps).unwrap();
        assert_eq!(pi, 0.5);
        assert_eq!(s.len(), 2);
        let naive = s[0].1;
        assert!((naive.mean_ate_sim - 11.0).abs() < 1e-12);
        assert!((naive.error_pct - 10.0).abs() < 1e-9);
        assert!((naive.mean_error_pct - 50.0 / 3.0).abs() < 1e-9);
        assert!((naive.sd_ate_sim - 2.0).abs() < 1e-12);
    }
}
