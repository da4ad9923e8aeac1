//! Experiment runner: repeated trials of one or more solvers on the same
//! objective, fresh re-evaluation of every reported solution, and pairwise
//! t-test verdicts.

mod baseline;
mod config;
mod output;
mod sweep;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use baseline::{baseline_random_search, BaselineOutcome};
pub use config::{
    AhSpec, BaselineSpec, BudgetSpec, BuiltObjective, ExperimentConfig, MeanSpec, ObjectiveSpec, OutputSpec,
    SolverSpec, SrSpec, SrStopSpec, TargetSpec,
};
pub use output::write_outputs;
pub use sweep::{delta_csv, emit_delta_curve, write_delta_csv, DeltaRow};

use crate::ah::run_ah;
use crate::error::SolveError;
use crate::kn::{run_kn, run_kn_on, KnConfig};
use crate::objective::{ObjectiveError, ObjectiveHandle, Observation, SeedPolicy, Stream};
use crate::space::Solution;
use crate::sr::run_sr;
use crate::stats::{summarize_trials, t_test_two_sample, StatsError, TrialAggregate, TrialSummary, Verdict};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("{solver} failed in trial {trial}: {source}")]
    Solve {
        solver: String,
        trial: u64,
        #[source]
        source: SolveError,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit code: 2 for bad configuration, 3 for worker failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Solve { source: SolveError::Config(_), .. } => 2,
            HarnessError::Objective(e) if e.is_worker_failure() => 3,
            HarnessError::Solve { source, .. } if source.objective_error().is_some_and(|e| e.is_worker_failure()) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Search,
    Reeval,
}

/// One line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub trial: u64,
    pub solver: String,
    pub phase: Phase,
    /// Dense 0-based index within the trial, across solvers and phases.
    pub eval_index: u64,
    pub flat: u64,
    pub seed: u64,
    pub value: f64,
    /// Zero unless timing is recorded.
    pub wall_nanos: u64,
    pub stage: u64,
}

/// What a single solver run reports, independent of the algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRun {
    pub initial: u64,
    /// The solution the algorithm itself returns.
    pub nominal: u64,
    pub nominal_solution: Solution,
    /// Highest sample mean seen during the search, if the algorithm tracks one.
    pub best_observed: Option<(u64, f64)>,
    pub stages: u64,
    pub evaluations: u64,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: u64,
    pub solver: String,
    pub run: SolverRun,
    /// Fresh replications of the initial solution.
    pub initial_values: Vec<f64>,
    /// Fresh replications of the nominal solution.
    pub final_values: Vec<f64>,
    pub summary: TrialSummary,
    /// True mean of the nominal solution, when the objective is synthetic.
    pub true_mean: Option<f64>,
    pub correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub solver: String,
    #[serde(flatten)]
    pub aggregate: TrialAggregate,
    pub correct_rate: Option<f64>,
    pub mean_true_value: Option<f64>,
}

/// Proportions of trials in which `a` was better than, comparable to or worse than `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub a: String,
    pub b: String,
    pub trials: u64,
    pub better: u64,
    pub comparable: u64,
    pub worse: u64,
    pub prop_better: f64,
    pub prop_comparable: f64,
    pub prop_worse: f64,
    /// Trials where both samples had zero variance.
    pub degenerate: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Completed,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub name: Option<String>,
    pub status: Status,
    pub error: Option<String>,
    pub optimum: Option<(u64, f64)>,
    pub results: Vec<TrialResult>,
    pub summaries: Vec<SolverSummary>,
    pub verdicts: Vec<VerdictRow>,
    #[serde(skip)]
    pub records: Vec<RunRecord>,
}

struct TrialOutput {
    records: Vec<RunRecord>,
    results: Result<Vec<TrialResult>, HarnessError>,
}

fn to_records(log: Vec<Observation>, trial: u64, solver: &str, phase: Phase, timing: bool) -> Vec<RunRecord> {
    log.into_iter()
        .enumerate()
        .map(|(i, o)| RunRecord {
            trial,
            solver: solver.to_string(),
            phase,
            eval_index: i as u64,
            flat: o.flat,
            seed: o.seed,
            value: o.value,
            wall_nanos: if timing { o.wall_nanos } else { 0 },
            stage: o.stage,
        })
        .collect()
}

fn default_cleanup() -> KnConfig {
    KnConfig::new(10, 0.01, 0.05)
}

fn run_solver(
    spec: &SolverSpec,
    cfg: &ExperimentConfig,
    built: &BuiltObjective,
    handle: &ObjectiveHandle,
    policy: &SeedPolicy,
) -> Result<SolverRun, SolveError> {
    let space = &cfg.space;
    let budget = &cfg.budget;
    let config_err = |e: HarnessError| SolveError::Config(e.to_string());
    match spec {
        SolverSpec::Kn(_) => {
            let kn = spec.kn_config(budget).expect("kn spec");
            let out = run_kn(handle, &kn, policy)?;
            let best = out.best();
            let nominal = out.winner.unwrap_or(best.id);
            Ok(SolverRun {
                initial: 0,
                nominal,
                nominal_solution: space.solution_at(nominal)?,
                best_observed: Some((best.id, best.mean)),
                stages: out.iterations,
                evaluations: out.evaluations_used,
                detail: serde_json::json!({
                    "mode": out.mode,
                    "winner": out.winner,
                    "tied": out.tied,
                    "survivors": out.survivors.iter().map(|c| c.id).collect::<Vec<_>>(),
                }),
            })
        }
        SolverSpec::Sr(_) => {
            let sr = spec.sr_config(budget, built.optimum.map(|o| o.0), space).map_err(config_err)?.expect("sr spec");
            let trace = run_sr(handle, &sr, policy)?;
            let nominal = space.flat_index(&trace.final_solution)?;
            Ok(SolverRun {
                initial: space.flat_index(&trace.initial)?,
                nominal,
                nominal_solution: trace.final_solution.clone(),
                best_observed: trace.best_observed,
                stages: trace.stages_count,
                evaluations: trace.evaluations_used,
                detail: serde_json::json!({
                    "stop_reason": trace.stop_reason,
                    "accepted": trace.stages.iter().filter(|s| s.accepted).count(),
                }),
            })
        }
        SolverSpec::Ah(a) => {
            let ah = spec.ah_config(budget).map_err(config_err)?.expect("ah spec");
            let trace = run_ah(handle, &ah, policy)?;
            let incumbent = trace.state.incumbent;
            let mut nominal = incumbent;
            let mut cleanup = serde_json::Value::Null;
            let mut evaluations = trace.evaluations_used;
            if a.cleanup_kn {
                let n = trace.iterations.len();
                let mut members = trace.iterations[n - 1].sampled.clone();
                members.push(if n >= 2 { trace.iterations[n - 2].incumbent } else { incumbent });
                let kn = a.cleanup.unwrap_or_else(default_cleanup);
                let out = run_kn_on(handle, &members, &kn, &policy.child(Stream::Cleanup, 0))?;
                nominal = out.winner.unwrap_or(out.best().id);
                evaluations += out.evaluations_used;
                cleanup = serde_json::json!({
                    "candidates": members,
                    "mode": out.mode,
                    "winner": nominal,
                    "evaluations": out.evaluations_used,
                });
            }
            let best = trace.state.visited.get(&incumbent).map(|v| (incumbent, v.mean()));
            Ok(SolverRun {
                initial: space.flat_index(&trace.initial)?,
                nominal,
                nominal_solution: space.solution_at(nominal)?,
                best_observed: best,
                stages: trace.state.k,
                evaluations,
                detail: serde_json::json!({ "visited": trace.state.visited.len(), "cleanup": cleanup }),
            })
        }
        SolverSpec::BaselineRs(_) => {
            let out = baseline_random_search(handle, spec.eval_budget(budget), spec.wall_budget(budget), policy)?;
            Ok(SolverRun {
                initial: out.draws[0],
                nominal: out.best_flat,
                nominal_solution: out.best.clone(),
                best_observed: Some((out.best_flat, out.best_value)),
                stages: out.draws.len() as u64,
                evaluations: out.evaluations_used,
                detail: serde_json::json!({ "best_value": out.best_value }),
            })
        }
    }
}

fn reevaluate(handle: &ObjectiveHandle, flat: u64, reps: u64, policy: &SeedPolicy) -> Result<Vec<f64>, ObjectiveError> {
    let x = handle.space().solution_at(flat)?;
    (0..reps).map(|r| handle.evaluate(&x, policy.derive_seed(flat, r)).map(|o| o.value)).collect()
}

fn run_trial(cfg: &ExperimentConfig, built: &BuiltObjective, trial: u64) -> TrialOutput {
    let labels = cfg.solver_labels();
    let trial_policy = SeedPolicy::new(cfg.master_seed).child(Stream::Trial, trial);
    let reeval_policy = trial_policy.child(Stream::Reevaluation, 0);
    let mut records = Vec::new();
    let mut results = Vec::new();
    for (spec, label) in cfg.all_solvers().iter().zip(&labels) {
        let mut handle = ObjectiveHandle::new(cfg.space.clone(), built.simulator.clone()).with_log();
        let cleanup = matches!(spec, SolverSpec::Ah(a) if a.cleanup_kn);
        if let (Some(cap), false) = (spec.eval_budget(&cfg.budget), cleanup) {
            handle = handle.with_cap(cap);
        }
        let clock = Instant::now();
        let run = run_solver(spec, cfg, built, &handle, &trial_policy);
        let wall = if cfg.record_timing { clock.elapsed().as_secs_f64() } else { 0.0 };
        records.extend(to_records(handle.take_log(), trial, label, Phase::Search, cfg.record_timing));
        let run = match run {
            Ok(r) => r,
            Err(source) => {
                return TrialOutput {
                    records,
                    results: Err(HarnessError::Solve { solver: label.clone(), trial, source }),
                }
            }
        };
        let reeval = ObjectiveHandle::new(cfg.space.clone(), built.simulator.clone()).with_log();
        let values = reevaluate(&reeval, run.initial, cfg.reevaluations, &reeval_policy).and_then(|init| {
            let fin = if run.nominal == run.initial {
                init.clone()
            } else {
                reevaluate(&reeval, run.nominal, cfg.reevaluations, &reeval_policy)?
            };
            Ok((init, fin))
        });
        records.extend(to_records(reeval.take_log(), trial, label, Phase::Reeval, cfg.record_timing));
        let (initial_values, final_values) = match values {
            Ok(v) => v,
            Err(e) => return TrialOutput { records, results: Err(e.into()) },
        };
        let mean = |v: &[f64]| crate::objective::summarize_values(v).mean;
        let summary = TrialSummary::new(mean(&initial_values), mean(&final_values), run.stages, run.evaluations, wall);
        let true_mean = built.true_means.as_ref().map(|t| t[run.nominal as usize]);
        let correct = built.optimum.map(|(_, best)| true_mean == Some(best));
        results.push(TrialResult {
            trial,
            solver: label.clone(),
            run,
            initial_values,
            final_values,
            summary,
            true_mean,
            correct,
        });
    }
    TrialOutput { records, results: Ok(results) }
}

fn renumber(mut out: TrialOutput) -> TrialOutput {
    for (i, r) in out.records.iter_mut().enumerate() {
        r.eval_index = i as u64;
    }
    out
}

fn summarize(labels: &[String], results: &[TrialResult]) -> Result<Vec<SolverSummary>, HarnessError> {
    labels
        .iter()
        .map(|label| {
            let mine: Vec<&TrialResult> = results.iter().filter(|r| &r.solver == label).collect();
            let summaries: Vec<TrialSummary> = mine.iter().map(|r| r.summary).collect();
            let aggregate = summarize_trials(&summaries)?;
            let frac = |f: &dyn Fn(&TrialResult) -> Option<f64>| -> Option<f64> {
                let v: Option<Vec<f64>> = mine.iter().map(|r| f(r)).collect();
                v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
            };
            Ok(SolverSummary {
                solver: label.clone(),
                aggregate,
                correct_rate: frac(&|r| r.correct.map(|c| if c { 1.0 } else { 0.0 })),
                mean_true_value: frac(&|r| r.true_mean),
            })
        })
        .collect()
}

/// Pairwise verdicts for every ordered pair `a < b` in configuration order.
pub fn verdict_table(
    labels: &[String],
    results: &[TrialResult],
    pooled: bool,
) -> Result<Vec<VerdictRow>, HarnessError> {
    let mut rows = Vec::new();
    for (i, a) in labels.iter().enumerate() {
        for b in &labels[i + 1..] {
            let mut row = VerdictRow {
                a: a.clone(),
                b: b.clone(),
                trials: 0,
                better: 0,
                comparable: 0,
                worse: 0,
                prop_better: 0.0,
                prop_comparable: 0.0,
                prop_worse: 0.0,
                degenerate: 0,
            };
            for ra in results.iter().filter(|r| &r.solver == a) {
                let Some(rb) = results.iter().find(|r| &r.solver == b && r.trial == ra.trial) else { continue };
                let t = t_test_two_sample(&ra.final_values, &rb.final_values, pooled)?;
                row.trials += 1;
                row.degenerate += t.degenerate as u64;
                match t.verdict() {
                    Verdict::Better => row.better += 1,
                    Verdict::Comparable => row.comparable += 1,
                    Verdict::Worse => row.worse += 1,
                }
            }
            if row.trials > 0 {
                let n = row.trials as f64;
                row.prop_better = row.better as f64 / n;
                row.prop_comparable = row.comparable as f64 / n;
                row.prop_worse = row.worse as f64 / n;
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Runs every trial, writes the outputs when a directory is given (or
/// configured) and returns the report.
///
/// On failure, whatever completed is still written with `"status": "failed"`
/// before the error is returned.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let built = cfg.objective.build(&cfg.space)?;
    let outputs: Vec<TrialOutput> =
        (0..cfg.trials).into_par_iter().map(|t| renumber(run_trial(cfg, &built, t))).collect();
    let labels = cfg.solver_labels();
    let mut records = Vec::new();
    let mut results = Vec::new();
    let mut failure = None;
    for out in outputs {
        records.extend(out.records);
        match out.results {
            Ok(r) => results.extend(r),
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    }
    let tables = if failure.is_none() {
        summarize(&labels, &results).and_then(|s| Ok((s, verdict_table(&labels, &results, cfg.pooled_t_test)?)))
    } else {
        Ok((Vec::new(), Vec::new()))
    };
    let (summaries, verdicts) = match tables {
        Ok(t) => t,
        Err(e) => {
            failure = Some(e);
            (Vec::new(), Vec::new())
        }
    };
    let report = ExperimentReport {
        name: cfg.name.clone(),
        status: if failure.is_some() { Status::Failed } else { Status::Completed },
        error: failure.as_ref().map(|e| e.to_string()),
        optimum: built.optimum,
        results,
        summaries,
        verdicts,
        records,
    };
    if let Some(dir) = out_dir.or(cfg.output.dir.as_deref()) {
        write_outputs(dir, cfg, &report)?;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// Re-evaluates every record at its recorded seed. Returns the position of
/// the first record whose value is not reproduced bit for bit.
pub fn replay(cfg: &ExperimentConfig, records: &[RunRecord]) -> Result<Option<usize>, HarnessError> {
    let built = cfg.objective.build(&cfg.space)?;
    let handle = ObjectiveHandle::new(cfg.space.clone(), built.simulator);
    for (i, r) in records.iter().enumerate() {
        let x = cfg.space.solution_at(r.flat).map_err(ObjectiveError::from)?;
        if handle.evaluate(&x, r.seed)?.value.to_bits() != r.value.to_bits() {
            return Ok(Some(i));
        }
    }
    Ok(None)
}

/// Builds the head-to-head configuration used by `compare`: both solver
/// lists on the shared space and objective, `tests` trials.
pub fn compare_config(
    a: &ExperimentConfig,
    b: &ExperimentConfig,
    tests: u64,
) -> Result<ExperimentConfig, HarnessError> {
    if a.space != b.space {
        return Err(HarnessError::Config("configurations use different search spaces".into()));
    }
    if a.objective != b.objective {
        return Err(HarnessError::Config("configurations use different objectives".into()));
    }
    let mut solvers = a.all_solvers();
    solvers.extend(b.all_solvers());
    let merged = ExperimentConfig {
        name: Some(format!("{} vs {}", a.name.as_deref().unwrap_or("a"), b.name.as_deref().unwrap_or("b"))),
        solver: None,
        solvers,
        trials: tests,
        ..a.clone()
    };
    merged.validate()?;
    Ok(merged)
}
