use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{ExperimentConfig, ExperimentReport, HarnessError};

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write(dir: &Path, name: &str, body: &str) -> Result<(), HarnessError> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|source| HarnessError::Io { path, source })
}

/// Writes `records.jsonl`, `trials.csv`, `summary.csv`, `verdicts.csv` and `summary.json` into `dir`.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, report: &ExperimentReport) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io { path: dir.to_path_buf(), source })?;

    let mut records = String::new();
    for r in &report.records {
        records.push_str(&serde_json::to_string(r).expect("record serializes"));
        records.push('\n');
    }
    write(dir, "records.jsonl", &records)?;

    let mut trials = String::from(
        "trial,solver,initial,nominal,nominal_solution,best_observed,best_observed_mean,\
         initial_value,final_value,improvement,stages,evaluations,wall_seconds,true_mean,correct\n",
    );
    for r in &report.results {
        let s = &r.summary;
        let _ = writeln!(
            trials,
            "{},{},{},{},\"{}\",{},{},{},{},{},{},{},{},{},{}",
            r.trial,
            r.solver,
            r.run.initial,
            r.run.nominal,
            r.run.nominal_solution,
            opt(r.run.best_observed.map(|b| b.0)),
            opt(r.run.best_observed.map(|b| b.1)),
            s.initial_value,
            s.final_value,
            s.improvement,
            s.stages,
            s.evaluations,
            s.wall_seconds,
            opt(r.true_mean),
            opt(r.correct),
        );
    }
    write(dir, "trials.csv", &trials)?;

    let mut summary = String::from(
        "solver,trials,mean_improvement,sd_improvement,mean_stages,mean_evaluations,degenerate,correct_rate,mean_true_value\n",
    );
    for s in &report.summaries {
        let a = &s.aggregate;
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{},{},{}",
            s.solver,
            a.trials,
            a.mean_improvement,
            a.sd_improvement,
            a.mean_stages,
            a.mean_evaluations,
            a.degenerate,
            opt(s.correct_rate),
            opt(s.mean_true_value),
        );
    }
    write(dir, "summary.csv", &summary)?;

    let mut verdicts =
        String::from("a,b,trials,better,comparable,worse,prop_better,prop_comparable,prop_worse,degenerate\n");
    for v in &report.verdicts {
        let _ = writeln!(
            verdicts,
            "{},{},{},{},{},{},{},{},{},{}",
            v.a,
            v.b,
            v.trials,
            v.better,
            v.comparable,
            v.worse,
            v.prop_better,
            v.prop_comparable,
            v.prop_worse,
            v.degenerate
        );
    }
    write(dir, "verdicts.csv", &verdicts)?;

    let summary = serde_json::json!({
        "name": report.name,
        "status": report.status,
        "error": report.error,
        "partial": report.error.is_some(),
        "config": cfg,
        "optimum": report.optimum,
        "solvers": report.summaries,
        "verdicts": report.verdicts,
        "trials": report.results.iter().map(|r| serde_json::json!({
            "trial": r.trial,
            "solver": r.solver,
            "run": r.run,
            "summary": r.summary,
            "true_mean": r.true_mean,
            "correct": r.correct,
        })).collect::<Vec<_>>(),
    });
    write(dir, "summary.json", &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"))
}
