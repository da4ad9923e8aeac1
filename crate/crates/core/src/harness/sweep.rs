use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, HarnessError, SolverSpec};
use crate::kn::{run_kn, KnConfig};
use crate::objective::{ObjectiveHandle, SeedPolicy, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub delta: f64,
    pub mean_evaluations: f64,
    pub sd_evaluations: f64,
    pub trials: u64,
}

/// Evaluations KN needs to finish, averaged over the configured trials, for each delta.
///
/// Uses the first KN solver in the configuration and requires it to run to
/// completion (no evaluation budget). Rows come back sorted by delta, largest first.
pub fn emit_delta_curve(cfg: &ExperimentConfig, deltas: &[f64]) -> Result<Vec<DeltaRow>, HarnessError> {
    cfg.validate()?;
    let base: KnConfig = cfg
        .all_solvers()
        .iter()
        .find_map(|s| match s {
            SolverSpec::Kn(k) => Some(*k),
            _ => None,
        })
        .ok_or_else(|| HarnessError::Config("delta sweep needs a kn solver".into()))?;
    if base.budget.is_some() || cfg.budget.max_evals.is_some() {
        return Err(HarnessError::Config("delta sweep needs kn to run without a budget".into()));
    }
    if deltas.is_empty() {
        return Err(HarnessError::Config("no delta values given".into()));
    }
    let built = cfg.objective.build(&cfg.space)?;
    let mut sorted = deltas.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted
        .iter()
        .map(|&delta| {
            let kn = KnConfig { delta, ..base };
            kn.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
            let evals: Vec<f64> = (0..cfg.trials)
                .into_par_iter()
                .map(|t| {
                    let policy = SeedPolicy::new(cfg.master_seed).child(Stream::Trial, t);
                    let handle = ObjectiveHandle::new(cfg.space.clone(), built.simulator.clone());
                    run_kn(&handle, &kn, &policy)
                        .map(|o| o.evaluations_used as f64)
                        .map_err(|source| HarnessError::Solve { solver: "kn".into(), trial: t, source })
                })
                .collect::<Result<_, _>>()?;
            let n = evals.len() as f64;
            let mean = evals.iter().sum::<f64>() / n;
            let sd = if evals.len() > 1 {
                (evals.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            Ok(DeltaRow { delta, mean_evaluations: mean, sd_evaluations: sd, trials: cfg.trials })
        })
        .collect()
}

pub fn delta_csv(rows: &[DeltaRow]) -> String {
    let mut s = String::from("delta,mean_evaluations,sd_evaluations,trials\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.delta, r.mean_evaluations, r.sd_evaluations, r.trials);
    }
    s
}

pub fn write_delta_csv(path: &Path, rows: &[DeltaRow]) -> Result<(), HarnessError> {
    std::fs::write(path, delta_csv(rows)).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(extra: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(&format!(
            r#"{{"space": {{"axes": [{{"name": "a", "levels": [1, 2, 3, 4, 5, 6]}}]}},
               "objective": {{"type": "synthetic", "means": [0.5, 0.55, 0.6, 0.62, 0.7, 0.71],
                             "noise": {{"kind": "gaussian", "sigma": 0.05}}}},
               "solver": {{"solver": "kn", "r0": 10, "delta": 0.05, "p": 0.05}},
               "trials": 6 {extra}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn sorted_descending_and_reproducible() {
        let rows = emit_delta_curve(&cfg(""), &[0.02, 0.1, 0.05]).unwrap();
        let d: Vec<f64> = rows.iter().map(|r| r.delta).collect();
        assert_eq!(d, vec![0.1, 0.05, 0.02]);
        assert!(rows.iter().all(|r| r.trials == 6 && r.mean_evaluations >= 60.0));
        assert_eq!(rows, emit_delta_curve(&cfg(""), &[0.1, 0.05, 0.02]).unwrap());
        let csv = delta_csv(&rows);
        assert!(csv.starts_with("delta,mean_evaluations,sd_evaluations,trials\n0.1,"));
    }

    #[test]
    fn rejects_budgeted_kn() {
        let c = cfg(r#", "budget": {"max_evals": 100}"#);
        assert!(matches!(emit_delta_curve(&c, &[0.1]), Err(HarnessError::Config(_))));
        assert!(emit_delta_curve(&cfg(""), &[]).is_err());
        assert!(emit_delta_curve(&cfg(""), &[-0.1]).is_err());
    }
}
