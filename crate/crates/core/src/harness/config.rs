//! Experiment configuration, a single JSON document.
//!
//! ```json
//! {
//!   "name": "svm-grid",
//!   "space": {"axes": [{"name": "C", "levels": [0.1, 1, 10]}, {"name": "kernel", "levels": ["rbf", "linear"]}]},
//!   "objective": {"type": "synthetic", "means": [0.8, 0.82, 0.9, 0.85, 0.7, 0.75],
//!                 "noise": {"kind": "gaussian", "sigma": 0.05}, "bounds": [0, 1]},
//!   "solvers": [{"solver": "kn", "r0": 10, "delta": 0.02, "p": 0.05},
//!               {"solver": "baseline-rs", "budget": 60}],
//!   "trials": 10,
//!   "master_seed": 42
//! }
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::ah::{AhConfig, AllocSchedule, Direction};
use crate::kn::KnConfig;
use crate::objective::{Bounds, Noise, Simulator, SyntheticObjective, WorkerPool};
use crate::space::{Initial, Neighborhood, SearchSpace, Solution};
use crate::sr::{MkSchedule, SrConfig, SrStop};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeanSpec {
    /// One true mean per flat index.
    Table(Vec<f64>),
    /// `max(floor, top - slope * manhattan(x, peak))`
    Peak { peak: Solution, top: f64, slope: f64, floor: f64 },
}

impl MeanSpec {
    pub fn table(&self, space: &SearchSpace) -> Result<Vec<f64>, HarnessError> {
        match self {
            MeanSpec::Table(t) => Ok(t.clone()),
            MeanSpec::Peak { peak, top, slope, floor } => {
                space.validate(peak).map_err(|e| HarnessError::Config(format!("peak: {e}")))?;
                Ok(space
                    .iter()
                    .map(|x| {
                        let d: usize = x.0.iter().zip(&peak.0).map(|(a, b)| a.abs_diff(*b)).sum();
                        (top - slope * d as f64).max(*floor)
                    })
                    .collect())
            }
        }
    }
}

fn unit_bounds() -> Bounds {
    Bounds::UNIT
}

fn one_worker() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    Synthetic {
        means: MeanSpec,
        noise: Noise,
        #[serde(default = "unit_bounds")]
        bounds: Bounds,
    },
    External {
        /// Program and arguments of the worker process.
        command: Vec<String>,
        /// Number of worker processes to run side by side.
        #[serde(default = "one_worker")]
        pool: usize,
    },
}

/// A ready-to-use objective plus what is known about its optimum.
#[derive(Clone)]
pub struct BuiltObjective {
    pub simulator: Arc<dyn Simulator>,
    pub true_means: Option<Vec<f64>>,
    pub optimum: Option<(u64, f64)>,
}

impl ObjectiveSpec {
    pub fn build(&self, space: &SearchSpace) -> Result<BuiltObjective, HarnessError> {
        match self {
            ObjectiveSpec::Synthetic { means, noise, bounds } => {
                let table = means.table(space)?;
                let obj = SyntheticObjective::new(space.clone(), table.clone(), *noise, *bounds)
                    .map_err(|e| HarnessError::Config(e.to_string()))?;
                let optimum = obj.optimum();
                Ok(BuiltObjective { simulator: Arc::new(obj), true_means: Some(table), optimum: Some(optimum) })
            }
            ObjectiveSpec::External { command, pool } => {
                let pool = WorkerPool::spawn(command, *pool, space.clone())?;
                Ok(BuiltObjective { simulator: Arc::new(pool), true_means: None, optimum: None })
            }
        }
    }
}

/// Stopping target for the stochastic ruler: a solution or the known optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    Solution(Solution),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrStopSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_evals: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_wall_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_stages: Option<u64>,
}

fn one_f64() -> f64 {
    1.0
}

fn n2() -> Neighborhood {
    Neighborhood::N2
}

fn three() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ruler: Option<Bounds>,
    #[serde(default = "one_f64")]
    pub alpha: f64,
    #[serde(default = "n2")]
    pub neighborhood: Neighborhood,
    #[serde(default)]
    pub mk: MkSchedule,
    #[serde(default)]
    pub initial: Initial,
    #[serde(default)]
    pub stop: SrStopSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AhSpec {
    #[serde(default = "three")]
    pub m: usize,
    #[serde(default)]
    pub alloc: AllocSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_wall_seconds: Option<f64>,
    #[serde(default)]
    pub initial: Initial,
    #[serde(default)]
    pub direction: Direction,
    /// Run KN on the final sampled set after the budget is spent.
    #[serde(default)]
    pub cleanup_kn: bool,
    /// KN settings for the clean-up; defaults to r0 = 10, delta = 0.01, p = 0.05.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cleanup: Option<KnConfig>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BaselineSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_wall_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver")]
pub enum SolverSpec {
    #[serde(rename = "kn")]
    Kn(KnConfig),
    #[serde(rename = "sr")]
    Sr(SrSpec),
    #[serde(rename = "ah")]
    Ah(AhSpec),
    #[serde(rename = "baseline-rs", alias = "rs")]
    BaselineRs(BaselineSpec),
}

impl SolverSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            SolverSpec::Kn(_) => "kn",
            SolverSpec::Sr(_) => "sr",
            SolverSpec::Ah(_) => "ah",
            SolverSpec::BaselineRs(_) => "baseline-rs",
        }
    }

    /// Evaluation cap for one run, falling back to the experiment-wide budget.
    pub fn eval_budget(&self, default: &BudgetSpec) -> Option<u64> {
        match self {
            SolverSpec::Kn(c) => c.budget.or(default.max_evals),
            SolverSpec::Sr(s) => s.stop.max_evals.or(default.max_evals),
            SolverSpec::Ah(a) => a.budget.or(default.max_evals),
            SolverSpec::BaselineRs(b) => b.budget.or(default.max_evals),
        }
    }

    pub fn wall_budget(&self, default: &BudgetSpec) -> Option<f64> {
        match self {
            SolverSpec::Kn(_) => None,
            SolverSpec::Sr(s) => s.stop.max_wall_seconds.or(default.max_wall_seconds),
            SolverSpec::Ah(a) => a.max_wall_seconds.or(default.max_wall_seconds),
            SolverSpec::BaselineRs(b) => b.max_wall_seconds.or(default.max_wall_seconds),
        }
    }

    pub fn kn_config(&self, default: &BudgetSpec) -> Option<KnConfig> {
        match self {
            SolverSpec::Kn(c) => Some(KnConfig { budget: self.eval_budget(default), ..*c }),
            _ => None,
        }
    }

    pub fn sr_config(
        &self,
        default: &BudgetSpec,
        optimum: Option<u64>,
        space: &SearchSpace,
    ) -> Result<Option<SrConfig>, HarnessError> {
        let SolverSpec::Sr(s) = self else { return Ok(None) };
        let target = match &s.stop.target {
            None => None,
            Some(TargetSpec::Solution(x)) => Some(x.clone()),
            Some(TargetSpec::Named(n)) if n == "optimum" => {
                let flat = optimum.ok_or_else(|| {
                    HarnessError::Config("stop target \"optimum\" needs an objective with known means".into())
                })?;
                Some(space.solution_at(flat).map_err(|e| HarnessError::Config(e.to_string()))?)
            }
            Some(TargetSpec::Named(n)) => {
                return Err(HarnessError::Config(format!("unknown stop target \"{n}\"")));
            }
        };
        Ok(Some(SrConfig {
            ruler: s.ruler,
            alpha: s.alpha,
            neighborhood: s.neighborhood,
            mk: s.mk,
            initial: s.initial.clone(),
            stop: SrStop {
                target,
                max_evals: self.eval_budget(default),
                max_wall_seconds: self.wall_budget(default),
                max_stages: s.stop.max_stages,
            },
        }))
    }

    pub fn ah_config(&self, default: &BudgetSpec) -> Result<Option<AhConfig>, HarnessError> {
        let SolverSpec::Ah(a) = self else { return Ok(None) };
        let budget =
            self.eval_budget(default).ok_or_else(|| HarnessError::Config("ah needs an evaluation budget".into()))?;
        Ok(Some(AhConfig {
            m: a.m,
            alloc: a.alloc,
            budget,
            max_wall_seconds: self.wall_budget(default),
            initial: a.initial.clone(),
            direction: a.direction,
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BudgetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_evals: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_wall_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

fn one_trial() -> u64 {
    1
}

fn twenty_five() -> u64 {
    25
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub space: SearchSpace,
    pub objective: ObjectiveSpec,
    /// Shorthand for a one-element `solvers`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub solvers: Vec<SolverSpec>,
    /// Defaults applied to solvers that set no budget of their own.
    #[serde(default)]
    pub budget: BudgetSpec,
    #[serde(default = "one_trial")]
    pub trials: u64,
    #[serde(default)]
    pub master_seed: u64,
    /// Fresh replications drawn for each reported solution after the search.
    #[serde(default = "twenty_five")]
    pub reevaluations: u64,
    /// Pooled (Student) t-test; Welch when false.
    #[serde(default = "yes")]
    pub pooled_t_test: bool,
    /// Keep per-evaluation wall times in the run records (makes them non-reproducible).
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn all_solvers(&self) -> Vec<SolverSpec> {
        self.solver.iter().cloned().chain(self.solvers.iter().cloned()).collect()
    }

    /// Display labels, suffixed with a position when a solver kind repeats.
    pub fn solver_labels(&self) -> Vec<String> {
        let all = self.all_solvers();
        all.iter()
            .enumerate()
            .map(|(i, s)| {
                if all.iter().filter(|o| o.kind() == s.kind()).count() > 1 {
                    format!("{}#{}", s.kind(), i + 1)
                } else {
                    s.kind().to_string()
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let solvers = self.all_solvers();
        if solvers.is_empty() {
            return Err(HarnessError::Config("no solver configured".into()));
        }
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        if self.reevaluations < 2 {
            return Err(HarnessError::Config("reevaluations must be at least 2".into()));
        }
        if self.budget.max_evals == Some(0) {
            return Err(HarnessError::Config("budget must be positive".into()));
        }
        if let ObjectiveSpec::Synthetic { means: MeanSpec::Table(t), .. } = &self.objective {
            if t.len() as u64 != self.space.cardinality() {
                return Err(HarnessError::Config(format!(
                    "mean table has {} entries, space has {} solutions",
                    t.len(),
                    self.space.cardinality()
                )));
            }
        }
        if let ObjectiveSpec::External { command, .. } = &self.objective {
            if command.is_empty() {
                return Err(HarnessError::Config("external objective needs a command".into()));
            }
        }
        for s in &solvers {
            if s.eval_budget(&self.budget) == Some(0) {
                return Err(HarnessError::Config(format!("{} budget must be positive", s.kind())));
            }
            let check = |x: &Initial| match x {
                Initial::Fixed(x) => self.space.validate(x).map_err(|e| HarnessError::Config(e.to_string())),
                Initial::Random => Ok(()),
            };
            match s {
                SolverSpec::Kn(c) => c.validate().map_err(|e| HarnessError::Config(e.to_string()))?,
                SolverSpec::Sr(sr) => check(&sr.initial)?,
                SolverSpec::Ah(ah) => {
                    check(&ah.initial)?;
                    if s.eval_budget(&self.budget).is_none() {
                        return Err(HarnessError::Config("ah needs an evaluation budget".into()));
                    }
                }
                SolverSpec::BaselineRs(_) => {
                    if s.eval_budget(&self.budget).is_none() && s.wall_budget(&self.budget).is_none() {
                        return Err(HarnessError::Config("baseline-rs needs a budget".into()));
                    }
                }
            }
        }
        Ok(())
    }
}
