//! Stochastic ruler random search, maximization form.
//!
//! At stage `k` a candidate `z` is drawn uniformly from `N(x_k)` and tested
//! up to `M_k` times: each test pairs a fresh replicate `h(z)` with a fresh
//! ruler draw `u ~ U(a, b)` and succeeds when `h(z) > u`. The original rule
//! moves to `z` only if all `M_k` tests succeed; the alpha variant needs
//! `ceil(alpha * M_k)` successes. Testing stops as soon as the verdict is
//! decided, so rejected candidates usually cost fewer than `M_k` evaluations.

use std::collections::HashMap;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Partial, SolveError};
use crate::objective::{Bounds, ObjectiveError, ObjectiveHandle, Replicator, SeedPolicy, Stream};
use crate::space::{Initial, Neighborhood, Solution};

/// `M_k = ceil(ln(k + 10) / ln 5)`, computed exactly as the least `M` with `5^M >= k + 10`.
pub fn mk_schedule_default(k: u64) -> u32 {
    let target = k as u128 + 10;
    let mut m = 0u32;
    let mut pow = 1u128;
    while pow < target {
        pow *= 5;
        m += 1;
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MkSchedule {
    /// `ceil(ln(k + 10) / ln 5)`
    #[default]
    Log5,
    Constant(u32),
}

impl MkSchedule {
    pub fn tests_at(&self, k: u64) -> u32 {
        match *self {
            MkSchedule::Log5 => mk_schedule_default(k),
            MkSchedule::Constant(m) => m,
        }
    }
}

/// Successes needed out of `m` tests: `ceil(alpha * m)`, at least one.
pub fn acceptance_threshold(m: u32, alpha: f64) -> u32 {
    // the epsilon keeps e.g. 0.8 * 5 from rounding up to 5
    ((alpha * m as f64 - 1e-9).ceil() as u32).clamp(1, m.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RulerVerdict {
    pub accepted: bool,
    /// Tests run, equal to the evaluations spent.
    pub tests: u32,
    pub successes: u32,
}

/// Runs up to `m` ruler tests, stopping once acceptance or rejection is certain.
pub fn ruler_test<E>(
    m: u32,
    alpha: f64,
    mut observe: impl FnMut() -> Result<f64, E>,
    mut ruler: impl FnMut() -> f64,
) -> Result<RulerVerdict, E> {
    let need = acceptance_threshold(m, alpha);
    let mut successes = 0;
    let mut tests = 0;
    while tests < m {
        let h = observe()?;
        let u = ruler();
        tests += 1;
        if h > u {
            successes += 1;
        }
        if successes >= need {
            return Ok(RulerVerdict { accepted: true, tests, successes });
        }
        if successes + (m - tests) < need {
            break;
        }
    }
    Ok(RulerVerdict { accepted: false, tests, successes })
}

/// Ruler test of candidate `z` against the objective, using the replicator's
/// fresh seeds and `rng` for the ruler draws.
pub fn sr_accept_test<R: Rng + ?Sized>(
    obj: &ObjectiveHandle,
    z: &Solution,
    ruler: Bounds,
    m: u32,
    alpha: f64,
    replicator: &mut Replicator,
    rng: &mut R,
) -> Result<RulerVerdict, ObjectiveError> {
    ruler_test(
        m,
        alpha,
        || replicator.observe(obj, z).map(|o| o.value),
        || ruler.lo + (ruler.hi - ruler.lo) * rng.random::<f64>(),
    )
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrStop {
    /// Stop once the current solution equals this one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Solution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_evals: Option<u64>,
    /// Checked between stages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_wall_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_stages: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrConfig {
    /// Range of the uniform ruler; defaults to the objective bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ruler: Option<Bounds>,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "default_neighborhood")]
    pub neighborhood: Neighborhood,
    #[serde(default)]
    pub mk: MkSchedule,
    #[serde(default)]
    pub initial: Initial,
    pub stop: SrStop,
}

fn one() -> f64 {
    1.0
}

fn default_neighborhood() -> Neighborhood {
    Neighborhood::N2
}

impl SrConfig {
    pub fn new(stop: SrStop) -> Self {
        Self {
            ruler: None,
            alpha: 1.0,
            neighborhood: Neighborhood::N2,
            mk: MkSchedule::Log5,
            initial: Initial::Random,
            stop,
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(SolveError::Config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if let MkSchedule::Constant(0) = self.mk {
            return Err(SolveError::Config("M_k must be at least 1".into()));
        }
        let s = &self.stop;
        if s.target.is_none() && s.max_evals.is_none() && s.max_wall_seconds.is_none() && s.max_stages.is_none() {
            return Err(SolveError::Config("stochastic ruler needs a stopping criterion".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetReached,
    EvaluationBudget,
    WallClock,
    StageLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrStage {
    pub k: u64,
    pub current: u64,
    pub candidate: u64,
    pub tests: u32,
    pub successes: u32,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrTrace {
    pub stages: Vec<SrStage>,
    pub initial: Solution,
    pub final_solution: Solution,
    pub evaluations_used: u64,
    /// Final value of `k`.
    pub stages_count: u64,
    pub stop_reason: Option<StopReason>,
    /// Solution with the highest mean over the replicates observed during the search.
    pub best_observed: Option<(u64, f64)>,
}

pub fn run_sr(obj: &ObjectiveHandle, config: &SrConfig, policy: &SeedPolicy) -> Result<SrTrace, SolveError> {
    config.validate()?;
    let space = obj.space();
    if space.cardinality() < 2 {
        return Err(SolveError::Space(crate::space::SpaceError::EmptyNeighborhood));
    }
    let ruler = config.ruler.unwrap_or_else(|| obj.bounds());
    if let Some(t) = &config.stop.target {
        space.validate(t)?;
    }
    if let Some(max) = config.stop.max_evals {
        let first = config.mk.tests_at(0) as u64;
        if max < first {
            return Err(SolveError::Config(format!("budget {max} is smaller than one stage ({first} tests)")));
        }
    }

    let x0 = config.initial.resolve(space, &mut policy.rng(Stream::Initial))?;
    let mut candidate_rng = policy.rng(Stream::Candidate);
    let mut ruler_rng = policy.rng(Stream::Ruler);
    let mut rep = Replicator::new(*policy);
    let mut observed: HashMap<u64, (f64, u64)> = HashMap::new();
    let start_evals = obj.evaluations();
    let clock = Instant::now();

    let mut trace = SrTrace {
        stages: Vec::new(),
        initial: x0.clone(),
        final_solution: x0.clone(),
        evaluations_used: 0,
        stages_count: 0,
        stop_reason: None,
        best_observed: None,
    };
    let mut x = x0;
    let mut x_flat = space.flat_index(&x)?;
    let mut k = 0u64;

    let reason = loop {
        if config.stop.target.as_ref() == Some(&x) {
            break StopReason::TargetReached;
        }
        if config.stop.max_stages.is_some_and(|s| k >= s) {
            break StopReason::StageLimit;
        }
        if config.stop.max_wall_seconds.is_some_and(|s| clock.elapsed().as_secs_f64() >= s) {
            break StopReason::WallClock;
        }
        let m = config.mk.tests_at(k);
        let used = obj.evaluations() - start_evals;
        if config.stop.max_evals.is_some_and(|b| used + m as u64 > b) {
            break StopReason::EvaluationBudget;
        }

        let z = space.sample_neighbor(config.neighborhood, &x, &mut candidate_rng)?;
        let z_flat = space.flat_index(&z)?;
        obj.set_stage(k);
        let verdict = ruler_test(
            m,
            config.alpha,
            || {
                let v = rep.observe(obj, &z)?.value;
                let e = observed.entry(z_flat).or_insert((0.0, 0));
                e.0 += v;
                e.1 += 1;
                Ok(v)
            },
            || ruler.lo + (ruler.hi - ruler.lo) * ruler_rng.random::<f64>(),
        );
        let verdict = match verdict {
            Ok(v) => v,
            Err(e) => {
                trace.final_solution = x;
                trace.stages_count = k;
                trace.evaluations_used = obj.evaluations() - start_evals;
                trace.best_observed = best_of(&observed);
                return Err(SolveError::objective(e, trace.evaluations_used, Partial::Sr(trace)));
            }
        };
        trace.stages.push(SrStage {
            k,
            current: x_flat,
            candidate: z_flat,
            tests: verdict.tests,
            successes: verdict.successes,
            accepted: verdict.accepted,
        });
        if verdict.accepted {
            x = z;
            x_flat = z_flat;
        }
        k += 1;
    };

    trace.final_solution = x;
    trace.stages_count = k;
    trace.evaluations_used = obj.evaluations() - start_evals;
    trace.stop_reason = Some(reason);
    trace.best_observed = best_of(&observed);
    Ok(trace)
}

fn best_of(observed: &HashMap<u64, (f64, u64)>) -> Option<(u64, f64)> {
    let mut entries: Vec<(u64, f64)> = observed.iter().map(|(&id, &(s, n))| (id, s / n as f64)).collect();
    entries.sort_by_key(|e| e.0);
    entries.into_iter().reduce(|a, b| if b.1 > a.1 { b } else { a })
}
