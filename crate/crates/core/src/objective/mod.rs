//! Evaluation contract: one call produces one replicate performance value.

mod external;
mod replication;
mod seed;
mod synthetic;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{SearchSpace, Solution, SpaceError};

pub use external::{WorkerClient, WorkerPool, DEFAULT_WORKER_TIMEOUT_MS, WORKER_TIMEOUT_ENV};
pub use replication::{holdout_split, permute_indices, permute_with, XorShift64Star};
pub use seed::{mix64, SeedPolicy, Stream, DEFAULT_SEED_RANGE};
pub use synthetic::{Noise, SyntheticObjective};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("objective value {value} outside bounds [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("objective returned non-finite value {0}")]
    NonFinite(f64),
    #[error("evaluation budget of {0} exhausted")]
    BudgetExhausted(u64),
    #[error("worker reported: {0}")]
    Worker(String),
    #[error("worker protocol violation: {0}")]
    Protocol(String),
    #[error("worker i/o failure: {0}")]
    Io(String),
    #[error("worker did not answer within {0} ms")]
    Timeout(u64),
    #[error("split of {m} samples at fraction {train_fraction} leaves an empty side")]
    DegenerateSplit { m: usize, train_fraction: f64 },
    #[error("invalid objective: {0}")]
    Config(String),
}

impl ObjectiveError {
    /// True for failures of an external worker process.
    pub fn is_worker_failure(&self) -> bool {
        matches!(
            self,
            ObjectiveError::Worker(_)
                | ObjectiveError::Protocol(_)
                | ObjectiveError::Io(_)
                | ObjectiveError::Timeout(_)
        )
    }
}

/// Known range `[lo, hi]` of performance values; serialized as `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub const UNIT: Bounds = Bounds { lo: 0.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self, ObjectiveError> {
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok(Self { lo, hi })
        } else {
            Err(ObjectiveError::Config(format!("bounds need a < b, got [{lo}, {hi}]")))
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

impl TryFrom<[f64; 2]> for Bounds {
    type Error = ObjectiveError;
    fn try_from(v: [f64; 2]) -> Result<Self, Self::Error> {
        Bounds::new(v[0], v[1])
    }
}

impl From<Bounds> for [f64; 2] {
    fn from(b: Bounds) -> Self {
        [b.lo, b.hi]
    }
}

/// Something that runs one replication of the simulation for a solution and seed.
/// Must be deterministic in `(x, seed)`.
pub trait Simulator: Send + Sync {
    fn name(&self) -> &str;
    fn bounds(&self) -> Bounds;
    fn simulate(&self, x: &Solution, seed: u64) -> Result<f64, ObjectiveError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub solution: Solution,
    pub flat: u64,
    pub value: f64,
    pub seed: u64,
    /// 0-based position of this evaluation in the handle's sequence.
    pub eval_index: u64,
    /// Solver stage or iteration that requested the evaluation.
    pub stage: u64,
    pub wall_nanos: u64,
}

/// Shared evaluation entry point used by every solver.
///
/// Counts evaluations atomically, enforces an optional hard cap, validates
/// values against the bounds and optionally keeps the full observation log.
pub struct ObjectiveHandle {
    space: SearchSpace,
    sim: Arc<dyn Simulator>,
    counter: AtomicU64,
    cap: Option<u64>,
    stage: AtomicU64,
    log: Option<Mutex<Vec<Observation>>>,
}

impl std::fmt::Debug for ObjectiveHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ObjectiveHandle")
            .field("simulator", &self.sim.name())
            .field("evaluations", &self.evaluations())
            .field("cap", &self.cap)
            .finish()
    }
}

impl ObjectiveHandle {
    pub fn new(space: SearchSpace, sim: Arc<dyn Simulator>) -> Self {
        Self { space, sim, counter: AtomicU64::new(0), cap: None, stage: AtomicU64::new(0), log: None }
    }

    pub fn synthetic(obj: SyntheticObjective) -> Self {
        let space = obj.space().clone();
        Self::new(space, Arc::new(obj))
    }

    /// Refuse evaluations beyond `cap`.
    pub fn with_cap(mut self, cap: u64) -> Self {
        self.cap = Some(cap);
        self
    }

    pub fn with_log(mut self) -> Self {
        self.log = Some(Mutex::new(Vec::new()));
        self
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn bounds(&self) -> Bounds {
        self.sim.bounds()
    }

    pub fn simulator_name(&self) -> &str {
        self.sim.name()
    }

    pub fn evaluations(&self) -> u64 {
        self.counter.load(Ordering::SeqCst)
    }

    pub fn cap(&self) -> Option<u64> {
        self.cap
    }

    pub fn set_stage(&self, stage: u64) {
        self.stage.store(stage, Ordering::Relaxed);
    }

    pub fn take_log(&self) -> Vec<Observation> {
        self.log.as_ref().map(|l| std::mem::take(&mut *l.lock().expect("log poisoned"))).unwrap_or_default()
    }

    /// One replicate of `x` under `seed`.
    pub fn evaluate(&self, x: &Solution, seed: u64) -> Result<Observation, ObjectiveError> {
        let flat = self.space.flat_index(x)?;
        let cap = self.cap;
        let eval_index = self
            .counter
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |c| match cap {
                Some(cap) if c >= cap => None,
                _ => Some(c + 1),
            })
            .map_err(|_| ObjectiveError::BudgetExhausted(cap.unwrap_or(0)))?;
        let start = Instant::now();
        let value = self.sim.simulate(x, seed)?;
        let wall_nanos = start.elapsed().as_nanos() as u64;
        if !value.is_finite() {
            return Err(ObjectiveError::NonFinite(value));
        }
        let b = self.sim.bounds();
        if !b.contains(value) {
            return Err(ObjectiveError::OutOfRange { value, lo: b.lo, hi: b.hi });
        }
        let obs = Observation {
            solution: x.clone(),
            flat,
            value,
            seed,
            eval_index,
            stage: self.stage.load(Ordering::Relaxed),
            wall_nanos,
        };
        if let Some(log) = &self.log {
            log.lock().expect("log poisoned").push(obs.clone());
        }
        Ok(obs)
    }
}

/// Hands out fresh replication indices per solution so that every new
/// observation of a solution uses a new derived seed.
#[derive(Debug, Clone)]
pub struct Replicator {
    policy: SeedPolicy,
    counts: HashMap<u64, u64>,
}

impl Replicator {
    pub fn new(policy: SeedPolicy) -> Self {
        Self { policy, counts: HashMap::new() }
    }

    pub fn policy(&self) -> &SeedPolicy {
        &self.policy
    }

    pub fn replications(&self, flat: u64) -> u64 {
        self.counts.get(&flat).copied().unwrap_or(0)
    }

    pub fn observe(&mut self, obj: &ObjectiveHandle, x: &Solution) -> Result<Observation, ObjectiveError> {
        let flat = obj.space().flat_index(x)?;
        let rep = self.counts.entry(flat).or_insert(0);
        let seed = self.policy.derive_seed(flat, *rep);
        let obs = obj.evaluate(x, seed)?;
        *rep += 1;
        Ok(obs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single replicate.
    pub sd: f64,
    pub replications: u64,
}

/// Mean and SD over values; summation runs over the sorted values so the result
/// does not depend on the order replications were produced in.
pub fn summarize_values(values: &[f64]) -> Estimate {
    let n = values.len();
    if n == 0 {
        return Estimate { mean: f64::NAN, sd: f64::NAN, replications: 0 };
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        let mut dev: Vec<f64> = sorted.iter().map(|v| (v - mean) * (v - mean)).collect();
        dev.sort_by(f64::total_cmp);
        (dev.iter().sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Estimate { mean, sd, replications: n as u64 }
}

/// Sample mean of `reps` replications of `x` with seeds `derive_seed(id(x), 0..reps)`.
pub fn estimate_mean(
    obj: &ObjectiveHandle,
    x: &Solution,
    reps: u64,
    policy: &SeedPolicy,
) -> Result<Estimate, ObjectiveError> {
    if reps == 0 {
        return Err(ObjectiveError::Config("need at least one replication".into()));
    }
    let flat = obj.space().flat_index(x)?;
    let values = (0..reps)
        .map(|r| obj.evaluate(x, policy.derive_seed(flat, r)).map(|o| o.value))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize_values(&values))
}
