use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Partial, SolveError};
use crate::objective::{ObjectiveHandle, Replicator, SeedPolicy, Stream};
use crate::space::Solution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    /// Solution behind the largest single observation.
    pub best: Solution,
    pub best_flat: u64,
    pub best_value: f64,
    /// Flat index of every draw, in order.
    pub draws: Vec<u64>,
    pub evaluations_used: u64,
}

/// Uniform random search: one observation per draw, keep the argmax.
///
/// Stops after `budget` draws or once `max_wall_seconds` has elapsed,
/// whichever comes first. Ties keep the earlier draw.
pub fn baseline_random_search(
    obj: &ObjectiveHandle,
    budget: Option<u64>,
    max_wall_seconds: Option<f64>,
    policy: &SeedPolicy,
) -> Result<BaselineOutcome, SolveError> {
    if budget.is_none() && max_wall_seconds.is_none() {
        return Err(SolveError::Config("random search needs a budget".into()));
    }
    if budget == Some(0) {
        return Err(SolveError::Config("random search budget must be positive".into()));
    }
    let space = obj.space();
    let n = space.cardinality();
    let mut rng = policy.rng(Stream::Baseline);
    let mut rep = Replicator::new(*policy);
    let start = obj.evaluations();
    let clock = Instant::now();
    let mut best: Option<(u64, f64)> = None;
    let mut draws = Vec::new();
    loop {
        let used = obj.evaluations() - start;
        if budget.is_some_and(|b| used >= b) {
            break;
        }
        if max_wall_seconds.is_some_and(|w| used > 0 && clock.elapsed().as_secs_f64() >= w) {
            break;
        }
        let flat = rng.random_range(0..n);
        let x = space.solution_at(flat)?;
        obj.set_stage(draws.len() as u64);
        let o = rep
            .observe(obj, &x)
            .map_err(|e| SolveError::objective(e, obj.evaluations() - start, Partial::Baseline { best }))?;
        draws.push(flat);
        if best.is_none_or(|(_, v)| o.value > v) {
            best = Some((flat, o.value));
        }
    }
    let (best_flat, best_value) = best.expect("at least one draw");
    Ok(BaselineOutcome {
        best: space.solution_at(best_flat)?,
        best_flat,
        best_value,
        draws,
        evaluations_used: obj.evaluations() - start,
    })
}
