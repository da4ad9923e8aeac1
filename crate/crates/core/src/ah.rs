//! Adaptive hyperbox locally convergent random search.
//!
//! Each iteration builds the most promising area (MPA): the tightest box
//! around the incumbent whose faces are the nearest visited coordinates on
//! either side, per axis. `m` distinct solutions are drawn uniformly from the
//! MPA, every member of `B_k = sample + incumbent` gets `n(k)` new
//! observations, and the incumbent becomes the best cumulative mean in `B_k`.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Partial, SolveError};
use crate::objective::{ObjectiveHandle, Replicator, SeedPolicy, Stream};
use crate::space::{Initial, SearchSpace, Solution};

/// MPAs up to this size are enumerated and sampled exactly; larger ones use rejection.
const ENUMERATE_LIMIT: u128 = 1 << 14;

/// `max(1, min(5, ceil(5 (ln k)^1.01)))`
pub fn ah_alloc_default(k: u64) -> u64 {
    let k = k.max(1) as f64;
    let raw = (5.0 * k.ln().powf(1.01)).ceil();
    (raw as u64).clamp(1, 5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocSchedule {
    #[default]
    Default,
    Constant(u64),
}

impl AllocSchedule {
    pub fn at(&self, k: u64) -> u64 {
        match *self {
            AllocSchedule::Default => ah_alloc_default(k),
            AllocSchedule::Constant(n) => n.max(1),
        }
    }
}

/// Which way the incumbent rule points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Maximize,
    Minimize,
}

impl Direction {
    fn improves(self, candidate: f64, best: f64) -> bool {
        match self {
            Direction::Maximize => candidate > best,
            Direction::Minimize => candidate < best,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AhConfig {
    #[serde(default = "three")]
    pub m: usize,
    #[serde(default)]
    pub alloc: AllocSchedule,
    pub budget: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_wall_seconds: Option<f64>,
    #[serde(default)]
    pub initial: Initial,
    #[serde(default)]
    pub direction: Direction,
}

fn three() -> usize {
    3
}

impl AhConfig {
    pub fn new(budget: u64) -> Self {
        Self {
            m: 3,
            alloc: AllocSchedule::Default,
            budget,
            max_wall_seconds: None,
            initial: Initial::Random,
            direction: Direction::Maximize,
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if self.m == 0 {
            return Err(SolveError::Config("m must be at least 1".into()));
        }
        let first = self.alloc.at(1) * (self.m as u64 + 1);
        if self.budget < first {
            return Err(SolveError::Config(format!(
                "budget {} is below one iteration ({first} evaluations)",
                self.budget
            )));
        }
        Ok(())
    }
}

/// Inclusive per-axis index bounds of the hyperbox around `x_opt`.
pub fn hyperbox_bounds<'a>(
    visited: impl IntoIterator<Item = &'a Solution>,
    x_opt: &Solution,
    space: &SearchSpace,
) -> Vec<(usize, usize)> {
    let mut bounds: Vec<(usize, usize)> = space.arities().map(|a| (0, a - 1)).collect();
    let mut lower: Vec<Option<usize>> = vec![None; bounds.len()];
    let mut upper: Vec<Option<usize>> = vec![None; bounds.len()];
    for y in visited {
        for (d, (&yd, &xd)) in y.0.iter().zip(&x_opt.0).enumerate() {
            if yd < xd {
                lower[d] = Some(lower[d].map_or(yd, |l| l.max(yd)));
            } else if yd > xd {
                upper[d] = Some(upper[d].map_or(yd, |u| u.min(yd)));
            }
        }
    }
    for (d, b) in bounds.iter_mut().enumerate() {
        if let Some(l) = lower[d] {
            b.0 = l;
        }
        if let Some(u) = upper[d] {
            b.1 = u;
        }
    }
    bounds
}

fn box_size(bounds: &[(usize, usize)]) -> u128 {
    bounds.iter().map(|&(l, u)| (u - l + 1) as u128).product()
}

fn box_points(bounds: &[(usize, usize)]) -> Vec<Solution> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = bounds.iter().map(|b| b.0).collect();
    loop {
        out.push(Solution(cur.clone()));
        let mut d = bounds.len();
        loop {
            if d == 0 {
                return out;
            }
            d -= 1;
            if cur[d] < bounds[d].1 {
                cur[d] += 1;
                break;
            }
            cur[d] = bounds[d].0;
        }
    }
}

/// Up to `m` distinct uniform draws from the box minus the incumbent.
pub fn sample_mpa<R: Rng + ?Sized>(
    bounds: &[(usize, usize)],
    m: usize,
    incumbent: &Solution,
    rng: &mut R,
) -> Vec<Solution> {
    let eligible = box_size(bounds) - 1;
    if eligible == 0 || m == 0 {
        return Vec::new();
    }
    if eligible <= ENUMERATE_LIMIT {
        let pool: Vec<Solution> = box_points(bounds).into_iter().filter(|y| y != incumbent).collect();
        if pool.len() <= m {
            return pool;
        }
        return index::sample(rng, pool.len(), m).into_iter().map(|i| pool[i].clone()).collect();
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(m);
    while out.len() < m {
        let y = Solution(bounds.iter().map(|&(l, u)| rng.random_range(l..=u)).collect());
        if &y != incumbent && seen.insert(y.clone()) {
            out.push(y);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisitStats {
    pub observations: u64,
    pub sum: f64,
}

impl VisitStats {
    pub fn mean(&self) -> f64 {
        self.sum / self.observations as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AhState {
    /// Every visited solution by flat index.
    pub visited: BTreeMap<u64, VisitStats>,
    pub incumbent: u64,
    pub k: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AhIteration {
    pub k: u64,
    pub bounds: Vec<(usize, usize)>,
    pub sampled: Vec<u64>,
    pub alloc: u64,
    /// Incumbent after this iteration.
    pub incumbent: u64,
    pub incumbent_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AhTrace {
    pub initial: Solution,
    /// Step 0 followed by iterations 1, 2, ...; step 0 has empty bounds and no samples.
    pub iterations: Vec<AhIteration>,
    pub state: AhState,
    pub incumbent: Solution,
    pub evaluations_used: u64,
}

pub fn run_ah(obj: &ObjectiveHandle, config: &AhConfig, policy: &SeedPolicy) -> Result<AhTrace, SolveError> {
    config.validate()?;
    let space = obj.space();
    let x0 = config.initial.resolve(space, &mut policy.rng(Stream::Initial))?;
    let x0_flat = space.flat_index(&x0)?;
    let mut rng = policy.rng(Stream::HyperboxSample);
    let mut rep = Replicator::new(*policy);
    let start_evals = obj.evaluations();
    let clock = Instant::now();

    let mut state = AhState { visited: BTreeMap::new(), incumbent: x0_flat, k: 0 };
    let mut trace = AhTrace {
        initial: x0.clone(),
        iterations: Vec::new(),
        state: AhState::default(),
        incumbent: x0.clone(),
        evaluations_used: 0,
    };

    macro_rules! bail {
        ($e:expr) => {{
            trace.evaluations_used = obj.evaluations() - start_evals;
            trace.incumbent = space.solution_at(state.incumbent)?;
            trace.state = state;
            return Err(SolveError::objective($e, trace.evaluations_used, Partial::Ah(trace)));
        }};
    }

    obj.set_stage(0);
    let n0 = config.alloc.at(1);
    let mut s0 = VisitStats { observations: 0, sum: 0.0 };
    for _ in 0..n0 {
        match rep.observe(obj, &x0) {
            Ok(o) => {
                s0.observations += 1;
                s0.sum += o.value;
            }
            Err(e) => bail!(e),
        }
    }
    state.visited.insert(x0_flat, s0);
    trace.iterations.push(AhIteration {
        k: 0,
        bounds: Vec::new(),
        sampled: Vec::new(),
        alloc: n0,
        incumbent: x0_flat,
        incumbent_mean: s0.mean(),
    });

    loop {
        if config.max_wall_seconds.is_some_and(|s| clock.elapsed().as_secs_f64() >= s) {
            break;
        }
        let k = state.k + 1;
        let incumbent = space.solution_at(state.incumbent)?;
        let visited: Vec<Solution> = state.visited.keys().map(|&i| space.solution_at(i)).collect::<Result<_, _>>()?;
        let bounds = hyperbox_bounds(&visited, &incumbent, space);
        let sample = sample_mpa(&bounds, config.m, &incumbent, &mut rng);
        let mut members: Vec<u64> = sample.iter().map(|y| space.flat_index(y)).collect::<Result<_, _>>()?;
        let sampled = members.clone();
        members.push(state.incumbent);
        members.sort_unstable();

        let alloc = config.alloc.at(k);
        let used = obj.evaluations() - start_evals;
        if used + alloc * members.len() as u64 > config.budget {
            break;
        }
        state.k = k;
        obj.set_stage(k);
        for &id in &members {
            let y = space.solution_at(id)?;
            for _ in 0..alloc {
                match rep.observe(obj, &y) {
                    Ok(o) => {
                        let s = state.visited.entry(id).or_insert(VisitStats { observations: 0, sum: 0.0 });
                        s.observations += 1;
                        s.sum += o.value;
                    }
                    Err(e) => bail!(e),
                }
            }
        }
        // members are sorted, so a strict comparison keeps the lowest index on ties
        let mut best = members[0];
        for &id in &members[1..] {
            if config.direction.improves(state.visited[&id].mean(), state.visited[&best].mean()) {
                best = id;
            }
        }
        state.incumbent = best;
        trace.iterations.push(AhIteration {
            k,
            bounds,
            sampled,
            alloc,
            incumbent: best,
            incumbent_mean: state.visited[&best].mean(),
        });
    }

    trace.evaluations_used = obj.evaluations() - start_evals;
    trace.incumbent = space.solution_at(state.incumbent)?;
    trace.state = state;
    Ok(trace)
}
