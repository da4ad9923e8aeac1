//! KN fully sequential indifference-zone ranking and selection.
//!
//! Every candidate gets `r0` replications; pairwise variances of the
//! differences are frozen at that point. Each following round adds one
//! replication per survivor and screens with the continuation bound
//! `G_nl(k)`, until one survivor is left or the evaluation budget would be
//! overrun by the next full round. Larger values are better.

use serde::{Deserialize, Serialize};

use crate::error::{Partial, SolveError};
use crate::objective::{ObjectiveHandle, Replicator, SeedPolicy};
use crate::space::Solution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnConfig {
    pub r0: u64,
    pub delta: f64,
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
}

impl KnConfig {
    pub fn new(r0: u64, delta: f64, p: f64) -> Self {
        Self { r0, delta, p, budget: None }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if self.r0 < 2 {
            return Err(SolveError::Config(format!("r0 must be at least 2, got {}", self.r0)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(SolveError::Config(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(SolveError::Config(format!("p must lie in (0, 1), got {}", self.p)));
        }
        Ok(())
    }
}

/// `(eta, h2)` for `n` candidates.
///
/// `eta = ((2p / (n - 1))^(-2 / (r0 - 1)) - 1) / 2`, `h2 = 2 eta (r0 - 1)`.
pub fn kn_constants(n: u64, r0: u64, p: f64) -> Result<(f64, f64), SolveError> {
    if n < 2 {
        return Err(SolveError::Config("a single candidate needs no selection".into()));
    }
    if r0 < 2 {
        return Err(SolveError::Config(format!("r0 must be at least 2, got {r0}")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(SolveError::Config(format!("p must lie in (0, 1), got {p}")));
    }
    let base = 2.0 * p / (n - 1) as f64;
    let eta = 0.5 * (base.powf(-2.0 / (r0 - 1) as f64) - 1.0);
    Ok((eta, 2.0 * eta * (r0 - 1) as f64))
}

/// Sample variance of the paired differences `a_j - b_j`.
pub fn pairwise_variance(a: &[f64], b: &[f64]) -> Result<f64, SolveError> {
    if a.len() != b.len() {
        return Err(SolveError::Config(format!("sample lengths differ: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(SolveError::Config("need at least two paired samples".into()));
    }
    let n = a.len() as f64;
    let mean_diff = a.iter().zip(b).map(|(x, y)| x - y).sum::<f64>() / n;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y - mean_diff).powi(2)).sum::<f64>() / (n - 1.0))
}

/// `G_nl(k) = max(0, delta / (2k) * (h2 * s2 / delta^2 - k))`.
pub fn continuation_bound(k: u64, delta: f64, h2: f64, s2: f64) -> f64 {
    let k = k as f64;
    (delta / (2.0 * k) * (h2 * s2 / (delta * delta) - k)).max(0.0)
}

/// Keeps entry `n` iff `mean_n >= mean_l - bound(n, l)` for every other entry `l`.
/// `bound` receives positions into `means`. Returns the kept ids in input order.
pub fn screen(means: &[(u64, f64)], bound: impl Fn(usize, usize) -> f64) -> Vec<u64> {
    means
        .iter()
        .enumerate()
        .filter(|&(n, &(_, mean_n))| {
            means.iter().enumerate().all(|(l, &(_, mean_l))| l == n || mean_n >= mean_l - bound(n, l))
        })
        .map(|(_, &(id, _))| id)
        .collect()
}

/// Packed symmetric matrix with zero diagonal.
#[derive(Debug, Clone)]
struct PairMatrix {
    n: usize,
    data: Vec<f64>,
}

impl PairMatrix {
    fn new(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n.saturating_sub(1) / 2] }
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] = v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnMode {
    Completed,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateStats {
    pub id: u64,
    pub solution: Solution,
    pub mean: f64,
    pub replications: u64,
}

/// Snapshot of the procedure, also attached to errors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnState {
    /// Surviving candidates with their running sums.
    pub survivors: Vec<(u64, f64)>,
    /// Replications per survivor.
    pub k: u64,
    pub eta: f64,
    pub h2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnOutcome {
    pub mode: KnMode,
    pub winner: Option<u64>,
    /// The winner alone when completed, otherwise every survivor.
    pub survivors: Vec<CandidateStats>,
    pub evaluations_used: u64,
    /// Replications per survivor at termination.
    pub iterations: u64,
    /// Survivor count after screening at each `k`, starting at the first-stage `k`.
    pub survivor_history: Vec<usize>,
    /// True when the remaining survivors can never be separated (zero variance, equal means).
    pub tied: bool,
}

impl KnOutcome {
    /// The survivor with the largest mean (lowest id on ties).
    pub fn best(&self) -> &CandidateStats {
        self.survivors.iter().reduce(|a, b| if b.mean > a.mean { b } else { a }).expect("outcome always has a survivor")
    }
}

/// KN over the whole space.
pub fn run_kn(obj: &ObjectiveHandle, config: &KnConfig, policy: &SeedPolicy) -> Result<KnOutcome, SolveError> {
    let candidates: Vec<u64> = (0..obj.space().cardinality()).collect();
    run_kn_on(obj, &candidates, config, policy)
}

/// KN over a subset of flat indices (e.g. a clean-up among local search results).
pub fn run_kn_on(
    obj: &ObjectiveHandle,
    candidates: &[u64],
    config: &KnConfig,
    policy: &SeedPolicy,
) -> Result<KnOutcome, SolveError> {
    config.validate()?;
    let space = obj.space();
    let mut ids = candidates.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        return Err(SolveError::Config("no candidates to select from".into()));
    }
    let solutions = ids.iter().map(|&i| space.solution_at(i)).collect::<Result<Vec<_>, _>>()?;
    let n = ids.len();
    let start_evals = obj.evaluations();
    let used = |obj: &ObjectiveHandle| obj.evaluations() - start_evals;
    let stats = |pos: usize, sum: f64, k: u64| CandidateStats {
        id: ids[pos],
        solution: solutions[pos].clone(),
        mean: sum / k as f64,
        replications: k,
    };

    if n == 1 {
        return Ok(KnOutcome {
            mode: KnMode::Completed,
            winner: Some(ids[0]),
            survivors: vec![CandidateStats {
                id: ids[0],
                solution: solutions[0].clone(),
                mean: f64::NAN,
                replications: 0,
            }],
            evaluations_used: 0,
            iterations: 0,
            survivor_history: vec![1],
            tied: false,
        });
    }
    if let Some(b) = config.budget {
        if b < n as u64 {
            return Err(SolveError::Config(format!(
                "budget {b} cannot give each of the {n} candidates one evaluation"
            )));
        }
    }
    let r0 = match config.budget {
        Some(b) => config.r0.min(b / n as u64),
        None => config.r0,
    };

    let mut rep = Replicator::new(*policy);
    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(r0 as usize); n];
    let snapshot = |sums: &[f64], alive: &[usize], k: u64, eta: f64, h2: f64| KnState {
        survivors: alive.iter().map(|&p| (ids[p], sums[p])).collect(),
        k,
        eta,
        h2,
    };

    obj.set_stage(0);
    for (pos, x) in solutions.iter().enumerate() {
        for _ in 0..r0 {
            match rep.observe(obj, x) {
                Ok(o) => samples[pos].push(o.value),
                Err(e) => {
                    let sums: Vec<f64> = samples.iter().map(|s| s.iter().sum()).collect();
                    let all: Vec<usize> = (0..n).collect();
                    return Err(SolveError::objective(
                        e,
                        used(obj),
                        Partial::Kn(snapshot(&sums, &all, 0, f64::NAN, f64::NAN)),
                    ));
                }
            }
        }
    }
    let mut sums: Vec<f64> = samples.iter().map(|s| s.iter().sum()).collect();
    let mut alive: Vec<usize> = (0..n).collect();
    let mut k = r0;

    if r0 < 2 {
        // not enough data for variances: the budget only covers screening inputs
        return Ok(KnOutcome {
            mode: KnMode::BudgetExhausted,
            winner: None,
            survivors: alive.iter().map(|&p| stats(p, sums[p], k)).collect(),
            evaluations_used: used(obj),
            iterations: k,
            survivor_history: vec![n],
            tied: false,
        });
    }

    let (eta, h2) = kn_constants(n as u64, r0, config.p)?;
    let mut s2 = PairMatrix::new(n);
    for i in 0..n {
        for j in i + 1..n {
            s2.set(i, j, pairwise_variance(&samples[i], &samples[j])?);
        }
    }
    drop(samples);

    let delta = config.delta;
    let mut history = Vec::new();
    let mut tied = false;
    loop {
        let means: Vec<(u64, f64)> = alive.iter().map(|&p| (p as u64, sums[p] / k as f64)).collect();
        let kept = screen(&means, |a, b| continuation_bound(k, delta, h2, s2.get(alive[a], alive[b])));
        alive = kept.into_iter().map(|p| p as usize).collect();
        history.push(alive.len());

        if alive.len() == 1 {
            break;
        }
        let stuck = alive.iter().enumerate().all(|(a, &i)| {
            alive[a + 1..].iter().all(|&j| s2.get(i, j) == 0.0 && sums[i] / k as f64 == sums[j] / k as f64)
        });
        if stuck {
            tied = true;
            alive.truncate(1);
            break;
        }
        if let Some(b) = config.budget {
            if used(obj) + alive.len() as u64 > b {
                return Ok(KnOutcome {
                    mode: KnMode::BudgetExhausted,
                    winner: None,
                    survivors: alive.iter().map(|&p| stats(p, sums[p], k)).collect(),
                    evaluations_used: used(obj),
                    iterations: k,
                    survivor_history: history,
                    tied: false,
                });
            }
        }
        k += 1;
        obj.set_stage(k);
        for &p in &alive {
            match rep.observe(obj, &solutions[p]) {
                Ok(o) => sums[p] += o.value,
                Err(e) => {
                    return Err(SolveError::objective(
                        e,
                        used(obj),
                        Partial::Kn(snapshot(&sums, &alive, k - 1, eta, h2)),
                    ))
                }
            }
        }
    }

    let w = alive[0];
    Ok(KnOutcome {
        mode: KnMode::Completed,
        winner: Some(ids[w]),
        survivors: vec![stats(w, sums[w], k)],
        evaluations_used: used(obj),
        iterations: k,
        survivor_history: history,
        tied,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{Bounds, Noise, SyntheticObjective};
    use crate::space::SearchSpace;

    /// Step-1 constants evaluated through logarithms, independent of `powf`.
    fn constants_oracle(n: f64, r0: f64, p: f64) -> (f64, f64) {
        let eta = 0.5 * ((-2.0 / (r0 - 1.0) * (2.0 * p / (n - 1.0)).ln()).exp() - 1.0);
        (eta, 2.0 * eta * (r0 - 1.0))
    }

    fn handle(means: Vec<f64>, sigma: f64) -> ObjectiveHandle {
        let space = SearchSpace::from_arities(&[means.len()]).unwrap();
        ObjectiveHandle::synthetic(
            SyntheticObjective::new(space, means, Noise::Gaussian { sigma }, Bounds::UNIT).unwrap(),
        )
    }

    #[test]
    fn constants_examples() {
        let (eta, h2) = kn_constants(2, 2, 0.5).unwrap();
        assert_eq!((eta, h2), (0.0, 0.0));

        let (eta, h2) = kn_constants(200, 10, 0.05).unwrap();
        let (oe, oh) = constants_oracle(200.0, 10.0, 0.05);
        assert!((eta - oe).abs() < 1e-9 && (h2 - oh).abs() < 1e-9);
        assert!((eta - 2.2042).abs() < 1e-3, "{eta}");
        assert!((h2 - 39.676).abs() < 1e-3, "{h2}");

        let (eta, h2) = kn_constants(10, 10, 0.05).unwrap();
        assert!((eta - 0.85908).abs() < 1e-3, "{eta}");
        assert!((h2 - 15.4635).abs() < 1e-3, "{h2}");

        assert!(kn_constants(1, 10, 0.05).is_err());
    }

    #[test]
    fn pairwise_variance_examples() {
        assert_eq!(pairwise_variance(&[0.3, 0.5, 0.9], &[0.3, 0.5, 0.9]).unwrap(), 0.0);
        assert_eq!(pairwise_variance(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]).unwrap(), 1.0);
        let a = [0.1, 0.7, 0.4, 0.2];
        let b = [0.5, 0.3, 0.9, 0.6];
        assert_eq!(pairwise_variance(&a, &b).unwrap(), pairwise_variance(&b, &a).unwrap());
        assert!(pairwise_variance(&a, &b[..3]).is_err());
    }

    #[test]
    fn continuation_bound_examples() {
        // h2 * s2 / delta^2 = 1
        assert_eq!(continuation_bound(5, 0.1, 1.0, 0.01), 0.0);
        let g = continuation_bound(10, 0.1, 39.676, 0.02);
        assert!((g - 0.005 * (39.676 * 0.02 / 0.01 - 10.0)).abs() < 1e-12);
        assert!((g - 0.34676).abs() < 1e-4, "{g}");
        let mut prev = f64::INFINITY;
        for k in 1..200 {
            let g = continuation_bound(k, 0.05, 15.0, 0.004);
            assert!(g <= prev && g >= 0.0);
            prev = g;
        }
    }

    #[test]
    fn screen_examples() {
        let means = [(0, 0.9), (1, 0.85), (2, 0.5)];
        assert_eq!(screen(&means, |_, _| 0.02), vec![0]);
        let equal = [(4, 0.5), (7, 0.5), (9, 0.5)];
        assert_eq!(screen(&equal, |_, _| 0.0), vec![4, 7, 9]);
        assert_eq!(screen(&means, |_, _| 1e9), vec![0, 1, 2]);
    }

    #[test]
    fn pair_matrix_packing() {
        let mut m = PairMatrix::new(5);
        for i in 0..5 {
            for j in i + 1..5 {
                m.set(i, j, (10 * i + j) as f64);
            }
        }
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 0.0 } else { (10 * i.min(j) + i.max(j)) as f64 };
                assert_eq!(m.get(i, j), want);
            }
        }
    }

    #[test]
    fn zero_noise_two_solutions() {
        let h = handle(vec![1.0, 0.0], 0.0);
        let out = run_kn(&h, &KnConfig::new(5, 0.1, 0.05), &SeedPolicy::new(1)).unwrap();
        assert_eq!(out.mode, KnMode::Completed);
        assert_eq!(out.winner, Some(0));
        assert_eq!(out.evaluations_used, 10);
        assert_eq!(out.iterations, 5);
    }

    #[test]
    fn zero_noise_tie_terminates() {
        let h = handle(vec![0.5, 0.5, 0.2], 0.0);
        let out = run_kn(&h, &KnConfig::new(3, 0.1, 0.05), &SeedPolicy::new(1)).unwrap();
        assert!(out.tied);
        assert_eq!(out.winner, Some(0));
        assert_eq!(out.evaluations_used, 9);
    }

    #[test]
    fn budget_exactly_first_stage() {
        let h = handle(vec![0.81, 0.8, 0.8, 0.8, 0.8], 0.1);
        let cfg = KnConfig::new(10, 0.05, 0.05).with_budget(50);
        let out = run_kn(&h, &cfg, &SeedPolicy::new(4)).unwrap();
        assert_eq!(out.mode, KnMode::BudgetExhausted);
        assert_eq!(out.evaluations_used, 50);
        assert_eq!(out.survivors.len(), out.survivor_history[0]);
        assert_eq!(out.survivor_history.len(), 1);
        assert!(out.survivors.iter().all(|s| s.replications == 10));
    }

    #[test]
    fn budget_below_first_stage_shrinks_r0() {
        let h = handle(vec![0.9, 0.8, 0.7], 0.05);
        let out = run_kn(&h, &KnConfig::new(10, 0.05, 0.05).with_budget(7), &SeedPolicy::new(4)).unwrap();
        assert_eq!(out.iterations, 2);
        assert!(out.evaluations_used <= 7);
        let out = run_kn(&h, &KnConfig::new(10, 0.05, 0.05).with_budget(4), &SeedPolicy::new(4)).unwrap();
        assert_eq!(out.mode, KnMode::BudgetExhausted);
        assert_eq!(out.survivors.len(), 3);
        assert_eq!(out.evaluations_used, 3);
        assert!(run_kn(&h, &KnConfig::new(10, 0.05, 0.05).with_budget(2), &SeedPolicy::new(4)).is_err());
    }

    #[test]
    fn accounting_matches_counter() {
        let h = handle(vec![0.9, 0.85, 0.8, 0.83, 0.7, 0.88], 0.05);
        for seed in 0..10 {
            let before = h.evaluations();
            let out = run_kn(&h, &KnConfig::new(5, 0.03, 0.05), &SeedPolicy::new(seed)).unwrap();
            // first stage plus one evaluation per survivor in every later round
            let rounds: usize = out.survivor_history[..out.survivor_history.len() - 1].iter().sum();
            assert_eq!(out.evaluations_used, 6 * 5 + rounds as u64);
            assert_eq!(h.evaluations() - before, out.evaluations_used);
        }
    }

    #[test]
    fn deterministic() {
        let h1 = handle(vec![0.9, 0.85, 0.8, 0.83], 0.05).with_log();
        let h2 = handle(vec![0.9, 0.85, 0.8, 0.83], 0.05).with_log();
        let cfg = KnConfig::new(5, 0.02, 0.05);
        let a = run_kn(&h1, &cfg, &SeedPolicy::new(77)).unwrap();
        let b = run_kn(&h2, &cfg, &SeedPolicy::new(77)).unwrap();
        assert_eq!(a, b);
        let la: Vec<_> = h1.take_log().into_iter().map(|o| (o.flat, o.seed, o.value.to_bits())).collect();
        let lb: Vec<_> = h2.take_log().into_iter().map(|o| (o.flat, o.seed, o.value.to_bits())).collect();
        assert_eq!(la, lb);
    }

    #[test]
    fn subset_selection() {
        let h = handle(vec![0.2, 0.9, 0.5, 0.95], 0.0);
        let out = run_kn_on(&h, &[2, 1, 1], &KnConfig::new(3, 0.1, 0.05), &SeedPolicy::new(1)).unwrap();
        assert_eq!(out.winner, Some(1));
        assert_eq!(out.evaluations_used, 6);
    }

    #[test]
    fn failure_carries_partial_state() {
        let h = handle(vec![0.9, 0.8, 0.7], 0.05).with_cap(31);
        let err = run_kn(&h, &KnConfig::new(10, 0.001, 0.05), &SeedPolicy::new(2)).unwrap_err();
        match err {
            SolveError::Objective { evaluations, partial, .. } => {
                assert_eq!(evaluations, 31);
                assert!(matches!(*partial, Partial::Kn(ref s) if s.k == 10));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
