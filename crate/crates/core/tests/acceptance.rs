//! Acceptance suite: one line per criterion, nonzero exit if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use simopt::ah::{run_ah, AhConfig};
use simopt::harness::{emit_delta_curve, replay, run_experiment, ExperimentConfig, RunRecord};
use simopt::kn::{kn_constants, run_kn, KnConfig};
use simopt::objective::{Bounds, Noise, ObjectiveHandle, SeedPolicy, Stream, SyntheticObjective};
use simopt::space::{Neighborhood, SearchSpace};
use simopt::sr::{run_sr, SrConfig, SrStop};
use simopt::stats::{t_cdf, t_test_two_sample, t_two_sided_p};
use statrs::distribution::{ContinuousCDF, StudentsT};

struct Outcome {
    pass: bool,
    detail: String,
}

fn criterion(n: u32, title: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let pass = out.pass && in_time;
    let limit = limit.map(|l| format!(" (limit {:?})", l)).unwrap_or_default();
    println!(
        "[{}] criterion {n}: {title}: {} in {:.3?}{limit}",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed
    );
    pass
}

const TRIAL_BASE: u64 = 0x5eed_2026;

fn trial_policy(base: u64, i: u64) -> SeedPolicy {
    SeedPolicy::new(base).child(Stream::Trial, i)
}

/// Ten solutions, the last one best at 0.90, the rest 0.80, gaussian noise 0.05.
fn kn_problem() -> ObjectiveHandle {
    let space = SearchSpace::from_arities(&[10]).unwrap();
    let mut means = vec![0.8; 10];
    means[9] = 0.9;
    ObjectiveHandle::synthetic(
        SyntheticObjective::new(space, means, Noise::Gaussian { sigma: 0.05 }, Bounds::UNIT).unwrap(),
    )
}

/// 5x5 torus: optimum 0.90 at (2,2), elsewhere 0.35 - 0.05 (d - 1) for torus distance d.
fn sr_problem() -> SyntheticObjective {
    let space = SearchSpace::from_arities(&[5, 5]).unwrap();
    let wrap = |a: usize, b: usize| a.abs_diff(b).min(5 - a.abs_diff(b));
    let means = space
        .iter()
        .map(|x| match wrap(x.0[0], 2) + wrap(x.0[1], 2) {
            0 => 0.9,
            d => 0.35 - 0.05 * (d as f64 - 1.0),
        })
        .collect();
    SyntheticObjective::new(space, means, Noise::Gaussian { sigma: 0.05 }, Bounds::UNIT).unwrap()
}

/// 5x5 grid with a single peak of 0.90 at (3,1), falling 0.05 per unit of Manhattan distance.
fn ah_problem() -> SyntheticObjective {
    let space = SearchSpace::from_arities(&[5, 5]).unwrap();
    let means = space.iter().map(|x| 0.9 - 0.05 * (x.0[0].abs_diff(3) + x.0[1].abs_diff(1)) as f64).collect();
    SyntheticObjective::new(space, means, Noise::Gaussian { sigma: 0.01 }, Bounds::UNIT).unwrap()
}

fn c1() -> Outcome {
    // log form, evaluated separately from the library's power form
    let oracle = |n: f64, r0: f64, p: f64| {
        let eta = 0.5 * ((-2.0 / (r0 - 1.0)) * (2.0 * p / (n - 1.0)).ln()).exp_m1();
        (eta, 2.0 * eta * (r0 - 1.0))
    };
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for (n, pinned) in [(200u64, (2.2042, 39.676)), (10, (0.85908, 15.4635))] {
        let (eta, h2) = kn_constants(n, 10, 0.05).unwrap();
        let (oe, oh) = oracle(n as f64, 10.0, 0.05);
        worst = worst.max((eta - oe).abs()).max((h2 - oh).abs());
        worst = worst.max((eta - pinned.0).abs()).max((h2 - pinned.1).abs());
        rows.push(format!("N={n}: eta={eta:.5} h2={h2:.4}"));
    }
    let start = Instant::now();
    for _ in 0..1000 {
        std::hint::black_box(kn_constants(std::hint::black_box(200), 10, 0.05).unwrap());
    }
    let per_call = start.elapsed() / 1000;
    Outcome {
        pass: worst <= 1e-3 && per_call < Duration::from_millis(1),
        detail: format!("{}, max error {worst:.2e} (tol 1e-3), {per_call:?} per call (limit 1ms)", rows.join(", ")),
    }
}

fn c2() -> Outcome {
    let cfg = KnConfig::new(10, 0.05, 0.05);
    let trials = 200u64;
    let correct: u64 = (0..trials)
        .into_par_iter()
        .map(|i| {
            let out = run_kn(&kn_problem(), &cfg, &trial_policy(TRIAL_BASE, i)).unwrap();
            (out.winner == Some(9)) as u64
        })
        .sum();
    let rate = correct as f64 / trials as f64;
    Outcome { pass: rate >= 0.90, detail: format!("correct selection {correct}/{trials} = {rate:.3} (floor 0.90)") }
}

fn kn_config_json(extra: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{"space": {{"axes": [{{"name": "s", "levels": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]}}]}},
            "objective": {{"type": "synthetic", "means": [0.8, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8, 0.9],
                          "noise": {{"kind": "gaussian", "sigma": 0.05}}}},
            "solver": {{"solver": "kn", "r0": 10, "delta": 0.05, "p": 0.05}},
            "master_seed": {TRIAL_BASE} {extra}}}"#
    ))
    .unwrap()
}

fn c3() -> Outcome {
    let rows = emit_delta_curve(&kn_config_json(r#", "trials": 50"#), &[0.10, 0.05, 0.02]).unwrap();
    let means: Vec<f64> = rows.iter().map(|r| r.mean_evaluations).collect();
    let increasing = means.windows(2).all(|w| w[1] > w[0]);
    let curve: Vec<String> = rows.iter().map(|r| format!("delta {} -> {:.1}", r.delta, r.mean_evaluations)).collect();
    Outcome { pass: increasing && rows.len() == 3, detail: format!("{} (strictly increasing)", curve.join(", ")) }
}

fn c4() -> Outcome {
    let budget = 10 * 10 + 5 * 10;
    let cfg = KnConfig::new(10, 0.05, 0.05).with_budget(budget);
    let trials = 100u64;
    let hits: u64 = (0..trials)
        .into_par_iter()
        .map(|i| {
            let out = run_kn(&kn_problem(), &cfg, &trial_policy(TRIAL_BASE + 1, i)).unwrap();
            assert!(out.evaluations_used <= budget);
            out.survivors.iter().any(|s| s.id == 9) as u64
        })
        .sum();
    let rate = hits as f64 / trials as f64;
    Outcome {
        pass: rate >= 0.95,
        detail: format!("budget {budget}: best among survivors {hits}/{trials} = {rate:.2} (floor 0.95)"),
    }
}

fn c5() -> Outcome {
    let obj = sr_problem();
    let (optimum, _) = obj.optimum();
    let mut cfg = SrConfig::new(SrStop { max_evals: Some(2000), ..SrStop::default() });
    cfg.ruler = Some(Bounds::UNIT);
    cfg.neighborhood = Neighborhood::N2;
    let runs = 100u64;
    let hits: u64 = (0..runs)
        .into_par_iter()
        .map(|i| {
            let h = ObjectiveHandle::synthetic(obj.clone());
            let t = run_sr(&h, &cfg, &trial_policy(TRIAL_BASE + 2, i)).unwrap();
            assert!(t.evaluations_used <= 2000);
            (h.space().flat_index(&t.final_solution).unwrap() == optimum) as u64
        })
        .sum();
    Outcome { pass: hits >= 80, detail: format!("final solution optimal in {hits}/{runs} runs (floor 80)") }
}

fn c6() -> Outcome {
    let obj = sr_problem();
    let target = obj.space().solution_at(obj.optimum().0).unwrap();
    let stages = |alpha: f64| -> Vec<u64> {
        let mut cfg =
            SrConfig::new(SrStop { target: Some(target.clone()), max_stages: Some(1_000_000), ..SrStop::default() });
        cfg.ruler = Some(Bounds::UNIT);
        cfg.alpha = alpha;
        (0..30u64)
            .into_par_iter()
            .map(|i| {
                let t =
                    run_sr(&ObjectiveHandle::synthetic(obj.clone()), &cfg, &trial_policy(TRIAL_BASE + 3, i)).unwrap();
                assert_eq!(t.final_solution, target);
                t.stages_count
            })
            .collect()
    };
    let mean = |v: &[u64]| v.iter().sum::<u64>() as f64 / v.len() as f64;
    let (a8, a1) = (mean(&stages(0.8)), mean(&stages(1.0)));
    Outcome { pass: a8 <= a1, detail: format!("mean stages alpha=0.8 {a8:.2} <= alpha=1 {a1:.2}") }
}

fn c7() -> Outcome {
    let obj = ah_problem();
    let space = obj.space().clone();
    let means = obj.means().to_vec();
    // exhaustive enumeration of the true-mean local optima
    let local: Vec<u64> = space
        .iter()
        .filter(|x| {
            let m = means[space.flat_index(x).unwrap() as usize];
            space.adjacent(x).unwrap().iter().all(|y| means[space.flat_index(y).unwrap() as usize] <= m)
        })
        .map(|x| space.flat_index(&x).unwrap())
        .collect();
    let cfg = AhConfig::new(2000);
    let runs = 100u64;
    let hits: u64 = (0..runs)
        .into_par_iter()
        .map(|i| {
            let h = ObjectiveHandle::synthetic(obj.clone());
            let t = run_ah(&h, &cfg, &trial_policy(TRIAL_BASE + 4, i)).unwrap();
            assert!(t.evaluations_used <= 2000);
            local.contains(&t.state.incumbent) as u64
        })
        .sum();
    Outcome {
        pass: hits >= 90,
        detail: format!(
            "{} local optima enumerated; incumbent locally optimal in {hits}/{runs} runs (floor 90)",
            local.len()
        ),
    }
}

fn c8() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for df in 1..=30 {
        let oracle = StudentsT::new(0.0, 1.0, df as f64).unwrap();
        for i in -50..=50 {
            let t = i as f64 / 10.0;
            let cdf = oracle.cdf(t);
            let p = 2.0 * oracle.cdf(-t.abs());
            worst = worst.max((t_cdf(t, df as f64) - cdf).abs()).max((t_two_sided_p(t, df as f64) - p).abs());
            points += 1;
        }
    }
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [2.0, 3.0, 4.0, 5.0, 6.0];
    let r = t_test_two_sample(&a, &b, true).unwrap();
    let example_ok = (r.t_stat + 1.0).abs() < 1e-3 && r.df == 8.0 && (r.p_value - 0.3466).abs() < 1e-3;
    Outcome {
        pass: worst <= 1e-6 && example_ok,
        detail: format!(
            "{points} grid points, max error {worst:.2e} (tol 1e-6); pooled example t={:.4} df={} p={:.4} (tol 1e-3)",
            r.t_stat, r.df, r.p_value
        ),
    }
}

fn c9() -> Outcome {
    let cfg = ExperimentConfig::from_json(
        r#"{"space": {"axes": [{"name": "a", "levels": [1, 2, 3, 4, 5]}, {"name": "b", "levels": ["p", "q", "r", "s"]}]},
            "objective": {"type": "synthetic", "means": {"peak": [3, 2], "top": 0.9, "slope": 0.07, "floor": 0.3},
                          "noise": {"kind": "bernoulli_accuracy", "n_val": 150}},
            "solvers": [{"solver": "kn", "r0": 10, "delta": 0.03, "p": 0.05},
                        {"solver": "sr", "alpha": 0.8, "stop": {"max_evals": 400}},
                        {"solver": "ah", "budget": 400, "cleanup_kn": true},
                        {"solver": "baseline-rs", "budget": 100}],
            "trials": 6,
            "master_seed": 99}"#,
    )
    .unwrap();
    let jsonl = |records: &[RunRecord]| -> Vec<u8> {
        records.iter().flat_map(|r| serde_json::to_vec(r).unwrap().into_iter().chain(*b"\n")).collect()
    };
    let first = run_experiment(&cfg, None).unwrap();
    let second = run_experiment(&cfg, None).unwrap();
    let identical = jsonl(&first.records) == jsonl(&second.records);
    let mismatch = replay(&cfg, &first.records).unwrap();
    Outcome {
        pass: identical && mismatch.is_none() && !first.records.is_empty(),
        detail: format!(
            "{} records, byte-identical rerun: {identical}, replay mismatches: {}",
            first.records.len(),
            mismatch.map_or("none".to_string(), |i| format!("first at {i}"))
        ),
    }
}

fn c10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(TRIAL_BASE + 5);
    let mut spaces: Vec<SearchSpace> = (0..60).map(|_| common::random_space(&mut rng, 1000)).collect();
    // edge shapes: binary and unary axes, a single long axis, the largest allowed grid
    for arities in [vec![2], vec![2, 2, 2], vec![1, 3], vec![1000], vec![10, 10, 10], vec![3, 1, 2, 1]] {
        spaces.push(SearchSpace::from_arities(&arities).unwrap());
    }
    let failures: Vec<String> = spaces
        .par_iter()
        .filter_map(|s| {
            common::check_neighborhoods(s).err().map(|e| format!("{:?}: {e}", s.arities().collect::<Vec<_>>()))
        })
        .collect();
    let solutions: u64 = spaces.iter().map(|s| s.cardinality()).sum();
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{} spaces, {solutions} solutions checked exhaustively", spaces.len())
        } else {
            failures.join("; ")
        },
    }
}

fn main() -> ExitCode {
    let results = [
        criterion(1, "KN constants", None, c1),
        criterion(2, "KN correct selection", Some(Duration::from_secs(120)), c2),
        criterion(3, "KN effort grows as delta shrinks", Some(Duration::from_secs(300)), c3),
        criterion(4, "budget-constrained KN keeps the best", None, c4),
        criterion(5, "SR convergence", Some(Duration::from_secs(120)), c5),
        criterion(6, "SR alpha trend", None, c6),
        criterion(7, "AH local optimality", Some(Duration::from_secs(180)), c7),
        criterion(8, "t-test oracle", None, c8),
        criterion(9, "determinism and replay", None, c9),
        criterion(10, "neighborhood invariants", None, c10),
    ];
    let failed = results.iter().filter(|&&p| !p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
