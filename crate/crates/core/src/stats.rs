//! Two-sample t-tests and trial summaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} values, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("non-finite sample value")]
    NonFinite,
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta, modified Lentz.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// CDF of Student's t with `df` degrees of freedom.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * reg_inc_beta(0.5 * df, 0.5, df / (df + t * t));
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// P(|T| >= |t|).
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    reg_inc_beta(0.5 * df, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Higher {
    A,
    B,
    Tie,
}

/// Outcome of comparing sample A against sample B at the 5% level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Better,
    Comparable,
    Worse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_stat: f64,
    pub df: f64,
    pub p_value: f64,
    pub higher_mean: Higher,
    pub significant_at_5pct: bool,
    /// Both samples have zero variance.
    pub degenerate: bool,
}

impl TTestResult {
    /// Verdict from A's point of view.
    pub fn verdict(&self) -> Verdict {
        if !self.significant_at_5pct {
            return Verdict::Comparable;
        }
        match self.higher_mean {
            Higher::A => Verdict::Better,
            Higher::B => Verdict::Worse,
            Higher::Tie => Verdict::Comparable,
        }
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Two-sided two-sample t-test; pooled variance when `pooled`, Welch otherwise.
pub fn t_test_two_sample(a: &[f64], b: &[f64], pooled: bool) -> Result<TTestResult, StatsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::TooFewSamples { need: 2, got: s.len() });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let higher_mean = if ma > mb {
        Higher::A
    } else if mb > ma {
        Higher::B
    } else {
        Higher::Tie
    };
    let (se2, df) = if pooled {
        let sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
        (sp2 * (1.0 / na + 1.0 / nb), na + nb - 2.0)
    } else {
        let (qa, qb) = (va / na, vb / nb);
        let se2 = qa + qb;
        let df = if se2 > 0.0 { se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0)) } else { na + nb - 2.0 };
        (se2, df)
    };
    if se2 == 0.0 {
        let (t_stat, p_value) = match higher_mean {
            Higher::Tie => (0.0, 1.0),
            Higher::A => (f64::INFINITY, 0.0),
            Higher::B => (f64::NEG_INFINITY, 0.0),
        };
        return Ok(TTestResult {
            t_stat,
            df,
            p_value,
            higher_mean,
            significant_at_5pct: p_value < 0.05,
            degenerate: true,
        });
    }
    let t_stat = (ma - mb) / se2.sqrt();
    let p_value = t_two_sided_p(t_stat, df);
    Ok(TTestResult { t_stat, df, p_value, higher_mean, significant_at_5pct: p_value < 0.05, degenerate: false })
}

/// Outcome of one optimizer trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub initial_value: f64,
    pub final_value: f64,
    pub improvement: f64,
    pub stages: u64,
    pub evaluations: u64,
    pub wall_seconds: f64,
}

impl TrialSummary {
    pub fn new(initial_value: f64, final_value: f64, stages: u64, evaluations: u64, wall_seconds: f64) -> Self {
        Self { initial_value, final_value, improvement: final_value - initial_value, stages, evaluations, wall_seconds }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialAggregate {
    pub trials: usize,
    pub mean_improvement: f64,
    pub sd_improvement: f64,
    pub mean_stages: f64,
    pub mean_evaluations: f64,
    /// Set for a single trial, where the SD is reported as 0.
    pub degenerate: bool,
}

pub fn summarize_trials(trials: &[TrialSummary]) -> Result<TrialAggregate, StatsError> {
    if trials.is_empty() {
        return Err(StatsError::TooFewSamples { need: 1, got: 0 });
    }
    let n = trials.len() as f64;
    let mean = |f: &dyn Fn(&TrialSummary) -> f64| trials.iter().map(f).sum::<f64>() / n;
    let mean_improvement = mean(&|t| t.improvement);
    let sd_improvement = if trials.len() > 1 {
        (trials.iter().map(|t| (t.improvement - mean_improvement).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(TrialAggregate {
        trials: trials.len(),
        mean_improvement,
        sd_improvement,
        mean_stages: mean(&|t| t.stages as f64),
        mean_evaluations: mean(&|t| t.evaluations as f64),
        degenerate: trials.len() == 1,
    })
}
