use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Bounds, ObjectiveError, Simulator};
use crate::space::{SearchSpace, Solution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    /// mean + sigma * N(0,1), clipped to the objective bounds
    Gaussian { sigma: f64 },
    /// successes / n_val with successes ~ Binomial(n_val, mean)
    BernoulliAccuracy { n_val: u64 },
}

/// Stochastic objective with a known table of true means, one per flat index.
#[derive(Debug, Clone)]
pub struct SyntheticObjective {
    space: SearchSpace,
    means: Vec<f64>,
    noise: Noise,
    bounds: Bounds,
}

impl SyntheticObjective {
    pub fn new(space: SearchSpace, means: Vec<f64>, noise: Noise, bounds: Bounds) -> Result<Self, ObjectiveError> {
        if means.len() as u64 != space.cardinality() {
            return Err(ObjectiveError::Config(format!(
                "mean table has {} entries, space has {} solutions",
                means.len(),
                space.cardinality()
            )));
        }
        if let Some((i, m)) = means.iter().enumerate().find(|(_, m)| !bounds.contains(**m)) {
            return Err(ObjectiveError::Config(format!(
                "mean {m} of solution {i} is outside [{}, {}]",
                bounds.lo, bounds.hi
            )));
        }
        match noise {
            Noise::Gaussian { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                return Err(ObjectiveError::Config(format!("sigma must be >= 0, got {sigma}")));
            }
            Noise::BernoulliAccuracy { n_val: 0 } => {
                return Err(ObjectiveError::Config("n_val must be positive".into()));
            }
            Noise::BernoulliAccuracy { .. } if bounds.lo > 0.0 || bounds.hi < 1.0 => {
                return Err(ObjectiveError::Config("bernoulli-accuracy noise needs bounds covering [0, 1]".into()));
            }
            _ => {}
        }
        Ok(Self { space, means, noise, bounds })
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn true_mean(&self, flat: u64) -> f64 {
        self.means[flat as usize]
    }

    /// Flat index and value of the best true mean; ties go to the lowest index.
    pub fn optimum(&self) -> (u64, f64) {
        let mut best = (0u64, self.means[0]);
        for (i, &m) in self.means.iter().enumerate().skip(1) {
            if m > best.1 {
                best = (i as u64, m);
            }
        }
        best
    }
}

impl Simulator for SyntheticObjective {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn bounds(&self) -> Bounds {
        self.bounds
    }

    fn simulate(&self, x: &Solution, seed: u64) -> Result<f64, ObjectiveError> {
        let mu = self.means[self.space.flat_index(x)? as usize];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(match self.noise {
            Noise::Gaussian { sigma: 0.0 } => mu,
            Noise::Gaussian { sigma } => {
                let z: f64 = StandardNormal.sample(&mut rng);
                (mu + sigma * z).clamp(self.bounds.lo, self.bounds.hi)
            }
            Noise::BernoulliAccuracy { n_val } => {
                let dist = Binomial::new(n_val, mu).map_err(|e| ObjectiveError::Config(e.to_string()))?;
                dist.sample(&mut rng) as f64 / n_val as f64
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> SearchSpace {
        SearchSpace::from_arities(&[n]).unwrap()
    }

    #[test]
    fn zero_noise_is_identity() {
        let obj =
            SyntheticObjective::new(line(2), vec![0.7, 0.2], Noise::Gaussian { sigma: 0.0 }, Bounds::UNIT).unwrap();
        assert_eq!(obj.simulate(&Solution::new(vec![0]), 17).unwrap(), 0.7);
    }

    #[test]
    fn gaussian_mean_converges() {
        let obj = SyntheticObjective::new(line(1), vec![0.7], Noise::Gaussian { sigma: 0.05 }, Bounds::UNIT).unwrap();
        let x = Solution::new(vec![0]);
        let n = 10_000;
        let mean: f64 = (0..n).map(|s| obj.simulate(&x, 1 + s).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 0.7).abs() < 0.002, "mean {mean}");
    }

    #[test]
    fn bernoulli_values_on_grid() {
        let obj =
            SyntheticObjective::new(line(1), vec![0.8], Noise::BernoulliAccuracy { n_val: 114 }, Bounds::UNIT).unwrap();
        let x = Solution::new(vec![0]);
        let mut sum = 0.0;
        for s in 1..=5000u64 {
            let v = obj.simulate(&x, s).unwrap();
            let k = v * 114.0;
            assert!((k - k.round()).abs() < 1e-9);
            sum += v;
        }
        assert!((sum / 5000.0 - 0.8).abs() < 0.005);
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(SyntheticObjective::new(line(2), vec![0.5], Noise::Gaussian { sigma: 0.1 }, Bounds::UNIT).is_err());
        assert!(SyntheticObjective::new(line(1), vec![1.5], Noise::Gaussian { sigma: 0.1 }, Bounds::UNIT).is_err());
        assert!(SyntheticObjective::new(line(1), vec![0.5], Noise::Gaussian { sigma: -1.0 }, Bounds::UNIT).is_err());
    }

    #[test]
    fn optimum_lowest_index_on_tie() {
        let obj = SyntheticObjective::new(line(3), vec![0.2, 0.9, 0.9], Noise::Gaussian { sigma: 0.0 }, Bounds::UNIT)
            .unwrap();
        assert_eq!(obj.optimum(), (1, 0.9));
    }
}
