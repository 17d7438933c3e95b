use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::{Error, Result};

/// Pair number per pulse of a multimode thermal source: negative binomial
/// with mean `mean_pairs` and `schmidt_modes` modes. An infinite mode count
/// is the Poisson limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairNumberDistribution {
    mean_pairs: f64,
    schmidt_modes: f64,
}

/// Above this mean the sampler switches from inversion to a gamma–Poisson
/// mixture.
const INVERSION_MAX_MEAN: f64 = 40.0;

impl PairNumberDistribution {
    pub fn new(mean_pairs: f64, schmidt_modes: f64) -> Result<Self> {
        if !(mean_pairs >= 0.0) || !mean_pairs.is_finite() {
            return Err(Error::domain(format!(
                "mean pair number {mean_pairs} must be finite and ≥ 0"
            )));
        }
        if !(schmidt_modes >= 1.0) {
            return Err(Error::domain(format!(
                "Schmidt number {schmidt_modes} must be ≥ 1"
            )));
        }
        Ok(PairNumberDistribution {
            mean_pairs,
            schmidt_modes,
        })
    }

    pub fn poisson(mean_pairs: f64) -> Result<Self> {
        Self::new(mean_pairs, f64::INFINITY)
    }

    pub fn mean_pairs(&self) -> f64 {
        self.mean_pairs
    }

    pub fn schmidt_modes(&self) -> f64 {
        self.schmidt_modes
    }

    pub fn is_poisson(&self) -> bool {
        self.schmidt_modes.is_infinite()
    }

    /// Same mode structure with the mean scaled by `fraction`; binomial
    /// thinning of a negative binomial keeps its shape parameter.
    pub fn thinned(&self, fraction: f64) -> Self {
        PairNumberDistribution {
            mean_pairs: self.mean_pairs * fraction.clamp(0.0, 1.0),
            schmidt_modes: self.schmidt_modes,
        }
    }

    /// `E[n(n−1)]/E[n]² = 1 + 1/K`, i.e. g²(0) of either arm.
    pub fn g2(&self) -> f64 {
        1.0 + 1.0 / self.schmidt_modes
    }

    pub fn prob_zero(&self) -> f64 {
        let m = self.mean_pairs;
        if self.is_poisson() {
            (-m).exp()
        } else {
            let k = self.schmidt_modes;
            (-k * (m / k).ln_1p()).exp()
        }
    }

    /// Ratio `P(n+1)/P(n)`.
    #[inline]
    fn step(&self, n: u64) -> f64 {
        let m = self.mean_pairs;
        let n = n as f64;
        if self.is_poisson() {
            m / (n + 1.0)
        } else {
            let k = self.schmidt_modes;
            (n + k) / (n + 1.0) * (m / (k + m))
        }
    }

    pub fn pmf(&self, n: u64) -> f64 {
        (0..n).fold(self.prob_zero(), |p, i| p * self.step(i))
    }

    /// Inverse CDF at `u ∈ [0, 1)`.
    pub fn quantile(&self, u: f64) -> u64 {
        let mut p = self.prob_zero();
        let mut cdf = p;
        let mut n = 0u64;
        while u >= cdf {
            p *= self.step(n);
            n += 1;
            cdf += p;
            if p < 1e-300 && (n as f64) > self.mean_pairs {
                break;
            }
        }
        n
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if self.mean_pairs == 0.0 {
            return 0;
        }
        if self.mean_pairs > INVERSION_MAX_MEAN {
            return self.sample_mixture(rng);
        }
        self.quantile(rng.random::<f64>())
    }

    /// Draw conditioned on `n ≥ 1`. Requires a positive mean.
    pub fn sample_nonzero<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        debug_assert!(self.mean_pairs > 0.0);
        if self.mean_pairs > INVERSION_MAX_MEAN {
            loop {
                let n = self.sample_mixture(rng);
                if n > 0 {
                    return n;
                }
            }
        }
        let p0 = self.prob_zero();
        let u = p0 + rng.random::<f64>() * (1.0 - p0);
        self.quantile(u).max(1)
    }

    fn sample_mixture<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let intensity = if self.is_poisson() {
            self.mean_pairs
        } else {
            let k = self.schmidt_modes;
            Gamma::new(k, self.mean_pairs / k)
                .expect("validated gamma parameters")
                .sample(rng)
        };
        if intensity <= 0.0 {
            return 0;
        }
        Poisson::new(intensity)
            .expect("positive intensity")
            .sample(rng) as u64
    }
}

/// Draws the number of pairs emitted in one pulse.
pub fn sample_pair_count<R: Rng + ?Sized>(dist: &PairNumberDistribution, rng: &mut R) -> u64 {
    dist.sample(rng)
}

/// Keeps each photon independently with probability `transmission`.
pub fn loss_thin<T: Clone, R: Rng + ?Sized>(
    photons: &[T],
    transmission: f64,
    rng: &mut R,
) -> Vec<T> {
    photons
        .iter()
        .filter(|_| rng.random::<f64>() < transmission)
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_mean_is_always_zero() {
        let d = PairNumberDistribution::new(0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| sample_pair_count(&d, &mut rng) == 0));
    }

    #[test]
    fn pmf_normalizes_and_matches_mean() {
        for &(m, k) in &[(9e-3, 1.0), (0.5, 2.0), (3.0, 1.04), (2.0, f64::INFINITY)] {
            let d = PairNumberDistribution::new(m, k).unwrap();
            let (mut total, mut mean) = (0.0, 0.0);
            for n in 0..200u64 {
                let p = d.pmf(n);
                total += p;
                mean += n as f64 * p;
            }
            assert!((total - 1.0).abs() < 1e-12, "{m} {k}");
            assert!((mean - m).abs() < 1e-10 * m.max(1.0), "{m} {k}");
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        let d = PairNumberDistribution::new(0.3, 1.0).unwrap();
        let p0 = d.prob_zero();
        assert_eq!(d.quantile(0.0), 0);
        assert_eq!(d.quantile(p0 * 0.999), 0);
        assert_eq!(d.quantile(p0 * 1.0001), 1);
    }

    #[test]
    fn invalid_parameters() {
        assert!(PairNumberDistribution::new(-1.0, 1.0).is_err());
        assert!(PairNumberDistribution::new(0.1, 0.5).is_err());
        assert!(PairNumberDistribution::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn nonzero_draws_are_positive() {
        let d = PairNumberDistribution::new(1e-3, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..10_000).all(|_| d.sample_nonzero(&mut rng) >= 1));
    }

    #[test]
    fn large_mean_mixture_path() {
        let d = PairNumberDistribution::new(100.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        let mean = (0..n).map(|_| d.sample(&mut rng) as f64).sum::<f64>() / n as f64;
        // sd of the mean: sqrt(m + m²/K)/sqrt(n) ≈ 0.5
        assert!((mean - 100.0).abs() < 2.5, "{mean}");
    }

    #[test]
    fn thinning_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let photons: Vec<u32> = (0..100).collect();
        assert_eq!(loss_thin(&photons, 1.0, &mut rng), photons);
        assert!(loss_thin(&photons, 0.0, &mut rng).is_empty());
    }
}
