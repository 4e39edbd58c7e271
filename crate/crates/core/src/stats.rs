//! Statistical helpers shared by the Monte Carlo experiments.
//!
//! Every trial draws from its own ChaCha stream keyed by `(seed, trial index)`,
//! so counts do not depend on how rayon schedules the trials.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

/// Standard normal upper tail, `Q(x) = P(Z > x)`.
pub fn normal_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse of [`normal_tail`] for `p` in `(0, 1)`.
pub fn normal_tail_inv(p: f64) -> f64 {
    let mut x = std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    // polish against the more accurate forward tail
    for _ in 0..3 {
        let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if density == 0.0 {
            break;
        }
        x += (normal_tail(x) - p) / density;
    }
    x
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    normal_tail(-x)
}

pub fn binomial_stderr(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> [f64; 2] {
    if trials == 0 {
        return [0.0, 1.0];
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    [(center - half).max(0.0), (center + half).min(1.0)]
}

/// Independent random stream for one trial.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Counts the trials for which `trial` returns true, in parallel.
pub fn count_trials<F>(trials: u64, seed: u64, trial: F) -> u64
where
    F: Fn(&mut ChaCha8Rng, u64) -> bool + Sync,
{
    (0..trials)
        .into_par_iter()
        .filter(|&i| trial(&mut trial_rng(seed, i), i))
        .count() as u64
}

/// Outcome of a Monte Carlo rate estimate next to its closed-form value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub trials: u64,
    pub failures: u64,
    pub rate: f64,
    pub wilson_95_ci: [f64; 2],
    pub analytic_rate: f64,
    pub seed: u64,
}

impl McReport {
    pub fn new(trials: u64, failures: u64, analytic_rate: f64, seed: u64) -> Self {
        let rate = if trials == 0 {
            0.0
        } else {
            failures as f64 / trials as f64
        };
        McReport {
            trials,
            failures,
            rate,
            wilson_95_ci: wilson_interval(failures, trials, 1.959_963_984_540_054),
            analytic_rate: analytic_rate.clamp(0.0, 1.0),
            seed,
        }
    }

    /// Binomial standard error at the analytic rate.
    pub fn stderr(&self) -> f64 {
        binomial_stderr(self.analytic_rate, self.trials)
    }

    /// `|rate - analytic| / stderr`; zero when both agree exactly.
    pub fn z_score(&self) -> f64 {
        let diff = (self.rate - self.analytic_rate).abs();
        let se = self.stderr();
        if diff == 0.0 {
            0.0
        } else if se == 0.0 {
            f64::INFINITY
        } else {
            diff / se
        }
    }

    /// True when the empirical rate lies within `k` standard errors of the
    /// analytic one. A rate below one expected failure per run is accepted
    /// when the run saw no failures.
    pub fn agrees(&self, k: f64) -> bool {
        self.z_score() <= k
            || (self.failures == 0 && self.analytic_rate * (self.trials as f64) < 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn tail_matches_known_values() {
        assert!((normal_tail(0.0) - 0.5).abs() < 1e-15);
        let q975 = normal_tail(1.959_963_984_540_054);
        assert!((q975 - 0.025).abs() < 1e-12, "{q975:e}");
        assert!((normal_tail(2.575_829_303_548_901) - 0.005).abs() < 1e-12);
        // deep tail stays in relative precision
        let q = normal_tail(9.0);
        assert!(
            (q / 1.128_588_405_953_840_6e-19 - 1.0).abs() < 1e-9,
            "{q:e}"
        );
    }

    #[test]
    fn tail_inverse_round_trips() {
        for p in [0.4, 0.1, 0.005, 1e-6, 1e-12] {
            assert!((normal_tail(normal_tail_inv(p)) / p - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn wilson_contains_rate() {
        let [lo, hi] = wilson_interval(44, 1000, 1.96);
        assert!(lo < 0.044 && 0.044 < hi);
        let [lo, hi] = wilson_interval(0, 1000, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.01);
    }

    #[test]
    fn trial_streams_are_independent_of_thread_count() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| count_trials(20_000, 7, |rng, _| rng.random::<f64>() < 0.3))
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn report_rate_and_agreement() {
        let r = McReport::new(10_000, 50, 0.005, 1);
        assert_eq!(r.rate, 0.005);
        assert!(r.agrees(3.0));
        let r = McReport::new(10_000, 0, 1e-20, 1);
        assert!(r.agrees(3.0));
        let r = McReport::new(10_000, 200, 0.005, 1);
        assert!(!r.agrees(3.0));
    }
}
