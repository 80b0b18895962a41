//! Spread statistics for repeated estimates.

use rand::Rng;

use super::rng::stream_rng;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_variance(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Var θ̃ / ⟨θ̃⟩² with the population variance.
pub fn variability(estimates: &[f64]) -> f64 {
    let m = mean(estimates);
    population_variance(estimates, m) / (m * m)
}

/// [Var θ̃ + (⟨θ̃⟩ − T)²] / ⟨θ̃⟩².
pub fn bias_variability(estimates: &[f64], truth: f64) -> f64 {
    let m = mean(estimates);
    (population_variance(estimates, m) + (m - truth) * (m - truth)) / (m * m)
}

/// Share of paired bootstrap resamples in which `lower` has the smaller variability.
pub fn bootstrap_order_confidence(lower: &[f64], higher: &[f64], resamples: usize, seed: u64) -> f64 {
    assert_eq!(lower.len(), higher.len(), "paired samples");
    let n = lower.len();
    let mut rng = stream_rng(seed, 0);
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut wins = 0;
    for _ in 0..resamples {
        for k in 0..n {
            let i = rng.random_range(0..n);
            a[k] = lower[i];
            b[k] = higher[i];
        }
        if variability(&a) < variability(&b) {
            wins += 1;
        }
    }
    wins as f64 / resamples as f64
}
