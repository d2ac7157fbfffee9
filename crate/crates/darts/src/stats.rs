//! Statistical helpers shared by the verification harness and the tests.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pearson chi-square p-value for observed counts against expected counts.
/// Bins with expected count below 5 are pooled into their neighbor.
pub fn chi_square_p_value(observed: &[usize], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len());
    let mut obs_pooled: Vec<f64> = Vec::new();
    let mut exp_pooled: Vec<f64> = Vec::new();
    let mut acc_o = 0.0;
    let mut acc_e = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        acc_o += o as f64;
        acc_e += e;
        if acc_e >= 5.0 {
            obs_pooled.push(acc_o);
            exp_pooled.push(acc_e);
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    if acc_e > 0.0 {
        if let (Some(o), Some(e)) = (obs_pooled.last_mut(), exp_pooled.last_mut()) {
            *o += acc_o;
            *e += acc_e;
        } else {
            obs_pooled.push(acc_o);
            exp_pooled.push(acc_e);
        }
    }
    if obs_pooled.len() < 2 {
        return 1.0;
    }
    let stat: f64 = obs_pooled
        .iter()
        .zip(&exp_pooled)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = (obs_pooled.len() - 1) as f64;
    let dist = ChiSquared::new(dof).expect("dof > 0");
    1.0 - dist.cdf(stat)
}

/// One-dimensional star discrepancy of a point set in [0, 1).
pub fn star_discrepancy_1d(points: &[f64]) -> f64 {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let i = i as f64;
        d = d.max((x - i / n).abs()).max(((i + 1.0) / n - x).abs());
    }
    d
}

/// Mean and standard error of the mean.
pub fn mean_and_sem(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean squared error between two equal-length slices.
pub fn mse(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum::<f64>()
        / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn chi_square_accepts_true_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let bins = 20;
        let mut counts = vec![0usize; bins];
        for _ in 0..n {
            let u: f64 = rng.random();
            counts[(u * bins as f64) as usize] += 1;
        }
        let expected = vec![n as f64 / bins as f64; bins];
        assert!(chi_square_p_value(&counts, &expected) > 0.01);
    }

    #[test]
    fn chi_square_rejects_wrong_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let bins = 20;
        let mut counts = vec![0usize; bins];
        for _ in 0..n {
            let u: f64 = rng.random::<f64>().powi(2); // not uniform
            counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
        }
        let expected = vec![n as f64 / bins as f64; bins];
        assert!(chi_square_p_value(&counts, &expected) < 0.01);
    }

    #[test]
    fn discrepancy_of_regular_grid_is_low() {
        let grid: Vec<f64> = (0..64).map(|i| (i as f64 + 0.5) / 64.0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let random: Vec<f64> = (0..64).map(|_| rng.random()).collect();
        assert!(star_discrepancy_1d(&grid) < star_discrepancy_1d(&random));
    }
}
