//! One-sample Kolmogorov-Smirnov test, used to check generator
//! distributions.

/// Largest gap between the empirical CDF of `samples` and `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let k = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / k).abs().max(((i + 1) as f64 / k - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of statistic `d` over `n` samples, with Stephens'
/// small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = 2.0 * (-1f64).powf(j - 1.0) * (-2.0 * j * j * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_samples_pass_and_skewed_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let d = ks_statistic(&u, |x| x.clamp(0.0, 1.0));
        assert!(ks_p_value(d, u.len()) > 0.01);
        let sq: Vec<f64> = u.iter().map(|x| x * x).collect();
        let d = ks_statistic(&sq, |x| x.clamp(0.0, 1.0));
        assert!(ks_p_value(d, sq.len()) < 1e-6);
    }

    #[test]
    fn known_critical_value() {
        // The 5% critical value is about 1.358 / sqrt(n).
        let p = ks_p_value(1.358 / 1000f64.sqrt(), 1000);
        assert!((p - 0.05).abs() < 0.01, "p = {p}");
    }
}
