use rand::Rng;

use crate::error::{Error, Result};

/// One Laplace(0, `scale`) draw by inverse CDF.
///
/// With `u` uniform on `(0, 1)` and `v = u - 1/2`:
/// `x = -scale * sign(v) * ln(1 - 2|v|)`. A zero scale returns 0 without
/// consuming randomness.
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    let u = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    let v = u - 0.5;
    -scale * v.signum() * (1.0 - 2.0 * v.abs()).ln()
}

pub fn laplace_cdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / scale).exp()
    } else {
        1.0 - 0.5 * (-x / scale).exp()
    }
}

/// Laplace scale for sensitivity `delta_f` at budget `epsilon`; zero for `ε = +∞`.
pub fn laplace_scale(delta_f: f64, epsilon: f64) -> Result<f64> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::NonPositiveBudget(epsilon));
    }
    Ok(if epsilon.is_infinite() { 0.0 } else { delta_f / epsilon })
}

/// Noisy count with sensitivity 1 at budget `xi_half`. No clamping.
pub fn dp_count<R: Rng + ?Sized>(count: usize, xi_half: f64, rng: &mut R) -> Result<f64> {
    Ok(count as f64 + sample_laplace(laplace_scale(1.0, xi_half)?, rng))
}

/// Sum of values clipped to `[gamma, alpha]` plus Laplace((α − γ) / xi_half).
pub fn dp_sum_clipped<R: Rng + ?Sized>(
    values: &[f64],
    gamma: f64,
    alpha: f64,
    xi_half: f64,
    rng: &mut R,
) -> Result<f64> {
    if gamma.is_nan() || alpha.is_nan() || gamma >= alpha {
        return Err(Error::InvalidArgument(format!(
            "clipping bounds need gamma < alpha, got [{gamma}, {alpha}]"
        )));
    }
    let scale = laplace_scale(alpha - gamma, xi_half)?;
    let sum: f64 = values.iter().map(|v| v.clamp(gamma, alpha)).sum();
    Ok(sum + sample_laplace(scale, rng))
}

/// Public bounds of a numerical attribute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericDomain {
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
}

/// DP average: budget `xi` split evenly between a noisy count and a noisy
/// clipped sum (count drawn first). The count is floored at 1, the quotient
/// clamped into the bounds, and rounded half-up for integer attributes.
pub fn dp_mean_numerical<R: Rng + ?Sized>(
    values: &[f64],
    domain: NumericDomain,
    xi: f64,
    rng: &mut R,
) -> Result<f64> {
    if xi.is_nan() || xi <= 0.0 {
        return Err(Error::NonPositiveBudget(xi));
    }
    let count = dp_count(values.len(), xi / 2.0, rng)?;
    let sum = dp_sum_clipped(values, domain.lower, domain.upper, xi / 2.0, rng)?;
    Ok(finish_mean(sum / count.max(1.0), domain))
}

pub(crate) fn finish_mean(mean: f64, domain: NumericDomain) -> f64 {
    let clamped = mean.clamp(domain.lower, domain.upper);
    if domain.integer {
        // bounds may be fractional; stay inside them after rounding
        let r = (clamped + 0.5).floor();
        if r > domain.upper {
            domain.upper.floor()
        } else if r < domain.lower {
            domain.lower.ceil()
        } else {
            r
        }
    } else {
        clamped
    }
}

/// Argmax of a noisy histogram, each bin + Laplace(1/xi); ties go to the
/// earlier category.
pub fn dp_mode_categorical<R: Rng + ?Sized>(
    values: &[usize],
    domain_size: usize,
    xi: f64,
    rng: &mut R,
) -> Result<usize> {
    if domain_size == 0 {
        return Err(Error::InvalidArgument("empty categorical domain".into()));
    }
    let scale = laplace_scale(1.0, xi)?;
    let mut counts = vec![0usize; domain_size];
    for &v in values {
        if v >= domain_size {
            return Err(Error::InvalidArgument(format!(
                "category {v} outside a domain of {domain_size}"
            )));
        }
        counts[v] += 1;
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (c, &n) in counts.iter().enumerate() {
        let noisy = n as f64 + sample_laplace(scale, rng);
        if noisy > best.1 {
            best = (c, noisy);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn infinite_budget_is_exact() {
        let mut r = seeded(0);
        assert_eq!(dp_count(5, f64::INFINITY, &mut r).unwrap(), 5.0);
        assert_eq!(dp_sum_clipped(&[-5.0, 200.0], 0.0, 120.0, f64::INFINITY, &mut r).unwrap(), 120.0);
        assert_eq!(dp_sum_clipped(&[], 0.0, 1.0, f64::INFINITY, &mut r).unwrap(), 0.0);
        let d = NumericDomain {
            lower: 0.0,
            upper: 10.0,
            integer: false,
        };
        assert_eq!(dp_mean_numerical(&[1.0, 2.0, 3.0], d, f64::INFINITY, &mut r).unwrap(), 2.0);
        assert_eq!(dp_mode_categorical(&[0, 0, 1], 2, f64::INFINITY, &mut r).unwrap(), 0);
        assert_eq!(dp_mode_categorical(&[0, 1], 2, f64::INFINITY, &mut r).unwrap(), 0);
        assert_eq!(dp_mode_categorical(&[1, 1, 0], 3, f64::INFINITY, &mut r).unwrap(), 1);
    }

    #[test]
    fn post_processing_rules() {
        let d = NumericDomain {
            lower: 0.0,
            upper: 120.0,
            integer: false,
        };
        assert_eq!(finish_mean(-3.2, d), 0.0);
        assert_eq!(finish_mean(500.0, d), 120.0);
        let i = NumericDomain { integer: true, ..d };
        assert_eq!(finish_mean(6.6, i), 7.0);
        assert_eq!(finish_mean(6.5, i), 7.0);
        let frac = NumericDomain {
            lower: 0.2,
            upper: 9.7,
            integer: true,
        };
        assert_eq!(finish_mean(9.69, frac), 9.0);
        assert_eq!(finish_mean(0.21, frac), 1.0);
        let mut r = seeded(0);
        assert_eq!(dp_mean_numerical(&[6.0, 7.0, 7.0, 6.0, 7.0], i, f64::INFINITY, &mut r).unwrap(), 7.0);
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let a = dp_count(10, 1.0, &mut seeded(3)).unwrap();
        let b = dp_count(10, 1.0, &mut seeded(3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, 10.0);
    }

    #[test]
    fn argument_errors() {
        let mut r = seeded(0);
        assert!(dp_sum_clipped(&[1.0], 2.0, 2.0, 1.0, &mut r).is_err());
        assert!(dp_count(1, 0.0, &mut r).is_err());
        assert!(dp_mode_categorical(&[3], 2, 1.0, &mut r).is_err());
        assert!(dp_mode_categorical(&[], 0, 1.0, &mut r).is_err());
    }

    #[test]
    fn strong_majority_survives_small_noise() {
        let values: Vec<usize> = std::iter::repeat_n(0, 90).chain(std::iter::repeat_n(1, 10)).collect();
        let mut r = seeded(11);
        let wins = (0..100)
            .filter(|_| dp_mode_categorical(&values, 2, 50.0, &mut r).unwrap() == 0)
            .count();
        assert!(wins >= 99);
    }

    #[test]
    fn laplace_moments() {
        let mut r = seeded(5);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_laplace(2.0, &mut r)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03);
        assert!((var / 8.0 - 1.0).abs() < 0.05);
    }

    proptest::proptest! {
        #[test]
        fn mean_always_within_bounds(
            values in proptest::collection::vec(-100.0f64..300.0, 0..20),
            xi in 0.01f64..5.0,
            seed in 0u64..1000,
            integer in proptest::bool::ANY,
        ) {
            let d = NumericDomain { lower: 0.0, upper: 120.0, integer };
            let m = dp_mean_numerical(&values, d, xi, &mut seeded(seed)).unwrap();
            proptest::prop_assert!((0.0..=120.0).contains(&m));
            if integer { proptest::prop_assert_eq!(m.fract(), 0.0); }
        }

        #[test]
        fn mode_always_in_domain(values in proptest::collection::vec(0usize..4, 0..30), xi in 0.01f64..5.0, seed in 0u64..100) {
            let m = dp_mode_categorical(&values, 4, xi, &mut seeded(seed)).unwrap();
            proptest::prop_assert!(m < 4);
        }
    }
}
