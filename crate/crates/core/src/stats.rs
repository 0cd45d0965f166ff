//! Significance testing and run-cost arithmetic.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub statistic: f64,
    pub dof: f64,
    /// Two-tailed.
    pub p_value: f64,
}

/// Two-tailed paired Student t-test on `a[i] - b[i]`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "paired series of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument("paired t-test needs at least 2 pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let dof = (n - 1) as f64;
    let statistic = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let p_value = (2.0 * dist.cdf(-statistic.abs())).min(1.0);
    Ok(TTest {
        statistic,
        dof,
        p_value,
    })
}

/// kg CO2-eq for a device drawing `power_watts` for `hours` on a grid
/// emitting `kg_per_kwh`.
pub fn energy_report(power_watts: f64, hours: f64, kg_per_kwh: f64) -> f64 {
    power_watts * hours / 1000.0 * kg_per_kwh
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        // frozen from scipy.stats.ttest_rel
        let t = paired_t_test(&[0.70, 0.72, 0.68, 0.75, 0.71], &[0.65, 0.69, 0.66, 0.70, 0.69]).unwrap();
        assert!((t.statistic - 5.013026509266509).abs() < 1e-9);
        assert!((t.p_value - 0.0074217887719941825).abs() < 1e-6);
        let t = paired_t_test(&[1., 2., 3., 4., 5., 6.], &[1.5, 1.9, 3.7, 3.9, 5.8, 6.2]).unwrap();
        assert!((t.statistic + 2.076136996343499).abs() < 1e-9);
        assert!((t.p_value - 0.09251500555042762).abs() < 1e-6);
    }

    #[test]
    fn degenerate_inputs() {
        let a = [0.5, 0.6, 0.7];
        assert!(matches!(paired_t_test(&a, &a), Err(Error::ZeroVariance)));
        assert!(paired_t_test(&a, &a[..2]).is_err());
        assert!(paired_t_test(&a[..1], &a[..1]).is_err());
    }

    #[test]
    fn near_constant_shift() {
        let b: Vec<f64> = (0..10).map(|i| i as f64 * 0.01).collect();
        let a: Vec<f64> = b.iter().enumerate().map(|(i, x)| x + 0.1 + (i % 2) as f64 * 1e-6).collect();
        assert!(paired_t_test(&a, &b).unwrap().p_value < 1e-6);
    }

    #[test]
    fn energy() {
        assert!((energy_report(300.0, 1.0, 0.3633) - 0.10899).abs() < 1e-12);
        assert_eq!(energy_report(300.0, 0.0, 0.3633), 0.0);
        assert_eq!(energy_report(0.0, 5.0, 0.3633), 0.0);
    }
}
