use crate::accountant::{split_uniform, PrivacyBudget};
use crate::error::{Error, Result};

/// Condition numbers above this are logged when inverting.
pub const CONDITION_WARNING: f64 = 1e8;

/// `U x U` randomized-response transition matrix; row `u` is the output
/// distribution given true value `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionMatrix {
    size: usize,
    epsilon: f64,
    entries: Vec<f64>,
}

impl DistortionMatrix {
    /// Keep-probability `e^ε / (U − 1 + e^ε)`, each other value `1 / (U − 1 + e^ε)`.
    /// `ε = +∞` gives the identity.
    pub fn new(epsilon: f64, size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidArgument(format!(
                "distortion matrix needs a domain of at least 2 values, got {size}"
            )));
        }
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::NonPositiveBudget(epsilon));
        }
        let (keep, other) = if epsilon.is_infinite() {
            (1.0, 0.0)
        } else {
            // divide through by e^ε so large budgets do not overflow
            let rest = (size - 1) as f64 * (-epsilon).exp();
            (1.0 / (1.0 + rest), (-epsilon).exp() / (1.0 + rest))
        };
        let entries = (0..size * size)
            .map(|i| if i / size == i % size { keep } else { other })
            .collect();
        Ok(DistortionMatrix {
            size,
            epsilon,
            entries,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn get(&self, input: usize, output: usize) -> f64 {
        self.entries[input * self.size + output]
    }

    pub fn row(&self, input: usize) -> &[f64] {
        &self.entries[input * self.size..(input + 1) * self.size]
    }

    pub fn is_identity(&self) -> bool {
        self.epsilon.is_infinite()
    }

    /// `max_{u,u',o} p[u][o] / p[u'][o]`; `+∞` when some output is impossible
    /// under one input but not another.
    pub fn max_likelihood_ratio(&self) -> f64 {
        let mut worst: f64 = 1.0;
        for o in 0..self.size {
            for u in 0..self.size {
                for v in 0..self.size {
                    let (num, den) = (self.get(u, o), self.get(v, o));
                    let ratio = if den == 0.0 {
                        if num == 0.0 { 1.0 } else { f64::INFINITY }
                    } else {
                        num / den
                    };
                    worst = worst.max(ratio);
                }
            }
        }
        worst
    }

    /// Row-major inverse. Closed form for `U = 2`, Gauss-Jordan with partial
    /// pivoting otherwise.
    pub fn inverse(&self) -> Option<Vec<f64>> {
        let inv = if self.size == 2 {
            let (a, b, c, d) = (self.entries[0], self.entries[1], self.entries[2], self.entries[3]);
            let det = a * d - b * c;
            if det.abs() < 1e-300 {
                return None;
            }
            vec![d / det, -b / det, -c / det, a / det]
        } else {
            invert(&self.entries, self.size)?
        };
        let cond = one_norm(&self.entries, self.size) * one_norm(&inv, self.size);
        if cond > CONDITION_WARNING {
            log::warn!(
                "distortion matrix (U={}, eps={}) is ill-conditioned: cond_1 = {cond:.3e}",
                self.size,
                self.epsilon
            );
        }
        Some(inv)
    }
}

fn one_norm(m: &[f64], n: usize) -> f64 {
    (0..n)
        .map(|c| (0..n).map(|r| m[r * n + c].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn invert(m: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut a = m.to_vec();
    let mut inv: Vec<f64> = (0..n * n).map(|i| f64::from(u8::from(i / n == i % n))).collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))?;
        if a[pivot * n + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(pivot * n + j, col * n + j);
                inv.swap(pivot * n + j, col * n + j);
            }
        }
        let p = a[col * n + col];
        for j in 0..n {
            a[col * n + j] /= p;
            inv[col * n + j] /= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = a[r * n + col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                a[r * n + j] -= factor * a[col * n + j];
                inv[r * n + j] -= factor * inv[col * n + j];
            }
        }
    }
    Some(inv)
}

/// Per-attribute budgets `ε_1..ε_F, ε_y` summing to the declared total.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetAllocation {
    per_attribute: Vec<f64>,
}

impl BudgetAllocation {
    /// `ε / (F + 1)` for every attribute.
    pub fn uniform(total: f64, attributes: usize) -> Result<Self> {
        let shares = split_uniform(PrivacyBudget::new(total)?, attributes)?;
        Self::from_parts(shares.into_iter().map(PrivacyBudget::epsilon).collect())
    }

    pub fn from_parts(per_attribute: Vec<f64>) -> Result<Self> {
        if per_attribute.is_empty() {
            return Err(Error::InvalidArgument("empty budget allocation".into()));
        }
        let all_inf = per_attribute.iter().all(|e| e.is_infinite() && *e > 0.0);
        if !all_inf {
            if let Some(&bad) = per_attribute.iter().find(|e| e.is_nan() || **e <= 0.0) {
                return Err(Error::NonPositiveBudget(bad));
            }
        }
        Ok(BudgetAllocation { per_attribute })
    }

    /// Check against a declared total within 1e-9.
    pub fn check_total(&self, declared: f64) -> Result<()> {
        let total = self.total();
        let ok = if declared.is_infinite() {
            total.is_infinite()
        } else {
            (total - declared).abs() <= 1e-9
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "per-attribute budgets sum to {total}, declared total is {declared}"
            )))
        }
    }

    pub fn per_attribute(&self) -> &[f64] {
        &self.per_attribute
    }

    pub fn total(&self) -> f64 {
        self.per_attribute.iter().sum()
    }

    /// One matrix per attribute for the given domain sizes.
    pub fn matrices(&self, dims: &[usize]) -> Result<Vec<DistortionMatrix>> {
        if dims.len() != self.per_attribute.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} budgets for {} attributes",
                self.per_attribute.len(),
                dims.len()
            )));
        }
        dims.iter()
            .zip(&self.per_attribute)
            .map(|(&d, &e)| DistortionMatrix::new(e, d))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_ln3() {
        let p = DistortionMatrix::new(3f64.ln(), 2).unwrap();
        for (got, want) in [p.get(0, 0), p.get(0, 1), p.get(1, 0), p.get(1, 1)]
            .iter()
            .zip([0.75, 0.25, 0.25, 0.75])
        {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn infinite_budget_is_identity() {
        let p = DistortionMatrix::new(f64::INFINITY, 3).unwrap();
        for u in 0..3 {
            for o in 0..3 {
                assert_eq!(p.get(u, o), if u == o { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(p.max_likelihood_ratio(), f64::INFINITY);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(DistortionMatrix::new(0.0, 2), Err(Error::NonPositiveBudget(_))));
        assert!(DistortionMatrix::new(-1.0, 2).is_err());
        assert!(DistortionMatrix::new(1.0, 1).is_err());
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        for &(eps, u) in &[(0.3, 2), (1.0, 3), (2.0, 5), (40.0, 4)] {
            let p = DistortionMatrix::new(eps, u).unwrap();
            let inv = p.inverse().unwrap();
            for r in 0..u {
                for c in 0..u {
                    let v: f64 = (0..u).map(|k| p.get(r, k) * inv[k * u + c]).sum();
                    let want = if r == c { 1.0 } else { 0.0 };
                    assert!((v - want).abs() < 1e-9, "eps={eps} u={u} ({r},{c}) = {v}");
                }
            }
        }
    }

    #[test]
    fn huge_budget_does_not_overflow() {
        let p = DistortionMatrix::new(1000.0, 2).unwrap();
        assert_eq!(p.get(0, 0), 1.0);
        assert!(p.get(0, 1) >= 0.0);
    }

    #[test]
    fn allocation() {
        let a = BudgetAllocation::uniform(4.0, 4).unwrap();
        assert_eq!(a.per_attribute(), &[1.0; 4]);
        a.check_total(4.0).unwrap();
        assert!(a.check_total(5.0).is_err());
        assert!(BudgetAllocation::from_parts(vec![1.0, 0.0]).is_err());
        let inf = BudgetAllocation::uniform(f64::INFINITY, 3).unwrap();
        inf.check_total(f64::INFINITY).unwrap();
        assert!(inf.matrices(&[2, 2, 2]).unwrap().iter().all(DistortionMatrix::is_identity));
        assert!(a.matrices(&[2, 2]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn rows_sum_to_one_and_ratio_bounded(eps in 0.01f64..30.0, u in 2usize..8) {
            let p = DistortionMatrix::new(eps, u).unwrap();
            for r in 0..u {
                let s: f64 = p.row(r).iter().sum();
                proptest::prop_assert!((s - 1.0).abs() <= 1e-12);
                for o in 0..u {
                    proptest::prop_assert!(p.get(r, o) > 0.0 && p.get(r, o) <= 1.0);
                }
                proptest::prop_assert!(p.get(r, r) > p.get(r, (r + 1) % u));
            }
            proptest::prop_assert!(p.max_likelihood_ratio() <= eps.exp() * (1.0 + 1e-9));
        }
    }
}
