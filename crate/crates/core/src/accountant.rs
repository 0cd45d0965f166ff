//! Pure-DP budget arithmetic and an append-only spend ledger.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};

/// An `(ε, 0)` budget. `ε = +∞` means "no privacy".
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PrivacyBudget {
    epsilon: f64,
}

impl PrivacyBudget {
    pub const ZERO: PrivacyBudget = PrivacyBudget { epsilon: 0.0 };
    pub const INFINITE: PrivacyBudget = PrivacyBudget {
        epsilon: f64::INFINITY,
    };

    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be non-negative, got {epsilon}"
            )));
        }
        Ok(PrivacyBudget { epsilon })
    }

    pub fn epsilon(self) -> f64 {
        self.epsilon
    }

    pub fn delta(self) -> f64 {
        0.0
    }

    pub fn is_infinite(self) -> bool {
        self.epsilon.is_infinite()
    }
}

impl fmt::Display for PrivacyBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.epsilon)
        }
    }
}

/// Sequential composition: budgets add, `+∞` absorbs.
pub fn compose_sequential(budgets: &[PrivacyBudget]) -> PrivacyBudget {
    PrivacyBudget {
        epsilon: budgets.iter().map(|b| b.epsilon).sum(),
    }
}

/// Parallel composition over disjoint data: the maximum budget.
pub fn compose_parallel(budgets: &[PrivacyBudget]) -> PrivacyBudget {
    PrivacyBudget {
        epsilon: budgets.iter().map(|b| b.epsilon).fold(0.0, f64::max),
    }
}

/// Amplification by subsampling at rate `n / population`:
/// `ε' = ln(1 + (n/N)(e^ε − 1))`.
pub fn amplify(epsilon: f64, n: u64, population: u64) -> Result<PrivacyBudget> {
    if n == 0 || n > population {
        return Err(Error::InvalidArgument(format!(
            "amplification needs 0 < n <= N, got n={n}, N={population}"
        )));
    }
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "amplification needs a finite non-negative epsilon, got {epsilon}"
        )));
    }
    if n == population {
        return PrivacyBudget::new(epsilon);
    }
    let rate = n as f64 / population as f64;
    // ln(1 + r(e^ε - 1)) = ε + ln(r + (1 - r)e^{-ε}); the second form keeps
    // precision for large ε where e^ε overflows
    let eps = if epsilon > 1.0 {
        epsilon + (rate + (1.0 - rate) * (-epsilon).exp()).ln()
    } else {
        (rate * epsilon.exp_m1()).ln_1p()
    };
    PrivacyBudget::new(eps)
}

/// `parts` equal shares of `epsilon`.
pub fn split_uniform(epsilon: PrivacyBudget, parts: usize) -> Result<Vec<PrivacyBudget>> {
    if parts == 0 {
        return Err(Error::InvalidArgument("cannot split a budget into 0 parts".into()));
    }
    let share = PrivacyBudget {
        epsilon: epsilon.epsilon / parts as f64,
    };
    Ok(vec![share; parts])
}

#[derive(Debug, Clone, PartialEq)]
pub enum Composition {
    Sequential,
    /// Member of a parallel group: the group costs the maximum, over
    /// partitions, of the summed spend inside each partition.
    Parallel { group: String, partition: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub operation: String,
    pub budget: PrivacyBudget,
    pub composition: Composition,
}

/// Append-only record of every noisy release made during one build.
#[derive(Debug, Clone, Default)]
pub struct SpendLedger {
    entries: Vec<LedgerEntry>,
    subsampling: Option<(u64, u64)>,
}

impl SpendLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_sequential(&mut self, operation: impl Into<String>, budget: PrivacyBudget) {
        self.entries.push(LedgerEntry {
            operation: operation.into(),
            budget,
            composition: Composition::Sequential,
        });
    }

    /// Record a release over one partition of a disjoint split. The caller
    /// attests that partitions of the same group touch disjoint records.
    pub fn record_parallel(
        &mut self,
        operation: impl Into<String>,
        budget: PrivacyBudget,
        group: impl Into<String>,
        partition: usize,
    ) {
        self.entries.push(LedgerEntry {
            operation: operation.into(),
            budget,
            composition: Composition::Parallel {
                group: group.into(),
                partition,
            },
        });
    }

    /// Declare that everything in the ledger ran on a Poisson subsample of
    /// rate `n / population`.
    pub fn record_subsampling(&mut self, n: u64, population: u64) {
        self.subsampling = Some((n, population));
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    /// Total before amplification.
    pub fn composed_total(&self) -> PrivacyBudget {
        self.total_of(self.entries.len())
    }

    fn total_of(&self, upto: usize) -> PrivacyBudget {
        let mut sequential = Vec::new();
        let mut groups: BTreeMap<&str, BTreeMap<usize, Vec<PrivacyBudget>>> = BTreeMap::new();
        for e in &self.entries[..upto] {
            match &e.composition {
                Composition::Sequential => sequential.push(e.budget),
                Composition::Parallel { group, partition } => groups
                    .entry(group.as_str())
                    .or_default()
                    .entry(*partition)
                    .or_default()
                    .push(e.budget),
            }
        }
        for partitions in groups.values() {
            let per_partition: Vec<_> = partitions.values().map(|b| compose_sequential(b)).collect();
            sequential.push(compose_parallel(&per_partition));
        }
        compose_sequential(&sequential)
    }

    /// Total after amplification, if a subsampling step was recorded.
    pub fn total(&self) -> Result<PrivacyBudget> {
        let composed = self.composed_total();
        match self.subsampling {
            Some((n, population)) if !composed.is_infinite() => amplify(composed.epsilon, n, population),
            _ => Ok(composed),
        }
    }

    /// Fail unless the ledger total equals `expected` (relative 1e-9).
    pub fn assert_total(&self, expected: PrivacyBudget) -> Result<()> {
        let got = self.total()?;
        let ok = if expected.is_infinite() || got.is_infinite() {
            expected.is_infinite() && got.is_infinite()
        } else {
            (got.epsilon - expected.epsilon).abs() <= 1e-9 * expected.epsilon.abs().max(1.0)
        };
        if ok {
            Ok(())
        } else {
            Err(Error::LedgerMismatch {
                ledger: got.epsilon,
                expected: expected.epsilon,
            })
        }
    }

    /// Tab-separated audit log: operation, epsilon, kind, running total.
    pub fn audit_log(&self) -> String {
        let mut out = String::from("operation\tepsilon\tkind\trunning_total\n");
        for (i, e) in self.entries.iter().enumerate() {
            let kind = match &e.composition {
                Composition::Sequential => "sequential".to_string(),
                Composition::Parallel { group, partition } => format!("parallel:{group}#{partition}"),
            };
            let _ = writeln!(out, "{}\t{}\t{}\t{}", e.operation, e.budget, kind, self.total_of(i + 1));
        }
        if let Some((n, population)) = self.subsampling {
            let total = self.total().map(|t| t.to_string()).unwrap_or_else(|e| e.to_string());
            let _ = writeln!(out, "subsample\t-\tamplify:{n}/{population}\t{total}");
        }
        out
    }
}
