//! Global DP: Poisson subsampling, GROUP BY partitioning and Laplace-noised
//! aggregate demonstrations.

mod groupby;
mod noise;

use rand::Rng;

pub use groupby::{group_by_partition, Bucketing, GroupByPlan, GroupKey};
pub use noise::{
    dp_count, dp_mean_numerical, dp_mode_categorical, dp_sum_clipped, laplace_cdf, laplace_scale,
    sample_laplace, NumericDomain,
};

use crate::accountant::{amplify, compose_sequential, PrivacyBudget, SpendLedger};
use crate::dataset::{Dataset, Value};
use crate::error::{Error, Result};
use crate::prompt::{render_demonstration, DemonstrationSet, DpRow, PromptTemplate};
use crate::rng;
use crate::schema::{FeatureKind, Schema};

/// Keep each record independently with probability `n_target / N`.
pub fn poisson_subsample<R: Rng + ?Sized>(dataset: &Dataset, n_target: usize, rng: &mut R) -> Result<Dataset> {
    let n = dataset.len();
    if n_target == 0 || n_target > n {
        return Err(Error::InvalidArgument(format!(
            "subsample target must lie in [1, {n}], got {n_target}"
        )));
    }
    let rate = n_target as f64 / n as f64;
    let kept = dataset
        .records()
        .iter()
        .filter(|_| rng.random::<f64>() < rate)
        .cloned()
        .collect();
    Ok(dataset.with_records(kept))
}

/// DP summary of one subset: noisy mean per numerical feature, noisy mode
/// per categorical feature and for the label.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRecord {
    values: Vec<Value>,
    label: bool,
    subset_size: usize,
}

impl AggregateRecord {
    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn label(&self) -> bool {
        self.label
    }

    /// True subset size. Diagnostic only; never serialized.
    pub fn subset_size(&self) -> usize {
        self.subset_size
    }
}

/// Per-attribute budgets `ξ_1..ξ_F, ξ_y`.
fn check_budgets(schema: &Schema, budgets: &[f64]) -> Result<()> {
    if budgets.len() != schema.num_features() + 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} budgets for {} features plus the label",
            budgets.len(),
            schema.num_features()
        )));
    }
    if let Some(&bad) = budgets.iter().find(|b| b.is_nan() || **b <= 0.0) {
        return Err(Error::NonPositiveBudget(bad));
    }
    Ok(())
}

/// Aggregate one subset, logging each release into `ledger` as partition
/// `partition` of a per-attribute parallel group.
pub fn aggregate_subset<R: Rng + ?Sized>(
    subset: &Dataset,
    budgets: &[f64],
    rng: &mut R,
    ledger: &mut SpendLedger,
    partition: usize,
) -> Result<AggregateRecord> {
    let schema = subset.schema();
    check_budgets(schema, budgets)?;
    let budget = |x: f64| PrivacyBudget::new(x).expect("checked positive");
    let mut values = Vec::with_capacity(schema.num_features());
    for (j, feature) in schema.features.iter().enumerate() {
        let xi = budgets[j];
        match &feature.kind {
            FeatureKind::Numerical { lower, upper, integer } => {
                let column = subset.numeric_column(j);
                let domain = NumericDomain {
                    lower: *lower,
                    upper: *upper,
                    integer: *integer,
                };
                values.push(Value::Number(dp_mean_numerical(&column, domain, xi, rng)?));
                ledger.record_parallel(format!("count:{}", feature.name), budget(xi / 2.0), &feature.name, partition);
                ledger.record_parallel(format!("sum:{}", feature.name), budget(xi / 2.0), &feature.name, partition);
            }
            FeatureKind::Categorical { domain } => {
                let column: Vec<usize> = subset
                    .records()
                    .iter()
                    .map(|r| r.values[j].as_category().expect("categorical"))
                    .collect();
                values.push(Value::Category(dp_mode_categorical(&column, domain.len(), xi, rng)?));
                for (c, cat) in domain.iter().enumerate() {
                    ledger.record_parallel(
                        format!("hist:{}={cat}", feature.name),
                        budget(xi),
                        &feature.name,
                        partition * domain.len() + c,
                    );
                }
            }
        }
    }
    let xi_y = budgets[schema.num_features()];
    let labels: Vec<usize> = subset.records().iter().map(|r| usize::from(r.label)).collect();
    let label = dp_mode_categorical(&labels, 2, xi_y, rng)? == 1;
    for (c, cat) in schema.label.domain().expect("binary label").iter().enumerate() {
        ledger.record_parallel(
            format!("hist:{}={cat}", schema.label.name),
            budget(xi_y),
            &schema.label.name,
            partition * 2 + c,
        );
    }
    Ok(AggregateRecord {
        values,
        label,
        subset_size: subset.len(),
    })
}

/// Output of one GDP demonstration build.
#[derive(Debug, Clone)]
pub struct GdpBuild {
    pub demonstrations: DemonstrationSet,
    pub aggregates: Vec<AggregateRecord>,
    pub ledger: SpendLedger,
    pub subsample_size: usize,
}

/// Poisson-subsample, partition, aggregate each subset under DP and render
/// one demonstration per subset.
///
/// `budgets` holds `ξ` for every feature and then the label. Subset `i`
/// draws its noise from `derive_seed(s, [i])` where `s` is taken from `rng`
/// after subsampling. The ledger total is checked against
/// `amplify(Σξ, n_target, N)` before returning.
pub fn gdp_demonstrations<R: Rng + ?Sized>(
    dataset: &Dataset,
    n_target: usize,
    plan: &GroupByPlan,
    budgets: &[f64],
    rng: &mut R,
    template: &PromptTemplate,
) -> Result<GdpBuild> {
    let schema = dataset.schema();
    check_budgets(schema, budgets)?;
    plan.validate(schema)?;
    let subset = poisson_subsample(dataset, n_target, rng)?;
    let groups = if plan.k == 1 {
        if subset.is_empty() {
            return Err(Error::EmptyGroup { bucket: vec![] });
        }
        vec![subset.clone()]
    } else {
        group_by_partition(&subset, plan)?
    };
    let base: u64 = rng.random();
    let mut ledger = SpendLedger::new();
    let aggregates = groups
        .iter()
        .enumerate()
        .map(|(i, g)| aggregate_subset(g, budgets, &mut rng::derived(base, &[i as u64]), &mut ledger, i))
        .collect::<Result<Vec<_>>>()?;
    ledger.record_subsampling(n_target as u64, dataset.len() as u64);

    let total = compose_sequential(
        &budgets
            .iter()
            .map(|&b| PrivacyBudget::new(b))
            .collect::<Result<Vec<_>>>()?,
    );
    let expected = if total.is_infinite() {
        total
    } else {
        amplify(total.epsilon(), n_target as u64, dataset.len() as u64)?
    };
    ledger.assert_total(expected)?;

    let demos = aggregates
        .iter()
        .map(|a| render_demonstration(template, DpRow::Aggregate(a), schema))
        .collect::<Result<Vec<_>>>()?;
    Ok(GdpBuild {
        demonstrations: DemonstrationSet::new(demos),
        aggregates,
        ledger,
        subsample_size: subset.len(),
    })
}
