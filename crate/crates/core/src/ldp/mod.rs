//! Local DP: k-ary randomized response, frequency reconstruction and
//! sampling of demonstration records from the reconstructed distribution.

mod distortion;
mod tensor;

use std::ops::Deref;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

pub use distortion::{BudgetAllocation, DistortionMatrix, CONDITION_WARNING};
pub use tensor::{
    observed_frequencies, reconstruct_joint, reconstruct_unclamped, FrequencyTensor,
    ReconstructedDistribution, MAX_CELLS,
};

use crate::accountant::{PrivacyBudget, SpendLedger};
use crate::dataset::{Dataset, Provenance, Record, Value};
use crate::error::{Error, Result};
use crate::prompt::{render_demonstration, DemonstrationSet, DpRow, PromptTemplate};
use crate::rng;

pub fn build_distortion_matrix(epsilon: f64, size: usize) -> Result<DistortionMatrix> {
    DistortionMatrix::new(epsilon, size)
}

fn draw_category(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the last partial sum
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

fn check_arity(dataset: &Dataset, matrices: &[DistortionMatrix]) -> Result<()> {
    let dims = dataset.schema().joint_dims().ok_or_else(|| {
        Error::InvalidArgument("randomized response needs an all-categorical schema".into())
    })?;
    if dims.len() != matrices.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} matrices for {} attributes",
            matrices.len(),
            dims.len()
        )));
    }
    for (i, (d, m)) in dims.iter().zip(matrices).enumerate() {
        if *d != m.size() {
            return Err(Error::DimensionMismatch(format!(
                "attribute {i} has {d} values but its matrix is {0}x{0}",
                m.size()
            )));
        }
    }
    Ok(())
}

/// Resample every cell from the matrix row of its true value.
///
/// Record `i` draws from its own stream `derive_seed(seed, [i])`, so the
/// output does not depend on thread scheduling.
pub fn perturb_dataset(dataset: &Dataset, matrices: &[DistortionMatrix], seed: u64) -> Result<Dataset> {
    check_arity(dataset, matrices)?;
    let (label_matrix, feature_matrices) = matrices.split_last().expect("arity checked");
    let records = dataset
        .records()
        .par_iter()
        .enumerate()
        .map(|(i, record)| {
            let mut r = rng::derived(seed, &[i as u64]);
            let values = record
                .values
                .iter()
                .zip(feature_matrices)
                .map(|(v, m)| {
                    let c = v.as_category().expect("categorical schema");
                    let u: f64 = r.random();
                    Value::Category(draw_category(m.row(c), u))
                })
                .collect();
            let u: f64 = r.random();
            let label = draw_category(label_matrix.row(usize::from(record.label)), u) == 1;
            Record::new(values, label)
        })
        .collect();
    Ok(Dataset::from_parts_unchecked(
        Arc::clone(dataset.schema()),
        records,
        Provenance::Perturbed,
    ))
}

/// Ledger for one randomized-response collection: every attribute's budget
/// composes sequentially.
pub fn collection_ledger(matrices: &[DistortionMatrix], schema_names: &[&str]) -> SpendLedger {
    let mut ledger = SpendLedger::new();
    for (m, name) in matrices.iter().zip(schema_names) {
        let budget = PrivacyBudget::new(m.epsilon()).expect("matrix epsilon is positive");
        ledger.record_sequential(format!("rr:{name}"), budget);
    }
    ledger
}

/// A record drawn from a [`ReconstructedDistribution`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampledRecord(Record);

impl Deref for SampledRecord {
    type Target = Record;

    fn deref(&self) -> &Record {
        &self.0
    }
}

impl SampledRecord {
    pub fn into_record(self) -> Record {
        self.0
    }
}

/// `k` i.i.d. draws (with replacement) from the reconstructed joint.
pub fn sample_reconstructed<R: Rng + ?Sized>(
    dist: &ReconstructedDistribution,
    k: usize,
    rng: &mut R,
) -> Result<Vec<SampledRecord>> {
    if k == 0 {
        return Err(Error::InvalidArgument("need k >= 1 samples".into()));
    }
    Ok((0..k)
        .map(|_| SampledRecord(dist.decode(dist.cell_for(rng.random()))))
        .collect())
}

/// `n` sampled records as a dataset, e.g. a baseline training set.
pub fn sample_dataset<R: Rng + ?Sized>(
    dist: &ReconstructedDistribution,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    let records = sample_reconstructed(dist, n, rng)?
        .into_iter()
        .map(SampledRecord::into_record)
        .collect();
    Ok(Dataset::from_parts_unchecked(
        Arc::clone(dist.schema()),
        records,
        Provenance::ReconstructedSampled,
    ))
}

/// Sample `k` records and serialize them as labelled demonstrations.
pub fn ldp_demonstrations<R: Rng + ?Sized>(
    dist: &ReconstructedDistribution,
    k: usize,
    rng: &mut R,
    template: &PromptTemplate,
) -> Result<DemonstrationSet> {
    let schema = dist.schema();
    let demos = sample_reconstructed(dist, k, rng)?
        .iter()
        .map(|r| render_demonstration(template, DpRow::Sampled(r), schema))
        .collect::<Result<Vec<_>>>()?;
    Ok(DemonstrationSet::new(demos))
}
