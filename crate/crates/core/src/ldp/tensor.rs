use std::sync::Arc;

use crate::dataset::{Dataset, Provenance, Record, Value};
use crate::error::{Error, Result};
use crate::schema::Schema;

use super::distortion::DistortionMatrix;

/// Refuse joint tensors larger than this many cells.
pub const MAX_CELLS: u128 = 1 << 20;

/// Dense joint table over `d_1 x ... x d_F x d_y`, row-major with the label
/// as the fastest-varying axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTensor {
    dims: Vec<usize>,
    cells: Vec<f64>,
    normalized: bool,
}

pub(crate) fn checked_cells(dims: &[usize]) -> Result<usize> {
    let cells = dims.iter().map(|&d| d as u128).product::<u128>();
    if cells > MAX_CELLS {
        return Err(Error::TensorTooLarge {
            cells,
            max: MAX_CELLS,
        });
    }
    Ok(cells as usize)
}

impl FrequencyTensor {
    pub fn new(dims: Vec<usize>, cells: Vec<f64>) -> Result<Self> {
        let n = checked_cells(&dims)?;
        if cells.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} cells for dims {dims:?}",
                cells.len()
            )));
        }
        let normalized = cells.iter().all(|&c| c >= 0.0) && (cells.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        Ok(FrequencyTensor {
            dims,
            cells,
            normalized,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn index_of(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.dims).fold(0, |acc, (&c, &d)| acc * d + c)
    }

    pub fn coords_of(&self, mut index: usize) -> Vec<usize> {
        let mut coords = vec![0; self.dims.len()];
        for (slot, &d) in coords.iter_mut().zip(&self.dims).rev() {
            *slot = index % d;
            index /= d;
        }
        coords
    }

    /// Replace every fibre along `mode` by `m * fibre`, with `m` a row-major
    /// `d x d` matrix and `d = dims[mode]`.
    pub fn apply_along_mode(&mut self, mode: usize, m: &[f64]) {
        let d = self.dims[mode];
        debug_assert_eq!(m.len(), d * d);
        let inner: usize = self.dims[mode + 1..].iter().product();
        let outer: usize = self.dims[..mode].iter().product();
        let mut fibre = vec![0.0; d];
        for o in 0..outer {
            let base = o * d * inner;
            for i in 0..inner {
                for (j, slot) in fibre.iter_mut().enumerate() {
                    *slot = self.cells[base + j * inner + i];
                }
                for r in 0..d {
                    let row = &m[r * d..(r + 1) * d];
                    self.cells[base + r * inner + i] = row.iter().zip(&fibre).map(|(a, b)| a * b).sum();
                }
            }
        }
        self.normalized = false;
    }

    /// Clamp negative cells to zero and rescale to unit mass.
    pub fn clamp_and_normalize(&mut self) -> Result<()> {
        for c in &mut self.cells {
            if *c < 0.0 {
                *c = 0.0;
            }
        }
        let total: f64 = self.cells.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument(
                "reconstructed tensor has no positive mass".into(),
            ));
        }
        for c in &mut self.cells {
            *c /= total;
        }
        self.normalized = true;
        Ok(())
    }
}

fn record_coords(record: &Record) -> Result<Vec<usize>> {
    record
        .values
        .iter()
        .map(|v| match v {
            Value::Category(c) => Ok(*c),
            Value::Number(_) => Err(Error::InvalidArgument(
                "joint frequencies need categorical features".into(),
            )),
        })
        .chain(std::iter::once(Ok(usize::from(record.label))))
        .collect()
}

/// Proportion `λ` of each joint value among the perturbed records.
pub fn observed_frequencies(perturbed: &Dataset) -> Result<FrequencyTensor> {
    perturbed.require_provenance(Provenance::Perturbed)?;
    if perturbed.is_empty() {
        return Err(Error::InvalidArgument("no perturbed records to tabulate".into()));
    }
    let dims = perturbed
        .schema()
        .joint_dims()
        .ok_or_else(|| Error::InvalidArgument("schema has numerical features".into()))?;
    let n = checked_cells(&dims)?;
    let mut counts = vec![0u64; n];
    let mut tensor = FrequencyTensor {
        dims,
        cells: Vec::new(),
        normalized: true,
    };
    for record in perturbed.records() {
        counts[tensor.index_of(&record_coords(record)?)] += 1;
    }
    let total = perturbed.len() as f64;
    tensor.cells = counts.into_iter().map(|c| c as f64 / total).collect();
    Ok(tensor)
}

fn check_matrices(dims: &[usize], matrices: &[DistortionMatrix]) -> Result<()> {
    if dims.len() != matrices.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} matrices for {} tensor modes",
            matrices.len(),
            dims.len()
        )));
    }
    for (mode, (d, m)) in dims.iter().zip(matrices).enumerate() {
        if *d != m.size() {
            return Err(Error::DimensionMismatch(format!(
                "mode {mode} has {d} values but its matrix is {0}x{0}",
                m.size()
            )));
        }
    }
    Ok(())
}

/// Unbiased estimate `π̂ = (P_1 ⊗ ... ⊗ P_y)^{-T} λ`, applied one mode at a
/// time. May contain negative cells.
pub fn reconstruct_unclamped(
    lambda: &FrequencyTensor,
    matrices: &[DistortionMatrix],
) -> Result<FrequencyTensor> {
    check_matrices(&lambda.dims, matrices)?;
    let mut pi = lambda.clone();
    for (mode, m) in matrices.iter().enumerate() {
        if m.is_identity() {
            continue;
        }
        let inv = m.inverse().ok_or(Error::SingularMatrix(mode))?;
        let d = m.size();
        // λ_o = Σ_u P[u][o] π_u, so π = (P^T)^{-1} λ = (P^{-1})^T λ
        let inv_t: Vec<f64> = (0..d * d).map(|i| inv[(i % d) * d + i / d]).collect();
        pi.apply_along_mode(mode, &inv_t);
    }
    Ok(pi)
}

/// Estimated joint distribution of the unperturbed population.
#[derive(Debug, Clone)]
pub struct ReconstructedDistribution {
    schema: Arc<Schema>,
    tensor: FrequencyTensor,
    cumulative: Vec<f64>,
}

impl ReconstructedDistribution {
    pub fn new(schema: Arc<Schema>, tensor: FrequencyTensor) -> Result<Self> {
        if !tensor.is_normalized() {
            return Err(Error::InvalidArgument("distribution tensor is not normalized".into()));
        }
        let dims = schema
            .joint_dims()
            .ok_or_else(|| Error::InvalidArgument("schema has numerical features".into()))?;
        if dims != tensor.dims {
            return Err(Error::DimensionMismatch(format!(
                "tensor dims {:?} do not match schema dims {dims:?}",
                tensor.dims
            )));
        }
        let mut acc = 0.0;
        let cumulative = tensor
            .cells
            .iter()
            .map(|c| {
                acc += c;
                acc
            })
            .collect();
        Ok(ReconstructedDistribution {
            schema,
            tensor,
            cumulative,
        })
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn tensor(&self) -> &FrequencyTensor {
        &self.tensor
    }

    pub fn probability(&self, record: &Record) -> f64 {
        record_coords(record)
            .map(|c| self.tensor.cells[self.tensor.index_of(&c)])
            .unwrap_or(0.0)
    }

    /// Cell whose cumulative mass first exceeds `u` in `[0, 1)`.
    pub(crate) fn cell_for(&self, u: f64) -> usize {
        let target = u * self.cumulative.last().copied().unwrap_or(1.0);
        let idx = self.cumulative.partition_point(|&c| c <= target);
        // skip trailing zero-mass cells when rounding lands past the end
        idx.min(self.cumulative.len() - 1)
    }

    pub fn decode(&self, cell: usize) -> Record {
        let coords = self.tensor.coords_of(cell);
        let (label, features) = coords.split_last().expect("at least one mode");
        Record::new(features.iter().map(|&c| Value::Category(c)).collect(), *label == 1)
    }

    /// Marginal probability of the positive label.
    pub fn positive_rate(&self) -> f64 {
        self.tensor.cells.iter().skip(1).step_by(2).sum()
    }
}

/// Invert the perturbation, clamp negatives and renormalize.
pub fn reconstruct_joint(
    lambda: &FrequencyTensor,
    matrices: &[DistortionMatrix],
    schema: Arc<Schema>,
) -> Result<ReconstructedDistribution> {
    let mut pi = reconstruct_unclamped(lambda, matrices)?;
    pi.clamp_and_normalize()?;
    ReconstructedDistribution::new(schema, pi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let t = FrequencyTensor::new(vec![2, 3, 2], vec![1.0 / 12.0; 12]).unwrap();
        for i in 0..12 {
            assert_eq!(t.index_of(&t.coords_of(i)), i);
        }
        assert_eq!(t.index_of(&[1, 2, 1]), 11);
    }

    #[test]
    fn tensor_guard() {
        assert!(matches!(
            checked_cells(&[2; 21]),
            Err(Error::TensorTooLarge { .. })
        ));
        assert_eq!(checked_cells(&[2; 20]).unwrap(), 1 << 20);
    }

    #[test]
    fn identity_reconstruction_is_a_no_op() {
        let lambda = FrequencyTensor::new(vec![2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let id = vec![DistortionMatrix::new(f64::INFINITY, 2).unwrap(); 2];
        assert_eq!(reconstruct_unclamped(&lambda, &id).unwrap().cells(), lambda.cells());
    }

    #[test]
    fn point_mass_goes_negative_then_clamps() {
        // P = [[.75,.25],[.25,.75]], P^{-1} = [[1.5,-.5],[-.5,1.5]];
        // P^{-1} ⊗ P^{-1} applied to e_00 gives (2.25, -0.75, -0.75, 0.25)
        let p = DistortionMatrix::new(3f64.ln(), 2).unwrap();
        let lambda = FrequencyTensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let raw = reconstruct_unclamped(&lambda, &[p.clone(), p.clone()]).unwrap();
        for (got, want) in raw.cells().iter().zip([2.25, -0.75, -0.75, 0.25]) {
            assert!((got - want).abs() < 1e-12);
        }
        let mut clamped = raw.clone();
        clamped.clamp_and_normalize().unwrap();
        assert_eq!(clamped.cells()[1], 0.0);
        assert!((clamped.cells()[0] - 0.9).abs() < 1e-12);
        assert!((clamped.cells()[3] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn mismatched_matrices() {
        let lambda = FrequencyTensor::new(vec![2, 3], vec![1.0 / 6.0; 6]).unwrap();
        let two = DistortionMatrix::new(1.0, 2).unwrap();
        assert!(reconstruct_unclamped(&lambda, std::slice::from_ref(&two)).is_err());
        assert!(reconstruct_unclamped(&lambda, &[two.clone(), two]).is_err());
    }
}
