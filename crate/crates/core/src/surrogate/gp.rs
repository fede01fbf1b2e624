//! Exact Gaussian-process regression over peptides with a Tanimoto kernel.
//!
//! Targets are standardized to zero mean and unit variance before fitting;
//! [`GpModel::posterior`] reports in original units and
//! [`GpModel::posterior_standardized`] in the fitted space.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::fingerprint::{fingerprint, tanimoto, Fingerprint};
use crate::error::{GeoError, Result};
use crate::peptide::Peptide;

pub const DEFAULT_NOISE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub peptide: Peptide,
    pub value: f64,
}

impl EvalRecord {
    pub fn new(peptide: Peptide, value: f64) -> Self {
        EvalRecord { peptide, value }
    }
}

#[derive(Debug, Clone)]
pub struct GpModel {
    pub records: Vec<EvalRecord>,
    pub kernel_variance: f64,
    /// Jitter actually used (may exceed the requested value after a retry).
    pub noise: f64,
    pub y_mean: f64,
    pub y_scale: f64,
    fingerprints: Vec<Fingerprint>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl GpModel {
    /// Fits on the records; a failed factorization is retried once with ten
    /// times the noise.
    pub fn fit(records: &[EvalRecord], kernel_variance: f64, noise: f64) -> Result<Self> {
        if records.is_empty() {
            return Err(GeoError::invalid("GP needs at least one record"));
        }
        if !(kernel_variance > 0.0) || !(noise > 0.0) {
            return Err(GeoError::invalid("kernel variance and noise must be > 0"));
        }
        if records.iter().any(|r| !r.value.is_finite()) {
            return Err(GeoError::NonFinite("oracle value"));
        }
        let n = records.len();
        let fingerprints: Vec<Fingerprint> = records.iter().map(|r| fingerprint(&r.peptide)).collect();
        let y_mean = records.iter().map(|r| r.value).sum::<f64>() / n as f64;
        let var = records.iter().map(|r| (r.value - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let y = DVector::from_iterator(n, records.iter().map(|r| (r.value - y_mean) / y_scale));
        let gram = DMatrix::from_fn(n, n, |i, j| kernel_variance * tanimoto(&fingerprints[i], &fingerprints[j]));
        let mut used = noise;
        let chol = match Cholesky::new(&gram + DMatrix::identity(n, n) * used) {
            Some(c) => c,
            None => {
                used *= 10.0;
                Cholesky::new(&gram + DMatrix::identity(n, n) * used).ok_or(GeoError::Factorization(used))?
            }
        };
        let alpha = chol.solve(&y);
        Ok(GpModel {
            records: records.to_vec(),
            kernel_variance,
            noise: used,
            y_mean,
            y_scale,
            fingerprints,
            chol,
            alpha,
        })
    }

    fn cross(&self, fp: &Fingerprint) -> DVector<f64> {
        DVector::from_iterator(
            self.fingerprints.len(),
            self.fingerprints.iter().map(|f| self.kernel_variance * tanimoto(fp, f)),
        )
    }

    /// Mean and variance in standardized units.
    pub fn posterior_standardized(&self, p: &Peptide) -> (f64, f64) {
        let fp = fingerprint(p);
        let ks = self.cross(&fp);
        let mean = ks.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&ks).expect("Cholesky factor is invertible");
        let var = self.kernel_variance * tanimoto(&fp, &fp) - v.norm_squared();
        (mean, var.max(0.0))
    }

    /// Mean and variance in the units of the oracle.
    pub fn posterior(&self, p: &Peptide) -> (f64, f64) {
        let (m, v) = self.posterior_standardized(p);
        (self.y_mean + self.y_scale * m, v * self.y_scale * self.y_scale)
    }

    pub fn standardize(&self, value: f64) -> f64 {
        (value - self.y_mean) / self.y_scale
    }
}
