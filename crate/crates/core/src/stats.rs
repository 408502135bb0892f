//! Streaming moment accumulators and replicate pooling.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Running mean and co-moment matrix of vector samples (Welford / Chan).
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator<T: Scalar> {
    count: u64,
    mean: DVector<T>,
    comoment: DMatrix<T>,
}

impl<T: Scalar> MomentAccumulator<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: DVector::zeros(dim),
            comoment: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &DVector<T> {
        &self.mean
    }

    pub fn push(&mut self, x: &DVector<T>) {
        self.count += 1;
        let n = T::lit(self.count as f64);
        let delta = x - &self.mean;
        self.mean += &delta / n;
        let delta_after = x - &self.mean;
        self.comoment += &delta * delta_after.transpose();
    }

    /// Combines two accumulators as if all samples had been pushed into one.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            *self = other.clone();
            return Ok(());
        }
        let (na, nb) = (T::lit(self.count as f64), T::lit(other.count as f64));
        let n = na + nb;
        let delta = &other.mean - &self.mean;
        self.comoment += &other.comoment + &delta * delta.transpose() * (na * nb / n);
        self.mean += &delta * (nb / n);
        self.count += other.count;
        Ok(())
    }

    /// Population covariance (divides by the sample count).
    pub fn covariance(&self) -> Result<DMatrix<T>> {
        if self.count == 0 {
            return Err(invalid("no samples accumulated"));
        }
        let c = &self.comoment / T::lit(self.count as f64);
        Ok((&c + c.transpose()) * T::lit(0.5))
    }
}

/// Mean of independent replicate estimates and its standard error.
#[derive(Debug, Clone)]
pub struct PooledEstimate<T: Scalar> {
    pub mean: DMatrix<T>,
    /// Between-replicate standard deviation divided by `√k`.
    pub std_error: DMatrix<T>,
    pub replicates: usize,
}

impl<T: Scalar> PooledEstimate<T> {
    /// Largest `|mean − target| / std_error` over all entries.
    pub fn max_z_score(&self, target: &DMatrix<T>) -> T {
        let mut worst = T::zero();
        for (i, (m, t)) in self.mean.iter().zip(target.iter()).enumerate() {
            let se = self.std_error[i];
            let diff = (*m - *t).abs();
            let z = if se > T::zero() {
                diff / se
            } else if diff > T::zero() {
                T::lit(f64::INFINITY)
            } else {
                T::zero()
            };
            if z > worst {
                worst = z;
            }
        }
        worst
    }

    /// Largest relative error on the diagonal.
    pub fn max_diagonal_rel_error(&self, target: &DMatrix<T>) -> T {
        (0..self.mean.nrows())
            .map(|i| ((self.mean[(i, i)] - target[(i, i)]) / target[(i, i)]).abs())
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }
}

pub fn pool_replicates<T: Scalar>(estimates: &[DMatrix<T>]) -> Result<PooledEstimate<T>> {
    let k = estimates.len();
    if k < 2 {
        return Err(invalid("pooling needs at least two replicates"));
    }
    let shape = estimates[0].shape();
    if estimates.iter().any(|e| e.shape() != shape) {
        return Err(invalid("replicate estimates differ in shape"));
    }
    let kf = T::lit(k as f64);
    let mean = estimates.iter().fold(DMatrix::zeros(shape.0, shape.1), |acc, e| acc + e) / kf;
    let mut var = DMatrix::<T>::zeros(shape.0, shape.1);
    for e in estimates {
        let d = e - &mean;
        var += d.component_mul(&d);
    }
    var /= T::lit((k - 1) as f64);
    let std_error = var.map(|v| (v / kf).sqrt());
    Ok(PooledEstimate {
        mean,
        std_error,
        replicates: k,
    })
}

/// Mean, variance, skewness and excess kurtosis of a scalar sample.
#[derive(Debug, Clone, Copy)]
pub struct ShapeMoments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

pub fn shape_moments(xs: &[f64]) -> ShapeMoments {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    ShapeMoments {
        mean,
        variance: m2,
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    }
}

/// Mean and standard error of a scalar sample.
pub fn mean_and_std_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}
