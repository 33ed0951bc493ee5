//! Principal component fit shared by eigenfaces, the Fisher pre-projection
//! and the block KLT.
//!
//! With `M` samples of dimension `D` stacked as the columns of the centered
//! matrix `A`, the principal axes are eigenvectors of `A Aᵀ`. When `M ≤ D`
//! the `M × M` Gram matrix `Aᵀ A` is decomposed instead and each eigenvector
//! `v` maps back as `u = A v / √λ`. Both routes report the eigenvalues of
//! `A Aᵀ` (no `1/M` factor).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::float;
use crate::linalg::{axpy, dot, fix_sign, Matrix};
use crate::numerics::sym_eigen;

/// Eigenpairs at or below this fraction of the largest eigenvalue are dropped.
pub const EIGEN_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaFit {
    pub mean: Vec<f64>,
    /// `K × D`; rows are orthonormal principal axes.
    pub basis: Matrix,
    /// Eigenvalues of `A Aᵀ`, descending, one per basis row.
    pub eigenvalues: Vec<f64>,
}

pub fn mean_of<R: AsRef<[f64]>>(samples: &[R]) -> Vec<f64> {
    let dim = samples.first().map_or(0, |s| s.as_ref().len());
    let mut mean = vec![0.0; dim];
    for s in samples {
        axpy(1.0, s.as_ref(), &mut mean);
    }
    let inv = 1.0 / samples.len() as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    mean
}

/// Fits at most `max_components` axes (and never more than `M − 1`).
pub fn fit<R: AsRef<[f64]>>(samples: &[R], max_components: usize) -> Result<PcaFit> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::Empty("principal components need at least two samples"));
    }
    let dim = samples[0].as_ref().len();
    if dim == 0 {
        return Err(Error::Empty("zero-dimensional samples"));
    }
    for s in samples {
        if s.as_ref().len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: s.as_ref().len() });
        }
    }
    let mean = mean_of(samples);
    let centered: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| s.as_ref().iter().zip(&mean).map(|(x, mu)| x - mu).collect())
        .collect();

    let (values, mut axes) = if m <= dim {
        gram_route(&centered)?
    } else {
        covariance_route(&centered, dim)?
    };

    let lambda_max = values.first().copied().unwrap_or(0.0);
    if !(lambda_max > 0.0) {
        return Err(Error::NoVariance);
    }
    let keep = values
        .iter()
        .take_while(|&&l| l > EIGEN_CUTOFF * lambda_max)
        .count()
        .min(max_components)
        .min(m - 1);
    if keep == 0 {
        return Err(Error::NoVariance);
    }
    axes.truncate(keep);
    reorthonormalize(&mut axes);
    for a in axes.iter_mut() {
        fix_sign(a);
    }
    Ok(PcaFit {
        mean,
        basis: Matrix::from_rows(&axes)?,
        eigenvalues: values[..keep].to_vec(),
    })
}

fn gram_route(centered: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = centered.len();
    let mut gram = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let g = dot(&centered[i], &centered[j]);
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
    }
    let eig = sym_eigen(&gram)?;
    let lambda_max = eig.values[0];
    let dim = centered[0].len();
    let mut axes = Vec::new();
    for (k, &lambda) in eig.values.iter().enumerate() {
        if !(lambda > EIGEN_CUTOFF * lambda_max) {
            break;
        }
        let mut u = vec![0.0; dim];
        for (i, phi) in centered.iter().enumerate() {
            axpy(eig.vectors[(i, k)], phi, &mut u);
        }
        let inv = 1.0 / float::sqrt(lambda);
        u.iter_mut().for_each(|x| *x *= inv);
        axes.push(u);
    }
    Ok((eig.values, axes))
}

fn covariance_route(centered: &[Vec<f64>], dim: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut cov = Matrix::zeros(dim, dim);
    for phi in centered {
        for i in 0..dim {
            let pi = phi[i];
            if pi == 0.0 {
                continue;
            }
            let row = cov.row_mut(i);
            for j in 0..=i {
                row[j] += pi * phi[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            cov[(j, i)] = cov[(i, j)];
        }
    }
    let eig = sym_eigen(&cov)?;
    let axes = (0..dim).map(|k| eig.vector(k)).collect();
    Ok((eig.values, axes))
}

// One modified Gram-Schmidt pass; mapped-back axes of small eigenvalues
// lose a few digits of orthogonality otherwise.
fn reorthonormalize(axes: &mut [Vec<f64>]) {
    for k in 0..axes.len() {
        let (done, rest) = axes.split_at_mut(k);
        let u = &mut rest[0];
        for prev in done.iter() {
            let c = dot(prev, u);
            axpy(-c, prev, u);
        }
        let n = float::sqrt(dot(u, u));
        u.iter_mut().for_each(|x| *x /= n);
    }
}

impl PcaFit {
    pub fn components(&self) -> usize {
        self.basis.rows()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Coefficients `Uᵀ (x − mean)`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        self.basis.matvec(&centered)
    }
}
