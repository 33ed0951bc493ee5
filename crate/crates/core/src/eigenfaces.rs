//! Eigenface recognizer.
//!
//! Training centers the faces on their mean `Ψ`, extracts the principal
//! axes through the small `M × M` Gram matrix (see [`crate::pca`]) and keeps
//! every training face as a weight vector `ω = Uᵀ(Γ − Ψ)` in a per-label
//! gallery. A probe is first tested for closeness to face space (its
//! residual after projection), then matched to the nearest gallery vector.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::float;
use crate::image::FaceVector;
use crate::linalg::{distance, dot, norm, Matrix};
use crate::pca;
use crate::stats::percentile;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenModel {
    height: usize,
    width: usize,
    mean: Vec<f64>,
    basis: Matrix,
    eigenvalues: Vec<f64>,
    gallery: BTreeMap<String, Vec<Vec<f64>>>,
    theta_face: f64,
    theta_known: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Face { label: String, distance: f64 },
    UnknownFace { nearest: String, distance: f64 },
    NotAFace { dffs: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecision {
    pub verdict: Verdict,
    pub dffs: f64,
    pub weights: Vec<f64>,
}

impl EigenDecision {
    pub fn label(&self) -> Option<&str> {
        match &self.verdict {
            Verdict::Face { label, .. } => Some(label),
            _ => None,
        }
    }
}

fn check_dims(train: &[(String, FaceVector)]) -> Result<usize> {
    let dim = train.first().ok_or(Error::Empty("no training faces"))?.1.dim();
    for (_, f) in train {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: f.dim() });
        }
    }
    Ok(dim)
}

/// Trains on `M ≥ 2` labeled faces, keeping at most `components` eigenfaces
/// (fewer if the data has lower rank; never more than `M − 1`).
pub fn train_eigen(train: &[(String, FaceVector)], components: usize) -> Result<EigenModel> {
    if train.len() < 2 {
        return Err(Error::Empty("eigenfaces need at least two training faces"));
    }
    if components == 0 {
        return Err(Error::InvalidArgument("component count must be at least 1".into()));
    }
    check_dims(train)?;
    let (height, width) = train[0].1.dims();
    let faces: Vec<&[f64]> = train.iter().map(|(_, f)| f.values()).collect();
    let fit = pca::fit(&faces, components)?;

    let mut model = EigenModel {
        height,
        width,
        mean: fit.mean,
        basis: fit.basis,
        eigenvalues: fit.eigenvalues,
        gallery: BTreeMap::new(),
        theta_face: 0.0,
        theta_known: 0.0,
    };
    let mut residuals = Vec::with_capacity(train.len());
    let mut energy = 0.0;
    for (label, face) in train {
        let (w, r) = model.weights_and_residual(face.values())?;
        residuals.push(r);
        energy += dot(&w, &w) + r * r;
        model.gallery.entry(label.clone()).or_default().push(w);
    }
    // Thresholds are relative to the data scale so that exact self-matches
    // at full rank pass despite round-off.
    let scale = float::sqrt(energy / train.len() as f64).max(1.0);
    let floor = 1e-6 * scale;
    model.theta_face = (3.0 * percentile(&residuals, 95.0)).max(floor);
    model.theta_known = (3.0 * model.default_known_spread()).max(floor);
    Ok(model)
}

impl EigenModel {
    /// Reassembles a model from stored parts, checking its invariants.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        height: usize,
        width: usize,
        mean: Vec<f64>,
        basis: Matrix,
        eigenvalues: Vec<f64>,
        gallery: BTreeMap<String, Vec<Vec<f64>>>,
        theta_face: f64,
        theta_known: f64,
    ) -> Result<Self> {
        let dim = height * width;
        if mean.len() != dim || basis.cols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: basis.cols() });
        }
        let k = basis.rows();
        if eigenvalues.len() != k {
            return Err(Error::DimensionMismatch { expected: k, found: eigenvalues.len() });
        }
        for ws in gallery.values() {
            for w in ws {
                if w.len() != k {
                    return Err(Error::DimensionMismatch { expected: k, found: w.len() });
                }
                if w.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite);
                }
            }
        }
        if !(theta_face >= 0.0 && theta_known >= 0.0) {
            return Err(Error::InvalidArgument("thresholds must be non-negative".into()));
        }
        Ok(EigenModel { height, width, mean, basis, eigenvalues, gallery, theta_face, theta_known })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn components(&self) -> usize {
        self.basis.rows()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// `K × D`; row `k` is the `k`-th eigenface.
    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn eigenface(&self, k: usize) -> &[f64] {
        self.basis.row(k)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn gallery(&self) -> &BTreeMap<String, Vec<Vec<f64>>> {
        &self.gallery
    }

    pub fn theta_face(&self) -> f64 {
        self.theta_face
    }

    pub fn theta_known(&self) -> f64 {
        self.theta_known
    }

    pub fn with_thresholds(mut self, theta_face: f64, theta_known: f64) -> Self {
        self.theta_face = theta_face.max(0.0);
        self.theta_known = theta_known.max(0.0);
        self
    }

    /// A copy keeping only the leading `k` eigenfaces (gallery re-projected).
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.components() {
            return Err(Error::InvalidArgument(alloc::format!(
                "cannot keep {k} of {} components",
                self.components()
            )));
        }
        let rows: Vec<&[f64]> = (0..k).map(|i| self.basis.row(i)).collect();
        let basis = Matrix::from_rows(&rows)?;
        let gallery = self
            .gallery
            .iter()
            .map(|(l, ws)| (l.clone(), ws.iter().map(|w| w[..k].to_vec()).collect()))
            .collect();
        Ok(EigenModel {
            basis,
            eigenvalues: self.eigenvalues[..k].to_vec(),
            gallery,
            mean: self.mean.clone(),
            ..*self
        })
    }

    fn check(&self, face: &[f64]) -> Result<()> {
        if face.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: face.len() });
        }
        Ok(())
    }

    fn weights_and_residual(&self, face: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check(face)?;
        let phi: Vec<f64> = face.iter().zip(&self.mean).map(|(g, m)| g - m).collect();
        let w = self.basis.matvec(&phi)?;
        let mut residual = phi;
        for (k, wk) in w.iter().enumerate() {
            crate::linalg::axpy(-wk, self.basis.row(k), &mut residual);
        }
        Ok((w, norm(&residual)))
    }

    fn default_known_spread(&self) -> f64 {
        let mut intra: f64 = 0.0;
        let mut any_pair = false;
        for ws in self.gallery.values() {
            for i in 0..ws.len() {
                for j in 0..i {
                    any_pair = true;
                    intra = intra.max(distance(&ws[i], &ws[j]));
                }
            }
        }
        if any_pair {
            return intra;
        }
        // Every class is a singleton: fall back to the widest gallery spread.
        let all: Vec<&Vec<f64>> = self.gallery.values().flatten().collect();
        let mut widest: f64 = 0.0;
        for i in 0..all.len() {
            for j in 0..i {
                widest = widest.max(distance(all[i], all[j]));
            }
        }
        widest
    }

    /// Weights `ω = Uᵀ(Γ − Ψ)`.
    pub fn project(&self, face: &FaceVector) -> Result<Vec<f64>> {
        Ok(self.weights_and_residual(face.values())?.0)
    }

    /// `Ψ + U ω`.
    pub fn reconstruct(&self, weights: &[f64]) -> Result<FaceVector> {
        if weights.len() != self.components() {
            return Err(Error::DimensionMismatch { expected: self.components(), found: weights.len() });
        }
        let mut out = self.mean.clone();
        for (k, wk) in weights.iter().enumerate() {
            crate::linalg::axpy(*wk, self.basis.row(k), &mut out);
        }
        FaceVector::with_shape(self.height, self.width, out)
    }

    /// Distance from face space, `‖Φ − U Uᵀ Φ‖`.
    pub fn dffs(&self, face: &FaceVector) -> Result<f64> {
        Ok(self.weights_and_residual(face.values())?.1)
    }

    /// Nearest gallery label and distance for a weight vector; ties go to
    /// the lexicographically smallest label.
    pub fn nearest(&self, weights: &[f64]) -> Result<(String, f64)> {
        let mut best: Option<(&String, f64)> = None;
        for (label, ws) in &self.gallery {
            for w in ws {
                let d = distance(w, weights);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((label, d));
                }
            }
        }
        best.map(|(l, d)| (l.clone(), d)).ok_or(Error::Empty("gallery is empty"))
    }

    pub fn classify(&self, face: &FaceVector) -> Result<EigenDecision> {
        if self.gallery.is_empty() {
            return Err(Error::Empty("gallery is empty"));
        }
        let (weights, dffs) = self.weights_and_residual(face.values())?;
        let verdict = if dffs > self.theta_face {
            Verdict::NotAFace { dffs }
        } else {
            let (label, distance) = self.nearest(&weights)?;
            if distance > self.theta_known {
                Verdict::UnknownFace { nearest: label, distance }
            } else {
                Verdict::Face { label, distance }
            }
        };
        Ok(EigenDecision { verdict, dffs, weights })
    }

    /// Adds a face to the gallery under `label` without touching the basis.
    pub fn enroll(&self, face: &FaceVector, label: &str) -> Result<EigenModel> {
        let (w, dffs) = self.weights_and_residual(face.values())?;
        if dffs > self.theta_face {
            return Err(Error::NotAFace { dffs, threshold: self.theta_face });
        }
        let mut next = self.clone();
        next.gallery.entry(label.into()).or_default().push(w);
        Ok(next)
    }
}
