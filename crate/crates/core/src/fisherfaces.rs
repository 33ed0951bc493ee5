//! Fisherface recognizer: PCA down to at most `N − c` dimensions so the
//! within-class scatter becomes nonsingular, then Fisher's linear
//! discriminant down to at most `c − 1` dimensions. Classification is by
//! nearest class centroid in the discriminant space.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::FaceVector;
use crate::linalg::{axpy, distance, fix_sign, norm, Matrix};
use crate::numerics::{cholesky, gen_sym_eigen};
use crate::pca;

/// Generalized eigenvalues at or below this fraction of the largest are dropped.
const DISCRIMINANT_CUTOFF: f64 = 1e-10;
/// Below this the leading Fisher ratio is considered null (classes inseparable).
const DEGENERATE_RATIO: f64 = 1e-10;
const RIDGE: f64 = 1e-8;

/// Between- and within-class scatter of a labeled sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPair {
    pub between: Matrix,
    pub within: Matrix,
    pub counts: BTreeMap<String, usize>,
    pub class_means: BTreeMap<String, Vec<f64>>,
    pub mean: Vec<f64>,
}

impl ScatterPair {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn class_count(&self) -> usize {
        self.counts.len()
    }
}

fn outer_add(m: &mut Matrix, v: &[f64], weight: f64) {
    let n = v.len();
    for i in 0..n {
        let vi = weight * v[i];
        if vi == 0.0 {
            continue;
        }
        let row = m.row_mut(i);
        axpy(vi, v, row);
    }
}

pub fn compute_scatter<V: AsRef<[f64]>>(samples: &[(String, V)]) -> Result<ScatterPair> {
    let dim = samples.first().ok_or(Error::Empty("no samples"))?.1.as_ref().len();
    let mut groups: BTreeMap<String, Vec<&[f64]>> = BTreeMap::new();
    for (label, x) in samples {
        let x = x.as_ref();
        if x.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: x.len() });
        }
        groups.entry(label.clone()).or_default().push(x);
    }
    if groups.len() < 2 {
        return Err(Error::InvalidArgument("scatter needs at least two classes".into()));
    }
    let mean = pca::mean_of(&samples.iter().map(|(_, x)| x.as_ref()).collect::<Vec<_>>());

    let mut between = Matrix::zeros(dim, dim);
    let mut within = Matrix::zeros(dim, dim);
    let mut counts = BTreeMap::new();
    let mut class_means = BTreeMap::new();
    for (label, xs) in &groups {
        let mu_i = pca::mean_of(xs);
        let diff: Vec<f64> = mu_i.iter().zip(&mean).map(|(a, b)| a - b).collect();
        outer_add(&mut between, &diff, xs.len() as f64);
        for x in xs {
            let d: Vec<f64> = x.iter().zip(&mu_i).map(|(a, b)| a - b).collect();
            outer_add(&mut within, &d, 1.0);
        }
        counts.insert(label.clone(), xs.len());
        class_means.insert(label.clone(), mu_i);
    }
    between.symmetrize();
    within.symmetrize();
    Ok(ScatterPair { between, within, counts, class_means, mean })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherModel {
    height: usize,
    width: usize,
    mean: Vec<f64>,
    /// `r × D`, orthonormal rows (`W_pcaᵀ`).
    pca: Matrix,
    /// `m × r`, unit rows (`W_fldᵀ`).
    fld: Matrix,
    eigenvalues: Vec<f64>,
    centroids: BTreeMap<String, Vec<f64>>,
    degenerate: bool,
    ridge_applied: bool,
}

/// Trains on `N ≥ c + 1` labeled faces from `c ≥ 2` classes.
pub fn train_fisher(train: &[(String, FaceVector)]) -> Result<FisherModel> {
    let dim = train.first().ok_or(Error::Empty("no training faces"))?.1.dim();
    for (_, f) in train {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: f.dim() });
        }
    }
    let classes: BTreeMap<&str, usize> = train.iter().fold(BTreeMap::new(), |mut m, (l, _)| {
        *m.entry(l.as_str()).or_insert(0) += 1;
        m
    });
    let c = classes.len();
    let n = train.len();
    if c < 2 {
        return Err(Error::InvalidArgument("fisherfaces need at least two classes".into()));
    }
    if n < c + 1 {
        return Err(Error::InvalidArgument(alloc::format!(
            "fisherfaces need more images ({n}) than classes ({c})"
        )));
    }
    let (height, width) = train[0].1.dims();

    let faces: Vec<&[f64]> = train.iter().map(|(_, f)| f.values()).collect();
    let fit = pca::fit(&faces, n - c)?;
    let reduced: Vec<(String, Vec<f64>)> = train
        .iter()
        .map(|(l, f)| Ok((l.clone(), fit.project(f.values())?)))
        .collect::<Result<_>>()?;
    let scatter = compute_scatter(&reduced)?;
    let r = scatter.dim();

    let mut within = scatter.within.clone();
    let mut ridge_applied = false;
    if cholesky(&within).is_err() {
        let ridge = RIDGE * within.trace() / r as f64;
        for i in 0..r {
            within[(i, i)] += ridge;
        }
        ridge_applied = true;
        cholesky(&within).map_err(|_| Error::DegenerateScatter)?;
    }
    let gen = gen_sym_eigen(&scatter.between, &within, (c - 1).min(r))?;

    let lead = gen.values.first().copied().unwrap_or(0.0);
    let degenerate = !(lead > DEGENERATE_RATIO);
    let m = if degenerate {
        1
    } else {
        gen.values.iter().take_while(|&&l| l > DISCRIMINANT_CUTOFF * lead).count()
    };

    let mut fld = Matrix::zeros(m, r);
    for k in 0..m {
        let mut w = gen.vectors.column(k);
        let len = norm(&w);
        w.iter_mut().for_each(|x| *x /= len);
        // Fix the sign of the input-space direction W_pca w, not of w.
        let mut back = fit.basis.tr_matvec(&w)?;
        let before = back.clone();
        fix_sign(&mut back);
        if back != before {
            w.iter_mut().for_each(|x| *x = -*x);
        }
        fld.row_mut(k).copy_from_slice(&w);
    }

    let mut model = FisherModel {
        height,
        width,
        mean: fit.mean,
        pca: fit.basis,
        fld,
        eigenvalues: gen.values[..m].to_vec(),
        centroids: BTreeMap::new(),
        degenerate,
        ridge_applied,
    };
    let mut sums: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for (label, y) in &reduced {
        let z = model.fld.matvec(y)?;
        let e = sums.entry(label.clone()).or_insert_with(|| (vec![0.0; m], 0));
        axpy(1.0, &z, &mut e.0);
        e.1 += 1;
    }
    model.centroids = sums
        .into_iter()
        .map(|(l, (s, cnt))| (l, s.into_iter().map(|v| v / cnt as f64).collect()))
        .collect();
    Ok(model)
}

impl FisherModel {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        height: usize,
        width: usize,
        mean: Vec<f64>,
        pca: Matrix,
        fld: Matrix,
        eigenvalues: Vec<f64>,
        centroids: BTreeMap<String, Vec<f64>>,
        degenerate: bool,
        ridge_applied: bool,
    ) -> Result<Self> {
        let dim = height * width;
        if mean.len() != dim || pca.cols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: pca.cols() });
        }
        if fld.cols() != pca.rows() {
            return Err(Error::DimensionMismatch { expected: pca.rows(), found: fld.cols() });
        }
        if eigenvalues.len() != fld.rows() {
            return Err(Error::DimensionMismatch { expected: fld.rows(), found: eigenvalues.len() });
        }
        if let Some(c) = centroids.values().find(|c| c.len() != fld.rows()) {
            return Err(Error::DimensionMismatch { expected: fld.rows(), found: c.len() });
        }
        Ok(FisherModel { height, width, mean, pca, fld, eigenvalues, centroids, degenerate, ridge_applied })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn pca_basis(&self) -> &Matrix {
        &self.pca
    }

    pub fn discriminants(&self) -> &Matrix {
        &self.fld
    }

    /// Number of discriminant dimensions `m`.
    pub fn components(&self) -> usize {
        self.fld.rows()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn centroids(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.centroids
    }

    /// The leading Fisher ratio was numerically zero: the classes cannot be
    /// told apart by any linear projection of the training data.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn ridge_applied(&self) -> bool {
        self.ridge_applied
    }

    /// Input-space direction of discriminant `k` (`W_pca w_k`), unit length.
    pub fn direction(&self, k: usize) -> Vec<f64> {
        self.pca.tr_matvec(self.fld.row(k)).unwrap_or_default()
    }

    /// `z = W_fldᵀ W_pcaᵀ (Γ − μ)`.
    pub fn project(&self, face: &FaceVector) -> Result<Vec<f64>> {
        let x = face.values();
        if x.len() != self.mean.len() {
            return Err(Error::DimensionMismatch { expected: self.mean.len(), found: x.len() });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        self.fld.matvec(&self.pca.matvec(&centered)?)
    }

    /// Nearest centroid; ties go to the lexicographically smallest label.
    pub fn classify(&self, face: &FaceVector) -> Result<(String, f64)> {
        let z = self.project(face)?;
        let mut best: Option<(&String, f64)> = None;
        for (label, c) in &self.centroids {
            let d = distance(c, &z);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((label, d));
            }
        }
        best.map(|(l, d)| (l.clone(), d)).ok_or(Error::Empty("model has no centroids"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    pub(crate) fn two_class() -> Vec<(String, FaceVector)> {
        let pts = [
            ("c1", [0.0, 0.0]),
            ("c1", [1.0, 0.0]),
            ("c1", [0.0, 1.0]),
            ("c2", [4.0, 0.0]),
            ("c2", [5.0, 0.0]),
            ("c2", [4.0, 1.0]),
        ];
        pts.iter()
            .map(|(l, p)| (l.to_string(), FaceVector::from_values(p.to_vec()).unwrap()))
            .collect()
    }

    #[test]
    fn scatter_hand_example() {
        let samples: Vec<(String, Vec<f64>)> =
            two_class().into_iter().map(|(l, f)| (l, f.into_values())).collect();
        let s = compute_scatter(&samples).unwrap();
        let sb = Matrix::from_rows(&[[24.0, 0.0], [0.0, 0.0]]).unwrap();
        let sw = Matrix::from_rows(&[[4.0 / 3.0, -2.0 / 3.0], [-2.0 / 3.0, 4.0 / 3.0]]).unwrap();
        assert!(s.between.sub(&sb).unwrap().max_abs() < 1e-12);
        assert!(s.within.sub(&sw).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn singleton_classes_have_zero_within_scatter() {
        let samples = [("a".to_string(), vec![1.0, 2.0]), ("b".to_string(), vec![3.0, -1.0])];
        let s = compute_scatter(&samples).unwrap();
        assert_eq!(s.within, Matrix::zeros(2, 2));
    }

    #[test]
    fn equal_means_have_zero_between_scatter() {
        let samples = [
            ("a".to_string(), vec![1.0, 0.0]),
            ("a".to_string(), vec![-1.0, 0.0]),
            ("b".to_string(), vec![0.0, 1.0]),
            ("b".to_string(), vec![0.0, -1.0]),
        ];
        let s = compute_scatter(&samples).unwrap();
        assert_eq!(s.between, Matrix::zeros(2, 2));
    }

    #[test]
    fn scatter_errors() {
        assert!(compute_scatter(&[("a".to_string(), vec![1.0])]).is_err());
        let mixed = [("a".to_string(), vec![1.0]), ("b".to_string(), vec![1.0, 2.0])];
        assert!(matches!(compute_scatter(&mixed), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn hand_example_discriminant() {
        let model = train_fisher(&two_class()).unwrap();
        assert_eq!(model.components(), 1);
        assert!((model.eigenvalues()[0] - 24.0).abs() < 1e-8);
        let d = model.direction(0);
        let s5 = 5f64.sqrt();
        assert!((d[0] - 2.0 / s5).abs() < 1e-8 && (d[1] - 1.0 / s5).abs() < 1e-8);
        // Centroids are measured from the global mean (7/3, 1/3): ±4/√5.
        assert!((model.centroids()["c1"][0] + 4.0 / s5).abs() < 1e-8);
        assert!((model.centroids()["c2"][0] - 4.0 / s5).abs() < 1e-8);
    }

    #[test]
    fn projection_examples() {
        let model = train_fisher(&two_class()).unwrap();
        let mu = FaceVector::from_values(model.mean().to_vec()).unwrap();
        assert!(model.project(&mu).unwrap()[0].abs() < 1e-12);
        let s5 = 5f64.sqrt();
        for (_, f) in two_class() {
            let x = f.values();
            let hand = (2.0 * (x[0] - 7.0 / 3.0) + (x[1] - 1.0 / 3.0)) / s5;
            assert!((model.project(&f).unwrap()[0] - hand).abs() < 1e-8);
        }
    }

    #[test]
    fn classifies_training_samples() {
        let model = train_fisher(&two_class()).unwrap();
        for (label, f) in two_class() {
            assert_eq!(model.classify(&f).unwrap().0, label);
        }
    }

    #[test]
    fn centroid_preimage_and_tie() {
        let model = train_fisher(&two_class()).unwrap();
        let c = model.centroids()["c2"][0];
        let pre: Vec<f64> = model.mean().iter().zip(model.direction(0)).map(|(m, d)| m + c * d).collect();
        let (label, dist) = model.classify(&FaceVector::from_values(pre).unwrap()).unwrap();
        assert_eq!(label, "c2");
        assert!(dist < 1e-10);
    }

    #[test]
    fn equidistant_probe_takes_smallest_label() {
        let centroids = [("b".to_string(), alloc::vec![1.0]), ("a".to_string(), alloc::vec![-1.0])]
            .into_iter()
            .collect();
        let model = FisherModel::from_parts(
            1,
            1,
            alloc::vec![0.0],
            Matrix::identity(1),
            Matrix::identity(1),
            alloc::vec![1.0],
            centroids,
            false,
            false,
        )
        .unwrap();
        let probe = FaceVector::from_values(alloc::vec![0.0]).unwrap();
        assert_eq!(model.classify(&probe).unwrap(), ("a".to_string(), 1.0));
    }

    #[test]
    fn label_permutation() {
        let swapped: Vec<(String, FaceVector)> = two_class()
            .into_iter()
            .map(|(l, f)| (if l == "c1" { "c2".to_string() } else { "c1".to_string() }, f))
            .collect();
        let a = train_fisher(&two_class()).unwrap();
        let b = train_fisher(&swapped).unwrap();
        assert!(a.discriminants().sub(b.discriminants()).unwrap().max_abs() < 1e-10);
        assert!((a.centroids()["c1"][0] - b.centroids()["c2"][0]).abs() < 1e-10);
    }

    #[test]
    fn identical_classes_are_degenerate() {
        let mut t = two_class();
        let copy: Vec<(String, FaceVector)> = t.iter().map(|(_, f)| ("z".to_string(), f.clone())).collect();
        t.retain(|(l, _)| l == "c1");
        t.extend(copy.into_iter().take(3));
        let model = train_fisher(&t).unwrap();
        assert!(model.is_degenerate());
        assert!(model.eigenvalues()[0].abs() < 1e-10);
    }

    #[test]
    fn needs_two_classes_and_spare_images() {
        let one: Vec<_> = two_class().into_iter().filter(|(l, _)| l == "c1").collect();
        assert!(train_fisher(&one).is_err());
        let tight: Vec<_> = two_class().into_iter().step_by(3).collect();
        assert!(train_fisher(&tight).is_err());
    }
}
