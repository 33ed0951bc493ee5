//! Multi-model dispatch: measure how a probe differs from clean frontal
//! training faces and hand it to the recognizer best suited to it.
//!
//! Three properties are measured. Pose deviation is the eigenface-space
//! distance to a reference frontal face. Illumination deviation combines
//! the global brightness shift and the left/right brightness imbalance,
//! each scaled by its spread over the training images. Occlusion degree is
//! the fraction of HMM blocks whose KLT reconstruction residual is larger
//! than all but 1% of training blocks. Reconstruction clamps each KLT
//! coefficient to the range seen in training, so an occluder cannot hide
//! behind an extreme but in-span coefficient (a black patch looks like a
//! very dark uniform band otherwise).

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::dataset::LabeledImage;
use crate::eigenfaces::{train_eigen, EigenModel};
use crate::error::{Error, Result};
use crate::eval::{Prediction, Recognizer};
use crate::fisherfaces::{train_fisher, FisherModel};
use crate::hmm::{extract_blocks, fit_klt, train_bank, BlockParams, HmmConfig, KltBasis, SubjectBank};
use crate::image::{FaceVector, GrayImage};
use crate::linalg::{axpy, distance, norm};
use crate::stats;

// Spreads below this are treated as this, so a perfectly uniform training
// set does not turn every deviation into infinity.
const SPREAD_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MethodId {
    Eigen,
    Fisher,
    Hmm,
}

impl MethodId {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodId::Eigen => "eigen",
            MethodId::Fisher => "fisher",
            MethodId::Hmm => "hmm",
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eigen" => Ok(MethodId::Eigen),
            "fisher" => Ok(MethodId::Fisher),
            "hmm" => Ok(MethodId::Hmm),
            other => Err(Error::InvalidArgument(alloc::format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImageProfile {
    pub pose_deviation: f64,
    pub illumination_deviation: f64,
    pub occlusion_degree: f64,
}

/// Training-set statistics the profile is measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCalibration {
    pub mean_intensity: f64,
    pub intensity_spread: f64,
    pub asymmetry_mean: f64,
    pub asymmetry_spread: f64,
    pub blocks: BlockParams,
    pub klt: KltBasis,
    /// Per-coefficient minimum over the training blocks.
    pub coeff_low: Vec<f64>,
    /// Per-coefficient maximum over the training blocks.
    pub coeff_high: Vec<f64>,
    pub residual_threshold: f64,
}

fn asymmetry(image: &GrayImage) -> f64 {
    let (h, w) = image.dims();
    let half = w / 2;
    if half == 0 {
        return 0.0;
    }
    let (mut left, mut right) = (0.0, 0.0);
    for r in 0..h {
        let row = image.row(r);
        left += row[..half].iter().sum::<f64>();
        right += row[w - half..].iter().sum::<f64>();
    }
    let n = (h * half) as f64;
    (left - right) / n
}

impl ProfileCalibration {
    /// Statistics of `train` under the given block geometry and KLT basis.
    pub fn fit(train: &[GrayImage], blocks: BlockParams, klt: KltBasis) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("no calibration images"));
        }
        let means: Vec<f64> = train.iter().map(GrayImage::mean_intensity).collect();
        let asym: Vec<f64> = train.iter().map(asymmetry).collect();
        let d = klt.coefficients();
        let mut all_blocks = Vec::new();
        for img in train {
            all_blocks.extend(extract_blocks(img, &blocks)?);
        }
        let mut coeff_low = vec![f64::INFINITY; d];
        let mut coeff_high = vec![f64::NEG_INFINITY; d];
        for b in &all_blocks {
            for (k, c) in klt.project(b)?.into_iter().enumerate() {
                coeff_low[k] = coeff_low[k].min(c);
                coeff_high[k] = coeff_high[k].max(c);
            }
        }
        let mut cal = ProfileCalibration {
            mean_intensity: stats::mean(&means),
            intensity_spread: stats::std_dev(&means).max(SPREAD_FLOOR),
            asymmetry_mean: stats::mean(&asym),
            asymmetry_spread: stats::std_dev(&asym).max(SPREAD_FLOOR),
            blocks,
            klt,
            coeff_low,
            coeff_high,
            residual_threshold: 0.0,
        };
        let residuals: Vec<f64> = all_blocks.iter().map(|b| cal.block_residual(b)).collect::<Result<_>>()?;
        cal.residual_threshold = stats::percentile(&residuals, 99.0);
        Ok(cal)
    }

    /// Distance from `block` to its KLT reconstruction with coefficients
    /// clamped to the training range.
    pub fn block_residual(&self, block: &[f64]) -> Result<f64> {
        let coeffs = self.klt.project(block)?;
        let mut r: Vec<f64> = block.iter().zip(&self.klt.mean).map(|(a, b)| a - b).collect();
        for (k, c) in coeffs.iter().enumerate() {
            let c = c.clamp(self.coeff_low[k], self.coeff_high[k]);
            axpy(-c, self.klt.basis.row(k), &mut r);
        }
        Ok(norm(&r))
    }

    /// Reuses the bank's block geometry and basis; a raw-pixel bank gets a
    /// fresh `klt_dims` basis fitted on the training blocks.
    pub fn from_bank(train: &[GrayImage], bank: &SubjectBank, klt_dims: usize) -> Result<Self> {
        let klt = match &bank.basis {
            Some(b) => b.clone(),
            None => {
                let mut all = Vec::new();
                for img in train {
                    all.extend(extract_blocks(img, &bank.params)?);
                }
                fit_klt(&all, klt_dims)?
            }
        };
        Self::fit(train, bank.params, klt)
    }

    pub fn illumination(&self, image: &GrayImage) -> f64 {
        let shift = (image.mean_intensity() - self.mean_intensity).abs() / self.intensity_spread;
        let tilt = (asymmetry(image) - self.asymmetry_mean).abs() / self.asymmetry_spread;
        shift + tilt
    }

    pub fn occlusion(&self, image: &GrayImage) -> Result<f64> {
        let blocks = extract_blocks(image, &self.blocks)?;
        let mut flagged = 0usize;
        for b in &blocks {
            if self.block_residual(b)? > self.residual_threshold {
                flagged += 1;
            }
        }
        Ok(flagged as f64 / blocks.len() as f64)
    }
}

/// Measures a probe against the calibration and the reference frontal face.
pub fn profile(
    image: &GrayImage,
    eigen: &EigenModel,
    frontal_ref: &FaceVector,
    calibration: &ProfileCalibration,
) -> Result<ImageProfile> {
    let w = eigen.project(&image.flatten())?;
    let w_ref = eigen.project(frontal_ref)?;
    Ok(ImageProfile {
        pose_deviation: distance(&w, &w_ref),
        illumination_deviation: calibration.illumination(image),
        occlusion_degree: calibration.occlusion(image)?,
    })
}

/// Index of the image whose face vector is closest to the eigenface mean.
pub fn nearest_to_mean(eigen: &EigenModel, images: &[GrayImage]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, img) in images.iter().enumerate() {
        let fv = img.flatten();
        if fv.dim() != eigen.dim() {
            return Err(Error::DimensionMismatch { expected: eigen.dim(), found: fv.dim() });
        }
        let d = distance(fv.values(), eigen.mean());
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::Empty("no candidate frontal images"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchPolicy {
    pub tau_illum: f64,
    pub tau_pose: f64,
    pub tau_occl: f64,
    pub default_method: MethodId,
}

impl Default for DispatchPolicy {
    fn default() -> Self {
        DispatchPolicy { tau_illum: 3.0, tau_pose: f64::INFINITY, tau_occl: 0.1, default_method: MethodId::Eigen }
    }
}

impl DispatchPolicy {
    /// Thresholds at the 95th percentile of each property over clean
    /// training profiles. The occlusion threshold never drops below
    /// `min_occlusion`, since clean faces often flag no block at all.
    pub fn calibrate(clean: &[ImageProfile], min_occlusion: f64) -> Result<Self> {
        if clean.is_empty() {
            return Err(Error::Empty("no calibration profiles"));
        }
        let p95 = |f: fn(&ImageProfile) -> f64| {
            let v: Vec<f64> = clean.iter().map(f).collect();
            stats::percentile(&v, 95.0)
        };
        Ok(DispatchPolicy {
            tau_illum: p95(|p| p.illumination_deviation),
            tau_pose: p95(|p| p.pose_deviation),
            tau_occl: p95(|p| p.occlusion_degree).max(min_occlusion),
            default_method: MethodId::Eigen,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("tau_illum", self.tau_illum), ("tau_pose", self.tau_pose), ("tau_occl", self.tau_occl)] {
            if !(t >= 0.0) {
                return Err(Error::InvalidArgument(alloc::format!("{name} = {t} must be non-negative")));
            }
        }
        Ok(())
    }
}

/// Lighting first, then occlusion (both to fisherfaces), then pose (to the
/// HMM); anything else goes to the policy's default.
pub fn select(profile: &ImageProfile, policy: &DispatchPolicy) -> MethodId {
    if profile.illumination_deviation > policy.tau_illum {
        MethodId::Fisher
    } else if profile.occlusion_degree > policy.tau_occl {
        MethodId::Fisher
    } else if profile.pose_deviation > policy.tau_pose {
        MethodId::Hmm
    } else {
        policy.default_method
    }
}

/// The three recognizers trained on one label set, plus what the
/// dispatcher needs to choose between them.
#[derive(Debug, Clone)]
pub struct MultiModel {
    pub eigen: EigenModel,
    pub fisher: FisherModel,
    pub bank: SubjectBank,
    pub calibration: ProfileCalibration,
    pub frontal_ref: FaceVector,
    pub policy: DispatchPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiOutcome {
    pub method: MethodId,
    pub prediction: Prediction,
    pub profile: ImageProfile,
}

impl MultiModel {
    pub fn new(
        eigen: EigenModel,
        fisher: FisherModel,
        bank: SubjectBank,
        calibration: ProfileCalibration,
        frontal_ref: FaceVector,
        policy: DispatchPolicy,
    ) -> Result<Self> {
        policy.validate()?;
        let labels = eigen.labels();
        if fisher.labels() != labels || Recognizer::labels(&bank) != labels {
            return Err(Error::LabelMismatch);
        }
        let dims = eigen.dims();
        for found in [fisher.dims(), bank.params.dims(), calibration.blocks.dims(), frontal_ref.dims()] {
            if found != dims {
                return Err(Error::DimensionMismatch { expected: dims.0 * dims.1, found: found.0 * found.1 });
            }
        }
        Ok(MultiModel { eigen, fisher, bank, calibration, frontal_ref, policy })
    }

    pub fn profile(&self, image: &GrayImage) -> Result<ImageProfile> {
        profile(image, &self.eigen, &self.frontal_ref, &self.calibration)
    }

    pub fn recognizer(&self, method: MethodId) -> &dyn Recognizer {
        match method {
            MethodId::Eigen => &self.eigen,
            MethodId::Fisher => &self.fisher,
            MethodId::Hmm => &self.bank,
        }
    }

    /// Profiles the probe, selects a method and returns that method's own
    /// prediction unchanged.
    pub fn recognize_multi(&self, image: &GrayImage) -> Result<MultiOutcome> {
        let profile = self.profile(image)?;
        let method = select(&profile, &self.policy);
        let prediction = self.recognizer(method).predict(image)?;
        Ok(MultiOutcome { method, prediction, profile })
    }
}

/// Occlusion threshold floor used by [`train_multi`].
pub const MIN_OCCLUSION_THRESHOLD: f64 = 0.1;

/// Trains all three recognizers on `train`, picks the image nearest the
/// mean face as frontal reference and calibrates the policy on the
/// training profiles. Returns the model and the reference's index.
pub fn train_multi(train: &[LabeledImage], eigen_components: usize, hmm: &HmmConfig) -> Result<(MultiModel, usize)> {
    let faces: Vec<(String, FaceVector)> = train.iter().map(|l| (l.label.clone(), l.image.flatten())).collect();
    let images: Vec<GrayImage> = train.iter().map(|l| l.image.clone()).collect();
    let labeled: Vec<(String, GrayImage)> = train.iter().map(|l| (l.label.clone(), l.image.clone())).collect();
    let eigen = train_eigen(&faces, eigen_components)?;
    let fisher = train_fisher(&faces)?;
    let bank = train_bank(&labeled, hmm)?;
    let calibration = ProfileCalibration::from_bank(&images, &bank, hmm.klt_dims)?;
    let frontal = nearest_to_mean(&eigen, &images)?;
    let frontal_ref = images[frontal].flatten();
    let profiles: Vec<ImageProfile> = images
        .iter()
        .map(|img| profile(img, &eigen, &frontal_ref, &calibration))
        .collect::<Result<_>>()?;
    let policy = DispatchPolicy::calibrate(&profiles, MIN_OCCLUSION_THRESHOLD)?;
    Ok((MultiModel::new(eigen, fisher, bank, calibration, frontal_ref, policy)?, frontal))
}

impl Recognizer for MultiModel {
    fn name(&self) -> String {
        "multi".into()
    }

    fn dims(&self) -> (usize, usize) {
        self.eigen.dims()
    }

    fn labels(&self) -> BTreeSet<String> {
        self.eigen.labels()
    }

    fn predict(&self, image: &GrayImage) -> Result<Prediction> {
        Ok(self.recognize_multi(image)?.prediction)
    }
}
