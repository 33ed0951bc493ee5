//! A common interface over the recognizers, closed-set error reports and
//! the known/unknown threshold sweep for eigenfaces.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::dataset::LabeledImage;
use crate::eigenfaces::{EigenModel, Verdict};
use crate::error::{Error, Result};
use crate::fisherfaces::FisherModel;
use crate::hmm::SubjectBank;
use crate::image::GrayImage;

/// Text recorded for a probe rejected as an unknown face.
pub const UNKNOWN: &str = "unknown";
/// Text recorded for a probe rejected as not a face.
pub const NOT_A_FACE: &str = "not-a-face";

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `None` when the recognizer rejected the probe.
    pub label: Option<String>,
    /// The label, or why there is none.
    pub text: String,
    /// Distance for the subspace methods, log-likelihood for the HMM.
    pub score: f64,
}

pub trait Recognizer {
    fn name(&self) -> String;
    fn dims(&self) -> (usize, usize);
    fn labels(&self) -> BTreeSet<String>;
    fn predict(&self, image: &GrayImage) -> Result<Prediction>;
}

impl Recognizer for EigenModel {
    fn name(&self) -> String {
        "eigen".into()
    }

    fn dims(&self) -> (usize, usize) {
        EigenModel::dims(self)
    }

    fn labels(&self) -> BTreeSet<String> {
        self.gallery().keys().cloned().collect()
    }

    fn predict(&self, image: &GrayImage) -> Result<Prediction> {
        let decision = self.classify(&image.flatten())?;
        Ok(match decision.verdict {
            Verdict::Face { label, distance } => Prediction { text: label.clone(), label: Some(label), score: distance },
            Verdict::UnknownFace { distance, .. } => Prediction { label: None, text: UNKNOWN.into(), score: distance },
            Verdict::NotAFace { dffs } => Prediction { label: None, text: NOT_A_FACE.into(), score: dffs },
        })
    }
}

impl Recognizer for FisherModel {
    fn name(&self) -> String {
        "fisher".into()
    }

    fn dims(&self) -> (usize, usize) {
        FisherModel::dims(self)
    }

    fn labels(&self) -> BTreeSet<String> {
        self.centroids().keys().cloned().collect()
    }

    fn predict(&self, image: &GrayImage) -> Result<Prediction> {
        let (label, score) = self.classify(&image.flatten())?;
        Ok(Prediction { text: label.clone(), label: Some(label), score })
    }
}

impl Recognizer for SubjectBank {
    fn name(&self) -> String {
        "hmm".into()
    }

    fn dims(&self) -> (usize, usize) {
        self.params.dims()
    }

    fn labels(&self) -> BTreeSet<String> {
        self.models.keys().cloned().collect()
    }

    fn predict(&self, image: &GrayImage) -> Result<Prediction> {
        let (label, scores) = self.recognize(image)?;
        let score = scores[&label];
        Ok(Prediction { text: label.clone(), label: Some(label), score })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub path: String,
    pub truth: String,
    pub prediction: String,
    pub score: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub method: String,
    pub split: String,
    pub error_rate: f64,
    /// `(truth, prediction text) → count`.
    pub confusion: BTreeMap<(String, String), usize>,
    /// Sorted by path.
    pub records: Vec<Record>,
}

impl ErrorReport {
    pub fn errors(&self) -> usize {
        self.records.iter().filter(|r| !r.correct).count()
    }

    pub fn accuracy(&self) -> f64 {
        1.0 - self.error_rate
    }
}

/// Classifies every test image. Rejections count as errors.
pub fn evaluate<R: Recognizer + ?Sized>(recognizer: &R, test: &[LabeledImage], split: &str) -> Result<ErrorReport> {
    if test.is_empty() {
        return Err(Error::Empty("empty test set"));
    }
    let dims = recognizer.dims();
    let known = recognizer.labels();
    for li in test {
        if li.image.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims.0 * dims.1,
                found: li.image.height() * li.image.width(),
            });
        }
        if !known.contains(&li.label) {
            return Err(Error::InvalidArgument(alloc::format!(
                "test label {:?} is unknown to the model",
                li.label
            )));
        }
    }
    let mut order: Vec<&LabeledImage> = test.iter().collect();
    order.sort_by(|a, b| a.path.cmp(&b.path).then_with(|| a.label.cmp(&b.label)));

    let mut records = Vec::with_capacity(order.len());
    let mut confusion = BTreeMap::new();
    for li in order {
        let p = recognizer.predict(&li.image)?;
        let correct = p.label.as_deref() == Some(li.label.as_str());
        *confusion.entry((li.label.clone(), p.text.clone())).or_insert(0) += 1;
        records.push(Record { path: li.path.clone(), truth: li.label.clone(), prediction: p.text, score: p.score, correct });
    }
    let wrong = records.iter().filter(|r| !r.correct).count();
    Ok(ErrorReport {
        method: recognizer.name(),
        split: split.to_string(),
        error_rate: wrong as f64 / records.len() as f64,
        confusion,
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub theta: f64,
    pub false_accept: f64,
    pub false_reject: f64,
}

/// Sweeps the known-face threshold over `[0, max distance]` in `steps`
/// equal steps. A probe is accepted at `θ` when it passes the face-space
/// test and its nearest gallery distance is at most `θ`. False accepts are
/// counted over all impostors, false rejects over the known probes that
/// pass the face-space test.
pub fn threshold_sweep(
    eigen: &EigenModel,
    known: &[GrayImage],
    impostors: &[GrayImage],
    steps: usize,
) -> Result<Vec<SweepPoint>> {
    if known.is_empty() || impostors.is_empty() {
        return Err(Error::Empty("threshold sweep needs known and impostor probes"));
    }
    if steps < 2 {
        return Err(Error::InvalidArgument("threshold sweep needs at least two steps".into()));
    }
    // Nearest distance of each face-passing probe; rejected faces never count as accepted.
    let measure = |set: &[GrayImage]| -> Result<Vec<Option<f64>>> {
        set.iter()
            .map(|img| {
                let d = eigen.classify(&img.flatten())?;
                if d.dffs > eigen.theta_face() {
                    return Ok(None);
                }
                Ok(Some(eigen.nearest(&d.weights)?.1))
            })
            .collect()
    };
    let known_d = measure(known)?;
    let impostor_d = measure(impostors)?;
    let max = known_d.iter().chain(&impostor_d).flatten().copied().fold(0.0, f64::max);
    let faces: Vec<f64> = known_d.iter().flatten().copied().collect();

    Ok((0..steps)
        .map(|i| {
            let theta = if i + 1 == steps { max } else { max * i as f64 / (steps - 1) as f64 };
            let accepted = impostor_d.iter().flatten().filter(|&&d| d <= theta).count();
            let rejected = faces.iter().filter(|&&d| d > theta).count();
            SweepPoint {
                theta,
                false_accept: accepted as f64 / impostor_d.len() as f64,
                false_reject: if faces.is_empty() { 0.0 } else { rejected as f64 / faces.len() as f64 },
            }
        })
        .collect())
}
