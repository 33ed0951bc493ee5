//! Labeled image collections and deterministic train/test splits.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Labels mapped to image references (paths). Labels are kept in
/// lexicographic order, and so are the references inside each class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    height: usize,
    width: usize,
    classes: BTreeMap<String, Vec<String>>,
}

impl DatasetManifest {
    pub fn new(height: usize, width: usize, classes: BTreeMap<String, Vec<String>>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Empty("dataset has no classes"));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!("dimensions {height}x{width}")));
        }
        let mut classes = classes;
        for (label, refs) in classes.iter_mut() {
            if refs.is_empty() {
                return Err(Error::InvalidArgument(format!("class {label:?} has no images")));
            }
            refs.sort();
            refs.dedup();
        }
        Ok(DatasetManifest { height, width, classes })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn classes(&self) -> &BTreeMap<String, Vec<String>> {
        &self.classes
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.classes.keys().map(String::as_str)
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn len(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(label, reference)` pairs in manifest order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.classes
            .iter()
            .flat_map(|(l, refs)| refs.iter().map(move |r| (l.as_str(), r.as_str())))
    }

    pub fn min_class_size(&self) -> usize {
        self.classes.values().map(Vec::len).min().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitProtocol {
    /// The first `k` images of each shuffled class train, the rest test.
    PerClassK(usize),
    /// One image per class is held out: position `fold mod n` of the class
    /// (in manifest order).
    LeaveOneOut { fold: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub protocol: SplitProtocol,
    pub seed: u64,
}

impl SplitSpec {
    pub fn per_class(k: usize, seed: u64) -> Self {
        SplitSpec { protocol: SplitProtocol::PerClassK(k), seed }
    }

    pub fn describe(&self) -> String {
        match self.protocol {
            SplitProtocol::PerClassK(k) => format!("k:{k},seed:{}", self.seed),
            SplitProtocol::LeaveOneOut { fold } => format!("loo:{fold}"),
        }
    }
}

impl core::str::FromStr for SplitSpec {
    type Err = Error;

    /// Parses the [`SplitSpec::describe`] forms `k:N,seed:S` and `loo:F`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad split {s:?}; expected k:N,seed:S or loo:F"));
        let mut k = None;
        let mut seed = 0u64;
        let mut fold = None;
        for part in s.split(',') {
            let (key, value) = part.trim().split_once(':').ok_or_else(bad)?;
            match key.trim() {
                "k" => k = Some(value.trim().parse().map_err(|_| bad())?),
                "seed" => seed = value.trim().parse().map_err(|_| bad())?,
                "loo" => fold = Some(value.trim().parse().map_err(|_| bad())?),
                _ => return Err(bad()),
            }
        }
        match (k, fold) {
            (Some(k), None) => Ok(SplitSpec::per_class(k, seed)),
            (None, Some(fold)) => Ok(SplitSpec { protocol: SplitProtocol::LeaveOneOut { fold }, seed }),
            _ => Err(bad()),
        }
    }
}

// 64-bit FNV-1a.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn class_rng(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ label_hash(label))
}

/// Splits every class into a train and a test part. Shuffling uses
/// ChaCha8 seeded from `(seed, FNV-1a(label))`, so a class's split does not
/// depend on which other classes exist.
pub fn split(manifest: &DatasetManifest, spec: &SplitSpec) -> Result<(DatasetManifest, DatasetManifest)> {
    let mut train = BTreeMap::new();
    let mut test = BTreeMap::new();
    for (label, refs) in &manifest.classes {
        let n = refs.len();
        let (tr, te): (Vec<String>, Vec<String>) = match spec.protocol {
            SplitProtocol::PerClassK(k) => {
                if k == 0 || k >= n {
                    return Err(Error::InvalidArgument(format!(
                        "k = {k} leaves an empty partition for class {label:?} of size {n}"
                    )));
                }
                let mut shuffled = refs.clone();
                shuffled.shuffle(&mut class_rng(spec.seed, label));
                let te = shuffled.split_off(k);
                (shuffled, te)
            }
            SplitProtocol::LeaveOneOut { fold } => {
                if n < 2 {
                    return Err(Error::InvalidArgument(format!(
                        "leave-one-out needs two images in class {label:?}"
                    )));
                }
                let held = fold % n;
                let te = alloc::vec![refs[held].clone()];
                let tr = refs.iter().enumerate().filter(|(i, _)| *i != held).map(|(_, r)| r.clone()).collect();
                (tr, te)
            }
        };
        train.insert(label.clone(), tr);
        test.insert(label.clone(), te);
    }
    Ok((
        DatasetManifest::new(manifest.height, manifest.width, train)?,
        DatasetManifest::new(manifest.height, manifest.width, test)?,
    ))
}

/// An image in memory together with its label and reference.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub path: String,
    pub label: String,
    pub image: GrayImage,
}

/// Builds the manifest describing an in-memory image set.
pub fn manifest_of(images: &[LabeledImage]) -> Result<DatasetManifest> {
    let first = images.first().ok_or(Error::Empty("no images"))?;
    let (h, w) = first.image.dims();
    let mut classes: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for li in images {
        if li.image.dims() != (h, w) {
            return Err(Error::InvalidImage(format!(
                "{} is {}x{}, expected {h}x{w}",
                li.path,
                li.image.height(),
                li.image.width()
            )));
        }
        classes.entry(li.label.clone()).or_default().push(li.path.clone());
    }
    DatasetManifest::new(h, w, classes)
}

/// Selects the images a manifest references, in manifest order.
pub fn select(images: &[LabeledImage], manifest: &DatasetManifest) -> Vec<LabeledImage> {
    let by_key: BTreeMap<(&str, &str), &LabeledImage> =
        images.iter().map(|li| ((li.label.as_str(), li.path.as_str()), li)).collect();
    manifest.entries().filter_map(|k| by_key.get(&k).map(|li| (*li).clone())).collect()
}

/// [`split`] applied to an in-memory image set.
pub fn split_images(images: &[LabeledImage], spec: &SplitSpec) -> Result<(Vec<LabeledImage>, Vec<LabeledImage>)> {
    let manifest = manifest_of(images)?;
    let (train, test) = split(&manifest, spec)?;
    Ok((select(images, &train), select(images, &test)))
}

/// The distinct labels of an image set.
pub fn label_set(images: &[LabeledImage]) -> BTreeSet<String> {
    images.iter().map(|li| li.label.clone()).collect()
}
