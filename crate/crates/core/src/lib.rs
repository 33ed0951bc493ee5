//! Face recognition by eigenfaces, fisherfaces and top-to-bottom HMMs,
//! plus a dispatcher that profiles a probe image and picks one of them.
//!
//! The crate is `no_std` and only needs `alloc`. File IO, model archives
//! and the command line live in the `facelab` companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod float;

pub mod dataset;
pub mod dispatch;
pub mod eigenfaces;
pub mod error;
pub mod eval;
pub mod fisherfaces;
pub mod hmm;
pub mod image;
pub mod linalg;
pub mod numerics;
pub mod pca;
pub mod stats;
pub mod synth;

pub use dataset::{DatasetManifest, LabeledImage, SplitProtocol, SplitSpec};
pub use dispatch::{DispatchPolicy, ImageProfile, MethodId, MultiModel, ProfileCalibration};
pub use eigenfaces::{EigenDecision, EigenModel, Verdict};
pub use error::{Error, Result};
pub use eval::{ErrorReport, Prediction, Recognizer};
pub use fisherfaces::{FisherModel, ScatterPair};
pub use hmm::{BlockParams, HmmConfig, HmmModel, KltBasis, SubjectBank};
pub use image::{FaceVector, GrayImage};
pub use linalg::Matrix;
