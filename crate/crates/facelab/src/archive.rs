//! Plain-text model archives.
//!
//! ```text
//! FFM1
//! method eigen
//! dims 32 24
//! labels 2
//! s01
//! s02
//! array mean 1 768
//! 1.2800000000000000e2 ...
//! end
//! ```
//!
//! Floats are written with 17 significant digits, which is enough for every
//! `f64` to read back bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use facelab_core::dispatch::ProfileCalibration;
use facelab_core::hmm::{ObservationKind, SubjectBank};
use facelab_core::{BlockParams, EigenModel, FaceVector, FisherModel, HmmModel, KltBasis, Matrix};

use crate::error::{Error, Result};
use crate::fsio::write_atomic;

pub const MAGIC: &str = "FFM1";

/// A method tag, image dimensions, a label list and named matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub method: String,
    pub dims: (usize, usize),
    pub labels: Vec<String>,
    pub arrays: Vec<(String, Matrix)>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Archive(msg.into())
}

impl Archive {
    pub fn new(method: &str, dims: (usize, usize)) -> Self {
        Archive { method: method.to_string(), dims, labels: Vec::new(), arrays: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, m: Matrix) {
        self.arrays.push((name.into(), m));
    }

    pub fn push_row(&mut self, name: impl Into<String>, values: &[f64]) {
        let m = Matrix::from_vec(1, values.len(), values.to_vec()).expect("one row");
        self.push(name, m);
    }

    pub fn array(&self, name: &str) -> Result<&Matrix> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| bad(format!("missing array {name:?}")))
    }

    pub fn row(&self, name: &str) -> Result<&[f64]> {
        let m = self.array(name)?;
        if m.rows() != 1 {
            return Err(bad(format!("array {name:?} should have one row, has {}", m.rows())));
        }
        Ok(m.as_slice())
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}\nmethod {}\ndims {} {}\nlabels {}", self.method, self.dims.0, self.dims.1, self.labels.len());
        for l in &self.labels {
            if l.is_empty() || l.contains(['\n', '\r']) || l.trim() != l {
                return Err(bad(format!("label {l:?} cannot be stored")));
            }
            let _ = writeln!(out, "{l}");
        }
        for (name, m) in &self.arrays {
            if name.contains(char::is_whitespace) || name.is_empty() {
                return Err(bad(format!("array name {name:?} cannot be stored")));
            }
            if !m.is_finite() {
                return Err(bad(format!("array {name:?} holds non-finite values")));
            }
            let _ = writeln!(out, "array {name} {} {}", m.rows(), m.cols());
            for r in 0..m.rows() {
                let line: Vec<String> = m.row(r).iter().map(|v| format!("{v:.16e}")).collect();
                let _ = writeln!(out, "{}", line.join(" "));
            }
        }
        out.push_str("end\n");
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Archive> {
        let mut lines = text.lines();
        let magic = lines.next().unwrap_or("").trim_end();
        if magic != MAGIC {
            let version = magic.strip_prefix("FFM").filter(|v| !v.is_empty() && v.bytes().all(|b| b.is_ascii_digit()));
            return Err(match version {
                Some(v) => bad(format!("unsupported format version {v} (expected 1)")),
                None => bad("not a model archive (bad magic)"),
            });
        }
        let mut next = |what: &str| lines.next().ok_or_else(|| bad(format!("truncated before {what}")));
        let method = next("method")?
            .strip_prefix("method ")
            .ok_or_else(|| bad("expected a method line"))?
            .trim()
            .to_string();
        let dims_line = next("dims")?;
        let dims: Vec<usize> = dims_line
            .strip_prefix("dims ")
            .ok_or_else(|| bad("expected a dims line"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(format!("bad dims {dims_line:?}"))))
            .collect::<Result<_>>()?;
        if dims.len() != 2 {
            return Err(bad(format!("bad dims {dims_line:?}")));
        }
        let count: usize = next("labels")?
            .strip_prefix("labels ")
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| bad("expected a labels line"))?;
        let mut labels = Vec::with_capacity(count);
        for _ in 0..count {
            labels.push(next("label")?.to_string());
        }

        let mut arrays = Vec::new();
        loop {
            let header = next("end")?;
            if header == "end" {
                break;
            }
            let parts: Vec<&str> = header.split_whitespace().collect();
            let (name, rows, cols) = match parts.as_slice() {
                ["array", name, r, c] => (
                    name.to_string(),
                    r.parse::<usize>().map_err(|_| bad(format!("bad array header {header:?}")))?,
                    c.parse::<usize>().map_err(|_| bad(format!("bad array header {header:?}")))?,
                ),
                _ => return Err(bad(format!("unexpected line {header:?}"))),
            };
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let line = next(&format!("the end of array {name:?}"))?;
                for tok in line.split_whitespace() {
                    let v: f64 = tok.parse().map_err(|_| bad(format!("bad number {tok:?} in {name:?}")))?;
                    if !v.is_finite() {
                        return Err(bad(format!("non-finite value in {name:?}")));
                    }
                    data.push(v);
                }
            }
            if data.len() != rows * cols {
                return Err(bad(format!("array {name:?} has {} values, expected {}", data.len(), rows * cols)));
            }
            arrays.push((name, Matrix::from_vec(rows, cols, data)?));
        }
        Ok(Archive { method, dims: (dims[0], dims[1]), labels, arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Archive> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Archive::parse(&text)
    }
}

fn scalar(x: &[f64], i: usize, name: &str) -> Result<f64> {
    x.get(i).copied().ok_or_else(|| bad(format!("{name} is too short")))
}

fn as_count(v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
        Ok(v as usize)
    } else {
        Err(bad(format!("{v} is not a count")))
    }
}

/// The dispatcher's measurement state: calibration plus reference face.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileState {
    pub calibration: ProfileCalibration,
    pub frontal_ref: FaceVector,
}

/// Any model that can live in an archive.
#[derive(Debug, Clone)]
pub enum Model {
    Eigen(EigenModel),
    Fisher(FisherModel),
    Hmm(SubjectBank),
    Profile(ProfileState),
}

impl Model {
    pub fn method(&self) -> &'static str {
        match self {
            Model::Eigen(_) => "eigen",
            Model::Fisher(_) => "fisher",
            Model::Hmm(_) => "hmm",
            Model::Profile(_) => "profile",
        }
    }

    pub fn to_archive(&self) -> Archive {
        match self {
            Model::Eigen(m) => eigen_archive(m),
            Model::Fisher(m) => fisher_archive(m),
            Model::Hmm(b) => hmm_archive(b),
            Model::Profile(p) => profile_archive(p),
        }
    }

    pub fn from_archive(a: &Archive) -> Result<Model> {
        match a.method.as_str() {
            "eigen" => eigen_from(a).map(Model::Eigen),
            "fisher" => fisher_from(a).map(Model::Fisher),
            "hmm" => hmm_from(a).map(Model::Hmm),
            "profile" => profile_from(a).map(Model::Profile),
            other => Err(bad(format!("unknown method {other:?}"))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive().save(path)
    }

    pub fn load(path: &Path) -> Result<Model> {
        Model::from_archive(&Archive::load(path)?)
    }
}

fn eigen_archive(m: &EigenModel) -> Archive {
    let mut a = Archive::new("eigen", m.dims());
    let mut rows = Vec::new();
    for (label, weights) in m.gallery() {
        for w in weights {
            a.labels.push(label.clone());
            rows.push(w.clone());
        }
    }
    a.push_row("mean", m.mean());
    a.push("basis", m.basis().clone());
    a.push_row("eigenvalues", m.eigenvalues());
    let gallery = if rows.is_empty() { Matrix::zeros(0, m.components()) } else { Matrix::from_rows(&rows).expect("equal rows") };
    a.push("gallery", gallery);
    a.push_row("thresholds", &[m.theta_face(), m.theta_known()]);
    a
}

fn eigen_from(a: &Archive) -> Result<EigenModel> {
    let gallery_m = a.array("gallery")?;
    if gallery_m.rows() != a.labels.len() {
        return Err(bad("gallery rows and labels disagree"));
    }
    let mut gallery: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for (i, label) in a.labels.iter().enumerate() {
        gallery.entry(label.clone()).or_default().push(gallery_m.row(i).to_vec());
    }
    let t = a.row("thresholds")?;
    Ok(EigenModel::from_parts(
        a.dims.0,
        a.dims.1,
        a.row("mean")?.to_vec(),
        a.array("basis")?.clone(),
        a.row("eigenvalues")?.to_vec(),
        gallery,
        scalar(t, 0, "thresholds")?,
        scalar(t, 1, "thresholds")?,
    )?)
}

fn fisher_archive(m: &FisherModel) -> Archive {
    let mut a = Archive::new("fisher", m.dims());
    let rows: Vec<Vec<f64>> = m.centroids().values().cloned().collect();
    a.labels = m.centroids().keys().cloned().collect();
    a.push_row("mean", m.mean());
    a.push("pca", m.pca_basis().clone());
    a.push("fld", m.discriminants().clone());
    a.push_row("eigenvalues", m.eigenvalues());
    a.push("centroids", Matrix::from_rows(&rows).expect("equal rows"));
    a.push_row("flags", &[f64::from(u8::from(m.is_degenerate())), f64::from(u8::from(m.ridge_applied()))]);
    a
}

fn fisher_from(a: &Archive) -> Result<FisherModel> {
    let c = a.array("centroids")?;
    if c.rows() != a.labels.len() {
        return Err(bad("centroid rows and labels disagree"));
    }
    let centroids = a.labels.iter().enumerate().map(|(i, l)| (l.clone(), c.row(i).to_vec())).collect();
    let flags = a.row("flags")?;
    Ok(FisherModel::from_parts(
        a.dims.0,
        a.dims.1,
        a.row("mean")?.to_vec(),
        a.array("pca")?.clone(),
        a.array("fld")?.clone(),
        a.row("eigenvalues")?.to_vec(),
        centroids,
        scalar(flags, 0, "flags")? != 0.0,
        scalar(flags, 1, "flags")? != 0.0,
    )?)
}

fn push_blocks(a: &mut Archive, p: &BlockParams) {
    let (h, w) = p.dims();
    a.push_row("blocks", &[p.block_height() as f64, p.overlap() as f64, h as f64, w as f64]);
}

fn read_blocks(a: &Archive) -> Result<BlockParams> {
    let b = a.row("blocks")?;
    let get = |i| scalar(b, i, "blocks").and_then(as_count);
    Ok(BlockParams::new(get(0)?, get(1)?, get(2)?, get(3)?)?)
}

fn push_klt(a: &mut Archive, k: &KltBasis) {
    a.push_row("klt_mean", &k.mean);
    a.push("klt_basis", k.basis.clone());
}

fn read_klt(a: &Archive) -> Result<KltBasis> {
    Ok(KltBasis { mean: a.row("klt_mean")?.to_vec(), basis: a.array("klt_basis")?.clone() })
}

fn push_hmm(a: &mut Archive, prefix: &str, m: &HmmModel) {
    a.push(format!("{prefix}.transitions"), m.transitions().clone());
    a.push(format!("{prefix}.means"), m.means().clone());
    a.push(format!("{prefix}.variances"), m.variances().clone());
}

fn read_hmm(a: &Archive, prefix: &str) -> Result<HmmModel> {
    Ok(HmmModel::new(
        a.array(&format!("{prefix}.transitions"))?.clone(),
        a.array(&format!("{prefix}.means"))?.clone(),
        a.array(&format!("{prefix}.variances"))?.clone(),
    )?)
}

fn hmm_archive(b: &SubjectBank) -> Archive {
    let mut a = Archive::new("hmm", b.params.dims());
    push_blocks(&mut a, &b.params);
    let raw = matches!(b.observation, ObservationKind::RawPixels);
    a.push_row("observation", &[f64::from(u8::from(raw))]);
    if let Some(k) = &b.basis {
        push_klt(&mut a, k);
    }
    for (i, (label, m)) in b.models.iter().enumerate() {
        a.labels.push(label.clone());
        push_hmm(&mut a, &format!("model{i}"), m);
    }
    if let Some(d) = &b.detector {
        push_hmm(&mut a, "detector", d);
    }
    a
}

fn hmm_from(a: &Archive) -> Result<SubjectBank> {
    let params = read_blocks(a)?;
    if params.dims() != a.dims {
        return Err(bad("block geometry disagrees with dims"));
    }
    let raw = scalar(a.row("observation")?, 0, "observation")? != 0.0;
    let (observation, basis) =
        if raw { (ObservationKind::RawPixels, None) } else { (ObservationKind::Klt, Some(read_klt(a)?)) };
    let mut models = BTreeMap::new();
    for (i, label) in a.labels.iter().enumerate() {
        models.insert(label.clone(), read_hmm(a, &format!("model{i}"))?);
    }
    let detector = if a.arrays.iter().any(|(n, _)| n == "detector.transitions") {
        Some(read_hmm(a, "detector")?)
    } else {
        None
    };
    Ok(SubjectBank { params, observation, basis, models, detector })
}

fn profile_archive(p: &ProfileState) -> Archive {
    let c = &p.calibration;
    let mut a = Archive::new("profile", p.frontal_ref.dims());
    a.push_row(
        "stats",
        &[c.mean_intensity, c.intensity_spread, c.asymmetry_mean, c.asymmetry_spread, c.residual_threshold],
    );
    push_blocks(&mut a, &c.blocks);
    push_klt(&mut a, &c.klt);
    a.push_row("coeff_low", &c.coeff_low);
    a.push_row("coeff_high", &c.coeff_high);
    a.push_row("frontal_ref", p.frontal_ref.values());
    a
}

fn profile_from(a: &Archive) -> Result<ProfileState> {
    let s = a.row("stats")?;
    let klt = read_klt(a)?;
    let low = a.row("coeff_low")?.to_vec();
    let high = a.row("coeff_high")?.to_vec();
    if low.len() != klt.coefficients() || high.len() != klt.coefficients() {
        return Err(bad("coefficient bounds disagree with the KLT basis"));
    }
    let calibration = ProfileCalibration {
        mean_intensity: scalar(s, 0, "stats")?,
        intensity_spread: scalar(s, 1, "stats")?,
        asymmetry_mean: scalar(s, 2, "stats")?,
        asymmetry_spread: scalar(s, 3, "stats")?,
        residual_threshold: scalar(s, 4, "stats")?,
        blocks: read_blocks(a)?,
        klt,
        coeff_low: low,
        coeff_high: high,
    };
    let frontal_ref = FaceVector::with_shape(a.dims.0, a.dims.1, a.row("frontal_ref")?.to_vec())?;
    Ok(ProfileState { calibration, frontal_ref })
}
