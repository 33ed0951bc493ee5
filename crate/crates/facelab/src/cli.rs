//! The `facelab` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use facelab_core::dataset::split_images;
use facelab_core::dispatch::{self, select, MultiModel};
use facelab_core::eigenfaces::train_eigen;
use facelab_core::eval::{evaluate, threshold_sweep, Recognizer};
use facelab_core::fisherfaces::train_fisher;
use facelab_core::hmm::{train_bank, ObservationKind, TrainParams};
use facelab_core::{synth, FaceVector, GrayImage, HmmConfig, LabeledImage, SplitSpec};

use crate::archive::{Archive, Model, ProfileState};
use crate::error::{Error, Result};
use crate::fsio::{read_pgm, scan_dataset, write_atomic, write_dataset};
use crate::policy::{self, PolicyFile};
use crate::report;

/// File names inside a directory written by `train --method all`.
pub const EIGEN_FILE: &str = "eigen.ffm";
pub const FISHER_FILE: &str = "fisher.ffm";
pub const HMM_FILE: &str = "hmm.ffm";
pub const PROFILE_FILE: &str = "profile.ffm";
pub const POLICY_FILE: &str = "policy.txt";

#[derive(Debug, Parser)]
#[command(name = "facelab", version, about = "Eigenface, fisherface and HMM face recognition")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model on a dataset directory (one sub-directory per subject)
    Train(TrainArgs),
    /// Recognize a single PGM image
    Recognize(RecognizeArgs),
    /// Classify a dataset partition and report the error rate as CSV
    Evaluate(EvaluateArgs),
    /// Print the dispatcher's profile of an image and the method it selects
    Assess(AssessArgs),
    /// Print what a model archive holds
    Inspect(InspectArgs),
    /// Write a seeded synthetic dataset
    Generate(GenerateArgs),
    /// Known/unknown threshold sweep for an eigenface model, as CSV
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TrainMethod {
    Eigen,
    Fisher,
    Hmm,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Partition {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Banded,
    Illumination,
}

#[derive(Debug, Args)]
struct SplitArgs {
    /// `k:N,seed:S` (N training images per subject) or `loo:F`
    #[arg(long)]
    split: Option<String>,
    /// Which side of the split to use
    #[arg(long, value_enum)]
    partition: Option<Partition>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    method: TrainMethod,
    #[arg(long)]
    dataset: PathBuf,
    /// Archive file, or a directory for `--method all`
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
    /// Eigenfaces to keep
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// HMM states per subject
    #[arg(long, default_value_t = 5)]
    states: usize,
    /// Block height in rows
    #[arg(long = "block-l", default_value_t = 10)]
    block_l: usize,
    /// Rows shared by consecutive blocks
    #[arg(long, default_value_t = 9)]
    overlap: usize,
    /// KLT coefficients per block
    #[arg(long = "klt-d", default_value_t = 10)]
    klt_d: usize,
    /// Use raw block pixels as HMM observations instead of KLT coefficients
    #[arg(long)]
    raw_pixels: bool,
    /// Also train an HMM face detector over all subjects
    #[arg(long)]
    detector: bool,
    #[arg(long, default_value_t = 20)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

#[derive(Debug, Args)]
struct RecognizeArgs {
    /// Archive file, or a directory written by `train --method all`
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Policy overriding the model directory's own
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Dispatch between the three recognizers (needs a model directory)
    #[arg(long)]
    multi: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
    /// Write the CSV here instead of standard output
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    policy: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AssessArgs {
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Reference frontal face replacing the one chosen at training time
    #[arg(long)]
    frontal: Option<PathBuf>,
    #[arg(long)]
    image: PathBuf,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    subjects: Option<usize>,
    #[arg(long)]
    per_subject: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Eigenface archive
    #[arg(long)]
    model: PathBuf,
    /// Dataset of enrolled subjects
    #[arg(long)]
    known: PathBuf,
    /// Dataset of faces outside the gallery
    #[arg(long)]
    impostors: PathBuf,
    #[arg(long, default_value_t = 21)]
    steps: usize,
}

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch_command(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch_command(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Train(a) => train(a, out),
        Command::Recognize(a) => recognize(a, out),
        Command::Evaluate(a) => evaluate_cmd(a, out),
        Command::Assess(a) => assess(a, out),
        Command::Inspect(a) => inspect(a, out),
        Command::Generate(a) => generate(a, out),
        Command::Sweep(a) => sweep(a, out),
    }
}

fn io_out(r: std::io::Result<()>) -> Result<()> {
    r.map_err(|e| Error::io("<stdout>", e))
}

/// Applies `--split`/`--partition`. Without a split every image is used.
fn partition(images: Vec<LabeledImage>, args: &SplitArgs, default: Partition) -> Result<(Vec<LabeledImage>, String)> {
    let Some(text) = &args.split else {
        if args.partition.is_some() {
            return Err(Error::Usage("--partition needs --split".into()));
        }
        return Ok((images, "all".into()));
    };
    let spec: SplitSpec = text.parse().map_err(|e: facelab_core::Error| Error::Usage(e.to_string()))?;
    let (train, test) = split_images(&images, &spec)?;
    let which = args.partition.unwrap_or(default);
    let name = match which {
        Partition::Train => "train",
        Partition::Test => "test",
    };
    Ok((if which == Partition::Train { train } else { test }, format!("{}:{name}", spec.describe())))
}

fn hmm_config(a: &TrainArgs) -> HmmConfig {
    HmmConfig {
        block_height: a.block_l,
        overlap: a.overlap,
        states: a.states,
        klt_dims: a.klt_d,
        observation: if a.raw_pixels { ObservationKind::RawPixels } else { ObservationKind::Klt },
        train: TrainParams { tol: a.tol, max_iter: a.max_iter, ..TrainParams::default() },
        train_detector: a.detector,
    }
}

fn faces(images: &[LabeledImage]) -> Vec<(String, FaceVector)> {
    images.iter().map(|l| (l.label.clone(), l.image.flatten())).collect()
}

fn train(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let images = scan_dataset(&a.dataset)?;
    let (train, split) = partition(images, &a.split, Partition::Train)?;
    let k = a.k;
    let cfg = hmm_config(&a);
    let labels = facelab_core::dataset::label_set(&train).len();
    match a.method {
        TrainMethod::Eigen => {
            let m = train_eigen(&faces(&train), k)?;
            Model::Eigen(m).save(&a.out)?;
        }
        TrainMethod::Fisher => {
            let m = train_fisher(&faces(&train))?;
            Model::Fisher(m).save(&a.out)?;
        }
        TrainMethod::Hmm => {
            let pairs: Vec<(String, GrayImage)> = train.iter().map(|l| (l.label.clone(), l.image.clone())).collect();
            let bank = train_bank(&pairs, &cfg)?;
            Model::Hmm(bank).save(&a.out)?;
        }
        TrainMethod::All => {
            let (multi, frontal) = dispatch::train_multi(&train, k, &cfg)?;
            save_multi(&a.out, multi, Some(train[frontal].path.clone()))?;
        }
    }
    io_out(writeln!(
        out,
        "trained {} on {} images of {labels} subjects ({split}) -> {}",
        format!("{:?}", a.method).to_lowercase(),
        train.len(),
        a.out.display()
    ))
}

fn save_multi(dir: &Path, multi: MultiModel, frontal_path: Option<String>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let MultiModel { eigen, fisher, bank, calibration, frontal_ref, policy } = multi;
    Model::Eigen(eigen).save(&dir.join(EIGEN_FILE))?;
    Model::Fisher(fisher).save(&dir.join(FISHER_FILE))?;
    Model::Hmm(bank).save(&dir.join(HMM_FILE))?;
    Model::Profile(ProfileState { calibration, frontal_ref }).save(&dir.join(PROFILE_FILE))?;
    policy::save(&dir.join(POLICY_FILE), &PolicyFile { policy, frontal_ref: frontal_path })
}

/// Loads a directory written by `train --method all`.
pub fn load_multi(dir: &Path, policy_path: Option<&Path>, frontal: Option<&Path>) -> Result<MultiModel> {
    let expect = |name: &str, m: Model| -> Result<Model> {
        if m.method() == name {
            Ok(m)
        } else {
            Err(Error::Archive(format!("{}: expected a {name} archive", dir.display())))
        }
    };
    let Model::Eigen(eigen) = expect("eigen", Model::load(&dir.join(EIGEN_FILE))?)? else { unreachable!() };
    let Model::Fisher(fisher) = expect("fisher", Model::load(&dir.join(FISHER_FILE))?)? else { unreachable!() };
    let Model::Hmm(bank) = expect("hmm", Model::load(&dir.join(HMM_FILE))?)? else { unreachable!() };
    let Model::Profile(state) = expect("profile", Model::load(&dir.join(PROFILE_FILE))?)? else { unreachable!() };
    let default_policy = dir.join(POLICY_FILE);
    let policy = policy::load(policy_path.unwrap_or(&default_policy))?.policy;
    let frontal_ref = match frontal {
        Some(p) => read_pgm(p)?.flatten(),
        None => state.frontal_ref,
    };
    Ok(MultiModel::new(eigen, fisher, bank, state.calibration, frontal_ref, policy)?)
}

enum Loaded {
    Single(Model),
    Multi(Box<MultiModel>),
}

impl Loaded {
    fn open(path: &Path, policy: Option<&Path>, multi: bool) -> Result<Loaded> {
        if path.is_dir() {
            return Ok(Loaded::Multi(Box::new(load_multi(path, policy, None)?)));
        }
        if multi {
            return Err(Error::Usage("--multi needs a model directory from `train --method all`".into()));
        }
        Ok(Loaded::Single(Model::load(path)?))
    }

    fn recognizer(&self) -> Result<&dyn Recognizer> {
        Ok(match self {
            Loaded::Multi(m) => m.as_ref(),
            Loaded::Single(Model::Eigen(m)) => m,
            Loaded::Single(Model::Fisher(m)) => m,
            Loaded::Single(Model::Hmm(m)) => m,
            Loaded::Single(Model::Profile(_)) => {
                return Err(Error::Usage("a profile archive cannot recognize faces".into()))
            }
        })
    }
}

fn recognize(a: RecognizeArgs, out: &mut dyn Write) -> Result<()> {
    let loaded = Loaded::open(&a.model, a.policy.as_deref(), a.multi)?;
    let image = read_pgm(&a.image)?;
    let (method, prediction) = match &loaded {
        Loaded::Multi(m) => {
            let outcome = m.recognize_multi(&image)?;
            (outcome.method.to_string(), outcome.prediction)
        }
        Loaded::Single(_) => {
            let r = loaded.recognizer()?;
            (r.name(), r.predict(&image)?)
        }
    };
    io_out(writeln!(out, "image,method,prediction,score\n{},{method},{},{}", a.image.display(), prediction.text, prediction.score))
}

fn evaluate_cmd(a: EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let loaded = Loaded::open(&a.model, a.policy.as_deref(), false)?;
    let images = scan_dataset(&a.dataset)?;
    let (test, split) = partition(images, &a.split, Partition::Test)?;
    let report = evaluate(loaded.recognizer()?, &test, &split)?;
    match &a.report {
        Some(path) => {
            let mut buf = Vec::new();
            report::write_report(&report, &mut buf)?;
            write_atomic(path, &buf)?;
            io_out(writeln!(out, "{}", report::summary(&report)))
        }
        None => report::write_report(&report, out),
    }
}

fn assess(a: AssessArgs, out: &mut dyn Write) -> Result<()> {
    let multi = load_multi(&a.models, a.policy.as_deref(), a.frontal.as_deref())?;
    let image = read_pgm(&a.image)?;
    let profile = multi.profile(&image)?;
    let method = select(&profile, &multi.policy);
    io_out(writeln!(
        out,
        "pose_deviation={}\nillumination_deviation={}\nocclusion_degree={}\nmethod={method}",
        profile.pose_deviation, profile.illumination_deviation, profile.occlusion_degree
    ))
}

fn inspect(a: InspectArgs, out: &mut dyn Write) -> Result<()> {
    let archive = Archive::load(&a.model)?;
    let model = Model::from_archive(&archive)?;
    let mut text = format!(
        "format {}\nmethod {}\ndims {}x{}\nlabels {}\n",
        crate::archive::MAGIC,
        archive.method,
        archive.dims.0,
        archive.dims.1,
        archive.labels.len()
    );
    for (name, m) in &archive.arrays {
        text.push_str(&format!("array {name} {}x{}\n", m.rows(), m.cols()));
    }
    match &model {
        Model::Eigen(m) => text.push_str(&format!(
            "components {}\ntheta_face {}\ntheta_known {}\n",
            m.components(),
            m.theta_face(),
            m.theta_known()
        )),
        Model::Fisher(m) => text.push_str(&format!(
            "components {}\ndegenerate {}\nridge {}\n",
            m.components(),
            m.is_degenerate(),
            m.ridge_applied()
        )),
        Model::Hmm(b) => {
            let states = b.models.values().next().map_or(0, |m| m.states());
            text.push_str(&format!(
                "subjects {}\nstates {states}\nblocks {} (height {}, overlap {})\ndetector {}\n",
                b.models.len(),
                b.params.block_count(),
                b.params.block_height(),
                b.params.overlap(),
                b.detector.is_some()
            ));
        }
        Model::Profile(p) => {
            text.push_str(&format!("residual_threshold {}\n", p.calibration.residual_threshold))
        }
    }
    io_out(out.write_all(text.as_bytes()))
}

fn generate(a: GenerateArgs, out: &mut dyn Write) -> Result<()> {
    let images = match a.kind {
        Kind::Banded => synth::banded_faces(
            a.subjects.unwrap_or(4),
            a.per_subject.unwrap_or(10),
            a.height.unwrap_or(32),
            a.width.unwrap_or(24),
            a.seed,
        )?,
        Kind::Illumination => synth::illumination_faces(
            a.subjects.unwrap_or(3),
            a.per_subject.unwrap_or(20),
            a.height.unwrap_or(16),
            a.width.unwrap_or(16),
            a.seed,
        )?,
    };
    write_dataset(&a.out, &images)?;
    io_out(writeln!(out, "wrote {} images to {}", images.len(), a.out.display()))
}

fn sweep(a: SweepArgs, out: &mut dyn Write) -> Result<()> {
    let Model::Eigen(eigen) = Model::load(&a.model)? else {
        return Err(Error::Usage("sweep needs an eigenface archive".into()));
    };
    let known: Vec<GrayImage> = scan_dataset(&a.known)?.into_iter().map(|l| l.image).collect();
    let impostors: Vec<GrayImage> = scan_dataset(&a.impostors)?.into_iter().map(|l| l.image).collect();
    let curve = threshold_sweep(&eigen, &known, &impostors, a.steps)?;
    report::write_sweep(&curve, out)
}
