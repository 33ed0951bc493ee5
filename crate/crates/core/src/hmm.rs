//! Top-to-bottom 1D continuous HMM recognizer.
//!
//! A face of height `H` is cut into overlapping full-width blocks of `L`
//! rows, consecutive blocks sharing `P` rows. Each block is reduced to its
//! leading Karhunen-Loève coefficients (a PCA fitted on all training
//! blocks), giving one observation sequence per image. Every subject gets
//! a left-to-right HMM with single diagonal-Gaussian emissions, trained by
//! uniform segmentation, then Viterbi re-segmentation, then Baum-Welch.
//! Recognition picks the subject whose model gives the highest forward
//! log-likelihood.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::float;
use crate::image::GrayImage;
use crate::linalg::{axpy, Matrix};
use crate::pca;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Block geometry for images of a fixed size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockParams {
    block_height: usize,
    overlap: usize,
    height: usize,
    width: usize,
}

impl BlockParams {
    pub fn new(block_height: usize, overlap: usize, height: usize, width: usize) -> Result<Self> {
        if block_height == 0 || block_height > height {
            return Err(Error::InvalidArgument(alloc::format!(
                "block height {block_height} must be in 1..={height}"
            )));
        }
        if overlap >= block_height {
            return Err(Error::InvalidArgument(alloc::format!(
                "overlap {overlap} must be below the block height {block_height}"
            )));
        }
        if width == 0 {
            return Err(Error::InvalidArgument("zero image width".into()));
        }
        Ok(BlockParams { block_height, overlap, height, width })
    }

    pub fn block_height(&self) -> usize {
        self.block_height
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn stride(&self) -> usize {
        self.block_height - self.overlap
    }

    /// `T = ⌊(H − L)/(L − P)⌋ + 1`
    pub fn block_count(&self) -> usize {
        (self.height - self.block_height) / self.stride() + 1
    }

    /// Length of a flattened block, `L·W`.
    pub fn block_dim(&self) -> usize {
        self.block_height * self.width
    }
}

/// Blocks top to bottom; rows below the last full block are dropped.
pub fn extract_blocks(image: &GrayImage, params: &BlockParams) -> Result<Vec<Vec<f64>>> {
    if image.dims() != params.dims() {
        return Err(Error::DimensionMismatch {
            expected: params.height * params.width,
            found: image.height() * image.width(),
        });
    }
    let len = params.block_dim();
    let px = image.pixels();
    Ok((0..params.block_count())
        .map(|t| {
            let start = t * params.stride() * params.width;
            px[start..start + len].to_vec()
        })
        .collect())
}

/// Karhunen-Loève basis of the training blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct KltBasis {
    pub mean: Vec<f64>,
    /// `d × (L·W)`, orthonormal rows.
    pub basis: Matrix,
}

pub fn fit_klt<R: AsRef<[f64]>>(blocks: &[R], d: usize) -> Result<KltBasis> {
    if d == 0 {
        return Err(Error::InvalidArgument("KLT needs at least one coefficient".into()));
    }
    let fit = pca::fit(blocks, d)?;
    Ok(KltBasis { mean: fit.mean, basis: fit.basis })
}

impl KltBasis {
    pub fn coefficients(&self) -> usize {
        self.basis.rows()
    }

    fn centered(&self, block: &[f64]) -> Result<Vec<f64>> {
        if block.len() != self.mean.len() {
            return Err(Error::DimensionMismatch { expected: self.mean.len(), found: block.len() });
        }
        Ok(block.iter().zip(&self.mean).map(|(a, b)| a - b).collect())
    }

    /// `o = basis · (block − mean)`.
    pub fn project(&self, block: &[f64]) -> Result<Vec<f64>> {
        self.basis.matvec(&self.centered(block)?)
    }

    /// Norm of the part of `block − mean` the basis does not capture.
    pub fn residual(&self, block: &[f64]) -> Result<f64> {
        let mut r = self.centered(block)?;
        let coeffs = self.basis.matvec(&r)?;
        for (k, c) in coeffs.iter().enumerate() {
            axpy(-c, self.basis.row(k), &mut r);
        }
        Ok(crate::linalg::norm(&r))
    }
}

/// `T × d` observation matrix, one row per block.
pub fn observe<R: AsRef<[f64]>>(blocks: &[R], basis: &KltBasis) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = blocks.iter().map(|b| basis.project(b.as_ref())).collect::<Result<_>>()?;
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, basis.coefficients()));
    }
    Matrix::from_rows(&rows)
}

/// Left-to-right HMM with one diagonal Gaussian per state.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    initial: Vec<f64>,
    transitions: Matrix,
    means: Matrix,
    variances: Matrix,
}

impl HmmModel {
    /// Validates the left-to-right structure: transitions only to the same
    /// or the next state, rows summing to one, the last state absorbing.
    /// The start distribution is fixed to the first state.
    pub fn new(transitions: Matrix, means: Matrix, variances: Matrix) -> Result<Self> {
        let n = transitions.rows();
        if n == 0 || !transitions.is_square() {
            return Err(Error::InvalidArgument("transition matrix must be square and non-empty".into()));
        }
        if means.rows() != n || variances.rows() != n || means.cols() != variances.cols() {
            return Err(Error::DimensionMismatch { expected: n, found: means.rows() });
        }
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                let a = transitions[(i, j)];
                if !(a >= 0.0 && a <= 1.0) {
                    return Err(Error::InvalidArgument(alloc::format!("a[{i}][{j}] = {a}")));
                }
                if a != 0.0 && j != i && j != i + 1 {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "transition {i} -> {j} breaks the left-to-right structure"
                    )));
                }
                sum += a;
            }
            if float::abs(sum - 1.0) > 1e-12 {
                return Err(Error::InvalidArgument(alloc::format!("row {i} sums to {sum}")));
            }
        }
        if transitions[(n - 1, n - 1)] != 1.0 {
            return Err(Error::InvalidArgument("last state must be absorbing".into()));
        }
        if !means.is_finite() || variances.as_slice().iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument("emission parameters must be finite with positive variance".into()));
        }
        let mut initial = vec![0.0; n];
        initial[0] = 1.0;
        Ok(HmmModel { initial, transitions, means, variances })
    }

    pub fn states(&self) -> usize {
        self.initial.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.means.cols()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transitions(&self) -> &Matrix {
        &self.transitions
    }

    pub fn means(&self) -> &Matrix {
        &self.means
    }

    pub fn variances(&self) -> &Matrix {
        &self.variances
    }

    /// Diagonal Gaussian log-density of `x` under state `state`.
    pub fn log_emission(&self, state: usize, x: &[f64]) -> f64 {
        let mu = self.means.row(state);
        let var = self.variances.row(state);
        let mut acc = 0.0;
        for ((xi, m), v) in x.iter().zip(mu).zip(var) {
            let d = xi - m;
            acc += LN_2PI + float::ln(*v) + d * d / v;
        }
        -0.5 * acc
    }

    fn log_transition(&self, i: usize, j: usize) -> f64 {
        let a = self.transitions[(i, j)];
        if a > 0.0 {
            float::ln(a)
        } else {
            f64::NEG_INFINITY
        }
    }

    fn check_seq(&self, seq: &Matrix) -> Result<()> {
        if seq.rows() == 0 {
            return Err(Error::Empty("observation sequence"));
        }
        if seq.cols() != self.obs_dim() {
            return Err(Error::DimensionMismatch { expected: self.obs_dim(), found: seq.cols() });
        }
        Ok(())
    }
}

/// Most likely state path and its log-likelihood, computed in log space.
/// Ties prefer the lower state index.
pub fn viterbi(model: &HmmModel, seq: &Matrix) -> Result<(Vec<usize>, f64)> {
    model.check_seq(seq)?;
    let n = model.states();
    let t_len = seq.rows();
    let mut delta: Vec<f64> = (0..n)
        .map(|j| {
            if model.initial[j] > 0.0 {
                float::ln(model.initial[j]) + model.log_emission(j, seq.row(0))
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let mut back = vec![vec![0usize; n]; t_len];
    let mut next = vec![0.0; n];
    for t in 1..t_len {
        let obs = seq.row(t);
        for j in 0..n {
            let stay = delta[j] + model.log_transition(j, j);
            let advance = if j > 0 { delta[j - 1] + model.log_transition(j - 1, j) } else { f64::NEG_INFINITY };
            let (score, from) = if j > 0 && advance >= stay { (advance, j - 1) } else { (stay, j) };
            back[t][j] = from;
            next[j] = if score == f64::NEG_INFINITY { score } else { score + model.log_emission(j, obs) };
        }
        core::mem::swap(&mut delta, &mut next);
    }
    let mut best = 0;
    for j in 1..n {
        if delta[j] > delta[best] {
            best = j;
        }
    }
    let score = delta[best];
    if !score.is_finite() {
        return Err(Error::Infeasible);
    }
    let mut path = vec![0; t_len];
    path[t_len - 1] = best;
    for t in (1..t_len).rev() {
        path[t - 1] = back[t][path[t]];
    }
    Ok((path, score))
}

// ln(e^a + e^b) without overflow; exact when one side is −∞.
fn log_add(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + float::ln(1.0 + float::exp(lo - hi))
}

fn log_sum(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + float::ln(values.iter().map(|v| float::exp(v - m)).sum::<f64>())
}

// Forward variables kept in log space, so probabilities far below the
// smallest double still compare and combine correctly.
struct Forward {
    log_alpha: Matrix,
    log_emission: Matrix,
    loglik: f64,
}

fn forward(model: &HmmModel, seq: &Matrix) -> Forward {
    let n = model.states();
    let t_len = seq.rows();
    let mut log_emission = Matrix::zeros(t_len, n);
    for t in 0..t_len {
        for j in 0..n {
            log_emission[(t, j)] = model.log_emission(j, seq.row(t));
        }
    }
    let mut log_alpha = Matrix::zeros(t_len, n);
    for j in 0..n {
        log_alpha[(0, j)] = if model.initial[j] > 0.0 {
            float::ln(model.initial[j]) + log_emission[(0, j)]
        } else {
            f64::NEG_INFINITY
        };
    }
    for t in 1..t_len {
        for j in 0..n {
            let stay = log_alpha[(t - 1, j)] + model.log_transition(j, j);
            let pred = if j > 0 {
                log_add(stay, log_alpha[(t - 1, j - 1)] + model.log_transition(j - 1, j))
            } else {
                stay
            };
            log_alpha[(t, j)] = if pred == f64::NEG_INFINITY { pred } else { pred + log_emission[(t, j)] };
        }
    }
    let loglik = log_sum(log_alpha.row(t_len - 1));
    Forward { log_alpha, log_emission, loglik }
}

/// Total log-likelihood of `seq` (sum over all state paths).
pub fn loglik(model: &HmmModel, seq: &Matrix) -> Result<f64> {
    model.check_seq(seq)?;
    let ll = forward(model, seq).loglik;
    if ll.is_finite() {
        Ok(ll)
    } else {
        Err(Error::Underflow { iteration: 0 })
    }
}
/// Uniform segmentation: observation `t` of a length-`T` sequence goes to
/// state `⌊t·N/T⌋`.
pub fn init_uniform(seqs: &[Matrix], states: usize, var_floor: f64) -> Result<HmmModel> {
    if states == 0 {
        return Err(Error::InvalidArgument("need at least one state".into()));
    }
    let dim = seqs.first().ok_or(Error::Empty("no training sequences"))?.cols();
    let mut paths = Vec::with_capacity(seqs.len());
    for s in seqs {
        if s.cols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: s.cols() });
        }
        let t_len = s.rows();
        if t_len < states {
            return Err(Error::InvalidArgument(alloc::format!(
                "sequence of length {t_len} is shorter than {states} states"
            )));
        }
        paths.push((0..t_len).map(|t| t * states / t_len).collect::<Vec<_>>());
    }

    let mut transitions = Matrix::zeros(states, states);
    for i in 0..states {
        if i + 1 == states {
            transitions[(i, i)] = 1.0;
            continue;
        }
        let total: usize = paths.iter().map(|p| p.iter().filter(|&&s| s == i).count()).sum();
        let mean_len = total as f64 / paths.len() as f64;
        let advance = 1.0 / mean_len;
        transitions[(i, i + 1)] = advance;
        transitions[(i, i)] = 1.0 - advance;
    }
    let (means, variances, _) = emission_estimates(seqs, &paths, states, dim, var_floor, None);
    HmmModel::new(transitions, means, variances)
}

// Per-state pooled mean and floored variance of hard-assigned observations.
// States with no observations keep `fallback` parameters (if given).
fn emission_estimates(
    seqs: &[Matrix],
    paths: &[Vec<usize>],
    states: usize,
    dim: usize,
    var_floor: f64,
    fallback: Option<&HmmModel>,
) -> (Matrix, Matrix, usize) {
    let mut counts = vec![0usize; states];
    let mut means = Matrix::zeros(states, dim);
    for (s, p) in seqs.iter().zip(paths) {
        for (t, &st) in p.iter().enumerate() {
            counts[st] += 1;
            axpy(1.0, s.row(t), means.row_mut(st));
        }
    }
    for i in 0..states {
        if counts[i] > 0 {
            let inv = 1.0 / counts[i] as f64;
            means.row_mut(i).iter_mut().for_each(|m| *m *= inv);
        }
    }
    let mut variances = Matrix::zeros(states, dim);
    for (s, p) in seqs.iter().zip(paths) {
        for (t, &st) in p.iter().enumerate() {
            for k in 0..dim {
                let d = s[(t, k)] - means[(st, k)];
                variances[(st, k)] += d * d;
            }
        }
    }
    let mut empty = 0;
    for i in 0..states {
        if counts[i] == 0 {
            empty += 1;
            if let Some(prev) = fallback {
                means.row_mut(i).copy_from_slice(prev.means.row(i));
                variances.row_mut(i).copy_from_slice(prev.variances.row(i));
            } else {
                variances.row_mut(i).iter_mut().for_each(|v| *v = var_floor);
            }
            continue;
        }
        let inv = 1.0 / counts[i] as f64;
        variances.row_mut(i).iter_mut().for_each(|v| *v = (*v * inv).max(var_floor));
    }
    (means, variances, empty)
}

/// Stopping rule and variance floor shared by both training stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    /// Stop once the relative change of the total log-likelihood falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub var_floor: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams { tol: 1e-4, max_iter: 20, var_floor: 1e-6 }
    }
}

/// What a training stage did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    /// Total log-likelihood of the model entering each iteration.
    pub loglik: Vec<f64>,
    /// Re-estimations performed.
    pub updates: usize,
    /// Times a state received no observations and kept its parameters.
    pub empty_states: usize,
}

fn converged(prev: f64, cur: f64, tol: f64) -> bool {
    float::abs(cur - prev) / float::abs(prev).max(f64::MIN_POSITIVE) < tol
}

fn check_training_set(model: &HmmModel, seqs: &[Matrix]) -> Result<()> {
    if seqs.is_empty() {
        return Err(Error::Empty("no training sequences"));
    }
    for s in seqs {
        model.check_seq(s)?;
    }
    Ok(())
}

/// Segmental k-means: re-segment by Viterbi and re-estimate from the hard
/// assignments until the total best-path log-likelihood settles.
pub fn viterbi_train(model: &HmmModel, seqs: &[Matrix], params: &TrainParams) -> Result<(HmmModel, TrainTrace)> {
    check_training_set(model, seqs)?;
    let mut current = model.clone();
    let mut trace = TrainTrace::default();
    let n = model.states();
    for _ in 0..params.max_iter {
        let mut paths = Vec::with_capacity(seqs.len());
        let mut total = 0.0;
        for s in seqs {
            let (p, ll) = viterbi(&current, s)?;
            total += ll;
            paths.push(p);
        }
        let done = trace.loglik.last().is_some_and(|&prev| converged(prev, total, params.tol));
        trace.loglik.push(total);
        if done {
            break;
        }

        let (means, variances, empty) =
            emission_estimates(seqs, &paths, n, current.obs_dim(), params.var_floor, Some(&current));
        trace.empty_states += empty;
        let mut transitions = current.transitions.clone();
        for i in 0..n.saturating_sub(1) {
            let (mut stays, mut advances) = (0usize, 0usize);
            for p in &paths {
                for w in p.windows(2) {
                    if w[0] == i {
                        if w[1] == i {
                            stays += 1;
                        } else {
                            advances += 1;
                        }
                    }
                }
            }
            if stays + advances > 0 {
                let a = stays as f64 / (stays + advances) as f64;
                transitions[(i, i)] = a;
                transitions[(i, i + 1)] = 1.0 - a;
            }
        }
        current = HmmModel { initial: current.initial.clone(), transitions, means, variances };
        trace.updates += 1;
    }
    Ok((current, trace))
}

/// Baum-Welch re-estimation from forward-backward posteriors.
/// Structural zeros of the transition matrix stay exactly zero.
pub fn baum_welch(model: &HmmModel, seqs: &[Matrix], params: &TrainParams) -> Result<(HmmModel, TrainTrace)> {
    check_training_set(model, seqs)?;
    let n = model.states();
    let dim = model.obs_dim();
    let mut current = model.clone();
    let mut trace = TrainTrace::default();
    for iteration in 0..params.max_iter {
        let mut total = 0.0;
        let mut gammas = Vec::with_capacity(seqs.len());
        let mut stay = vec![0.0; n];
        let mut leave_total = vec![0.0; n];
        for s in seqs {
            let f = forward(&current, s);
            let ll = f.loglik;
            if !ll.is_finite() {
                return Err(Error::Underflow { iteration });
            }
            total += ll;
            let t_len = s.rows();
            let mut log_beta = Matrix::zeros(t_len, n);
            for t in (0..t_len - 1).rev() {
                for i in 0..n {
                    let next = |j: usize| {
                        current.log_transition(i, j) + f.log_emission[(t + 1, j)] + log_beta[(t + 1, j)]
                    };
                    log_beta[(t, i)] = if i + 1 < n { log_add(next(i), next(i + 1)) } else { next(i) };
                }
            }
            let mut gamma = Matrix::zeros(t_len, n);
            for t in 0..t_len {
                let mut norm = 0.0;
                for i in 0..n {
                    let g = float::exp(f.log_alpha[(t, i)] + log_beta[(t, i)] - ll);
                    gamma[(t, i)] = g;
                    norm += g;
                }
                if !(norm > 0.0 && norm.is_finite()) {
                    return Err(Error::Underflow { iteration });
                }
                for i in 0..n {
                    gamma[(t, i)] /= norm;
                }
            }
            for t in 0..t_len - 1 {
                for i in 0..n {
                    let xi_stay = float::exp(
                        f.log_alpha[(t, i)]
                            + current.log_transition(i, i)
                            + f.log_emission[(t + 1, i)]
                            + log_beta[(t + 1, i)]
                            - ll,
                    );
                    stay[i] += xi_stay;
                    leave_total[i] += gamma[(t, i)];
                }
            }
            gammas.push(gamma);
        }
        if !total.is_finite() {
            return Err(Error::Underflow { iteration });
        }
        let done = trace.loglik.last().is_some_and(|&prev| converged(prev, total, params.tol));
        trace.loglik.push(total);
        if done {
            break;
        }

        let mut occupancy = vec![0.0; n];
        let mut means = Matrix::zeros(n, dim);
        for (s, g) in seqs.iter().zip(&gammas) {
            for t in 0..s.rows() {
                for i in 0..n {
                    let w = g[(t, i)];
                    occupancy[i] += w;
                    axpy(w, s.row(t), means.row_mut(i));
                }
            }
        }
        let mut variances = Matrix::zeros(n, dim);
        for i in 0..n {
            if occupancy[i] > 0.0 {
                let inv = 1.0 / occupancy[i];
                means.row_mut(i).iter_mut().for_each(|m| *m *= inv);
            }
        }
        for (s, g) in seqs.iter().zip(&gammas) {
            for t in 0..s.rows() {
                for i in 0..n {
                    let w = g[(t, i)];
                    for k in 0..dim {
                        let d = s[(t, k)] - means[(i, k)];
                        variances[(i, k)] += w * d * d;
                    }
                }
            }
        }
        let mut transitions = current.transitions.clone();
        for i in 0..n {
            if !(occupancy[i] > 1e-300) {
                trace.empty_states += 1;
                means.row_mut(i).copy_from_slice(current.means.row(i));
                variances.row_mut(i).copy_from_slice(current.variances.row(i));
                continue;
            }
            let inv = 1.0 / occupancy[i];
            variances.row_mut(i).iter_mut().for_each(|v| *v = (*v * inv).max(params.var_floor));
            if i + 1 < n && leave_total[i] > 1e-300 {
                let a = (stay[i] / leave_total[i]).clamp(0.0, 1.0);
                transitions[(i, i)] = a;
                transitions[(i, i + 1)] = 1.0 - a;
            }
        }
        current = HmmModel { initial: current.initial.clone(), transitions, means, variances };
        trace.updates += 1;
    }
    Ok((current, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationKind {
    /// Leading KLT coefficients of each block.
    Klt,
    /// The raw block pixels, dimension `L·W`.
    RawPixels,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmmConfig {
    pub block_height: usize,
    pub overlap: usize,
    pub states: usize,
    pub klt_dims: usize,
    pub observation: ObservationKind,
    pub train: TrainParams,
    /// Also train one model over all faces for [`SubjectBank::detect_face`].
    pub train_detector: bool,
}

impl Default for HmmConfig {
    fn default() -> Self {
        HmmConfig {
            block_height: 10,
            overlap: 9,
            states: 5,
            klt_dims: 10,
            observation: ObservationKind::Klt,
            train: TrainParams::default(),
            train_detector: false,
        }
    }
}

/// One HMM per subject over a shared block geometry and KLT basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectBank {
    pub params: BlockParams,
    pub observation: ObservationKind,
    /// Present for [`ObservationKind::Klt`].
    pub basis: Option<KltBasis>,
    pub models: BTreeMap<String, HmmModel>,
    pub detector: Option<HmmModel>,
}

fn train_one(seqs: &[Matrix], config: &HmmConfig) -> Result<HmmModel> {
    let init = init_uniform(seqs, config.states, config.train.var_floor)?;
    let (segmented, _) = viterbi_train(&init, seqs, &config.train)?;
    let (model, _) = baum_welch(&segmented, seqs, &config.train)?;
    Ok(model)
}

/// Fits the shared KLT basis on every training block, then trains one
/// model per label.
pub fn train_bank(train: &[(String, GrayImage)], config: &HmmConfig) -> Result<SubjectBank> {
    let first = train.first().ok_or(Error::Empty("no training images"))?;
    let (h, w) = first.1.dims();
    let params = BlockParams::new(config.block_height, config.overlap, h, w)?;
    if params.block_count() < config.states {
        return Err(Error::InvalidArgument(alloc::format!(
            "{h}-row images give {} blocks of height {} (overlap {}), fewer than {} states",
            params.block_count(),
            config.block_height,
            config.overlap,
            config.states
        )));
    }
    let blocks: Vec<Vec<Vec<f64>>> =
        train.iter().map(|(_, img)| extract_blocks(img, &params)).collect::<Result<_>>()?;

    let basis = match config.observation {
        ObservationKind::Klt => {
            let all: Vec<&[f64]> = blocks.iter().flatten().map(Vec::as_slice).collect();
            Some(fit_klt(&all, config.klt_dims)?)
        }
        ObservationKind::RawPixels => None,
    };
    let mut bank = SubjectBank { params, observation: config.observation, basis, models: BTreeMap::new(), detector: None };

    let mut per_label: BTreeMap<&str, Vec<Matrix>> = BTreeMap::new();
    for ((label, _), b) in train.iter().zip(&blocks) {
        per_label.entry(label.as_str()).or_default().push(bank.observe_blocks(b)?);
    }
    for (label, seqs) in &per_label {
        let model = train_one(seqs, config)?;
        bank.models.insert(String::from(*label), model);
    }
    if config.train_detector {
        let all: Vec<Matrix> = per_label.into_values().flatten().collect();
        bank.detector = Some(train_one(&all, config)?);
    }
    Ok(bank)
}

impl SubjectBank {
    fn observe_blocks(&self, blocks: &[Vec<f64>]) -> Result<Matrix> {
        match &self.basis {
            Some(b) => observe(blocks, b),
            None => Matrix::from_rows(blocks),
        }
    }

    pub fn observe_image(&self, image: &GrayImage) -> Result<Matrix> {
        self.observe_blocks(&extract_blocks(image, &self.params)?)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }

    /// Forward log-likelihood under every subject model, and the best label
    /// (ties go to the lexicographically smallest).
    pub fn recognize(&self, image: &GrayImage) -> Result<(String, BTreeMap<String, f64>)> {
        let seq = self.observe_image(image)?;
        let mut scores = BTreeMap::new();
        let mut best: Option<(&String, f64)> = None;
        for (label, model) in &self.models {
            let ll = loglik(model, &seq)?;
            if best.is_none_or(|(_, b)| ll > b) {
                best = Some((label, ll));
            }
            scores.insert(label.clone(), ll);
        }
        let (label, _) = best.ok_or(Error::Empty("bank has no models"))?;
        Ok((label.clone(), scores))
    }

    /// Per-observation log-likelihood under the detection model.
    pub fn detection_score(&self, image: &GrayImage) -> Result<f64> {
        let detector = self.detector.as_ref().ok_or(Error::Empty("bank has no detection model"))?;
        let seq = self.observe_image(image)?;
        Ok(loglik(detector, &seq)? / seq.rows() as f64)
    }

    /// True iff the per-observation detection log-likelihood reaches `threshold`.
    pub fn detect_face(&self, image: &GrayImage, threshold: f64) -> Result<bool> {
        Ok(self.detection_score(image)? >= threshold)
    }
}
