use facelab_core::dispatch::{select, train_multi, DispatchPolicy, ImageProfile, MethodId};
use facelab_core::eigenfaces::train_eigen;
use facelab_core::eval::{evaluate, Recognizer};
use facelab_core::fisherfaces::{compute_scatter, train_fisher};
use facelab_core::hmm::{baum_welch, extract_blocks, init_uniform, loglik, viterbi_train, BlockParams, HmmModel, TrainParams};
use facelab_core::linalg::dot;
use facelab_core::{dataset, synth, FaceVector, GrayImage, HmmConfig, Matrix, SplitSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn clustered(seed: u64, classes: usize, per: usize, dim: usize) -> Vec<(String, FaceVector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for c in 0..classes {
        let centre: Vec<f64> = (0..dim).map(|_| rng.random_range(40.0..200.0)).collect();
        for _ in 0..per {
            let x = centre.iter().map(|m| m + rng.random_range(-15.0..15.0)).collect();
            out.push((format!("c{c}"), FaceVector::from_values(x).unwrap()));
        }
    }
    out
}

fn shifted(data: &[(String, FaceVector)], f: impl Fn(f64) -> f64) -> Vec<(String, FaceVector)> {
    data.iter().map(|(l, v)| (l.clone(), FaceVector::from_values(v.values().iter().map(|x| f(*x)).collect()).unwrap())).collect()
}

fn probes(seed: u64, n: usize, dim: usize) -> Vec<FaceVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    (0..n).map(|_| FaceVector::from_values((0..dim).map(|_| rng.random_range(0.0..255.0)).collect()).unwrap()).collect()
}

fn left_right(rng: &mut ChaCha8Rng, n: usize, d: usize) -> HmmModel {
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        if i + 1 == n {
            a[(i, i)] = 1.0;
        } else {
            let stay = rng.random_range(0.1..0.9);
            a[(i, i)] = stay;
            a[(i, i + 1)] = 1.0 - stay;
        }
    }
    let means = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(-4.0..4.0)).collect()).unwrap();
    let vars = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(0.2..2.0)).collect()).unwrap();
    HmmModel::new(a, means, vars).unwrap()
}

fn sequences(rng: &mut ChaCha8Rng, count: usize, len: usize, d: usize) -> Vec<Matrix> {
    (0..count)
        .map(|_| {
            let rows: Vec<Vec<f64>> =
                (0..len).map(|t| (0..d).map(|_| (t * 4 / len) as f64 * 3.0 + rng.random_range(-1.0..1.0)).collect()).collect();
            Matrix::from_rows(&rows).unwrap()
        })
        .collect()
}

fn structure_intact(m: &HmmModel) -> Result<(), TestCaseError> {
    let a = m.transitions();
    for i in 0..m.states() {
        for j in 0..m.states() {
            if j != i && j != i + 1 {
                prop_assert_eq!(a[(i, j)].to_bits(), 0);
            }
        }
        prop_assert!((a.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn eigen_scaling_keeps_labels(seed in any::<u64>(), s in 0.1f64..10.0) {
        let data = clustered(seed, 3, 4, 20);
        let a = train_eigen(&data, 5).unwrap();
        let b = train_eigen(&shifted(&data, |x| s * x), 5).unwrap();
        for (ea, eb) in a.eigenvalues().iter().zip(b.eigenvalues()) {
            prop_assert!((eb - s * s * ea).abs() <= 1e-8 * eb.abs().max(1.0));
        }
        for p in probes(seed, 6, 20) {
            let scaled = FaceVector::from_values(p.values().iter().map(|x| s * x).collect()).unwrap();
            let wa = a.project(&p).unwrap();
            let wb = b.project(&scaled).unwrap();
            for (x, y) in wa.iter().zip(&wb) {
                prop_assert!((y - s * x).abs() <= 1e-6 * (1.0 + y.abs()));
            }
            prop_assert_eq!(a.nearest(&wa).unwrap().0, b.nearest(&wb).unwrap().0);
        }
    }

    #[test]
    fn eigen_offset_keeps_weights_and_dffs(seed in any::<u64>(), c in -80.0f64..80.0) {
        let data = clustered(seed, 3, 3, 16);
        let a = train_eigen(&data, 4).unwrap();
        let b = train_eigen(&shifted(&data, |x| x + c), 4).unwrap();
        for p in probes(seed, 5, 16) {
            let q = FaceVector::from_values(p.values().iter().map(|x| x + c).collect()).unwrap();
            let (wa, wb) = (a.project(&p).unwrap(), b.project(&q).unwrap());
            for (x, y) in wa.iter().zip(&wb) {
                prop_assert!((x - y).abs() <= 1e-7 * (1.0 + x.abs()));
            }
            prop_assert!((a.dffs(&p).unwrap() - b.dffs(&q).unwrap()).abs() <= 1e-7 * (1.0 + a.dffs(&p).unwrap()));
            let (da, db) = (a.classify(&p).unwrap(), b.classify(&q).unwrap());
            prop_assert_eq!(da.label(), db.label());
        }
    }

    #[test]
    fn eigen_energy_balance(seed in any::<u64>(), k in 1usize..8) {
        let data = clustered(seed, 3, 3, 24);
        let m = train_eigen(&data, k).unwrap();
        let n = data.len() as f64;
        let mut energy = 0.0;
        let mut residual = 0.0;
        for (_, f) in &data {
            let phi: Vec<f64> = f.values().iter().zip(m.mean()).map(|(x, mu)| x - mu).collect();
            energy += dot(&phi, &phi) / n;
            residual += m.dffs(f).unwrap().powi(2) / n;
        }
        let kept: f64 = m.eigenvalues().iter().sum::<f64>() / n;
        prop_assert!((kept + residual - energy).abs() <= 1e-8 * energy);
    }

    #[test]
    fn fisher_rank_optimality_and_offset(seed in any::<u64>(), classes in 2usize..5, per in 3usize..6, c in -50.0f64..50.0) {
        let data = clustered(seed, classes, per, 12);
        let m = train_fisher(&data).unwrap();
        prop_assert!(!m.ridge_applied());
        let positive = m.eigenvalues().iter().filter(|&&l| l > 1e-10 * m.eigenvalues()[0]).count();
        prop_assert!(positive <= classes - 1);

        let reduced: Vec<(String, Vec<f64>)> = data
            .iter()
            .map(|(l, f)| {
                let centered: Vec<f64> = f.values().iter().zip(m.mean()).map(|(a, b)| a - b).collect();
                (l.clone(), m.pca_basis().matvec(&centered).unwrap())
            })
            .collect();
        let s = compute_scatter(&reduced).unwrap();
        let ratio = |u: &[f64]| dot(u, &s.between.matvec(u).unwrap()) / dot(u, &s.within.matvec(u).unwrap());
        let best = ratio(m.discriminants().row(0));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let u: Vec<f64> = (0..s.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            prop_assert!(best >= ratio(&u) * (1.0 - 1e-9));
        }

        let moved = train_fisher(&shifted(&data, |x| x + c)).unwrap();
        for p in probes(seed, 5, 12) {
            let q = FaceVector::from_values(p.values().iter().map(|x| x + c).collect()).unwrap();
            prop_assert_eq!(m.classify(&p).unwrap().0, moved.classify(&q).unwrap().0);
        }
    }

    #[test]
    fn blocks_cover_rows_and_overlap(h in 4usize..40, w in 1usize..6, l in 1usize..12, p in 0usize..11) {
        prop_assume!(p < l && l <= h);
        let params = BlockParams::new(l, p, h, w).unwrap();
        let img = GrayImage::new(h, w, (0..h * w).map(|i| (i / w) as f64).collect()).unwrap();
        let blocks = extract_blocks(&img, &params).unwrap();
        prop_assert_eq!(blocks.len(), params.block_count());
        let t = blocks.len();
        let covered = (t - 1) * (l - p) + l;
        let mut seen = vec![false; covered];
        for b in &blocks {
            for r in b.iter().step_by(w) {
                seen[*r as usize] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
        for pair in blocks.windows(2) {
            prop_assert_eq!(&pair[0][(l - p) * w..], &pair[1][..p * w]);
        }
    }

    #[test]
    fn training_keeps_left_right_structure(seed in any::<u64>(), n in 1usize..5, d in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seqs = sequences(&mut rng, 4, 12, d);
        let init = init_uniform(&seqs, n, 1e-6).unwrap();
        structure_intact(&init)?;
        let params = TrainParams { tol: 0.0, max_iter: 5, var_floor: 1e-6 };
        let (vt, _) = viterbi_train(&init, &seqs, &params).unwrap();
        structure_intact(&vt)?;
        let (bw, trace) = baum_welch(&vt, &seqs, &params).unwrap();
        structure_intact(&bw)?;
        for pair in trace.loglik.windows(2) {
            prop_assert!(pair[1] >= pair[0] - 1e-9);
        }
    }

    #[test]
    fn select_is_total_and_monotone_in_illumination(
        illum in 0.0f64..10.0, pose in 0.0f64..10.0, occl in 0.0f64..1.0, bump in 0.0f64..100.0,
        ti in 0.1f64..5.0, tp in 0.1f64..5.0, to in 0.05f64..0.9,
    ) {
        let policy = DispatchPolicy { tau_illum: ti, tau_pose: tp, tau_occl: to, ..DispatchPolicy::default() };
        let p = ImageProfile { illumination_deviation: illum, pose_deviation: pose, occlusion_degree: occl };
        let m = select(&p, &policy);
        prop_assert_eq!(m, select(&p, &policy));
        if m == MethodId::Fisher && illum > ti {
            let brighter = ImageProfile { illumination_deviation: illum + bump, ..p };
            prop_assert_eq!(select(&brighter, &policy), MethodId::Fisher);
        }
    }
}

#[test]
fn forward_is_finite_on_long_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = left_right(&mut rng, 5, 3);
    let rows: Vec<Vec<f64>> = (0..1000).map(|_| (0..3).map(|_| rng.random_range(-30.0..30.0)).collect()).collect();
    let ll = loglik(&model, &Matrix::from_rows(&rows).unwrap()).unwrap();
    assert!(ll.is_finite());
}

#[test]
fn dispatch_delegates_and_stays_in_range() {
    let data = synth::banded_faces(4, 8, 32, 24, 6).unwrap();
    let (train, test) = dataset::split_images(&data, &SplitSpec::per_class(4, 6)).unwrap();
    let (multi, frontal) = train_multi(&train, 8, &HmmConfig::default()).unwrap();
    assert!(multi.profile(&train[frontal].image).unwrap().pose_deviation <= 1e-8);
    let dark = GrayImage::new(32, 24, vec![0.0; 32 * 24]).unwrap();
    let bright = GrayImage::new(32, 24, vec![255.0; 32 * 24]).unwrap();
    let variants = test.iter().flat_map(|li| {
        [
            li.image.clone(),
            synth::apply_gradient(&li.image, 150.0).unwrap(),
            synth::occlude_bottom(&li.image, 0.5).unwrap(),
            synth::offset(&li.image, 80.0).unwrap(),
        ]
    });
    for img in variants.chain([dark, bright]) {
        let outcome = multi.recognize_multi(&img).unwrap();
        assert!((0.0..=1.0).contains(&outcome.profile.occlusion_degree));
        assert_eq!(outcome.method, select(&outcome.profile, &multi.policy));
        let direct = multi.recognizer(outcome.method).predict(&img).unwrap();
        assert_eq!(outcome.prediction, direct);
    }
}

#[test]
fn shifted_image_raises_illumination_only() {
    let data = synth::banded_faces(3, 6, 32, 24, 8).unwrap();
    let (multi, frontal) = train_multi(&data, 6, &HmmConfig::default()).unwrap();
    let img = &data[frontal].image;
    let base = multi.profile(img).unwrap();
    let lifted = multi.profile(&synth::offset(img, 60.0).unwrap()).unwrap();
    assert!(lifted.illumination_deviation > base.illumination_deviation);
}

#[test]
fn report_error_rate_matches_records() {
    let data = synth::banded_faces(4, 6, 32, 24, 9).unwrap();
    let (train, test) = dataset::split_images(&data, &SplitSpec::per_class(3, 9)).unwrap();
    let faces: Vec<_> = train.iter().map(|l| (l.label.clone(), l.image.flatten())).collect();
    let eigen = train_eigen(&faces, 2).unwrap();
    let report = evaluate(&eigen, &test, "k:3,seed:9").unwrap();
    let wrong = report.records.iter().filter(|r| !r.correct).count();
    assert_eq!(wrong, report.errors());
    assert!((report.error_rate - wrong as f64 / report.records.len() as f64).abs() < 1e-15);
    let confusion_total: usize = report.confusion.values().sum();
    assert_eq!(confusion_total, test.len());
    assert_eq!(eigen.name(), "eigen");
}
