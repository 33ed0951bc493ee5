//! Dense symmetric eigensolver, Cholesky factorization and the generalized
//! symmetric eigenproblem `B w = λ W w` solved by whitening.
//!
//! The symmetric solver is Householder tridiagonalization followed by the
//! implicit QL iteration (the classic `tred2`/`tql2` pair). Results are
//! sorted by descending eigenvalue and every eigenvector is sign-fixed so
//! that its largest-magnitude entry is non-negative.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::float;
use crate::linalg::{fix_sign, Matrix};

const SYMMETRY_TOL: f64 = 1e-10;
const MAX_QL_ITERATIONS: usize = 60;

/// Full symmetric eigendecomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen {
    /// Eigenvalues, descending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, in the order of `values`.
    pub vectors: Matrix,
}

impl SymEigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k)
    }
}

pub fn sym_eigen(s: &Matrix) -> Result<SymEigen> {
    let n = s.rows();
    if n == 0 || !s.is_square() {
        return Err(Error::DimensionMismatch { expected: s.rows(), found: s.cols() });
    }
    if !s.is_finite() {
        return Err(Error::NonFinite);
    }
    if !s.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::Asymmetric);
    }

    // Work on the lower triangle mirrored, so tiny asymmetries cannot leak in.
    let mut v = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            v[i][j] = s[(i, j)];
            v[j][i] = s[(i, j)];
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the solver's order among exactly equal eigenvalues.
    order.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).unwrap_or(core::cmp::Ordering::Equal));

    let mut vectors = Matrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (k, &src) in order.iter().enumerate() {
        values.push(d[src]);
        let mut col: Vec<f64> = (0..n).map(|i| v[i][src]).collect();
        fix_sign(&mut col);
        for (i, x) in col.into_iter().enumerate() {
            vectors[(i, k)] = x;
        }
    }
    Ok(SymEigen { values, vectors })
}

// Householder reduction to tridiagonal form. On return `v` holds the
// accumulated orthogonal transform, `d` the diagonal and `e` the
// subdiagonal (in e[1..]).
fn tred2(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    d.copy_from_slice(&v[n - 1][..n]);

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += float::abs(d[k]);
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
                v[j][i] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = float::sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }

            for j in 0..i {
                f = d[j];
                v[j][i] = f;
                g = e[j] + v[j][j] * f;
                for k in (j + 1)..i {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k][j] -= f * e[k] + g * d[k];
                }
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n.saturating_sub(1) {
        v[n - 1][i] = v[i][i];
        v[i][i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k][i + 1] * v[k][j];
                }
                for k in 0..=i {
                    v[k][j] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[k][i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = 0.0;
    }
    v[n - 1][n - 1] = 1.0;
    e[0] = 0.0;
}

// Implicit QL on the tridiagonal form, accumulating rotations into `v`.
fn tql2(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(float::abs(d[l]) + float::abs(e[l]));
        let mut m = l;
        while m < n {
            if float::abs(e[m]) <= eps * tst1 {
                break;
            }
            m += 1;
        }

        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_ITERATIONS {
                    return Err(Error::NonConvergence { index: l });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = float::hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = float::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in v.iter_mut() {
                        let h = row[i + 1];
                        row[i + 1] = s * row[i] + c * h;
                        row[i] = c * row[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if float::abs(e[l]) <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonConvergence { index: 0 });
    }
    Ok(())
}

/// Lower-triangular `L` with `S = L Lᵀ`.
///
/// A pivot at or below `n · ε · max diag(S)` is treated as non-positive and
/// reported as [`Error::SingularOrIndefinite`].
pub fn cholesky(s: &Matrix) -> Result<Matrix> {
    let n = s.rows();
    if !s.is_square() {
        return Err(Error::DimensionMismatch { expected: s.rows(), found: s.cols() });
    }
    if !s.is_finite() {
        return Err(Error::NonFinite);
    }
    if !s.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::Asymmetric);
    }
    let max_diag = (0..n).fold(0.0_f64, |m, i| m.max(s[(i, i)]));
    let pivot_floor = n as f64 * f64::EPSILON * max_diag;

    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut diag = s[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > pivot_floor) {
            return Err(Error::SingularOrIndefinite { pivot: j });
        }
        let ljj = float::sqrt(diag);
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut x = s[(i, j)];
            for k in 0..j {
                x -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = x / ljj;
        }
    }
    Ok(l)
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn forward_substitute(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = vec![0.0; n];
    for i in 0..n {
        let mut acc = b[i];
        for k in 0..i {
            acc -= l[(i, k)] * x[k];
        }
        x[i] = acc / l[(i, i)];
    }
    x
}

/// Solves `Lᵀ x = b` for lower-triangular `L`.
pub fn back_substitute_transposed(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = b[i];
        for k in (i + 1)..n {
            acc -= l[(k, i)] * x[k];
        }
        x[i] = acc / l[(i, i)];
    }
    x
}

/// Leading pairs of the generalized problem `B w = λ W w`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenEigen {
    pub values: Vec<f64>,
    /// `n × m`, one generalized eigenvector per column, normalized to `wᵀ W w = 1`
    /// and sign-fixed.
    pub vectors: Matrix,
}

/// The `m` largest generalized eigenpairs of the symmetric pencil `(B, W)`
/// with `W` positive definite.
///
/// With `W = L Lᵀ` the problem becomes the ordinary symmetric problem for
/// `L⁻¹ B L⁻ᵀ`; its eigenvectors `y` map back as `w = L⁻ᵀ y`.
pub fn gen_sym_eigen(b: &Matrix, w: &Matrix, m: usize) -> Result<GenEigen> {
    let n = b.rows();
    if !b.is_square() || w.rows() != n || w.cols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: w.rows() });
    }
    if m > n {
        return Err(Error::InvalidArgument(alloc::format!(
            "requested {m} generalized eigenpairs of a {n}x{n} pencil"
        )));
    }
    if !b.is_finite() {
        return Err(Error::NonFinite);
    }
    if !b.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::Asymmetric);
    }
    let l = cholesky(w)?;

    // X = L⁻¹ B, then C = L⁻¹ Xᵀ = L⁻¹ B L⁻ᵀ (B symmetric).
    let mut x = Matrix::zeros(n, n);
    for j in 0..n {
        let col = forward_substitute(&l, &b.column(j));
        for i in 0..n {
            x[(i, j)] = col[i];
        }
    }
    let mut c = Matrix::zeros(n, n);
    for j in 0..n {
        let col = forward_substitute(&l, x.row(j));
        for i in 0..n {
            c[(i, j)] = col[i];
        }
    }
    c.symmetrize();
    let eig = sym_eigen(&c)?;

    let mut vectors = Matrix::zeros(n, m);
    for k in 0..m {
        let mut wk = back_substitute_transposed(&l, &eig.vector(k));
        fix_sign(&mut wk);
        for i in 0..n {
            vectors[(i, k)] = wk[i];
        }
    }
    Ok(GenEigen { values: eig.values[..m].to_vec(), vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, norm};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Cyclic Jacobi rotations: slow but obviously correct, used as the oracle.
    fn jacobi_eigenvalues(s: &Matrix) -> Vec<f64> {
        let n = s.rows();
        let mut a = s.clone();
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        off += a[(i, j)] * a[(i, j)];
                    }
                }
            }
            if off < 1e-26 * f64::max(1.0, s.frobenius_norm().powi(2)) {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let sn = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - sn * akq;
                        a[(k, q)] = sn * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - sn * aqk;
                        a[(q, k)] = sn * apk + c * aqk;
                    }
                }
            }
        }
        let mut d: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        d.sort_by(|x, y| y.partial_cmp(x).unwrap());
        d
    }

    fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = rng.random_range(-5.0..5.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    fn assert_decomposition(s: &Matrix, eig: &SymEigen) {
        let n = s.rows();
        let scale = f64::max(1.0, s.frobenius_norm());
        for k in 0..n {
            let v = eig.vector(k);
            let sv = s.matvec(&v).unwrap();
            let res: f64 = sv.iter().zip(&v).map(|(a, b)| (a - eig.values[k] * b).powi(2)).sum();
            assert!(res.sqrt() <= 1e-8 * scale, "residual {} for pair {k}", res.sqrt());
            for j in 0..n {
                let expected = if j == k { 1.0 } else { 0.0 };
                assert!((dot(&v, &eig.vector(j)) - expected).abs() <= 1e-8);
            }
        }
        for w in eig.values.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let eig = sym_eigen(&Matrix::identity(3)).unwrap();
        assert_eq!(eig.values, vec![1.0, 1.0, 1.0]);
        assert_decomposition(&Matrix::identity(3), &eig);
    }

    #[test]
    fn diagonal_matrix() {
        let eig = sym_eigen(&Matrix::diag(&[3.0, 1.0])).unwrap();
        assert_eq!(eig.values, vec![3.0, 1.0]);
        assert_eq!(eig.vector(0), vec![1.0, 0.0]);
        assert_eq!(eig.vector(1), vec![0.0, 1.0]);
    }

    #[test]
    fn two_by_two_hand_solution() {
        // det([[2-λ,1],[1,2-λ]]) = (2-λ)² - 1 = 0  →  λ ∈ {3, 1}
        let s = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let eig = sym_eigen(&s).unwrap();
        let r = core::f64::consts::FRAC_1_SQRT_2;
        assert!((eig.values[0] - 3.0).abs() < 1e-12);
        assert!((eig.values[1] - 1.0).abs() < 1e-12);
        let v0 = eig.vector(0);
        let v1 = eig.vector(1);
        assert!((v0[0] - r).abs() < 1e-12 && (v0[1] - r).abs() < 1e-12);
        // (1,-1)/√2 ties in magnitude; the lowest index carries the positive sign.
        assert!((v1[0] - r).abs() < 1e-12 && (v1[1] + r).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let asym = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert_eq!(sym_eigen(&asym), Err(Error::Asymmetric));
        let nan = Matrix::from_rows(&[[f64::NAN]]).unwrap();
        assert_eq!(sym_eigen(&nan), Err(Error::NonFinite));
    }

    #[test]
    fn matches_jacobi_oracle_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=8 {
            for _ in 0..10 {
                let s = random_symmetric(&mut rng, n);
                let eig = sym_eigen(&s).unwrap();
                let oracle = jacobi_eigenvalues(&s);
                for (a, b) in eig.values.iter().zip(&oracle) {
                    assert!((a - b).abs() <= 1e-9 * f64::max(1.0, s.frobenius_norm()));
                }
                assert_decomposition(&s, &eig);
            }
        }
    }

    #[test]
    fn deterministic_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_symmetric(&mut rng, 7);
        assert_eq!(sym_eigen(&s).unwrap(), sym_eigen(&s).unwrap());
    }

    proptest! {
        #[test]
        fn trace_and_reconstruction(seed in any::<u64>(), n in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_symmetric(&mut rng, n);
            let eig = sym_eigen(&s).unwrap();
            let trace: f64 = eig.values.iter().sum();
            prop_assert!((trace - s.trace()).abs() <= 1e-8 * f64::max(1.0, s.trace().abs().max(s.frobenius_norm())));
            let lam = Matrix::diag(&eig.values);
            let rec = eig.vectors.matmul(&lam).unwrap().matmul(&eig.vectors.transpose()).unwrap();
            let err = rec.sub(&s).unwrap().frobenius_norm();
            prop_assert!(err <= 1e-7 * f64::max(1.0, s.frobenius_norm()));
        }

        #[test]
        fn generalized_pairs_are_the_top_of_the_whitened_spectrum(seed in any::<u64>(), n in 1usize..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = random_symmetric(&mut rng, n);
            let g = random_symmetric(&mut rng, n);
            // W = GᵀG + I is safely positive definite.
            let w = g.transpose().matmul(&g).unwrap().add(&Matrix::identity(n)).unwrap();
            let m = rng.random_range(0..=n);
            let gen = gen_sym_eigen(&b, &w, m).unwrap();
            let full = gen_sym_eigen(&b, &w, n).unwrap();
            for k in 0..m {
                prop_assert_eq!(gen.values[k], full.values[k]);
                let wk = gen.vectors.column(k);
                let bw = b.matvec(&wk).unwrap();
                let ww = w.matvec(&wk).unwrap();
                let res: Vec<f64> = bw.iter().zip(&ww).map(|(x, y)| x - gen.values[k] * y).collect();
                prop_assert!(norm(&res) <= 1e-6 * f64::max(1.0, b.frobenius_norm()));
                prop_assert!((dot(&wk, &ww) - 1.0).abs() < 1e-9);
            }
            for pair in full.values.windows(2) {
                prop_assert!(pair[0] >= pair[1]);
            }
        }
    }

    #[test]
    fn cholesky_examples() {
        assert_eq!(cholesky(&Matrix::identity(3)).unwrap(), Matrix::identity(3));
        // [[2,0],[1,1]]·[[2,1],[0,1]] = [[4,2],[2,2]]
        let s = Matrix::from_rows(&[[4.0, 2.0], [2.0, 2.0]]).unwrap();
        let l = cholesky(&s).unwrap();
        assert_eq!(l, Matrix::from_rows(&[[2.0, 0.0], [1.0, 1.0]]).unwrap());
        let singular = Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(cholesky(&singular), Err(Error::SingularOrIndefinite { pivot: 0 }));
    }

    #[test]
    fn cholesky_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_symmetric(&mut rng, 6);
        let s = g.matmul(&g).unwrap().add(&Matrix::identity(6)).unwrap();
        let l = cholesky(&s).unwrap();
        let err = l.matmul(&l.transpose()).unwrap().sub(&s).unwrap().frobenius_norm();
        assert!(err <= 1e-10 * f64::max(1.0, s.frobenius_norm()));
        for i in 0..6 {
            assert!(l[(i, i)] > 0.0);
            for j in (i + 1)..6 {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn generalized_identity_metric() {
        let gen = gen_sym_eigen(&Matrix::diag(&[2.0, 1.0]), &Matrix::identity(2), 2).unwrap();
        assert_eq!(gen.values, vec![2.0, 1.0]);
        assert_eq!(gen.vectors, Matrix::identity(2));
    }

    #[test]
    fn generalized_two_class_example() {
        // W⁻¹ = [[1, ½],[½, 1]], so W⁻¹B = [[24,0],[12,0]] with eigenpair (24, (2,1)).
        let b = Matrix::from_rows(&[[24.0, 0.0], [0.0, 0.0]]).unwrap();
        let w = Matrix::from_rows(&[[4.0 / 3.0, -2.0 / 3.0], [-2.0 / 3.0, 4.0 / 3.0]]).unwrap();
        let gen = gen_sym_eigen(&b, &w, 1).unwrap();
        assert!((gen.values[0] - 24.0).abs() < 1e-10);
        let v = gen.vectors.column(0);
        assert!((v[0] / v[1] - 2.0).abs() < 1e-10);
        assert!(v[0] > 0.0);
    }

    #[test]
    fn generalized_errors() {
        let singular = Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(
            gen_sym_eigen(&Matrix::identity(2), &singular, 1),
            Err(Error::SingularOrIndefinite { .. })
        ));
        assert!(matches!(
            gen_sym_eigen(&Matrix::identity(2), &Matrix::identity(2), 3),
            Err(Error::InvalidArgument(_))
        ));
    }
}
