//! Dense complex linear algebra built on real f64 matrix products.
//!
//! Complex GEMM is expressed as four real products so the optimized
//! `matrixmultiply` kernels behind ndarray's `dot` do the heavy lifting;
//! a seeded randomized range finder provides deterministic truncated SVDs
//! of the large Hankel blocks.

use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Operand side modifier for `cgemm`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    /// Use the matrix as-is.
    N,
    /// Use the conjugate transpose.
    H,
}

fn split(a: &Array2<Complex64>) -> (Array2<f64>, Array2<f64>) {
    (a.mapv(|c| c.re), a.mapv(|c| c.im))
}

fn merge(re: Array2<f64>, im: Array2<f64>) -> Array2<Complex64> {
    let mut out = Array2::from_elem(re.dim(), Complex64::new(0.0, 0.0));
    for ((i, j), v) in out.indexed_iter_mut() {
        *v = Complex64::new(re[[i, j]], im[[i, j]]);
    }
    out
}

/// Complex matrix product with optional conjugate transposes.
pub fn cgemm(op_a: Op, a: &Array2<Complex64>, op_b: Op, b: &Array2<Complex64>) -> Array2<Complex64> {
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    match (op_a, op_b) {
        (Op::N, Op::N) => {
            let re = ar.dot(&br) - ai.dot(&bi);
            let im = ar.dot(&bi) + ai.dot(&br);
            merge(re, im)
        }
        (Op::H, Op::N) => {
            let art = ar.t();
            let ait = ai.t();
            let re = art.dot(&br) + ait.dot(&bi);
            let im = art.dot(&bi) - ait.dot(&br);
            merge(re, im)
        }
        (Op::N, Op::H) => {
            let brt = br.t();
            let bit = bi.t();
            let re = ar.dot(&brt) + ai.dot(&bit);
            let im = ai.dot(&brt) - ar.dot(&bit);
            merge(re, im)
        }
        (Op::H, Op::H) => {
            let re = ar.t().dot(&br.t()) - ai.t().dot(&bi.t());
            let im = -(ar.t().dot(&bi.t()) + ai.t().dot(&br.t()));
            merge(re, im)
        }
    }
}

pub fn frobenius_norm(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Thin QR by modified Gram-Schmidt with one re-orthogonalization pass.
/// Returns Q with orthonormal columns (rank-deficient columns get fresh
/// deterministic directions of zero weight dropped to zero).
pub fn qr_thin(a: &Array2<Complex64>) -> Array2<Complex64> {
    let (m, n) = a.dim();
    let mut q = a.clone();
    for j in 0..n {
        for _pass in 0..2 {
            for k in 0..j {
                let mut dot = Complex64::new(0.0, 0.0);
                for i in 0..m {
                    dot += q[[i, k]].conj() * q[[i, j]];
                }
                for i in 0..m {
                    let corr = dot * q[[i, k]];
                    q[[i, j]] -= corr;
                }
            }
        }
        let norm: f64 = (0..m).map(|i| q[[i, j]].norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-14 {
            for i in 0..m {
                q[[i, j]] /= norm;
            }
        } else {
            for i in 0..m {
                q[[i, j]] = Complex64::new(0.0, 0.0);
            }
        }
    }
    q
}

fn to_na(a: &Array2<Complex64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(a.dim().0, a.dim().1, |i, j| a[[i, j]])
}

fn from_na(a: &DMatrix<Complex64>) -> Array2<Complex64> {
    Array2::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
}

/// Exact thin SVD (descending singular values) via nalgebra.
pub fn svd_exact(
    a: &Array2<Complex64>,
) -> (Array2<Complex64>, Vec<f64>, Array2<Complex64>) {
    let svd = to_na(a).svd(true, true);
    let u = svd.u.expect("svd requested u");
    let vt = svd.v_t.expect("svd requested v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap()
    });
    let k = order.len();
    let mut u_s = Array2::zeros((u.nrows(), k));
    let mut v_s = Array2::zeros((vt.ncols(), k));
    let mut s = Vec::with_capacity(k);
    for (col, &idx) in order.iter().enumerate() {
        s.push(svd.singular_values[idx]);
        for i in 0..u.nrows() {
            u_s[[i, col]] = u[(i, idx)];
        }
        for i in 0..vt.ncols() {
            v_s[[i, col]] = vt[(idx, i)].conj();
        }
    }
    (u_s, s, v_s)
}

/// Deterministic randomized truncated SVD: rank-k approximation of `a`
/// with the given oversampling and power iterations and a fixed seed.
pub fn svd_randomized(
    a: &Array2<Complex64>,
    k: usize,
    oversample: usize,
    power_iters: usize,
    seed: u64,
) -> (Array2<Complex64>, Vec<f64>, Array2<Complex64>) {
    let (m, n) = a.dim();
    let l = (k + oversample).min(n).min(m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = Array2::from_shape_fn((n, l), |_| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let mut q = qr_thin(&cgemm(Op::N, a, Op::N, &omega));
    for _ in 0..power_iters {
        let z = qr_thin(&cgemm(Op::H, a, Op::N, &q));
        q = qr_thin(&cgemm(Op::N, a, Op::N, &z));
    }
    let b = cgemm(Op::H, &q, Op::N, a); // l x n
    let (ub, s, v) = svd_exact(&b);
    let u = cgemm(Op::N, &q, Op::N, &ub);
    let k = k.min(s.len());
    (
        u.slice(ndarray::s![.., ..k]).to_owned(),
        s[..k].to_vec(),
        v.slice(ndarray::s![.., ..k]).to_owned(),
    )
}

/// Solve X * (I + mu * G) = B for X where G is a small Hermitian PSD
/// matrix (r x r) and B is tall (m x r): used by the factor updates.
pub fn solve_regularized_gram(
    b: &Array2<Complex64>,
    gram: &Array2<Complex64>,
    mu: f64,
) -> Array2<Complex64> {
    let r = gram.dim().0;
    let mut sys = DMatrix::from_fn(r, r, |i, j| gram[[i, j]] * mu);
    for i in 0..r {
        sys[(i, i)] += Complex64::new(1.0, 0.0);
    }
    let inv = sys
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .unwrap_or_else(|| {
            sys.lu()
                .try_inverse()
                .expect("regularized Gram system is invertible")
        });
    cgemm(Op::N, b, Op::N, &from_na(&inv))
}
