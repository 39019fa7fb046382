//! Small Hermitian linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use nalgebra::Complex;

use crate::error::{Error, Result};

pub type C = Complex<f64>;
pub type CMat = DMatrix<C>;
pub type CVec = DVector<C>;

pub const ZERO: C = C::new(0.0, 0.0);
pub const ONE: C = C::new(1.0, 0.0);
pub const I: C = C::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

/// `(M + M^H) / 2`.
pub fn symmetrize(m: &CMat) -> CMat {
    (m + m.adjoint()) * C::from(0.5)
}

/// Largest entry of `M - M^H`.
pub fn hermitian_residual(m: &CMat) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Ascending eigenvalues and matching eigenvectors of the Hermitian part of `m`.
pub fn herm_eig(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

pub fn herm_eigenvalues(m: &CMat) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn min_eig(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    herm_eigenvalues(m)[0]
}

pub fn max_eig(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    *herm_eigenvalues(m).last().unwrap()
}

/// Cholesky factor of a Hermitian positive definite matrix.
pub fn cholesky(m: &CMat, what: &'static str) -> Result<Cholesky<C, nalgebra::Dyn>> {
    Cholesky::new(symmetrize(m)).ok_or(Error::Singular(what))
}

/// Eigenvalues of the Hermitian pencil `A x = lambda B x` with `B` positive definite, ascending.
pub fn pencil_eigenvalues(a: &CMat, b: &CMat) -> Result<Vec<f64>> {
    let ch = cholesky(b, "pencil normalisation")?;
    let l = ch.l();
    let linv = l
        .clone()
        .solve_lower_triangular(&CMat::identity(l.nrows(), l.ncols()))
        .ok_or(Error::Singular("pencil normalisation"))?;
    let reduced = &linv * symmetrize(a) * linv.adjoint();
    Ok(herm_eigenvalues(&reduced))
}

/// Dense inverse via LU; errors on singularity.
pub fn inverse(m: &CMat, what: &'static str) -> Result<CMat> {
    m.clone().try_inverse().ok_or(Error::Singular(what))
}

/// Kronecker product `I_n (x) g`.
pub fn kron_identity(n: usize, g: &CMat) -> CMat {
    let r = g.nrows();
    let mut out = CMat::zeros(n * r, n * r);
    for j in 0..n {
        out.view_mut((j * r, j * r), (r, r)).copy_from(g);
    }
    out
}

/// Pairwise (tree) summation; result depends only on the input order.
pub fn pairwise_sum(xs: &[C]) -> C {
    match xs.len() {
        0 => ZERO,
        1 => xs[0],
        2..=8 => xs.iter().fold(ZERO, |a, b| a + b),
        n => {
            let (l, r) = xs.split_at(n / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}

pub fn pairwise_sum_f64(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2..=8 => xs.iter().sum(),
        n => {
            let (l, r) = xs.split_at(n / 2);
            pairwise_sum_f64(l) + pairwise_sum_f64(r)
        }
    }
}

/// Pairwise sum of equally shaped matrices.
pub fn pairwise_sum_mats(xs: &[CMat]) -> Option<CMat> {
    match xs.len() {
        0 => None,
        1 => Some(xs[0].clone()),
        n => {
            let (l, r) = xs.split_at(n / 2);
            Some(pairwise_sum_mats(l)? + pairwise_sum_mats(r)?)
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Newton on the Legendre recurrence).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let (x1, w1) = gauss_legendre(1);
        assert_eq!(x1, vec![0.0]);
        assert!((w1[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn pencil_matches_scalar_ratio() {
        let a = CMat::from_diagonal(&CVec::from_vec(vec![c(2.0, 0.0), c(6.0, 0.0)]));
        let b = CMat::from_diagonal(&CVec::from_vec(vec![c(1.0, 0.0), c(2.0, 0.0)]));
        let e = pencil_eigenvalues(&a, &b).unwrap();
        assert!((e[0] - 2.0).abs() < 1e-14 && (e[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn pairwise_sum_is_exact_on_small_integers() {
        let xs: Vec<C> = (0..1000).map(|i| c(i as f64, -(i as f64))).collect();
        assert_eq!(pairwise_sum(&xs), c(499500.0, -499500.0));
    }
}
