//! Thin complex linear-algebra helpers over nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const C_ONE: C64 = C64::new(1.0, 0.0);

/// i.i.d. circularly-symmetric complex Gaussian entries, unit variance each
/// (re and im parts N(0, 1/2)).
pub fn complex_gaussian_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let scale = 0.5_f64.sqrt();
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * scale, im * scale)
    })
}

pub fn complex_gaussian_vector<R: Rng>(len: usize, rng: &mut R) -> CVec {
    let scale = 0.5_f64.sqrt();
    CVec::from_fn(len, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * scale, im * scale)
    })
}

pub fn complex_gaussian_scalar<R: Rng>(rng: &mut R) -> C64 {
    let scale = 0.5_f64.sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * scale, im * scale)
}

/// Frobenius distance of `m`ᴴ`m` from the identity.
pub fn unitarity_residual(m: &CMat) -> f64 {
    let n = m.ncols();
    let gram = m.adjoint() * m;
    (gram - CMat::identity(n, n)).norm()
}

/// Haar-distributed unitary matrix: QR of a complex Gaussian draw with the
/// R-diagonal phase fixed to the nonnegative real axis.
pub fn haar_unitary<R: Rng>(n: usize, rng: &mut R) -> CMat {
    let g = complex_gaussian_matrix(n, n, rng);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C_ONE };
        // Q <- Q diag(phase) keeps QR = G while making diag(R) real >= 0.
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Nearest unitary matrix (polar factor U·Vᴴ from the SVD). Errors with the
/// smallest singular value when the input is rank-deficient beyond repair.
pub fn polar_unitary_factor(m: &CMat) -> Result<CMat, f64> {
    let svd = m.clone().svd(true, true);
    let min_sv = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_sv > 0.5) {
        return Err(min_sv);
    }
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    Ok(u * v_t)
}

/// exp(mu * psi) for skew-Hermitian `psi`, via the spectral decomposition of
/// the Hermitian matrix j·psi. Exactly unitary up to eigensolver roundoff.
pub fn expm_skew_hermitian(psi: &CMat, mu: f64) -> CMat {
    let n = psi.nrows();
    // h = j * psi is Hermitian; psi = -j h, so exp(mu psi) = U e^{-j mu L} U^H.
    let h = psi.map(|z| C64::new(0.0, 1.0) * z);
    let eig = nalgebra::SymmetricEigen::new(h);
    let u = eig.eigenvectors;
    let mut exp_diag = CMat::zeros(n, n);
    for (i, lam) in eig.eigenvalues.iter().enumerate() {
        exp_diag[(i, i)] = C64::from_polar(1.0, -mu * lam);
    }
    &u * exp_diag * u.adjoint()
}

/// Real part of the Frobenius inner product tr(AᴴB).
pub fn re_inner(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Hermitian inner product aᴴb of two vectors.
pub fn vdot(a: &CVec, b: &CVec) -> C64 {
    a.dotc(b)
}
