//! Block-diagonal unitary scattering matrix: constructors, validation,
//! assembly, and polar-factor drift repair.

use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{haar_unitary, polar_unitary_factor, unitarity_residual, CMat, CVec};

/// X unitary blocks of size (M/X)x(M/X) forming the block-diagonal scattering
/// matrix. Value type: updates produce new instances.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringMatrix {
    blocks: Vec<CMat>,
    m_elements: usize,
    n_groups: usize,
}

impl ScatteringMatrix {
    /// Build from explicit blocks. Validates shape only; unitarity is the
    /// optimizer's invariant and is checked via [`Self::unitarity_residual`].
    pub fn from_blocks(blocks: Vec<CMat>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidConfig("scattering matrix needs at least one block".into()));
        }
        let size = blocks[0].nrows();
        for (i, b) in blocks.iter().enumerate() {
            if b.nrows() != size || b.ncols() != size {
                return Err(Error::InvalidConfig(format!(
                    "block {i} is {}x{}, expected {size}x{size}",
                    b.nrows(),
                    b.ncols()
                )));
            }
        }
        let n_groups = blocks.len();
        Ok(Self { blocks, m_elements: size * n_groups, n_groups })
    }

    pub fn identity(m_elements: usize, n_groups: usize) -> Result<Self> {
        check_grouping(m_elements, n_groups)?;
        let size = m_elements / n_groups;
        Ok(Self {
            blocks: (0..n_groups).map(|_| CMat::identity(size, size)).collect(),
            m_elements,
            n_groups,
        })
    }

    /// Haar-random unitary blocks from the provided stream.
    pub fn random<R: Rng>(m_elements: usize, n_groups: usize, rng: &mut R) -> Result<Self> {
        check_grouping(m_elements, n_groups)?;
        let size = m_elements / n_groups;
        Ok(Self {
            blocks: (0..n_groups).map(|_| random_unitary_block(size, rng)).collect(),
            m_elements,
            n_groups,
        })
    }

    pub fn m_elements(&self) -> usize {
        self.m_elements
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn block_size(&self) -> usize {
        self.m_elements / self.n_groups
    }

    pub fn block(&self, chi: usize) -> &CMat {
        &self.blocks[chi]
    }

    pub fn blocks(&self) -> &[CMat] {
        &self.blocks
    }

    /// New matrix with block `chi` replaced.
    pub fn with_block(&self, chi: usize, block: CMat) -> Self {
        let mut blocks = self.blocks.clone();
        blocks[chi] = block;
        Self { blocks, ..self.clone() }
    }

    /// Full M x M matrix; exactly zero outside the block diagonal.
    pub fn assemble_full(&self) -> CMat {
        let m = self.m_elements;
        let size = self.block_size();
        let mut full = CMat::zeros(m, m);
        for (chi, b) in self.blocks.iter().enumerate() {
            let off = chi * size;
            full.view_mut((off, off), (size, size)).copy_from(b);
        }
        full
    }

    /// Block-diagonal product Phi * v without assembling the full matrix.
    pub fn mul_vec(&self, v: &CVec) -> CVec {
        assert_eq!(v.len(), self.m_elements);
        let size = self.block_size();
        let mut out = CVec::zeros(self.m_elements);
        for (chi, b) in self.blocks.iter().enumerate() {
            let off = chi * size;
            let seg = v.rows(off, size);
            out.rows_mut(off, size).copy_from(&(b * seg));
        }
        out
    }

    /// Max Frobenius unitarity residual over blocks.
    pub fn unitarity_residual(&self) -> f64 {
        self.blocks.iter().map(unitarity_residual).fold(0.0, f64::max)
    }

    /// Replace each block by its nearest unitary matrix (polar factor).
    pub fn renormalize(&self) -> Result<Self> {
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| {
                polar_unitary_factor(b).map_err(|min_sv| Error::NonRepairable { block: i, min_sv })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { blocks, ..self.clone() })
    }

    /// Text snapshot: one `block <i>` header per block, then rows of
    /// space-separated `re,im` pairs in row-major order.
    pub fn write_text<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for (chi, b) in self.blocks.iter().enumerate() {
            writeln!(w, "block {}", chi + 1)?;
            for i in 0..b.nrows() {
                let row: Vec<String> = (0..b.ncols())
                    .map(|j| format!("{},{}", b[(i, j)].re, b[(i, j)].im))
                    .collect();
                writeln!(w, "{}", row.join(" "))?;
            }
        }
        Ok(())
    }
}

fn check_grouping(m_elements: usize, n_groups: usize) -> Result<()> {
    if m_elements == 0 || n_groups == 0 || m_elements % n_groups != 0 {
        return Err(Error::InvalidConfig(format!(
            "n_groups ({n_groups}) must divide m_elements ({m_elements})"
        )));
    }
    Ok(())
}

/// Haar-distributed unitary draw used to initialize blocks.
pub fn random_unitary_block<R: Rng>(size: usize, rng: &mut R) -> CMat {
    assert!(size >= 1);
    haar_unitary(size, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{complex_gaussian_matrix, C64};
    use nalgebra::SymmetricEigen;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn one_by_one_block_is_phase() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let b = random_unitary_block(1, &mut rng);
        assert!((b[(0, 0)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn block_draw_is_deterministic() {
        let a = random_unitary_block(4, &mut ChaCha20Rng::seed_from_u64(5));
        let b = random_unitary_block(4, &mut ChaCha20Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn block_gram_is_identity() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let b = random_unitary_block(8, &mut rng);
        assert!(unitarity_residual(&b) <= 1e-12);
    }

    /// Eigenangles of a unitary matrix via the Cayley transform
    /// H = j (I - U)(I + U)^-1, which is Hermitian with eigenvalues
    /// h = tan(angle/2) mapped back by angle = 2 atan(h).
    fn eigenangles(u: &CMat) -> Vec<f64> {
        let n = u.nrows();
        let i_mat = CMat::identity(n, n);
        let num = (&i_mat - u).map(|z| C64::new(0.0, 1.0) * z);
        let den = &i_mat + u;
        let h = num * den.try_inverse().expect("I + U invertible");
        // Symmetrize against roundoff before the Hermitian eigensolver.
        let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
        SymmetricEigen::new(h).eigenvalues.iter().map(|t| 2.0 * t.atan()).collect()
    }

    #[test]
    fn haar_eigenangles_uniform_on_circle() {
        // Pooled eigenangle histogram over 10^3 draws of 8x8 unitaries vs the
        // uniform law; chi-square with 15 dof at the 1% level is 30.578.
        let mut rng = ChaCha20Rng::seed_from_u64(2024);
        let bins = 16usize;
        let mut counts = vec![0usize; bins];
        let draws = 1000;
        let n = 8usize;
        for _ in 0..draws {
            let u = random_unitary_block(n, &mut rng);
            for ang in eigenangles(&u) {
                // atan maps into (-pi, pi); shift to [0, 2pi) bins.
                let x = (ang + std::f64::consts::PI) / (2.0 * std::f64::consts::PI);
                let b = ((x * bins as f64) as usize).min(bins - 1);
                counts[b] += 1;
            }
        }
        let total = (draws * n) as f64;
        let expected = total / bins as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 30.578, "chi2 = {chi2:.2}, counts = {counts:?}");
    }

    #[test]
    fn assemble_single_connected_identity() {
        let m = 6;
        let blocks = (0..m).map(|_| CMat::identity(1, 1)).collect();
        let s = ScatteringMatrix::from_blocks(blocks).unwrap();
        assert_eq!(s.assemble_full(), CMat::identity(m, m));
    }

    #[test]
    fn assemble_fully_connected_is_single_block() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let b = random_unitary_block(4, &mut rng);
        let s = ScatteringMatrix::from_blocks(vec![b.clone()]).unwrap();
        assert_eq!(s.assemble_full(), b);
    }

    #[test]
    fn assemble_two_blocks_zero_corners() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let a = random_unitary_block(2, &mut rng);
        let b = random_unitary_block(2, &mut rng);
        let s = ScatteringMatrix::from_blocks(vec![a.clone(), b.clone()]).unwrap();
        let full = s.assemble_full();
        for i in 0..2 {
            for j in 2..4 {
                assert_eq!(full[(i, j)], C64::new(0.0, 0.0));
                assert_eq!(full[(j, i)], C64::new(0.0, 0.0));
            }
        }
        assert!(unitarity_residual(&full) <= 1e-9);
        // Direct multiplication oracle for the placement.
        assert_eq!(full.view((0, 0), (2, 2)).clone_owned(), a);
        assert_eq!(full.view((2, 2), (2, 2)).clone_owned(), b);
    }

    #[test]
    fn mul_vec_matches_assembled_product() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let s = ScatteringMatrix::random(6, 3, &mut rng).unwrap();
        let v = crate::linalg::complex_gaussian_vector(6, &mut rng);
        let direct = s.assemble_full() * &v;
        assert!((s.mul_vec(&v) - direct).norm() < 1e-13);
    }

    #[test]
    fn renormalize_keeps_unitary_input() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let s = ScatteringMatrix::random(8, 2, &mut rng).unwrap();
        let r = s.renormalize().unwrap();
        for chi in 0..2 {
            assert!((r.block(chi) - s.block(chi)).norm() <= 1e-12);
        }
    }

    #[test]
    fn renormalize_strips_positive_scaling() {
        let block = CMat::identity(3, 3) * C64::new(1.001, 0.0);
        let s = ScatteringMatrix::from_blocks(vec![block]).unwrap();
        let r = s.renormalize().unwrap();
        assert!((r.block(0) - CMat::identity(3, 3)).norm() <= 1e-12);
    }

    #[test]
    fn renormalize_perturbation_bound() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for _ in 0..20 {
            let u = random_unitary_block(4, &mut rng);
            let mut e = complex_gaussian_matrix(4, 4, &mut rng);
            e *= C64::new(1e-4 / e.norm(), 0.0);
            let s = ScatteringMatrix::from_blocks(vec![&u + &e]).unwrap();
            let r = s.renormalize().unwrap();
            assert!((r.block(0) - &u).norm() <= 2e-4);
            assert!(r.unitarity_residual() <= 1e-12);
        }
    }

    #[test]
    fn renormalize_rejects_rank_deficient_block() {
        let s = ScatteringMatrix::from_blocks(vec![CMat::zeros(2, 2)]).unwrap();
        assert!(matches!(s.renormalize(), Err(Error::NonRepairable { .. })));
    }

    #[test]
    fn single_connected_diagonal_is_unimodular() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let s = ScatteringMatrix::random(8, 8, &mut rng).unwrap();
        let full = s.assemble_full();
        for i in 0..8 {
            assert!((full[(i, i)].norm() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn text_snapshot_has_block_headers() {
        let s = ScatteringMatrix::identity(4, 2).unwrap();
        let mut buf = Vec::new();
        s.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("block 1\n"));
        assert!(text.contains("block 2\n"));
        assert!(text.lines().any(|l| l == "1,0 0,0"));
    }
}
