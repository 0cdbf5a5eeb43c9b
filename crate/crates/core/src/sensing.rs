//! Cascaded target channel, Fisher information over (angle, complex gain),
//! and the angle CRB in closed and brute-force oracle forms.

use nalgebra::{Matrix2, Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::{vdot, CVec};
use crate::scattering::ScatteringMatrix;
use crate::scenario::{ChannelSet, SystemConfig};

/// Relative threshold below which the Schur gap counts as singular.
const XI_REL_FLOOR: f64 = 1e-15;

/// Fisher information over eta = [theta, Re beta, Im beta].
#[derive(Debug, Clone)]
pub struct FimEta {
    pub j_theta_theta: f64,
    pub j_theta_beta: [f64; 2],
    pub j_beta_beta: Matrix2<f64>,
}

impl FimEta {
    /// Assembled symmetric 3x3 matrix.
    pub fn assembled(&self) -> Matrix3<f64> {
        let b = &self.j_beta_beta;
        Matrix3::new(
            self.j_theta_theta,
            self.j_theta_beta[0],
            self.j_theta_beta[1],
            self.j_theta_beta[0],
            b[(0, 0)],
            b[(0, 1)],
            self.j_theta_beta[1],
            b[(1, 0)],
            b[(1, 1)],
        )
    }
}

/// Target -> RIS -> BS cascade and its angle derivative:
/// h = G_rx Phi (beta a), dh/dtheta = G_rx Phi (beta da/dtheta).
pub fn cascaded_pair(phi: &ScatteringMatrix, ch: &ChannelSet) -> (CVec, CVec) {
    let h = &ch.g_rx * phi.mul_vec(&ch.r_tar());
    let h_dot = &ch.g_rx * phi.mul_vec(&ch.r_tar_dot());
    (h, h_dot)
}

/// Scalar summaries of the cascade reused by the CRB and its gradient.
#[derive(Debug, Clone)]
pub(crate) struct CascadeStats {
    /// ||h_dot||^2
    pub energy_dot: f64,
    /// ||h||^2
    pub energy: f64,
    /// h_dot^H h
    pub cross: num_complex::Complex64,
    /// Schur gap xi = ||h_dot||^2 - |h_dot^H h|^2 / ||h||^2, >= 0.
    pub xi: f64,
}

impl CascadeStats {
    pub fn compute(phi: &ScatteringMatrix, ch: &ChannelSet) -> Self {
        let (h, h_dot) = cascaded_pair(phi, ch);
        Self::from_cascade(&h, &h_dot)
    }

    pub fn from_cascade(h: &CVec, h_dot: &CVec) -> Self {
        let energy_dot = h_dot.norm_squared();
        let energy = h.norm_squared();
        let cross = vdot(h_dot, h);
        let xi = if energy > 0.0 { energy_dot - cross.norm_sqr() / energy } else { 0.0 };
        CascadeStats { energy_dot, energy, cross, xi }
    }

    pub fn is_singular(&self) -> bool {
        self.energy == 0.0 || self.xi <= XI_REL_FLOOR * self.energy_dot
    }
}

/// 2 L P_tar / sigma2_bs, the common FIM scale.
fn fim_scale(cfg: &SystemConfig) -> f64 {
    2.0 * cfg.l_slots as f64 * cfg.p_tar / cfg.sigma2_bs
}

/// Fisher information matrix of [theta, Re beta, Im beta].
pub fn fim(phi: &ScatteringMatrix, ch: &ChannelSet, cfg: &SystemConfig) -> FimEta {
    let st = CascadeStats::compute(phi, ch);
    let c = fim_scale(cfg);
    let beta_sq = ch.beta.norm_sqr();
    if beta_sq == 0.0 {
        return FimEta {
            j_theta_theta: 0.0,
            j_theta_beta: [0.0, 0.0],
            j_beta_beta: Matrix2::zeros(),
        };
    }
    // Per-parameter mean derivatives: d/dtheta -> h_dot, d/dRe(beta) -> h/beta,
    // d/dIm(beta) -> j h/beta. Cross terms reduce to Re{(h_dot^H h / beta*) [1, j]}
    // under the convention fixed by the closed-form identity.
    let w = st.cross / ch.beta.conj();
    let j_tt = c * st.energy_dot;
    let j_tb = [c * w.re, c * (num_complex::Complex64::new(0.0, 1.0) * w).re];
    let j_bb = Matrix2::identity() * (c * st.energy / beta_sq);
    FimEta { j_theta_theta: j_tt, j_theta_beta: j_tb, j_beta_beta: j_bb }
}

/// Closed-form angle CRB: sigma2_bs / (2 L P_tar xi) with
/// xi = ||h_dot||^2 - |h_dot^H h|^2 / ||h||^2.
pub fn crb_closed_form(phi: &ScatteringMatrix, ch: &ChannelSet, cfg: &SystemConfig) -> Result<f64> {
    let st = CascadeStats::compute(phi, ch);
    crb_from_stats(&st, cfg)
}

pub(crate) fn crb_from_stats(st: &CascadeStats, cfg: &SystemConfig) -> Result<f64> {
    if st.is_singular() {
        return Err(Error::SingularFim(format!(
            "xi = {:.3e} with ||h_dot||^2 = {:.3e}, ||h||^2 = {:.3e}",
            st.xi, st.energy_dot, st.energy
        )));
    }
    Ok(1.0 / (fim_scale(cfg) * st.xi))
}

/// Brute-force oracle: (1,1) entry of the full 3x3 FIM inverse.
pub fn crb_from_fim(f: &FimEta) -> Result<f64> {
    let m = f.assembled();
    let eig = SymmetricEigen::new(m);
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0_f64, |a, b| a.max(b.abs()));
    let min_ev = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, |a, b| a.min(b.abs()));
    if !(min_ev > 0.0) || max_ev / min_ev >= 1e12 {
        return Err(Error::SingularFim(format!(
            "FIM condition number {:.3e}",
            if min_ev > 0.0 { max_ev / min_ev } else { f64::INFINITY }
        )));
    }
    let inv = m.try_inverse().ok_or_else(|| Error::SingularFim("3x3 inverse failed".into()))?;
    Ok(inv[(0, 0)])
}
