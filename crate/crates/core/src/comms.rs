//! Effective downlink channels, per-UE SINR, and sum rate.

use crate::linalg::{vdot, C64, CMat, CVec};
use crate::scattering::ScatteringMatrix;
use crate::scenario::{ChannelSet, SystemConfig};

/// N_T x K transmit beamforming matrix; column k serves UE k.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingMatrix {
    w: CMat,
}

impl BeamformingMatrix {
    pub fn from_matrix(w: CMat) -> Self {
        Self { w }
    }

    pub fn zeros(n_tx: usize, n_ue: usize) -> Self {
        Self { w: CMat::zeros(n_tx, n_ue) }
    }

    /// Matched filters h_k/||h_k|| with the power budget split equally.
    pub fn matched_filter(phi: &ScatteringMatrix, ch: &ChannelSet, cfg: &SystemConfig) -> Self {
        let k = cfg.n_ue;
        let per_ue = (cfg.p_max / k as f64).sqrt();
        let mut w = CMat::zeros(cfg.n_tx, k);
        for i in 0..k {
            let h = effective_channel(phi, ch, i);
            let norm = h.norm();
            if norm > 0.0 {
                w.set_column(i, &(h * C64::new(per_ue / norm, 0.0)));
            }
        }
        Self { w }
    }

    pub fn matrix(&self) -> &CMat {
        &self.w
    }

    pub fn column(&self, k: usize) -> CVec {
        self.w.column(k).into_owned()
    }

    pub fn n_ue(&self) -> usize {
        self.w.ncols()
    }

    /// Total transmit power sum_k ||w_k||^2.
    pub fn power(&self) -> f64 {
        self.w.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_power_feasible(&self, p_max: f64) -> bool {
        self.power() <= p_max * (1.0 + 1e-9)
    }
}

/// Effective BS -> UE k channel d_k + G_tx Phi r_k.
pub fn effective_channel(phi: &ScatteringMatrix, ch: &ChannelSet, k: usize) -> CVec {
    &ch.d_bu[k] + &ch.g_tx * phi.mul_vec(&ch.r_ue[k])
}

/// Target signal leaking into UE k: d_tu_k + r_k^H Phi (beta a).
pub fn target_leakage(phi: &ScatteringMatrix, ch: &ChannelSet, k: usize) -> C64 {
    ch.d_tu[k] + vdot(&ch.r_ue[k], &phi.mul_vec(&ch.r_tar()))
}

/// Effective channels and leakage for every UE at a fixed scattering matrix;
/// computed once and shared by the SINR, WMMSE, and gradient paths.
#[derive(Debug, Clone)]
pub struct EffectiveLinks {
    pub h: Vec<CVec>,
    pub leak: Vec<C64>,
}

impl EffectiveLinks {
    pub fn compute(phi: &ScatteringMatrix, ch: &ChannelSet, cfg: &SystemConfig) -> Self {
        let h = (0..cfg.n_ue).map(|k| effective_channel(phi, ch, k)).collect();
        let leak = (0..cfg.n_ue).map(|k| target_leakage(phi, ch, k)).collect();
        Self { h, leak }
    }

    /// Received power terms for UE k: (own |h_k^H w_k|^2, cross-UE sum,
    /// leakage power before the cancel flag).
    fn power_terms(&self, w: &BeamformingMatrix, cfg: &SystemConfig, k: usize) -> (f64, f64, f64) {
        let hk = &self.h[k];
        let mut own = 0.0;
        let mut cross = 0.0;
        for i in 0..cfg.n_ue {
            let p = vdot(hk, &w.column(i)).norm_sqr();
            if i == k {
                own = p;
            } else {
                cross += p;
            }
        }
        let leak_pow = self.leak[k].norm_sqr() * cfg.p_tar;
        (own, cross, leak_pow)
    }

    pub fn sinr(&self, w: &BeamformingMatrix, cfg: &SystemConfig, k: usize) -> f64 {
        let (own, cross, leak_pow) = self.power_terms(w, cfg, k);
        // A UE subtracts the known target signal only when it dominates all
        // received communication power plus noise, and only if the flag is on.
        let cancel = cfg.cancel_target_interference && leak_pow > own + cross + cfg.sigma2_ue;
        let leak_term = if cancel { 0.0 } else { leak_pow };
        own / (cross + leak_term + cfg.sigma2_ue)
    }

    /// Total received power at UE k with no cancellation; the WMMSE receiver
    /// denominator.
    pub fn total_power(&self, w: &BeamformingMatrix, cfg: &SystemConfig, k: usize) -> f64 {
        let (own, cross, leak_pow) = self.power_terms(w, cfg, k);
        own + cross + leak_pow + cfg.sigma2_ue
    }

    pub fn sum_rate(&self, w: &BeamformingMatrix, cfg: &SystemConfig) -> f64 {
        (0..cfg.n_ue).map(|k| (1.0 + self.sinr(w, cfg, k)).log2()).sum()
    }
}

/// Downlink SINR of UE k.
pub fn sinr(
    w: &BeamformingMatrix,
    phi: &ScatteringMatrix,
    ch: &ChannelSet,
    cfg: &SystemConfig,
    k: usize,
) -> f64 {
    EffectiveLinks::compute(phi, ch, cfg).sinr(w, cfg, k)
}

/// Downlink sum rate, bits/s/Hz.
pub fn sum_rate(
    w: &BeamformingMatrix,
    phi: &ScatteringMatrix,
    ch: &ChannelSet,
    cfg: &SystemConfig,
) -> f64 {
    EffectiveLinks::compute(phi, ch, cfg).sum_rate(w, cfg)
}
