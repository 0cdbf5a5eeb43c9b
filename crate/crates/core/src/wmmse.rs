//! Sum-rate beamforming for a fixed scattering matrix via the weighted-MMSE
//! equivalence, with a dual bisection enforcing the transmit power budget.

use crate::comms::{BeamformingMatrix, EffectiveLinks};
use crate::error::{Error, Result};
use crate::linalg::{vdot, C64, CMat, CVec};
use crate::scattering::ScatteringMatrix;
use crate::scenario::{ChannelSet, SystemConfig};

const MAX_ITERS: usize = 500;
const OMEGA_WIDTH_TOL: f64 = 1e-12;
const POWER_REL_TOL: f64 = 1e-10;

/// Receiver coefficients, weights, dual variable, and the rate trace of one
/// WMMSE run.
#[derive(Debug, Clone)]
pub struct WmmseState {
    pub u: Vec<C64>,
    pub z: Vec<f64>,
    pub omega: f64,
    pub rate_trace: Vec<f64>,
}

/// Result of [`wmmse_solve`].
#[derive(Debug, Clone)]
pub struct WmmseOutcome {
    pub w: BeamformingMatrix,
    pub state: WmmseState,
    pub rate: f64,
    /// Set when the rate dropped by more than 1e-6 between cycles; indicates
    /// a tolerance problem, not a fatal error.
    pub non_monotone: bool,
}

/// MMSE receiver coefficients u_k = h_k^H w_k / (total received power at k).
pub fn update_receivers(
    w: &BeamformingMatrix,
    phi: &ScatteringMatrix,
    ch: &ChannelSet,
    cfg: &SystemConfig,
) -> Vec<C64> {
    let links = EffectiveLinks::compute(phi, ch, cfg);
    receivers_from_links(w, &links, cfg)
}

fn receivers_from_links(w: &BeamformingMatrix, links: &EffectiveLinks, cfg: &SystemConfig) -> Vec<C64> {
    (0..cfg.n_ue)
        .map(|k| {
            let num = vdot(&links.h[k], &w.column(k));
            num / C64::new(links.total_power(w, cfg, k), 0.0)
        })
        .collect()
}

/// MSE weights z_k = 1 / (1 - Re{u_k^* h_k^H w_k}). The inner product is real
/// at the MMSE receiver; the real part discards numerical residue.
pub fn update_weights(
    u: &[C64],
    w: &BeamformingMatrix,
    phi: &ScatteringMatrix,
    ch: &ChannelSet,
    cfg: &SystemConfig,
) -> Result<Vec<f64>> {
    let links = EffectiveLinks::compute(phi, ch, cfg);
    weights_from_links(u, w, &links, cfg)
}

fn weights_from_links(
    u: &[C64],
    w: &BeamformingMatrix,
    links: &EffectiveLinks,
    cfg: &SystemConfig,
) -> Result<Vec<f64>> {
    (0..cfg.n_ue)
        .map(|k| {
            let inner = (u[k].conj() * vdot(&links.h[k], &w.column(k))).re;
            let denom = 1.0 - inner;
            if denom < 1e-12 {
                Err(Error::DegenerateWeight { ue: k, denom })
            } else {
                Ok(1.0 / denom)
            }
        })
        .collect()
}

/// Beamformer update w_k = u_k z_k (omega I + sum_i |u_i|^2 z_i h_i h_i^H)^-1 h_k
/// with omega >= 0 set by bisection so the power budget binds (or omega = 0
/// when it is slack).
pub fn update_beamformers(
    u: &[C64],
    z: &[f64],
    phi: &ScatteringMatrix,
    ch: &ChannelSet,
    cfg: &SystemConfig,
) -> Result<(BeamformingMatrix, f64)> {
    let links = EffectiveLinks::compute(phi, ch, cfg);
    beamformers_from_links(u, z, &links, cfg)
}

fn beamformers_from_links(
    u: &[C64],
    z: &[f64],
    links: &EffectiveLinks,
    cfg: &SystemConfig,
) -> Result<(BeamformingMatrix, f64)> {
    let k = cfg.n_ue;
    let n = cfg.n_tx;
    if u.iter().all(|c| c.norm() == 0.0) {
        return Ok((BeamformingMatrix::zeros(n, k), 0.0));
    }
    let mut base = CMat::zeros(n, n);
    for i in 0..k {
        let coeff = u[i].norm_sqr() * z[i];
        if coeff > 0.0 {
            let hi = &links.h[i];
            base += hi * hi.adjoint() * C64::new(coeff, 0.0);
        }
    }

    // Spectral solve: base = U diag(lam) U^H is Hermitian PSD and every
    // right-hand side u_k z_k h_k lies in its range, so the omega -> 0 power
    // limit is finite. Directions with numerically-null eigenvalues carry
    // only roundoff and are truncated, which makes the omega = 0 branch the
    // exact minimum-norm solution. With K < N_T a Cholesky at omega = 0
    // would factor a rank-deficient matrix and return garbage.
    let eig = nalgebra::SymmetricEigen::new(base);
    let lam = eig.eigenvalues;
    let basis = eig.eigenvectors;
    let lam_max = lam.iter().cloned().fold(0.0_f64, f64::max);
    if !(lam_max > 0.0) {
        return Err(Error::SingularSystem { omega: 0.0 });
    }
    let trunc = lam_max * n as f64 * 1e-14;
    // coeff[k][i] = (U^H rhs_k)_i on the kept spectrum.
    let coeff: Vec<Vec<C64>> = (0..k)
        .map(|i| {
            let rhs = &links.h[i] * (u[i] * C64::new(z[i], 0.0));
            let c = basis.adjoint() * rhs;
            (0..n).map(|j| if lam[j] > trunc { c[j] } else { C64::new(0.0, 0.0) }).collect()
        })
        .collect();

    let power_at = |omega: f64| -> f64 {
        coeff
            .iter()
            .map(|ck| {
                ck.iter()
                    .zip(lam.iter())
                    .filter(|(_, &l)| l > trunc)
                    .map(|(c, &l)| c.norm_sqr() / ((l + omega) * (l + omega)))
                    .sum::<f64>()
            })
            .sum()
    };
    let assemble = |omega: f64| -> CMat {
        let mut w = CMat::zeros(n, k);
        for i in 0..k {
            let scaled = CVec::from_fn(n, |j, _| {
                if lam[j] > trunc {
                    coeff[i][j] / C64::new(lam[j] + omega, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            w.set_column(i, &(&basis * scaled));
        }
        w
    };

    if power_at(0.0) <= cfg.p_max {
        return Ok((BeamformingMatrix::from_matrix(assemble(0.0)), 0.0));
    }

    // Bracket the unique root of power(omega) = p_max; power is strictly
    // decreasing in omega.
    let mut hi = lam_max;
    let mut grew = 0;
    while power_at(hi) >= cfg.p_max {
        hi *= 2.0;
        grew += 1;
        if grew > 400 {
            return Err(Error::SingularSystem { omega: hi });
        }
    }
    let mut lo = 0.0;
    let mut omega = hi;
    for _ in 0..200 {
        if hi - lo <= OMEGA_WIDTH_TOL * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let p = power_at(mid);
        if p <= cfg.p_max {
            omega = mid;
            hi = mid;
            if (cfg.p_max - p).abs() <= POWER_REL_TOL * cfg.p_max {
                break;
            }
        } else {
            lo = mid;
        }
    }
    Ok((BeamformingMatrix::from_matrix(assemble(omega)), omega))
}

/// Cycle receiver/weight/beamformer updates until the relative rate change
/// falls below `tol` (or 500 cycles). A near-zero `w_init` is replaced by the
/// matched-filter seed to avoid the all-zero fixed point; an over-budget init
/// is scaled onto the budget.
pub fn wmmse_solve(
    phi: &ScatteringMatrix,
    ch: &ChannelSet,
    cfg: &SystemConfig,
    w_init: Option<&BeamformingMatrix>,
    tol: f64,
) -> Result<WmmseOutcome> {
    let links = EffectiveLinks::compute(phi, ch, cfg);
    let mut w = match w_init {
        Some(w0) if w0.power() > 1e-30 * cfg.p_max => {
            if w0.is_power_feasible(cfg.p_max) {
                w0.clone()
            } else {
                let scale = (cfg.p_max / w0.power()).sqrt();
                BeamformingMatrix::from_matrix(w0.matrix() * C64::new(scale, 0.0))
            }
        }
        _ => BeamformingMatrix::matched_filter(phi, ch, cfg),
    };

    let mut rate = links.sum_rate(&w, cfg);
    let mut rate_trace = vec![rate];
    let mut non_monotone = false;
    let mut u = Vec::new();
    let mut z = Vec::new();
    let mut omega = 0.0;

    for _ in 0..MAX_ITERS {
        u = receivers_from_links(&w, &links, cfg);
        z = weights_from_links(&u, &w, &links, cfg)?;
        let (w_new, omega_new) = beamformers_from_links(&u, &z, &links, cfg)?;
        w = w_new;
        omega = omega_new;
        let new_rate = links.sum_rate(&w, cfg);
        if new_rate < rate - 1e-6 {
            non_monotone = true;
        }
        let rel = (new_rate - rate).abs() / rate.max(1e-12);
        rate_trace.push(new_rate);
        rate = new_rate;
        if rel < tol {
            break;
        }
    }

    Ok(WmmseOutcome {
        w,
        state: WmmseState { u, z, omega, rate_trace },
        rate,
        non_monotone,
    })
}
