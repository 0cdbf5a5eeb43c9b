//! System constants and seeded channel realizations.
//!
//! All quantities here are linear (watts, radians, meters); dBm/degree
//! conversion happens at the config-file boundary in [`crate::config`].

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    complex_gaussian_matrix, complex_gaussian_scalar, complex_gaussian_vector, C64, CMat, CVec,
};

/// Log-barrier schedule: `tau` is the current barrier weight 1/tau factor,
/// grown by `nu` each sweep until it reaches `tau_cap`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BarrierSchedule {
    pub tau: f64,
    pub nu: f64,
    pub tau_cap: f64,
}

impl BarrierSchedule {
    /// One growth step, clamped to the cap.
    pub fn advanced(self) -> Self {
        let tau = if self.tau < self.tau_cap {
            (self.tau * self.nu).min(self.tau_cap)
        } else {
            self.tau
        };
        Self { tau, ..self }
    }
}

/// Geodesic step-size state with clamps and the halving budget.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StepSchedule {
    pub mu: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub max_halvings: u32,
}

/// Rician K-factor (linear) per link class.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RicianKappa {
    pub bs_ris: f64,
    pub ris_ue: f64,
    pub bs_ue: f64,
}

/// All scalar system constants. Construct via [`SystemConfig::default`] and
/// adjust, or parse a config file through [`crate::config`].
#[derive(Debug, Clone, Serialize)]
pub struct SystemConfig {
    /// BS transmit antennas (N_T).
    pub n_tx: usize,
    /// BS receive antennas (N_R).
    pub n_rx: usize,
    /// Number of single-antenna UEs (K).
    pub n_ue: usize,
    /// RIS reflecting elements (M).
    pub m_elements: usize,
    /// RIS groups (X); each block is (M/X)x(M/X).
    pub n_groups: usize,
    /// Sensing snapshots (L).
    pub l_slots: usize,
    /// BS transmit power budget, watts.
    pub p_max: f64,
    /// Target transmit power, watts.
    pub p_tar: f64,
    /// BS receiver noise power, watts.
    pub sigma2_bs: f64,
    /// Per-UE noise power, watts.
    pub sigma2_ue: f64,
    /// CRB threshold on the angle estimate, rad^2.
    pub delta_max: f64,
    pub dist_bs_ris: f64,
    pub dist_ris_ue: f64,
    pub dist_ris_tar: f64,
    pub dist_bs_ue: f64,
    pub alpha_bs_ris: f64,
    pub alpha_ris_ue: f64,
    pub alpha_ris_tar: f64,
    pub alpha_bs_ue: f64,
    pub rician_kappa: RicianKappa,
    /// Path loss at the 1 m reference distance, linear power ratio.
    pub pl_ref: f64,
    /// True target angle, radians in (-pi/2, pi/2).
    pub theta_true: f64,
    /// Use one BS-RIS matrix for both directions when N_T == N_R.
    pub tie_bs_ris_channels: bool,
    /// Let UEs subtract dominant target interference (off by default; the
    /// optimizer never exploits it).
    pub cancel_target_interference: bool,
    pub barrier: BarrierSchedule,
    pub step: StepSchedule,
    /// Outer (alternating-loop) relative rate tolerance.
    pub tol_outer: f64,
    /// Inner (scattering ascent) relative objective tolerance.
    pub tol_inner: f64,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let tol_inner = 1e-4;
        SystemConfig {
            n_tx: 8,
            n_rx: 8,
            n_ue: 4,
            m_elements: 16,
            n_groups: 4,
            l_slots: 64,
            p_max: dbm_to_watts(25.0),
            p_tar: dbm_to_watts(10.0),
            sigma2_bs: dbm_to_watts(-80.0),
            sigma2_ue: dbm_to_watts(-90.0),
            delta_max: 1e-3,
            dist_bs_ris: 40.0,
            dist_ris_ue: 15.0,
            dist_ris_tar: 18.0,
            dist_bs_ue: 50.0,
            alpha_bs_ris: 2.0,
            alpha_ris_ue: 2.0,
            alpha_ris_tar: 2.0,
            alpha_bs_ue: 3.0,
            rician_kappa: RicianKappa { bs_ris: 10.0, ris_ue: 10.0, bs_ue: 0.0 },
            pl_ref: db_to_linear(-30.0),
            theta_true: 30.0_f64.to_radians(),
            tie_bs_ris_channels: true,
            cancel_target_interference: false,
            barrier: BarrierSchedule { tau: 1.0, nu: 2.0, tau_cap: 1.0 / tol_inner },
            step: StepSchedule { mu: 0.01, mu_min: 1e-12, mu_max: 10.0, max_halvings: 60 },
            tol_outer: 1e-4,
            tol_inner,
            seed: 1,
        }
    }
}

impl SystemConfig {
    pub fn group_size(&self) -> usize {
        self.m_elements / self.n_groups
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        }
        for (name, v) in [
            ("n_tx", self.n_tx),
            ("n_rx", self.n_rx),
            ("n_ue", self.n_ue),
            ("m_elements", self.m_elements),
            ("n_groups", self.n_groups),
            ("l_slots", self.l_slots),
        ] {
            if v < 1 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 1, got {v}")));
            }
        }
        if self.m_elements % self.n_groups != 0 {
            return Err(Error::InvalidConfig(format!(
                "n_groups ({}) must divide m_elements ({})",
                self.n_groups, self.m_elements
            )));
        }
        positive("p_max", self.p_max)?;
        positive("p_tar", self.p_tar)?;
        positive("sigma2_bs", self.sigma2_bs)?;
        positive("sigma2_ue", self.sigma2_ue)?;
        positive("delta_max", self.delta_max)?;
        positive("dist_bs_ris", self.dist_bs_ris)?;
        positive("dist_ris_ue", self.dist_ris_ue)?;
        positive("dist_ris_tar", self.dist_ris_tar)?;
        positive("dist_bs_ue", self.dist_bs_ue)?;
        positive("alpha_bs_ris", self.alpha_bs_ris)?;
        positive("alpha_ris_ue", self.alpha_ris_ue)?;
        positive("alpha_ris_tar", self.alpha_ris_tar)?;
        positive("alpha_bs_ue", self.alpha_bs_ue)?;
        positive("pl_ref", self.pl_ref)?;
        // Tolerances may be +inf (single-pass loops), just not <= 0 or NaN.
        for (name, v) in [("tol_outer", self.tol_outer), ("tol_inner", self.tol_inner)] {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.rician_kappa.bs_ris < 0.0 || self.rician_kappa.ris_ue < 0.0 || self.rician_kappa.bs_ue < 0.0 {
            return Err(Error::InvalidConfig("rician kappa must be >= 0".into()));
        }
        if !(self.theta_true > -FRAC_PI_2 && self.theta_true < FRAC_PI_2) {
            return Err(Error::InvalidConfig(format!(
                "theta_true must lie in (-pi/2, pi/2), got {}",
                self.theta_true
            )));
        }
        positive("barrier.tau", self.barrier.tau)?;
        positive("barrier.tau_cap", self.barrier.tau_cap)?;
        if self.barrier.nu <= 1.0 {
            return Err(Error::InvalidConfig(format!("barrier.nu must be > 1, got {}", self.barrier.nu)));
        }
        positive("step.mu", self.step.mu)?;
        positive("step.mu_min", self.step.mu_min)?;
        positive("step.mu_max", self.step.mu_max)?;
        if self.step.mu_min > self.step.mu_max {
            return Err(Error::InvalidConfig("step.mu_min must not exceed step.mu_max".into()));
        }
        Ok(())
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Half-wavelength ULA steering vector and its elementwise angle derivative:
/// a_i = exp(j pi (i-1) sin t), da_i/dt = j pi (i-1) cos t * a_i.
pub fn steering_pair(theta: f64, m: usize) -> (CVec, CVec) {
    assert!(m >= 1, "steering vector needs at least one element");
    assert!(
        theta > -FRAC_PI_2 && theta < FRAC_PI_2,
        "theta must lie in (-pi/2, pi/2)"
    );
    let s = theta.sin();
    let c = theta.cos();
    let a = CVec::from_fn(m, |i, _| C64::from_polar(1.0, PI * i as f64 * s));
    let a_dot = CVec::from_fn(m, |i, _| {
        let coeff = C64::new(0.0, PI * i as f64 * c);
        coeff * a[i]
    });
    (a, a_dot)
}

/// All channel realizations for one coherence interval. Immutable after
/// construction; a pure function of (config, seed).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// BS transmit array -> RIS, N_T x M.
    pub g_tx: CMat,
    /// RIS -> BS receive array, N_R x M.
    pub g_rx: CMat,
    /// Direct BS -> UE k channels, each length N_T.
    pub d_bu: Vec<CVec>,
    /// RIS -> UE k channels, each length M.
    pub r_ue: Vec<CVec>,
    /// Direct target -> UE k gains.
    pub d_tu: Vec<C64>,
    /// Target path gain.
    pub beta: C64,
    /// True target angle of arrival at the RIS, radians.
    pub theta: f64,
}

impl ChannelSet {
    /// Target-side RIS channel beta * a(theta).
    pub fn r_tar(&self) -> CVec {
        let (a, _) = steering_pair(self.theta, self.g_rx.ncols());
        a * self.beta
    }

    /// Angle derivative of [`Self::r_tar`].
    pub fn r_tar_dot(&self) -> CVec {
        let (_, a_dot) = steering_pair(self.theta, self.g_rx.ncols());
        a_dot * self.beta
    }
}

fn path_loss(pl_ref: f64, dist: f64, alpha: f64) -> f64 {
    pl_ref * dist.powf(-alpha)
}

fn rician_mix(pl: f64, kappa: f64, los: CMat, nlos: CMat) -> CMat {
    let w_los = (kappa / (1.0 + kappa)).sqrt();
    let w_nlos = (1.0 / (1.0 + kappa)).sqrt();
    (los * C64::new(w_los, 0.0) + nlos * C64::new(w_nlos, 0.0)) * C64::new(pl.sqrt(), 0.0)
}

fn rician_mix_vec(pl: f64, kappa: f64, los: CVec, nlos: CVec) -> CVec {
    let w_los = (kappa / (1.0 + kappa)).sqrt();
    let w_nlos = (1.0 / (1.0 + kappa)).sqrt();
    (los * C64::new(w_los, 0.0) + nlos * C64::new(w_nlos, 0.0)) * C64::new(pl.sqrt(), 0.0)
}

/// Seeded Rician channel draw. The stream order is fixed: LoS angles, then
/// the beta phase, then NLoS matrices in field order, so a given
/// (config, seed) pair always yields the same `ChannelSet`.
pub fn generate_channels(cfg: &SystemConfig) -> Result<ChannelSet> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let (n_tx, n_rx, k, m) = (cfg.n_tx, cfg.n_rx, cfg.n_ue, cfg.m_elements);

    let draw_angle = |rng: &mut ChaCha20Rng| -> f64 {
        // Open interval keeps steering_pair's domain check happy.
        rng.random_range(-FRAC_PI_2 * 0.999..FRAC_PI_2 * 0.999)
    };
    let angle_bs = draw_angle(&mut rng);
    let angle_ris = draw_angle(&mut rng);
    let angles_ris_ue: Vec<f64> = (0..k).map(|_| draw_angle(&mut rng)).collect();
    let angles_bs_ue: Vec<f64> = (0..k).map(|_| draw_angle(&mut rng)).collect();
    let beta_phase = rng.random_range(0.0..2.0 * PI);

    let steer = |theta: f64, n: usize| steering_pair(theta, n).0;

    // BS-RIS link, both directions sharing LoS angles.
    let los_rx = steer(angle_bs, n_rx) * steer(angle_ris, m).adjoint();
    let los_tx = steer(angle_bs, n_tx) * steer(angle_ris, m).adjoint();
    let pl_bs_ris = path_loss(cfg.pl_ref, cfg.dist_bs_ris, cfg.alpha_bs_ris);
    let nlos_rx = complex_gaussian_matrix(n_rx, m, &mut rng);
    let nlos_tx = complex_gaussian_matrix(n_tx, m, &mut rng);
    let g_rx = rician_mix(pl_bs_ris, cfg.rician_kappa.bs_ris, los_rx, nlos_rx);
    let g_tx = if cfg.tie_bs_ris_channels && n_tx == n_rx {
        g_rx.clone()
    } else {
        rician_mix(pl_bs_ris, cfg.rician_kappa.bs_ris, los_tx, nlos_tx)
    };

    let pl_ris_ue = path_loss(cfg.pl_ref, cfg.dist_ris_ue, cfg.alpha_ris_ue);
    let r_ue: Vec<CVec> = (0..k)
        .map(|i| {
            let los = steer(angles_ris_ue[i], m);
            let nlos = complex_gaussian_vector(m, &mut rng);
            rician_mix_vec(pl_ris_ue, cfg.rician_kappa.ris_ue, los, nlos)
        })
        .collect();

    let pl_bs_ue = path_loss(cfg.pl_ref, cfg.dist_bs_ue, cfg.alpha_bs_ue);
    let d_bu: Vec<CVec> = (0..k)
        .map(|i| {
            let los = steer(angles_bs_ue[i], n_tx);
            let nlos = complex_gaussian_vector(n_tx, &mut rng);
            rician_mix_vec(pl_bs_ue, cfg.rician_kappa.bs_ue, los, nlos)
        })
        .collect();

    // Target-UE direct link: blocked-tendency ground path. No separate
    // distance is configured; use the through-RIS geometric sum with the
    // terrestrial exponent, pure NLoS.
    let pl_tar_ue = path_loss(cfg.pl_ref, cfg.dist_ris_tar + cfg.dist_ris_ue, cfg.alpha_bs_ue);
    let d_tu: Vec<C64> = (0..k)
        .map(|_| complex_gaussian_scalar(&mut rng) * C64::new(pl_tar_ue.sqrt(), 0.0))
        .collect();

    let pl_tar = path_loss(cfg.pl_ref, cfg.dist_ris_tar, cfg.alpha_ris_tar);
    let beta = C64::from_polar(pl_tar.sqrt(), beta_phase);

    Ok(ChannelSet {
        g_tx,
        g_rx,
        d_bu,
        r_ue,
        d_tu,
        beta,
        theta: cfg.theta_true,
    })
}

/// Deterministic per-trial seed stream. Trial 0 reuses the base seed so a
/// one-trial sweep row reproduces a plain solve byte for byte.
pub fn trial_seed(base: u64, trial: u64) -> u64 {
    if trial == 0 {
        return base;
    }
    splitmix64(base.wrapping_add(trial.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// splitmix64 finalizer; used only to decorrelate derived seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
