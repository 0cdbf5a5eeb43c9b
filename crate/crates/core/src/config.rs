//! Config-file schema and parsing.
//!
//! Files use dBm for powers, dB for the path-loss reference, and degrees for
//! the target angle; everything is converted to linear watts / radians here.
//! One key per field, named after the internal config with a unit suffix
//! where a conversion applies:
//!
//! ```toml
//! n_tx = 8
//! n_rx = 8
//! n_ue = 4
//! m_elements = 16
//! n_groups = 4
//! l_slots = 64
//! p_max_dbm = 25.0
//! p_tar_dbm = 10.0
//! sigma2_bs_dbm = -80.0
//! sigma2_ue_dbm = -90.0
//! delta_max = 0.001        # rad^2
//! dist_bs_ris = 40.0       # meters
//! dist_ris_ue = 15.0
//! dist_ris_tar = 18.0
//! dist_bs_ue = 50.0
//! alpha_bs_ris = 2.0       # path-loss exponents
//! alpha_ris_ue = 2.0
//! alpha_ris_tar = 2.0
//! alpha_bs_ue = 3.0
//! seed = 1
//!
//! # optional, with the defaults shown
//! kappa_bs_ris = 10.0      # Rician K-factors, linear
//! kappa_ris_ue = 10.0
//! kappa_bs_ue = 0.0
//! pl_ref_db = -30.0        # path loss at 1 m
//! theta_true_deg = 30.0
//! tie_bs_ris_channels = true
//! cancel_target_interference = false
//! tol_outer = 1e-4
//! tol_inner = 1e-4
//!
//! [barrier]                # optional
//! tau0 = 1.0
//! nu = 2.0
//! # tau_cap = 1e4          # defaults to 1 / tol_inner
//!
//! [step]                   # optional
//! mu0 = 0.01
//! mu_min = 1e-12
//! mu_max = 10.0
//! max_halvings = 60
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scenario::{
    db_to_linear, dbm_to_watts, BarrierSchedule, RicianKappa, StepSchedule, SystemConfig,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_ue: usize,
    pub m_elements: usize,
    pub n_groups: usize,
    pub l_slots: usize,
    pub p_max_dbm: f64,
    pub p_tar_dbm: f64,
    pub sigma2_bs_dbm: f64,
    pub sigma2_ue_dbm: f64,
    pub delta_max: f64,
    pub dist_bs_ris: f64,
    pub dist_ris_ue: f64,
    pub dist_ris_tar: f64,
    pub dist_bs_ue: f64,
    pub alpha_bs_ris: f64,
    pub alpha_ris_ue: f64,
    pub alpha_ris_tar: f64,
    pub alpha_bs_ue: f64,
    pub seed: u64,
    #[serde(default = "default_kappa_ris")]
    pub kappa_bs_ris: f64,
    #[serde(default = "default_kappa_ris")]
    pub kappa_ris_ue: f64,
    #[serde(default)]
    pub kappa_bs_ue: f64,
    #[serde(default = "default_pl_ref_db")]
    pub pl_ref_db: f64,
    #[serde(default = "default_theta_deg")]
    pub theta_true_deg: f64,
    #[serde(default = "default_true")]
    pub tie_bs_ris_channels: bool,
    #[serde(default)]
    pub cancel_target_interference: bool,
    #[serde(default = "default_tol")]
    pub tol_outer: f64,
    #[serde(default = "default_tol")]
    pub tol_inner: f64,
    #[serde(default)]
    pub barrier: BarrierFile,
    #[serde(default)]
    pub step: StepFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierFile {
    #[serde(default = "default_tau0")]
    pub tau0: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    /// Barrier weight ceiling; `None` means 1 / tol_inner.
    #[serde(default)]
    pub tau_cap: Option<f64>,
}

impl Default for BarrierFile {
    fn default() -> Self {
        Self { tau0: default_tau0(), nu: default_nu(), tau_cap: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepFile {
    #[serde(default = "default_mu0")]
    pub mu0: f64,
    #[serde(default = "default_mu_min")]
    pub mu_min: f64,
    #[serde(default = "default_mu_max")]
    pub mu_max: f64,
    #[serde(default = "default_max_halvings")]
    pub max_halvings: u32,
}

impl Default for StepFile {
    fn default() -> Self {
        Self {
            mu0: default_mu0(),
            mu_min: default_mu_min(),
            mu_max: default_mu_max(),
            max_halvings: default_max_halvings(),
        }
    }
}

fn default_kappa_ris() -> f64 {
    10.0
}
fn default_pl_ref_db() -> f64 {
    -30.0
}
fn default_theta_deg() -> f64 {
    30.0
}
fn default_true() -> bool {
    true
}
fn default_tol() -> f64 {
    1e-4
}
fn default_tau0() -> f64 {
    1.0
}
fn default_nu() -> f64 {
    2.0
}
fn default_mu0() -> f64 {
    0.01
}
fn default_mu_min() -> f64 {
    1e-12
}
fn default_mu_max() -> f64 {
    10.0
}
fn default_max_halvings() -> u32 {
    60
}

impl ConfigFile {
    /// Convert to internal linear units and validate.
    pub fn resolve(&self) -> Result<SystemConfig> {
        let tol_inner = self.tol_inner;
        let cfg = SystemConfig {
            n_tx: self.n_tx,
            n_rx: self.n_rx,
            n_ue: self.n_ue,
            m_elements: self.m_elements,
            n_groups: self.n_groups,
            l_slots: self.l_slots,
            p_max: dbm_to_watts(self.p_max_dbm),
            p_tar: dbm_to_watts(self.p_tar_dbm),
            sigma2_bs: dbm_to_watts(self.sigma2_bs_dbm),
            sigma2_ue: dbm_to_watts(self.sigma2_ue_dbm),
            delta_max: self.delta_max,
            dist_bs_ris: self.dist_bs_ris,
            dist_ris_ue: self.dist_ris_ue,
            dist_ris_tar: self.dist_ris_tar,
            dist_bs_ue: self.dist_bs_ue,
            alpha_bs_ris: self.alpha_bs_ris,
            alpha_ris_ue: self.alpha_ris_ue,
            alpha_ris_tar: self.alpha_ris_tar,
            alpha_bs_ue: self.alpha_bs_ue,
            rician_kappa: RicianKappa {
                bs_ris: self.kappa_bs_ris,
                ris_ue: self.kappa_ris_ue,
                bs_ue: self.kappa_bs_ue,
            },
            pl_ref: db_to_linear(self.pl_ref_db),
            theta_true: self.theta_true_deg.to_radians(),
            tie_bs_ris_channels: self.tie_bs_ris_channels,
            cancel_target_interference: self.cancel_target_interference,
            barrier: BarrierSchedule {
                tau: self.barrier.tau0,
                nu: self.barrier.nu,
                tau_cap: self.barrier.tau_cap.unwrap_or(1.0 / tol_inner),
            },
            step: StepSchedule {
                mu: self.step.mu0,
                mu_min: self.step.mu_min,
                mu_max: self.step.mu_max,
                max_halvings: self.step.max_halvings,
            },
            tol_outer: self.tol_outer,
            tol_inner,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parse a config document; deserializer diagnostics (missing fields with
/// line/column) surface in the error message.
pub fn parse_config_str(text: &str) -> Result<SystemConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
    file.resolve()
}

pub fn load_config(path: &Path) -> Result<SystemConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::ConfigParse(format!("{}: {e}", path.display())))?;
    parse_config_str(&text)
}

/// Short hash of the resolved config (linear units, seed included); stamped
/// into every CSV so outputs can be traced back to their exact inputs.
pub fn config_hash(cfg: &SystemConfig) -> String {
    let canonical = toml::to_string(cfg).expect("config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
n_tx = 8
n_rx = 8
n_ue = 4
m_elements = 16
n_groups = 4
l_slots = 64
p_max_dbm = 25.0
p_tar_dbm = 10.0
sigma2_bs_dbm = -80.0
sigma2_ue_dbm = -90.0
delta_max = 0.001
dist_bs_ris = 40.0
dist_ris_ue = 15.0
dist_ris_tar = 18.0
dist_bs_ue = 50.0
alpha_bs_ris = 2.0
alpha_ris_ue = 2.0
alpha_ris_tar = 2.0
alpha_bs_ue = 3.0
seed = 1
"#;

    #[test]
    fn minimal_config_resolves_to_defaults() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        let def = SystemConfig::default();
        assert_eq!(cfg.n_tx, def.n_tx);
        assert!((cfg.p_max - def.p_max).abs() < 1e-15);
        assert!((cfg.sigma2_bs - def.sigma2_bs).abs() < 1e-25);
        assert!((cfg.theta_true - def.theta_true).abs() < 1e-15);
        assert!((cfg.barrier.tau_cap - 1e4).abs() < 1e-9);
        assert_eq!(cfg.step.max_halvings, 60);
    }

    #[test]
    fn missing_field_names_the_field() {
        let broken = MINIMAL.replace("n_tx = 8\n", "");
        let err = parse_config_str(&broken).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("n_tx"), "diagnostic must name the field: {msg}");
    }

    #[test]
    fn unknown_field_rejected() {
        let extra = format!("{MINIMAL}\nnot_a_field = 3\n");
        let err = parse_config_str(&extra).unwrap_err();
        assert!(err.to_string().contains("not_a_field"));
    }

    #[test]
    fn invalid_grouping_rejected_at_resolve() {
        let bad = MINIMAL.replace("n_groups = 4", "n_groups = 3");
        let err = parse_config_str(&bad).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn hash_stable_and_seed_sensitive() {
        let a = parse_config_str(MINIMAL).unwrap();
        let b = parse_config_str(MINIMAL).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        let c = parse_config_str(&MINIMAL.replace("seed = 1", "seed = 2")).unwrap();
        assert_ne!(config_hash(&a), config_hash(&c));
        assert_eq!(config_hash(&a).len(), 16);
    }

    #[test]
    fn unit_conversions() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-12);
        assert!((dbm_to_watts(0.0) - 1e-3).abs() < 1e-15);
        assert!((db_to_linear(-30.0) - 1e-3).abs() < 1e-15);
        assert!((crate::scenario::watts_to_dbm(1.0) - 30.0).abs() < 1e-12);
    }
}
