//! Gradient audit: analytic block gradients against central finite
//! differences on randomly drawn small instances. This is the normative
//! correctness check for the scattering-matrix gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::batch::run_batch;
use crate::comms::BeamformingMatrix;
use crate::error::Result;
use crate::linalg::{complex_gaussian_matrix, C64, CMat};
use crate::manifold::{barrier_objective, euclidean_gradient_block};
use crate::scattering::ScatteringMatrix;
use crate::scenario::{generate_channels, splitmix64, BarrierSchedule, SystemConfig};
use crate::sensing::crb_closed_form;

/// Central FD step on the scattering entries.
const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckInstance {
    pub seed: u64,
    pub m_elements: usize,
    pub n_groups: usize,
    pub n_ue: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub instances: Vec<GradCheckInstance>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.instances.iter().map(|i| i.max_rel_err).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> Vec<&GradCheckInstance> {
        self.instances.iter().filter(|i| !(i.max_rel_err < self.tolerance)).collect()
    }

    pub fn all_pass(&self) -> bool {
        self.failures().is_empty()
    }
}

/// Audit `n_instances` random small instances (M in {2,4}, X in {1,2,M},
/// K in {1,2}, N_T = N_R = 2) drawn from the base config's scalar scenario.
/// Each instance gets a strictly interior CRB threshold (twice the draw's
/// CRB) so both gradient terms are active.
pub fn grad_check(base: &SystemConfig, n_instances: usize, tolerance: f64) -> Result<GradCheckReport> {
    base.validate()?;
    let seeds: Vec<u64> = (0..n_instances as u64)
        .map(|i| splitmix64(splitmix64(base.seed ^ 0x6AD0_C4EC_0001).wrapping_add(i)))
        .collect();
    let base = base.clone();
    let instances = run_batch(seeds, move |seed| check_instance(&base, seed));
    Ok(GradCheckReport { tolerance, instances })
}

fn check_instance(base: &SystemConfig, seed: u64) -> GradCheckInstance {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let m = *[2usize, 4].get(rng.random_range(0..2usize)).unwrap();
    let x_options = [1usize, 2, m];
    let x = x_options[rng.random_range(0..x_options.len())];
    let k = 1 + rng.random_range(0..2usize);

    let mut cfg = SystemConfig {
        n_tx: 2,
        n_rx: 2,
        n_ue: k,
        m_elements: m,
        n_groups: x,
        seed,
        ..base.clone()
    };
    let ch = generate_channels(&cfg).expect("valid gradcheck instance");
    let phi = ScatteringMatrix::random(m, x, &mut rng).expect("grouping divides");
    let mut wmat = complex_gaussian_matrix(cfg.n_tx, k, &mut rng);
    let p: f64 = wmat.iter().map(|c| c.norm_sqr()).sum();
    wmat *= C64::new((cfg.p_max / p).sqrt(), 0.0);
    let w = BeamformingMatrix::from_matrix(wmat);

    let crb = crb_closed_form(&phi, &ch, &cfg).expect("nonsingular draw");
    cfg.delta_max = 2.0 * crb;
    let sched = BarrierSchedule { tau: 1.0, nu: 2.0, tau_cap: 1e4 };

    // Reconstruct each block gradient entrywise from central differences:
    // perturbing entry (a,b) along 1 and along j recovers 2 Re Sigma_ab and
    // 2 Im Sigma_ab. Comparing whole blocks in Frobenius norm keeps the
    // denominator well conditioned where single directions are not.
    let mut worst: f64 = 0.0;
    for chi in 0..x {
        let sigma = euclidean_gradient_block(&phi, &w, &ch, &cfg, &sched, chi)
            .expect("interior instance");
        let bs = phi.block_size();
        let mut sigma_fd = CMat::zeros(bs, bs);
        for a in 0..bs {
            for b in 0..bs {
                let value_at = |dir: C64, eps: f64| -> f64 {
                    let mut block = phi.block(chi).clone();
                    block[(a, b)] += dir * eps;
                    let probe = phi.with_block(chi, block);
                    barrier_objective(&probe, &w, &ch, &cfg, &sched).expect("interior probe")
                };
                let re = (value_at(C64::new(1.0, 0.0), FD_STEP)
                    - value_at(C64::new(1.0, 0.0), -FD_STEP))
                    / (4.0 * FD_STEP);
                let im = (value_at(C64::new(0.0, 1.0), FD_STEP)
                    - value_at(C64::new(0.0, 1.0), -FD_STEP))
                    / (4.0 * FD_STEP);
                sigma_fd[(a, b)] = C64::new(re, im);
            }
        }
        let denom = sigma_fd.norm().max(sigma.norm()).max(1e-300);
        worst = worst.max((&sigma - &sigma_fd).norm() / denom);
    }

    GradCheckInstance { seed, m_elements: m, n_groups: x, n_ue: k, max_rel_err: worst }
}
