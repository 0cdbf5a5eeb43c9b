//! Log-barrier objective over the scattering matrix and the adaptive
//! Riemannian steepest ascent on each unitary block.
//!
//! The Euclidean gradient is the conjugate Wirtinger derivative of the
//! objective with respect to the scattering matrix, restricted to one block.
//! Its normative contract: for any direction E supported on block chi, the
//! real directional derivative of f along (E, E*) equals 2 Re tr(Sigma^H E).
//! The finite-difference audit in [`crate::gradcheck`] enforces this.

use crate::comms::{BeamformingMatrix, EffectiveLinks};
use crate::error::{Error, Result};
use crate::linalg::{expm_skew_hermitian, vdot, C64, CMat, CVec};
use crate::scattering::ScatteringMatrix;
use crate::scenario::{BarrierSchedule, ChannelSet, StepSchedule, SystemConfig};
use crate::sensing::CascadeStats;

const MAX_SWEEPS: usize = 1000;
/// Accepted geodesic updates between polar-factor repairs.
const REPAIR_CADENCE: usize = 50;
/// ||Psi||_F^2 / 2 below this counts as a stationary block.
const DELTA_FLOOR: f64 = 1e-28;

/// Barrier objective f = R(w, Phi) + (1/tau) ln(delta_max - CRB(Phi)).
/// Natural log; a different base only rescales 1/tau.
pub fn barrier_objective(
    phi: &ScatteringMatrix,
    w: &BeamformingMatrix,
    ch: &ChannelSet,
    cfg: &SystemConfig,
    sched: &BarrierSchedule,
) -> Result<f64> {
    BarrierObjective { w, ch, cfg, tau: sched.tau }.value(phi)
}

/// Conjugate Wirtinger derivative of the barrier objective restricted to
/// block `chi`.
pub fn euclidean_gradient_block(
    phi: &ScatteringMatrix,
    w: &BeamformingMatrix,
    ch: &ChannelSet,
    cfg: &SystemConfig,
    sched: &BarrierSchedule,
    chi: usize,
) -> Result<CMat> {
    let ctx = GradientContext::build(phi, w, ch, cfg)?;
    if !(ctx.crb < cfg.delta_max) {
        return Err(Error::Infeasible { crb: ctx.crb, delta_max: cfg.delta_max });
    }
    let mut g = ctx.rate_grad_block(phi, chi);
    g += ctx.barrier_grad_block(phi, chi, sched.tau, cfg.delta_max);
    Ok(g)
}

/// Tangent-space ascent direction Psi = Sigma Phi^H - Phi Sigma^H; exactly
/// skew-Hermitian as computed.
pub fn riemannian_gradient(sigma: &CMat, phi_block: &CMat) -> CMat {
    let a = sigma * phi_block.adjoint();
    let psi = &a - a.adjoint();
    debug_assert!({
        let res = (&psi + psi.adjoint()).norm();
        res <= 1e-13 * psi.norm().max(1.0)
    });
    psi
}

/// Geodesic rotation Q = exp(mu Psi) for skew-Hermitian Psi.
pub fn geodesic_rotation(psi: &CMat, mu: f64) -> CMat {
    debug_assert!((psi + psi.adjoint()).norm() <= 1e-10 * psi.norm().max(f64::MIN_POSITIVE));
    expm_skew_hermitian(psi, mu)
}

/// One adaptive step of block `chi`.
#[derive(Debug, Clone)]
pub struct BlockStep {
    pub phi: ScatteringMatrix,
    pub mu: f64,
    /// f(phi') - f(phi); zero for a stationary block.
    pub gain: f64,
    /// Certificate (mu/2) * delta for the accepted step size.
    pub threshold: f64,
    pub stationary: bool,
}

/// Halve-then-double line search along the geodesic of block `chi`,
/// starting from step size `sched_mu` = `step.mu`.
pub fn adaptive_block_step(
    phi: &ScatteringMatrix,
    w: &BeamformingMatrix,
    ch: &ChannelSet,
    cfg: &SystemConfig,
    sched: &BarrierSchedule,
    step: &StepSchedule,
    chi: usize,
) -> Result<BlockStep> {
    let obj = BarrierObjective { w, ch, cfg, tau: sched.tau };
    block_step(&obj, phi, chi, step.mu, step)
}

/// Inner ascent trace returned by [`optimize_scattering`].
#[derive(Debug, Clone)]
pub struct InnerOutcome {
    pub phi: ScatteringMatrix,
    /// Barrier objective after each sweep, at that sweep's tau.
    pub f_trace: Vec<f64>,
    pub sweeps: usize,
    pub stall_events: usize,
    pub final_mu: f64,
    pub final_tau: f64,
    pub final_f: f64,
}

/// Algorithm: sweep blocks with the adaptive geodesic step, then grow tau,
/// until the relative change of f falls below `eps_inner` (or 1000 sweeps).
pub fn optimize_scattering(
    phi0: &ScatteringMatrix,
    w: &BeamformingMatrix,
    ch: &ChannelSet,
    cfg: &SystemConfig,
    sched: BarrierSchedule,
    step: StepSchedule,
    eps_inner: f64,
) -> Result<InnerOutcome> {
    let mut tau_state = sched;
    let mut phi = phi0.clone();
    let mut mu = step.mu;
    let mut stall_events = 0usize;
    let mut accepted = 0usize;
    let mut f_trace = Vec::new();

    let mut f_prev = BarrierObjective { w, ch, cfg, tau: tau_state.tau }.value(&phi)?;
    let mut sweeps = 0usize;
    for _ in 0..MAX_SWEEPS {
        let obj = BarrierObjective { w, ch, cfg, tau: tau_state.tau };
        for chi in 0..phi.n_groups() {
            let step_state = StepSchedule { mu, ..step };
            match block_step(&obj, &phi, chi, mu, &step_state) {
                Ok(bs) => {
                    if !bs.stationary {
                        accepted += 1;
                        if accepted % REPAIR_CADENCE == 0 {
                            phi = bs.phi.renormalize()?;
                        } else {
                            phi = bs.phi;
                        }
                        mu = bs.mu;
                    }
                }
                Err(Error::StepStalled { .. }) => stall_events += 1,
                Err(e) => return Err(e),
            }
        }
        sweeps += 1;
        let f_now = obj.value(&phi)?;
        f_trace.push(f_now);
        let rel = (f_now - f_prev).abs() / f_prev.abs().max(1e-12);
        tau_state = tau_state.advanced();
        if rel <= eps_inner {
            break;
        }
        f_prev = f_now;
    }

    phi = phi.renormalize()?;
    let final_f = BarrierObjective { w, ch, cfg, tau: tau_state.tau }.value(&phi)?;
    Ok(InnerOutcome {
        phi,
        f_trace,
        sweeps,
        stall_events,
        final_mu: mu,
        final_tau: tau_state.tau,
        final_f,
    })
}

/// A maximization objective over the scattering matrix with per-block
/// conjugate Wirtinger gradients. Err values mean the point is outside the
/// objective's domain; the line search treats them as f = -inf.
pub(crate) trait BlockObjective {
    fn value(&self, phi: &ScatteringMatrix) -> Result<f64>;
    fn grad_block(&self, phi: &ScatteringMatrix, chi: usize) -> Result<CMat>;
}

/// Rate plus log-barrier at a fixed tau.
pub(crate) struct BarrierObjective<'a> {
    pub w: &'a BeamformingMatrix,
    pub ch: &'a ChannelSet,
    pub cfg: &'a SystemConfig,
    pub tau: f64,
}

impl BlockObjective for BarrierObjective<'_> {
    fn value(&self, phi: &ScatteringMatrix) -> Result<f64> {
        let links = EffectiveLinks::compute(phi, self.ch, self.cfg);
        let rate = links.sum_rate(self.w, self.cfg);
        let stats = CascadeStats::compute(phi, self.ch);
        let crb = match crate::sensing::crb_from_stats(&stats, self.cfg) {
            Ok(v) => v,
            Err(_) => {
                return Err(Error::Infeasible { crb: f64::INFINITY, delta_max: self.cfg.delta_max })
            }
        };
        let slack = self.cfg.delta_max - crb;
        if slack <= 0.0 {
            return Err(Error::Infeasible { crb, delta_max: self.cfg.delta_max });
        }
        Ok(rate + slack.ln() / self.tau)
    }

    fn grad_block(&self, phi: &ScatteringMatrix, chi: usize) -> Result<CMat> {
        let ctx = GradientContext::build(phi, self.w, self.ch, self.cfg)?;
        if !(ctx.crb < self.cfg.delta_max) {
            return Err(Error::Infeasible { crb: ctx.crb, delta_max: self.cfg.delta_max });
        }
        let mut g = ctx.rate_grad_block(phi, chi);
        g += ctx.barrier_grad_block(phi, chi, self.tau, self.cfg.delta_max);
        Ok(g)
    }
}

/// Negated CRB; drives the feasibility search.
pub(crate) struct NegCrbObjective<'a> {
    pub ch: &'a ChannelSet,
    pub cfg: &'a SystemConfig,
}

impl BlockObjective for NegCrbObjective<'_> {
    fn value(&self, phi: &ScatteringMatrix) -> Result<f64> {
        let stats = CascadeStats::compute(phi, self.ch);
        crate::sensing::crb_from_stats(&stats, self.cfg).map(|crb| -crb)
    }

    fn grad_block(&self, phi: &ScatteringMatrix, chi: usize) -> Result<CMat> {
        let stats = CascadeStats::compute(phi, self.ch);
        if stats.is_singular() {
            return Err(Error::SingularFim("CRB gradient at singular point".into()));
        }
        let sens = SensingGradient::build(phi, self.ch);
        // -CRB = -k0/xi, so d(-CRB)/dxi = k0/xi^2 with k0 = 1/fim-scale.
        let k0 = self.cfg.sigma2_bs / (2.0 * self.cfg.l_slots as f64 * self.cfg.p_tar);
        let scale = k0 / (stats.xi * stats.xi);
        Ok(sens.xi_grad_block(phi, chi) * C64::new(scale, 0.0))
    }
}

/// Core halve/double geodesic line search shared by the barrier ascent and
/// the feasibility search.
pub(crate) fn block_step<O: BlockObjective>(
    obj: &O,
    phi: &ScatteringMatrix,
    chi: usize,
    mu0: f64,
    step: &StepSchedule,
) -> Result<BlockStep> {
    let f0 = obj.value(phi)?;
    let sigma = obj.grad_block(phi, chi)?;
    let psi = riemannian_gradient(&sigma, phi.block(chi));
    let delta = 0.5 * psi.norm_squared();
    if delta <= DELTA_FLOOR {
        return Ok(BlockStep { phi: phi.clone(), mu: mu0, gain: 0.0, threshold: 0.0, stationary: true });
    }

    let probe = |q: &CMat| -> f64 {
        let cand = phi.with_block(chi, q * phi.block(chi));
        obj.value(&cand).unwrap_or(f64::NEG_INFINITY)
    };

    let mut mu = mu0.clamp(step.mu_min, step.mu_max);
    let mut q = geodesic_rotation(&psi, mu);
    let mut f_acc = probe(&q);
    let mut halvings = 0u32;
    while f_acc - f0 < 0.5 * mu * delta {
        halvings += 1;
        if halvings > step.max_halvings {
            return Err(Error::StepStalled { block: chi, halvings });
        }
        mu *= 0.5;
        q = geodesic_rotation(&psi, mu);
        f_acc = probe(&q);
    }
    // Doubling probes the squared rotation, which equals the rotation at
    // 2 mu for the exponential map.
    while 2.0 * mu <= step.mu_max {
        let q2 = &q * &q;
        let f2 = probe(&q2);
        if f2 - f0 >= mu * delta {
            mu *= 2.0;
            q = q2;
            f_acc = f2;
        } else {
            break;
        }
    }

    let gain = f_acc - f0;
    let threshold = 0.5 * mu * delta;
    let phi_new = phi.with_block(chi, &q * phi.block(chi));
    Ok(BlockStep {
        phi: phi_new,
        mu: mu.clamp(step.mu_min, step.mu_max),
        gain,
        threshold,
        stationary: false,
    })
}

/// Shared sensing-side gradient pieces: the conjugate Wirtinger derivative
/// of the Schur gap xi = ||h_dot||^2 - |h_dot^H h|^2 / ||h||^2.
struct SensingGradient {
    r_tar: CVec,
    r_tar_dot: CVec,
    /// G^H h = G^H G Phi r_tar.
    gh: CVec,
    /// G^H h_dot.
    gh_dot: CVec,
    /// h_dot^H h.
    cross: C64,
    /// ||h||^2.
    energy: f64,
}

impl SensingGradient {
    fn build(phi: &ScatteringMatrix, ch: &ChannelSet) -> Self {
        let r_tar = ch.r_tar();
        let r_tar_dot = ch.r_tar_dot();
        let h = &ch.g_rx * phi.mul_vec(&r_tar);
        let h_dot = &ch.g_rx * phi.mul_vec(&r_tar_dot);
        SensingGradient {
            gh: ch.g_rx.adjoint() * &h,
            gh_dot: ch.g_rx.adjoint() * &h_dot,
            cross: vdot(&h_dot, &h),
            energy: h.norm_squared(),
            r_tar,
            r_tar_dot,
        }
    }

    /// Block restriction of d(xi)/dPhi*. With q = Phi r, qd = Phi r_dot:
    /// d(xi1) -> (G^H h_dot) r_dot^H,
    /// d(|t|^2) -> t^* (G^H h) r_dot^H + t (G^H h_dot) r^H,
    /// d(||h||^2) -> (G^H h) r^H,
    /// assembled by the quotient rule for xi2 = |t|^2 / ||h||^2.
    fn xi_grad_block(&self, phi: &ScatteringMatrix, chi: usize) -> CMat {
        let bs = phi.block_size();
        let off = chi * bs;
        let gh = self.gh.rows(off, bs);
        let ghd = self.gh_dot.rows(off, bs);
        let r = self.r_tar.rows(off, bs);
        let rd = self.r_tar_dot.rows(off, bs);

        let c_xi1 = &ghd * rd.adjoint();
        let c_cross_sq = &gh * rd.adjoint() * self.cross.conj() + &ghd * r.adjoint() * self.cross;
        let c_energy = &gh * r.adjoint();
        let inv_e = 1.0 / self.energy;
        let c_xi2 = c_cross_sq * C64::new(inv_e, 0.0)
            - c_energy * C64::new(self.cross.norm_sqr() * inv_e * inv_e, 0.0);
        c_xi1 - c_xi2
    }
}

/// Per-(phi, w) cache backing the full objective gradient.
struct GradientContext {
    /// Total received power Lambda_k at each UE.
    lambda: Vec<f64>,
    /// Lambda_k minus the own-signal power.
    lambda_minus: Vec<f64>,
    /// sum_i (g_tx^H w_i) (h_k^H w_i)^* per UE.
    v_all: Vec<CVec>,
    /// Same with i = k excluded.
    v_others: Vec<CVec>,
    /// P_tar * leak_k.
    leak_scaled: Vec<C64>,
    /// RIS -> UE channels (right factor of every rate-gradient outer product).
    r_ue: Vec<CVec>,
    sensing: SensingGradient,
    xi: f64,
    crb: f64,
    k0: f64,
}

impl GradientContext {
    fn build(
        phi: &ScatteringMatrix,
        w: &BeamformingMatrix,
        ch: &ChannelSet,
        cfg: &SystemConfig,
    ) -> Result<Self> {
        let links = EffectiveLinks::compute(phi, ch, cfg);
        let k = cfg.n_ue;
        let tw: Vec<CVec> = (0..k).map(|i| ch.g_tx.adjoint() * w.column(i)).collect();
        let mut lambda = Vec::with_capacity(k);
        let mut lambda_minus = Vec::with_capacity(k);
        let mut v_all = Vec::with_capacity(k);
        let mut v_others = Vec::with_capacity(k);
        let mut leak_scaled = Vec::with_capacity(k);
        for kk in 0..k {
            let mut total = links.leak[kk].norm_sqr() * cfg.p_tar + cfg.sigma2_ue;
            let mut own = 0.0;
            let mut va = CVec::zeros(ch.g_tx.ncols());
            let mut vo = CVec::zeros(ch.g_tx.ncols());
            for i in 0..k {
                let s_ki = vdot(&links.h[kk], &w.column(i));
                total += s_ki.norm_sqr();
                let contrib = &tw[i] * s_ki.conj();
                va += &contrib;
                if i == kk {
                    own = s_ki.norm_sqr();
                } else {
                    vo += &contrib;
                }
            }
            lambda.push(total);
            lambda_minus.push(total - own);
            v_all.push(va);
            v_others.push(vo);
            leak_scaled.push(links.leak[kk] * cfg.p_tar);
        }

        let stats = CascadeStats::compute(phi, ch);
        let k0 = cfg.sigma2_bs / (2.0 * cfg.l_slots as f64 * cfg.p_tar);
        let crb = if stats.is_singular() { f64::INFINITY } else { k0 / stats.xi };
        Ok(GradientContext {
            lambda,
            lambda_minus,
            v_all,
            v_others,
            leak_scaled,
            r_ue: ch.r_ue.clone(),
            sensing: SensingGradient::build(phi, ch),
            xi: stats.xi,
            crb,
            k0,
        })
    }

    /// Rate part: sum_k [ dLambda_k / Lambda_k - d(Lambda_k - S_k) / (Lambda_k - S_k) ] / ln 2,
    /// where dLambda_k = v_all_k r_k^H + P_tar leak_k r_k r_tar^H and the
    /// second numerator swaps v_all for v_others.
    fn rate_grad_block(&self, phi: &ScatteringMatrix, chi: usize) -> CMat {
        let bs = phi.block_size();
        let off = chi * bs;
        let ln2 = std::f64::consts::LN_2;
        let mut out = CMat::zeros(bs, bs);
        let r_tar = &self.sensing.r_tar;
        for k in 0..self.lambda.len() {
            let va = self.v_all[k].rows(off, bs);
            let vo = self.v_others[k].rows(off, bs);
            let rk = self.r_ue[k].rows(off, bs);
            let inv_l = 1.0 / self.lambda[k];
            let inv_lm = 1.0 / self.lambda_minus[k];
            let beam_mix = va * C64::new(inv_l / ln2, 0.0) - vo * C64::new(inv_lm / ln2, 0.0);
            out += &beam_mix * rk.adjoint();
            let leak_coeff = self.leak_scaled[k] * C64::new((inv_l - inv_lm) / ln2, 0.0);
            out += rk * r_tar.rows(off, bs).adjoint() * leak_coeff;
        }
        out
    }

    /// Barrier part: k_rho * d(xi)/dPhi* with
    /// k_rho = k0 / (tau xi^2 (delta_max - crb)) > 0 in the interior.
    fn barrier_grad_block(
        &self,
        phi: &ScatteringMatrix,
        chi: usize,
        tau: f64,
        delta_max: f64,
    ) -> CMat {
        let k_rho = self.k0 / (tau * self.xi * self.xi * (delta_max - self.crb));
        self.sensing.xi_grad_block(phi, chi) * C64::new(k_rho, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comms::sum_rate;
    use crate::linalg::{complex_gaussian_matrix, complex_gaussian_scalar, complex_gaussian_vector, re_inner, unitarity_residual};
    use crate::sensing::crb_closed_form;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn test_cfg(k: usize, n: usize, m: usize, x: usize) -> SystemConfig {
        SystemConfig {
            n_tx: n,
            n_rx: n,
            n_ue: k,
            m_elements: m,
            n_groups: x,
            l_slots: 16,
            p_max: 4.0,
            p_tar: 0.5,
            sigma2_ue: 0.1,
            sigma2_bs: 0.1,
            ..SystemConfig::default()
        }
    }

    fn synthetic_channels(cfg: &SystemConfig, seed: u64) -> ChannelSet {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let m = cfg.m_elements;
        let k = cfg.n_ue;
        ChannelSet {
            g_tx: complex_gaussian_matrix(cfg.n_tx, m, &mut rng),
            g_rx: complex_gaussian_matrix(cfg.n_rx, m, &mut rng),
            d_bu: (0..k).map(|_| complex_gaussian_vector(cfg.n_tx, &mut rng)).collect(),
            r_ue: (0..k).map(|_| complex_gaussian_vector(m, &mut rng)).collect(),
            d_tu: (0..k).map(|_| complex_gaussian_scalar(&mut rng)).collect(),
            beta: C64::from_polar(0.8, rng.random_range(0.0..std::f64::consts::TAU)),
            theta: rng.random_range(-1.2..1.2),
        }
    }

    /// Random feasible instance: unitary phi, power-feasible w, and
    /// delta_max set to twice the current CRB so the interior is strict.
    struct Instance {
        cfg: SystemConfig,
        ch: ChannelSet,
        phi: ScatteringMatrix,
        w: BeamformingMatrix,
    }

    fn make_instance(k: usize, n: usize, m: usize, x: usize, seed: u64) -> Instance {
        let mut cfg = test_cfg(k, n, m, x);
        let ch = synthetic_channels(&cfg, seed);
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
        let phi = ScatteringMatrix::random(m, x, &mut rng).unwrap();
        let mut wmat = complex_gaussian_matrix(n, k, &mut rng);
        let p: f64 = wmat.iter().map(|c| c.norm_sqr()).sum();
        wmat *= C64::new((cfg.p_max / p).sqrt(), 0.0);
        let w = BeamformingMatrix::from_matrix(wmat);
        let crb = crb_closed_form(&phi, &ch, &cfg).unwrap();
        cfg.delta_max = 2.0 * crb;
        Instance { cfg, ch, phi, w }
    }

    fn fd_directional<O: BlockObjective>(
        obj: &O,
        phi: &ScatteringMatrix,
        chi: usize,
        dir: &CMat,
        eps: f64,
    ) -> f64 {
        let plus = phi.with_block(chi, phi.block(chi) + dir * C64::new(eps, 0.0));
        let minus = phi.with_block(chi, phi.block(chi) - dir * C64::new(eps, 0.0));
        (obj.value(&plus).unwrap() - obj.value(&minus).unwrap()) / (2.0 * eps)
    }

    /// Max relative FD error over random real/imaginary direction pairs.
    fn max_fd_err<O: BlockObjective>(
        obj: &O,
        phi: &ScatteringMatrix,
        n_dirs: usize,
        rng: &mut ChaCha20Rng,
    ) -> f64 {
        let bs = phi.block_size();
        let eps = 1e-6;
        let mut worst: f64 = 0.0;
        for t in 0..n_dirs {
            let chi = t % phi.n_groups();
            let sigma = obj.grad_block(phi, chi).unwrap();
            let real_dir = CMat::from_fn(bs, bs, |_, _| {
                C64::new(rng.random_range(-1.0..1.0), 0.0)
            });
            for dir in [real_dir.clone(), real_dir.map(|z| C64::new(0.0, 1.0) * z)] {
                let analytic = 2.0 * re_inner(&sigma, &dir);
                let fd = fd_directional(obj, phi, chi, &dir, eps);
                let floor = 1e-12 * (sigma.norm() * dir.norm() + 1e-300);
                let rel = (analytic - fd).abs() / fd.abs().max(analytic.abs()).max(floor);
                worst = worst.max(rel);
            }
        }
        worst
    }

    #[test]
    fn barrier_value_direct_substitution() {
        let inst = make_instance(2, 2, 4, 2, 1);
        // delta_max = 2 crb, so the slack is exactly crb = delta_max / 2.
        let sched = BarrierSchedule { tau: 1.0, nu: 2.0, tau_cap: 1e4 };
        let f = barrier_objective(&inst.phi, &inst.w, &inst.ch, &inst.cfg, &sched).unwrap();
        let rate = sum_rate(&inst.w, &inst.phi, &inst.ch, &inst.cfg);
        let expected = rate + (inst.cfg.delta_max / 2.0).ln();
        assert!((f - expected).abs() < 1e-10, "{f} vs {expected}");
    }

    #[test]
    fn barrier_vanishes_at_large_tau() {
        for slack_exp in [-6.0_f64, -3.0, 0.0] {
            let mut inst = make_instance(2, 2, 4, 2, 2);
            let crb = crb_closed_form(&inst.phi, &inst.ch, &inst.cfg).unwrap();
            inst.cfg.delta_max = crb + 10f64.powf(slack_exp);
            let sched = BarrierSchedule { tau: 1e12, nu: 2.0, tau_cap: 1e12 };
            let f = barrier_objective(&inst.phi, &inst.w, &inst.ch, &inst.cfg, &sched).unwrap();
            let rate = sum_rate(&inst.w, &inst.phi, &inst.ch, &inst.cfg);
            assert!((f - rate).abs() < 1e-6, "slack 1e{slack_exp}: {f} vs {rate}");
        }
    }

    #[test]
    fn barrier_compositional_oracle() {
        let inst = make_instance(2, 3, 4, 2, 3);
        let sched = BarrierSchedule { tau: 3.5, nu: 2.0, tau_cap: 1e4 };
        let f = barrier_objective(&inst.phi, &inst.w, &inst.ch, &inst.cfg, &sched).unwrap();
        let rate = sum_rate(&inst.w, &inst.phi, &inst.ch, &inst.cfg);
        let crb = crb_closed_form(&inst.phi, &inst.ch, &inst.cfg).unwrap();
        let expected = rate + (inst.cfg.delta_max - crb).ln() / 3.5;
        assert!((f - expected).abs() <= 1e-12 * f.abs().max(1.0));
    }

    #[test]
    fn barrier_rejects_infeasible_point() {
        let mut inst = make_instance(2, 2, 4, 2, 4);
        let crb = crb_closed_form(&inst.phi, &inst.ch, &inst.cfg).unwrap();
        inst.cfg.delta_max = crb * 0.5;
        let sched = BarrierSchedule { tau: 1.0, nu: 2.0, tau_cap: 1e4 };
        assert!(matches!(
            barrier_objective(&inst.phi, &inst.w, &inst.ch, &inst.cfg, &sched),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn rate_gradient_zero_for_zero_beamformer() {
        let mut inst = make_instance(2, 2, 4, 2, 5);
        inst.w = BeamformingMatrix::zeros(2, 2);
        let ctx = GradientContext::build(&inst.phi, &inst.w, &inst.ch, &inst.cfg).unwrap();
        for chi in 0..2 {
            assert!(ctx.rate_grad_block(&inst.phi, chi).norm() == 0.0);
        }
    }

    #[test]
    fn barrier_only_gradient_matches_fd() {
        // W = 0 leaves only the CRB barrier term in f.
        let mut inst = make_instance(2, 2, 4, 2, 6);
        inst.w = BeamformingMatrix::zeros(2, 2);
        let obj = BarrierObjective { w: &inst.w, ch: &inst.ch, cfg: &inst.cfg, tau: 1.0 };
        let mut rng = ChaCha20Rng::seed_from_u64(60);
        let worst = max_fd_err(&obj, &inst.phi, 20, &mut rng);
        assert!(worst < 1e-5, "max rel err {worst:.3e}");
    }

    #[test]
    fn full_gradient_matches_fd_across_groupings() {
        let mut worst: f64 = 0.0;
        for (i, &x) in [1usize, 2, 4].iter().enumerate() {
            let inst = make_instance(2, 2, 4, x, 7 + i as u64);
            let obj = BarrierObjective { w: &inst.w, ch: &inst.ch, cfg: &inst.cfg, tau: 1.0 };
            let mut rng = ChaCha20Rng::seed_from_u64(70 + i as u64);
            worst = worst.max(max_fd_err(&obj, &inst.phi, 50, &mut rng));
        }
        assert!(worst < 1e-5, "max rel err {worst:.3e}");
    }

    #[test]
    fn neg_crb_gradient_matches_fd() {
        for seed in 0..5 {
            let inst = make_instance(1, 2, 4, 2, 100 + seed);
            let obj = NegCrbObjective { ch: &inst.ch, cfg: &inst.cfg };
            let mut rng = ChaCha20Rng::seed_from_u64(200 + seed);
            let worst = max_fd_err(&obj, &inst.phi, 10, &mut rng);
            assert!(worst < 1e-5, "seed {seed}: max rel err {worst:.3e}");
        }
    }

    #[test]
    fn riemannian_gradient_zero_cases() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let phi_b = crate::scattering::random_unitary_block(3, &mut rng);
        // Normal direction sigma = phi projects to zero.
        let psi = riemannian_gradient(&phi_b.clone(), &phi_b);
        assert!(psi.norm() <= 1e-14);
        let zero = riemannian_gradient(&CMat::zeros(3, 3), &phi_b);
        assert!(zero.norm() == 0.0);
    }

    #[test]
    fn riemannian_gradient_skew_and_ascent() {
        for seed in 0..20 {
            let inst = make_instance(2, 2, 4, 1, 300 + seed);
            let obj = BarrierObjective { w: &inst.w, ch: &inst.ch, cfg: &inst.cfg, tau: 1.0 };
            let sigma = obj.grad_block(&inst.phi, 0).unwrap();
            let psi = riemannian_gradient(&sigma, inst.phi.block(0));
            assert!((&psi + psi.adjoint()).norm() <= 1e-13 * psi.norm().max(1.0));
            if psi.norm() > 1e-8 {
                let mu = 1e-6;
                let q = geodesic_rotation(&psi, mu);
                let moved = inst.phi.with_block(0, &q * inst.phi.block(0));
                let f0 = obj.value(&inst.phi).unwrap();
                let f1 = obj.value(&moved).unwrap();
                assert!(f1 > f0, "seed {seed}: no ascent ({f0} -> {f1})");
            }
        }
    }

    #[test]
    fn rotation_identity_at_zero_step() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let a = complex_gaussian_matrix(3, 3, &mut rng);
        let psi = &a - a.adjoint();
        let q = geodesic_rotation(&psi, 0.0);
        assert!((q - CMat::identity(3, 3)).norm() <= 1e-13);
    }

    #[test]
    fn rotation_two_by_two_closed_form() {
        let psi = CMat::from_row_slice(2, 2, &[
            C64::new(0.0, 0.0), C64::new(1.0, 0.0),
            C64::new(-1.0, 0.0), C64::new(0.0, 0.0),
        ]);
        let q = geodesic_rotation(&psi, std::f64::consts::FRAC_PI_2);
        let expected = CMat::from_row_slice(2, 2, &[
            C64::new(0.0, 0.0), C64::new(1.0, 0.0),
            C64::new(-1.0, 0.0), C64::new(0.0, 0.0),
        ]);
        assert!((q - expected).norm() <= 1e-12);
    }

    fn expm_taylor(a: &CMat, order: usize) -> CMat {
        let n = a.nrows();
        let mut acc = CMat::identity(n, n);
        let mut term = CMat::identity(n, n);
        for k in 1..=order {
            term = &term * a / C64::new(k as f64, 0.0);
            acc += &term;
        }
        acc
    }

    #[test]
    fn rotation_matches_taylor_and_inverts() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        for _ in 0..10 {
            let a = complex_gaussian_matrix(4, 4, &mut rng);
            let psi = &a - a.adjoint();
            let mu = 0.9 / psi.norm();
            let q = geodesic_rotation(&psi, mu);
            assert!(unitarity_residual(&q) <= 1e-12);
            let back = &q * geodesic_rotation(&psi, -mu);
            assert!((back - CMat::identity(4, 4)).norm() <= 1e-11);
            let taylor = expm_taylor(&(&psi * C64::new(mu, 0.0)), 20);
            assert!((&q - taylor).norm() <= 1e-10);
        }
    }

    struct FlatObjective;
    impl BlockObjective for FlatObjective {
        fn value(&self, _phi: &ScatteringMatrix) -> Result<f64> {
            Ok(0.0)
        }
        fn grad_block(&self, phi: &ScatteringMatrix, _chi: usize) -> Result<CMat> {
            Ok(CMat::zeros(phi.block_size(), phi.block_size()))
        }
    }

    #[test]
    fn stationary_block_returns_unchanged() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let phi = ScatteringMatrix::random(4, 2, &mut rng).unwrap();
        let step = StepSchedule { mu: 0.02, mu_min: 1e-12, mu_max: 10.0, max_halvings: 60 };
        let out = block_step(&FlatObjective, &phi, 0, step.mu, &step).unwrap();
        assert!(out.stationary);
        assert_eq!(out.phi, phi);
        assert_eq!(out.mu, step.mu);
    }

    #[test]
    fn accepted_steps_satisfy_certificate() {
        let mut checked = 0;
        let mut seed = 0u64;
        while checked < 100 {
            seed += 1;
            let inst = make_instance(2, 2, 4, 2, 400 + seed);
            let obj = BarrierObjective { w: &inst.w, ch: &inst.ch, cfg: &inst.cfg, tau: 1.0 };
            let step = inst.cfg.step;
            for chi in 0..2 {
                if let Ok(out) = block_step(&obj, &inst.phi, chi, step.mu, &step) {
                    if !out.stationary {
                        assert!(
                            out.gain >= out.threshold && out.threshold >= 0.0,
                            "seed {seed} chi {chi}: gain {} < threshold {}",
                            out.gain,
                            out.threshold
                        );
                        checked += 1;
                    }
                }
            }
        }
    }

    #[test]
    fn doubling_terminates_with_finite_step() {
        for seed in 0..50 {
            let inst = make_instance(2, 2, 4, 2, 500 + seed);
            let obj = BarrierObjective { w: &inst.w, ch: &inst.ch, cfg: &inst.cfg, tau: 1.0 };
            let step = inst.cfg.step;
            let out = block_step(&obj, &inst.phi, 0, step.mu, &step).unwrap();
            assert!(out.mu.is_finite() && out.mu <= step.mu_max);
            assert!(out.gain.is_finite());
        }
    }

    #[test]
    fn single_connected_sweep_keeps_unimodular_diagonal() {
        let inst = make_instance(2, 2, 4, 4, 600);
        let out = optimize_scattering(
            &inst.phi,
            &inst.w,
            &inst.ch,
            &inst.cfg,
            BarrierSchedule { tau: 1.0, nu: 2.0, tau_cap: 1e4 },
            inst.cfg.step,
            1e-4,
        )
        .unwrap();
        let full = out.phi.assemble_full();
        for i in 0..4 {
            assert!((full[(i, i)].norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn inner_trace_monotone_within_fixed_tau_segments() {
        for seed in 0..20 {
            let inst = make_instance(2, 2, 4, 2, 700 + seed);
            let sched = BarrierSchedule { tau: 1.0, nu: 2.0, tau_cap: 16.0 };
            let out = optimize_scattering(
                &inst.phi, &inst.w, &inst.ch, &inst.cfg, sched, inst.cfg.step, 1e-6,
            )
            .unwrap();
            // tau doubles each sweep until sweep 5 caps it at 16; afterwards f
            // is maximized at a fixed tau and the trace must not decrease.
            let capped_from = 5.min(out.f_trace.len());
            for pair in out.f_trace[capped_from..].windows(2) {
                assert!(
                    pair[1] >= pair[0] - 1e-9,
                    "seed {seed}: f decreased {} -> {}",
                    pair[0],
                    pair[1]
                );
            }
            // Terminal point stays strictly feasible.
            let crb = crb_closed_form(&out.phi, &inst.ch, &inst.cfg).unwrap();
            assert!(crb <= inst.cfg.delta_max);
            assert!(out.phi.unitarity_residual() <= 1e-9);
        }
    }
}
