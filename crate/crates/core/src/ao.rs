//! Outer alternating loop: WMMSE beamforming step, scattering ascent step,
//! convergence bookkeeping, and feasible initialization.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::comms::{sum_rate, BeamformingMatrix};
use crate::error::{Error, Result};
use crate::manifold::{block_step, optimize_scattering, NegCrbObjective};
use crate::scattering::ScatteringMatrix;
use crate::scenario::{splitmix64, ChannelSet, SystemConfig};
use crate::sensing::crb_closed_form;
use crate::wmmse::wmmse_solve;

const MAX_OUTER_ITERS: usize = 100;
const FEASIBILITY_RETRIES: u64 = 10;
const FEASIBILITY_SWEEPS: usize = 200;
/// Accept an init at this fraction of the CRB threshold to leave the barrier
/// a strict interior margin.
const FEASIBILITY_MARGIN: f64 = 0.9;

/// Traces and final state of one joint solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Sum rate after each outer iteration.
    pub rate_trace: Vec<f64>,
    /// CRB after each outer iteration.
    pub crb_trace: Vec<f64>,
    /// Barrier objective after every inner sweep, all outer iterations
    /// concatenated.
    pub f_trace: Vec<f64>,
    /// Barrier objective at the end of each outer iteration's inner loop.
    pub f_end: Vec<f64>,
    /// Step size at the end of each outer iteration's inner loop.
    pub mu_end: Vec<f64>,
    pub final_phi: ScatteringMatrix,
    pub final_w: BeamformingMatrix,
    pub final_rate: f64,
    pub final_crb: f64,
    pub outer_iters: usize,
    pub converged: bool,
    pub stall_events: usize,
    pub wall_time: f64,
}

impl SolveReport {
    /// Per-iteration CSV: a config-hash comment line, a header, then one row
    /// per outer iteration. Excludes wall time so repeated runs are
    /// byte-identical.
    pub fn write_csv<W: Write>(&self, out: &mut W, config_hash: &str) -> Result<()> {
        writeln!(out, "# config_hash={config_hash}")?;
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["iteration", "rate", "crb", "f", "mu"])?;
        for i in 0..self.outer_iters {
            wtr.write_record(&[
                (i + 1).to_string(),
                self.rate_trace[i].to_string(),
                self.crb_trace[i].to_string(),
                self.f_end[i].to_string(),
                self.mu_end[i].to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Field-per-line human-readable summary including the final matrices.
    pub fn write_summary<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "converged: {}", self.converged)?;
        writeln!(out, "outer_iters: {}", self.outer_iters)?;
        writeln!(out, "stall_events: {}", self.stall_events)?;
        writeln!(out, "wall_time_s: {:.3}", self.wall_time)?;
        writeln!(out, "final_rate_bits: {}", self.final_rate)?;
        writeln!(out, "final_crb_rad2: {}", self.final_crb)?;
        writeln!(out, "final_power_w: {}", self.final_w.power())?;
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(out, "rate_trace: {}", join(&self.rate_trace))?;
        writeln!(out, "crb_trace: {}", join(&self.crb_trace))?;
        writeln!(out, "f_trace: {}", join(&self.f_trace))?;
        writeln!(out, "final_w:")?;
        let w = self.final_w.matrix();
        for i in 0..w.nrows() {
            let row: Vec<String> =
                (0..w.ncols()).map(|j| format!("{},{}", w[(i, j)].re, w[(i, j)].im)).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        writeln!(out, "final_phi:")?;
        self.final_phi.write_text(out)?;
        Ok(())
    }
}

/// Strictly feasible scattering init: Haar draws, each repaired by Riemannian
/// ascent on -CRB until CRB <= 0.9 delta_max, with up to ten fresh seeds.
pub fn find_feasible_init(ch: &ChannelSet, cfg: &SystemConfig) -> Result<ScatteringMatrix> {
    let target = FEASIBILITY_MARGIN * cfg.delta_max;
    let obj = NegCrbObjective { ch, cfg };
    let mut best_crb = f64::INFINITY;

    for retry in 0..FEASIBILITY_RETRIES {
        let seed = splitmix64(splitmix64(cfg.seed ^ 0xFEA5_1B1E_5EED_0001).wrapping_add(retry));
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut phi = ScatteringMatrix::random(cfg.m_elements, cfg.n_groups, &mut rng)?;
        let mut crb = match crb_closed_form(&phi, ch, cfg) {
            Ok(v) => v,
            Err(_) => continue,
        };
        if crb <= target {
            return Ok(phi);
        }
        let mut mu = cfg.step.mu;
        let mut accepted = 0usize;
        'sweeps: for _ in 0..FEASIBILITY_SWEEPS {
            let mut changed = false;
            for chi in 0..cfg.n_groups {
                match block_step(&obj, &phi, chi, mu, &cfg.step) {
                    Ok(bs) if !bs.stationary => {
                        phi = bs.phi;
                        mu = bs.mu;
                        changed = true;
                        accepted += 1;
                        if accepted % 50 == 0 {
                            phi = phi.renormalize()?;
                        }
                    }
                    Ok(_) => {}
                    Err(Error::StepStalled { .. }) => {}
                    Err(_) => break 'sweeps,
                }
            }
            crb = match crb_closed_form(&phi, ch, cfg) {
                Ok(v) => v,
                Err(_) => break 'sweeps,
            };
            if crb <= target {
                return phi.renormalize();
            }
            if !changed {
                break;
            }
        }
        best_crb = best_crb.min(crb);
    }
    Err(Error::NoFeasiblePoint { best_crb, delta_max: cfg.delta_max })
}

/// Full alternating solve: WMMSE beamformers, then log-barrier Riemannian
/// ascent on the scattering matrix, until the relative sum-rate change falls
/// below `tol_outer` (or 100 outer iterations).
pub fn solve_joint(ch: &ChannelSet, cfg: &SystemConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let start = Instant::now();

    let mut phi = find_feasible_init(ch, cfg)?;
    let mut w: Option<BeamformingMatrix> = None;

    let mut rate_trace = Vec::new();
    let mut crb_trace = Vec::new();
    let mut f_trace = Vec::new();
    let mut f_end = Vec::new();
    let mut mu_end = Vec::new();
    let mut stall_events = 0usize;
    let mut converged = false;

    // Reference rate for the first relative test: matched filters at the
    // feasible init.
    let mut rate_prev = sum_rate(&BeamformingMatrix::matched_filter(&phi, ch, cfg), &phi, ch, cfg);

    let mut outer_iters = 0usize;
    for _ in 0..MAX_OUTER_ITERS {
        let wm = wmmse_solve(&phi, ch, cfg, w.as_ref(), cfg.tol_inner)?;
        let w_now = wm.w;
        let inner =
            optimize_scattering(&phi, &w_now, ch, cfg, cfg.barrier, cfg.step, cfg.tol_inner)?;
        phi = inner.phi;
        stall_events += inner.stall_events;

        let rate = sum_rate(&w_now, &phi, ch, cfg);
        let crb = crb_closed_form(&phi, ch, cfg)?;
        rate_trace.push(rate);
        crb_trace.push(crb);
        f_trace.extend_from_slice(&inner.f_trace);
        f_end.push(inner.final_f);
        mu_end.push(inner.final_mu);
        w = Some(w_now);
        outer_iters += 1;

        let rel = (rate - rate_prev).abs() / rate_prev.max(1e-12);
        if rel <= cfg.tol_outer {
            converged = true;
            break;
        }
        rate_prev = rate;
    }

    let final_w = w.expect("at least one outer iteration");
    let final_rate = *rate_trace.last().expect("non-empty trace");
    let final_crb = *crb_trace.last().expect("non-empty trace");
    Ok(SolveReport {
        rate_trace,
        crb_trace,
        f_trace,
        f_end,
        mu_end,
        final_phi: phi,
        final_w,
        final_rate,
        final_crb,
        outer_iters,
        converged,
        stall_events,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
