//! Parameter sweeps: one joint solve per (axis value, trial), matched trial
//! seeds across axis values, CSV output with per-value aggregates.

use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::ao::solve_joint;
use crate::batch::run_batch;
use crate::config::ConfigFile;
use crate::error::{Error, Result};
use crate::scenario::{dbm_to_watts, generate_channels, trial_seed, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    PMaxDbm,
    MElements,
    NGroups,
    DeltaMax,
    Seed,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::PMaxDbm => "p_max_dbm",
            SweepAxis::MElements => "m_elements",
            SweepAxis::NGroups => "n_groups",
            SweepAxis::DeltaMax => "delta_max",
            SweepAxis::Seed => "seed",
        }
    }

    fn integral(&self) -> bool {
        matches!(self, SweepAxis::MElements | SweepAxis::NGroups | SweepAxis::Seed)
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub trials_per_value: usize,
    pub base: SystemConfig,
    pub output_path: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    axis: SweepAxis,
    values: Vec<f64>,
    trials_per_value: usize,
    output_path: PathBuf,
    base: ConfigFile,
}

pub fn parse_sweep_str(text: &str) -> Result<SweepSpec> {
    let file: SweepFile = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
    let spec = SweepSpec {
        axis: file.axis,
        values: file.values,
        trials_per_value: file.trials_per_value,
        base: file.base.resolve()?,
        output_path: file.output_path,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn load_sweep(path: &std::path::Path) -> Result<SweepSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::ConfigParse(format!("{}: {e}", path.display())))?;
    parse_sweep_str(&text)
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidSweep("values must be nonempty".into()));
        }
        if self.trials_per_value < 1 {
            return Err(Error::InvalidSweep("trials_per_value must be >= 1".into()));
        }
        if self.axis != SweepAxis::Seed {
            for pair in self.values.windows(2) {
                if !(pair[1] > pair[0]) {
                    return Err(Error::InvalidSweep(format!(
                        "values must be strictly increasing, got {} then {}",
                        pair[0], pair[1]
                    )));
                }
            }
        }
        if self.axis.integral() {
            for v in &self.values {
                if v.fract() != 0.0 || *v < 0.0 {
                    return Err(Error::InvalidSweep(format!(
                        "axis {} takes nonnegative integers, got {v}",
                        self.axis.name()
                    )));
                }
            }
        }
        // Every axis value must produce a valid config.
        for &v in &self.values {
            apply_axis(&self.base, self.axis, v)?;
        }
        Ok(())
    }
}

/// Base config with one axis value applied. Axes that change channel
/// dimensions (m_elements, n_groups) redraw channels per value from the same
/// seed stream; the others reuse identical ChannelSets across values.
pub fn apply_axis(base: &SystemConfig, axis: SweepAxis, value: f64) -> Result<SystemConfig> {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::PMaxDbm => cfg.p_max = dbm_to_watts(value),
        SweepAxis::MElements => cfg.m_elements = value as usize,
        SweepAxis::NGroups => cfg.n_groups = value as usize,
        SweepAxis::DeltaMax => cfg.delta_max = value,
        SweepAxis::Seed => cfg.seed = value as u64,
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialStatus {
    Ok,
    IterationCap,
    NoFeasiblePoint,
    Failed,
}

impl TrialStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrialStatus::Ok => "ok",
            TrialStatus::IterationCap => "iteration_cap",
            TrialStatus::NoFeasiblePoint => "no_feasible_point",
            TrialStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialRow {
    pub axis_value: f64,
    pub trial_seed: u64,
    pub final_rate: Option<f64>,
    pub final_crb: Option<f64>,
    pub outer_iters: Option<usize>,
    pub wall_time: Option<f64>,
    pub status: TrialStatus,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<TrialRow>,
}

impl SweepOutcome {
    /// Mean final rate per axis value over trials that produced a result.
    pub fn mean_rates(&self, spec: &SweepSpec) -> Vec<(f64, Option<f64>)> {
        spec.values
            .iter()
            .map(|&v| {
                let rates: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.axis_value == v)
                    .filter_map(|r| r.final_rate)
                    .collect();
                let mean = if rates.is_empty() {
                    None
                } else {
                    Some(rates.iter().sum::<f64>() / rates.len() as f64)
                };
                (v, mean)
            })
            .collect()
    }
}

/// Run every (value, trial) solve; trial t of every axis value shares seed
/// `trial_seed(seed_after_axis, t)`, so trial 0 of a seed-axis sweep equals a
/// plain solve. Per-trial failures become status rows, not errors.
pub fn run_sweep(spec: &SweepSpec) -> SweepOutcome {
    let mut tasks = Vec::new();
    for &value in &spec.values {
        for t in 0..spec.trials_per_value {
            tasks.push((value, t as u64));
        }
    }
    let base = spec.base.clone();
    let axis = spec.axis;
    let rows = run_batch(tasks, move |(value, t)| {
        let cfg = match apply_axis(&base, axis, value) {
            Ok(c) => c,
            Err(_) => {
                return TrialRow {
                    axis_value: value,
                    trial_seed: 0,
                    final_rate: None,
                    final_crb: None,
                    outer_iters: None,
                    wall_time: None,
                    status: TrialStatus::Failed,
                }
            }
        };
        let seed = trial_seed(cfg.seed, t);
        let cfg = SystemConfig { seed, ..cfg };
        let outcome = generate_channels(&cfg).and_then(|ch| solve_joint(&ch, &cfg));
        match outcome {
            Ok(report) => TrialRow {
                axis_value: value,
                trial_seed: seed,
                final_rate: Some(report.final_rate),
                final_crb: Some(report.final_crb),
                outer_iters: Some(report.outer_iters),
                wall_time: Some(report.wall_time),
                status: if report.converged { TrialStatus::Ok } else { TrialStatus::IterationCap },
            },
            Err(Error::NoFeasiblePoint { .. }) => TrialRow {
                axis_value: value,
                trial_seed: seed,
                final_rate: None,
                final_crb: None,
                outer_iters: None,
                wall_time: None,
                status: TrialStatus::NoFeasiblePoint,
            },
            Err(_) => TrialRow {
                axis_value: value,
                trial_seed: seed,
                final_rate: None,
                final_crb: None,
                outer_iters: None,
                wall_time: None,
                status: TrialStatus::Failed,
            },
        }
    });
    SweepOutcome { rows }
}

/// Trial rows in deterministic (value, trial) order, then one `mean` row per
/// axis value.
pub fn write_sweep_csv<W: Write>(
    out: &mut W,
    spec: &SweepSpec,
    outcome: &SweepOutcome,
    config_hash: &str,
) -> Result<()> {
    writeln!(out, "# config_hash={config_hash} axis={}", spec.axis.name())?;
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["axis_value", "trial_seed", "final_rate", "final_crb", "outer_iters", "wall_time", "status"])?;
    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for row in &outcome.rows {
        wtr.write_record(&[
            row.axis_value.to_string(),
            row.trial_seed.to_string(),
            fmt_opt(row.final_rate),
            fmt_opt(row.final_crb),
            row.outer_iters.map(|x| x.to_string()).unwrap_or_default(),
            fmt_opt(row.wall_time),
            row.status.as_str().to_string(),
        ])?;
    }
    for &value in &spec.values {
        let done: Vec<&TrialRow> = outcome
            .rows
            .iter()
            .filter(|r| r.axis_value == value && r.final_rate.is_some())
            .collect();
        let mean = |f: fn(&TrialRow) -> Option<f64>| -> String {
            if done.is_empty() {
                String::new()
            } else {
                (done.iter().filter_map(|r| f(r)).sum::<f64>() / done.len() as f64).to_string()
            }
        };
        wtr.write_record(&[
            value.to_string(),
            String::new(),
            mean(|r| r.final_rate),
            mean(|r| r.final_crb),
            mean(|r| r.outer_iters.map(|x| x as f64)),
            mean(|r| r.wall_time),
            "mean".to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
