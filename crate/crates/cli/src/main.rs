//! Command-line front end: single solves, parameter sweeps, and the
//! finite-difference gradient audit.
//!
//! Exit codes are part of the stable interface:
//! 0 converged / all checks passed, 1 config or spec errors, 2 no feasible
//! scattering init, 3 outer iteration cap reached, 4 gradient audit failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bdris_core::ao::solve_joint;
use bdris_core::batch::with_workers;
use bdris_core::config::{config_hash, load_config};
use bdris_core::error::Error;
use bdris_core::gradcheck::grad_check;
use bdris_core::scenario::{generate_channels, SystemConfig};
use bdris_core::sweep::{load_sweep, run_sweep, write_sweep_csv};

const EXIT_CONFIG: u8 = 1;
const EXIT_NO_FEASIBLE: u8 = 2;
const EXIT_ITER_CAP: u8 = 3;
const EXIT_GRAD_FAIL: u8 = 4;

#[derive(Parser)]
#[command(name = "bdris", version, about = "Joint beamforming and block-unitary RIS scattering design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one joint solve; writes report.csv and summary.txt.
    Solve {
        /// Scenario config file (TOML; dBm/degree units).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for report.csv and summary.txt.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a parameter sweep; one joint solve per (axis value, trial).
    Sweep {
        /// Sweep spec file (TOML with an inline [base] scenario).
        #[arg(long)]
        config: PathBuf,
        /// Override the base config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the spec's output_path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Concurrent trials; 0 uses all cores.
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Audit the scattering gradient against central finite differences.
    Gradcheck {
        /// Scenario config providing the scalar constants and base seed.
        #[arg(long)]
        config: PathBuf,
        /// Random small instances to draw.
        #[arg(long, default_value_t = 50)]
        instances: usize,
        /// Max relative error accepted per instance.
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Usage problems share the config-error exit code; --help and
            // --version exit cleanly.
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Solve { config, seed, out } => run_solve(&config, seed, &out),
        Command::Sweep { config, seed, out, workers } => run_sweep_cmd(&config, seed, out, workers),
        Command::Gradcheck { config, instances, tolerance, seed } => {
            run_gradcheck(&config, instances, tolerance, seed)
        }
    }
}

fn fail(msg: &str, code: u8) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn run_solve(config: &Path, seed: Option<u64>, out: &Path) -> ExitCode {
    let mut cfg = match load_config(config) {
        Ok(c) => c,
        Err(e) => return fail(&e.to_string(), EXIT_CONFIG),
    };
    if let Some(s) = seed {
        cfg = SystemConfig { seed: s, ..cfg };
    }
    let hash = config_hash(&cfg);
    let ch = match generate_channels(&cfg) {
        Ok(ch) => ch,
        Err(e) => return fail(&e.to_string(), EXIT_CONFIG),
    };
    let report = match solve_joint(&ch, &cfg) {
        Ok(r) => r,
        Err(e @ Error::NoFeasiblePoint { .. }) => return fail(&e.to_string(), EXIT_NO_FEASIBLE),
        Err(e) => return fail(&e.to_string(), EXIT_CONFIG),
    };

    if let Err(e) = fs::create_dir_all(out) {
        return fail(&format!("cannot create {}: {e}", out.display()), EXIT_CONFIG);
    }
    let csv_path = out.join("report.csv");
    let summary_path = out.join("summary.txt");
    let write = || -> Result<(), Error> {
        let mut csv = fs::File::create(&csv_path)?;
        report.write_csv(&mut csv, &hash)?;
        let mut summary = fs::File::create(&summary_path)?;
        report.write_summary(&mut summary)?;
        Ok(())
    };
    if let Err(e) = write() {
        return fail(&e.to_string(), EXIT_CONFIG);
    }

    println!(
        "rate={} bits/s/Hz crb={} rad^2 power={} W outer_iters={} converged={}",
        report.final_rate,
        report.final_crb,
        report.final_w.power(),
        report.outer_iters,
        report.converged
    );
    println!("wrote {} and {}", csv_path.display(), summary_path.display());
    if report.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_ITER_CAP)
    }
}

fn run_sweep_cmd(
    config: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    workers: usize,
) -> ExitCode {
    let mut spec = match load_sweep(config) {
        Ok(s) => s,
        Err(e) => return fail(&e.to_string(), EXIT_CONFIG),
    };
    if let Some(s) = seed {
        spec.base.seed = s;
    }
    if let Some(path) = out {
        spec.output_path = path;
    }
    let hash = config_hash(&spec.base);
    let outcome = with_workers(workers, || run_sweep(&spec));

    if let Some(dir) = spec.output_path.parent() {
        if !dir.as_os_str().is_empty() {
            if let Err(e) = fs::create_dir_all(dir) {
                return fail(&format!("cannot create {}: {e}", dir.display()), EXIT_CONFIG);
            }
        }
    }
    let write = || -> Result<(), Error> {
        let mut f = fs::File::create(&spec.output_path)?;
        write_sweep_csv(&mut f, &spec, &outcome, &hash)?;
        Ok(())
    };
    if let Err(e) = write() {
        return fail(&e.to_string(), EXIT_CONFIG);
    }

    for (value, mean) in outcome.mean_rates(&spec) {
        match mean {
            Some(m) => println!("{}={value}: mean rate {m}", spec.axis.name()),
            None => println!("{}={value}: no successful trials", spec.axis.name()),
        }
    }
    println!("wrote {}", spec.output_path.display());
    ExitCode::SUCCESS
}

fn run_gradcheck(config: &Path, instances: usize, tolerance: f64, seed: Option<u64>) -> ExitCode {
    let mut cfg = match load_config(config) {
        Ok(c) => c,
        Err(e) => return fail(&e.to_string(), EXIT_CONFIG),
    };
    if let Some(s) = seed {
        cfg = SystemConfig { seed: s, ..cfg };
    }
    let report = match grad_check(&cfg, instances, tolerance) {
        Ok(r) => r,
        Err(e) => return fail(&e.to_string(), EXIT_CONFIG),
    };
    for inst in &report.instances {
        println!(
            "instance seed={} m={} x={} k={} max_rel_err={:e}",
            inst.seed, inst.m_elements, inst.n_groups, inst.n_ue, inst.max_rel_err
        );
    }
    println!("max_rel_err={:e} tolerance={tolerance:e}", report.max_rel_err());
    let failures = report.failures();
    if failures.is_empty() {
        println!("gradcheck: all {} instances passed", report.instances.len());
        ExitCode::SUCCESS
    } else {
        eprintln!("gradcheck: {} failing instances:", failures.len());
        for inst in failures {
            eprintln!("  seed={} m={} x={} k={} max_rel_err={:e}", inst.seed, inst.m_elements, inst.n_groups, inst.n_ue, inst.max_rel_err);
        }
        ExitCode::from(EXIT_GRAD_FAIL)
    }
}
