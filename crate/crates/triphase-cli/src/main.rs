//! Batch entry point for the three-phase heat solver.
//!
//! Subcommands: `simulate` (global solve plus diagnostics tables),
//! `verify` (the full check battery), `constants` (measure the inequality
//! constants), `convergence` (refinement study against the
//! finite-difference reference). All artifacts are written under the
//! output directory with the config hash in their names; runs with the
//! same config and seed are byte-identical.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use config::{Family, RunConfig};
use output::{fmt_f64, ArtifactSet};
use triphase_core::coupling::estimate_constants;
use triphase_core::diagnostics;
use triphase_core::field::TriField;
use triphase_core::oracle::{l2_time_space_difference, oracle_solve, OracleConfig};
use triphase_core::scenario::{self, BulkMode, InitialData};
use triphase_core::solver::{adapt_window, solve_global};
use triphase_core::verify::run_acceptance;

#[derive(Parser)]
#[command(name = "triphase", version, about = "Spectral solver and verification harness for two half-space heat equations coupled through a massive interface")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the coupled system and emit diagnostics tables.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the full verification battery and report pass/fail per check.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Measure the forcing and regularity constants on the configured grid.
    Constants {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Refinement study of the spectral solution against the reference
    /// solver.
    Convergence {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("TRIPHASE_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    let cli = Cli::parse();
    let (config_path, out, runner): (&Path, &Path, fn(&RunConfig, &mut ArtifactSet) -> anyhow::Result<bool>) =
        match &cli.command {
            Command::Simulate { config, out } => (config, out, run_simulate),
            Command::Verify { config, out } => (config, out, run_verify),
            Command::Constants { config, out } => (config, out, run_constants),
            Command::Convergence { config, out } => (config, out, run_convergence),
        };
    let cfg = match config::parse(config_path) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let mut artifacts = match ArtifactSet::new(out, &cfg.output_prefix, &cfg.hash) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: cannot prepare output directory: {e}");
            return ExitCode::from(1);
        }
    };
    match runner(&cfg, &mut artifacts) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Initial data of a run: an analytic family or a sampled field file.
enum Built {
    Analytic(InitialData),
    Field(TriField),
}

fn build_scenario(cfg: &RunConfig) -> anyhow::Result<Built> {
    let s = &cfg.scenario;
    let grid = &cfg.grid;
    match &s.family {
        Family::GaussianBump => {
            let mut data = scenario::gaussian_bump(grid, &cfg.phys);
            for b in data.bumps_a.iter_mut().chain(data.bumps_b.iter_mut()) {
                b.amp *= s.amplitude;
            }
            Ok(Built::Analytic(data))
        }
        Family::PureLift => {
            let mut data = scenario::pure_lift(grid, &cfg.phys);
            for b in data.bumps_s.iter_mut() {
                b.3 *= s.amplitude;
            }
            Ok(Built::Analytic(data))
        }
        Family::SingleMode => {
            if s.mode_n == 0 || s.mode_n > grid.n_z {
                return Err(anyhow!(
                    "mode_n must lie in 1..={} for this grid",
                    grid.n_z
                ));
            }
            let mut data = InitialData::bumps_only(cfg.phys.beta);
            data.modes_a.push(BulkMode {
                amp: s.amplitude,
                k_z: grid.k_z(s.mode_n - 1),
                xi: 2.0 * std::f64::consts::PI * s.mode_kx as f64 / grid.l_h,
            });
            Ok(Built::Analytic(data))
        }
        Family::File(path) => Ok(Built::Field(read_field(path, grid)?)),
    }
}

/// Sampled-field file: header `triphase-field n_h n_z`, then the upper
/// bulk, lower bulk, and surface values in row-major order, whitespace
/// separated.
fn read_field(path: &Path, grid: &triphase_core::GridSpec) -> anyhow::Result<TriField> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read field file {}", path.display()))?;
    let mut tokens = text.split_whitespace();
    let magic = tokens.next().ok_or(anyhow!("empty field file"))?;
    if magic != "triphase-field" {
        return Err(anyhow!("field file must start with `triphase-field`"));
    }
    let nh: usize = tokens.next().ok_or(anyhow!("missing n_h"))?.parse()?;
    let nz: usize = tokens.next().ok_or(anyhow!("missing n_z"))?.parse()?;
    if nh != grid.n_h || nz != grid.n_z {
        return Err(anyhow!(
            "field file is {nh}x{nz}, config grid is {}x{}",
            grid.n_h,
            grid.n_z
        ));
    }
    let mut next = || -> anyhow::Result<f64> {
        Ok(tokens
            .next()
            .ok_or(anyhow!("field file truncated"))?
            .parse::<f64>()?)
    };
    let mut f = TriField::zeros(grid);
    for i in 0..nh {
        for j in 0..nh {
            for k in 0..nz {
                f.f_a[[i, j, k]] = next()?;
            }
        }
    }
    for i in 0..nh {
        for j in 0..nh {
            for k in 0..nz {
                f.f_b[[i, j, k]] = next()?;
            }
        }
    }
    for i in 0..nh {
        for j in 0..nh {
            f.f_s[[i, j]] = next()?;
        }
    }
    Ok(f)
}

fn run_simulate(cfg: &RunConfig, artifacts: &mut ArtifactSet) -> anyhow::Result<bool> {
    let theta0 = match build_scenario(cfg)? {
        Built::Analytic(data) => data.sample(&cfg.grid),
        Built::Field(f) => f,
    };
    let mut solver_cfg = cfg.solver.clone();
    let mut extra = Vec::new();
    let constants = if cfg.solver.adapt_window {
        let rep = estimate_constants(&cfg.grid, &cfg.phys, cfg.constants_trials, cfg.scenario.seed)?;
        solver_cfg = adapt_window(&solver_cfg, &rep, cfg.grid.dt)?;
        extra.push(("window_adapted".into(), fmt_f64(solver_cfg.window_t)));
        Some(rep)
    } else {
        None
    };
    let (traj, report) = solve_global(
        &theta0,
        cfg.grid.t_end,
        &solver_cfg,
        &cfg.grid,
        &cfg.phys,
        constants.as_ref(),
    )?;

    let energy = diagnostics::energy_ledger(&traj)?;
    artifacts.energy_csv(&energy)?;
    artifacts.solver_csv(&report)?;
    let continuity = diagnostics::initial_continuity(&traj, &theta0, &cfg.grid)?;
    artifacts.continuity_csv(&continuity)?;
    let trace = diagnostics::trace_gap(&traj, &cfg.phys)?;
    artifacts.trace_csv(&trace)?;
    let balance = triphase_core::variational::heat_balance_residual(&traj, &cfg.phys)?;
    artifacts.heat_balance_csv(&balance)?;
    let holder = diagnostics::holder_probe(
        &traj,
        &cfg.phys,
        0.25,
        4.0 * cfg.grid.dt,
        cfg.grid.t_end,
    )?;
    artifacts.holder_csv(&holder)?;
    if let Some(rep) = &constants {
        artifacts.constants_text(rep)?;
    }
    for w in &report.windows {
        if let Some(warning) = &w.hypothesis_warning {
            extra.push((format!("hypothesis_warning_window_{}", w.window_index), warning.clone()));
            break;
        }
    }
    extra.push(("energy_defect_rel".into(), fmt_f64(energy.rel_defect)));
    extra.push(("profile_capture".into(), fmt_f64(report.profile_capture)));
    extra.push((
        "continuity_exponent".into(),
        fmt_f64(continuity.fitted_exponent),
    ));
    artifacts.manifest(&cfg.raw, cfg.scenario.seed, &extra)?;
    Ok(true)
}

fn run_verify(cfg: &RunConfig, artifacts: &mut ArtifactSet) -> anyhow::Result<bool> {
    let results = run_acceptance()?;
    let mut all_ok = true;
    for r in &results {
        println!("{}", r.line());
        all_ok &= r.passed;
    }
    artifacts.write_csv(
        "verify",
        "id,name,passed,details",
        results.iter().map(|r| {
            vec![
                r.id.to_string(),
                r.name.to_string(),
                r.passed.to_string(),
                format!("\"{}\"", r.details.replace('"', "\"\"")),
            ]
        }),
    )?;
    artifacts.manifest(&cfg.raw, cfg.scenario.seed, &[])?;
    Ok(all_ok)
}

fn run_constants(cfg: &RunConfig, artifacts: &mut ArtifactSet) -> anyhow::Result<bool> {
    let rep = estimate_constants(&cfg.grid, &cfg.phys, cfg.constants_trials, cfg.scenario.seed)?;
    artifacts.constants_text(&rep)?;
    let adapted = adapt_window(&cfg.solver, &rep, cfg.grid.dt);
    let mut extra = vec![
        ("c_star".into(), fmt_f64(rep.c_star)),
        ("alpha_0".into(), fmt_f64(rep.alpha_0)),
        ("beta_0".into(), fmt_f64(rep.beta_0)),
    ];
    match adapted {
        Ok(c) => extra.push(("window_from_constants".into(), fmt_f64(c.window_t))),
        Err(e) => extra.push(("window_from_constants".into(), format!("unattainable: {e}"))),
    }
    artifacts.manifest(&cfg.raw, cfg.scenario.seed, &extra)?;
    Ok(true)
}

fn run_convergence(cfg: &RunConfig, artifacts: &mut ArtifactSet) -> anyhow::Result<bool> {
    let data = match build_scenario(cfg)? {
        Built::Analytic(data) => data,
        Built::Field(_) => {
            return Err(anyhow!(
                "the convergence study needs an analytic scenario (the reference solver samples its own grids)"
            ))
        }
    };
    let theta0 = data.sample(&cfg.grid);
    let t_end = cfg.grid.t_end;
    // Align stored checkpoints with the reference solver's output times.
    let steps_between = ((t_end / cfg.grid.dt) / 20.0).round().max(1.0) as usize;
    let interval = steps_between as f64 * cfg.grid.dt;
    let solver_cfg = triphase_core::solver::SolverConfig {
        store_every: steps_between,
        ..cfg.solver.clone()
    };
    let (spec_traj, _) = solve_global(&theta0, t_end, &solver_cfg, &cfg.grid, &cfg.phys, None)?;
    let mut rows = Vec::new();

    // Space refinement of the reference solver against the spectral run.
    let mut prev: Option<f64> = None;
    for refine in [1usize, 2, 4] {
        let ocfg = OracleConfig {
            refine,
            checkpoint_interval: interval,
            ..OracleConfig::default()
        };
        let oracle_traj = oracle_solve(&data, t_end, &cfg.grid, &cfg.phys, &ocfg)?;
        let diff = l2_time_space_difference(&spec_traj, &oracle_traj)?;
        let order = prev.map(|p: f64| (p / diff).log2());
        rows.push(vec![
            "oracle_h".into(),
            refine.to_string(),
            fmt_f64(diff),
            order.map(fmt_f64).unwrap_or_default(),
        ]);
        prev = Some(diff);
    }

    // Time refinement of the spectral solver against itself: distances
    // between consecutive step-halved runs.
    let mut coarse = spec_traj;
    let mut prev_dt: Option<f64> = None;
    for halvings in [1usize, 2] {
        let factor = 1usize << halvings;
        let fine_grid = cfg.grid.with_dt(cfg.grid.dt / factor as f64)?;
        let fine_cfg = triphase_core::solver::SolverConfig {
            store_every: steps_between * factor,
            ..cfg.solver.clone()
        };
        let (fine_traj, _) = solve_global(&theta0, t_end, &fine_cfg, &fine_grid, &cfg.phys, None)?;
        let diff = l2_time_space_difference(&coarse, &fine_traj)?;
        let order = prev_dt.map(|p: f64| (p / diff).log2());
        rows.push(vec![
            "solver_dt".into(),
            factor.to_string(),
            fmt_f64(diff),
            order.map(fmt_f64).unwrap_or_default(),
        ]);
        prev_dt = Some(diff);
        coarse = fine_traj;
    }
    artifacts.write_csv(
        "convergence",
        "study,level,l2_difference,observed_order",
        rows,
    )?;
    artifacts.manifest(&cfg.raw, cfg.scenario.seed, &[])?;
    Ok(true)
}
