//! The subcommands behind the `porodyn` binary.

use std::path::{Path, PathBuf};

use porodyn_core::evolution::{self, Trajectory};
use porodyn_core::grid::{norm_l1_diff, norm_lp};
use porodyn_core::kinetic::{defect_measure, kinetic_residual, tensor_basket, VelocityBins};
use porodyn_core::regularity::{exponent_scan, RegularityReport};
use porodyn_core::Grid;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Context, Result};
use crate::harness::{self, BatchSpec, PropertyResult};
use crate::io;

/// Result of a command: `failed` is set when a checked property failed.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub failed: bool,
    pub out_dir: PathBuf,
}

/// Applies `--seed` and `--out` overrides.
pub fn apply_overrides(config: &mut RunConfig, seed: Option<u64>, out: Option<&Path>) {
    if let Some(seed) = seed {
        config.seeds.base = seed;
    }
    if let Some(out) = out {
        config.outputs.directory = out.to_path_buf();
    }
}

/// Solves the configured problem.
pub fn run_trajectory(config: &RunConfig) -> Result<Trajectory> {
    let grid = config.grid()?;
    run_on(config, &grid, config.time.eps, config.model.k)
}

fn run_on(config: &RunConfig, grid: &Grid, eps: f64, k: Option<u32>) -> Result<Trajectory> {
    let model = config.model_with(k)?;
    let u0 = config.initial_field(grid)?;
    let src = config.source(grid)?;
    evolution::solve(
        &model,
        &u0,
        &src,
        config.time.t_final,
        eps,
        &config.options(),
    )
    .context("time stepping")
}

#[derive(Serialize)]
struct SolveSummary {
    steps: usize,
    tau: f64,
    t_final: f64,
    snapshots: usize,
    mass_defect: f64,
    max_resolvent_residual: f64,
    max_picard_ratio: Option<f64>,
    exact_l1_error: Option<f64>,
}

pub fn cmd_solve(config: &RunConfig) -> Result<Outcome> {
    let dir = config.outputs.directory.clone();
    let traj = run_trajectory(config)?;
    let snapshots = io::write_trajectory(&dir, &traj, config.outputs.snapshot_stride)?;
    let t_final = *traj.times.last().expect("nonempty trajectory");
    let exact_l1_error = match config.exact_solution(&traj.grid, t_final) {
        Some(exact) => Some(norm_l1_diff(traj.final_state(), &exact).context("exact error")?),
        None => None,
    };
    let summary = SolveSummary {
        steps: traj.steps(),
        tau: traj.tau,
        t_final,
        snapshots,
        mass_defect: harness::mass_defect(&traj),
        max_resolvent_residual: traj.stats.iter().map(|s| s.residual).fold(0.0, f64::max),
        max_picard_ratio: traj.picard.iter().map(|c| c.max_ratio()).reduce(f64::max),
        exact_l1_error,
    };
    io::write_json(&dir.join("summary.json"), &summary)?;
    Ok(Outcome {
        failed: false,
        out_dir: dir,
    })
}

/// Batch settings for the property suites.
pub fn batch_spec(config: &RunConfig) -> Result<BatchSpec> {
    let mut spec = BatchSpec::new(
        config.model()?,
        config.grid()?,
        config.time.t_final,
        config.time.eps,
        config.verify.trials,
        config.seeds.base,
    );
    spec.opts = config.options();
    spec.bins = config.kinetic.bins;
    Ok(spec)
}

/// Runs the requested suites (all configured suites when `suite` is `None`).
pub fn run_verify(config: &RunConfig, suite: Option<&str>) -> Result<Vec<PropertyResult>> {
    let spec = batch_spec(config)?;
    let suites: Vec<String> = match suite {
        Some(s) => vec![s.to_string()],
        None => config.verify.suites.clone(),
    };
    let pool = harness::thread_pool()?;
    pool.install(|| {
        let mut results = Vec::new();
        for name in &suites {
            let spec = if name == "defect" {
                spec.with_model(
                    config.model_with(Some(config.model.k.unwrap_or(config.kinetic.k)))?,
                )
            } else {
                spec.clone()
            };
            results.extend(harness::run_suite(name, &spec)?);
        }
        Ok(results)
    })
}

pub fn cmd_verify(config: &RunConfig, suite: Option<&str>) -> Result<Outcome> {
    let dir = config.outputs.directory.clone();
    let results = run_verify(config, suite)?;
    io::write_atomic(
        &dir.join("verify.csv"),
        harness::results_csv(&results).as_bytes(),
    )?;
    io::write_atomic(
        &dir.join("verify.xml"),
        harness::results_junit(&results).as_bytes(),
    )?;
    for r in &results {
        println!(
            "{:<14} {} trials={} failures={} worst_slack={:e} budget={:e}",
            r.name,
            if r.passed() { "PASS" } else { "FAIL" },
            r.trials,
            r.failures,
            r.worst_slack,
            r.budget
        );
    }
    Ok(Outcome {
        failed: results.iter().any(|r| !r.passed()),
        out_dir: dir,
    })
}

/// Runs at `levels` successive refinements with `n` doubled and `ε` halved.
pub fn refinement_runs(config: &RunConfig) -> Result<Vec<Trajectory>> {
    let levels = config.regularity.levels;
    let pool = harness::thread_pool()?;
    pool.install(|| {
        (0..levels)
            .into_par_iter()
            .map(|level| {
                let mut c = config.clone();
                c.grid.n <<= level;
                let grid = c.grid()?;
                run_on(
                    &c,
                    &grid,
                    config.time.eps / (1u64 << level) as f64,
                    config.model.k,
                )
            })
            .collect()
    })
}

pub fn run_regularity(config: &RunConfig) -> Result<RegularityReport> {
    let runs = refinement_runs(config)?;
    let r = &config.regularity;
    exponent_scan(&runs, r.p, &r.sigma_t, &r.sigma_x).context("exponent scan")
}

pub fn cmd_regularity(config: &RunConfig) -> Result<Outcome> {
    let dir = config.outputs.directory.clone();
    let report = run_regularity(config)?;
    io::write_regularity(&dir, &report)?;
    println!("kappa_t = {}, kappa_x = {}", report.kappa_t, report.kappa_x);
    for e in &report.entries {
        println!(
            "sigma_t = {} sigma_x = {} {}",
            e.sigma_t,
            e.sigma_x,
            e.verdict.as_str()
        );
    }
    Ok(Outcome {
        failed: false,
        out_dir: dir,
    })
}

#[derive(Serialize)]
struct KineticSummary {
    k: u32,
    total_mass: f64,
    max_density: f64,
    bound: f64,
    residual_l1: f64,
    within_bounds: bool,
}

pub fn cmd_kinetic(config: &RunConfig) -> Result<Outcome> {
    let dir = config.outputs.directory.clone();
    let k = config.model.k.unwrap_or(config.kinetic.k);
    let grid = config.grid()?;
    let traj = run_on(config, &grid, config.time.eps, Some(k))?;
    let bins = VelocityBins::covering(
        &traj.model,
        traj.states.iter().flat_map(|s| s.values().iter().copied()),
        config.kinetic.bins,
    )
    .context("velocity bins")?;
    let sample = defect_measure(&traj, &bins).context("defect measure")?;
    let forcing: f64 = traj
        .forcing
        .iter()
        .map(|f| traj.tau * norm_lp(f, 1.0))
        .sum();
    let bound = norm_lp(&traj.states[0], 1.0) + forcing;
    io::write_kinetic(&dir, &sample, bound)?;

    let t_final = *traj.times.last().expect("nonempty trajectory");
    let tests = tensor_basket(&grid, t_final, bins.interval());
    let residuals = kinetic_residual(&traj, &sample, &tests).context("kinetic residual")?;
    let rows: Vec<_> = residuals
        .iter()
        .enumerate()
        .map(|(i, r)| (i, *r, grid.h(), traj.tau))
        .collect();
    io::write_atomic(
        &dir.join("residual.csv"),
        io::residual_csv(&rows).as_bytes(),
    )?;

    let within_bounds = harness::defect_slack(&traj, config.kinetic.bins)? >= 0.0;
    let summary = KineticSummary {
        k,
        total_mass: sample.total_mass(),
        max_density: sample.max_density(),
        bound,
        residual_l1: residuals.iter().map(|r| r.abs()).sum(),
        within_bounds,
    };
    io::write_json(&dir.join("kinetic_summary.json"), &summary)?;
    Ok(Outcome {
        failed: !within_bounds,
        out_dir: dir,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub eps: f64,
    pub k: Option<u32>,
    pub steps: usize,
    pub final_mass: f64,
    pub final_l1: f64,
    pub exact_l1_error: Option<f64>,
    pub directory: String,
}

fn sweep_points(config: &RunConfig) -> Vec<(usize, f64, Option<u32>)> {
    let s = &config.sweep;
    let ns = if s.n.is_empty() {
        vec![config.grid.n]
    } else {
        s.n.clone()
    };
    let epss = if s.eps.is_empty() {
        vec![config.time.eps]
    } else {
        s.eps.clone()
    };
    let ks: Vec<Option<u32>> = if s.k.is_empty() {
        vec![config.model.k]
    } else {
        s.k.iter().map(|k| Some(*k)).collect()
    };
    let mut out = Vec::new();
    for &n in &ns {
        for &eps in &epss {
            for &k in &ks {
                out.push((n, eps, k));
            }
        }
    }
    out
}

/// Solves every point of the parameter grid; each point writes its own
/// subdirectory.
pub fn run_sweep(config: &RunConfig) -> Result<Vec<SweepRow>> {
    let root = config.outputs.directory.clone();
    let pool = harness::thread_pool()?;
    pool.install(|| {
        sweep_points(config)
            .into_par_iter()
            .map(|(n, eps, k)| {
                let mut c = config.clone();
                c.grid.n = n;
                c.time.eps = eps;
                c.model.k = k;
                let name = match k {
                    Some(k) => format!("n{n}_eps{eps:e}_k{k}"),
                    None => format!("n{n}_eps{eps:e}"),
                };
                c.outputs.directory = root.join(&name);
                let grid = c.grid()?;
                let traj = run_on(&c, &grid, eps, k)?;
                io::write_trajectory(&c.outputs.directory, &traj, c.outputs.snapshot_stride)?;
                let t_final = *traj.times.last().expect("nonempty trajectory");
                let exact_l1_error = match c.exact_solution(&grid, t_final) {
                    Some(exact) => {
                        Some(norm_l1_diff(traj.final_state(), &exact).context("exact error")?)
                    }
                    None => None,
                };
                Ok(SweepRow {
                    n,
                    eps,
                    k,
                    steps: traj.steps(),
                    final_mass: porodyn_core::grid::integral(traj.final_state()),
                    final_l1: norm_lp(traj.final_state(), 1.0),
                    exact_l1_error,
                    directory: name,
                })
            })
            .collect()
    })
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("n,eps,k,steps,final_mass,final_l1,exact_l1_error,directory\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.16e},{},{},{:.16e},{:.16e},{},{}\n",
            r.n,
            r.eps,
            r.k.map_or(String::new(), |k| k.to_string()),
            r.steps,
            r.final_mass,
            r.final_l1,
            r.exact_l1_error
                .map_or(String::new(), |e| format!("{e:.16e}")),
            r.directory
        ));
    }
    out
}

pub fn cmd_sweep(config: &RunConfig) -> Result<Outcome> {
    let dir = config.outputs.directory.clone();
    let rows = run_sweep(config)?;
    io::write_atomic(&dir.join("sweep.csv"), sweep_csv(&rows).as_bytes())?;
    Ok(Outcome {
        failed: false,
        out_dir: dir,
    })
}
