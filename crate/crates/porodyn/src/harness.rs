//! Randomized property suites.
//!
//! Each suite draws a batch of problems from a seeded generator, solves them
//! concurrently and records the smallest margin `rhs − lhs` of the inequality
//! it checks. A trial fails when its margin drops below `−budget`.

use std::fmt::Write as _;

use porodyn_core::evolution::{
    self, solve_cauchy, solve_with_reaction, Reaction, SolverOptions, SourceSpec, Trajectory,
};
use porodyn_core::grid::{integral, norm_l1_diff, norm_l1_positive_part, norm_lp};
use porodyn_core::kinetic::{
    chi_distance, defect_measure, velocity_average, VelocityBins, DEFAULT_BINS,
};
use porodyn_core::{BoundaryCondition, Field, Grid, PhiModel};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{CliError, Context, Result};

/// Clipping bound for generated initial data.
pub const AMPLITUDE: f64 = 0.9;
pub const POSITIVITY_BUDGET: f64 = 1e-10;
pub const RANGE_MARGIN: f64 = 1e-12;
pub const ISOMETRY_BUDGET: f64 = 1e-14;
pub const DEFECT_TOTAL_SLACK: f64 = 0.05;
pub const DEFECT_DENSITY_SLACK: f64 = 0.10;

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyResult {
    pub name: String,
    pub trials: usize,
    pub failures: usize,
    /// Most negative margin `rhs − lhs` over all trials.
    pub worst_slack: f64,
    pub budget: f64,
    pub seeds: Vec<u64>,
}

impl PropertyResult {
    /// Builds a result from the worst margin of every trial.
    pub fn from_slacks(name: &str, budget: f64, seeds: Vec<u64>, slacks: &[f64]) -> Self {
        let failures = slacks.iter().filter(|s| !(**s >= -budget)).count();
        let worst_slack =
            slacks
                .iter()
                .copied()
                .fold(f64::INFINITY, |a, b| if b.is_nan() { b } else { a.min(b) });
        Self {
            name: name.to_string(),
            trials: slacks.len(),
            failures,
            worst_slack,
            budget,
            seeds,
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Random problem data on a fixed grid.
#[derive(Clone, Copy, Debug)]
pub struct ProblemGenerator {
    grid: Grid,
    positive: bool,
}

impl ProblemGenerator {
    pub fn new(grid: Grid, positive: bool) -> Self {
        Self { grid, positive }
    }

    fn bumps(&self, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Field {
        let d = self.grid.dim();
        let l = self.grid.half_width();
        let count = rng.random_range(1..=4);
        let bumps: Vec<(f64, [f64; 3], f64)> = (0..count)
            .map(|_| {
                let amp = rng.random_range(lo..=hi);
                let mut center = [0.0; 3];
                for c in center.iter_mut().take(d) {
                    *c = rng.random_range(-l..l);
                }
                let width = rng.random_range(0.1 * l..0.4 * l);
                (amp, center, width)
            })
            .collect();
        let periodic = self.grid.bc() == BoundaryCondition::Periodic;
        self.grid.sample(|x| {
            bumps
                .iter()
                .map(|(amp, c, w)| {
                    let r2: f64 = x
                        .iter()
                        .zip(c)
                        .map(|(xi, ci)| {
                            let mut dx = xi - ci;
                            if periodic {
                                dx -= 2.0 * l * (dx / (2.0 * l)).round();
                            }
                            dx * dx
                        })
                        .sum();
                    amp * (-r2 / (w * w)).exp()
                })
                .sum()
        })
    }

    /// Clipped sum of one to four Gaussian bumps with amplitudes in
    /// `[−0.9, 0.9]`, or `[0, 0.9]` for a positive generator.
    pub fn initial(&self, rng: &mut ChaCha8Rng) -> Field {
        let lo = if self.positive { 0.0 } else { -AMPLITUDE };
        self.bumps(rng, lo, AMPLITUDE)
            .map(|v| v.clamp(lo, AMPLITUDE))
    }

    /// Time-independent bump sum scaled to `‖f‖₁ = l1`.
    pub fn forcing(&self, rng: &mut ChaCha8Rng, l1: f64) -> Field {
        let lo = if self.positive { 0.0 } else { -1.0 };
        let raw = self.bumps(rng, lo, 1.0);
        let norm = norm_lp(&raw, 1.0);
        if norm == 0.0 {
            return raw;
        }
        raw.map(|v| v * l1 / norm)
    }

    /// Forcing with `‖f‖₁` drawn uniformly from `(0, 1]`.
    pub fn random_forcing(&self, rng: &mut ChaCha8Rng) -> Field {
        let l1 = 1.0 - rng.random::<f64>();
        self.forcing(rng, l1)
    }

    /// Nonnegative bump sum with `‖·‖₁` drawn uniformly from `(0, 1]`.
    pub fn random_nonnegative(&self, rng: &mut ChaCha8Rng) -> Field {
        ProblemGenerator {
            positive: true,
            ..*self
        }
        .random_forcing(rng)
    }
}

/// Flat index of the cell containing `x`.
pub fn cell_of(grid: &Grid, x: &[f64]) -> usize {
    let n = grid.n();
    x.iter()
        .enumerate()
        .map(|(axis, xi)| {
            let i = ((xi + grid.half_width()) / grid.h()).floor();
            (i.max(0.0) as usize).min(n - 1) * grid.stride(axis)
        })
        .sum()
}

/// A time-independent source that returns the value of `field` in the cell
/// containing each sample point.
pub fn frozen_source(field: Field) -> SourceSpec {
    SourceSpec::time_space(move |_, x| field.values()[cell_of(field.grid(), x)])
}

/// Shared settings of one property batch.
#[derive(Clone, Debug)]
pub struct BatchSpec {
    pub model: PhiModel,
    pub grid: Grid,
    pub t_final: f64,
    pub eps: f64,
    pub opts: SolverOptions,
    pub trials: usize,
    pub seed: u64,
    pub bins: usize,
}

impl BatchSpec {
    pub fn new(
        model: PhiModel,
        grid: Grid,
        t_final: f64,
        eps: f64,
        trials: usize,
        seed: u64,
    ) -> Self {
        Self {
            model,
            grid,
            t_final,
            eps,
            opts: SolverOptions::default(),
            trials,
            seed,
            bins: DEFAULT_BINS,
        }
    }

    pub fn with_model(&self, model: PhiModel) -> Self {
        Self {
            model,
            ..self.clone()
        }
    }

    /// Per-trial seeds, derived from the base seed and the suite name.
    pub fn seeds(&self, suite: &str) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(suite));
        (0..self.trials).map(|_| rng.next_u64()).collect()
    }

    pub fn steps(&self) -> Result<usize> {
        Ok(evolution::uniform_step(self.t_final, self.eps)
            .context("time step")?
            .1)
    }

    fn generator(&self, positive: bool) -> ProblemGenerator {
        ProblemGenerator::new(self.grid, positive)
    }

    fn run(&self, u0: &Field, f: &Field) -> Result<Trajectory> {
        solve_cauchy(
            &self.model,
            u0,
            &frozen_source(f.clone()),
            self.t_final,
            self.eps,
            &self.opts,
        )
        .context("trial run")
    }

    fn run_reaction(&self, u0: &Field, r: &Reaction) -> Result<Trajectory> {
        solve_with_reaction(&self.model, u0, r, self.t_final, self.eps, &self.opts)
            .context("trial run")
    }

    fn budget(&self) -> Result<f64> {
        Ok(100.0 * self.opts.tol * self.grid.cells() as f64 * self.steps()? as f64)
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn par_trials<F>(seeds: &[u64], f: F) -> Result<Vec<f64>>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    seeds
        .par_iter()
        .map(|s| f(&mut ChaCha8Rng::seed_from_u64(*s)))
        .collect()
}

fn forcing_l1(traj: &Trajectory) -> f64 {
    traj.forcing
        .iter()
        .map(|f| traj.tau * norm_lp(f, 1.0))
        .sum()
}

/// `max_n ‖u(t_n) − ũ(t_n)‖₁ ≤ ‖u₀ − ũ₀‖₁ + Σ τ‖fⁿ − f̃ⁿ‖₁`, checked at every `t_n`.
pub fn contraction_slack(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    pair_slack(a, b, norm_l1_diff)
}

/// `‖(u(t_n) − ũ(t_n))₊‖₁ ≤ ‖(u₀ − ũ₀)₊‖₁ + Σ τ‖(fⁿ − f̃ⁿ)₊‖₁`.
pub fn comparison_slack(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    pair_slack(a, b, norm_l1_positive_part)
}

fn pair_slack<N>(a: &Trajectory, b: &Trajectory, norm: N) -> Result<f64>
where
    N: Fn(&Field, &Field) -> porodyn_core::Result<f64>,
{
    if a.steps() != b.steps() || a.tau != b.tau {
        return Err(CliError::Format(
            "paired runs must share the time grid".into(),
        ));
    }
    let mut rhs = norm(&a.states[0], &b.states[0]).context("pair norm")?;
    let mut worst = f64::INFINITY;
    for n in 0..a.steps() {
        rhs += a.tau * norm(&a.forcing[n], &b.forcing[n]).context("pair norm")?;
        let lhs = norm(&a.states[n + 1], &b.states[n + 1]).context("pair norm")?;
        worst = worst.min(rhs - lhs);
    }
    Ok(worst)
}

pub fn check_contraction(spec: &BatchSpec) -> Result<PropertyResult> {
    let seeds = spec.seeds("contraction");
    let gen = spec.generator(false);
    let slacks = par_trials(&seeds, |rng| {
        let (u0, v0) = (gen.initial(rng), gen.initial(rng));
        let (f, g) = (gen.random_forcing(rng), gen.random_forcing(rng));
        contraction_slack(&spec.run(&u0, &f)?, &spec.run(&v0, &g)?)
    })?;
    Ok(PropertyResult::from_slacks(
        "contraction",
        spec.budget()?,
        seeds,
        &slacks,
    ))
}

/// The positive-part inequality in both directions for a random pair, and
/// `(u − ũ)₊ = 0` for an ordered pair `u₀ ≤ ũ₀`, `f ≤ f̃`.
pub fn check_comparison(spec: &BatchSpec) -> Result<PropertyResult> {
    let seeds = spec.seeds("comparison");
    let gen = spec.generator(false);
    let slacks = par_trials(&seeds, |rng| {
        let (u0, v0) = (gen.initial(rng), gen.initial(rng));
        let (f, g) = (gen.random_forcing(rng), gen.random_forcing(rng));
        let (a, b) = (spec.run(&u0, &f)?, spec.run(&v0, &g)?);
        let general = comparison_slack(&a, &b)?.min(comparison_slack(&b, &a)?);

        let lift = gen.random_nonnegative(rng);
        let w0 = u0
            .zip_map(&lift, |u, l| (u + l).min(AMPLITUDE.max(u)))
            .context("ordered data")?;
        let extra = gen.random_nonnegative(rng);
        let fw = f.zip_map(&extra, |x, y| x + y).context("ordered data")?;
        let c = spec.run(&w0, &fw)?;
        let mut ordered = f64::INFINITY;
        for (x, y) in a.states.iter().zip(&c.states) {
            ordered = ordered.min(-norm_l1_positive_part(x, y).context("ordered pair")?);
        }
        Ok(general.min(ordered))
    })?;
    Ok(PropertyResult::from_slacks(
        "comparison",
        spec.budget()?,
        seeds,
        &slacks,
    ))
}

/// Reactions `f(u) = r sin u` and `f̃ = f + s(1 − cos u) ≥ f`:
/// `‖(u − ũ)₊(t)‖₁ ≤ e^{Lt}(‖(u₀ − ũ₀)₊‖₁ + ∫‖(f(u) − f̃(u))₊‖₁)`.
pub fn check_gronwall(spec: &BatchSpec) -> Result<PropertyResult> {
    let seeds = spec.seeds("gronwall");
    let gen = spec.generator(false);
    let slacks = par_trials(&seeds, |rng| {
        let (u0, v0) = (gen.initial(rng), gen.initial(rng));
        let r: f64 = rng.random_range(0.0..1.0);
        let s: f64 = rng.random_range(0.0..1.0);
        let lower = move |u: f64| r * u.sin();
        let upper = move |u: f64| r * u.sin() + s * (1.0 - u.cos());
        let f = Reaction::new(lower, r, &spec.model).context("reaction")?;
        let g = Reaction::new(upper, r + s, &spec.model).context("reaction")?;
        let (a, b) = (spec.run_reaction(&u0, &f)?, spec.run_reaction(&v0, &g)?);
        if a.steps() != b.steps() {
            return Err(CliError::Format(
                "paired runs must share the time grid".into(),
            ));
        }
        let lip = r + s;
        let h = a.grid.cell_volume();
        let mut source = 0.0;
        let mut worst = f64::INFINITY;
        let initial = norm_l1_positive_part(&u0, &v0).context("gronwall")?;
        for n in 0..a.steps() {
            let (x, y) = (a.states[n].values(), a.states[n + 1].values());
            source += a.tau
                * h
                * x.iter()
                    .zip(y)
                    .map(|(p, q)| (lower(0.5 * (p + q)) - upper(0.5 * (p + q))).max(0.0))
                    .sum::<f64>();
            let t = a.times[n + 1];
            let lhs =
                norm_l1_positive_part(&a.states[n + 1], &b.states[n + 1]).context("gronwall")?;
            worst = worst.min((lip * t).exp() * (initial + source) - lhs);
        }
        Ok(worst)
    })?;
    Ok(PropertyResult::from_slacks(
        "gronwall",
        spec.budget()?,
        seeds,
        &slacks,
    ))
}

/// Positivity from nonnegative data under a reaction with `f(0) = 0`, and
/// the strict range `(−1, 1)` with margin for bounded intervals.
pub fn check_positivity_and_range(spec: &BatchSpec) -> Result<(PropertyResult, PropertyResult)> {
    let seeds = spec.seeds("positivity");
    let positive = spec.generator(true);
    let signed = spec.generator(false);
    let interval = spec.model.interval();
    let range_slack = |traj: &Trajectory| -> f64 {
        if !interval.is_bounded() {
            return f64::INFINITY;
        }
        traj.states
            .iter()
            .flat_map(|s| s.values())
            .map(|v| (interval.hi - v).min(v - interval.lo) - RANGE_MARGIN)
            .fold(f64::INFINITY, f64::min)
    };
    let pairs: Vec<(f64, f64)> = seeds
        .par_iter()
        .map(|seed| {
            let rng = &mut ChaCha8Rng::seed_from_u64(*seed);
            let rate: f64 = rng.random_range(0.0..1.0);
            let reaction = if interval.is_bounded() {
                Reaction::new(move |u| rate * u * (1.0 - u), 2.0 * rate, &spec.model)
            } else {
                Reaction::new(move |u| rate * u.sin(), rate, &spec.model)
            }
            .context("reaction")?;
            let a = spec.run_reaction(&positive.initial(rng), &reaction)?;
            let min = a
                .states
                .iter()
                .map(Field::min)
                .fold(f64::INFINITY, f64::min);
            let u0 = signed.initial(rng);
            let f = signed.random_forcing(rng);
            let b = spec.run(&u0, &f)?;
            Ok((min, range_slack(&a).min(range_slack(&b))))
        })
        .collect::<Result<_>>()?;
    let (pos, range): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok((
        PropertyResult::from_slacks("positivity", POSITIVITY_BUDGET, seeds.clone(), &pos),
        PropertyResult::from_slacks("range", 0.0, seeds, &range),
    ))
}

/// Per-step margins of
/// `E(uⁿ⁺¹) − E(uⁿ) ≤ τ h^d Σ fⁿ φ(uⁿ⁺¹) − τ ‖∇_h φ(uⁿ⁺¹)‖₂²`, with
/// `E = h^d Σ Φ(u)`.
pub fn energy_slacks(traj: &Trajectory) -> Vec<f64> {
    let model = &traj.model;
    let h = traj.grid.cell_volume();
    let energies: Vec<f64> = traj
        .states
        .iter()
        .map(|u| evolution::energy(model, u))
        .collect();
    (0..traj.steps())
        .map(|n| {
            let next = &traj.states[n + 1];
            let work: f64 = h * traj.forcing[n]
                .values()
                .iter()
                .zip(next.values())
                .map(|(f, u)| f * model.phi(*u))
                .sum::<f64>();
            let rhs = traj.tau * work - traj.tau * evolution::dissipation(model, next);
            rhs - (energies[n + 1] - energies[n])
        })
        .collect()
}

/// Worst dissipation margin of one trajectory; source-free runs also need
/// `E(uⁿ⁺¹) ≤ E(uⁿ)`.
pub fn check_energy_trajectory(traj: &Trajectory) -> f64 {
    let mut worst = energy_slacks(traj)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if traj
        .forcing
        .iter()
        .all(|f| f.values().iter().all(|v| *v == 0.0))
    {
        for w in traj.states.windows(2) {
            worst = worst
                .min(evolution::energy(&traj.model, &w[0]) - evolution::energy(&traj.model, &w[1]));
        }
    }
    worst
}

/// Energy dissipation on random runs, source-free when `forced` is false.
pub fn check_energy(spec: &BatchSpec, forced: bool) -> Result<PropertyResult> {
    let name = if forced { "energy_forced" } else { "energy" };
    let seeds = spec.seeds(name);
    let gen = spec.generator(false);
    let slacks = par_trials(&seeds, |rng| {
        let u0 = gen.initial(rng);
        let f = if forced {
            gen.random_forcing(rng)
        } else {
            Field::zeros(&spec.grid)
        };
        Ok(check_energy_trajectory(&spec.run(&u0, &f)?))
    })?;
    Ok(PropertyResult::from_slacks(
        name,
        100.0 * spec.opts.tol,
        seeds,
        &slacks,
    ))
}

/// The `χ`-isometry and averaging with `H = id` on random fields.
pub fn check_chi_suite(spec: &BatchSpec) -> Result<PropertyResult> {
    let seeds = spec.seeds("chi");
    let gen = spec.generator(false);
    let slacks = par_trials(&seeds, |rng| {
        let (u, w) = (gen.initial(rng), gen.initial(rng));
        let iso = chi_distance(&u, &w).context("chi distance")?
            - norm_l1_diff(&u, &w).context("chi distance")?;
        let bins = VelocityBins::covering(
            &spec.model,
            u.values().iter().chain(w.values()).copied(),
            spec.bins,
        )
        .context("velocity bins")?;
        let mut worst = iso.abs();
        for field in [&u, &w] {
            let avg = velocity_average(field, |_| 1.0, &bins).context("velocity average")?;
            for (a, b) in avg.values().iter().zip(field.values()) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok(-worst)
    })?;
    Ok(PropertyResult::from_slacks(
        "chi",
        ISOMETRY_BUDGET,
        seeds,
        &slacks,
    ))
}

/// Defect total mass within 5% and peak density within 10% of
/// `‖u₀‖₁ + ‖f‖_{L¹(L¹)}`. The batch model must be a smooth profile.
pub fn check_defect_suite(spec: &BatchSpec) -> Result<PropertyResult> {
    let seeds = spec.seeds("defect");
    let gen = spec.generator(false);
    let slacks = par_trials(&seeds, |rng| {
        let u0 = gen.initial(rng);
        let f = gen.random_forcing(rng);
        let traj = spec.run(&u0, &f)?;
        defect_slack(&traj, spec.bins)
    })?;
    Ok(PropertyResult::from_slacks("defect", 0.0, seeds, &slacks))
}

/// Worst relative margin of the two defect bounds for one trajectory.
pub fn defect_slack(traj: &Trajectory, bins: usize) -> Result<f64> {
    let bins = VelocityBins::covering(
        &traj.model,
        traj.states.iter().flat_map(|s| s.values().iter().copied()),
        bins,
    )
    .context("velocity bins")?;
    let sample = defect_measure(traj, &bins).context("defect measure")?;
    let bound = norm_lp(&traj.states[0], 1.0) + forcing_l1(traj);
    let total = (1.0 + DEFECT_TOTAL_SLACK) * bound - sample.total_mass();
    let density = (1.0 + DEFECT_DENSITY_SLACK) * bound - sample.max_density();
    Ok(total.min(density))
}

/// Runs one named suite. `positivity` and `range` come from the same batch.
pub fn run_suite(name: &str, spec: &BatchSpec) -> Result<Vec<PropertyResult>> {
    Ok(match name {
        "contraction" => vec![check_contraction(spec)?],
        "comparison" => vec![check_comparison(spec)?],
        "gronwall" => vec![check_gronwall(spec)?],
        "positivity" => vec![check_positivity_and_range(spec)?.0],
        "range" => vec![check_positivity_and_range(spec)?.1],
        "energy" => vec![check_energy(spec, false)?, check_energy(spec, true)?],
        "chi" => vec![check_chi_suite(spec)?],
        "defect" => vec![check_defect_suite(spec)?],
        other => return Err(CliError::Format(format!("unknown suite {other:?}"))),
    })
}

/// Worker pool honoring `PORODYN_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var("PORODYN_THREADS") {
        let threads: usize = value.trim().parse().map_err(|_| {
            CliError::Format(format!(
                "PORODYN_THREADS must be a positive integer (got {value:?})"
            ))
        })?;
        builder = builder.num_threads(threads.max(1));
    }
    builder
        .build()
        .map_err(|e| CliError::Format(format!("thread pool: {e}")))
}

/// Mass balance `∫u(T) − ∫u₀ − Σ τ∫fⁿ`, relative to the largest term.
pub fn mass_defect(traj: &Trajectory) -> f64 {
    let start = integral(&traj.states[0]);
    let end = integral(traj.final_state());
    let source: f64 = traj.forcing.iter().map(|f| traj.tau * integral(f)).sum();
    (end - start - source).abs() / start.abs().max(end.abs()).max(source.abs()).max(1.0)
}

pub fn results_csv(results: &[PropertyResult]) -> String {
    let mut out = String::from("name,trials,failures,worst_slack,budget,seeds\n");
    for r in results {
        let seeds: Vec<String> = r.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(
            out,
            "{},{},{},{:.16e},{:.16e},{}",
            r.name,
            r.trials,
            r.failures,
            r.worst_slack,
            r.budget,
            seeds.join(";")
        );
    }
    out
}

pub fn results_junit(results: &[PropertyResult]) -> String {
    let failures = results.iter().filter(|r| !r.passed()).count();
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<testsuite name=\"porodyn\" tests=\"{}\" failures=\"{failures}\">",
        results.len()
    );
    for r in results {
        let _ = write!(
            out,
            "  <testcase classname=\"porodyn.properties\" name=\"{}\"",
            xml_escape(&r.name)
        );
        if r.passed() {
            out.push_str("/>\n");
        } else {
            let _ = writeln!(
                out,
                ">\n    <failure message=\"{} of {} trials below budget {:e}; worst slack {:e}\"/>\n  </testcase>",
                r.failures, r.trials, r.budget, r.worst_slack
            );
        }
    }
    out.push_str("</testsuite>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
