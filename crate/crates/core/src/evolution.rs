//! Implicit Euler time stepping for `∂ₜu = Δφ(u) + f`.
//!
//! A run on `[0, T]` uses the uniform step `τ = T / ⌈T/ε⌉ ≤ ε`. Time-space
//! sources are sampled at interval midpoints. Lipschitz reactions `f(u)` are
//! resolved by Picard iteration on chunks of length at most `1/(2L)`, with the
//! forcing on each step evaluated at the average of its two end states.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::grid::{dirichlet_energy, norm_l1_diff, Field, Grid};
use crate::phi::{build_smooth_approx, PhiModel, SmoothApproxParams};
use crate::resolvent::{self, ResolventProblem, SolveStats};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type SpaceTimeFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// A Lipschitz reaction term `f` with `f(0) = 0` and constant `L`.
#[derive(Clone)]
pub struct Reaction {
    f: ScalarFn,
    lipschitz: f64,
}

impl Reaction {
    /// Validates `f(0) = 0` and `|f(z)| ≤ L|z|` on 2001 samples of the closure of
    /// the model interval (of `[−100, 100]` when it is unbounded).
    pub fn new<F>(f: F, lipschitz: f64, model: &PhiModel) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(Error::Config(alloc::format!(
                "Lipschitz constant must be finite and nonnegative (got {lipschitz})"
            )));
        }
        if f(0.0) != 0.0 {
            return Err(Error::Config("reaction must vanish at zero".into()));
        }
        let interval = model.interval();
        let (lo, hi) = if interval.is_bounded() {
            (interval.lo, interval.hi)
        } else {
            (-100.0, 100.0)
        };
        const SAMPLES: usize = 2001;
        for i in 0..SAMPLES {
            let z = lo + (hi - lo) * i as f64 / (SAMPLES - 1) as f64;
            let fz = f(z);
            if !fz.is_finite() || fz.abs() > lipschitz * z.abs() * (1.0 + 1e-12) + 1e-15 {
                return Err(Error::Config(alloc::format!(
                    "reaction violates |f(z)| <= L|z| at z = {z} (f = {fz}, L = {lipschitz})"
                )));
            }
        }
        Ok(Self {
            f: Arc::new(f),
            lipschitz,
        })
    }

    pub fn zero() -> Self {
        Self {
            f: Arc::new(|_| 0.0),
            lipschitz: 0.0,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn eval(&self, z: f64) -> f64 {
        (self.f)(z)
    }
}

impl fmt::Debug for Reaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Reaction")
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

#[derive(Clone)]
pub enum SourceSpec {
    None,
    /// `f(t, x)`, sampled at the midpoint of every step.
    TimeSpace(SpaceTimeFn),
    Reaction(Reaction),
}

impl SourceSpec {
    pub fn time_space<F>(f: F) -> Self
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        SourceSpec::TimeSpace(Arc::new(f))
    }
}

impl fmt::Debug for SourceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceSpec::None => f.write_str("None"),
            SourceSpec::TimeSpace(_) => f.write_str("TimeSpace(..)"),
            SourceSpec::Reaction(r) => r.fmt(f),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Resolvent residual tolerance in discrete `L¹`.
    pub tol: f64,
    pub max_iter: usize,
    /// Picard stopping threshold on `‖u^{(j+1)} − u^{(j)}‖_{C_t L¹}`.
    pub picard_tol: f64,
    pub picard_max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: resolvent::DEFAULT_TOL,
            max_iter: 200,
            picard_tol: 1e-10,
            picard_max_iter: 200,
        }
    }
}

/// Convergence record of the Picard iteration on one chunk of steps.
#[derive(Clone, Debug, PartialEq)]
pub struct PicardChunk {
    pub first_step: usize,
    pub steps: usize,
    pub iterations: usize,
    /// `d_{j+1}/d_j` for successive iterate differences that are resolved
    /// above the solver noise floor.
    pub ratios: Vec<f64>,
}

impl PicardChunk {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub grid: Grid,
    pub model: PhiModel,
    pub times: Vec<f64>,
    pub states: Vec<Field>,
    /// Forcing used on step `n`, i.e. on `(t_n, t_{n+1}]`.
    pub forcing: Vec<Field>,
    pub tau: f64,
    pub eps_certificate: f64,
    pub stats: Vec<SolveStats>,
    pub picard: Vec<PicardChunk>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn final_state(&self) -> &Field {
        self.states
            .last()
            .expect("trajectory has at least one state")
    }

    /// `max_n ‖u(t_n) − ũ(t_n)‖₁` over a shared time grid.
    pub fn ct_l1_distance(&self, other: &Trajectory) -> Result<f64> {
        if self.states.len() != other.states.len() {
            return Err(Error::Config(
                "trajectories have different step counts".into(),
            ));
        }
        let mut worst = 0.0_f64;
        for (a, b) in self.states.iter().zip(&other.states) {
            worst = worst.max(norm_l1_diff(a, b)?);
        }
        Ok(worst)
    }
}

/// Discrete free energy `h^d Σ Φ(uᵢ)`.
pub fn energy(model: &PhiModel, u: &Field) -> f64 {
    u.values().iter().map(|v| model.primitive(*v)).sum::<f64>() * u.grid().cell_volume()
}

/// Discrete Dirichlet energy of `φ(u)`.
pub fn dissipation(model: &PhiModel, u: &Field) -> f64 {
    dirichlet_energy(&u.map(|v| model.phi(v)))
}

/// Uniform step `T / ⌈T/ε⌉` and the step count.
pub fn uniform_step(t_final: f64, eps: f64) -> Result<(f64, usize)> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::Config(alloc::format!(
            "final time must be positive (got {t_final})"
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(alloc::format!(
            "epsilon must be positive (got {eps})"
        )));
    }
    let steps = libm::ceil(t_final / eps * (1.0 - 4.0 * f64::EPSILON)).max(1.0) as usize;
    Ok((t_final / steps as f64, steps))
}

/// One implicit Euler step `u − τΔ_hφ(u) = u_prev + τ·forcing`.
pub fn step_implicit(model: &PhiModel, u_prev: &Field, tau: f64, forcing: &Field) -> Result<Field> {
    step_with(
        model,
        u_prev,
        tau,
        forcing,
        u_prev,
        &SolverOptions::default(),
    )
    .map(|(u, _)| u)
}

fn step_with(
    model: &PhiModel,
    u_prev: &Field,
    tau: f64,
    forcing: &Field,
    guess: &Field,
    opts: &SolverOptions,
) -> Result<(Field, SolveStats)> {
    if !(tau > 0.0) {
        return Err(Error::Config(alloc::format!(
            "time step must be positive (got {tau})"
        )));
    }
    let rhs = u_prev.zip_map(forcing, |u, f| u + tau * f)?;
    let problem = ResolventProblem::new(model, tau, &rhs)
        .with_tol(opts.tol)
        .with_max_iter(opts.max_iter);
    let interval = model.interval();
    let init = guess.map(|v| interval.clamp_inside(v));
    resolvent::solve(&problem, &init)
}

fn check_initial(model: &PhiModel, u0: &Field) -> Result<()> {
    let interval = model.interval();
    for &v in u0.values() {
        if !(v >= interval.lo && v <= interval.hi) {
            return Err(Error::Domain {
                value: v,
                lo: interval.lo,
                hi: interval.hi,
            });
        }
    }
    Ok(())
}

/// Implicit Euler with a prescribed (or absent) time-space source.
pub fn solve_cauchy(
    model: &PhiModel,
    u0: &Field,
    src: &SourceSpec,
    t_final: f64,
    eps: f64,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    check_initial(model, u0)?;
    let (tau, steps) = uniform_step(t_final, eps)?;
    let grid = *u0.grid();
    let sampler = |t: f64| -> Result<Field> {
        match src {
            SourceSpec::None => Ok(Field::zeros(&grid)),
            SourceSpec::TimeSpace(f) => Ok(grid.sample(|x| f(t, x))),
            SourceSpec::Reaction(_) => Err(Error::Config(
                "reaction sources are handled by solve_with_reaction".into(),
            )),
        }
    };
    let mut traj = empty_trajectory(model, u0, tau, steps);
    for n in 0..steps {
        let t = n as f64 * tau;
        let forcing = sampler(t + 0.5 * tau)?;
        let prev = &traj.states[n];
        let (next, stats) = step_with(model, prev, tau, &forcing, prev, opts)?;
        traj.states.push(next);
        traj.forcing.push(forcing);
        traj.stats.push(stats);
        traj.times.push(if n + 1 == steps {
            t_final
        } else {
            (n + 1) as f64 * tau
        });
    }
    Ok(traj)
}

fn empty_trajectory(model: &PhiModel, u0: &Field, tau: f64, steps: usize) -> Trajectory {
    let mut states = Vec::with_capacity(steps + 1);
    states.push(u0.clone());
    let mut times = Vec::with_capacity(steps + 1);
    times.push(0.0);
    Trajectory {
        grid: *u0.grid(),
        model: model.clone(),
        times,
        states,
        forcing: Vec::with_capacity(steps),
        tau,
        eps_certificate: tau,
        stats: Vec::with_capacity(steps),
        picard: Vec::new(),
    }
}

/// Solves with the reaction `f(u)` by Picard iteration on chunks of length
/// at most `1/(2L)`. The step is refined below `1/(2L)` when `ε` exceeds it.
pub fn solve_with_reaction(
    model: &PhiModel,
    u0: &Field,
    reaction: &Reaction,
    t_final: f64,
    eps: f64,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    check_initial(model, u0)?;
    let lip = reaction.lipschitz();
    if lip == 0.0 {
        return solve_cauchy(model, u0, &SourceSpec::None, t_final, eps, opts);
    }
    let max_chunk = 0.5 / lip;
    let (tau, steps) = uniform_step(t_final, eps.min(max_chunk))?;
    let per_chunk = (libm::floor(max_chunk / tau * (1.0 + 4.0 * f64::EPSILON)) as usize).max(1);
    let noise_floor = 1e3 * opts.tol;

    let mut traj = empty_trajectory(model, u0, tau, steps);
    let mut first = 0;
    while first < steps {
        let count = per_chunk.min(steps - first);
        let start = traj.states[first].clone();
        let mut iterate: Vec<Field> = (0..=count).map(|_| start.clone()).collect();
        let mut forcing: Vec<Field> = Vec::new();
        let mut stats: Vec<SolveStats> = Vec::new();
        let mut ratios = Vec::new();
        let mut previous_gap: Option<f64> = None;
        let mut above = 0;
        let mut iterations = 0;
        loop {
            if iterations >= opts.picard_max_iter {
                return Err(Error::NoConvergence {
                    iterations,
                    residual: previous_gap.unwrap_or(f64::NAN),
                });
            }
            iterations += 1;
            let mut next: Vec<Field> = Vec::with_capacity(count + 1);
            next.push(start.clone());
            forcing.clear();
            stats.clear();
            for m in 0..count {
                let f = iterate[m].zip_map(&iterate[m + 1], |a, b| reaction.eval(0.5 * (a + b)))?;
                let (u, s) = step_with(model, &next[m], tau, &f, &iterate[m + 1], opts)?;
                next.push(u);
                forcing.push(f);
                stats.push(s);
            }
            let mut gap = 0.0_f64;
            for (a, b) in next.iter().zip(&iterate) {
                gap = gap.max(norm_l1_diff(a, b)?);
            }
            iterate = next;
            if let Some(prev) = previous_gap {
                if prev > noise_floor {
                    let ratio = gap / prev;
                    ratios.push(ratio);
                    above = if ratio > 0.9 { above + 1 } else { 0 };
                    if above >= 3 {
                        return Err(Error::PicardDivergence {
                            chunk: traj.picard.len(),
                            ratio,
                        });
                    }
                }
            }
            previous_gap = Some(gap);
            if gap <= opts.picard_tol {
                break;
            }
        }
        // the latest forcing was built from the previous iterate; refresh it
        // so that the stored forcing matches the stored states exactly
        for m in 0..count {
            forcing[m] =
                iterate[m].zip_map(&iterate[m + 1], |a, b| reaction.eval(0.5 * (a + b)))?;
        }
        for (m, (state, f)) in iterate.into_iter().skip(1).zip(forcing).enumerate() {
            let n = first + m + 1;
            traj.states.push(state);
            traj.forcing.push(f);
            traj.times
                .push(if n == steps { t_final } else { n as f64 * tau });
        }
        traj.stats.extend(stats);
        traj.picard.push(PicardChunk {
            first_step: first,
            steps: count,
            iterations,
            ratios,
        });
        first += count;
    }
    Ok(traj)
}

/// Dispatches on the source kind.
pub fn solve(
    model: &PhiModel,
    u0: &Field,
    src: &SourceSpec,
    t_final: f64,
    eps: f64,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    match src {
        SourceSpec::Reaction(r) => solve_with_reaction(model, u0, r, t_final, eps, opts),
        other => solve_cauchy(model, u0, other, t_final, eps, opts),
    }
}

/// Errors `max_n ‖u_k(t_n) − u(t_n)‖₁` of the runs with the smooth
/// approximations `φ_k` against the run with `φ` itself.
pub fn trotter_kato_sweep(
    model: &PhiModel,
    ks: &[u32],
    u0: &Field,
    src: &SourceSpec,
    t_final: f64,
    eps: f64,
    opts: &SolverOptions,
) -> Result<Vec<(u32, f64)>> {
    let reference = solve(model, u0, src, t_final, eps, opts)?;
    ks.iter()
        .map(|&k| {
            let approx = build_smooth_approx(model, &SmoothApproxParams::standard(model, k))?;
            let run = solve(&approx, u0, src, t_final, eps, opts)?;
            Ok((k, run.ct_l1_distance(&reference)?))
        })
        .collect()
}
