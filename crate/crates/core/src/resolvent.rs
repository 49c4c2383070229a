//! The implicit Euler step `u − λΔ_h φ(u) = g`, i.e. the resolvent
//! `(I + λA_φ)⁻¹ g`, solved three independent ways:
//!
//! * nonlinear Gauss-Seidel with a bracketed scalar solve per cell,
//! * damped Newton on `F(u) = u − λΔ_hφ(u) − g`,
//! * accelerated gradient descent on `J(u) = ‖u − g‖²_{Ḣ⁻¹}/(2λ) + h^d ΣΦ(uᵢ)`.
//!
//! All three stop on the discrete `L¹` norm of `F`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{hminus1_inner, laplacian_into, BoundaryCondition, Field, Grid};
use crate::phi::PhiModel;
use crate::quad::GaussLegendre;

pub const DEFAULT_TOL: f64 = 1e-11;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Cellwise,
    Newton,
    ProxHMinus1,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub method: Method,
    pub iterations: usize,
    /// Final `‖u − λΔ_hφ(u) − g‖₁`.
    pub residual: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct ResolventProblem<'a> {
    pub model: &'a PhiModel,
    pub lambda: f64,
    pub rhs: &'a Field,
    pub tol: f64,
    pub max_iter: usize,
}

impl<'a> ResolventProblem<'a> {
    pub fn new(model: &'a PhiModel, lambda: f64, rhs: &'a Field) -> Self {
        Self {
            model,
            lambda,
            rhs,
            tol: DEFAULT_TOL,
            max_iter: 200,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(alloc::format!(
                "lambda must be positive (got {})",
                self.lambda
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if self.rhs.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("right-hand side must be finite".into()));
        }
        Ok(())
    }
}

/// Writes `F(u) = u − λΔ_hφ(u) − g` into `out` and returns `‖F‖₁`.
fn residual_into(
    model: &PhiModel,
    grid: &Grid,
    lambda: f64,
    u: &[f64],
    g: &[f64],
    phi_buf: &mut [f64],
    out: &mut [f64],
) -> f64 {
    for (p, x) in phi_buf.iter_mut().zip(u) {
        *p = model.phi(*x);
    }
    laplacian_into(grid, phi_buf, out);
    let mut acc = 0.0;
    for i in 0..u.len() {
        let r = u[i] - lambda * out[i] - g[i];
        out[i] = r;
        acc += r.abs();
    }
    acc * grid.cell_volume()
}

/// `‖u − λΔ_hφ(u) − g‖₁`.
pub fn residual_l1(model: &PhiModel, lambda: f64, u: &Field, g: &Field) -> Result<f64> {
    u.same_grid(g)?;
    let n = u.values().len();
    let mut phi_buf = alloc::vec![0.0; n];
    let mut out = alloc::vec![0.0; n];
    Ok(residual_into(
        model,
        u.grid(),
        lambda,
        u.values(),
        g.values(),
        &mut phi_buf,
        &mut out,
    ))
}

/// Root of the strictly increasing `x ↦ x + c φ(x) − rhs`.
fn solve_cell(model: &PhiModel, c: f64, rhs: f64, guess: f64) -> f64 {
    let f = |x: f64| x + c * model.phi(x) - rhs;
    let interval = model.interval();
    let (mut lo, mut hi) = interval.safe_bounds();
    if interval.is_bounded() {
        if f(lo) >= 0.0 {
            return lo;
        }
        if f(hi) <= 0.0 {
            return hi;
        }
    } else {
        let mut width = rhs.abs().max(1.0);
        lo = -width;
        hi = width;
        while f(lo) > 0.0 || f(hi) < 0.0 {
            width *= 2.0;
            lo = -width;
            hi = width;
        }
    }
    let mut x = if guess > lo && guess < hi {
        guess
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = 1.0 + c * model.diffusivity(x);
        let mut next = x - fx / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let scale = next.abs().max(1e-300);
        if (next - x).abs() <= 2.0 * f64::EPSILON * scale || hi - lo <= 4.0 * f64::EPSILON * scale {
            return next;
        }
        x = next;
    }
    x
}

/// Nonlinear Gauss-Seidel with symmetric (forward then backward) sweeps.
/// `max_iter` counts sweep pairs.
pub fn solve_cellwise_monotone(p: &ResolventProblem<'_>) -> Result<(Field, SolveStats)> {
    p.validate()?;
    let grid = *p.rhs.grid();
    let g = p.rhs.values();
    let n = g.len();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let interval = p.model.interval();
    let mut u: Vec<f64> = g.iter().map(|v| interval.clamp_inside(*v)).collect();
    let mut phi_u: Vec<f64> = u.iter().map(|v| p.model.phi(*v)).collect();
    let counts: Vec<f64> = (0..n).map(|i| grid.neighbor_count(i) as f64).collect();
    let mut phi_buf = alloc::vec![0.0; n];
    let mut res = alloc::vec![0.0; n];
    let mut residual = residual_into(p.model, &grid, p.lambda, &u, g, &mut phi_buf, &mut res);
    let relax = |i: usize, u: &mut [f64], phi_u: &mut [f64]| {
        let mut nbr = 0.0;
        for axis in 0..grid.dim() {
            for forward in [true, false] {
                if let Some(j) = grid.neighbor(i, axis, forward) {
                    nbr += phi_u[j];
                }
            }
        }
        let c = p.lambda * counts[i] * inv_h2;
        let rhs = g[i] + p.lambda * inv_h2 * nbr;
        u[i] = solve_cell(p.model, c, rhs, u[i]);
        phi_u[i] = p.model.phi(u[i]);
    };
    let mut iterations = 0;
    while residual > p.tol {
        if iterations >= p.max_iter {
            return Err(Error::NoConvergence {
                iterations,
                residual,
            });
        }
        for i in 0..n {
            relax(i, &mut u, &mut phi_u);
        }
        for i in (0..n).rev() {
            relax(i, &mut u, &mut phi_u);
        }
        iterations += 1;
        residual = residual_into(p.model, &grid, p.lambda, &u, g, &mut phi_buf, &mut res);
    }
    let stats = SolveStats {
        method: Method::Cellwise,
        iterations,
        residual,
    };
    Ok((Field::from_values(&grid, u)?, stats))
}

/// Applies `J v = v − λΔ_h(D ⊙ v)`.
fn apply_jacobian(
    grid: &Grid,
    lambda: f64,
    d: &[f64],
    v: &[f64],
    scratch: &mut [f64],
    out: &mut [f64],
) {
    for i in 0..v.len() {
        scratch[i] = d[i] * v[i];
    }
    laplacian_into(grid, scratch, out);
    for i in 0..v.len() {
        out[i] = v[i] - lambda * out[i];
    }
}

/// Thomas algorithm: `lower[i] x[i−1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]`.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64], x: &mut [f64]) {
    let n = diag.len();
    let mut c = alloc::vec![0.0; n];
    let mut d = alloc::vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = if i + 1 < n { upper[i] / m } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
}

/// Periodic tridiagonal system (corner entries `lower[0]`, `upper[n−1]`) via Sherman-Morrison.
fn cyclic_thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64], x: &mut [f64]) {
    let n = diag.len();
    let alpha = upper[n - 1];
    let beta = lower[0];
    if alpha == 0.0 && beta == 0.0 {
        thomas(lower, diag, upper, rhs, x);
        return;
    }
    let gamma = -diag[0];
    let mut bb = diag.to_vec();
    bb[0] = diag[0] - gamma;
    bb[n - 1] = diag[n - 1] - alpha * beta / gamma;
    thomas(lower, &bb, upper, rhs, x);
    let mut uvec = alloc::vec![0.0; n];
    uvec[0] = gamma;
    uvec[n - 1] = alpha;
    let mut z = alloc::vec![0.0; n];
    thomas(lower, &bb, upper, &uvec, &mut z);
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    for i in 0..n {
        x[i] -= fact * z[i];
    }
}

/// Solves `J δ = rhs` exactly in 1d and by Jacobi-preconditioned BiCGSTAB otherwise.
fn solve_linearized(grid: &Grid, lambda: f64, d: &[f64], rhs: &[f64], x: &mut [f64]) {
    let n = rhs.len();
    if grid.dim() == 1 {
        let k = lambda / (grid.h() * grid.h());
        let periodic = grid.bc() == BoundaryCondition::Periodic;
        let mut lower = alloc::vec![0.0; n];
        let mut diag = alloc::vec![0.0; n];
        let mut upper = alloc::vec![0.0; n];
        for i in 0..n {
            let left = if i > 0 {
                Some(i - 1)
            } else if periodic {
                Some(n - 1)
            } else {
                None
            };
            let right = if i + 1 < n {
                Some(i + 1)
            } else if periodic {
                Some(0)
            } else {
                None
            };
            let count = usize::from(left.is_some()) + usize::from(right.is_some());
            diag[i] = 1.0 + k * count as f64 * d[i];
            lower[i] = left.map_or(0.0, |j| -k * d[j]);
            upper[i] = right.map_or(0.0, |j| -k * d[j]);
        }
        if periodic {
            cyclic_thomas(&lower, &diag, &upper, rhs, x);
        } else {
            thomas(&lower, &diag, &upper, rhs, x);
        }
        return;
    }
    bicgstab(grid, lambda, d, rhs, x);
}

fn bicgstab(grid: &Grid, lambda: f64, d: &[f64], b: &[f64], x: &mut [f64]) {
    let n = b.len();
    let k = lambda / (grid.h() * grid.h());
    let precond: Vec<f64> = (0..n)
        .map(|i| 1.0 / (1.0 + k * grid.neighbor_count(i) as f64 * d[i]))
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut scratch = alloc::vec![0.0; n];
    x.iter_mut().for_each(|v| *v = 0.0);
    let mut r = b.to_vec();
    let r0 = r.clone();
    let bnorm = libm::sqrt(dot(b, b));
    if bnorm == 0.0 {
        return;
    }
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = alloc::vec![0.0; n];
    let mut p = alloc::vec![0.0; n];
    let mut y = alloc::vec![0.0; n];
    let mut s = alloc::vec![0.0; n];
    let mut z = alloc::vec![0.0; n];
    let mut t = alloc::vec![0.0; n];
    for _ in 0..(10 * n).max(200) {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = precond[i] * p[i];
        }
        apply_jacobian(grid, lambda, d, &y, &mut scratch, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if libm::sqrt(dot(&s, &s)) <= 1e-14 * bnorm {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            break;
        }
        for i in 0..n {
            z[i] = precond[i] * s[i];
        }
        apply_jacobian(grid, lambda, d, &z, &mut scratch, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if libm::sqrt(dot(&r, &r)) <= 1e-14 * bnorm || omega == 0.0 {
            break;
        }
    }
}

/// Damped Newton with Armijo backtracking on `‖F‖₁`; iterates are clamped to
/// `[lo + δ, hi − δ]` for bounded `I`.
pub fn solve_newton(p: &ResolventProblem<'_>, u_init: &Field) -> Result<(Field, SolveStats)> {
    p.validate()?;
    p.rhs.same_grid(u_init)?;
    let grid = *p.rhs.grid();
    let g = p.rhs.values();
    let n = g.len();
    let interval = p.model.interval();
    let mut u: Vec<f64> = u_init
        .values()
        .iter()
        .map(|v| interval.clamp_inside(*v))
        .collect();
    let mut phi_buf = alloc::vec![0.0; n];
    let mut f = alloc::vec![0.0; n];
    let mut residual = residual_into(p.model, &grid, p.lambda, &u, g, &mut phi_buf, &mut f);
    let mut d = alloc::vec![0.0; n];
    let mut delta = alloc::vec![0.0; n];
    let mut trial = alloc::vec![0.0; n];
    let mut f_trial = alloc::vec![0.0; n];
    let mut iterations = 0;
    while residual > p.tol {
        if iterations >= p.max_iter {
            return Err(Error::NoConvergence {
                iterations,
                residual,
            });
        }
        for i in 0..n {
            d[i] = p.model.diffusivity(u[i]);
            f[i] = -f[i];
        }
        solve_linearized(&grid, p.lambda, &d, &f, &mut delta);
        let mut step = 1.0;
        loop {
            for i in 0..n {
                trial[i] = interval.clamp_inside(u[i] + step * delta[i]);
            }
            let r_trial = residual_into(
                p.model,
                &grid,
                p.lambda,
                &trial,
                g,
                &mut phi_buf,
                &mut f_trial,
            );
            if r_trial.is_finite() && r_trial <= (1.0 - 1e-4 * step) * residual {
                core::mem::swap(&mut u, &mut trial);
                core::mem::swap(&mut f, &mut f_trial);
                residual = r_trial;
                break;
            }
            step *= 0.5;
            if step < 1e-10 {
                return Err(Error::NoConvergence {
                    iterations,
                    residual,
                });
            }
        }
        iterations += 1;
    }
    let stats = SolveStats {
        method: Method::Newton,
        iterations,
        residual,
    };
    Ok((Field::from_values(&grid, u)?, stats))
}

/// Minimizes `J(u) = ‖u − g‖²_{Ḣ⁻¹}/(2λ) + h^d ΣΦ(uᵢ)` by gradient steps in the
/// `Ḣ⁻¹` metric, `u ← u − s(u − g − λΔ_hφ(u))`, with Nesterov extrapolation,
/// backtracking and a monotone safeguard so that `J` never increases.
///
/// The mean of `u` is pinned to the mean of `g`, which every step preserves.
pub fn solve_prox_hminus1(p: &ResolventProblem<'_>, u_init: &Field) -> Result<(Field, SolveStats)> {
    let (u, stats, _) = prox_hminus1_with_history(p, u_init)?;
    Ok((u, stats))
}

/// As [`solve_prox_hminus1`], also returning the objective after every iteration.
pub fn prox_hminus1_with_history(
    p: &ResolventProblem<'_>,
    u_init: &Field,
) -> Result<(Field, SolveStats, Vec<f64>)> {
    p.validate()?;
    p.rhs.same_grid(u_init)?;
    let grid = *p.rhs.grid();
    if grid.bc() != BoundaryCondition::Periodic {
        return Err(Error::BoundaryCondition);
    }
    let model = p.model;
    let (lo, hi) = model.interval().safe_bounds();
    let g = p.rhs;
    let n = g.values().len();
    let vol = grid.cell_volume();
    let target_mean = g.mean();
    if !(target_mean > lo && target_mean < hi) {
        return Err(Error::Config(
            "mean of the right-hand side lies outside the interval".into(),
        ));
    }
    let inside = |v: &[f64]| v.iter().all(|x| *x > lo && *x < hi);

    let shift = target_mean - u_init.mean();
    let shifted: Vec<f64> = u_init.values().iter().map(|v| v + shift).collect();
    let start = if inside(&shifted) {
        shifted
    } else {
        alloc::vec![target_mean; n]
    };

    let gl = GaussLegendre::new(4);
    let primitive_increment = |a: f64, b: f64, mu: f64| -> f64 {
        if (b - a).abs() > 1e-4 {
            model.primitive(b) - model.primitive(a) - mu * (b - a)
        } else {
            gl.integrate(|s| model.phi(s) - mu, a, b, 1)
        }
    };
    // J(b) − J(a) without forming either value. Both points carry the same
    // mass, so subtracting μ∫u leaves the difference unchanged while making
    // it insensitive to the rounding drift of the mass.
    let increment = |a: &Field, b: &Field| -> Result<f64> {
        let mu = a.values().iter().map(|v| model.phi(*v)).sum::<f64>() / n as f64;
        let diff = b.zip_map(a, |x, y| x - y)?;
        let sum = Field::from_values(
            &grid,
            a.values()
                .iter()
                .zip(b.values())
                .zip(g.values())
                .map(|((x, y), z)| x + y - 2.0 * z)
                .collect(),
        )?;
        let quad = hminus1_inner(&diff, &sum)? / (2.0 * p.lambda);
        let energy: f64 = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| primitive_increment(*x, *y, mu))
            .sum::<f64>()
            * vol;
        Ok(quad + energy)
    };
    let objective = |u: &Field| -> Result<f64> {
        let diff = u.zip_map(g, |a, b| a - b)?;
        let quad = hminus1_inner(&diff, &diff)?;
        let energy: f64 = u.values().iter().map(|v| model.primitive(*v)).sum::<f64>() * vol;
        Ok(quad / (2.0 * p.lambda) + energy)
    };
    let mut phi_buf = alloc::vec![0.0; n];
    let mut force = |u: &[f64], out: &mut [f64]| -> f64 {
        residual_into(model, &grid, p.lambda, u, g.values(), &mut phi_buf, out)
    };

    let mut x = Field::from_values(&grid, start)?;
    let mut x_prev = x.clone();
    let mut jx = objective(&x)?;
    let mut history = alloc::vec![jx];
    let mut fy = alloc::vec![0.0; n];
    let mut residual = force(x.values(), &mut fy);
    let mut momentum = 1.0_f64;
    let mut step = 1.0_f64;
    let mut iterations = 0;

    while residual > p.tol {
        if iterations >= p.max_iter {
            return Err(Error::NoConvergence {
                iterations,
                residual,
            });
        }
        let momentum_next = 0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * momentum * momentum));
        let weight = (momentum - 1.0) / momentum_next;
        let extrapolated: Vec<f64> = x
            .values()
            .iter()
            .zip(x_prev.values())
            .map(|(a, b)| a + weight * (a - b))
            .collect();
        let y = if weight > 0.0 && inside(&extrapolated) {
            Field::from_values(&grid, extrapolated)?
        } else {
            x.clone()
        };
        force(y.values(), &mut fy);
        let fy_field = Field::from_values(&grid, fy.clone())?;
        let fy_norm = hminus1_inner(&fy_field, &fy_field)?.max(0.0);

        let mut trial_step = (step * 2.0).min(1.0);
        let candidate = loop {
            let z_vals: Vec<f64> = y
                .values()
                .iter()
                .zip(&fy)
                .map(|(a, b)| a - trial_step * b)
                .collect();
            if inside(&z_vals) {
                let z = Field::from_values(&grid, z_vals)?;
                if increment(&y, &z)? <= -0.5 * trial_step / p.lambda * fy_norm {
                    break Some(z);
                }
            }
            trial_step *= 0.5;
            if trial_step < 1e-14 {
                break None;
            }
        };
        let Some(z) = candidate else {
            return Err(Error::NoConvergence {
                iterations,
                residual,
            });
        };
        step = trial_step;
        let gain = increment(&x, &z)?;
        if gain <= 0.0 {
            x_prev = core::mem::replace(&mut x, z);
            jx += gain;
            momentum = momentum_next;
        } else {
            x_prev = x.clone();
            momentum = 1.0;
        }
        history.push(jx);
        residual = force(x.values(), &mut fy);
        iterations += 1;
    }
    let stats = SolveStats {
        method: Method::ProxHMinus1,
        iterations,
        residual,
    };
    Ok((x, stats, history))
}

/// Newton from `u_init`, falling back to Gauss-Seidel when Newton stalls.
pub fn solve(p: &ResolventProblem<'_>, u_init: &Field) -> Result<(Field, SolveStats)> {
    match solve_newton(p, u_init) {
        Ok(out) => Ok(out),
        Err(Error::NoConvergence { .. }) => {
            let fallback = ResolventProblem {
                max_iter: p.max_iter.max(1) * 5_000,
                ..*p
            };
            solve_cellwise_monotone(&fallback)
        }
        Err(e) => Err(e),
    }
}

/// `(‖R(g) − R(g̃)‖₁, ‖g − g̃‖₁)` for the resolvent `R = (I + λA_φ)⁻¹`.
pub fn resolvent_contraction_check(
    model: &PhiModel,
    lambda: f64,
    g: &Field,
    g_tilde: &Field,
    tol: f64,
) -> Result<(f64, f64)> {
    g.same_grid(g_tilde)?;
    let p = ResolventProblem::new(model, lambda, g).with_tol(tol);
    let q = ResolventProblem::new(model, lambda, g_tilde).with_tol(tol);
    let (u, _) = solve(&p, g)?;
    let (v, _) = solve(&q, g_tilde)?;
    Ok((
        crate::grid::norm_l1_diff(&u, &v)?,
        crate::grid::norm_l1_diff(g, g_tilde)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{integral, norm_l1_diff};

    fn grid(n: usize) -> Grid {
        Grid::new(1, n, 1.0, BoundaryCondition::Periodic).unwrap()
    }

    fn wavy(grid: &Grid, amp: f64, phase: f64) -> Field {
        grid.sample(|x| amp * libm::sin(3.0 * x[0] + phase) + 0.3 * amp * libm::cos(7.0 * x[0]))
    }

    #[test]
    fn zero_and_constant_data_are_fixed_points() {
        let m = PhiModel::biofilm(1.0, 1.0).unwrap();
        let g = grid(16);
        let zero = Field::zeros(&g);
        let p = ResolventProblem::new(&m, 0.1, &zero);
        let (u, _) = solve_cellwise_monotone(&p).unwrap();
        assert!(u.values().iter().all(|v| *v == 0.0));
        let (u, s) = solve_newton(&p, &zero).unwrap();
        assert_eq!(s.iterations, 0);
        assert!(u.values().iter().all(|v| *v == 0.0));
        let (u, s) = solve_prox_hminus1(&p, &zero).unwrap();
        assert_eq!(s.iterations, 0);
        assert!(u.values().iter().all(|v| *v == 0.0));

        let c = Field::constant(&g, 0.4);
        let p = ResolventProblem::new(&m, 1.0, &c);
        let (u, _) = solve_cellwise_monotone(&p).unwrap();
        assert!(u.values().iter().all(|v| (*v - 0.4).abs() < 1e-15));
    }

    #[test]
    fn solvers_agree_on_a_biofilm_problem() {
        let m = PhiModel::biofilm(1.0, 1.0).unwrap();
        let g = grid(16);
        let rhs = wavy(&g, 0.8, 0.3);
        for lambda in [0.01, 0.1, 1.0] {
            let p = ResolventProblem::new(&m, lambda, &rhs).with_max_iter(100_000);
            let (a, _) = solve_cellwise_monotone(&p).unwrap();
            let (b, _) = solve_newton(&p, &rhs).unwrap();
            let (c, _) = solve_prox_hminus1(&p, &rhs).unwrap();
            assert!(norm_l1_diff(&a, &b).unwrap() < 1e-9);
            assert!(norm_l1_diff(&a, &c).unwrap() < 1e-9);
        }
    }

    #[test]
    fn prox_objective_is_monotone() {
        let m = PhiModel::biofilm(1.0, 1.0).unwrap();
        let g = grid(16);
        let rhs = wavy(&g, 0.7, 1.1);
        let p = ResolventProblem::new(&m, 0.5, &rhs).with_max_iter(100_000);
        let (_, _, history) = prox_hminus1_with_history(&p, &rhs).unwrap();
        assert!(history.len() > 2);
        for w in history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn newton_converges_quadratically_for_pme() {
        let m = PhiModel::pme(2.0).unwrap();
        let g = Grid::new(1, 64, 1.0, BoundaryCondition::Periodic).unwrap();
        let rhs = g.sample(|x| 0.6 + 0.3 * libm::sin(core::f64::consts::PI * x[0]));
        let mut residuals = Vec::new();
        let mut iterate = Field::constant(&g, 2.0);
        for it in 1..=12 {
            let p = ResolventProblem::new(&m, 0.05, &rhs)
                .with_tol(1e-300)
                .with_max_iter(it);
            match solve_newton(&p, &Field::constant(&g, 2.0)) {
                Err(Error::NoConvergence { residual, .. }) => residuals.push(residual),
                Ok((u, s)) => {
                    iterate = u;
                    residuals.push(s.residual);
                    break;
                }
                Err(e) => panic!("{e}"),
            }
        }
        let _ = iterate;
        // residuals strictly above the rounding floor
        let useful: Vec<f64> = residuals.iter().copied().filter(|r| *r > 1e-13).collect();
        let k = useful.len();
        assert!(k >= 4, "{residuals:?}");
        let slope = |a: f64, b: f64, c: f64| libm::log(c / b) / libm::log(b / a);
        let s = slope(useful[k - 3], useful[k - 2], useful[k - 1]);
        assert!(s >= 1.8, "log-residual slope {s}, {residuals:?}");
    }

    #[test]
    fn range_mass_and_order() {
        let m = PhiModel::biofilm(1.0, 1.0).unwrap();
        let g = grid(32);
        let rhs = g.sample(|x| 1.6 * libm::sin(2.0 * x[0]));
        let p = ResolventProblem::new(&m, 0.2, &rhs);
        let (u, _) = solve(&p, &rhs).unwrap();
        let (lo, hi) = m.interval().safe_bounds();
        assert!(u.values().iter().all(|v| *v >= lo && *v <= hi));
        assert!((integral(&u) - integral(&rhs)).abs() <= 1e-11);

        let upper = rhs.map(|v| v + 0.05);
        let (w, _) = solve(&ResolventProblem::new(&m, 0.2, &upper), &upper).unwrap();
        assert!(u
            .values()
            .iter()
            .zip(w.values())
            .all(|(a, b)| *a <= *b + 1e-10));
    }

    #[test]
    fn contraction_of_the_resolvent() {
        let m = PhiModel::biofilm(1.0, 1.0).unwrap();
        let g = grid(32);
        let a = wavy(&g, 0.8, 0.0);
        let (lhs, rhs) = resolvent_contraction_check(&m, 0.3, &a, &a, 1e-12).unwrap();
        assert_eq!((lhs, rhs), (0.0, 0.0));
        let b = wavy(&g, 0.6, 0.9);
        let (lhs, rhs) = resolvent_contraction_check(&m, 0.3, &a, &b, 1e-12).unwrap();
        assert!(lhs <= rhs + 1e-10);
    }

    #[test]
    fn two_dimensional_newton_and_zero_flux() {
        let m = PhiModel::pme(2.0).unwrap();
        let g2 = Grid::new(2, 16, 1.0, BoundaryCondition::Periodic).unwrap();
        let rhs = g2.sample(|x| libm::exp(-4.0 * (x[0] * x[0] + x[1] * x[1])));
        let p = ResolventProblem::new(&m, 0.05, &rhs);
        let (a, _) = solve_newton(&p, &rhs).unwrap();
        let (b, _) = solve_cellwise_monotone(&p.with_max_iter(100_000)).unwrap();
        assert!(norm_l1_diff(&a, &b).unwrap() < 1e-9);

        let zf = Grid::new(1, 32, 1.0, BoundaryCondition::ZeroFlux).unwrap();
        let rhs = zf.sample(|x| 0.5 + 0.4 * x[0]);
        let p = ResolventProblem::new(&m, 0.1, &rhs);
        let (a, _) = solve_newton(&p, &rhs).unwrap();
        let (b, _) = solve_cellwise_monotone(&p.with_max_iter(100_000)).unwrap();
        assert!(norm_l1_diff(&a, &b).unwrap() < 1e-9);
        assert!((integral(&a) - integral(&rhs)).abs() < 1e-11);
        assert_eq!(
            solve_prox_hminus1(&p, &rhs).unwrap_err(),
            Error::BoundaryCondition
        );
    }

    #[test]
    fn invalid_lambda_is_rejected() {
        let m = PhiModel::pme(2.0).unwrap();
        let g = grid(8);
        let rhs = Field::zeros(&g);
        let p = ResolventProblem::new(&m, 0.0, &rhs);
        assert!(matches!(solve_newton(&p, &rhs), Err(Error::Config(_))));
    }
}
