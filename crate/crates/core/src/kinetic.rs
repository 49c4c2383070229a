//! Kinetic formulation: the function `χ(t,x,v)`, velocity averages, the
//! defect measure `n = D(u)|∇u|² δ_{v=u}` and the distributional residual of
//!
//! ```text
//! ∂ₜχ = φ′(v) Δₓχ + ∂ᵥ n + δ_{v=u} f
//! ```
//!
//! tested against separable functions `ψ(t) ϕ(x) ζ(v)`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::grid::{laplacian, Field, Grid};
use crate::phi::{Interval, PhiModel};
use crate::quad::GaussLegendre;

pub const DEFAULT_BINS: usize = 64;

/// `χ(u, v)`: `+1` on `0 < v < u`, `−1` on `u < v < 0`, `0` otherwise.
pub fn chi_value(u: f64, v: f64) -> i8 {
    if 0.0 < v && v < u {
        1
    } else if u < v && v < 0.0 {
        -1
    } else {
        0
    }
}

/// Uniform partition of a compact velocity interval `J`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VelocityBins {
    lo: f64,
    hi: f64,
    bins: usize,
}

impl VelocityBins {
    pub fn new(j: Interval, bins: usize) -> Result<Self> {
        if !(j.lo.is_finite() && j.hi.is_finite() && j.lo < j.hi) {
            return Err(Error::Config(alloc::format!(
                "velocity interval [{}, {}] must be compact",
                j.lo,
                j.hi
            )));
        }
        if bins == 0 {
            return Err(Error::Config("need at least one velocity bin".into()));
        }
        Ok(Self {
            lo: j.lo,
            hi: j.hi,
            bins,
        })
    }

    /// `[min u − margin, max u + margin] ∩ I` (also covering `v = 0`), with a
    /// margin of 5% of the spread.
    pub fn covering(
        model: &PhiModel,
        values: impl IntoIterator<Item = f64>,
        bins: usize,
    ) -> Result<Self> {
        let (mut lo, mut hi) = (0.0_f64, 0.0_f64);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let margin = 0.05 * (hi - lo).max(1e-3);
        let (safe_lo, safe_hi) = model.interval().safe_bounds();
        Self::new(
            Interval::new((lo - margin).max(safe_lo), (hi + margin).min(safe_hi)),
            bins,
        )
    }

    pub fn interval(&self) -> Interval {
        Interval::new(self.lo, self.hi)
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn edge(&self, b: usize) -> f64 {
        if b == self.bins {
            self.hi
        } else {
            self.lo + b as f64 * self.width()
        }
    }

    pub fn center(&self, b: usize) -> f64 {
        self.lo + (b as f64 + 0.5) * self.width()
    }

    /// Bin containing `v`; the right endpoint belongs to the last bin.
    pub fn bin_of(&self, v: f64) -> Option<usize> {
        if !(v >= self.lo && v <= self.hi) {
            return None;
        }
        Some((((v - self.lo) / self.width()) as usize).min(self.bins - 1))
    }

    fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Neumaier-compensated running sum.
#[derive(Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// `∫ H′(v) χ(u, v) dv = H(u) − H(0)` per cell, integrating `H′` exactly
/// piecewise between bin edges (8-point Gauss-Legendre per piece).
pub fn velocity_average<F: Fn(f64) -> f64>(
    u: &Field,
    h_prime: F,
    bins: &VelocityBins,
) -> Result<Field> {
    let gl = GaussLegendre::new(8);
    let mut out = Vec::with_capacity(u.values().len());
    for &value in u.values() {
        if !bins.contains(value) {
            return Err(Error::Range { value });
        }
        out.push(signed_integral(&gl, &h_prime, bins, value));
    }
    Field::from_values(u.grid(), out)
}

fn signed_integral<F: Fn(f64) -> f64>(
    gl: &GaussLegendre,
    f: &F,
    bins: &VelocityBins,
    u: f64,
) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    let (a, b, sign) = if u > 0.0 {
        (0.0, u, 1.0)
    } else {
        (u, 0.0, -1.0)
    };
    let mut acc = Compensated::default();
    let mut left = a;
    for k in 0..=bins.bins() {
        let edge = bins.edge(k);
        if edge > left && edge < b {
            acc.add(gl.integrate(f, left, edge, 1));
            left = edge;
        }
    }
    acc.add(gl.integrate(f, left, b, 1));
    sign * acc.value()
}

/// `∫∫ |χ(u) − χ(w)| dv dx`, with the `v`-integral evaluated exactly per cell.
pub fn chi_distance(u: &Field, w: &Field) -> Result<f64> {
    u.same_grid(w)?;
    let total: f64 = u
        .values()
        .iter()
        .zip(w.values())
        .map(|(&a, &b)| (a.max(0.0) - b.max(0.0)).abs() + (a.min(0.0) - b.min(0.0)).abs())
        .sum();
    Ok(total * u.grid().cell_volume())
}

/// `|∇_h u|²` by centered differences; a missing neighbor (zero-flux wall)
/// is replaced by the cell itself.
pub fn centered_gradient_sq(u: &Field) -> Vec<f64> {
    let grid = u.grid();
    let values = u.values();
    let inv = 1.0 / (2.0 * grid.h());
    (0..values.len())
        .map(|i| {
            (0..grid.dim())
                .map(|axis| {
                    let fwd = grid
                        .neighbor(i, axis, true)
                        .map_or(values[i], |j| values[j]);
                    let bwd = grid
                        .neighbor(i, axis, false)
                        .map_or(values[i], |j| values[j]);
                    let g = (fwd - bwd) * inv;
                    g * g
                })
                .sum()
        })
        .collect()
}

/// Discretized kinetic data of one trajectory: the states (for `χ`) and the
/// defect measure, which is concentrated at `v = u(t_{n+1}, xᵢ)` with mass
/// `τ h^d D(u)|∇_h u|²` per step and cell.
#[derive(Clone, Debug)]
pub struct KineticSample {
    pub bins: VelocityBins,
    pub tau: f64,
    pub grid: Grid,
    steps: usize,
    levels: Vec<f64>,
    cell_mass: Vec<f64>,
    step_bin_mass: Vec<f64>,
}

impl KineticSample {
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `χ(t_n, xᵢ, v_b)` at the center of bin `b`.
    pub fn chi(&self, n: usize, cell: usize, b: usize) -> i8 {
        chi_value(
            self.levels[n * self.grid.cells() + cell],
            self.bins.center(b),
        )
    }

    /// Defect mass of step `n` (state `n + 1`) in cell `i`.
    pub fn cell_mass(&self, n: usize, cell: usize) -> f64 {
        self.cell_mass[n * self.grid.cells() + cell]
    }

    /// Defect mass of step `n` in velocity bin `b`.
    pub fn step_bin_mass(&self, n: usize, b: usize) -> f64 {
        self.step_bin_mass[n * self.bins.bins() + b]
    }

    /// Mass per velocity bin, summed over time and space.
    pub fn bin_mass(&self) -> Vec<f64> {
        let nb = self.bins.bins();
        let mut out = alloc::vec![0.0; nb];
        for row in self.step_bin_mass.chunks(nb) {
            for (o, m) in out.iter_mut().zip(row) {
                *o += m;
            }
        }
        out
    }

    pub fn total_mass(&self) -> f64 {
        self.cell_mass.iter().sum()
    }

    /// Bin mass divided by bin width, i.e. the `Λ^∞` density per bin.
    pub fn density(&self) -> Vec<f64> {
        let w = self.bins.width();
        self.bin_mass().into_iter().map(|m| m / w).collect()
    }

    pub fn max_density(&self) -> f64 {
        self.density().into_iter().fold(0.0, f64::max)
    }
}

/// Estimates the defect measure of a run with a smooth (tabulated) profile.
pub fn defect_measure(traj: &Trajectory, bins: &VelocityBins) -> Result<KineticSample> {
    if !traj.model.is_smooth() {
        return Err(Error::Model(
            "the defect measure needs a run with a smooth approximate profile".into(),
        ));
    }
    let grid = traj.grid;
    let cells = grid.cells();
    let steps = traj.steps();
    let weight = traj.tau * grid.cell_volume();
    let nb = bins.bins();
    let mut levels = Vec::with_capacity((steps + 1) * cells);
    let mut cell_mass = Vec::with_capacity(steps * cells);
    let mut step_bin_mass = alloc::vec![0.0; steps * nb];
    for (n, state) in traj.states.iter().enumerate() {
        levels.extend_from_slice(state.values());
        if n == 0 {
            continue;
        }
        for (i, g2) in centered_gradient_sq(state).into_iter().enumerate() {
            let u = state.values()[i];
            let mass = weight * traj.model.diffusivity(u) * g2;
            cell_mass.push(mass);
            if mass > 0.0 {
                let b = bins.bin_of(u).ok_or(Error::Range { value: u })?;
                step_bin_mass[(n - 1) * nb + b] += mass;
            }
        }
    }
    Ok(KineticSample {
        bins: *bins,
        tau: traj.tau,
        grid,
        steps,
        levels,
        cell_mass,
        step_bin_mass,
    })
}

/// Smooth compactly supported bump `exp(−1/(1 − s²))`, `s = (x − center)/radius`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bump {
    pub center: f64,
    pub radius: f64,
}

impl Bump {
    pub fn new(center: f64, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.radius, self.center + self.radius)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let s = (x - self.center) / self.radius;
        if s.abs() >= 1.0 {
            0.0
        } else {
            libm::exp(-1.0 / (1.0 - s * s))
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let s = (x - self.center) / self.radius;
        if s.abs() >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - s * s;
        libm::exp(-1.0 / q) * (-2.0 * s / (q * q)) / self.radius
    }

    fn inside(&self, lo: f64, hi: f64) -> bool {
        let (a, b) = self.support();
        a > lo && b < hi
    }
}

/// Separable test function `ψ(t) Π ϕ_j(x_j) ζ(v)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TensorTest {
    pub time: Bump,
    pub space: [Bump; 3],
    pub velocity: Bump,
}

impl TensorTest {
    fn space_factor(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.space)
            .map(|(xi, b)| b.eval(*xi))
            .product()
    }
}

/// A fixed basket of 12 tests: two time windows, two spatial windows and
/// three velocity windows inside `J`.
pub fn tensor_basket(grid: &Grid, t_final: f64, j: Interval) -> Vec<TensorTest> {
    let l = grid.half_width();
    let times = [
        Bump::new(0.35 * t_final, 0.3 * t_final),
        Bump::new(0.6 * t_final, 0.35 * t_final),
    ];
    let spaces = [Bump::new(-0.2 * l, 0.6 * l), Bump::new(0.25 * l, 0.5 * l)];
    let w = j.hi - j.lo;
    let velocities = [
        Bump::new(j.lo + 0.3 * w, 0.25 * w),
        Bump::new(j.lo + 0.5 * w, 0.3 * w),
        Bump::new(j.lo + 0.7 * w, 0.25 * w),
    ];
    let mut out = Vec::with_capacity(12);
    for time in times {
        for s in spaces {
            for velocity in velocities {
                out.push(TensorTest {
                    time,
                    space: [s; 3],
                    velocity,
                });
            }
        }
    }
    out
}

/// `V ↦ ∫₀^V w(v) ζ(v) dv` for a weight `w`, tabulated on the support of `ζ`
/// and completed by a Gauss-Legendre rule on the last partial node interval.
struct Antiderivative<'a, W: Fn(f64) -> f64> {
    bump: Bump,
    weight: W,
    nodes: Vec<f64>,
    spacing: f64,
    at_zero: f64,
    gl: &'a GaussLegendre,
}

impl<'a, W: Fn(f64) -> f64> Antiderivative<'a, W> {
    const NODES: usize = 512;

    fn new(bump: Bump, weight: W, gl: &'a GaussLegendre) -> Self {
        let (lo, hi) = bump.support();
        let spacing = (hi - lo) / Self::NODES as f64;
        let mut nodes = Vec::with_capacity(Self::NODES + 1);
        let mut acc = 0.0;
        nodes.push(0.0);
        for k in 0..Self::NODES {
            let a = lo + k as f64 * spacing;
            acc += gl.integrate(|v| weight(v) * bump.eval(v), a, a + spacing, 1);
            nodes.push(acc);
        }
        let mut out = Self {
            bump,
            weight,
            nodes,
            spacing,
            at_zero: 0.0,
            gl,
        };
        out.at_zero = out.left_profile(0.0);
        out
    }

    fn left_profile(&self, v: f64) -> f64 {
        let (lo, hi) = self.bump.support();
        if v <= lo {
            return 0.0;
        }
        if v >= hi {
            return self.nodes[Self::NODES];
        }
        let k = (((v - lo) / self.spacing) as usize).min(Self::NODES - 1);
        let a = lo + k as f64 * self.spacing;
        self.nodes[k]
            + self
                .gl
                .integrate(|s| (self.weight)(s) * self.bump.eval(s), a, v, 1)
    }

    fn eval(&self, v: f64) -> f64 {
        self.left_profile(v) - self.at_zero
    }
}

/// Residual `⟨∂ₜχ − φ′Δₓχ − ∂ᵥn − δ_{v=u}f, ψϕζ⟩` of every test, paired in
/// the same discrete form as the scheme (backward time differences, `Δ_h`
/// moved onto `ϕ`).
pub fn kinetic_residual(
    traj: &Trajectory,
    sample: &KineticSample,
    tests: &[TensorTest],
) -> Result<Vec<f64>> {
    kinetic_residual_with(traj, sample, tests, true)
}

/// As [`kinetic_residual`]; `include_defect = false` drops the `∂ᵥn` pairing.
pub fn kinetic_residual_with(
    traj: &Trajectory,
    sample: &KineticSample,
    tests: &[TensorTest],
    include_defect: bool,
) -> Result<Vec<f64>> {
    let grid = traj.grid;
    if sample.grid != grid || sample.steps() != traj.steps() {
        return Err(Error::GridMismatch);
    }
    let t_final = *traj.times.last().expect("nonempty trajectory");
    let l = grid.half_width();
    let j = sample.bins.interval();
    let gl = GaussLegendre::new(6);
    let vol = grid.cell_volume();
    let tau = traj.tau;
    let model = &traj.model;
    let mut out = Vec::with_capacity(tests.len());
    for (index, test) in tests.iter().enumerate() {
        if !test.time.inside(0.0, t_final) {
            return Err(Error::Support(alloc::format!(
                "test {index}: time support leaves (0, T)"
            )));
        }
        if test.space[..grid.dim()].iter().any(|b| !b.inside(-l, l)) {
            return Err(Error::Support(alloc::format!(
                "test {index}: space support leaves the box"
            )));
        }
        if !test.velocity.inside(j.lo, j.hi) {
            return Err(Error::Support(alloc::format!(
                "test {index}: velocity support leaves J"
            )));
        }
        let zeta = test.velocity;
        let z_of = Antiderivative::new(zeta, |_| 1.0, &gl);
        let g_of = Antiderivative::new(zeta, |v| model.diffusivity(v), &gl);
        let phi_x = grid.sample(|x| test.space_factor(x));
        let lap_phi = laplacian(&phi_x);
        let support: Vec<usize> = (0..grid.cells())
            .filter(|&i| phi_x.values()[i] != 0.0)
            .collect();
        let psi: Vec<f64> = traj.times.iter().map(|t| test.time.eval(*t)).collect();
        let pair_z = |state: &Field| -> f64 {
            support
                .iter()
                .map(|&i| phi_x.values()[i] * z_of.eval(state.values()[i]))
                .sum::<f64>()
                * vol
        };

        let mut time_term = 0.0;
        let mut diffusion = 0.0;
        let mut defect = 0.0;
        let mut reaction = 0.0;
        let mut a_prev = pair_z(&traj.states[0]);
        for n in 0..traj.steps() {
            let next = &traj.states[n + 1];
            let a_next = pair_z(next);
            let dpsi = psi[n + 1] - psi[n];
            time_term -= dpsi * a_prev;
            a_prev = a_next;
            if psi[n + 1] == 0.0 {
                continue;
            }
            let forcing = traj.forcing[n].values();
            let (mut dif, mut def, mut rea) = (0.0, 0.0, 0.0);
            for i in 0..grid.cells() {
                let u = next.values()[i];
                let lp = lap_phi.values()[i];
                if lp != 0.0 {
                    dif += lp * g_of.eval(u);
                }
                let p = phi_x.values()[i];
                if p != 0.0 {
                    rea += p * zeta.eval(u) * forcing[i];
                    def += p * zeta.derivative(u) * sample.cell_mass(n, i);
                }
            }
            diffusion += psi[n + 1] * tau * vol * dif;
            reaction += psi[n + 1] * tau * vol * rea;
            defect += psi[n + 1] * def;
        }
        let mut r = time_term - diffusion - reaction;
        if include_defect {
            r += defect;
        }
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{solve_cauchy, SolverOptions, SourceSpec};
    use crate::grid::{norm_l1_diff, BoundaryCondition};

    #[test]
    fn chi_cases() {
        assert_eq!(chi_value(0.5, 0.25), 1);
        assert_eq!(chi_value(-0.5, -0.25), -1);
        assert_eq!(chi_value(0.3, 0.5), 0);
        assert_eq!(chi_value(0.3, 0.0), 0);
        assert_eq!(chi_value(0.3, 0.3), 0);
        assert_eq!(chi_value(-0.3, 0.1), 0);
    }

    #[test]
    fn bins_layout() {
        let b = VelocityBins::new(Interval::new(-1.0, 1.0), 4).unwrap();
        assert_eq!(b.width(), 0.5);
        assert_eq!(b.center(0), -0.75);
        assert_eq!(b.bin_of(1.0), Some(3));
        assert_eq!(b.bin_of(-1.0), Some(0));
        assert_eq!(b.bin_of(0.1), Some(2));
        assert_eq!(b.bin_of(1.5), None);
        assert!(VelocityBins::new(Interval::new(1.0, 0.0), 4).is_err());
        assert!(VelocityBins::new(Interval::new(0.0, 1.0), 0).is_err());
    }

    #[test]
    fn averaging_recovers_u_and_phi() {
        let g = Grid::new(1, 64, 1.0, BoundaryCondition::Periodic).unwrap();
        let m = PhiModel::biofilm(1.0, 1.0).unwrap();
        let u = g.sample(|x| 0.9 * libm::sin(2.0 * x[0] + 0.3));
        let bins = VelocityBins::covering(&m, u.values().iter().copied(), DEFAULT_BINS).unwrap();
        let ident = velocity_average(&u, |_| 1.0, &bins).unwrap();
        for (a, b) in ident.values().iter().zip(u.values()) {
            assert!((a - b).abs() <= 1e-14);
        }
        let phi = velocity_average(&u, |v| m.diffusivity(v), &bins).unwrap();
        for (a, b) in phi.values().iter().zip(u.values()) {
            assert!((a - m.eval_phi(*b).unwrap()).abs() <= 1e-10);
        }
        let zero = velocity_average(&Field::zeros(&g), libm::exp, &bins).unwrap();
        assert!(zero.values().iter().all(|v| *v == 0.0));
        let narrow = VelocityBins::new(Interval::new(-0.1, 0.1), 8).unwrap();
        assert!(matches!(
            velocity_average(&u, |_| 1.0, &narrow),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn chi_isometry() {
        let g = Grid::new(1, 16, 0.5, BoundaryCondition::Periodic).unwrap();
        let u = Field::constant(&g, 0.5);
        let w = Field::constant(&g, 0.2);
        assert!((chi_distance(&u, &w).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(chi_distance(&u, &u).unwrap(), 0.0);
        let a = g.sample(|x| libm::sin(7.0 * x[0]));
        let b = g.sample(|x| 0.5 * libm::cos(3.0 * x[0]));
        assert!((chi_distance(&a, &b).unwrap() - norm_l1_diff(&a, &b).unwrap()).abs() <= 1e-14);
    }

    #[test]
    fn constant_run_has_no_defect_and_no_residual() {
        let g = Grid::new(1, 32, 1.0, BoundaryCondition::Periodic).unwrap();
        let m = PhiModel::linear(0.5).unwrap();
        let opts = SolverOptions::default();
        let traj = solve_cauchy(
            &m,
            &Field::constant(&g, 0.3),
            &SourceSpec::None,
            0.5,
            1.0 / 32.0,
            &opts,
        )
        .unwrap();
        let bins = VelocityBins::new(Interval::new(-0.5, 0.5), 16).unwrap();
        let sample = defect_measure(&traj, &bins).unwrap();
        assert_eq!(sample.total_mass(), 0.0);
        assert_eq!(sample.chi(3, 0, 12), 1);
        assert_eq!(sample.chi(3, 0, 2), 0);

        let zero = solve_cauchy(
            &m,
            &Field::zeros(&g),
            &SourceSpec::None,
            0.5,
            1.0 / 32.0,
            &opts,
        )
        .unwrap();
        let zs = defect_measure(&zero, &bins).unwrap();
        let basket = tensor_basket(&g, 0.5, bins.interval());
        assert!(kinetic_residual(&zero, &zs, &basket)
            .unwrap()
            .iter()
            .all(|r| *r == 0.0));
    }

    #[test]
    fn non_smooth_models_and_bad_supports_are_rejected() {
        let g = Grid::new(1, 16, 1.0, BoundaryCondition::Periodic).unwrap();
        let m = PhiModel::biofilm(1.0, 1.0).unwrap();
        let opts = SolverOptions::default();
        let traj = solve_cauchy(
            &m,
            &Field::zeros(&g),
            &SourceSpec::None,
            0.25,
            1.0 / 16.0,
            &opts,
        )
        .unwrap();
        let bins = VelocityBins::new(Interval::new(-0.5, 0.5), 16).unwrap();
        assert!(matches!(defect_measure(&traj, &bins), Err(Error::Model(_))));

        let lin = PhiModel::linear(1.0).unwrap();
        let traj = solve_cauchy(
            &lin,
            &Field::zeros(&g),
            &SourceSpec::None,
            0.25,
            1.0 / 16.0,
            &opts,
        )
        .unwrap();
        let sample = defect_measure(&traj, &bins).unwrap();
        let mut test = tensor_basket(&g, 0.25, bins.interval())[0];
        test.time = Bump::new(0.0, 0.1);
        assert!(matches!(
            kinetic_residual(&traj, &sample, &[test]),
            Err(Error::Support(_))
        ));
        let mut test = tensor_basket(&g, 0.25, bins.interval())[0];
        test.velocity = Bump::new(0.45, 0.1);
        assert!(matches!(
            kinetic_residual(&traj, &sample, &[test]),
            Err(Error::Support(_))
        ));
    }

    #[test]
    fn bump_derivative_matches_differences() {
        let b = Bump::new(0.2, 0.5);
        for x in [-0.2, 0.0, 0.1, 0.35, 0.6] {
            let h = 1e-6;
            let fd = (b.eval(x + h) - b.eval(x - h)) / (2.0 * h);
            assert!((fd - b.derivative(x)).abs() < 1e-8);
        }
    }
}
