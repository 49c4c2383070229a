//! Cell-centered tensor grids on `[−L, L)^d` with the `2d+1`-point Laplacian
//! and the discrete norms every solver relies on.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fft::{fft_nd, signed_frequency, Complex};

/// Upper bound on `n^d`.
pub const MAX_CELLS: usize = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryCondition {
    Periodic,
    /// Reflective ghost cells: no flux through the box faces.
    ZeroFlux,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    half_width: f64,
    bc: BoundaryCondition,
}

impl Grid {
    pub fn new(dim: usize, n: usize, half_width: f64, bc: BoundaryCondition) -> Result<Self> {
        let mut problems = Vec::new();
        if !(1..=3).contains(&dim) {
            problems.push(format!("dimension must be 1, 2 or 3 (got {dim})"));
        }
        if n < 4 || !n.is_power_of_two() {
            problems.push(format!("n must be a power of two >= 4 (got {n})"));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            problems.push(format!("half width must be positive (got {half_width})"));
        }
        if problems.is_empty() && n.checked_pow(dim as u32).is_none_or(|c| c > MAX_CELLS) {
            problems.push(format!("n^d exceeds the cell cap {MAX_CELLS}"));
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        Ok(Self {
            dim,
            n,
            half_width,
            bc,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn cells(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        libm::pow(self.h(), self.dim as f64)
    }

    pub fn volume(&self) -> f64 {
        libm::pow(2.0 * self.half_width, self.dim as f64)
    }

    /// Cell-center coordinate of index `i` along one axis.
    pub fn coordinate(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.h()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    /// Per-axis indices of a flat row-major index (unused axes are zero).
    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let mut out = [0; 3];
        let mut rest = flat;
        for axis in (0..self.dim).rev() {
            out[axis] = rest % self.n;
            rest /= self.n;
        }
        out
    }

    /// Cell-center position of a flat index.
    pub fn position(&self, flat: usize) -> [f64; 3] {
        let idx = self.multi_index(flat);
        let mut out = [0.0; 3];
        for axis in 0..self.dim {
            out[axis] = self.coordinate(idx[axis]);
        }
        out
    }

    /// Neighbor of `flat` one cell along `axis` in direction `forward`;
    /// `None` across a zero-flux face.
    #[inline]
    pub fn neighbor(&self, flat: usize, axis: usize, forward: bool) -> Option<usize> {
        let stride = self.stride(axis);
        let coord = (flat / stride) % self.n;
        match (forward, coord == self.n - 1, coord == 0) {
            (true, false, _) => Some(flat + stride),
            (false, _, false) => Some(flat - stride),
            (true, true, _) => match self.bc {
                BoundaryCondition::Periodic => Some(flat - (self.n - 1) * stride),
                BoundaryCondition::ZeroFlux => None,
            },
            (false, _, true) => match self.bc {
                BoundaryCondition::Periodic => Some(flat + (self.n - 1) * stride),
                BoundaryCondition::ZeroFlux => None,
            },
        }
    }

    /// Number of existing neighbors of a cell (`2d` when periodic).
    pub fn neighbor_count(&self, flat: usize) -> usize {
        (0..self.dim)
            .map(|axis| {
                usize::from(self.neighbor(flat, axis, true).is_some())
                    + usize::from(self.neighbor(flat, axis, false).is_some())
            })
            .sum()
    }

    /// Samples `f` at the cell centers.
    pub fn sample<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> Field {
        let values = (0..self.cells())
            .map(|i| f(&self.position(i)[..self.dim]))
            .collect();
        Field {
            grid: *self,
            values,
        }
    }
}

/// Cell-centered values on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            grid: *grid,
            values: alloc::vec![0.0; grid.cells()],
        }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            grid: *grid,
            values: alloc::vec![c; grid.cells()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::Config(format!(
                "field has {} values but the grid has {} cells",
                values.len(),
                grid.cells()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("field values must be finite".into()));
        }
        Ok(Self {
            grid: *grid,
            values,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map<F: FnMut(f64) -> f64>(&self, f: F) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().copied().map(f).collect(),
        }
    }

    pub fn zip_map<F: FnMut(f64, f64) -> f64>(&self, other: &Field, mut f: F) -> Result<Self> {
        self.same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| f(*a, *b))
            .collect();
        Ok(Self {
            grid: self.grid,
            values,
        })
    }

    pub fn same_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// `(Σ_nbr w_j − 2d wᵢ)/h²`; a missing zero-flux neighbor acts as a copy of the cell.
pub fn laplacian_into(grid: &Grid, w: &[f64], out: &mut [f64]) {
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    if grid.dim() == 1 {
        let n = grid.n();
        let periodic = grid.bc() == BoundaryCondition::Periodic;
        for i in 0..n {
            let left = if i > 0 {
                w[i - 1]
            } else if periodic {
                w[n - 1]
            } else {
                w[i]
            };
            let right = if i + 1 < n {
                w[i + 1]
            } else if periodic {
                w[0]
            } else {
                w[i]
            };
            out[i] = (left + right - 2.0 * w[i]) * inv_h2;
        }
        return;
    }
    for (i, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for axis in 0..grid.dim() {
            for forward in [true, false] {
                if let Some(j) = grid.neighbor(i, axis, forward) {
                    acc += w[j] - w[i];
                }
            }
        }
        *slot = acc * inv_h2;
    }
}

pub fn laplacian(w: &Field) -> Field {
    let mut out = Field::zeros(&w.grid);
    laplacian_into(&w.grid, &w.values, &mut out.values);
    out
}

/// `h^d Σ wᵢ`.
pub fn integral(w: &Field) -> f64 {
    w.grid.cell_volume() * w.values.iter().sum::<f64>()
}

/// `(h^d Σ |wᵢ|^p)^{1/p}` for `p ≥ 1`.
pub fn norm_lp(w: &Field, p: f64) -> f64 {
    lp_of(&w.grid, &w.values, p)
}

pub(crate) fn lp_of(grid: &Grid, values: &[f64], p: f64) -> f64 {
    let vol = grid.cell_volume();
    if p == 1.0 {
        vol * values.iter().map(|v| v.abs()).sum::<f64>()
    } else if p == 2.0 {
        libm::sqrt(vol * values.iter().map(|v| v * v).sum::<f64>())
    } else {
        libm::pow(
            vol * values.iter().map(|v| libm::pow(v.abs(), p)).sum::<f64>(),
            1.0 / p,
        )
    }
}

pub fn norm_l1_diff(u: &Field, w: &Field) -> Result<f64> {
    u.same_grid(w)?;
    Ok(l1_diff(&u.grid, &u.values, &w.values))
}

pub(crate) fn l1_diff(grid: &Grid, u: &[f64], w: &[f64]) -> f64 {
    grid.cell_volume() * u.iter().zip(w).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `‖(u − w)₊‖₁`.
pub fn norm_l1_positive_part(u: &Field, w: &Field) -> Result<f64> {
    u.same_grid(w)?;
    Ok(u.grid.cell_volume()
        * u.values
            .iter()
            .zip(&w.values)
            .map(|(a, b)| (a - b).max(0.0))
            .sum::<f64>())
}

/// Discrete Dirichlet energy `h^d Σ_edges (w_j − wᵢ)²/h²`, equal to `−h^d Σ (Δ_h w)ᵢ wᵢ`.
pub fn dirichlet_energy(w: &Field) -> f64 {
    let grid = &w.grid;
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let mut acc = 0.0;
    for i in 0..grid.cells() {
        for axis in 0..grid.dim() {
            if let Some(j) = grid.neighbor(i, axis, true) {
                let d = w.values[j] - w.values[i];
                acc += d * d;
            }
        }
    }
    grid.cell_volume() * acc * inv_h2
}

/// Eigenvalue of `−Δ_h` for the Fourier mode with integer frequencies `k`:
/// `(2/h²) Σⱼ (1 − cos(2π kⱼ h/(2L)))`.
pub fn laplacian_symbol(grid: &Grid, k: &[i64]) -> f64 {
    let h = grid.h();
    let n = grid.n() as f64;
    k.iter()
        .map(|kj| 2.0 / (h * h) * (1.0 - libm::cos(2.0 * core::f64::consts::PI * *kj as f64 / n)))
        .sum()
}

/// Discrete `Ḣ⁻¹` inner product `h^d ⟨(−Δ_h)⁻¹ û, ŵ⟩` of the mean-free parts.
pub fn hminus1_inner(u: &Field, w: &Field) -> Result<f64> {
    u.same_grid(w)?;
    let grid = u.grid;
    if grid.bc() != BoundaryCondition::Periodic {
        return Err(Error::BoundaryCondition);
    }
    let mut uh: Vec<Complex> = u.values.iter().map(|v| Complex::new(*v, 0.0)).collect();
    let mut wh: Vec<Complex> = w.values.iter().map(|v| Complex::new(*v, 0.0)).collect();
    fft_nd(&mut uh, grid.dim(), grid.n(), false);
    fft_nd(&mut wh, grid.dim(), grid.n(), false);
    let mut acc = 0.0;
    let mut k = [0i64; 3];
    for (idx, (a, b)) in uh.iter().zip(&wh).enumerate() {
        if idx == 0 {
            continue;
        }
        let mi = grid.multi_index(idx);
        for axis in 0..grid.dim() {
            k[axis] = signed_frequency(mi[axis], grid.n());
        }
        let lambda = laplacian_symbol(&grid, &k[..grid.dim()]);
        acc += (a.re * b.re + a.im * b.im) / lambda;
    }
    Ok(acc * grid.cell_volume() / grid.cells() as f64)
}
