//! Fractional regularity measurements. Seminorms and block norms are evaluated
//! on refinement sequences and compared with the critical exponents `κₜ`, `κₓ`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::fft::{fft_nd, signed_frequency, Complex};
use crate::grid::{lp_of, BoundaryCondition, Field, Grid};
use crate::phi::{PhiKind, PhiModel};

/// Largest grid (total cells) accepted by the `O(N²)` double sums.
pub const SEMINORM_CELL_CAP: usize = 1 << 13;

/// Largest number of pair evaluations in the time double sum.
pub const TIME_PAIR_CAP: usize = 1 << 33;

/// Discrete distance between cells `i` and `j`: minimum image for periodic
/// grids, Euclidean otherwise.
fn cell_distance(grid: &Grid, i: usize, j: usize) -> f64 {
    let a = grid.multi_index(i);
    let b = grid.multi_index(j);
    let n = grid.n() as i64;
    let mut acc = 0.0;
    for axis in 0..grid.dim() {
        let mut k = (a[axis] as i64 - b[axis] as i64).abs();
        if grid.bc() == BoundaryCondition::Periodic {
            k = k.min(n - k);
        }
        acc += (k * k) as f64;
    }
    libm::sqrt(acc) * grid.h()
}

fn check_params(sigma: f64, p: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(alloc::format!(
            "sigma must be positive (got {sigma})"
        )));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Config(alloc::format!(
            "p must be at least 1 (got {p})"
        )));
    }
    Ok(())
}

fn check_cap(grid: &Grid) -> Result<()> {
    if grid.cells() > SEMINORM_CELL_CAP {
        return Err(Error::Size {
            size: grid.cells(),
            cap: SEMINORM_CELL_CAP,
        });
    }
    Ok(())
}

#[inline]
fn abs_pow(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else if p == 1.0 {
        x.abs()
    } else {
        libm::pow(x.abs(), p)
    }
}

/// Pairwise weights `dist^{−(σp + d)}` for the given grid. In 1d with
/// periodic boundaries these depend only on the index offset.
struct Kernel {
    grid: Grid,
    p: f64,
    offsets: Option<Vec<f64>>,
    exponent: f64,
}

impl Kernel {
    fn new(grid: &Grid, sigma: f64, p: f64) -> Self {
        let exponent = sigma * p + grid.dim() as f64;
        let offsets = (grid.dim() == 1).then(|| {
            let n = grid.n();
            (0..n)
                .map(|k| {
                    if k == 0 {
                        return 0.0;
                    }
                    let dist = if grid.bc() == BoundaryCondition::Periodic {
                        k.min(n - k)
                    } else {
                        k
                    };
                    libm::pow(dist as f64 * grid.h(), -exponent)
                })
                .collect()
        });
        Self {
            grid: *grid,
            p,
            offsets,
            exponent,
        }
    }

    /// `h^{2d} Σ_{i≠j} |wᵢ − wⱼ|^p / dist(i,j)^{σp+d}`.
    fn double_sum(&self, w: &[f64]) -> f64 {
        let vol = self.grid.cell_volume();
        let n = w.len();
        let mut acc = 0.0;
        match &self.offsets {
            Some(weights) => {
                for i in 0..n {
                    let wi = w[i];
                    let mut row = 0.0;
                    for j in (i + 1)..n {
                        row += abs_pow(wi - w[j], self.p) * weights[j - i];
                    }
                    acc += row;
                }
            }
            None => {
                for i in 0..n {
                    let mut row = 0.0;
                    for j in (i + 1)..n {
                        let d = cell_distance(&self.grid, i, j);
                        row += abs_pow(w[i] - w[j], self.p) * libm::pow(d, -self.exponent);
                    }
                    acc += row;
                }
            }
        }
        2.0 * acc * vol * vol
    }
}

/// Discrete Sobolev-Slobodetskii seminorm
/// `(h^{2d} Σ_{i≠j} |wᵢ − wⱼ|^p / dist(i,j)^{σp+d})^{1/p}`.
pub fn slobodetskii_seminorm(w: &Field, sigma: f64, p: f64) -> Result<f64> {
    check_params(sigma, p)?;
    check_cap(w.grid())?;
    let kernel = Kernel::new(w.grid(), sigma, p);
    Ok(libm::pow(kernel.double_sum(w.values()), 1.0 / p))
}

/// `(‖w‖_p^p + |w|_{σ,p}^p)^{1/p}`, the inner norm of [`spacetime_norm`].
pub fn sobolev_norm(w: &Field, sigma: f64, p: f64) -> Result<f64> {
    check_params(sigma, p)?;
    check_cap(w.grid())?;
    let kernel = Kernel::new(w.grid(), sigma, p);
    Ok(libm::pow(
        inner_pow(&kernel, w.grid(), w.values(), p),
        1.0 / p,
    ))
}

fn inner_pow(kernel: &Kernel, grid: &Grid, w: &[f64], p: f64) -> f64 {
    libm::pow(lp_of(grid, w, p), p) + kernel.double_sum(w)
}

/// Composite `W^{σₜ,p}(0,T; W^{σₓ,p})` norm of a trajectory:
///
/// ```text
/// ( Σₙ τ‖u(tₙ)‖ᵖ + Σ_{n≠m} τ² ‖u(tₙ) − u(tₘ)‖ᵖ / |tₙ − tₘ|^{1+σₜp} )^{1/p}
/// ```
///
/// over the states `n = 1..N`; `σₜ = 0` drops the double sum.
pub fn spacetime_norm(traj: &Trajectory, sigma_t: f64, sigma_x: f64, p: f64) -> Result<f64> {
    check_params(sigma_x, p)?;
    if !(0.0..1.0).contains(&sigma_t) {
        return Err(Error::Config(alloc::format!(
            "sigma_t must lie in [0, 1) (got {sigma_t})"
        )));
    }
    let grid = traj.grid;
    check_cap(&grid)?;
    let kernel = Kernel::new(&grid, sigma_x, p);
    let tau = traj.tau;
    let levels = &traj.states[1..];
    let mut acc: f64 = levels
        .iter()
        .map(|s| tau * inner_pow(&kernel, &grid, s.values(), p))
        .sum();
    if sigma_t > 0.0 {
        let pairs = levels.len() * levels.len() / 2 * grid.cells() * grid.cells() / 2;
        if pairs > TIME_PAIR_CAP {
            return Err(Error::Size {
                size: pairs,
                cap: TIME_PAIR_CAP,
            });
        }
        let times = &traj.times[1..];
        let mut diff = alloc::vec![0.0; grid.cells()];
        for n in 0..levels.len() {
            for m in (n + 1)..levels.len() {
                for (d, (a, b)) in diff
                    .iter_mut()
                    .zip(levels[n].values().iter().zip(levels[m].values()))
                {
                    *d = a - b;
                }
                let gap = (times[n] - times[m]).abs();
                acc += 2.0 * tau * tau * inner_pow(&kernel, &grid, &diff, p)
                    / libm::pow(gap, 1.0 + sigma_t * p);
            }
        }
    }
    Ok(libm::pow(acc, 1.0 / p))
}

/// Quintic smoothstep cutoff: 1 on `r ≤ 1`, 0 on `r ≥ 3/2`.
pub fn cutoff(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= 1.5 {
        0.0
    } else {
        let t = (1.5 - r) / 0.5;
        t * t * t * (t * (6.0 * t - 15.0) + 10.0)
    }
}

/// Highest block index retained on `grid`, `log₂ n − 2`.
pub fn max_block(grid: &Grid) -> usize {
    (grid.n().trailing_zeros() as usize).saturating_sub(2)
}

/// Multiplier of block `j` at angular frequency modulus `xi`. Block 0 is the
/// low-pass cutoff, block `j` is `χ(2^{−j}ξ) − χ(2^{1−j}ξ)`, and the last block
/// collects every remaining frequency.
pub fn block_multiplier(j: usize, last: usize, xi: f64) -> f64 {
    let low = |k: usize| cutoff(xi / libm::ldexp(1.0, k as i32));
    let upper = if j == last { 1.0 } else { low(j) };
    let lower = if j == 0 { 0.0 } else { low(j - 1) };
    upper - lower
}

fn angular_frequency(grid: &Grid, flat: usize) -> f64 {
    let mi = grid.multi_index(flat);
    let scale = core::f64::consts::PI / grid.half_width();
    let mut acc = 0.0;
    for &index in &mi[..grid.dim()] {
        let k = signed_frequency(index, grid.n()) as f64 * scale;
        acc += k * k;
    }
    libm::sqrt(acc)
}

/// `(j, 2^{sj} ‖Δⱼ w‖_{L^p})` for `j = 0..=log₂ n − 2`.
pub fn besov_block_norms(w: &Field, s: f64, p: f64) -> Result<Vec<(usize, f64)>> {
    let grid = *w.grid();
    if grid.bc() != BoundaryCondition::Periodic {
        return Err(Error::BoundaryCondition);
    }
    if !grid.n().is_power_of_two() {
        return Err(Error::Size {
            size: grid.n(),
            cap: grid.n().next_power_of_two(),
        });
    }
    if !(p >= 1.0) {
        return Err(Error::Config(alloc::format!(
            "p must be at least 1 (got {p})"
        )));
    }
    let mut spectrum: Vec<Complex> = w.values().iter().map(|v| Complex::new(*v, 0.0)).collect();
    fft_nd(&mut spectrum, grid.dim(), grid.n(), false);
    let xi: Vec<f64> = (0..grid.cells())
        .map(|i| angular_frequency(&grid, i))
        .collect();
    let last = max_block(&grid);
    let scale = 1.0 / grid.cells() as f64;
    let mut out = Vec::with_capacity(last + 1);
    let mut block = alloc::vec![Complex::ZERO; grid.cells()];
    for j in 0..=last {
        for ((b, c), x) in block.iter_mut().zip(&spectrum).zip(&xi) {
            let m = block_multiplier(j, last, *x) * scale;
            *b = Complex::new(c.re * m, c.im * m);
        }
        fft_nd(&mut block, grid.dim(), grid.n(), true);
        let real: Vec<f64> = block.iter().map(|c| c.re).collect();
        out.push((j, libm::pow(2.0, s * j as f64) * lp_of(&grid, &real, p)));
    }
    Ok(out)
}

/// `(Σⱼ bⱼ^q)^{1/q}` of block norms.
pub fn block_aggregate(blocks: &[(usize, f64)], q: f64) -> f64 {
    libm::pow(
        blocks.iter().map(|(_, b)| libm::pow(*b, q)).sum::<f64>(),
        1.0 / q,
    )
}

/// `(κₜ, κₓ) = ((b+1−p)/(pb), 2(p−1)/(pb))` for the biofilm exponent `b`.
pub fn kappa_biofilm(b: f64, p: f64) -> (f64, f64) {
    ((b + 1.0 - p) / (p * b), 2.0 * (p - 1.0) / (p * b))
}

/// `(κₜ, κₓ) = ((m−p)/(p(m−1)), 2(p−1)/(p(m−1)))` for `|D(r)| ≥ c|r|^{m−1}`.
pub fn kappa_degenerate(m: f64, p: f64) -> (f64, f64) {
    ((m - p) / (p * (m - 1.0)), 2.0 * (p - 1.0) / (p * (m - 1.0)))
}

/// Critical exponents of a model through its degeneracy exponent.
pub fn kappa_for_model(model: &PhiModel, p: f64) -> Result<(f64, f64)> {
    let m = model
        .degeneracy_exponent()
        .ok_or_else(|| Error::Model("profile has no degeneracy exponent".into()))?;
    if !(m > 1.0) {
        return Err(Error::Model(alloc::format!(
            "degeneracy exponent must exceed 1 (got {m})"
        )));
    }
    Ok(kappa_degenerate(m, p))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Growing,
    Inconclusive,
}

impl Verdict {
    pub const STABLE_RATIO: f64 = 1.25;
    pub const GROWING_RATIO: f64 = 2.0;

    /// Stable if every successive ratio is at most 1.25, growing if every one
    /// is at least 2.
    pub fn classify(values: &[f64]) -> Self {
        let ratios: Vec<f64> = values.windows(2).map(|w| w[1] / w[0]).collect();
        if ratios.is_empty() {
            Verdict::Inconclusive
        } else if ratios.iter().all(|r| *r <= Self::STABLE_RATIO) {
            Verdict::Stable
        } else if ratios.iter().all(|r| *r >= Self::GROWING_RATIO) {
            Verdict::Growing
        } else {
            Verdict::Inconclusive
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Stable => "stable",
            Verdict::Growing => "growing",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Growth exponents `log₂(v_{ℓ+1}/v_ℓ)` between successive levels.
pub fn growth_rates(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| libm::log2(w[1] / w[0])).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanEntry {
    pub sigma_t: f64,
    pub sigma_x: f64,
    /// One value per refinement level.
    pub values: Vec<f64>,
    pub verdict: Verdict,
    pub growth: Vec<f64>,
    /// `σₓ` minus the last growth exponent: the spatial smoothness the
    /// observed growth rate points to.
    pub fitted_critical: Option<f64>,
    pub below_kappa: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularityReport {
    pub p: f64,
    pub sigma_t: Vec<f64>,
    pub sigma_x: Vec<f64>,
    pub kappa_t: f64,
    pub kappa_x: f64,
    pub levels: usize,
    pub entries: Vec<ScanEntry>,
}

impl RegularityReport {
    pub fn entry(&self, sigma_t: f64, sigma_x: f64) -> Option<&ScanEntry> {
        self.entries
            .iter()
            .find(|e| e.sigma_t == sigma_t && e.sigma_x == sigma_x)
    }

    /// True when every entry strictly below `(κₜ, κₓ)` is stable.
    pub fn stable_below_kappa(&self) -> bool {
        self.entries
            .iter()
            .filter(|e| e.below_kappa)
            .all(|e| e.verdict == Verdict::Stable)
    }
}

/// Evaluates [`spacetime_norm`] on every `(σₜ, σₓ)` pair for runs at
/// successive refinement levels and classifies the trend.
pub fn exponent_scan(
    runs: &[Trajectory],
    p: f64,
    sigma_t: &[f64],
    sigma_x: &[f64],
) -> Result<RegularityReport> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Config("need at least one run".into()))?;
    let (kappa_t, kappa_x) = kappa_for_model(&first.model, p)?;
    if let PhiKind::Biofilm { b, .. } = first.model.kind() {
        if !(2.0..=b + 1.0).contains(&p) {
            return Err(Error::Config(alloc::format!(
                "p must lie in [2, b+1] = [2, {}] (got {p})",
                b + 1.0
            )));
        }
    }
    let mut entries = Vec::with_capacity(sigma_t.len() * sigma_x.len());
    for &st in sigma_t {
        for &sx in sigma_x {
            let values = runs
                .iter()
                .map(|r| spacetime_norm(r, st, sx, p))
                .collect::<Result<Vec<_>>>()?;
            entries.push(scan_entry(st, sx, values, kappa_t, kappa_x));
        }
    }
    Ok(RegularityReport {
        p,
        sigma_t: sigma_t.to_vec(),
        sigma_x: sigma_x.to_vec(),
        kappa_t,
        kappa_x,
        levels: runs.len(),
        entries,
    })
}

/// Builds one scan entry from values at successive refinement levels.
pub fn scan_entry(
    sigma_t: f64,
    sigma_x: f64,
    values: Vec<f64>,
    kappa_t: f64,
    kappa_x: f64,
) -> ScanEntry {
    let verdict = Verdict::classify(&values);
    let growth = growth_rates(&values);
    let fitted_critical = growth.last().map(|r| sigma_x - r);
    let below_kappa = (sigma_t == 0.0 || sigma_t < kappa_t) && sigma_x < kappa_x;
    ScanEntry {
        sigma_t,
        sigma_x,
        values,
        verdict,
        growth,
        fitted_critical,
        below_kappa,
    }
}
