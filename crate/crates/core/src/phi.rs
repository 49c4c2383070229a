//! Maximal monotone diffusion profiles `φ: I → ℝ` with `φ(0) = 0`.
//!
//! A profile carries its derivative `D = φ'`, its primitive `Φ` (with
//! `Φ(0) = 0`) and its inverse `β = φ⁻¹`. Three families are supported:
//!
//! * biofilm, `D(z) = |z|ᵇ / (1 − |z|)ᵃ` on `(−1, 1)` with `a ≥ 1`, `b > 0`;
//! * porous medium, `φ(u) = |u|^{m−1} u` on `ℝ` with `m > 1`;
//! * tabulated, a dense piecewise-linear table of `D` on `ℝ` with exact
//!   antiderivatives. This is how the smooth non-degenerate approximations
//!   `φₖ` are realized.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::quad::{adaptive_simpson, GaussLegendre};

/// Arguments closer than this to a finite endpoint are rejected.
pub const ENDPOINT_GUARD: f64 = 1e-14;

/// Open interval `(lo, hi)` containing zero; endpoints may be infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REAL_LINE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// The closed sub-interval `[lo + δ, hi − δ]` used to keep iterates inside `I`,
    /// with `δ = 1e−12 (hi − lo)`; infinite endpoints stay infinite.
    pub fn safe_bounds(&self) -> (f64, f64) {
        let delta = if self.is_bounded() {
            1e-12 * self.width()
        } else {
            0.0
        };
        (self.lo + delta, self.hi - delta)
    }

    pub fn clamp_inside(&self, x: f64) -> f64 {
        let (lo, hi) = self.safe_bounds();
        x.clamp(lo, hi)
    }
}

/// Piecewise-linear table of `D` on uniform nodes with exact integrals for `φ` and `Φ`.
///
/// Node `origin` sits exactly at zero. Outside the table `D` is extended by its end
/// values, so `φ` is affine and `Φ` quadratic there.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    x0: f64,
    h: f64,
    d: Vec<f64>,
    phi: Vec<f64>,
    prim: Vec<f64>,
}

impl Table {
    /// Builds the table from `D` sampled at `x_i = (i − origin) h`.
    pub fn from_diffusivity(h: f64, origin: usize, d: Vec<f64>) -> Result<Self> {
        if !(h > 0.0) || d.len() < 2 || origin >= d.len() {
            return Err(Error::Config(format!(
                "table needs h > 0, at least two nodes and origin inside (h={h}, len={}, origin={origin})",
                d.len()
            )));
        }
        if d.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(
                "tabulated D must be finite and nonnegative".into(),
            ));
        }
        let n = d.len();
        let mut phi = alloc::vec![0.0; n];
        let mut prim = alloc::vec![0.0; n];
        for i in origin..n - 1 {
            phi[i + 1] = phi[i] + 0.5 * h * (d[i] + d[i + 1]);
            prim[i + 1] = prim[i] + phi[i] * h + h * h * (2.0 * d[i] + d[i + 1]) / 6.0;
        }
        for i in (1..=origin).rev() {
            phi[i - 1] = phi[i] - 0.5 * h * (d[i - 1] + d[i]);
            prim[i - 1] = prim[i] - (phi[i - 1] * h + h * h * (2.0 * d[i - 1] + d[i]) / 6.0);
        }
        Ok(Self {
            x0: -(origin as f64) * h,
            h,
            d,
            phi,
            prim,
        })
    }

    /// Constant `D ≡ c`, i.e. the linear profile `φ(u) = c u`.
    pub fn constant(c: f64) -> Result<Self> {
        Self::from_diffusivity(1.0, 1, alloc::vec![c, c, c])
    }

    pub fn nodes(&self) -> usize {
        self.d.len()
    }

    pub fn node(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.h
    }

    pub fn diffusivity_samples(&self) -> &[f64] {
        &self.d
    }

    fn x_last(&self) -> f64 {
        self.node(self.d.len() - 1)
    }

    fn locate(&self, z: f64) -> (usize, f64) {
        let last = self.d.len() - 2;
        let c = libm::floor((z - self.x0) / self.h);
        let c = if c < 0.0 { 0 } else { (c as usize).min(last) };
        (c, z - self.node(c))
    }

    fn diffusivity(&self, z: f64) -> f64 {
        if z <= self.x0 {
            return self.d[0];
        }
        if z >= self.x_last() {
            return self.d[self.d.len() - 1];
        }
        let (c, s) = self.locate(z);
        self.d[c] + (self.d[c + 1] - self.d[c]) * s / self.h
    }

    fn phi(&self, z: f64) -> f64 {
        let n = self.d.len();
        if z <= self.x0 {
            return self.phi[0] + self.d[0] * (z - self.x0);
        }
        if z >= self.x_last() {
            return self.phi[n - 1] + self.d[n - 1] * (z - self.x_last());
        }
        let (c, s) = self.locate(z);
        let slope = (self.d[c + 1] - self.d[c]) / self.h;
        self.phi[c] + self.d[c] * s + 0.5 * slope * s * s
    }

    fn primitive(&self, z: f64) -> f64 {
        let n = self.d.len();
        if z <= self.x0 {
            let s = z - self.x0;
            return self.prim[0] + self.phi[0] * s + 0.5 * self.d[0] * s * s;
        }
        if z >= self.x_last() {
            let s = z - self.x_last();
            return self.prim[n - 1] + self.phi[n - 1] * s + 0.5 * self.d[n - 1] * s * s;
        }
        let (c, s) = self.locate(z);
        let slope = (self.d[c + 1] - self.d[c]) / self.h;
        self.prim[c] + self.phi[c] * s + 0.5 * self.d[c] * s * s + slope * s * s * s / 6.0
    }

    fn beta(&self, w: f64) -> Result<f64> {
        let n = self.d.len();
        if w < self.phi[0] {
            if self.d[0] <= 0.0 {
                return Err(Error::Range { value: w });
            }
            return Ok(self.x0 + (w - self.phi[0]) / self.d[0]);
        }
        if w > self.phi[n - 1] {
            if self.d[n - 1] <= 0.0 {
                return Err(Error::Range { value: w });
            }
            return Ok(self.x_last() + (w - self.phi[n - 1]) / self.d[n - 1]);
        }
        // last c with phi[c] <= w
        let c = self
            .phi
            .partition_point(|p| *p <= w)
            .saturating_sub(1)
            .min(n - 2);
        let a = 0.5 * (self.d[c + 1] - self.d[c]) / self.h;
        let b = self.d[c];
        let gap = w - self.phi[c];
        if gap <= 0.0 {
            return Ok(self.node(c));
        }
        let disc = (b * b + 4.0 * a * gap).max(0.0);
        let denom = b + libm::sqrt(disc);
        let s = if denom > 0.0 { 2.0 * gap / denom } else { 0.0 };
        Ok(self.node(c) + s.min(self.h))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PhiKind {
    Biofilm { a: f64, b: f64 },
    Pme { m: f64 },
    Tabulated(Arc<Table>),
}

/// Immutable diffusion profile; cheap to clone and share across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiModel {
    kind: PhiKind,
    interval: Interval,
}

impl PhiModel {
    pub fn biofilm(a: f64, b: f64) -> Result<Self> {
        if !(a >= 1.0 && a.is_finite()) || !(b > 0.0 && b.is_finite()) {
            return Err(Error::Config(format!(
                "biofilm profile needs a >= 1 and b > 0 (a={a}, b={b})"
            )));
        }
        Ok(Self {
            kind: PhiKind::Biofilm { a, b },
            interval: Interval::new(-1.0, 1.0),
        })
    }

    pub fn pme(m: f64) -> Result<Self> {
        if !(m > 1.0 && m.is_finite()) {
            return Err(Error::Config(format!(
                "porous medium profile needs m > 1 (m={m})"
            )));
        }
        Ok(Self {
            kind: PhiKind::Pme { m },
            interval: Interval::REAL_LINE,
        })
    }

    pub fn tabulated(table: Table) -> Self {
        Self {
            kind: PhiKind::Tabulated(Arc::new(table)),
            interval: Interval::REAL_LINE,
        }
    }

    /// `φ(u) = c u`; the heat-equation sanity profile.
    pub fn linear(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Config(format!("linear profile needs c > 0 (c={c})")));
        }
        Ok(Self::tabulated(Table::constant(c)?))
    }

    pub fn kind(&self) -> &PhiKind {
        &self.kind
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    /// True for tabulated (smooth, non-degenerate) profiles.
    pub fn is_smooth(&self) -> bool {
        matches!(self.kind, PhiKind::Tabulated(_))
    }

    /// Porous-medium exponent `m` with `|D(r)| ≥ c|r|^{m−1}`, if the family has one.
    pub fn degeneracy_exponent(&self) -> Option<f64> {
        match self.kind {
            PhiKind::Biofilm { b, .. } => Some(b + 1.0),
            PhiKind::Pme { m } => Some(m),
            PhiKind::Tabulated(_) => None,
        }
    }

    fn check(&self, z: f64) -> Result<()> {
        let Interval { lo, hi } = self.interval;
        let bad = z.is_nan()
            || (lo.is_finite() && z - lo < ENDPOINT_GUARD)
            || (hi.is_finite() && hi - z < ENDPOINT_GUARD);
        if bad {
            Err(Error::Domain { value: z, lo, hi })
        } else {
            Ok(())
        }
    }

    pub fn eval_d(&self, z: f64) -> Result<f64> {
        self.check(z)?;
        Ok(self.diffusivity(z))
    }

    pub fn eval_phi(&self, rho: f64) -> Result<f64> {
        self.check(rho)?;
        Ok(self.phi(rho))
    }

    pub fn eval_primitive(&self, rho: f64) -> Result<f64> {
        self.check(rho)?;
        Ok(self.primitive(rho))
    }

    /// `β = φ⁻¹`. For bounded `I` the result is clamped to within
    /// [`ENDPOINT_GUARD`] of the endpoints.
    pub fn eval_beta(&self, w: f64) -> Result<f64> {
        if w.is_nan() {
            return Err(Error::Range { value: w });
        }
        match &self.kind {
            PhiKind::Biofilm { a, b } => Ok(biofilm_beta(*a, *b, w)),
            PhiKind::Pme { m } => Ok(libm::copysign(libm::pow(w.abs(), 1.0 / m), w)),
            PhiKind::Tabulated(t) => t.beta(w),
        }
    }

    /// `D(z)` without domain checks; `z` must lie in `I`.
    #[inline]
    pub fn diffusivity(&self, z: f64) -> f64 {
        match &self.kind {
            PhiKind::Biofilm { a, b } => {
                let r = z.abs();
                libm::pow(r, *b) / libm::pow(1.0 - r, *a)
            }
            PhiKind::Pme { m } => {
                if *m == 2.0 {
                    2.0 * z.abs()
                } else {
                    m * libm::pow(z.abs(), m - 1.0)
                }
            }
            PhiKind::Tabulated(t) => t.diffusivity(z),
        }
    }

    /// `φ(z)` without domain checks.
    #[inline]
    pub fn phi(&self, z: f64) -> f64 {
        match &self.kind {
            PhiKind::Biofilm { a, b } => libm::copysign(biofilm_incomplete(*a, *b, z.abs()), z),
            PhiKind::Pme { m } => {
                if *m == 2.0 {
                    z * z.abs()
                } else {
                    libm::copysign(libm::pow(z.abs(), *m), z)
                }
            }
            PhiKind::Tabulated(t) => t.phi(z),
        }
    }

    /// `Φ(z) = ∫₀^z φ` without domain checks.
    #[inline]
    pub fn primitive(&self, z: f64) -> f64 {
        match &self.kind {
            PhiKind::Biofilm { a, b } => {
                let r = z.abs();
                // integration by parts: Φ(r) = r φ_{a,b}(r) − φ_{a,b+1}(r)
                (r * biofilm_incomplete(*a, *b, r) - biofilm_incomplete(*a, *b + 1.0, r)).max(0.0)
            }
            PhiKind::Pme { m } => libm::pow(z.abs(), m + 1.0) / (m + 1.0),
            PhiKind::Tabulated(t) => t.primitive(z),
        }
    }
}

fn is_small_integer(x: f64) -> bool {
    x == libm::floor(x) && x <= 64.0
}

/// `∫₀^r zᵇ (1 − z)^{−a} dz` for `r ∈ [0, 1)`.
pub(crate) fn biofilm_incomplete(a: f64, b: f64, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    if r <= 0.5 {
        return hypergeometric_series(a, b, r);
    }
    if is_small_integer(a) && is_small_integer(b) {
        return partial_fractions(a as i64, b as i64, r);
    }
    // z = 1 − e^{−s}: the endpoint singularity becomes exponential growth in s
    let head = hypergeometric_series(a, b, 0.5);
    let s0 = core::f64::consts::LN_2;
    let s1 = -libm::log1p(-r);
    let integrand = |s: f64| libm::pow(-libm::expm1(-s), b) * libm::exp((a - 1.0) * s);
    head + adaptive_simpson(integrand, s0, s1, 1e-13)
}

/// `Σₙ (a)ₙ/n! · r^{n+b+1}/(n+b+1)`, convergent for `r < 1`.
fn hypergeometric_series(a: f64, b: f64, r: f64) -> f64 {
    let mut coef = 1.0;
    let mut sum = 0.0;
    for n in 0..2000 {
        let nf = n as f64;
        let term = coef / (nf + b + 1.0);
        sum += term;
        if term < 1e-17 * sum && nf > a {
            break;
        }
        coef *= (a + nf) / (nf + 1.0) * r;
    }
    sum * libm::pow(r, b + 1.0)
}

/// Closed form for integer `a`, `b` via `s = 1 − z` and the binomial expansion of `(1 − s)ᵇ`.
fn partial_fractions(a: i64, b: i64, r: f64) -> f64 {
    let q = 1.0 - r;
    let mut total = 0.0;
    let mut binom = 1.0;
    for j in 0..=b {
        let e = j - a + 1;
        let piece = if e == 0 {
            -libm::log(q)
        } else {
            (1.0 - libm::pow(q, e as f64)) / e as f64
        };
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * binom * piece;
        binom = binom * (b - j) as f64 / (j + 1) as f64;
    }
    total
}

fn biofilm_beta(a: f64, b: f64, w: f64) -> f64 {
    if w == 0.0 {
        return 0.0;
    }
    let target = w.abs();
    let top = 1.0 - ENDPOINT_GUARD;
    let phi_top = biofilm_incomplete(a, b, top);
    if target >= phi_top {
        return libm::copysign(top, w);
    }
    let phi = |r: f64| biofilm_incomplete(a, b, r);
    let dphi = |r: f64| libm::pow(r, b) / libm::pow(1.0 - r, a);
    let (mut lo, mut hi) = (0.0_f64, top);
    let guess = libm::pow((b + 1.0) * target, 1.0 / (b + 1.0));
    let mut r = if guess > 0.0 && guess < 0.5 {
        guess
    } else {
        0.5
    };
    for _ in 0..300 {
        let f = phi(r) - target;
        if f == 0.0 {
            return libm::copysign(r, w);
        }
        if f < 0.0 {
            lo = r;
        } else {
            hi = r;
        }
        let d = dphi(r);
        let mut next = if d > 0.0 { r - f / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - r).abs() <= 2.0 * f64::EPSILON * r || hi - lo <= 2.0 * f64::EPSILON * hi {
            r = next;
            break;
        }
        r = next;
    }
    libm::copysign(r, w)
}

/// Result of [`check_growth_alpha`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthCheck {
    pub holds: bool,
    /// Sampled `sup |φ(r)| / |r|^α` over the compact set; `+∞` when the ratio diverges.
    pub constant: f64,
}

/// Samples `|φ(r)| ≤ C_J |r|^α` on a compact `J ⋐ I`.
///
/// A uniform 10⁴-point sample gives the constant; if `0 ∈ J` the ratio is also
/// tracked along `r = r₀ 2^{−j}`, and continued power-law growth there means the
/// bound fails.
pub fn check_growth_alpha(model: &PhiModel, alpha: f64, j: Interval) -> Result<GrowthCheck> {
    model.check(j.lo)?;
    model.check(j.hi)?;
    let ratio = |r: f64| model.phi(r).abs() / libm::pow(r.abs(), alpha);
    let samples = 10_000;
    let mut sup = 0.0_f64;
    for i in 0..samples {
        let r = j.lo + (j.hi - j.lo) * (i as f64 + 0.5) / samples as f64;
        if r != 0.0 {
            sup = sup.max(ratio(r));
        }
    }
    if j.lo <= 0.0 && j.hi >= 0.0 {
        for side in [j.hi, j.lo] {
            if side == 0.0 {
                continue;
            }
            let at = |k: i32| ratio(side * libm::exp2(-(k as f64)));
            let early = at(30);
            let late = at(40);
            for k in 0..=40 {
                sup = sup.max(at(k));
            }
            // power-law growth of at least 2^{0.05} per halving counts as divergence
            if late > early * libm::exp2(0.05 * 10.0) || !late.is_finite() {
                return Ok(GrowthCheck {
                    holds: false,
                    constant: f64::INFINITY,
                });
            }
        }
    }
    Ok(GrowthCheck {
        holds: sup.is_finite(),
        constant: sup,
    })
}

/// Divergence test for `∫_R^∞ ρ^{d−1} β(ρ^{2−d}) dρ` given any inverse profile `beta`.
///
/// Partial integrals over `[R, 2ʲR]`, `j = 1..=budget`, are accumulated; the
/// integral is declared divergent when the last doubling still raises the partial
/// sum by more than 10⁻³ relative.
pub fn integral_diverges<B: Fn(f64) -> f64>(beta: B, dim: u32, r0: f64, budget: u32) -> bool {
    assert!(dim >= 3 && r0 > 0.0 && budget >= 1);
    let gl = GaussLegendre::new(16);
    let d = dim as f64;
    let integrand = |rho: f64| libm::pow(rho, d - 1.0) * beta(libm::pow(rho, 2.0 - d));
    let mut total = 0.0;
    let mut last_increment = 0.0;
    for j in 1..=budget {
        let a = r0 * libm::exp2((j - 1) as f64);
        let b = 2.0 * a;
        last_increment = gl.integrate(&integrand, a, b, 8);
        total += last_increment;
        if !total.is_finite() {
            return true;
        }
    }
    total > 0.0 && last_increment / total > 1e-3
}

pub fn check_divergence_condition(
    model: &PhiModel,
    dim: u32,
    r0: f64,
    budget: u32,
) -> Result<bool> {
    if dim < 3 {
        return Err(Error::Config(format!(
            "divergence condition needs d >= 3 (d={dim})"
        )));
    }
    if !(r0 > 0.0) || budget == 0 {
        return Err(Error::Config(
            "divergence condition needs R > 0 and budget >= 1".into(),
        ));
    }
    let beta = |s: f64| model.eval_beta(s).unwrap_or(f64::NAN);
    Ok(integral_diverges(beta, dim, r0, budget))
}

/// Normalized bump `exp(−1/(1 − x²))` on `(−1, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mollifier {
    normalization: f64,
}

impl Mollifier {
    pub fn standard() -> Self {
        let raw = adaptive_simpson(bump_raw, -1.0, 1.0, 1e-16);
        Self {
            normalization: 1.0 / raw,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        bump_raw(x) * self.normalization
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }
}

pub(crate) fn bump_raw(x: f64) -> f64 {
    let q = 1.0 - x * x;
    if q <= 0.0 {
        0.0
    } else {
        libm::exp(-1.0 / q)
    }
}

/// Parameters of the smooth approximation `φₖ`: `Dₖ = (2^{−k} + 1_{Iₖ} D) * ηₖ`
/// with `ηₖ = 2ᵏ η(2ᵏ ·)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothApproxParams {
    pub k: u32,
    pub mollifier: Mollifier,
    /// `Iₖ = (aₖ, bₖ) ⋐ I`.
    pub inner: Interval,
    /// Table nodes per mollifier radius.
    pub nodes_per_radius: usize,
}

impl SmoothApproxParams {
    /// `aₖ = lo + 2^{−k}(0 − lo)`, `bₖ = hi − 2^{−k} hi` for finite endpoints and
    /// `±2ᵏ` for infinite ones.
    pub fn standard(model: &PhiModel, k: u32) -> Self {
        let scale = libm::exp2(-(k as f64));
        let Interval { lo, hi } = model.interval();
        let a = if lo.is_finite() {
            lo - scale * lo
        } else {
            -libm::exp2(k as f64)
        };
        let b = if hi.is_finite() {
            hi - scale * hi
        } else {
            libm::exp2(k as f64)
        };
        Self {
            k,
            mollifier: Mollifier::standard(),
            inner: Interval::new(a, b),
            nodes_per_radius: 16,
        }
    }

    pub fn radius(&self) -> f64 {
        libm::exp2(-(self.k as f64))
    }
}

const MAX_TABLE_NODES: usize = 1 << 20;

/// Tabulates `φₖ` from the profile and the approximation parameters.
pub fn build_smooth_approx(model: &PhiModel, params: &SmoothApproxParams) -> Result<PhiModel> {
    let Interval { lo: a_k, hi: b_k } = params.inner;
    let outer = model.interval();
    if params.k == 0 || params.nodes_per_radius == 0 {
        return Err(Error::Config(
            "approximation index k and nodes_per_radius must be >= 1".into(),
        ));
    }
    if !(a_k < 0.0
        && b_k > 0.0
        && a_k > outer.lo
        && b_k < outer.hi
        && a_k.is_finite()
        && b_k.is_finite())
    {
        return Err(Error::Config(format!(
            "I_k = ({a_k}, {b_k}) must be a bounded interval around 0 compactly inside ({}, {})",
            outer.lo, outer.hi
        )));
    }
    let r = params.radius();
    if r > 0.5 * (b_k - a_k) {
        return Err(Error::Config(format!(
            "mollifier radius {r} exceeds the half-width of I_k = ({a_k}, {b_k})"
        )));
    }
    let span = (b_k + r) - (a_k - r);
    let h = (r / params.nodes_per_radius as f64).max(span / MAX_TABLE_NODES as f64);
    let below = libm::ceil((r - a_k) / h) as usize;
    let above = libm::ceil((b_k + r) / h) as usize;
    let gl = GaussLegendre::new(16);
    let floor = libm::exp2(-(params.k as f64));
    let eta = params.mollifier;
    let d = (0..=below + above)
        .map(|i| {
            let x = (i as f64 - below as f64) * h;
            // (1_{I_k} D) * η_k at x, over s with x − r s ∈ I_k, split at the kink x − r s = 0
            let s_lo = ((x - b_k) / r).max(-1.0);
            let s_hi = ((x - a_k) / r).min(1.0);
            let mut acc = 0.0;
            if s_lo < s_hi {
                let f = |s: f64| eta.eval(s) * model.diffusivity(x - r * s);
                let kink = x / r;
                if kink > s_lo && kink < s_hi {
                    acc += gl.integrate(f, s_lo, kink, 4) + gl.integrate(f, kink, s_hi, 4);
                } else {
                    acc += gl.integrate(f, s_lo, s_hi, 4);
                }
            }
            floor + acc.max(0.0)
        })
        .collect();
    Ok(PhiModel::tabulated(Table::from_diffusivity(h, below, d)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn biofilm11() -> PhiModel {
        PhiModel::biofilm(1.0, 1.0).unwrap()
    }

    #[test]
    fn diffusivity_examples() {
        assert_eq!(biofilm11().eval_d(0.5).unwrap(), 1.0);
        assert_eq!(
            PhiModel::biofilm(2.0, 1.0).unwrap().eval_d(0.5).unwrap(),
            2.0
        );
        for m in [
            biofilm11(),
            PhiModel::pme(2.0).unwrap(),
            PhiModel::pme(3.5).unwrap(),
        ] {
            assert_eq!(m.eval_d(0.0).unwrap(), 0.0);
        }
        let m = PhiModel::biofilm(1.5, 2.5).unwrap();
        assert_eq!(m.eval_d(-0.3).unwrap(), m.eval_d(0.3).unwrap());
    }

    #[test]
    fn domain_errors_at_and_past_endpoints() {
        let m = biofilm11();
        assert!(matches!(m.eval_d(1.0), Err(Error::Domain { .. })));
        assert!(matches!(m.eval_phi(-1.5), Err(Error::Domain { .. })));
        assert!(matches!(
            m.eval_primitive(1.0 - 1e-15),
            Err(Error::Domain { .. })
        ));
        assert!(m.eval_phi(1.0 - 1e-13).is_ok());
        assert!(PhiModel::pme(2.0).unwrap().eval_phi(1e6).is_ok());
    }

    #[test]
    fn constructor_validation() {
        assert!(PhiModel::biofilm(0.5, 1.0).is_err());
        assert!(PhiModel::biofilm(1.0, 0.0).is_err());
        assert!(PhiModel::pme(1.0).is_err());
        assert!(PhiModel::linear(0.0).is_err());
    }

    #[test]
    fn phi_and_primitive_values() {
        let m = biofilm11();
        assert_eq!(m.eval_phi(0.0).unwrap(), 0.0);
        // −ρ − ln(1 − ρ) and −ρ²/2 + (1 − ρ)ln(1 − ρ) + ρ at ρ = 1/2
        assert!((m.eval_phi(0.5).unwrap() - 0.1931471806).abs() < 1e-10);
        assert!((m.eval_primitive(0.5).unwrap() - 0.0284264097).abs() < 1e-10);
        let pme = PhiModel::pme(2.0).unwrap();
        assert_eq!(pme.eval_phi(0.5).unwrap(), 0.25);
        assert_eq!(
            pme.eval_primitive(-0.5).unwrap(),
            pme.eval_primitive(0.5).unwrap()
        );
        assert_eq!(m.eval_primitive(0.0).unwrap(), 0.0);
    }

    #[test]
    fn series_and_closed_form_agree_at_the_switch() {
        for (a, b) in [(1, 1), (1, 2), (2, 1), (3, 2), (2, 4)] {
            let s = hypergeometric_series(a as f64, b as f64, 0.5);
            let p = partial_fractions(a, b, 0.5);
            assert!(
                (s - p).abs() <= 1e-14 * s.abs().max(1e-300) * 10.0,
                "a={a} b={b}: {s} vs {p}"
            );
        }
    }

    #[test]
    fn non_integer_exponents_match_direct_quadrature() {
        let (a, b) = (1.5, 0.7);
        for r in [0.3, 0.6, 0.9, 0.99] {
            let direct =
                adaptive_simpson(|z| libm::pow(z, b) / libm::pow(1.0 - z, a), 0.0, r, 1e-14);
            let v = biofilm_incomplete(a, b, r);
            assert!(
                (v - direct).abs() < 1e-9 * direct.max(1.0),
                "r={r}: {v} vs {direct}"
            );
        }
    }

    #[test]
    fn beta_inverts_phi() {
        let m = biofilm11();
        assert_eq!(m.eval_beta(0.0).unwrap(), 0.0);
        assert!((m.eval_beta(0.1931471806).unwrap() - 0.5).abs() < 1e-9);
        for i in 0..=1000 {
            let rho = -0.99 + 1.98 * i as f64 / 1000.0;
            let back = m.eval_beta(m.eval_phi(rho).unwrap()).unwrap();
            assert!((back - rho).abs() <= 1e-10, "rho={rho} back={back}");
        }
        let pme = PhiModel::pme(3.0).unwrap();
        assert!((pme.eval_beta(pme.eval_phi(-0.7).unwrap()).unwrap() + 0.7).abs() < 1e-14);
        // huge arguments clamp next to the endpoint
        assert_eq!(m.eval_beta(1e6).unwrap(), 1.0 - ENDPOINT_GUARD);
    }

    #[test]
    fn growth_condition_examples() {
        let m = biofilm11();
        let j = Interval::new(-0.9, 0.9);
        assert!(check_growth_alpha(&m, 2.0, j).unwrap().holds);
        let fail = check_growth_alpha(&m, 3.0, j).unwrap();
        assert!(!fail.holds && fail.constant.is_infinite());
        let pme = PhiModel::pme(2.0).unwrap();
        let g = check_growth_alpha(&pme, 2.0, Interval::new(-3.0, 5.0)).unwrap();
        assert!(g.holds && (g.constant - 1.0).abs() < 1e-12);
        // away from zero any exponent holds
        assert!(
            check_growth_alpha(&m, 7.0, Interval::new(0.2, 0.8))
                .unwrap()
                .holds
        );
    }

    #[test]
    fn divergence_condition_examples() {
        assert!(check_divergence_condition(&biofilm11(), 3, 1.0, 30).unwrap());
        assert!(check_divergence_condition(&PhiModel::pme(2.0).unwrap(), 3, 1.0, 30).unwrap());
        // β(s) = s⁴ gives ρ²·ρ⁻⁴, integrable
        assert!(!integral_diverges(|s| s * s * s * s, 3, 1.0, 30));
        // β(s) = s³ gives ρ²·ρ⁻³ = 1/ρ, a logarithmic divergence
        assert!(integral_diverges(|s| s * s * s, 3, 1.0, 30));
        assert!(check_divergence_condition(&biofilm11(), 2, 1.0, 30).is_err());
    }

    #[test]
    fn mollifier_is_normalized() {
        let eta = Mollifier::standard();
        let total = adaptive_simpson(|x| eta.eval(x), -1.0, 1.0, 1e-16);
        assert!((total - 1.0).abs() < 1e-12);
        let gl = GaussLegendre::new(16);
        assert!((gl.integrate(|x| eta.eval(x), -1.0, 1.0, 16) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standard_inner_intervals_grow_to_the_endpoints() {
        let m = biofilm11();
        let mut prev = SmoothApproxParams::standard(&m, 1).inner;
        for k in 2..12 {
            let cur = SmoothApproxParams::standard(&m, k).inner;
            assert!(cur.lo < prev.lo && cur.hi > prev.hi && cur.hi < 1.0);
            prev = cur;
        }
        let p = SmoothApproxParams::standard(&PhiModel::pme(2.0).unwrap(), 3);
        assert_eq!(p.inner, Interval::new(-8.0, 8.0));
    }

    #[test]
    fn smooth_approximation_structure() {
        let m = biofilm11();
        for k in [2u32, 5, 8] {
            let approx = build_smooth_approx(&m, &SmoothApproxParams::standard(&m, k)).unwrap();
            let PhiKind::Tabulated(t) = approx.kind() else {
                panic!()
            };
            let floor = libm::exp2(-(k as f64));
            assert!(t.diffusivity_samples().iter().all(|d| *d >= floor));
            assert!(approx.eval_d(0.0).unwrap() >= floor);
            assert_eq!(approx.eval_phi(0.0).unwrap(), 0.0);
            assert_eq!(approx.eval_primitive(0.0).unwrap(), 0.0);
            // affine continuation beyond I
            assert!(approx.eval_phi(2.0).unwrap() > approx.eval_phi(1.5).unwrap());
        }
    }

    #[test]
    fn smooth_approximation_rejects_bad_parameters() {
        let m = biofilm11();
        let mut p = SmoothApproxParams::standard(&m, 4);
        p.inner = Interval::new(-1.0, 0.5);
        assert!(matches!(build_smooth_approx(&m, &p), Err(Error::Config(_))));
        let mut p = SmoothApproxParams::standard(&m, 1);
        p.inner = Interval::new(-0.2, 0.2);
        assert!(matches!(build_smooth_approx(&m, &p), Err(Error::Config(_))));
        let mut p = SmoothApproxParams::standard(&m, 3);
        p.k = 0;
        assert!(build_smooth_approx(&m, &p).is_err());
    }

    #[test]
    fn table_round_trips_and_extensions() {
        let d: Vec<f64> = (0..41)
            .map(|i| 0.1 + ((i as f64) * 0.05 - 1.0).powi(2))
            .collect();
        let t = Table::from_diffusivity(0.05, 20, d).unwrap();
        let m = PhiModel::tabulated(t);
        for i in 0..200 {
            let z = -3.0 + 6.0 * i as f64 / 199.0;
            let w = m.eval_phi(z).unwrap();
            assert!((m.eval_beta(w).unwrap() - z).abs() < 1e-12, "z={z}");
        }
        let lin = PhiModel::linear(2.0).unwrap();
        assert_eq!(lin.eval_phi(3.0).unwrap(), 6.0);
        assert_eq!(lin.eval_primitive(-3.0).unwrap(), 9.0);
        assert_eq!(lin.eval_beta(-4.0).unwrap(), -2.0);
    }
}
