//! TOML run configuration.
//!
//! Every section except `[model]` is optional. Parsing reports syntax errors
//! with their line and column, and validation collects every violated
//! constraint instead of stopping at the first one.

use std::path::{Path, PathBuf};

use porodyn_core::evolution::{Reaction, SolverOptions, SourceSpec};
use porodyn_core::phi::{build_smooth_approx, SmoothApproxParams};
use porodyn_core::{BoundaryCondition, Field, Grid, PhiModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Context, Result};
use crate::harness::ProblemGenerator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Biofilm,
    Pme,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default = "one")]
    pub b: f64,
    #[serde(default = "two")]
    pub m: f64,
    #[serde(default = "one")]
    pub c: f64,
    /// Smooth approximation index; the exact profile is used when absent.
    #[serde(default)]
    pub k: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcKind {
    Periodic,
    ZeroFlux,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "one_usize")]
    pub d: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(rename = "L", default = "one")]
    pub half_width: f64,
    #[serde(default = "default_bc")]
    pub bc: BcKind,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            d: 1,
            n: default_n(),
            half_width: 1.0,
            bc: BcKind::Periodic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(rename = "T", default = "half")]
    pub t_final: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            t_final: 0.5,
            eps: default_eps(),
            picard_tol: default_picard_tol(),
            tol: default_tol(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    None,
    /// `f(u) = rate·u(1 − u)`.
    Logistic,
    /// `f(u) = rate·u`.
    Linear,
    /// Time-independent Gaussian `amplitude·exp(−|x − center|²/width²)`.
    Gaussian,
    /// Random time-independent bump sum with `‖f‖₁ = l1`, drawn from the seed.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    #[serde(default = "default_source_kind")]
    pub kind: SourceKind,
    #[serde(default = "one")]
    pub rate: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub center: Vec<f64>,
    #[serde(default = "quarter")]
    pub width: f64,
    #[serde(default = "half")]
    pub l1: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            kind: SourceKind::None,
            rate: 1.0,
            amplitude: 1.0,
            center: Vec::new(),
            width: 0.25,
            l1: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Zero,
    Constant,
    Gaussian,
    /// Porous-medium source solution at time `t0`.
    Barenblatt,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default = "default_initial_kind")]
    pub kind: InitialKind,
    #[serde(default = "half")]
    pub value: f64,
    #[serde(default = "half")]
    pub amplitude: f64,
    #[serde(default)]
    pub center: Vec<f64>,
    #[serde(default = "quarter")]
    pub width: f64,
    /// Barenblatt constant `C`.
    #[serde(rename = "C", default = "half")]
    pub barenblatt_c: f64,
    #[serde(default = "one")]
    pub t0: f64,
    #[serde(default)]
    pub positive: bool,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            kind: InitialKind::Gaussian,
            value: 0.5,
            amplitude: 0.5,
            center: Vec::new(),
            width: 0.25,
            barenblatt_c: 0.5,
            t0: 1.0,
            positive: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    /// Write a snapshot every `snapshot_stride` steps (0 keeps only the
    /// first and last state).
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            snapshot_stride: default_stride(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    #[serde(default = "default_seed")]
    pub base: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self {
            base: default_seed(),
        }
    }
}

pub const SUITES: [&str; 8] = [
    "contraction",
    "comparison",
    "gronwall",
    "positivity",
    "range",
    "energy",
    "chi",
    "defect",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_suites")]
    pub suites: Vec<String>,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            suites: default_suites(),
            trials: default_trials(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularityConfig {
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "default_sigma_t")]
    pub sigma_t: Vec<f64>,
    #[serde(default = "default_sigma_x")]
    pub sigma_x: Vec<f64>,
    #[serde(default = "default_levels")]
    pub levels: usize,
}

impl Default for RegularityConfig {
    fn default() -> Self {
        Self {
            p: 2.0,
            sigma_t: default_sigma_t(),
            sigma_x: default_sigma_x(),
            levels: default_levels(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticConfig {
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Approximation index used when `[model]` does not set one.
    #[serde(default = "default_kinetic_k")]
    pub k: u32,
}

impl Default for KineticConfig {
    fn default() -> Self {
        Self {
            bins: default_bins(),
            k: default_kinetic_k(),
        }
    }
}

/// Parameter grid for `sweep`; empty lists keep the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub k: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default)]
    pub seeds: SeedConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub regularity: RegularityConfig,
    #[serde(default)]
    pub kinetic: KineticConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn half() -> f64 {
    0.5
}
fn quarter() -> f64 {
    0.25
}
fn one_usize() -> usize {
    1
}
fn default_n() -> usize {
    128
}
fn default_bc() -> BcKind {
    BcKind::Periodic
}
fn default_eps() -> f64 {
    1.0 / 256.0
}
fn default_picard_tol() -> f64 {
    1e-10
}
fn default_tol() -> f64 {
    1e-11
}
fn default_source_kind() -> SourceKind {
    SourceKind::None
}
fn default_initial_kind() -> InitialKind {
    InitialKind::Gaussian
}
fn default_directory() -> PathBuf {
    PathBuf::from("out")
}
fn default_stride() -> usize {
    10
}
fn default_seed() -> u64 {
    42
}
fn default_suites() -> Vec<String> {
    SUITES.iter().map(|s| s.to_string()).collect()
}
fn default_trials() -> usize {
    25
}
fn default_sigma_t() -> Vec<f64> {
    vec![0.0]
}
fn default_sigma_x() -> Vec<f64> {
    vec![0.5, 0.9, 1.2]
}
fn default_levels() -> usize {
    3
}
fn default_bins() -> usize {
    porodyn_core::kinetic::DEFAULT_BINS
}
fn default_kinetic_k() -> u32 {
    8
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config_str(&text, path)
}

/// Parses and validates configuration text; `origin` is used in messages.
pub fn parse_config_str(text: &str, origin: &Path) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map_or((0, 0), |span| line_column(text, span.start));
        CliError::Parse {
            path: origin.to_path_buf(),
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    config.validate()?;
    Ok(config)
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before
        .rfind('\n')
        .map_or(before.len(), |i| before.len() - i - 1)
        + 1;
    (line, column)
}

impl RunConfig {
    /// Collects every violated constraint.
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        let m = &self.model;
        match m.kind {
            ModelKind::Biofilm => {
                if !(m.a >= 1.0) {
                    v.push(format!("model.a = {}: biofilm profiles need a ≥ 1", m.a));
                }
                if !(m.b > 0.0) {
                    v.push(format!("model.b = {}: biofilm profiles need b > 0", m.b));
                }
            }
            ModelKind::Pme => {
                if !(m.m > 1.0) {
                    v.push(format!(
                        "model.m = {}: porous-medium profiles need m > 1",
                        m.m
                    ));
                }
            }
            ModelKind::Linear => {
                if !(m.c > 0.0) {
                    v.push(format!("model.c = {}: linear profiles need c > 0", m.c));
                }
            }
        }
        if m.k == Some(0) {
            v.push("model.k must be a positive integer".into());
        }

        let g = &self.grid;
        if !(1..=3).contains(&g.d) {
            v.push(format!("grid.d = {}: dimension must be 1, 2 or 3", g.d));
        }
        if !g.n.is_power_of_two() || g.n < 4 {
            v.push(format!(
                "grid.n = {}: n must be a power of two (at least 4)",
                g.n
            ));
        }
        if !(g.half_width > 0.0 && g.half_width.is_finite()) {
            v.push(format!(
                "grid.L = {}: half-width must be positive",
                g.half_width
            ));
        }

        let t = &self.time;
        if !(t.t_final > 0.0 && t.t_final.is_finite()) {
            v.push(format!(
                "time.T = {}: final time must be positive",
                t.t_final
            ));
        }
        if !(t.eps > 0.0) {
            v.push(format!("time.eps = {}: ε must be positive", t.eps));
        }
        if !(t.picard_tol > 0.0) {
            v.push(format!(
                "time.picard_tol = {}: must be positive",
                t.picard_tol
            ));
        }
        if !(t.tol > 0.0) {
            v.push(format!("time.tol = {}: must be positive", t.tol));
        }

        let bounded = m.kind == ModelKind::Biofilm;
        let s = &self.source;
        match s.kind {
            SourceKind::Logistic | SourceKind::Linear if !(s.rate >= 0.0 && s.rate.is_finite()) => {
                v.push(format!(
                    "source.rate = {}: must be finite and nonnegative",
                    s.rate
                ));
            }
            SourceKind::Logistic if !bounded => {
                v.push("source.kind = logistic needs the bounded biofilm interval".into());
            }
            SourceKind::Gaussian if !(s.width > 0.0) => {
                v.push(format!("source.width = {}: must be positive", s.width));
            }
            SourceKind::Random if !(s.l1 > 0.0 && s.l1 <= 1.0) => {
                v.push(format!("source.l1 = {}: must lie in (0, 1]", s.l1));
            }
            _ => {}
        }
        if !s.center.is_empty() && s.center.len() != g.d {
            v.push(format!(
                "source.center has {} entries for a {}-dimensional grid",
                s.center.len(),
                g.d
            ));
        }

        let i = &self.initial;
        let inside = |x: f64| {
            if bounded {
                x.abs() <= 1.0
            } else {
                x.is_finite()
            }
        };
        match i.kind {
            InitialKind::Constant if !inside(i.value) => {
                v.push(format!(
                    "initial.value = {}: outside the closure of the interval",
                    i.value
                ));
            }
            InitialKind::Gaussian => {
                if !inside(i.amplitude) {
                    v.push(format!(
                        "initial.amplitude = {}: outside the closure of the interval",
                        i.amplitude
                    ));
                }
                if !(i.width > 0.0) {
                    v.push(format!("initial.width = {}: must be positive", i.width));
                }
            }
            InitialKind::Barenblatt => {
                if m.kind != ModelKind::Pme {
                    v.push("initial.kind = barenblatt needs a porous-medium model".into());
                }
                if !(i.barenblatt_c > 0.0) {
                    v.push(format!("initial.C = {}: must be positive", i.barenblatt_c));
                }
                if !(i.t0 > 0.0) {
                    v.push(format!("initial.t0 = {}: must be positive", i.t0));
                }
            }
            _ => {}
        }
        if !i.center.is_empty() && i.center.len() != g.d {
            v.push(format!(
                "initial.center has {} entries for a {}-dimensional grid",
                i.center.len(),
                g.d
            ));
        }

        for suite in &self.verify.suites {
            if !SUITES.contains(&suite.as_str()) {
                v.push(format!(
                    "verify.suites: unknown suite {suite:?} (known: {})",
                    SUITES.join(", ")
                ));
            }
        }
        if self.verify.trials == 0 {
            v.push("verify.trials must be at least 1".into());
        }
        let r = &self.regularity;
        if !(r.p >= 1.0) {
            v.push(format!("regularity.p = {}: must be at least 1", r.p));
        }
        if r.sigma_x.iter().any(|s| !(*s > 0.0)) {
            v.push("regularity.sigma_x entries must be positive".into());
        }
        if r.sigma_t.iter().any(|s| !(0.0..1.0).contains(s)) {
            v.push("regularity.sigma_t entries must lie in [0, 1)".into());
        }
        if r.levels == 0 {
            v.push("regularity.levels must be at least 1".into());
        }
        if self.kinetic.bins == 0 {
            v.push("kinetic.bins must be at least 1".into());
        }
        if self.kinetic.k == 0 {
            v.push("kinetic.k must be a positive integer".into());
        }
        if self.sweep.n.iter().any(|n| !n.is_power_of_two() || *n < 4) {
            v.push("sweep.n: n must be a power of two (at least 4)".into());
        }
        if self.sweep.eps.iter().any(|e| !(*e > 0.0)) {
            v.push("sweep.eps entries must be positive".into());
        }
        if self.sweep.k.contains(&0) {
            v.push("sweep.k entries must be positive".into());
        }

        if v.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(v))
        }
    }

    /// The exact profile named by `[model]`.
    pub fn base_model(&self) -> Result<PhiModel> {
        let m = &self.model;
        match m.kind {
            ModelKind::Biofilm => PhiModel::biofilm(m.a, m.b),
            ModelKind::Pme => PhiModel::pme(m.m),
            ModelKind::Linear => PhiModel::linear(m.c),
        }
        .context("model")
    }

    /// The profile used for time stepping: the smooth approximation with
    /// index `k` when one is requested.
    pub fn model(&self) -> Result<PhiModel> {
        self.model_with(self.model.k)
    }

    pub fn model_with(&self, k: Option<u32>) -> Result<PhiModel> {
        let base = self.base_model()?;
        match k {
            Some(k) if self.model.kind != ModelKind::Linear => {
                build_smooth_approx(&base, &SmoothApproxParams::standard(&base, k))
                    .context("smooth approximation")
            }
            _ => Ok(base),
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        let bc = match self.grid.bc {
            BcKind::Periodic => BoundaryCondition::Periodic,
            BcKind::ZeroFlux => BoundaryCondition::ZeroFlux,
        };
        Grid::new(self.grid.d, self.grid.n, self.grid.half_width, bc).context("grid")
    }

    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.time.tol,
            picard_tol: self.time.picard_tol,
            ..SolverOptions::default()
        }
    }

    pub fn initial_field(&self, grid: &Grid) -> Result<Field> {
        let i = &self.initial;
        let center = padded(&i.center);
        Ok(match i.kind {
            InitialKind::Zero => Field::zeros(grid),
            InitialKind::Constant => Field::constant(grid, i.value),
            InitialKind::Gaussian => grid.sample(|x| i.amplitude * gaussian(x, &center, i.width)),
            InitialKind::Barenblatt => {
                let m = self.model.m;
                grid.sample(|x| barenblatt(m, grid.dim(), i.barenblatt_c, i.t0, x))
            }
            InitialKind::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seeds.base);
                let gen = ProblemGenerator::new(*grid, i.positive);
                gen.initial(&mut rng)
            }
        })
    }

    /// The exact solution at run time `t` when the configuration is a
    /// source-free Barenblatt problem.
    pub fn exact_solution(&self, grid: &Grid, t: f64) -> Option<Field> {
        let i = &self.initial;
        if i.kind != InitialKind::Barenblatt
            || self.source.kind != SourceKind::None
            || self.model.k.is_some()
        {
            return None;
        }
        Some(grid.sample(|x| barenblatt(self.model.m, grid.dim(), i.barenblatt_c, i.t0 + t, x)))
    }

    /// The configured source. Reactions are checked against the interval of
    /// the exact profile, which smooth approximations extend to the whole line.
    pub fn source(&self, grid: &Grid) -> Result<SourceSpec> {
        let s = &self.source;
        let model = &self.base_model()?;
        Ok(match s.kind {
            SourceKind::None => SourceSpec::None,
            SourceKind::Logistic => {
                let rate = s.rate;
                SourceSpec::Reaction(
                    Reaction::new(move |u| rate * u * (1.0 - u), 2.0 * rate, model)
                        .context("logistic source")?,
                )
            }
            SourceKind::Linear => {
                let rate = s.rate;
                SourceSpec::Reaction(
                    Reaction::new(move |u| rate * u, rate, model).context("linear source")?,
                )
            }
            SourceKind::Gaussian => {
                let center = padded(&s.center);
                let (amplitude, width) = (s.amplitude, s.width);
                SourceSpec::time_space(move |_, x| amplitude * gaussian(x, &center, width))
            }
            SourceKind::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seeds.base ^ 0x5eed_f00d);
                let gen = ProblemGenerator::new(*grid, false);
                let field = gen.forcing(&mut rng, s.l1);
                crate::harness::frozen_source(field)
            }
        })
    }
}

fn padded(center: &[f64]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (o, c) in out.iter_mut().zip(center) {
        *o = *c;
    }
    out
}

fn gaussian(x: &[f64], center: &[f64; 3], width: f64) -> f64 {
    let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
    (-r2 / (width * width)).exp()
}

/// Source-type solution of `∂ₜu = Δ(|u|^{m−1}u)` in `d` dimensions:
/// `t^{−α}(C − k|x|² t^{−2α/d})₊^{1/(m−1)}` with `α = d/(d(m−1)+2)` and
/// `k = α(m−1)/(2md)`.
pub fn barenblatt(m: f64, d: usize, c: f64, t: f64, x: &[f64]) -> f64 {
    let d = d as f64;
    let alpha = d / (d * (m - 1.0) + 2.0);
    let k = alpha * (m - 1.0) / (2.0 * m * d);
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let core = c - k * r2 * t.powf(-2.0 * alpha / d);
    t.powf(-alpha) * core.max(0.0).powf(1.0 / (m - 1.0))
}

/// Mass of the one-dimensional `m = 2` source solution, `8√3 C^{3/2}/3`.
pub fn barenblatt_mass_m2_1d(c: f64) -> f64 {
    8.0 * 3f64.sqrt() * c.powf(1.5) / 3.0
}
