//! Reference values computed independently of the library: adaptive
//! quadrature for the profiles, the closed-form porous-medium source solution,
//! brute-force double sums for fractional seminorms and self-convergence.

use porodyn_core::evolution::{solve_cauchy, SolverOptions, SourceSpec, Trajectory};
use porodyn_core::grid::{norm_l1_diff, norm_lp};
use porodyn_core::phi::{build_smooth_approx, SmoothApproxParams};
use porodyn_core::regularity::{
    besov_block_norms, block_aggregate, kappa_biofilm, kappa_degenerate, slobodetskii_seminorm,
    spacetime_norm,
};
use porodyn_core::{BoundaryCondition, Field, Grid, PhiModel};

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fs: [f64; 3],
        whole: f64,
        density: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fs[0] + 4.0 * flm + fs[1]);
        let right = (b - m) / 6.0 * (fs[1] + 4.0 * frm + fs[2]);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= (15.0 * density * (b - a)).max(4e-15 * (left + right).abs())
        {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, [fs[0], flm, fs[1]], left, density, depth - 1)
            + rec(f, m, b, [fs[1], frm, fs[2]], right, density, depth - 1)
    }
    let m = 0.5 * (a + b);
    let fs = [f(a), f(m), f(b)];
    rec(
        f,
        a,
        b,
        fs,
        (b - a) / 6.0 * (fs[0] + 4.0 * fs[1] + fs[2]),
        tol / (b - a),
        40,
    )
}

fn biofilm_d(a: f64, b: f64) -> impl Fn(f64) -> f64 {
    move |z: f64| z.abs().powf(b) / (1.0 - z.abs()).powf(a)
}

fn phi_oracle(a: f64, b: f64, rho: f64) -> f64 {
    let d = biofilm_d(a, b);
    if rho >= 0.0 {
        simpson(&d, 0.0, rho, 1e-14)
    } else {
        -simpson(&d, rho, 0.0, 1e-14)
    }
}

#[test]
fn biofilm_phi_against_quadrature() {
    let m = PhiModel::biofilm(1.0, 1.0).unwrap();
    let oracle = phi_oracle(1.0, 1.0, 0.5);
    assert!((oracle - 0.1931471806).abs() < 1e-10);
    assert!((oracle - (-0.5 - (0.5f64).ln())).abs() < 1e-12);
    assert!((m.phi(0.5) - oracle).abs() < 1e-12);

    for (a, b) in [(1.0, 1.0), (1.0, 2.0), (1.5, 0.5), (2.0, 1.3), (3.0, 3.0)] {
        let m = PhiModel::biofilm(a, b).unwrap();
        for rho in [-0.9, -0.4, 0.05, 0.3, 0.7, 0.95] {
            let exact = phi_oracle(a, b, rho);
            let got = m.phi(rho);
            assert!(
                (got - exact).abs() <= 1e-9 * exact.abs().max(1e-3),
                "a={a} b={b} rho={rho}: {got} vs {exact}"
            );
        }
    }
}

#[test]
fn biofilm_primitive_against_nested_quadrature() {
    let m = PhiModel::biofilm(1.0, 1.0).unwrap();
    let oracle = simpson(&|s: f64| phi_oracle(1.0, 1.0, s), 0.0, 0.5, 1e-13);
    assert!((oracle - 0.0284264097).abs() < 1e-10);
    let closed = -0.125 + 0.5 * (0.5f64).ln() + 0.5;
    assert!((oracle - closed).abs() < 1e-11);
    assert!((m.primitive(0.5) - oracle).abs() < 1e-11);

    let m = PhiModel::biofilm(2.0, 1.5).unwrap();
    for rho in [-0.6, 0.2, 0.8] {
        let (lo, hi) = if rho > 0.0 { (0.0, rho) } else { (rho, 0.0) };
        let sign = if rho > 0.0 { 1.0 } else { -1.0 };
        let oracle = sign * simpson(&|s: f64| phi_oracle(2.0, 1.5, s), lo, hi, 1e-12);
        assert!(
            (m.primitive(rho) - oracle).abs() < 1e-8 * oracle.abs().max(1e-3),
            "rho={rho}"
        );
    }
}

#[test]
fn inverse_profile_by_bisection() {
    let m = PhiModel::biofilm(1.0, 1.0).unwrap();
    assert!((m.eval_beta(0.1931471806).unwrap() - 0.5).abs() < 1e-9);
    for w in [-3.0, -0.2, 0.01, 1.0, 7.5] {
        let (mut lo, mut hi) = (-1.0 + 1e-15, 1.0 - 1e-15);
        for _ in 0..200 {
            let mid: f64 = 0.5 * (lo + hi);
            if mid.signum() * (-mid.abs() - (1.0 - mid.abs()).ln()) < w {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let got = m.eval_beta(w).unwrap();
        assert!((got - 0.5 * (lo + hi)).abs() < 1e-10, "w={w}");
    }
}

#[test]
fn porous_medium_profile_closed_form() {
    for m in [1.5, 2.0, 3.0] {
        let model = PhiModel::pme(m).unwrap();
        for u in [-1.7f64, -0.3, 0.0, 0.25, 2.0] {
            let exact = u.abs().powf(m - 1.0) * u;
            assert!((model.phi(u) - exact).abs() <= 1e-13 * exact.abs().max(1.0));
        }
    }
}

#[test]
fn smooth_approximation_is_bounded_below() {
    let base = PhiModel::biofilm(1.0, 1.0).unwrap();
    for k in 1..=10 {
        let dk = build_smooth_approx(&base, &SmoothApproxParams::standard(&base, k)).unwrap();
        let floor = 2f64.powi(-(k as i32));
        for z in [-1.5, -0.5, 0.0, 1e-3, 0.5, 0.99, 3.0] {
            assert!(dk.diffusivity(z) >= floor * (1.0 - 1e-12), "k={k} z={z}");
        }
    }
}

#[test]
fn critical_exponent_values() {
    assert_eq!(kappa_biofilm(1.0, 2.0), (0.0, 1.0));
    let (t, x) = kappa_biofilm(2.0, 2.0);
    assert!((t - 0.25).abs() < 1e-14 && (x - 0.5).abs() < 1e-14);
    assert_eq!(kappa_degenerate(2.0, 2.0), (0.0, 1.0));
}

/// `U(t, x) = t^{−1/3}(C − x²/(12 t^{2/3}))₊`, the source solution of
/// `∂ₜU = ∂ₓₓ(|U|U)`.
fn barenblatt(t: f64, x: f64, c: f64) -> f64 {
    (t.powf(-1.0 / 3.0) * (c - x * x / (12.0 * t.powf(2.0 / 3.0)))).max(0.0)
}

#[test]
fn source_solution_satisfies_the_equation() {
    let c: f64 = 0.5;
    let (dt, dx) = (1e-5, 1e-4);
    for t in [1.0f64, 1.5, 2.0] {
        let edge = (12.0 * c).sqrt() * t.powf(1.0 / 3.0);
        for frac in [0.0, 0.3, 0.6, 0.9] {
            let x = frac * edge;
            let ut = (barenblatt(t + dt, x, c) - barenblatt(t - dt, x, c)) / (2.0 * dt);
            let w = |y: f64| barenblatt(t, y, c).powi(2);
            let wxx = (w(x + dx) - 2.0 * w(x) + w(x - dx)) / (dx * dx);
            assert!((ut - wxx).abs() < 1e-5, "t={t} x={x}: {ut} vs {wxx}");
        }
        let mass = simpson(&|x| barenblatt(t, x, c), -edge, edge, 1e-13);
        assert!((mass - 8.0 * 3f64.sqrt() * c.powf(1.5) / 3.0).abs() < 1e-9);
    }
}

#[test]
fn barenblatt_error_shrinks_under_refinement() {
    let model = PhiModel::pme(2.0).unwrap();
    let mut errors = Vec::new();
    for n in [64usize, 128] {
        let g = Grid::new(1, n, 4.0, BoundaryCondition::Periodic).unwrap();
        let u0 = g.sample(|x| barenblatt(1.0, x[0], 0.5));
        let traj = solve_cauchy(
            &model,
            &u0,
            &SourceSpec::None,
            1.0,
            g.h() / 2.0,
            &SolverOptions::default(),
        )
        .unwrap();
        let exact = g.sample(|x| barenblatt(2.0, x[0], 0.5));
        errors.push(norm_l1_diff(traj.final_state(), &exact).unwrap());
    }
    assert!((errors[0] / errors[1]).log2() >= 0.5, "{errors:?}");
}

fn sampled_at(traj: &Trajectory, stride: usize) -> Vec<Field> {
    traj.states.iter().step_by(stride).cloned().collect()
}

#[test]
fn time_step_self_convergence() {
    let model = PhiModel::biofilm(1.0, 1.0).unwrap();
    let g = Grid::new(1, 64, 1.0, BoundaryCondition::Periodic).unwrap();
    let u0 = g.sample(|x| 0.6 * (-6.0 * x[0] * x[0]).exp() - 0.2);
    let opts = SolverOptions::default();
    let runs: Vec<Trajectory> = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0]
        .iter()
        .map(|eps| solve_cauchy(&model, &u0, &SourceSpec::None, 0.25, *eps, &opts).unwrap())
        .collect();
    let dist = |coarse: &Trajectory, fine: &Trajectory| -> f64 {
        coarse
            .states
            .iter()
            .zip(sampled_at(fine, 2))
            .map(|(a, b)| norm_l1_diff(a, &b).unwrap())
            .fold(0.0, f64::max)
    };
    let ratio = dist(&runs[0], &runs[1]) / dist(&runs[1], &runs[2]);
    assert!((1.4..=2.6).contains(&ratio), "ratio {ratio}");
}

fn brute_seminorm(values: &[f64], l: f64, sigma: f64, p: f64) -> f64 {
    let n = values.len();
    let h = 2.0 * l / n as f64;
    let period = 2.0 * l;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let raw = (i as f64 - j as f64).abs() * h;
            let d = raw.min(period - raw);
            acc += (values[i] - values[j]).abs().powf(p) / d.powf(sigma * p + 1.0);
        }
    }
    (acc * h * h).powf(1.0 / p)
}

#[test]
fn seminorm_matches_brute_force_sum() {
    let g = Grid::new(1, 64, 1.0, BoundaryCondition::Periodic).unwrap();
    let w = g.sample(|x| (3.0 * x[0]).sin() * (-x[0] * x[0]).exp());
    for (sigma, p) in [(0.3, 2.0), (0.7, 1.5), (0.5, 3.0)] {
        let got = slobodetskii_seminorm(&w, sigma, p).unwrap();
        let exact = brute_seminorm(w.values(), 1.0, sigma, p);
        assert!((got - exact).abs() < 1e-12 * exact, "sigma={sigma} p={p}");
    }
}

#[test]
fn triangle_wave_seminorm_converges_to_fine_oracle() {
    let l = 1.0;
    let tri = |x: f64| x.abs();
    let oracle = {
        let n = 8192;
        let h = 2.0 * l / n as f64;
        let values: Vec<f64> = (0..n).map(|i| tri(-l + (i as f64 + 0.5) * h)).collect();
        brute_seminorm(&values, l, 0.5, 2.0)
    };
    let g = Grid::new(1, 1024, l, BoundaryCondition::Periodic).unwrap();
    let got = slobodetskii_seminorm(&g.sample(|x| tri(x[0])), 0.5, 2.0).unwrap();
    assert!((got / oracle - 1.0).abs() < 0.01, "{got} vs {oracle}");
}

#[test]
fn frozen_trajectory_has_no_time_increments() {
    let g = Grid::new(1, 64, 1.0, BoundaryCondition::Periodic).unwrap();
    let u0 = g.sample(|x| (2.0 * x[0]).cos() * 0.3);
    let model = PhiModel::linear(1.0).unwrap();
    let mut traj = solve_cauchy(
        &model,
        &u0,
        &SourceSpec::None,
        0.5,
        0.05,
        &SolverOptions::default(),
    )
    .unwrap();
    for s in traj.states.iter_mut() {
        *s = u0.clone();
    }
    let inner = |w: &Field| {
        (norm_lp(w, 2.0).powi(2) + slobodetskii_seminorm(w, 0.6, 2.0).unwrap().powi(2)).sqrt()
    };
    let expected = 0.5f64.sqrt() * inner(&u0);
    for sigma_t in [0.0, 0.2, 0.45] {
        let got = spacetime_norm(&traj, sigma_t, 0.6, 2.0).unwrap();
        assert!(
            (got - expected).abs() < 1e-12 * expected,
            "sigma_t={sigma_t}"
        );
    }
}

#[test]
fn besov_aggregate_is_comparable_to_seminorm() {
    let g = Grid::new(1, 256, 1.0, BoundaryCondition::Periodic).unwrap();
    let pi = std::f64::consts::PI;
    let w = g.sample(|x| {
        (pi * x[0]).sin() + 0.4 * (3.0 * pi * x[0]).cos() - 0.2 * (7.0 * pi * x[0] + 0.3).sin()
            + 0.05 * (20.0 * pi * x[0]).cos()
    });
    let blocks = besov_block_norms(&w, 0.5, 2.0).unwrap();
    let besov = block_aggregate(&blocks, 2.0);
    let semi = slobodetskii_seminorm(&w, 0.5, 2.0).unwrap();
    let ratio = besov / semi;
    assert!((1.0 / 3.0..=3.0).contains(&ratio), "ratio {ratio}");
}
