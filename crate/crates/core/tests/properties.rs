use porodyn_core::grid::{integral, norm_l1_diff};
use porodyn_core::kinetic::{chi_distance, velocity_average, VelocityBins};
use porodyn_core::regularity::{kappa_biofilm, kappa_degenerate, slobodetskii_seminorm};
use porodyn_core::resolvent::{solve, solve_cellwise_monotone, solve_newton, ResolventProblem};
use porodyn_core::{BoundaryCondition, Field, Grid, Interval, PhiModel};
use proptest::prelude::*;

fn grid16() -> Grid {
    Grid::new(1, 16, 1.0, BoundaryCondition::Periodic).unwrap()
}

fn field(values: Vec<f64>) -> Field {
    let g = Grid::new(1, values.len(), 1.0, BoundaryCondition::Periodic).unwrap();
    Field::from_values(&g, values).unwrap()
}

fn biofilm_params() -> impl Strategy<Value = (f64, f64)> {
    (1.0..4.0f64, 0.2..3.0f64)
}

fn rhs16() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.9..0.9f64, 16)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn profiles_are_odd_and_increasing((a, b) in biofilm_params(), z in 0.0..0.99f64, dz in 1e-6..1e-2f64, m in 1.05..4.0f64) {
        let bio = PhiModel::biofilm(a, b).unwrap();
        prop_assert_eq!(bio.phi(-z), -bio.phi(z));
        prop_assert_eq!(bio.primitive(-z), bio.primitive(z));
        let w = (z + dz).min(0.999);
        prop_assert!(w <= z || bio.phi(w) > bio.phi(z));
        let pme = PhiModel::pme(m).unwrap();
        let y = 5.0 * z;
        prop_assert_eq!(pme.phi(-y), -pme.phi(y));
        prop_assert!(pme.phi(y + dz) > pme.phi(y));
    }

    #[test]
    fn resolvent_is_an_l1_contraction(g in rhs16(), h in rhs16(), lambda in 0.01..1.0f64) {
        let model = PhiModel::biofilm(1.0, 1.0).unwrap();
        let (g, h) = (field(g), field(h));
        let (u, _) = solve(&ResolventProblem::new(&model, lambda, &g), &g).unwrap();
        let (v, _) = solve(&ResolventProblem::new(&model, lambda, &h), &h).unwrap();
        let lhs = norm_l1_diff(&u, &v).unwrap();
        let rhs = norm_l1_diff(&g, &h).unwrap();
        prop_assert!(lhs <= rhs + 1e-9, "{} > {}", lhs, rhs);
    }

    #[test]
    fn resolvent_preserves_order(g in rhs16(), lift in prop::collection::vec(0.0..0.1f64, 16), lambda in 0.01..1.0f64) {
        let model = PhiModel::biofilm(1.0, 1.0).unwrap();
        let h: Vec<f64> = g.iter().zip(&lift).map(|(a, b)| a + b).collect();
        let (g, h) = (field(g), field(h));
        let (u, _) = solve(&ResolventProblem::new(&model, lambda, &g), &g).unwrap();
        let (v, _) = solve(&ResolventProblem::new(&model, lambda, &h), &h).unwrap();
        for (a, b) in u.values().iter().zip(v.values()) {
            prop_assert!(a <= &(b + 1e-10));
        }
    }

    #[test]
    fn resolvent_conserves_mass_and_range(g in rhs16(), lambda in 0.01..1.0f64) {
        let model = PhiModel::biofilm(1.0, 1.0).unwrap();
        let g = field(g);
        let (u, _) = solve(&ResolventProblem::new(&model, lambda, &g), &g).unwrap();
        prop_assert!((integral(&u) - integral(&g)).abs() < 1e-11);
        prop_assert!(u.max() < 1.0 && u.min() > -1.0);
    }

    #[test]
    fn newton_and_cellwise_agree(g in rhs16(), lambda in 0.01..1.0f64, m in 1.5..3.0f64) {
        for model in [PhiModel::biofilm(1.0, 1.0).unwrap(), PhiModel::pme(m).unwrap()] {
            let g = field(g.clone());
            let p = ResolventProblem::new(&model, lambda, &g);
            let (a, _) = solve_newton(&p, &g).unwrap();
            let (b, _) = solve_cellwise_monotone(&p.with_max_iter(1_000_000)).unwrap();
            prop_assert!(norm_l1_diff(&a, &b).unwrap() < 1e-9);
        }
    }

    #[test]
    fn seminorm_is_homogeneous_and_shift_invariant(values in rhs16(), c in -3.0..3.0f64, shift in 0usize..16, sigma in 0.1..0.9f64) {
        let w = field(values.clone());
        let base = slobodetskii_seminorm(&w, sigma, 2.0).unwrap();
        let scaled = slobodetskii_seminorm(&w.map(|v| c * v), sigma, 2.0).unwrap();
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-12 * base.max(1e-300) * c.abs().max(1.0));
        let mut rotated = values;
        rotated.rotate_left(shift);
        let moved = slobodetskii_seminorm(&field(rotated), sigma, 2.0).unwrap();
        prop_assert!((moved - base).abs() <= 1e-12 * base);
    }

    #[test]
    fn seminorm_is_monotone_in_sigma_on_a_unit_box(values in rhs16(), s1 in 0.05..0.95f64, s2 in 0.05..0.95f64) {
        let g = Grid::new(1, 16, 0.5, BoundaryCondition::Periodic).unwrap();
        let w = Field::from_values(&g, values).unwrap();
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        let a = slobodetskii_seminorm(&w, lo, 2.0).unwrap();
        let b = slobodetskii_seminorm(&w, hi, 2.0).unwrap();
        prop_assert!(a <= b * (1.0 + 1e-12));
    }

    #[test]
    fn exponent_formulas_agree_under_m_equals_b_plus_one(b in 0.1..10.0f64, frac in 0.0..1.0f64) {
        let p = 2.0 + frac * (b - 1.0).max(0.0);
        let (t1, x1) = kappa_biofilm(b, p);
        let (t2, x2) = kappa_degenerate(b + 1.0, p);
        prop_assert!((t1 - t2).abs() <= 1e-14 * t1.abs().max(1.0));
        prop_assert!((x1 - x2).abs() <= 1e-14 * x1.abs().max(1.0));
    }

    #[test]
    fn chi_isometry_and_identity_average(u in rhs16(), w in rhs16()) {
        let (u, w) = (field(u), field(w));
        let d = chi_distance(&u, &w).unwrap();
        prop_assert!((d - norm_l1_diff(&u, &w).unwrap()).abs() <= 1e-14);
        let bins = VelocityBins::new(Interval::new(-1.0, 1.0), 64).unwrap();
        let avg = velocity_average(&u, |_| 1.0, &bins).unwrap();
        for (a, b) in avg.values().iter().zip(u.values()) {
            prop_assert!((a - b).abs() <= 1e-14);
        }
    }
}

#[test]
fn constant_data_are_fixed_points() {
    let model = PhiModel::biofilm(1.0, 2.0).unwrap();
    let g = Field::constant(&grid16(), 0.37);
    let (u, _) = solve(&ResolventProblem::new(&model, 0.5, &g), &g).unwrap();
    assert!(norm_l1_diff(&u, &g).unwrap() < 1e-14);
}
