use super::*;
use crate::field;
use crate::geometry::{build_grid, GridRef, Interval, SlabSpacetime};
use crate::propagation::{CharacteristicDatum, Inhomogeneity};
use std::sync::Arc;

fn grid(h: f64) -> GridRef {
    Arc::new(build_grid(SlabSpacetime::minkowski(0.0, 4.0).unwrap(), h, 1.0, Interval::new(1.0, 7.0)).unwrap())
}

fn bump(g: &SlabGrid, c: f64, w: f64) -> CharacteristicDatum {
    let f = field::expr(&format!("bump({c}, {w})")).unwrap();
    CharacteristicDatum::from_field(g, f.as_ref(), Interval::new(c - w, c + w)).unwrap()
}

fn generic_phi(g: &GridRef) -> GridField {
    GridField::from_fn(g, |u, v| (1.0 + 0.5 * u - 0.3 * u * u) * (-(v - 4.0) * (v - 4.0)).exp() + 0.2 * (u * v).sin())
}

fn drift() -> WaveOperator {
    WaveOperator::new(field::expr("0.5 + 0.1*v").unwrap(), field::expr("0.3*u").unwrap(), field::constant(0.7))
}

fn battery(g: &GridRef) -> TestFunctionBattery {
    TestFunctionBattery::generate(g, DEFAULT_BATTERY_SIZE, DEFAULT_SEED).unwrap()
}

fn assert_second_order(errs: &[f64]) {
    for w in errs.windows(2) {
        let r = w[0] / w[1];
        assert!(r > 3.4 && r < 4.6, "refinement ratio {r} in {errs:?}");
    }
}

#[test]
fn zero_phi_gives_zero_sides() {
    let g = grid(0.05);
    let b = battery(&g);
    let z = GridField::zeros(&g);
    for region in [CausalRegion::Jminus, CausalRegion::Jplus] {
        let r = verify_jump_formula(&drift(), region, &z, &b).unwrap();
        assert_eq!(r.max_residual, 0.0);
        assert!(r.lhs.iter().chain(&r.rhs).all(|x| *x == 0.0));
    }
    assert_eq!(verify_t_identity(&drift(), &z, &b).unwrap().max_residual, 0.0);
}

#[test]
fn jump_formula_is_second_order() {
    let errs: Vec<f64> = [0.04, 0.02, 0.01]
        .iter()
        .map(|&h| {
            let g = grid(h);
            let r = verify_jump_formula(&WaveOperator::d_alembertian(), CausalRegion::Jminus, &generic_phi(&g), &battery(&g)).unwrap();
            assert!(r.max_normalized <= 10.0 * h * h);
            r.max_normalized
        })
        .collect();
    assert_second_order(&errs);
}

#[test]
fn jump_formula_with_drift_on_the_future_side() {
    for h in [0.04, 0.02] {
        let g = grid(h);
        let r = verify_jump_formula(&drift(), CausalRegion::Jplus, &generic_phi(&g), &battery(&g)).unwrap();
        assert!(r.max_normalized <= 10.0 * h * h, "{}", r.max_normalized);
    }
}

#[test]
fn boundary_side_vanishes_with_the_trace_and_its_derivative() {
    let g = grid(0.02);
    let phi = GridField::from_fn(&g, |u, v| u * u * (-(v - 4.0) * (v - 4.0)).exp());
    let b = battery(&g);
    let r = verify_jump_formula(&WaveOperator::d_alembertian(), CausalRegion::Jminus, &phi, &b).unwrap();
    assert!(r.rhs.iter().all(|x| *x == 0.0));
    assert!(r.max_normalized <= 10.0 * g.h * g.h);
}

#[test]
fn jump_formula_rejects_other_regions_and_edge_supports() {
    let g = grid(0.05);
    let b = battery(&g);
    let phi = generic_phi(&g);
    for region in [CausalRegion::J, CausalRegion::Exterior] {
        assert!(matches!(verify_jump_formula(&drift(), region, &phi, &b), Err(Error::Precondition(_))));
    }
    let mut bad = b.clone();
    bad.members[3].values[[1, 40]] = 1.0;
    assert!(matches!(verify_jump_formula(&drift(), CausalRegion::Jminus, &phi, &bad), Err(Error::SupportTouchesBoundary(_))));
}

#[test]
fn t_identity_matches_the_jump_formula_on_the_past_side() {
    let g = grid(0.02);
    let b = battery(&g);
    let phi = generic_phi(&g);
    let t = verify_t_identity(&drift(), &phi, &b).unwrap();
    let j = verify_jump_formula(&drift(), CausalRegion::Jminus, &phi, &b).unwrap();
    assert!(t.max_normalized <= 10.0 * g.h * g.h);
    for (x, y) in t.rhs.iter().zip(&j.rhs) {
        assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
    }
}

#[test]
fn t_identity_with_vanishing_trace() {
    let g = grid(0.02);
    let phi = GridField::from_fn(&g, |u, v| u * (1.0 + v).cos());
    let r = verify_t_identity(&WaveOperator::d_alembertian(), &phi, &battery(&g)).unwrap();
    assert!(r.rhs.iter().all(|x| *x == 0.0));
    assert!(r.max_normalized <= 10.0 * g.h * g.h);
}

#[test]
fn t_identity_is_second_order() {
    let errs: Vec<f64> = [0.04, 0.02, 0.01]
        .iter()
        .map(|&h| {
            let g = grid(h);
            verify_t_identity(&drift(), &generic_phi(&g), &battery(&g)).unwrap().max_normalized
        })
        .collect();
    assert_second_order(&errs);
}

#[test]
fn expansion_term_guard() {
    let phi = |s: f64, _: &[f64]| (-(s - 3.0).powi(2)).exp();
    let dphi = |s: f64, _: &[f64]| -2.0 * (s - 3.0) * (-(s - 3.0).powi(2)).exp();
    let zero = |_: f64, _: &[f64]| 0.0;
    let omega = field::expr("exp(0.3*v)").unwrap();
    let line = geometry::null_line(omega.clone());
    let alpha = |s: f64, _: &[f64]| 2.0 / omega.value(0.0, s);
    let pts: Vec<(f64, Vec<f64>)> = (0..21).map(|k| (1.5 + 0.15 * k as f64, Vec::new())).collect();
    assert!(super::expansion_term_guard(&line, &alpha, &phi, &dphi, &zero, &pts).unwrap() <= 1e-10);
    let cone = geometry::light_cone();
    let pts: Vec<(f64, Vec<f64>)> = (0..9).map(|k| (1.0 + 0.5 * k as f64, vec![0.4 + 0.2 * k as f64, 0.3 * k as f64])).collect();
    let one = |_: f64, _: &[f64]| 1.0;
    assert!(super::expansion_term_guard(&cone, &one, &phi, &dphi, &zero, &pts).unwrap() > 1e-2);
}

#[test]
fn second_jump_for_zero_data() {
    let g = grid(0.05);
    let r = verify_second_jump(&WaveOperator::d_alembertian(), &CharacteristicDatum::zero(&g), &battery(&g), &SolverConfig::default()).unwrap();
    assert_eq!(r.pairing.max_residual, 0.0);
    assert_eq!(r.consistency, 0.0);
}

#[test]
fn second_jump_is_second_order_and_consistent() {
    let kg = WaveOperator::klein_gordon(1.0);
    let errs: Vec<f64> = [0.04, 0.02, 0.01]
        .iter()
        .map(|&h| {
            let g = grid(h);
            let r = verify_second_jump(&kg, &bump(&g, 4.0, 1.0), &battery(&g), &SolverConfig::default()).unwrap();
            assert!(r.consistency <= 1e-12);
            assert!(r.kernel_residual <= KERNEL_RESIDUAL_FACTOR * h * h);
            assert!(r.pairing.max_normalized <= 10.0 * h * h);
            r.pairing.max_normalized
        })
        .collect();
    // The coarsest level is still pre-asymptotic.
    assert_second_order(&errs[1..]);
}

#[test]
fn second_jump_rejects_fields_outside_the_kernel() {
    let g = grid(0.02);
    let phi = generic_phi(&g);
    let r = verify_second_jump_with(&WaveOperator::klein_gordon(1.0), &phi, &battery(&g), KERNEL_RESIDUAL_FACTOR * g.h * g.h);
    assert!(matches!(r, Err(Error::Precondition(_))));
}

#[test]
fn equivariance_for_constant_rescaling() {
    let g = grid(0.05);
    let b = battery(&g);
    let phi: Vec<f64> = bump(&g, 4.0, 1.0).f;
    let one = verify_equivariance(&WaveOperator::klein_gordon(2.0), &vec![1.0; g.nv()], &phi, &b).unwrap();
    assert_eq!(one.lhs, one.rhs);
    let four = verify_equivariance(&WaveOperator::d_alembertian(), &vec![4.0; g.nv()], &phi, &b).unwrap();
    assert!(four.max_rel_error <= 1e-10);
    assert!(four.lhs.iter().any(|x| x.abs() > 1e-3));
}

#[test]
fn equivariance_preconditions() {
    let g = grid(0.05);
    let b = battery(&g);
    let phi: Vec<f64> = bump(&g, 4.0, 1.0).f;
    let lam = vec![4.0; g.nv()];
    assert!(matches!(verify_equivariance(&drift(), &lam, &phi, &b), Err(Error::Precondition(_))));
    let mut varying = lam.clone();
    varying[7] = 4.5;
    assert!(matches!(
        verify_equivariance(&WaveOperator::d_alembertian(), &varying, &phi, &b),
        Err(Error::NotConstantAlongGenerators(_))
    ));
    assert!(matches!(
        verify_equivariance(&WaveOperator::d_alembertian(), &vec![-1.0; g.nv()], &phi, &b),
        Err(Error::NonPositiveScale(_))
    ));
}

fn inhomogeneous(g: &GridRef) -> Problem {
    let src = Inhomogeneity::new(field::expr("bump(u, 0.3, 0.25) * bump(4, 0.8)").unwrap(), Interval::new(3.2, 4.8));
    Problem::new(WaveOperator::klein_gordon(1.0), g.clone(), bump(g, 3.5, 0.8)).with_source(src)
}

#[test]
fn solutions_are_distributional() {
    for h in [0.04, 0.02] {
        let g = grid(h);
        let b = battery(&g);
        let hom = Problem::new(drift(), g.clone(), bump(&g, 4.0, 1.0));
        for p in [hom, inhomogeneous(&g)] {
            let sol = solver::solve_rendall(&p, &SolverConfig::default()).unwrap();
            let r = distributional_residual(&p, &sol, &b).unwrap();
            assert!(r.max_normalized <= 10.0 * h * h, "h = {h}: {}", r.max_normalized);
        }
    }
}

#[test]
fn identical_variants_agree_exactly() {
    let g = grid(0.05);
    let p = inhomogeneous(&g);
    let cfg = SolverConfig::default();
    for path in [PathTag::Rendall, PathTag::Representation] {
        let r = independence_suite(&p, &[cfg, cfg], path).unwrap();
        assert_eq!(r.max_distance, 0.0);
    }
    assert!(independence_suite(&p, &[cfg], PathTag::Rendall).is_err());
}

#[test]
fn choices_change_little() {
    let h = 0.02;
    let g = grid(h);
    let p = Problem::new(WaveOperator::klein_gordon(1.0), g.clone(), bump(&g, 4.0, 1.0));
    let base = SolverConfig { delta: Some(1.8), delta_e: Some(1.8), ..Default::default() };
    let variants = [
        base,
        SolverConfig { profile: crate::borel::BumpProfile::ExpSquared, ..base },
        SolverConfig { delta: Some(1.5), ..base },
        SolverConfig { margin_cells: 9, ..base },
        SolverConfig { n_jet: 5, ..base },
        SolverConfig { n_jet: 8, ..base },
    ];
    let bound = 20.0 * (h * h + h.powi(4));
    assert!(independence_suite(&p, &variants, PathTag::Rendall).unwrap().max_distance <= bound);
    let e = [base, SolverConfig { delta_e: Some(1.5), ..base }];
    assert!(independence_suite(&p, &e, PathTag::Representation).unwrap().max_distance <= bound);
}

#[test]
fn solution_map_is_linear() {
    let g = grid(0.04);
    let p = inhomogeneous(&g);
    let q = Problem::new(WaveOperator::klein_gordon(1.0), g.clone(), bump(&g, 4.5, 0.9));
    for path in [PathTag::Rendall, PathTag::Representation] {
        assert!(linearity_defect(&p, &q, 2.0, -0.7, &SolverConfig::default(), path).unwrap() <= 1e-12);
    }
}

#[test]
fn gain_is_stable_under_refinement() {
    let gains: Vec<f64> = [0.04, 0.02, 0.01]
        .iter()
        .map(|&h| {
            let g = grid(h);
            data_gain(&inhomogeneous(&g), &SolverConfig::default(), PathTag::Rendall).unwrap()
        })
        .collect();
    for x in &gains[1..] {
        assert!((x / gains[0] - 1.0).abs() <= 0.2, "{gains:?}");
    }
}

#[test]
fn klein_gordon_convergence_against_the_closed_form() {
    let f = field::expr("bump(4, 1)").unwrap();
    let fp = f.clone();
    let r = KleinGordonReference::new(1.0, Interval::new(3.0, 5.0), move |v| fp.v_derivatives(0.0, v, 1)[1]);
    let exact: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync> = Arc::new(move |u, v| r.value(u, v));
    let t = solution_convergence(
        &[0.08, 0.04, 0.02],
        |h| {
            let g = grid(h);
            let p = Problem::new(WaveOperator::klein_gordon(1.0), g.clone(), bump(&g, 4.0, 1.0));
            Ok(solver::solve_rendall(&p, &SolverConfig::default())?.merged())
        },
        &Reference::ClosedForm(exact),
    )
    .unwrap();
    assert!(t.monotone);
    assert!(t.orders().last().unwrap() > &1.7, "{t:?}");
}
