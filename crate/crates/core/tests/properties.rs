use std::sync::Arc;

use charcauchy_core::field;
use charcauchy_core::geometry::{
    build_grid, expansion_density, light_cone, CausalRegion, GridRef, Interval, SlabGrid, SlabSpacetime,
};
use charcauchy_core::green::{retarded_solve, support_leakage, Direction, SidedSource};
use charcauchy_core::operators::{check_green_identity, GridField, WaveOperator};
use charcauchy_core::propagation::{solve_propagation, CharacteristicDatum, Inhomogeneity, JetType};
use charcauchy_core::verify::{verify_equivariance, verify_jump_formula, TestFunctionBattery, ZERO_RING};
use proptest::prelude::*;

fn grid(h: f64) -> GridRef {
    Arc::new(build_grid(SlabSpacetime::minkowski(0.0, 4.0).unwrap(), h, 1.0, Interval::new(1.0, 7.0)).unwrap())
}

fn bump(g: &SlabGrid, c: f64, w: f64) -> CharacteristicDatum {
    let f = field::expr(&format!("bump({c}, {w})")).unwrap();
    CharacteristicDatum::from_field(g, f.as_ref(), Interval::new(c - w, c + w)).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn battery_members_vanish_near_the_edge(seed in any::<u64>(), size in 1usize..8) {
        let g = grid(0.1);
        let b = TestFunctionBattery::generate(&g, size, seed).unwrap();
        let again = TestFunctionBattery::generate(&g, size, seed).unwrap();
        prop_assert_eq!(&b.params, &again.params);
        for (m, n) in b.members.iter().zip(&b.c2_norms) {
            prop_assert_eq!(m.boundary_max(ZERO_RING), 0.0);
            prop_assert!(*n >= m.max_abs());
        }
    }

    #[test]
    fn equivariance_holds_for_any_positive_constant(lambda in 0.05f64..20.0, c in 3.0f64..5.0, w in 0.4f64..1.2) {
        let g = grid(0.1);
        let b = TestFunctionBattery::generate(&g, 4, 9).unwrap();
        let phi = bump(&g, c, w).f;
        let r = verify_equivariance(&WaveOperator::d_alembertian(), &vec![lambda; g.nv()], &phi, &b).unwrap();
        prop_assert!(r.max_rel_error <= 1e-10);
    }

    #[test]
    fn jump_pairings_are_linear_in_phi(a in -3.0f64..3.0, bcoef in -3.0f64..3.0, k in 0.5f64..3.0) {
        let g = grid(0.1);
        let bat = TestFunctionBattery::generate(&g, 4, 5).unwrap();
        let op = WaveOperator::klein_gordon(1.0);
        let p = GridField::from_fn(&g, |u, v| (u * v).sin());
        let q = GridField::from_fn(&g, |u, v| (k * v).cos() * (1.0 + u));
        let pq = p.linear_combination(a, &q, bcoef).unwrap();
        for region in [CausalRegion::Jminus, CausalRegion::Jplus] {
            let rp = verify_jump_formula(&op, region, &p, &bat).unwrap();
            let rq = verify_jump_formula(&op, region, &q, &bat).unwrap();
            let r = verify_jump_formula(&op, region, &pq, &bat).unwrap();
            for i in 0..bat.len() {
                let lhs = a * rp.lhs[i] + bcoef * rq.lhs[i];
                let rhs = a * rp.rhs[i] + bcoef * rq.rhs[i];
                prop_assert!((r.lhs[i] - lhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
                prop_assert!((r.rhs[i] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }
    }

    #[test]
    fn propagation_is_linear(
        c1 in 2.8f64..5.2, w1 in 0.3f64..0.9, c2 in 2.8f64..5.2, w2 in 0.3f64..0.9,
        a in -2.0f64..2.0, bcoef in -2.0f64..2.0, q in -2.0f64..2.0,
    ) {
        let g = grid(0.05);
        let op = WaveOperator::new(field::expr("0.3*v").unwrap(), field::expr("0.5*u").unwrap(), field::constant(q));
        let (f1, f2) = (bump(&g, c1, w1), bump(&g, c2, w2));
        let f = f1.combine(a, &f2, bcoef);
        let src = Inhomogeneity::new(field::expr("bump(u, 0, 0.4) * bump(4, 0.6)").unwrap(), Interval::new(3.4, 4.6));
        for t in [JetType::Future, JetType::Past] {
            let j1 = solve_propagation(&op, &f1, Some(&src), t, 6, 5, &g).unwrap();
            let j2 = solve_propagation(&op, &f2, Some(&src.scaled(0.0)), t, 6, 5, &g).unwrap();
            let j = solve_propagation(&op, &f, Some(&src.scaled(a)), t, 6, 5, &g).unwrap();
            for r in 0..=6 {
                let expect: Vec<f64> = j1.psi[r].iter().zip(&j2.psi[r]).map(|(x, y)| a * x + bcoef * y).collect();
                let scale = 1.0 + sup(&expect);
                prop_assert!(max_diff(&j.psi[r], &expect) <= 1e-12 * scale, "r = {}", r);
            }
        }
    }

    #[test]
    fn jets_obey_the_support_law(c in 2.8f64..5.2, w in 0.3f64..0.9, q in -2.0f64..2.0) {
        let g = grid(0.05);
        let f = bump(&g, c, w);
        let op = WaveOperator::klein_gordon(q);
        for t in [JetType::Future, JetType::Past] {
            let j = solve_propagation(&op, &f, None, t, 6, 5, &g).unwrap();
            prop_assert!(j.support_law_holds(&g, f.support.unwrap()));
            prop_assert_eq!(&j.psi[0], &f.f);
            for r in 1..=6 {
                prop_assert_eq!(j.psi[r][j.cross_section_index], 0.0);
            }
        }
    }

    #[test]
    fn expansion_density_is_conormal_invariant(alpha in 0.1f64..10.0, s in 1.0f64..5.0, th in 0.2f64..2.9, ph in 0.0f64..6.2) {
        let cone = light_cone();
        let pts = vec![(s, vec![th, ph])];
        let base = expansion_density(&cone, &|_, _| 1.0, &pts).unwrap().expansion[0];
        let up = expansion_density(&cone, &|_, _| alpha, &pts).unwrap().expansion[0];
        let flip = expansion_density(&cone, &|_, _| -alpha, &pts).unwrap().expansion[0];
        prop_assert!((up - base).abs() <= 1e-6 * base.abs());
        prop_assert!((flip + base).abs() <= 1e-6 * base.abs());
    }

    #[test]
    fn retarded_solutions_stay_in_the_shadow(u0 in -0.3f64..0.3, v0 in 2.5f64..5.5, w in 0.2f64..0.5) {
        let g = grid(0.05);
        let s = GridField::from_fn(&g, |u, v| {
            let (a, b) = ((u - u0) / w, (v - v0) / w);
            if a.abs() < 1.0 && b.abs() < 1.0 { ((1.0 - a * a) * (1.0 - b * b)).powi(4) } else { 0.0 }
        });
        let op = WaveOperator::klein_gordon(1.0);
        let phi = retarded_solve(&op, &s).unwrap();
        prop_assert!(phi.max_abs() > 0.0);
        prop_assert!(support_leakage(&phi, &SidedSource::from_field(&s), Direction::Retarded) <= 1e-10 * phi.max_abs());
        let twice = retarded_solve(&op, &s.scaled(2.0)).unwrap();
        prop_assert!(twice.max_abs_diff(&phi.scaled(2.0)).unwrap() <= 1e-12 * phi.max_abs());
    }

    #[test]
    fn green_identity_residual_is_second_order(c1 in 3.0f64..5.0, d in -0.6f64..0.6, a in -1.0f64..1.0) {
        let c2 = c1 + d;
        let op = WaveOperator::new(field::constant(a), field::expr("0.2*v").unwrap(), field::constant(0.5));
        let res: Vec<f64> = [0.05, 0.025]
            .iter()
            .map(|&h| {
                let g = grid(h);
                let blob = |c: f64| GridField::from_fn(&g, move |u, v| {
                    let (x, y) = (u / 0.6, (v - c) / 0.8);
                    if x.abs() < 1.0 && y.abs() < 1.0 { ((1.0 - x * x) * (1.0 - y * y)).powi(5) } else { 0.0 }
                });
                check_green_identity(&op, &blob(c1), &blob(c2)).unwrap().max_abs_residual
            })
            .collect();
        prop_assert!(res[0] / res[1] > 3.0, "{:?}", res);
    }
}
