use std::f64::consts::TAU;

use convint::domain::PeriodicDomain;
use convint::expr::Expr;
use convint::map::MapRep;
use convint::smooth_solver::{
    formal_solution_beta, invert_along_flow, solve_unit_speed, solve_with, split_residuals, trig_fit, FlowInversion,
    LineFieldProblem, LineFlow,
};
use convint::Error;
use proptest::prelude::*;

fn grid() -> convint::domain::SampleGrid {
    PeriodicDomain::torus([12, 12]).unwrap().grid()
}

#[test]
fn circle_beta_matches_the_hand_computation() {
    let c = 0.6;
    let p = LineFieldProblem::circle(c, [16, 16]).unwrap();
    let beta = formal_solution_beta(&p);
    let k = (1.0f64 - c * c).sqrt();
    for x in grid().points() {
        assert!((beta[0].eval(&x) + k * x[1].cos()).abs() < 1e-14);
        assert!((beta[1].eval(&x) + k * x[1].sin()).abs() < 1e-14);
        let [a, b] = split_residuals(&p, &beta, &x);
        assert!(a.abs() < 1e-12 && b.abs() < 1e-12);
    }
}

#[test]
fn circle_solutions_have_the_closed_form() {
    for (c, k) in [(0.6, 0.8), (0.9, 0.19f64.sqrt())] {
        let p = LineFieldProblem::circle(c, [16, 16]).unwrap();
        let s = solve_unit_speed(&p).unwrap();
        assert!(s.unit_speed_residual < 1e-8 && s.flow_residual < 1e-8);
        assert!(s.map.layers().is_empty());
        for x in grid().points() {
            let v = s.map.value(&x);
            let phi = x[1];
            assert!((v[0] - (c * phi.cos() - k * phi.sin())).abs() < 1e-10);
            assert!((v[1] - (c * phi.sin() + k * phi.cos())).abs() < 1e-10);
        }
    }
}

#[test]
fn unit_speed_inputs_are_rejected() {
    let f = MapRep::new(vec![Expr::phi().cos(), Expr::phi().sin()]).unwrap();
    assert!(matches!(LineFieldProblem::new([0.0, 1.0], &f, [16, 16]), Err(Error::OutOfRange(_))));
    assert!(LineFieldProblem::circle(1.0, [16, 16]).is_err());
}

#[test]
fn zero_right_hand_side_inverts_to_zero() {
    let flow = LineFlow::new([0.0, 1.0]).unwrap();
    let zero = [Expr::constant(0.0), Expr::constant(0.0)];
    let a = invert_along_flow(&zero, &flow, &FlowInversion::global([8, 8])).unwrap();
    assert!(grid().points().all(|x| a[0].eval(&x) == 0.0 && a[1].eval(&x) == 0.0));
}

#[test]
fn nonzero_orbit_means_are_obstructions() {
    let flow = LineFlow::new([0.0, 1.0]).unwrap();
    let beta = [Expr::constant(1.0), Expr::constant(0.0)];
    match invert_along_flow(&beta, &flow, &FlowInversion::global([8, 8])) {
        Err(Error::PeriodicityObstruction { mean, .. }) => assert!((mean[0] - 1.0).abs() < 1e-12),
        other => panic!("expected an obstruction, got {other:?}"),
    }
}

#[test]
fn charts_across_the_flow_glue_and_charts_along_it_do_not() {
    let p = LineFieldProblem::circle(0.6, [16, 16]).unwrap();
    let across = solve_with(&p, &FlowInversion::two_chart(0, [16, 16])).unwrap();
    assert!(across.unit_speed_residual < 1e-8);
    assert!(matches!(
        solve_with(&p, &FlowInversion::two_chart(1, [16, 16])),
        Err(Error::PeriodicityObstruction { .. })
    ));
}

#[test]
fn slanted_flows_are_inverted() {
    // X = ∂θ + 2∂φ closes after one turn in θ.
    let flow = LineFlow::new([1.0, 2.0]).unwrap();
    assert_eq!(flow.direction, [1, 2]);
    let beta = [Expr::parse("cos(theta + phi)").unwrap(), Expr::parse("sin(2 * phi) - cos(theta)").unwrap()];
    let alpha = invert_along_flow(&beta, &flow, &FlowInversion::global([16, 16])).unwrap();
    for x in grid().points() {
        for c in 0..2 {
            let xa = flow.derivative(&alpha[c]).eval(&x);
            assert!((xa - beta[c].eval(&x)).abs() < 1e-8);
        }
    }
}

#[test]
fn general_line_problem_reaches_unit_speed() {
    let f0 = MapRep::new(vec![
        Expr::parse("0.5 * cos(phi) + 0.1 * sin(theta)").unwrap(),
        Expr::parse("0.5 * sin(phi) + 0.05 * cos(phi) * sin(theta)").unwrap(),
    ])
    .unwrap();
    let p = LineFieldProblem::new([0.0, 1.0], &f0, [16, 32]).unwrap();
    let s = solve_unit_speed(&p).unwrap();
    assert!(s.unit_speed_residual < 1e-8, "{}", s.unit_speed_residual);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, .. ProptestConfig::default() })]

    #[test]
    fn inversion_is_linear(a in -2.0..2.0f64, b in -2.0..2.0f64, p in 1..3i32) {
        let flow = LineFlow::new([0.0, 1.0]).unwrap();
        let inv = FlowInversion { intervals: 512, ..FlowInversion::global([8, 8]) };
        let b1 = [Expr::phi().scale(p as f64).sin(), Expr::theta().add(&Expr::phi()).cos()];
        let b2 = [Expr::phi().cos().mul(&Expr::theta().sin()), Expr::phi().scale(2.0).sin()];
        let combo = [b1[0].scale(a).add(&b2[0].scale(b)), b1[1].scale(a).add(&b2[1].scale(b))];
        let (m1, m2, mc) = (
            invert_along_flow(&b1, &flow, &inv).unwrap(),
            invert_along_flow(&b2, &flow, &inv).unwrap(),
            invert_along_flow(&combo, &flow, &inv).unwrap(),
        );
        for x in grid().points() {
            for c in 0..2 {
                let lin = a * m1[c].eval(&x) + b * m2[c].eval(&x);
                prop_assert!((mc[c].eval(&x) - lin).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn split_system_reproduces_unit_speed(c in 0.1..0.7f64, w in -0.3..0.3f64) {
        let f0 = MapRep::new(vec![
            Expr::phi().cos().scale(c).add(&Expr::theta().sin().scale(0.1 * w)),
            Expr::phi().sin().scale(c).mul(&Expr::constant(1.0).add(&Expr::theta().cos().scale(w))),
        ]).unwrap();
        let p = LineFieldProblem::new([0.0, 1.0], &f0, [8, 8]).unwrap();
        let beta = formal_solution_beta(&p);
        let [u, v] = p.velocity();
        for x in grid().points() {
            let [o, q] = split_residuals(&p, &beta, &x);
            prop_assert!(o.abs() < 1e-12 && q.abs() < 1e-12);
            // |X f0 + β|² = |X f0|² + 2⟨X f0, β⟩ + |β|² = 1.
            let s = (u.eval(&x) + beta[0].eval(&x)).powi(2) + (v.eval(&x) + beta[1].eval(&x)).powi(2);
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn trig_fit_interpolates(c in prop::collection::vec(-1.0..1.0f64, 4), p in 0..4i32, q in -3..4i32) {
        let n = [16, 16];
        let g = PeriodicDomain::torus(n).unwrap().grid();
        let f = |x: &[f64; 2]| c[0] + c[1] * (p as f64 * x[0] + q as f64 * x[1]).cos() + c[2] * x[1].sin() + c[3] * (x[0] - x[1]).cos();
        let s: Vec<f64> = g.points().map(|x| f(&x)).collect();
        let e = trig_fit(&s, n);
        let y = [0.377 * TAU, 0.913];
        prop_assert!((e.eval(&y) - f(&y)).abs() < 1e-12);
    }
}
