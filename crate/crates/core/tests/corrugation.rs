mod common;

use std::f64::consts::TAU;

use convint::bessel::{amplitude_solve, J0_FIRST_ZERO};
use convint::corrugation::{
    build_fields, check_grid, corrugate, loop_point, measure_candidate, orthonormal_pair, CorrugationLayer,
    CorrugationSettings, StepBudget,
};
use convint::decomposition::{decompose, Bump, Covector, CovectorDictionary, PrimitiveTerm};
use convint::domain::PeriodicDomain;
use convint::expr::Expr;
use convint::geometry::{defect_form, FrameField, MetricOnH, SubRiemannian};
use convint::linalg::Sym;
use convint::map::MapRep;
use convint::profile::Profile;
use convint::verify::EmbeddedTorus;
use convint::Error;
use proptest::prelude::*;

fn structure(frame: FrameField, metric: Sym) -> SubRiemannian {
    SubRiemannian::new(PeriodicDomain::torus([16, 16]).unwrap(), frame, MetricOnH::constant(metric)).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn flagship_term() -> (MapRep, SubRiemannian, PrimitiveTerm) {
    let (f, s) = common::flagship(16);
    let d = defect_form(&f, &s.metric, &s.frame);
    let mut terms = decompose(&d, &s.frame, &CovectorDictionary::default(), &s.domain.grid()).unwrap();
    (f, s, terms.remove(0))
}

#[test]
fn plane_pair_in_the_plane_is_a_rotation() {
    let s = structure(FrameField::line([Expr::constant(1.0), Expr::constant(0.5)]), Sym::scalar(1.0));
    let f = MapRep::new(vec![Expr::parse("0.5 * cos(phi)").unwrap(), Expr::parse("0.5 * sin(phi) + 0.3 * theta").unwrap()]).unwrap();
    let term = PrimitiveTerm::new(Covector::new(1, 0), |_| 0.1);
    let (e1, e2) = orthonormal_pair(&f, &s, &term, &[0.4, 1.1]).unwrap();
    assert_eq!(e2, vec![-e1[1], e1[0]]);
}

#[test]
fn space_pair_for_a_line_uses_the_generic_vector() {
    let s = structure(FrameField::line([Expr::constant(1.0), Expr::constant(0.0)]), Sym::scalar(1.0));
    let f = MapRep::new(vec![Expr::theta(), Expr::phi(), Expr::constant(0.0)]).unwrap();
    let term = PrimitiveTerm::new(Covector::new(1, 0), |_| 0.5);
    let (e1, e2) = orthonormal_pair(&f, &s, &term, &[1.0, 2.0]).unwrap();
    assert_eq!(e1, vec![1.0, 0.0, 0.0]);
    assert_eq!(e2[0], 0.0);
    assert!((dot(&e2, &e2) - 1.0).abs() < 1e-15);
}

#[test]
fn no_normal_direction_when_target_equals_rank() {
    let s = structure(FrameField::coordinate(), Sym::identity(2));
    let f = MapRep::new(vec![Expr::theta(), Expr::phi()]).unwrap();
    let term = PrimitiveTerm::new(Covector::new(1, 0), |_| 0.5);
    assert!(matches!(orthonormal_pair(&f, &s, &term, &[0.0, 0.0]), Err(Error::DegenerateFrame { .. })));
}

#[test]
fn plane_pair_for_a_surface_avoids_the_kernel_direction() {
    let torus = EmbeddedTorus::default();
    let s = structure(FrameField::coordinate(), Sym::two(1.5, 0.0, 10.0));
    let f = torus.parametrization().scaled(0.9).unwrap();
    let term = PrimitiveTerm::new(Covector::new(1, 0), |_| 0.2);
    for x in [[0.3, 0.2], [2.0, 4.0], [5.0, 1.0]] {
        let (e1, e2) = orthonormal_pair(&f, &s, &term, &x).unwrap();
        assert!((dot(&e1, &e1) - 1.0).abs() < 1e-10 && (dot(&e2, &e2) - 1.0).abs() < 1e-10);
        assert!(dot(&e1, &e2).abs() < 1e-10);
        // τ = ker dθ = span ∂φ; e2 must be orthogonal to df(∂φ).
        let jet = f.jet(&x);
        let t: Vec<f64> = (0..3).map(|i| jet.jac[i][1]).collect();
        assert!(dot(&e2, &t).abs() < 1e-8 * dot(&t, &t).sqrt());
    }
}

/// Independent J0 by the periodic trapezoid rule on its integral form.
fn j0_by_quadrature(x: f64) -> f64 {
    let n = 256;
    (0..n).map(|i| (x * (TAU * i as f64 / n as f64).sin()).cos()).sum::<f64>() / n as f64
}

#[test]
fn bessel_loop_mean_and_speed() {
    let e1 = [0.6, 0.8, 0.0];
    let e2 = [0.0, 0.0, 1.0];
    for (r, s0) in [(1.0, 0.9), (2.0, 0.5), (0.7, 0.01), (3.0, 3.0)] {
        let a = amplitude_solve(r, s0).unwrap();
        assert!(a < J0_FIRST_ZERO);
        assert!((r * j0_by_quadrature(a) - s0).abs() < 1e-12 * r);
        let n = 512;
        let mut mean = [0.0; 3];
        for i in 0..n {
            let p = loop_point(&Profile::Bessel, r, a, &e1, &e2, TAU * i as f64 / n as f64);
            assert!((dot(&p, &p).sqrt() - r).abs() < 1e-10 * r.max(1.0));
            for c in 0..3 {
                mean[c] += p[c] / n as f64;
            }
        }
        let along = dot(&mean, &e1);
        assert!((along - s0).abs() < 1e-10, "mean along e1 {along} vs {s0}");
        assert!(dot(&mean, &e2).abs() < 1e-12);
    }
}

#[test]
fn plateau_loop_mean() {
    let e1 = [1.0, 0.0];
    let e2 = [0.0, 1.0];
    let p = Profile::default();
    for (r, s0) in [(1.0, 0.9), (2.0, 0.5)] {
        let a = p.solve_amplitude(r, s0).unwrap();
        let n = 4096;
        let mean: f64 = (0..n).map(|i| loop_point(&p, r, a, &e1, &e2, TAU * i as f64 / n as f64)[0]).sum::<f64>() / n as f64;
        assert!((mean - s0).abs() < 1e-10, "{mean} vs {s0}");
    }
    // Frozen from an independent high-precision quadrature and root finder.
    assert!((p.solve_amplitude(1.0, 0.9).unwrap() - 0.477_700_800_002_603_8).abs() < 1e-10);
}

/// `sup_s |γ(s)/r - (s0/r) e1| - sqrt(1 - (s0/r)²)`: how far the loop strays
/// beyond the shrunken sphere bound.
fn amplitude_excess(p: &Profile, ratio: f64) -> f64 {
    let a = p.solve_amplitude(1.0, ratio).unwrap();
    let n = 4096;
    let sup = (0..n)
        .map(|i| {
            let q = loop_point(p, 1.0, a, &[1.0, 0.0], &[0.0, 1.0], TAU * i as f64 / n as f64);
            (q[0] - ratio).hypot(q[1])
        })
        .fold(0.0, f64::max);
    sup - (1.0 - ratio * ratio).sqrt()
}

#[test]
fn amplitude_bound_is_approached_by_sharper_loops() {
    for ratio in [0.9, 0.7, 0.4] {
        let bessel = amplitude_excess(&Profile::Bessel, ratio);
        let soft = amplitude_excess(&Profile::Plateau { sharpness: 3.0 }, ratio);
        let sharp = amplitude_excess(&Profile::Plateau { sharpness: 12.0 }, ratio);
        assert!(bessel > soft && soft > sharp && sharp > 0.0, "{bessel} {soft} {sharp}");
        assert!(sharp < 0.1 * bessel);
    }
}

#[test]
fn flagship_step_meets_its_budget() {
    let (f, s, term) = flagship_term();
    let budget = StepBudget::new(0.05, 0.05, 1.0).unwrap();
    let step = corrugate(&f, &term, &budget, &s, &CorrugationSettings::default(), 4.0).unwrap();
    let last = step.transcript.last().unwrap();
    assert!(last.passed && last.residual < 0.05 && last.margin > 0.0);
    assert!(last.distance <= 0.19f64.sqrt() + 0.05);
    assert_eq!(step.lambda, Some(32.0));
    assert_eq!(step.map.layers().len(), 1);
}

#[test]
fn vanishing_terms_add_nothing() {
    let (f, s) = common::flagship(16);
    let term = PrimitiveTerm::new(Covector::new(0, 1), |_| 0.0);
    let budget = StepBudget::new(0.05, 0.05, 1.0).unwrap();
    let step = corrugate(&f, &term, &budget, &s, &CorrugationSettings::default(), 4.0).unwrap();
    assert!(step.lambda.is_none() && step.map.layers().is_empty());
}

#[test]
fn loose_budgets_accept_the_starting_frequency() {
    let (f, s, term) = flagship_term();
    let budget = StepBudget::new(10.0, 10.0, 10.0).unwrap();
    let step = corrugate(&f, &term, &budget, &s, &CorrugationSettings::default(), 4.0).unwrap();
    assert_eq!(step.lambda, Some(4.0));
    assert_eq!(step.transcript.len(), 1);
}

#[test]
fn frequency_cap_is_enforced() {
    let (f, s, term) = flagship_term();
    let budget = StepBudget::new(1e-3, 0.05, 1.0).unwrap();
    let settings = CorrugationSettings { lambda_max: 16.0, ..Default::default() };
    match corrugate(&f, &term, &budget, &s, &settings, 4.0) {
        Err(Error::FrequencyExhausted { lambda_max, .. }) => assert_eq!(lambda_max, 16.0),
        other => panic!("expected FrequencyExhausted, got {other:?}"),
    }
}

#[test]
fn tighter_residual_budgets_never_lower_the_frequency() {
    let (f, s, term) = flagship_term();
    let mut previous = 0.0;
    for delta in [0.2, 0.1, 0.05, 0.025, 0.0125] {
        let budget = StepBudget::new(delta, 0.05, 1.0).unwrap();
        let step = corrugate(&f, &term, &budget, &s, &CorrugationSettings::default(), 4.0).unwrap();
        let lambda = step.lambda.unwrap();
        assert!(lambda >= previous, "delta {delta}: {lambda} < {previous}");
        previous = lambda;
    }
}

#[test]
fn weighted_layers_leave_the_map_untouched_off_support() {
    let (f, s) = common::flagship(16);
    let weight = Bump::arc(0, 1.0, 2.0, 0.4);
    let term = PrimitiveTerm::new(Covector::new(0, 1), |x: &[f64; 2]| 0.09 * (2.0 + x[0].cos()).powi(2)).with_weight(weight.clone());
    let layer = common::layer(&f, &term, &s, Profile::default(), 32.0);
    let g = f.with_layer(layer).unwrap();
    let grid = PeriodicDomain::torus([64, 64]).unwrap().grid();
    let (mut outside, mut inside_moved) = (0, 0);
    for x in grid.points() {
        let (a, b) = (f.jet(&x), g.jet(&x));
        if term.phi_sq(&x) == 0.0 {
            outside += 1;
            assert_eq!(a.value, b.value);
            assert_eq!(a.jac, b.jac);
        } else if a.jac != b.jac {
            inside_moved += 1;
        }
    }
    assert!(outside > 0 && inside_moved > 0);
}

#[test]
fn bessel_amplitudes_stay_below_the_first_zero() {
    let (f, s, term) = flagship_term();
    let settings = CorrugationSettings { profile: Profile::Bessel, ..Default::default() };
    let fields = build_fields(&f, &term, &s, &settings).unwrap().unwrap();
    assert!(fields.node_values(0).iter().all(|a| *a >= 0.0 && *a < J0_FIRST_ZERO));
}

/// Least-squares slope of log y against log x.
fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / lx.len() as f64, ly.iter().sum::<f64>() / ly.len() as f64);
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

#[test]
fn tangential_leakage_and_displacement_decay_like_one_over_lambda() {
    let torus = EmbeddedTorus::default();
    let s = SubRiemannian::new(
        PeriodicDomain::torus([16, 16]).unwrap(),
        FrameField::coordinate(),
        MetricOnH::new(vec![Expr::constant(1.0), Expr::constant(0.0), torus.leaf_metric(0.0).entries[0].clone()]).unwrap(),
    )
    .unwrap();
    let f = torus.parametrization().scaled(0.9).unwrap();
    let term = PrimitiveTerm::new(Covector::new(0, 1), |x: &[f64; 2]| 0.15 * (2.0 + x[0].cos()).powi(2));
    let settings = CorrugationSettings { profile: Profile::Bessel, ..Default::default() };
    let fields = build_fields(&f, &term, &s, &settings).unwrap().unwrap();
    let budget = StepBudget::new(1.0, 1.0, 1.0).unwrap();
    let lambdas: Vec<f64> = (4..=10).map(|e| 2f64.powi(e)).collect();
    let (mut tau, mut c0) = (Vec::new(), Vec::new());
    for &l in &lambdas {
        let layer = CorrugationLayer::from_fields(l, term.covector, None, Profile::Bessel, 1.0, fields.clone()).unwrap();
        let grid = check_grid(&f, &layer, &s, 4.0);
        let stats = measure_candidate(&f, &layer, &term, &s, &budget, &grid).unwrap();
        tau.push(stats.tau_derivative);
        c0.push(stats.c0);
    }
    let (st, sc) = (slope(&lambdas, &tau), slope(&lambdas, &c0));
    assert!((st + 1.0).abs() <= 0.1, "tau slope {st}");
    assert!((sc + 1.0).abs() <= 0.1, "c0 slope {sc}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, .. ProptestConfig::default() })]

    #[test]
    fn bessel_amplitude_inverts_the_mean(r in 0.01..10.0f64, t in 0.0..1.0f64) {
        let s0 = (r * t).max(1e-300);
        let a = amplitude_solve(r, s0).unwrap();
        prop_assert!(a < J0_FIRST_ZERO);
        prop_assert!((r * j0_by_quadrature(a) - s0).abs() < 1e-12 * r);
    }

    #[test]
    fn plane_pairs_are_orthonormal(theta in 0.0..TAU, phi in 0.0..TAU, c in 0.2..0.95f64) {
        let torus = EmbeddedTorus::default();
        let s = structure(FrameField::coordinate(), Sym::two(1.5, 0.2, 10.0));
        let f = torus.parametrization().scaled(c).unwrap();
        for cov in [Covector::new(1, 0), Covector::new(0, 1), Covector::new(1, 1)] {
            let term = PrimitiveTerm::new(cov, |_| 0.2);
            let (e1, e2) = orthonormal_pair(&f, &s, &term, &[theta, phi]).unwrap();
            prop_assert!((dot(&e1, &e1) - 1.0).abs() < 1e-10);
            prop_assert!((dot(&e2, &e2) - 1.0).abs() < 1e-10);
            prop_assert!(dot(&e1, &e2).abs() < 1e-10);
        }
    }
}
