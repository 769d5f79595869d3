#![allow(dead_code)]

use convint::corrugation::{build_fields, CorrugationLayer, CorrugationSettings};
use convint::decomposition::{Bump, Covector, PrimitiveTerm};
use convint::geometry::SubRiemannian;
use convint::map::MapRep;
use convint::profile::Profile;
use convint::verify::EmbeddedTorus;

/// The shortened projection on the horizontal circles of the standard torus.
pub fn flagship(res: usize) -> (MapRep, SubRiemannian) {
    let torus = EmbeddedTorus::default();
    (torus.projection().scaled(0.9).unwrap(), torus.structure(0.0, [res, res]).unwrap())
}

/// A layer for `term` at frequency `lambda`, built without any frequency search.
pub fn layer(f: &MapRep, term: &PrimitiveTerm, s: &SubRiemannian, profile: Profile, lambda: f64) -> CorrugationLayer {
    let settings = CorrugationSettings { profile, ..Default::default() };
    let fields = build_fields(f, term, s, &settings).unwrap().expect("term is nonzero");
    CorrugationLayer::from_fields(lambda, term.covector, term.weight.clone(), profile, 1.0, fields).unwrap()
}

/// The flagship map with `count` stacked layers of increasing frequency.
pub fn layered_map(count: usize) -> (MapRep, SubRiemannian) {
    let (mut f, s) = flagship(16);
    for i in 0..count {
        let covector = if i % 2 == 0 { Covector::new(0, 1) } else { Covector::new(1, 1) };
        let term = PrimitiveTerm::new(covector, |x: &[f64; 2]| 0.02 * (1.0 + 0.3 * x[0].sin()));
        let term = if i == 1 { term.with_weight(Bump::arc(0, 1.0, 2.5, 0.4)) } else { term };
        let profile = if i % 2 == 0 { Profile::Bessel } else { Profile::default() };
        let l = layer(&f, &term, &s, profile, 4.0 * 2f64.powi(i as i32));
        f = f.with_layer(l).unwrap();
    }
    (f, s)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
