//! Splitting a positive defect form on H into primitive terms `φ² (dψ)²`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::SampleGrid;
use crate::error::{Error, Point, Result};
use crate::geometry::{BilinearFieldOnH, FrameField};
use crate::linalg::Sym;

/// An integer covector `p dθ + q dφ`, the differential of the phase `ψ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Covector {
    pub p: i64,
    pub q: i64,
}

impl Covector {
    pub const fn new(p: i64, q: i64) -> Self {
        Covector { p, q }
    }

    pub fn apply(&self, v: [f64; 2]) -> f64 {
        self.p as f64 * v[0] + self.q as f64 * v[1]
    }

    pub fn phase(&self, x: &Point) -> f64 {
        self.p as f64 * x[0] + self.q as f64 * x[1]
    }

    pub fn is_zero(&self) -> bool {
        self.p == 0 && self.q == 0
    }
}

/// Ordered list of candidate covectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovectorDictionary(pub Vec<Covector>);

impl Default for CovectorDictionary {
    fn default() -> Self {
        CovectorDictionary(vec![Covector::new(1, 0), Covector::new(0, 1), Covector::new(1, 1)])
    }
}

/// One smooth periodic window factor along a single axis.
///
/// A transition function `τ` rises from 0 to 1 around `rise` and falls back
/// around `fall` (each over `width` radians, with a half-cosine ramp). The
/// `Inside` factor is `sin(πτ/2)` and the `Outside` factor is `cos(πτ/2)`,
/// so the squares of the two factors sum to one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub axis: usize,
    pub rise: f64,
    pub fall: f64,
    pub width: f64,
    pub inside: bool,
}

impl Window {
    fn tau(&self, t: f64) -> (f64, f64) {
        let len = (self.fall - self.rise).rem_euclid(TAU);
        let w = self.width;
        let s = (t - self.rise + 0.5 * w).rem_euclid(TAU);
        let ramp = |x: f64| (0.5 * (1.0 - (PI * x).cos()), 0.5 * PI * (PI * x).sin() / w);
        if s < w {
            ramp(s / w)
        } else if s <= len {
            (1.0, 0.0)
        } else if s < len + w {
            let (r, dr) = ramp((s - len) / w);
            (1.0 - r, -dr)
        } else {
            (0.0, 0.0)
        }
    }

    /// Value and derivative along the window's axis.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let (tau, dtau) = self.tau(t);
        let ang = FRAC_PI_2 * tau;
        if self.inside {
            (ang.sin(), FRAC_PI_2 * ang.cos() * dtau)
        } else if tau == 1.0 {
            // cos(π/2) is not exactly zero in floating point.
            (0.0, 0.0)
        } else {
            (ang.cos(), -FRAC_PI_2 * ang.sin() * dtau)
        }
    }
}

/// A product of window factors; the square root of a partition-of-unity weight.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Bump(pub Vec<Window>);

impl Bump {
    pub fn eval(&self, x: &Point) -> (f64, [f64; 2]) {
        let mut v = 1.0;
        let mut g = [0.0; 2];
        for w in &self.0 {
            let (a, da) = w.eval(x[w.axis]);
            g[0] *= a;
            g[1] *= a;
            g[w.axis] += v * da;
            v *= a;
        }
        (v, g)
    }

    /// A single window along `axis` equal to one on `[lo, hi]` and vanishing
    /// outside `[lo - width, hi + width]`.
    pub fn arc(axis: usize, lo: f64, hi: f64, width: f64) -> Bump {
        Bump(vec![Window { axis, rise: lo - 0.5 * width, fall: hi + 0.5 * width, width, inside: true }])
    }
}

type ScalarFn = dyn Fn(&Point) -> f64 + Send + Sync;

/// The primitive form `w² c (dψ)²` restricted to H, where `w` is an optional
/// bump weight and `c` a nonnegative coefficient field.
#[derive(Clone)]
pub struct PrimitiveTerm {
    pub covector: Covector,
    pub weight: Option<Bump>,
    coefficient: Arc<ScalarFn>,
}

impl std::fmt::Debug for PrimitiveTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PrimitiveTerm")
            .field("covector", &self.covector)
            .field("weight", &self.weight)
            .finish_non_exhaustive()
    }
}

impl PrimitiveTerm {
    pub fn new(covector: Covector, coefficient: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        PrimitiveTerm { covector, weight: None, coefficient: Arc::new(coefficient) }
    }

    pub fn with_weight(mut self, weight: Bump) -> Self {
        self.weight = Some(weight);
        self
    }

    /// The unweighted coefficient `c(x)`.
    pub fn coefficient(&self, x: &Point) -> f64 {
        (self.coefficient)(x)
    }

    /// `φ²(x) = w(x)² c(x)`.
    pub fn phi_sq(&self, x: &Point) -> f64 {
        let c = self.coefficient(x);
        match &self.weight {
            Some(b) => {
                let w = b.eval(x).0;
                w * w * c
            }
            None => c,
        }
    }

    /// The form `φ² (dψ|_H)²` in the frame at `x`.
    pub fn form(&self, frame: &FrameField, x: &Point) -> Sym {
        let v = frame.eval(x);
        let a = [self.covector.apply(v[0]), self.covector.apply(v[1])];
        Sym::outer(frame.rank(), a).scale(self.phi_sq(x))
    }

    /// Same term with its coefficient multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let c = self.coefficient.clone();
        PrimitiveTerm { covector: self.covector, weight: self.weight.clone(), coefficient: Arc::new(move |x| s * c(x)) }
    }
}

/// Sum of the forms of `terms` at `x`.
pub fn reconstruct(terms: &[PrimitiveTerm], frame: &FrameField, x: &Point) -> Sym {
    terms.iter().fold(Sym::zero(frame.rank()), |acc, t| acc.add(&t.form(frame, x)))
}

/// Covectors whose clearance `min |dψ(X)|` falls below this are not used.
const CLEARANCE: f64 = 1e-3;

/// Decompose `s` into primitive terms on the grid samples.
pub fn decompose(
    s: &BilinearFieldOnH,
    frame: &FrameField,
    dict: &CovectorDictionary,
    grid: &SampleGrid,
) -> Result<Vec<PrimitiveTerm>> {
    if s.k != frame.rank() {
        return Err(Error::DimensionMismatch { expected: frame.rank(), found: s.k });
    }
    if dict.0.is_empty() || dict.0.iter().any(Covector::is_zero) {
        return Err(Error::Config("covector dictionary must be nonempty with nonzero entries".into()));
    }
    match s.k {
        1 => decompose_line(s, frame, dict, grid),
        _ => decompose_plane(s, frame, dict, grid),
    }
}

/// Decompose half of `s`, the per-stage target.
pub fn halve_and_decompose(
    s: &BilinearFieldOnH,
    frame: &FrameField,
    dict: &CovectorDictionary,
    grid: &SampleGrid,
) -> Result<Vec<PrimitiveTerm>> {
    decompose(&s.scale(0.5), frame, dict, grid)
}

fn decompose_line(
    s: &BilinearFieldOnH,
    frame: &FrameField,
    dict: &CovectorDictionary,
    grid: &SampleGrid,
) -> Result<Vec<PrimitiveTerm>> {
    let mut all_zero = true;
    for x in grid.points() {
        let v = s.eval(&x).a[0];
        if v < 0.0 {
            return Err(Error::NotInCone { point: x, coefficients: vec![v] });
        }
        if v != 0.0 {
            all_zero = false;
        }
    }
    if all_zero {
        return Ok(Vec::new());
    }
    // Smallest |dψ(X)| over the samples in the chart. A sign change between
    // neighbouring samples means a zero in between, so the clearance is zero.
    let [n0, n1] = grid.counts;
    let clearance = |c: &Covector, bump: Option<&Bump>| {
        let inside = |x: &Point| bump.map_or(true, |b| b.eval(x).0 > 0.0);
        let value = |i: usize, j: usize| c.apply(frame.eval(&grid.point(i % n0, j % n1))[0]);
        let mut best = f64::INFINITY;
        for i in 0..n0 {
            for j in 0..n1 {
                if !inside(&grid.point(i, j)) {
                    continue;
                }
                let d = value(i, j);
                best = best.min(d.abs());
                for (a, b) in [(i + 1, j), (i, j + 1)] {
                    if inside(&grid.point(a % n0, b % n1)) && d * value(a, b) <= 0.0 {
                        return 0.0;
                    }
                }
            }
        }
        best
    };
    let best_for = |bump: Option<&Bump>| {
        let mut best: Option<(Covector, f64)> = None;
        for c in &dict.0 {
            let m = clearance(c, bump);
            if best.map_or(true, |(_, b)| m > b) {
                best = Some((*c, m));
            }
        }
        best.expect("dictionary is nonempty")
    };
    let make = |cov: Covector, weight: Option<Bump>| {
        let (s, frame) = (s.clone(), frame.clone());
        let term = PrimitiveTerm::new(cov, move |x| {
            let d = cov.apply(frame.eval(x)[0]);
            s.eval(x).a[0] / (d * d)
        });
        match weight {
            Some(w) => term.with_weight(w),
            None => term,
        }
    };

    let (cov, clear) = best_for(None);
    if clear > CLEARANCE {
        return Ok(vec![make(cov, None)]);
    }

    // No global covector is transverse: fall back to a cosine partition of
    // unity over at most four rectangles.
    let mut worst_best = clear;
    for split in [vec![0usize], vec![1], vec![0, 1]] {
        let charts = partition(&split);
        let picks: Vec<(Covector, f64)> = charts.iter().map(|b| best_for(Some(b))).collect();
        let weakest = picks.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        if weakest > CLEARANCE {
            return Ok(charts.into_iter().zip(picks).map(|(b, (c, _))| make(c, Some(b))).collect());
        }
        worst_best = worst_best.max(weakest);
    }
    Err(Error::NoTransverseCovector { best: worst_best })
}

/// Square roots of a partition of unity built from half-circle windows along
/// the listed axes (two charts per split axis).
pub fn partition(axes: &[usize]) -> Vec<Bump> {
    let mut charts = vec![Bump::default()];
    for &axis in axes {
        let mut next = Vec::new();
        for chart in &charts {
            for inside in [true, false] {
                let mut c = chart.clone();
                c.0.push(Window { axis, rise: -FRAC_PI_2, fall: FRAC_PI_2, width: 0.3, inside });
                next.push(c);
            }
        }
        charts = next;
    }
    charts
}

fn decompose_plane(
    s: &BilinearFieldOnH,
    frame: &FrameField,
    dict: &CovectorDictionary,
    grid: &SampleGrid,
) -> Result<Vec<PrimitiveTerm>> {
    if dict.0.len() < 3 {
        return Err(Error::Config("rank-two decomposition needs three covectors".into()));
    }
    let triple = [dict.0[0], dict.0[1], dict.0[2]];
    let solve = {
        let (s, frame) = (s.clone(), frame.clone());
        move |x: &Point| -> Option<[f64; 3]> {
            let v = frame.eval(x);
            let target = s.eval(x);
            let mut m = [[0.0; 3]; 3];
            for (i, c) in triple.iter().enumerate() {
                let a = [c.apply(v[0]), c.apply(v[1])];
                m[0][i] = a[0] * a[0];
                m[1][i] = a[0] * a[1];
                m[2][i] = a[1] * a[1];
            }
            solve3(m, target.a)
        }
    };
    let mut nonzero = [false; 3];
    for x in grid.points() {
        let target = s.eval(&x);
        let c = solve(&x).ok_or_else(|| Error::Config("dictionary squares do not span the symmetric forms".into()))?;
        let tol = 1e-12 * target.norm().max(1e-300);
        if c.iter().any(|&ci| ci < -tol) {
            return Err(Error::NotInCone { point: x, coefficients: c.to_vec() });
        }
        for i in 0..3 {
            if c[i].abs() > tol {
                nonzero[i] = true;
            }
        }
    }
    let solve = Arc::new(solve);
    Ok((0..3)
        .filter(|&i| nonzero[i])
        .map(|i| {
            let solve = solve.clone();
            PrimitiveTerm::new(triple[i], move |x| solve(x).map_or(f64::NAN, |c| c[i]))
        })
        .collect())
}

/// Solve a 3×3 system by Cramer's rule with partial pivot guard.
fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |a: &[[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let d = det(&m);
    let scale = m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max).powi(3);
    if !(d.abs() > 1e-12 * scale) {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, o) in out.iter_mut().enumerate() {
        let mut mm = m;
        for r in 0..3 {
            mm[r][col] = b[r];
        }
        *o = det(&mm) / d;
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_squares_sum_to_one() {
        let charts = partition(&[0, 1]);
        assert_eq!(charts.len(), 4);
        for &x in &[[0.0, 0.0], [1.5, 4.0], [3.0, 1.7], [5.0, 6.2], [1.65, 4.65]] {
            let s: f64 = charts.iter().map(|b| b.eval(&x).0.powi(2)).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn window_vanishes_outside_its_arc() {
        let b = Bump::arc(1, 1.0, 2.0, 0.5);
        assert_eq!(b.eval(&[0.3, 0.4]).0, 0.0);
        assert_eq!(b.eval(&[0.3, 2.6]).0, 0.0);
        assert_eq!(b.eval(&[0.3, 1.5]).0, 1.0);
        assert_eq!(b.eval(&[0.3, 0.4]).1, [0.0, 0.0]);
    }
}
