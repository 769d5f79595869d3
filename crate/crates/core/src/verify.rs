//! End-to-end instances and independent certificates: the embedded torus
//! with its slope foliations, horizontal path lengths, and the random
//! projection search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{PeriodicDomain, SampleGrid};
use crate::error::{Error, Point, Result};
use crate::expr::Expr;
use crate::geometry::{
    defect_form, defect_norm, h_immersion_margin, pullback_at, FrameField, MetricOnH, SubRiemannian,
};
use crate::linalg::{singular_extremes, Sym, MAX_N};
use crate::map::MapRep;

/// The torus of revolution with tube radius `a` and center radius `b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedTorus {
    pub a: f64,
    pub b: f64,
}

impl Default for EmbeddedTorus {
    fn default() -> Self {
        EmbeddedTorus { a: 1.0, b: 2.0 }
    }
}

impl EmbeddedTorus {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > a) {
            return Err(Error::Config(format!("torus radii need 0 < a < b, got a={a}, b={b}")));
        }
        Ok(EmbeddedTorus { a, b })
    }

    /// `b + a cos θ`, the distance of a point from the axis.
    pub fn radius(&self) -> Expr {
        Expr::constant(self.b).add(&Expr::theta().cos().scale(self.a))
    }

    /// `ψ(θ, φ) = ((b + a cos θ) cos φ, (b + a cos θ) sin φ, a sin θ)`.
    pub fn parametrization(&self) -> MapRep {
        let r = self.radius();
        let phi = Expr::phi();
        MapRep::new(vec![r.mul(&phi.cos()), r.mul(&phi.sin()), Expr::theta().sin().scale(self.a)])
            .expect("three components")
    }

    /// The projection `(x, y, z) ↦ (x, y)` restricted to the torus.
    pub fn projection(&self) -> MapRep {
        let r = self.radius();
        let phi = Expr::phi();
        MapRep::new(vec![r.mul(&phi.cos()), r.mul(&phi.sin())]).expect("two components")
    }

    /// Generator `α ∂_θ + ∂_φ` of the slope-α foliation.
    pub fn leaf_field(&self, alpha: f64) -> [Expr; 2] {
        [Expr::constant(alpha), Expr::constant(1.0)]
    }

    /// `g_α(X, X) = α² a² + (b + a cos θ)²` for the generator above.
    pub fn leaf_metric(&self, alpha: f64) -> MetricOnH {
        let e = Expr::constant(alpha * alpha * self.a * self.a).add(&self.radius().powi(2));
        MetricOnH { entries: vec![e] }
    }

    /// The structure `(H_α, g_α)` with the generator as frame.
    pub fn structure(&self, alpha: f64, resolution: [usize; 2]) -> Result<SubRiemannian> {
        SubRiemannian::new(
            PeriodicDomain::torus(resolution)?,
            FrameField::line(self.leaf_field(alpha)),
            self.leaf_metric(alpha),
        )
    }

    /// The same structure described by a g_α-unit frame and unit metric.
    pub fn unit_structure(&self, alpha: f64, resolution: [usize; 2]) -> Result<SubRiemannian> {
        let norm = self.leaf_metric(alpha).entries[0].sqrt();
        let x = self.leaf_field(alpha);
        SubRiemannian::new(
            PeriodicDomain::torus(resolution)?,
            FrameField::line([x[0].div(&norm), x[1].div(&norm)]),
            MetricOnH::constant(Sym::scalar(1.0)),
        )
    }

    /// Smallest singular value of `dψ` on the grid.
    pub fn immersion_margin(&self, grid: &SampleGrid) -> f64 {
        h_immersion_margin(&self.parametrization(), &FrameField::coordinate(), grid)
    }
}

/// Outcome of certifying the unscaled projection on the α = 0 leaves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub a: f64,
    pub b: f64,
    pub defect: f64,
    pub margin: f64,
    pub certified: bool,
    pub note: String,
}

pub const PARAMETRIZATION_NOTE: &str =
    "second coordinate of the torus uses sin(phi); a repeated cos(phi) there would not be an immersion";

/// Certify `(x, y)` as a partial isometry of the horizontal circles.
pub fn certify_alpha_zero(torus: EmbeddedTorus, resolution: [usize; 2]) -> Result<Certification> {
    let s = torus.unit_structure(0.0, resolution)?;
    let f = torus.projection();
    let grid = s.domain.grid();
    let defect = defect_norm(&defect_form(&f, &s.metric, &s.frame), &s.metric, &grid)?;
    let margin = h_immersion_margin(&f, &s.frame, &grid);
    Ok(Certification {
        a: torus.a,
        b: torus.b,
        defect,
        margin,
        certified: defect < 1e-12 && margin > 0.0,
        note: PARAMETRIZATION_NOTE.to_string(),
    })
}

/// Certification record for the default torus `a = 1, b = 2`.
pub fn example_alpha_zero() -> Result<Certification> {
    certify_alpha_zero(EmbeddedTorus::default(), [64, 64])
}

/// A straight segment `γ(t) = start + t · direction`, `t ∈ [0, length]`,
/// whose velocity lies in H.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizontalCurve {
    pub start: Point,
    pub direction: [f64; 2],
    pub length: f64,
}

/// Frame coordinates of `w` (least squares) and the residual outside H.
fn frame_coordinates(frame: &FrameField, x: &Point, w: [f64; 2]) -> ([f64; 2], f64) {
    let v = frame.eval(x);
    if frame.rank() == 2 {
        let g = Sym::two(
            v[0][0] * v[0][0] + v[0][1] * v[0][1],
            v[0][0] * v[1][0] + v[0][1] * v[1][1],
            v[1][0] * v[1][0] + v[1][1] * v[1][1],
        );
        let rhs = [v[0][0] * w[0] + v[0][1] * w[1], v[1][0] * w[0] + v[1][1] * w[1]];
        return (g.solve(rhs), 0.0);
    }
    let vv = v[0][0] * v[0][0] + v[0][1] * v[0][1];
    let c = (v[0][0] * w[0] + v[0][1] * w[1]) / vv;
    let res = [w[0] - c * v[0][0], w[1] - c * v[0][1]];
    let wn = w[0].hypot(w[1]).max(1e-300);
    ([c, 0.0], res[0].hypot(res[1]) / wn)
}

impl HorizontalCurve {
    pub fn new(structure: &SubRiemannian, start: Point, direction: [f64; 2], length: f64) -> Result<Self> {
        let curve = HorizontalCurve { start, direction, length };
        for i in 0..=64 {
            let x = curve.at(length * i as f64 / 64.0);
            let (_, residual) = frame_coordinates(&structure.frame, &x, direction);
            if !(residual < 1e-8) {
                return Err(Error::NotHorizontal { residual });
            }
        }
        Ok(curve)
    }

    /// Segment of the leaf through `start` following the first frame field,
    /// which must be constant.
    pub fn leaf(structure: &SubRiemannian, start: Point, length: f64) -> Result<Self> {
        let v = structure.frame.eval(&start)[0];
        HorizontalCurve::new(structure, start, v, length)
    }

    pub fn at(&self, t: f64) -> Point {
        [self.start[0] + t * self.direction[0], self.start[1] + t * self.direction[1]]
    }
}

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `len_h(f ∘ γ) / len_{g_H}(γ)` by composite Simpson quadrature.
pub fn path_length_ratio(f: &MapRep, curve: &HorizontalCurve, structure: &SubRiemannian) -> Result<f64> {
    let freq = f.max_frequency();
    let sweep = (freq[0] * curve.direction[0].abs() + freq[1] * curve.direction[1].abs()) * curve.length;
    let n = (2000.0f64.max(64.0 * sweep / std::f64::consts::TAU)).ceil() as usize;
    let mut worst_residual = 0.0f64;
    let speed_f = |t: f64| {
        let x = curve.at(t);
        let d = f.jet(&x).apply(curve.direction);
        d.iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    let speed_g = |t: f64| {
        let x = curve.at(t);
        let (c, _) = frame_coordinates(&structure.frame, &x, curve.direction);
        structure.metric.eval(&x).quad(c).sqrt()
    };
    for i in 0..=16 {
        let x = curve.at(curve.length * i as f64 / 16.0);
        worst_residual = worst_residual.max(frame_coordinates(&structure.frame, &x, curve.direction).1);
    }
    if !(worst_residual < 1e-8) {
        return Err(Error::NotHorizontal { residual: worst_residual });
    }
    let lf = simpson(speed_f, 0.0, curve.length, n);
    let lg = simpson(speed_g, 0.0, curve.length, n);
    Ok(lf / lg)
}

/// The flat torus embedded in ℝ⁴ by `(cos θ, sin θ, cos φ, sin φ)` with the
/// line field `∂_θ + ∂_φ / 2`.
pub fn clifford_instance(resolution: [usize; 2]) -> Result<(MapRep, SubRiemannian)> {
    let (t, p) = (Expr::theta(), Expr::phi());
    let f = MapRep::new(vec![t.cos(), t.sin(), p.cos(), p.sin()])?;
    let s = SubRiemannian::new(
        PeriodicDomain::torus(resolution)?,
        FrameField::line([Expr::constant(1.0), Expr::constant(0.5)]),
        MetricOnH::constant(Sym::scalar(1.25)),
    )?;
    Ok((f, s))
}

/// Orthonormal rows spanning the complement of the unit vector `v`.
pub fn complement_rows(v: &[f64]) -> Vec<Vec<f64>> {
    let n = v.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| v[i].abs().partial_cmp(&v[j].abs()).unwrap_or(std::cmp::Ordering::Equal));
    for &i in order.iter().take(n - 1) {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let d: f64 = v[i];
        for (k, ek) in e.iter_mut().enumerate() {
            *ek -= d * v[k];
        }
        for r in &rows {
            let d: f64 = r.iter().zip(&e).map(|(a, b)| a * b).sum();
            for (k, ek) in e.iter_mut().enumerate() {
                *ek -= d * r[k];
            }
        }
        let nn = e.iter().map(|a| a * a).sum::<f64>().sqrt();
        rows.push(e.into_iter().map(|a| a / nn).collect());
    }
    rows
}

/// Result of a successful projection search.
#[derive(Clone, Debug)]
pub struct Projection {
    pub direction: Vec<f64>,
    pub map: MapRep,
    pub margin: f64,
    pub trial: usize,
}

/// H-immersion margin of `f` followed by orthogonal projection along `v`,
/// together with the projected map.
pub fn projection_margin(f: &MapRep, structure: &SubRiemannian, grid: &SampleGrid, v: &[f64]) -> Result<(f64, MapRep)> {
    let projected = f.linear_image(&complement_rows(v))?;
    Ok((h_immersion_margin(&projected, &structure.frame, grid), projected))
}

/// Worst Loewner violation of `f*h ≥ (P∘f)*h` on the grid (nonpositive when dominated).
pub fn loewner_violation(f: &MapRep, projected: &MapRep, structure: &SubRiemannian, grid: &SampleGrid) -> f64 {
    grid.points()
        .map(|x| {
            let d = pullback_at(f, &structure.frame, &x).sub(&pullback_at(projected, &structure.frame, &x));
            -d.eigenvalues()[0]
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Draw unit vectors until orthogonal projection along one keeps `f` an H-immersion.
pub fn projection_search(
    f: &MapRep,
    structure: &SubRiemannian,
    trials: usize,
    seed: u64,
) -> Result<Projection> {
    let n = f.target_dim();
    let (m, k) = (2, structure.rank());
    if n <= m + k {
        return Err(Error::Precondition(format!("projection search needs n > m + k, got n={n}, m+k={}", m + k)));
    }
    let grid = structure.grid_for(f, 4.0);
    if !(h_immersion_margin(f, &structure.frame, &grid) > 0.0) {
        return Err(Error::Precondition("map is not an H-immersion".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for trial in 0..trials {
        let v = loop {
            let mut c = [0.0; MAX_N];
            for ci in c.iter_mut().take(n) {
                *ci = rng.gen_range(-1.0..1.0);
            }
            let r2: f64 = c[..n].iter().map(|a| a * a).sum();
            if r2 > 1e-4 && r2 <= 1.0 {
                let r = r2.sqrt();
                break c[..n].iter().map(|a| a / r).collect::<Vec<f64>>();
            }
        };
        let (margin, map) = projection_margin(f, structure, &grid, &v)?;
        best = best.max(margin);
        if margin > 1e-6 {
            return Ok(Projection { direction: v, map, margin, trial });
        }
    }
    Err(Error::SearchExhausted { trials, best_margin: best })
}

/// Smallest singular value of the full differential of `f` on the grid.
pub fn full_rank_margin(f: &MapRep, grid: &SampleGrid) -> f64 {
    grid.points()
        .map(|x| {
            let j = f.jet(&x);
            let mut cols = [[0.0; MAX_N]; 2];
            for i in 0..j.n {
                cols[0][i] = j.jac[i][0];
                cols[1][i] = j.jac[i][1];
            }
            singular_extremes(&cols, j.n, 2).0
        })
        .fold(f64::INFINITY, f64::min)
}

/// `count` leaf segments with seeded random starts and lengths in `[1, 2π]`.
pub fn sample_leaf_segments(structure: &SubRiemannian, count: usize, seed: u64) -> Result<Vec<HorizontalCurve>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let periods = structure.domain.periods;
    (0..count)
        .map(|_| {
            let start = [rng.gen::<f64>() * periods[0], rng.gen::<f64>() * periods[1]];
            let length = rng.gen_range(1.0..std::f64::consts::TAU);
            HorizontalCurve::leaf(structure, start, length)
        })
        .collect()
}
