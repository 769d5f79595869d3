//! Distributions, metrics on them, and the two functionals that measure
//! everything else: the metric defect norm and the C¹ map distance.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::SampleGrid;
use crate::error::{Error, Point, Result};
use crate::expr::Expr;
use crate::linalg::{pencil_eigenvalues, singular_extremes, Sym, MAX_N};
use crate::map::{Jet, MapRep};

/// `k` pointwise independent vector fields spanning the distribution H.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameField {
    pub fields: Vec<[Expr; 2]>,
}

impl FrameField {
    pub fn new(fields: Vec<[Expr; 2]>) -> Result<Self> {
        if fields.is_empty() || fields.len() > 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: fields.len() });
        }
        Ok(FrameField { fields })
    }

    /// Rank-one frame spanned by a single vector field.
    pub fn line(x: [Expr; 2]) -> Self {
        FrameField { fields: vec![x] }
    }

    /// The coordinate frame of the whole tangent bundle.
    pub fn coordinate() -> Self {
        let one = Expr::constant(1.0);
        let zero = Expr::constant(0.0);
        FrameField { fields: vec![[one.clone(), zero.clone()], [zero, one]] }
    }

    pub fn rank(&self) -> usize {
        self.fields.len()
    }

    /// Columns `V_i(x)` of the frame.
    pub fn eval(&self, x: &Point) -> [[f64; 2]; 2] {
        let mut v = [[0.0; 2]; 2];
        for (i, f) in self.fields.iter().enumerate() {
            v[i] = [f[0].eval(x), f[1].eval(x)];
        }
        v
    }

    /// Smallest singular value of `[V_1 ... V_k]` over the grid.
    pub fn independence_margin(&self, grid: &SampleGrid) -> f64 {
        let k = self.rank();
        grid.points()
            .map(|x| {
                let v = self.eval(&x);
                let mut cols = [[0.0; MAX_N]; 2];
                for i in 0..k {
                    cols[i][0] = v[i][0];
                    cols[i][1] = v[i][1];
                }
                singular_extremes(&cols, 2, k).0
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Fail unless the frame is pointwise independent on the grid.
    pub fn validate(&self, grid: &SampleGrid) -> Result<()> {
        let k = self.rank();
        for x in grid.points() {
            let v = self.eval(&x);
            let mut cols = [[0.0; MAX_N]; 2];
            for i in 0..k {
                cols[i][0] = v[i][0];
                cols[i][1] = v[i][1];
            }
            let sigma = singular_extremes(&cols, 2, k).0;
            if !(sigma > 1e-8) {
                return Err(Error::DegenerateDistribution { point: x, sigma });
            }
        }
        Ok(())
    }
}

/// The metric g_H expressed in a frame: a field of symmetric positive
/// definite `k × k` matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricOnH {
    /// `[g11]` for rank one, `[g11, g12, g22]` for rank two.
    pub entries: Vec<Expr>,
}

impl MetricOnH {
    pub fn new(entries: Vec<Expr>) -> Result<Self> {
        match entries.len() {
            1 | 3 => Ok(MetricOnH { entries }),
            n => Err(Error::DimensionMismatch { expected: 3, found: n }),
        }
    }

    pub fn constant(s: Sym) -> Self {
        let entries = if s.k == 1 {
            vec![Expr::constant(s.a[0])]
        } else {
            s.a.iter().map(|&c| Expr::constant(c)).collect()
        };
        MetricOnH { entries }
    }

    pub fn rank(&self) -> usize {
        if self.entries.len() == 1 {
            1
        } else {
            2
        }
    }

    pub fn eval(&self, x: &Point) -> Sym {
        if self.entries.len() == 1 {
            Sym::scalar(self.entries[0].eval(x))
        } else {
            Sym::two(self.entries[0].eval(x), self.entries[1].eval(x), self.entries[2].eval(x))
        }
    }

    /// Fail unless the smallest eigenvalue exceeds 1e-10 on every sample.
    pub fn validate(&self, grid: &SampleGrid) -> Result<()> {
        for x in grid.points() {
            if !(self.eval(&x).eigenvalues()[0] > 1e-10) {
                return Err(Error::NonPositiveMetric { point: x });
            }
        }
        Ok(())
    }
}

type SymFn = dyn Fn(&Point) -> Sym + Send + Sync;

/// A field of symmetric `k × k` matrices on H, evaluated pointwise.
#[derive(Clone)]
pub struct BilinearFieldOnH {
    pub k: usize,
    f: Arc<SymFn>,
}

impl std::fmt::Debug for BilinearFieldOnH {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BilinearFieldOnH(k={})", self.k)
    }
}

impl BilinearFieldOnH {
    pub fn from_fn(k: usize, f: impl Fn(&Point) -> Sym + Send + Sync + 'static) -> Self {
        BilinearFieldOnH { k, f: Arc::new(f) }
    }

    pub fn constant(s: Sym) -> Self {
        BilinearFieldOnH::from_fn(s.k, move |_| s)
    }

    pub fn zero(k: usize) -> Self {
        BilinearFieldOnH::constant(Sym::zero(k))
    }

    pub fn from_metric(g: &MetricOnH) -> Self {
        let g = g.clone();
        BilinearFieldOnH::from_fn(g.rank(), move |x| g.eval(x))
    }

    pub fn eval(&self, x: &Point) -> Sym {
        (self.f)(x)
    }

    pub fn add(&self, o: &BilinearFieldOnH) -> Self {
        let (a, b) = (self.f.clone(), o.f.clone());
        BilinearFieldOnH::from_fn(self.k, move |x| a(x).add(&b(x)))
    }

    pub fn sub(&self, o: &BilinearFieldOnH) -> Self {
        let (a, b) = (self.f.clone(), o.f.clone());
        BilinearFieldOnH::from_fn(self.k, move |x| a(x).sub(&b(x)))
    }

    pub fn scale(&self, c: f64) -> Self {
        let a = self.f.clone();
        BilinearFieldOnH::from_fn(self.k, move |x| a(x).scale(c))
    }
}

/// Columns `df(V_i)` of the restricted differential.
pub fn restricted_columns(jet: &Jet, v: &[[f64; 2]; 2], k: usize) -> [[f64; MAX_N]; 2] {
    let mut cols = [[0.0; MAX_N]; 2];
    for (c, col) in cols.iter_mut().enumerate().take(k) {
        *col = jet.apply(v[c]);
    }
    cols
}

/// Gram matrix of `df(V)`, i.e. the pullback of the Euclidean metric to H.
pub fn gram(cols: &[[f64; MAX_N]; 2], n: usize, k: usize) -> Sym {
    let dot = |a: &[f64; MAX_N], b: &[f64; MAX_N]| (0..n).map(|i| a[i] * b[i]).sum::<f64>();
    if k == 1 {
        Sym::scalar(dot(&cols[0], &cols[0]))
    } else {
        Sym::two(dot(&cols[0], &cols[0]), dot(&cols[0], &cols[1]), dot(&cols[1], &cols[1]))
    }
}

/// Pointwise pullback `(df V)^T (df V)`.
pub fn pullback_at(f: &MapRep, frame: &FrameField, x: &Point) -> Sym {
    let jet = f.jet(x);
    let k = frame.rank();
    gram(&restricted_columns(&jet, &frame.eval(x), k), f.target_dim(), k)
}

/// The pullback metric `f*h` restricted to H, in the frame.
pub fn pullback_on_h(f: &MapRep, frame: &FrameField) -> BilinearFieldOnH {
    let (f, frame) = (f.clone(), frame.clone());
    BilinearFieldOnH::from_fn(frame.rank(), move |x| pullback_at(&f, &frame, x))
}

/// The defect form `g_H - f*h` on H.
pub fn defect_form(f: &MapRep, g: &MetricOnH, frame: &FrameField) -> BilinearFieldOnH {
    let (f, g, frame) = (f.clone(), g.clone(), frame.clone());
    BilinearFieldOnH::from_fn(frame.rank(), move |x| g.eval(x).sub(&pullback_at(&f, &frame, x)))
}

/// Pointwise defect norm: the largest absolute generalized eigenvalue of `(b, g)`.
pub fn pointwise_defect(b: &Sym, g: &Sym, x: &Point) -> Result<f64> {
    let ev = pencil_eigenvalues(b, g).ok_or(Error::NonPositiveMetric { point: *x })?;
    Ok(ev[0].abs().max(ev[1].abs()))
}

/// Sup over the grid of the pointwise defect norm of `b` relative to `g`.
pub fn defect_norm(b: &BilinearFieldOnH, g: &MetricOnH, grid: &SampleGrid) -> Result<f64> {
    let mut worst = 0.0f64;
    for x in grid.points() {
        worst = worst.max(pointwise_defect(&b.eval(&x), &g.eval(&x), &x)?);
    }
    Ok(worst)
}

/// A basis of the tangent plane that is orthonormal for the extension g₀ of
/// g_H: the frame rescaled by the inverse Cholesky factor of `g`, completed by
/// the Euclidean Gram–Schmidt complement when H is a line field.
pub fn g0_orthonormal_basis(v: &[[f64; 2]; 2], g: &Sym, k: usize, x: &Point) -> Result<[[f64; 2]; 2]> {
    let l = g.cholesky().ok_or(Error::NonPositiveMetric { point: *x })?;
    if k == 2 {
        // W = V L^{-T}
        let w0 = [v[0][0] / l[0], v[0][1] / l[0]];
        let w1 = [
            (v[1][0] - l[1] * w0[0]) / l[2],
            (v[1][1] - l[1] * w0[1]) / l[2],
        ];
        return Ok([w0, w1]);
    }
    let w0 = [v[0][0] / l[0], v[0][1] / l[0]];
    let norm = v[0][0].hypot(v[0][1]);
    let unit = [v[0][0] / norm, v[0][1] / norm];
    let mut best = [0.0; 2];
    for e in [[1.0, 0.0], [0.0, 1.0]] {
        let d = e[0] * unit[0] + e[1] * unit[1];
        let r = [e[0] - d * unit[0], e[1] - d * unit[1]];
        let rn = r[0].hypot(r[1]);
        if rn > 0.5 {
            best = [r[0] / rn, r[1] / rn];
            break;
        }
    }
    Ok([w0, best])
}

/// Pointwise C¹ distance: largest singular value of `(df - df̄) W`.
pub fn pointwise_distance(a: &Jet, b: &Jet, w: &[[f64; 2]; 2]) -> f64 {
    let n = a.n;
    let mut cols = [[0.0; MAX_N]; 2];
    for c in 0..2 {
        let pa = a.apply(w[c]);
        let pb = b.apply(w[c]);
        for i in 0..n {
            cols[c][i] = pa[i] - pb[i];
        }
    }
    singular_extremes(&cols, n, 2).1
}

/// Sup over the grid of the C¹ distance between two maps measured with g₀.
pub fn map_distance(
    f: &MapRep,
    fbar: &MapRep,
    frame: &FrameField,
    g: &MetricOnH,
    grid: &SampleGrid,
) -> Result<f64> {
    if f.target_dim() != fbar.target_dim() {
        return Err(Error::DimensionMismatch { expected: f.target_dim(), found: fbar.target_dim() });
    }
    let k = frame.rank();
    let mut worst = 0.0f64;
    for x in grid.points() {
        let w = g0_orthonormal_basis(&frame.eval(&x), &g.eval(&x), k, &x)?;
        worst = worst.max(pointwise_distance(&f.jet(&x), &fbar.jet(&x), &w));
    }
    Ok(worst)
}

/// Min over the grid of the smallest singular value of `df V`.
pub fn h_immersion_margin(f: &MapRep, frame: &FrameField, grid: &SampleGrid) -> f64 {
    let k = frame.rank();
    grid.points()
        .map(|x| {
            let cols = restricted_columns(&f.jet(&x), &frame.eval(&x), k);
            singular_extremes(&cols, f.target_dim(), k).0
        })
        .fold(f64::INFINITY, f64::min)
}

/// Min over the grid of the smallest generalized eigenvalue of `(g - f*h, g)`.
pub fn shortness_margin(f: &MapRep, g: &MetricOnH, frame: &FrameField, grid: &SampleGrid) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for x in grid.points() {
        let gx = g.eval(&x);
        let b = gx.sub(&pullback_at(f, frame, &x));
        let ev = pencil_eigenvalues(&b, &gx).ok_or(Error::NonPositiveMetric { point: x })?;
        worst = worst.min(ev[0]);
    }
    Ok(worst)
}

/// A sub-Riemannian structure on a periodic domain: the distribution (as a
/// frame) and its metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubRiemannian {
    pub domain: crate::domain::PeriodicDomain,
    pub frame: FrameField,
    pub metric: MetricOnH,
}

impl SubRiemannian {
    pub fn new(domain: crate::domain::PeriodicDomain, frame: FrameField, metric: MetricOnH) -> Result<Self> {
        if frame.rank() != metric.rank() {
            return Err(Error::DimensionMismatch { expected: frame.rank(), found: metric.rank() });
        }
        let grid = domain.grid();
        frame.validate(&grid)?;
        metric.validate(&grid)?;
        Ok(SubRiemannian { domain, frame, metric })
    }

    pub fn rank(&self) -> usize {
        self.frame.rank()
    }

    /// Check grid for a map: the base grid refined to `refine` samples per
    /// period of the map's highest frequency.
    pub fn grid_for(&self, f: &MapRep, refine: f64) -> SampleGrid {
        self.domain.refined(f.max_frequency(), refine)
    }
}
