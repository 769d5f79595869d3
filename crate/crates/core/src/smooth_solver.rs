//! Smooth unit-speed maps along a line field.
//!
//! For a nowhere-vanishing constant field `X` on the flat torus and a map
//! `f0: T² → ℝ²` with `0 < |X f0|² < 1`, the correction `α` with
//! `X α = β := √(1 − |X f0|²) / |X f0| · J(X f0)` (where `J` is the quarter
//! turn) yields `|X (f0 + α)|² = 1` exactly, since `β ⟂ X f0`. The only
//! numerical step is inverting `X` along the flow, which is done orbit by
//! orbit and then fitted by a trigonometric polynomial so that the answer
//! stays symbolic.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::decomposition::{partition, Bump};
use crate::domain::PeriodicDomain;
use crate::error::{Error, Point, Result};
use crate::expr::Expr;
use crate::geometry::{FrameField, MetricOnH, SubRiemannian};
use crate::linalg::Sym;
use crate::map::MapRep;

/// Bounds on `|X f0|²` demanded by [`LineFieldProblem`].
pub const SPEED_MARGIN: f64 = 1e-3;
/// Largest admissible orbit mean of a chart integrand.
pub const OBSTRUCTION_TOLERANCE: f64 = 1e-8;
/// Trigonometric coefficients below this magnitude are dropped from fits.
const COEFFICIENT_FLOOR: f64 = 1e-13;

/// A constant vector field with closed orbits on the standard torus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFlow {
    pub field: [f64; 2],
    /// Return time of every orbit.
    pub period: f64,
    /// Primitive integer direction `(p, q)` with `field = c·(p, q)`.
    pub direction: [i64; 2],
}

impl LineFlow {
    /// Accepts fields whose slope is rational with denominator at most 64.
    pub fn new(field: [f64; 2]) -> Result<Self> {
        let [a, b] = field;
        if !(a.is_finite() && b.is_finite()) || (a == 0.0 && b == 0.0) {
            return Err(Error::Config("flow field must be finite and nonzero".into()));
        }
        let (p, q) = if a == 0.0 {
            (0, b.signum() as i64)
        } else if b == 0.0 {
            (a.signum() as i64, 0)
        } else {
            let ratio = b / a;
            let d = (1..=64i64)
                .find(|d| {
                    let n = ratio * *d as f64;
                    (n - n.round()).abs() < 1e-12 * n.abs().max(1.0)
                })
                .ok_or_else(|| Error::Config(format!("slope {ratio} has no closed orbits of bounded length")))?;
            let n = (ratio * d as f64).round() as i64;
            let s = a.signum() as i64;
            (s * d, s * n)
        };
        let g = gcd(p.abs(), q.abs());
        let (p, q) = (p / g, q / g);
        let period = if p != 0 { 2.0 * PI * p as f64 / a } else { 2.0 * PI * q as f64 / b };
        Ok(LineFlow { field, period, direction: [p, q] })
    }

    pub fn at(&self, x: &Point, s: f64) -> Point {
        [x[0] + s * self.field[0], x[1] + s * self.field[1]]
    }

    /// Symbolic derivative of `e` along the field.
    pub fn derivative(&self, e: &Expr) -> Expr {
        e.diff(0).scale(self.field[0]).add(&e.diff(1).scale(self.field[1]))
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

/// A map `f0` into the plane whose speed along `X` is strictly between 0 and 1.
#[derive(Clone, Debug)]
pub struct LineFieldProblem {
    pub flow: LineFlow,
    pub f0: Vec<Expr>,
    pub resolution: [usize; 2],
}

impl LineFieldProblem {
    pub fn new(field: [f64; 2], f0: &MapRep, resolution: [usize; 2]) -> Result<Self> {
        if !f0.layers().is_empty() {
            return Err(Error::Precondition("the smooth solver needs a layer-free initial map".into()));
        }
        if f0.target_dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: f0.target_dim() });
        }
        let flow = LineFlow::new(field)?;
        let problem = LineFieldProblem { flow, f0: f0.base().to_vec(), resolution };
        let grid = PeriodicDomain::torus(resolution)?.grid();
        let speed = problem.speed_squared();
        for x in grid.points() {
            let s = speed.eval(&x);
            if !(s > SPEED_MARGIN && s < 1.0 - SPEED_MARGIN) {
                return Err(Error::OutOfRange(format!(
                    "|X f0|² = {s} at ({:.6}, {:.6}) is outside ({SPEED_MARGIN}, {})",
                    x[0],
                    x[1],
                    1.0 - SPEED_MARGIN
                )));
            }
        }
        Ok(problem)
    }

    /// `f0 = (c cos φ, c sin φ)` with `X = ∂_φ`.
    pub fn circle(c: f64, resolution: [usize; 2]) -> Result<Self> {
        let phi = Expr::phi();
        let f0 = MapRep::new(vec![phi.cos().scale(c), phi.sin().scale(c)])?;
        LineFieldProblem::new([0.0, 1.0], &f0, resolution)
    }

    /// `X f0` as symbolic components.
    pub fn velocity(&self) -> [Expr; 2] {
        [self.flow.derivative(&self.f0[0]), self.flow.derivative(&self.f0[1])]
    }

    /// `|X f0|²`, the squared speed.
    pub fn speed_squared(&self) -> Expr {
        let [u, v] = self.velocity();
        u.mul(&u).add(&v.mul(&v))
    }

    /// The same data as a rank-one sub-Riemannian structure with `g(X, X) = 1`.
    pub fn structure(&self) -> Result<SubRiemannian> {
        let [a, b] = self.flow.field;
        SubRiemannian::new(
            PeriodicDomain::torus(self.resolution)?,
            FrameField::line([Expr::constant(a), Expr::constant(b)]),
            MetricOnH::constant(Sym::scalar(1.0)),
        )
    }

    pub fn initial_map(&self) -> MapRep {
        MapRep::new(self.f0.clone()).expect("validated at construction")
    }
}

/// The formal solution `β = √(1 − φ²)/|X f0| · J(X f0)`.
pub fn formal_solution_beta(problem: &LineFieldProblem) -> [Expr; 2] {
    let [u, v] = problem.velocity();
    let speed2 = problem.speed_squared();
    let factor = Expr::constant(1.0).sub(&speed2).sqrt().div(&speed2.sqrt());
    [v.neg().mul(&factor), u.mul(&factor)]
}

/// Residuals of the split system `⟨X f0, β⟩ = 0`, `|β|² = 1 − |X f0|²` at `x`.
pub fn split_residuals(problem: &LineFieldProblem, beta: &[Expr; 2], x: &Point) -> [f64; 2] {
    let [u, v] = problem.velocity();
    let (u, v) = (u.eval(x), v.eval(x));
    let (b0, b1) = (beta[0].eval(x), beta[1].eval(x));
    [u * b0 + v * b1, b0 * b0 + b1 * b1 - (1.0 - (u * u + v * v))]
}

/// A partition of unity `Σ_μ w_μ ≡ 1` whose charts are inverted separately.
#[derive(Clone, Debug, Default)]
pub struct FlowInversion {
    /// Chart `μ` has weight `bump_μ²`; an empty list means one global chart.
    pub charts: Vec<Bump>,
    /// Simpson intervals per orbit.
    pub intervals: usize,
    /// Sample grid for the trigonometric fit.
    pub resolution: [usize; 2],
}

impl FlowInversion {
    pub fn global(resolution: [usize; 2]) -> Self {
        FlowInversion { charts: Vec::new(), intervals: 2048, resolution }
    }

    /// Two charts from the cosine partition along `axis`.
    pub fn two_chart(axis: usize, resolution: [usize; 2]) -> Self {
        FlowInversion { charts: partition(&[axis]), ..FlowInversion::global(resolution) }
    }

    fn weight(&self, chart: usize, x: &Point) -> f64 {
        match self.charts.get(chart) {
            Some(b) => {
                let w = b.eval(x).0;
                w * w
            }
            None => 1.0,
        }
    }

    fn chart_count(&self) -> usize {
        self.charts.len().max(1)
    }
}

/// The zero-orbit-mean primitive of `s ↦ g(s)` on one orbit, evaluated at the
/// orbit start: `(1/T) ∫₀ᵀ s g(s) ds`. Also returns the orbit mean of `g`.
fn orbit_primitive(g: impl Fn(f64) -> [f64; 2], period: f64, intervals: usize) -> ([f64; 2], [f64; 2]) {
    let n = intervals.max(2) + intervals % 2;
    let h = period / n as f64;
    let mut mean = [0.0; 2];
    let mut moment = [0.0; 2];
    for i in 0..=n {
        let s = h * i as f64;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let v = g(s);
        for c in 0..2 {
            mean[c] += w * v[c];
            moment[c] += w * s * v[c];
        }
    }
    let scale = h / 3.0 / period;
    (mean.map(|m| m * scale), moment.map(|m| m * scale))
}

/// Solve `X α = β` with `α` of zero mean on every orbit, one chart at a time.
pub fn invert_along_flow(beta: &[Expr; 2], flow: &LineFlow, inversion: &FlowInversion) -> Result<[Expr; 2]> {
    let grid = PeriodicDomain::torus(inversion.resolution)?.grid();
    let [n0, n1] = grid.counts;
    let mut samples = [vec![0.0; n0 * n1], vec![0.0; n0 * n1]];
    for i in 0..n0 {
        for j in 0..n1 {
            let x = grid.point(i, j);
            for chart in 0..inversion.chart_count() {
                let g = |s: f64| {
                    let y = flow.at(&x, s);
                    let w = inversion.weight(chart, &y);
                    [w * beta[0].eval(&y), w * beta[1].eval(&y)]
                };
                let (mean, alpha) = orbit_primitive(g, flow.period, inversion.intervals);
                if mean.iter().any(|m| m.abs() > OBSTRUCTION_TOLERANCE) {
                    return Err(Error::PeriodicityObstruction { orbit: x, chart, mean: mean.to_vec() });
                }
                samples[0][i * n1 + j] += alpha[0];
                samples[1][i * n1 + j] += alpha[1];
            }
        }
    }
    Ok([trig_fit(&samples[0], [n0, n1]), trig_fit(&samples[1], [n0, n1])])
}

/// Trigonometric interpolant of samples on the standard grid, as an expression.
pub fn trig_fit(samples: &[f64], counts: [usize; 2]) -> Expr {
    let [n0, n1] = counts;
    let mut data: Vec<Complex<f64>> = samples.iter().map(|v| Complex::new(*v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    let row = planner.plan_fft_forward(n1);
    for chunk in data.chunks_mut(n1) {
        row.process(chunk);
    }
    let col = planner.plan_fft_forward(n0);
    let mut buf = vec![Complex::new(0.0, 0.0); n0];
    for j in 0..n1 {
        for i in 0..n0 {
            buf[i] = data[i * n1 + j];
        }
        col.process(&mut buf);
        for i in 0..n0 {
            data[i * n1 + j] = buf[i];
        }
    }
    let norm = (n0 * n1) as f64;
    let signed = |k: usize, n: usize| if k <= n / 2 { k as i64 } else { k as i64 - n as i64 };
    let c0 = data[0].re / norm;
    let mut out = Expr::constant(if c0.abs() > COEFFICIENT_FLOOR { c0 } else { 0.0 });
    for i in 0..n0 {
        for j in 0..n1 {
            let (p, q) = (signed(i, n0), signed(j, n1));
            let nyquist = (n0 % 2 == 0 && p == n0 as i64 / 2) || (n1 % 2 == 0 && q == n1 as i64 / 2);
            // One representative per conjugate pair.
            if nyquist || !(p > 0 || (p == 0 && q > 0)) {
                continue;
            }
            let c = data[i * n1 + j] / norm;
            let phase = Expr::theta().scale(p as f64).add(&Expr::phi().scale(q as f64));
            if (2.0 * c.re).abs() > COEFFICIENT_FLOOR {
                out = out.add(&phase.cos().scale(2.0 * c.re));
            }
            if (2.0 * c.im).abs() > COEFFICIENT_FLOOR {
                out = out.sub(&phase.sin().scale(2.0 * c.im));
            }
        }
    }
    out
}

/// The unit-speed map and its certificates.
#[derive(Clone, Debug)]
pub struct SmoothSolution {
    pub map: MapRep,
    pub beta: [Expr; 2],
    pub alpha: [Expr; 2],
    /// `max |X α − β|` on a staggered grid.
    pub flow_residual: f64,
    /// `max | |X f|² − 1 |` on a staggered grid.
    pub unit_speed_residual: f64,
}

/// `f = f0 + α` with `|X f|² = 1`.
pub fn solve_unit_speed(problem: &LineFieldProblem) -> Result<SmoothSolution> {
    solve_with(problem, &FlowInversion::global(problem.resolution))
}

pub fn solve_with(problem: &LineFieldProblem, inversion: &FlowInversion) -> Result<SmoothSolution> {
    let beta = formal_solution_beta(problem);
    let alpha = invert_along_flow(&beta, &problem.flow, inversion)?;
    let base: Vec<Expr> = (0..2).map(|c| problem.f0[c].add(&alpha[c])).collect();
    let map = MapRep::new(base)?;
    let grid = PeriodicDomain::torus([2 * problem.resolution[0], 2 * problem.resolution[1]])?.grid();
    let (mut flow_residual, mut unit_speed_residual) = (0.0f64, 0.0f64);
    let xa = [problem.flow.derivative(&alpha[0]), problem.flow.derivative(&alpha[1])];
    let xf = [problem.flow.derivative(&map.base()[0]), problem.flow.derivative(&map.base()[1])];
    for x in grid.points() {
        for c in 0..2 {
            flow_residual = flow_residual.max((xa[c].eval(&x) - beta[c].eval(&x)).abs());
        }
        let s = xf[0].eval(&x).powi(2) + xf[1].eval(&x).powi(2);
        unit_speed_residual = unit_speed_residual.max((s - 1.0).abs());
    }
    Ok(SmoothSolution { map, beta, alpha, flow_residual, unit_speed_residual })
}
