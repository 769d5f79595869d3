//! Periodic tensor-product quintic B-spline fields on the torus.
//!
//! Coefficient fields of corrugation layers are sampled on a node grid and
//! represented by the interpolating quintic spline. The represented field is
//! C⁴, so its exact derivative is available everywhere and the layer
//! differential stays the true derivative of the layer value.

use std::f64::consts::TAU;

use rustfft::{num_complex::Complex, FftPlanner};

/// Weights of the six B-splines that are nonzero on one grid cell, together
/// with the index of the first node.
#[derive(Clone, Copy, Debug)]
pub struct AxisStencil {
    pub first: isize,
    pub w: [f64; 6],
    pub dw: [f64; 6],
}

/// Centered cardinal quintic B-spline and its derivative.
fn bspline5(x: f64) -> (f64, f64) {
    let ax = x.abs();
    if ax >= 3.0 {
        return (0.0, 0.0);
    }
    let y = 3.0 - ax;
    let y1 = y - 1.0;
    let y2 = y - 2.0;
    let mut v = y.powi(5);
    let mut d = 5.0 * y.powi(4);
    if y1 > 0.0 {
        v -= 6.0 * y1.powi(5);
        d -= 30.0 * y1.powi(4);
    }
    if y2 > 0.0 {
        v += 15.0 * y2.powi(5);
        d += 75.0 * y2.powi(4);
    }
    let sign = if x > 0.0 { -1.0 } else { 1.0 };
    (v / 120.0, sign * d / 120.0)
}

/// Stencil for coordinate `x` on a periodic axis with `n` nodes over [0, 2π).
pub fn axis_stencil(x: f64, n: usize) -> AxisStencil {
    let h = TAU / n as f64;
    let s = x.rem_euclid(TAU) / h;
    let i = s.floor();
    let t = s - i;
    let mut w = [0.0; 6];
    let mut dw = [0.0; 6];
    for (slot, off) in (-2i32..=3).enumerate() {
        let (v, d) = bspline5(t - f64::from(off));
        w[slot] = v;
        dw[slot] = d / h;
    }
    AxisStencil { first: i as isize - 2, w, dw }
}

/// Several scalar fields sharing one periodic node grid.
#[derive(Clone, Debug)]
pub struct SplineFields {
    pub counts: [usize; 2],
    coeffs: Vec<Vec<f64>>,
}

fn symbol(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let w = TAU * k as f64 / n as f64;
            (66.0 + 52.0 * w.cos() + 2.0 * (2.0 * w).cos()) / 120.0
        })
        .collect()
}

/// In-place periodic deconvolution of every length-`n` line of `data`
/// (lines start at `offset(l)` with the given element stride).
fn prefilter_lines(data: &mut [f64], n: usize, lines: usize, offset: impl Fn(usize) -> usize, stride: usize) {
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let sym = symbol(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut scratch = vec![Complex::new(0.0, 0.0); fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())];
    for l in 0..lines {
        let base = offset(l);
        for (k, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(data[base + k * stride], 0.0);
        }
        fwd.process_with_scratch(&mut buf, &mut scratch);
        for (b, s) in buf.iter_mut().zip(&sym) {
            *b /= *s * n as f64;
        }
        inv.process_with_scratch(&mut buf, &mut scratch);
        for (k, b) in buf.iter().enumerate() {
            data[base + k * stride] = b.re;
        }
    }
}

impl SplineFields {
    /// Build interpolating splines from node samples (row-major, theta outer).
    pub fn from_samples(counts: [usize; 2], mut samples: Vec<Vec<f64>>) -> SplineFields {
        let (nt, np) = (counts[0], counts[1]);
        for field in samples.iter_mut() {
            assert_eq!(field.len(), nt * np, "sample count does not match grid");
            prefilter_lines(field, np, nt, |i| i * np, 1);
            prefilter_lines(field, nt, np, |j| j, np);
        }
        SplineFields { counts, coeffs: samples }
    }

    /// Wrap precomputed coefficients (as produced by [`SplineFields::coefficients`]).
    pub fn from_coefficients(counts: [usize; 2], coeffs: Vec<Vec<f64>>) -> SplineFields {
        for c in &coeffs {
            assert_eq!(c.len(), counts[0] * counts[1], "coefficient count does not match grid");
        }
        SplineFields { counts, coeffs }
    }

    pub fn coefficients(&self, c: usize) -> &[f64] {
        &self.coeffs[c]
    }

    pub fn components(&self) -> usize {
        self.coeffs.len()
    }

    pub fn nodes(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    pub fn stencils(&self, x: &[f64; 2]) -> (AxisStencil, AxisStencil) {
        (axis_stencil(x[0], self.counts[0]), axis_stencil(x[1], self.counts[1]))
    }

    /// Value and gradient of component `c` at the point described by the stencils.
    #[inline]
    pub fn eval(&self, c: usize, st: &(AxisStencil, AxisStencil)) -> (f64, [f64; 2]) {
        let (nt, np) = (self.counts[0] as isize, self.counts[1] as isize);
        let data = &self.coeffs[c];
        let (sa, sb) = st;
        let mut cols = [0usize; 6];
        for (b, col) in cols.iter_mut().enumerate() {
            *col = (sb.first + b as isize).rem_euclid(np) as usize;
        }
        let (mut v, mut dt, mut dp) = (0.0, 0.0, 0.0);
        for a in 0..6 {
            let row = (sa.first + a as isize).rem_euclid(nt) as usize * np as usize;
            let (mut rv, mut rd) = (0.0, 0.0);
            for b in 0..6 {
                let c = data[row + cols[b]];
                rv += sb.w[b] * c;
                rd += sb.dw[b] * c;
            }
            v += sa.w[a] * rv;
            dt += sa.dw[a] * rv;
            dp += sa.w[a] * rd;
        }
        (v, [dt, dp])
    }

    /// Multiply every coefficient of component `c` by `s` (the spline is linear
    /// in its coefficients, so this scales the represented field exactly).
    pub fn scale_component(&mut self, c: usize, s: f64) {
        for v in self.coeffs[c].iter_mut() {
            *v *= s;
        }
    }

    /// Node values of component `c`, reconstructed from the coefficients.
    pub fn node_values(&self, c: usize) -> Vec<f64> {
        let (nt, np) = (self.counts[0], self.counts[1]);
        let taps = [1.0 / 120.0, 26.0 / 120.0, 66.0 / 120.0, 26.0 / 120.0, 1.0 / 120.0];
        let data = &self.coeffs[c];
        let mut tmp = vec![0.0; nt * np];
        for i in 0..nt {
            for j in 0..np {
                let mut s = 0.0;
                for (o, w) in taps.iter().enumerate() {
                    let jj = (j + np + o - 2) % np;
                    s += w * data[i * np + jj];
                }
                tmp[i * np + j] = s;
            }
        }
        let mut out = vec![0.0; nt * np];
        for i in 0..nt {
            for j in 0..np {
                let mut s = 0.0;
                for (o, w) in taps.iter().enumerate() {
                    let ii = (i + nt + o - 2) % nt;
                    s += w * tmp[ii * np + j];
                }
                out[i * np + j] = s;
            }
        }
        out
    }
}
