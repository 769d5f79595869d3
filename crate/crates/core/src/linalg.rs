//! Closed-form linear algebra for the tiny matrices that occur here.
//!
//! The domain is two-dimensional, so every form on the distribution is 1×1 or
//! 2×2 and every differential has two columns.

use serde::{Deserialize, Serialize};

/// A symmetric matrix of order 1 or 2, stored as `[a11, a12, a22]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sym {
    pub k: usize,
    pub a: [f64; 3],
}

impl Sym {
    pub fn zero(k: usize) -> Sym {
        Sym { k, a: [0.0; 3] }
    }

    pub fn scalar(v: f64) -> Sym {
        Sym { k: 1, a: [v, 0.0, 0.0] }
    }

    pub fn two(a11: f64, a12: f64, a22: f64) -> Sym {
        Sym { k: 2, a: [a11, a12, a22] }
    }

    pub fn identity(k: usize) -> Sym {
        if k == 1 {
            Sym::scalar(1.0)
        } else {
            Sym::two(1.0, 0.0, 1.0)
        }
    }

    /// The rank-one form `c c^T` for a coefficient vector `c` of length `k`.
    pub fn outer(k: usize, c: [f64; 2]) -> Sym {
        if k == 1 {
            Sym::scalar(c[0] * c[0])
        } else {
            Sym::two(c[0] * c[0], c[0] * c[1], c[1] * c[1])
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i, j) {
            (0, 0) => self.a[0],
            (1, 1) => self.a[2],
            _ => self.a[1],
        }
    }

    pub fn add(&self, o: &Sym) -> Sym {
        Sym { k: self.k, a: [self.a[0] + o.a[0], self.a[1] + o.a[1], self.a[2] + o.a[2]] }
    }

    pub fn sub(&self, o: &Sym) -> Sym {
        Sym { k: self.k, a: [self.a[0] - o.a[0], self.a[1] - o.a[1], self.a[2] - o.a[2]] }
    }

    pub fn scale(&self, c: f64) -> Sym {
        Sym { k: self.k, a: [c * self.a[0], c * self.a[1], c * self.a[2]] }
    }

    /// Frobenius norm of the full matrix.
    pub fn norm(&self) -> f64 {
        if self.k == 1 {
            self.a[0].abs()
        } else {
            (self.a[0] * self.a[0] + 2.0 * self.a[1] * self.a[1] + self.a[2] * self.a[2]).sqrt()
        }
    }

    /// Quadratic form `c^T S c`.
    pub fn quad(&self, c: [f64; 2]) -> f64 {
        if self.k == 1 {
            self.a[0] * c[0] * c[0]
        } else {
            self.a[0] * c[0] * c[0] + 2.0 * self.a[1] * c[0] * c[1] + self.a[2] * c[1] * c[1]
        }
    }

    /// Eigenvalues in ascending order (the second entry repeats the first when `k == 1`).
    pub fn eigenvalues(&self) -> [f64; 2] {
        if self.k == 1 {
            return [self.a[0], self.a[0]];
        }
        let mean = 0.5 * (self.a[0] + self.a[2]);
        let half = 0.5 * (self.a[0] - self.a[2]);
        let rad = half.hypot(self.a[1]);
        [mean - rad, mean + rad]
    }

    /// Lower Cholesky factor `[l11, l21, l22]`, or `None` unless positive definite.
    pub fn cholesky(&self) -> Option<[f64; 3]> {
        if !(self.a[0] > 0.0) {
            return None;
        }
        let l11 = self.a[0].sqrt();
        if self.k == 1 {
            return Some([l11, 0.0, 0.0]);
        }
        let l21 = self.a[1] / l11;
        let d = self.a[2] - l21 * l21;
        if !(d > 0.0) {
            return None;
        }
        Some([l11, l21, d.sqrt()])
    }

    /// Solve `S c = b`.
    pub fn solve(&self, b: [f64; 2]) -> [f64; 2] {
        if self.k == 1 {
            return [b[0] / self.a[0], 0.0];
        }
        let det = self.a[0] * self.a[2] - self.a[1] * self.a[1];
        [(self.a[2] * b[0] - self.a[1] * b[1]) / det, (self.a[0] * b[1] - self.a[1] * b[0]) / det]
    }
}

/// Generalized eigenvalues of the pencil `(b, g)` in ascending order, via
/// Cholesky reduction of `g`. Returns `None` when `g` is not positive definite.
pub fn pencil_eigenvalues(b: &Sym, g: &Sym) -> Option<[f64; 2]> {
    let l = g.cholesky()?;
    if g.k == 1 {
        let v = b.a[0] / (l[0] * l[0]);
        return Some([v, v]);
    }
    // C = L^{-1} B L^{-T}
    let (l11, l21, l22) = (l[0], l[1], l[2]);
    let c11 = b.a[0] / (l11 * l11);
    let c12 = (b.a[1] - l21 * b.a[0] / l11) / (l11 * l22);
    let t = b.a[2] - 2.0 * l21 * b.a[1] / l11 + l21 * l21 * b.a[0] / (l11 * l11);
    let c22 = t / (l22 * l22);
    Some(Sym::two(c11, c12, c22).eigenvalues())
}

/// A dense `rows × cols` matrix with at most six rows and two columns.
pub const MAX_N: usize = 6;

/// Smallest and largest singular values of an `n × k` matrix given by its
/// columns (`k` is 1 or 2).
pub fn singular_extremes(cols: &[[f64; MAX_N]; 2], n: usize, k: usize) -> (f64, f64) {
    let dot = |a: &[f64; MAX_N], b: &[f64; MAX_N]| (0..n).map(|i| a[i] * b[i]).sum::<f64>();
    if k == 1 {
        let s = dot(&cols[0], &cols[0]).sqrt();
        return (s, s);
    }
    let gram = Sym::two(dot(&cols[0], &cols[0]), dot(&cols[0], &cols[1]), dot(&cols[1], &cols[1]));
    let ev = gram.eigenvalues();
    (ev[0].max(0.0).sqrt(), ev[1].max(0.0).sqrt())
}
