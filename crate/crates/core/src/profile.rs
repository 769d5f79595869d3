//! Loop profiles for the corrugation and their tabulated primitives.
//!
//! A layer oscillates along the planar loop
//! `γ(u) = r [cos(α h(u)) e1 + sin(α h(u)) e2]` whose mean over one period is
//! `r C(α) e1`. Its mean-zero primitive is expanded in powers of α as
//! `A(α,u) e1 + B(α,u) e2` with
//! `A = Σ_{q even ≥ 2} (-1)^{q/2} α^q/q! P_q(u)`,
//! `B = Σ_{q odd} (-1)^{(q-1)/2} α^q/q! P_q(u)` and
//! `P_q(u) = ∫₀^u (h^q - mean(h^q))`. The `P_q` are tabulated once per profile
//! and interpolated by quintic Hermite polynomials that use the exact first and
//! second derivatives, so `∂_u A = cos(α h) - C(α)` holds to table accuracy.

use std::f64::consts::{PI, TAU};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The shape `h(u)` of the angular sweep along the loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// `h = cos u`; the loop mean is `J₀(α)`.
    Bessel,
    /// `h = tanh(κ cos u) / tanh κ`; the sweep dwells near its extremes, so
    /// the loop stays close to the two-point sphere section and the C¹ step
    /// approaches the square-root defect bound as κ grows.
    Plateau { sharpness: f64 },
}

impl Default for Profile {
    fn default() -> Self {
        Profile::Plateau { sharpness: 6.0 }
    }
}

impl Profile {
    pub fn h(&self, u: f64) -> f64 {
        match *self {
            Profile::Bessel => u.cos(),
            Profile::Plateau { sharpness } => (sharpness * u.cos()).tanh() / sharpness.tanh(),
        }
    }

    pub fn h_prime(&self, u: f64) -> f64 {
        match *self {
            Profile::Bessel => -u.sin(),
            Profile::Plateau { sharpness } => {
                let t = (sharpness * u.cos()).tanh();
                -sharpness * u.sin() * (1.0 - t * t) / sharpness.tanh()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Profile::Bessel => Ok(()),
            Profile::Plateau { sharpness } if sharpness > 0.0 && sharpness <= 64.0 => Ok(()),
            Profile::Plateau { sharpness } => {
                Err(Error::Config(format!("plateau sharpness must lie in (0, 64], got {sharpness}")))
            }
        }
    }

    /// Shared tabulation for this profile (built on first use).
    pub fn table(&self) -> Arc<ProfileTable> {
        static CACHE: OnceLock<Mutex<Vec<(Profile, Arc<ProfileTable>)>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(Vec::new()));
        let mut guard = cache.lock().expect("profile cache poisoned");
        if let Some((_, t)) = guard.iter().find(|(p, _)| p == self) {
            return t.clone();
        }
        let t = Arc::new(ProfileTable::build(*self));
        guard.push((*self, t.clone()));
        t
    }

    /// Loop mean `C(α)`.
    pub fn mean(&self, alpha: f64) -> f64 {
        self.table().mean(alpha).0
    }

    /// Solve `r C(α) = s₀` for `α` in `[0, first zero of C)`.
    pub fn solve_amplitude(&self, r: f64, s0: f64) -> Result<f64> {
        self.validate()?;
        if !(r > 0.0) || !(s0 > 0.0) || s0 > r {
            return Err(Error::OutOfRange(format!("amplitude solve needs 0 < s0 <= r, got r={r}, s0={s0}")));
        }
        if s0 == r {
            return Ok(0.0);
        }
        Ok(self.table().invert_mean(s0 / r))
    }
}

pub const MAX_ORDER: usize = 30;
const INTERVALS: usize = 8192;

/// Gauss–Legendre nodes and weights on [-1, 1] (8 points).
const GL_X: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL_W: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Values of the loop primitive and its partial derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LoopEval {
    pub a: f64,
    pub b: f64,
    pub a_alpha: f64,
    pub b_alpha: f64,
    pub a_u: f64,
    pub b_u: f64,
}

#[derive(Debug)]
pub struct ProfileTable {
    pub profile: Profile,
    /// `moments[q] = mean(h^q)`, exact zero for odd `q`.
    pub moments: [f64; MAX_ORDER + 1],
    /// First positive zero of the loop mean `C`.
    pub mean_zero: f64,
    step: f64,
    /// Per node, per order `q = 1..=MAX_ORDER`: `[P, P', P'']`.
    nodes: Vec<[[f64; 3]; MAX_ORDER]>,
}

impl ProfileTable {
    fn build(profile: Profile) -> ProfileTable {
        let step = TAU / INTERVALS as f64;
        let mut integrals = vec![[0.0f64; MAX_ORDER]; INTERVALS];
        let mut totals = [0.0f64; MAX_ORDER];
        for (i, row) in integrals.iter_mut().enumerate() {
            let left = i as f64 * step;
            for (x, w) in GL_X.iter().zip(GL_W.iter()) {
                let u = left + 0.5 * step * (1.0 + x);
                let h = profile.h(u);
                let mut p = 1.0;
                for q in 0..MAX_ORDER {
                    p *= h;
                    row[q] += 0.5 * step * w * p;
                }
            }
            for q in 0..MAX_ORDER {
                totals[q] += row[q];
            }
        }
        let mut moments = [0.0; MAX_ORDER + 1];
        moments[0] = 1.0;
        for q in 1..=MAX_ORDER {
            moments[q] = if q % 2 == 1 { 0.0 } else { totals[q - 1] / TAU };
        }
        if profile == Profile::Bessel {
            // mean(cos^q) = binom(q, q/2) / 2^q for even q.
            let mut c = 1.0;
            for q in (2..=MAX_ORDER).step_by(2) {
                c *= (q - 1) as f64 / q as f64;
                moments[q] = c;
            }
        }
        let mut nodes = vec![[[0.0f64; 3]; MAX_ORDER]; INTERVALS + 1];
        let mut running = [0.0f64; MAX_ORDER];
        for i in 0..=INTERVALS {
            let u = i as f64 * step;
            let h = profile.h(u);
            let hp = profile.h_prime(u);
            let mut pw = 1.0;
            for q in 1..=MAX_ORDER {
                let prev = pw;
                pw *= h;
                nodes[i][q - 1] = [running[q - 1], pw - moments[q], q as f64 * prev * hp];
            }
            if i < INTERVALS {
                for q in 1..=MAX_ORDER {
                    running[q - 1] += integrals[i][q - 1] - moments[q] * step;
                }
            }
        }
        let mut table = ProfileTable { profile, moments, mean_zero: 0.0, step, nodes };
        table.mean_zero = match profile {
            Profile::Bessel => crate::bessel::J0_FIRST_ZERO,
            Profile::Plateau { .. } => table.bisect_mean(0.0, PI),
        };
        table
    }

    fn bisect_mean(&self, mut lo: f64, mut hi: f64) -> f64 {
        // The mean is decreasing on [0, first zero]; locate the sign change.
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.mean(mid).0 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `C(α)` and `C'(α)`.
    pub fn mean(&self, alpha: f64) -> (f64, f64) {
        let mut c = 0.0;
        let mut dc = 0.0;
        let mut coef = 1.0; // α^q / q!
        let mut prev = 0.0; // α^{q-1} / (q-1)!
        for q in 0..=MAX_ORDER {
            if q > 0 {
                prev = coef;
                coef *= alpha / q as f64;
            }
            if q % 2 == 0 {
                let sign = if (q / 2) % 2 == 0 { 1.0 } else { -1.0 };
                c += sign * coef * self.moments[q];
                if q > 0 {
                    dc += sign * prev * self.moments[q];
                }
            }
        }
        (c, dc)
    }

    /// Solve `C(α) = ratio` for `ratio ∈ (0, 1)` by safeguarded Newton steps.
    pub fn invert_mean(&self, ratio: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, self.mean_zero);
        let m2 = self.moments[2];
        let mut a = (2.0 * (1.0 - ratio) / m2).sqrt().min(0.5 * hi);
        for _ in 0..100 {
            let (c, dc) = self.mean(a);
            let f = c - ratio;
            if f > 0.0 {
                lo = a;
            } else {
                hi = a;
            }
            let mut next = if dc < 0.0 { a - f / dc } else { 0.5 * (lo + hi) };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - a).abs() <= 1e-16 * a.max(1e-300) {
                a = next;
                break;
            }
            a = next;
        }
        a
    }

    /// Interpolated `[P_q(u), P_q'(u)]` weights: returns the Hermite basis for
    /// the cell containing `u`.
    fn cell(&self, u: f64) -> (usize, [f64; 6], [f64; 6]) {
        let s = u.rem_euclid(TAU) / self.step;
        let i = (s.floor() as usize).min(INTERVALS - 1);
        let t = s - i as f64;
        let (t2, t3) = (t * t, t * t * t);
        let (t4, t5) = (t3 * t, t3 * t2);
        let hs = self.step;
        let w = [
            1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5,
            hs * (t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5),
            hs * hs * (0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5),
            10.0 * t3 - 15.0 * t4 + 6.0 * t5,
            hs * (-4.0 * t3 + 7.0 * t4 - 3.0 * t5),
            hs * hs * (0.5 * t3 - t4 + 0.5 * t5),
        ];
        let dw = [
            (-30.0 * t2 + 60.0 * t3 - 30.0 * t4) / hs,
            1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4,
            hs * (t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4),
            (30.0 * t2 - 60.0 * t3 + 30.0 * t4) / hs,
            -12.0 * t2 + 28.0 * t3 - 15.0 * t4,
            hs * (1.5 * t2 - 4.0 * t3 + 2.5 * t4),
        ];
        (i, w, dw)
    }

    /// `P_q(u)` and `P_q'(u)` from the table (for tests and diagnostics).
    pub fn primitive(&self, q: usize, u: f64) -> (f64, f64) {
        let (i, w, dw) = self.cell(u);
        let (l, r) = (&self.nodes[i][q - 1], &self.nodes[i + 1][q - 1]);
        let vals = [l[0], l[1], l[2], r[0], r[1], r[2]];
        let v = (0..6).map(|j| w[j] * vals[j]).sum();
        let d = (0..6).map(|j| dw[j] * vals[j]).sum();
        (v, d)
    }

    /// The loop primitive and its derivatives at amplitude `alpha`, phase `u`.
    pub fn eval(&self, alpha: f64, u: f64) -> LoopEval {
        let mut out = LoopEval::default();
        if alpha == 0.0 {
            // Only the linear B term has a nonzero α-derivative at α = 0.
            let (p1, _) = self.primitive(1, u);
            out.b_alpha = p1;
            return out;
        }
        let (i, w, dw) = self.cell(u);
        let (left, right) = (&self.nodes[i], &self.nodes[i + 1]);
        let mut coef = 1.0;
        for q in 1..=MAX_ORDER {
            let prev = coef;
            coef *= alpha / q as f64;
            if prev < 1e-20 {
                break;
            }
            let (l, r) = (&left[q - 1], &right[q - 1]);
            let p = w[0] * l[0] + w[1] * l[1] + w[2] * l[2] + w[3] * r[0] + w[4] * r[1] + w[5] * r[2];
            let dp = dw[0] * l[0] + dw[1] * l[1] + dw[2] * l[2] + dw[3] * r[0] + dw[4] * r[1] + dw[5] * r[2];
            let sign = if (q / 2) % 2 == 0 { 1.0 } else { -1.0 };
            if q % 2 == 0 {
                out.a += sign * coef * p;
                out.a_alpha += sign * prev * p;
                out.a_u += sign * coef * dp;
            } else {
                out.b += sign * coef * p;
                out.b_alpha += sign * prev * p;
                out.b_u += sign * coef * dp;
            }
        }
        out
    }
}
