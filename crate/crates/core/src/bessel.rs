//! Order-zero Bessel function and the amplitude solve `r J₀(α) = s₀`.

use crate::error::{Error, Result};

/// First positive zero of J₀.
pub const J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;

/// J₀ by its power series; accurate to rounding for |x| ≤ 8.
pub fn j0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut k = 1.0;
    while term.abs() > 1e-18 * sum.abs().max(1e-300) || k < 3.0 {
        term *= -q / (k * k);
        sum += term;
        k += 1.0;
        if k > 200.0 {
            break;
        }
    }
    sum
}

/// Derivative of J₀, which is −J₁.
pub fn j0_prime(x: f64) -> f64 {
    // J1(x) = (x/2) Σ (-q)^k / (k! (k+1)!)
    let q = 0.25 * x * x;
    let mut term: f64 = 0.5 * x;
    let mut sum = term;
    let mut k = 1.0;
    while term.abs() > 1e-18 * sum.abs().max(1e-300) || k < 3.0 {
        term *= -q / (k * (k + 1.0));
        sum += term;
        k += 1.0;
        if k > 200.0 {
            break;
        }
    }
    -sum
}

/// The unique `α ∈ [0, j₀)` with `r J₀(α) = s₀`, found by bisection.
pub fn amplitude_solve(r: f64, s0: f64) -> Result<f64> {
    if !(r > 0.0) || !(s0 > 0.0) || s0 > r {
        return Err(Error::OutOfRange(format!("amplitude solve needs 0 < s0 <= r, got r={r}, s0={s0}")));
    }
    if s0 == r {
        return Ok(0.0);
    }
    let target = s0 / r;
    let (mut lo, mut hi) = (0.0f64, J0_FIRST_ZERO);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if j0(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = if (j0(lo) - target).abs() <= (j0(hi) - target).abs() { lo } else { hi };
    Ok(a)
}
