//! Amplitudes of the corrugation loop: `r J0(alpha) = s0` for the circular
//! loop and the mean equation of the plateau loop.

use convint::bessel::{amplitude_solve, j0, J0_FIRST_ZERO};
use convint::profile::Profile;

fn main() -> convint::Result<()> {
    println!("first zero of J0: {J0_FIRST_ZERO}");
    println!("{:>5} {:>8} {:>12} {:>10} {:>12}", "r", "s0", "bessel", "residual", "plateau");
    let plateau = Profile::default();
    for (r, s0) in [(1.0, 1.0), (1.0, 0.9), (2.0, 0.5), (0.3, 0.01)] {
        let a = amplitude_solve(r, s0)?;
        let p = plateau.solve_amplitude(r, s0)?;
        println!("{r:>5} {s0:>8} {a:>12.9} {:>10.1e} {p:>12.9}", r * j0(a) - s0);
    }

    // The loop average of (cos, sin)(alpha h(u)) is (C(alpha), 0).
    let table = Profile::Bessel.table();
    let alpha = 1.3;
    let n = 4096;
    let mean: f64 = (0..n).map(|i| (alpha * (std::f64::consts::TAU * i as f64 / n as f64).cos()).cos()).sum::<f64>() / n as f64;
    println!("loop mean {mean:.12} vs J0 {:.12} vs table {:.12}", j0(alpha), table.mean(alpha).0);
    Ok(())
}
