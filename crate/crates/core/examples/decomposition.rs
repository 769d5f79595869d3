//! Split symmetric forms into primitive terms `phi^2 (d psi)^2` and rebuild them.

use convint::decomposition::{decompose, reconstruct, CovectorDictionary};
use convint::domain::PeriodicDomain;
use convint::expr::Expr;
use convint::geometry::{BilinearFieldOnH, FrameField};
use convint::linalg::Sym;

fn main() -> convint::Result<()> {
    let grid = PeriodicDomain::torus([32, 32])?.grid();
    let dict = CovectorDictionary::default();

    // A line field and a positive function on it.
    let line = FrameField::line([Expr::constant(1.0), Expr::parse("0.5 * sin(theta)")?]);
    let s1 = BilinearFieldOnH::from_fn(1, |x| Sym::scalar(1.0 + 0.5 * x[1].cos()));
    let terms = decompose(&s1, &line, &dict, &grid)?;
    let worst = grid.points().map(|x| reconstruct(&terms, &line, &x).sub(&s1.eval(&x)).norm()).fold(0.0, f64::max);
    println!("rank 1: {} term(s) {:?}, reconstruction error {worst:.1e}", terms.len(), terms.iter().map(|t| t.covector).collect::<Vec<_>>());

    // The line turns through [0, 3π/4] as theta goes round, so each of (1,0),
    // (0,1) and (1,1) annihilates it somewhere and a partition is needed.
    let angle = "(1.1780972450961724 * (1 + cos(theta)))";
    let wobble = FrameField::line([Expr::parse(&format!("cos({angle})"))?, Expr::parse(&format!("sin({angle})"))?]);
    let terms = decompose(&s1, &wobble, &dict, &grid)?;
    let worst = grid.points().map(|x| reconstruct(&terms, &wobble, &x).sub(&s1.eval(&x)).norm()).fold(0.0, f64::max);
    println!("turning line: {} weighted term(s), reconstruction error {worst:.1e}", terms.len());

    // Rank two, inside and outside the cone of the dictionary.
    let plane = FrameField::coordinate();
    let inside = BilinearFieldOnH::constant(Sym::two(2.0, 0.5, 1.5));
    let terms = decompose(&inside, &plane, &dict, &grid)?;
    let worst = grid.points().map(|x| reconstruct(&terms, &plane, &x).sub(&inside.eval(&x)).norm()).fold(0.0, f64::max);
    println!("rank 2 in cone: {} term(s), reconstruction error {worst:.1e}", terms.len());
    let outside = BilinearFieldOnH::constant(Sym::two(1.0, -0.5, 1.0));
    match decompose(&outside, &plane, &dict, &grid) {
        Ok(_) => println!("rank 2 outside cone: unexpectedly decomposed"),
        Err(e) => println!("rank 2 outside cone: {e}"),
    }
    Ok(())
}
