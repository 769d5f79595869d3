//! Project the flat torus from R^4 to R^3 along a random direction while
//! keeping it an immersion on the line field.

use convint::verify::{clifford_instance, loewner_violation, projection_search};

fn main() -> convint::Result<()> {
    let (f, structure) = clifford_instance([32, 32])?;
    let grid = structure.grid_for(&f, 4.0);
    let mut first_try = 0;
    for seed in 0..20 {
        let p = projection_search(&f, &structure, 100, seed)?;
        if p.trial == 0 {
            first_try += 1;
        }
        if seed < 3 {
            let worst = loewner_violation(&f, &p.map, &structure, &grid);
            println!("seed {seed}: v = {:.3?}, margin {:.4}, largest pullback gain {worst:.1e} (negative: shorter)", p.direction, p.margin);
        }
    }
    println!("{first_try}/20 seeds succeeded on the first draw");

    let (g, s3) = convint::verify::clifford_instance([32, 32])?;
    let squeezed = g.linear_image(&[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]])?;
    match projection_search(&squeezed, &s3, 10, 0) {
        Ok(_) => println!("three target dimensions: unexpectedly accepted"),
        Err(e) => println!("three target dimensions: {e}"),
    }
    Ok(())
}
