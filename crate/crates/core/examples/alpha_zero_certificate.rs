//! The unscaled (x, y) projection of the embedded torus is already a partial
//! isometry on the horizontal circles. Certify that, then tilt the foliation
//! and watch the defect appear.

use convint::geometry::{defect_form, defect_norm, shortness_margin};
use convint::verify::{certify_alpha_zero, EmbeddedTorus};

fn main() -> convint::Result<()> {
    for (a, b) in [(1.0, 2.0), (0.5, 3.0)] {
        let c = certify_alpha_zero(EmbeddedTorus::new(a, b)?, [64, 64])?;
        println!("a={a} b={b}: defect {:.3e}, immersion margin {:.4}, certified {}", c.defect, c.margin, c.certified);
    }

    let torus = EmbeddedTorus::default();
    let tilted = torus.structure(0.5, [64, 64])?;
    let grid = tilted.domain.grid();
    let f = torus.projection();
    let defect = defect_norm(&defect_form(&f, &tilted.metric, &tilted.frame), &tilted.metric, &grid)?;
    let short = shortness_margin(&f.scaled(0.9)?, &tilted.metric, &tilted.frame, &grid)?;
    println!("slope 0.5: defect of the projection {defect:.4}, shortness margin of 0.9x {short:.4}");
    Ok(())
}
