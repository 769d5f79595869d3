//! One corrugation step on the scaled torus projection: realize the whole
//! defect as a single primitive term and report the frequency search.

use convint::corrugation::{corrugate, CorrugationSettings, StepBudget};
use convint::decomposition::{decompose, CovectorDictionary};
use convint::geometry::{defect_form, h_immersion_margin};
use convint::profile::Profile;
use convint::verify::EmbeddedTorus;

fn main() -> convint::Result<()> {
    let torus = EmbeddedTorus::default();
    let structure = torus.structure(0.0, [16, 16])?;
    let f = torus.projection().scaled(0.9)?;
    let grid = structure.domain.grid();
    let defect = defect_form(&f, &structure.metric, &structure.frame);
    let terms = decompose(&defect, &structure.frame, &CovectorDictionary::default(), &grid)?;
    println!("{} primitive term(s), first covector {:?}", terms.len(), terms[0].covector);

    let budget = StepBudget::new(0.05, 0.05, 1.0)?;
    for profile in [Profile::default(), Profile::Bessel] {
        let settings = CorrugationSettings { profile, lambda_max: 256.0, ..Default::default() };
        println!("\nprofile {profile:?}");
        println!("{:>6} {:>10} {:>9} {:>9} {:>9}", "lambda", "residual", "distance", "bound", "c0");
        match corrugate(&f, &terms[0], &budget, &structure, &settings, 4.0) {
            Ok(step) => {
                for c in &step.transcript {
                    println!("{:>6} {:>10.4e} {:>9.4} {:>9.4} {:>9.4}", c.lambda, c.residual, c.distance, c.distance_bound, c.c0);
                }
                let check = structure.grid_for(&step.map, 4.0);
                println!("accepted lambda {:?}, immersion margin {:.4}", step.lambda, h_immersion_margin(&step.map, &structure.frame, &check));
            }
            // The circular loop overshoots the distance bound at every frequency.
            Err(e) => println!("rejected: {e}"),
        }
    }
    Ok(())
}
