//! Three stages of the defect-halving loop, printed as CSV.

use convint::io::write_stage_csv;
use convint::pipeline::{run_with_observer, RunConfig};
use convint::verify::EmbeddedTorus;

fn main() -> convint::Result<()> {
    let torus = EmbeddedTorus::default();
    let structure = torus.structure(0.0, [16, 16])?;
    let f0 = torus.projection().scaled(0.9)?;
    let cfg = RunConfig { max_stages: 3, ..RunConfig::default() };

    let outcome = run_with_observer(&f0, &structure, &cfg, |_, r| {
        eprintln!(
            "stage {}: ratio {:.4}, lambda {:?}, c1/sqrt(defect) {:.3}, {:.2}s",
            r.stage,
            r.ratio(),
            r.frequencies,
            r.c1_moved / r.defect_in.sqrt(),
            r.wall_time
        );
    });
    let reports = match outcome {
        Ok(o) => o.reports,
        Err(fail) => {
            eprintln!("stopped: {fail}");
            fail.reports
        }
    };
    write_stage_csv(std::io::stdout(), &reports)
}
