//! Load a manifest, run one stage, save the layer stack and a mesh, reload
//! the stack and trace the homotopy back to the initial map.

use convint::cli::{cmd_run, verify_map, Check};
use convint::io::{LayerStackFile, RunManifest};

fn main() -> convint::Result<()> {
    let dir = std::env::temp_dir().join("convint-layer-stack-example");
    let text = format!(
        r#"
name = "one-stage"
seed = 5

[instance]
preset = "embedded_torus"
scale = 0.9

[run]
max_stages = 1

[output]
stack = "{0}/stack.json"
csv = "{0}/stages.csv"
mesh = "{0}/image.obj"
mesh_cap = 256
"#,
        dir.display()
    );
    let manifest = RunManifest::from_toml(&text)?;
    let summary = cmd_run(&manifest)?;
    for p in &summary.written {
        println!("wrote {}", p.display());
    }

    let map = LayerStackFile::load(&dir.join("stack.json"))?.to_map()?;
    let (_, structure) = manifest.instance.build()?;
    let report = verify_map(&map, &structure, &[Check::Defect, Check::Homotopy], manifest.seed, 4.0)?;
    println!("reloaded defect {:?} (run reported {})", report.defect, summary.final_defect);
    for row in &report.homotopy {
        println!("t = {:.1}: defect {:.4}, distance from base {:.3e}", row.t, row.defect, row.distance_from_base);
    }
    Ok(())
}
