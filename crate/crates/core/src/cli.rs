//! The command-line surface. Each subcommand is a plain function returning a
//! serializable report so that it can be driven from tests as well.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Point, Result};
use crate::geometry::SubRiemannian;
use crate::io::{save_mesh, save_stage_csv, stage_path, LayerStackFile, RunManifest, StageRow};
use crate::map::MapRep;
use crate::pipeline::{run_with_observer, survey, RunConfig};
use crate::smooth_solver::{invert_along_flow, solve_unit_speed, FlowInversion};
use crate::verify::{path_length_ratio, sample_leaf_segments, HorizontalCurve};

#[derive(Debug, Parser)]
#[command(name = "convint", version, about = "Convex integration of partial isometries on the torus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the stage pipeline described by a manifest.
    Run(CommonArgs),
    /// Certify a saved layer stack (or the manifest's initial map).
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated subset of defect, paths, homotopy.
        #[arg(long, value_delimiter = ',', default_value = "defect,paths,homotopy")]
        checks: Vec<Check>,
    },
    /// Solve the unit-speed problem smoothly and compare with the pipeline.
    Oracle(CommonArgs),
    /// Run one of the built-in demonstrations.
    Example {
        #[arg(value_enum)]
        name: ExampleName,
    },
}

#[derive(Debug, Default, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long = "max-stages")]
    pub max_stages: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "export-mesh")]
    pub export_mesh: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Layer stack file to write (run) or read (verify).
    #[arg(long)]
    pub stack: Option<PathBuf>,
}

impl CommonArgs {
    /// Load the manifest and apply command-line overrides.
    pub fn manifest(&self) -> Result<RunManifest> {
        let path = self.manifest.as_ref().ok_or_else(|| Error::Config("--manifest is required".into()))?;
        let mut m = RunManifest::load(path)?;
        self.apply(&mut m);
        Ok(m)
    }

    pub fn apply(&self, m: &mut RunManifest) {
        if let Some(eta) = self.eta {
            m.run.eta_target = eta;
        }
        if let Some(s) = self.max_stages {
            m.run.max_stages = s;
        }
        if let Some(seed) = self.seed {
            m.seed = seed;
        }
        if let Some(p) = &self.export_mesh {
            m.output.mesh = Some(p.clone());
        }
        if let Some(p) = &self.csv {
            m.output.csv = Some(p.clone());
        }
        if let Some(p) = &self.stack {
            m.output.stack = Some(p.clone());
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Defect,
    Paths,
    Homotopy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ExampleName {
    AlphaZero,
    CircleOracle,
    Projection,
    Bessel,
}

/// Process exit status for an error: configuration and input problems are
/// distinct from stage failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse(_) | Error::Io(_) | Error::Json(_) => 2,
        Error::StageFailed { .. } => 3,
        _ => 4,
    }
}

/// Machine-readable error record printed on failure.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorRecord {
    pub error: &'static str,
    pub message: String,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cause: Option<&'static str>,
}

impl From<&Error> for ErrorRecord {
    fn from(e: &Error) -> Self {
        let (stage, cause) = match e {
            Error::StageFailed { stage, source } => (Some(*stage), Some(source.kind())),
            _ => (None, None),
        };
        ErrorRecord { error: e.kind(), message: e.to_string(), exit_code: exit_code(e), stage, cause }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub initial_defect: f64,
    pub final_defect: f64,
    pub reached_target: bool,
    pub stages: Vec<StageRow>,
    pub written: Vec<PathBuf>,
}

/// Execute the pipeline. Outputs for the completed prefix are written even
/// when a stage fails, and the failure is then returned.
pub fn cmd_run(m: &RunManifest) -> Result<RunSummary> {
    let (f0, structure) = m.instance.build()?;
    let mut written = Vec::new();
    let mut mesh_error = None;
    let mut completed = 0usize;
    let outcome = run_with_observer(&f0, &structure, &m.run, |f, _| {
        completed += 1;
        if let Some(mesh) = &m.output.mesh {
            if m.output.mesh_stages.contains(&completed) {
                let p = stage_path(mesh, completed);
                match save_mesh(&p, f, &structure, m.output.mesh_cap) {
                    Ok(()) => written.push(p),
                    Err(e) => mesh_error = Some(e),
                }
            }
        }
    });
    if let Some(e) = mesh_error {
        return Err(e);
    }
    let (map, reports, failure) = match outcome {
        Ok(o) => (o.map, o.reports, None),
        Err(fail) => (fail.completed, fail.reports, Some(fail.error)),
    };
    if let Some(p) = &m.output.csv {
        save_stage_csv(p, &reports)?;
        written.push(p.clone());
    }
    if let Some(p) = &m.output.stack {
        LayerStackFile::from_map(&map).save(p)?;
        written.push(p.clone());
    }
    if let Some(p) = &m.output.mesh {
        save_mesh(p, &map, &structure, m.output.mesh_cap)?;
        written.push(p.clone());
    }
    if let Some(e) = failure {
        return Err(e);
    }
    let initial = survey(&f0, None, &structure, m.run.corrugation.refine)?.defect;
    let final_defect = reports.last().map_or(initial, |r| r.defect_out);
    Ok(RunSummary {
        name: m.name.clone(),
        initial_defect: initial,
        final_defect,
        reached_target: final_defect <= m.run.eta_target,
        stages: reports.iter().map(StageRow::from).collect(),
        written,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PathRow {
    pub start: Point,
    pub length: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HomotopyRow {
    pub t: f64,
    pub defect: f64,
    /// `max |f_t - f_0|` over the grid, where `f_0` is the layer-free base.
    pub distance_from_base: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct VerifyReport {
    pub layers: usize,
    pub defect: Option<f64>,
    pub shortness_margin: Option<f64>,
    pub immersion_margin: Option<f64>,
    pub paths: Vec<PathRow>,
    /// `[√(1 - defect), √(1 + defect)]`.
    pub path_bounds: Option<[f64; 2]>,
    pub paths_within_bounds: Option<bool>,
    pub homotopy: Vec<HomotopyRow>,
}

/// Certify `f` against the manifest's structure.
pub fn verify_map(f: &MapRep, structure: &SubRiemannian, checks: &[Check], seed: u64, refine: f64) -> Result<VerifyReport> {
    let mut report = VerifyReport { layers: f.layers().len(), ..Default::default() };
    let s = survey(f, None, structure, refine)?;
    if checks.contains(&Check::Defect) {
        report.defect = Some(s.defect);
        report.shortness_margin = Some(s.shortness);
        report.immersion_margin = Some(s.immersion);
    }
    if checks.contains(&Check::Paths) {
        let bounds = [(1.0 - s.defect).max(0.0).sqrt(), (1.0 + s.defect).sqrt()];
        let curves: Vec<HorizontalCurve> = sample_leaf_segments(structure, 10, seed)?;
        for c in curves {
            let ratio = path_length_ratio(f, &c, structure)?;
            report.paths.push(PathRow { start: c.start, length: c.length, ratio });
        }
        report.paths_within_bounds =
            Some(report.paths.iter().all(|p| p.ratio >= bounds[0] - 1e-9 && p.ratio <= bounds[1] + 1e-9));
        report.path_bounds = Some(bounds);
    }
    if checks.contains(&Check::Homotopy) {
        let base = f.base_map();
        let grid = structure.grid_for(f, refine);
        for t in [0.0, 0.5, 1.0] {
            let ft = f.homotopy(t);
            let defect = survey(&ft, None, structure, refine)?.defect;
            let mut dist = 0.0f64;
            for x in grid.points() {
                let (a, b) = (ft.value(&x), base.value(&x));
                dist = dist.max(a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max));
            }
            report.homotopy.push(HomotopyRow { t, defect, distance_from_base: dist });
        }
    }
    Ok(report)
}

pub fn cmd_verify(m: &RunManifest, stack: Option<&std::path::Path>, checks: &[Check]) -> Result<VerifyReport> {
    let (f0, structure) = m.instance.build()?;
    let f = match stack {
        Some(p) => LayerStackFile::load(p)?.to_map()?,
        None => f0,
    };
    verify_map(&f, &structure, checks, m.seed, m.run.corrugation.refine)
}

#[derive(Clone, Debug, Serialize)]
pub struct AgreementRow {
    pub start: Point,
    pub length: f64,
    pub oracle_ratio: f64,
    pub pipeline_ratio: Option<f64>,
    pub difference: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub alpha: [String; 2],
    pub flow_residual: f64,
    pub unit_speed_residual: f64,
    pub pipeline_stages: usize,
    pub pipeline_defect: Option<f64>,
    pub pipeline_reached_target: bool,
    pub pipeline_failure: Option<ErrorRecord>,
    pub table: Vec<AgreementRow>,
    /// Largest oracle/pipeline path-length discrepancy.
    pub max_difference: Option<f64>,
}

/// Smooth solution plus a pipeline cross-check on the same instance.
pub fn cmd_oracle(m: &RunManifest) -> Result<OracleReport> {
    let problem = m
        .instance
        .line_problem()?
        .ok_or_else(|| Error::Config("the oracle needs a rank-one instance with constant field and unit metric".into()))?;
    if let Some(beta) = &m.oracle.beta {
        // Probing a user-supplied right-hand side: only the inversion runs.
        invert_along_flow(beta, &problem.flow, &FlowInversion::global(problem.resolution))?;
    }
    let solution = solve_unit_speed(&problem)?;
    let structure = problem.structure()?;
    let curves = sample_leaf_segments(&structure, m.oracle.segments.unwrap_or(10), m.seed)?;
    let (mut pipeline_map, mut pipeline_stages, mut pipeline_defect, mut reached, mut failure) =
        (None, 0, None, false, None);
    if !m.oracle.skip_pipeline {
        let cfg: &RunConfig = &m.run;
        match crate::pipeline::run(&problem.initial_map(), &structure, cfg) {
            Ok(o) => {
                pipeline_stages = o.reports.len();
                pipeline_defect = Some(o.final_defect);
                reached = o.reached_target;
                pipeline_map = Some(o.map);
            }
            Err(fail) => {
                pipeline_stages = fail.reports.len();
                pipeline_defect = fail.reports.last().map(|r| r.defect_out);
                failure = Some(ErrorRecord::from(&fail.error));
                pipeline_map = Some(fail.completed);
            }
        }
    }
    let mut table = Vec::new();
    for c in &curves {
        let oracle_ratio = path_length_ratio(&solution.map, c, &structure)?;
        let pipeline_ratio = match &pipeline_map {
            Some(f) => Some(path_length_ratio(f, c, &structure)?),
            None => None,
        };
        table.push(AgreementRow {
            start: c.start,
            length: c.length,
            oracle_ratio,
            pipeline_ratio,
            difference: pipeline_ratio.map(|p| (p - oracle_ratio).abs()),
        });
    }
    let max_difference = table.iter().filter_map(|r| r.difference).reduce(f64::max);
    Ok(OracleReport {
        alpha: [solution.alpha[0].to_string(), solution.alpha[1].to_string()],
        flow_residual: solution.flow_residual,
        unit_speed_residual: solution.unit_speed_residual,
        pipeline_stages,
        pipeline_defect,
        pipeline_reached_target: reached,
        pipeline_failure: failure,
        table,
        max_difference,
    })
}

/// Built-in demonstrations, each returning a JSON document.
pub fn cmd_example(name: ExampleName) -> Result<serde_json::Value> {
    use crate::smooth_solver::LineFieldProblem;
    Ok(match name {
        ExampleName::AlphaZero => serde_json::to_value(crate::verify::example_alpha_zero()?)?,
        ExampleName::CircleOracle => {
            let s = solve_unit_speed(&LineFieldProblem::circle(0.6, [16, 16])?)?;
            serde_json::json!({
                "map": s.map.base().iter().map(|e| e.to_string()).collect::<Vec<_>>(),
                "unit_speed_residual": s.unit_speed_residual,
                "flow_residual": s.flow_residual,
            })
        }
        ExampleName::Projection => {
            let (f, s) = crate::verify::clifford_instance([32, 32])?;
            let p = crate::verify::projection_search(&f, &s, 100, 0)?;
            serde_json::json!({ "direction": p.direction, "margin": p.margin, "trial": p.trial })
        }
        ExampleName::Bessel => {
            let rows: Vec<_> = [0.1, 0.5, 0.9, 0.99]
                .iter()
                .map(|s0| {
                    let a = crate::bessel::amplitude_solve(1.0, *s0)?;
                    Ok(serde_json::json!({ "r": 1.0, "s0": s0, "alpha": a, "residual": crate::bessel::j0(a) - s0 }))
                })
                .collect::<Result<_>>()?;
            serde_json::Value::Array(rows)
        }
    })
}

/// Dispatch a parsed command line, printing JSON to stdout. Returns the
/// process exit status.
pub fn main_with(cli: Cli) -> i32 {
    let result: Result<serde_json::Value> = (|| match cli.command {
        Command::Run(args) => Ok(serde_json::to_value(cmd_run(&args.manifest()?)?)?),
        Command::Verify { common, checks } => {
            let m = common.manifest()?;
            Ok(serde_json::to_value(cmd_verify(&m, common.stack.as_deref(), &checks)?)?)
        }
        Command::Oracle(args) => Ok(serde_json::to_value(cmd_oracle(&args.manifest()?)?)?),
        Command::Example { name } => cmd_example(name),
    })();
    match result {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).unwrap_or_default());
            0
        }
        Err(e) => {
            let record = ErrorRecord::from(&e);
            eprintln!("{}", serde_json::to_string(&record).unwrap_or_default());
            record.exit_code
        }
    }
}
