//! Manifests, layer-stack files, stage CSV and mesh export.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corrugation::CorrugationLayer;
use crate::decomposition::{Bump, Covector};
use crate::domain::{PeriodicDomain, SampleGrid};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::{FrameField, MetricOnH, SubRiemannian};
use crate::map::MapRep;
use crate::pipeline::{RunConfig, StageReport};
use crate::profile::Profile;
use crate::smooth_solver::LineFieldProblem;
use crate::spline::SplineFields;
use crate::verify::{clifford_instance, EmbeddedTorus};

/// Which problem to run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum Instance {
    /// The slope-`alpha` foliation of the embedded torus with the scaled
    /// `(x, y)` projection as initial map.
    EmbeddedTorus {
        #[serde(default = "one")]
        a: f64,
        #[serde(default = "two")]
        b: f64,
        #[serde(default)]
        alpha: f64,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default = "default_resolution")]
        resolution: [usize; 2],
    },
    /// `(c cos φ, c sin φ)` along `∂_φ` with unit target speed.
    Circle {
        c: f64,
        #[serde(default = "default_resolution")]
        resolution: [usize; 2],
    },
    /// The flat torus in ℝ⁴ with a diagonal line field.
    Clifford {
        #[serde(default = "default_resolution")]
        resolution: [usize; 2],
    },
    /// Everything spelled out as expressions in `theta` and `phi`.
    Custom {
        #[serde(default = "tau_periods")]
        periods: [f64; 2],
        #[serde(default = "default_resolution")]
        resolution: [usize; 2],
        frame: Vec<[Expr; 2]>,
        metric: Vec<Expr>,
        map: Vec<Expr>,
    },
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn default_resolution() -> [usize; 2] {
    [16, 16]
}
fn tau_periods() -> [f64; 2] {
    [std::f64::consts::TAU; 2]
}

impl Instance {
    /// Initial map and structure.
    pub fn build(&self) -> Result<(MapRep, SubRiemannian)> {
        match self {
            Instance::EmbeddedTorus { a, b, alpha, scale, resolution } => {
                let torus = EmbeddedTorus::new(*a, *b)?;
                Ok((torus.projection().scaled(*scale)?, torus.structure(*alpha, *resolution)?))
            }
            Instance::Circle { .. } => {
                let p = self.line_problem()?.expect("circle instances are line problems");
                Ok((p.initial_map(), p.structure()?))
            }
            Instance::Clifford { resolution } => clifford_instance(*resolution),
            Instance::Custom { periods, resolution, frame, metric, map } => {
                let s = SubRiemannian::new(
                    PeriodicDomain::new(*periods, *resolution)?,
                    FrameField::new(frame.clone())?,
                    MetricOnH::new(metric.clone())?,
                )?;
                Ok((MapRep::new(map.clone())?, s))
            }
        }
    }

    /// The smooth-solver form of the instance, when it has one.
    pub fn line_problem(&self) -> Result<Option<LineFieldProblem>> {
        match self {
            Instance::Circle { c, resolution } => Ok(Some(LineFieldProblem::circle(*c, *resolution)?)),
            Instance::Custom { periods, resolution, frame, metric, map } => {
                let unit = metric.len() == 1 && metric[0].as_const() == Some(1.0);
                let constant: Option<Vec<f64>> =
                    frame.first().map(|f| f.iter().map(Expr::as_const).collect()).unwrap_or_default();
                match (frame.len(), unit, constant, map.len()) {
                    (1, true, Some(c), 2) if *periods == tau_periods() => Ok(Some(LineFieldProblem::new(
                        [c[0], c[1]],
                        &MapRep::new(map.clone())?,
                        *resolution,
                    )?)),
                    _ => Ok(None),
                }
            }
            _ => Ok(None),
        }
    }
}

/// Output locations; every entry is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub stack: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub mesh: Option<PathBuf>,
    /// Stages (1-based, counting completed stages) whose map is also exported
    /// as a mesh, in addition to the final one.
    pub mesh_stages: Vec<usize>,
    /// Largest mesh resolution per axis.
    pub mesh_cap: usize,
}

/// Options of the oracle comparison.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleOptions {
    /// Replaces the formal solution when set, to probe obstructions.
    pub beta: Option<[Expr; 2]>,
    /// Number of sampled leaf segments in the agreement table.
    pub segments: Option<usize>,
    /// Skip the pipeline cross-check.
    pub skip_pipeline: bool,
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub instance: Instance,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputPaths,
    #[serde(default)]
    pub oracle: OracleOptions,
}

impl RunManifest {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        RunManifest::from_toml(&fs::read_to_string(path)?)
    }
}

pub const STACK_FORMAT: &str = "convint-layer-stack";
pub const STACK_VERSION: u32 = 1;

/// One serialized corrugation layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub lambda: f64,
    pub covector: Covector,
    pub weight: Option<Bump>,
    pub profile: Profile,
    pub amplitude_scale: f64,
    pub counts: [usize; 2],
    /// Spline coefficients per component, stored exactly so a reload
    /// reproduces the layer bit for bit.
    pub coefficients: Vec<Vec<f64>>,
}

/// A versioned record of a [`MapRep`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerStackFile {
    pub format: String,
    pub version: u32,
    pub base: Vec<Expr>,
    pub layers: Vec<LayerRecord>,
}

impl LayerStackFile {
    pub fn from_map(f: &MapRep) -> Self {
        let layers = f
            .layers()
            .iter()
            .map(|l| {
                let fields = l.fields();
                LayerRecord {
                    lambda: l.lambda,
                    covector: l.covector,
                    weight: l.weight.clone(),
                    profile: l.profile,
                    amplitude_scale: l.amplitude_scale,
                    counts: fields.counts,
                    coefficients: (0..fields.components()).map(|c| fields.coefficients(c).to_vec()).collect(),
                }
            })
            .collect();
        LayerStackFile { format: STACK_FORMAT.into(), version: STACK_VERSION, base: f.base().to_vec(), layers }
    }

    pub fn to_map(&self) -> Result<MapRep> {
        if self.format != STACK_FORMAT || self.version != STACK_VERSION {
            return Err(Error::Parse(format!(
                "unsupported layer stack {} v{} (expected {STACK_FORMAT} v{STACK_VERSION})",
                self.format, self.version
            )));
        }
        let layers = self
            .layers
            .iter()
            .map(|r| {
                let n = r.counts[0] * r.counts[1];
                if r.coefficients.iter().any(|c| c.len() != n) {
                    return Err(Error::Parse("layer coefficient count does not match its grid".into()));
                }
                CorrugationLayer::from_fields(
                    r.lambda,
                    r.covector,
                    r.weight.clone(),
                    r.profile,
                    r.amplitude_scale,
                    SplineFields::from_coefficients(r.counts, r.coefficients.clone()),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        MapRep::from_parts(self.base.clone(), layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r = std::io::BufReader::new(fs::File::open(path)?);
        Ok(serde_json::from_reader(r)?)
    }
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(fs::File::create(path)?)
}

/// One row of the per-stage CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub stage: usize,
    pub defect_in: f64,
    pub defect_out: f64,
    pub c1_moved: f64,
    pub c0_moved: f64,
    pub layers: usize,
    pub max_lambda: f64,
}

impl From<&StageReport> for StageRow {
    fn from(r: &StageReport) -> Self {
        StageRow {
            stage: r.stage,
            defect_in: r.defect_in,
            defect_out: r.defect_out,
            c1_moved: r.c1_moved,
            c0_moved: r.c0_moved,
            layers: r.layers_added,
            max_lambda: r.max_lambda(),
        }
    }
}

pub fn write_stage_csv(out: impl Write, reports: &[StageReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if reports.is_empty() {
        w.write_record(["stage", "defect_in", "defect_out", "c1_moved", "c0_moved", "layers", "max_lambda"])
            .map_err(csv_error)?;
    }
    for r in reports {
        w.serialize(StageRow::from(r)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_stage_csv(input: impl std::io::Read) -> Result<Vec<StageRow>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(csv_error)).collect()
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

pub fn save_stage_csv(path: &Path, reports: &[StageReport]) -> Result<()> {
    write_stage_csv(std::io::BufWriter::new(create(path)?), reports)
}

/// Mesh grid for `f`: four samples per period of its highest frequency,
/// capped at `cap` per axis and never coarser than the structure grid.
pub fn mesh_grid(f: &MapRep, structure: &SubRiemannian, cap: usize) -> SampleGrid {
    let mut g = structure.domain.refined(f.max_frequency(), 4.0);
    let cap = if cap == 0 { 1024 } else { cap };
    for c in g.counts.iter_mut() {
        *c = (*c).min(cap.max(structure.domain.resolution[0].min(structure.domain.resolution[1])));
    }
    g
}

/// Plain-text polygon mesh of the image: `v x y z` lines (missing
/// coordinates are zero, extra ones dropped) and triangle `f a b c` lines
/// with one-based indices. The grid is periodic so faces wrap around.
pub fn write_mesh(mut out: impl Write, f: &MapRep, grid: &SampleGrid) -> Result<()> {
    let [n0, n1] = grid.counts;
    writeln!(out, "# {} x {} periodic grid, {} target dimensions", n0, n1, f.target_dim())?;
    for i in 0..n0 {
        for j in 0..n1 {
            let v = f.value(&grid.point(i, j));
            let c = |k: usize| v.get(k).copied().unwrap_or(0.0);
            writeln!(out, "v {} {} {}", c(0), c(1), c(2))?;
        }
    }
    let idx = |i: usize, j: usize| (i % n0) * n1 + (j % n1) + 1;
    for i in 0..n0 {
        for j in 0..n1 {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            writeln!(out, "f {a} {b} {c}")?;
            writeln!(out, "f {a} {c} {d}")?;
        }
    }
    Ok(())
}

pub fn save_mesh(path: &Path, f: &MapRep, structure: &SubRiemannian, cap: usize) -> Result<()> {
    let mut w = std::io::BufWriter::new(create(path)?);
    write_mesh(&mut w, f, &mesh_grid(f, structure, cap))?;
    w.flush()?;
    Ok(())
}

/// `mesh.obj` → `mesh_stage3.obj`.
pub fn stage_path(path: &Path, stage: usize) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_stage{stage}.{}", ext.to_string_lossy()),
        None => format!("{stem}_stage{stage}"),
    };
    path.with_file_name(name)
}
