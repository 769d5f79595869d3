//! The stage loop: halve the defect, decompose it, corrugate once per term,
//! and iterate until the defect is below the target.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corrugation::{corrugate, CandidateStats, CorrugationSettings, StepBudget};
use crate::decomposition::{halve_and_decompose, CovectorDictionary};
use crate::error::{Error, Result};
use crate::geometry::{g0_orthonormal_basis, gram, pointwise_defect, pointwise_distance, restricted_columns, SubRiemannian};
use crate::linalg::{pencil_eigenvalues, singular_extremes};
use crate::map::MapRep;
use crate::profile::Profile;

/// Per-term budgets of one stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageBudgets {
    pub entry_defect: f64,
    pub delta_primes: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub c0_total: f64,
}

impl StageBudgets {
    /// Validate the residual gate `Σ δ'_k < n₀ / 6`.
    pub fn new(entry_defect: f64, delta_primes: Vec<f64>, epsilons: Vec<f64>, c0_total: f64) -> Result<Self> {
        if delta_primes.len() != epsilons.len() {
            return Err(Error::DimensionMismatch { expected: delta_primes.len(), found: epsilons.len() });
        }
        if delta_primes.iter().chain(&epsilons).any(|v| !(*v > 0.0)) || !(c0_total > 0.0) {
            return Err(Error::Config("stage budgets must be positive".into()));
        }
        let sum: f64 = delta_primes.iter().sum();
        if !(sum < entry_defect / 6.0) {
            return Err(Error::Config(format!(
                "residual budgets sum to {sum:e}, which is not below one sixth of the entry defect {entry_defect:e}"
            )));
        }
        Ok(StageBudgets { entry_defect, delta_primes, epsilons, c0_total })
    }

    /// Geometric split over `terms` terms: term `k` (from 1) receives a
    /// `2^{-k}` share, renormalized so the shares sum to one.
    pub fn geometric(entry_defect: f64, terms: usize, cfg: &RunConfig, stage: usize) -> Result<Self> {
        let shares: Vec<f64> = (1..=terms).map(|k| 0.5f64.powi(k as i32)).collect();
        let total: f64 = shares.iter().sum();
        let delta = cfg.delta_fraction * entry_defect / 6.0;
        let eps = cfg.epsilon_scale * entry_defect.sqrt();
        let c0 = cfg.c0_total * 0.5f64.powi(stage as i32 + 1);
        StageBudgets::new(
            entry_defect,
            shares.iter().map(|s| delta * s / total).collect(),
            (1..=terms).map(|k| eps * 0.5f64.powi(k as i32)).collect(),
            c0,
        )
    }

    pub fn step(&self, k: usize, terms: usize) -> Result<StepBudget> {
        let shares: Vec<f64> = (1..=terms).map(|i| 0.5f64.powi(i as i32)).collect();
        let total: f64 = shares.iter().sum();
        StepBudget::new(self.delta_primes[k], self.epsilons[k], self.c0_total * shares[k] / total)
    }
}

/// Diagnostics of one stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    pub defect_in: f64,
    pub defect_out: f64,
    pub c1_moved: f64,
    pub c0_moved: f64,
    pub layers_added: usize,
    pub frequencies: Vec<f64>,
    pub shortness_margin_out: f64,
    pub immersion_margin_out: f64,
    /// Smallest generalized eigenvalue of `(f_out*h - f_in*h, g)`.
    pub pullback_increase: f64,
    pub wall_time: f64,
    pub candidates: Vec<CandidateStats>,
}

impl StageReport {
    pub fn ratio(&self) -> f64 {
        if self.defect_in == 0.0 {
            0.0
        } else {
            self.defect_out / self.defect_in
        }
    }

    pub fn max_lambda(&self) -> f64 {
        self.frequencies.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub eta_target: f64,
    pub max_stages: usize,
    pub c0_total: f64,
    pub contraction_assert: f64,
    /// Fraction of the `n₀ / 6` residual allowance handed to the terms.
    pub delta_fraction: f64,
    /// Stage C¹ slack as a multiple of `√n₀`.
    pub epsilon_scale: f64,
    pub lambda_start: f64,
    pub dictionary: CovectorDictionary,
    pub corrugation: CorrugationSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            eta_target: 1e-2,
            max_stages: 8,
            c0_total: 1.0,
            contraction_assert: 0.7,
            delta_fraction: 0.95,
            epsilon_scale: 1.0,
            lambda_start: 4.0,
            dictionary: CovectorDictionary::default(),
            corrugation: CorrugationSettings { profile: Profile::Bessel, ..CorrugationSettings::default() },
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_target > 0.0) {
            return Err(Error::Config("eta_target must be positive".into()));
        }
        if !(self.contraction_assert > 2.0 / 3.0 && self.contraction_assert < 1.0) {
            return Err(Error::Config("contraction_assert must lie in (2/3, 1)".into()));
        }
        if !(self.c0_total > 0.0) {
            return Err(Error::Config("c0_total must be positive".into()));
        }
        if !(self.delta_fraction > 0.0 && self.delta_fraction < 1.0) {
            return Err(Error::Config("delta_fraction must lie in (0, 1)".into()));
        }
        if !(self.epsilon_scale > 0.0) {
            return Err(Error::Config("epsilon_scale must be positive".into()));
        }
        if !(self.lambda_start >= 1.0) || self.lambda_start.fract() != 0.0 {
            return Err(Error::Config("lambda_start must be a positive integer".into()));
        }
        Ok(())
    }
}

/// Grid measurements of a map (and optionally its predecessor).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Survey {
    pub defect: f64,
    pub shortness: f64,
    pub immersion: f64,
    pub c1_from_prev: f64,
    pub c0_from_prev: f64,
    pub pullback_increase: f64,
}

/// One sweep over the refined grid of `f` computing every stage functional.
pub fn survey(f: &MapRep, prev: Option<&MapRep>, structure: &SubRiemannian, refine: f64) -> Result<Survey> {
    let grid = structure.grid_for(f, refine);
    let frame = &structure.frame;
    let k = frame.rank();
    let n = f.target_dim();
    let mut s = Survey {
        defect: 0.0,
        shortness: f64::INFINITY,
        immersion: f64::INFINITY,
        c1_from_prev: 0.0,
        c0_from_prev: 0.0,
        pullback_increase: f64::INFINITY,
    };
    for x in grid.points() {
        let jet = f.jet(&x);
        let v = frame.eval(&x);
        let g = structure.metric.eval(&x);
        let cols = restricted_columns(&jet, &v, k);
        let p = gram(&cols, n, k);
        let b = g.sub(&p);
        s.defect = s.defect.max(pointwise_defect(&b, &g, &x)?);
        let ev = pencil_eigenvalues(&b, &g).ok_or(Error::NonPositiveMetric { point: x })?;
        s.shortness = s.shortness.min(ev[0]);
        s.immersion = s.immersion.min(singular_extremes(&cols, n, k).0);
        if let Some(prev) = prev {
            let pj = prev.jet(&x);
            let w = g0_orthonormal_basis(&v, &g, k, &x)?;
            s.c1_from_prev = s.c1_from_prev.max(pointwise_distance(&jet, &pj, &w));
            let d: f64 = (0..n).map(|i| (jet.value[i] - pj.value[i]).powi(2)).sum::<f64>().sqrt();
            s.c0_from_prev = s.c0_from_prev.max(d);
            let pp = gram(&restricted_columns(&pj, &v, k), n, k);
            let inc = pencil_eigenvalues(&p.sub(&pp), &g).ok_or(Error::NonPositiveMetric { point: x })?;
            s.pullback_increase = s.pullback_increase.min(inc[0]);
        }
    }
    Ok(s)
}

/// Entry defects at or below this are round-off; such stages add nothing.
pub const ZERO_DEFECT: f64 = 1e-12;

/// One stage with budgets derived from the configuration.
pub fn run_stage(
    f: &MapRep,
    structure: &SubRiemannian,
    cfg: &RunConfig,
    stage: usize,
    lambda_start: f64,
) -> Result<(MapRep, StageReport)> {
    let started = Instant::now();
    let entry = survey(f, None, structure, cfg.corrugation.refine)?;
    let mut report = StageReport {
        stage,
        defect_in: entry.defect,
        defect_out: entry.defect,
        c1_moved: 0.0,
        c0_moved: 0.0,
        layers_added: 0,
        frequencies: Vec::new(),
        shortness_margin_out: entry.shortness,
        immersion_margin_out: entry.immersion,
        pullback_increase: 0.0,
        wall_time: 0.0,
        candidates: Vec::new(),
    };
    if entry.defect <= ZERO_DEFECT {
        report.wall_time = started.elapsed().as_secs_f64();
        return Ok((f.clone(), report));
    }
    if !(entry.shortness > 0.0) || !(entry.immersion > 0.0) {
        return Err(Error::Precondition(format!(
            "stage entry map must be a strictly short H-immersion (shortness {:e}, immersion {:e})",
            entry.shortness, entry.immersion
        )));
    }
    let grid = structure.grid_for(f, cfg.corrugation.refine);
    let defect = crate::geometry::defect_form(f, &structure.metric, &structure.frame);
    let terms = halve_and_decompose(&defect, &structure.frame, &cfg.dictionary, &grid)?;
    let budgets = StageBudgets::geometric(entry.defect, terms.len(), cfg, stage)?;
    let mut current = f.clone();
    let mut start = lambda_start;
    for (k, term) in terms.iter().enumerate() {
        let budget = budgets.step(k, terms.len())?;
        let step = corrugate(&current, term, &budget, structure, &cfg.corrugation, start)?;
        report.candidates.extend(step.transcript);
        if let Some(l) = step.lambda {
            report.frequencies.push(l);
            report.layers_added += 1;
            start = start.max(l);
        }
        current = step.map;
    }
    let out = survey(&current, Some(f), structure, cfg.corrugation.refine)?;
    report.defect_out = out.defect;
    report.c1_moved = out.c1_from_prev;
    report.c0_moved = out.c0_from_prev;
    report.shortness_margin_out = out.shortness;
    report.immersion_margin_out = out.immersion;
    report.pullback_increase = out.pullback_increase;
    report.wall_time = started.elapsed().as_secs_f64();
    if !(out.shortness > 0.0) {
        return Err(Error::Precondition(format!("stage output is not strictly short (margin {:e})", out.shortness)));
    }
    if !(out.immersion > 0.0) {
        return Err(Error::Precondition("stage output is not an H-immersion".into()));
    }
    Ok((current, report))
}

/// Result of a completed run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub map: MapRep,
    pub reports: Vec<StageReport>,
    pub initial_defect: f64,
    pub final_defect: f64,
    pub reached_target: bool,
}

/// A failed run with everything completed before the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub completed: MapRep,
    pub reports: Vec<StageReport>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} completed stages)", self.error, self.reports.len())
    }
}

/// Iterate stages until the defect is at most `eta_target` or the stage limit is hit.
pub fn run(f0: &MapRep, structure: &SubRiemannian, cfg: &RunConfig) -> std::result::Result<RunOutcome, RunFailure> {
    run_with_observer(f0, structure, cfg, |_, _| {})
}

/// As [`run`], calling `observe` after every completed stage.
pub fn run_with_observer(
    f0: &MapRep,
    structure: &SubRiemannian,
    cfg: &RunConfig,
    mut observe: impl FnMut(&MapRep, &StageReport),
) -> std::result::Result<RunOutcome, RunFailure> {
    let fail = |error, completed: &MapRep, reports: &Vec<StageReport>| RunFailure {
        error,
        completed: completed.clone(),
        reports: reports.clone(),
    };
    let mut reports: Vec<StageReport> = Vec::new();
    if let Err(e) = cfg.validate() {
        return Err(fail(e, f0, &reports));
    }
    let initial = match survey(f0, None, structure, cfg.corrugation.refine) {
        Ok(s) => s,
        Err(e) => return Err(fail(e, f0, &reports)),
    };
    let mut current = f0.clone();
    let mut defect = initial.defect;
    let mut lambda_start = cfg.lambda_start;
    let mut c0_spent = 0.0;
    for stage in 0..cfg.max_stages {
        if defect <= cfg.eta_target {
            break;
        }
        let (next, report) = match run_stage(&current, structure, cfg, stage, lambda_start) {
            Ok(v) => v,
            Err(e) => {
                return Err(fail(Error::StageFailed { stage, source: Box::new(e) }, &current, &reports))
            }
        };
        c0_spent += report.c0_moved;
        let ratio = report.ratio();
        observe(&next, &report);
        let (out_defect, max_l) = (report.defect_out, report.max_lambda());
        reports.push(report);
        current = next;
        defect = out_defect;
        lambda_start = lambda_start.max(max_l);
        if ratio > cfg.contraction_assert {
            let e = Error::Precondition(format!("stage contraction {ratio:.4} exceeds {}", cfg.contraction_assert));
            return Err(fail(Error::StageFailed { stage, source: Box::new(e) }, &current, &reports));
        }
        if c0_spent > cfg.c0_total {
            let e = Error::Precondition(format!("C0 motion {c0_spent:e} exceeds budget {}", cfg.c0_total));
            return Err(fail(Error::StageFailed { stage, source: Box::new(e) }, &current, &reports));
        }
    }
    Ok(RunOutcome {
        map: current,
        reports,
        initial_defect: initial.defect,
        final_defect: defect,
        reached_target: defect <= cfg.eta_target,
    })
}
