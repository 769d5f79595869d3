//! One convex-integration step: add a high-frequency planar corrugation that
//! raises the pullback metric by a single primitive term.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::decomposition::{Bump, Covector, PrimitiveTerm};
use crate::domain::SampleGrid;
use crate::error::{Error, Point, Result};
use crate::geometry::{g0_orthonormal_basis, gram, pointwise_defect, restricted_columns, SubRiemannian};
use crate::linalg::{singular_extremes, Sym, MAX_N};
use crate::map::{Jet, MapRep};
use crate::profile::{Profile, ProfileTable};
use crate::spline::SplineFields;

/// Residual, C¹ slack and C⁰ bounds for one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepBudget {
    pub delta: f64,
    pub epsilon: f64,
    pub c0_bound: f64,
}

impl StepBudget {
    pub fn new(delta: f64, epsilon: f64, c0_bound: f64) -> Result<Self> {
        if !(delta > 0.0 && epsilon > 0.0 && c0_bound > 0.0) {
            return Err(Error::Config(format!(
                "step budget must be positive, got delta={delta}, epsilon={epsilon}, c0={c0_bound}"
            )));
        }
        Ok(StepBudget { delta, epsilon, c0_bound })
    }
}

/// Numerical knobs of the corrugation step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrugationSettings {
    pub profile: Profile,
    pub lambda_max: f64,
    /// Check-grid samples per period of the highest frequency.
    pub refine: f64,
    /// Field nodes per period of the highest frequency already in the map.
    pub field_oversample: f64,
    pub field_min_nodes: usize,
    /// Minimum field nodes along an axis that carries a bump weight.
    pub weighted_min_nodes: usize,
    pub max_field_nodes: usize,
}

impl Default for CorrugationSettings {
    fn default() -> Self {
        CorrugationSettings {
            profile: Profile::default(),
            lambda_max: (1u64 << 20) as f64,
            refine: 4.0,
            field_oversample: 16.0,
            field_min_nodes: 32,
            weighted_min_nodes: 256,
            max_field_nodes: 1 << 23,
        }
    }
}

// Component layout of the layer fields.
const ALPHA: usize = 0;
const RHO: usize = 1;
const E1: usize = 2;

/// One corrugation layer `(1/λ) ρ [A(α, λψ) e1 + B(α, λψ) e2]`.
///
/// `α = w · α̃` where `w` is the exact bump weight (one when the term is
/// global), and `α̃`, `ρ = r / dψ(v)`, `e1`, `e2` are spline fields sampled
/// from the map being corrugated.
#[derive(Clone, Debug)]
pub struct CorrugationLayer {
    pub lambda: f64,
    pub covector: Covector,
    pub weight: Option<Bump>,
    pub profile: Profile,
    pub amplitude_scale: f64,
    n: usize,
    fields: Arc<SplineFields>,
    table: Arc<ProfileTable>,
}

impl CorrugationLayer {
    pub fn from_fields(
        lambda: f64,
        covector: Covector,
        weight: Option<Bump>,
        profile: Profile,
        amplitude_scale: f64,
        fields: SplineFields,
    ) -> Result<Self> {
        let comps = fields.components();
        if comps < 4 || comps % 2 != 0 {
            return Err(Error::DimensionMismatch { expected: 6, found: comps });
        }
        if !(lambda >= 1.0) || lambda.fract() != 0.0 {
            return Err(Error::Config(format!("layer frequency must be a positive integer, got {lambda}")));
        }
        Ok(CorrugationLayer {
            lambda,
            covector,
            weight,
            profile,
            amplitude_scale,
            n: (comps - 2) / 2,
            fields: Arc::new(fields),
            table: profile.table(),
        })
    }

    pub fn target_dim(&self) -> usize {
        self.n
    }

    pub fn fields(&self) -> &SplineFields {
        &self.fields
    }

    /// Phase frequency along each axis.
    pub fn frequency(&self) -> [f64; 2] {
        [self.lambda * self.covector.p.unsigned_abs() as f64, self.lambda * self.covector.q.unsigned_abs() as f64]
    }

    fn with_lambda(&self, lambda: f64) -> Self {
        CorrugationLayer { lambda, ..self.clone() }
    }

    pub fn with_amplitude_scale(&self, t: f64) -> Self {
        CorrugationLayer { amplitude_scale: self.amplitude_scale * t, ..self.clone() }
    }

    /// The layer composed with a linear map of the target.
    pub fn linear_image(&self, rows: &[Vec<f64>]) -> Self {
        let n = self.n;
        let mut coeffs = vec![self.fields.coefficients(ALPHA).to_vec(), self.fields.coefficients(RHO).to_vec()];
        for start in [E1, E1 + n] {
            for r in rows {
                let mut acc = vec![0.0; self.fields.nodes()];
                for (i, c) in r.iter().enumerate() {
                    if *c != 0.0 {
                        for (a, v) in acc.iter_mut().zip(self.fields.coefficients(start + i)) {
                            *a += c * v;
                        }
                    }
                }
                coeffs.push(acc);
            }
        }
        CorrugationLayer {
            n: rows.len(),
            fields: Arc::new(SplineFields::from_coefficients(self.fields.counts, coeffs)),
            ..self.clone()
        }
    }

    /// Value and differential of the layer alone.
    pub fn contribution(&self, x: &Point) -> Jet {
        let mut jet = Jet::zero(self.n);
        self.accumulate(x, &mut jet);
        jet
    }

    /// Add the layer's value and differential at `x` into `jet`.
    pub fn accumulate(&self, x: &Point, jet: &mut Jet) {
        let st = self.fields.stencils(x);
        let (at, dat) = self.fields.eval(ALPHA, &st);
        let (w, dw) = match &self.weight {
            Some(b) => b.eval(x),
            None => (1.0, [0.0; 2]),
        };
        let s = self.amplitude_scale;
        let alpha = s * w * at;
        let dalpha = [s * (dw[0] * at + w * dat[0]), s * (dw[1] * at + w * dat[1])];
        if alpha == 0.0 && dalpha == [0.0, 0.0] {
            return;
        }
        let (rho, drho) = self.fields.eval(RHO, &st);
        let le = self.table.eval(alpha, self.lambda * self.covector.phase(x));
        let inv = 1.0 / self.lambda;
        let dpsi = [self.covector.p as f64, self.covector.q as f64];
        for i in 0..self.n {
            let (e1, de1) = self.fields.eval(E1 + i, &st);
            let (e2, de2) = self.fields.eval(E1 + self.n + i, &st);
            let big1 = rho * e1;
            let big2 = rho * e2;
            jet.value[i] += inv * (le.a * big1 + le.b * big2);
            for a in 0..2 {
                let dbig1 = drho[a] * e1 + rho * de1[a];
                let dbig2 = drho[a] * e2 + rho * de2[a];
                jet.jac[i][a] += inv
                    * (le.a_alpha * dalpha[a] * big1 + le.a * dbig1 + le.b_alpha * dalpha[a] * big2 + le.b * dbig2)
                    + (le.a_u * big1 + le.b_u * big2) * dpsi[a];
            }
        }
    }
}

/// Pointwise corrugation geometry: the unit vector `v` (in frame
/// coordinates), `dψ(v)`, `df(v)` and the orthonormal pair.
#[derive(Clone, Copy, Debug)]
pub struct PlaneData {
    pub v_coords: [f64; 2],
    pub dpsi_v: f64,
    pub df_v: [f64; MAX_N],
    pub speed: f64,
    pub e1: [f64; MAX_N],
    pub e2: [f64; MAX_N],
}

const GENERIC: [f64; MAX_N] = [0.314_159, 0.592_653, 0.535_897, 0.979_323, 0.238_462, 0.626_433];
const FALLBACK: [f64; MAX_N] = [0.707_107, -0.211_325, 0.401_993, -0.553_901, 0.118_034, 0.302_776];

fn dot(a: &[f64; MAX_N], b: &[f64; MAX_N], n: usize) -> f64 {
    (0..n).map(|i| a[i] * b[i]).sum()
}

fn unit_complement(e1: &[f64; MAX_N], t: Option<&[f64; MAX_N]>, n: usize, x: &Point) -> Result<[f64; MAX_N]> {
    let k_used = 1 + usize::from(t.is_some());
    if n < k_used + 1 {
        return Err(Error::DegenerateFrame { point: *x });
    }
    let mut out = [0.0; MAX_N];
    if n == 2 {
        out[0] = -e1[1];
        out[1] = e1[0];
        return Ok(out);
    }
    if n == 3 {
        if let Some(t) = t {
            out = [
                e1[1] * t[2] - e1[2] * t[1],
                e1[2] * t[0] - e1[0] * t[2],
                e1[0] * t[1] - e1[1] * t[0],
                0.0,
                0.0,
                0.0,
            ];
            let nn = dot(&out, &out, n).sqrt();
            if nn > 1e-6 {
                for v in out.iter_mut() {
                    *v /= nn;
                }
                return Ok(out);
            }
            return Err(Error::DegenerateFrame { point: *x });
        }
    }
    for cand in [GENERIC, FALLBACK] {
        let mut g = cand;
        for basis in [Some(e1), t].into_iter().flatten() {
            let d = dot(&g, basis, n);
            for i in 0..n {
                g[i] -= d * basis[i];
            }
        }
        let nn = dot(&g, &g, n).sqrt();
        if nn > 1e-6 {
            for i in 0..n {
                out[i] = g[i] / nn;
            }
            return Ok(out);
        }
    }
    Err(Error::DegenerateFrame { point: *x })
}

/// Compute the corrugation plane at `x` from the jet of the current map.
pub fn plane_data(jet: &Jet, structure: &SubRiemannian, covector: Covector, x: &Point) -> Result<Option<PlaneData>> {
    let frame = &structure.frame;
    let k = frame.rank();
    let n = jet.n;
    let v = frame.eval(x);
    let cols = restricted_columns(jet, &v, k);
    let p = gram(&cols, n, k);
    let a = [covector.apply(v[0]), if k == 2 { covector.apply(v[1]) } else { 0.0 }];
    if a[0] == 0.0 && a[1] == 0.0 {
        return Ok(None);
    }
    if !(p.eigenvalues()[0] > 0.0) {
        return Err(Error::Precondition(format!("map is not an H-immersion at ({:.6}, {:.6})", x[0], x[1])));
    }
    let mut c = p.solve(a);
    let g = structure.metric.eval(x);
    let gn = g.quad(c).sqrt();
    c = [c[0] / gn, c[1] / gn];
    let dpsi_v = a[0] * c[0] + a[1] * c[1];
    let mut df_v = [0.0; MAX_N];
    for i in 0..n {
        df_v[i] = c[0] * cols[0][i] + c[1] * cols[1][i];
    }
    let speed = dot(&df_v, &df_v, n).sqrt();
    let mut e1 = [0.0; MAX_N];
    for i in 0..n {
        e1[i] = df_v[i] / speed;
    }
    let tangent = if k == 2 {
        // H ∩ ker dψ is spanned by (a2, -a1) in frame coordinates.
        let mut t = [0.0; MAX_N];
        for i in 0..n {
            t[i] = a[1] * cols[0][i] - a[0] * cols[1][i];
        }
        let d = dot(&t, &e1, n);
        for i in 0..n {
            t[i] -= d * e1[i];
        }
        let tn = dot(&t, &t, n).sqrt();
        for v in t.iter_mut() {
            *v /= tn;
        }
        Some(t)
    } else {
        None
    };
    let e2 = unit_complement(&e1, tangent.as_ref(), n, x)?;
    Ok(Some(PlaneData { v_coords: c, dpsi_v, df_v, speed, e1, e2 }))
}

/// The orthonormal pair `(e1, e2)` of the corrugation plane at `x`.
pub fn orthonormal_pair(
    f: &MapRep,
    structure: &SubRiemannian,
    term: &PrimitiveTerm,
    x: &Point,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let jet = f.jet(x);
    let n = jet.n;
    let pd = plane_data(&jet, structure, term.covector, x)?
        .ok_or_else(|| Error::Precondition("dψ vanishes on H at this point".into()))?;
    Ok((pd.e1[..n].to_vec(), pd.e2[..n].to_vec()))
}

/// Point of the corrugation loop at parameter `s` (used by checks).
pub fn loop_point(profile: &Profile, r: f64, alpha: f64, e1: &[f64], e2: &[f64], s: f64) -> Vec<f64> {
    let ang = alpha * profile.h(s);
    e1.iter().zip(e2).map(|(a, b)| r * (ang.cos() * a + ang.sin() * b)).collect()
}

fn node_counts(f: &MapRep, term: &PrimitiveTerm, settings: &CorrugationSettings) -> [usize; 2] {
    let freq = f.max_frequency();
    let mut counts = [0usize; 2];
    for a in 0..2 {
        let mut want = settings.field_min_nodes.max((settings.field_oversample * freq[a]).ceil() as usize);
        if let Some(b) = &term.weight {
            if b.0.iter().any(|w| w.axis == a) {
                want = want.max(settings.weighted_min_nodes);
            }
        }
        counts[a] = want.next_power_of_two();
    }
    counts
}

/// Sample the layer fields for `term` on the node grid. Returns `None` when
/// the term vanishes at every node.
pub fn build_fields(
    f: &MapRep,
    term: &PrimitiveTerm,
    structure: &SubRiemannian,
    settings: &CorrugationSettings,
) -> Result<Option<SplineFields>> {
    let counts = node_counts(f, term, settings);
    let nodes = counts[0] * counts[1];
    if nodes > settings.max_field_nodes {
        return Err(Error::ResolutionCap { nodes, cap: settings.max_field_nodes });
    }
    let n = f.target_dim();
    let grid = SampleGrid { periods: structure.domain.periods, counts };
    let table = settings.profile.table();
    let m2 = table.moments[2];
    let mut samples = vec![vec![0.0; nodes]; 2 + 2 * n];
    let mut any = false;
    for (idx, x) in grid.points().enumerate() {
        let jet = f.jet(&x);
        let Some(pd) = plane_data(&jet, structure, term.covector, &x)? else {
            continue;
        };
        let c = term.coefficient(&x);
        let w = term.weight.as_ref().map_or(1.0, |b| b.eval(&x).0);
        let phi_sq = w * w * c;
        let s0 = pd.speed;
        if phi_sq < 0.0 && phi_sq * pd.dpsi_v * pd.dpsi_v < -1e-12 * s0 * s0 {
            return Err(Error::NotInCone { point: x, coefficients: vec![phi_sq] });
        }
        let r = (s0 * s0 + phi_sq.max(0.0) * pd.dpsi_v * pd.dpsi_v).sqrt();
        let alpha_t = if c <= 1e-14 {
            0.0
        } else if w > 1e-4 {
            any = true;
            settings.profile.solve_amplitude(r, s0)? / w
        } else {
            // Small-weight limit of α / w from C(α) ≈ 1 - m₂ α² / 2.
            any = any || w > 0.0;
            c.sqrt() * pd.dpsi_v / (s0 * m2.sqrt())
        };
        samples[ALPHA][idx] = alpha_t;
        samples[RHO][idx] = r / pd.dpsi_v;
        for i in 0..n {
            samples[E1 + i][idx] = pd.e1[i];
            samples[E1 + n + i][idx] = pd.e2[i];
        }
    }
    if !any {
        return Ok(None);
    }
    Ok(Some(SplineFields::from_samples(counts, samples)))
}

/// Measurements of one candidate frequency on its check grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateStats {
    pub lambda: f64,
    pub grid: [usize; 2],
    /// `n(g - f̃*h)` with `g = f*h + term`.
    pub residual: f64,
    /// `n(g - f*h)`, the size of the term itself.
    pub term_defect: f64,
    pub margin: f64,
    pub distance: f64,
    pub distance_bound: f64,
    pub c0: f64,
    /// Sup of `|df̃(w) - df(w)|` over g₀-unit `w` in `ker dψ`.
    pub tau_derivative: f64,
    pub passed: bool,
}

/// Evaluate a candidate layer against the step budget.
pub fn measure_candidate(
    f: &MapRep,
    layer: &CorrugationLayer,
    term: &PrimitiveTerm,
    structure: &SubRiemannian,
    budget: &StepBudget,
    grid: &SampleGrid,
) -> Result<CandidateStats> {
    let frame = &structure.frame;
    let k = frame.rank();
    let n = f.target_dim();
    let (mut residual, mut term_defect, mut margin, mut distance, mut c0, mut tau) =
        (0.0f64, 0.0f64, f64::INFINITY, 0.0f64, 0.0f64, 0.0f64);
    for x in grid.points() {
        let old = f.jet(&x);
        let inc = layer.contribution(&x);
        let new = old.add(&inc);
        let v = frame.eval(&x);
        let g = structure.metric.eval(&x);
        let p_old = gram(&restricted_columns(&old, &v, k), n, k);
        let cols_new = restricted_columns(&new, &v, k);
        let p_new = gram(&cols_new, n, k);
        let term_form = term.form(frame, &x);
        let target = p_old.add(&term_form);
        residual = residual.max(pointwise_defect(&target.sub(&p_new), &g, &x)?);
        term_defect = term_defect.max(pointwise_defect(&term_form, &g, &x)?);
        margin = margin.min(singular_extremes(&cols_new, n, k).0);
        let w = g0_orthonormal_basis(&v, &g, k, &x)?;
        let mut cols = [[0.0; MAX_N]; 2];
        for c in 0..2 {
            cols[c] = inc.apply(w[c]);
        }
        distance = distance.max(singular_extremes(&cols, n, 2).1);
        c0 = c0.max(inc.value_norm());
        let b = [term.covector.apply(w[0]), term.covector.apply(w[1])];
        let bn = b[0].hypot(b[1]);
        if bn > 0.0 {
            let t = [(b[1] * w[0][0] - b[0] * w[1][0]) / bn, (b[1] * w[0][1] - b[0] * w[1][1]) / bn];
            let d = inc.apply(t);
            tau = tau.max(dot(&d, &d, n).sqrt());
        }
    }
    let distance_bound = term_defect.sqrt() + budget.epsilon;
    let passed = margin > 0.0 && residual < budget.delta && distance <= distance_bound && c0 <= budget.c0_bound;
    Ok(CandidateStats {
        lambda: layer.lambda,
        grid: grid.counts,
        residual,
        term_defect,
        margin,
        distance,
        distance_bound,
        c0,
        tau_derivative: tau,
        passed,
    })
}

/// Check grid for a map that will carry `layer`.
pub fn check_grid(f: &MapRep, layer: &CorrugationLayer, structure: &SubRiemannian, refine: f64) -> SampleGrid {
    let a = f.max_frequency();
    let b = layer.frequency();
    structure.domain.refined([a[0].max(b[0]), a[1].max(b[1])], refine)
}

/// Result of a corrugation step.
#[derive(Clone, Debug)]
pub struct Corrugated {
    pub map: MapRep,
    /// Chosen frequency, `None` when the term vanished and no layer was added.
    pub lambda: Option<f64>,
    pub transcript: Vec<CandidateStats>,
}

/// Try `λ_start · 2^i` in order and return the first frequency whose layer
/// meets the budget.
pub fn choose_frequency(
    f: &MapRep,
    term: &PrimitiveTerm,
    budget: &StepBudget,
    structure: &SubRiemannian,
    settings: &CorrugationSettings,
    lambda_start: f64,
    fields: SplineFields,
) -> Result<(CorrugationLayer, Vec<CandidateStats>)> {
    if !(lambda_start >= 1.0) || lambda_start.fract() != 0.0 {
        return Err(Error::Config(format!("lambda_start must be a positive integer, got {lambda_start}")));
    }
    let proto = CorrugationLayer::from_fields(lambda_start, term.covector, term.weight.clone(), settings.profile, 1.0, fields)?;
    let mut transcript = Vec::new();
    let mut lambda = lambda_start;
    while lambda <= settings.lambda_max {
        let layer = proto.with_lambda(lambda);
        let grid = check_grid(f, &layer, structure, settings.refine);
        let stats = measure_candidate(f, &layer, term, structure, budget, &grid)?;
        transcript.push(stats);
        if stats.passed {
            return Ok((layer, transcript));
        }
        lambda *= 2.0;
    }
    let diagnosis = transcript.last().map_or_else(
        || "no candidate tried".to_string(),
        |s| {
            format!(
                "last lambda {}: residual {:.3e} vs delta {:.3e}, distance {:.4} vs bound {:.4}, margin {:.3e}, c0 {:.3e} vs {:.3e}",
                s.lambda, s.residual, budget.delta, s.distance, s.distance_bound, s.margin, s.c0, budget.c0_bound
            )
        },
    );
    Err(Error::FrequencyExhausted { lambda_max: settings.lambda_max, diagnosis })
}

/// Corrugate `f` by one primitive term.
pub fn corrugate(
    f: &MapRep,
    term: &PrimitiveTerm,
    budget: &StepBudget,
    structure: &SubRiemannian,
    settings: &CorrugationSettings,
    lambda_start: f64,
) -> Result<Corrugated> {
    if !structure.domain.is_standard() {
        return Err(Error::Precondition("corrugation phases need 2π periods".into()));
    }
    let Some(fields) = build_fields(f, term, structure, settings)? else {
        return Ok(Corrugated { map: f.clone(), lambda: None, transcript: Vec::new() });
    };
    let (layer, transcript) = choose_frequency(f, term, budget, structure, settings, lambda_start, fields)?;
    let lambda = layer.lambda;
    Ok(Corrugated { map: f.with_layer(layer)?, lambda: Some(lambda), transcript })
}

/// The constant-metric bilinear form of a single term, exposed for checks.
pub fn term_form_at(term: &PrimitiveTerm, structure: &SubRiemannian, x: &Point) -> Sym {
    term.form(&structure.frame, x)
}
