//! Maps from the torus into Euclidean space: a closed-form base plus an
//! ordered stack of corrugation layers, evaluated with exact differentials.

use std::sync::Arc;

use crate::corrugation::CorrugationLayer;
use crate::error::{Error, Point, Result};
use crate::expr::Expr;
use crate::linalg::MAX_N;

/// Value and differential of a map at one point. Row `i` of `jac` holds
/// `[∂_θ f_i, ∂_φ f_i]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub n: usize,
    pub value: [f64; MAX_N],
    pub jac: [[f64; 2]; MAX_N],
}

impl Jet {
    pub fn zero(n: usize) -> Jet {
        Jet { n, value: [0.0; MAX_N], jac: [[0.0; 2]; MAX_N] }
    }

    /// `df(v)` for a tangent vector `v`.
    #[inline]
    pub fn apply(&self, v: [f64; 2]) -> [f64; MAX_N] {
        let mut out = [0.0; MAX_N];
        for i in 0..self.n {
            out[i] = self.jac[i][0] * v[0] + self.jac[i][1] * v[1];
        }
        out
    }

    pub fn add(&self, o: &Jet) -> Jet {
        let mut out = *self;
        for i in 0..self.n {
            out.value[i] += o.value[i];
            out.jac[i][0] += o.jac[i][0];
            out.jac[i][1] += o.jac[i][1];
        }
        out
    }

    pub fn value_norm(&self) -> f64 {
        self.value[..self.n].iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct MapRep {
    base: Vec<Expr>,
    layers: Vec<Arc<CorrugationLayer>>,
}

impl MapRep {
    pub fn new(base: Vec<Expr>) -> Result<MapRep> {
        if base.is_empty() || base.len() > MAX_N {
            return Err(Error::DimensionMismatch { expected: MAX_N, found: base.len() });
        }
        Ok(MapRep { base, layers: Vec::new() })
    }

    pub fn target_dim(&self) -> usize {
        self.base.len()
    }

    pub fn base(&self) -> &[Expr] {
        &self.base
    }

    pub fn layers(&self) -> &[Arc<CorrugationLayer>] {
        &self.layers
    }

    /// The base map alone.
    pub fn base_map(&self) -> MapRep {
        MapRep { base: self.base.clone(), layers: Vec::new() }
    }

    /// A new map with `layer` appended.
    pub fn with_layer(&self, layer: CorrugationLayer) -> Result<MapRep> {
        if layer.target_dim() != self.target_dim() {
            return Err(Error::DimensionMismatch { expected: self.target_dim(), found: layer.target_dim() });
        }
        let mut out = self.clone();
        out.layers.push(Arc::new(layer));
        Ok(out)
    }

    pub fn from_parts(base: Vec<Expr>, layers: Vec<CorrugationLayer>) -> Result<MapRep> {
        let mut m = MapRep::new(base)?;
        for l in layers {
            m = m.with_layer(l)?;
        }
        Ok(m)
    }

    /// Multiply every component by `c` (only meaningful before corrugation).
    pub fn scaled(&self, c: f64) -> Result<MapRep> {
        if !self.layers.is_empty() {
            return Err(Error::Precondition("only a layer-free map can be rescaled".into()));
        }
        MapRep::new(self.base.iter().map(|e| e.scale(c)).collect())
    }

    /// Compose with a linear map `rows × n`: base components are recombined
    /// symbolically and each layer's frame fields are mapped linearly.
    pub fn linear_image(&self, rows: &[Vec<f64>]) -> Result<MapRep> {
        let n = self.target_dim();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: rows.first().map_or(0, Vec::len) });
        }
        let base = rows
            .iter()
            .map(|r| {
                r.iter()
                    .zip(&self.base)
                    .fold(Expr::constant(0.0), |acc, (c, e)| acc.add(&e.scale(*c)))
            })
            .collect();
        let mut out = MapRep::new(base)?;
        for l in &self.layers {
            out.layers.push(Arc::new(l.linear_image(rows)));
        }
        Ok(out)
    }

    /// The homotopy member with every layer amplitude multiplied by `t`.
    pub fn homotopy(&self, t: f64) -> MapRep {
        MapRep {
            base: self.base.clone(),
            layers: self.layers.iter().map(|l| Arc::new(l.with_amplitude_scale(t))).collect(),
        }
    }

    /// Largest phase frequency of the layers along each axis.
    pub fn max_frequency(&self) -> [f64; 2] {
        let mut f = [0.0f64; 2];
        for l in &self.layers {
            let lf = l.frequency();
            f[0] = f[0].max(lf[0]);
            f[1] = f[1].max(lf[1]);
        }
        f
    }

    pub fn max_lambda(&self) -> f64 {
        self.layers.iter().map(|l| l.lambda).fold(0.0, f64::max)
    }

    pub fn jet(&self, x: &Point) -> Jet {
        let mut jet = Jet::zero(self.target_dim());
        for (i, e) in self.base.iter().enumerate() {
            let (v, g) = e.eval_grad(x);
            jet.value[i] = v;
            jet.jac[i] = g;
        }
        for l in &self.layers {
            l.accumulate(x, &mut jet);
        }
        jet
    }

    pub fn value(&self, x: &Point) -> Vec<f64> {
        let j = self.jet(x);
        j.value[..j.n].to_vec()
    }
}
