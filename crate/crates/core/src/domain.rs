use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Point, Result};

/// A two-dimensional box with periodic identifications, sampled on a grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicDomain {
    pub periods: [f64; 2],
    pub resolution: [usize; 2],
}

impl PeriodicDomain {
    pub fn new(periods: [f64; 2], resolution: [usize; 2]) -> Result<Self> {
        if periods.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::Config(format!("periods must be positive, got {periods:?}")));
        }
        if resolution.iter().any(|&r| r < 8) {
            return Err(Error::Config(format!("grid resolution must be at least 8, got {resolution:?}")));
        }
        Ok(PeriodicDomain { periods, resolution })
    }

    /// The standard flat torus with both periods equal to 2π.
    pub fn torus(resolution: [usize; 2]) -> Result<Self> {
        PeriodicDomain::new([TAU, TAU], resolution)
    }

    pub fn is_standard(&self) -> bool {
        self.periods.iter().all(|p| (p - TAU).abs() < 1e-15)
    }

    /// The base sample grid.
    pub fn grid(&self) -> SampleGrid {
        SampleGrid { periods: self.periods, counts: self.resolution }
    }

    /// A grid with at least `refine × frequency` samples along each axis,
    /// never coarser than the base resolution.
    pub fn refined(&self, frequency: [f64; 2], refine: f64) -> SampleGrid {
        let mut counts = self.resolution;
        for a in 0..2 {
            let want = (refine * frequency[a]).ceil() as usize;
            counts[a] = counts[a].max(want);
        }
        SampleGrid { periods: self.periods, counts }
    }

    /// Reduce a point into the fundamental box `[0, period)`.
    pub fn wrap(&self, x: &Point) -> Point {
        [x[0].rem_euclid(self.periods[0]), x[1].rem_euclid(self.periods[1])]
    }
}

/// A regular tensor grid over the fundamental box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleGrid {
    pub periods: [f64; 2],
    pub counts: [usize; 2],
}

impl SampleGrid {
    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize, j: usize) -> Point {
        [
            self.periods[0] * i as f64 / self.counts[0] as f64,
            self.periods[1] * j as f64 / self.counts[1] as f64,
        ]
    }

    /// All grid points in row-major order (theta outer, phi inner).
    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.counts[0]).flat_map(move |i| (0..self.counts[1]).map(move |j| self.point(i, j)))
    }
}
