//! Phase-space grid, parameter points and the discrete fields living on them.
//!
//! Storage is x-major: cell `(ix, iv)` sits at flat index `ix * nv + iv`, so a
//! Kronecker operator `A ⊗ B` acts with `A` along x and `B` along v.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};

/// Half-width of the velocity domain in units of the stream velocity.
pub const VELOCITY_EXTENT: f64 = 3.5;

/// Smallest number of cells per direction; the widest stencil spans 7 nodes.
pub const MIN_CELLS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub nx: usize,
    pub nv: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub dx: f64,
    pub dv: f64,
}

impl PhaseGrid {
    /// Grid on `[0, 2π) × [−3.5 v0, 3.5 v0]`, periodic in x (no duplicated
    /// endpoint) and with both Dirichlet endpoints included in v.
    pub fn new(nx: usize, nv: usize, v0: f64) -> Result<Self> {
        if nx < MIN_CELLS || nv < MIN_CELLS {
            return Err(config(format!(
                "grid {nx}x{nv} is below the minimum of {MIN_CELLS} cells per direction"
            )));
        }
        if !(v0.is_finite() && v0 > 0.0) {
            return Err(config(format!("stream velocity must be positive, got {v0}")));
        }
        let x_min = 0.0;
        let x_max = 2.0 * PI;
        let v_max = VELOCITY_EXTENT * v0;
        let v_min = -v_max;
        Ok(Self {
            nx,
            nv,
            x_min,
            x_max,
            v_min,
            v_max,
            dx: (x_max - x_min) / nx as f64,
            dv: (v_max - v_min) / (nv - 1) as f64,
        })
    }

    /// Number of phase-space unknowns, `N_f = nx · nv`.
    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.nv
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ix: usize, iv: usize) -> usize {
        ix * self.nv + iv
    }

    #[inline]
    pub fn x(&self, ix: usize) -> f64 {
        self.x_min + ix as f64 * self.dx
    }

    /// Velocity node `iv`. The top node is pinned to `v_max` so the domain is
    /// exactly symmetric.
    #[inline]
    pub fn v(&self, iv: usize) -> f64 {
        if iv + 1 == self.nv {
            self.v_max
        } else {
            let half = (self.nv - 1) as f64 / 2.0;
            (iv as f64 - half) * self.dv
        }
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn v_nodes(&self) -> Vec<f64> {
        (0..self.nv).map(|i| self.v(i)).collect()
    }

    /// Phase-space cell area used for mass sums.
    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.dx * self.dv
    }

    /// Evaluates `g(x, v)` at every node in storage order.
    pub fn sample<F: FnMut(f64, f64) -> f64>(&self, mut g: F) -> Vec<f64> {
        let vs = self.v_nodes();
        let mut out = Vec::with_capacity(self.len());
        for ix in 0..self.nx {
            let x = self.x(ix);
            out.extend(vs.iter().map(|&v| g(x, v)));
        }
        out
    }

    pub(crate) fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.len() {
            return Err(Error::Dimension(format!(
                "{what} has {len} entries, grid {}x{} needs {}",
                self.nx,
                self.nv,
                self.len()
            )));
        }
        Ok(())
    }
}

/// One point `μ = (T, α, v0)` of the parameter domain. The perturbation wave
/// number is fixed at `k = 1` on a box of length `L = 2π`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    #[serde(rename = "T")]
    pub temperature: f64,
    pub alpha: f64,
    pub v0: f64,
}

impl ParamPoint {
    pub const WAVE_NUMBER: f64 = 1.0;
    pub const BOX_LENGTH: f64 = 2.0 * PI;

    pub fn new(temperature: f64, alpha: f64, v0: f64) -> Result<Self> {
        let mu = Self {
            temperature,
            alpha,
            v0,
        };
        mu.validate()?;
        Ok(mu)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(self.v0.is_finite() && self.v0 > 0.0) {
            return Err(config(format!("v0 must be positive, got {}", self.v0)));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(config(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Short tag used in file names, e.g. `T0.08_a0.0015_v1`.
    pub fn tag(&self) -> String {
        format!("T{}_a{}_v{}", self.temperature, self.alpha, self.v0)
    }
}

/// Discrete distribution function on a phase grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionField {
    pub values: Vec<f64>,
    pub time: f64,
}

impl DistributionField {
    pub fn new(grid: &PhaseGrid, values: Vec<f64>, time: f64) -> Result<Self> {
        grid.check_len(values.len(), "distribution")?;
        Ok(Self { values, time })
    }

    pub fn zeros(grid: &PhaseGrid, time: f64) -> Self {
        Self {
            values: vec![0.0; grid.len()],
            time,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Discrete mass `Σ f · dx · dv`.
    pub fn mass(&self, grid: &PhaseGrid) -> f64 {
        self.values.iter().sum::<f64>() * grid.cell_area()
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.values)
    }
}

/// A field over the x grid: either a potential φ or an electric field E.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PotentialField {
    pub values: Vec<f64>,
}

impl PotentialField {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().sum::<f64>() / self.values.len() as f64
        }
    }
}
