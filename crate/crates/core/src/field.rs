//! Velocity moments and the FFT-based periodic Poisson solve.
//!
//! `poisson_solve` is the plain periodic inversion `∂²φ = ρ − ⟨ρ⟩`. The
//! self-consistent field of the electron distribution uses the opposite
//! sign, `−∂²φ = ρ − ⟨ρ⟩` with `E = −∂ₓφ`, which is what
//! [`FieldSolver::potential`] computes and what the reduced Poisson system
//! mirrors.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{config, Result};
use crate::grid::{DistributionField, PhaseGrid, PotentialField};

/// Per-column composite trapezoidal rule over v.
pub fn velocity_moment(grid: &PhaseGrid, f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; grid.nx];
    velocity_moment_into(grid, f, &mut out);
    out
}

pub(crate) fn velocity_moment_into(grid: &PhaseGrid, f: &[f64], out: &mut [f64]) {
    let nv = grid.nv;
    for (ix, rho) in out.iter_mut().enumerate() {
        let row = &f[ix * nv..(ix + 1) * nv];
        let interior: f64 = row.iter().sum();
        *rho = grid.dv * (interior - 0.5 * (row[0] + row[nv - 1]));
    }
}

/// Moment of a distribution field.
pub fn density(grid: &PhaseGrid, f: &DistributionField) -> Vec<f64> {
    velocity_moment(grid, &f.values)
}

/// Solves `∂²φ = ρ − mean(ρ)` on the periodic box `[0, 2π)`, pinning the
/// zero Fourier mode of φ.
pub fn poisson_solve(rho: &[f64]) -> Result<PotentialField> {
    let mut solver = FieldSolver::new(rho.len())?;
    let mut phi = vec![0.0; rho.len()];
    solver.laplace_inverse(rho, &mut phi);
    Ok(PotentialField { values: phi })
}

/// Spectral `E = −∂ₓφ`.
pub fn electric_field(phi: &PotentialField) -> Result<PotentialField> {
    let mut solver = FieldSolver::new(phi.values.len())?;
    let mut e = vec![0.0; phi.values.len()];
    solver.gradient(&phi.values, &mut e);
    for v in e.iter_mut() {
        *v = -*v;
    }
    Ok(PotentialField { values: e })
}

/// Cached FFT plans and scratch for repeated spectral solves on one x grid.
/// Each instance is owned by a single caller; plans are immutable and shared
/// through `Arc`, so clones stay bit-identical.
#[derive(Clone)]
pub struct FieldSolver {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl std::fmt::Debug for FieldSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FieldSolver").field("n", &self.n).finish()
    }
}

impl FieldSolver {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(config(format!("spectral solve needs at least 2 points, got {n}")));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Ok(Self {
            n,
            forward,
            inverse,
            buf: vec![Complex64::new(0.0, 0.0); n],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Signed wave number of FFT bin `i` on a box of length 2π.
    #[inline]
    fn wave_number(&self, i: usize) -> f64 {
        if i <= self.n / 2 {
            i as f64
        } else {
            i as f64 - self.n as f64
        }
    }

    fn transform_in(&mut self, input: &[f64]) {
        for (b, &v) in self.buf.iter_mut().zip(input) {
            *b = Complex64::new(v, 0.0);
        }
        self.forward.process_with_scratch(&mut self.buf, &mut self.scratch);
    }

    fn transform_out(&mut self, out: &mut [f64]) {
        self.inverse.process_with_scratch(&mut self.buf, &mut self.scratch);
        let scale = 1.0 / self.n as f64;
        for (o, b) in out.iter_mut().zip(&self.buf) {
            *o = b.re * scale;
        }
    }

    /// `φ` with `∂²φ = ρ − mean(ρ)` and zero mean.
    pub fn laplace_inverse(&mut self, rho: &[f64], phi: &mut [f64]) {
        self.transform_in(rho);
        self.buf[0] = Complex64::new(0.0, 0.0);
        for i in 1..self.n {
            let k = self.wave_number(i);
            self.buf[i] /= -(k * k);
        }
        self.transform_out(phi);
    }

    /// Spectral second derivative `∂²u`.
    pub fn laplacian(&mut self, u: &[f64], out: &mut [f64]) {
        self.transform_in(u);
        for i in 0..self.n {
            let k = self.wave_number(i);
            self.buf[i] *= -(k * k);
        }
        self.transform_out(out);
    }

    /// Spectral first derivative `∂ₓu`; the Nyquist bin of an even grid is
    /// dropped so the result stays real.
    pub fn gradient(&mut self, u: &[f64], out: &mut [f64]) {
        self.transform_in(u);
        for i in 0..self.n {
            let k = if self.n % 2 == 0 && i == self.n / 2 {
                0.0
            } else {
                self.wave_number(i)
            };
            self.buf[i] *= Complex64::new(0.0, k);
        }
        self.transform_out(out);
    }

    /// Self-consistent potential of a density: `−∂²φ = ρ − mean(ρ)`.
    pub fn potential(&mut self, rho: &[f64], phi: &mut [f64]) {
        self.laplace_inverse(rho, phi);
        for p in phi.iter_mut() {
            *p = -*p;
        }
    }

    /// `E = −∂ₓφ`.
    pub fn field(&mut self, phi: &[f64], e: &mut [f64]) {
        self.gradient(phi, e);
        for v in e.iter_mut() {
            *v = -*v;
        }
    }
}
