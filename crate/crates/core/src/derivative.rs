//! Linear first-derivative stencils used by the reduced operators.
//!
//! In x: the fifth-order upwind/downwind pair obtained from WENO5 with its
//! nonlinear weights frozen at the optimal linear weights (periodic). In v: a
//! sixth-order central stencil with homogeneous Dirichlet ghost values. The v
//! stencil is independent of the sign of E, which is what makes the
//! field-transport term precomputable as a tensor.

use nalgebra::DMatrix;

use crate::error::{config, Result};
use crate::grid::PhaseGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
    /// Nodes beyond either end read as zero.
    ZeroGhost,
}

/// A constant-coefficient 1D first-derivative stencil on `n` uniform nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    n: usize,
    inv_h: f64,
    taps: Vec<(isize, f64)>,
    boundary: Boundary,
}

const UPWIND5: [(isize, f64); 6] = [
    (-3, -2.0 / 60.0),
    (-2, 15.0 / 60.0),
    (-1, -60.0 / 60.0),
    (0, 20.0 / 60.0),
    (1, 30.0 / 60.0),
    (2, -3.0 / 60.0),
];

const CENTRAL6: [(isize, f64); 6] = [
    (-3, -1.0 / 60.0),
    (-2, 9.0 / 60.0),
    (-1, -45.0 / 60.0),
    (1, 45.0 / 60.0),
    (2, -9.0 / 60.0),
    (3, 1.0 / 60.0),
];

impl Stencil {
    fn build(n: usize, h: f64, taps: Vec<(isize, f64)>, boundary: Boundary) -> Result<Self> {
        let reach = taps.iter().map(|(o, _)| o.unsigned_abs()).max().unwrap_or(0);
        if n < 2 * reach + 1 {
            return Err(config(format!(
                "{n} nodes cannot hold a stencil of width {}",
                2 * reach + 1
            )));
        }
        Ok(Self {
            n,
            inv_h: 1.0 / h,
            taps,
            boundary,
        })
    }

    /// Left-biased fifth-order stencil (wind from the left).
    pub fn upwind5(n: usize, h: f64, boundary: Boundary) -> Result<Self> {
        Self::build(n, h, UPWIND5.to_vec(), boundary)
    }

    /// Right-biased mirror of [`Stencil::upwind5`].
    pub fn downwind5(n: usize, h: f64, boundary: Boundary) -> Result<Self> {
        let taps = UPWIND5.iter().map(|&(o, c)| (-o, -c)).rev().collect();
        Self::build(n, h, taps, boundary)
    }

    pub fn central6(n: usize, h: f64, boundary: Boundary) -> Result<Self> {
        Self::build(n, h, CENTRAL6.to_vec(), boundary)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    #[inline]
    fn source(&self, i: usize, off: isize) -> Option<usize> {
        let j = i as isize + off;
        match self.boundary {
            Boundary::Periodic => Some(j.rem_euclid(self.n as isize) as usize),
            Boundary::ZeroGhost => (0..self.n as isize).contains(&j).then_some(j as usize),
        }
    }

    /// `out = D u` for a contiguous line.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), self.n);
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for &(off, c) in &self.taps {
                if let Some(j) = self.source(i, off) {
                    s += c * u[j];
                }
            }
            *o = s * self.inv_h;
        }
    }

    /// Dense matrix form, for oracles and small problems.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for &(off, c) in &self.taps {
                if let Some(j) = self.source(i, off) {
                    m[(i, j)] += c * self.inv_h;
                }
            }
        }
        m
    }

    /// Applies the stencil along x to every v column of an x-major field and
    /// accumulates `scale[iv] * (D u)` into `out`. Columns with zero scale are
    /// skipped.
    pub(crate) fn accumulate_along_x(&self, nv: usize, u: &[f64], scale: &[f64], out: &mut [f64]) {
        debug_assert_eq!(self.boundary, Boundary::Periodic);
        let n = self.n;
        for ix in 0..n {
            let dst = &mut out[ix * nv..(ix + 1) * nv];
            for &(off, c) in &self.taps {
                let src_ix = (ix as isize + off).rem_euclid(n as isize) as usize;
                let src = &u[src_ix * nv..(src_ix + 1) * nv];
                let w = c * self.inv_h;
                for ((d, s), a) in dst.iter_mut().zip(src).zip(scale) {
                    *d += w * a * s;
                }
            }
        }
    }
}

/// The three linear derivative operators of the reduced model.
#[derive(Debug, Clone)]
pub struct LinearDerivatives {
    pub dx_up: Stencil,
    pub dx_down: Stencil,
    pub dv_central: Stencil,
}

pub fn linear_derivative_matrices(grid: &PhaseGrid) -> Result<LinearDerivatives> {
    Ok(LinearDerivatives {
        dx_up: Stencil::upwind5(grid.nx, grid.dx, Boundary::Periodic)?,
        dx_down: Stencil::downwind5(grid.nx, grid.dx, Boundary::Periodic)?,
        dv_central: Stencil::central6(grid.nv, grid.dv, Boundary::ZeroGhost)?,
    })
}

/// x-derivative used for free streaming.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XScheme {
    /// Fifth-order stencil biased against the sign of v.
    #[default]
    Upwind,
    /// Sixth-order central stencil regardless of v (skew-adjoint).
    Central,
}

/// Linear transport operator `f ↦ −(v ∂ₓ f + E ∂ᵥ f)` assembled from the
/// linear stencils, applied matrix-free.
#[derive(Debug, Clone)]
pub struct LinearTransport {
    grid: PhaseGrid,
    ops: LinearDerivatives,
    dx_pos: Stencil,
    dx_neg: Stencil,
    /// `−v` restricted to positive velocities (upwind rows), zero elsewhere.
    neg_v_pos: Vec<f64>,
    /// `−v` restricted to negative velocities (downwind rows), zero elsewhere.
    neg_v_neg: Vec<f64>,
}

impl LinearTransport {
    pub fn new(grid: &PhaseGrid) -> Result<Self> {
        Self::with_scheme(grid, XScheme::Upwind)
    }

    pub fn with_scheme(grid: &PhaseGrid, scheme: XScheme) -> Result<Self> {
        let ops = linear_derivative_matrices(grid)?;
        let (dx_pos, dx_neg) = match scheme {
            XScheme::Upwind => (ops.dx_up.clone(), ops.dx_down.clone()),
            XScheme::Central => {
                let c = Stencil::central6(grid.nx, grid.dx, Boundary::Periodic)?;
                (c.clone(), c)
            }
        };
        let vs = grid.v_nodes();
        let neg_v_pos = vs.iter().map(|&v| if v > 0.0 { -v } else { 0.0 }).collect();
        let neg_v_neg = vs.iter().map(|&v| if v < 0.0 { -v } else { 0.0 }).collect();
        Ok(Self {
            grid: grid.clone(),
            ops,
            dx_pos,
            dx_neg,
            neg_v_pos,
            neg_v_neg,
        })
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn derivatives(&self) -> &LinearDerivatives {
        &self.ops
    }

    /// `out = −[D_x ⊗ diag(v)] u` with the x stencil chosen by the sign of v.
    pub fn free_streaming(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let nv = self.grid.nv;
        self.dx_pos.accumulate_along_x(nv, u, &self.neg_v_pos, out);
        self.dx_neg.accumulate_along_x(nv, u, &self.neg_v_neg, out);
    }

    /// `out = [I ⊗ D_v] u`, the velocity derivative of every x row.
    pub fn velocity_derivative(&self, u: &[f64], out: &mut [f64]) {
        let nv = self.grid.nv;
        for (src, dst) in u.chunks_exact(nv).zip(out.chunks_exact_mut(nv)) {
            self.ops.dv_central.apply(src, dst);
        }
    }

    /// `out = −[diag(E) ⊗ D_v] u`.
    pub fn field_transport(&self, e: &[f64], u: &[f64], out: &mut [f64]) {
        let nv = self.grid.nv;
        self.velocity_derivative(u, out);
        for (row, &ex) in out.chunks_exact_mut(nv).zip(e) {
            row.iter_mut().for_each(|r| *r *= -ex);
        }
    }

    /// Full linear right-hand side `−[D_x ⊗ diag(v)] u − [diag(E) ⊗ D_v] u`.
    pub fn apply(&self, e: &[f64], u: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; u.len()];
        self.free_streaming(u, out);
        self.field_transport(e, u, &mut tmp);
        out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
    }
}

/// `(A ⊗ B) f` for x-major `f`, computed as `vec(A F Bᵀ)` with `F` the
/// `nx × nv` reshape of `f`.
pub fn kron_apply(a: &DMatrix<f64>, b: &DMatrix<f64>, f: &[f64]) -> Vec<f64> {
    let (nx, nv) = (a.ncols(), b.ncols());
    assert_eq!(f.len(), nx * nv);
    let fm = DMatrix::from_row_slice(nx, nv, f);
    let r = a * fm * b.transpose();
    let mut out = Vec::with_capacity(a.nrows() * b.nrows());
    for i in 0..r.nrows() {
        out.extend(r.row(i).iter().copied());
    }
    out
}
