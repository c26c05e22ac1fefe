#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vlasov_twrom::derivative::linear_derivative_matrices;
use vlasov_twrom::pod::WindowBasis;
use vlasov_twrom::PhaseGrid;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

pub fn orthonormal(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// Random basis with `n_f` distribution modes and `n_phi` zero-mean
/// potential modes.
pub fn random_basis(grid: &PhaseGrid, n_f: usize, n_phi: usize, rng: &mut ChaCha8Rng) -> WindowBasis {
    let phi_f = orthonormal(random_matrix(grid.len(), n_f, rng));
    let mut p = random_matrix(grid.nx, n_phi, rng);
    for mut c in p.column_iter_mut() {
        let mean = c.mean();
        c.add_scalar_mut(-mean);
    }
    let phi_phi = orthonormal(p);
    WindowBasis::from_factors(0, phi_f, phi_phi, vec![1.0; n_f], vec![1.0; n_phi]).unwrap()
}

/// Dense `−[D_x ⊗ diag v]` with upwind selection by the sign of v.
pub fn dense_free_streaming(grid: &PhaseGrid) -> DMatrix<f64> {
    let ops = linear_derivative_matrices(grid).unwrap();
    let v = grid.v_nodes();
    let pos = DMatrix::from_diagonal(&DVector::from_iterator(grid.nv, v.iter().map(|&x| x.max(0.0))));
    let neg = DMatrix::from_diagonal(&DVector::from_iterator(grid.nv, v.iter().map(|&x| x.min(0.0))));
    -(ops.dx_up.to_dense().kronecker(&pos) + ops.dx_down.to_dense().kronecker(&neg))
}

/// Dense `−[diag E ⊗ D_v]`.
pub fn dense_field_transport(grid: &PhaseGrid, e: &[f64]) -> DMatrix<f64> {
    let ops = linear_derivative_matrices(grid).unwrap();
    -DMatrix::from_diagonal(&DVector::from_column_slice(e)).kronecker(&ops.dv_central.to_dense())
}

pub fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm()
}
