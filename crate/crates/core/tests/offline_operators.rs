mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;
use vlasov_twrom::derivative::{linear_derivative_matrices, LinearTransport, XScheme};
use vlasov_twrom::field::{velocity_moment, FieldSolver};
use vlasov_twrom::offline::{
    build_g1, build_g2, build_reduced_poisson, build_transition, build_transitions, DEFAULT_TENSOR_CAP,
};
use vlasov_twrom::pod::WindowBasis;
use vlasov_twrom::{Error, PhaseGrid};

fn grid16() -> PhaseGrid {
    PhaseGrid::new(16, 16, 1.0).unwrap()
}

fn tensor_apply(g2: &[f64], nf: usize, np: usize, phi: &DVector<f64>, f: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(nf, |i, _| {
        let mut s = 0.0;
        for j in 0..np {
            for k in 0..nf {
                s += g2[(i * np + j) * nf + k] * phi[j] * f[k];
            }
        }
        s
    })
}

#[test]
fn g1_of_a_single_cell_is_the_operator_diagonal() {
    let g = grid16();
    let t = LinearTransport::new(&g).unwrap();
    let dense = dense_free_streaming(&g);
    for idx in [g.index(3, 2), g.index(7, 12), g.index(0, 0)] {
        let mut phi_f = DMatrix::zeros(g.len(), 1);
        phi_f[(idx, 0)] = 1.0;
        let b = WindowBasis::from_factors(0, phi_f, DMatrix::zeros(16, 0), vec![1.0], vec![]).unwrap();
        let g1 = build_g1(&b, &t);
        assert!((g1[(0, 0)] - dense[(idx, idx)]).abs() < 1e-12 * dense[(idx, idx)].abs().max(1.0));
    }
}

#[test]
fn g1_matches_brute_force_projection() {
    let g = grid16();
    let mut r = rng(1);
    let t = LinearTransport::new(&g).unwrap();
    let dense = dense_free_streaming(&g);
    let b = random_basis(&g, 5, 3, &mut r);
    let g1 = build_g1(&b, &t);
    for _ in 0..10 {
        let f = random_vector(5, &mut r);
        let want = b.phi_f.transpose() * (&dense * (&b.phi_f * &f));
        assert!(rel(&(&g1 * &f), &want) < 1e-12);
    }
}

#[test]
fn g1_with_central_x_is_skew() {
    let g = grid16();
    let mut r = rng(2);
    let t = LinearTransport::with_scheme(&g, XScheme::Central).unwrap();
    let b = random_basis(&g, 6, 2, &mut r);
    let g1 = build_g1(&b, &t);
    assert!((&g1 + g1.transpose()).amax() < 1e-12 * g1.amax());
}

#[test]
fn g2_matches_brute_force_contraction() {
    let g = grid16();
    let mut r = rng(3);
    let t = LinearTransport::new(&g).unwrap();
    let b = random_basis(&g, 5, 3, &mut r);
    let g2 = build_g2(&b, &t, DEFAULT_TENSOR_CAP).unwrap();
    for _ in 0..20 {
        let f = random_vector(5, &mut r);
        let p = random_vector(3, &mut r);
        let e = &b.phi_e * &p;
        let want = b.phi_f.transpose() * (dense_field_transport(&g, e.as_slice()) * (&b.phi_f * &f));
        assert!(rel(&tensor_apply(&g2, 5, 3, &p, &f), &want) < 1e-12);
    }
}

#[test]
fn zero_field_mode_gives_zero_slice() {
    let g = grid16();
    let mut r = rng(4);
    let t = LinearTransport::new(&g).unwrap();
    let mut b = random_basis(&g, 4, 2, &mut r);
    b.phi_e.column_mut(1).fill(0.0);
    let g2 = build_g2(&b, &t, DEFAULT_TENSOR_CAP).unwrap();
    for i in 0..4 {
        for k in 0..4 {
            assert_eq!(g2[(i * 2 + 1) * 4 + k], 0.0);
        }
    }
}

#[test]
fn g2_of_uniform_modes_is_the_weighted_stencil_sum() {
    let g = PhaseGrid::new(8, 8, 1.0).unwrap();
    let t = LinearTransport::new(&g).unwrap();
    let n = g.len() as f64;
    let phi_f = DMatrix::from_element(g.len(), 1, 1.0 / n.sqrt());
    let mut b = WindowBasis::from_factors(0, phi_f, DMatrix::zeros(8, 0), vec![1.0], vec![]).unwrap();
    b.phi_phi = DMatrix::from_element(8, 1, 1.0 / 8f64.sqrt());
    b.phi_e = b.phi_phi.clone();
    let g2 = build_g2(&b, &t, DEFAULT_TENSOR_CAP).unwrap();
    let dv = linear_derivative_matrices(&g).unwrap().dv_central.to_dense();
    let e_sum = 8.0 / 8f64.sqrt();
    let want = -e_sum * dv.sum() / n;
    // the zero-ghost central stencil is skew, so the sum itself vanishes
    assert!((g2[0] - want).abs() < 1e-12 * e_sum * dv.amax());
}

#[test]
fn tensor_memory_guard() {
    let g = grid16();
    let mut r = rng(5);
    let b = random_basis(&g, 5, 3, &mut r);
    let t = LinearTransport::new(&g).unwrap();
    assert!(matches!(
        build_g2(&b, &t, 74),
        Err(Error::TensorTooLarge { entries: 75, cap: 74, .. })
    ));
}

fn fourier_basis(nx: usize, modes: &[fn(f64) -> f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(nx, modes.len());
    for (j, f) in modes.iter().enumerate() {
        for i in 0..nx {
            m[(i, j)] = f(2.0 * PI * i as f64 / nx as f64);
        }
        let norm = m.column(j).norm();
        m.column_mut(j).unscale_mut(norm);
    }
    m
}

fn with_potential_basis(g: &PhaseGrid, phi_phi: DMatrix<f64>, n_f: usize, seed: u64) -> WindowBasis {
    let mut r = rng(seed);
    let phi_f = orthonormal(random_matrix(g.len(), n_f, &mut r));
    let n = phi_phi.ncols();
    WindowBasis::from_factors(0, phi_f, phi_phi, vec![1.0; n_f], vec![1.0; n]).unwrap()
}

#[test]
fn reduced_laplacian_eigenvalues() {
    let g = grid16();
    let b = with_potential_basis(&g, fourier_basis(16, &[f64::sin]), 2, 6);
    let (l, _) = build_reduced_poisson(&b, &g).unwrap();
    assert!((l[(0, 0)] - 1.0).abs() < 1e-12);
    let b = with_potential_basis(&g, fourier_basis(16, &[|x| (3.0 * x).sin()]), 2, 6);
    let (l, _) = build_reduced_poisson(&b, &g).unwrap();
    assert!((l[(0, 0)] - 9.0).abs() < 1e-12);
}

#[test]
fn reduced_poisson_lift_solve_project() {
    let g = grid16();
    let mut r = rng(7);
    // a rotated Laplacian-invariant subspace: Galerkin solve equals projection
    let modes = fourier_basis(16, &[f64::cos, |x| (2.0 * x).sin(), |x| (3.0 * x).cos(), |x| (5.0 * x).sin()]);
    let rot = orthonormal(random_matrix(4, 4, &mut r));
    let b = with_potential_basis(&g, modes * rot, 6, 8);
    let (l, m) = build_reduced_poisson(&b, &g).unwrap();
    let mut solver = FieldSolver::new(16).unwrap();
    for _ in 0..10 {
        let f_hat = random_vector(6, &mut r);
        let phi_hat = l.clone().cholesky().unwrap().solve(&(&m * &f_hat));
        let lifted = &b.phi_phi * phi_hat;
        let f = &b.phi_f * &f_hat;
        let rho = velocity_moment(&g, f.as_slice());
        let mut phi = vec![0.0; 16];
        solver.potential(&rho, &mut phi);
        let phi = DVector::from_vec(phi);
        let projected = &b.phi_phi * (b.phi_phi.transpose() * phi);
        assert!(rel(&lifted, &projected) < 1e-10);
    }
}

#[test]
fn reduced_laplacian_is_spd_on_random_zero_mean_bases() {
    let g = grid16();
    let mut r = rng(9);
    let b = random_basis(&g, 3, 5, &mut r);
    let (l, _) = build_reduced_poisson(&b, &g).unwrap();
    assert!((&l - l.transpose()).amax() < 1e-12);
    assert!(l.symmetric_eigenvalues().min() > 0.9);
}

#[test]
fn constant_potential_mode_is_singular() {
    let g = grid16();
    let b = with_potential_basis(&g, DMatrix::from_element(16, 1, 0.25), 2, 10);
    assert!(matches!(build_reduced_poisson(&b, &g), Err(Error::SingularReducedPoisson { .. })));
}

#[test]
fn transitions() {
    let g = grid16();
    let mut r = rng(11);
    let a = random_basis(&g, 4, 2, &mut r);
    let (t, tp) = build_transition(&a, &a).unwrap();
    assert!((t - DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
    assert!((tp - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);

    // disjoint supports
    let mut p = DMatrix::zeros(g.len(), 1);
    p[(0, 0)] = 1.0;
    let mut q = DMatrix::zeros(g.len(), 1);
    q[(1, 0)] = 1.0;
    let pb = WindowBasis::from_factors(0, p, DMatrix::zeros(16, 0), vec![1.0], vec![]).unwrap();
    let qb = WindowBasis::from_factors(1, q, DMatrix::zeros(16, 0), vec![1.0], vec![]).unwrap();
    assert_eq!(build_transition(&pb, &qb).unwrap().0.amax(), 0.0);

    for seed in 0..20 {
        let mut r = rng(100 + seed);
        let bases = [random_basis(&g, 6, 2, &mut r), random_basis(&g, 4, 3, &mut r)];
        let ts = build_transitions(&bases).unwrap();
        assert_eq!(ts[0].0.shape(), (4, 6));
        let norm = ts[0].0.clone().svd(false, false).singular_values.max();
        assert!(norm <= 1.0 + 1e-12);
    }
}
