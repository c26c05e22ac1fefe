mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use std::sync::OnceLock;
use vlasov_twrom::container::write_fom_trajectory;
use vlasov_twrom::field::FieldSolver;
use vlasov_twrom::fom::{linear_reference_run, FomConfig};
use vlasov_twrom::study::relative_error;
use vlasov_twrom::offline::{
    model_digest, model_from_bases, train_from_containers, train_streaming, BasisStore, OfflineConfig, RomModel,
    TrainingOutcome, DEFAULT_TENSOR_CAP,
};
use vlasov_twrom::online::{reconstruct, reconstruct_state, rom_init, rom_rhs, rom_run, RomOptions, RomState};
use vlasov_twrom::pod::{TruncationRule, WindowBasis};
use vlasov_twrom::snapshots::partition_uniform;
use vlasov_twrom::{initial_condition, Error, ParamPoint, PhaseGrid};

fn corners() -> Vec<ParamPoint> {
    [(0.08, 0.05), (0.08, 0.1), (0.1, 0.05), (0.1, 0.1)]
        .iter()
        .map(|&(t, a)| ParamPoint::new(t, a, 1.0).unwrap())
        .collect()
}

fn small_config() -> (FomConfig, OfflineConfig) {
    let mut fom = FomConfig::new(PhaseGrid::new(32, 32, 1.0).unwrap());
    fom.t_final = 0.2;
    let build = OfflineConfig {
        n_windows: 4,
        rule_f: TruncationRule::EnergyFraction { energy: 0.999999 },
        ..OfflineConfig::default()
    };
    (fom, build)
}

fn trained() -> &'static TrainingOutcome {
    static CELL: OnceLock<TrainingOutcome> = OnceLock::new();
    CELL.get_or_init(|| {
        let (fom, build) = small_config();
        train_streaming(&fom, &corners(), &build, BasisStore::Memory).unwrap()
    })
}

fn model() -> &'static RomModel {
    &trained().model
}

fn state(model: &RomModel, m: usize, f_hat: DVector<f64>) -> RomState {
    RomState {
        window_index: m,
        phi_hat: DVector::zeros(model.windows[m].ops.n_phi),
        f_hat,
        t: 0.0,
    }
}

#[test]
fn zero_state_has_zero_rhs() {
    let m = model();
    let ops = &m.windows[0].ops;
    assert!(ops.n_phi > 0);
    let rhs = rom_rhs(&state(m, 0, DVector::zeros(ops.n_f)), ops).unwrap();
    assert_eq!(rhs.amax(), 0.0);
}

#[test]
fn without_potential_modes_rhs_is_free_streaming() {
    let g = PhaseGrid::new(16, 16, 1.0).unwrap();
    let mut r = rng(1);
    let b = random_basis(&g, 4, 0, &mut r);
    let model = model_from_bases(&g, 1.0, 0.0025, partition_uniform(0.1, 1).unwrap(), &[b], DEFAULT_TENSOR_CAP).unwrap();
    let ops = &model.windows[0].ops;
    let f = random_vector(4, &mut r);
    let rhs = rom_rhs(&state(&model, 0, f.clone()), ops).unwrap();
    assert!(rel(&rhs, &(&ops.g1 * f)) < 1e-15);
}

#[test]
fn rhs_matches_lift_evaluate_project() {
    let g = PhaseGrid::new(16, 16, 1.0).unwrap();
    let mut r = rng(2);
    let b = random_basis(&g, 5, 3, &mut r);
    let model =
        model_from_bases(&g, 1.0, 0.0025, partition_uniform(0.1, 1).unwrap(), &[b.clone()], DEFAULT_TENSOR_CAP).unwrap();
    let ops = &model.windows[0].ops;
    let free = dense_free_streaming(&g);
    for _ in 0..20 {
        let f = random_vector(5, &mut r);
        let phi_hat = ops.l_hat.clone().lu().solve(&(&ops.m_hat * &f)).unwrap();
        let e = &b.phi_e * phi_hat;
        let op = &free + dense_field_transport(&g, e.as_slice());
        let want = b.phi_f.transpose() * (op * (&b.phi_f * &f));
        let got = rom_rhs(&state(&model, 0, f), ops).unwrap();
        assert!(rel(&got, &want) < 1e-12);
    }
}

#[test]
fn reduced_potential_is_consistent_with_full_laplacian() {
    let m = model();
    let w = &m.windows[1];
    let f = random_vector(w.ops.n_f, &mut rng(3));
    let phi_hat = w.ops.l_hat.clone().cholesky().unwrap().solve(&(&w.ops.m_hat * &f));
    let lifted = &w.phi_phi * &phi_hat;
    let mut lap = vec![0.0; m.grid.nx];
    FieldSolver::new(m.grid.nx).unwrap().laplacian(lifted.as_slice(), &mut lap);
    let back = -(w.phi_phi.transpose() * DVector::from_vec(lap));
    assert!(rel(&back, &(&w.ops.m_hat * f)) < 1e-10);
}

#[test]
fn init_at_a_training_corner_is_within_the_truncation_error() {
    let m = model();
    for mu in corners() {
        let s = rom_init(m, &mu, &m.grid).unwrap();
        let lifted = reconstruct_state(&s, m).unwrap();
        let f0 = initial_condition(&m.grid, &mu);
        let resid: f64 = lifted.values.iter().zip(&f0.values).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let w = &m.windows[0];
        let tail: f64 = w.sv_f[w.ops.n_f..].iter().map(|s| s * s).sum::<f64>().sqrt();
        assert!(resid <= tail * (1.0 + 1e-8) + 1e-12, "{resid} > {tail}");
    }
}

fn ic_model(g: &PhaseGrid, first: Option<&[f64]>, seed: u64) -> RomModel {
    let mut r = rng(seed);
    let mut raw = random_matrix(g.len(), 3, &mut r);
    let f0 = first.map(|f| DVector::from_column_slice(f));
    if let Some(f0) = &f0 {
        raw.set_column(0, f0);
    }
    let mut q = orthonormal(raw);
    if let Some(f0) = &f0 {
        if q.column(0).dot(f0) < 0.0 {
            q.column_mut(0).neg_mut();
        }
    }
    let b = WindowBasis::from_factors(0, q, DMatrix::zeros(g.nx, 0), vec![1.0; 3], vec![]).unwrap();
    model_from_bases(g, 1.0, 0.0025, partition_uniform(0.1, 1).unwrap(), &[b], DEFAULT_TENSOR_CAP).unwrap()
}

#[test]
fn init_with_the_exact_initial_condition_in_the_basis() {
    let g = PhaseGrid::new(16, 16, 1.0).unwrap();
    let mu = ParamPoint::new(0.09, 0.01, 1.0).unwrap();
    let f0 = initial_condition(&g, &mu).values;
    let norm = f0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let s = rom_init(&ic_model(&g, Some(&f0), 4), &mu, &g).unwrap();
    assert!((s.f_hat[0] - norm).abs() < 1e-12 * norm);
    assert!(s.f_hat[1].abs() < 1e-12 * norm && s.f_hat[2].abs() < 1e-12 * norm);
}

#[test]
fn init_orthogonal_to_the_initial_condition_is_zero() {
    let g = PhaseGrid::new(16, 16, 1.0).unwrap();
    let mu = ParamPoint::new(0.09, 0.01, 1.0).unwrap();
    let f0 = initial_condition(&g, &mu).values;
    let model = ic_model(&g, Some(&f0), 5);
    // drop the first mode: what remains is orthogonal to f0
    let mut w = model.windows[0].phi_f().unwrap().into_owned();
    w = w.remove_column(0);
    let b = WindowBasis::from_factors(0, w, DMatrix::zeros(16, 0), vec![1.0; 2], vec![]).unwrap();
    let model = model_from_bases(&g, 1.0, 0.0025, partition_uniform(0.1, 1).unwrap(), &[b], DEFAULT_TENSOR_CAP).unwrap();
    let s = rom_init(&model, &mu, &g).unwrap();
    assert!(s.f_hat.amax() < 1e-12 * f0.iter().fold(0.0_f64, |m, v| m.max(v.abs())) * 16.0);
}

#[test]
fn reconstruction_identities() {
    let m = model();
    let mu = corners()[1];
    let traj = rom_run(m, &mu, &RomOptions::default()).unwrap();
    let phi = m.windows[0].phi_f().unwrap();
    let f0 = DVector::from_vec(initial_condition(&m.grid, &mu).values);
    let projected = phi.as_ref() * (phi.transpose() * f0);
    let at0 = reconstruct(&traj, m, &[0.0]).unwrap();
    assert!(rel(&DVector::from_vec(at0[0].values.clone()), &projected) < 1e-13);

    let n = m.windows[2].ops.n_f;
    let mut e = DVector::zeros(n);
    e[n - 1] = 1.0;
    let f = reconstruct_state(&state(m, 2, e), m).unwrap();
    let col = m.windows[2].phi_f().unwrap().column(n - 1).into_owned();
    assert_eq!(f.values, col.as_slice());

    assert!(matches!(reconstruct(&traj, m, &[0.3]), Err(Error::TimeOutOfRange(_))));
}

#[test]
fn run_covers_all_windows_and_logs_handoffs() {
    let m = model();
    let opts = RomOptions {
        lift_handoffs: true,
        ..RomOptions::default()
    };
    let traj = rom_run(m, &corners()[2], &opts).unwrap();
    assert_eq!(traj.len(), 81);
    assert!(traj.times.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(traj.handoffs.len(), 3);
    for (j, h) in traj.handoffs.iter().enumerate() {
        assert!((h.time - 0.05 * (j + 1) as f64).abs() < 1e-15);
        let gap = h.lifted_gap.unwrap();
        assert!(gap <= h.projection_residual + 1e-9 * h.norm_before);
        assert!((gap - h.projection_residual).abs() <= 1e-6 * h.norm_before);
    }
    assert_eq!(traj.windows[20], 1);
    assert_eq!(traj.windows[80], 3);
    let stats = traj.stats;
    assert_eq!(stats.full_order_ops, 0);
    assert!(stats.max_vector_len < m.grid.len());
    assert_eq!(stats.steps, 80);
    assert_eq!(stats.rhs_evals, 320);
}

#[test]
fn rom_is_no_further_from_training_runs_than_its_linear_stencil() {
    // the reduced operators discretize x-advection with the linear upwind
    // stencil, so the full linear-stencil run bounds the achievable accuracy
    let t = trained();
    let (fom, _) = small_config();
    for (mu, run) in corners().iter().zip(&t.fom) {
        let traj = rom_run(&t.model, mu, &RomOptions::default()).unwrap();
        let f = reconstruct(&traj, &t.model, &[0.2]).unwrap();
        let lin = linear_reference_run(&fom.grid, mu, fom.dt, 80, false).unwrap();
        let err = relative_error(&run.final_state.values, &f[0].values).unwrap();
        let gap = relative_error(&run.final_state.values, &lin.final_state).unwrap();
        assert!(err <= gap && err < 0.05, "{err} vs {gap}");
    }
}

#[test]
fn runs_are_deterministic() {
    let m = model();
    let a = rom_run(m, &corners()[3], &RomOptions::default()).unwrap();
    let b = rom_run(m, &corners()[3], &RomOptions::default()).unwrap();
    assert_eq!(a.f_hat, b.f_hat);
    assert_eq!(a.max_e_history, b.max_e_history);
}

#[test]
fn frozen_field_option_converges_at_first_order() {
    let m = model();
    let diff = |dt: f64| {
        let run = |per_stage| {
            let opts = RomOptions {
                dt,
                field_per_stage: per_stage,
                ..RomOptions::default()
            };
            rom_run(m, &corners()[0], &opts).unwrap().f_hat.last().unwrap().clone()
        };
        rel(&run(true), &run(false))
    };
    let (coarse, fine) = (diff(0.0025), diff(0.00125));
    let order = (coarse / fine).log2();
    assert!((order - 1.0).abs() < 0.1, "order {order}");
}

#[test]
fn rejects_bad_inputs() {
    let m = model();
    let bad_dt = RomOptions {
        dt: 0.003,
        ..RomOptions::default()
    };
    assert!(matches!(rom_run(m, &corners()[0], &bad_dt), Err(Error::Config(_))));
    let other = PhaseGrid::new(16, 32, 1.0).unwrap();
    assert!(matches!(rom_init(m, &corners()[0], &other), Err(Error::Dimension(_))));
    let f = DVector::zeros(m.windows[0].ops.n_f + 1);
    assert!(rom_rhs(&state(m, 0, f), &m.windows[0].ops).is_err());
}

#[test]
fn model_round_trips_through_disk_and_builds_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (fom, build) = small_config();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let disk = train_streaming(&fom, &corners(), &build, BasisStore::Directory(a.clone())).unwrap();
    train_streaming(&fom, &corners(), &build, BasisStore::Directory(b.clone())).unwrap();
    assert_eq!(model_digest(&a).unwrap(), model_digest(&b).unwrap());

    let loaded = RomModel::load(&a).unwrap();
    let mem = model();
    for (x, y) in loaded.windows.iter().zip(&mem.windows) {
        assert_eq!(x.ops, y.ops);
        assert_eq!(x.phi_f().unwrap().as_ref(), y.phi_f().unwrap().as_ref());
    }
    let mu = corners()[0];
    let r1 = rom_run(&loaded, &mu, &RomOptions::default()).unwrap();
    let r2 = rom_run(mem, &mu, &RomOptions::default()).unwrap();
    assert_eq!(r1.f_hat, r2.f_hat);
    assert_eq!(disk.model.n_windows(), 4);

    // a saved in-memory model loads back identically
    let c = dir.path().join("c");
    mem.save(&c).unwrap();
    assert_eq!(model_digest(&a).unwrap(), model_digest(&c).unwrap());

    // training from trajectory files gives the same operators
    let manifests: Vec<_> = corners()
        .iter()
        .enumerate()
        .map(|(i, mu)| write_fom_trajectory(&fom, *mu, &dir.path().join(format!("run{i}.vrom"))).unwrap())
        .collect();
    let (from_files, _) = train_from_containers(&manifests, &build, BasisStore::Memory).unwrap();
    for (x, y) in from_files.windows.iter().zip(&mem.windows) {
        assert_eq!(x.ops, y.ops);
    }
}

#[test]
fn tampered_model_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    model().save(dir.path()).unwrap();
    let victim = dir.path().join("window_001_ops.vrom");
    let mut bytes = std::fs::read(&victim).unwrap();
    let n = bytes.len();
    bytes[n - 1] ^= 1;
    std::fs::write(&victim, bytes).unwrap();
    assert!(matches!(RomModel::load(dir.path()), Err(Error::Checksum(_))));
}
