//! Online phase: RK4 in reduced coordinates across all time windows.
//!
//! Inside the time loop only reduced arrays are touched (lengths n_f, n_φ,
//! and nx for the field maximum). The one full-order projection happens in
//! [`rom_init`]; lifting happens only in [`reconstruct`].

use web_time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::fom::{initial_condition, DEFAULT_DT};
use crate::grid::{DistributionField, ParamPoint, PhaseGrid};
use crate::linalg::gemm_tn;
use crate::offline::{RomModel, WindowOperators};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RomOptions {
    pub dt: f64,
    /// Re-solve φ̂ at every RK stage (otherwise once per step).
    pub field_per_stage: bool,
    /// Verify every handoff by lifting to full order (slow; debugging only).
    pub lift_handoffs: bool,
}

impl Default for RomOptions {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            field_per_stage: true,
            lift_handoffs: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RomState {
    pub window_index: usize,
    pub f_hat: DVector<f64>,
    pub phi_hat: DVector<f64>,
    pub t: f64,
}

/// Counters proving the loop stays in reduced dimensions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LoopStats {
    pub steps: u64,
    pub rhs_evals: u64,
    pub flops: u64,
    /// Longest vector any loop operation read or wrote.
    pub max_vector_len: usize,
    /// Operations whose operand length reached the full-order size N_f.
    pub full_order_ops: u64,
}

impl LoopStats {
    #[inline]
    fn touch(&mut self, len: usize, flops: usize, full: usize) {
        self.max_vector_len = self.max_vector_len.max(len);
        self.flops += flops as u64;
        if len >= full {
            self.full_order_ops += 1;
        }
    }
}

/// Continuity record of one window boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Handoff {
    pub time: f64,
    pub from: usize,
    pub to: usize,
    pub norm_before: f64,
    pub norm_after: f64,
    /// `‖Φ^m f̂ − P_{m+1} Φ^m f̂‖`, from reduced norms alone.
    pub projection_residual: f64,
    /// `‖Φ^{m+1} T f̂ − Φ^m f̂‖` by explicit lifting, when requested.
    pub lifted_gap: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct RomTrajectory {
    pub times: Vec<f64>,
    pub windows: Vec<usize>,
    pub f_hat: Vec<DVector<f64>>,
    pub phi_hat: Vec<DVector<f64>>,
    pub max_e_history: Vec<(f64, f64)>,
    pub handoffs: Vec<Handoff>,
    pub stats: LoopStats,
    /// Wall clock of the initial projection.
    pub init_seconds: f64,
    /// Wall clock of the time loop.
    pub loop_seconds: f64,
}

impl RomTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn online_seconds(&self) -> f64 {
        self.init_seconds + self.loop_seconds
    }

    fn index_of(&self, t: f64, tol: f64) -> Result<usize> {
        let i = self.times.partition_point(|&s| s < t - tol);
        if i < self.times.len() && (self.times[i] - t).abs() <= tol {
            Ok(i)
        } else {
            Err(Error::TimeOutOfRange(t))
        }
    }
}

/// Factorized reduced Poisson system of one window.
struct PoissonSolve {
    chol: Option<Cholesky<f64, Dyn>>,
}

impl PoissonSolve {
    fn new(ops: &WindowOperators) -> Result<Self> {
        if ops.n_phi == 0 {
            return Ok(Self { chol: None });
        }
        let chol = Cholesky::new(ops.l_hat.clone()).ok_or(Error::SingularReducedPoisson {
            window: ops.window_index,
        })?;
        Ok(Self { chol: Some(chol) })
    }

    fn solve(&self, ops: &WindowOperators, f_hat: &DVector<f64>, out: &mut DVector<f64>, stats: &mut LoopStats, full: usize) {
        let (nf, np) = (ops.n_f, ops.n_phi);
        if np == 0 {
            return;
        }
        out.gemv(1.0, &ops.m_hat, f_hat, 0.0);
        if let Some(c) = &self.chol {
            c.solve_mut(out);
        }
        stats.touch(nf.max(np), 2 * nf * np + 2 * np * np, full);
    }
}

/// Projects the initial condition of `mu` onto the first window's basis.
pub fn rom_init(model: &RomModel, mu: &ParamPoint, grid: &PhaseGrid) -> Result<RomState> {
    if grid != &model.grid {
        return Err(Error::Dimension("grid differs from the model's training grid".into()));
    }
    mu.validate()?;
    let first = model.windows.first().ok_or_else(|| Error::Model("model has no windows".into()))?;
    let f0 = initial_condition(grid, mu);
    let phi = first.phi_f()?;
    let f_hat = gemm_tn(&phi, &DMatrix::from_column_slice(f0.values.len(), 1, &f0.values)).column(0).into_owned();
    let mut phi_hat = DVector::zeros(first.ops.n_phi);
    let mut stats = LoopStats::default();
    PoissonSolve::new(&first.ops)?.solve(&first.ops, &f_hat, &mut phi_hat, &mut stats, usize::MAX);
    Ok(RomState {
        window_index: 0,
        f_hat,
        phi_hat,
        t: 0.0,
    })
}

/// `G1 f̂ + Σ_j φ̂_j G2[:, j, :] f̂`.
fn contract(ops: &WindowOperators, f_hat: &DVector<f64>, phi_hat: &DVector<f64>, out: &mut DVector<f64>) {
    let (nf, np) = (ops.n_f, ops.n_phi);
    out.gemv(1.0, &ops.g1, f_hat, 0.0);
    let f = f_hat.as_slice();
    for (i, o) in out.iter_mut().enumerate() {
        let block = &ops.g2[i * np * nf..(i + 1) * np * nf];
        let mut acc = 0.0;
        for (j, row) in block.chunks_exact(nf).enumerate() {
            let mut s = 0.0;
            for (g, x) in row.iter().zip(f) {
                s += g * x;
            }
            acc += phi_hat[j] * s;
        }
        *o += acc;
    }
}

/// Reduced right-hand side for `state` under window operators `ops`: solves
/// the reduced Poisson system, then contracts.
pub fn rom_rhs(state: &RomState, ops: &WindowOperators) -> Result<DVector<f64>> {
    if state.f_hat.len() != ops.n_f {
        return Err(Error::Dimension(format!(
            "state has {} coefficients, window {} expects {}",
            state.f_hat.len(),
            ops.window_index,
            ops.n_f
        )));
    }
    let mut phi_hat = DVector::zeros(ops.n_phi);
    let mut stats = LoopStats::default();
    PoissonSolve::new(ops)?.solve(ops, &state.f_hat, &mut phi_hat, &mut stats, usize::MAX);
    let mut out = DVector::zeros(ops.n_f);
    contract(ops, &state.f_hat, &phi_hat, &mut out);
    Ok(out)
}

/// Steps per window, requiring `dt` to divide every window length.
fn steps_per_window(model: &RomModel, dt: f64) -> Result<Vec<usize>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(config(format!("time step must be positive, got {dt}")));
    }
    let p = &model.partition;
    (0..p.n_windows())
        .map(|m| {
            let len = p.end(m) - p.start(m);
            let n = (len / dt).round();
            if n < 1.0 || (n * dt - len).abs() > 1e-9 * len.max(1.0) {
                Err(config(format!("dt = {dt} does not divide window {m} of length {len}")))
            } else {
                Ok(n as usize)
            }
        })
        .collect()
}

struct Stepper<'a> {
    ops: &'a WindowOperators,
    poisson: PoissonSolve,
    phi_e: &'a DMatrix<f64>,
    full: usize,
    k: [DVector<f64>; 4],
    tmp: DVector<f64>,
    phi_stage: DVector<f64>,
    e: DVector<f64>,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a RomModel, m: usize) -> Result<Self> {
        let w = &model.windows[m];
        let (nf, np) = (w.ops.n_f, w.ops.n_phi);
        Ok(Self {
            ops: &w.ops,
            poisson: PoissonSolve::new(&w.ops)?,
            phi_e: &w.phi_e,
            full: model.grid.len(),
            k: std::array::from_fn(|_| DVector::zeros(nf)),
            tmp: DVector::zeros(nf),
            phi_stage: DVector::zeros(np),
            e: DVector::zeros(model.grid.nx),
        })
    }

    fn rhs(&mut self, stage: usize, f: &DVector<f64>, phi_hat: &DVector<f64>, resolve: bool, stats: &mut LoopStats) {
        let (nf, np) = (self.ops.n_f, self.ops.n_phi);
        let phi = if resolve {
            self.poisson.solve(self.ops, f, &mut self.phi_stage, stats, self.full);
            &self.phi_stage
        } else {
            phi_hat
        };
        contract(self.ops, f, phi, &mut self.k[stage]);
        stats.rhs_evals += 1;
        stats.touch(nf, 2 * nf * nf * (np + 1), self.full);
    }

    fn step(&mut self, state: &mut RomState, h: f64, per_stage: bool, stats: &mut LoopStats) {
        let nf = self.ops.n_f;
        let f0 = state.f_hat.clone();
        let phi0 = state.phi_hat.clone();
        self.rhs(0, &f0, &phi0, per_stage, stats);
        for (stage, c) in [(1, 0.5), (2, 0.5), (3, 1.0)] {
            self.tmp.copy_from(&f0);
            self.tmp.axpy(c * h, &self.k[stage - 1], 1.0);
            let y = self.tmp.clone();
            self.rhs(stage, &y, &phi0, per_stage, stats);
        }
        for i in 0..nf {
            state.f_hat[i] += h / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
        stats.touch(nf, 12 * nf, self.full);
        self.refresh_potential(state, stats);
        state.t += h;
        stats.steps += 1;
    }

    fn refresh_potential(&mut self, state: &mut RomState, stats: &mut LoopStats) {
        self.poisson.solve(self.ops, &state.f_hat, &mut state.phi_hat, stats, self.full);
    }

    fn max_e(&mut self, phi_hat: &DVector<f64>, stats: &mut LoopStats) -> f64 {
        if self.ops.n_phi == 0 {
            return 0.0;
        }
        self.e.gemv(1.0, self.phi_e, phi_hat, 0.0);
        stats.touch(self.e.len(), 2 * self.e.len() * self.ops.n_phi, self.full);
        self.e.amax()
    }
}

/// Marches the reduced model for parameter `mu` to the end of the model's
/// last window.
pub fn rom_run(model: &RomModel, mu: &ParamPoint, opts: &RomOptions) -> Result<RomTrajectory> {
    model.validate()?;
    let steps = steps_per_window(model, opts.dt)?;
    let start = Instant::now();
    let mut state = rom_init(model, mu, &model.grid)?;
    let mut traj = RomTrajectory {
        init_seconds: start.elapsed().as_secs_f64(),
        ..Default::default()
    };
    let start = Instant::now();
    let mut stats = LoopStats::default();
    let p = &model.partition;
    let mut last_valid = 0.0;
    for m in 0..p.n_windows() {
        let mut stepper = Stepper::new(model, m)?;
        if m > 0 {
            let prev = &model.windows[m - 1];
            let t = prev
                .ops
                .t_next
                .as_ref()
                .ok_or_else(|| Error::Model(format!("window {} has no transition", m - 1)))?;
            let before = state.f_hat.clone();
            let after = t * &before;
            stats.touch(before.len().max(after.len()), 2 * t.nrows() * t.ncols(), stepper.full);
            let (nb, na) = (before.norm(), after.norm());
            let lifted_gap = if opts.lift_handoffs {
                Some(lifted_gap(model, m, &before, &after)?)
            } else {
                None
            };
            traj.handoffs.push(Handoff {
                time: p.start(m),
                from: m - 1,
                to: m,
                norm_before: nb,
                norm_after: na,
                projection_residual: (nb * nb - na * na).max(0.0).sqrt(),
                lifted_gap,
            });
            state.f_hat = after;
            state.phi_hat = DVector::zeros(stepper.ops.n_phi);
            state.window_index = m;
            state.t = p.start(m);
            stepper.refresh_potential(&mut state, &mut stats);
        }
        for s in 0..steps[m] {
            traj.record(&state, &mut stepper, &mut stats);
            stepper.step(&mut state, opts.dt, opts.field_per_stage, &mut stats);
            state.t = p.start(m) + (s + 1) as f64 * opts.dt;
            if !state.f_hat.iter().all(|v| v.is_finite()) {
                return Err(Error::Blowup { last_valid_time: last_valid });
            }
            last_valid = state.t;
        }
        state.t = p.end(m);
    }
    let mut stepper = Stepper::new(model, p.n_windows() - 1)?;
    traj.record(&state, &mut stepper, &mut stats);
    traj.loop_seconds = start.elapsed().as_secs_f64();
    traj.stats = stats;
    Ok(traj)
}

impl RomTrajectory {
    fn record(&mut self, state: &RomState, stepper: &mut Stepper<'_>, stats: &mut LoopStats) {
        let e = stepper.max_e(&state.phi_hat, stats);
        self.times.push(state.t);
        self.windows.push(state.window_index);
        self.f_hat.push(state.f_hat.clone());
        self.phi_hat.push(state.phi_hat.clone());
        self.max_e_history.push((state.t, e));
    }
}

fn lifted_gap(model: &RomModel, next: usize, before: &DVector<f64>, after: &DVector<f64>) -> Result<f64> {
    let a = model.windows[next - 1].phi_f()?.into_owned() * before;
    let b = model.windows[next].phi_f()?.into_owned() * after;
    Ok((a - b).norm())
}

/// Lifts the reduced state at each requested time with the basis of the
/// window active at that time.
pub fn reconstruct(traj: &RomTrajectory, model: &RomModel, times: &[f64]) -> Result<Vec<DistributionField>> {
    let tol = 1e-9 * model.partition.t_final().max(1.0);
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let i = traj.index_of(t, tol)?;
        out.push(reconstruct_state(
            &RomState {
                window_index: traj.windows[i],
                f_hat: traj.f_hat[i].clone(),
                phi_hat: traj.phi_hat[i].clone(),
                t: traj.times[i],
            },
            model,
        )?);
    }
    Ok(out)
}

/// `Φ_f^m f̂` for a single state.
pub fn reconstruct_state(state: &RomState, model: &RomModel) -> Result<DistributionField> {
    let w = model
        .windows
        .get(state.window_index)
        .ok_or_else(|| Error::Model(format!("no window {}", state.window_index)))?;
    let phi = w.phi_f()?;
    if phi.ncols() != state.f_hat.len() {
        return Err(Error::Dimension("state does not match its window basis".into()));
    }
    let values = phi.as_ref() * &state.f_hat;
    Ok(DistributionField {
        values: values.as_slice().to_vec(),
        time: state.t,
    })
}
