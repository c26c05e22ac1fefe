//! Full-order model: conservative WENO5 finite differences in x and v, the
//! FFT Poisson solve at every stage, and classical RK4 in time.

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::field::{velocity_moment_into, FieldSolver};
use crate::grid::{DistributionField, ParamPoint, PhaseGrid, PotentialField};
use crate::weno::reconstruct;

pub const DEFAULT_DT: f64 = 0.0025;
pub const DEFAULT_T_FINAL: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FomConfig {
    pub grid: PhaseGrid,
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_stride: usize,
}

impl FomConfig {
    pub fn new(grid: PhaseGrid) -> Self {
        Self {
            grid,
            dt: DEFAULT_DT,
            t_final: DEFAULT_T_FINAL,
            snapshot_stride: 1,
        }
    }

    /// Number of time steps `N_t = t_final / dt`, checked to be integral.
    pub fn n_steps(&self) -> Result<usize> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(config(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(config(format!("final time must be nonnegative, got {}", self.t_final)));
        }
        if self.snapshot_stride == 0 {
            return Err(config("snapshot stride must be at least 1"));
        }
        let n = (self.t_final / self.dt).round();
        if (n * self.dt - self.t_final).abs() > 1e-9 * self.t_final.max(1.0) {
            return Err(config(format!(
                "t_final = {} is not an integer multiple of dt = {}",
                self.t_final, self.dt
            )));
        }
        Ok(n as usize)
    }

    /// Time of step `n`, computed without accumulation drift.
    #[inline]
    pub fn time_of(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    /// Steps at which snapshots are stored: every stride, plus the last step.
    pub fn stored_steps(&self) -> Result<Vec<usize>> {
        let nt = self.n_steps()?;
        let mut steps: Vec<usize> = (0..=nt).step_by(self.snapshot_stride).collect();
        if *steps.last().unwrap() != nt {
            steps.push(nt);
        }
        Ok(steps)
    }
}

/// Two-stream initial distribution with `k = 1`, `L = 2π`.
pub fn initial_condition(grid: &PhaseGrid, mu: &ParamPoint) -> DistributionField {
    let t = mu.temperature;
    let norm = 8.0 / (2.0 * std::f64::consts::PI * t).sqrt();
    let k = 2.0 * ParamPoint::WAVE_NUMBER * std::f64::consts::PI / ParamPoint::BOX_LENGTH;
    let values = grid.sample(|x, v| {
        let beams = (-(v - mu.v0).powi(2) / (2.0 * t)).exp() + (-(v + mu.v0).powi(2) / (2.0 * t)).exp();
        norm * (1.0 + mu.alpha * (k * x).cos()) * beams
    });
    DistributionField { values, time: 0.0 }
}

/// The semi-discrete Vlasov right-hand side `G(f) = −∂ₓ(v f) − ∂ᵥ(E f)`.
#[derive(Debug, Clone)]
pub struct VlasovOperator {
    grid: PhaseGrid,
    v: Vec<f64>,
    /// First index with `v > 0`; rows below use the right-biased stencil.
    first_positive: usize,
    solver: FieldSolver,
    rho: Vec<f64>,
    phi: Vec<f64>,
    e: Vec<f64>,
    faces: Vec<f64>,
    padded: Vec<f64>,
}

impl VlasovOperator {
    pub fn new(grid: &PhaseGrid) -> Result<Self> {
        if grid.nx < 6 || grid.nv < 6 {
            return Err(config("WENO5 needs at least 6 nodes per direction"));
        }
        let v = grid.v_nodes();
        let first_positive = v.iter().position(|&x| x > 0.0).unwrap_or(grid.nv);
        Ok(Self {
            grid: grid.clone(),
            v,
            first_positive,
            solver: FieldSolver::new(grid.nx)?,
            rho: vec![0.0; grid.nx],
            phi: vec![0.0; grid.nx],
            e: vec![0.0; grid.nx],
            faces: vec![0.0; grid.len()],
            padded: vec![0.0; grid.nv + 6],
        })
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    /// Solves for φ and E of the state `f`; results are readable through
    /// [`VlasovOperator::potential`] and [`VlasovOperator::field`].
    pub fn solve_field(&mut self, f: &[f64]) {
        velocity_moment_into(&self.grid, f, &mut self.rho);
        self.solver.potential(&self.rho, &mut self.phi);
        self.solver.field(&self.phi, &mut self.e);
    }

    pub fn potential(&self) -> &[f64] {
        &self.phi
    }

    pub fn field(&self) -> &[f64] {
        &self.e
    }

    /// Full right-hand side with the self-consistent field.
    pub fn rhs(&mut self, f: &[f64], out: &mut [f64]) {
        self.solve_field(f);
        let e = std::mem::take(&mut self.e);
        self.rhs_with_field(&e, f, out);
        self.e = e;
    }

    /// Right-hand side for a prescribed field `e` over x.
    pub fn rhs_with_field(&mut self, e: &[f64], f: &[f64], out: &mut [f64]) {
        self.x_flux_divergence(f, out);
        self.v_flux_divergence(e, f, out);
    }

    /// `out = −∂ₓ(v f)`, upwinded by the sign of v on each velocity row.
    fn x_flux_divergence(&mut self, f: &[f64], out: &mut [f64]) {
        let (nx, nv) = (self.grid.nx, self.grid.nv);
        let row = |ix: isize| -> &[f64] {
            let i = ix.rem_euclid(nx as isize) as usize;
            &f[i * nv..(i + 1) * nv]
        };
        let split = self.first_positive;
        // faces[ix] holds the reconstructed f at x_{ix + 1/2}
        for ix in 0..nx {
            let i = ix as isize;
            let (m2, m1, c0, p1, p2, p3) = (row(i - 2), row(i - 1), row(i), row(i + 1), row(i + 2), row(i + 3));
            let face = &mut self.faces[ix * nv..(ix + 1) * nv];
            for iv in 0..split {
                face[iv] = reconstruct(p3[iv], p2[iv], p1[iv], c0[iv], m1[iv]);
            }
            for iv in split..nv {
                face[iv] = reconstruct(m2[iv], m1[iv], c0[iv], p1[iv], p2[iv]);
            }
        }
        let inv_dx = 1.0 / self.grid.dx;
        for ix in 0..nx {
            let prev = if ix == 0 { nx - 1 } else { ix - 1 };
            for iv in 0..nv {
                let right = self.faces[ix * nv + iv];
                let left = self.faces[prev * nv + iv];
                out[ix * nv + iv] = -self.v[iv] * (right - left) * inv_dx;
            }
        }
    }

    /// `out −= ∂ᵥ(E f)`, upwinded by the sign of E on each x row, with zero
    /// ghost values beyond the velocity walls.
    fn v_flux_divergence(&mut self, e: &[f64], f: &[f64], out: &mut [f64]) {
        let nv = self.grid.nv;
        let inv_dv = 1.0 / self.grid.dv;
        // padded[j + 3] = f[j]; faces[j] holds x_{j - 1/2}, j = 0..=nv
        let mut face = vec![0.0; nv + 1];
        for (ix, &ex) in e.iter().enumerate() {
            if ex == 0.0 {
                continue;
            }
            let row = &f[ix * nv..(ix + 1) * nv];
            self.padded[3..3 + nv].copy_from_slice(row);
            let p = &self.padded;
            if ex > 0.0 {
                for (j, fc) in face.iter_mut().enumerate() {
                    // face j - 1/2, left cell j - 1 -> padded index j + 2
                    *fc = reconstruct(p[j], p[j + 1], p[j + 2], p[j + 3], p[j + 4]);
                }
            } else {
                for (j, fc) in face.iter_mut().enumerate() {
                    *fc = reconstruct(p[j + 5], p[j + 4], p[j + 3], p[j + 2], p[j + 1]);
                }
            }
            let dst = &mut out[ix * nv..(ix + 1) * nv];
            let s = ex * inv_dv;
            for j in 0..nv {
                dst[j] -= s * (face[j + 1] - face[j]);
            }
        }
    }
}

/// `G(f, t)` for a single state; allocates its own operator.
pub fn fom_rhs(grid: &PhaseGrid, f: &DistributionField) -> Result<DistributionField> {
    grid.check_len(f.values.len(), "distribution")?;
    if !f.is_finite() {
        return Err(Error::Blowup {
            last_valid_time: f.time,
        });
    }
    let mut op = VlasovOperator::new(grid)?;
    let mut out = vec![0.0; grid.len()];
    op.rhs(&f.values, &mut out);
    Ok(DistributionField {
        values: out,
        time: f.time,
    })
}

/// Classical four-stage RK4 with reusable stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4Workspace {
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl Rk4Workspace {
    pub fn new(n: usize) -> Self {
        Self {
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            stage: vec![0.0; n],
        }
    }

    /// Advances `y` by one step of size `h` for `dy/dt = rhs(y)`.
    pub fn step<F: FnMut(&[f64], &mut [f64])>(&mut self, y: &mut [f64], h: f64, mut rhs: F) {
        let [k1, k2, k3, k4] = &mut self.k;
        let stage = &mut self.stage;
        rhs(y, k1);
        for ((s, yi), ki) in stage.iter_mut().zip(y.iter()).zip(k1.iter()) {
            *s = yi + 0.5 * h * ki;
        }
        rhs(stage, k2);
        for ((s, yi), ki) in stage.iter_mut().zip(y.iter()).zip(k2.iter()) {
            *s = yi + 0.5 * h * ki;
        }
        rhs(stage, k3);
        for ((s, yi), ki) in stage.iter_mut().zip(y.iter()).zip(k3.iter()) {
            *s = yi + h * ki;
        }
        rhs(stage, k4);
        let w = h / 6.0;
        for i in 0..y.len() {
            y[i] += w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// Trajectory of the linear-stencil model, i.e. the full-order operator the
/// reduced model is a Galerkin projection of.
#[derive(Debug, Clone, Default)]
pub struct LinearReference {
    /// States handed to the right-hand side (every RK stage when stages are
    /// kept, otherwise the step states), in order.
    pub states: Vec<Vec<f64>>,
    /// Potential of each entry of `states`.
    pub potentials: Vec<Vec<f64>>,
    pub final_state: Vec<f64>,
}

/// RK4 march of `df/dt = −[D_x ⊗ diag v] f − [diag E(f) ⊗ D_v] f` with the
/// self-consistent field, using the linear stencils.
pub fn linear_reference_run(
    grid: &PhaseGrid,
    mu: &ParamPoint,
    dt: f64,
    n_steps: usize,
    keep_stages: bool,
) -> Result<LinearReference> {
    let transport = crate::derivative::LinearTransport::new(grid)?;
    let mut solver = FieldSolver::new(grid.nx)?;
    let mut rho = vec![0.0; grid.nx];
    let mut phi = vec![0.0; grid.nx];
    let mut e = vec![0.0; grid.nx];
    let mut out = LinearReference::default();
    let mut y = initial_condition(grid, mu).values;
    let mut rk = Rk4Workspace::new(y.len());
    for n in 0..n_steps {
        let mut stage = 0;
        rk.step(&mut y, dt, |f, k| {
            velocity_moment_into(grid, f, &mut rho);
            solver.potential(&rho, &mut phi);
            solver.field(&phi, &mut e);
            if keep_stages || stage == 0 {
                out.states.push(f.to_vec());
                out.potentials.push(phi.clone());
            }
            stage += 1;
            transport.apply(&e, f, k);
        });
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Blowup {
                last_valid_time: n as f64 * dt,
            });
        }
    }
    velocity_moment_into(grid, &y, &mut rho);
    solver.potential(&rho, &mut phi);
    out.states.push(y.clone());
    out.potentials.push(phi);
    out.final_state = y;
    Ok(out)
}

/// One stored state handed to snapshot sinks.
#[derive(Debug, Clone, Copy)]
pub struct SnapshotRef<'a> {
    pub step: usize,
    pub time: f64,
    pub f: &'a [f64],
    pub phi: &'a [f64],
    pub max_e: f64,
}

/// Steppable full-order solver for one parameter point.
#[derive(Debug, Clone)]
pub struct FomSolver {
    config: FomConfig,
    mu: ParamPoint,
    n_steps: usize,
    step: usize,
    f: Vec<f64>,
    op: VlasovOperator,
    rk: Rk4Workspace,
}

impl FomSolver {
    pub fn new(config: &FomConfig, mu: ParamPoint) -> Result<Self> {
        mu.validate()?;
        let n_steps = config.n_steps()?;
        let grid = &config.grid;
        let f = initial_condition(grid, &mu).values;
        let mut op = VlasovOperator::new(grid)?;
        op.solve_field(&f);
        Ok(Self {
            config: config.clone(),
            mu,
            n_steps,
            step: 0,
            f,
            op,
            rk: Rk4Workspace::new(grid.len()),
        })
    }

    pub fn config(&self) -> &FomConfig {
        &self.config
    }

    pub fn mu(&self) -> ParamPoint {
        self.mu
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.config.time_of(self.step)
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.n_steps
    }

    pub fn state(&self) -> &[f64] {
        &self.f
    }

    /// φ of the current state.
    pub fn potential(&self) -> &[f64] {
        self.op.potential()
    }

    /// E of the current state.
    pub fn field(&self) -> &[f64] {
        self.op.field()
    }

    pub fn max_abs_field(&self) -> f64 {
        crate::linalg::max_abs(self.op.field())
    }

    /// Whether the current step is one the configuration stores.
    pub fn is_stored_step(&self) -> bool {
        self.step % self.config.snapshot_stride == 0 || self.step == self.n_steps
    }

    pub fn snapshot(&self) -> SnapshotRef<'_> {
        SnapshotRef {
            step: self.step,
            time: self.time(),
            f: &self.f,
            phi: self.op.potential(),
            max_e: self.max_abs_field(),
        }
    }

    /// Advances one RK4 step; the field of the new state is re-solved so
    /// snapshot accessors stay consistent.
    pub fn advance(&mut self) -> Result<()> {
        if self.is_finished() {
            return Ok(());
        }
        let last_valid_time = self.time();
        let dt = self.config.dt;
        let op = &mut self.op;
        self.rk.step(&mut self.f, dt, |y, out| op.rhs(y, out));
        if !self.f.iter().all(|v| v.is_finite()) {
            return Err(Error::Blowup { last_valid_time });
        }
        self.step += 1;
        self.op.solve_field(&self.f);
        Ok(())
    }
}

/// Runs to `t_final`, passing every stored snapshot to `sink`.
pub fn fom_run_with<S>(config: &FomConfig, mu: ParamPoint, mut sink: S) -> Result<()>
where
    S: FnMut(SnapshotRef<'_>) -> Result<()>,
{
    let mut solver = FomSolver::new(config, mu)?;
    sink(solver.snapshot())?;
    while !solver.is_finished() {
        solver.advance()?;
        if solver.is_stored_step() {
            sink(solver.snapshot())?;
        }
    }
    Ok(())
}

/// In-memory trajectory of stored snapshots.
#[derive(Debug, Clone, Default)]
pub struct FomTrajectory {
    pub times: Vec<f64>,
    pub steps: Vec<usize>,
    pub snapshots_f: Vec<DistributionField>,
    pub snapshots_phi: Vec<PotentialField>,
    pub max_e_history: Vec<(f64, f64)>,
}

impl FomTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&DistributionField> {
        self.snapshots_f.last()
    }

    fn push(&mut self, s: SnapshotRef<'_>) {
        self.times.push(s.time);
        self.steps.push(s.step);
        self.snapshots_f.push(DistributionField {
            values: s.f.to_vec(),
            time: s.time,
        });
        self.snapshots_phi.push(PotentialField { values: s.phi.to_vec() });
        self.max_e_history.push((s.time, s.max_e));
    }
}

/// Runs the full-order model and keeps every stored snapshot in memory.
pub fn fom_run(config: &FomConfig, mu: ParamPoint) -> Result<FomTrajectory> {
    let mut traj = FomTrajectory::default();
    fom_run_with(config, mu, |s| {
        traj.push(s);
        Ok(())
    })?;
    Ok(traj)
}

/// Final state and max|E| history without keeping intermediate snapshots.
#[derive(Debug, Clone)]
pub struct FomOutcome {
    pub final_state: DistributionField,
    pub max_e_history: Vec<(f64, f64)>,
    pub initial_mass: f64,
    pub final_mass: f64,
    pub seconds: f64,
}

/// Runs the model, recording max|E| at every stored step and any states at
/// the requested `capture` times.
pub fn fom_run_outcome(
    config: &FomConfig,
    mu: ParamPoint,
    capture: &[f64],
) -> Result<(FomOutcome, Vec<DistributionField>)> {
    let start = web_time::Instant::now();
    let grid = &config.grid;
    let mut history = Vec::new();
    let mut captured = Vec::new();
    let mut first_mass = None;
    let mut last = None;
    let tol = 0.5 * config.dt;
    fom_run_with(config, mu, |s| {
        history.push((s.time, s.max_e));
        let field = || DistributionField {
            values: s.f.to_vec(),
            time: s.time,
        };
        if first_mass.is_none() {
            first_mass = Some(s.f.iter().sum::<f64>() * grid.cell_area());
        }
        if capture.iter().any(|&t| (t - s.time).abs() < tol) {
            captured.push(field());
        }
        if s.step == config.n_steps()? {
            last = Some(field());
        }
        Ok(())
    })?;
    let final_state = last.expect("final snapshot is always stored");
    let final_mass = final_state.mass(grid);
    Ok((
        FomOutcome {
            final_state,
            max_e_history: history,
            initial_mass: first_mass.unwrap_or(0.0),
            final_mass,
            seconds: start.elapsed().as_secs_f64(),
        },
        captured,
    ))
}
