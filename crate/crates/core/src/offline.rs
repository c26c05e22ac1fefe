//! Offline phase: per-window reduced operators and the trained model.
//!
//! For window basis `Φ_f` (N_f × n_f), potential basis `Φ_φ` and field
//! modes `Φ_E = −∂ₓΦ_φ`, the reduced system is
//!
//! ```text
//! df̂/dt = G1 f̂ + Σ_j φ̂_j G2[:, j, :] f̂,      L̂ φ̂ = M̂ f̂
//! G1        = Φ_fᵀ (−D_x ⊗ diag v) Φ_f
//! G2[i,j,k] = φ_iᵀ (−diag(φ_E,j) ⊗ D_v) φ_k
//! L̂         = −Φ_φᵀ ∂ₓ² Φ_φ
//! M̂         = Φ_φᵀ (moment − mean) Φ_f
//! ```
//!
//! Nothing here materializes an N_f × N_f matrix: every full-order operator
//! is applied column by column and then projected.

use std::borrow::Cow;
use std::path::{Path, PathBuf};
use web_time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::container::{
    file_checksum, read_json, verify_checksum, write_json, BlockSpec, ContainerReader, ContainerWriter, Header,
    Layout, PayloadKind,
};
use crate::derivative::LinearTransport;
use crate::error::{config, Error, Result};
use crate::field::{velocity_moment_into, FieldSolver};
use crate::fom::{FomConfig, FomOutcome, FomSolver};
use crate::grid::{DistributionField, ParamPoint, PhaseGrid};
use crate::linalg::{gemm_tn, gemm_tn_view};
use crate::pod::{build_window_basis, TruncationRule, WindowBasis};
use crate::snapshots::{group_snapshots, partition_uniform, ContainerSnapshots, SnapshotMatrices, WindowPartition};

/// Default ceiling on `n_f² · n_φ` per window (400 MB of tensor).
pub const DEFAULT_TENSOR_CAP: usize = 50_000_000;

pub const MODEL_MANIFEST: &str = "model.json";

/// Precomputed reduced objects of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowOperators {
    pub window_index: usize,
    pub n_f: usize,
    pub n_phi: usize,
    pub g1: DMatrix<f64>,
    /// Flat `n_f × n_φ × n_f`, i-major then j then k.
    pub g2: Vec<f64>,
    pub l_hat: DMatrix<f64>,
    pub m_hat: DMatrix<f64>,
    /// `(Φ_f^{m+1})ᵀ Φ_f^m`; `None` for the last window.
    pub t_next: Option<DMatrix<f64>>,
    pub t_next_phi: Option<DMatrix<f64>>,
}

impl WindowOperators {
    #[inline]
    pub fn g2_at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.g2[(i * self.n_phi + j) * self.n_f + k]
    }

    pub fn tensor_bytes(&self) -> usize {
        8 * self.g2.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (nf, np) = (self.n_f, self.n_phi);
        let shapes_ok = self.g1.shape() == (nf, nf)
            && self.g2.len() == nf * np * nf
            && self.l_hat.shape() == (np, np)
            && self.m_hat.shape() == (np, nf)
            && self.t_next.as_ref().is_none_or(|t| t.ncols() == nf)
            && self.t_next_phi.as_ref().is_none_or(|t| t.ncols() == np);
        if !shapes_ok {
            return Err(Error::Model(format!("window {}: operator shapes disagree", self.window_index)));
        }
        let finite = self.g1.iter().chain(&self.g2).chain(self.l_hat.iter()).chain(self.m_hat.iter());
        if finite.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Model(format!("window {}: non-finite operator entry", self.window_index)));
        }
        Ok(())
    }
}

/// `Φ_fᵀ (−D_x ⊗ diag v) Φ_f`.
pub fn build_g1(basis: &WindowBasis, transport: &LinearTransport) -> DMatrix<f64> {
    let phi = &basis.phi_f;
    let n = phi.nrows();
    let mut w = DMatrix::zeros(n, phi.ncols());
    for k in 0..phi.ncols() {
        let src = &phi.as_slice()[k * n..(k + 1) * n];
        transport.free_streaming(src, &mut w.as_mut_slice()[k * n..(k + 1) * n]);
    }
    gemm_tn(phi, &w)
}

/// Tensor of the field-transport term, flat i-major.
///
/// With `W = (I ⊗ D_v) Φ_f` and `P_x = Φ_f[x]ᵀ W[x]` (the n_f × n_f block
/// contributed by one x row), `G2[:, j, :] = −Σ_x φ_E,j(x) P_x`, so the
/// full-order work is a single `N_f · n_f²` product regardless of n_φ.
pub fn build_g2(basis: &WindowBasis, transport: &LinearTransport, cap: usize) -> Result<Vec<f64>> {
    let phi = &basis.phi_f;
    let (nf, np) = (basis.n_f(), basis.n_phi());
    let entries = nf * nf * np;
    if entries > cap {
        return Err(Error::TensorTooLarge {
            window: basis.window_index,
            entries,
            cap,
        });
    }
    let grid = transport.grid();
    let (nx, nv) = (grid.nx, grid.nv);
    let n = phi.nrows();
    let mut w = DMatrix::zeros(n, nf);
    for k in 0..nf {
        let src = &phi.as_slice()[k * n..(k + 1) * n];
        transport.velocity_derivative(src, &mut w.as_mut_slice()[k * n..(k + 1) * n]);
    }
    let mut g2 = vec![0.0; entries];
    for ix in 0..nx {
        let p = gemm_tn_view(phi.rows(ix * nv, nv), w.rows(ix * nv, nv));
        for j in 0..np {
            let c = -basis.phi_e[(ix, j)];
            if c == 0.0 {
                continue;
            }
            for i in 0..nf {
                let row = &mut g2[(i * np + j) * nf..(i * np + j + 1) * nf];
                for (k, r) in row.iter_mut().enumerate() {
                    *r += c * p[(i, k)];
                }
            }
        }
    }
    Ok(g2)
}

/// `(L̂, M̂)` of the reduced Poisson system `L̂ φ̂ = M̂ f̂`.
pub fn build_reduced_poisson(basis: &WindowBasis, grid: &PhaseGrid) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let nx = grid.nx;
    let (nf, np) = (basis.n_f(), basis.n_phi());
    let mut solver = FieldSolver::new(nx)?;

    let mut lap = DMatrix::zeros(nx, np);
    for j in 0..np {
        let src: Vec<f64> = basis.phi_phi.column(j).iter().copied().collect();
        solver.laplacian(&src, &mut lap.as_mut_slice()[j * nx..(j + 1) * nx]);
    }
    let mut l_hat = -gemm_tn(&basis.phi_phi, &lap);
    let scale = l_hat.amax().max(1.0);
    if (&l_hat - l_hat.transpose()).amax() > 1e-8 * scale {
        return Err(Error::SingularReducedPoisson {
            window: basis.window_index,
        });
    }
    l_hat = (&l_hat + l_hat.transpose()) * 0.5;
    if np > 0 {
        let min_eig = SymmetricEigen::new(l_hat.clone()).eigenvalues.min();
        if !(min_eig > 1e-8 * scale) {
            return Err(Error::SingularReducedPoisson {
                window: basis.window_index,
            });
        }
    }

    let n = basis.phi_f.nrows();
    let mut rho = DMatrix::zeros(nx, nf);
    for k in 0..nf {
        let dst = &mut rho.as_mut_slice()[k * nx..(k + 1) * nx];
        velocity_moment_into(grid, &basis.phi_f.as_slice()[k * n..(k + 1) * n], dst);
        let mean = dst.iter().sum::<f64>() / nx as f64;
        dst.iter_mut().for_each(|r| *r -= mean);
    }
    let m_hat = gemm_tn(&basis.phi_phi, &rho);
    Ok((l_hat, m_hat))
}

/// `((Φ_f^{next})ᵀ Φ_f^{prev}, (Φ_φ^{next})ᵀ Φ_φ^{prev})`.
pub fn build_transition(prev: &WindowBasis, next: &WindowBasis) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if prev.phi_f.nrows() != next.phi_f.nrows() {
        return Err(Error::Dimension(format!(
            "windows {} and {} have different state sizes",
            prev.window_index, next.window_index
        )));
    }
    let t = gemm_tn(&next.phi_f, &prev.phi_f);
    if t.amax() < 1e-12 {
        log::warn!(
            "windows {} -> {}: bases are orthogonal, handoff discards the state",
            prev.window_index,
            next.window_index
        );
    }
    Ok((t, gemm_tn(&next.phi_phi, &prev.phi_phi)))
}

/// Transition projectors between consecutive bases.
pub fn build_transitions(bases: &[WindowBasis]) -> Result<Vec<(DMatrix<f64>, DMatrix<f64>)>> {
    bases.windows(2).map(|w| build_transition(&w[0], &w[1])).collect()
}

/// Operators of one window, without the transition (filled in once the
/// next basis exists).
pub fn build_window_operators(
    basis: &WindowBasis,
    transport: &LinearTransport,
    tensor_cap: usize,
) -> Result<WindowOperators> {
    let g1 = build_g1(basis, transport);
    let g2 = build_g2(basis, transport, tensor_cap)?;
    let (l_hat, m_hat) = build_reduced_poisson(basis, transport.grid())?;
    let ops = WindowOperators {
        window_index: basis.window_index,
        n_f: basis.n_f(),
        n_phi: basis.n_phi(),
        g1,
        g2,
        l_hat,
        m_hat,
        t_next: None,
        t_next_phi: None,
    };
    ops.validate()?;
    Ok(ops)
}

/// Settings of the offline build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineConfig {
    pub n_windows: usize,
    pub rule_f: TruncationRule,
    pub rule_phi: TruncationRule,
    pub tensor_cap: usize,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        Self {
            n_windows: crate::snapshots::DEFAULT_WINDOWS,
            rule_f: TruncationRule::default(),
            rule_phi: TruncationRule::default(),
            tensor_cap: DEFAULT_TENSOR_CAP,
        }
    }
}

/// Where the large distribution bases live.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BasisStore {
    Memory,
    /// Model directory; operators, bases and the manifest are written here.
    Directory(PathBuf),
}

#[derive(Debug, Clone)]
enum FBasis {
    Memory(DMatrix<f64>),
    Disk(PathBuf),
}

/// One window of a trained model.
#[derive(Debug, Clone)]
pub struct WindowModel {
    pub ops: WindowOperators,
    pub phi_phi: DMatrix<f64>,
    pub phi_e: DMatrix<f64>,
    pub sv_f: Vec<f64>,
    pub sv_phi: Vec<f64>,
    basis: FBasis,
}

impl WindowModel {
    /// Distribution basis `Φ_f`; read from disk for directory-backed models.
    pub fn phi_f(&self) -> Result<Cow<'_, DMatrix<f64>>> {
        match &self.basis {
            FBasis::Memory(m) => Ok(Cow::Borrowed(m)),
            FBasis::Disk(path) => {
                let mut r = ContainerReader::open(path)?;
                let n_f = self.ops.n_f;
                let rec = r.read_record(0)?;
                let rows = rec.len() / n_f.max(1);
                Ok(Cow::Owned(DMatrix::from_column_slice(rows, n_f, &rec)))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WindowEntry {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub n_f: usize,
    pub n_phi: usize,
    pub operators_file: String,
    pub operators_sha256: String,
    pub basis_file: String,
    pub basis_sha256: String,
}

/// JSON manifest of a model directory.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelManifest {
    pub grid: PhaseGrid,
    pub v0: f64,
    pub dt: f64,
    pub boundaries: Vec<f64>,
    pub build: OfflineConfig,
    pub training: Vec<ParamPoint>,
    pub tensor_bytes: usize,
    pub windows: Vec<WindowEntry>,
}

/// A trained time-windowed reduced model.
#[derive(Debug, Clone)]
pub struct RomModel {
    pub grid: PhaseGrid,
    pub v0: f64,
    /// Time step of the training data.
    pub dt: f64,
    pub partition: WindowPartition,
    pub build: OfflineConfig,
    pub training: Vec<ParamPoint>,
    pub windows: Vec<WindowModel>,
}

impl RomModel {
    pub fn n_windows(&self) -> usize {
        self.windows.len()
    }

    /// Total tensor storage, `Σ 8·n_f²·n_φ` bytes.
    pub fn tensor_bytes(&self) -> usize {
        self.windows.iter().map(|w| w.ops.tensor_bytes()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.windows.len() != self.partition.n_windows() {
            return Err(Error::Model(format!(
                "{} windows for a {}-window partition",
                self.windows.len(),
                self.partition.n_windows()
            )));
        }
        for (m, w) in self.windows.iter().enumerate() {
            w.ops.validate()?;
            if w.ops.window_index != m {
                return Err(Error::Model(format!("window {m} carries index {}", w.ops.window_index)));
            }
            if w.phi_e.shape() != (self.grid.nx, w.ops.n_phi) {
                return Err(Error::Model(format!("window {m}: field modes have the wrong shape")));
            }
            let next = self.windows.get(m + 1).map(|n| (n.ops.n_f, n.ops.n_phi));
            let t_shape = w.ops.t_next.as_ref().map(|t| t.nrows());
            let tp_shape = w.ops.t_next_phi.as_ref().map(|t| t.nrows());
            if next.map(|n| n.0) != t_shape || next.map(|n| n.1) != tp_shape {
                return Err(Error::Model(format!("window {m}: missing or mis-sized transition")));
            }
        }
        Ok(())
    }

    /// Loads a model directory written by a directory-backed build or
    /// [`RomModel::save`]. Distribution bases stay on disk.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: ModelManifest = read_json(&dir.join(MODEL_MANIFEST))?;
        let mut windows = Vec::with_capacity(manifest.windows.len());
        for e in &manifest.windows {
            let ops_path = dir.join(&e.operators_file);
            verify_checksum(&ops_path, &e.operators_sha256)?;
            let basis_path = dir.join(&e.basis_file);
            verify_checksum(&basis_path, &e.basis_sha256)?;
            let mut w = read_window(&ops_path, manifest.grid.nx)?;
            w.basis = FBasis::Disk(basis_path);
            windows.push(w);
        }
        let model = Self {
            grid: manifest.grid,
            v0: manifest.v0,
            dt: manifest.dt,
            partition: WindowPartition {
                boundaries: manifest.boundaries,
            },
            build: manifest.build,
            training: manifest.training,
            windows,
        };
        model.validate()?;
        if model.tensor_bytes() != manifest.tensor_bytes {
            return Err(Error::Model("tensor sizes disagree with the manifest".into()));
        }
        Ok(model)
    }

    /// Writes every window and the manifest into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut entries = Vec::with_capacity(self.windows.len());
        for w in &self.windows {
            let phi_f = w.phi_f()?;
            entries.push(write_window(dir, self, w, &phi_f)?);
        }
        self.write_manifest(dir, entries)
    }

    fn write_manifest(&self, dir: &Path, windows: Vec<WindowEntry>) -> Result<()> {
        let manifest = ModelManifest {
            grid: self.grid.clone(),
            v0: self.v0,
            dt: self.dt,
            boundaries: self.partition.boundaries.clone(),
            build: self.build.clone(),
            training: self.training.clone(),
            tensor_bytes: self.tensor_bytes(),
            windows,
        };
        write_json(&dir.join(MODEL_MANIFEST), &manifest)
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn header_for(kind: PayloadKind, model: &RomModel, layout: Layout) -> Header {
    let mu = model.training.first().copied().unwrap_or(ParamPoint {
        temperature: 0.0,
        alpha: 0.0,
        v0: model.v0,
    });
    Header::new(kind, &model.grid, model.dt, 1, mu, layout)
}

fn write_window(dir: &Path, model: &RomModel, w: &WindowModel, phi_f: &DMatrix<f64>) -> Result<WindowEntry> {
    let ops = &w.ops;
    let m = ops.window_index;
    let (nf, np, nx) = (ops.n_f, ops.n_phi, model.grid.nx);
    let empty = DMatrix::zeros(0, 0);
    let t = ops.t_next.as_ref().unwrap_or(&empty);
    let tp = ops.t_next_phi.as_ref().unwrap_or(&empty);
    let layout = Layout {
        blocks: vec![
            BlockSpec::new("g1", &[nf, nf]),
            BlockSpec::new("g2", &[nf, np, nf]),
            BlockSpec::new("l_hat", &[np, np]),
            BlockSpec::new("m_hat", &[np, nf]),
            BlockSpec::new("t_next", &[t.nrows(), t.ncols()]),
            BlockSpec::new("t_next_phi", &[tp.nrows(), tp.ncols()]),
            BlockSpec::new("phi_phi", &[np, nx]),
            BlockSpec::new("phi_e", &[np, nx]),
            BlockSpec::new("sv_f", &[w.sv_f.len()]),
            BlockSpec::new("sv_phi", &[w.sv_phi.len()]),
        ],
        meta: serde_json::json!({
            "window": m,
            "t_start": model.partition.start(m),
            "t_end": model.partition.end(m),
            "has_next": ops.t_next.is_some(),
        }),
    };
    let ops_file = format!("window_{m:03}_ops.vrom");
    let mut wr = ContainerWriter::create(dir.join(&ops_file), header_for(PayloadKind::WindowOperators, model, layout))?;
    wr.write_parts(&[
        &row_major(&ops.g1),
        &ops.g2,
        &row_major(&ops.l_hat),
        &row_major(&ops.m_hat),
        &row_major(t),
        &row_major(tp),
        w.phi_phi.as_slice(),
        w.phi_e.as_slice(),
        &w.sv_f,
        &w.sv_phi,
    ])?;
    let ops_sha = wr.finish()?;

    let layout = Layout {
        blocks: vec![BlockSpec::new("phi_f", &[nf, phi_f.nrows()])],
        meta: serde_json::json!({ "window": m }),
    };
    let basis_file = format!("window_{m:03}_basis.vrom");
    let mut wr = ContainerWriter::create(dir.join(&basis_file), header_for(PayloadKind::WindowBasis, model, layout))?;
    wr.write_record(phi_f.as_slice())?;
    let basis_sha = wr.finish()?;

    Ok(WindowEntry {
        index: m,
        t_start: model.partition.start(m),
        t_end: model.partition.end(m),
        n_f: nf,
        n_phi: np,
        operators_file: ops_file,
        operators_sha256: ops_sha,
        basis_file,
        basis_sha256: basis_sha,
    })
}

fn read_window(path: &Path, nx: usize) -> Result<WindowModel> {
    let mut r = ContainerReader::open(path)?;
    let layout = r.header().layout.clone();
    let rec = r.read_record(0)?;
    let blocks = layout.split(&rec)?;
    let shape = |name: &str| -> Result<(&[usize], &[f64])> {
        let spec = layout.blocks.iter().find(|b| b.name == name);
        let data = blocks.iter().find(|(n, _)| *n == name).map(|(_, d)| *d);
        match (spec, data) {
            (Some(s), Some(d)) => Ok((s.shape.as_slice(), d)),
            _ => Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("missing block {name}"),
            }),
        }
    };
    let mat = |name: &str| -> Result<DMatrix<f64>> {
        let (s, d) = shape(name)?;
        Ok(DMatrix::from_row_slice(s[0], s[1], d))
    };
    let (g1s, _) = shape("g1")?;
    let (nf, np) = (g1s[0], shape("l_hat")?.0[0]);
    let has_next = layout.meta.get("has_next").and_then(|v| v.as_bool()).unwrap_or(false);
    let window_index = layout.meta.get("window").and_then(|v| v.as_u64()).unwrap_or(0) as usize;
    let t_next = has_next.then(|| mat("t_next")).transpose()?;
    let t_next_phi = has_next.then(|| mat("t_next_phi")).transpose()?;
    let ops = WindowOperators {
        window_index,
        n_f: nf,
        n_phi: np,
        g1: mat("g1")?,
        g2: shape("g2")?.1.to_vec(),
        l_hat: mat("l_hat")?,
        m_hat: mat("m_hat")?,
        t_next,
        t_next_phi,
    };
    Ok(WindowModel {
        ops,
        phi_phi: DMatrix::from_column_slice(nx, np, shape("phi_phi")?.1),
        phi_e: DMatrix::from_column_slice(nx, np, shape("phi_e")?.1),
        sv_f: shape("sv_f")?.1.to_vec(),
        sv_phi: shape("sv_phi")?.1.to_vec(),
        basis: FBasis::Memory(DMatrix::zeros(0, 0)),
    })
}

/// Per-window timings and sizes of an offline build.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OfflineTimings {
    pub pod_seconds: f64,
    pub operator_seconds: f64,
    pub n_f: Vec<usize>,
    pub n_phi: Vec<usize>,
}

/// Consumes window snapshot matrices in order and assembles the model.
/// Each window is held back until the next basis exists so its transition
/// can be attached, then committed.
struct ModelBuilder {
    model: RomModel,
    transport: LinearTransport,
    store: BasisStore,
    pending: Option<(WindowBasis, WindowOperators)>,
    entries: Vec<WindowEntry>,
    timings: OfflineTimings,
}

impl ModelBuilder {
    fn new(
        grid: &PhaseGrid,
        v0: f64,
        dt: f64,
        partition: WindowPartition,
        build: &OfflineConfig,
        training: &[ParamPoint],
        store: BasisStore,
    ) -> Result<Self> {
        build.rule_f.validate()?;
        build.rule_phi.validate()?;
        if let BasisStore::Directory(dir) = &store {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self {
            model: RomModel {
                grid: grid.clone(),
                v0,
                dt,
                partition,
                build: build.clone(),
                training: training.to_vec(),
                windows: Vec::new(),
            },
            transport: LinearTransport::new(grid)?,
            store,
            pending: None,
            entries: Vec::new(),
            timings: OfflineTimings::default(),
        })
    }

    fn push(&mut self, snaps: &SnapshotMatrices) -> Result<()> {
        let start = Instant::now();
        let basis = build_window_basis(snaps, self.model.build.rule_f, self.model.build.rule_phi)?;
        self.timings.pod_seconds += start.elapsed().as_secs_f64();
        let start = Instant::now();
        let ops = build_window_operators(&basis, &self.transport, self.model.build.tensor_cap)?;
        log::debug!(
            "window {}: {} columns, n_f = {}, n_phi = {}",
            basis.window_index,
            snaps.u_f.ncols(),
            basis.n_f(),
            basis.n_phi()
        );
        if let Some((prev, mut prev_ops)) = self.pending.take() {
            let (t, tp) = build_transition(&prev, &basis)?;
            prev_ops.t_next = Some(t);
            prev_ops.t_next_phi = Some(tp);
            self.commit(prev, prev_ops)?;
        }
        self.timings.operator_seconds += start.elapsed().as_secs_f64();
        self.timings.n_f.push(basis.n_f());
        self.timings.n_phi.push(basis.n_phi());
        self.pending = Some((basis, ops));
        Ok(())
    }

    /// Stores a finished window, spilling its basis if directory-backed.
    fn commit(&mut self, basis: WindowBasis, ops: WindowOperators) -> Result<()> {
        let mut window = WindowModel {
            ops,
            phi_phi: basis.phi_phi,
            phi_e: basis.phi_e,
            sv_f: basis.sv_f,
            sv_phi: basis.sv_phi,
            basis: FBasis::Memory(DMatrix::zeros(0, 0)),
        };
        match &self.store {
            BasisStore::Memory => window.basis = FBasis::Memory(basis.phi_f),
            BasisStore::Directory(dir) => {
                let entry = write_window(dir, &self.model, &window, &basis.phi_f)?;
                window.basis = FBasis::Disk(dir.join(&entry.basis_file));
                self.entries.push(entry);
            }
        }
        self.model.windows.push(window);
        Ok(())
    }

    fn finish(mut self) -> Result<(RomModel, OfflineTimings)> {
        let (basis, ops) = self.pending.take().ok_or_else(|| config("no windows were built"))?;
        self.commit(basis, ops)?;
        self.model.validate()?;
        if let BasisStore::Directory(dir) = &self.store {
            let entries = std::mem::take(&mut self.entries);
            self.model.write_manifest(dir, entries)?;
        }
        Ok((self.model, self.timings))
    }
}

/// Result of a training run: the model plus the full-order outcomes of the
/// training points (whose final states double as reference solutions).
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub model: RomModel,
    pub fom: Vec<FomOutcome>,
    pub timings: OfflineTimings,
}

/// Trains a model by running every training point's full-order model in
/// lockstep, window by window, so only one window of snapshots is ever held
/// in memory.
pub fn train_streaming(
    fom: &FomConfig,
    training: &[ParamPoint],
    build: &OfflineConfig,
    store: BasisStore,
) -> Result<TrainingOutcome> {
    if training.is_empty() {
        return Err(config("no training points"));
    }
    let v0 = training[0].v0;
    if training.iter().any(|mu| mu.v0 != v0) {
        return Err(config("training points must share v0 (it sets the velocity grid)"));
    }
    let grid = &fom.grid;
    let partition = partition_uniform(fom.t_final, build.n_windows)?;
    let tol = 1e-6 * fom.dt;
    let mut solvers = training
        .iter()
        .map(|&mu| FomSolver::new(fom, mu))
        .collect::<Result<Vec<_>>>()?;
    let mut seconds = vec![0.0; training.len()];
    let mut histories = vec![Vec::new(); training.len()];
    let initial_mass: Vec<f64> = solvers.iter().map(|s| s.state().iter().sum::<f64>() * grid.cell_area()).collect();
    let mut builder = ModelBuilder::new(grid, v0, fom.dt, partition.clone(), build, training, store)?;

    for m in 0..partition.n_windows() {
        let mut f_cols: Vec<f64> = Vec::new();
        let mut phi_cols: Vec<f64> = Vec::new();
        for (r, solver) in solvers.iter_mut().enumerate() {
            loop {
                if partition.window_of(solver.time(), tol) != Some(m) {
                    break;
                }
                if solver.is_stored_step() {
                    let s = solver.snapshot();
                    f_cols.extend_from_slice(s.f);
                    phi_cols.extend_from_slice(s.phi);
                    histories[r].push((s.time, s.max_e));
                }
                if solver.is_finished() {
                    break;
                }
                let start = Instant::now();
                solver.advance()?;
                seconds[r] += start.elapsed().as_secs_f64();
            }
        }
        let cols = phi_cols.len() / grid.nx;
        if cols == 0 {
            return Err(config(format!("window {m} holds no stored snapshots")));
        }
        let snaps = SnapshotMatrices {
            window_index: m,
            u_f: DMatrix::from_vec(grid.len(), cols, f_cols),
            u_phi: DMatrix::from_vec(grid.nx, cols, phi_cols),
        };
        builder.push(&snaps)?;
    }

    let fom_outcomes = solvers
        .iter()
        .enumerate()
        .map(|(r, s)| {
            let final_state = DistributionField {
                values: s.state().to_vec(),
                time: s.time(),
            };
            FomOutcome {
                final_mass: final_state.mass(grid),
                final_state,
                max_e_history: std::mem::take(&mut histories[r]),
                initial_mass: initial_mass[r],
                seconds: seconds[r],
            }
        })
        .collect();
    let (model, timings) = builder.finish()?;
    Ok(TrainingOutcome {
        model,
        fom: fom_outcomes,
        timings,
    })
}

/// Trains from full-order trajectories previously written to disk.
pub fn train_from_containers(
    manifests: &[PathBuf],
    build: &OfflineConfig,
    store: BasisStore,
) -> Result<(RomModel, OfflineTimings)> {
    let mut source = ContainerSnapshots::open(manifests)?;
    let first = source
        .manifests()
        .first()
        .cloned()
        .ok_or_else(|| config("no training trajectories"))?;
    let t_final = *first.times.last().ok_or_else(|| config("empty trajectory"))?;
    let partition = partition_uniform(t_final, build.n_windows)?;
    let groups = group_snapshots(&source, &partition)?;
    let training: Vec<ParamPoint> = source.manifests().iter().map(|m| m.mu).collect();
    let grid = first.grid.clone();
    let mut builder = ModelBuilder::new(&grid, first.mu.v0, first.dt, partition, build, &training, store)?;
    for g in &groups {
        let snaps = g.assemble(&mut source)?;
        builder.push(&snaps)?;
    }
    builder.finish()
}

/// Model built directly from explicit bases (tests, small demos).
pub fn model_from_bases(
    grid: &PhaseGrid,
    v0: f64,
    dt: f64,
    partition: WindowPartition,
    bases: &[WindowBasis],
    tensor_cap: usize,
) -> Result<RomModel> {
    if bases.len() != partition.n_windows() {
        return Err(config("one basis per window is required"));
    }
    let transport = LinearTransport::new(grid)?;
    let transitions = build_transitions(bases)?;
    let mut windows = Vec::with_capacity(bases.len());
    for (m, b) in bases.iter().enumerate() {
        let mut ops = build_window_operators(b, &transport, tensor_cap)?;
        ops.window_index = m;
        if let Some((t, tp)) = transitions.get(m) {
            ops.t_next = Some(t.clone());
            ops.t_next_phi = Some(tp.clone());
        }
        windows.push(WindowModel {
            ops,
            phi_phi: b.phi_phi.clone(),
            phi_e: b.phi_e.clone(),
            sv_f: b.sv_f.clone(),
            sv_phi: b.sv_phi.clone(),
            basis: FBasis::Memory(b.phi_f.clone()),
        });
    }
    let model = RomModel {
        grid: grid.clone(),
        v0,
        dt,
        partition,
        build: OfflineConfig {
            n_windows: bases.len(),
            tensor_cap,
            ..OfflineConfig::default()
        },
        training: Vec::new(),
        windows,
    };
    model.validate()?;
    Ok(model)
}

/// Checksum of every file in a model directory, for reproducibility checks.
pub fn model_digest(dir: &Path) -> Result<Vec<(String, String)>> {
    let manifest: ModelManifest = read_json(&dir.join(MODEL_MANIFEST))?;
    let mut out = Vec::new();
    for e in manifest.windows {
        out.push((e.operators_file.clone(), file_checksum(&dir.join(&e.operators_file))?));
        out.push((e.basis_file.clone(), file_checksum(&dir.join(&e.basis_file))?));
    }
    Ok(out)
}
