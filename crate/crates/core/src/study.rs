//! Parameter study: train on the domain corners, sweep the reduced model
//! over the test lattice, compare against full-order runs, and write the
//! report artifacts.
//!
//! Work is checkpointed under the workspace directory: the trained model
//! and every finished parameter point are persisted, so an interrupted
//! study resumes where it stopped.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use web_time::Instant;

use serde::{Deserialize, Serialize};

use crate::container::{read_json, write_json, BlockSpec, ContainerWriter, Header, Layout, PayloadKind};
use crate::error::{config, Error, Result};
use crate::fom::{fom_run_outcome, FomConfig, FomOutcome, DEFAULT_DT, DEFAULT_T_FINAL};
use crate::grid::{DistributionField, ParamPoint, PhaseGrid};
use crate::offline::{train_streaming, BasisStore, OfflineConfig, OfflineTimings, RomModel, DEFAULT_TENSOR_CAP};
use crate::online::{reconstruct, rom_run, LoopStats, RomOptions, RomTrajectory};
use crate::pod::TruncationRule;
use crate::snapshots::DEFAULT_WINDOWS;

/// `‖f − f̃‖₂ / ‖f‖₂`.
pub fn relative_error(f_fom: &[f64], f_rom: &[f64]) -> Result<f64> {
    if f_fom.len() != f_rom.len() {
        return Err(Error::Dimension(format!("{} vs {} values", f_fom.len(), f_rom.len())));
    }
    let den: f64 = f_fom.iter().map(|a| a * a).sum();
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    let num: f64 = f_fom.iter().zip(f_rom).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((num / den).sqrt())
}

/// [`relative_error`] for two fields at the same time.
pub fn relative_error_fields(f_fom: &DistributionField, f_rom: &DistributionField) -> Result<f64> {
    if (f_fom.time - f_rom.time).abs() > 1e-9 * f_fom.time.abs().max(1.0) {
        return Err(config(format!("fields at t = {} and t = {}", f_fom.time, f_rom.time)));
    }
    relative_error(&f_fom.values, &f_rom.values)
}

/// Least-squares slope of `ln max|E|` over `[t_start, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub t_start: f64,
    pub t_end: f64,
    pub slope: f64,
}

/// Locates the exponential-growth stage of a max|E| history: it ends when
/// the field first reaches a tenth of its peak, and starts at the last
/// earlier time the field was a further decade lower.
pub fn growth_window(history: &[(f64, f64)]) -> Option<(f64, f64)> {
    let peak = history.iter().map(|p| p.1).fold(0.0, f64::max);
    if !(peak > 0.0) {
        return None;
    }
    let end = history.iter().position(|p| p.1 >= 0.1 * peak)?;
    let floor = 0.1 * history[end].1;
    let start = history[..end].iter().rposition(|p| p.1 <= floor)?;
    (end > start + 1).then(|| (history[start].0, history[end].0))
}

/// Slope of `ln max|E|` over the samples inside `[t0, t1]`.
pub fn growth_slope(history: &[(f64, f64)], t0: f64, t1: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = history
        .iter()
        .filter(|p| p.0 >= t0 - 1e-12 && p.0 <= t1 + 1e-12 && p.1 > 0.0)
        .map(|p| (p.0, p.1.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Growth-stage slopes of the full-order and reduced histories, both fitted
/// over the stage located in the full-order history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthComparison {
    pub fom: GrowthFit,
    pub rom_slope: f64,
    pub relative_difference: f64,
}

pub fn compare_growth(fom: &[(f64, f64)], rom: &[(f64, f64)]) -> Option<GrowthComparison> {
    let (t0, t1) = growth_window(fom)?;
    let s_fom = growth_slope(fom, t0, t1)?;
    let s_rom = growth_slope(rom, t0, t1)?;
    Some(GrowthComparison {
        fom: GrowthFit {
            t_start: t0,
            t_end: t1,
            slope: s_fom,
        },
        rom_slope: s_rom,
        relative_difference: (s_rom - s_fom).abs() / s_fom.abs(),
    })
}

/// POD energy fraction used by the study. The two-stream perturbation holds
/// only ~1e-6 of the snapshot energy next to the Maxwellian background, so
/// looser fractions drop the modes that carry the instability.
pub const STUDY_ENERGY: f64 = 1.0 - 1e-10;

fn round9(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

fn mu(t: f64, a: f64, v0: f64) -> ParamPoint {
    ParamPoint {
        temperature: t,
        alpha: a,
        v0,
    }
}

/// Study settings; every field has a default so partial JSON files work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub nx: usize,
    pub nv: usize,
    pub v0: f64,
    pub temperature_range: [f64; 2],
    pub alpha_range: [f64; 2],
    pub n_temperature: usize,
    pub n_alpha: usize,
    pub dt: f64,
    pub t_final: f64,
    pub n_windows: usize,
    pub energy_f: f64,
    pub energy_phi: f64,
    /// Fixed basis sizes override the energy rules when set.
    pub fixed_f: Option<usize>,
    pub fixed_phi: Option<usize>,
    pub tensor_cap: usize,
    /// Points outside the lattice run with both models but stay out of the
    /// lattice error statistics.
    pub extras: Vec<ParamPoint>,
    /// Points whose reconstructions are dumped at `recon_times`.
    pub recon_points: Vec<ParamPoint>,
    pub recon_times: Vec<f64>,
    /// Full-order comparison only at corners plus `fast_points`.
    pub fast: bool,
    pub fast_points: Vec<ParamPoint>,
    /// Points whose growth-stage slopes are compared.
    pub growth_points: Vec<ParamPoint>,
    pub field_per_stage: bool,
    pub jobs: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            nx: 256,
            nv: 256,
            v0: 1.0,
            temperature_range: [0.08, 0.1],
            alpha_range: [0.001, 0.0025],
            n_temperature: 9,
            n_alpha: 7,
            dt: DEFAULT_DT,
            t_final: DEFAULT_T_FINAL,
            n_windows: DEFAULT_WINDOWS,
            energy_f: STUDY_ENERGY,
            energy_phi: STUDY_ENERGY,
            fixed_f: None,
            fixed_phi: None,
            tensor_cap: DEFAULT_TENSOR_CAP,
            extras: vec![mu(0.07, 0.001, 1.0), mu(0.07, 0.0025, 1.0)],
            recon_points: vec![mu(0.095, 0.00225, 1.0), mu(0.08, 0.0015, 1.0), mu(0.07, 0.0025, 1.0)],
            recon_times: vec![8.0, 10.0],
            fast: false,
            fast_points: vec![
                mu(0.08, 0.0015, 1.0),
                mu(0.085, 0.002, 1.0),
                mu(0.09, 0.00175, 1.0),
                mu(0.095, 0.00225, 1.0),
                mu(0.1, 0.00125, 1.0),
            ],
            growth_points: vec![mu(0.08, 0.0015, 1.0), mu(0.095, 0.00225, 1.0)],
            field_per_stage: true,
            jobs: 1,
        }
    }
}

fn same_point(a: &ParamPoint, b: &ParamPoint) -> bool {
    (a.temperature - b.temperature).abs() < 1e-12 && (a.alpha - b.alpha).abs() < 1e-12 && (a.v0 - b.v0).abs() < 1e-12
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        PhaseGrid::new(self.nx, self.nv, self.v0)?;
        if self.n_temperature < 2 || self.n_alpha < 2 {
            return Err(config("the lattice needs at least two values per parameter"));
        }
        if !(self.temperature_range[0] < self.temperature_range[1] && self.alpha_range[0] < self.alpha_range[1]) {
            return Err(config("parameter ranges must be increasing"));
        }
        if self.jobs == 0 {
            return Err(config("jobs must be at least 1"));
        }
        for p in self.lattice().iter().chain(&self.extras) {
            p.validate()?;
        }
        self.fom_config()?.n_steps()?;
        self.offline_config().rule_f.validate()?;
        self.offline_config().rule_phi.validate()
    }

    pub fn grid(&self) -> Result<PhaseGrid> {
        PhaseGrid::new(self.nx, self.nv, self.v0)
    }

    pub fn fom_config(&self) -> Result<FomConfig> {
        let mut c = FomConfig::new(self.grid()?);
        c.dt = self.dt;
        c.t_final = self.t_final;
        Ok(c)
    }

    pub fn offline_config(&self) -> OfflineConfig {
        let rule = |fixed: Option<usize>, energy: f64| match fixed {
            Some(n) => TruncationRule::FixedCount { n },
            None => TruncationRule::EnergyFraction { energy },
        };
        OfflineConfig {
            n_windows: self.n_windows,
            rule_f: rule(self.fixed_f, self.energy_f),
            rule_phi: rule(self.fixed_phi, self.energy_phi),
            tensor_cap: self.tensor_cap,
        }
    }

    pub fn rom_options(&self) -> RomOptions {
        RomOptions {
            dt: self.dt,
            field_per_stage: self.field_per_stage,
            lift_handoffs: false,
        }
    }

    /// Evenly spaced `n_T × n_α` lattice, T-major.
    pub fn lattice(&self) -> Vec<ParamPoint> {
        let lin = |r: [f64; 2], n: usize, i: usize| round9(r[0] + (r[1] - r[0]) * i as f64 / (n - 1) as f64);
        let mut out = Vec::with_capacity(self.n_temperature * self.n_alpha);
        for i in 0..self.n_temperature {
            for j in 0..self.n_alpha {
                out.push(mu(
                    lin(self.temperature_range, self.n_temperature, i),
                    lin(self.alpha_range, self.n_alpha, j),
                    self.v0,
                ));
            }
        }
        out
    }

    /// The four domain corners, used as training points.
    pub fn corners(&self) -> Vec<ParamPoint> {
        let [t0, t1] = self.temperature_range;
        let [a0, a1] = self.alpha_range;
        vec![mu(t0, a0, self.v0), mu(t0, a1, self.v0), mu(t1, a0, self.v0), mu(t1, a1, self.v0)]
    }

    pub fn is_corner(&self, p: &ParamPoint) -> bool {
        self.corners().iter().any(|c| same_point(c, p))
    }

    /// Whether the full-order model is run at `p` for comparison.
    pub fn compares(&self, p: &ParamPoint) -> bool {
        !self.fast
            || self.is_corner(p)
            || self.extras.iter().any(|e| same_point(e, p))
            || self.fast_points.iter().any(|e| same_point(e, p))
            || self.growth_points.iter().any(|e| same_point(e, p))
    }

    /// Lattice points followed by extras.
    pub fn all_points(&self) -> Vec<ParamPoint> {
        let mut pts = self.lattice();
        for e in &self.extras {
            if !pts.iter().any(|p| same_point(p, e)) {
                pts.push(*e);
            }
        }
        pts
    }
}

/// Outcome at one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub mu: ParamPoint,
    pub training: bool,
    pub in_lattice: bool,
    pub epsilon: Option<f64>,
    pub fom_seconds: Option<f64>,
    pub rom_seconds: f64,
    pub rom_loop_seconds: f64,
    pub fom_mass_drift: Option<f64>,
    pub fom_max_e: Option<Vec<(f64, f64)>>,
    pub rom_max_e: Vec<(f64, f64)>,
    pub growth: Option<GrowthComparison>,
    pub loop_stats: LoopStats,
}

impl PointResult {
    pub fn speedup(&self) -> Option<f64> {
        self.fom_seconds.map(|f| f / self.rom_seconds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub points: Vec<PointResult>,
    pub n_f: Vec<usize>,
    pub n_phi: Vec<usize>,
    pub offline: OfflineTimings,
    pub training_fom_seconds: f64,
    pub offline_seconds: f64,
    pub tensor_bytes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainingCheckpoint {
    fom: FomConfig,
    build: OfflineConfig,
    corners: Vec<ParamPoint>,
    outcomes: Vec<CornerOutcome>,
    timings: OfflineTimings,
    offline_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CornerOutcome {
    seconds: f64,
    initial_mass: f64,
    final_mass: f64,
    max_e_history: Vec<(f64, f64)>,
    final_state_file: String,
}

/// Workspace layout of a study.
#[derive(Debug, Clone)]
pub struct StudyPaths {
    pub root: PathBuf,
}

impl StudyPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn model(&self) -> PathBuf {
        self.root.join("model")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.root.join("checkpoint")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    fn point(&self, p: &ParamPoint) -> PathBuf {
        self.checkpoint().join("points").join(format!("{}.json", p.tag()))
    }

    fn training(&self) -> PathBuf {
        self.checkpoint().join("training.json")
    }

    fn config(&self) -> PathBuf {
        self.checkpoint().join("study.json")
    }
}

/// Writes one reconstructed field as a single-record container `[t, f]`.
pub fn write_field_dump(path: &Path, grid: &PhaseGrid, dt: f64, mu: ParamPoint, f: &DistributionField) -> Result<String> {
    let layout = Layout {
        blocks: vec![BlockSpec::new("t", &[1]), BlockSpec::new("f", &[grid.nx, grid.nv])],
        meta: serde_json::Value::Null,
    };
    let mut w = ContainerWriter::create(path, Header::new(PayloadKind::FieldDump, grid, dt, 1, mu, layout))?;
    w.write_parts(&[&[f.time], &f.values])?;
    w.finish()
}

fn read_field_dump(path: &Path) -> Result<DistributionField> {
    let mut r = crate::container::ContainerReader::open(path)?;
    let rec = r.read_record(0)?;
    Ok(DistributionField {
        time: rec[0],
        values: rec[1..].to_vec(),
    })
}

/// Trains the model (or reloads it from the checkpoint) and returns it with
/// the corner full-order outcomes.
fn training_stage(cfg: &StudyConfig, paths: &StudyPaths) -> Result<(RomModel, Vec<FomOutcome>, TrainingCheckpoint)> {
    let fom = cfg.fom_config()?;
    let build = cfg.offline_config();
    let corners = cfg.corners();
    if let Ok(ck) = read_json::<TrainingCheckpoint>(&paths.training()) {
        if ck.fom == fom && ck.build == build && ck.corners == corners {
            if let Ok(model) = RomModel::load(&paths.model()) {
                log::info!("reusing trained model from {}", paths.model().display());
                let outcomes = ck
                    .outcomes
                    .iter()
                    .map(|c| {
                        Ok(FomOutcome {
                            final_state: read_field_dump(&paths.checkpoint().join(&c.final_state_file))?,
                            max_e_history: c.max_e_history.clone(),
                            initial_mass: c.initial_mass,
                            final_mass: c.final_mass,
                            seconds: c.seconds,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                return Ok((model, outcomes, ck));
            }
        }
    }
    log::info!("training on {} corners ({}x{} grid)", corners.len(), cfg.nx, cfg.nv);
    let start = Instant::now();
    let out = train_streaming(&fom, &corners, &build, BasisStore::Directory(paths.model()))?;
    let total = start.elapsed().as_secs_f64();
    let fom_seconds: f64 = out.fom.iter().map(|o| o.seconds).sum();
    std::fs::create_dir_all(paths.checkpoint())?;
    let mut outcomes = Vec::new();
    for (c, o) in corners.iter().zip(&out.fom) {
        let file = format!("final_{}.vrom", c.tag());
        write_field_dump(&paths.checkpoint().join(&file), &fom.grid, fom.dt, *c, &o.final_state)?;
        outcomes.push(CornerOutcome {
            seconds: o.seconds,
            initial_mass: o.initial_mass,
            final_mass: o.final_mass,
            max_e_history: o.max_e_history.clone(),
            final_state_file: file,
        });
    }
    let ck = TrainingCheckpoint {
        fom,
        build,
        corners,
        outcomes,
        timings: out.timings.clone(),
        offline_seconds: total - fom_seconds,
    };
    write_json(&paths.training(), &ck)?;
    Ok((out.model, out.fom, ck))
}

/// Trains the study's model on the corners into `workspace/model`, reusing a
/// checkpointed build with the same settings.
pub fn train_model(cfg: &StudyConfig, workspace: &Path) -> Result<RomModel> {
    cfg.validate()?;
    Ok(training_stage(cfg, &StudyPaths::new(workspace))?.0)
}

fn max_e_at(history: &[(f64, f64)], t: f64) -> Option<f64> {
    let i = history.partition_point(|p| p.0 < t - 1e-9);
    history.get(i).filter(|p| (p.0 - t).abs() < 1e-9).map(|p| p.1)
}

fn evaluate_point(
    cfg: &StudyConfig,
    paths: &StudyPaths,
    model: &RomModel,
    p: &ParamPoint,
    corner: Option<&FomOutcome>,
) -> Result<PointResult> {
    let traj: RomTrajectory = rom_run(model, p, &cfg.rom_options())?;
    let t_f = model.partition.t_final();
    let rom_final = reconstruct(&traj, model, &[t_f])?.remove(0);

    if cfg.recon_points.iter().any(|r| same_point(r, p)) {
        let fields = reconstruct(&traj, model, &cfg.recon_times)?;
        std::fs::create_dir_all(paths.reports())?;
        for f in &fields {
            let name = format!("recon_{}_{}.bin", p.tag(), f.time);
            write_field_dump(&paths.reports().join(name), &model.grid, cfg.dt, *p, f)?;
        }
    }

    let owned;
    let fom = match corner {
        Some(c) => Some(c),
        None if cfg.compares(p) => {
            owned = fom_run_outcome(&cfg.fom_config()?, *p, &[])?.0;
            Some(&owned)
        }
        None => None,
    };
    let epsilon = fom.map(|f| relative_error(&f.final_state.values, &rom_final.values)).transpose()?;
    let growth = fom.and_then(|f| compare_growth(&f.max_e_history, &traj.max_e_history));
    Ok(PointResult {
        mu: *p,
        training: corner.is_some(),
        in_lattice: cfg.lattice().iter().any(|q| same_point(q, p)),
        epsilon,
        fom_seconds: fom.map(|f| f.seconds),
        rom_seconds: traj.online_seconds(),
        rom_loop_seconds: traj.loop_seconds,
        fom_mass_drift: fom.map(|f| (f.final_mass - f.initial_mass).abs() / f.initial_mass.abs()),
        fom_max_e: fom.map(|f| f.max_e_history.clone()),
        rom_max_e: traj.max_e_history,
        growth,
        loop_stats: traj.stats,
    })
}

/// Runs (or resumes) the full study in `workspace`.
pub fn run_study(cfg: &StudyConfig, workspace: &Path) -> Result<StudyReport> {
    cfg.validate()?;
    let paths = StudyPaths::new(workspace);
    std::fs::create_dir_all(paths.checkpoint().join("points"))?;
    // a changed configuration invalidates finished points
    // the worker count does not change results
    let key = StudyConfig { jobs: 1, ..cfg.clone() };
    if read_json::<StudyConfig>(&paths.config()).ok().map(|c| StudyConfig { jobs: 1, ..c }).as_ref() != Some(&key) {
        for entry in std::fs::read_dir(paths.checkpoint().join("points"))? {
            std::fs::remove_file(entry?.path())?;
        }
        write_json(&paths.config(), &key)?;
    }

    let (model, corner_outcomes, ck) = training_stage(cfg, &paths)?;
    let corners = cfg.corners();
    let points = cfg.all_points();

    let next = AtomicUsize::new(0);
    let results: Mutex<BTreeMap<usize, PointResult>> = Mutex::new(BTreeMap::new());
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    std::thread::scope(|s| {
        for _ in 0..cfg.jobs.min(points.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= points.len() || failure.lock().unwrap().is_some() {
                    break;
                }
                let p = &points[i];
                let path = paths.point(p);
                let result = match read_json::<PointResult>(&path) {
                    Ok(r) => Ok(r),
                    Err(_) => {
                        let corner = corners.iter().position(|c| same_point(c, p)).map(|k| &corner_outcomes[k]);
                        evaluate_point(cfg, &paths, &model, p, corner).and_then(|r| {
                            write_json(&path, &r)?;
                            Ok(r)
                        })
                    }
                };
                match result {
                    Ok(r) => {
                        log::info!(
                            "{}: eps = {}, rom {:.3} s",
                            p.tag(),
                            r.epsilon.map_or("-".into(), |e| format!("{e:.4}")),
                            r.rom_seconds
                        );
                        results.lock().unwrap().insert(i, r);
                    }
                    Err(e) => {
                        failure.lock().unwrap().get_or_insert(e);
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let points: Vec<PointResult> = results.into_inner().unwrap().into_values().collect();
    Ok(StudyReport {
        config: cfg.clone(),
        points,
        n_f: model.windows.iter().map(|w| w.ops.n_f).collect(),
        n_phi: model.windows.iter().map(|w| w.ops.n_phi).collect(),
        offline: ck.timings,
        training_fom_seconds: ck.outcomes.iter().map(|c| c.seconds).sum(),
        offline_seconds: ck.offline_seconds,
        tensor_bytes: model.tensor_bytes(),
    })
}

/// Reassembles a report from a finished (or partial) study workspace.
pub fn load_report(workspace: &Path) -> Result<StudyReport> {
    let paths = StudyPaths::new(workspace);
    let cfg: StudyConfig = read_json(&paths.config())?;
    let ck: TrainingCheckpoint = read_json(&paths.training())?;
    let model = RomModel::load(&paths.model())?;
    let points = cfg
        .all_points()
        .iter()
        .filter_map(|p| read_json::<PointResult>(&paths.point(p)).ok())
        .collect();
    Ok(StudyReport {
        n_f: model.windows.iter().map(|w| w.ops.n_f).collect(),
        n_phi: model.windows.iter().map(|w| w.ops.n_phi).collect(),
        tensor_bytes: model.tensor_bytes(),
        config: cfg,
        points,
        offline: ck.timings,
        training_fom_seconds: ck.outcomes.iter().map(|c| c.seconds).sum(),
        offline_seconds: ck.offline_seconds,
    })
}

/// Aggregates written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub corner_errors: Vec<(ParamPoint, f64)>,
    pub max_corner_error: Option<f64>,
    /// Over every lattice point with a full-order comparison.
    pub max_lattice_error: Option<f64>,
    pub max_test_error: Option<f64>,
    pub max_test_error_at: Option<ParamPoint>,
    pub compared_points: usize,
    pub lattice_points: usize,
    pub speedup_min: Option<f64>,
    pub speedup_median: Option<f64>,
    pub speedup_max: Option<f64>,
    pub mean_fom_seconds: Option<f64>,
    pub mean_rom_seconds: f64,
    pub growth: Vec<(ParamPoint, GrowthComparison)>,
    pub max_mass_drift: Option<f64>,
    pub full_order_ops_in_loop: u64,
    pub max_loop_vector_len: usize,
    pub n_f_range: (usize, usize),
    pub n_phi_range: (usize, usize),
    pub tensor_bytes: usize,
    pub offline_seconds: f64,
    pub training_fom_seconds: f64,
}

fn fmax(it: impl Iterator<Item = f64>) -> Option<f64> {
    it.fold(None, |m, x| Some(m.map_or(x, |m: f64| m.max(x))))
}

impl StudyReport {
    pub fn summary(&self) -> StudySummary {
        let pts = &self.points;
        let corner_errors: Vec<_> = pts
            .iter()
            .filter(|p| p.training)
            .filter_map(|p| p.epsilon.map(|e| (p.mu, e)))
            .collect();
        let lattice: Vec<&PointResult> = pts.iter().filter(|p| p.in_lattice && p.epsilon.is_some()).collect();
        let test = lattice.iter().filter(|p| !p.training).max_by(|a, b| a.epsilon.unwrap_or(0.0).total_cmp(&b.epsilon.unwrap_or(0.0)));
        let mut speedups: Vec<f64> = pts.iter().filter_map(PointResult::speedup).collect();
        speedups.sort_by(f64::total_cmp);
        let fom_secs: Vec<f64> = pts.iter().filter_map(|p| p.fom_seconds).collect();
        let growth = self
            .config
            .growth_points
            .iter()
            .filter_map(|g| pts.iter().find(|p| same_point(&p.mu, g)))
            .filter_map(|p| p.growth.map(|c| (p.mu, c)))
            .collect();
        let range = |v: &[usize]| (v.iter().copied().min().unwrap_or(0), v.iter().copied().max().unwrap_or(0));
        StudySummary {
            max_corner_error: fmax(corner_errors.iter().map(|c| c.1)),
            corner_errors,
            max_lattice_error: fmax(lattice.iter().filter_map(|p| p.epsilon)),
            max_test_error: test.and_then(|p| p.epsilon),
            max_test_error_at: test.map(|p| p.mu),
            compared_points: lattice.len(),
            lattice_points: pts.iter().filter(|p| p.in_lattice).count(),
            speedup_min: speedups.first().copied(),
            speedup_median: (!speedups.is_empty()).then(|| speedups[speedups.len() / 2]),
            speedup_max: speedups.last().copied(),
            mean_fom_seconds: (!fom_secs.is_empty()).then(|| fom_secs.iter().sum::<f64>() / fom_secs.len() as f64),
            mean_rom_seconds: pts.iter().map(|p| p.rom_seconds).sum::<f64>() / pts.len().max(1) as f64,
            growth,
            max_mass_drift: fmax(pts.iter().filter_map(|p| p.fom_mass_drift)),
            full_order_ops_in_loop: pts.iter().map(|p| p.loop_stats.full_order_ops).sum(),
            max_loop_vector_len: pts.iter().map(|p| p.loop_stats.max_vector_len).max().unwrap_or(0),
            n_f_range: range(&self.n_f),
            n_phi_range: range(&self.n_phi),
            tensor_bytes: self.tensor_bytes,
            offline_seconds: self.offline_seconds,
            training_fom_seconds: self.training_fom_seconds,
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

/// Writes `errors.csv`, `maxE_<μ>.csv`, `timing.csv` and `summary.json`
/// into `outdir`. Reconstruction dumps are written during the study.
pub fn emit_reports(report: &StudyReport, outdir: &Path) -> Result<Vec<PathBuf>> {
    if report.points.is_empty() {
        return Err(config("the report has no parameter points"));
    }
    std::fs::create_dir_all(outdir)?;
    let mut written = Vec::new();
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));

    let path = outdir.join("errors.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.write_record(["T", "alpha", "epsilon", "training"]).map_err(csv_err)?;
    for p in report.points.iter().filter(|p| p.in_lattice) {
        w.write_record([
            p.mu.temperature.to_string(),
            p.mu.alpha.to_string(),
            opt(p.epsilon),
            p.training.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    written.push(path);

    for p in &report.points {
        let Some(fom) = &p.fom_max_e else { continue };
        let path = outdir.join(format!("maxE_{}.csv", p.mu.tag()));
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(["t", "fom", "rom"]).map_err(csv_err)?;
        for &(t, e) in fom {
            w.write_record([t.to_string(), format!("{e:e}"), opt(max_e_at(&p.rom_max_e, t))])
                .map_err(csv_err)?;
        }
        w.flush()?;
        written.push(path);
    }

    let path = outdir.join("timing.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.write_record(["T", "alpha", "v0", "fom_seconds", "rom_seconds", "speedup"])
        .map_err(csv_err)?;
    for p in &report.points {
        w.write_record([
            p.mu.temperature.to_string(),
            p.mu.alpha.to_string(),
            p.mu.v0.to_string(),
            opt(p.fom_seconds),
            format!("{:e}", p.rom_seconds),
            opt(p.speedup()),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    written.push(path);

    let path = outdir.join("summary.json");
    write_json(
        &path,
        &serde_json::json!({
            "summary": report.summary(),
            "config": report.config,
            "n_f": report.n_f,
            "n_phi": report.n_phi,
            "offline": report.offline,
        }),
    )?;
    written.push(path);
    Ok(written)
}
