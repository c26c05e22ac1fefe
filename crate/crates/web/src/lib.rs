//! WebAssembly bindings for the demo page in `www/`.
//!
//! Three operations are exposed: the two-stream initial condition, a short
//! full-order run, and a corner-trained reduced model compared against the
//! full-order model at a chosen parameter point. Grids are kept small so
//! everything runs interactively in the browser.

use vlasov_twrom::fom::{fom_run_outcome, FomConfig};
use vlasov_twrom::offline::{train_streaming, BasisStore, OfflineConfig};
use vlasov_twrom::online::{reconstruct, rom_run, RomOptions};
use vlasov_twrom::pod::TruncationRule;
use vlasov_twrom::study::relative_error;
use vlasov_twrom::{initial_condition, ParamPoint, PhaseGrid};
use wasm_bindgen::prelude::*;

const MAX_CELLS: usize = 128 * 128;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn demo_grid(nx: usize, nv: usize) -> Result<PhaseGrid, JsError> {
    if nx * nv > MAX_CELLS {
        return Err(JsError::new(&format!("grid {nx}x{nv} is too large for the demo (max {MAX_CELLS} cells)")));
    }
    PhaseGrid::new(nx, nv, 1.0).map_err(js_err)
}

fn demo_config(grid: PhaseGrid, t_final: f64) -> Result<FomConfig, JsError> {
    let mut cfg = FomConfig::new(grid);
    cfg.t_final = t_final;
    cfg.n_steps().map_err(js_err)?;
    Ok(cfg)
}

/// Phase-space field, x-major (`values[ix * nv + iv]`).
#[wasm_bindgen]
pub struct Field {
    nx: usize,
    nv: usize,
    values: Vec<f64>,
}

#[wasm_bindgen]
impl Field {
    #[wasm_bindgen(getter)]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[wasm_bindgen(getter)]
    pub fn nv(&self) -> usize {
        self.nv
    }

    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }
}

#[wasm_bindgen]
pub fn two_stream_initial(nx: usize, nv: usize, temperature: f64, alpha: f64) -> Result<Field, JsError> {
    let grid = demo_grid(nx, nv)?;
    let mu = ParamPoint::new(temperature, alpha, 1.0).map_err(js_err)?;
    Ok(Field {
        nx,
        nv,
        values: initial_condition(&grid, &mu).values,
    })
}

#[wasm_bindgen]
pub struct FomResult {
    field: Field,
    times: Vec<f64>,
    max_e: Vec<f64>,
    mass_drift: f64,
}

#[wasm_bindgen]
impl FomResult {
    pub fn field(&self) -> Field {
        Field {
            nx: self.field.nx,
            nv: self.field.nv,
            values: self.field.values.clone(),
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }

    pub fn max_e(&self) -> Vec<f64> {
        self.max_e.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn mass_drift(&self) -> f64 {
        self.mass_drift
    }
}

/// Full-order run to `t_final`, returning the final field and the max|E| history.
#[wasm_bindgen]
pub fn run_fom(nx: usize, nv: usize, temperature: f64, alpha: f64, t_final: f64) -> Result<FomResult, JsError> {
    let cfg = demo_config(demo_grid(nx, nv)?, t_final)?;
    let mu = ParamPoint::new(temperature, alpha, 1.0).map_err(js_err)?;
    let (out, _) = fom_run_outcome(&cfg, mu, &[]).map_err(js_err)?;
    let (times, max_e) = out.max_e_history.iter().copied().unzip();
    Ok(FomResult {
        field: Field {
            nx,
            nv,
            values: out.final_state.values,
        },
        times,
        max_e,
        mass_drift: (out.final_mass - out.initial_mass).abs() / out.initial_mass,
    })
}

#[wasm_bindgen]
pub struct Comparison {
    fom: Field,
    rom: Field,
    times: Vec<f64>,
    fom_max_e: Vec<f64>,
    rom_max_e: Vec<f64>,
    error: f64,
    fom_seconds: f64,
    rom_seconds: f64,
    basis_sizes: Vec<usize>,
}

#[wasm_bindgen]
impl Comparison {
    pub fn fom(&self) -> Field {
        Field {
            nx: self.fom.nx,
            nv: self.fom.nv,
            values: self.fom.values.clone(),
        }
    }

    pub fn rom(&self) -> Field {
        Field {
            nx: self.rom.nx,
            nv: self.rom.nv,
            values: self.rom.values.clone(),
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }

    pub fn fom_max_e(&self) -> Vec<f64> {
        self.fom_max_e.clone()
    }

    /// Reduced max|E| sampled at the full-order times.
    pub fn rom_max_e(&self) -> Vec<f64> {
        self.rom_max_e.clone()
    }

    /// Relative L2 error of the reduced field at the final time.
    #[wasm_bindgen(getter)]
    pub fn error(&self) -> f64 {
        self.error
    }

    #[wasm_bindgen(getter)]
    pub fn fom_seconds(&self) -> f64 {
        self.fom_seconds
    }

    #[wasm_bindgen(getter)]
    pub fn rom_seconds(&self) -> f64 {
        self.rom_seconds
    }

    /// `n_f` per window.
    pub fn basis_sizes(&self) -> Vec<usize> {
        self.basis_sizes.clone()
    }
}

/// Trains on the four corners of `[0.08, 0.1] × [0.001, 0.0025]`, then runs
/// both models at `(temperature, alpha)`.
#[wasm_bindgen]
pub fn compare_rom(
    nx: usize,
    nv: usize,
    t_final: f64,
    windows: usize,
    energy: f64,
    temperature: f64,
    alpha: f64,
) -> Result<Comparison, JsError> {
    let grid = demo_grid(nx, nv)?;
    let cfg = demo_config(grid.clone(), t_final)?;
    let mu = ParamPoint::new(temperature, alpha, 1.0).map_err(js_err)?;
    let corners: Vec<ParamPoint> = [(0.08, 0.001), (0.08, 0.0025), (0.1, 0.001), (0.1, 0.0025)]
        .iter()
        .map(|&(t, a)| ParamPoint::new(t, a, 1.0))
        .collect::<Result<_, _>>()
        .map_err(js_err)?;
    let rule = TruncationRule::EnergyFraction { energy };
    let build = OfflineConfig {
        n_windows: windows,
        rule_f: rule,
        rule_phi: rule,
        ..OfflineConfig::default()
    };
    let trained = train_streaming(&cfg, &corners, &build, BasisStore::Memory).map_err(js_err)?;
    let model = trained.model;
    let traj = rom_run(&model, &mu, &RomOptions::default()).map_err(js_err)?;
    let rom = reconstruct(&traj, &model, &[t_final]).map_err(js_err)?.remove(0);
    let (fom, _) = fom_run_outcome(&cfg, mu, &[]).map_err(js_err)?;
    let error = relative_error(&fom.final_state.values, &rom.values).map_err(js_err)?;
    let times: Vec<f64> = fom.max_e_history.iter().map(|p| p.0).collect();
    let rom_max_e = times
        .iter()
        .map(|&t| {
            let i = traj.max_e_history.partition_point(|p| p.0 < t - 1e-9);
            traj.max_e_history.get(i).map_or(f64::NAN, |p| p.1)
        })
        .collect();
    Ok(Comparison {
        fom: Field {
            nx,
            nv,
            values: fom.final_state.values,
        },
        rom: Field { nx, nv, values: rom.values },
        fom_max_e: fom.max_e_history.iter().map(|p| p.1).collect(),
        times,
        rom_max_e,
        error,
        fom_seconds: fom.seconds,
        rom_seconds: traj.online_seconds(),
        basis_sizes: model.windows.iter().map(|w| w.ops.n_f).collect(),
    })
}
