use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use vlasov_twrom::container::write_fom_trajectory;
use vlasov_twrom::offline::RomModel;
use vlasov_twrom::online::{reconstruct, rom_run};
use vlasov_twrom::study::{emit_reports, load_report, run_study, train_model, write_field_dump, StudyConfig};
use vlasov_twrom::ParamPoint;

#[derive(Parser)]
#[command(name = "vlasov-twrom", version, about = "Time-windowed reduced-order modelling of two-stream Vlasov-Poisson runs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON study configuration; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding models, checkpoints and reports.
    #[arg(long, global = true, default_value = "workspace")]
    workspace: PathBuf,
    /// Phase-space cells in x and v.
    #[arg(long, global = true, num_args = 2, value_names = ["NX", "NV"])]
    grid: Option<Vec<usize>>,
    /// Number of uniform time windows.
    #[arg(long, global = true)]
    windows: Option<usize>,
    /// POD energy fraction for both bases.
    #[arg(long, global = true)]
    energy: Option<f64>,
    /// Compare against the full-order model only at a few sample points.
    #[arg(long, global = true)]
    fast: bool,
    /// Parallel workers for the lattice sweep.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full-order model and store its trajectory.
    Fom(PointArgs),
    /// Train the reduced model on the domain corners.
    Train,
    /// Run the trained reduced model at one parameter point.
    Rom(PointArgs),
    /// Train, sweep the test lattice and write all reports.
    Study,
    /// Rewrite the reports of a finished (or partial) study.
    Report,
}

#[derive(Args)]
struct PointArgs {
    #[arg(long, allow_negative_numbers = true)]
    temperature: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    v0: f64,
}

impl PointArgs {
    fn point(&self) -> Result<ParamPoint> {
        Ok(ParamPoint::new(self.temperature, self.alpha, self.v0)?)
    }
}

fn load_config(c: &Common) -> Result<StudyConfig> {
    let mut cfg: StudyConfig = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => StudyConfig::default(),
    };
    if let Some(g) = &c.grid {
        cfg.nx = g[0];
        cfg.nv = g[1];
    }
    if let Some(w) = c.windows {
        cfg.n_windows = w;
    }
    if let Some(e) = c.energy {
        cfg.energy_f = e;
        cfg.energy_phi = e;
    }
    if c.fast {
        cfg.fast = true;
    }
    if let Some(j) = c.jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_max_e(path: &Path, history: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "max_e"])?;
    for (t, e) in history {
        w.write_record([t.to_string(), format!("{e:e}")])?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = load_config(&cli.common)?;
    let ws = &cli.common.workspace;
    std::fs::create_dir_all(ws)?;
    match &cli.command {
        Command::Fom(p) => {
            let mu = p.point()?;
            let dir = ws.join("fom");
            std::fs::create_dir_all(&dir)?;
            let manifest = write_fom_trajectory(&cfg.fom_config()?, mu, &dir.join(format!("{}.vrom", mu.tag())))?;
            println!("{}", manifest.display());
        }
        Command::Train => {
            let model = train_model(&cfg, ws)?;
            let n_f: Vec<usize> = model.windows.iter().map(|w| w.ops.n_f).collect();
            info!(
                "{} windows, n_f {}..{}, tensors {} bytes",
                model.n_windows(),
                n_f.iter().min().unwrap_or(&0),
                n_f.iter().max().unwrap_or(&0),
                model.tensor_bytes()
            );
            println!("{}", ws.join("model").display());
        }
        Command::Rom(p) => {
            let mu = p.point()?;
            let model = RomModel::load(&ws.join("model")).context("loading the trained model (run `train` first)")?;
            let traj = rom_run(&model, &mu, &cfg.rom_options())?;
            let dir = ws.join("rom");
            std::fs::create_dir_all(&dir)?;
            write_max_e(&dir.join(format!("maxE_{}.csv", mu.tag())), &traj.max_e_history)?;
            let t_f = model.partition.t_final();
            let f = reconstruct(&traj, &model, &[t_f])?.remove(0);
            let out = dir.join(format!("recon_{}_{}.bin", mu.tag(), t_f));
            write_field_dump(&out, &model.grid, cfg.dt, mu, &f)?;
            info!("online {:.4} s over {} steps", traj.online_seconds(), traj.stats.steps);
            println!("{}", out.display());
        }
        Command::Study => {
            let report = run_study(&cfg, ws)?;
            for p in emit_reports(&report, &ws.join("reports"))? {
                println!("{}", p.display());
            }
        }
        Command::Report => {
            let report = load_report(ws)?;
            if report.points.is_empty() {
                bail!("no finished parameter points in {}", ws.display());
            }
            for p in emit_reports(&report, &ws.join("reports"))? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}
