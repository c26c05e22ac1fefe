//! Runs the full-order two-stream benchmark and prints the max|E| history.
//!
//! cargo run --release -p vlasov-twrom --example two_stream -- [nx nv t_final T alpha]

use std::time::Instant;

use vlasov_twrom::fom::{fom_run_with, FomConfig};
use vlasov_twrom::{ParamPoint, PhaseGrid};

fn main() -> vlasov_twrom::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let get = |i: usize, d: f64| args.get(i).copied().unwrap_or(d);
    let grid = PhaseGrid::new(get(0, 256.0) as usize, get(1, 256.0) as usize, 1.0)?;
    let config = FomConfig {
        t_final: get(2, 10.0),
        ..FomConfig::new(grid.clone())
    };
    let mu = ParamPoint::new(get(3, 0.08), get(4, 0.001), 1.0)?;
    let start = Instant::now();
    let mut m0 = None;
    fom_run_with(&config, mu, |s| {
        let mass = s.f.iter().sum::<f64>() * grid.cell_area();
        let m0 = *m0.get_or_insert(mass);
        if s.step % 100 == 0 {
            println!(
                "t = {:6.3}  max|E| = {:.6e}  mass drift = {:+.3e}",
                s.time,
                s.max_e,
                (mass - m0) / m0
            );
        }
        Ok(())
    })?;
    println!("wall clock {:.2} s", start.elapsed().as_secs_f64());
    Ok(())
}
