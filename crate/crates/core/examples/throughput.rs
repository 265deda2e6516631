//! Times the Monte Carlo kernel: `cargo run --release -p corrbern --example throughput`.

use std::time::Instant;

use corrbern::montecarlo::{run, ExperimentPlan, Retain};
use corrbern::ModelParams;

fn main() -> corrbern::Result<()> {
    let params = ModelParams::new(0.25, 0.3, 0.3)?;
    let (n, replicates) = (10_000u64, 100_000u64);
    let plan = ExperimentPlan::new(params, n, &[n / 4, n], replicates, 1, Retain::SummariesOnly)?;
    let start = Instant::now();
    let summary = run(&plan)?;
    let secs = start.elapsed().as_secs_f64();
    let steps = (n * replicates) as f64;
    println!(
        "{replicates} paths x {n} steps in {secs:.2} s ({:.3} ns/step), Var(S_n)/n = {:.4}",
        secs * 1e9 / steps,
        summary.moments[1].variance() / n as f64
    );
    Ok(())
}
