//! Writes the solver-comparison CSVs for one environment.
//!
//! ```text
//! cargo run --release --example solver_comparison -- cliffwalk runs/cliffwalk
//! ```

use transient_pg::experiment::{run_experiment, Environment, ExperimentPlan};

fn main() -> transient_pg::Result<()> {
    let mut args = std::env::args().skip(1);
    let env: Environment = args.next().as_deref().unwrap_or("cliffwalk").parse()?;
    let out = args.next().unwrap_or_else(|| format!("runs/{env}"));
    let summary = run_experiment(&ExperimentPlan::paper(env, &out))?;
    print!("{}", summary.table());
    println!("CSVs in {out}");
    Ok(())
}
