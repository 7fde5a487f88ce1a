//! Natural policy gradient with constant and geometrically growing steps.

use transient_pg::environments::{frozenlake, GridLayout};
use transient_pg::evaluation::optimal_reference;
use transient_pg::npg::{run_npg, NpgConfig, StepSchedule};

fn main() -> transient_pg::Result<()> {
    let mdp = frozenlake(&GridLayout::default_frozenlake())?;
    let v_star = optimal_reference(&mdp)?.value_at(mdp.mu());
    for schedule in [
        StepSchedule::Constant(0.1),
        StepSchedule::Geometric {
            eta0: 0.1,
            growth: 1.01,
        },
    ] {
        let mut cfg = NpgConfig::new(&mdp, schedule, 5000);
        cfg.reference = Some(v_star);
        let out = run_npg(&mdp, &cfg)?;
        println!(
            "{schedule:?}: gap < 1e-6 from iteration {:?}, final gap {:.3e}",
            out.log.first_below(1e-6),
            out.log.final_gap().unwrap()
        );
    }
    Ok(())
}
