//! The five-state MDP where the supremum over strictly positive policies
//! falls short of the optimum, and where a greedy policy is not optimal.
//!
//! ```text
//! cargo run --example pathologies
//! ```

use transient_pg::environments::pathological;
use transient_pg::evaluation::{greedy_policy, optimal_brute_force, value_function};
use transient_pg::mdp::random_interior_policy;
use transient_pg::npg::{run_npg, NpgConfig, StepSchedule};

fn main() -> transient_pg::Result<()> {
    let mdp = pathological();
    let opt = optimal_brute_force(&mdp)?;
    println!("V* = {:?}", opt.v_star.as_slice());
    println!("optimal actions = {:?}", opt.actions().expect("brute force certifies"));

    // any strictly positive policy eventually leaves s1 through the -1 edge
    for seed in 0..3 {
        let pi = random_interior_policy(&mdp, seed, 1e-6)?;
        println!("interior policy {seed}: V(s1) = {:+.12}", value_function(&mdp, &pi)?[1]);
    }

    // Q*(s2, stay) = Q*(s2, exit) = 1; the lowest-index greedy choice stays forever
    let greedy = greedy_policy(&mdp, &opt.v_star);
    println!("greedy row at s2 = {:?}", greedy.table().row(2));
    println!(
        "greedy V(s2) = {}, V*(s2) = {}",
        value_function(&mdp, &greedy)?[2],
        opt.v_star[2]
    );

    let v_star = opt.value_at(mdp.mu());
    let mut cfg = NpgConfig::new(&mdp, StepSchedule::Constant(0.1), 2000);
    cfg.reference = Some(v_star);
    let log = run_npg(&mdp, &cfg)?.log;
    for k in [0, 10, 100, 1000, 2000] {
        println!("NPG k = {k:>4}: gap = {:.9}", log.records[k].gap.unwrap());
    }
    println!("the gap never falls below mu(s1) = 0.2");
    Ok(())
}
