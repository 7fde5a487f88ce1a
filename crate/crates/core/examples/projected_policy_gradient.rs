//! Projected gradient ascent over policies with every probability at least
//! alpha. The limit approaches the optimum as alpha shrinks.

use transient_pg::environments::cliffwalk;
use transient_pg::evaluation::optimal_reference;
use transient_pg::ppg::{
    estimate_c_alpha, optimal_in_alpha_simplex, run_ppg, theoretical_step_size, PpgConfig, StepSize,
};

fn main() -> transient_pg::Result<()> {
    let mdp = cliffwalk();
    let v_star = optimal_reference(&mdp)?.value_at(mdp.mu());
    println!("V*_mu = {v_star:.9}");
    for alpha in [0.1, 0.05, 0.01] {
        let best = optimal_in_alpha_simplex(&mdp, alpha)?.value_at(mdp.mu());
        let c = estimate_c_alpha(&mdp, alpha, 1e-12)?.value;
        let eta_theory = theoretical_step_size(mdp.reward_bound(), c, mdp.n_actions())?;
        let mut cfg = PpgConfig::new(&mdp, alpha, StepSize::Fixed(0.05), 2000);
        cfg.reference = Some(v_star);
        let log = run_ppg(&mdp, &cfg)?.log;
        println!(
            "alpha {alpha:<5} C_alpha {c:>12.2} theoretical eta {eta_theory:.2e}  final gap {:.6}  best in Pi_alpha {:.6}",
            log.final_gap().unwrap(),
            v_star - best
        );
    }
    Ok(())
}
