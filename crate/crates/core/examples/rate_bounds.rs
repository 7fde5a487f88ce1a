//! Measured NPG gaps under the sublinear (constant step) and linear
//! (growing step) bounds, with the optimal policy as comparator.

use transient_pg::environments::cliffwalk;
use transient_pg::evaluation::{evaluate, fundamental_norm, mismatch_coefficient, optimal_reference, value_function};
use transient_pg::mdp::Policy;
use transient_pg::npg::{
    compliant_growth, npg_linear_bound, npg_sublinear_bound, run_npg, weighted_kl, NpgConfig, StepSchedule,
};

fn main() -> transient_pg::Result<()> {
    let mdp = cliffwalk();
    let opt = optimal_reference(&mdp)?;
    let pi_star = opt.pi_star.clone().expect("certified optimum");
    let star = evaluate(&mdp, &pi_star, mdp.mu())?;
    let theta = mismatch_coefficient(&star.delta_mu, mdp.mu())?;
    let pi0 = Policy::uniform(mdp.n_states(), mdp.n_actions());
    let kl0 = weighted_kl(&pi_star, &pi0, &star.delta_mu)?;
    let v0 = value_function(&mdp, &pi0)?;
    let c_star = fundamental_norm(&mdp, &pi_star)?;
    let growth = compliant_growth(theta)?;
    println!("theta = {theta:.4}, KL0 = {kl0:.4}, C_pi* = {c_star}, compliant growth = {growth:.6}");

    let eta = 0.05;
    let mut cfg = NpgConfig::new(&mdp, StepSchedule::Constant(eta), 400);
    cfg.reference = Some(opt.value_at(mdp.mu()));
    let constant = run_npg(&mdp, &cfg)?.log;
    cfg.schedule = StepSchedule::Geometric { eta0: eta, growth };
    let geometric = run_npg(&mdp, &cfg)?.log;
    let gap0 = geometric.records[0].gap.unwrap();

    println!(
        "{:>5} {:>12} {:>12} {:>12} {:>12}",
        "k", "gap const", "sublinear", "gap geom", "linear"
    );
    for k in [0, 1, 10, 50, 100, 200, 400] {
        println!(
            "{k:>5} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
            constant.records[k].gap.unwrap(),
            npg_sublinear_bound(kl0, eta, c_star, opt.v_star.amax(), v0.amax(), k),
            geometric.records[k].gap.unwrap(),
            npg_linear_bound(gap0, kl0, eta, theta, k)?
        );
    }
    Ok(())
}
