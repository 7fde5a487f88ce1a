//! Exact V, Q and transient visitation of the uniform policy on FrozenLake,
//! next to the optimal values.

use transient_pg::environments::{frozenlake, GridLayout};
use transient_pg::evaluation::{evaluate, mismatch_coefficient, optimal_reference};
use transient_pg::mdp::Policy;

fn main() -> transient_pg::Result<()> {
    let layout = GridLayout::default_frozenlake();
    let mdp = frozenlake(&layout)?;
    let uniform = Policy::uniform(mdp.n_states(), mdp.n_actions());
    let bundle = evaluate(&mdp, &uniform, mdp.mu())?;
    let opt = optimal_reference(&mdp)?;

    println!("{:>3} {:>4} {:>10} {:>10} {:>10}", "s", "cell", "V^unif", "delta", "V*");
    for s in 0..mdp.n_states() {
        let cell = format!("{:?}", layout.cell(s / layout.cols(), s % layout.cols()));
        println!(
            "{s:>3} {:>4} {:>10.6} {:>10.6} {:>10.6}",
            &cell[..1],
            bundle.v[s],
            bundle.delta_mu[s],
            opt.v_star[s]
        );
    }
    let v_mu: f64 = bundle.v.iter().zip(mdp.mu()).map(|(v, m)| v * m).sum();
    println!(
        "V_mu uniform = {v_mu:.9}, V*_mu = {:.9} ({:?})",
        opt.value_at(mdp.mu()),
        opt.method
    );
    if let Some(pi_star) = &opt.pi_star {
        let star = evaluate(&mdp, pi_star, mdp.mu())?;
        println!(
            "mismatch coefficient of pi* = {:.6}",
            mismatch_coefficient(&star.delta_mu, mdp.mu())?
        );
    }
    Ok(())
}
