//! Recurrent/transient structure, the spectral radius of the transient
//! block, and the finite-value checks for each built-in environment.

use transient_pg::chain::{
    check_finite_values, classify_for_policy, classify_support, spectral_radius, transient_matrix,
};
use transient_pg::experiment::Environment;
use transient_pg::mdp::{induced_chain, random_interior_policy};

fn main() -> transient_pg::Result<()> {
    for env in Environment::ALL {
        let mdp = env.build();
        let support = classify_support(&mdp);
        let pi = random_interior_policy(&mdp, 7, 1e-3)?;
        let cls = classify_for_policy(&mdp, &pi)?;
        assert_eq!(cls, support);
        let tm = transient_matrix(&induced_chain(&mdp, &pi)?, &cls);
        let rho = spectral_radius(&tm.t, 1e-10)?;
        let exhaustive = mdp.n_states() <= 8;
        let report = check_finite_values(&mdp, exhaustive)?;
        println!(
            "{env:<26} transient {:>2}  recurrent {:?}  rho(T) = {rho:.6}  necessary {}  deterministic {:?}",
            cls.transient.len(),
            cls.recurrent,
            report.holds_necessary,
            report.holds_deterministic_exhaustive,
        );
    }
    Ok(())
}
