//! Analytic policy gradients against central finite differences, in both
//! parameterizations, on random MDPs with finite values.

use transient_pg::environments::random_absorbing_mdp;
use transient_pg::gradient::{
    finite_difference_gradient, gradient, max_relative_error, DEFAULT_H, RELATIVE_ERROR_FLOOR,
};
use transient_pg::mdp::{random_interior_policy, Policy};

fn main() -> transient_pg::Result<()> {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mdp = random_absorbing_mdp(6, 3, seed);
        let direct = random_interior_policy(&mdp, 1000 + seed, 1e-2)?;
        let softmax = Policy::softmax(direct.table().map(f64::ln))?;
        for pi in [direct, softmax] {
            let exact = gradient(&mdp, &pi, mdp.mu())?.comparable();
            let fd = finite_difference_gradient(&mdp, &pi, mdp.mu(), DEFAULT_H)?.comparable();
            let err = max_relative_error(&exact, &fd, RELATIVE_ERROR_FLOOR);
            println!(
                "seed {seed:>2} {:?}: max relative error {err:.3e}",
                pi.parameterization()
            );
            worst = worst.max(err);
        }
    }
    println!("worst {worst:.3e}");
    Ok(())
}
