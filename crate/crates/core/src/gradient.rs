//! Exact policy gradients of `V_mu` and a central-difference oracle.
//!
//! Direct gradients live in the full `(s, a)` coordinates; since `V_mu`
//! is only defined on the simplex, comparisons go through
//! [`tangent_projection`], which removes each row's mean.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::{q_function, value_at, PolicyEvaluation};
use crate::mdp::{check_distribution, MdpSpec, Parameterization, Policy, StateActionTable};

pub const DEFAULT_H: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientField {
    pub g: StateActionTable,
    pub parameterization: Parameterization,
}

impl GradientField {
    /// The field in the coordinates used for comparison: row-centred for
    /// the direct parameterization, unchanged for softmax.
    pub fn comparable(&self) -> StateActionTable {
        match self.parameterization {
            Parameterization::Direct => tangent_projection(&self.g),
            Parameterization::Softmax => self.g.clone(),
        }
    }
}

/// Subtracts each row's mean.
pub fn tangent_projection(g: &StateActionTable) -> StateActionTable {
    let mut out = g.clone();
    for s in 0..g.n_states() {
        let row = out.row_mut(s);
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        row.iter_mut().for_each(|x| *x -= mean);
    }
    out
}

/// `g(s,a) = delta_mu(s) Q(s,a)`; the policy must be strictly interior.
pub fn gradient_direct(mdp: &MdpSpec, policy: &Policy, mu: &[f64]) -> Result<GradientField> {
    let Policy::Direct(probs) = policy else {
        return Err(Error::InvalidPolicy("direct gradient needs a direct policy".into()));
    };
    policy.check_dims(mdp)?;
    check_distribution(mu, mdp.n_states())?;
    if let Some((i, &value)) = probs.as_slice().iter().enumerate().find(|(_, &p)| p <= 0.0) {
        return Err(Error::BoundaryPolicy {
            state: i / mdp.n_actions(),
            action: i % mdp.n_actions(),
            value,
        });
    }
    let eval = PolicyEvaluation::new(mdp, policy)?;
    Ok(direct_from_evaluation(mdp, &eval, mu))
}

pub(crate) fn direct_from_evaluation(mdp: &MdpSpec, eval: &PolicyEvaluation, mu: &[f64]) -> GradientField {
    let q = q_function(mdp, &eval.value());
    let delta = eval.visitation(mu);
    GradientField {
        g: StateActionTable::from_fn(mdp.n_states(), mdp.n_actions(), |s, a| delta[s] * q.get(s, a)),
        parameterization: Parameterization::Direct,
    }
}

/// `g(s,a) = delta_mu(s) pi(a|s) (Q(s,a) - V(s))` for softmax logits.
pub fn gradient_softmax(mdp: &MdpSpec, logits: &Policy, mu: &[f64]) -> Result<GradientField> {
    if logits.parameterization() != Parameterization::Softmax {
        return Err(Error::InvalidPolicy("softmax gradient needs softmax logits".into()));
    }
    logits.check_dims(mdp)?;
    check_distribution(mu, mdp.n_states())?;
    let eval = PolicyEvaluation::new(mdp, logits)?;
    let v = eval.value();
    let q = q_function(mdp, &v);
    let delta = eval.visitation(mu);
    let g = StateActionTable::from_fn(mdp.n_states(), mdp.n_actions(), |s, a| {
        delta[s] * eval.probs.get(s, a) * (q.get(s, a) - v[s])
    });
    Ok(GradientField {
        g,
        parameterization: Parameterization::Softmax,
    })
}

/// Exact gradient for whichever parameterization `policy` carries.
pub fn gradient(mdp: &MdpSpec, policy: &Policy, mu: &[f64]) -> Result<GradientField> {
    match policy.parameterization() {
        Parameterization::Direct => gradient_direct(mdp, policy, mu),
        Parameterization::Softmax => gradient_softmax(mdp, policy, mu),
    }
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` of a scalar function.
pub fn central_difference(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe)?;
        probe[i] = x[i] - h;
        let minus = f(&probe)?;
        probe[i] = x[i];
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

/// Finite-difference gradient of `V_mu`.
///
/// Softmax: plain central differences on the logits. Direct: for each
/// `(s, a)` the row moves by `+h` on `a` and `-h/(|A|-1)` on the others,
/// which keeps it on the simplex; the directional derivative `D` is
/// reported as `(|A|-1)/|A| * D`, the row-centred gradient coordinate.
pub fn finite_difference_gradient(mdp: &MdpSpec, policy: &Policy, mu: &[f64], h: f64) -> Result<GradientField> {
    policy.check_dims(mdp)?;
    check_distribution(mu, mdp.n_states())?;
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step h = {h} must be positive")));
    }
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    let parameterization = policy.parameterization();
    let g = match policy {
        Policy::Softmax(logits) => {
            let flat = central_difference(logits.as_slice(), h, |theta| {
                let table = StateActionTable::from_flat(n, na, theta.to_vec())?;
                value_at(mdp, &Policy::Softmax(table), mu)
            })?;
            StateActionTable::from_flat(n, na, flat)?
        }
        Policy::Direct(probs) => {
            if na == 1 {
                return Ok(GradientField {
                    g: StateActionTable::zeros(n, 1),
                    parameterization,
                });
            }
            let spread = h / (na - 1) as f64;
            if let Some(i) = probs.as_slice().iter().position(|&p| p - h <= 0.0 || p - spread <= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "h = {h} pushes pi({}|{}) = {} out of the interior",
                    i % na,
                    i / na,
                    probs.as_slice()[i]
                )));
            }
            let scale = (na - 1) as f64 / na as f64;
            let mut g = StateActionTable::zeros(n, na);
            let mut probe = probs.clone();
            for s in 0..n {
                for a in 0..na {
                    let mut eval_at = |sign: f64| -> Result<f64> {
                        for b in 0..na {
                            let step = if b == a { h } else { -spread };
                            probe.set(s, b, probs.get(s, b) + sign * step);
                        }
                        value_at(mdp, &Policy::Direct(probe.clone()), mu)
                    };
                    let d = (eval_at(1.0)? - eval_at(-1.0)?) / (2.0 * h);
                    probe.row_mut(s).copy_from_slice(probs.row(s));
                    g.set(s, a, scale * d);
                }
            }
            g
        }
    };
    Ok(GradientField { g, parameterization })
}

/// Largest coordinatewise `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &StateActionTable, b: &StateActionTable, floor: f64) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Relative-error floor used when comparing gradients: coordinates
/// smaller than this are compared in absolute terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-4;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{frozenlake, pathological, random_absorbing_mdp, GridLayout};
    use crate::mdp::{point_mass, random_interior_policy, uniform_distribution};
    use approx::assert_abs_diff_eq;

    #[test]
    fn pathological_direct_row() {
        let mdp = pathological();
        let field = gradient_direct(&mdp, &Policy::uniform(5, 2), &point_mass(5, 0)).unwrap();
        assert_abs_diff_eq!(field.g.get(1, 0), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(field.g.get(1, 1), -1.0, epsilon = 1e-12);
        // s0: delta = 1, Q = (-1, +1)
        assert_abs_diff_eq!(field.g.get(0, 0), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(field.g.get(0, 1), 1.0, epsilon = 1e-12);
        let fd = finite_difference_gradient(&mdp, &Policy::uniform(5, 2), &point_mass(5, 0), DEFAULT_H).unwrap();
        assert!(max_relative_error(&field.comparable(), &fd.g, RELATIVE_ERROR_FLOOR) < 1e-5);
    }

    #[test]
    fn zero_rewards_give_zero_gradients() {
        let base = pathological();
        let mdp = base.with_rewards(StateActionTable::zeros(5, 2), 0.0).unwrap();
        let mu = uniform_distribution(5);
        let pi = Policy::uniform(5, 2);
        assert_eq!(gradient_direct(&mdp, &pi, &mu).unwrap().g.max_abs(), 0.0);
        assert_eq!(
            finite_difference_gradient(&mdp, &pi, &mu, DEFAULT_H)
                .unwrap()
                .g
                .max_abs(),
            0.0
        );
    }

    #[test]
    fn boundary_and_variant_errors() {
        let mdp = pathological();
        let mu = uniform_distribution(5);
        let det = Policy::deterministic(2, &[0, 0, 0, 0, 0]);
        assert!(matches!(
            gradient_direct(&mdp, &det, &mu),
            Err(Error::BoundaryPolicy {
                state: 0,
                action: 1,
                ..
            })
        ));
        let logits = Policy::softmax(StateActionTable::zeros(5, 2)).unwrap();
        assert!(gradient_direct(&mdp, &logits, &mu).is_err());
        assert!(gradient_softmax(&mdp, &Policy::uniform(5, 2), &mu).is_err());
        assert!(finite_difference_gradient(&mdp, &Policy::uniform(5, 2), &mu, 0.6).is_err());
    }

    #[test]
    fn softmax_constant_q_row_is_zero() {
        // Q(s2, .) = (1, 1) under uniform logits
        let mdp = pathological();
        let logits = Policy::softmax(StateActionTable::zeros(5, 2)).unwrap();
        let field = gradient_softmax(&mdp, &logits, &uniform_distribution(5)).unwrap();
        assert_eq!(field.g.row(2), &[0.0, 0.0]);
        assert_eq!(field.g.row(1), &[0.0, 0.0]);
        assert!(field.g.row(0)[1] > 0.0);
    }

    #[test]
    fn central_difference_on_quadratic() {
        // f(x) = x^T A x / 2 + b^T x has gradient A x + b exactly
        let a = [[2.0, 0.5, 0.0], [0.5, 1.0, -0.3], [0.0, -0.3, 4.0]];
        let b = [1.0, -2.0, 0.25];
        let f = |x: &[f64]| -> Result<f64> {
            let mut v = 0.0;
            for i in 0..3 {
                v += b[i] * x[i];
                for j in 0..3 {
                    v += 0.5 * a[i][j] * x[i] * x[j];
                }
            }
            Ok(v)
        };
        let x = [0.3, -1.2, 0.7];
        let g = central_difference(&x, 1e-3, f).unwrap();
        for i in 0..3 {
            let exact: f64 = b[i] + (0..3).map(|j| a[i][j] * x[j]).sum::<f64>();
            assert_abs_diff_eq!(g[i], exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_action_gradient_is_zero() {
        let mdp = random_absorbing_mdp(4, 1, 2);
        let fd = finite_difference_gradient(&mdp, &Policy::uniform(4, 1), mdp.mu(), DEFAULT_H).unwrap();
        assert_eq!(fd.g.max_abs(), 0.0);
        let field = gradient_direct(&mdp, &Policy::uniform(4, 1), mdp.mu()).unwrap();
        assert_eq!(field.comparable().max_abs(), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;

        fn random_logits(n: usize, na: usize, seed: u64) -> Policy {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Policy::softmax(StateActionTable::from_fn(n, na, |_, _| rng.random_range(-2.0..2.0))).unwrap()
        }

        fn random_mu(n: usize, seed: u64) -> Vec<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = w.iter().sum();
            w.iter().map(|x| x / total).collect()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn direct_matches_finite_differences(seed in 0u64..10_000, pseed in 0u64..10_000) {
                let mdp = random_absorbing_mdp(6, 3, seed);
                let pi = random_interior_policy(&mdp, pseed, 0.02).unwrap();
                let mu = random_mu(6, seed ^ pseed);
                let exact = gradient_direct(&mdp, &pi, &mu).unwrap();
                let fd = finite_difference_gradient(&mdp, &pi, &mu, DEFAULT_H).unwrap();
                let err = max_relative_error(&exact.comparable(), &fd.g, RELATIVE_ERROR_FLOOR);
                prop_assert!(err <= 1e-5, "relative error {err}");
            }

            #[test]
            fn softmax_matches_finite_differences(seed in 0u64..10_000, pseed in 0u64..10_000) {
                let mdp = random_absorbing_mdp(6, 3, seed);
                let logits = random_logits(6, 3, pseed);
                let exact = gradient_softmax(&mdp, &logits, mdp.mu()).unwrap();
                let fd = finite_difference_gradient(&mdp, &logits, mdp.mu(), DEFAULT_H).unwrap();
                let err = max_relative_error(&exact.g, &fd.g, RELATIVE_ERROR_FLOOR);
                prop_assert!(err <= 1e-5, "relative error {err}");
            }

            #[test]
            fn softmax_rows_sum_to_zero(seed in 0u64..10_000, pseed in 0u64..10_000) {
                let mdp = random_absorbing_mdp(6, 3, seed);
                let field = gradient_softmax(&mdp, &random_logits(6, 3, pseed), mdp.mu()).unwrap();
                for row in field.g.rows() {
                    prop_assert!(row.iter().sum::<f64>().abs() <= 1e-12);
                }
            }

            #[test]
            fn softmax_gradient_ignores_row_shift(pseed in 0u64..10_000, shift in -50.0f64..50.0, s in 0usize..16) {
                let mdp = frozenlake(&GridLayout::default_frozenlake()).unwrap();
                let logits = random_logits(16, 4, pseed);
                let mut shifted = logits.table().clone();
                shifted.row_mut(s).iter_mut().for_each(|x| *x += shift);
                let a = gradient_softmax(&mdp, &logits, mdp.mu()).unwrap();
                let b = gradient_softmax(&mdp, &Policy::softmax(shifted).unwrap(), mdp.mu()).unwrap();
                prop_assert!(max_relative_error(&a.g, &b.g, 1e-9) <= 1e-9);
            }
        }
    }
}
