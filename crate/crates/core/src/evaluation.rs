//! Exact policy evaluation through the fundamental matrix `(I - T^pi)^{-1}`,
//! action values, transient visitation measures, the performance
//! difference identity, and optimal-value baselines.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chain::{classify_chain, transient_matrix, DeterministicPolicies, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::mdp::{check_distribution, induced_chain, MdpSpec, Policy, StateActionTable};

/// A policy's induced chain together with its fundamental matrix.
///
/// Everything the solvers need per iterate (`V`, `Q`, `delta_mu`, `C_pi`)
/// comes from one inversion of `I - T^pi`.
#[derive(Clone, Debug)]
pub struct PolicyEvaluation {
    pub probs: StateActionTable,
    pub transient: crate::chain::TransientMatrix,
    pub r_pi: DVector<f64>,
    /// `(I - T^pi)^{-1}`.
    pub fundamental: DMatrix<f64>,
}

impl PolicyEvaluation {
    pub fn new(mdp: &MdpSpec, policy: &Policy) -> Result<Self> {
        let chain = induced_chain(mdp, policy)?;
        let cls = classify_chain(&chain.p_pi);
        for &s in &cls.recurrent {
            if chain.r_pi[s] != 0.0 {
                return Err(Error::InfiniteValue {
                    state: s,
                    reward: chain.r_pi[s],
                });
            }
        }
        let transient = transient_matrix(&chain, &cls);
        let probs = policy.probabilities().into_owned();
        let fundamental = fundamental_matrix(mdp, &probs, &transient)?;
        Ok(Self {
            probs,
            transient,
            r_pi: chain.r_pi,
            fundamental,
        })
    }

    pub fn value(&self) -> DVector<f64> {
        &self.fundamental * &self.r_pi
    }

    /// `delta_mu = mu_T^T (I - T)^{-1}`, with `mu_T` the transient part of `mu`.
    pub fn visitation(&self, mu: &[f64]) -> DVector<f64> {
        let cls = &self.transient.classification;
        let mu_t = DVector::from_fn(mu.len(), |s, _| if cls.is_transient(s) { mu[s] } else { 0.0 });
        self.fundamental.tr_mul(&mu_t)
    }

    /// `C_pi = ||(I - T^pi)^{-1}||_inf`.
    pub fn fundamental_norm(&self) -> f64 {
        self.fundamental
            .row_iter()
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// `(I - T)^{-1}` for a near-deterministic policy without losing its leaks.
///
/// A state that stays put with probability `1 - 1e-300` has `P^pi(s,s)`
/// rounded to 1, so `1 - T(s,s)` is formed as `sum_a pi(a|s)(1 - P(s|s,a))`
/// instead. Each transient row is then divided by that diagonal before
/// the LU, and the inverse is rescaled afterwards.
fn fundamental_matrix(
    mdp: &MdpSpec,
    probs: &StateActionTable,
    transient: &crate::chain::TransientMatrix,
) -> Result<DMatrix<f64>> {
    let n = mdp.n_states();
    let cls = &transient.classification;
    let diag: Vec<f64> = (0..n)
        .map(|s| {
            if !cls.is_transient(s) {
                return 1.0;
            }
            (0..mdp.n_actions())
                .map(|a| probs.get(s, a) * (1.0 - mdp.p(s, a, s)))
                .sum()
        })
        .collect();
    if let Some(s) = diag.iter().position(|&d| !(d > 0.0)) {
        log::debug!("transient state {s} has no escape mass");
        return Err(Error::Singular);
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { -transient.t[(i, j)] / diag[i] });
    let mut inv = scaled.try_inverse().ok_or(Error::Singular)?;
    for (j, mut col) in inv.column_iter_mut().enumerate() {
        col /= diag[j];
    }
    if !inv.iter().all(|x| x.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(inv)
}

/// `V^pi`, `Q^pi` and `delta^pi_mu` of one policy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValueBundle {
    pub v: Vec<f64>,
    pub q: StateActionTable,
    pub delta_mu: Vec<f64>,
}

/// `V^pi = (I - T^pi)^{-1} r^pi`.
pub fn value_function(mdp: &MdpSpec, policy: &Policy) -> Result<DVector<f64>> {
    Ok(PolicyEvaluation::new(mdp, policy)?.value())
}

/// `Q(s,a) = r(s,a) + sum_s' P(s'|s,a) V(s')`.
pub fn q_function(mdp: &MdpSpec, v: &DVector<f64>) -> StateActionTable {
    StateActionTable::from_fn(mdp.n_states(), mdp.n_actions(), |s, a| {
        mdp.r(s, a) + mdp.p_row(s, a).iter().zip(v.iter()).map(|(p, v)| p * v).sum::<f64>()
    })
}

pub fn visitation_measure(mdp: &MdpSpec, policy: &Policy, mu: &[f64]) -> Result<DVector<f64>> {
    check_distribution(mu, mdp.n_states())?;
    Ok(PolicyEvaluation::new(mdp, policy)?.visitation(mu))
}

pub fn evaluate(mdp: &MdpSpec, policy: &Policy, mu: &[f64]) -> Result<ValueBundle> {
    check_distribution(mu, mdp.n_states())?;
    let eval = PolicyEvaluation::new(mdp, policy)?;
    let v = eval.value();
    let q = q_function(mdp, &v);
    Ok(ValueBundle {
        delta_mu: eval.visitation(mu).iter().cloned().collect(),
        v: v.iter().cloned().collect(),
        q,
    })
}

/// `V_mu^pi = mu^T V^pi`.
pub fn value_at(mdp: &MdpSpec, policy: &Policy, mu: &[f64]) -> Result<f64> {
    Ok(value_function(mdp, policy)?.iter().zip(mu).map(|(v, m)| v * m).sum())
}

/// `C_pi = ||(I - T^pi)^{-1}||_inf` for one policy.
pub fn fundamental_norm(mdp: &MdpSpec, policy: &Policy) -> Result<f64> {
    Ok(PolicyEvaluation::new(mdp, policy)?.fundamental_norm())
}

/// Right-hand side of the transient performance difference identity:
/// `sum_s delta^pi_mu(s) sum_a Q^{pi'}(s,a) (pi(a|s) - pi'(a|s))`,
/// which equals `V_mu^pi - V_mu^{pi'}`.
pub fn pdl_gap(mdp: &MdpSpec, pi: &Policy, pi_prime: &Policy, mu: &[f64]) -> Result<f64> {
    check_distribution(mu, mdp.n_states())?;
    let eval = PolicyEvaluation::new(mdp, pi)?;
    let v_prime = value_function(mdp, pi_prime)?;
    let scale = 1.0 + v_prime.amax();
    for &s in &eval.transient.classification.recurrent {
        if v_prime[s].abs() > 1e-9 * scale {
            return Err(Error::Precondition(format!(
                "V^pi'({s}) = {} is nonzero on a recurrent state of P^pi",
                v_prime[s]
            )));
        }
    }
    let q_prime = q_function(mdp, &v_prime);
    let delta = eval.visitation(mu);
    let probs_prime = pi_prime.probabilities();
    let mut gap = 0.0;
    for s in 0..mdp.n_states() {
        if delta[s] == 0.0 {
            continue;
        }
        let inner: f64 = (0..mdp.n_actions())
            .map(|a| q_prime.get(s, a) * (eval.probs.get(s, a) - probs_prime.get(s, a)))
            .sum();
        gap += delta[s] * inner;
    }
    Ok(gap)
}

/// `||delta / mu||_inf` over states with positive visitation.
///
/// Returns 0 when `delta` vanishes (no transient mass).
pub fn mismatch_coefficient(delta: &[f64], mu: &[f64]) -> Result<f64> {
    if delta.len() != mu.len() {
        return Err(Error::Dimension("delta and mu lengths differ".into()));
    }
    let mut worst = 0.0f64;
    for (s, (&d, &m)) in delta.iter().zip(mu).enumerate() {
        if d <= 0.0 {
            continue;
        }
        if m <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "mu({s}) = 0 on a visited transient state"
            )));
        }
        worst = worst.max(d / m);
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolutionMethod {
    BruteForce,
    ValueIteration,
    /// Value iteration followed by an exactly evaluated certificate policy.
    CertifiedValueIteration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimalSolution {
    pub v_star: DVector<f64>,
    /// Present only with a certificate (brute force or exact evaluation).
    pub pi_star: Option<Policy>,
    /// Greedy-from-Q policy; never claimed optimal on its own.
    pub greedy: Option<Policy>,
    pub method: SolutionMethod,
    /// Brute force: 0. Value iteration: last sup-norm change. Certified:
    /// sup-norm distance between the certificate's exact value and the
    /// value-iteration estimate.
    pub tolerance: f64,
    pub sweeps: usize,
}

impl OptimalSolution {
    pub fn value_at(&self, mu: &[f64]) -> f64 {
        self.v_star.iter().zip(mu).map(|(v, m)| v * m).sum()
    }

    /// Actions of the deterministic optimal policy, when certified.
    pub fn actions(&self) -> Option<Vec<usize>> {
        let pi = self.pi_star.as_ref()?;
        Some(
            pi.table()
                .rows()
                .map(|row| row.iter().position(|&p| p == 1.0).unwrap_or(0))
                .collect(),
        )
    }
}

pub fn optimal_brute_force(mdp: &MdpSpec) -> Result<OptimalSolution> {
    optimal_brute_force_capped(mdp, DEFAULT_ENUMERATION_CAP)
}

/// Evaluates every deterministic policy (over distinct actions) and returns
/// the entrywise maximum with the first policy attaining it.
pub fn optimal_brute_force_capped(mdp: &MdpSpec, cap: u64) -> Result<OptimalSolution> {
    let n = mdp.n_states();
    let na = mdp.n_actions();
    let mut best = DVector::from_element(n, f64::NEG_INFINITY);
    for actions in DeterministicPolicies::new(mdp, cap)? {
        let v = value_function(mdp, &Policy::deterministic(na, &actions))?;
        best.zip_apply(&v, |b, x| *b = b.max(x));
    }
    let tol = 1e-9 * (1.0 + best.amax());
    let mut pi_star = None;
    for actions in DeterministicPolicies::new(mdp, cap)? {
        let policy = Policy::deterministic(na, &actions);
        let v = value_function(mdp, &policy)?;
        if v.iter().zip(best.iter()).all(|(x, b)| *x >= b - tol) {
            pi_star = Some(policy);
            break;
        }
    }
    if pi_star.is_none() {
        return Err(Error::Precondition(
            "no deterministic policy attains the entrywise maximum".into(),
        ));
    }
    Ok(OptimalSolution {
        v_star: best,
        pi_star,
        greedy: None,
        method: SolutionMethod::BruteForce,
        tolerance: 0.0,
        sweeps: 0,
    })
}

/// Greedy policy for `Q = r + P v`, ties to the lowest action index.
pub fn greedy_policy(mdp: &MdpSpec, v: &DVector<f64>) -> Policy {
    let q = q_function(mdp, v);
    let actions: Vec<usize> = q
        .rows()
        .map(|row| {
            let mut best = 0;
            for (a, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect();
    Policy::deterministic(mdp.n_actions(), &actions)
}

/// Monotone value iteration from `V_0 = 0`; requires nonnegative rewards.
pub fn optimal_value_iteration(mdp: &MdpSpec, tol: f64, max_iters: usize) -> Result<OptimalSolution> {
    if !mdp.has_nonnegative_rewards() {
        return Err(Error::Precondition(
            "value iteration baseline requires nonnegative rewards".into(),
        ));
    }
    let n = mdp.n_states();
    let mut v = DVector::zeros(n);
    let mut change = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < max_iters {
        let q = q_function(mdp, &v);
        let next = DVector::from_fn(n, |s, _| q.row(s).iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        change = (&next - &v).amax();
        v = next;
        sweeps += 1;
        if change < tol {
            break;
        }
    }
    if change >= tol {
        log::warn!("value iteration stopped at cap {max_iters} with change {change:e}");
    }
    Ok(OptimalSolution {
        greedy: Some(greedy_policy(mdp, &v)),
        v_star: v,
        pi_star: None,
        method: SolutionMethod::ValueIteration,
        tolerance: change,
        sweeps,
    })
}

/// Extracts a deterministic policy whose exact value matches `solution.v_star`.
///
/// Greedy actions alone can loop forever on a positive-value state, so
/// actions are assigned outward from the zero-value states: a state is
/// settled once one of its greedy actions reaches an already settled state.
/// Every unsettled state is therefore transient under the result, which is
/// then evaluated exactly.
pub fn certify_optimal(mdp: &MdpSpec, solution: &OptimalSolution, tie_tol: f64) -> Result<OptimalSolution> {
    let n = mdp.n_states();
    let v = &solution.v_star;
    let q = q_function(mdp, v);
    let greedy: Vec<Vec<usize>> = (0..n)
        .map(|s| {
            (0..mdp.n_actions())
                .filter(|&a| q.get(s, a) >= v[s] - tie_tol)
                .collect()
        })
        .collect();
    let mut settled: Vec<bool> = (0..n).map(|s| v[s].abs() <= tie_tol).collect();
    let mut actions = vec![usize::MAX; n];
    for s in (0..n).filter(|&s| settled[s]) {
        let stays = greedy[s]
            .iter()
            .copied()
            .find(|&a| mdp.p_row(s, a).iter().enumerate().all(|(t, &p)| p == 0.0 || settled[t]));
        actions[s] = stays.or_else(|| greedy[s].first().copied()).unwrap_or(0);
    }
    loop {
        let mut progressed = false;
        for s in 0..n {
            if settled[s] {
                continue;
            }
            let reach = greedy[s].iter().copied().find(|&a| {
                mdp.p_row(s, a)
                    .iter()
                    .enumerate()
                    .any(|(t, &p)| p > 0.0 && settled[t] && t != s)
            });
            if let Some(a) = reach {
                actions[s] = a;
                settled[s] = true;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    if let Some(s) = settled.iter().position(|&x| !x) {
        return Err(Error::Precondition(format!(
            "state {s} has no greedy action leading towards settled states"
        )));
    }
    let policy = Policy::deterministic(mdp.n_actions(), &actions);
    let exact = value_function(mdp, &policy)?;
    let distance = (&exact - v).amax();
    let scale = 1.0 + v.amax();
    if distance > 1e-8 * scale {
        return Err(Error::Precondition(format!(
            "certificate policy is {distance:e} away from the supplied values"
        )));
    }
    Ok(OptimalSolution {
        v_star: exact,
        pi_star: Some(policy),
        greedy: solution.greedy.clone(),
        method: SolutionMethod::CertifiedValueIteration,
        tolerance: distance,
        sweeps: solution.sweeps,
    })
}

/// Brute force when the enumeration fits the default cap, otherwise value
/// iteration (nonnegative rewards) followed by [`certify_optimal`].
pub fn optimal_reference(mdp: &MdpSpec) -> Result<OptimalSolution> {
    if DeterministicPolicies::count(mdp) <= DEFAULT_ENUMERATION_CAP as f64 {
        return optimal_brute_force(mdp);
    }
    let vi = optimal_value_iteration(mdp, 1e-15, 1_000_000)?;
    certify_optimal(mdp, &vi, 1e-9)
}
