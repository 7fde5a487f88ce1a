//! MDP and policy data model.
//!
//! An [`MdpSpec`] is the tuple of a finite state space, a finite action space,
//! a transition kernel `P(s'|s,a)`, rewards `r(s,a)`, an initial distribution
//! `mu` and a reward bound `R`. Policies are either direct stochastic
//! matrices or softmax logits; both are stored as [`StateActionTable`]s.

use std::borrow::Cow;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::ser::{Serialize, SerializeSeq, Serializer};

use crate::error::{Error, Result};

/// Tolerance for "sums to one" checks on probability rows and distributions.
pub const PROB_TOL: f64 = 1e-12;

/// A dense `(state, action)`-indexed table of reals, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct StateActionTable {
    n_states: usize,
    n_actions: usize,
    data: Vec<f64>,
}

impl StateActionTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::filled(n_states, n_actions, 0.0)
    }

    pub fn filled(n_states: usize, n_actions: usize, value: f64) -> Self {
        Self {
            n_states,
            n_actions,
            data: vec![value; n_states * n_actions],
        }
    }

    pub fn from_fn(n_states: usize, n_actions: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n_states * n_actions);
        for s in 0..n_states {
            for a in 0..n_actions {
                data.push(f(s, a));
            }
        }
        Self {
            n_states,
            n_actions,
            data,
        }
    }

    pub fn from_flat(n_states: usize, n_actions: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "table data has {} entries, expected {}x{}",
                data.len(),
                n_states,
                n_actions
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            data,
        })
    }

    /// Builds a table from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n_states * n_actions);
        for (s, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n_actions {
                return Err(Error::Dimension(format!(
                    "row {s} has {} entries, expected {n_actions}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            n_states,
            n_actions,
            data,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.data[s * self.n_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.data[s * self.n_actions + a] = value;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.data[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_actions.max(1)).take(self.n_states)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_states == other.n_states && self.n_actions == other.n_actions
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(x, y)| x * y).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n_states: self.n_states,
            n_actions: self.n_actions,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Entrywise `self + scale * other`.
    pub fn add_scaled(&self, scale: f64, other: &Self) -> Self {
        Self {
            n_states: self.n_states,
            n_actions: self.n_actions,
            data: self.data.iter().zip(&other.data).map(|(x, y)| x + scale * y).collect(),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

impl Serialize for StateActionTable {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.n_states))?;
        for row in self.rows() {
            seq.serialize_element(row)?;
        }
        seq.end()
    }
}

/// An undiscounted total-reward MDP `(S, A, P, r, mu)` with reward bound `R`.
#[derive(Clone, Debug, PartialEq)]
pub struct MdpSpec {
    n_states: usize,
    n_actions: usize,
    /// `P(s'|s,a)` at index `(s * n_actions + a) * n_states + s'`.
    transitions: Vec<f64>,
    rewards: StateActionTable,
    mu: Vec<f64>,
    reward_bound: f64,
}

impl MdpSpec {
    /// Builds a spec and rejects it unless [`validate`] reports no issue.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: StateActionTable,
        mu: Vec<f64>,
        reward_bound: f64,
    ) -> Result<Self> {
        let mdp = Self::from_parts(n_states, n_actions, transitions, rewards, mu, reward_bound)?;
        let report = validate(&mdp);
        if report.is_valid() {
            Ok(mdp)
        } else {
            Err(Error::InvalidMdp(report))
        }
    }

    /// Builds a spec checking only array shapes. Use [`validate`] on the result.
    pub fn from_parts(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: StateActionTable,
        mu: Vec<f64>,
        reward_bound: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Dimension("state and action counts must be positive".into()));
        }
        if transitions.len() != n_states * n_actions * n_states {
            return Err(Error::Dimension(format!(
                "transition tensor has {} entries, expected {}",
                transitions.len(),
                n_states * n_actions * n_states
            )));
        }
        if rewards.n_states() != n_states || rewards.n_actions() != n_actions {
            return Err(Error::Dimension(format!(
                "reward table is {}x{}, expected {n_states}x{n_actions}",
                rewards.n_states(),
                rewards.n_actions()
            )));
        }
        if mu.len() != n_states {
            return Err(Error::Dimension(format!(
                "mu has {} entries, expected {n_states}",
                mu.len()
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            rewards,
            mu,
            reward_bound,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// `P(next|s,a)`.
    #[inline]
    pub fn p(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transitions[(s * self.n_actions + a) * self.n_states + next]
    }

    /// The distribution `P(.|s,a)`.
    pub fn p_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    #[inline]
    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.rewards.get(s, a)
    }

    pub fn rewards(&self) -> &StateActionTable {
        &self.rewards
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn reward_bound(&self) -> f64 {
        self.reward_bound
    }

    pub fn has_nonnegative_rewards(&self) -> bool {
        self.rewards.as_slice().iter().all(|&r| r >= 0.0)
    }

    /// Same model with a different initial distribution (validated).
    pub fn with_mu(&self, mu: Vec<f64>) -> Result<Self> {
        check_distribution(&mu, self.n_states)?;
        Ok(Self { mu, ..self.clone() })
    }

    /// Same dynamics with new rewards and bound (validated).
    pub fn with_rewards(&self, rewards: StateActionTable, reward_bound: f64) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transitions.clone(),
            rewards,
            self.mu.clone(),
            reward_bound,
        )
    }

    /// Whether action `a` and `b` at `s` have identical transitions and reward.
    pub fn actions_equivalent(&self, s: usize, a: usize, b: usize) -> bool {
        self.r(s, a) == self.r(s, b) && self.p_row(s, a) == self.p_row(s, b)
    }

    /// Per state, the lowest-index representative of each class of
    /// equivalent actions.
    pub fn distinct_actions(&self) -> Vec<Vec<usize>> {
        (0..self.n_states)
            .map(|s| {
                let mut reps: Vec<usize> = Vec::new();
                for a in 0..self.n_actions {
                    if !reps.iter().any(|&b| self.actions_equivalent(s, a, b)) {
                        reps.push(a);
                    }
                }
                reps
            })
            .collect()
    }
}

/// One violated invariant of an [`MdpSpec`].
#[derive(Clone, Debug, PartialEq)]
pub enum ValidationIssue {
    NegativeTransition { s: usize, a: usize, next: usize, p: f64 },
    TransitionRowSum { s: usize, a: usize, sum: f64 },
    NonFiniteReward { s: usize, a: usize },
    RewardExceedsBound { s: usize, a: usize, r: f64, bound: f64 },
    InvalidRewardBound { bound: f64 },
    NegativeInitialMass { s: usize, p: f64 },
    InitialMassSum { sum: f64 },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::NegativeTransition { s, a, next, p } => {
                write!(f, "P({next}|{s},{a}) = {p} is negative or not finite")
            }
            Self::TransitionRowSum { s, a, sum } => {
                write!(f, "transition row (s={s}, a={a}) sums to {sum}")
            }
            Self::NonFiniteReward { s, a } => write!(f, "r({s},{a}) is not finite"),
            Self::RewardExceedsBound { s, a, r, bound } => {
                write!(f, "|r({s},{a})| = {} exceeds reward bound {bound}", r.abs())
            }
            Self::InvalidRewardBound { bound } => {
                write!(f, "reward bound {bound} is negative or not finite")
            }
            Self::NegativeInitialMass { s, p } => write!(f, "mu({s}) = {p} is negative or not finite"),
            Self::InitialMassSum { sum } => write!(f, "mu sums to {sum}"),
        }
    }
}

/// Every violated invariant of an MDP; empty means valid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "  - {issue}")?;
        }
        Ok(())
    }
}

pub fn validate(mdp: &MdpSpec) -> ValidationReport {
    let mut issues = Vec::new();
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let row = mdp.p_row(s, a);
            for (next, &p) in row.iter().enumerate() {
                if !(p >= 0.0 && p.is_finite()) {
                    issues.push(ValidationIssue::NegativeTransition { s, a, next, p });
                }
            }
            let sum: f64 = row.iter().sum();
            if !((sum - 1.0).abs() <= PROB_TOL) {
                issues.push(ValidationIssue::TransitionRowSum { s, a, sum });
            }
        }
    }
    let bound = mdp.reward_bound;
    if !(bound >= 0.0 && bound.is_finite()) {
        issues.push(ValidationIssue::InvalidRewardBound { bound });
    }
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let r = mdp.r(s, a);
            if !r.is_finite() {
                issues.push(ValidationIssue::NonFiniteReward { s, a });
            } else if r.abs() > bound {
                issues.push(ValidationIssue::RewardExceedsBound { s, a, r, bound });
            }
        }
    }
    for (s, &p) in mdp.mu.iter().enumerate() {
        if !(p >= 0.0 && p.is_finite()) {
            issues.push(ValidationIssue::NegativeInitialMass { s, p });
        }
    }
    let sum: f64 = mdp.mu.iter().sum();
    if !((sum - 1.0).abs() <= PROB_TOL) {
        issues.push(ValidationIssue::InitialMassSum { sum });
    }
    ValidationReport { issues }
}

pub fn uniform_distribution(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

pub fn point_mass(n: usize, s: usize) -> Vec<f64> {
    let mut mu = vec![0.0; n];
    mu[s] = 1.0;
    mu
}

/// Checks that `mu` is a probability vector of length `n`.
pub fn check_distribution(mu: &[f64], n: usize) -> Result<()> {
    if mu.len() != n {
        return Err(Error::Dimension(format!(
            "distribution has {} entries, expected {n}",
            mu.len()
        )));
    }
    if mu.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
        return Err(Error::InvalidArgument("distribution has a negative entry".into()));
    }
    let sum: f64 = mu.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidArgument(format!("distribution sums to {sum}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameterization {
    Direct,
    Softmax,
}

/// A stationary policy.
#[derive(Clone, Debug, PartialEq)]
pub enum Policy {
    /// `probs(s,a) = pi(a|s)`.
    Direct(StateActionTable),
    /// `pi(a|s) = exp(theta(s,a)) / sum_b exp(theta(s,b))`.
    Softmax(StateActionTable),
}

impl Policy {
    /// Validates that every row is a probability vector.
    pub fn direct(probs: StateActionTable) -> Result<Self> {
        for (s, row) in probs.rows().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                return Err(Error::InvalidPolicy(format!("row {s} has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidPolicy(format!("row {s} sums to {sum}")));
            }
        }
        Ok(Policy::Direct(probs))
    }

    pub fn softmax(logits: StateActionTable) -> Result<Self> {
        if logits.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidPolicy("non-finite logit".into()));
        }
        Ok(Policy::Softmax(logits))
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy::Direct(StateActionTable::filled(n_states, n_actions, 1.0 / n_actions as f64))
    }

    /// Deterministic policy choosing `actions[s]` at state `s`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Self {
        Policy::Direct(StateActionTable::from_fn(actions.len(), n_actions, |s, a| {
            if actions[s] == a {
                1.0
            } else {
                0.0
            }
        }))
    }

    pub fn table(&self) -> &StateActionTable {
        match self {
            Policy::Direct(t) | Policy::Softmax(t) => t,
        }
    }

    pub fn parameterization(&self) -> Parameterization {
        match self {
            Policy::Direct(_) => Parameterization::Direct,
            Policy::Softmax(_) => Parameterization::Softmax,
        }
    }

    pub fn n_states(&self) -> usize {
        self.table().n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.table().n_actions()
    }

    /// Action probabilities `pi(a|s)`, borrowed for direct policies.
    pub fn probabilities(&self) -> Cow<'_, StateActionTable> {
        match self {
            Policy::Direct(t) => Cow::Borrowed(t),
            Policy::Softmax(t) => Cow::Owned(softmax_rows(t)),
        }
    }

    /// Whether every action has strictly positive probability.
    pub fn is_interior(&self) -> bool {
        match self {
            Policy::Direct(t) => t.as_slice().iter().all(|&p| p > 0.0),
            Policy::Softmax(t) => softmax_rows(t).as_slice().iter().all(|&p| p > 0.0),
        }
    }

    pub fn check_dims(&self, mdp: &MdpSpec) -> Result<()> {
        if self.n_states() != mdp.n_states() || self.n_actions() != mdp.n_actions() {
            return Err(Error::Dimension(format!(
                "policy is {}x{}, MDP is {}x{}",
                self.n_states(),
                self.n_actions(),
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        Ok(())
    }
}

fn softmax_rows(logits: &StateActionTable) -> StateActionTable {
    let mut out = logits.clone();
    for s in 0..out.n_states() {
        let row = out.row_mut(s);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            z += *x;
        }
        for x in row.iter_mut() {
            *x /= z;
        }
    }
    out
}

/// Converts softmax logits into the equivalent direct policy.
pub fn softmax_to_direct(policy: &Policy) -> Result<Policy> {
    match policy {
        Policy::Softmax(logits) => {
            if logits.as_slice().iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidPolicy("non-finite logit".into()));
            }
            Ok(Policy::Direct(softmax_rows(logits)))
        }
        Policy::Direct(_) => Err(Error::InvalidArgument(
            "softmax_to_direct expects a softmax policy".into(),
        )),
    }
}

/// The Markov chain `P^pi` and reward vector `r^pi` induced by a policy.
#[derive(Clone, Debug, PartialEq)]
pub struct InducedChain {
    pub p_pi: DMatrix<f64>,
    pub r_pi: DVector<f64>,
}

pub fn induced_chain(mdp: &MdpSpec, policy: &Policy) -> Result<InducedChain> {
    policy.check_dims(mdp)?;
    let probs = policy.probabilities();
    let n = mdp.n_states();
    let mut p_pi = DMatrix::zeros(n, n);
    let mut r_pi = DVector::zeros(n);
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            let w = probs.get(s, a);
            if w == 0.0 {
                continue;
            }
            r_pi[s] += w * mdp.r(s, a);
            for (next, &p) in mdp.p_row(s, a).iter().enumerate() {
                p_pi[(s, next)] += w * p;
            }
        }
    }
    Ok(InducedChain { p_pi, r_pi })
}

/// Reduces arrival rewards `raw(s, a, s')` to `r(s,a) = sum_s' P(s'|s,a) raw(s,a,s')`.
pub fn reduce_next_state_rewards(mdp: &MdpSpec, raw: impl Fn(usize, usize, usize) -> f64) -> StateActionTable {
    StateActionTable::from_fn(mdp.n_states(), mdp.n_actions(), |s, a| {
        mdp.p_row(s, a)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(next, &p)| p * raw(s, a, next))
            .sum()
    })
}

/// Random strictly positive policy with every entry at least `floor`.
pub fn random_interior_policy(mdp: &MdpSpec, seed: u64, floor: f64) -> Result<Policy> {
    random_policy_with_floor(mdp.n_states(), mdp.n_actions(), seed, floor)
}

pub(crate) fn random_policy_with_floor(n_states: usize, n_actions: usize, seed: u64, floor: f64) -> Result<Policy> {
    if !(floor > 0.0 && floor * (n_actions as f64) < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "floor {floor} must lie in (0, 1/{n_actions})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let free = 1.0 - floor * n_actions as f64;
    let mut table = StateActionTable::zeros(n_states, n_actions);
    for s in 0..n_states {
        // exponential weights give a uniform draw on the simplex
        let w: Vec<f64> = (0..n_actions).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let total: f64 = w.iter().sum();
        for (a, wa) in w.iter().enumerate() {
            table.set(s, a, floor + free * wa / total);
        }
    }
    Ok(Policy::Direct(table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::pathological;
    use approx::assert_abs_diff_eq;

    fn deterministic_line() -> MdpSpec {
        // 0 -> 1 -> 2 (absorbing) under action 0; action 1 stays put
        let n = 3;
        let mut t = vec![0.0; n * 2 * n];
        let idx = |s: usize, a: usize, next: usize| (s * 2 + a) * n + next;
        t[idx(0, 0, 1)] = 1.0;
        t[idx(1, 0, 2)] = 1.0;
        t[idx(2, 0, 2)] = 1.0;
        for s in 0..n {
            t[idx(s, 1, s)] = 1.0;
        }
        MdpSpec::new(n, 2, t, StateActionTable::zeros(n, 2), uniform_distribution(n), 0.0).unwrap()
    }

    #[test]
    fn pathological_is_valid() {
        let report = validate(&pathological());
        assert!(report.is_valid(), "{report}");
    }

    #[test]
    fn row_sum_violation_is_reported() {
        let mdp = pathological();
        let mut t = mdp.transitions().to_vec();
        // halve the (s0, a0) row
        for x in &mut t[0..5] {
            *x *= 0.5;
        }
        let bad = MdpSpec::from_parts(5, 2, t, mdp.rewards().clone(), mdp.mu().to_vec(), 1.0).unwrap();
        let report = validate(&bad);
        assert_eq!(
            report.issues,
            vec![ValidationIssue::TransitionRowSum { s: 0, a: 0, sum: 0.5 }]
        );
        assert!(matches!(
            MdpSpec::new(
                5,
                2,
                bad.transitions().to_vec(),
                bad.rewards().clone(),
                bad.mu().to_vec(),
                1.0
            ),
            Err(Error::InvalidMdp(_))
        ));
    }

    #[test]
    fn reward_bound_violation_is_reported() {
        let mdp = pathological();
        let mut r = mdp.rewards().clone();
        r.set(0, 0, mdp.reward_bound() + 1.0);
        let bad = MdpSpec::from_parts(5, 2, mdp.transitions().to_vec(), r, mdp.mu().to_vec(), 1.0).unwrap();
        let report = validate(&bad);
        assert_eq!(report.issues.len(), 1);
        assert!(matches!(
            report.issues[0],
            ValidationIssue::RewardExceedsBound { s: 0, a: 0, .. }
        ));
        assert!(report.to_string().contains("exceeds reward bound"));
    }

    #[test]
    fn deterministic_policy_selects_transitions() {
        let mdp = deterministic_line();
        let chain = induced_chain(&mdp, &Policy::deterministic(2, &[0, 1, 0])).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 0., 1., 0., 0., 0., 1.]);
        assert_eq!(chain.p_pi, expected);
    }

    #[test]
    fn uniform_policy_on_pathological_rewards() {
        let mdp = pathological();
        let chain = induced_chain(&mdp, &Policy::uniform(5, 2)).unwrap();
        assert_eq!(chain.r_pi.as_slice(), &[0.0, -0.5, 0.5, 0.0, 0.0]);
        for s in 0..5 {
            assert_abs_diff_eq!(chain.p_pi.row(s).sum(), 1.0, epsilon = PROB_TOL);
        }
    }

    #[test]
    fn first_action_policy_copies_rows() {
        let mdp = pathological();
        let chain = induced_chain(&mdp, &Policy::deterministic(2, &[0; 5])).unwrap();
        for s in 0..5 {
            let row: Vec<f64> = chain.p_pi.row(s).iter().cloned().collect();
            assert_eq!(row.as_slice(), mdp.p_row(s, 0));
        }
    }

    #[test]
    fn induced_chain_rejects_dimension_mismatch() {
        let mdp = pathological();
        assert!(matches!(
            induced_chain(&mdp, &Policy::uniform(4, 2)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn reduce_expected_arrival_reward() {
        let n = 3;
        let mut t = vec![0.0; n * n];
        t[0..3].copy_from_slice(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        t[4] = 1.0;
        t[8] = 1.0;
        let mdp = MdpSpec::new(n, 1, t, StateActionTable::zeros(n, 1), uniform_distribution(n), 1.0).unwrap();
        let r = reduce_next_state_rewards(&mdp, |s, _, next| if next == 2 && s != 2 { 1.0 } else { 0.0 });
        assert_abs_diff_eq!(r.get(0, 0), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(r.get(1, 0), 0.0);
        assert_eq!(r.get(2, 0), 0.0);
        let zero = reduce_next_state_rewards(&mdp, |_, _, _| 0.0);
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn reduce_deterministic_arrival() {
        let mdp = deterministic_line();
        let r = reduce_next_state_rewards(&mdp, |s, _, next| if next == 2 && s != 2 { 1.0 } else { 0.0 });
        assert_eq!(r.get(1, 0), 1.0);
        assert_eq!(r.get(0, 0), 0.0);
    }

    #[test]
    fn softmax_cases() {
        let eq = Policy::softmax(StateActionTable::filled(2, 3, 0.7)).unwrap();
        let p = softmax_to_direct(&eq).unwrap();
        for &x in p.table().as_slice() {
            assert_abs_diff_eq!(x, 1.0 / 3.0, epsilon = 1e-15);
        }
        let two = Policy::softmax(StateActionTable::from_rows(&[[2f64.ln(), 0.0]]).unwrap()).unwrap();
        let p = softmax_to_direct(&two).unwrap();
        assert_abs_diff_eq!(p.table().get(0, 0), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.table().get(0, 1), 1.0 / 3.0, epsilon = 1e-15);
        let big = Policy::softmax(StateActionTable::from_rows(&[[1000.0, 0.0]]).unwrap()).unwrap();
        let p = softmax_to_direct(&big).unwrap();
        assert_eq!(p.table().get(0, 0), 1.0);
        assert!(p.table().get(0, 1) >= 0.0 && p.table().get(0, 1) < 1e-300);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(Policy::softmax(StateActionTable::filled(1, 2, f64::NAN)).is_err());
        let raw = Policy::Softmax(StateActionTable::filled(1, 2, f64::INFINITY));
        assert!(softmax_to_direct(&raw).is_err());
    }

    #[test]
    fn random_interior_policy_contract() {
        let mdp = pathological();
        assert!(random_interior_policy(&mdp, 1, 0.5).is_err());
        assert!(random_interior_policy(&mdp, 1, 0.0).is_err());
        let a = random_interior_policy(&mdp, 7, 0.05).unwrap();
        let b = random_interior_policy(&mdp, 7, 0.05).unwrap();
        assert_eq!(a, b);
        assert!(a.table().as_slice().iter().all(|&p| p >= 0.05));
        for row in a.table().rows() {
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = PROB_TOL);
        }
        assert_ne!(a, random_interior_policy(&mdp, 8, 0.05).unwrap());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn induced_chain_is_linear(seed_a in 0u64..1000, seed_b in 0u64..1000, lambda in 0.0f64..=1.0) {
                let mdp = pathological();
                let pa = random_interior_policy(&mdp, seed_a, 0.01).unwrap();
                let pb = random_interior_policy(&mdp, seed_b, 0.01).unwrap();
                let mix = Policy::Direct(pa.table().map(|x| lambda * x).add_scaled(1.0 - lambda, pb.table()));
                let ca = induced_chain(&mdp, &pa).unwrap();
                let cb = induced_chain(&mdp, &pb).unwrap();
                let cm = induced_chain(&mdp, &mix).unwrap();
                let p_expected = &ca.p_pi * lambda + &cb.p_pi * (1.0 - lambda);
                let r_expected = &ca.r_pi * lambda + &cb.r_pi * (1.0 - lambda);
                prop_assert!((cm.p_pi - p_expected).abs().max() < 1e-14);
                prop_assert!((cm.r_pi - r_expected).abs().max() < 1e-14);
            }

            #[test]
            fn softmax_shift_invariant(logits in proptest::collection::vec(-20.0f64..20.0, 6), shift in -50.0f64..50.0) {
                let base = StateActionTable::from_flat(2, 3, logits).unwrap();
                let mut shifted = base.clone();
                for x in shifted.row_mut(1) {
                    *x += shift;
                }
                let p = softmax_to_direct(&Policy::Softmax(base)).unwrap();
                let q = softmax_to_direct(&Policy::Softmax(shifted)).unwrap();
                for (x, y) in p.table().as_slice().iter().zip(q.table().as_slice()) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}
