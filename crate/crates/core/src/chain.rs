//! Recurrent/transient classification of states, the transient matrix
//! `T^pi`, spectral diagnostics and the finiteness-of-value checker.
//!
//! A communicating class of a finite chain is recurrent iff it is closed, so
//! classification reduces to strongly connected components of the support
//! digraph plus a scan for edges leaving each component.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{induced_chain, InducedChain, MdpSpec, Policy};

/// Default limit on the number of deterministic policies enumerated.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

const POWER_ITERATION_CAP: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CommunicatingClass {
    pub states: Vec<usize>,
    pub closed: bool,
}

/// Partition of the states into recurrent and transient ones.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Classification {
    pub recurrent: Vec<usize>,
    pub transient: Vec<usize>,
    /// Sorted by smallest member state.
    pub classes: Vec<CommunicatingClass>,
    #[serde(skip)]
    is_recurrent: Vec<bool>,
}

impl Classification {
    pub fn n_states(&self) -> usize {
        self.is_recurrent.len()
    }

    pub fn is_recurrent(&self, s: usize) -> bool {
        self.is_recurrent[s]
    }

    pub fn is_transient(&self, s: usize) -> bool {
        !self.is_recurrent[s]
    }

    /// Classifies the digraph with adjacency lists `succ`.
    pub fn from_successors(succ: &[Vec<usize>]) -> Self {
        let n = succ.len();
        let comps = strongly_connected_components(succ);
        let mut comp_of = vec![0usize; n];
        for (c, states) in comps.iter().enumerate() {
            for &s in states {
                comp_of[s] = c;
            }
        }
        let mut is_recurrent = vec![false; n];
        let mut classes: Vec<CommunicatingClass> = comps
            .into_iter()
            .enumerate()
            .map(|(c, mut states)| {
                states.sort_unstable();
                let closed = states.iter().all(|&s| succ[s].iter().all(|&t| comp_of[t] == c));
                if closed {
                    for &s in &states {
                        is_recurrent[s] = true;
                    }
                }
                CommunicatingClass { states, closed }
            })
            .collect();
        classes.sort_by_key(|c| c.states[0]);
        let recurrent = (0..n).filter(|&s| is_recurrent[s]).collect();
        let transient = (0..n).filter(|&s| !is_recurrent[s]).collect();
        Self {
            recurrent,
            transient,
            classes,
            is_recurrent,
        }
    }
}

/// Iterative Tarjan. Components come out in reverse topological order.
fn strongly_connected_components(succ: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNVISITED: usize = usize::MAX;
    let n = succ.len();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next_index = 0;
    // (node, position in its successor list)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&(v, pos)) = call.last() {
            if let Some(&w) = succ[v].get(pos) {
                if let Some(top) = call.last_mut() {
                    top.1 += 1;
                }
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comps.push(comp);
            }
        }
    }
    comps
}

/// Classification shared by every strictly positive policy: the support
/// digraph has an edge `s -> s'` iff some action reaches `s'` from `s`.
pub fn classify_support(mdp: &MdpSpec) -> Classification {
    let n = mdp.n_states();
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|s| {
            (0..n)
                .filter(|&next| (0..mdp.n_actions()).any(|a| mdp.p(s, a, next) > 0.0))
                .collect()
        })
        .collect();
    Classification::from_successors(&succ)
}

pub fn classify_chain(p_pi: &DMatrix<f64>) -> Classification {
    let n = p_pi.nrows();
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|s| (0..n).filter(|&next| p_pi[(s, next)] > 0.0).collect())
        .collect();
    Classification::from_successors(&succ)
}

/// Classification of the chain `P^pi` of one specific (possibly boundary) policy.
pub fn classify_for_policy(mdp: &MdpSpec, policy: &Policy) -> Result<Classification> {
    Ok(classify_chain(&induced_chain(mdp, policy)?.p_pi))
}

/// `T^pi`: the transient-to-transient block of `P^pi`, zero elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct TransientMatrix {
    pub t: DMatrix<f64>,
    pub classification: Classification,
}

impl TransientMatrix {
    /// `I - T`.
    pub fn i_minus_t(&self) -> DMatrix<f64> {
        let n = self.t.nrows();
        DMatrix::identity(n, n) - &self.t
    }

    /// `||(I - T)^{-1}||_inf`, the largest expected number of transient
    /// steps from any state (1 for recurrent rows).
    pub fn fundamental_norm(&self) -> Result<f64> {
        let n = self.t.nrows();
        let lu = self.i_minus_t().lu();
        let rows = lu.solve(&DVector::from_element(n, 1.0)).ok_or(Error::Singular)?;
        Ok(rows.iter().cloned().fold(0.0, f64::max))
    }
}

pub fn transient_matrix(chain: &InducedChain, cls: &Classification) -> TransientMatrix {
    let n = chain.p_pi.nrows();
    let t = DMatrix::from_fn(n, n, |i, j| {
        if cls.is_transient(i) && cls.is_transient(j) {
            chain.p_pi[(i, j)]
        } else {
            0.0
        }
    });
    TransientMatrix {
        t,
        classification: cls.clone(),
    }
}

/// Dominant eigenvalue magnitude of a square nonnegative matrix.
///
/// Power iteration from the all-ones vector; if it has not settled after
/// 10 000 steps (reducible or defective cases), falls back to the
/// norm-of-powers bound `||T^k||_inf^(1/k)` with `k` doubling.
pub fn spectral_radius(t: &DMatrix<f64>, tol: f64) -> Result<f64> {
    if !t.is_square() {
        return Err(Error::Dimension("spectral radius of a non-square matrix".into()));
    }
    if t.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidArgument(
            "spectral radius expects a nonnegative matrix".into(),
        ));
    }
    let n = t.nrows();
    if n == 0 || t.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let mut x = DVector::from_element(n, 1.0);
    let mut estimate = f64::NAN;
    for _ in 0..POWER_ITERATION_CAP {
        let y = t * &x;
        let norm = y.amax();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let next = norm / x.amax();
        let y = y / norm;
        // the eigenvalue ratio can settle while the vector still cycles
        // (nilpotent or periodic blocks), so both must settle
        let moved = (&y - &x).amax();
        if (next - estimate).abs() <= tol && moved <= tol {
            return Ok(next);
        }
        estimate = next;
        x = y;
    }
    log::debug!("power iteration stalled at {estimate}; using norm-of-powers bound");
    Ok(norm_of_powers(t, tol))
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.sum()).fold(0.0, f64::max)
}

fn norm_of_powers(t: &DMatrix<f64>, tol: f64) -> f64 {
    // invariant: T^(2^j) = power * exp(log_scale)
    let mut power = t.clone();
    let mut log_scale = 0.0f64;
    let mut exponent = 1.0f64;
    let mut last = f64::INFINITY;
    for _ in 0..64 {
        let norm = inf_norm(&power);
        if norm == 0.0 {
            return 0.0;
        }
        let est = ((norm.ln() + log_scale) / exponent).exp();
        if (est - last).abs() <= tol {
            return est;
        }
        last = est;
        let scaled = &power / norm;
        power = &scaled * &scaled;
        log_scale = 2.0 * (log_scale + norm.ln());
        exponent *= 2.0;
    }
    last
}

/// A recurrent state paying a nonzero reward under some policy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    /// `None` stands for "every strictly positive policy".
    pub policy: Option<Vec<usize>>,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

impl Witness {
    pub fn describe_policy(&self) -> String {
        match &self.policy {
            None => "any strictly positive policy".to_string(),
            Some(actions) => format!("deterministic {actions:?}"),
        }
    }
}

/// Outcome of the finiteness-of-value checks. Neither flag claims the
/// condition for every stochastic policy; see the crate docs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiniteValueReport {
    /// No recurrent state of the support chain carries a nonzero reward.
    pub holds_necessary: bool,
    /// Set when deterministic policies were enumerated.
    pub holds_deterministic_exhaustive: Option<bool>,
    pub witnesses: Vec<Witness>,
}

pub fn check_finite_values(mdp: &MdpSpec, exhaustive: bool) -> Result<FiniteValueReport> {
    check_finite_values_capped(mdp, exhaustive, DEFAULT_ENUMERATION_CAP)
}

pub fn check_finite_values_capped(mdp: &MdpSpec, exhaustive: bool, cap: u64) -> Result<FiniteValueReport> {
    let support = classify_support(mdp);
    let mut witnesses = Vec::new();
    for &s in &support.recurrent {
        for a in 0..mdp.n_actions() {
            let r = mdp.r(s, a);
            if r != 0.0 {
                witnesses.push(Witness {
                    policy: None,
                    state: s,
                    action: a,
                    reward: r,
                });
            }
        }
    }
    let holds_necessary = witnesses.is_empty();
    let mut holds_exhaustive = None;
    if exhaustive {
        let policies = DeterministicPolicies::new(mdp, cap)?;
        let before = witnesses.len();
        for actions in policies {
            let policy = Policy::deterministic(mdp.n_actions(), &actions);
            let cls = classify_for_policy(mdp, &policy)?;
            for &s in &cls.recurrent {
                let r = mdp.r(s, actions[s]);
                if r != 0.0 {
                    witnesses.push(Witness {
                        policy: Some(actions.clone()),
                        state: s,
                        action: actions[s],
                        reward: r,
                    });
                }
            }
        }
        holds_exhaustive = Some(holds_necessary && witnesses.len() == before);
    }
    Ok(FiniteValueReport {
        holds_necessary,
        holds_deterministic_exhaustive: holds_exhaustive,
        witnesses,
    })
}

/// Enumerates deterministic policies over the distinct actions of each
/// state (actions with identical transitions and reward are merged onto
/// the lowest index). Order is lexicographic, state 0 most significant.
#[derive(Clone, Debug)]
pub struct DeterministicPolicies {
    choices: Vec<Vec<usize>>,
    cursor: Option<Vec<usize>>,
}

impl DeterministicPolicies {
    pub fn new(mdp: &MdpSpec, cap: u64) -> Result<Self> {
        let choices = mdp.distinct_actions();
        let count = Self::count_of(&choices);
        if count > cap as f64 {
            return Err(Error::EnumerationCap { count, cap });
        }
        Ok(Self {
            cursor: Some(vec![0; choices.len()]),
            choices,
        })
    }

    fn count_of(choices: &[Vec<usize>]) -> f64 {
        choices.iter().map(|c| c.len() as f64).product()
    }

    /// Number of policies that will be produced.
    pub fn count(mdp: &MdpSpec) -> f64 {
        Self::count_of(&mdp.distinct_actions())
    }
}

impl Iterator for DeterministicPolicies {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let cursor = self.cursor.as_mut()?;
        let out = cursor.iter().zip(&self.choices).map(|(&i, c)| c[i]).collect();
        let mut pos = cursor.len();
        loop {
            if pos == 0 {
                self.cursor = None;
                break;
            }
            pos -= 1;
            cursor[pos] += 1;
            if cursor[pos] < self.choices[pos].len() {
                break;
            }
            cursor[pos] = 0;
        }
        Some(out)
    }
}
