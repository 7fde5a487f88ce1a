//! Projected policy gradient over `Pi_alpha = { pi : pi(a|s) >= alpha }`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chain::classify_support;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, fundamental_norm, OptimalSolution, PolicyEvaluation};
use crate::gradient::direct_from_evaluation;
use crate::iterate::{IterateLog, IterateRecord, SolverOutcome};
use crate::mdp::{check_distribution, random_policy_with_floor, MdpSpec, Policy, StateActionTable};

fn check_alpha(alpha: f64, n_actions: usize) -> Result<()> {
    if !(alpha >= 0.0 && alpha * (n_actions as f64) < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha = {alpha} needs 0 <= alpha < 1/{n_actions}"
        )));
    }
    Ok(())
}

/// Euclidean projection of `row` onto `{ p : sum p = 1, p >= alpha }`.
pub fn project_row(row: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha, row.len())?;
    if row.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite entry in projected row".into()));
    }
    let mass = 1.0 - alpha * row.len() as f64;
    let mut sorted: Vec<f64> = row.iter().map(|x| x - alpha).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - mass) / (j + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    Ok(row.iter().map(|x| (x - alpha - tau).max(0.0) + alpha).collect())
}

/// Whether every entry of `policy` is at least `alpha` (up to `1e-12`).
pub fn in_alpha_simplex(policy: &Policy, alpha: f64) -> bool {
    policy.probabilities().as_slice().iter().all(|&p| p >= alpha - 1e-12)
}

/// The row putting `1 - (|A|-1) alpha` on `action` and `alpha` elsewhere.
pub fn alpha_extreme_row(n_actions: usize, action: usize, alpha: f64) -> Vec<f64> {
    let mut row = vec![alpha; n_actions];
    row[action] = 1.0 - alpha * (n_actions - 1) as f64;
    row
}

pub fn alpha_extreme_policy(n_actions: usize, actions: &[usize], alpha: f64) -> Policy {
    let rows: Vec<Vec<f64>> = actions
        .iter()
        .map(|&a| alpha_extreme_row(n_actions, a, alpha))
        .collect();
    Policy::Direct(StateActionTable::from_rows(&rows).expect("rectangular rows"))
}

/// MDP whose action `b` plays the alpha-extreme row for `b` in `mdp`.
///
/// Deterministic policies of the result are exactly the vertices of
/// `Pi_alpha`, so its optimum is the optimum of `mdp` over `Pi_alpha`.
pub fn alpha_extreme_mdp(mdp: &MdpSpec, alpha: f64) -> Result<MdpSpec> {
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    check_alpha(alpha, na)?;
    let mut t = Vec::with_capacity(n * na * n);
    let mut r = StateActionTable::zeros(n, na);
    for s in 0..n {
        for b in 0..na {
            let w = alpha_extreme_row(na, b, alpha);
            let mut row = vec![0.0; n];
            for (a, &wa) in w.iter().enumerate() {
                for (next, p) in mdp.p_row(s, a).iter().enumerate() {
                    row[next] += wa * p;
                }
            }
            t.extend(row);
            r.set(s, b, w.iter().enumerate().map(|(a, wa)| wa * mdp.r(s, a)).sum());
        }
    }
    MdpSpec::from_parts(n, na, t, r, mdp.mu().to_vec(), mdp.reward_bound())
}

/// Optimum of `V_mu` over `Pi_alpha`, with its policy mapped back to `mdp`.
pub fn optimal_in_alpha_simplex(mdp: &MdpSpec, alpha: f64) -> Result<OptimalSolution> {
    let extreme = alpha_extreme_mdp(mdp, alpha)?;
    let mut sol = crate::evaluation::optimal_reference(&extreme)?;
    let actions = sol
        .actions()
        .ok_or_else(|| Error::Precondition("no certified policy".into()))?;
    sol.pi_star = Some(alpha_extreme_policy(mdp.n_actions(), &actions, alpha));
    Ok(sol)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CAlphaMethod {
    /// Policy iteration over alpha-extreme rows.
    ExtremePolicyDp,
    /// Maximum over randomly sampled policies in `Pi_alpha`.
    Sampling,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CAlphaEstimate {
    pub value: f64,
    pub method: CAlphaMethod,
    pub iterations: usize,
    /// Maximizing alpha-extreme action per state (DP method only).
    pub argmax: Option<Vec<usize>>,
}

const C_ALPHA_ITERATION_CAP: usize = 10_000;

/// `C_alpha = max over Pi_alpha of ||(I - T^pi)^{-1}||_inf`.
///
/// Row sums of the fundamental matrix are expected transient visit counts,
/// so `C_alpha` is the value of "maximize expected transient steps" over
/// `Pi_alpha`. A linear objective over the alpha-simplex peaks at an
/// alpha-extreme row, so policy iteration over those rows solves it
/// exactly; each step evaluates `h = (I - T)^{-1} 1` by a direct solve.
/// `tol` is the slack below which a switch is not an improvement.
pub fn estimate_c_alpha(mdp: &MdpSpec, alpha: f64, tol: f64) -> Result<CAlphaEstimate> {
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    check_alpha(alpha, na)?;
    let transient = classify_support(mdp).transient;
    if transient.is_empty() {
        return Ok(CAlphaEstimate {
            value: 1.0,
            method: CAlphaMethod::ExtremePolicyDp,
            iterations: 0,
            argmax: Some(vec![0; n]),
        });
    }
    let m = transient.len();
    // mass each alpha-extreme row sends to each transient state
    let rows: Vec<Vec<DVector<f64>>> = transient
        .iter()
        .map(|&s| {
            (0..na)
                .map(|b| {
                    let w = alpha_extreme_row(na, b, alpha);
                    DVector::from_fn(m, |j, _| (0..na).map(|a| w[a] * mdp.p(s, a, transient[j])).sum())
                })
                .collect()
        })
        .collect();
    let mut choice = vec![0usize; m];
    for iter in 1..=C_ALPHA_ITERATION_CAP {
        let t = DMatrix::from_fn(m, m, |i, j| rows[i][choice[i]][j]);
        let h = (DMatrix::identity(m, m) - t)
            .lu()
            .solve(&DVector::from_element(m, 1.0))
            .ok_or(Error::Singular)?;
        let mut changed = false;
        for i in 0..m {
            let current = rows[i][choice[i]].dot(&h);
            let (best, value) = (0..na)
                .map(|b| (b, rows[i][b].dot(&h)))
                .fold((choice[i], current), |acc, x| if x.1 > acc.1 { x } else { acc });
            if value > current + tol * (1.0 + current.abs()) {
                choice[i] = best;
                changed = true;
            }
        }
        if !changed {
            let mut argmax = vec![0; n];
            for (i, &s) in transient.iter().enumerate() {
                argmax[s] = choice[i];
            }
            return Ok(CAlphaEstimate {
                value: h.max().max(1.0),
                method: CAlphaMethod::ExtremePolicyDp,
                iterations: iter,
                argmax: Some(argmax),
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: C_ALPHA_ITERATION_CAP,
        residual: f64::NAN,
    })
}

/// Lower estimate of `C_alpha` from `samples` random policies in `Pi_alpha`.
pub fn sample_c_alpha(mdp: &MdpSpec, alpha: f64, samples: usize, seed: u64) -> Result<CAlphaEstimate> {
    check_alpha(alpha, mdp.n_actions())?;
    let mut best = 1.0f64;
    for k in 0..samples {
        let pi = if alpha > 0.0 {
            random_policy_with_floor(mdp.n_states(), mdp.n_actions(), seed.wrapping_add(k as u64), alpha)?
        } else {
            Policy::uniform(mdp.n_states(), mdp.n_actions())
        };
        best = best.max(fundamental_norm(mdp, &pi)?);
    }
    Ok(CAlphaEstimate {
        value: best,
        method: CAlphaMethod::Sampling,
        iterations: samples,
        argmax: None,
    })
}

/// `eta = 1 / (2 R C^2 (C + 1) |A|)`.
pub fn theoretical_step_size(reward_bound: f64, c_alpha: f64, n_actions: usize) -> Result<f64> {
    if !(reward_bound > 0.0) || !(c_alpha >= 1.0) || n_actions == 0 {
        return Err(Error::InvalidArgument(format!(
            "step size needs R > 0, C >= 1, |A| > 0 (got R = {reward_bound}, C = {c_alpha})"
        )));
    }
    Ok(1.0 / (2.0 * reward_bound * c_alpha * c_alpha * (c_alpha + 1.0) * n_actions as f64))
}

/// Smoothness constant `2 R C^2 (C + 1) |A|` of `V_mu` on `Pi_alpha`.
pub fn smoothness_constant(reward_bound: f64, c_alpha: f64, n_actions: usize) -> f64 {
    2.0 * reward_bound * c_alpha * c_alpha * (c_alpha + 1.0) * n_actions as f64
}

/// Sublinear rate bound `256 R |S||A| C^2 (C + 1) / k * theta^2`.
pub fn ppg_rate_bound(reward_bound: f64, n_states: usize, n_actions: usize, c_alpha: f64, theta: f64, k: usize) -> f64 {
    256.0 * reward_bound * (n_states * n_actions) as f64 * c_alpha * c_alpha * (c_alpha + 1.0) / k as f64
        * theta
        * theta
}

fn project_policy(probs: &StateActionTable, alpha: f64) -> Result<Policy> {
    let mut out = probs.clone();
    for s in 0..probs.n_states() {
        let row = project_row(probs.row(s), alpha)?;
        out.row_mut(s).copy_from_slice(&row);
    }
    Ok(Policy::Direct(out))
}

/// `pi_{k+1} = proj_{Pi_alpha}(pi_k + eta grad V_mu(pi_k))`, row by row.
pub fn ppg_step(mdp: &MdpSpec, pi: &Policy, eta: f64, alpha: f64, mu: &[f64]) -> Result<Policy> {
    check_alpha(alpha, mdp.n_actions())?;
    let eval = prepare(mdp, pi, alpha, mu)?;
    step_from_evaluation(mdp, &eval, eta, alpha, mu)
}

fn prepare(mdp: &MdpSpec, pi: &Policy, alpha: f64, mu: &[f64]) -> Result<PolicyEvaluation> {
    if pi.parameterization() != crate::mdp::Parameterization::Direct {
        return Err(Error::InvalidPolicy("projected gradient needs a direct policy".into()));
    }
    pi.check_dims(mdp)?;
    check_distribution(mu, mdp.n_states())?;
    if !in_alpha_simplex(pi, alpha) {
        return Err(Error::InvalidPolicy(format!(
            "policy has an entry below alpha = {alpha}"
        )));
    }
    if alpha == 0.0 {
        if let Some(i) = pi.table().as_slice().iter().position(|&p| p <= 0.0) {
            return Err(Error::BoundaryPolicy {
                state: i / mdp.n_actions(),
                action: i % mdp.n_actions(),
                value: pi.table().as_slice()[i],
            });
        }
    }
    PolicyEvaluation::new(mdp, pi)
}

fn step_from_evaluation(mdp: &MdpSpec, eval: &PolicyEvaluation, eta: f64, alpha: f64, mu: &[f64]) -> Result<Policy> {
    let grad = direct_from_evaluation(mdp, eval, mu);
    project_policy(&eval.probs.add_scaled(eta, &grad.g), alpha)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSize {
    Fixed(f64),
    /// `1 / (2 R C_alpha^2 (C_alpha + 1) |A|)`.
    Theoretical,
}

#[derive(Clone, Debug)]
pub struct PpgConfig {
    pub alpha: f64,
    pub step: StepSize,
    pub max_iters: usize,
    pub mu: Vec<f64>,
    /// Stop once successive `V_mu` values differ by less than this.
    pub stop_tol: f64,
    /// Defaults to the uniform policy.
    pub initial: Option<Policy>,
    /// `V*_mu`, for the gap column.
    pub reference: Option<f64>,
}

impl PpgConfig {
    pub fn new(mdp: &MdpSpec, alpha: f64, step: StepSize, max_iters: usize) -> Self {
        Self {
            alpha,
            step,
            max_iters,
            mu: mdp.mu().to_vec(),
            stop_tol: 0.0,
            initial: None,
            reference: None,
        }
    }

    pub fn validate(&self, mdp: &MdpSpec) -> Result<()> {
        check_alpha(self.alpha, mdp.n_actions())?;
        if self.alpha == 0.0 {
            return Err(Error::InvalidArgument("PPG needs alpha > 0".into()));
        }
        check_distribution(&self.mu, mdp.n_states())?;
        if let StepSize::Fixed(eta) = self.step {
            if !(eta >= 0.0 && eta.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "step size {eta} must be finite and >= 0"
                )));
            }
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::InvalidArgument("stop_tol must be >= 0".into()));
        }
        Ok(())
    }

    /// The step size this configuration will use.
    pub fn resolve_step(&self, mdp: &MdpSpec) -> Result<f64> {
        match self.step {
            StepSize::Fixed(eta) => Ok(eta),
            StepSize::Theoretical => {
                let c = estimate_c_alpha(mdp, self.alpha, 1e-12)?.value;
                theoretical_step_size(mdp.reward_bound(), c, mdp.n_actions())
            }
        }
    }
}

pub fn run_ppg(mdp: &MdpSpec, config: &PpgConfig) -> Result<SolverOutcome> {
    config.validate(mdp)?;
    let eta = config.resolve_step(mdp)?;
    if let StepSize::Fixed(_) = config.step {
        if mdp.reward_bound() > 0.0 {
            let c = estimate_c_alpha(mdp, config.alpha, 1e-12)?.value;
            let safe = theoretical_step_size(mdp.reward_bound(), c, mdp.n_actions())?;
            if eta > safe {
                log::warn!("eta = {eta} exceeds the guaranteed step {safe:.3e}; the rate bound does not apply");
            }
        }
    }
    let mut policy = config
        .initial
        .clone()
        .unwrap_or_else(|| Policy::uniform(mdp.n_states(), mdp.n_actions()));
    let mut log = IterateLog {
        records: Vec::with_capacity(config.max_iters + 1),
        reference: config.reference.map(|v| format!("V*_mu = {v}")),
    };
    let mut previous: Option<f64> = None;
    for iter in 0..=config.max_iters {
        let start = Instant::now();
        let eval = prepare(mdp, &policy, config.alpha, &config.mu)?;
        let v = eval.value();
        let v_mu: f64 = v.iter().zip(&config.mu).map(|(v, m)| v * m).sum();
        let max_abs_q = crate::evaluation::q_function(mdp, &v).max_abs();
        let last = iter == config.max_iters || previous.is_some_and(|p| (v_mu - p).abs() < config.stop_tol);
        let next = if last {
            None
        } else {
            Some(step_from_evaluation(mdp, &eval, eta, config.alpha, &config.mu)?)
        };
        log.records.push(IterateRecord {
            iter,
            v_mu,
            gap: config.reference.map(|r| r - v_mu),
            eta: if last { 0.0 } else { eta },
            kl_to_reference: None,
            max_abs_q,
            wall_time: start.elapsed().as_secs_f64(),
        });
        previous = Some(v_mu);
        match next {
            Some(p) => policy = p,
            None => break,
        }
    }
    Ok(SolverOutcome { log, policy })
}

/// Largest `(pibar - pi)^T g` over `pibar` in `Pi_alpha`, for one row.
pub fn best_feasible_ascent(pi_row: &[f64], g_row: &[f64], alpha: f64) -> f64 {
    let na = pi_row.len();
    let best = g_row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let vertex = alpha * g_row.iter().sum::<f64>() + (1.0 - alpha * na as f64) * best;
    vertex - pi_row.iter().zip(g_row).map(|(p, g)| p * g).sum::<f64>()
}

/// Result of the epsilon-to-alpha rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AlphaChoice {
    pub alpha: f64,
    /// True when the rule asked for more than `1/|A|` (or had a zero
    /// denominator) and `1/|A|` was returned instead.
    pub clamped: bool,
}

/// `alpha = eps / (2 |S||A| ||delta^{pi*}_mu||_inf ||Q^{pi*}||_inf)`.
pub fn alpha_for_epsilon(mdp: &MdpSpec, epsilon: f64, mu: &[f64], opt: &OptimalSolution) -> Result<AlphaChoice> {
    if !mdp.has_nonnegative_rewards() {
        return Err(Error::Precondition("alpha rule requires nonnegative rewards".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon = {epsilon} must be positive")));
    }
    let pi_star = opt
        .pi_star
        .as_ref()
        .ok_or_else(|| Error::Precondition("alpha rule needs a certified optimal policy".into()))?;
    let bundle = evaluate(mdp, pi_star, mu)?;
    let delta_norm = bundle.delta_mu.iter().cloned().fold(0.0, f64::max);
    let q_norm = bundle.q.max_abs();
    let cap = 1.0 / mdp.n_actions() as f64;
    let denom = 2.0 * (mdp.n_states() * mdp.n_actions()) as f64 * delta_norm * q_norm;
    if denom == 0.0 {
        log::warn!("Q^pi* vanishes; every policy is epsilon-optimal, returning alpha = 1/|A|");
        return Ok(AlphaChoice {
            alpha: cap,
            clamped: true,
        });
    }
    let alpha = epsilon / denom;
    if alpha >= cap {
        log::warn!("alpha rule gave {alpha}, clamped to 1/|A|");
        return Ok(AlphaChoice {
            alpha: cap,
            clamped: true,
        });
    }
    Ok(AlphaChoice { alpha, clamped: false })
}
