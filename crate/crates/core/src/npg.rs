//! Natural policy gradient in multiplicative-weights form,
//! `pi_{k+1}(a|s) ∝ pi_k(a|s) exp(eta_k Q^{pi_k}(s,a))`.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::{q_function, PolicyEvaluation};
use crate::iterate::{IterateLog, IterateRecord, SolverOutcome};
use crate::mdp::{check_distribution, MdpSpec, Policy, StateActionTable};

/// Entries are kept at or above this so logs stay finite.
pub const PROB_FLOOR: f64 = 1e-300;

/// Slack allowed on the monotone-improvement check.
pub const MONOTONE_SLACK: f64 = 1e-10;

/// One multiplicative-weights update; independent of the start distribution.
pub fn npg_step(mdp: &MdpSpec, pi: &Policy, eta: f64) -> Result<Policy> {
    pi.check_dims(mdp)?;
    check_interior(pi)?;
    let eval = PolicyEvaluation::new(mdp, pi)?;
    let q = q_function(mdp, &eval.value());
    Ok(Policy::Direct(tilt(&eval.probs, &q, eta)?))
}

fn check_interior(pi: &Policy) -> Result<()> {
    let probs = pi.probabilities();
    if let Some(i) = probs.as_slice().iter().position(|&p| !(p > 0.0)) {
        let na = probs.n_actions();
        return Err(Error::BoundaryPolicy {
            state: i / na,
            action: i % na,
            value: probs.as_slice()[i],
        });
    }
    Ok(())
}

/// Relative width below which Q-values in a row count as tied.
///
/// Once `eta_k` reaches 1e15 or so, rounding noise in `Q` would otherwise
/// be amplified into arbitrary reweighting among equally good actions.
pub const TIE_TOL: f64 = 1e-12;

/// `row ∝ pi exp(eta q)`, evaluated in log space with max-subtraction.
/// Entries within [`TIE_TOL`] of the row maximum are treated as equal to it.
pub fn tilt(probs: &StateActionTable, q: &StateActionTable, eta: f64) -> Result<StateActionTable> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "step size {eta} must be finite and >= 0"
        )));
    }
    if let Some(x) = q.as_slice().iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite Q value {x}")));
    }
    let mut out = probs.clone();
    let mut logits = vec![0.0; probs.n_actions()];
    for s in 0..probs.n_states() {
        let q_row = q.row(s);
        let q_max = q_row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let tie = TIE_TOL * q_max.abs().max(1.0);
        for (a, l) in logits.iter_mut().enumerate() {
            let advantage = q_row[a] - q_max;
            let advantage = if advantage >= -tie { 0.0 } else { advantage };
            *l = probs.get(s, a).max(PROB_FLOOR).ln() + eta * advantage;
        }
        let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let row = out.row_mut(s);
        for (p, l) in row.iter_mut().zip(&logits) {
            *p = (l - top).exp();
        }
        let z: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p = (*p / z).max(PROB_FLOOR));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSchedule {
    Constant(f64),
    /// `eta_k = eta0 * growth^k`.
    Geometric {
        eta0: f64,
        growth: f64,
    },
}

impl StepSchedule {
    pub fn eta(&self, k: usize) -> f64 {
        match *self {
            StepSchedule::Constant(eta) => eta,
            StepSchedule::Geometric { eta0, growth } => eta0 * growth.powi(k.min(i32::MAX as usize) as i32),
        }
    }

    pub fn initial(&self) -> f64 {
        self.eta(0)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::Constant(eta) if eta > 0.0 && eta.is_finite() => Ok(()),
            StepSchedule::Geometric { eta0, growth } if eta0 > 0.0 && growth > 1.0 && growth.is_finite() => Ok(()),
            other => Err(Error::InvalidArgument(format!(
                "invalid schedule {other:?}: need eta > 0 and growth > 1"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct NpgConfig {
    pub schedule: StepSchedule,
    pub max_iters: usize,
    pub mu: Vec<f64>,
    pub stop_tol: f64,
    /// Defaults to the uniform policy.
    pub initial: Option<Policy>,
    /// `V*_mu`, for the gap column.
    pub reference: Option<f64>,
    /// Policy to measure `KL_{delta}(comparator, pi_k)` against.
    pub comparator: Option<Policy>,
}

impl NpgConfig {
    pub fn new(mdp: &MdpSpec, schedule: StepSchedule, max_iters: usize) -> Self {
        Self {
            schedule,
            max_iters,
            mu: mdp.mu().to_vec(),
            stop_tol: 0.0,
            initial: None,
            reference: None,
            comparator: None,
        }
    }
}

/// Runs NPG, failing with [`Error::NonMonotone`] if `V_mu` ever drops by
/// more than [`MONOTONE_SLACK`].
pub fn run_npg(mdp: &MdpSpec, config: &NpgConfig) -> Result<SolverOutcome> {
    config.schedule.validate()?;
    check_distribution(&config.mu, mdp.n_states())?;
    if !(config.stop_tol >= 0.0) {
        return Err(Error::InvalidArgument("stop_tol must be >= 0".into()));
    }
    let mut policy = config
        .initial
        .clone()
        .unwrap_or_else(|| Policy::uniform(mdp.n_states(), mdp.n_actions()));
    policy.check_dims(mdp)?;
    check_interior(&policy)?;
    let kl_weights = match &config.comparator {
        Some(c) => Some(PolicyEvaluation::new(mdp, c)?.visitation(&config.mu)),
        None => None,
    };
    let mut log = IterateLog {
        records: Vec::with_capacity(config.max_iters + 1),
        reference: config.reference.map(|v| format!("V*_mu = {v}")),
    };
    let mut previous: Option<f64> = None;
    for iter in 0..=config.max_iters {
        let start = Instant::now();
        let eval = PolicyEvaluation::new(mdp, &policy)?;
        let v = eval.value();
        let v_mu: f64 = v.iter().zip(&config.mu).map(|(v, m)| v * m).sum();
        if let Some(p) = previous {
            if v_mu < p - MONOTONE_SLACK {
                return Err(Error::NonMonotone { iter, drop: p - v_mu });
            }
        }
        let q = q_function(mdp, &v);
        let kl_to_reference = match (&config.comparator, &kl_weights) {
            (Some(c), Some(w)) => Some(weighted_kl(c, &policy, w.as_slice())?),
            _ => None,
        };
        let last = iter == config.max_iters || previous.is_some_and(|p| (v_mu - p).abs() < config.stop_tol);
        let eta = if last { 0.0 } else { config.schedule.eta(iter) };
        let next = if last { None } else { Some(tilt(&eval.probs, &q, eta)?) };
        log.records.push(IterateRecord {
            iter,
            v_mu,
            gap: config.reference.map(|r| r - v_mu),
            eta,
            kl_to_reference,
            max_abs_q: q.max_abs(),
            wall_time: start.elapsed().as_secs_f64(),
        });
        previous = Some(v_mu);
        match next {
            Some(p) => policy = Policy::Direct(p),
            None => break,
        }
    }
    Ok(SolverOutcome { log, policy })
}

/// `sum_s w(s) KL(pi(.|s) || pi'(.|s))` with `0 log 0 = 0`.
///
/// Returns `+inf` when `pi` puts mass where `pi'` has none on a weighted state.
pub fn weighted_kl(pi: &Policy, pi_prime: &Policy, weights: &[f64]) -> Result<f64> {
    let (p, q) = (pi.probabilities(), pi_prime.probabilities());
    if !p.same_shape(&q) || weights.len() != p.n_states() {
        return Err(Error::Dimension("weighted KL arguments disagree in shape".into()));
    }
    let mut total = 0.0;
    for (s, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let mut kl = 0.0;
        for (&a, &b) in p.row(s).iter().zip(q.row(s)) {
            if a == 0.0 {
                continue;
            }
            if b == 0.0 {
                return Ok(f64::INFINITY);
            }
            kl += a * (a / b).ln();
        }
        total += w * kl;
    }
    Ok(total)
}

/// Sublinear bound for constant steps:
/// `(KL / eta + C_pi (||V*_+|| + ||V^{pi_0}||)) / (k + 1)`.
pub fn npg_sublinear_bound(kl0: f64, eta: f64, c_pi: f64, v_star_plus_inf: f64, v_pi0_inf: f64, k: usize) -> f64 {
    (kl0 / eta + c_pi * (v_star_plus_inf + v_pi0_inf)) / (k + 1) as f64
}

/// Linear bound for growing steps:
/// `(1 - 1/theta)^k (gap0 + KL / (eta0 (theta - 1)))`.
pub fn npg_linear_bound(gap0: f64, kl0: f64, eta0: f64, vartheta: f64, k: usize) -> Result<f64> {
    if !(vartheta > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "mismatch coefficient {vartheta} must exceed 1"
        )));
    }
    if !(eta0 > 0.0) {
        return Err(Error::InvalidArgument(format!("eta0 = {eta0} must be positive")));
    }
    let factor = (1.0 - 1.0 / vartheta).powi(k.min(i32::MAX as usize) as i32);
    Ok(factor * (gap0 + kl0 / (eta0 * (vartheta - 1.0))))
}

/// Smallest growth `theta / (theta - 1)` satisfying the linear-rate step condition.
pub fn compliant_growth(vartheta: f64) -> Result<f64> {
    if !(vartheta > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "mismatch coefficient {vartheta} must exceed 1"
        )));
    }
    Ok(vartheta / (vartheta - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{
        cliffwalk, frozenlake, pathological, pathological_nonnegative, random_absorbing_mdp, GridLayout,
    };
    use crate::evaluation::{evaluate, fundamental_norm, mismatch_coefficient, optimal_brute_force, value_function};
    use crate::mdp::random_interior_policy;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn tilt_examples() {
        let pi = StateActionTable::from_rows(&[[0.5, 0.5]]).unwrap();
        let q = StateActionTable::from_rows(&[[1.0, 0.0]]).unwrap();
        let out = tilt(&pi, &q, 2f64.ln()).unwrap();
        assert_abs_diff_eq!(out.get(0, 0), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.get(0, 1), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(tilt(&pi, &q, 0.0).unwrap(), pi);
        let flat = StateActionTable::from_rows(&[[3.0, 3.0]]).unwrap();
        let skew = StateActionTable::from_rows(&[[0.2, 0.8]]).unwrap();
        let out = tilt(&skew, &flat, 5.0).unwrap();
        assert_abs_diff_eq!(out.get(0, 0), 0.2, epsilon = 1e-15);
        // huge steps neither overflow nor leave the interior
        let out = tilt(&pi, &q, 1e6).unwrap();
        assert_eq!(out.get(0, 0), 1.0);
        assert_eq!(out.get(0, 1), PROB_FLOOR);
        assert!(tilt(&pi, &q, f64::NAN).is_err());
    }

    #[test]
    fn step_rejects_boundary() {
        let mdp = pathological();
        assert!(matches!(
            npg_step(&mdp, &Policy::deterministic(2, &[0, 0, 0, 0, 0]), 0.1),
            Err(Error::BoundaryPolicy { .. })
        ));
    }

    #[test]
    fn kl_examples() {
        let u = Policy::uniform(2, 2);
        let v = Policy::direct(StateActionTable::from_rows(&[[2.0 / 3.0, 1.0 / 3.0], [0.5, 0.5]]).unwrap()).unwrap();
        assert_eq!(weighted_kl(&u, &u, &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(weighted_kl(&u, &v, &[0.0, 0.0]).unwrap(), 0.0);
        let kl = weighted_kl(&u, &v, &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(kl, 0.5 * (0.75f64).ln() + 0.5 * (1.5f64).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(kl, 0.0589, epsilon = 1e-4);
        let det = Policy::deterministic(2, &[0, 0]);
        assert_eq!(weighted_kl(&u, &det, &[1.0, 0.0]).unwrap(), f64::INFINITY);
        assert_eq!(weighted_kl(&det, &u, &[1.0, 0.0]).unwrap(), 2f64.ln());
    }

    #[test]
    fn bound_formulas() {
        assert!(npg_sublinear_bound(0.3, 0.1, 2.0, 1.0, 1.0, 1_000_000) < 1e-4);
        assert_eq!(npg_sublinear_bound(0.0, 1.0, 1.0, 0.5, 0.5, 0), 1.0);
        assert_eq!(
            npg_linear_bound(1.0, 2.0, 0.5, 3.0, 0).unwrap(),
            1.0 + 2.0 / (0.5 * 2.0)
        );
        let b0 = npg_linear_bound(1.0, 1.0, 1.0, 2.0, 4).unwrap();
        let b1 = npg_linear_bound(1.0, 1.0, 1.0, 2.0, 5).unwrap();
        assert_abs_diff_eq!(b1, b0 / 2.0, epsilon = 1e-15);
        assert!(npg_linear_bound(1.0, 1.0, 1.0, 1.0, 0).is_err());
        assert_eq!(compliant_growth(2.0).unwrap(), 2.0);
        assert!(compliant_growth(0.5).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(StepSchedule::Constant(0.0).validate().is_err());
        assert!(StepSchedule::Geometric { eta0: 0.1, growth: 1.0 }.validate().is_err());
        assert_abs_diff_eq!(
            StepSchedule::Geometric {
                eta0: 0.1,
                growth: 1.01
            }
            .eta(100),
            0.1 * 1.01f64.powi(100)
        );
    }

    #[test]
    fn zero_rewards_constant_log() {
        let zero = pathological().with_rewards(StateActionTable::zeros(5, 2), 0.0).unwrap();
        let out = run_npg(&zero, &NpgConfig::new(&zero, StepSchedule::Constant(0.1), 30)).unwrap();
        assert!(out.log.records.iter().all(|r| r.v_mu == 0.0));
        assert_eq!(out.log.records.len(), 31);
    }

    #[test]
    fn pathological_gap_stays_above_boundary_loss() {
        let mdp = pathological();
        let v_star = optimal_brute_force(&mdp).unwrap().value_at(mdp.mu());
        let mut cfg = NpgConfig::new(&mdp, StepSchedule::Constant(0.1), 2000);
        cfg.reference = Some(v_star);
        let out = run_npg(&mdp, &cfg).unwrap();
        for r in &out.log.records {
            assert!(r.gap.unwrap() >= 0.2 - 1e-9);
        }
        assert!((out.log.final_gap().unwrap() - 0.2).abs() < 1e-4);
    }

    #[test]
    fn frozenlake_geometric_schedule_is_faster() {
        let mdp = frozenlake(&GridLayout::default_frozenlake()).unwrap();
        let v_star = crate::evaluation::optimal_reference(&mdp).unwrap().value_at(mdp.mu());
        let run = |schedule| {
            let mut cfg = NpgConfig::new(&mdp, schedule, 600);
            cfg.reference = Some(v_star);
            run_npg(&mdp, &cfg).unwrap().log
        };
        let constant = run(StepSchedule::Constant(0.1));
        let geometric = run(StepSchedule::Geometric {
            eta0: 0.1,
            growth: 1.01,
        });
        let tol = 1e-3;
        let (c, g) = (constant.first_below(tol), geometric.first_below(tol));
        assert!(g.is_some());
        assert!(c.is_none_or(|c| g.unwrap() <= c), "{g:?} vs {c:?}");
    }

    #[test]
    fn rate_bounds_hold_on_nonnegative_fixture() {
        let mdp = pathological_nonnegative();
        let opt = optimal_brute_force(&mdp).unwrap();
        let pi_star = opt.pi_star.clone().unwrap();
        let v_star = opt.value_at(mdp.mu());
        let bundle = evaluate(&mdp, &pi_star, mdp.mu()).unwrap();
        let theta = mismatch_coefficient(&bundle.delta_mu, mdp.mu()).unwrap();
        assert_abs_diff_eq!(theta, 2.0, epsilon = 1e-12);
        let pi0 = Policy::uniform(5, 2);
        let kl0 = weighted_kl(&pi_star, &pi0, &bundle.delta_mu).unwrap();
        let v0 = value_function(&mdp, &pi0).unwrap();
        let c_star = fundamental_norm(&mdp, &pi_star).unwrap();

        let mut cfg = NpgConfig::new(&mdp, StepSchedule::Constant(0.1), 300);
        cfg.reference = Some(v_star);
        let out = run_npg(&mdp, &cfg).unwrap();
        for r in &out.log.records {
            let bound = npg_sublinear_bound(kl0, 0.1, c_star, opt.v_star.amax(), v0.amax(), r.iter);
            assert!(r.gap.unwrap() <= bound + 1e-12);
        }

        let growth = compliant_growth(theta).unwrap();
        cfg.schedule = StepSchedule::Geometric { eta0: 0.1, growth };
        let out = run_npg(&mdp, &cfg).unwrap();
        let gap0 = out.log.records[0].gap.unwrap();
        for r in &out.log.records {
            let bound = npg_linear_bound(gap0, kl0, 0.1, theta, r.iter).unwrap();
            assert!(r.gap.unwrap() <= bound + 1e-12, "k = {}", r.iter);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn improvement_and_first_claim(which in 0usize..4, seed in 0u64..500, eta in 0.01f64..5.0) {
            let mdp = match which {
                0 => pathological(),
                1 => frozenlake(&GridLayout::default_frozenlake()).unwrap(),
                2 => cliffwalk(),
                _ => random_absorbing_mdp(6, 3, seed),
            };
            let pi = random_interior_policy(&mdp, seed, 1e-3).unwrap();
            let next = npg_step(&mdp, &pi, eta).unwrap();
            let v = value_function(&mdp, &pi).unwrap();
            let v_next = value_function(&mdp, &next).unwrap();
            for s in 0..mdp.n_states() {
                prop_assert!(v_next[s] >= v[s] - MONOTONE_SLACK);
            }
            let q = q_function(&mdp, &v);
            for s in 0..mdp.n_states() {
                let lhs: f64 = (0..mdp.n_actions())
                    .map(|a| q.get(s, a) * (pi.table().get(s, a) - next.table().get(s, a)))
                    .sum();
                prop_assert!(lhs <= 1e-12);
            }
        }

        #[test]
        fn tilt_ignores_per_state_q_shift(seed in 0u64..500, shift in -100.0f64..100.0, s in 0usize..6, eta in 0.0f64..3.0) {
            let mdp = random_absorbing_mdp(6, 3, seed);
            let pi = random_interior_policy(&mdp, seed + 1, 1e-2).unwrap();
            let v = value_function(&mdp, &pi).unwrap();
            let q = q_function(&mdp, &v);
            let mut shifted = q.clone();
            shifted.row_mut(s).iter_mut().for_each(|x| *x += shift);
            let a = tilt(pi.table(), &q, eta).unwrap();
            let b = tilt(pi.table(), &shifted, eta).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn random_comparators_satisfy_sublinear_bound(pseed in 0u64..200) {
            let mdp = pathological_nonnegative();
            let opt = optimal_brute_force(&mdp).unwrap();
            let comparator = random_interior_policy(&mdp, pseed, 1e-2).unwrap();
            let bundle = evaluate(&mdp, &comparator, mdp.mu()).unwrap();
            let v_cmp: f64 = bundle.v.iter().zip(mdp.mu()).map(|(v, m)| v * m).sum();
            let pi0 = Policy::uniform(5, 2);
            let kl0 = weighted_kl(&comparator, &pi0, &bundle.delta_mu).unwrap();
            let c = fundamental_norm(&mdp, &comparator).unwrap();
            let v0 = value_function(&mdp, &pi0).unwrap();
            let mut cfg = NpgConfig::new(&mdp, StepSchedule::Constant(0.5), 100);
            cfg.reference = Some(v_cmp);
            let out = run_npg(&mdp, &cfg).unwrap();
            for r in &out.log.records {
                let bound = npg_sublinear_bound(kl0, 0.5, c, opt.v_star.amax(), v0.amax(), r.iter);
                prop_assert!(r.gap.unwrap() <= bound + 1e-12);
            }
        }
    }
}
