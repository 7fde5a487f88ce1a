//! TOML text format for MDPs.
//!
//! ```toml
//! n_states = 2
//! n_actions = 1
//! reward_bound = 1.0          # optional, defaults to max |r|
//! transitions = [
//!   { s = 0, a = 0, "s'" = 1, p = 1.0 },
//!   { s = 1, a = 0, "s'" = 1, p = 1.0 },
//! ]
//! rewards = [ { s = 0, a = 0, r = 1.0 } ]   # or { s, a, "s'", r } for arrival rewards
//! mu = [ { s = 0, p = 1.0 } ]               # optional, defaults to uniform
//! ```
//!
//! Unlisted transitions and rewards are zero. `next` is accepted as a
//! spelling of `s'`.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::mdp::{uniform_distribution, MdpSpec, StateActionTable};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    n_states: usize,
    n_actions: usize,
    #[serde(default)]
    transitions: Vec<TransitionRecord>,
    #[serde(default)]
    rewards: Vec<RewardRecord>,
    mu: Option<Vec<MassRecord>>,
    reward_bound: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionRecord {
    s: usize,
    a: usize,
    #[serde(rename = "s'", alias = "next")]
    next: usize,
    p: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RewardRecord {
    s: usize,
    a: usize,
    #[serde(rename = "s'", alias = "next")]
    next: Option<usize>,
    r: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MassRecord {
    s: usize,
    p: f64,
}

pub fn parse_mdp(text: &str) -> Result<MdpSpec> {
    let doc: Document = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let (n, na) = (doc.n_states, doc.n_actions);
    if n == 0 || na == 0 {
        return Err(Error::Parse("n_states and n_actions must be positive".into()));
    }
    let check = |what: &str, s: usize, a: Option<usize>, next: Option<usize>| -> Result<()> {
        if s >= n || a.is_some_and(|a| a >= na) || next.is_some_and(|x| x >= n) {
            return Err(Error::Parse(format!(
                "{what} index out of range: s={s} a={a:?} s'={next:?}"
            )));
        }
        Ok(())
    };

    let mut t = vec![0.0; n * na * n];
    let mut seen = HashSet::new();
    for rec in &doc.transitions {
        check("transition", rec.s, Some(rec.a), Some(rec.next))?;
        if !seen.insert((rec.s, rec.a, rec.next)) {
            return Err(Error::Parse(format!(
                "duplicate transition (s={}, a={}, s'={})",
                rec.s, rec.a, rec.next
            )));
        }
        t[(rec.s * na + rec.a) * n + rec.next] = rec.p;
    }

    let mut direct = StateActionTable::zeros(n, na);
    let mut arrival: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    let mut direct_keys = HashSet::new();
    for rec in &doc.rewards {
        check("reward", rec.s, Some(rec.a), rec.next)?;
        match rec.next {
            None => {
                if !direct_keys.insert((rec.s, rec.a)) {
                    return Err(Error::Parse(format!("duplicate reward (s={}, a={})", rec.s, rec.a)));
                }
                direct.set(rec.s, rec.a, rec.r);
            }
            Some(next) => {
                if arrival.insert((rec.s, rec.a, next), rec.r).is_some() {
                    return Err(Error::Parse(format!(
                        "duplicate reward (s={}, a={}, s'={next})",
                        rec.s, rec.a
                    )));
                }
            }
        }
    }
    if let Some(&(s, a, _)) = arrival.keys().find(|(s, a, _)| direct_keys.contains(&(*s, *a))) {
        return Err(Error::Parse(format!(
            "reward for (s={s}, a={a}) given both with and without s'"
        )));
    }
    let mut rewards = direct;
    for (&(s, a, next), &r) in &arrival {
        let value = rewards.get(s, a) + t[(s * na + a) * n + next] * r;
        rewards.set(s, a, value);
    }

    let mu = match &doc.mu {
        None => uniform_distribution(n),
        Some(records) => {
            let mut mu = vec![0.0; n];
            let mut seen = HashSet::new();
            for rec in records {
                check("mu", rec.s, None, None)?;
                if !seen.insert(rec.s) {
                    return Err(Error::Parse(format!("duplicate mu entry for s={}", rec.s)));
                }
                mu[rec.s] = rec.p;
            }
            mu
        }
    };
    let bound = doc.reward_bound.unwrap_or_else(|| rewards.max_abs());
    MdpSpec::new(n, na, t, rewards, mu, bound)
}

pub fn read_mdp(path: impl AsRef<Path>) -> Result<MdpSpec> {
    parse_mdp(&std::fs::read_to_string(path)?)
}

/// Serializes with one inline record per nonzero entry.
pub fn emit_mdp(mdp: &MdpSpec) -> String {
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    let mut out = String::new();
    let _ = writeln!(out, "n_states = {n}");
    let _ = writeln!(out, "n_actions = {na}");
    let _ = writeln!(out, "reward_bound = {:?}", mdp.reward_bound());
    out.push_str("transitions = [\n");
    for s in 0..n {
        for a in 0..na {
            for (next, &p) in mdp.p_row(s, a).iter().enumerate() {
                if p != 0.0 {
                    let _ = writeln!(out, "  {{ s = {s}, a = {a}, \"s'\" = {next}, p = {p:?} }},");
                }
            }
        }
    }
    out.push_str("]\nrewards = [\n");
    for s in 0..n {
        for a in 0..na {
            let r = mdp.r(s, a);
            if r != 0.0 {
                let _ = writeln!(out, "  {{ s = {s}, a = {a}, r = {r:?} }},");
            }
        }
    }
    out.push_str("]\nmu = [\n");
    for (s, &p) in mdp.mu().iter().enumerate() {
        if p != 0.0 {
            let _ = writeln!(out, "  {{ s = {s}, p = {p:?} }},");
        }
    }
    out.push_str("]\n");
    out
}
