//! How far a model profile's outcomes are from the target's, measured by a
//! discrepancy between expected terminal values.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::{Mechanism, MechanismFamily};
use crate::payoff::PayoffTable;
use crate::policy::{Policy, PolicyProfile};
use crate::rollout::{outcome_distribution_exact, outcome_distribution_mc, OutcomeDistribution};
use crate::spaces::FiniteSpaces;
use crate::value::{QFamily, QFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscrepancyKind {
    MeanAbsolute,
    MaxAbsolute,
    Euclidean,
}

/// A discrepancy between payoff vectors, optionally restricted to a subset
/// of participants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub kind: DiscrepancyKind,
    pub mask: Option<Vec<usize>>,
}

impl Discrepancy {
    pub fn new(kind: DiscrepancyKind, mask: Option<Vec<usize>>, n_participants: usize) -> Result<Self> {
        if let Some(m) = &mask {
            if m.is_empty() {
                return Err(Error::arg("discrepancy mask is empty"));
            }
            if let Some(&i) = m.iter().find(|&&i| i >= n_participants) {
                return Err(Error::arg(format!("mask index {i} out of range")));
            }
        }
        Ok(Discrepancy { kind, mask })
    }

    pub fn mean_absolute() -> Self {
        Discrepancy {
            kind: DiscrepancyKind::MeanAbsolute,
            mask: None,
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::dim("payoff vectors differ in length"));
        }
        let idx: Vec<usize> = match &self.mask {
            Some(m) => {
                if m.iter().any(|&i| i >= a.len()) {
                    return Err(Error::dim("mask index out of range"));
                }
                m.clone()
            }
            None => (0..a.len()).collect(),
        };
        let d = idx.iter().map(|&i| (a[i] - b[i]).abs());
        Ok(match self.kind {
            DiscrepancyKind::MeanAbsolute => d.sum::<f64>() / idx.len() as f64,
            DiscrepancyKind::MaxAbsolute => d.fold(0.0, f64::max),
            DiscrepancyKind::Euclidean => d.map(|x| x * x).sum::<f64>().sqrt(),
        })
    }
}

/// `profile` with participant `i` replaced by `rep`. Other policies are
/// shared with the original profile.
pub fn substitute_single(
    spaces: &FiniteSpaces,
    profile: &PolicyProfile,
    i: usize,
    rep: Arc<Policy>,
) -> Result<PolicyProfile> {
    if i >= profile.n_participants() {
        return Err(Error::arg(format!("participant {i} out of range")));
    }
    let mut ps = profile.policies().to_vec();
    ps[i] = if rep.participant() == i {
        rep
    } else {
        Arc::new(rep.with_participant(i))
    };
    PolicyProfile::new(spaces, ps)
}

/// Every participant replaced by its representative.
pub fn substitute_all(spaces: &FiniteSpaces, profile: &PolicyProfile, reps: Vec<Arc<Policy>>) -> Result<PolicyProfile> {
    if reps.len() != profile.n_participants() {
        return Err(Error::arg(format!(
            "{} representatives for {} participants",
            reps.len(),
            profile.n_participants()
        )));
    }
    let ps = reps
        .into_iter()
        .enumerate()
        .map(|(i, r)| if r.participant() == i { r } else { Arc::new(r.with_participant(i)) })
        .collect();
    PolicyProfile::new(spaces, ps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepresentativityMode {
    /// Maximum over mechanism and terminal-Q families.
    FamilyMax,
    /// One fixed mechanism and the payoff table.
    FixedPayoff,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Representativity {
    pub value: f64,
    pub mechanism: usize,
    pub q: usize,
    pub mode: RepresentativityMode,
    /// Standard error of the value at the maximizing pair (sampled mode only).
    pub std_error: Option<f64>,
}

fn check_terminal_family(qs: &QFamily) -> Result<()> {
    for (k, q) in qs.members().iter().enumerate() {
        if !q.is_action_invariant(0.0) {
            return Err(Error::arg(format!(
                "terminal table {k} depends on the action; terminal values must be functions of the state only"
            )));
        }
    }
    Ok(())
}

/// `sum_w p(w) Q(w, .)` for an action-invariant table.
fn terminal_expectation(d: &OutcomeDistribution, q: &QFunction) -> Vec<f64> {
    let n = q.n_participants();
    let mut out = vec![0.0; n];
    for (w, &p) in d.probs.iter().enumerate() {
        if p != 0.0 {
            for (o, v) in out.iter_mut().zip(q.get(w, 0)) {
                *o += p * v;
            }
        }
    }
    out
}

/// Standard error of the sample mean of `Q(w, .)_i`, maximized over participants.
fn terminal_std_error(d: &OutcomeDistribution, q: &QFunction, n_samples: usize) -> f64 {
    let mean = terminal_expectation(d, q);
    (0..q.n_participants())
        .map(|i| {
            let var: f64 = d
                .probs
                .iter()
                .enumerate()
                .map(|(w, &p)| p * (q.get(w, 0)[i] - mean[i]).powi(2))
                .sum();
            (var / n_samples as f64).sqrt()
        })
        .fold(0.0, f64::max)
}

fn check_profiles(pi_star: &PolicyProfile, pi_tilde: &PolicyProfile) -> Result<()> {
    if !pi_star.same_shape(pi_tilde) {
        return Err(Error::dim("policy profiles are defined on different spaces"));
    }
    Ok(())
}

/// Maximum discrepancy over `mechs` x `qs` between expected terminal values
/// under the two profiles, from exact outcome distributions. Ties go to the
/// first pair in `(mechanism, Q)` order.
pub fn representativity(
    pi_star: &PolicyProfile,
    pi_tilde: &PolicyProfile,
    mechs: &MechanismFamily,
    qs: &QFamily,
    init: &[f64],
    discrepancy: &Discrepancy,
) -> Result<Representativity> {
    check_profiles(pi_star, pi_tilde)?;
    if mechs.is_empty() || qs.is_empty() {
        return Err(Error::arg("representativity needs non-empty families"));
    }
    if !qs.is_compatible(pi_star) {
        return Err(Error::dim("Q family does not match the policy profiles"));
    }
    check_terminal_family(qs)?;
    let per_mech: Vec<Result<(f64, usize)>> = (0..mechs.len())
        .into_par_iter()
        .map(|k| {
            let m = mechs.get(k);
            let a = outcome_distribution_exact(pi_star, &m, init)?;
            let b = outcome_distribution_exact(pi_tilde, &m, init)?;
            let mut best = (f64::NEG_INFINITY, 0);
            for (qi, q) in qs.members().iter().enumerate() {
                let v = discrepancy.eval(&terminal_expectation(&a, q), &terminal_expectation(&b, q))?;
                if v > best.0 {
                    best = (v, qi);
                }
            }
            Ok(best)
        })
        .collect();
    let mut out = Representativity {
        value: f64::NEG_INFINITY,
        mechanism: 0,
        q: 0,
        mode: RepresentativityMode::FamilyMax,
        std_error: None,
    };
    for (k, r) in per_mech.into_iter().enumerate() {
        let (v, qi) = r?;
        if v > out.value {
            out.value = v;
            out.mechanism = k;
            out.q = qi;
        }
    }
    Ok(out)
}

/// Sampled variant of [`representativity`] with per-pair seeded rollouts
/// from a fixed initial state; reports the standard error at the maximizer.
pub fn representativity_mc(
    pi_star: &PolicyProfile,
    pi_tilde: &PolicyProfile,
    mechs: &MechanismFamily,
    qs: &QFamily,
    init_state: usize,
    discrepancy: &Discrepancy,
    n_samples: usize,
    seed: u64,
) -> Result<Representativity> {
    check_profiles(pi_star, pi_tilde)?;
    if mechs.is_empty() || qs.is_empty() {
        return Err(Error::arg("representativity needs non-empty families"));
    }
    check_terminal_family(qs)?;
    let mut out = Representativity {
        value: f64::NEG_INFINITY,
        mechanism: 0,
        q: 0,
        mode: RepresentativityMode::FamilyMax,
        std_error: None,
    };
    for k in 0..mechs.len() {
        let m = mechs.get(k);
        let a = outcome_distribution_mc(pi_star, &m, init_state, n_samples, seed)?;
        let b = outcome_distribution_mc(pi_tilde, &m, init_state, n_samples, seed.wrapping_add(1))?;
        for (qi, q) in qs.members().iter().enumerate() {
            let v = discrepancy.eval(&terminal_expectation(&a, q), &terminal_expectation(&b, q))?;
            if v > out.value {
                let se = terminal_std_error(&a, q, n_samples).hypot(terminal_std_error(&b, q, n_samples));
                out = Representativity {
                    value: v,
                    mechanism: k,
                    q: qi,
                    mode: RepresentativityMode::FamilyMax,
                    std_error: Some(se),
                };
            }
        }
    }
    Ok(out)
}

/// Discrepancy between exact expected payoff vectors under one mechanism.
pub fn payoff_discrepancy(
    pi_star: &PolicyProfile,
    pi_tilde: &PolicyProfile,
    mech: &Mechanism,
    init: &[f64],
    payoff: &PayoffTable,
    discrepancy: &Discrepancy,
) -> Result<f64> {
    check_profiles(pi_star, pi_tilde)?;
    let a = outcome_distribution_exact(pi_star, mech, init)?.expected_payoffs(payoff)?;
    let b = outcome_distribution_exact(pi_tilde, mech, init)?.expected_payoffs(payoff)?;
    discrepancy.eval(&a, &b)
}
