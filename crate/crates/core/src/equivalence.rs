//! Equivalence classes of behavior profiles: equal conditionals, equal
//! one-step Bellman effect over a mechanism family and reference Q family
//! (transition equivalence), and equal effect of the full backward recursion
//! (trajectory equivalence).
//!
//! Both operator classes include the policy table at the first timestep,
//! which no Bellman backup reads: the transition class also compares the
//! initial-step map `Q -> sum_u pi_0(u|x) Q(x, u)`, and the trajectory class
//! compares initial state values `V_0(x)` rather than `Q_0`.

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result, SizeCount};
use crate::mechanism::{MechanismFamily, SIZE_GUARD};
use crate::policy::{Policy, PolicyProfile};
use crate::spaces::{Factorization, FiniteSpaces};
use crate::value::{apply_kernel_raw, backward_from, state_values_raw, QFamily, QFunction};

/// Default tolerance for exact tabular comparisons.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Closure members closer than this (entrywise, after rounding) are merged.
pub const CLOSURE_QUANTUM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionalWitness {
    pub t: usize,
    pub state: usize,
    pub action: usize,
    pub deviation: f64,
}

/// Which operator a transition witness refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    /// `Q -> sum_u pi_0(u|x) Q(x, u)`.
    Initial,
    /// Bellman backup at step `t` (kernel `t`, policy `t + 1`).
    Bellman(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionWitness {
    pub mechanism: usize,
    pub q: usize,
    pub step: Step,
    pub state: usize,
    /// Absent for the initial-step operator, which maps to state values.
    pub action: Option<usize>,
    pub deviation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryWitness {
    pub mechanism: usize,
    pub q: usize,
    pub state: usize,
    pub deviation: f64,
}

/// Outcome of one membership test. `witness` is present iff `equal` is false.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict<W> {
    pub equal: bool,
    pub max_deviation: f64,
    pub witness: Option<W>,
}

impl<W> Verdict<W> {
    fn new(max_deviation: f64, witness: W, tol: f64) -> Self {
        let equal = max_deviation <= tol;
        Verdict {
            equal,
            max_deviation,
            witness: (!equal).then_some(witness),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub conditional: Verdict<ConditionalWitness>,
    pub transition: Verdict<TransitionWitness>,
    pub trajectory: Verdict<TrajectoryWitness>,
    pub tol: f64,
}

fn check_pair(p1: &PolicyProfile, p2: &PolicyProfile) -> Result<()> {
    if !p1.same_shape(p2) {
        return Err(Error::dim("policy profiles are defined on different spaces"));
    }
    Ok(())
}

fn check_families(p: &PolicyProfile, mechs: &MechanismFamily, qs: &QFamily) -> Result<()> {
    if mechs.is_empty() {
        return Err(Error::arg("mechanism family is empty"));
    }
    if qs.is_empty() {
        return Err(Error::arg("Q family is empty"));
    }
    let m = mechs.get(0);
    if m.n_states() != p.n_states() || m.n_joint_actions() != p.n_joint_actions() || m.horizon() != p.horizon() {
        return Err(Error::dim("mechanism family does not match the policy profiles"));
    }
    if !qs.is_compatible(p) {
        return Err(Error::dim("Q family does not match the policy profiles"));
    }
    Ok(())
}

/// Largest joint-conditional difference, first in `(t, x, u)` order.
/// `scope[t][x]` restricts the comparison when given.
fn conditional_scan(p1: &PolicyProfile, p2: &PolicyProfile, scope: Option<&[Vec<bool>]>) -> ConditionalWitness {
    let mut best = ConditionalWitness {
        t: 0,
        state: 0,
        action: 0,
        deviation: -1.0,
    };
    let (mut r1, mut r2) = (Vec::new(), Vec::new());
    for t in 0..p1.horizon() {
        for x in 0..p1.n_states() {
            if scope.is_some_and(|s| !s[t][x]) {
                continue;
            }
            p1.joint_row_into(t, x, &mut r1);
            p2.joint_row_into(t, x, &mut r2);
            for (u, (a, b)) in r1.iter().zip(&r2).enumerate() {
                let d = (a - b).abs();
                if d > best.deviation {
                    best = ConditionalWitness {
                        t,
                        state: x,
                        action: u,
                        deviation: d,
                    };
                }
            }
        }
    }
    best.deviation = best.deviation.max(0.0);
    best
}

pub fn conditional_deviation(p1: &PolicyProfile, p2: &PolicyProfile, tol: f64) -> Result<Verdict<ConditionalWitness>> {
    check_pair(p1, p2)?;
    let w = conditional_scan(p1, p2, None);
    Ok(Verdict::new(w.deviation, w, tol))
}

/// Whether the joint conditionals agree within `tol` at every `(t, x, u)`.
pub fn conditionals_equal(p1: &PolicyProfile, p2: &PolicyProfile, tol: f64) -> Result<bool> {
    Ok(conditional_deviation(p1, p2, tol)?.equal)
}

/// States reachable at each timestep from the support of `init` under some
/// member of `mechs` and some joint action.
pub fn reachable_states(mechs: &MechanismFamily, init: &[f64], horizon: usize) -> Vec<Vec<bool>> {
    let mut out = vec![init.iter().map(|&p| p > 0.0).collect::<Vec<_>>()];
    for t in 0..horizon - 1 {
        let cur = out.last().expect("non-empty").clone();
        let mut next = vec![false; cur.len()];
        for m in mechs.iter() {
            for (x, _) in cur.iter().enumerate().filter(|(_, &r)| r) {
                for u in 0..m.n_joint_actions() {
                    for &y in m.row(t, x, u).0 {
                        next[y as usize] = true;
                    }
                }
            }
        }
        out.push(next);
    }
    out
}

/// Conditional equality restricted to states reachable under the family.
pub fn conditionals_equal_reachable(
    p1: &PolicyProfile,
    p2: &PolicyProfile,
    mechs: &MechanismFamily,
    init: &[f64],
    tol: f64,
) -> Result<bool> {
    check_pair(p1, p2)?;
    if init.len() != p1.n_states() {
        return Err(Error::dim("initial distribution length differs from state count"));
    }
    let scope = reachable_states(mechs, init, p1.horizon());
    Ok(conditional_scan(p1, p2, Some(&scope)).deviation <= tol)
}

/// Per-Q state-value differences `V1_t - V2_t` for every policy timestep,
/// flattened `[state][participant]`.
fn value_deltas(p1: &PolicyProfile, p2: &PolicyProfile, qs: &QFamily) -> Vec<Vec<Vec<f64>>> {
    let n = qs.get(0).n_participants();
    qs.members()
        .par_iter()
        .map(|q| {
            (0..p1.horizon())
                .map(|t| {
                    let a = state_values_raw(p1, t, q.values(), n);
                    let b = state_values_raw(p2, t, q.values(), n);
                    a.iter().zip(&b).map(|(x, y)| x - y).collect()
                })
                .collect()
        })
        .collect()
}

fn max_abs_chunk(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

static ONE: [f64; 1] = [1.0];

/// Kernel rows of one family member, without materializing lazy members.
enum KernelView {
    Targets { targets: Vec<u32>, n_joint: usize },
    Full(Arc<crate::mechanism::Mechanism>),
}

impl KernelView {
    fn load(family: &MechanismFamily, k: usize) -> Self {
        let mut targets = Vec::new();
        if family.deterministic_targets(k, &mut targets) {
            let n_joint = family.dims().1;
            KernelView::Targets { targets, n_joint }
        } else {
            KernelView::Full(family.get(k))
        }
    }

    fn row(&self, t: usize, x: usize, u: usize) -> (&[u32], &[f64]) {
        match self {
            KernelView::Targets { targets, n_joint } => {
                let c = x * n_joint + u;
                (&targets[c..c + 1], &ONE)
            }
            KernelView::Full(m) => m.row(t, x, u),
        }
    }
}

#[derive(Clone, Copy)]
struct Best {
    dev: f64,
    q: usize,
    step: Step,
    x: usize,
    u: Option<usize>,
}

/// Transition equivalence over `mechs` x `qs`, with the maximizing tuple
/// (first in `(mechanism, Q, step, x, u)` order) as witness.
pub fn transition_equivalent(
    p1: &PolicyProfile,
    p2: &PolicyProfile,
    mechs: &MechanismFamily,
    qs: &QFamily,
    tol: f64,
) -> Result<Verdict<TransitionWitness>> {
    check_pair(p1, p2)?;
    check_families(p1, mechs, qs)?;
    let (nx, nu, t_max) = (p1.n_states(), p1.n_joint_actions(), p1.horizon());
    let n = qs.get(0).n_participants();
    let deltas = value_deltas(p1, p2, qs);

    // Per-state bound on any Bellman-step deviation, and the initial-step maximum.
    let mut state_bound = vec![0.0f64; nx];
    let mut init_best = Best {
        dev: -1.0,
        q: 0,
        step: Step::Initial,
        x: 0,
        u: None,
    };
    for (qi, d) in deltas.iter().enumerate() {
        for (x, c) in d[0].chunks(n).enumerate() {
            let m = max_abs_chunk(c);
            if m > init_best.dev {
                init_best = Best {
                    dev: m,
                    q: qi,
                    step: Step::Initial,
                    x,
                    u: None,
                };
            }
        }
        for dt in &d[1..] {
            for (x, c) in dt.chunks(n).enumerate() {
                state_bound[x] = state_bound[x].max(max_abs_chunk(c));
            }
        }
    }
    if init_best.dev == 0.0 && state_bound.iter().all(|&b| b == 0.0) {
        let w = TransitionWitness {
            mechanism: 0,
            q: 0,
            step: Step::Initial,
            state: 0,
            action: None,
            deviation: 0.0,
        };
        return Ok(Verdict::new(0.0, w, tol));
    }

    let best_seen = AtomicU64::new(0f64.to_bits());
    let scan = |k: usize| -> Option<(usize, Best)> {
        let view = KernelView::load(mechs, k);
        let mut bound = init_best.dev;
        for x in 0..nx {
            for u in 0..nu {
                for &y in view.row(0, x, u).0 {
                    bound = bound.max(state_bound[y as usize]);
                }
            }
        }
        // Non-stationary members may reach other states at later steps.
        if let KernelView::Full(m) = &view {
            if !m.is_stationary() {
                bound = bound.max(state_bound.iter().cloned().fold(0.0, f64::max));
            }
        }
        if bound < f64::from_bits(best_seen.load(Ordering::Relaxed)) {
            return None;
        }
        let mut best = Best {
            dev: -1.0,
            ..init_best
        };
        let mut acc = vec![0.0; n];
        for (qi, d) in deltas.iter().enumerate() {
            for (x, c) in d[0].chunks(n).enumerate() {
                let m = max_abs_chunk(c);
                if m > best.dev {
                    best = Best {
                        dev: m,
                        q: qi,
                        step: Step::Initial,
                        x,
                        u: None,
                    };
                }
            }
            for t in 0..t_max - 1 {
                let v = &d[t + 1];
                for x in 0..nx {
                    for u in 0..nu {
                        let (ys, ps) = view.row(t, x, u);
                        acc.iter_mut().for_each(|a| *a = 0.0);
                        for (&y, &p) in ys.iter().zip(ps) {
                            let vy = &v[y as usize * n..(y as usize + 1) * n];
                            for (a, w) in acc.iter_mut().zip(vy) {
                                *a += p * w;
                            }
                        }
                        let m = max_abs_chunk(&acc);
                        if m > best.dev {
                            best = Best {
                                dev: m,
                                q: qi,
                                step: Step::Bellman(t),
                                x,
                                u: Some(u),
                            };
                        }
                    }
                }
            }
        }
        best_seen.fetch_max(best.dev.to_bits(), Ordering::Relaxed);
        Some((k, best))
    };
    let (k, best) = (0..mechs.len())
        .into_par_iter()
        .filter_map(scan)
        .reduce_with(|a, b| {
            if b.1.dev > a.1.dev || (b.1.dev == a.1.dev && b.0 < a.0) {
                b
            } else {
                a
            }
        })
        .expect("the member attaining the maximum is never pruned");
    let w = TransitionWitness {
        mechanism: k,
        q: best.q,
        step: best.step,
        state: best.x,
        action: best.u,
        deviation: best.dev,
    };
    Ok(Verdict::new(best.dev, w, tol))
}

/// Initial state values after the full backward recursion from `terminal`.
fn recursion_values(p: &PolicyProfile, m: &crate::mechanism::Mechanism, terminal: &QFunction) -> Result<Vec<f64>> {
    let qs = backward_from(p, m, terminal.clone())?;
    Ok(state_values_raw(p, 0, qs[0].values(), terminal.n_participants()))
}

/// Trajectory equivalence: initial state values of the full recursion from
/// every `Q` in `qs` (as terminal table) agree under every mechanism.
pub fn trajectory_equivalent(
    p1: &PolicyProfile,
    p2: &PolicyProfile,
    mechs: &MechanismFamily,
    qs: &QFamily,
    tol: f64,
) -> Result<Verdict<TrajectoryWitness>> {
    check_pair(p1, p2)?;
    check_families(p1, mechs, qs)?;
    let n = qs.get(0).n_participants();
    let per_mech: Vec<Result<TrajectoryWitness>> = (0..mechs.len())
        .into_par_iter()
        .map(|k| {
            let m = mechs.get(k);
            let mut best = TrajectoryWitness {
                mechanism: k,
                q: 0,
                state: 0,
                deviation: -1.0,
            };
            for (qi, q) in qs.members().iter().enumerate() {
                let a = recursion_values(p1, &m, q)?;
                let b = recursion_values(p2, &m, q)?;
                for x in 0..p1.n_states() {
                    let d = (0..n).fold(0.0f64, |acc, i| acc.max((a[x * n + i] - b[x * n + i]).abs()));
                    if d > best.deviation {
                        best = TrajectoryWitness {
                            mechanism: k,
                            q: qi,
                            state: x,
                            deviation: d,
                        };
                    }
                }
            }
            Ok(best)
        })
        .collect();
    let mut best: Option<TrajectoryWitness> = None;
    for w in per_mech {
        let w = w?;
        if best.is_none_or(|b| w.deviation > b.deviation) {
            best = Some(w);
        }
    }
    let w = best.expect("non-empty family");
    Ok(Verdict::new(w.deviation, w, tol))
}

/// All three memberships for one pair of profiles. The transition test uses
/// `transition_qs`, the trajectory test `trajectory_qs`.
pub fn equivalence_report(
    p1: &PolicyProfile,
    p2: &PolicyProfile,
    mechs: &MechanismFamily,
    transition_qs: &QFamily,
    trajectory_qs: &QFamily,
    tol: f64,
) -> Result<EquivalenceReport> {
    Ok(EquivalenceReport {
        conditional: conditional_deviation(p1, p2, tol)?,
        transition: transition_equivalent(p1, p2, mechs, transition_qs, tol)?,
        trajectory: trajectory_equivalent(p1, p2, mechs, trajectory_qs, tol)?,
        tol,
    })
}

/// The seed family plus every table reachable by up to `max_depth` Bellman
/// backups `B_{pi,tau}^t` over all policies, mechanisms and steps.
/// Members equal after rounding at [`CLOSURE_QUANTUM`] are kept once.
pub fn bellman_closure(
    seed: &QFamily,
    policies: &[&PolicyProfile],
    mechs: &MechanismFamily,
    max_depth: usize,
) -> Result<QFamily> {
    if policies.is_empty() {
        return Err(Error::arg("closure needs at least one policy profile"));
    }
    if mechs.is_empty() {
        return Err(Error::arg("mechanism family is empty"));
    }
    for p in policies {
        check_pair(policies[0], p)?;
    }
    check_families(policies[0], mechs, seed)?;
    let n = seed.get(0).n_participants();
    let t_max = policies[0].horizon();
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    let mut members: Vec<Arc<QFunction>> = Vec::new();
    for q in seed.members() {
        seen.insert(q.quantized_key(CLOSURE_QUANTUM));
        members.push(q.clone());
    }
    let template = seed.get(0);
    let mut frontier: Vec<Arc<QFunction>> = members.clone();
    let mech_list = mechs.members();
    for _ in 0..max_depth {
        if frontier.is_empty() {
            break;
        }
        let expected = frontier.len() as u128 * (policies.len() * mech_list.len() * (t_max - 1)) as u128;
        // Backups are deduplicated after they are computed, so refuse only
        // when even a heavily deduplicated level could not fit.
        if expected > 16 * SIZE_GUARD as u128 {
            return Err(Error::Resource {
                what: "Bellman closure",
                count: SizeCount::Exact(members.len() as u128 + expected),
                limit: SIZE_GUARD,
            });
        }
        let produced: Vec<Vec<QFunction>> = frontier
            .par_iter()
            .map(|q| {
                let mut out = Vec::new();
                for p in policies {
                    for t in 0..t_max - 1 {
                        let v = state_values_raw(p, t + 1, q.values(), n);
                        for m in &mech_list {
                            let vals = apply_kernel_raw(m, t, &v, n);
                            out.push(
                                QFunction::from_raw(template.n_states(), template.n_joint_actions(), n, vals)
                                    .expect("backup of a finite table is finite"),
                            );
                        }
                    }
                }
                out
            })
            .collect();
        let mut next = Vec::new();
        for q in produced.into_iter().flatten() {
            if seen.insert(q.quantized_key(CLOSURE_QUANTUM)) {
                let q = Arc::new(q);
                members.push(q.clone());
                next.push(q);
                if members.len() > SIZE_GUARD {
                    return Err(Error::Resource {
                        what: "Bellman closure",
                        count: SizeCount::Exact(members.len() as u128),
                        limit: SIZE_GUARD,
                    });
                }
            }
        }
        frontier = next;
    }
    QFamily::new(members)
}

/// One-hot tables, one per `(state, joint action, participant)` in that order.
pub fn indicator_q_family(spaces: &FiniteSpaces) -> Result<QFamily> {
    let (nx, nu, n) = (spaces.n_states(), spaces.n_joint_actions(), spaces.n_participants());
    let count = nx as u128 * nu as u128 * n as u128;
    if count > SIZE_GUARD as u128 {
        return Err(Error::Resource {
            what: "indicator Q family",
            count: SizeCount::Exact(count),
            limit: SIZE_GUARD,
        });
    }
    let size = nx * nu * n;
    let members = (0..size)
        .map(|k| {
            let mut v = vec![0.0; size];
            v[k] = 1.0;
            QFunction::new(spaces, v)
        })
        .collect::<Result<Vec<_>>>()?;
    QFamily::from_tables(members)
}

/// Tables `Q(x, u) = 1{bot(u) != b}` (same value for every participant),
/// one per irrelevant-factor label `b`.
pub fn bot_probe_family(spaces: &FiniteSpaces) -> Result<QFamily> {
    let f = spaces
        .factorization()
        .ok_or_else(|| Error::config("bot probes need a factorization"))?;
    let members = (0..f.n_bot())
        .map(|b| QFunction::from_fn(spaces, |_, u, _| if f.split(u).1 != b { 1.0 } else { 0.0 }))
        .collect::<Result<Vec<_>>>()?;
    QFamily::from_tables(members)
}

/// All stationary deterministic mechanisms on the spaces.
pub fn enumerate_deterministic_mechanisms(spaces: &FiniteSpaces) -> Result<MechanismFamily> {
    MechanismFamily::all_deterministic(spaces)
}

/// Policy that keeps the relevant-factor marginal of `pi_star` and puts all
/// of its mass on the irrelevant label `u_bot_fixed`.
///
/// With several participants the factorization must be composed from
/// per-participant factorizations, so that each participant can be modified
/// independently.
pub fn build_appendix_a_policy(
    pi_star: &PolicyProfile,
    spaces: &FiniteSpaces,
    u_bot_fixed: usize,
) -> Result<PolicyProfile> {
    let f = spaces
        .factorization()
        .ok_or_else(|| Error::config("the construction needs a star/bot factorization"))?;
    if u_bot_fixed >= f.n_bot() {
        return Err(Error::arg(format!(
            "irrelevant label {u_bot_fixed} out of range ({} labels)",
            f.n_bot()
        )));
    }
    if !pi_star.is_compatible(spaces) {
        return Err(Error::dim("policy profile does not match the spaces"));
    }
    let parts: Vec<(usize, usize)> = match f.parts() {
        Some(p) => p.to_vec(),
        None if spaces.n_participants() == 1 => vec![(f.n_star(), f.n_bot())],
        None => {
            return Err(Error::config(
                "a joint factorization over several participants cannot be realized by independent \
                 policies; give per-participant factorizations",
            ))
        }
    };
    let bots = match f.parts() {
        Some(_) => f.participant_bots(u_bot_fixed).expect("composed factorization"),
        None => vec![u_bot_fixed],
    };
    let policies = pi_star
        .policies()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (_, nb) = parts[i];
            // For a single participant with a joint factorization, its actions
            // are the joint actions, so use the factorization's own map.
            let split = |a: usize| match f.parts() {
                Some(_) => (a / nb, a % nb),
                None => f.split(a),
            };
            let join = |s: usize, b: usize| match f.parts() {
                Some(_) => s * nb + b,
                None => f.join(s, b),
            };
            let tables = p
                .tables()
                .into_iter()
                .map(|table| {
                    table
                        .into_iter()
                        .map(|row| {
                            let mut star = vec![0.0; parts[i].0];
                            for (a, &q) in row.iter().enumerate() {
                                star[split(a).0] += q;
                            }
                            let mut out = vec![0.0; row.len()];
                            for (s, &m) in star.iter().enumerate() {
                                out[join(s, bots[i])] = m;
                            }
                            out
                        })
                        .collect()
                })
                .collect();
            Policy::new(spaces, i, tables)
        })
        .collect::<Result<Vec<_>>>()?;
    PolicyProfile::from_policies(spaces, policies)
}

/// Smallest probability, over timesteps and states, that `pi_star` plays an
/// irrelevant label other than `u_bot_fixed`.
pub fn min_bot_escape_mass(pi_star: &PolicyProfile, f: &Factorization, u_bot_fixed: usize) -> f64 {
    let mut m = f64::INFINITY;
    let mut row = Vec::new();
    for t in 0..pi_star.horizon() {
        for x in 0..pi_star.n_states() {
            pi_star.joint_row_into(t, x, &mut row);
            let s: f64 = row
                .iter()
                .enumerate()
                .filter(|(u, _)| f.split(*u).1 != u_bot_fixed)
                .map(|(_, p)| p)
                .sum();
            m = m.min(s);
        }
    }
    m
}

/// Whether the premise of the strictness result holds, checked through its
/// sufficient conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PremiseReport {
    pub has_factorization: bool,
    pub bot_cardinality: usize,
    /// Every kernel row is unchanged across irrelevant labels.
    pub mechanisms_bot_invariant: bool,
    /// Every seed table is unchanged across irrelevant labels.
    pub seed_bot_invariant: bool,
}

impl PremiseReport {
    pub fn holds(&self) -> bool {
        self.has_factorization && self.bot_cardinality > 1 && self.mechanisms_bot_invariant && self.seed_bot_invariant
    }
}

pub fn check_premise(spaces: &FiniteSpaces, mechs: &MechanismFamily, seed: &QFamily) -> PremiseReport {
    match spaces.factorization() {
        None => PremiseReport {
            has_factorization: false,
            bot_cardinality: 0,
            mechanisms_bot_invariant: false,
            seed_bot_invariant: false,
        },
        Some(f) => PremiseReport {
            has_factorization: true,
            bot_cardinality: f.n_bot(),
            mechanisms_bot_invariant: mechs.iter().all(|m| m.is_bot_invariant(f)),
            seed_bot_invariant: seed.members().iter().all(|q| {
                (0..q.n_states()).all(|x| {
                    (0..f.n_star()).all(|s| {
                        let first = q.get(x, f.join(s, 0));
                        (1..f.n_bot()).all(|b| q.get(x, f.join(s, b)) == first)
                    })
                })
            }),
        },
    }
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub label: String,
    pub profile: PolicyProfile,
}

/// Target behavior plus candidate model profiles to classify.
#[derive(Debug, Clone)]
pub struct Prop1Instance {
    pub id: String,
    pub spaces: FiniteSpaces,
    pub pi_star: PolicyProfile,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prop1Options {
    pub tol: f64,
    /// Closure depth for the transition family; `None` means `T - 1`.
    pub closure_depth: Option<usize>,
    /// Add the irrelevant-label probes to the transition seed when a
    /// factorization is present.
    pub bot_probes: bool,
    /// Irrelevant label used by the constructed counterexample policy.
    pub u_bot_fixed: usize,
}

impl Default for Prop1Options {
    fn default() -> Self {
        Prop1Options {
            tol: DEFAULT_TOL,
            closure_depth: None,
            bot_probes: true,
            u_bot_fixed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateResult {
    pub label: String,
    pub report: EquivalenceReport,
    pub transition_family_size: usize,
    /// Equal conditionals imply transition equivalence, which implies
    /// trajectory equivalence.
    pub chain_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrictnessResult {
    pub trajectory_equal: bool,
    pub trajectory_max_deviation: f64,
    pub transition_equal: bool,
    pub transition_witness_deviation: f64,
    pub min_escape_mass: f64,
    /// Largest entrywise gap between the two profiles' value functions,
    /// over all mechanisms, seed tables and timesteps.
    pub value_function_max_gap: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prop1Report {
    pub id: String,
    pub tol: f64,
    pub premise: PremiseReport,
    pub candidates: Vec<CandidateResult>,
    pub chain_violations: usize,
    /// Present when the counterexample policy could be built and the premise holds.
    pub strictness: Option<StrictnessResult>,
}

impl Prop1Report {
    pub fn ok(&self) -> bool {
        self.chain_violations == 0 && self.strictness.as_ref().is_none_or(|s| s.holds)
    }
}

/// Classifies every candidate (plus the constructed counterexample policy
/// when a factorization allows it) into the three classes and checks the
/// inclusion chain. The trajectory class is tested on `seed`; the transition
/// class on the Bellman closure of `seed` (and probes) under the target and
/// the candidate.
pub fn verify_proposition1(
    instance: &Prop1Instance,
    mechs: &MechanismFamily,
    seed: &QFamily,
    opts: &Prop1Options,
) -> Result<Prop1Report> {
    let spaces = &instance.spaces;
    let pi_star = &instance.pi_star;
    if !pi_star.is_compatible(spaces) {
        return Err(Error::dim("target profile does not match the spaces"));
    }
    check_families(pi_star, mechs, seed)?;
    let premise = check_premise(spaces, mechs, seed);
    let depth = opts.closure_depth.unwrap_or(spaces.horizon() - 1);
    let transition_seed = match (opts.bot_probes, spaces.factorization()) {
        (true, Some(_)) => seed.union(&bot_probe_family(spaces)?)?,
        _ => seed.clone(),
    };

    let mut candidates = instance.candidates.clone();
    let style_fixed = match spaces.factorization() {
        Some(_) => build_appendix_a_policy(pi_star, spaces, opts.u_bot_fixed).ok(),
        None => None,
    };
    if let Some(p) = &style_fixed {
        candidates.push(Candidate {
            label: "style-fixed".into(),
            profile: p.clone(),
        });
    }

    let mut results = Vec::with_capacity(candidates.len());
    for c in &candidates {
        let closure = bellman_closure(&transition_seed, &[pi_star, &c.profile], mechs, depth)?;
        let report = equivalence_report(pi_star, &c.profile, mechs, &closure, seed, opts.tol)?;
        let chain_holds = (!report.conditional.equal || report.transition.equal)
            && (!report.transition.equal || report.trajectory.equal);
        results.push(CandidateResult {
            label: c.label.clone(),
            report,
            transition_family_size: closure.len(),
            chain_holds,
        });
    }
    let chain_violations = results.iter().filter(|r| !r.chain_holds).count();

    let strictness = match (&style_fixed, premise.holds()) {
        (Some(p), true) => {
            let r = &results.last().expect("style-fixed candidate present").report;
            let f = spaces.factorization().expect("premise implies factorization");
            let mut gap = 0.0f64;
            for m in mechs.iter() {
                for q in seed.members() {
                    let a = backward_from(pi_star, &m, (**q).clone())?;
                    let b = backward_from(p, &m, (**q).clone())?;
                    for (qa, qb) in a.iter().zip(&b) {
                        gap = gap.max(qa.max_abs_diff(qb));
                    }
                }
            }
            let min_escape_mass = min_bot_escape_mass(pi_star, f, opts.u_bot_fixed);
            let witness_dev = r.transition.witness.map_or(0.0, |w| w.deviation);
            Some(StrictnessResult {
                trajectory_equal: r.trajectory.equal,
                trajectory_max_deviation: r.trajectory.max_deviation,
                transition_equal: r.transition.equal,
                transition_witness_deviation: witness_dev,
                min_escape_mass,
                value_function_max_gap: gap,
                holds: r.trajectory.equal && !r.transition.equal && gap <= opts.tol,
            })
        }
        _ => None,
    };

    Ok(Prop1Report {
        id: instance.id.clone(),
        tol: opts.tol,
        premise,
        candidates: results,
        chain_violations,
        strictness,
    })
}
