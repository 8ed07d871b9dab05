//! Reference instances and random generators for instances and candidate
//! model profiles.

use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::equivalence::{Candidate, Prop1Instance};
use crate::error::Result;
use crate::mechanism::{Mechanism, MechanismFamily};
use crate::payoff::PayoffTable;
use crate::policy::{Policy, PolicyProfile};
use crate::spaces::{FactorPair, FactorizationDef, FiniteSpaces, SpacesDef};
use crate::value::{QFamily, QFunction};

/// A complete decision process: spaces, target behavior, mechanisms, payoffs
/// and an initial state distribution. `mechanism` is the first member of `family`.
#[derive(Debug, Clone)]
pub struct Instance {
    pub id: String,
    pub spaces: FiniteSpaces,
    pub pi_star: PolicyProfile,
    pub mechanism: Mechanism,
    pub family: MechanismFamily,
    pub payoff: PayoffTable,
    pub init: Vec<f64>,
}

impl Instance {
    fn assemble(
        id: &str,
        spaces: FiniteSpaces,
        pi_star: PolicyProfile,
        mechanisms: Vec<Mechanism>,
        payoff: PayoffTable,
        init: Vec<f64>,
    ) -> Result<Self> {
        let mechanism = mechanisms[0].clone();
        let family = MechanismFamily::explicit(&spaces, mechanisms.into_iter().map(Arc::new).collect())?;
        Ok(Instance {
            id: id.to_string(),
            spaces,
            pi_star,
            mechanism,
            family,
            payoff,
            init,
        })
    }

    /// Every participant plays the same participant-level action everywhere.
    pub fn deterministic_profile(&self, action: usize) -> PolicyProfile {
        let ps = (0..self.spaces.n_participants())
            .map(|i| Policy::deterministic(&self.spaces, i, |_, _| action).expect("action in range"))
            .collect();
        PolicyProfile::from_policies(&self.spaces, ps).expect("consistent spaces")
    }

    /// The family holding only the terminal payoff table.
    pub fn payoff_family(&self) -> QFamily {
        QFamily::from_tables(vec![QFunction::terminal(&self.payoff, self.spaces.n_joint_actions())])
            .expect("non-empty")
    }

    pub fn single_mechanism_family(&self) -> MechanismFamily {
        MechanismFamily::single(&self.spaces, self.mechanism.clone()).expect("compatible")
    }
}

fn labels(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// One participant, states `{a, b}`, actions `{0, 1}`, two timesteps.
/// Action 1 moves `a` to `b`, action 0 stays; `b` is absorbing. The target
/// plays `(0.7, 0.3)`; payoff is 1 at `b` only.
pub fn g1() -> Instance {
    let spaces = FiniteSpaces::new(labels(&["a", "b"]), vec![labels(&["0", "1"])], 2).expect("valid");
    let pi = Policy::stationary(&spaces, 0, vec![vec![0.7, 0.3], vec![0.7, 0.3]]).expect("valid");
    let pi_star = PolicyProfile::from_policies(&spaces, vec![pi]).expect("valid");
    let tau = Mechanism::deterministic(&spaces, true, |_, x, u| if x == 0 { u } else { 1 }).expect("valid");
    let payoff = PayoffTable::new(&spaces, vec![vec![0.0], vec![1.0]]).expect("valid");
    Instance::assemble("g1", spaces, pi_star, vec![tau], payoff, vec![1.0, 0.0]).expect("valid")
}

/// One participant, states `{a, b, c}`, actions `{L, R} x {s1, s2}`, two
/// timesteps. From `a`, `L` leads to `b` and `R` to `c` regardless of the
/// irrelevant label; `b` and `c` are absorbing. The target is uniform;
/// payoff is 1 at `b` only.
pub fn g2() -> Instance {
    let spaces = FiniteSpaces::new(
        labels(&["a", "b", "c"]),
        vec![labels(&["L,s1", "L,s2", "R,s1", "R,s2"])],
        2,
    )
    .and_then(|s| {
        s.with_factorization(&FactorizationDef::Joint(FactorPair {
            star: labels(&["L", "R"]),
            bot: labels(&["s1", "s2"]),
        }))
    })
    .expect("valid");
    let pi_star = PolicyProfile::uniform(&spaces).expect("valid");
    let tau = Mechanism::deterministic(&spaces, true, |_, x, u| match x {
        0 if u < 2 => 1,
        0 => 2,
        x => x,
    })
    .expect("valid");
    let payoff = PayoffTable::new(&spaces, vec![vec![0.0], vec![1.0], vec![0.0]]).expect("valid");
    Instance::assemble("g2", spaces, pi_star, vec![tau], payoff, vec![1.0, 0.0, 0.0]).expect("valid")
}

/// Size limits for random instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpec {
    pub max_states: usize,
    /// Bound on the joint action count.
    pub max_joint: usize,
    pub max_horizon: usize,
    pub max_participants: usize,
    pub n_mechanisms: usize,
    /// Probability of attaching a per-participant factorization.
    pub factorization_prob: f64,
    /// Payoffs are drawn uniformly from `[0, payoff_scale)`.
    pub payoff_scale: f64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec {
            max_states: 6,
            max_joint: 6,
            max_horizon: 4,
            max_participants: 3,
            n_mechanisms: 2,
            factorization_prob: 0.5,
            payoff_scale: 1.0,
        }
    }
}

/// Random point on the simplex with symmetric concentration `alpha`.
pub fn dirichlet<R: Rng + ?Sized>(rng: &mut R, k: usize, alpha: f64) -> Vec<f64> {
    let g = Gamma::new(alpha, 1.0).expect("positive shape");
    loop {
        let v: Vec<f64> = (0..k).map(|_| g.sample(rng)).collect();
        let s: f64 = v.iter().sum();
        if s > 0.0 && s.is_finite() {
            return v.into_iter().map(|x| x / s).collect();
        }
    }
}

/// Factor pairs `(star, bot)` with `star * bot = n`.
fn factor_pairs(n: usize) -> Vec<(usize, usize)> {
    (1..=n).filter(|d| n % d == 0).map(|d| (n / d, d)).collect()
}

/// Per-participant action counts with product at most `max_joint`.
fn random_action_counts<R: Rng + ?Sized>(rng: &mut R, n: usize, max_joint: usize) -> Vec<usize> {
    let mut counts = Vec::with_capacity(n);
    let mut room = max_joint;
    for _ in 0..n {
        let c = rng.random_range(1..=room.max(1));
        counts.push(c);
        room /= c;
    }
    counts.shuffle(rng);
    counts
}

fn build_spaces(
    nx: usize,
    counts: &[usize],
    horizon: usize,
    factor: Option<Vec<(usize, usize)>>,
) -> FiniteSpaces {
    let states = (0..nx).map(|x| format!("x{x}")).collect();
    let (actions, factorization) = match factor {
        None => (
            counts.iter().map(|&c| (0..c).map(|a| format!("a{a}")).collect()).collect(),
            None,
        ),
        Some(parts) => {
            let actions = parts
                .iter()
                .map(|&(ns, nb)| {
                    (0..ns * nb)
                        .map(|a| format!("c{}/s{}", a / nb, a % nb))
                        .collect()
                })
                .collect();
            let pairs = parts
                .iter()
                .map(|&(ns, nb)| FactorPair {
                    star: (0..ns).map(|s| format!("c{s}")).collect(),
                    bot: (0..nb).map(|b| format!("s{b}")).collect(),
                })
                .collect();
            (actions, Some(FactorizationDef::PerParticipant(pairs)))
        }
    };
    FiniteSpaces::from_def(&SpacesDef {
        states,
        actions,
        horizon,
        factorization,
    })
    .expect("generated spaces are valid")
}

fn random_policy_profile<R: Rng + ?Sized>(rng: &mut R, spaces: &FiniteSpaces, alpha: f64) -> PolicyProfile {
    let policies = (0..spaces.n_participants())
        .map(|i| {
            let na = spaces.actions(i).len();
            let n_tables = if rng.random_bool(0.5) { 1 } else { spaces.horizon() };
            let tables = (0..n_tables)
                .map(|_| (0..spaces.n_states()).map(|_| dirichlet(rng, na, alpha)).collect())
                .collect();
            Policy::new(spaces, i, tables).expect("generated rows are normalized")
        })
        .collect();
    PolicyProfile::from_policies(spaces, policies).expect("consistent")
}

fn random_kernel_row<R: Rng + ?Sized>(rng: &mut R, nx: usize) -> Vec<f64> {
    let mut row = vec![0.0; nx];
    if rng.random_bool(0.5) {
        row[rng.random_range(0..nx)] = 1.0;
    } else {
        let k = rng.random_range(1..=nx.min(3));
        let mut idx: Vec<usize> = (0..nx).collect();
        idx.shuffle(rng);
        for (&y, p) in idx[..k].iter().zip(dirichlet(rng, k, 1.0)) {
            row[y] += p;
        }
    }
    row
}

/// Random mechanism; with `bot_invariant`, rows are shared across irrelevant labels.
fn random_mechanism<R: Rng + ?Sized>(rng: &mut R, spaces: &FiniteSpaces, bot_invariant: bool) -> Mechanism {
    let (nx, nu) = (spaces.n_states(), spaces.n_joint_actions());
    let steps = if rng.random_bool(0.5) { 1 } else { spaces.horizon() - 1 };
    let kernels = (0..steps)
        .map(|_| {
            (0..nx)
                .map(|_| {
                    let mut rows: Vec<Option<Vec<f64>>> = vec![None; nu];
                    for u in 0..nu {
                        let key = match (bot_invariant, spaces.factorization()) {
                            (true, Some(f)) => f.join(f.split(u).0, 0),
                            _ => u,
                        };
                        if rows[key].is_none() {
                            rows[key] = Some(random_kernel_row(rng, nx));
                        }
                        rows[u] = rows[key].clone();
                    }
                    rows.into_iter().map(|r| r.expect("filled")).collect()
                })
                .collect()
        })
        .collect();
    Mechanism::new(spaces, kernels).expect("generated rows are normalized")
}

fn random_payoff<R: Rng + ?Sized>(rng: &mut R, spaces: &FiniteSpaces, scale: f64) -> PayoffTable {
    let v = (0..spaces.n_states())
        .map(|_| (0..spaces.n_participants()).map(|_| scale * rng.random::<f64>()).collect())
        .collect();
    PayoffTable::new(spaces, v).expect("finite")
}

fn finish<R: Rng + ?Sized>(rng: &mut R, id: String, spaces: FiniteSpaces, spec: &RandomSpec, bot_invariant: bool) -> Instance {
    let pi_star = random_policy_profile(rng, &spaces, 1.0);
    let mechs = (0..spec.n_mechanisms.max(1))
        .map(|_| random_mechanism(rng, &spaces, bot_invariant))
        .collect();
    let payoff = random_payoff(rng, &spaces, spec.payoff_scale);
    let init = dirichlet(rng, spaces.n_states(), 1.0);
    Instance::assemble(&id, spaces, pi_star, mechs, payoff, init).expect("consistent")
}

/// Random instance within `spec`.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, spec: &RandomSpec, id: String) -> Instance {
    let nx = rng.random_range(1..=spec.max_states);
    let horizon = rng.random_range(2..=spec.max_horizon.max(2));
    let n = rng.random_range(1..=spec.max_participants);
    let counts = random_action_counts(rng, n, spec.max_joint);
    let factor = rng.random_bool(spec.factorization_prob).then(|| {
        counts
            .iter()
            .map(|&c| *factor_pairs(c).choose(rng).expect("at least one pair"))
            .collect()
    });
    let spaces = build_spaces(nx, &counts, horizon, factor);
    finish(rng, id, spaces, spec, false)
}

/// Random instance whose mechanisms ignore the irrelevant action factor,
/// which has at least two labels.
pub fn random_bot_invariant_instance<R: Rng + ?Sized>(rng: &mut R, spec: &RandomSpec, id: String) -> Instance {
    let nx = rng.random_range(1..=spec.max_states);
    let horizon = rng.random_range(2..=spec.max_horizon.max(2));
    let n = rng.random_range(1..=spec.max_participants);
    let mut counts = random_action_counts(rng, n, spec.max_joint);
    // One participant with an even action count gives a two-label factor.
    let even = counts.iter().position(|c| c % 2 == 0);
    let who = match even {
        Some(i) => i,
        None => {
            let room = spec.max_joint / counts.iter().product::<usize>().max(1);
            let i = rng.random_range(0..n);
            if room >= 2 {
                counts[i] *= 2;
            } else {
                counts = vec![1; n];
                counts[i] = 2;
            }
            i
        }
    };
    let parts = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            if i == who {
                let opts: Vec<_> = factor_pairs(c).into_iter().filter(|&(_, b)| b >= 2).collect();
                *opts.choose(rng).expect("even count has a two-label factor")
            } else {
                *factor_pairs(c).choose(rng).expect("at least one pair")
            }
        })
        .collect();
    let spaces = build_spaces(nx, &counts, horizon, Some(parts));
    finish(rng, id, spaces, spec, true)
}

fn map_rows(
    spaces: &FiniteSpaces,
    p: &PolicyProfile,
    mut f: impl FnMut(usize, usize, usize, &[f64]) -> Vec<f64>,
) -> PolicyProfile {
    let policies = p
        .policies()
        .iter()
        .map(|pol| {
            let i = pol.participant();
            let tables = (0..spaces.horizon())
                .map(|t| (0..spaces.n_states()).map(|x| f(i, t, x, pol.row(t, x))).collect())
                .collect();
            Policy::new(spaces, i, tables).expect("rows stay normalized")
        })
        .collect();
    PolicyProfile::from_policies(spaces, policies).expect("consistent")
}

/// Mixes every row with a random simplex point: `(1 - eps) row + eps d`.
pub fn jitter<R: Rng + ?Sized>(rng: &mut R, spaces: &FiniteSpaces, p: &PolicyProfile, eps: f64) -> PolicyProfile {
    map_rows(spaces, p, |_, _, _, row| {
        let d = dirichlet(rng, row.len(), 1.0);
        row.iter().zip(d).map(|(a, b)| (1.0 - eps) * a + eps * b).collect()
    })
}

/// Jitter at a single timestep; every other table is copied.
pub fn jitter_at<R: Rng + ?Sized>(rng: &mut R, spaces: &FiniteSpaces, p: &PolicyProfile, t0: usize, eps: f64) -> PolicyProfile {
    map_rows(spaces, p, |_, t, _, row| {
        if t != t0 {
            return row.to_vec();
        }
        let d = dirichlet(rng, row.len(), 1.0);
        row.iter().zip(d).map(|(a, b)| (1.0 - eps) * a + eps * b).collect()
    })
}

/// Randomly redistributes mass across irrelevant labels while keeping each
/// participant's relevant-factor marginal. Needs a per-participant factorization.
pub fn bot_redistribution<R: Rng + ?Sized>(rng: &mut R, spaces: &FiniteSpaces, p: &PolicyProfile) -> Option<PolicyProfile> {
    let parts = spaces.factorization()?.parts()?.to_vec();
    Some(map_rows(spaces, p, |i, _, _, row| {
        let (ns, nb) = parts[i];
        let mut out = vec![0.0; row.len()];
        for s in 0..ns {
            let m: f64 = row[s * nb..(s + 1) * nb].iter().sum();
            for (b, w) in dirichlet(rng, nb, 1.0).into_iter().enumerate() {
                out[s * nb + b] = m * w;
            }
        }
        out
    }))
}

/// Empirical estimate of every row from `n_samples` draws. With
/// `incremental`, frequencies are accumulated by repeated addition of
/// `1/n_samples` instead of one division, which changes only rounding.
pub fn mc_estimate<R: Rng + ?Sized>(
    rng: &mut R,
    spaces: &FiniteSpaces,
    p: &PolicyProfile,
    n_samples: usize,
) -> (PolicyProfile, PolicyProfile) {
    let mut counts: Vec<Vec<Vec<Vec<u64>>>> = Vec::new();
    for pol in p.policies() {
        let na = pol.n_actions();
        let per_t = (0..spaces.horizon())
            .map(|t| {
                (0..spaces.n_states())
                    .map(|x| {
                        let row = pol.row(t, x);
                        let mut c = vec![0u64; na];
                        for _ in 0..n_samples {
                            let r: f64 = rng.random();
                            let mut acc = 0.0;
                            let mut k = na - 1;
                            for (a, &q) in row.iter().enumerate() {
                                acc += q;
                                if r < acc {
                                    k = a;
                                    break;
                                }
                            }
                            c[k] += 1;
                        }
                        c
                    })
                    .collect()
            })
            .collect();
        counts.push(per_t);
    }
    let divided = map_rows(spaces, p, |i, t, x, _| {
        counts[i][t][x].iter().map(|&c| c as f64 / n_samples as f64).collect()
    });
    let step = 1.0 / n_samples as f64;
    let accumulated = map_rows(spaces, p, |i, t, x, _| {
        counts[i][t][x]
            .iter()
            .map(|&c| (0..c).fold(0.0, |acc, _| acc + step))
            .collect()
    });
    (divided, accumulated)
}

/// The standard candidate set around `pi_star`: the target itself, jitters
/// at several scales, single-timestep jitters, a redistribution across
/// irrelevant labels (when factored), a sampled estimate, and uniform play.
pub fn standard_candidates<R: Rng + ?Sized>(rng: &mut R, inst: &Instance) -> Vec<Candidate> {
    let s = &inst.spaces;
    let p = &inst.pi_star;
    let mut out = vec![Candidate {
        label: "target".into(),
        profile: p.clone(),
    }];
    for eps in [0.5, 0.1, 1e-2, 1e-4, 1e-6] {
        out.push(Candidate {
            label: format!("jitter-{eps:e}"),
            profile: jitter(rng, s, p, eps),
        });
    }
    out.push(Candidate {
        label: "jitter-first-step".into(),
        profile: jitter_at(rng, s, p, 0, 0.2),
    });
    out.push(Candidate {
        label: "jitter-last-step".into(),
        profile: jitter_at(rng, s, p, s.horizon() - 1, 0.2),
    });
    if let Some(b) = bot_redistribution(rng, s, p) {
        out.push(Candidate {
            label: "bot-redistribution".into(),
            profile: b,
        });
    }
    out.push(Candidate {
        label: "sampled-estimate".into(),
        profile: mc_estimate(rng, s, p, 1000).0,
    });
    out.push(Candidate {
        label: "uniform".into(),
        profile: PolicyProfile::uniform(s).expect("valid"),
    });
    out
}

/// Wraps an instance and candidates for the proposition check.
pub fn prop1_instance(inst: &Instance, candidates: Vec<Candidate>) -> Prop1Instance {
    Prop1Instance {
        id: inst.id.clone(),
        spaces: inst.spaces.clone(),
        pi_star: inst.pi_star.clone(),
        candidates,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_instances_respect_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spec = RandomSpec::default();
        for k in 0..200 {
            let inst = random_instance(&mut rng, &spec, format!("r{k}"));
            let s = &inst.spaces;
            assert!(s.n_states() <= 6 && s.n_joint_actions() <= 6);
            assert!((2..=4).contains(&s.horizon()) && s.n_participants() <= 3);
            assert_eq!(inst.family.len(), 2);
        }
    }

    #[test]
    fn bot_invariant_instances_satisfy_premise() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let spec = RandomSpec::default();
        for k in 0..100 {
            let inst = random_bot_invariant_instance(&mut rng, &spec, format!("b{k}"));
            let f = inst.spaces.factorization().expect("factorized");
            assert!(f.n_bot() >= 2);
            assert!(inst.spaces.n_joint_actions() <= 6);
            assert!(inst.family.iter().all(|m| m.is_bot_invariant(f)));
        }
    }

    #[test]
    fn sampled_estimates_agree_up_to_rounding() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let inst = random_instance(&mut rng, &RandomSpec::default(), "m".into());
        let (a, b) = mc_estimate(&mut rng, &inst.spaces, &inst.pi_star, 997);
        for t in 0..inst.spaces.horizon() {
            for x in 0..inst.spaces.n_states() {
                for (p, q) in a.joint_row(t, x).iter().zip(b.joint_row(t, x)) {
                    assert!((p - q).abs() < 1e-12);
                }
            }
        }
    }
}
