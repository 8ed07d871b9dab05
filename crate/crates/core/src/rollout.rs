//! Rolling out episodes, exact and sampled outcome distributions, welfare,
//! and utilitarian mechanism selection.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mechanism::{Mechanism, MechanismFamily};
use crate::payoff::PayoffTable;
use crate::policy::PolicyProfile;
use crate::seed::rng_for;
use crate::validate::{check_prob_row, Location};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    /// States at timesteps `0..T`; the last one is the outcome.
    pub states: Vec<usize>,
    /// Joint actions at timesteps `0..T-1`.
    pub joint_actions: Vec<usize>,
    /// `[base seed, sample index]` when produced by seeded sampling.
    pub seed_path: Vec<u64>,
}

impl Trajectory {
    pub fn outcome(&self) -> usize {
        *self.states.last().expect("trajectory has at least two states")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeKind {
    Exact,
    Empirical { n_samples: usize },
}

/// Distribution over terminal states.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    pub probs: Vec<f64>,
    pub kind: OutcomeKind,
}

impl OutcomeDistribution {
    /// Binomial standard error per outcome; zero for exact distributions.
    pub fn std_errors(&self) -> Vec<f64> {
        match self.kind {
            OutcomeKind::Exact => vec![0.0; self.probs.len()],
            OutcomeKind::Empirical { n_samples } => self
                .probs
                .iter()
                .map(|p| (p * (1.0 - p) / n_samples as f64).sqrt())
                .collect(),
        }
    }

    /// Expected payoff vector `sum_w p(w) g(w)`.
    pub fn expected_payoffs(&self, payoff: &PayoffTable) -> Result<Vec<f64>> {
        if payoff.n_states() != self.probs.len() {
            return Err(Error::dim("payoff table and outcome distribution disagree on states"));
        }
        let mut out = vec![0.0; payoff.n_participants()];
        for (x, &p) in self.probs.iter().enumerate() {
            if p != 0.0 {
                for (o, g) in out.iter_mut().zip(payoff.row(x)) {
                    *o += p * g;
                }
            }
        }
        Ok(out)
    }
}

pub fn point_mass(n_states: usize, x: usize) -> Vec<f64> {
    let mut v = vec![0.0; n_states];
    v[x] = 1.0;
    v
}

fn check_compatible(profile: &PolicyProfile, mech: &Mechanism) -> Result<()> {
    if profile.n_states() != mech.n_states()
        || profile.n_joint_actions() != mech.n_joint_actions()
        || profile.horizon() != mech.horizon()
    {
        return Err(Error::dim("policy profile and mechanism do not share spaces"));
    }
    Ok(())
}

fn sample_index(row: &[f64], r: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = k;
            if r < acc {
                return k;
            }
        }
    }
    last
}

/// Samples the next state with exactly one uniform draw.
pub fn step<R: Rng + ?Sized>(mech: &Mechanism, t: usize, x: usize, u: usize, rng: &mut R) -> Result<usize> {
    if t + 1 >= mech.horizon() || x >= mech.n_states() || u >= mech.n_joint_actions() {
        return Err(Error::dim(format!("step index out of range (t={t}, x={x}, u={u})")));
    }
    let r: f64 = rng.random();
    let (ys, ps) = mech.row(t, x, u);
    Ok(ys[sample_index(ps, r)] as usize)
}

/// Rolls out one episode from `init_state`; each participant draws its
/// action with one uniform draw, then the mechanism takes one more.
pub fn rollout<R: Rng + ?Sized>(
    profile: &PolicyProfile,
    mech: &Mechanism,
    init_state: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    check_compatible(profile, mech)?;
    if init_state >= profile.n_states() {
        return Err(Error::dim(format!("initial state {init_state} out of range")));
    }
    let t_max = profile.horizon();
    let mut states = Vec::with_capacity(t_max);
    let mut actions = Vec::with_capacity(t_max - 1);
    let mut x = init_state;
    states.push(x);
    for t in 0..t_max - 1 {
        let mut u = 0;
        for p in profile.policies() {
            let r: f64 = rng.random();
            u = u * p.n_actions() + sample_index(p.row(t, x), r);
        }
        x = step(mech, t, x, u, rng)?;
        actions.push(u);
        states.push(x);
    }
    Ok(Trajectory {
        states,
        joint_actions: actions,
        seed_path: Vec::new(),
    })
}

/// Rollout for sample `index` under `seed`, reproducible in isolation.
pub fn seeded_rollout(
    profile: &PolicyProfile,
    mech: &Mechanism,
    init_state: usize,
    seed: u64,
    index: u64,
) -> Result<Trajectory> {
    let mut rng = rng_for(seed, index);
    let mut tr = rollout(profile, mech, init_state, &mut rng)?;
    tr.seed_path = vec![seed, index];
    Ok(tr)
}

fn check_init(init: &[f64], n_states: usize) -> Result<()> {
    if init.len() != n_states {
        return Err(Error::dim(format!(
            "initial distribution has {} entries for {n_states} states",
            init.len()
        )));
    }
    let mut v = Vec::new();
    check_prob_row(init, Location::default, &mut v);
    Error::check(v)
}

/// State distributions at every timestep `0..T`, by forward propagation.
pub fn state_marginals(profile: &PolicyProfile, mech: &Mechanism, init: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_compatible(profile, mech)?;
    check_init(init, profile.n_states())?;
    let nx = profile.n_states();
    let mut out = vec![init.to_vec()];
    let mut joint = Vec::new();
    for t in 0..profile.horizon() - 1 {
        let cur = out.last().expect("non-empty");
        let mut next = vec![0.0; nx];
        for (x, &px) in cur.iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            profile.joint_row_into(t, x, &mut joint);
            for (u, &pu) in joint.iter().enumerate() {
                if pu == 0.0 {
                    continue;
                }
                let (ys, ps) = mech.row(t, x, u);
                for (&y, &p) in ys.iter().zip(ps) {
                    next[y as usize] += px * pu * p;
                }
            }
        }
        out.push(next);
    }
    Ok(out)
}

pub fn outcome_distribution_exact(
    profile: &PolicyProfile,
    mech: &Mechanism,
    init: &[f64],
) -> Result<OutcomeDistribution> {
    let mut m = state_marginals(profile, mech, init)?;
    Ok(OutcomeDistribution {
        probs: m.pop().expect("non-empty"),
        kind: OutcomeKind::Exact,
    })
}

/// Empirical outcome frequencies over `n_samples` seeded rollouts.
/// Sample `i` always uses the stream derived from `(seed, i)`.
pub fn outcome_distribution_mc(
    profile: &PolicyProfile,
    mech: &Mechanism,
    init_state: usize,
    n_samples: usize,
    seed: u64,
) -> Result<OutcomeDistribution> {
    if n_samples == 0 {
        return Err(Error::arg("n_samples must be at least 1"));
    }
    check_compatible(profile, mech)?;
    let nx = profile.n_states();
    let counts = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| seeded_rollout(profile, mech, init_state, seed, i).map(|tr| tr.outcome()))
        .try_fold(
            || vec![0u64; nx],
            |mut c, w| {
                c[w?] += 1;
                Ok::<_, Error>(c)
            },
        )
        .try_reduce(
            || vec![0u64; nx],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(a, b)| *a += b);
                Ok(a)
            },
        )?;
    Ok(OutcomeDistribution {
        probs: counts.iter().map(|&c| c as f64 / n_samples as f64).collect(),
        kind: OutcomeKind::Empirical { n_samples },
    })
}

/// Expected mean payoff across participants.
pub fn expected_welfare(dist: &OutcomeDistribution, payoff: &PayoffTable) -> Result<f64> {
    let v = dist.expected_payoffs(payoff)?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

fn family_welfares(
    family: &MechanismFamily,
    profile: &PolicyProfile,
    payoff: &PayoffTable,
    init: &[f64],
) -> Result<Vec<f64>> {
    if family.is_empty() {
        return Err(Error::arg("mechanism family is empty"));
    }
    (0..family.len())
        .into_par_iter()
        .map(|k| {
            let d = outcome_distribution_exact(profile, &family.get(k), init)?;
            expected_welfare(&d, payoff)
        })
        .collect()
}

/// Welfare-maximizing member; ties go to the lowest index.
pub fn select_utilitarian_mechanism(
    family: &MechanismFamily,
    profile: &PolicyProfile,
    payoff: &PayoffTable,
    init: &[f64],
) -> Result<(usize, f64)> {
    let w = family_welfares(family, profile, payoff, init)?;
    let mut best = 0;
    for (k, &v) in w.iter().enumerate() {
        if v > w[best] {
            best = k;
        }
    }
    Ok((best, w[best]))
}

/// Every member whose welfare is within `tol` of the maximum, in index order.
pub fn utilitarian_argmax_set(
    family: &MechanismFamily,
    profile: &PolicyProfile,
    payoff: &PayoffTable,
    init: &[f64],
    tol: f64,
) -> Result<(Vec<usize>, f64)> {
    let w = family_welfares(family, profile, payoff, init)?;
    let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(((0..w.len()).filter(|&k| w[k] >= max - tol).collect(), max))
}
