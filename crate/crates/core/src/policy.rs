use std::sync::Arc;

use crate::error::{Error, Result};
use crate::spaces::{Factorization, FiniteSpaces};
use crate::validate::{check_prob_row, Location, Violation};

/// One participant's behavior: a conditional action distribution per
/// timestep and state.
///
/// There is one table per timestep `0..T`; the table at `T-1` acts at the
/// terminal state and only matters through the Bellman operator's
/// expectation over next actions. A stationary policy stores one table.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    participant: usize,
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    stationary: bool,
    /// Each table is row-major `[state][action]`.
    tables: Vec<Vec<f64>>,
}

/// Checks nested `[t][state][action]` tables for one participant.
pub fn validate_policy(
    spaces: &FiniteSpaces,
    participant: usize,
    tables: &[Vec<Vec<f64>>],
) -> Vec<Violation> {
    let mut out = Vec::new();
    if participant >= spaces.n_participants() {
        out.push(Violation::new(format!(
            "participant index {participant} out of range ({} participants)",
            spaces.n_participants()
        )));
        return out;
    }
    let t_max = spaces.horizon();
    if !(tables.len() == 1 || tables.len() == t_max || tables.len() + 1 == t_max) {
        out.push(Violation::at(
            format!(
                "{} timestep tables; expected 1 (stationary), {} or {t_max}",
                tables.len(),
                t_max - 1
            ),
            Location::default().with_participant(participant),
        ));
        return out;
    }
    let na = spaces.actions(participant).len();
    for (t, table) in tables.iter().enumerate() {
        if table.len() != spaces.n_states() {
            out.push(Violation::at(
                format!("table has {} state rows for {} states", table.len(), spaces.n_states()),
                Location {
                    t: Some(t),
                    participant: Some(participant),
                    ..Default::default()
                },
            ));
            continue;
        }
        for (x, row) in table.iter().enumerate() {
            let loc = || Location::row(t, &spaces.states()[x]).with_participant(participant);
            if row.len() != na {
                out.push(Violation::at(
                    format!("row has {} entries for {na} actions", row.len()),
                    loc(),
                ));
                continue;
            }
            check_prob_row(row, loc, &mut out);
        }
    }
    out
}

impl Policy {
    /// Builds a validated policy from `[t][state][action]` tables. One table
    /// means stationary; `T-1` tables reuse the last one at the terminal step.
    pub fn new(spaces: &FiniteSpaces, participant: usize, tables: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        Error::check(validate_policy(spaces, participant, &tables))?;
        let stationary = tables.len() == 1;
        let mut flat: Vec<Vec<f64>> = tables
            .into_iter()
            .map(|table| table.into_iter().flat_map(normalized).collect())
            .collect();
        if !stationary && flat.len() + 1 == spaces.horizon() {
            let last = flat.last().cloned().expect("non-empty");
            flat.push(last);
        }
        Ok(Policy {
            participant,
            n_states: spaces.n_states(),
            n_actions: spaces.actions(participant).len(),
            horizon: spaces.horizon(),
            stationary,
            tables: flat,
        })
    }

    pub fn stationary(spaces: &FiniteSpaces, participant: usize, table: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(spaces, participant, vec![table])
    }

    /// Policy that plays `f(t, state)` deterministically.
    pub fn deterministic(
        spaces: &FiniteSpaces,
        participant: usize,
        f: impl Fn(usize, usize) -> usize,
    ) -> Result<Self> {
        let na = spaces.actions(participant).len();
        let tables = (0..spaces.horizon())
            .map(|t| {
                (0..spaces.n_states())
                    .map(|x| {
                        let mut row = vec![0.0; na];
                        if let Some(p) = row.get_mut(f(t, x)) {
                            *p = 1.0;
                        }
                        row
                    })
                    .collect()
            })
            .collect();
        Self::new(spaces, participant, tables)
    }

    pub fn uniform(spaces: &FiniteSpaces, participant: usize) -> Result<Self> {
        let na = spaces.actions(participant).len();
        Self::stationary(
            spaces,
            participant,
            vec![vec![1.0 / na as f64; na]; spaces.n_states()],
        )
    }

    pub fn participant(&self) -> usize {
        self.participant
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_stationary(&self) -> bool {
        self.stationary
    }

    pub fn row(&self, t: usize, x: usize) -> &[f64] {
        let k = if self.stationary { 0 } else { t };
        &self.tables[k][x * self.n_actions..(x + 1) * self.n_actions]
    }

    /// Nested `[t][state][action]` tables as stored (one if stationary).
    pub fn tables(&self) -> Vec<Vec<Vec<f64>>> {
        self.tables
            .iter()
            .map(|t| t.chunks(self.n_actions).map(<[f64]>::to_vec).collect())
            .collect()
    }

    /// Same policy attributed to another participant slot.
    pub fn with_participant(&self, participant: usize) -> Self {
        Policy {
            participant,
            ..self.clone()
        }
    }
}

fn normalized(row: Vec<f64>) -> Vec<f64> {
    let s: f64 = row.iter().sum();
    if s == 1.0 {
        row
    } else {
        row.into_iter().map(|p| p / s).collect()
    }
}

/// One policy per participant. Policies are shared, so substituting one
/// participant leaves the others as the same objects.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyProfile {
    policies: Vec<Arc<Policy>>,
    n_states: usize,
    horizon: usize,
    action_counts: Vec<usize>,
    n_joint: usize,
}

impl PolicyProfile {
    pub fn new(spaces: &FiniteSpaces, policies: Vec<Arc<Policy>>) -> Result<Self> {
        let n = spaces.n_participants();
        if policies.len() != n {
            return Err(Error::dim(format!("{} policies for {n} participants", policies.len())));
        }
        for (i, p) in policies.iter().enumerate() {
            if p.participant != i {
                return Err(Error::dim(format!(
                    "policy at position {i} belongs to participant {}",
                    p.participant
                )));
            }
            if p.n_states != spaces.n_states()
                || p.n_actions != spaces.actions(i).len()
                || p.horizon != spaces.horizon()
            {
                return Err(Error::dim(format!(
                    "policy of participant {i} does not match the spaces"
                )));
            }
        }
        Ok(PolicyProfile {
            policies,
            n_states: spaces.n_states(),
            horizon: spaces.horizon(),
            action_counts: spaces.action_counts(),
            n_joint: spaces.n_joint_actions(),
        })
    }

    pub fn from_policies(spaces: &FiniteSpaces, policies: Vec<Policy>) -> Result<Self> {
        Self::new(spaces, policies.into_iter().map(Arc::new).collect())
    }

    pub fn uniform(spaces: &FiniteSpaces) -> Result<Self> {
        let ps = (0..spaces.n_participants())
            .map(|i| Policy::uniform(spaces, i))
            .collect::<Result<Vec<_>>>()?;
        Self::from_policies(spaces, ps)
    }

    pub fn policies(&self) -> &[Arc<Policy>] {
        &self.policies
    }

    pub fn policy(&self, i: usize) -> &Arc<Policy> {
        &self.policies[i]
    }

    pub fn n_participants(&self) -> usize {
        self.policies.len()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_joint_actions(&self) -> usize {
        self.n_joint
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_compatible(&self, spaces: &FiniteSpaces) -> bool {
        self.n_states == spaces.n_states()
            && self.horizon == spaces.horizon()
            && self.action_counts == spaces.action_counts()
    }

    pub(crate) fn same_shape(&self, other: &PolicyProfile) -> bool {
        self.n_states == other.n_states
            && self.horizon == other.horizon
            && self.action_counts == other.action_counts
    }

    /// Writes the joint action distribution at `(t, x)` into `out`.
    pub fn joint_row_into(&self, t: usize, x: usize, out: &mut Vec<f64>) {
        out.clear();
        out.push(1.0);
        for p in &self.policies {
            let row = p.row(t, x);
            let prev = std::mem::take(out);
            out.reserve(prev.len() * row.len());
            for &a in &prev {
                for &b in row {
                    out.push(a * b);
                }
            }
        }
    }

    pub fn joint_row(&self, t: usize, x: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_joint);
        self.joint_row_into(t, x, &mut out);
        out
    }

    /// Joint probability of one joint action without materializing the row.
    pub fn joint_prob(&self, t: usize, x: usize, u: usize) -> f64 {
        let mut rest = u;
        let mut p = 1.0;
        for (i, pol) in self.policies.iter().enumerate().rev() {
            let na = self.action_counts[i];
            p *= pol.row(t, x)[rest % na];
            rest /= na;
        }
        p
    }
}

/// Product distribution over joint actions at state `x` and timestep `t`.
pub fn joint_action_distribution(profile: &PolicyProfile, x: usize, t: usize) -> Result<Vec<f64>> {
    if x >= profile.n_states {
        return Err(Error::dim(format!("state index {x} out of range")));
    }
    if t >= profile.horizon {
        return Err(Error::dim(format!("timestep {t} out of range (horizon {})", profile.horizon)));
    }
    Ok(profile.joint_row(t, x))
}

/// Sums a joint-action row over the irrelevant factor.
pub fn marginalize_to_star(row: &[f64], factorization: Option<&Factorization>) -> Result<Vec<f64>> {
    let f = factorization
        .ok_or_else(|| Error::config("marginalizing to the relevant factor needs a factorization"))?;
    if row.len() != f.n_star() * f.n_bot() {
        return Err(Error::dim(format!(
            "row has {} entries for {} joint actions",
            row.len(),
            f.n_star() * f.n_bot()
        )));
    }
    let mut out = vec![0.0; f.n_star()];
    for (j, &p) in row.iter().enumerate() {
        out[f.split(j).0] += p;
    }
    Ok(out)
}
