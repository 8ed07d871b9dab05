//! Action-value tables and the finite-horizon Bellman recursion.
//!
//! Timesteps are 0-based: `Q[T-1](x, u) = g(x)` and, for `t < T-1`,
//! `Q[t](x, u) = sum_x' tau_t(x'|x,u) sum_u' pi_{t+1}(u'|x') Q[t+1](x', u')`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mechanism::Mechanism;
use crate::payoff::PayoffTable;
use crate::policy::PolicyProfile;
use crate::spaces::FiniteSpaces;

/// A table over states and joint actions with one value per participant.
#[derive(Debug, Clone, PartialEq)]
pub struct QFunction {
    n_states: usize,
    n_joint: usize,
    n_participants: usize,
    /// Indexed `(state * n_joint + action) * n_participants + participant`.
    values: Vec<f64>,
    pub timestep: Option<usize>,
}

impl QFunction {
    pub fn new(spaces: &FiniteSpaces, values: Vec<f64>) -> Result<Self> {
        Self::from_raw(
            spaces.n_states(),
            spaces.n_joint_actions(),
            spaces.n_participants(),
            values,
        )
    }

    pub(crate) fn from_raw(n_states: usize, n_joint: usize, n_participants: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_joint * n_participants {
            return Err(Error::dim(format!(
                "Q table has {} entries, expected {}",
                values.len(),
                n_states * n_joint * n_participants
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!("non-finite Q entry at flat index {k}")));
        }
        Ok(QFunction {
            n_states,
            n_joint,
            n_participants,
            values,
            timestep: None,
        })
    }

    /// Builds a table from `f(state, joint_action, participant)`.
    pub fn from_fn(spaces: &FiniteSpaces, f: impl Fn(usize, usize, usize) -> f64) -> Result<Self> {
        let (nx, nu, n) = (spaces.n_states(), spaces.n_joint_actions(), spaces.n_participants());
        let mut values = Vec::with_capacity(nx * nu * n);
        for x in 0..nx {
            for u in 0..nu {
                for i in 0..n {
                    values.push(f(x, u, i));
                }
            }
        }
        Self::new(spaces, values)
    }

    /// The terminal table `Q(x, u) = g(x)`.
    pub fn terminal(payoff: &PayoffTable, n_joint: usize) -> Self {
        let n = payoff.n_participants();
        let mut values = Vec::with_capacity(payoff.n_states() * n_joint * n);
        for x in 0..payoff.n_states() {
            for _ in 0..n_joint {
                values.extend_from_slice(payoff.row(x));
            }
        }
        QFunction {
            n_states: payoff.n_states(),
            n_joint,
            n_participants: n,
            values,
            timestep: None,
        }
    }

    pub fn constant(spaces: &FiniteSpaces, c: &[f64]) -> Result<Self> {
        if c.len() != spaces.n_participants() {
            return Err(Error::dim("constant vector length differs from participant count"));
        }
        Self::from_fn(spaces, |_, _, i| c[i])
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_joint_actions(&self) -> usize {
        self.n_joint
    }

    pub fn n_participants(&self) -> usize {
        self.n_participants
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, u: usize) -> &[f64] {
        let k = (x * self.n_joint + u) * self.n_participants;
        &self.values[k..k + self.n_participants]
    }

    pub fn same_shape(&self, other: &QFunction) -> bool {
        self.n_states == other.n_states
            && self.n_joint == other.n_joint
            && self.n_participants == other.n_participants
    }

    pub fn is_compatible(&self, profile: &PolicyProfile) -> bool {
        self.n_states == profile.n_states()
            && self.n_joint == profile.n_joint_actions()
            && self.n_participants == profile.n_participants()
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &QFunction, b: f64) -> Result<QFunction> {
        if !self.same_shape(other) {
            return Err(Error::dim("Q tables differ in shape"));
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(QFunction { values, timestep: None, ..*self })
    }

    pub fn scale(&self, a: f64) -> QFunction {
        QFunction {
            values: self.values.iter().map(|v| a * v).collect(),
            timestep: None,
            ..*self
        }
    }

    pub fn max_abs_diff(&self, other: &QFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Whether `Q(x, u)` does not depend on `u` (within `tol`).
    pub fn is_action_invariant(&self, tol: f64) -> bool {
        (0..self.n_states).all(|x| {
            let first = self.get(x, 0);
            (1..self.n_joint).all(|u| self.get(x, u).iter().zip(first).all(|(a, b)| (a - b).abs() <= tol))
        })
    }

    /// Hash key identifying tables equal up to rounding at `quantum`.
    pub(crate) fn quantized_key(&self, quantum: f64) -> Vec<i64> {
        self.values.iter().map(|v| (v / quantum).round() as i64).collect()
    }

    pub(crate) fn with_timestep(mut self, t: usize) -> Self {
        self.timestep = Some(t);
        self
    }
}

/// A finite, ordered, non-empty family of Q tables of one shape.
#[derive(Debug, Clone)]
pub struct QFamily {
    members: Vec<Arc<QFunction>>,
}

impl QFamily {
    pub fn new(members: Vec<Arc<QFunction>>) -> Result<Self> {
        let first = members.first().ok_or_else(|| Error::arg("Q family is empty"))?;
        if members.iter().any(|q| !q.same_shape(first)) {
            return Err(Error::dim("Q family members differ in shape"));
        }
        Ok(QFamily { members })
    }

    pub fn from_tables(members: Vec<QFunction>) -> Result<Self> {
        Self::new(members.into_iter().map(Arc::new).collect())
    }

    pub fn members(&self) -> &[Arc<QFunction>] {
        &self.members
    }

    pub fn get(&self, k: usize) -> &QFunction {
        &self.members[k]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_compatible(&self, profile: &PolicyProfile) -> bool {
        self.members[0].is_compatible(profile)
    }

    pub fn union(&self, other: &QFamily) -> Result<QFamily> {
        QFamily::new(self.members.iter().chain(&other.members).cloned().collect())
    }
}

fn check_shapes(profile: &PolicyProfile, mech: &Mechanism) -> Result<()> {
    if profile.n_states() != mech.n_states()
        || profile.n_joint_actions() != mech.n_joint_actions()
        || profile.horizon() != mech.horizon()
    {
        return Err(Error::dim("policy profile and mechanism do not share spaces"));
    }
    Ok(())
}

/// `V(x) = sum_u pi_t(u|x) Q(x, u)`, flattened `[state][participant]`.
pub(crate) fn state_values_raw(profile: &PolicyProfile, t: usize, q: &[f64], n: usize) -> Vec<f64> {
    let nu = profile.n_joint_actions();
    let mut out = vec![0.0; profile.n_states() * n];
    let mut joint = Vec::with_capacity(nu);
    for (x, vx) in out.chunks_mut(n).enumerate() {
        profile.joint_row_into(t, x, &mut joint);
        for (u, &p) in joint.iter().enumerate() {
            if p != 0.0 {
                let k = (x * nu + u) * n;
                for (v, qv) in vx.iter_mut().zip(&q[k..k + n]) {
                    *v += p * qv;
                }
            }
        }
    }
    out
}

/// `out(x, u) = sum_x' tau_t(x'|x,u) v(x')` for a flattened state-value table.
pub(crate) fn apply_kernel_raw(mech: &Mechanism, t: usize, v: &[f64], n: usize) -> Vec<f64> {
    let (nx, nu) = (mech.n_states(), mech.n_joint_actions());
    let mut out = vec![0.0; nx * nu * n];
    out.par_chunks_mut(nu * n).enumerate().for_each(|(x, block)| {
        for (u, cell) in block.chunks_mut(n).enumerate() {
            let (ys, ps) = mech.row(t, x, u);
            for (&y, &p) in ys.iter().zip(ps) {
                let vy = &v[y as usize * n..(y as usize + 1) * n];
                for (c, w) in cell.iter_mut().zip(vy) {
                    *c += p * w;
                }
            }
        }
    });
    out
}

/// State values of `q` under the policy's table at timestep `t`.
pub fn state_values(profile: &PolicyProfile, t: usize, q: &QFunction) -> Result<Vec<Vec<f64>>> {
    if !q.is_compatible(profile) {
        return Err(Error::dim("Q table does not match the policy profile"));
    }
    if t >= profile.horizon() {
        return Err(Error::dim(format!("timestep {t} out of range")));
    }
    let n = q.n_participants;
    Ok(state_values_raw(profile, t, &q.values, n).chunks(n).map(<[f64]>::to_vec).collect())
}

/// One Bellman backup at step `t`: uses the kernel at `t` and the policy at `t + 1`.
pub fn bellman_apply(profile: &PolicyProfile, mech: &Mechanism, t: usize, q_next: &QFunction) -> Result<QFunction> {
    check_shapes(profile, mech)?;
    if !q_next.is_compatible(profile) {
        return Err(Error::dim("Q table does not match the policy profile"));
    }
    if t + 1 >= profile.horizon() {
        return Err(Error::dim(format!(
            "Bellman step {t} out of range (horizon {})",
            profile.horizon()
        )));
    }
    let n = q_next.n_participants;
    let v = state_values_raw(profile, t + 1, &q_next.values, n);
    Ok(QFunction {
        values: apply_kernel_raw(mech, t, &v, n),
        timestep: Some(t),
        ..*q_next
    })
}

/// `[Q_0, ..., Q_{T-1}]` by backward recursion from the terminal payoffs.
pub fn value_functions(profile: &PolicyProfile, mech: &Mechanism, payoff: &PayoffTable) -> Result<Vec<QFunction>> {
    check_shapes(profile, mech)?;
    if payoff.n_states() != profile.n_states() || payoff.n_participants() != profile.n_participants() {
        return Err(Error::dim("payoff table does not match the policy profile"));
    }
    let t_max = profile.horizon();
    let terminal = QFunction::terminal(payoff, profile.n_joint_actions()).with_timestep(t_max - 1);
    backward_from(profile, mech, terminal)
}

/// Backward recursion from an arbitrary terminal table.
pub fn backward_from(profile: &PolicyProfile, mech: &Mechanism, terminal: QFunction) -> Result<Vec<QFunction>> {
    let t_max = profile.horizon();
    let mut out = vec![terminal];
    for t in (0..t_max - 1).rev() {
        let q = bellman_apply(profile, mech, t, out.last().expect("non-empty"))?;
        out.push(q);
    }
    out.reverse();
    Ok(out)
}

/// `V_0(x) = sum_u pi_0(u|x) Q_0(x, u)` per state, as `[state][participant]`.
pub fn initial_state_values(profile: &PolicyProfile, mech: &Mechanism, payoff: &PayoffTable) -> Result<Vec<Vec<f64>>> {
    let qs = value_functions(profile, mech, payoff)?;
    state_values(profile, 0, &qs[0])
}

/// Expected payoff vector from an initial state distribution, via the value recursion.
pub fn expected_payoff_vector(
    profile: &PolicyProfile,
    mech: &Mechanism,
    init: &[f64],
    payoff: &PayoffTable,
) -> Result<Vec<f64>> {
    if init.len() != profile.n_states() {
        return Err(Error::dim("initial distribution length differs from state count"));
    }
    let v = initial_state_values(profile, mech, payoff)?;
    let mut out = vec![0.0; payoff.n_participants()];
    for (p, vx) in init.iter().zip(&v) {
        for (o, w) in out.iter_mut().zip(vx) {
            *o += p * w;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::g1;
    use crate::policy::Policy;

    #[test]
    fn g1_one_step() {
        let g = g1();
        let qs = value_functions(&g.pi_star, &g.mechanism, &g.payoff).unwrap();
        assert_eq!(qs.len(), 2);
        assert_eq!(qs[1].get(0, 0), &[0.0]);
        assert_eq!(qs[1].get(1, 1), &[1.0]);
        assert_eq!(qs[0].get(0, 0), &[0.0]);
        assert_eq!(qs[0].get(0, 1), &[1.0]);
        let e = expected_payoff_vector(&g.pi_star, &g.mechanism, &g.init, &g.payoff).unwrap();
        assert!((e[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn constants_are_fixed_points() {
        let g = g1();
        let c = QFunction::constant(&g.spaces, &[2.5]).unwrap();
        let out = bellman_apply(&g.pi_star, &g.mechanism, 0, &c).unwrap();
        assert!(out.max_abs_diff(&c) < 1e-15);
    }

    #[test]
    fn step_out_of_range() {
        let g = g1();
        let c = QFunction::constant(&g.spaces, &[1.0]).unwrap();
        assert!(matches!(bellman_apply(&g.pi_star, &g.mechanism, 1, &c), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_payoffs_give_zero_values() {
        let g = g1();
        let z = PayoffTable::zeros(&g.spaces);
        for q in value_functions(&g.pi_star, &g.mechanism, &z).unwrap() {
            assert!(q.values().iter().all(|&v| v == 0.0));
        }
        let p = Policy::uniform(&g.spaces, 0).unwrap();
        let prof = PolicyProfile::from_policies(&g.spaces, vec![p]).unwrap();
        assert_eq!(expected_payoff_vector(&prof, &g.mechanism, &g.init, &z).unwrap(), vec![0.0]);
    }

    #[test]
    fn family_rejects_empty_and_mixed_shapes() {
        let g = g1();
        assert!(QFamily::new(vec![]).is_err());
        let a = QFunction::constant(&g.spaces, &[1.0]).unwrap();
        let b = QFunction::from_raw(1, 1, 1, vec![0.0]).unwrap();
        assert!(QFamily::from_tables(vec![a, b]).is_err());
    }
}
