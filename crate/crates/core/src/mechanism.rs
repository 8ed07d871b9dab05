use std::sync::Arc;

use crate::error::{Error, Result, SizeCount};
use crate::spaces::{Factorization, FiniteSpaces};
use crate::validate::{check_prob_row, Location, Violation};

/// Upper bound on lazily enumerated family sizes and closure sizes.
pub const SIZE_GUARD: usize = 1_000_000;

/// Sparse kernel rows for one timestep, indexed by `state * n_joint + action`.
#[derive(Debug, Clone, PartialEq)]
struct Csr {
    offsets: Vec<usize>,
    next: Vec<u32>,
    prob: Vec<f64>,
}

/// A decision mechanism: transition kernels for each non-terminal timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    n_states: usize,
    n_joint: usize,
    horizon: usize,
    stationary: bool,
    tables: Vec<Csr>,
}

/// Checks nested `[t][state][joint_action][next_state]` kernels.
pub fn validate_mechanism(spaces: &FiniteSpaces, kernels: &[Vec<Vec<Vec<f64>>>]) -> Vec<Violation> {
    let mut out = Vec::new();
    let steps = spaces.horizon() - 1;
    if !(kernels.len() == 1 || kernels.len() == steps) {
        out.push(Violation::new(format!(
            "{} kernel tables; expected 1 (stationary) or {steps}",
            kernels.len()
        )));
        return out;
    }
    let (nx, nu) = (spaces.n_states(), spaces.n_joint_actions());
    for (t, table) in kernels.iter().enumerate() {
        if table.len() != nx {
            out.push(Violation::at(
                format!("kernel has {} state blocks for {nx} states", table.len()),
                Location {
                    t: Some(t),
                    ..Default::default()
                },
            ));
            continue;
        }
        for (x, block) in table.iter().enumerate() {
            if block.len() != nu {
                out.push(Violation::at(
                    format!("{} action rows for {nu} joint actions", block.len()),
                    Location::row(t, &spaces.states()[x]),
                ));
                continue;
            }
            for (u, row) in block.iter().enumerate() {
                let loc = || Location::row(t, &spaces.states()[x]).with_action(&spaces.joint_label(u));
                if row.len() != nx {
                    out.push(Violation::at(format!("row has {} entries for {nx} states", row.len()), loc()));
                    continue;
                }
                check_prob_row(row, loc, &mut out);
            }
        }
    }
    out
}

impl Mechanism {
    /// Builds a validated mechanism from nested kernels; one table means stationary.
    pub fn new(spaces: &FiniteSpaces, kernels: Vec<Vec<Vec<Vec<f64>>>>) -> Result<Self> {
        Error::check(validate_mechanism(spaces, &kernels))?;
        let stationary = kernels.len() == 1;
        let tables = kernels
            .into_iter()
            .map(|table| {
                let mut csr = Csr {
                    offsets: vec![0],
                    next: Vec::new(),
                    prob: Vec::new(),
                };
                for row in table.into_iter().flatten() {
                    let s: f64 = row.iter().sum();
                    for (y, p) in row.into_iter().enumerate() {
                        if p != 0.0 {
                            csr.next.push(y as u32);
                            csr.prob.push(if s == 1.0 { p } else { p / s });
                        }
                    }
                    csr.offsets.push(csr.next.len());
                }
                csr
            })
            .collect();
        Ok(Mechanism {
            n_states: spaces.n_states(),
            n_joint: spaces.n_joint_actions(),
            horizon: spaces.horizon(),
            stationary,
            tables,
        })
    }

    /// Deterministic mechanism `next = f(t, state, joint_action)`.
    pub fn deterministic(
        spaces: &FiniteSpaces,
        stationary: bool,
        f: impl Fn(usize, usize, usize) -> usize,
    ) -> Result<Self> {
        let (nx, nu) = (spaces.n_states(), spaces.n_joint_actions());
        let steps = if stationary { 1 } else { spaces.horizon() - 1 };
        let mut tables = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut next = Vec::with_capacity(nx * nu);
            for x in 0..nx {
                for u in 0..nu {
                    let y = f(t, x, u);
                    if y >= nx {
                        return Err(Error::dim(format!("next state {y} out of range")));
                    }
                    next.push(y as u32);
                }
            }
            tables.push(Csr {
                offsets: (0..=nx * nu).collect(),
                prob: vec![1.0; next.len()],
                next,
            });
        }
        Ok(Mechanism {
            n_states: nx,
            n_joint: nu,
            horizon: spaces.horizon(),
            stationary,
            tables,
        })
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

    pub fn is_stationary(&self) -> bool {
        self.stationary
    }

    pub fn is_compatible(&self, spaces: &FiniteSpaces) -> bool {
        self.n_states == spaces.n_states()
            && self.n_joint == spaces.n_joint_actions()
            && self.horizon == spaces.horizon()
    }

    /// Sparse kernel row at `(t, x, u)`: next states and their probabilities.
    pub fn row(&self, t: usize, x: usize, u: usize) -> (&[u32], &[f64]) {
        let csr = &self.tables[if self.stationary { 0 } else { t }];
        let k = x * self.n_joint + u;
        let (a, b) = (csr.offsets[k], csr.offsets[k + 1]);
        (&csr.next[a..b], &csr.prob[a..b])
    }

    pub fn dense_row(&self, t: usize, x: usize, u: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_states];
        let (ys, ps) = self.row(t, x, u);
        for (&y, &p) in ys.iter().zip(ps) {
            out[y as usize] += p;
        }
        out
    }

    /// Nested kernels as stored (one table if stationary).
    pub fn kernels(&self) -> Vec<Vec<Vec<Vec<f64>>>> {
        let steps = self.tables.len();
        (0..steps)
            .map(|t| {
                (0..self.n_states)
                    .map(|x| (0..self.n_joint).map(|u| self.dense_row(t, x, u)).collect())
                    .collect()
            })
            .collect()
    }

    pub fn is_deterministic(&self) -> bool {
        self.tables.iter().all(|c| c.next.len() == self.n_states * self.n_joint)
    }

    /// Whether every kernel row is unchanged when only the irrelevant
    /// action factor changes.
    pub fn is_bot_invariant(&self, f: &Factorization) -> bool {
        let steps = self.tables.len();
        (0..steps).all(|t| {
            (0..self.n_states).all(|x| {
                (0..f.n_star()).all(|s| {
                    let first = self.dense_row(t, x, f.join(s, 0));
                    (1..f.n_bot()).all(|b| self.dense_row(t, x, f.join(s, b)) == first)
                })
            })
        })
    }
}

/// A finite, ordered, non-empty family of mechanisms.
///
/// The deterministic family is enumerated lazily: member `k` assigns next
/// states to `(state, joint_action)` cells read as base-`|X|` digits of `k`,
/// first cell most significant.
#[derive(Debug, Clone)]
pub enum MechanismFamily {
    Explicit(Vec<Arc<Mechanism>>),
    Deterministic {
        n_states: usize,
        n_joint: usize,
        horizon: usize,
        count: usize,
    },
}

impl MechanismFamily {
    pub fn explicit(spaces: &FiniteSpaces, members: Vec<Arc<Mechanism>>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::arg("mechanism family is empty"));
        }
        if let Some(k) = members.iter().position(|m| !m.is_compatible(spaces)) {
            return Err(Error::dim(format!("mechanism {k} does not match the spaces")));
        }
        Ok(MechanismFamily::Explicit(members))
    }

    pub fn single(spaces: &FiniteSpaces, m: Mechanism) -> Result<Self> {
        Self::explicit(spaces, vec![Arc::new(m)])
    }

    /// All stationary deterministic mechanisms, refused above [`SIZE_GUARD`].
    pub fn all_deterministic(spaces: &FiniteSpaces) -> Result<Self> {
        let (nx, nu) = (spaces.n_states(), spaces.n_joint_actions());
        let count = (nx as u128)
            .checked_pow((nx * nu) as u32)
            .map_or(SizeCount::Overflow, SizeCount::Exact);
        match count {
            SizeCount::Exact(c) if c <= SIZE_GUARD as u128 => Ok(MechanismFamily::Deterministic {
                n_states: nx,
                n_joint: nu,
                horizon: spaces.horizon(),
                count: c as usize,
            }),
            _ => Err(Error::Resource {
                what: "deterministic mechanism family",
                count,
                limit: SIZE_GUARD,
            }),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            MechanismFamily::Explicit(m) => m.len(),
            MechanismFamily::Deterministic { count, .. } => *count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(states, joint actions, horizon)` shared by all members.
    pub fn dims(&self) -> (usize, usize, usize) {
        match self {
            MechanismFamily::Explicit(m) => (m[0].n_states, m[0].n_joint, m[0].horizon),
            MechanismFamily::Deterministic {
                n_states,
                n_joint,
                horizon,
                ..
            } => (*n_states, *n_joint, *horizon),
        }
    }

    pub fn is_compatible(&self, spaces: &FiniteSpaces) -> bool {
        match self {
            MechanismFamily::Explicit(m) => m.iter().all(|m| m.is_compatible(spaces)),
            MechanismFamily::Deterministic {
                n_states,
                n_joint,
                horizon,
                ..
            } => {
                *n_states == spaces.n_states()
                    && *n_joint == spaces.n_joint_actions()
                    && *horizon == spaces.horizon()
            }
        }
    }

    /// Next-state assignment of a lazily enumerated deterministic member.
    pub fn deterministic_targets(&self, k: usize, out: &mut Vec<u32>) -> bool {
        match *self {
            MechanismFamily::Explicit(_) => false,
            MechanismFamily::Deterministic {
                n_states,
                n_joint,
                count,
                ..
            } => {
                assert!(k < count, "member {k} out of range");
                let cells = n_states * n_joint;
                out.clear();
                out.resize(cells, 0);
                let mut rest = k;
                for c in (0..cells).rev() {
                    out[c] = (rest % n_states) as u32;
                    rest /= n_states;
                }
                true
            }
        }
    }

    pub fn get(&self, k: usize) -> Arc<Mechanism> {
        match self {
            MechanismFamily::Explicit(m) => m[k].clone(),
            &MechanismFamily::Deterministic {
                n_states,
                n_joint,
                horizon,
                ..
            } => {
                let cells = n_states * n_joint;
                let mut next = Vec::with_capacity(cells);
                self.deterministic_targets(k, &mut next);
                Arc::new(Mechanism {
                    n_states,
                    n_joint,
                    horizon,
                    stationary: true,
                    tables: vec![Csr {
                        offsets: (0..=cells).collect(),
                        prob: vec![1.0; cells],
                        next,
                    }],
                })
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Arc<Mechanism>> + '_ {
        (0..self.len()).map(move |k| self.get(k))
    }

    /// Members as a concrete list. Materializes lazy families.
    pub fn members(&self) -> Vec<Arc<Mechanism>> {
        self.iter().collect()
    }

    /// Concatenation of two families (used to test family enlargement).
    pub fn union(&self, other: &MechanismFamily) -> MechanismFamily {
        MechanismFamily::Explicit(self.iter().chain(other.iter()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn sparse_rows_drop_zeros() {
        let s = FiniteSpaces::new(l(&["a", "b"]), vec![l(&["0", "1"])], 2).unwrap();
        let m = Mechanism::new(
            &s,
            vec![vec![
                vec![vec![1.0, 0.0], vec![0.5, 0.5]],
                vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            ]],
        )
        .unwrap();
        assert_eq!(m.row(0, 0, 0), (&[0u32][..], &[1.0][..]));
        assert_eq!(m.row(0, 0, 1).0, &[0, 1]);
        assert_eq!(m.dense_row(0, 1, 0), vec![0.0, 1.0]);
        assert!(!m.is_deterministic());
        assert_eq!(Mechanism::new(&s, m.kernels()).unwrap(), m);
    }

    #[test]
    fn bad_kernel_rows_are_located() {
        let s = FiniteSpaces::new(l(&["a", "b"]), vec![l(&["0", "1"])], 2).unwrap();
        let v = validate_mechanism(
            &s,
            &[vec![
                vec![vec![1.0, 0.0], vec![0.5, 0.6]],
                vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            ]],
        );
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].to_string(), "row sum 1.1 at (t=0,x=a,u=1)");
    }

    #[test]
    fn deterministic_family_counts_and_order() {
        let s = FiniteSpaces::new(l(&["a", "b"]), vec![l(&["0", "1"])], 2).unwrap();
        let fam = MechanismFamily::all_deterministic(&s).unwrap();
        assert_eq!(fam.len(), 16);
        // member 1: only the last cell (b, 1) goes to b
        let m = fam.get(1);
        assert_eq!(m.row(0, 1, 1).0, &[1]);
        assert_eq!(m.row(0, 0, 0).0, &[0]);
        // member 8: first cell (a, 0) goes to b
        assert_eq!(fam.get(8).row(0, 0, 0).0, &[1]);

        let one = FiniteSpaces::new(l(&["a"]), vec![l(&["0", "1", "2"])], 3).unwrap();
        assert_eq!(MechanismFamily::all_deterministic(&one).unwrap().len(), 1);
    }

    #[test]
    fn size_guard_reports_count() {
        let s = FiniteSpaces::new(l(&["a", "b", "c", "d"]), vec![l(&["0", "1", "2"])], 2).unwrap();
        match MechanismFamily::all_deterministic(&s) {
            Err(Error::Resource { count, .. }) => assert_eq!(count, SizeCount::Exact(4u128.pow(12))),
            other => panic!("expected resource error, got {other:?}"),
        }
    }

    #[test]
    fn empty_family_is_argument_error() {
        let s = FiniteSpaces::new(l(&["a"]), vec![l(&["0"])], 2).unwrap();
        assert!(matches!(MechanismFamily::explicit(&s, vec![]), Err(Error::Argument(_))));
    }
}
