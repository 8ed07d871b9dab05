use crate::error::{Error, Result};
use crate::spaces::FiniteSpaces;
use crate::validate::{Location, Violation};

/// Terminal payoffs `g_i(state)`, one value per state and participant.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffTable {
    n_participants: usize,
    values: Vec<f64>,
}

/// Checks a nested `[state][participant]` payoff table.
pub fn validate_payoff(spaces: &FiniteSpaces, values: &[Vec<f64>]) -> Vec<Violation> {
    let mut out = Vec::new();
    if values.len() != spaces.n_states() {
        out.push(Violation::new(format!(
            "payoff table has {} state rows for {} states",
            values.len(),
            spaces.n_states()
        )));
        return out;
    }
    let n = spaces.n_participants();
    for (x, row) in values.iter().enumerate() {
        let state = &spaces.states()[x];
        if row.len() != n {
            out.push(Violation::at(
                format!("{} payoffs for {n} participants", row.len()),
                Location {
                    state: Some(state.clone()),
                    ..Default::default()
                },
            ));
            continue;
        }
        for (i, v) in row.iter().enumerate() {
            if !v.is_finite() {
                out.push(Violation::at(
                    format!("non-finite payoff {v}"),
                    Location {
                        state: Some(state.clone()),
                        participant: Some(i),
                        ..Default::default()
                    },
                ));
            }
        }
    }
    out
}

impl PayoffTable {
    pub fn new(spaces: &FiniteSpaces, values: Vec<Vec<f64>>) -> Result<Self> {
        Error::check(validate_payoff(spaces, &values))?;
        Ok(PayoffTable {
            n_participants: spaces.n_participants(),
            values: values.into_iter().flatten().collect(),
        })
    }

    pub fn zeros(spaces: &FiniteSpaces) -> Self {
        PayoffTable {
            n_participants: spaces.n_participants(),
            values: vec![0.0; spaces.n_states() * spaces.n_participants()],
        }
    }

    pub fn n_participants(&self) -> usize {
        self.n_participants
    }

    pub fn n_states(&self) -> usize {
        self.values.len() / self.n_participants
    }

    pub fn is_compatible(&self, spaces: &FiniteSpaces) -> bool {
        self.n_participants == spaces.n_participants() && self.n_states() == spaces.n_states()
    }

    pub fn get(&self, x: usize, i: usize) -> f64 {
        self.values[x * self.n_participants + i]
    }

    /// Payoff vector over participants at state `x`.
    pub fn row(&self, x: usize) -> &[f64] {
        &self.values[x * self.n_participants..(x + 1) * self.n_participants]
    }

    /// Mean payoff over participants at state `x`.
    pub fn welfare(&self, x: usize) -> f64 {
        self.row(x).iter().sum::<f64>() / self.n_participants as f64
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.n_participants).map(<[f64]>::to_vec).collect()
    }
}
