//! Invariant checks that report violations as data.
//!
//! Every constructor in this crate funnels through these checks, so a value
//! that exists has already passed them. The `validate_*` functions expose the
//! same checks for raw definitions (e.g. freshly parsed JSON) without building
//! anything.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::NORM_TOL;

/// Where in a table a violation was found.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub participant: Option<usize>,
}

impl Location {
    pub fn row(t: usize, state: &str) -> Self {
        Location {
            t: Some(t),
            state: Some(state.to_string()),
            ..Default::default()
        }
    }

    pub fn with_action(mut self, action: &str) -> Self {
        self.action = Some(action.to_string());
        self
    }

    pub fn with_participant(mut self, i: usize) -> Self {
        self.participant = Some(i);
        self
    }

    fn is_empty(&self) -> bool {
        self.t.is_none() && self.state.is_none() && self.action.is_none() && self.participant.is_none()
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(i) = self.participant {
            parts.push(format!("i={i}"));
        }
        if let Some(t) = self.t {
            parts.push(format!("t={t}"));
        }
        if let Some(x) = &self.state {
            parts.push(format!("x={x}"));
        }
        if let Some(u) = &self.action {
            parts.push(format!("u={u}"));
        }
        write!(f, "({})", parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub message: String,
    pub location: Location,
}

impl Violation {
    pub fn new(message: impl Into<String>) -> Self {
        Violation {
            message: message.into(),
            location: Location::default(),
        }
    }

    pub fn at(message: impl Into<String>, location: Location) -> Self {
        Violation {
            message: message.into(),
            location,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.location.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{} at {}", self.message, self.location)
        }
    }
}

/// Formats a number rounded to the normalization tolerance, without trailing zeros.
pub(crate) fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.9}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

pub(crate) fn check_labels(what: &str, labels: &[String], out: &mut Vec<Violation>) {
    if labels.is_empty() {
        out.push(Violation::new(format!("empty {what}")));
        return;
    }
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            out.push(Violation::new(format!("duplicate label {l:?} in {what}")));
        }
    }
}

/// Checks one probability row: finite, nonnegative, sums to one within [`NORM_TOL`].
pub(crate) fn check_prob_row(row: &[f64], loc: impl Fn() -> Location, out: &mut Vec<Violation>) {
    let mut sum = 0.0;
    for (k, &p) in row.iter().enumerate() {
        if !p.is_finite() {
            out.push(Violation::at(format!("non-finite probability {p} in entry {k}"), loc()));
            return;
        }
        if p < 0.0 {
            out.push(Violation::at(
                format!("negative probability {} in entry {k}", fmt_num(p)),
                loc(),
            ));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > NORM_TOL {
        out.push(Violation::at(format!("row sum {}", fmt_num(sum)), loc()));
    }
}

pub use crate::mechanism::validate_mechanism;
pub use crate::payoff::validate_payoff;
pub use crate::policy::validate_policy;
pub use crate::spaces::validate_spaces;
