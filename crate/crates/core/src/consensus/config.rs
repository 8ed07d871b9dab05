use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the consensus environment and of the evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConsensusConfig {
    /// Opinion scale `0..n_positions`.
    pub n_positions: usize,
    pub group_size: usize,
    pub n_questions: usize,
    pub n_participants: usize,
    /// Labels of the irrelevant (style) action factor.
    pub style_labels: Vec<String>,
    /// Critique sharpness is drawn uniformly from this interval.
    pub sharpness_range: [f64; 2],
    /// Probability of the first style label is drawn uniformly from this interval.
    pub style_bias_range: [f64; 2],
    /// Target share of participants in the validation split.
    pub val_fraction: f64,
    /// Additive smoothing of critique counts.
    pub alpha: f64,
    /// Weight of the personal table in the personal/population blend.
    pub lambda: f64,
    /// Rater comparisons per validation critique.
    pub winrate_samples: usize,
    pub seed: u64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            n_positions: 5,
            group_size: 3,
            n_questions: 200,
            n_participants: 60,
            style_labels: vec!["s1".into(), "s2".into()],
            sharpness_range: [0.5, 3.0],
            style_bias_range: [0.2, 0.8],
            val_fraction: 0.5,
            alpha: 1.0,
            lambda: 0.8,
            winrate_samples: 20,
            seed: 2024,
        }
    }
}

impl ConsensusConfig {
    pub fn n_cohorts(&self) -> usize {
        self.n_participants / self.group_size
    }

    pub fn n_styles(&self) -> usize {
        self.style_labels.len()
    }

    /// Checks the environment parameters.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_positions < 3 {
            problems.push(format!("n_positions {} < 3", self.n_positions));
        }
        if !(3..=5).contains(&self.group_size) {
            problems.push(format!("group_size {} outside [3, 5]", self.group_size));
        }
        if self.n_questions == 0 {
            problems.push("n_questions must be positive".to_string());
        }
        if self.style_labels.is_empty() {
            problems.push("style_labels is empty".to_string());
        }
        let mut seen = std::collections::HashSet::new();
        if self.style_labels.iter().any(|l| !seen.insert(l)) {
            problems.push("duplicate style label".to_string());
        }
        let [b0, b1] = self.sharpness_range;
        if !(b0 > 0.0 && b0 <= b1 && b1.is_finite()) {
            problems.push(format!("sharpness_range [{b0}, {b1}] must be positive and ordered"));
        }
        let [s0, s1] = self.style_bias_range;
        if !(0.0 <= s0 && s0 <= s1 && s1 <= 1.0) {
            problems.push(format!("style_bias_range [{s0}, {s1}] must be an ordered subinterval of [0, 1]"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            problems.push(format!("val_fraction {} outside (0, 1)", self.val_fraction));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            problems.push(format!("alpha {} must be positive", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            problems.push(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if self.winrate_samples == 0 {
            problems.push("winrate_samples must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(problems.join("; ")))
        }
    }

    /// Checks that the population can be split into cohorts that each take
    /// part in at least three episodes.
    pub fn check_feasible(&self) -> Result<()> {
        if self.group_size > self.n_participants {
            return Err(Error::arg(format!(
                "group_size {} exceeds the population of {}",
                self.group_size, self.n_participants
            )));
        }
        if self.n_participants % self.group_size != 0 {
            return Err(Error::arg(format!(
                "{} participants cannot be split into groups of {}",
                self.n_participants, self.group_size
            )));
        }
        if self.n_questions < 3 * self.n_cohorts() {
            return Err(Error::arg(format!(
                "{} questions give some of the {} groups fewer than three episodes",
                self.n_questions,
                self.n_cohorts()
            )));
        }
        Ok(())
    }
}
