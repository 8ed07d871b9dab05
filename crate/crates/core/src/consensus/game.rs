//! Staged consensus game: question, draft, revised statement.
//!
//! Each participant acts with a (content, style) pair. At the question the
//! content is the participant's opinion; at the draft, contents 0, 1 and 2
//! mean critique directions -1, 0 and +1 (larger contents read as +1). The
//! mediator ignores style entirely.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ConsensusConfig;
use crate::error::{Error, Result};
use crate::mechanism::Mechanism;
use crate::payoff::PayoffTable;
use crate::policy::{Policy, PolicyProfile};
use crate::spaces::{FactorPair, FactorizationDef, FiniteSpaces};

pub const HORIZON: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub id: usize,
    /// Preferred position.
    pub theta: usize,
    /// Critique sharpness.
    pub beta: f64,
    /// Probability of the first style label.
    pub style_p: f64,
}

impl Participant {
    pub fn check(&self, n_positions: usize) -> Result<()> {
        if self.theta >= n_positions {
            return Err(Error::arg(format!("participant {}: theta {} out of range", self.id, self.theta)));
        }
        if !(self.beta > 0.0) {
            return Err(Error::arg(format!("participant {}: beta must be positive", self.id)));
        }
        if !(0.0..=1.0).contains(&self.style_p) {
            return Err(Error::arg(format!("participant {}: style_p outside [0, 1]", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Question,
    Draft(usize),
    Revised(usize),
}

/// A critique: direction in {-1, 0, +1} and a style index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Critique {
    pub direction: i8,
    pub style: usize,
}

/// Distribution over critiques as direction x style.
#[derive(Debug, Clone, PartialEq)]
pub struct CritiqueDist {
    /// Probabilities of directions -1, 0, +1.
    pub direction: [f64; 3],
    pub style: Vec<f64>,
}

impl CritiqueDist {
    pub fn uniform(n_styles: usize) -> Self {
        CritiqueDist {
            direction: [1.0 / 3.0; 3],
            style: vec![1.0 / n_styles as f64; n_styles],
        }
    }

    pub fn prob(&self, c: Critique) -> f64 {
        self.direction[(c.direction + 1) as usize] * self.style.get(c.style).copied().unwrap_or(0.0)
    }

    /// Natural log of [`prob`](Self::prob); `-inf` for impossible critiques.
    pub fn log_prob(&self, c: Critique) -> f64 {
        self.prob(c).ln()
    }

    /// Draws a critique with two uniform draws (direction, then style).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Critique {
        let d = pick(&self.direction, rng.random());
        let s = pick(&self.style, rng.random());
        Critique {
            direction: d as i8 - 1,
            style: s,
        }
    }
}

fn pick(p: &[f64], r: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &q) in p.iter().enumerate() {
        if q > 0.0 {
            acc += q;
            last = k;
            if r < acc {
                return k;
            }
        }
    }
    last
}

/// Draft rule: mean opinion rounded to the nearest position, ties going down.
pub fn draft_position(opinions: &[usize]) -> usize {
    let n = opinions.len();
    let sum: usize = opinions.iter().sum();
    (2 * sum + n - 1) / (2 * n)
}

/// Revision rule: move the draft one step in the direction of the critique
/// majority (no move on a tie), staying on the scale.
pub fn revised_position(draft: usize, directions: &[i8], n_positions: usize) -> usize {
    let total: i32 = directions.iter().map(|&d| d as i32).sum();
    clamp_position(draft as i64 + total.signum() as i64, n_positions)
}

fn clamp_position(p: i64, n_positions: usize) -> usize {
    p.clamp(0, n_positions as i64 - 1) as usize
}

/// Ground-truth critique distribution of `p` at `draft`: softmax over
/// directions of `-beta * |clamp(draft + d) - theta|`, times the style
/// distribution.
pub fn ground_truth_critique(p: &Participant, draft: usize, n_positions: usize, n_styles: usize) -> CritiqueDist {
    let logits: [f64; 3] = std::array::from_fn(|k| {
        let moved = clamp_position(draft as i64 + k as i64 - 1, n_positions);
        -p.beta * (moved as f64 - p.theta as f64).abs()
    });
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w = logits.map(|l| (l - top).exp());
    let z: f64 = w.iter().sum();
    CritiqueDist {
        direction: w.map(|x| x / z),
        style: style_distribution(p.style_p, n_styles),
    }
}

/// First style with probability `style_p`, the rest sharing the remainder.
pub fn style_distribution(style_p: f64, n_styles: usize) -> Vec<f64> {
    if n_styles == 1 {
        return vec![1.0];
    }
    let rest = (1.0 - style_p) / (n_styles - 1) as f64;
    let mut v = vec![rest; n_styles];
    v[0] = style_p;
    v
}

/// The consensus game for one group size.
#[derive(Debug, Clone)]
pub struct ConsensusGame {
    pub spaces: FiniteSpaces,
    pub mechanism: Mechanism,
    n_positions: usize,
    n_styles: usize,
}

impl ConsensusGame {
    pub fn n_positions(&self) -> usize {
        self.n_positions
    }

    pub fn n_styles(&self) -> usize {
        self.n_styles
    }

    pub fn group_size(&self) -> usize {
        self.spaces.n_participants()
    }

    pub fn question_state(&self) -> usize {
        0
    }

    pub fn draft_state(&self, d: usize) -> usize {
        1 + d
    }

    pub fn revised_state(&self, r: usize) -> usize {
        1 + self.n_positions + r
    }

    pub fn stage(&self, x: usize) -> Stage {
        let k = self.n_positions;
        match x {
            0 => Stage::Question,
            x if x <= k => Stage::Draft(x - 1),
            x => Stage::Revised(x - 1 - k),
        }
    }

    pub fn action(&self, content: usize, style: usize) -> usize {
        content * self.n_styles + style
    }

    /// (content, style) of a participant action.
    pub fn split_action(&self, a: usize) -> (usize, usize) {
        (a / self.n_styles, a % self.n_styles)
    }

    pub fn direction_of(content: usize) -> i8 {
        content.min(2) as i8 - 1
    }

    /// Payoff table for a group with preferred positions `thetas`:
    /// `1 - |position - theta| / (K - 1)` at draft and revised states, 0 at
    /// the question.
    pub fn payoff(&self, thetas: &[usize]) -> Result<PayoffTable> {
        if thetas.len() != self.group_size() {
            return Err(Error::dim(format!("{} positions for a group of {}", thetas.len(), self.group_size())));
        }
        let span = (self.n_positions - 1) as f64;
        let rows = (0..self.spaces.n_states())
            .map(|x| {
                let pos = match self.stage(x) {
                    Stage::Question => return vec![0.0; thetas.len()],
                    Stage::Draft(p) | Stage::Revised(p) => p,
                };
                thetas
                    .iter()
                    .map(|&th| 1.0 - (pos as f64 - th as f64).abs() / span)
                    .collect()
            })
            .collect();
        PayoffTable::new(&self.spaces, rows)
    }

    /// Stationary policy for group slot `slot` that plays the opinion `theta`
    /// (first style) at the question, follows `critique(draft)` at drafts and
    /// plays the first action once the statement is revised.
    pub fn staged_policy(
        &self,
        slot: usize,
        opinion: usize,
        critique: impl Fn(usize) -> CritiqueDist,
    ) -> Result<Policy> {
        let na = self.spaces.actions(slot).len();
        let table = (0..self.spaces.n_states())
            .map(|x| {
                let mut row = vec![0.0; na];
                match self.stage(x) {
                    Stage::Question => row[self.action(opinion, 0)] = 1.0,
                    Stage::Draft(d) => {
                        let c = critique(d);
                        for (k, &pd) in c.direction.iter().enumerate() {
                            for (s, &ps) in c.style.iter().enumerate() {
                                row[self.action(k, s)] = pd * ps;
                            }
                        }
                    }
                    Stage::Revised(_) => row[0] = 1.0,
                }
                row
            })
            .collect();
        Policy::stationary(&self.spaces, slot, table)
    }

    pub fn ground_truth_policy(&self, slot: usize, p: &Participant) -> Result<Policy> {
        p.check(self.n_positions)?;
        self.staged_policy(slot, p.theta, |d| {
            ground_truth_critique(p, d, self.n_positions, self.n_styles)
        })
    }

    pub fn ground_truth_profile(&self, group: &[&Participant]) -> Result<PolicyProfile> {
        let ps = group
            .iter()
            .enumerate()
            .map(|(slot, p)| self.ground_truth_policy(slot, p).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        PolicyProfile::new(&self.spaces, ps)
    }
}

/// Builds the game for `config.group_size` participants.
pub fn build_consensus_game(config: &ConsensusConfig) -> Result<ConsensusGame> {
    config.validate()?;
    let k = config.n_positions;
    let n_styles = config.n_styles();
    let mut states = vec!["question".to_string()];
    states.extend((0..k).map(|d| format!("draft:{d}")));
    states.extend((0..k).map(|r| format!("revised:{r}")));
    let contents: Vec<String> = (0..k).map(|c| format!("c{c}")).collect();
    let labels: Vec<String> = contents
        .iter()
        .flat_map(|c| config.style_labels.iter().map(move |s| format!("{c}/{s}")))
        .collect();
    let n = config.group_size;
    let spaces = FiniteSpaces::new(states, vec![labels; n], HORIZON)?.with_factorization(
        &FactorizationDef::PerParticipant(vec![
            FactorPair {
                star: contents,
                bot: config.style_labels.clone(),
            };
            n
        ]),
    )?;
    let mut game = ConsensusGame {
        mechanism: Mechanism::deterministic(&spaces, true, |_, _, _| 0)?,
        spaces,
        n_positions: k,
        n_styles,
    };
    let mechanism = Mechanism::deterministic(&game.spaces, true, |_, x, u| {
        let acts = game.spaces.decode_joint(u);
        let contents: Vec<usize> = acts.iter().map(|&a| game.split_action(a).0).collect();
        match game.stage(x) {
            Stage::Question => game.draft_state(draft_position(&contents)),
            Stage::Draft(d) => {
                let dirs: Vec<i8> = contents.iter().map(|&c| ConsensusGame::direction_of(c)).collect();
                game.revised_state(revised_position(d, &dirs, k))
            }
            Stage::Revised(r) => game.revised_state(r),
        }
    })?;
    game.mechanism = mechanism;
    Ok(game)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn person(theta: usize, beta: f64) -> Participant {
        Participant {
            id: 0,
            theta,
            beta,
            style_p: 0.5,
        }
    }

    #[test]
    fn draft_and_revision_rules() {
        assert_eq!(draft_position(&[1, 1, 4]), 2);
        // Mean 1.5 rounds down.
        assert_eq!(draft_position(&[1, 2]), 1);
        assert_eq!(draft_position(&[0, 0, 1]), 0);
        assert_eq!(draft_position(&[0, 1, 1]), 1);
        assert_eq!(revised_position(2, &[1, 1, -1], 5), 3);
        assert_eq!(revised_position(2, &[0, 0, 0], 5), 2);
        assert_eq!(revised_position(4, &[1, 1, 1], 5), 4);
        assert_eq!(revised_position(0, &[-1, 0, 0], 5), 0);
    }

    #[test]
    fn critique_softmax_values() {
        let c = ground_truth_critique(&person(4, 1.0), 2, 5, 2);
        let z = (-3f64).exp() + (-2f64).exp() + (-1f64).exp();
        let want = [(-3f64).exp() / z, (-2f64).exp() / z, (-1f64).exp() / z];
        for k in 0..3 {
            assert_abs_diff_eq!(c.direction[k], want[k], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(c.direction[0], 0.0900, epsilon = 5e-5);
        assert_abs_diff_eq!(c.direction[1], 0.2447, epsilon = 5e-5);
        assert_abs_diff_eq!(c.direction[2], 0.6652, epsilon = 5e-5);
    }

    #[test]
    fn sharp_critic_points_towards_its_position() {
        let c = ground_truth_critique(&person(4, 50.0), 2, 5, 2);
        assert!((c.direction[2] - 1.0).abs() < 1e-6);
        for beta in [0.1, 1.0, 7.0] {
            let c = ground_truth_critique(&person(3, beta), 3, 5, 2);
            assert!(c.direction[1] > c.direction[0] && c.direction[1] > c.direction[2]);
        }
    }

    #[test]
    fn game_dynamics_follow_the_rules() {
        let cfg = ConsensusConfig::default();
        let g = build_consensus_game(&cfg).unwrap();
        assert_eq!(g.spaces.n_states(), 11);
        let u = g
            .spaces
            .encode_joint(&[g.action(1, 0), g.action(1, 1), g.action(4, 0)])
            .unwrap();
        let (next, _) = g.mechanism.row(0, g.question_state(), u);
        assert_eq!(next, &[g.draft_state(2) as u32]);
        let u = g
            .spaces
            .encode_joint(&[g.action(2, 1), g.action(2, 0), g.action(0, 0)])
            .unwrap();
        let (next, _) = g.mechanism.row(1, g.draft_state(2), u);
        assert_eq!(next, &[g.revised_state(3) as u32]);
        let f = g.spaces.factorization().unwrap();
        assert!(g.mechanism.is_bot_invariant(f));
    }

    #[test]
    fn payoff_peaks_at_preferred_position() {
        let g = build_consensus_game(&ConsensusConfig::default()).unwrap();
        let pay = g.payoff(&[0, 2, 4]).unwrap();
        let row = pay.row(g.revised_state(2));
        assert_eq!(row, &[0.5, 1.0, 0.5]);
        assert_eq!(pay.row(g.question_state()), &[0.0; 3]);
    }

    #[test]
    fn ground_truth_profile_is_valid() {
        let g = build_consensus_game(&ConsensusConfig::default()).unwrap();
        let ps = [person(0, 1.0), person(2, 2.0), person(4, 0.5)];
        let refs: Vec<&Participant> = ps.iter().collect();
        let prof = g.ground_truth_profile(&refs).unwrap();
        let row = prof.policy(0).row(0, g.question_state());
        assert_eq!(row[g.action(0, 0)], 1.0);
        assert!(g.ground_truth_policy(0, &person(9, 1.0)).is_err());
    }
}
