//! Episode records, dataset generation and the participant/episode split.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ConsensusConfig;
use super::game::{build_consensus_game, ConsensusGame, Critique, Participant};
use crate::error::{Error, Result};
use crate::rollout::rollout;
use crate::seed::{derive_seed, rng_for};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    pub question: usize,
    pub participants: Vec<usize>,
    pub opinions: Vec<usize>,
    pub draft: usize,
    /// `(direction, style)` per participant.
    pub critiques: Vec<(i8, usize)>,
    pub revised: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl EpisodeRecord {
    pub fn critique(&self, slot: usize) -> Critique {
        let (direction, style) = self.critiques[slot];
        Critique { direction, style }
    }

    pub fn check(&self, n_positions: usize, n_styles: usize) -> Result<()> {
        let n = self.participants.len();
        if self.opinions.len() != n || self.critiques.len() != n {
            return Err(Error::dim(format!("episode {}: per-participant lists differ in length", self.question)));
        }
        let in_range = |p: usize| p < n_positions;
        if !self.opinions.iter().all(|&o| in_range(o)) || !in_range(self.draft) || !in_range(self.revised) {
            return Err(Error::dim(format!("episode {}: position out of range", self.question)));
        }
        if !self.critiques.iter().all(|&(d, s)| (-1..=1).contains(&d) && s < n_styles) {
            return Err(Error::dim(format!("episode {}: critique out of range", self.question)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<EpisodeRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn participant_ids(&self) -> BTreeSet<usize> {
        self.records.iter().flat_map(|r| r.participants.iter().copied()).collect()
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut records = Vec::new();
        for line in r.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                records.push(serde_json::from_str(&line)?);
            }
        }
        Ok(Dataset { records })
    }
}

// Stream tags under the config seed.
const POPULATION_STREAM: u64 = 1;
const COHORT_STREAM: u64 = 2;
const EPISODE_STREAM: u64 = 3;

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn sample_population(config: &ConsensusConfig) -> Vec<Participant> {
    let mut rng = rng_for(config.seed, POPULATION_STREAM);
    (0..config.n_participants)
        .map(|id| Participant {
            id,
            theta: rng.random_range(0..config.n_positions),
            beta: uniform_in(&mut rng, config.sharpness_range),
            style_p: uniform_in(&mut rng, config.style_bias_range),
        })
        .collect()
}

/// Fixed groups of `group_size` participants; question `q` goes to group
/// `q mod n_groups`.
pub fn cohorts(config: &ConsensusConfig) -> Vec<Vec<usize>> {
    let mut ids: Vec<usize> = (0..config.n_participants).collect();
    ids.shuffle(&mut rng_for(config.seed, COHORT_STREAM));
    ids.chunks(config.group_size).map(|c| c.to_vec()).collect()
}

/// Samples a population and rolls out one episode per question with the
/// ground-truth policies. Deterministic given `config.seed`.
pub fn generate_dataset(config: &ConsensusConfig) -> Result<(Dataset, Vec<Participant>)> {
    config.validate()?;
    config.check_feasible()?;
    let game = build_consensus_game(config)?;
    let population = sample_population(config);
    let groups = cohorts(config);
    let episode_seed = derive_seed(config.seed, EPISODE_STREAM);
    let records = (0..config.n_questions)
        .into_par_iter()
        .map(|q| {
            let members = &groups[q % groups.len()];
            let group: Vec<&Participant> = members.iter().map(|&id| &population[id]).collect();
            play_episode(&game, q, &group, &mut rng_for(episode_seed, q as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((Dataset { records }, population))
}

fn play_episode<R: Rng + ?Sized>(
    game: &ConsensusGame,
    question: usize,
    group: &[&Participant],
    rng: &mut R,
) -> Result<EpisodeRecord> {
    let profile = game.ground_truth_profile(group)?;
    let tr = rollout(&profile, &game.mechanism, game.question_state(), rng)?;
    let opinions = game
        .spaces
        .decode_joint(tr.joint_actions[0])
        .into_iter()
        .map(|a| game.split_action(a).0)
        .collect();
    let critiques = game
        .spaces
        .decode_joint(tr.joint_actions[1])
        .into_iter()
        .map(|a| {
            let (c, s) = game.split_action(a);
            (ConsensusGame::direction_of(c), s)
        })
        .collect();
    let position = |x: usize| match game.stage(x) {
        super::game::Stage::Draft(p) | super::game::Stage::Revised(p) => Ok(p),
        super::game::Stage::Question => Err(Error::dim("episode did not leave the question state")),
    };
    Ok(EpisodeRecord {
        question,
        participants: group.iter().map(|p| p.id).collect(),
        opinions,
        draft: position(tr.states[1])?,
        critiques,
        revised: position(tr.states[2])?,
        split: None,
    })
}

/// Outcome of [`split_dataset`]; records carry their split tag.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitReport {
    pub val_fraction: f64,
    pub n_components: usize,
    pub n_validation_components: usize,
    pub train_participants: usize,
    pub validation_participants: usize,
    pub train_episodes: usize,
    pub validation_episodes: usize,
    /// Achieved share of participants on the validation side.
    pub validation_participant_share: f64,
    pub validation_episode_share: f64,
}

#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: Dataset,
    pub validation: Dataset,
    pub report: SplitReport,
}

fn find(parent: &mut [usize], mut a: usize) -> usize {
    while parent[a] != a {
        parent[a] = parent[parent[a]];
        a = parent[a];
    }
    a
}

/// Splits so that no participant and no episode appears on both sides.
///
/// Participants who share an episode must stay together, so the unit of
/// assignment is a connected component of the co-participation graph.
/// `round(val_fraction * components)` components, clamped to leave both
/// sides non-empty, go to validation.
pub fn split_dataset<R: Rng + ?Sized>(dataset: &Dataset, val_fraction: f64, rng: &mut R) -> Result<SplitDataset> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::arg(format!("val_fraction {val_fraction} outside (0, 1)")));
    }
    let ids: Vec<usize> = dataset.participant_ids().into_iter().collect();
    let index: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    for r in &dataset.records {
        if let Some(&first) = r.participants.first() {
            let a = find(&mut parent, index[&first]);
            for p in &r.participants[1..] {
                let b = find(&mut parent, index[p]);
                parent[b] = a;
            }
        }
    }
    let mut roots: Vec<usize> = (0..ids.len()).map(|k| find(&mut parent, k)).collect::<BTreeSet<_>>().into_iter().collect();
    let n_components = roots.len();
    if n_components < 2 {
        return Err(Error::arg(format!(
            "dataset has {n_components} independent participant group(s); a disjoint split needs at least 2"
        )));
    }
    roots.shuffle(rng);
    let n_val = ((val_fraction * n_components as f64).round() as usize).clamp(1, n_components - 1);
    let val_roots: BTreeSet<usize> = roots[..n_val].iter().copied().collect();
    let is_val = |id: usize, parent: &mut [usize]| val_roots.contains(&find(parent, index[&id]));

    let mut train = Dataset::default();
    let mut validation = Dataset::default();
    for r in &dataset.records {
        let mut r = r.clone();
        let v = r.participants.first().is_some_and(|&p| is_val(p, &mut parent));
        if v {
            r.split = Some(Split::Validation);
            validation.records.push(r);
        } else {
            r.split = Some(Split::Train);
            train.records.push(r);
        }
    }
    let vp = validation.participant_ids().len();
    let tp = train.participant_ids().len();
    let report = SplitReport {
        val_fraction,
        n_components,
        n_validation_components: n_val,
        train_participants: tp,
        validation_participants: vp,
        train_episodes: train.len(),
        validation_episodes: validation.len(),
        validation_participant_share: vp as f64 / (vp + tp) as f64,
        validation_episode_share: validation.len() as f64 / dataset.len().max(1) as f64,
    };
    Ok(SplitDataset {
        train,
        validation,
        report,
    })
}
