//! Substitution experiments and the full evaluation run.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::ConsensusConfig;
use super::dataset::{generate_dataset, split_dataset, Dataset, EpisodeRecord, SplitDataset, SplitReport};
use super::game::{build_consensus_game, ground_truth_critique, ConsensusGame, CritiqueDist, Participant};
use super::model::{
    critique_logliks, fit_population, fit_representative, rater_winrate, CritiqueContext, CritiqueSource, Estimate,
    GroundTruthRater, RepresentativeModel,
};
use crate::error::{Error, Result};
use crate::mechanism::MechanismFamily;
use crate::representativity::{payoff_discrepancy, representativity, substitute_all, substitute_single, Discrepancy, DiscrepancyKind};
use crate::rollout::point_mass;
use crate::seed::{derive_seed, rng_for};
use crate::value::{QFamily, QFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// One participant per episode, chosen uniformly at random.
    Single,
    /// Every participant.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubstitutionReport {
    pub regime: Regime,
    /// Mean absolute payoff discrepancy over substituted participants,
    /// averaged over episodes.
    pub discrepancy: Estimate,
    /// Representativity with the payoff as the only terminal table and the
    /// game's mediator as the only mechanism, averaged over episodes.
    pub representativity: f64,
    /// Substituted group slot per episode.
    pub substituted: Vec<Vec<usize>>,
}

/// Exact payoff discrepancy between ground-truth play and play with
/// critique-step substitutes from `model`, per episode in `episodes`.
///
/// Only critique rows change: the substituted policy keeps the ground-truth
/// opinion and post-revision rows. Under [`Regime::Single`] episode `k`
/// draws its substituted slot from stream `k` under `seed`.
pub fn evaluate_substitution(
    game: &ConsensusGame,
    population: &[Participant],
    model: CritiqueSource<'_>,
    regime: Regime,
    episodes: &[EpisodeRecord],
    seed: u64,
) -> Result<SubstitutionReport> {
    if episodes.is_empty() {
        return Err(Error::arg("no episodes to evaluate"));
    }
    let n = game.group_size();
    let init = point_mass(game.spaces.n_states(), game.question_state());
    let mechs = MechanismFamily::single(&game.spaces, game.mechanism.clone())?;
    let per_episode: Vec<(f64, f64, Vec<usize>)> = episodes
        .par_iter()
        .enumerate()
        .map(|(k, r)| {
            if r.participants.len() != n {
                return Err(Error::dim(format!("episode {} has {} participants", r.question, r.participants.len())));
            }
            let ctxs = (0..n)
                .map(|slot| CritiqueContext::from_record(r, slot, population))
                .collect::<Result<Vec<_>>>()?;
            let group: Vec<&Participant> = ctxs.iter().map(|c| c.participant).collect();
            let gt = game.ground_truth_profile(&group)?;
            let slots: Vec<usize> = match regime {
                Regime::All => (0..n).collect(),
                Regime::Single => vec![rng_for(seed, k as u64).random_range(0..n)],
            };
            let substitute = |slot: usize| -> Result<Arc<crate::policy::Policy>> {
                let base = ctxs[slot];
                let rows = (0..game.n_positions())
                    .map(|d| model(&CritiqueContext { draft: d, ..base }))
                    .collect::<Result<Vec<CritiqueDist>>>()?;
                Ok(Arc::new(game.staged_policy(slot, base.opinion, |d| rows[d].clone())?))
            };
            let tilde = match regime {
                Regime::All => substitute_all(&game.spaces, &gt, slots.iter().map(|&s| substitute(s)).collect::<Result<_>>()?)?,
                Regime::Single => substitute_single(&game.spaces, &gt, slots[0], substitute(slots[0])?)?,
            };
            let thetas: Vec<usize> = group.iter().map(|p| p.theta).collect();
            let payoff = game.payoff(&thetas)?;
            let disc = Discrepancy::new(DiscrepancyKind::MeanAbsolute, Some(slots.clone()), n)?;
            let d = payoff_discrepancy(&gt, &tilde, &game.mechanism, &init, &payoff, &disc)?;
            let qs = QFamily::from_tables(vec![QFunction::terminal(&payoff, game.spaces.n_joint_actions())])?;
            let rep = representativity(&gt, &tilde, &mechs, &qs, &init, &disc)?;
            Ok((d, rep.value, slots))
        })
        .collect::<Result<_>>()?;
    let ds: Vec<f64> = per_episode.iter().map(|e| e.0).collect();
    Ok(SubstitutionReport {
        regime,
        discrepancy: Estimate::of(&ds),
        representativity: per_episode.iter().map(|e| e.1).sum::<f64>() / per_episode.len() as f64,
        substituted: per_episode.into_iter().map(|e| e.2).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Fit on all training critiques.
    Population,
    /// Participant's own validation critiques, blended with the population model.
    Personal,
    Uniform,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Population, ModelKind::Personal, ModelKind::Uniform];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Population => "population",
            ModelKind::Personal => "personal",
            ModelKind::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Loglik,
    Winrate,
    DiscrepancySingle,
    DiscrepancyAll,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Loglik, Metric::Winrate, Metric::DiscrepancySingle, Metric::DiscrepancyAll];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Loglik => "loglik",
            Metric::Winrate => "winrate",
            Metric::DiscrepancySingle => "discrepancy-single",
            Metric::DiscrepancyAll => "discrepancy-all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub model: ModelKind,
    pub metric: Metric,
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config: ConsensusConfig,
    pub split: SplitReport,
    /// Model x metric, in [`ModelKind::ALL`] x [`Metric::ALL`] order.
    pub rows: Vec<MetricRow>,
    /// Mean representativity per model and regime, keyed `"model/regime"`.
    pub representativity: BTreeMap<String, f64>,
}

impl ExperimentReport {
    pub fn get(&self, model: ModelKind, metric: Metric) -> &MetricRow {
        self.rows
            .iter()
            .find(|r| r.model == model && r.metric == metric)
            .expect("every model and metric is reported")
    }
}

// Stream tags under the config seed; dataset streams live in `dataset`.
const SPLIT_STREAM: u64 = 4;
const WINRATE_STREAM: u64 = 5;
const SUBSTITUTION_STREAM: u64 = 6;

/// Leave-one-episode-out personal models for every validation critique,
/// keyed by (question, participant id).
pub fn fit_personal_models(
    validation: &[EpisodeRecord],
    population: &RepresentativeModel,
    alpha: f64,
    lambda: f64,
) -> Result<BTreeMap<(usize, usize), RepresentativeModel>> {
    let keys: Vec<(usize, usize, usize)> = validation
        .iter()
        .enumerate()
        .flat_map(|(k, r)| r.participants.iter().map(move |&p| (k, r.question, p)))
        .collect();
    let fitted = keys
        .par_iter()
        .map(|&(k, q, p)| {
            let others: Vec<EpisodeRecord> = validation
                .iter()
                .enumerate()
                .filter(|&(j, r)| j != k && r.participants.contains(&p))
                .map(|(_, r)| r.clone())
                .collect();
            Ok(((q, p), fit_representative(&others, p, alpha, lambda, population)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(fitted.into_iter().collect())
}

/// The train/validation split used by [`run_experiment`].
pub fn experiment_split(config: &ConsensusConfig, data: &Dataset) -> Result<SplitDataset> {
    split_dataset(data, config.val_fraction, &mut rng_for(config.seed, SPLIT_STREAM))
}

/// Generates the dataset, splits it, fits the models and computes every
/// metric. Deterministic given the config.
pub fn run_experiment(config: &ConsensusConfig) -> Result<ExperimentReport> {
    let game = build_consensus_game(config)?;
    let (data, people) = generate_dataset(config)?;
    let split = experiment_split(config, &data)?;
    let val = &split.validation.records;
    let pop_model = fit_population(&split.train.records, config.n_styles(), config.alpha)?;
    let personal = fit_personal_models(val, &pop_model, config.alpha, config.lambda)?;
    let uniform = RepresentativeModel::uniform(config.n_styles());

    let pick = |kind: ModelKind, ctx: &CritiqueContext<'_>| -> Result<CritiqueDist> {
        let m = match kind {
            ModelKind::Population => &pop_model,
            ModelKind::Uniform => &uniform,
            ModelKind::Personal => personal.get(&(ctx.question, ctx.participant.id)).ok_or_else(|| {
                Error::arg(format!("no model for participant {} on question {}", ctx.participant.id, ctx.question))
            })?,
        };
        Ok(m.critique_dist(ctx.opinion, ctx.draft))
    };
    let contexts = val
        .iter()
        .flat_map(|r| (0..r.participants.len()).map(move |s| (r, s)))
        .map(|(r, s)| CritiqueContext::from_record(r, s, &people))
        .collect::<Result<Vec<_>>>()?;
    let (k, s) = (config.n_positions, config.n_styles());
    let truth = |ctx: &CritiqueContext<'_>| Ok(ground_truth_critique(ctx.participant, ctx.draft, k, s));
    let rater = GroundTruthRater {
        n_positions: k,
        n_styles: s,
    };

    let mut rows = Vec::new();
    let mut reps = BTreeMap::new();
    for kind in ModelKind::ALL {
        let source = |ctx: &CritiqueContext<'_>| pick(kind, ctx);
        let lls = critique_logliks(val, |r, slot| {
            let ctx = CritiqueContext::from_record(r, slot, &people)?;
            pick(kind, &ctx).map(Some)
        })?;
        let mut push = |metric, e: Estimate| {
            rows.push(MetricRow {
                model: kind,
                metric,
                value: e.mean,
                std_error: e.std_error,
                n: e.n,
            })
        };
        push(Metric::Loglik, Estimate::of(&lls));
        let wr = rater_winrate(
            &source,
            &truth,
            &rater,
            &contexts,
            config.winrate_samples,
            derive_seed(config.seed, WINRATE_STREAM),
        )?;
        push(Metric::Winrate, wr);
        for (regime, metric) in [(Regime::Single, Metric::DiscrepancySingle), (Regime::All, Metric::DiscrepancyAll)] {
            let rep = evaluate_substitution(
                &game,
                &people,
                &source,
                regime,
                val,
                derive_seed(config.seed, SUBSTITUTION_STREAM),
            )?;
            push(metric, rep.discrepancy);
            let tag = match regime {
                Regime::Single => "single",
                Regime::All => "all",
            };
            reps.insert(format!("{}/{tag}", kind.name()), rep.representativity);
        }
    }
    Ok(ExperimentReport {
        config: config.clone(),
        split: split.report,
        rows,
        representativity: reps,
    })
}
