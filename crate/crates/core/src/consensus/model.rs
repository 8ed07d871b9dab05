//! Tabular critique models, held-out likelihood and rater win-rates.

use rayon::prelude::*;
use serde::Serialize;

use super::dataset::EpisodeRecord;
use super::game::{ground_truth_critique, Critique, CritiqueDist, Participant};
use crate::error::{Error, Result};
use crate::seed::rng_for;

/// Buckets of `opinion - draft`, clamped to [-2, 2].
pub const N_BUCKETS: usize = 5;

pub fn bucket(opinion: usize, draft: usize) -> usize {
    ((opinion as i64 - draft as i64).clamp(-2, 2) + 2) as usize
}

/// Everything a critique model or rater may condition on.
#[derive(Debug, Clone, Copy)]
pub struct CritiqueContext<'a> {
    pub question: usize,
    pub participant: &'a Participant,
    pub opinion: usize,
    pub draft: usize,
}

impl<'a> CritiqueContext<'a> {
    pub fn from_record(r: &EpisodeRecord, slot: usize, population: &'a [Participant]) -> Result<Self> {
        let id = r.participants[slot];
        let participant = population
            .get(id)
            .filter(|p| p.id == id)
            .ok_or_else(|| Error::arg(format!("unknown participant id {id}")))?;
        Ok(CritiqueContext {
            question: r.question,
            participant,
            opinion: r.opinions[slot],
            draft: r.draft,
        })
    }
}

/// Raw critique counts per bucket plus style counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CritiqueCounts {
    pub direction: [[f64; 3]; N_BUCKETS],
    pub style: Vec<f64>,
}

impl CritiqueCounts {
    pub fn new(n_styles: usize) -> Self {
        CritiqueCounts {
            direction: [[0.0; 3]; N_BUCKETS],
            style: vec![0.0; n_styles],
        }
    }

    /// Counts the critiques in `records`, restricted to `participant` if given.
    pub fn collect<'r>(
        records: impl IntoIterator<Item = &'r EpisodeRecord>,
        participant: Option<usize>,
        n_styles: usize,
    ) -> Self {
        let mut c = Self::new(n_styles);
        for r in records {
            for (slot, &id) in r.participants.iter().enumerate() {
                if participant.is_some_and(|p| p != id) {
                    continue;
                }
                let cr = r.critique(slot);
                c.direction[bucket(r.opinions[slot], r.draft)][(cr.direction + 1) as usize] += 1.0;
                c.style[cr.style] += 1.0;
            }
        }
        c
    }

    pub fn total(&self) -> f64 {
        self.style.iter().sum()
    }
}

fn smoothed(counts: &[f64], alpha: f64) -> Vec<f64> {
    let z: f64 = counts.iter().sum::<f64>() + alpha * counts.len() as f64;
    counts.iter().map(|c| (c + alpha) / z).collect()
}

/// Direction table per distance bucket and a style distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepresentativeModel {
    /// `None` for the population model.
    pub participant: Option<usize>,
    pub direction: [[f64; 3]; N_BUCKETS],
    pub style: Vec<f64>,
    pub alpha: f64,
    pub lambda: f64,
}

impl RepresentativeModel {
    pub fn from_counts(c: &CritiqueCounts, alpha: f64, participant: Option<usize>) -> Self {
        RepresentativeModel {
            participant,
            direction: c.direction.map(|row| {
                let s = smoothed(&row, alpha);
                [s[0], s[1], s[2]]
            }),
            style: smoothed(&c.style, alpha),
            alpha,
            lambda: 1.0,
        }
    }

    pub fn uniform(n_styles: usize) -> Self {
        let u = CritiqueDist::uniform(n_styles);
        RepresentativeModel {
            participant: None,
            direction: [u.direction; N_BUCKETS],
            style: u.style,
            alpha: 0.0,
            lambda: 0.0,
        }
    }

    /// `lambda * self + (1 - lambda) * prior`, entrywise.
    pub fn blend(&self, prior: &RepresentativeModel, lambda: f64) -> Self {
        let mix = |a: f64, b: f64| lambda * a + (1.0 - lambda) * b;
        let mut direction = self.direction;
        for (row, prow) in direction.iter_mut().zip(&prior.direction) {
            for (a, &b) in row.iter_mut().zip(prow) {
                *a = mix(*a, b);
            }
        }
        RepresentativeModel {
            participant: self.participant,
            direction,
            style: self.style.iter().zip(&prior.style).map(|(&a, &b)| mix(a, b)).collect(),
            alpha: self.alpha,
            lambda,
        }
    }

    pub fn critique_dist(&self, opinion: usize, draft: usize) -> CritiqueDist {
        CritiqueDist {
            direction: self.direction[bucket(opinion, draft)],
            style: self.style.clone(),
        }
    }

    pub fn log_prob(&self, opinion: usize, draft: usize, c: Critique) -> f64 {
        self.critique_dist(opinion, draft).log_prob(c)
    }
}

/// Population ("vanilla") model fit on every critique in `train`.
pub fn fit_population(train: &[EpisodeRecord], n_styles: usize, alpha: f64) -> Result<RepresentativeModel> {
    if !(alpha > 0.0) {
        return Err(Error::arg("alpha must be positive"));
    }
    let c = CritiqueCounts::collect(train, None, n_styles);
    Ok(RepresentativeModel::from_counts(&c, alpha, None))
}

/// Personal model for `participant` from its critiques in `records`,
/// smoothed by `alpha` and blended with `population` at weight `lambda`.
pub fn fit_representative(
    records: &[EpisodeRecord],
    participant: usize,
    alpha: f64,
    lambda: f64,
    population: &RepresentativeModel,
) -> Result<RepresentativeModel> {
    if !(alpha > 0.0) {
        return Err(Error::arg("alpha must be positive"));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::arg(format!("lambda {lambda} outside [0, 1]")));
    }
    if !records.iter().any(|r| r.participants.contains(&participant)) {
        return Err(Error::arg(format!("unknown participant id {participant}")));
    }
    let c = CritiqueCounts::collect(records, Some(participant), population.style.len());
    Ok(RepresentativeModel::from_counts(&c, alpha, Some(participant)).blend(population, lambda))
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl Estimate {
    /// Mean and standard error of `xs`. An infinite value makes the mean
    /// infinite and the standard error undefined (NaN).
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                std_error: f64::NAN,
                n,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std_error = if !mean.is_finite() {
            f64::NAN
        } else if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Estimate { mean, std_error, n }
    }
}

/// Per-critique log-probabilities of the recorded critiques, in record and
/// slot order. `dist` may return `None` to skip a critique.
pub fn critique_logliks(
    records: &[EpisodeRecord],
    dist: impl Fn(&EpisodeRecord, usize) -> Result<Option<CritiqueDist>>,
) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for r in records {
        for slot in 0..r.participants.len() {
            if let Some(d) = dist(r, slot)? {
                out.push(d.log_prob(r.critique(slot)));
            }
        }
    }
    Ok(out)
}

/// Mean log-probability of the recorded critiques under `model`; a personal
/// model is scored only on its own participant's critiques. Impossible
/// critiques give negative infinity.
pub fn heldout_loglik(model: &RepresentativeModel, validation: &[EpisodeRecord]) -> Result<f64> {
    let lls = critique_logliks(validation, |r, slot| {
        Ok(match model.participant {
            Some(p) if r.participants[slot] != p => None,
            _ => Some(model.critique_dist(r.opinions[slot], r.draft)),
        })
    })?;
    if lls.is_empty() {
        return Err(Error::arg("no critiques to score"));
    }
    Ok(Estimate::of(&lls).mean)
}

/// Compares two critiques in a context: 1 if `a` is preferred, 0 if `b` is,
/// 0.5 on a tie.
pub trait Rater: Sync {
    fn compare(&self, ctx: &CritiqueContext<'_>, a: Critique, b: Critique) -> f64;
}

/// Prefers the critique the participant's ground-truth policy finds more likely.
#[derive(Debug, Clone, Copy)]
pub struct GroundTruthRater {
    pub n_positions: usize,
    pub n_styles: usize,
}

impl Rater for GroundTruthRater {
    fn compare(&self, ctx: &CritiqueContext<'_>, a: Critique, b: Critique) -> f64 {
        let gt = ground_truth_critique(ctx.participant, ctx.draft, self.n_positions, self.n_styles);
        let (la, lb) = (gt.log_prob(a), gt.log_prob(b));
        if la > lb {
            1.0
        } else if la < lb {
            0.0
        } else {
            0.5
        }
    }
}

/// Source of critique distributions for a context.
pub type CritiqueSource<'a> = &'a (dyn Fn(&CritiqueContext<'_>) -> Result<CritiqueDist> + Sync);

/// Fraction of `n` comparisons per context in which `rater` prefers a sample
/// of `candidate` over a sample of `baseline`. Context `k` uses its own
/// stream under `seed`, so the result does not depend on thread count.
pub fn rater_winrate(
    candidate: CritiqueSource<'_>,
    baseline: CritiqueSource<'_>,
    rater: &dyn Rater,
    contexts: &[CritiqueContext<'_>],
    n: usize,
    seed: u64,
) -> Result<Estimate> {
    if n == 0 {
        return Err(Error::arg("win-rate needs at least one comparison per context"));
    }
    if contexts.is_empty() {
        return Err(Error::arg("win-rate needs at least one context"));
    }
    let scores: Vec<Vec<f64>> = contexts
        .par_iter()
        .enumerate()
        .map(|(k, ctx)| {
            let mut rng = rng_for(seed, k as u64);
            let (cd, bd) = (candidate(ctx)?, baseline(ctx)?);
            Ok((0..n)
                .map(|_| {
                    let a = cd.sample(&mut rng);
                    let b = bd.sample(&mut rng);
                    rater.compare(ctx, a, b)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let flat: Vec<f64> = scores.into_iter().flatten().collect();
    Ok(Estimate::of(&flat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn record(opinions: Vec<usize>, draft: usize, critiques: Vec<(i8, usize)>) -> EpisodeRecord {
        EpisodeRecord {
            question: 0,
            participants: (0..opinions.len()).collect(),
            opinions,
            draft,
            critiques,
            revised: draft,
            split: None,
        }
    }

    #[test]
    fn smoothed_counts() {
        // Participant 0 at bucket 0 with directions (-1,-1,-1,0): counts (3,1,0).
        let recs: Vec<_> = [(-1, 0), (-1, 0), (-1, 1), (0, 0)]
            .into_iter()
            .map(|c| record(vec![2, 2, 2], 2, vec![c, (1, 0), (1, 0)]))
            .collect();
        let pop = fit_population(&recs, 2, 1.0).unwrap();
        let m = fit_representative(&recs, 0, 1.0, 1.0, &pop).unwrap();
        let row = m.direction[bucket(2, 2)];
        assert_abs_diff_eq!(row[0], 4.0 / 7.0, epsilon = 1e-15);
        assert_abs_diff_eq!(row[1], 2.0 / 7.0, epsilon = 1e-15);
        assert_abs_diff_eq!(row[2], 1.0 / 7.0, epsilon = 1e-15);
        // Unseen bucket is uniform.
        assert_eq!(m.direction[0], [1.0 / 3.0; 3]);
        // lambda = 0 is the population model.
        let m0 = fit_representative(&recs, 0, 1.0, 0.0, &pop).unwrap();
        assert_eq!(m0.direction, pop.direction);
        assert_eq!(m0.style, pop.style);
        assert!(fit_representative(&recs, 9, 1.0, 0.5, &pop).is_err());
    }

    #[test]
    fn loglik_reference_values() {
        let recs = vec![record(vec![1, 3, 2], 2, vec![(1, 0), (0, 1), (-1, 0)])];
        let u = RepresentativeModel::uniform(2);
        assert_abs_diff_eq!(heldout_loglik(&u, &recs).unwrap(), (1.0f64 / 6.0).ln(), epsilon = 1e-12);
        let mut point = RepresentativeModel::uniform(2);
        point.participant = Some(0);
        point.direction[bucket(1, 2)] = [0.0, 0.0, 1.0];
        point.style = vec![1.0, 0.0];
        assert_eq!(heldout_loglik(&point, &recs).unwrap(), 0.0);
        point.direction[bucket(1, 2)] = [1.0, 0.0, 0.0];
        assert_eq!(heldout_loglik(&point, &recs).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn winrate_requires_comparisons() {
        let p = Participant {
            id: 0,
            theta: 2,
            beta: 1.0,
            style_p: 0.5,
        };
        let ctx = [CritiqueContext {
            question: 0,
            participant: &p,
            opinion: 2,
            draft: 2,
        }];
        let u = |_: &CritiqueContext<'_>| Ok(CritiqueDist::uniform(2));
        let r = GroundTruthRater {
            n_positions: 5,
            n_styles: 2,
        };
        assert!(rater_winrate(&u, &u, &r, &ctx, 0, 1).is_err());
        let w = rater_winrate(&u, &u, &r, &ctx, 4000, 1).unwrap();
        assert!((w.mean - 0.5).abs() < 3.0 * 0.5 / (4000f64).sqrt());
    }
}
