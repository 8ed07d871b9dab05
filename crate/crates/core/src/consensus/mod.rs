//! Discretized consensus-finding environment: a staged question, draft and
//! revision game, synthetic participants with ground-truth critique
//! policies, tabular critique models and their evaluation.

pub mod config;
pub mod dataset;
pub mod evaluate;
pub mod game;
pub mod model;

pub use config::ConsensusConfig;
pub use dataset::{generate_dataset, split_dataset, Dataset, EpisodeRecord, Split, SplitDataset, SplitReport};
pub use evaluate::{
    evaluate_substitution, experiment_split, fit_personal_models, run_experiment, ExperimentReport, Metric, MetricRow, ModelKind, Regime,
    SubstitutionReport,
};
pub use game::{
    build_consensus_game, draft_position, ground_truth_critique, revised_position, ConsensusGame, Critique,
    CritiqueDist, Participant, Stage,
};
pub use model::{
    fit_population, fit_representative, heldout_loglik, rater_winrate, CritiqueContext, Estimate, GroundTruthRater,
    Rater, RepresentativeModel,
};
