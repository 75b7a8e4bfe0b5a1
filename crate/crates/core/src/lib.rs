//! One-versus-one multiclass aggregation.
//!
//! Binary classifiers trained on class pairs produce raw scores `s_ij`. A
//! per-pair sigmoid turns them into calibrated estimates `r_ij`, which are
//! coupled into a single class-probability vector by solving a small
//! equality-constrained quadratic program through its KKT system. Voting
//! and one-vs-all baselines, metrics and a seeded benchmark live in
//! [`eval`].

pub mod calibration;
pub mod classifiers;
pub mod coupling;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod seed;
pub mod types;

pub use calibration::{
    apply_calibration, calibrate_matrix, fit_calibration, nll, platt_targets, CalibrationFitData, CalibrationSet,
    FitOptions,
};
pub use classifiers::{
    load_external_scores, refine_ova_to_ovo, score_sample, train_binary_logistic, train_multioutput,
    train_pairwise_suite, BinaryLinearClassifier, ClassifierSuite, LogisticHyper, MultiOutputModel, Provenance,
    RefineHyper,
};
pub use coupling::{
    argmax_label, build_q, kl_objective, projected_gradient_coupling, quadratic_objective, solve_coupling,
    threshold_labels, vote_label, CouplingMethod, CouplingSolution, QMatrix, VoteOutcome,
};
pub use error::{OvoError, Result};
pub use types::{
    mu, validate_scores, CalibrationParams, ClassSet, CouplingWeights, DenseScores, LabeledDataset,
    PairwiseScoreMatrix, ProbabilityVector, ScoreValidation,
};
