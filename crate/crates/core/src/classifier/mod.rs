//! One-against-one RBF support vector classification with calibrated
//! pairwise probabilities and grid-searched hyperparameters.

mod coupling;
mod grid;
mod kernel;
mod multiclass;
mod platt;
mod smo;
mod standardize;

pub use coupling::{pairwise_couple, ClassProbabilities, COUPLING_MAX_ITERATIONS, COUPLING_TOLERANCE};
pub use grid::{
    grid_search, log_grid, stratified_folds, train_with_grid_search, CvCell, GridConfig, GridSearchResult, DEFAULT_C_GRID,
    DEFAULT_FOLDS, DEFAULT_GAMMA_GRID,
};
pub use kernel::{rbf_kernel, squared_distance};
pub use multiclass::{class_pairs, fit, FitParams, MulticlassModel, PairClassifier, TrainingMetadata, CALIBRATION_FOLDS, MODEL_FORMAT};
pub use platt::{platt_fit, SigmoidCalibration, R_MIN};
pub use smo::{smo_train, solve_dual, BinarySvmModel, DualSolution, SmoParams, DEFAULT_TOLERANCE};
pub use standardize::{Standardizer, MIN_STD};
