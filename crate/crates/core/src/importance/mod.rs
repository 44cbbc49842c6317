//! Feature-importance weights learned from historical labels.
//!
//! A random forest is fitted on the scaled legitimate features and each
//! feature's weight is the mean drop in held-out accuracy when that feature's
//! column is shuffled, clipped at zero and normalised to sum to one.

mod forest;
mod permutation;

pub use forest::{train_forest, train_forest_with, ForestModel, ForestParams, MaxFeatures};
pub use permutation::{permutation_drops, permutation_importance, permutation_importance_with, ImportanceConfig, ImportanceWeights};
