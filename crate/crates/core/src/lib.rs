//! Fair ranking-based classification.
//!
//! Legitimate features are min-max scaled so that larger is always better,
//! weighted by permutation importance learned from historical labels,
//! discounted by their association with protected features, and every
//! observation is ranked by its weighted taxicab distance to the all-ones
//! "North Star". Classification cuts that ranking at a capacity share `α`.
//!
//! The crate also ships the audit side: pairwise dominance checks,
//! meritocratic unfairness (`S`, `T`), group admission statistics, plus the
//! synthetic cohort generator, logistic-regression baselines and the sweep
//! harness used to reproduce the reference experiments.
//!
//! ```
//! use fairrank::synthgen::{sample_cohort, label_running_example, CohortSpec};
//! use fairrank::northstar::{fit, FitConfig};
//!
//! let spec = CohortSpec { n: 200, seed: 7, ..CohortSpec::default() };
//! let cohort = sample_cohort(&spec).unwrap();
//! let labelled = label_running_example(&cohort, 11).unwrap();
//! let (model, ranked) = fit(&labelled, Some(0.5), &FitConfig::fast(), 3).unwrap();
//! assert_eq!(ranked.admitted(), 100);
//! assert!(model.delta() >= 0.0);
//! ```

pub mod audit;
pub mod baselines;
pub mod correlation;
pub mod dataset;
mod error;
pub mod exec;
pub mod harness;
pub mod importance;
pub mod northstar;
pub mod seed;
pub mod synthgen;

pub use dataset::{Dataset, Direction, Label, Matrix, ScaledMatrix, ScalingSpec};
pub use error::{Error, Result};
pub use northstar::{RankModel, RankedCohort};
