use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::forest::{train_forest_with, ForestModel, ForestParams};
use crate::dataset::{Label, Matrix, ScaledMatrix};
use crate::exec::Exec;
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImportanceConfig {
    pub forest: ForestParams,
    /// Forest refits, each on a fresh stratified holdout split.
    pub n_models: usize,
    /// Shuffles of each feature per refit.
    pub n_permutations: usize,
    pub holdout_fraction: f64,
    /// Score permutations on the training rows instead of the holdout.
    pub on_training: bool,
    /// Uniform weights unless held-out accuracy beats the majority rate by this much.
    pub gate_margin: f64,
    /// `false` skips learning and uses uniform weights.
    pub enabled: bool,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        ImportanceConfig {
            forest: ForestParams::default(),
            n_models: 5,
            n_permutations: 10,
            holdout_fraction: 0.25,
            on_training: false,
            gate_margin: 0.02,
            enabled: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceWeights {
    pub features: Vec<String>,
    /// Nonnegative, summing to one; zero for constant features.
    pub weights: Vec<f64>,
    /// Standard deviation of the normalised drops across all estimates.
    pub std_devs: Vec<f64>,
    /// Uniform weights were used because the forest could not predict the labels.
    pub fallback: bool,
    /// Forest diagnostics; absent when learning was disabled.
    pub train_accuracy: Option<f64>,
    pub holdout_accuracy: Option<f64>,
    pub majority_rate: Option<f64>,
}

impl ImportanceWeights {
    /// Equal weight on every non-degenerate feature.
    pub fn uniform(features: Vec<String>, degenerate: &[bool]) -> Result<Self> {
        let live = degenerate.iter().filter(|d| !**d).count();
        if live == 0 {
            return Err(Error::invalid("every legitimate feature is constant"));
        }
        let weights = degenerate
            .iter()
            .map(|&d| if d { 0.0 } else { 1.0 / live as f64 })
            .collect();
        Ok(ImportanceWeights {
            std_devs: vec![0.0; features.len()],
            features,
            weights,
            fallback: true,
            train_accuracy: None,
            holdout_accuracy: None,
            majority_rate: None,
        })
    }
}

/// Accuracy drops from shuffling each column of `rows`, `n_permutations`
/// times per feature. `drops[l][r]` is the `r`-th drop of feature `l`.
pub fn permutation_drops<R: Rng>(
    model: &ForestModel,
    rows: &Matrix,
    labels: &[Label],
    n_permutations: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if n_permutations < 1 {
        return Err(Error::invalid("n_permutations must be at least 1"));
    }
    let base = model.accuracy(rows, labels)?;
    let mut drops = vec![Vec::with_capacity(n_permutations); rows.cols()];
    let mut shuffled = rows.clone();
    for (j, feature_drops) in drops.iter_mut().enumerate() {
        let mut column = rows.column(j);
        for _ in 0..n_permutations {
            column.shuffle(rng);
            for (i, &v) in column.iter().enumerate() {
                shuffled.set(i, j, v);
            }
            feature_drops.push(base - model.accuracy(&shuffled, labels)?);
        }
        for i in 0..rows.rows() {
            shuffled.set(i, j, rows.get(i, j));
        }
    }
    Ok(drops)
}

/// Stratified split: `fraction` of each class (rounded down) goes to the holdout.
fn stratified_holdout<R: Rng>(labels: &[Label], fraction: f64, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    for class in [Label::Pos, Label::Neg] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(rng);
        let k = (idx.len() as f64 * fraction).floor() as usize;
        let k = k.min(idx.len().saturating_sub(1));
        holdout.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    holdout.sort_unstable();
    (train, holdout)
}

struct RefitOutcome {
    drops: Vec<Vec<f64>>,
    train_accuracy: f64,
    holdout_accuracy: f64,
}

/// Learns importance weights for the columns of `z`.
///
/// `degenerate` marks constant features, which always get weight zero.
pub fn permutation_importance(
    z: &ScaledMatrix,
    labels: &[Label],
    features: &[String],
    degenerate: &[bool],
    config: &ImportanceConfig,
    seed: u64,
) -> Result<ImportanceWeights> {
    permutation_importance_with(z, labels, features, degenerate, config, seed, Exec::default())
}

pub fn permutation_importance_with(
    z: &ScaledMatrix,
    labels: &[Label],
    features: &[String],
    degenerate: &[bool],
    config: &ImportanceConfig,
    seed: u64,
    exec: Exec,
) -> Result<ImportanceWeights> {
    let l = z.cols();
    if features.len() != l || degenerate.len() != l {
        return Err(Error::schema("feature names / degenerate flags do not match Z"));
    }
    if labels.len() != z.rows() {
        return Err(Error::invalid(format!("{} labels for {} rows", labels.len(), z.rows())));
    }
    if config.n_models < 1 || config.n_permutations < 1 {
        return Err(Error::invalid("n_models and n_permutations must be at least 1"));
    }
    if !(0.0..1.0).contains(&config.holdout_fraction) {
        return Err(Error::invalid("holdout_fraction must lie in [0, 1)"));
    }
    if !config.enabled {
        return ImportanceWeights::uniform(features.to_vec(), degenerate);
    }
    let pos = labels.iter().filter(|l| l.is_pos()).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::invalid("importance learning needs both label classes"));
    }
    let majority_rate = pos.max(labels.len() - pos) as f64 / labels.len() as f64;
    let m = z.matrix();

    let refits = exec.map(config.n_models, |r| -> Result<RefitOutcome> {
        let mut rng = seed::rng(seed, seed::PERMUTATION, r as u64);
        let forest_seed = seed::derive(seed, seed::FOREST, r as u64);
        let (train, holdout) = if config.on_training || config.holdout_fraction == 0.0 {
            ((0..labels.len()).collect(), Vec::new())
        } else {
            stratified_holdout(labels, config.holdout_fraction, &mut rng)
        };
        let train_rows = m.select_rows(&train);
        let train_labels: Vec<Label> = train.iter().map(|&i| labels[i]).collect();
        let forest = train_forest_with(&train_rows, &train_labels, &config.forest, forest_seed, exec)?;
        let (eval_rows, eval_labels, holdout_accuracy) = if holdout.is_empty() {
            let oob = forest.oob_accuracy().unwrap_or(forest.train_accuracy());
            (train_rows, train_labels, oob)
        } else {
            let rows = m.select_rows(&holdout);
            let y: Vec<Label> = holdout.iter().map(|&i| labels[i]).collect();
            let acc = forest.accuracy(&rows, &y)?;
            (rows, y, acc)
        };
        let drops = permutation_drops(&forest, &eval_rows, &eval_labels, config.n_permutations, &mut rng)?;
        Ok(RefitOutcome {
            drops,
            train_accuracy: forest.train_accuracy(),
            holdout_accuracy,
        })
    });
    let refits = refits.into_iter().collect::<Result<Vec<_>>>()?;

    let models = refits.len() as f64;
    let train_accuracy = refits.iter().map(|r| r.train_accuracy).sum::<f64>() / models;
    let holdout_accuracy = refits.iter().map(|r| r.holdout_accuracy).sum::<f64>() / models;

    let estimates: Vec<Vec<f64>> = (0..l)
        .map(|j| refits.iter().flat_map(|r| r.drops[j].iter().copied()).collect())
        .collect();
    let means: Vec<f64> = estimates
        .iter()
        .zip(degenerate)
        .map(|(e, &d)| {
            if d {
                0.0
            } else {
                (e.iter().sum::<f64>() / e.len() as f64).max(0.0)
            }
        })
        .collect();
    let total: f64 = means.iter().sum();

    if holdout_accuracy < majority_rate + config.gate_margin || total <= 0.0 {
        let mut w = ImportanceWeights::uniform(features.to_vec(), degenerate)?;
        w.train_accuracy = Some(train_accuracy);
        w.holdout_accuracy = Some(holdout_accuracy);
        w.majority_rate = Some(majority_rate);
        return Ok(w);
    }

    let std_devs = estimates
        .iter()
        .zip(degenerate)
        .map(|(e, &d)| {
            if d {
                return 0.0;
            }
            let mean = e.iter().sum::<f64>() / e.len() as f64;
            let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / e.len() as f64;
            var.sqrt() / total
        })
        .collect();
    let mut weights: Vec<f64> = means.iter().map(|m| m / total).collect();
    // renormalise once more so the sum is 1 up to a single rounding
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= s);

    Ok(ImportanceWeights {
        features: features.to_vec(),
        weights,
        std_devs,
        fallback: false,
        train_accuracy: Some(train_accuracy),
        holdout_accuracy: Some(holdout_accuracy),
        majority_rate: Some(majority_rate),
    })
}
