//! Ranking and classification by distance to the North Star.
//!
//! The North Star is the all-ones observation in scaled feature space. The
//! penalised distance of observation `i` is `Σ ψ_l (1 - z_il)` with effective
//! weights `ψ_l = ω_l (1 - ρ̃_l)`. Observations are ranked by ascending
//! distance and the top `ν = ⌈αN⌉` receive the positive outcome; unseen
//! observations are admitted iff their distance is at most the midpoint `δ`
//! between the `ν`-th and `(ν+1)`-th fit distances.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::correlation::{csv_field, penalty_vector, PenaltyVector};
use crate::dataset::{fit_scaling, Dataset, Label, Matrix, ScaledMatrix, ScalingSpec};
use crate::importance::{permutation_importance, ImportanceConfig, ImportanceWeights};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Guards `⌈αN⌉` against products like `0.59 * 200 = 118.00000000000001`.
const CEIL_SLACK: f64 = 1e-9;

fn check_unit(z: &[f64]) -> Result<()> {
    match z.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(Error::invalid(format!("scaled value {v} outside [0, 1]"))),
        None => Ok(()),
    }
}

fn check_dims(z: &[f64], w: &[f64]) -> Result<()> {
    if z.len() != w.len() {
        return Err(Error::schema(format!(
            "observation has {} features, weights have {}",
            z.len(),
            w.len()
        )));
    }
    Ok(())
}

/// Unweighted taxicab distance to the North Star, in `[0, L]`.
pub fn distance_plain(z: &[f64]) -> Result<f64> {
    check_unit(z)?;
    Ok(z.iter().map(|v| 1.0 - v).sum())
}

/// Importance-weighted distance `Σ ω_l (1 - z_l)`.
pub fn distance_weighted(z: &[f64], omega: &[f64]) -> Result<f64> {
    check_dims(z, omega)?;
    Ok(weighted_gap(z, omega))
}

/// Penalised distance `Σ ψ_l (1 - z_l)`.
pub fn distance_penalized(z: &[f64], psi: &[f64]) -> Result<f64> {
    check_dims(z, psi)?;
    Ok(weighted_gap(z, psi))
}

/// Accumulates in feature order.
#[inline]
pub(crate) fn weighted_gap(z: &[f64], w: &[f64]) -> f64 {
    let mut d = 0.0;
    for (zl, wl) in z.iter().zip(w) {
        d += wl * (1.0 - zl);
    }
    d
}

/// `ν = ⌈αN⌉`, clamped to `[0, N]`.
pub fn cutoff(alpha: f64, n: usize) -> usize {
    ((alpha * n as f64 - CEIL_SLACK).ceil().max(0.0) as usize).min(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub importance: ImportanceConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            importance: ImportanceConfig::default(),
        }
    }
}

impl FitConfig {
    /// Smaller forests and fewer repeats; for tests and quick looks.
    pub fn fast() -> Self {
        let mut c = FitConfig::default();
        c.importance.forest.n_trees = 20;
        c.importance.n_models = 2;
        c.importance.n_permutations = 3;
        c
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Scaling, importance, penalties and the frozen effective weights, before
/// any capacity threshold is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceModel {
    pub scaling: ScalingSpec,
    pub importance: ImportanceWeights,
    pub penalties: PenaltyVector,
    /// `ψ_l = ω_l (1 - ρ̃_l)`.
    pub psi: Vec<f64>,
}

/// Scales the data, learns `ω` from its labels (or uses uniform weights when
/// importance learning is disabled) and computes `ρ̃` and `ψ`.
pub fn learn(data: &Dataset, config: &FitConfig, seed: u64) -> Result<DistanceModel> {
    let scaling = fit_scaling(data)?;
    let z = scaling.apply(data.x())?;
    let degenerate = scaling.degenerate_mask();
    let names = scaling.names();
    let importance = if config.importance.enabled {
        let labels = data.training_labels()?;
        permutation_importance(&z, labels, &names, &degenerate, &config.importance, seed)?
    } else {
        ImportanceWeights::uniform(names, &degenerate)?
    };
    let penalties = penalty_vector(data, &z)?;
    DistanceModel::new(scaling, importance, penalties)
}

impl DistanceModel {
    pub fn new(scaling: ScalingSpec, importance: ImportanceWeights, penalties: PenaltyVector) -> Result<Self> {
        let l = scaling.len();
        if importance.weights.len() != l || penalties.penalties.len() != l {
            return Err(Error::schema("importance / penalty vectors do not match the scaling spec"));
        }
        let psi: Vec<f64> = importance
            .weights
            .iter()
            .zip(&penalties.penalties)
            .map(|(w, r)| (w * (1.0 - r)).clamp(0.0, 1.0))
            .collect();
        Ok(DistanceModel {
            scaling,
            importance,
            penalties,
            psi,
        })
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn scale(&self, data: &Dataset) -> Result<ScaledMatrix> {
        self.scaling.apply_dataset(data)
    }

    pub fn distances(&self, z: &ScaledMatrix) -> Result<Vec<f64>> {
        if z.cols() != self.psi.len() {
            return Err(Error::schema("scaled rows do not match the model width"));
        }
        Ok((0..z.rows()).map(|i| weighted_gap(z.row(i), &self.psi)).collect())
    }

    /// Ranks observations by ascending distance. Equal distances are ordered
    /// by the scaled features of positively weighted features (larger first),
    /// then by original index, so a dominating observation always precedes the
    /// one it dominates even when rounding makes their distances coincide.
    pub fn rank_scaled(&self, ids: &[String], z: &ScaledMatrix) -> Result<RankedCohort> {
        if ids.len() != z.rows() {
            return Err(Error::schema("one id per scaled row required"));
        }
        let d = self.distances(z)?;
        let live: Vec<usize> = (0..self.psi.len()).filter(|&l| self.psi[l] > 0.0).collect();
        let mut order: Vec<usize> = (0..z.rows()).collect();
        order.sort_by(|&a, &b| {
            d[a].total_cmp(&d[b])
                .then_with(|| {
                    live.iter()
                        .map(|&l| z.row(b)[l].total_cmp(&z.row(a)[l]))
                        .find(|o| *o != Ordering::Equal)
                        .unwrap_or(Ordering::Equal)
                })
                .then(a.cmp(&b))
        });
        let entries = order
            .into_iter()
            .enumerate()
            .map(|(pos, i)| RankedEntry {
                id: ids[i].clone(),
                index: i,
                z: z.row(i).to_vec(),
                distance: d[i],
                position: pos + 1,
                outcome: None,
            })
            .collect();
        Ok(RankedCohort { entries })
    }

    pub fn rank(&self, data: &Dataset) -> Result<RankedCohort> {
        let z = self.scale(data)?;
        self.rank_scaled(data.ids(), &z)
    }

    /// Applies capacity `α` to the fit data: ranks, assigns the top `ν`, and
    /// derives `δ`. `α` defaults to the share of positive labels.
    pub fn threshold(&self, data: &Dataset, alpha: Option<f64>, seed: u64, config: &FitConfig) -> Result<(RankModel, RankedCohort)> {
        let alpha = match alpha {
            Some(a) => a,
            None => data
                .positive_share()
                .ok_or_else(|| Error::invalid("no capacity given and the data has no labels"))?,
        };
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("capacity α = {alpha} must lie in (0, 1)")));
        }
        let mut cohort = self.rank(data)?;
        let n = cohort.len();
        let nu = cutoff(alpha, n).max(1);
        cohort.assign_top(nu);
        let d_nu = cohort.entries[nu - 1].distance;
        let (delta, boundary_tie) = if nu < n {
            let d_next = cohort.entries[nu].distance;
            let mid = (d_nu + d_next) / 2.0;
            // the midpoint can round up onto d_next when the two are adjacent floats
            (if mid < d_next { mid } else { d_nu }, d_nu == d_next)
        } else {
            (d_nu, false)
        };
        let model = RankModel {
            format_version: FORMAT_VERSION,
            weights: self.clone(),
            alpha,
            nu,
            delta,
            metadata: FitMetadata {
                n,
                seed,
                config_hash: config.hash(),
                boundary_tie,
                crate_version: env!("CARGO_PKG_VERSION").to_string(),
            },
        };
        Ok((model, cohort))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub n: usize,
    pub seed: u64,
    pub config_hash: String,
    /// The `ν`-th and `(ν+1)`-th fit observations share a distance: the fit
    /// cohort splits them, while the `≤ δ` rule would admit both.
    pub boundary_tie: bool,
    pub crate_version: String,
}

/// Fitted, immutable ranking/classification artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankModel {
    pub format_version: u32,
    pub weights: DistanceModel,
    pub alpha: f64,
    pub nu: usize,
    pub delta: f64,
    pub metadata: FitMetadata,
}

/// Full pipeline: scale, learn `ω`, compute `ρ̃` and `ψ`, rank, cut at `⌈αN⌉`.
pub fn fit(data: &Dataset, alpha: Option<f64>, config: &FitConfig, seed: u64) -> Result<(RankModel, RankedCohort)> {
    if let Some(a) = alpha {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::invalid(format!("capacity α = {a} must lie in (0, 1)")));
        }
    } else if data.labels().is_none() {
        return Err(Error::invalid("no capacity given and the data has no labels"));
    }
    learn(data, config, seed)?.threshold(data, alpha, seed, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub distance: f64,
    pub outcome: Label,
}

impl RankModel {
    pub fn psi(&self) -> &[f64] {
        &self.weights.psi
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.weights.scaling.names()
    }

    /// `+` iff the penalised distance is at most `δ`.
    pub fn classify(&self, distance: f64) -> Label {
        Label::from(distance <= self.delta)
    }

    pub fn predict(&self, data: &Dataset) -> Result<Vec<Prediction>> {
        let z = self.weights.scale(data)?;
        let d = self.weights.distances(&z)?;
        Ok(data
            .ids()
            .iter()
            .zip(d)
            .map(|(id, distance)| Prediction {
                id: id.clone(),
                distance,
                outcome: self.classify(distance),
            })
            .collect())
    }

    /// Predicts raw rows given in the model's feature order.
    pub fn predict_rows(&self, rows: &Matrix) -> Result<Vec<Label>> {
        let z = self.weights.scaling.apply(rows)?;
        Ok(self.weights.distances(&z)?.into_iter().map(|d| self.classify(d)).collect())
    }

    /// Ranks arbitrary rows. With `alpha` the top `⌈αN⌉` are marked `+`,
    /// otherwise every row at distance at most `δ`.
    pub fn rank(&self, data: &Dataset, alpha: Option<f64>) -> Result<RankedCohort> {
        let mut cohort = self.weights.rank(data)?;
        match alpha {
            Some(a) if !(0.0..=1.0).contains(&a) => {
                return Err(Error::invalid(format!("capacity α = {a} must lie in [0, 1]")));
            }
            Some(a) => cohort.assign_top(cutoff(a, cohort.len())),
            None => {
                for e in &mut cohort.entries {
                    e.outcome = Some(self.classify(e.distance));
                }
            }
        }
        Ok(cohort)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: RankModel = serde_json::from_str(s)?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "model format version {} is not supported (expected {FORMAT_VERSION})",
                m.format_version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub id: String,
    /// Row index in the ranked dataset.
    pub index: usize,
    pub z: Vec<f64>,
    pub distance: f64,
    /// 1 = closest to the North Star.
    pub position: usize,
    pub outcome: Option<Label>,
}

/// Observations in rank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCohort {
    entries: Vec<RankedEntry>,
}

impl RankedCohort {
    pub fn entries(&self) -> &[RankedEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Marks the first `k` entries `+` and the rest `-`.
    pub fn assign_top(&mut self, k: usize) {
        for (p, e) in self.entries.iter_mut().enumerate() {
            e.outcome = Some(Label::from(p < k));
        }
    }

    pub fn admitted(&self) -> usize {
        self.entries.iter().filter(|e| e.outcome == Some(Label::Pos)).count()
    }

    /// Rank positions indexed by original row.
    pub fn positions(&self) -> Vec<usize> {
        let mut p = vec![0; self.entries.len()];
        for e in &self.entries {
            p[e.index] = e.position;
        }
        p
    }

    /// Outcomes indexed by original row, if assigned.
    pub fn outcomes(&self) -> Option<Vec<Label>> {
        let mut out = vec![Label::Neg; self.entries.len()];
        for e in &self.entries {
            out[e.index] = e.outcome?;
        }
        Some(out)
    }

    /// Scaled rows indexed by original row.
    pub fn scaled(&self) -> ScaledMatrix {
        let l = self.entries.first().map_or(0, |e| e.z.len());
        let mut m = Matrix::zeros(self.entries.len(), l);
        for e in &self.entries {
            for (j, &v) in e.z.iter().enumerate() {
                m.set(e.index, j, v);
            }
        }
        ScaledMatrix::new(m).expect("entries hold scaled values")
    }

    /// `id,distance,rank,outcome` in rank order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,distance,rank,outcome\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{}\n",
                csv_field(&e.id),
                e.distance,
                e.position,
                e.outcome.map_or("", Label::symbol)
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
