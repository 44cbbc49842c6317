use serde::{Deserialize, Serialize};

use super::{Dataset, Direction, Matrix};
use crate::{Error, Result};

/// Min/max of one legitimate feature as observed in the fit data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub direction: Direction,
    /// `min == max`: the feature carries no ranking information and scales to 0.
    pub degenerate: bool,
}

impl FeatureScale {
    /// Maps a raw value into `[0, 1]`, larger meaning better. Values outside
    /// the fit range are clamped.
    pub fn scale(&self, x: f64) -> f64 {
        if self.degenerate {
            return 0.0;
        }
        let z = ((x - self.min) / (self.max - self.min)).clamp(0.0, 1.0);
        match self.direction {
            Direction::Up => z,
            Direction::Down => 1.0 - z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    features: Vec<FeatureScale>,
}

/// Scaled legitimate features `Z`; every entry lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledMatrix(Matrix);

impl ScaledMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if let Some(v) = m.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("scaled value {v} outside [0, 1]")));
        }
        Ok(ScaledMatrix(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.0.column(j)
    }

    pub fn select_rows(&self, idx: &[usize]) -> ScaledMatrix {
        ScaledMatrix(self.0.select_rows(idx))
    }
}

/// Records per-feature extrema of the dataset's legitimate features.
pub fn fit_scaling(data: &Dataset) -> Result<ScalingSpec> {
    if data.is_empty() {
        return Err(Error::schema("cannot fit scaling on an empty dataset"));
    }
    let x = data.x();
    let features = data
        .features()
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let (min, max) = x
                .iter_rows()
                .map(|r| r[j])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            FeatureScale {
                name: f.name.clone(),
                min,
                max,
                direction: f.direction,
                degenerate: min == max,
            }
        })
        .collect();
    Ok(ScalingSpec { features })
}

impl ScalingSpec {
    pub fn new(features: Vec<FeatureScale>) -> Result<Self> {
        for f in &features {
            if !(f.min <= f.max) {
                return Err(Error::invalid(format!("{}: min {} > max {}", f.name, f.min, f.max)));
            }
            if f.degenerate != (f.min == f.max) {
                return Err(Error::invalid(format!("{}: inconsistent degenerate flag", f.name)));
            }
        }
        Ok(ScalingSpec { features })
    }

    pub fn features(&self) -> &[FeatureScale] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn degenerate_mask(&self) -> Vec<bool> {
        self.features.iter().map(|f| f.degenerate).collect()
    }

    /// Scales rows whose columns are in this spec's feature order.
    pub fn apply(&self, x: &Matrix) -> Result<ScaledMatrix> {
        if x.cols() != self.features.len() {
            return Err(Error::schema(format!(
                "rows have {} features, scaling spec has {}",
                x.cols(),
                self.features.len()
            )));
        }
        let mut z = Matrix::zeros(x.rows(), x.cols());
        for (i, row) in x.iter_rows().enumerate() {
            for (j, (&v, f)) in row.iter().zip(&self.features).enumerate() {
                if !v.is_finite() {
                    return Err(Error::schema(format!("{}: non-finite value {v}", f.name)));
                }
                z.set(i, j, f.scale(v));
            }
        }
        Ok(ScaledMatrix(z))
    }

    /// Scales a dataset, matching its legitimate features to this spec by name.
    pub fn apply_dataset(&self, data: &Dataset) -> Result<ScaledMatrix> {
        let names = data.feature_names();
        if let Some(extra) = names.iter().find(|n| !self.features.iter().any(|f| &f.name == *n)) {
            return Err(Error::schema(format!("unknown legitimate feature {extra:?}")));
        }
        let order = self
            .features
            .iter()
            .map(|f| {
                let j = names
                    .iter()
                    .position(|n| n == &f.name)
                    .ok_or_else(|| Error::schema(format!("missing legitimate feature {:?}", f.name)))?;
                if data.features()[j].direction != f.direction {
                    return Err(Error::schema(format!("{}: direction differs from fit data", f.name)));
                }
                Ok(j)
            })
            .collect::<Result<Vec<_>>>()?;
        let x = data.x();
        let mut reordered = Matrix::zeros(x.rows(), order.len());
        for i in 0..x.rows() {
            for (k, &j) in order.iter().enumerate() {
                reordered.set(i, k, x.get(i, j));
            }
        }
        self.apply(&reordered)
    }
}
