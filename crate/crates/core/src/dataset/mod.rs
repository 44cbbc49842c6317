//! Data model, ingestion and monotonicity-aware scaling.

mod german;
mod io;
mod scaling;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use german::{load_german_credit, GERMAN_LEGITIMATE, GERMAN_PROTECTED};
pub use io::{load_csv, write_csv, ColumnSpec, ProtectedKind, Schema};
pub use scaling::{fit_scaling, FeatureScale, ScaledMatrix, ScalingSpec};

/// Outcome label. Stored as an enum so labels never get averaged by accident.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "+")]
    Pos,
    #[serde(rename = "-")]
    Neg,
}

impl Label {
    pub fn is_pos(self) -> bool {
        self == Label::Pos
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Label::Pos => "+",
            Label::Neg => "-",
        }
    }

    /// Parses the usual spellings of a binary outcome.
    pub fn parse(token: &str) -> Option<Label> {
        match token.trim().to_ascii_lowercase().as_str() {
            "+" | "1" | "pos" | "positive" | "true" | "yes" | "good" | "admitted" => Some(Label::Pos),
            "-" | "0" | "neg" | "negative" | "false" | "no" | "bad" | "rejected" => Some(Label::Neg),
            _ => None,
        }
    }
}

impl From<bool> for Label {
    fn from(positive: bool) -> Self {
        if positive {
            Label::Pos
        } else {
            Label::Neg
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureRole {
    Protected,
    Legitimate,
}

/// Whether larger raw values of a legitimate feature are beneficial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::schema(format!(
                "matrix of {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::schema(format!(
                    "row {i} has {} values, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // chunks_exact(0) panics, and a zero-width matrix still has rows
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Values of one protected attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProtectedValues {
    Numeric(Vec<f64>),
    /// `codes[i]` indexes into `levels`.
    Categorical { levels: Vec<String>, codes: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectedFeature {
    pub name: String,
    pub values: ProtectedValues,
}

impl ProtectedFeature {
    pub fn numeric(name: impl Into<String>, values: Vec<f64>) -> Self {
        ProtectedFeature {
            name: name.into(),
            values: ProtectedValues::Numeric(values),
        }
    }

    /// Builds a categorical attribute; levels are sorted so encodings are stable.
    pub fn categorical<S: AsRef<str>>(name: impl Into<String>, raw: &[S]) -> Self {
        let mut levels: Vec<String> = raw.iter().map(|s| s.as_ref().to_string()).collect();
        levels.sort();
        levels.dedup();
        Self::with_levels(name, raw, levels).expect("levels cover every value")
    }

    /// Builds a categorical attribute with a declared level order.
    pub fn with_levels<S: AsRef<str>>(
        name: impl Into<String>,
        raw: &[S],
        levels: Vec<String>,
    ) -> Result<Self> {
        let name = name.into();
        let codes = raw
            .iter()
            .map(|s| {
                levels.iter().position(|l| l == s.as_ref()).ok_or_else(|| {
                    Error::schema(format!("{name}: value {:?} is not a declared level", s.as_ref()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ProtectedFeature {
            name,
            values: ProtectedValues::Categorical { levels, codes },
        })
    }

    pub fn len(&self) -> usize {
        match &self.values {
            ProtectedValues::Numeric(v) => v.len(),
            ProtectedValues::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Categorical with more than two levels; these need the correlation ratio.
    pub fn is_multi_category(&self) -> bool {
        matches!(&self.values, ProtectedValues::Categorical { levels, .. } if levels.len() > 2)
    }

    /// Numeric view: raw values, or level codes for categorical attributes.
    pub fn as_numeric(&self) -> Vec<f64> {
        match &self.values {
            ProtectedValues::Numeric(v) => v.clone(),
            ProtectedValues::Categorical { codes, .. } => codes.iter().map(|&c| c as f64).collect(),
        }
    }

    /// Display value of observation `i` (level name or formatted number).
    pub fn value_label(&self, i: usize) -> String {
        match &self.values {
            ProtectedValues::Numeric(v) => format!("{}", v[i]),
            ProtectedValues::Categorical { levels, codes } => levels[codes[i]].clone(),
        }
    }

    fn select(&self, idx: &[usize]) -> Self {
        let values = match &self.values {
            ProtectedValues::Numeric(v) => ProtectedValues::Numeric(idx.iter().map(|&i| v[i]).collect()),
            ProtectedValues::Categorical { levels, codes } => ProtectedValues::Categorical {
                levels: levels.clone(),
                codes: idx.iter().map(|&i| codes[i]).collect(),
            },
        };
        ProtectedFeature {
            name: self.name.clone(),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegitimateFeature {
    pub name: String,
    pub direction: Direction,
}

impl LegitimateFeature {
    pub fn new(name: impl Into<String>, direction: Direction) -> Self {
        LegitimateFeature {
            name: name.into(),
            direction,
        }
    }
}

/// Protected attributes `A`, legitimate features `X` with directions, and
/// optional imperfect labels `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    ids: Vec<String>,
    protected: Vec<ProtectedFeature>,
    features: Vec<LegitimateFeature>,
    x: Matrix,
    labels: Option<Vec<Label>>,
}

impl Dataset {
    /// Validates and assembles a dataset. IDs default to `1..=N`.
    pub fn new(
        ids: Option<Vec<String>>,
        protected: Vec<ProtectedFeature>,
        features: Vec<LegitimateFeature>,
        x: Matrix,
        labels: Option<Vec<Label>>,
    ) -> Result<Self> {
        let n = x.rows();
        if n == 0 {
            return Err(Error::schema("dataset has no observations"));
        }
        if features.is_empty() {
            return Err(Error::schema("dataset has no legitimate features"));
        }
        if x.cols() != features.len() {
            return Err(Error::schema(format!(
                "{} legitimate feature names for {} columns",
                features.len(),
                x.cols()
            )));
        }
        if let Some(v) = x.as_slice().iter().find(|v| !v.is_finite()) {
            return Err(Error::schema(format!("non-finite legitimate value {v}")));
        }
        for p in &protected {
            if p.len() != n {
                return Err(Error::schema(format!(
                    "protected feature {} has {} values, expected {n}",
                    p.name,
                    p.len()
                )));
            }
            if let ProtectedValues::Numeric(v) = &p.values {
                if v.iter().any(|v| !v.is_finite()) {
                    return Err(Error::schema(format!("{}: non-finite value", p.name)));
                }
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::schema(format!("{} labels for {n} observations", l.len())));
            }
        }
        let ids = match ids {
            Some(ids) if ids.len() != n => {
                return Err(Error::schema(format!("{} ids for {n} observations", ids.len())))
            }
            Some(ids) => ids,
            None => (1..=n).map(|i| i.to_string()).collect(),
        };
        let mut seen = std::collections::HashSet::with_capacity(n);
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::schema(format!("duplicate observation id {dup:?}")));
        }
        Ok(Dataset {
            ids,
            protected,
            features,
            x,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn protected(&self) -> &[ProtectedFeature] {
        &self.protected
    }

    pub fn protected_by_name(&self, name: &str) -> Option<&ProtectedFeature> {
        self.protected.iter().find(|p| p.name == name)
    }

    pub fn features(&self) -> &[LegitimateFeature] {
        &self.features
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    /// Raw legitimate features, `N x L`.
    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    /// Labels, failing unless both classes occur.
    pub fn training_labels(&self) -> Result<&[Label]> {
        let labels = self
            .labels
            .as_deref()
            .ok_or_else(|| Error::invalid("dataset has no labels"))?;
        let pos = labels.iter().filter(|l| l.is_pos()).count();
        if pos == 0 || pos == labels.len() {
            return Err(Error::invalid("labels contain a single class"));
        }
        Ok(labels)
    }

    /// Share of positive labels, if labels are present.
    pub fn positive_share(&self) -> Option<f64> {
        let labels = self.labels.as_ref()?;
        if labels.is_empty() {
            return None;
        }
        Some(labels.iter().filter(|l| l.is_pos()).count() as f64 / labels.len() as f64)
    }

    pub fn with_labels(mut self, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::schema(format!(
                "{} labels for {} observations",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Rows `idx` in the given order. May be empty.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            protected: self.protected.iter().map(|p| p.select(idx)).collect(),
            features: self.features.clone(),
            x: self.x.select_rows(idx),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
        }
    }
}

/// Deterministic shuffle under `seed`; the first `test_size` shuffled rows
/// form the test partition. Both partitions keep the original row order.
pub fn train_test_split(data: &Dataset, test_size: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = data.len();
    if test_size >= n {
        return Err(Error::invalid(format!(
            "test size {test_size} must be smaller than N = {n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test, train) = idx.split_at_mut(test_size);
    test.sort_unstable();
    train.sort_unstable();
    Ok((data.subset(train), data.subset(test)))
}
