//! Logistic-regression baselines: with every feature (`All`) or with the
//! protected attributes left out (`Ftu`, fairness through unawareness).

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label, ProtectedValues};
use crate::northstar::cutoff;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSubset {
    All,
    Ftu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegParams {
    /// L2 strength on the (standardised) coefficients; the intercept is free.
    pub l2: f64,
    pub max_iter: usize,
    /// Stop once every gradient component is below this.
    pub tol: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams {
            l2: 1e-3,
            max_iter: 20_000,
            tol: 1e-7,
        }
    }
}

/// One input column of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Column {
    /// Numeric protected attribute, used as is.
    ProtectedNumeric { attribute: String },
    /// Indicator of one level of a categorical protected attribute. Binary
    /// attributes get one indicator, others one per level after the first.
    ProtectedLevel { attribute: String, level: String },
    Legitimate { feature: String },
}

impl Column {
    pub fn name(&self) -> String {
        match self {
            Column::ProtectedNumeric { attribute } => attribute.clone(),
            Column::ProtectedLevel { attribute, level } => format!("{attribute}={level}"),
            Column::Legitimate { feature } => feature.clone(),
        }
    }

    pub fn is_protected(&self) -> bool {
        !matches!(self, Column::Legitimate { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub subset: FeatureSubset,
    pub columns: Vec<Column>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// Coefficients on standardised columns.
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn columns_for(data: &Dataset, subset: FeatureSubset) -> Vec<Column> {
    let mut cols = Vec::new();
    if subset == FeatureSubset::All {
        for p in data.protected() {
            match &p.values {
                ProtectedValues::Numeric(_) => cols.push(Column::ProtectedNumeric { attribute: p.name.clone() }),
                ProtectedValues::Categorical { levels, .. } => {
                    for level in levels.iter().skip(1) {
                        cols.push(Column::ProtectedLevel {
                            attribute: p.name.clone(),
                            level: level.clone(),
                        });
                    }
                }
            }
        }
    }
    for f in data.features() {
        cols.push(Column::Legitimate { feature: f.name.clone() });
    }
    cols
}

/// Raw design matrix, row-major, one row per observation.
fn encode(data: &Dataset, columns: &[Column]) -> Result<Vec<Vec<f64>>> {
    let names = data.feature_names();
    let getters = columns
        .iter()
        .map(|c| -> Result<Box<dyn Fn(usize) -> f64 + '_>> {
            match c {
                Column::ProtectedNumeric { attribute } => {
                    let v = data
                        .protected_by_name(attribute)
                        .ok_or_else(|| Error::schema(format!("missing protected attribute {attribute:?}")))?
                        .as_numeric();
                    Ok(Box::new(move |i| v[i]))
                }
                Column::ProtectedLevel { attribute, level } => {
                    let p = data
                        .protected_by_name(attribute)
                        .ok_or_else(|| Error::schema(format!("missing protected attribute {attribute:?}")))?;
                    let level = level.clone();
                    Ok(Box::new(move |i| f64::from(u8::from(p.value_label(i) == level))))
                }
                Column::Legitimate { feature } => {
                    let j = names
                        .iter()
                        .position(|n| n == feature)
                        .ok_or_else(|| Error::schema(format!("missing legitimate feature {feature:?}")))?;
                    Ok(Box::new(move |i| data.x().get(i, j)))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..data.len()).map(|i| getters.iter().map(|g| g(i)).collect()).collect())
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Mean negative log-likelihood plus `l2/2 ‖w‖²` and its gradient.
/// `params = [w_1..w_p, b]`; `y[i]` is 1 for `+`.
pub fn loss_and_gradient(params: &[f64], x: &[Vec<f64>], y: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let p = params.len() - 1;
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; p + 1];
    for (row, &yi) in x.iter().zip(y) {
        let t = params[p] + row.iter().zip(params).map(|(a, w)| a * w).sum::<f64>();
        loss += softplus(t) - yi * t;
        let r = sigmoid(t) - yi;
        for (g, a) in grad.iter_mut().zip(row) {
            *g += r * a;
        }
        grad[p] += r;
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    for k in 0..p {
        loss += 0.5 * l2 * params[k] * params[k];
        grad[k] += l2 * params[k];
    }
    (loss, grad)
}

/// Gradient descent from zero on standardised columns. Deterministic.
pub fn train_logreg(data: &Dataset, subset: FeatureSubset, params: &LogRegParams) -> Result<LogRegModel> {
    let labels = data.training_labels()?;
    let columns = columns_for(data, subset);
    if columns.is_empty() {
        return Err(Error::invalid("logistic regression needs at least one column"));
    }
    let raw = encode(data, &columns)?;
    let p = columns.len();
    let n = raw.len() as f64;
    let means: Vec<f64> = (0..p).map(|k| raw.iter().map(|r| r[k]).sum::<f64>() / n).collect();
    let scales: Vec<f64> = (0..p)
        .map(|k| {
            let sd = (raw.iter().map(|r| (r[k] - means[k]).powi(2)).sum::<f64>() / n).sqrt();
            if sd > 0.0 { sd } else { 1.0 }
        })
        .collect();
    let x: Vec<Vec<f64>> = raw
        .iter()
        .map(|r| (0..p).map(|k| (r[k] - means[k]) / scales[k]).collect())
        .collect();
    let y: Vec<f64> = labels.iter().map(|l| f64::from(u8::from(l.is_pos()))).collect();

    // the mean logistic loss on standardised columns is (p+1)/4-smooth at most
    let step = 1.0 / (0.25 * (p as f64 + 1.0) + params.l2);
    let mut w = vec![0.0; p + 1];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        let (_, g) = loss_and_gradient(&w, &x, &y, params.l2);
        if g.iter().all(|v| v.abs() < params.tol) {
            converged = true;
            break;
        }
        for (wk, gk) in w.iter_mut().zip(&g) {
            *wk -= step * gk;
        }
        iterations += 1;
    }
    let intercept = w.pop().expect("intercept");
    Ok(LogRegModel {
        subset,
        columns,
        means,
        scales,
        coef: w,
        intercept,
        iterations,
        converged,
    })
}

impl LogRegModel {
    /// Linear predictor per observation.
    pub fn scores(&self, data: &Dataset) -> Result<Vec<f64>> {
        let raw = encode(data, &self.columns)?;
        Ok(raw
            .iter()
            .map(|r| {
                self.intercept
                    + r.iter()
                        .enumerate()
                        .map(|(k, v)| self.coef[k] * (v - self.means[k]) / self.scales[k])
                        .sum::<f64>()
            })
            .collect())
    }

    pub fn predict_proba(&self, data: &Dataset) -> Result<Vec<f64>> {
        Ok(self.scores(data)?.into_iter().map(sigmoid).collect())
    }

    /// `+` iff `P(+) > 0.5`.
    pub fn predict_labels(&self, data: &Dataset) -> Result<Vec<Label>> {
        Ok(self.scores(data)?.into_iter().map(|s| Label::from(s > 0.0)).collect())
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        let labels = data.labels().ok_or_else(|| Error::invalid("dataset has no labels"))?;
        let pred = self.predict_labels(data)?;
        Ok(pred.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64)
    }

    /// Row indices from most to least likely positive.
    pub fn rank_by_probability(&self, data: &Dataset) -> Result<Vec<usize>> {
        Ok(rank_by_score(&self.scores(data)?))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

/// Descending by score (the probability is monotone in it, but saturates);
/// ties keep the original order.
pub fn rank_by_score(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Rank positions (1 = first) from an order.
pub fn positions(order: &[usize]) -> Vec<usize> {
    let mut p = vec![0; order.len()];
    for (pos, &i) in order.iter().enumerate() {
        p[i] = pos + 1;
    }
    p
}

/// The first `⌈αN⌉` rows of `order` get `+`. Outcomes are indexed by row.
pub fn label_top_alpha(order: &[usize], alpha: f64) -> Result<Vec<Label>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("α = {alpha} must lie in [0, 1]")));
    }
    let k = cutoff(alpha, order.len());
    let mut out = vec![Label::Neg; order.len()];
    for &i in &order[..k] {
        out[i] = Label::Pos;
    }
    Ok(out)
}
