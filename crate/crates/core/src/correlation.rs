//! Monotonic association between protected and legitimate features.
//!
//! Binary, ordinal and numeric protected attributes use Spearman's rank
//! correlation with average ranks for ties; categorical attributes with more
//! than two levels use the correlation ratio `η`. The penalty of a
//! legitimate feature is its largest absolute association with any protected
//! attribute.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ProtectedValues, ScaledMatrix};
use crate::exec::Exec;
use crate::{Error, Result};

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    // sqrt(saa * sbb) rather than the product of roots: identical rank
    // vectors then give exactly ±1
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman's rank correlation. A constant sample yields 0.
pub fn spearman(a: &[f64], x: &[f64]) -> Result<f64> {
    if a.len() != x.len() {
        return Err(Error::invalid(format!(
            "spearman: samples of length {} and {}",
            a.len(),
            x.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::invalid("spearman: need at least two observations"));
    }
    Ok(pearson(&average_ranks(a), &average_ranks(x)))
}

/// Correlation ratio `η = sqrt(between-group SS / total SS)`, 0 when `x` is constant.
pub fn correlation_ratio<C: Ord>(categories: &[C], x: &[f64]) -> Result<f64> {
    if categories.len() != x.len() {
        return Err(Error::invalid(format!(
            "correlation ratio: samples of length {} and {}",
            categories.len(),
            x.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::invalid("correlation ratio: empty sample"));
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let total: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let mut groups: BTreeMap<&C, (f64, usize)> = BTreeMap::new();
    for (c, &v) in categories.iter().zip(x) {
        let g = groups.entry(c).or_insert((0.0, 0));
        g.0 += v;
        g.1 += 1;
    }
    let between: f64 = groups
        .values()
        .map(|&(sum, n)| n as f64 * (sum / n as f64 - mean).powi(2))
        .sum();
    Ok((between / total).sqrt().clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssociationMethod {
    Spearman,
    CorrelationRatio,
}

/// Absolute association of one (protected, legitimate) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Association {
    pub value: f64,
    pub method: AssociationMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyVector {
    pub protected: Vec<String>,
    pub features: Vec<String>,
    /// `associations[k][l]` for protected attribute `k` and legitimate feature `l`.
    pub associations: Vec<Vec<Association>>,
    /// Per legitimate feature, the maximum over protected attributes.
    pub penalties: Vec<f64>,
}

impl PenaltyVector {
    /// Long-format CSV: `protected,feature,method,association,penalty`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("protected,feature,method,association,penalty\n");
        for (k, row) in self.associations.iter().enumerate() {
            for (l, a) in row.iter().enumerate() {
                let method = match a.method {
                    AssociationMethod::Spearman => "spearman",
                    AssociationMethod::CorrelationRatio => "correlation-ratio",
                };
                out.push_str(&format!(
                    "{},{},{method},{},{}\n",
                    csv_field(&self.protected[k]),
                    csv_field(&self.features[l]),
                    a.value,
                    self.penalties[l]
                ));
            }
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Association of every legitimate feature (scaled) with every protected attribute.
pub fn penalty_vector(data: &Dataset, z: &ScaledMatrix) -> Result<PenaltyVector> {
    penalty_vector_with(data, z, Exec::default())
}

pub fn penalty_vector_with(data: &Dataset, z: &ScaledMatrix, exec: Exec) -> Result<PenaltyVector> {
    let protected = data.protected();
    if protected.is_empty() {
        return Err(Error::invalid("penalty vector needs at least one protected feature"));
    }
    if z.rows() != data.len() {
        return Err(Error::schema(format!(
            "{} scaled rows for {} observations",
            z.rows(),
            data.len()
        )));
    }
    if z.cols() != data.features().len() {
        return Err(Error::schema("scaled matrix width differs from the feature count"));
    }
    let l = z.cols();
    let columns: Vec<Vec<f64>> = (0..l).map(|j| z.column(j)).collect();
    let numeric: Vec<Vec<f64>> = protected.iter().map(|p| p.as_numeric()).collect();
    let cells = exec.map(protected.len() * l, |cell| {
        let (k, j) = (cell / l, cell % l);
        let p = &protected[k];
        if p.is_multi_category() {
            let ProtectedValues::Categorical { codes, .. } = &p.values else {
                unreachable!()
            };
            correlation_ratio(codes, &columns[j]).map(|value| Association {
                value,
                method: AssociationMethod::CorrelationRatio,
            })
        } else {
            spearman(&numeric[k], &columns[j]).map(|rho| Association {
                value: rho.abs(),
                method: AssociationMethod::Spearman,
            })
        }
    });
    let cells = cells.into_iter().collect::<Result<Vec<_>>>()?;
    let associations: Vec<Vec<Association>> = cells.chunks(l).map(<[Association]>::to_vec).collect();
    let penalties = (0..l)
        .map(|j| associations.iter().map(|row| row[j].value).fold(0.0, f64::max))
        .collect();
    Ok(PenaltyVector {
        protected: protected.iter().map(|p| p.name.clone()).collect(),
        features: data.feature_names(),
        associations,
        penalties,
    })
}
