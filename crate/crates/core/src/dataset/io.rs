//! CSV ingestion driven by a TOML schema annotation.
//!
//! ```toml
//! id = "ID"
//! label = "Y"
//!
//! [[protected]]
//! column = "Gender"
//! kind = "categorical"
//!
//! [[legitimate]]
//! column = "GRE V"
//! direction = "up"
//! ```
//!
//! Legitimate columns may carry an ordinal `encoding` table mapping raw tokens
//! to numbers; categorical protected columns may pin their `levels` order.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Direction, Label, LegitimateFeature, Matrix, ProtectedFeature, ProtectedValues};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtectedKind {
    Numeric,
    #[default]
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    /// Header name in the source file (or 1-based position for headerless formats).
    pub column: String,
    /// Feature name used downstream; defaults to `column`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ProtectedKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoding: Option<BTreeMap<String, f64>>,
}

impl ColumnSpec {
    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or(&self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Raw token of the positive class. Without it the usual spellings
    /// (`+`/`-`, `1`/`0`, `good`/`bad`, ...) are accepted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive: Option<String>,
    #[serde(default)]
    pub protected: Vec<ColumnSpec>,
    #[serde(default)]
    pub legitimate: Vec<ColumnSpec>,
}

pub(crate) struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Schema {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    /// Schema matching the layout written by [`write_csv`].
    pub fn for_dataset(data: &Dataset) -> Self {
        Schema {
            id: Some("id".into()),
            label: data.labels().map(|_| "label".into()),
            positive: None,
            protected: data
                .protected()
                .iter()
                .map(|p| ColumnSpec {
                    column: p.name.clone(),
                    kind: Some(match p.values {
                        ProtectedValues::Numeric(_) => ProtectedKind::Numeric,
                        ProtectedValues::Categorical { .. } => ProtectedKind::Categorical,
                    }),
                    levels: match &p.values {
                        ProtectedValues::Categorical { levels, .. } => Some(levels.clone()),
                        ProtectedValues::Numeric(_) => None,
                    },
                    ..ColumnSpec::default()
                })
                .collect(),
            legitimate: data
                .features()
                .iter()
                .map(|f| ColumnSpec {
                    column: f.name.clone(),
                    direction: Some(f.direction),
                    ..ColumnSpec::default()
                })
                .collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.legitimate.is_empty() {
            return Err(Error::schema("schema declares no legitimate features"));
        }
        for c in &self.legitimate {
            if c.direction.is_none() {
                return Err(Error::schema(format!(
                    "legitimate feature {:?} has no direction (up/down)",
                    c.name()
                )));
            }
            if c.kind.is_some() || c.levels.is_some() {
                return Err(Error::schema(format!(
                    "{:?}: kind/levels apply to protected features only",
                    c.name()
                )));
            }
        }
        for c in &self.protected {
            if c.direction.is_some() || c.encoding.is_some() {
                return Err(Error::schema(format!(
                    "{:?}: direction/encoding apply to legitimate features only",
                    c.name()
                )));
            }
        }
        let mut names: Vec<&str> = self
            .protected
            .iter()
            .chain(&self.legitimate)
            .map(ColumnSpec::name)
            .collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::schema(format!("feature {:?} declared twice", w[0])));
        }
        Ok(())
    }

    pub(crate) fn build(&self, table: &RawTable) -> Result<Dataset> {
        self.validate()?;
        if table.rows.is_empty() {
            return Err(Error::schema("no data rows"));
        }
        let col = |name: &str| {
            table
                .headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::schema(format!("missing column {name:?}")))
        };
        let cells = |j: usize| table.rows.iter().map(move |r| r[j].as_str());
        let n = table.rows.len();

        let ids = match &self.id {
            Some(c) => Some(cells(col(c)?).map(|s| s.trim().to_string()).collect()),
            None => None,
        };

        let mut protected = Vec::with_capacity(self.protected.len());
        for spec in &self.protected {
            let j = col(&spec.column)?;
            let feature = match spec.kind.unwrap_or_default() {
                ProtectedKind::Numeric => {
                    let values = cells(j)
                        .enumerate()
                        .map(|(i, s)| parse_number(s, i, spec.name()))
                        .collect::<Result<Vec<_>>>()?;
                    ProtectedFeature::numeric(spec.name(), values)
                }
                ProtectedKind::Categorical => {
                    let raw: Vec<&str> = cells(j).map(str::trim).collect();
                    match &spec.levels {
                        Some(levels) => ProtectedFeature::with_levels(spec.name(), &raw, levels.clone())?,
                        None => ProtectedFeature::categorical(spec.name(), &raw),
                    }
                }
            };
            protected.push(feature);
        }

        let mut features = Vec::with_capacity(self.legitimate.len());
        let mut x = Matrix::zeros(n, self.legitimate.len());
        for (k, spec) in self.legitimate.iter().enumerate() {
            let j = col(&spec.column)?;
            for (i, s) in cells(j).enumerate() {
                let v = match &spec.encoding {
                    Some(enc) => *enc.get(s.trim()).ok_or_else(|| {
                        Error::schema(format!(
                            "row {}, column {:?}: no encoding for {:?}",
                            i + 1,
                            spec.name(),
                            s.trim()
                        ))
                    })?,
                    None => parse_number(s, i, spec.name())?,
                };
                x.set(i, k, v);
            }
            features.push(LegitimateFeature::new(spec.name(), spec.direction.expect("validated")));
        }

        let labels = match &self.label {
            Some(c) => {
                let j = col(c)?;
                let parsed = cells(j)
                    .enumerate()
                    .map(|(i, s)| {
                        let s = s.trim();
                        match &self.positive {
                            Some(p) => Ok(Label::from(s == p)),
                            None => Label::parse(s).ok_or_else(|| {
                                Error::schema(format!("row {}: unrecognised label {s:?}", i + 1))
                            }),
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(parsed)
            }
            None => None,
        };

        Dataset::new(ids, protected, features, x, labels)
    }
}

fn parse_number(s: &str, row: usize, column: &str) -> Result<f64> {
    let t = s.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::schema(format!(
            "row {}, column {column:?}: cannot parse {t:?} as a number",
            row + 1
        ))),
    }
}

/// Reads a headed CSV file into a dataset according to `schema`.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.iter().all(String::is_empty) {
        return Err(Error::schema(format!("{}: empty file", path.display())));
    }
    let rows = reader
        .records()
        .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    schema.build(&RawTable { headers, rows })
}

/// Writes `id`, protected columns, legitimate columns and `label` (`+`/`-`).
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["id".to_string()];
    header.extend(data.protected().iter().map(|p| p.name.clone()));
    header.extend(data.feature_names());
    if data.labels().is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut rec = vec![data.ids()[i].clone()];
        rec.extend(data.protected().iter().map(|p| p.value_label(i)));
        rec.extend(data.x().row(i).iter().map(|v| v.to_string()));
        if let Some(l) = data.labels() {
            rec.push(l[i].symbol().to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
