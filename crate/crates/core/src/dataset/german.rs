//! UCI Statlog German Credit (`german.data`) loader.
//!
//! The raw file is whitespace-separated with 20 attributes and a class column
//! (1 = good, 2 = bad). Columns are addressed by 1-based position in the
//! mapping config, which is an ordinary [`Schema`]; ordinal encodings of the
//! categorical legitimate features live there, not here.

use std::path::Path;

use super::{Dataset, Direction, Schema};
use super::io::RawTable;
use crate::{Error, Result};

/// Retained protected attributes.
pub const GERMAN_PROTECTED: [&str; 3] = ["personal status and gender", "age", "foreign worker"];

/// Retained legitimate features and their monotonic directions.
pub const GERMAN_LEGITIMATE: [(&str, Direction); 8] = [
    ("checking account status", Direction::Up),
    ("savings status", Direction::Up),
    ("property", Direction::Up),
    ("type of housing", Direction::Up),
    ("credit history", Direction::Up),
    ("credit request amount", Direction::Down),
    ("job type", Direction::Up),
    ("employment since", Direction::Up),
];

const COLUMNS: usize = 21;

fn check_mapping(mapping: &Schema) -> Result<()> {
    for name in GERMAN_PROTECTED {
        if !mapping.protected.iter().any(|c| c.name() == name) {
            return Err(Error::Config(format!("mapping does not declare protected feature {name:?}")));
        }
    }
    for (name, direction) in GERMAN_LEGITIMATE {
        let spec = mapping
            .legitimate
            .iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::Config(format!("mapping does not declare legitimate feature {name:?}")))?;
        if spec.direction != Some(direction) {
            return Err(Error::Config(format!("{name:?} must have direction {direction:?}")));
        }
    }
    let declared = mapping.protected.len() + mapping.legitimate.len();
    if declared != GERMAN_PROTECTED.len() + GERMAN_LEGITIMATE.len() {
        return Err(Error::Config(format!(
            "mapping declares {declared} features, expected {}",
            GERMAN_PROTECTED.len() + GERMAN_LEGITIMATE.len()
        )));
    }
    if mapping.label.is_none() {
        return Err(Error::Config("mapping does not declare the class column".into()));
    }
    Ok(())
}

pub fn load_german_credit(path: impl AsRef<Path>, mapping: &Schema) -> Result<Dataset> {
    check_mapping(mapping)?;
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::with_capacity(1000);
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        if cells.len() != COLUMNS {
            return Err(Error::schema(format!(
                "{}:{}: expected {COLUMNS} fields, found {}",
                path.display(),
                i + 1,
                cells.len()
            )));
        }
        rows.push(cells);
    }
    let headers = (1..=COLUMNS).map(|c| c.to_string()).collect();
    mapping.build(&RawTable { headers, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn mapping() -> Schema {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/german/mapping.toml");
        Schema::from_file(path).unwrap()
    }

    const ROWS: &str = "A11 6 A34 A43 1169 A65 A75 4 A93 A101 4 A121 67 A143 A152 2 A173 1 A192 A201 1\n\
A12 48 A32 A43 5951 A61 A73 2 A92 A101 2 A121 22 A143 A152 1 A173 1 A191 A201 2\n";

    #[test]
    fn parses_rows_with_checked_in_mapping() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(ROWS.as_bytes()).unwrap();
        let d = load_german_credit(f.path(), &mapping()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.features().len(), 8);
        assert_eq!(d.protected().len(), 3);
        let amount = d.feature_names().iter().position(|n| n == "credit request amount").unwrap();
        assert_eq!(d.features()[amount].direction, Direction::Down);
        assert_eq!(d.x().get(1, amount), 5951.0);
        assert!(d.labels().unwrap()[0].is_pos());
        assert!(!d.labels().unwrap()[1].is_pos());
    }

    #[test]
    fn malformed_row_is_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"A11 6 A34\n").unwrap();
        assert!(load_german_credit(f.path(), &mapping()).is_err());
    }

    #[test]
    fn mapping_missing_a_retained_feature_is_rejected() {
        let mut m = mapping();
        m.legitimate.retain(|c| c.name() != "property");
        let err = check_mapping(&m).unwrap_err();
        assert!(err.to_string().contains("property"));
        let mut m = mapping();
        m.legitimate
            .iter_mut()
            .find(|c| c.name() == "credit request amount")
            .unwrap()
            .direction = Some(Direction::Up);
        assert!(check_mapping(&m).is_err());
    }
}
