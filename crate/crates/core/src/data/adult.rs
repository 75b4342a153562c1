//! UCI ADULT ingestion.
//!
//! Rows with a `?` in any column are dropped, the eight listed attributes are kept, the
//! three protected attributes are binarized and removed from the inputs, the remaining
//! categoricals become integer codes in first-appearance order, and the rows are split
//! 75/25 under a seed.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::fairness::{binarize_protected, BinarizationRule};
use crate::matrix::Matrix;

/// Column order of the headerless UCI files.
const UCI_COLUMNS: [&str; 15] = [
    "age",
    "workclass",
    "fnlwgt",
    "education",
    "education-num",
    "marital-status",
    "occupation",
    "relationship",
    "race",
    "sex",
    "capital-gain",
    "capital-loss",
    "hours-per-week",
    "native-country",
    "income",
];

/// Model inputs: the retained attributes minus the protected ones.
pub const ADULT_FEATURES: [&str; 5] = [
    "workclass",
    "education",
    "marital-status",
    "occupation",
    "relationship",
];

pub const ADULT_PROTECTED: [&str; 3] = ["age", "race", "sex"];

const MISSING: &str = "?";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdultConfig {
    pub seed: u64,
    pub train_fraction: f64,
}

impl Default for AdultConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            train_fraction: 0.75,
        }
    }
}

/// Category codes per feature column; code = position in the list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub columns: BTreeMap<String, Vec<String>>,
}

impl Vocabulary {
    fn code(&mut self, column: &str, value: &str) -> usize {
        let cats = self.columns.entry(column.to_string()).or_default();
        match cats.iter().position(|c| c == value) {
            Some(i) => i,
            None => {
                cats.push(value.to_string());
                cats.len() - 1
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct AdultIngest {
    pub train: Dataset,
    pub test: Dataset,
    pub vocabulary: Vocabulary,
    pub rows_read: usize,
    pub rows_dropped: usize,
}

fn canonical_column(name: &str) -> String {
    let n = name.trim().to_ascii_lowercase().replace('_', "-");
    match n.as_str() {
        "gender" => "sex".into(),
        "educational-num" => "education-num".into(),
        "salary" | "class" | "target" => "income".into(),
        _ => n,
    }
}

fn parse_income(raw: &str) -> Result<u8> {
    match raw.trim().trim_end_matches('.') {
        ">50K" => Ok(1),
        "<=50K" => Ok(0),
        other => Err(Error::Data(format!("unrecognized income value '{other}'"))),
    }
}

/// Reads an ADULT file (UCI layout, header optional) into train/test datasets.
pub fn ingest_adult(path: &Path, config: &AdultConfig) -> Result<AdultIngest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Data(format!("{}: {other:?}", path.display())),
        })?;

    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let first = rec.get(0).unwrap_or("");
        // blank lines and the "|1x3 Cross validator" banner of adult.test
        if rec.iter().all(str::is_empty) || first.starts_with('|') {
            continue;
        }
        records.push(rec);
    }
    let Some(first) = records.first() else {
        return Err(Error::Data(format!("{}: no rows", path.display())));
    };

    let header_present = first.get(0).is_some_and(|f| f.parse::<f64>().is_err());
    let columns: Vec<String> = if header_present {
        first.iter().map(canonical_column).collect()
    } else {
        UCI_COLUMNS.iter().map(|s| s.to_string()).collect()
    };
    let mut required: Vec<&str> = ADULT_FEATURES.to_vec();
    required.extend(ADULT_PROTECTED);
    required.push("income");
    let missing: Vec<&str> = required
        .iter()
        .copied()
        .filter(|r| !columns.iter().any(|c| c == r))
        .collect();
    let extra: Vec<&str> = columns
        .iter()
        .map(String::as_str)
        .filter(|c| !UCI_COLUMNS.contains(c))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::Data(format!(
            "ADULT schema mismatch: missing columns [{}], unexpected columns [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }
    let index = |name: &str| columns.iter().position(|c| c == name).unwrap();
    let body = if header_present { &records[1..] } else { &records[..] };

    let mut vocabulary = Vocabulary::default();
    let mut features = Vec::new();
    let mut target = Vec::new();
    let mut raw_protected: Vec<Vec<String>> = vec![Vec::new(); ADULT_PROTECTED.len()];
    let mut dropped = 0;
    for (line, rec) in body.iter().enumerate() {
        if rec.len() != columns.len() {
            return Err(Error::Data(format!(
                "row {} has {} fields, expected {}",
                line + 1,
                rec.len(),
                columns.len()
            )));
        }
        if rec.iter().any(|f| f == MISSING || f.is_empty()) {
            dropped += 1;
            continue;
        }
        target.push(parse_income(&rec[index("income")])?);
        for name in ADULT_FEATURES {
            features.push(vocabulary.code(name, &rec[index(name)]) as f64);
        }
        for (slot, name) in raw_protected.iter_mut().zip(ADULT_PROTECTED) {
            slot.push(rec[index(name)].to_string());
        }
    }
    let n = target.len();
    if n == 0 {
        return Err(Error::Data(format!("{}: every row had missing values", path.display())));
    }
    let protected = ADULT_PROTECTED
        .iter()
        .zip(&raw_protected)
        .map(|(name, raw)| {
            let raw: Vec<&str> = raw.iter().map(String::as_str).collect();
            binarize_protected(name, &raw, &BinarizationRule::adult(name).unwrap())
        })
        .collect::<Result<Vec<_>>>()?;
    let all = Dataset::new(
        Matrix::new(n, ADULT_FEATURES.len(), features)?,
        ADULT_FEATURES.iter().map(|s| s.to_string()).collect(),
        target,
        protected,
        Split::Train,
    )?;
    let (train, test) = all.train_test_split(config.train_fraction, config.seed)?;
    Ok(AdultIngest {
        train,
        test,
        vocabulary,
        rows_read: body.len(),
        rows_dropped: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const ROWS: &str = "\
39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, Male, 2174, 0, 40, United-States, <=50K
50, Self-emp-not-inc, 83311, Bachelors, 13, Married-civ-spouse, Exec-managerial, Husband, White, Male, 0, 0, 13, United-States, <=50K
38, Private, 215646, HS-grad, 9, Divorced, Handlers-cleaners, Not-in-family, Black, Female, 0, 0, 40, ?, <=50K
53, Private, 234721, 11th, 7, Married-civ-spouse, Handlers-cleaners, Husband, Black, Male, 0, 0, 40, United-States, >50K.
28, Private, 338409, Bachelors, 13, Married-civ-spouse, Prof-specialty, Wife, Black, Female, 0, 0, 40, Cuba, <=50K
37, Private, 284582, Masters, 14, Married-civ-spouse, Exec-managerial, Wife, Amer-Indian-Eskimo, Female, 0, 0, 40, United-States, >50K
";

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn drops_missing_rows_and_removes_protected_columns() {
        let f = write(ROWS);
        let out = ingest_adult(f.path(), &AdultConfig::default()).unwrap();
        assert_eq!(out.rows_read, 6);
        assert_eq!(out.rows_dropped, 1);
        assert_eq!(out.train.len() + out.test.len(), 5);
        assert_eq!(out.train.len(), 3); // floor(0.75 * 5)
        assert_eq!(out.train.feature_names(), ADULT_FEATURES);
        for p in ADULT_PROTECTED {
            assert!(out.train.has_protected(p));
        }
        assert_eq!(out.vocabulary.columns["workclass"], ["State-gov", "Self-emp-not-inc", "Private"]);
    }

    #[test]
    fn header_is_detected() {
        let header = "age,workclass,fnlwgt,education,educational-num,marital-status,occupation,relationship,race,gender,capital-gain,capital-loss,hours-per-week,native-country,income\n";
        let with = write(&format!("{header}{ROWS}"));
        let without = write(ROWS);
        let a = ingest_adult(with.path(), &AdultConfig::default()).unwrap();
        let b = ingest_adult(without.path(), &AdultConfig::default()).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn schema_mismatch_lists_columns() {
        let f = write("age,workclass,colour\n39,Private,red\n");
        let err = ingest_adult(f.path(), &AdultConfig::default()).unwrap_err().to_string();
        assert!(err.contains("education"), "{err}");
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn unmapped_protected_value_is_named() {
        let bad = ROWS.replacen("White, Male", "Martian, Male", 1);
        let f = write(&bad);
        let err = ingest_adult(f.path(), &AdultConfig::default()).unwrap_err().to_string();
        assert!(err.contains("Martian"), "{err}");
    }
}
