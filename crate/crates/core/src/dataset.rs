//! Dataset records: (id, query, MR, domain) quadruples and their JSONL form.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mr::{parse_mr, serialize_mr, MrError, MrTree};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("record {id}: field {field} is empty")]
    EmptyField { id: String, field: &'static str },
    #[error("record {id}: field {field} must not contain tabs or newlines")]
    UnsafeField { id: String, field: &'static str },
    #[error("record {id}: {source}")]
    BadMr {
        id: String,
        #[source]
        source: MrError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One dataset example in wire form; `mr` is a canonical MR string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub query: String,
    pub mr: String,
    pub domain: String,
}

/// One dataset example with the MR parsed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub id: String,
    pub query: String,
    pub mr: MrTree,
    pub domain: String,
}

impl Example {
    pub fn to_record(&self) -> DatasetRecord {
        DatasetRecord {
            id: self.id.clone(),
            query: self.query.clone(),
            mr: serialize_mr(&self.mr),
            domain: self.domain.clone(),
        }
    }
}

impl DatasetRecord {
    pub fn parse(&self) -> Result<Example, DatasetError> {
        for (field, value) in [
            ("id", &self.id),
            ("query", &self.query),
            ("mr", &self.mr),
            ("domain", &self.domain),
        ] {
            if value.trim().is_empty() {
                return Err(DatasetError::EmptyField {
                    id: self.id.clone(),
                    field,
                });
            }
            if field != "mr" && value.contains(['\t', '\n']) {
                return Err(DatasetError::UnsafeField {
                    id: self.id.clone(),
                    field,
                });
            }
        }
        let mr = parse_mr(&self.mr).map_err(|source| DatasetError::BadMr {
            id: self.id.clone(),
            source,
        })?;
        Ok(Example {
            id: self.id.clone(),
            query: self.query.clone(),
            mr,
            domain: self.domain.clone(),
        })
    }
}

/// Parse a batch of records, stopping at the first bad one.
pub fn parse_records(records: &[DatasetRecord]) -> Result<Vec<Example>, DatasetError> {
    records.iter().map(DatasetRecord::parse).collect()
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| DatasetError::Json {
            path: path.to_path_buf(),
            line: idx + 1,
            source,
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn save_jsonl(path: impl AsRef<Path>, records: &[DatasetRecord]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    for record in records {
        let line = serde_json::to_string(record).expect("record serialization is infallible");
        writeln!(file, "{line}").map_err(io_err)?;
    }
    Ok(())
}

/// Parse loaded examples straight from a JSONL file.
pub fn load_examples(path: impl AsRef<Path>) -> Result<Vec<Example>, DatasetError> {
    parse_records(&load_jsonl(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let records = vec![
            DatasetRecord {
                id: "a".into(),
                query: "call mom".into(),
                mr: "[IN create call = [SL contact = mom]]".into(),
                domain: "calling".into(),
            },
            DatasetRecord {
                id: "b".into(),
                query: "weather today".into(),
                mr: "[IN get weather = today]".into(),
                domain: "weather".into(),
            },
        ];
        save_jsonl(&path, &records).unwrap();
        assert_eq!(load_jsonl(&path).unwrap(), records);
        let examples = load_examples(&path).unwrap();
        assert_eq!(examples.len(), 2);
        assert_eq!(examples[0].to_record(), records[0]);
    }

    #[test]
    fn record_validation() {
        let bad_mr = DatasetRecord {
            id: "a".into(),
            query: "q".into(),
            mr: "not an mr".into(),
            domain: "d".into(),
        };
        assert!(matches!(bad_mr.parse(), Err(DatasetError::BadMr { .. })));

        let empty = DatasetRecord {
            id: "a".into(),
            query: "".into(),
            mr: "[IN a = b]".into(),
            domain: "d".into(),
        };
        assert!(matches!(empty.parse(), Err(DatasetError::EmptyField { field: "query", .. })));

        let tabbed = DatasetRecord {
            id: "a".into(),
            query: "has\ttab".into(),
            mr: "[IN a = b]".into(),
            domain: "d".into(),
        };
        assert!(matches!(tabbed.parse(), Err(DatasetError::UnsafeField { .. })));
    }

    #[test]
    fn bad_json_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"id\":\"a\",\"query\":\"q\",\"mr\":\"[IN a = b]\",\"domain\":\"d\"}\nnot json\n").unwrap();
        assert!(matches!(
            load_jsonl(&path),
            Err(DatasetError::Json { line: 2, .. })
        ));
    }
}
