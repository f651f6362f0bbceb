//! MTOP-style TSV ingestion into the native JSONL dataset format.
//!
//! Column indices are configurable; the defaults match the MTOP release
//! (id, intent, slots, utterance, domain, locale, decoupled MR, tokens
//! JSON). The query is the space-concatenation of the official tokens when a
//! tokens column is available, or the utterance column otherwise.

use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use casper_core::dataset::{save_jsonl, DatasetRecord};
use casper_core::mr::{ingest_raw_top, parse_mr, serialize_mr};

use crate::error::CliError;

/// Column layout of the input TSV.
#[derive(Debug, Clone)]
pub struct TsvColumns {
    pub id: Option<usize>,
    pub query: usize,
    pub domain: usize,
    pub mr: usize,
    /// Column holding `{"tokens": [...]}`; preferred over `query` when set.
    pub tokens_json: Option<usize>,
}

impl Default for TsvColumns {
    fn default() -> Self {
        Self {
            id: Some(0),
            query: 3,
            domain: 4,
            mr: 6,
            tokens_json: Some(7),
        }
    }
}

#[derive(Debug, Deserialize)]
struct TokensField {
    tokens: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestStats {
    pub records: usize,
}

/// Convert one TSV file; `raw_mr` selects MTOP-style uppercase labels
/// (otherwise the MR column must already be canonical).
pub fn convert_tsv(
    input: impl AsRef<Path>,
    output: impl AsRef<Path>,
    columns: &TsvColumns,
    raw_mr: bool,
) -> Result<IngestStats, CliError> {
    let input = input.as_ref();
    let file = std::fs::File::open(input)
        .map_err(|e| CliError::data(format!("{}: {e}", input.display())))?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let at = |message: String| CliError::data(format!("{}:{line_no}: {message}", input.display()));
        let line = line.map_err(|e| at(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let field = |col: usize, what: &str| -> Result<&str, CliError> {
            fields
                .get(col)
                .copied()
                .ok_or_else(|| at(format!("missing {what} column {col}")))
        };

        let query = match columns.tokens_json {
            Some(col) => {
                let parsed: TokensField = serde_json::from_str(field(col, "tokens")?)
                    .map_err(|e| at(format!("bad tokens JSON: {e}")))?;
                parsed.tokens.join(" ")
            }
            None => field(columns.query, "query")?.to_string(),
        };
        let mr_text = field(columns.mr, "mr")?;
        let tree = if raw_mr {
            ingest_raw_top(mr_text).map_err(|e| at(format!("bad raw MR: {e}")))?
        } else {
            parse_mr(mr_text).map_err(|e| at(format!("bad MR: {e}")))?
        };
        let id = match columns.id {
            Some(col) => field(col, "id")?.to_string(),
            None => format!("r{:06}", records.len() + 1),
        };
        records.push(DatasetRecord {
            id,
            query,
            mr: serialize_mr(&tree),
            domain: field(columns.domain, "domain")?.to_string(),
        });
    }
    save_jsonl(output, &records).map_err(CliError::data)?;
    Ok(IngestStats {
        records: records.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use casper_core::dataset::load_examples;

    #[test]
    fn converts_mtop_style_rows() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("mtop.txt");
        let output = dir.path().join("out.jsonl");
        let row = [
            "id-7",
            "IN:GET_CALL",
            "2:6:SL:CONTACT",
            "call Jack",
            "calling",
            "en",
            "[IN:GET_CALL [SL:CONTACT Jack ] ]",
            r#"{"tokens": ["call", "Jack"], "tokenSpans": []}"#,
        ]
        .join("\t");
        std::fs::write(&input, format!("{row}\n")).unwrap();
        let stats = convert_tsv(&input, &output, &TsvColumns::default(), true).unwrap();
        assert_eq!(stats.records, 1);
        let examples = load_examples(&output).unwrap();
        assert_eq!(examples[0].id, "id-7");
        assert_eq!(examples[0].query, "call Jack");
        assert_eq!(examples[0].domain, "calling");
        assert_eq!(
            casper_core::mr::serialize_mr(&examples[0].mr),
            "[IN get call = [SL contact = Jack]]"
        );
    }

    #[test]
    fn utterance_mode_and_generated_ids() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("simple.tsv");
        let output = dir.path().join("out.jsonl");
        std::fs::write(
            &input,
            "weather today\tweather\t[IN get weather = today]\n",
        )
        .unwrap();
        let columns = TsvColumns {
            id: None,
            query: 0,
            domain: 1,
            mr: 2,
            tokens_json: None,
        };
        convert_tsv(&input, &output, &columns, false).unwrap();
        let examples = load_examples(&output).unwrap();
        assert_eq!(examples[0].id, "r000001");
        assert_eq!(examples[0].query, "weather today");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("bad.tsv");
        let output = dir.path().join("out.jsonl");
        std::fs::write(&input, "q\td\t[IN broken\n").unwrap();
        let columns = TsvColumns {
            id: None,
            query: 0,
            domain: 1,
            mr: 2,
            tokens_json: None,
        };
        let err = convert_tsv(&input, &output, &columns, false).unwrap_err();
        assert!(err.message().contains(":1:"), "{}", err.message());
    }
}
