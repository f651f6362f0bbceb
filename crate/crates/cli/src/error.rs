//! CLI error classification and exit codes.
//!
//! Exit 2: usage errors. Exit 3: data errors. Exit 4: external-generator
//! errors. Failures print one machine-readable JSON line to stderr.

use casper_core::generation::GenerationError;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    External(String),
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    pub fn data(message: impl ToString) -> Self {
        CliError::Data(message.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::External(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::External(m) => m,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::External(_) => "external",
        }
    }

    /// One-line machine-readable form.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": self.message(),
            "kind": self.kind(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

fn is_external(e: &GenerationError) -> bool {
    matches!(
        e,
        GenerationError::ExternalTimeout { .. }
            | GenerationError::ExternalProtocolError { .. }
            | GenerationError::SpawnFailed { .. }
    )
}

impl From<GenerationError> for CliError {
    fn from(e: GenerationError) -> Self {
        if is_external(&e) {
            CliError::External(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

/// Classify any error, walking the source chain so external-generator
/// failures surfaced through evaluation keep exit code 4.
pub fn classify(e: impl std::error::Error + 'static) -> CliError {
    let message = e.to_string();
    let mut source: Option<&(dyn std::error::Error + 'static)> = Some(&e);
    while let Some(current) = source {
        if let Some(generation) = current.downcast_ref::<GenerationError>() {
            if is_external(generation) {
                return CliError::External(message);
            }
        }
        source = current.source();
    }
    CliError::Data(message)
}

macro_rules! data_error_from {
    ($($ty:ty),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                crate::error::classify(e)
            }
        })*
    };
}

data_error_from!(
    casper_core::mr::MrError,
    casper_core::embedding::EmbeddingError,
    casper_core::retrieval::RetrievalError,
    casper_core::augmentation::AugmentationError,
    casper_core::dataset::DatasetError,
    casper_core::evaluation::EvalError,
    casper_core::scenarios::ScenarioError,
);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_errors_classify_by_kind() {
        let timeout = GenerationError::ExternalTimeout {
            id: "r1".into(),
            after_ms: 10,
        };
        assert_eq!(CliError::from(timeout).exit_code(), 4);
        let miss = GenerationError::LookupMiss { query: "q".into() };
        assert_eq!(CliError::from(miss).exit_code(), 3);
    }

    #[test]
    fn classification_walks_source_chains() {
        let inner = GenerationError::ExternalProtocolError {
            reason: "boom".into(),
        };
        let wrapped = casper_core::evaluation::EvalError::Example {
            id: "x".into(),
            stage: "generate",
            source: Box::new(inner),
        };
        assert_eq!(classify(wrapped).exit_code(), 4);
    }

    #[test]
    fn json_line_is_parseable() {
        let line = CliError::data("bad input").to_json_line();
        let value: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(value["kind"], "data");
        assert_eq!(value["exit_code"], 3);
    }
}
