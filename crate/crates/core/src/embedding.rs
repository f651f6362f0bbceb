//! Query embeddings and cosine similarity.
//!
//! Two sources of vectors: a deterministic built-in embedder (feature-hashed
//! lowercase word unigrams plus character trigrams, TF-weighted,
//! L2-normalized) and sidecar files of precomputed vectors from an external
//! sentence embedder.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{fnv1a64, Scalar};

/// Default dimension of the built-in embedder.
pub const DEFAULT_DIMENSION: usize = 512;
/// Default feature-hashing seed of the built-in embedder.
pub const DEFAULT_HASH_SEED: u64 = 17;
/// Default character n-gram order of the built-in embedder.
pub const DEFAULT_CHAR_NGRAM: usize = 3;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("dimension mismatch: expected {expected}, found {found}{}", at_line(.line))]
    DimensionMismatch {
        expected: usize,
        found: usize,
        line: Option<usize>,
    },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("non-finite value in embedding")]
    NonFinite,
    #[error("{path}: bad header {found:?} (expected \"dim=<D>\")")]
    BadHeader { path: PathBuf, found: String },
    #[error("{path}:{line}: duplicate query {query:?}")]
    DuplicateQuery {
        path: PathBuf,
        line: usize,
        query: String,
    },
    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn at_line(line: &Option<usize>) -> String {
    match line {
        Some(n) => format!(" at line {n}"),
        None => String::new(),
    }
}

/// A fixed-length vector of finite scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector<S: Scalar> {
    values: Vec<S>,
}

impl<S: Scalar> EmbeddingVector<S> {
    pub fn new(values: Vec<S>) -> Result<Self, EmbeddingError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        Ok(Self { values })
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn l2_norm(&self) -> S {
        self.values
            .iter()
            .fold(S::zero(), |acc, &v| acc + v * v)
            .sqrt()
    }
}

/// Parameters of the built-in embedder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuiltinEmbedderSpec {
    pub dimension: usize,
    pub seed: u64,
    pub char_ngram: usize,
}

impl Default for BuiltinEmbedderSpec {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_DIMENSION,
            seed: DEFAULT_HASH_SEED,
            char_ngram: DEFAULT_CHAR_NGRAM,
        }
    }
}

/// Which embedder an index was built with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSpec {
    Builtin(BuiltinEmbedderSpec),
    Precomputed { dimension: usize },
}

impl EmbedderSpec {
    pub fn dimension(&self) -> usize {
        match self {
            EmbedderSpec::Builtin(b) => b.dimension,
            EmbedderSpec::Precomputed { dimension } => *dimension,
        }
    }
}

/// Deterministic embedding of `text`: TF-weighted feature-hashed lowercase
/// word unigrams and character n-grams, L2-normalized.
pub fn embed_builtin<S: Scalar>(
    text: &str,
    spec: &BuiltinEmbedderSpec,
) -> Result<EmbeddingVector<S>, EmbeddingError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(EmbeddingError::EmptyText);
    }
    let lower = trimmed.to_lowercase();
    let seed = spec.seed.to_le_bytes();
    let mut counts = vec![0.0f64; spec.dimension];
    let mut bump = |namespace: &[u8], feature: &[u8]| {
        let h = fnv1a64(&[&seed, namespace, feature]);
        counts[(h % spec.dimension as u64) as usize] += 1.0;
    };
    for word in lower.split_whitespace() {
        bump(b"w", word.as_bytes());
    }
    if spec.char_ngram > 0 {
        let chars: Vec<char> = lower.chars().collect();
        for window in chars.windows(spec.char_ngram) {
            let gram: String = window.iter().collect();
            bump(b"c", gram.as_bytes());
        }
    }
    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(EmbeddingError::EmptyText);
    }
    let values = counts
        .iter()
        .map(|c| S::from_f64(c / norm).ok_or(EmbeddingError::NonFinite))
        .collect::<Result<Vec<S>, _>>()?;
    EmbeddingVector::new(values)
}

/// Cosine similarity in [-1, 1]; symmetric, scale-invariant.
pub fn cosine<S: Scalar>(
    u: &EmbeddingVector<S>,
    v: &EmbeddingVector<S>,
) -> Result<S, EmbeddingError> {
    if u.dimension() != v.dimension() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: u.dimension(),
            found: v.dimension(),
            line: None,
        });
    }
    let mut dot = S::zero();
    for (&a, &b) in u.values.iter().zip(v.values.iter()) {
        dot = dot + a * b;
    }
    let nu = u.l2_norm();
    let nv = v.l2_norm();
    if nu.is_zero() || nv.is_zero() {
        return Err(EmbeddingError::ZeroVector);
    }
    let c = dot / (nu * nv);
    Ok(c.min(S::one()).max(-S::one()))
}

/// Load a precomputed-embedding sidecar file.
///
/// Format: first line `dim=<D>`, then one record per line,
/// `<query text>\t<v1> <v2> ... <vD>`. Vectors are used as-is, not
/// re-normalized.
pub fn load_precomputed<S: Scalar>(
    path: impl AsRef<Path>,
) -> Result<HashMap<String, EmbeddingVector<S>>, EmbeddingError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let header = match lines.next() {
        Some((_, Ok(line))) => line,
        Some((_, Err(source))) => {
            return Err(EmbeddingError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
        None => String::new(),
    };
    let dimension: usize = header
        .strip_prefix("dim=")
        .and_then(|d| d.parse().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| EmbeddingError::BadHeader {
            path: path.to_path_buf(),
            found: header.clone(),
        })?;

    let mut out = HashMap::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|source| EmbeddingError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.is_empty() {
            continue;
        }
        let (query, rest) = line
            .split_once('\t')
            .ok_or_else(|| EmbeddingError::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                reason: "missing tab between query and values".into(),
            })?;
        let values = rest
            .split_whitespace()
            .map(|tok| {
                tok.parse::<S>()
                    .map_err(|_| EmbeddingError::MalformedLine {
                        path: path.to_path_buf(),
                        line: line_no,
                        reason: format!("bad float {tok:?}"),
                    })
            })
            .collect::<Result<Vec<S>, _>>()?;
        if values.len() != dimension {
            return Err(EmbeddingError::DimensionMismatch {
                expected: dimension,
                found: values.len(),
                line: Some(line_no),
            });
        }
        let vector = EmbeddingVector::new(values)?;
        if out.insert(query.to_string(), vector).is_some() {
            return Err(EmbeddingError::DuplicateQuery {
                path: path.to_path_buf(),
                line: line_no,
                query: query.to_string(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec() -> BuiltinEmbedderSpec {
        BuiltinEmbedderSpec::default()
    }

    #[test]
    fn builtin_is_deterministic() {
        let a = embed_builtin::<f64>("call mom", &spec()).unwrap();
        let b = embed_builtin::<f64>("call mom", &spec()).unwrap();
        assert_eq!(a, b);
        assert!((a.l2_norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn builtin_similarity_ordering() {
        // Frozen from this implementation: "call mom" shares 8 of its 8
        // features with "call mom please" (16 features) and none with
        // "weather tomorrow".
        let a = embed_builtin::<f64>("call mom", &spec()).unwrap();
        let b = embed_builtin::<f64>("call mom please", &spec()).unwrap();
        let c = embed_builtin::<f64>("weather tomorrow", &spec()).unwrap();
        let close = cosine(&a, &b).unwrap();
        let far = cosine(&a, &c).unwrap();
        assert!((close - 0.707106781187).abs() < 1e-9);
        assert!((far - 0.0).abs() < 1e-9);
        assert!(close > far);
    }

    #[test]
    fn builtin_rejects_empty_text() {
        assert!(matches!(
            embed_builtin::<f64>("", &spec()),
            Err(EmbeddingError::EmptyText)
        ));
        assert!(matches!(
            embed_builtin::<f64>("   ", &spec()),
            Err(EmbeddingError::EmptyText)
        ));
    }

    #[test]
    fn cosine_identities() {
        let v = embed_builtin::<f64>("play some jazz", &spec()).unwrap();
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-9);

        let e1 = EmbeddingVector::new(vec![1.0f64, 0.0]).unwrap();
        let e2 = EmbeddingVector::new(vec![0.0f64, 1.0]).unwrap();
        assert_eq!(cosine(&e1, &e2).unwrap(), 0.0);

        let d = EmbeddingVector::new(vec![1.0f64, 1.0]).unwrap();
        assert!((cosine(&d, &e1).unwrap() - 0.7071067).abs() < 1e-6);
    }

    #[test]
    fn cosine_rejects_mismatch_and_zero() {
        let a = EmbeddingVector::new(vec![1.0f64, 2.0]).unwrap();
        let b = EmbeddingVector::new(vec![1.0f64, 2.0, 3.0]).unwrap();
        assert!(matches!(
            cosine(&a, &b),
            Err(EmbeddingError::DimensionMismatch { .. })
        ));
        let z = EmbeddingVector::new(vec![0.0f64, 0.0]).unwrap();
        assert!(matches!(cosine(&a, &z), Err(EmbeddingError::ZeroVector)));
    }

    #[test]
    fn vectors_must_be_finite() {
        assert!(matches!(
            EmbeddingVector::new(vec![f64::NAN]),
            Err(EmbeddingError::NonFinite)
        ));
    }

    #[test]
    fn load_precomputed_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.tsv");
        std::fs::write(&path, "dim=3\ncall mom\t1 0 0\ncall dad\t0 1 0\nplay jazz\t0 0.5 0.5\n")
            .unwrap();
        let table = load_precomputed::<f64>(&path).unwrap();
        assert_eq!(table.len(), 3);
        assert_eq!(table["call mom"].values(), &[1.0, 0.0, 0.0]);
        // Vectors are used as-is, not re-normalized.
        assert!(table["play jazz"].l2_norm() < 1.0);
    }

    #[test]
    fn load_precomputed_errors() {
        let dir = tempfile::tempdir().unwrap();

        let bad_header = dir.path().join("bad_header.tsv");
        std::fs::write(&bad_header, "dimension 3\na\t1 2 3\n").unwrap();
        assert!(matches!(
            load_precomputed::<f64>(&bad_header),
            Err(EmbeddingError::BadHeader { .. })
        ));

        let mixed = dir.path().join("mixed.tsv");
        std::fs::write(&mixed, "dim=3\na\t1 0 0\nb\t1 0\n").unwrap();
        assert!(matches!(
            load_precomputed::<f64>(&mixed),
            Err(EmbeddingError::DimensionMismatch { line: Some(3), .. })
        ));

        let dup = dir.path().join("dup.tsv");
        std::fs::write(&dup, "dim=2\na\t1 0\na\t0 1\n").unwrap();
        assert!(matches!(
            load_precomputed::<f64>(&dup),
            Err(EmbeddingError::DuplicateQuery { line: 3, .. })
        ));
    }

    #[test]
    fn works_at_f32() {
        let a = embed_builtin::<f32>("call mom", &spec()).unwrap();
        assert!((a.l2_norm() - 1.0).abs() < 1e-6);
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            a in proptest::collection::vec(-10.0f64..10.0, 4),
            b in proptest::collection::vec(-10.0f64..10.0, 4),
            scale in 0.1f64..100.0,
        ) {
            let u = EmbeddingVector::new(a.clone()).unwrap();
            let v = EmbeddingVector::new(b.clone()).unwrap();
            prop_assume!(u.l2_norm() > 1e-9 && v.l2_norm() > 1e-9);
            let uv = cosine(&u, &v).unwrap();
            let vu = cosine(&v, &u).unwrap();
            prop_assert!((uv - vu).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&uv));
            let scaled = EmbeddingVector::new(a.iter().map(|x| x * scale).collect()).unwrap();
            prop_assert!((cosine(&scaled, &v).unwrap() - uv).abs() < 1e-9);
        }

        #[test]
        fn builtin_pure_function_of_text(words in proptest::collection::vec("[a-z]{1,8}", 1..6)) {
            let text = words.join(" ");
            let a = embed_builtin::<f64>(&text, &spec()).unwrap();
            let b = embed_builtin::<f64>(&text, &spec()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
