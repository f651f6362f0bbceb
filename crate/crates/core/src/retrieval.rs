//! The mutable exemplar index: cosine ranking, top-k and sampled-k exemplar
//! selection, and snapshot persistence.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Example;
use crate::embedding::{
    cosine, embed_builtin, BuiltinEmbedderSpec, EmbedderSpec, EmbeddingError, EmbeddingVector,
};
use crate::mr::{parse_mr, serialize_mr, MrTree};
use crate::scalar::Scalar;

const SNAPSHOT_MAGIC: &str = "casper-index";
const SNAPSHOT_VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("duplicate id {id:?}")]
    DuplicateId { id: String },
    #[error("no precomputed embedding for query {query:?}")]
    MissingEmbedding { query: String },
    #[error("index is empty")]
    EmptyIndex,
    #[error("no exemplars left after exclusions")]
    EmptyAfterExclusion,
    #[error("invalid retrieval config: {reason}")]
    InvalidConfig { reason: String },
    #[error("entry {id:?}: embedding dimension {found} does not match index dimension {expected}")]
    EntryDimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("entry {id:?}: field {field} must not contain tabs or newlines")]
    UnsafeField { id: String, field: &'static str },
    #[error("{path}:{line}: corrupt snapshot: {reason}")]
    CorruptSnapshot {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("snapshot version {found:?} is not supported (expected {SNAPSHOT_VERSION:?})")]
    VersionMismatch { found: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Retrieval knobs: exemplar count, geometric sampling parameter, ranked-pool
/// size, and the exact-query exclusion switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub k: usize,
    pub p: f64,
    pub cache_size: usize,
    pub exclude_exact_query: bool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k: 5,
            p: 0.5,
            cache_size: 100,
            exclude_exact_query: false,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        let fail = |reason: &str| {
            Err(RetrievalError::InvalidConfig {
                reason: reason.to_string(),
            })
        };
        if self.k == 0 {
            return fail("k must be positive");
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return fail("p must lie in (0, 1)");
        }
        if self.cache_size < self.k {
            return fail("cache_size must be at least k");
        }
        Ok(())
    }
}

/// A stored (query, MR, domain) triple with its embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry<S: Scalar> {
    pub id: String,
    pub query: String,
    pub mr: MrTree,
    pub domain: String,
    pub embedding: EmbeddingVector<S>,
}

/// A retrieved exemplar, stripped of its embedding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exemplar {
    pub id: String,
    pub query: String,
    pub mr: MrTree,
    pub domain: String,
}

impl<S: Scalar> IndexEntry<S> {
    pub fn exemplar(&self) -> Exemplar {
        Exemplar {
            id: self.id.clone(),
            query: self.query.clone(),
            mr: self.mr.clone(),
            domain: self.domain.clone(),
        }
    }
}

/// Resolves query text to an embedding.
#[derive(Debug, Clone)]
pub enum Embedder<S: Scalar> {
    Builtin(BuiltinEmbedderSpec),
    Precomputed {
        dimension: usize,
        table: HashMap<String, EmbeddingVector<S>>,
    },
}

impl<S: Scalar> Embedder<S> {
    pub fn precomputed(
        table: HashMap<String, EmbeddingVector<S>>,
    ) -> Result<Self, RetrievalError> {
        let dimension = match table.values().next() {
            Some(v) => v.dimension(),
            None => {
                return Err(RetrievalError::InvalidConfig {
                    reason: "precomputed embedding table is empty".into(),
                })
            }
        };
        Ok(Self::Precomputed { dimension, table })
    }

    pub fn dimension(&self) -> usize {
        match self {
            Embedder::Builtin(spec) => spec.dimension,
            Embedder::Precomputed { dimension, .. } => *dimension,
        }
    }

    pub fn spec(&self) -> EmbedderSpec {
        match self {
            Embedder::Builtin(spec) => EmbedderSpec::Builtin(spec.clone()),
            Embedder::Precomputed { dimension, .. } => EmbedderSpec::Precomputed {
                dimension: *dimension,
            },
        }
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector<S>, RetrievalError> {
        match self {
            Embedder::Builtin(spec) => Ok(embed_builtin(text, spec)?),
            Embedder::Precomputed { table, .. } => {
                table
                    .get(text)
                    .cloned()
                    .ok_or_else(|| RetrievalError::MissingEmbedding {
                        query: text.to_string(),
                    })
            }
        }
    }
}

/// A ranked-pool item: an entry with its cosine score against the query.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredExemplar<S: Scalar> {
    pub score: S,
    pub exemplar: Exemplar,
}

/// Entries ranked by descending cosine (ties broken by ascending id),
/// truncated to the configured cache size.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedPool<S: Scalar> {
    pub query: String,
    pub items: Vec<ScoredExemplar<S>>,
}

impl<S: Scalar> RankedPool<S> {
    /// The pool with entries whose query equals the input removed.
    pub fn excluding_exact(&self) -> RankedPool<S> {
        RankedPool {
            query: self.query.clone(),
            items: self
                .items
                .iter()
                .filter(|s| s.exemplar.query != self.query)
                .cloned()
                .collect(),
        }
    }

    fn effective(&self, config: &RetrievalConfig) -> Result<RankedPool<S>, RetrievalError> {
        let pool = if config.exclude_exact_query {
            self.excluding_exact()
        } else {
            self.clone()
        };
        if pool.items.is_empty() {
            return Err(RetrievalError::EmptyAfterExclusion);
        }
        Ok(pool)
    }
}

/// An ordered exemplar list E; `short` marks lists with fewer than k entries,
/// `short_oracle` marks oracle lists padded from (or truncated against) the
/// general pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExemplarList {
    pub items: Vec<Exemplar>,
    pub short: bool,
    pub short_oracle: bool,
}

impl ExemplarList {
    pub fn ids(&self) -> Vec<String> {
        self.items.iter().map(|e| e.id.clone()).collect()
    }
}

/// In-memory exemplar index. Reads take `&self`, mutations take `&mut self`
/// and apply atomically (they either complete or leave the index unchanged).
#[derive(Debug, Clone)]
pub struct ExemplarIndex<S: Scalar> {
    entries: Vec<IndexEntry<S>>,
    ids: HashSet<String>,
    embedder: Embedder<S>,
}

impl<S: Scalar> ExemplarIndex<S> {
    pub fn new(embedder: Embedder<S>) -> Self {
        Self {
            entries: Vec::new(),
            ids: HashSet::new(),
            embedder,
        }
    }

    /// Build an index from examples, embedding every query.
    pub fn build(examples: &[Example], embedder: Embedder<S>) -> Result<Self, RetrievalError> {
        let mut index = Self::new(embedder);
        index.add_entries(examples)?;
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.embedder.dimension()
    }

    pub fn embedder(&self) -> &Embedder<S> {
        &self.embedder
    }

    pub fn entries(&self) -> &[IndexEntry<S>] {
        &self.entries
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.ids.contains(id)
    }

    /// Entry count per domain.
    pub fn domain_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for entry in &self.entries {
            *counts.entry(entry.domain.clone()).or_insert(0) += 1;
        }
        counts
    }

    fn make_entry(&self, example: &Example) -> Result<IndexEntry<S>, RetrievalError> {
        for (field, value) in [
            ("id", &example.id),
            ("query", &example.query),
            ("domain", &example.domain),
        ] {
            if value.contains(['\t', '\n']) || value.is_empty() {
                return Err(RetrievalError::UnsafeField {
                    id: example.id.clone(),
                    field,
                });
            }
        }
        let embedding = self.embedder.embed(&example.query)?;
        if embedding.dimension() != self.dimension() {
            return Err(RetrievalError::EntryDimensionMismatch {
                id: example.id.clone(),
                expected: self.dimension(),
                found: embedding.dimension(),
            });
        }
        Ok(IndexEntry {
            id: example.id.clone(),
            query: example.query.clone(),
            mr: example.mr.clone(),
            domain: example.domain.clone(),
            embedding,
        })
    }

    /// Add entries for the given examples; fails without modifying the index
    /// if any id is duplicated or any query cannot be embedded.
    pub fn add_entries(&mut self, examples: &[Example]) -> Result<usize, RetrievalError> {
        let mut staged = Vec::with_capacity(examples.len());
        let mut staged_ids = HashSet::new();
        for example in examples {
            if self.ids.contains(&example.id) || !staged_ids.insert(example.id.clone()) {
                return Err(RetrievalError::DuplicateId {
                    id: example.id.clone(),
                });
            }
            staged.push(self.make_entry(example)?);
        }
        self.ids.extend(staged_ids);
        self.entries.extend(staged);
        Ok(examples.len())
    }

    /// Remove entries by explicit ids; ids not present are ignored.
    pub fn remove_by_ids(&mut self, ids: &[String]) -> usize {
        let targets: HashSet<&String> = ids.iter().collect();
        let before = self.entries.len();
        self.entries.retain(|e| !targets.contains(&e.id));
        self.rebuild_ids();
        before - self.entries.len()
    }

    /// Remove all entries of one domain.
    pub fn remove_by_domain(&mut self, domain: &str) -> usize {
        let before = self.entries.len();
        self.entries.retain(|e| e.domain != domain);
        self.rebuild_ids();
        before - self.entries.len()
    }

    fn rebuild_ids(&mut self) {
        self.ids = self.entries.iter().map(|e| e.id.clone()).collect();
    }

    /// Replace the whole entry set, keeping the embedder.
    pub fn swap_all(&mut self, examples: &[Example]) -> Result<usize, RetrievalError> {
        let replacement = Self::build(examples, self.embedder.clone())?;
        *self = replacement;
        Ok(self.entries.len())
    }

    /// Rewrite entry MRs in place via `f` (returning `None` leaves an entry
    /// unchanged); returns the number of entries changed.
    pub fn rewrite_mrs<F: FnMut(&MrTree) -> Option<MrTree>>(&mut self, mut f: F) -> usize {
        let mut changed = 0;
        for entry in &mut self.entries {
            if let Some(new_mr) = f(&entry.mr) {
                if new_mr != entry.mr {
                    entry.mr = new_mr;
                    changed += 1;
                }
            }
        }
        changed
    }

    /// Extend a precomputed lookup table (no-op guard for builtin indexes).
    pub fn attach_precomputed(
        &mut self,
        extra: HashMap<String, EmbeddingVector<S>>,
    ) -> Result<(), RetrievalError> {
        match &mut self.embedder {
            Embedder::Precomputed { dimension, table } => {
                for (query, vector) in extra {
                    if vector.dimension() != *dimension {
                        return Err(EmbeddingError::DimensionMismatch {
                            expected: *dimension,
                            found: vector.dimension(),
                            line: None,
                        }
                        .into());
                    }
                    table.insert(query, vector);
                }
                Ok(())
            }
            Embedder::Builtin(_) => Err(RetrievalError::InvalidConfig {
                reason: "cannot attach precomputed embeddings to a builtin-embedder index".into(),
            }),
        }
    }

    /// Rank all entries by cosine similarity to the query, descending, ties
    /// broken by ascending id; truncated to `config.cache_size`.
    pub fn rank(
        &self,
        query_text: &str,
        config: &RetrievalConfig,
    ) -> Result<RankedPool<S>, RetrievalError> {
        config.validate()?;
        if self.entries.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        let query_embedding = self.embedder.embed(query_text)?;
        let mut scored: Vec<ScoredExemplar<S>> = self
            .entries
            .iter()
            .map(|entry| {
                let score = cosine(&query_embedding, &entry.embedding)?;
                Ok(ScoredExemplar {
                    score,
                    exemplar: entry.exemplar(),
                })
            })
            .collect::<Result<_, RetrievalError>>()?;
        scored.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.exemplar.id.cmp(&b.exemplar.id))
        });
        scored.truncate(config.cache_size);
        Ok(RankedPool {
            query: query_text.to_string(),
            items: scored,
        })
    }
}

/// First k pool entries after exclusions; `short` when fewer remain.
pub fn top_k<S: Scalar>(
    pool: &RankedPool<S>,
    config: &RetrievalConfig,
) -> Result<ExemplarList, RetrievalError> {
    let effective = pool.effective(config)?;
    let items: Vec<Exemplar> = effective
        .items
        .iter()
        .take(config.k)
        .map(|s| s.exemplar.clone())
        .collect();
    Ok(ExemplarList {
        short: items.len() < config.k,
        short_oracle: false,
        items,
    })
}

/// k geometric draws without replacement: at each step the remaining pool is
/// re-indexed 1..m and entry j is drawn with probability proportional to
/// p(1-p)^(j-1). Deterministic per seed.
pub fn sampled_k<S: Scalar>(
    pool: &RankedPool<S>,
    config: &RetrievalConfig,
    seed: u64,
) -> Result<ExemplarList, RetrievalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sampled_k_with_rng(pool, config, &mut rng)
}

/// `sampled_k` driven by a caller-owned RNG, for callers that derive several
/// decisions from one seeded stream.
pub fn sampled_k_with_rng<S: Scalar>(
    pool: &RankedPool<S>,
    config: &RetrievalConfig,
    rng: &mut impl Rng,
) -> Result<ExemplarList, RetrievalError> {
    let effective = pool.effective(config)?;
    let mut remaining: Vec<&ScoredExemplar<S>> = effective.items.iter().collect();
    let mut items = Vec::with_capacity(config.k.min(remaining.len()));
    while items.len() < config.k && !remaining.is_empty() {
        let j = draw_geometric_index(remaining.len(), config.p, rng);
        items.push(remaining.remove(j).exemplar.clone());
    }
    Ok(ExemplarList {
        short: items.len() < config.k,
        short_oracle: false,
        items,
    })
}

/// Draw an index in 0..m with P(j) proportional to p(1-p)^j, normalized over
/// the m entries.
fn draw_geometric_index(m: usize, p: f64, rng: &mut impl Rng) -> usize {
    debug_assert!(m > 0);
    let q = 1.0 - p;
    let total = 1.0 - q.powi(m as i32);
    let u: f64 = rng.random::<f64>() * total;
    let mut cumulative = 0.0;
    let mut weight = p;
    for j in 0..m {
        cumulative += weight;
        if u < cumulative {
            return j;
        }
        weight *= q;
    }
    m - 1
}

/// Normalized first-draw probabilities over a pool of size m (used by tests
/// and diagnostics).
pub fn geometric_weights(m: usize, p: f64) -> Vec<f64> {
    let q = 1.0 - p;
    let total = 1.0 - q.powi(m as i32);
    (0..m).map(|j| p * q.powi(j as i32) / total).collect()
}

// ---------------------------------------------------------------------------
// Snapshots
// ---------------------------------------------------------------------------

fn format_header<S: Scalar>(embedder: &Embedder<S>) -> String {
    match embedder {
        Embedder::Builtin(spec) => {
            let mut header = format!(
                "{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION} dim={} embedder=builtin",
                spec.dimension
            );
            let default = BuiltinEmbedderSpec {
                dimension: spec.dimension,
                ..Default::default()
            };
            if *spec != default {
                header.push_str(&format!(" seed={} ngram={}", spec.seed, spec.char_ngram));
            }
            header
        }
        Embedder::Precomputed { dimension, .. } => {
            format!("{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION} dim={dimension} embedder=precomputed")
        }
    }
}

impl<S: Scalar> ExemplarIndex<S> {
    /// Write the index as a text snapshot: a header line, then one
    /// tab-separated record per entry (id, domain, query, MR, embedding).
    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<(), RetrievalError> {
        let path = path.as_ref();
        let io_err = |source| RetrievalError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = String::new();
        out.push_str(&format_header(&self.embedder));
        out.push('\n');
        for entry in &self.entries {
            let floats: Vec<String> = entry.embedding.values().iter().map(|v| v.to_string()).collect();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                entry.id,
                entry.domain,
                entry.query,
                serialize_mr(&entry.mr),
                floats.join(" ")
            ));
        }
        let mut file = std::fs::File::create(path).map_err(io_err)?;
        file.write_all(out.as_bytes()).map_err(io_err)
    }

    /// Load a snapshot written by [`save_snapshot`](Self::save_snapshot).
    ///
    /// Precomputed-embedder indexes rebuild their query lookup table from the
    /// stored entries; embeddings for novel queries must be re-attached via
    /// [`attach_precomputed`](Self::attach_precomputed).
    pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| RetrievalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let corrupt = |line: usize, reason: &str| RetrievalError::CorruptSnapshot {
            path: path.to_path_buf(),
            line,
            reason: reason.to_string(),
        };
        let mut lines = BufReader::new(file).lines().enumerate();

        let header = match lines.next() {
            Some((_, Ok(line))) => line,
            Some((_, Err(source))) => {
                return Err(RetrievalError::Io {
                    path: path.to_path_buf(),
                    source,
                })
            }
            None => return Err(corrupt(1, "empty file")),
        };
        let tokens: Vec<&str> = header.split_whitespace().collect();
        if tokens.first() != Some(&SNAPSHOT_MAGIC) {
            return Err(corrupt(1, "missing snapshot magic"));
        }
        let version = tokens.get(1).copied().unwrap_or("");
        if version != SNAPSHOT_VERSION {
            return Err(RetrievalError::VersionMismatch {
                found: version.to_string(),
            });
        }
        let mut dimension: Option<usize> = None;
        let mut kind: Option<&str> = None;
        let mut seed = crate::embedding::DEFAULT_HASH_SEED;
        let mut char_ngram = crate::embedding::DEFAULT_CHAR_NGRAM;
        for token in &tokens[2..] {
            match token.split_once('=') {
                Some(("dim", v)) => dimension = v.parse().ok(),
                Some(("embedder", v)) => kind = Some(v),
                Some(("seed", v)) => {
                    seed = v.parse().map_err(|_| corrupt(1, "bad seed in header"))?
                }
                Some(("ngram", v)) => {
                    char_ngram = v.parse().map_err(|_| corrupt(1, "bad ngram in header"))?
                }
                _ => return Err(corrupt(1, "unrecognized header field")),
            }
        }
        let dimension = dimension.ok_or_else(|| corrupt(1, "missing dim in header"))?;

        let mut entries: Vec<IndexEntry<S>> = Vec::new();
        let mut ids = HashSet::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line.map_err(|source| RetrievalError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.splitn(5, '\t').collect();
            if fields.len() != 5 {
                return Err(corrupt(line_no, "expected 5 tab-separated fields"));
            }
            let (id, domain, query, mr_text, floats) =
                (fields[0], fields[1], fields[2], fields[3], fields[4]);
            if !ids.insert(id.to_string()) {
                return Err(RetrievalError::DuplicateId { id: id.to_string() });
            }
            let mr = parse_mr(mr_text).map_err(|e| corrupt(line_no, &format!("bad MR: {e}")))?;
            let values = floats
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<S>()
                        .map_err(|_| corrupt(line_no, &format!("bad float {tok:?}")))
                })
                .collect::<Result<Vec<S>, _>>()?;
            if values.len() != dimension {
                return Err(corrupt(
                    line_no,
                    &format!("expected {dimension} floats, found {}", values.len()),
                ));
            }
            let embedding = EmbeddingVector::new(values)?;
            entries.push(IndexEntry {
                id: id.to_string(),
                query: query.to_string(),
                mr,
                domain: domain.to_string(),
                embedding,
            });
        }

        let embedder = match kind {
            Some("builtin") => Embedder::Builtin(BuiltinEmbedderSpec {
                dimension,
                seed,
                char_ngram,
            }),
            Some("precomputed") => Embedder::Precomputed {
                dimension,
                table: entries
                    .iter()
                    .map(|e| (e.query.clone(), e.embedding.clone()))
                    .collect(),
            },
            _ => return Err(corrupt(1, "missing or unknown embedder in header")),
        };
        Ok(Self {
            entries,
            ids,
            embedder,
        })
    }
}
