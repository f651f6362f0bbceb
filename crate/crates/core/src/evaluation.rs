//! Paper-style metrics and full pipeline evaluation.
//!
//! Exact match compares canonical serializations, so whitespace variants
//! from external generators are not penalized; sibling order stays
//! significant. Invalid predictions count against both accuracy metrics and
//! are reported separately as `invalid_rate`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augmentation::{build_augmented_query, AugmentationConfig};
use crate::dataset::Example;
use crate::generation::Generator;
use crate::mr::{labels_of, parse_mr, serialize_mr, template_of, MrTree, SemanticLabel};
use crate::retrieval::{top_k, ExemplarIndex, ExemplarList, RankedPool, RetrievalConfig};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("example {id} at stage {stage}: {source}")]
    Example {
        id: String,
        stage: &'static str,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

fn at_stage<'a, E: std::error::Error + Send + Sync + 'static>(
    id: &'a str,
    stage: &'static str,
) -> impl FnOnce(E) -> EvalError + 'a {
    move |source| EvalError::Example {
        id: id.to_string(),
        stage,
        source: Box::new(source),
    }
}

/// Aggregated evaluation metrics over `n` examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub exact_match: f64,
    pub template_accuracy: f64,
    pub template_recall_at_k: f64,
    pub label_coverage_at_k: f64,
    pub invalid_rate: f64,
    pub n: usize,
}

impl MetricsReport {
    pub fn from_counts(counts: &MetricCounts) -> Self {
        let n = counts.n;
        let frac = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
        Self {
            exact_match: frac(counts.exact),
            template_accuracy: frac(counts.template),
            template_recall_at_k: frac(counts.recall),
            label_coverage_at_k: frac(counts.coverage),
            invalid_rate: frac(counts.invalid),
            n,
        }
    }

    /// Aligned plain-text rendering.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let rows = [
            ("exact_match", self.exact_match),
            ("template_accuracy", self.template_accuracy),
            ("template_recall_at_k", self.template_recall_at_k),
            ("label_coverage_at_k", self.label_coverage_at_k),
            ("invalid_rate", self.invalid_rate),
        ];
        let _ = writeln!(out, "{:<22} {:>8}", "metric", "value");
        for (name, value) in rows {
            let _ = writeln!(out, "{name:<22} {value:>8.4}");
        }
        let _ = writeln!(out, "{:<22} {:>8}", "n", self.n);
        out
    }
}

/// Raw per-metric counts, mergeable across shards.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MetricCounts {
    pub exact: usize,
    pub template: usize,
    pub recall: usize,
    pub coverage: usize,
    pub invalid: usize,
    pub n: usize,
}

impl MetricCounts {
    pub fn merge(&mut self, other: &MetricCounts) {
        self.exact += other.exact;
        self.template += other.template;
        self.recall += other.recall;
        self.coverage += other.coverage;
        self.invalid += other.invalid;
        self.n += other.n;
    }
}

/// True iff `pred_text` parses and canonically equals `gold`.
pub fn exact_match(pred_text: &str, gold: &MrTree) -> bool {
    match parse_mr(pred_text) {
        Ok(pred) => serialize_mr(&pred) == serialize_mr(gold),
        Err(_) => false,
    }
}

/// True iff `pred_text` parses and its template equals `gold`'s.
pub fn template_match(pred_text: &str, gold: &MrTree) -> bool {
    match parse_mr(pred_text) {
        Ok(pred) => template_of(&pred) == template_of(gold),
        Err(_) => false,
    }
}

/// True iff one of the first k pool entries shares `gold`'s template.
pub fn template_recall_at_k<S: Scalar>(gold: &MrTree, pool: &RankedPool<S>, k: usize) -> bool {
    let gold_template = template_of(gold);
    pool.items
        .iter()
        .take(k)
        .any(|s| template_of(&s.exemplar.mr) == gold_template)
}

/// True iff all of `gold`'s labels appear among the first k pool entries.
pub fn label_coverage_at_k<S: Scalar>(gold: &MrTree, pool: &RankedPool<S>, k: usize) -> bool {
    let needed = labels_of(gold);
    let mut seen = BTreeSet::new();
    for scored in pool.items.iter().take(k) {
        seen.extend(labels_of(&scored.exemplar.mr));
    }
    needed.is_subset(&seen)
}

/// When to insert the guiding tag at evaluation time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GuidedPolicy {
    Never,
    Always,
    /// Guide whenever a retrieved exemplar MR contains a watched label.
    WatchLabels(BTreeSet<SemanticLabel>),
}

impl GuidedPolicy {
    pub fn decide(&self, exemplars: &ExemplarList) -> bool {
        match self {
            GuidedPolicy::Never => false,
            GuidedPolicy::Always => true,
            GuidedPolicy::WatchLabels(watch) => {
                crate::scenarios::guided_policy_watch(&exemplars.items, watch)
            }
        }
    }
}

/// Per-example outcome, streamable as JSONL for error analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerExampleResult {
    pub id: String,
    pub query: String,
    pub gold: String,
    pub prediction: String,
    pub exemplar_ids: Vec<String>,
    pub guided: bool,
    pub valid: bool,
    pub exact: bool,
    pub template: bool,
    pub recall_at_k: bool,
    pub coverage_at_k: bool,
}

/// An evaluation run: the aggregate report plus per-example results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub report: MetricsReport,
    pub per_example: Vec<PerExampleResult>,
}

/// Score one prediction string against a gold tree.
pub fn score_prediction(pred_text: &str, gold: &MrTree) -> (bool, bool, bool) {
    let valid = parse_mr(pred_text).is_ok();
    (valid, exact_match(pred_text, gold), template_match(pred_text, gold))
}

/// Evaluate a configured pipeline over a dataset: rank, select top-k
/// exemplars, build the augmented query (guided per policy), generate, and
/// score.
pub fn evaluate<S: Scalar>(
    examples: &[Example],
    index: &ExemplarIndex<S>,
    retrieval_config: &RetrievalConfig,
    aug_config: &AugmentationConfig,
    generator: &Generator,
    policy: &GuidedPolicy,
) -> Result<EvalOutcome, EvalError> {
    let mut counts = MetricCounts::default();
    let mut per_example = Vec::with_capacity(examples.len());
    for example in examples {
        let pool = index
            .rank(&example.query, retrieval_config)
            .map_err(at_stage(&example.id, "rank"))?;
        let effective_pool = if retrieval_config.exclude_exact_query {
            pool.excluding_exact()
        } else {
            pool
        };
        let exemplars =
            top_k(&effective_pool, &RetrievalConfig {
                exclude_exact_query: false,
                ..retrieval_config.clone()
            })
            .map_err(at_stage(&example.id, "top_k"))?;
        let guided = policy.decide(&exemplars);
        let x_plus = build_augmented_query(&example.query, &exemplars.items, guided, aug_config)
            .map_err(at_stage(&example.id, "augment"))?;
        let generated = generator
            .generate(&x_plus, aug_config)
            .map_err(at_stage(&example.id, "generate"))?;

        let (valid, exact, template) = score_prediction(&generated.output_text, &example.mr);
        let recall = template_recall_at_k(&example.mr, &effective_pool, retrieval_config.k);
        let coverage = label_coverage_at_k(&example.mr, &effective_pool, retrieval_config.k);
        counts.n += 1;
        counts.exact += exact as usize;
        counts.template += template as usize;
        counts.recall += recall as usize;
        counts.coverage += coverage as usize;
        counts.invalid += (!valid) as usize;
        per_example.push(PerExampleResult {
            id: example.id.clone(),
            query: example.query.clone(),
            gold: serialize_mr(&example.mr),
            prediction: generated.output_text,
            exemplar_ids: exemplars.ids(),
            guided,
            valid,
            exact,
            template,
            recall_at_k: recall,
            coverage_at_k: coverage,
        });
    }
    Ok(EvalOutcome {
        report: MetricsReport::from_counts(&counts),
        per_example,
    })
}
