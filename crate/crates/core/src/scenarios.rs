//! Control-scenario harnesses: domain bootstrapping, parse guiding, and
//! schema refactoring over the shared pipeline.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augmentation::{
    build_augmented_query, build_training_instance, instance_seed, make_oracle_exemplars,
    make_training_data, AugmentationConfig, AugmentationError, OracleExemplars, TrainingInstance,
};
use crate::dataset::Example;
use crate::evaluation::{
    evaluate, label_coverage_at_k, score_prediction, EvalError, EvalOutcome,
    GuidedPolicy, MetricCounts, MetricsReport, PerExampleResult,
};
use crate::generation::Generator;
use crate::mr::{
    preprocess_raw_label, serialize_mr, tree_contains_any_label, MrChild, MrNode, MrTree,
    SemanticLabel,
};
use crate::retrieval::{
    Embedder, Exemplar, ExemplarIndex, ExemplarList, RetrievalConfig, RetrievalError,
};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("domain {domain:?} does not occur in the dataset")]
    UnknownDomain { domain: String },
    #[error("domain {domain:?} has no training examples")]
    EmptyNewDomain { domain: String },
    #[error("mapping would change node kind: {from} -> {to}")]
    KindMismatch { from: String, to: String },
    #[error("mapping line {line}: {reason}")]
    MappingParse { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario requires {what}")]
    MissingInput { what: &'static str },
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Augmentation(#[from] AugmentationError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

// ---------------------------------------------------------------------------
// Domain splits
// ---------------------------------------------------------------------------

/// Train/dev partition around one bootstrapped domain, plus the sampled
/// support set.
#[derive(Debug, Clone)]
pub struct DomainSplit {
    pub new_domain: String,
    pub o_train: Vec<Example>,
    pub n_train: Vec<Example>,
    pub o_dev: Vec<Example>,
    pub n_dev: Vec<Example>,
    pub n_sup: Vec<Example>,
    pub seed: u64,
}

/// Partition train/dev by domain and sample the support set: `sup_size`
/// examples drawn from the new domain's training data (clamped to its size),
/// deterministically per seed.
pub fn split_by_domain(
    train: &[Example],
    dev: &[Example],
    new_domain: &str,
    sup_size: usize,
    seed: u64,
) -> Result<DomainSplit, ScenarioError> {
    let occurs = train
        .iter()
        .chain(dev.iter())
        .any(|e| e.domain == new_domain);
    if !occurs {
        return Err(ScenarioError::UnknownDomain {
            domain: new_domain.to_string(),
        });
    }
    let partition = |examples: &[Example]| -> (Vec<Example>, Vec<Example>) {
        examples
            .iter()
            .cloned()
            .partition(|e| e.domain != new_domain)
    };
    let (o_train, n_train) = partition(train);
    let (o_dev, n_dev) = partition(dev);
    if n_train.is_empty() {
        return Err(ScenarioError::EmptyNewDomain {
            domain: new_domain.to_string(),
        });
    }

    let take = sup_size.min(n_train.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n_train.len()).collect();
    // Partial Fisher-Yates: the first `take` positions are the sample.
    for i in 0..take {
        let j = rng.random_range(i..indices.len());
        indices.swap(i, j);
    }
    let mut chosen: Vec<usize> = indices[..take].to_vec();
    chosen.sort_unstable();
    let n_sup = chosen.iter().map(|&i| n_train[i].clone()).collect();

    Ok(DomainSplit {
        new_domain: new_domain.to_string(),
        o_train,
        n_train,
        o_dev,
        n_dev,
        n_sup,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMode {
    Seen,
    Unseen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Test,
}

/// Index contents for a bootstrap phase: seen-bootstrap always indexes
/// O_train plus the support set; unseen-bootstrap adds the support set only
/// at test time.
pub fn bootstrap_index<S: Scalar>(
    split: &DomainSplit,
    mode: BootstrapMode,
    phase: Phase,
    embedder: &Embedder<S>,
) -> Result<ExemplarIndex<S>, ScenarioError> {
    let mut examples: Vec<Example> = split.o_train.clone();
    let include_sup = match (mode, phase) {
        (BootstrapMode::Seen, _) => true,
        (BootstrapMode::Unseen, Phase::Test) => true,
        (BootstrapMode::Unseen, Phase::Train) => false,
    };
    if include_sup {
        examples.extend(split.n_sup.iter().cloned());
    }
    Ok(ExemplarIndex::build(&examples, embedder.clone())?)
}

/// Training data for a bootstrap setting. Seen-bootstrap draws each
/// instance's source example from O_train or N_sup with equal probability;
/// unseen-bootstrap trains on O_train only.
pub fn bootstrap_training_data<S: Scalar>(
    split: &DomainSplit,
    mode: BootstrapMode,
    index: &ExemplarIndex<S>,
    retrieval_config: &RetrievalConfig,
    aug_config: &AugmentationConfig,
    seed: u64,
) -> Result<Vec<TrainingInstance>, ScenarioError> {
    match mode {
        BootstrapMode::Unseen => Ok(make_training_data(
            &split.o_train,
            index,
            retrieval_config,
            aug_config,
            seed,
        )?),
        BootstrapMode::Seen => {
            retrieval_config.validate().map_err(AugmentationError::from)?;
            aug_config.validate()?;
            let total =
                aug_config.lists_per_example * (split.o_train.len() + split.n_sup.len());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pools = BTreeMap::new();
            let mut out = Vec::with_capacity(total);
            for i in 0..total {
                let source = if rng.random::<f64>() < 0.5 {
                    &split.o_train
                } else {
                    &split.n_sup
                };
                let example = &source[rng.random_range(0..source.len())];
                if !pools.contains_key(&example.id) {
                    let pool = index
                        .rank(&example.query, retrieval_config)
                        .map_err(AugmentationError::from)?;
                    pools.insert(example.id.clone(), pool);
                }
                let instance = build_training_instance(
                    example,
                    &pools[&example.id],
                    retrieval_config,
                    aug_config,
                    instance_seed(seed, &example.id, i),
                )?;
                out.push(instance);
            }
            Ok(out)
        }
    }
}

// ---------------------------------------------------------------------------
// Label mappings (schema refactoring)
// ---------------------------------------------------------------------------

/// Total mapping between semantic labels, kind-preserving; carries the watch
/// set of all labels involved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMapping {
    pairs: BTreeMap<SemanticLabel, SemanticLabel>,
}

impl LabelMapping {
    pub fn from_pairs(
        pairs: impl IntoIterator<Item = (SemanticLabel, SemanticLabel)>,
    ) -> Result<Self, ScenarioError> {
        let mut map = BTreeMap::new();
        for (from, to) in pairs {
            if from.kind != to.kind {
                return Err(ScenarioError::KindMismatch {
                    from: from.raw(),
                    to: to.raw(),
                });
            }
            map.insert(from, to);
        }
        Ok(Self { pairs: map })
    }

    /// Parse the mapping file format: one `OLD_RAW_LABEL<TAB>NEW_RAW_LABEL`
    /// pair per line, `#` comments allowed.
    pub fn parse_tsv(text: &str) -> Result<Self, ScenarioError> {
        let mut pairs = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (old_raw, new_raw) =
                line.split_once('\t')
                    .ok_or_else(|| ScenarioError::MappingParse {
                        line: line_no,
                        reason: "expected OLD_RAW_LABEL<TAB>NEW_RAW_LABEL".into(),
                    })?;
            let parse = |raw: &str| -> Result<SemanticLabel, ScenarioError> {
                let (kind, words) =
                    preprocess_raw_label(raw.trim()).map_err(|e| ScenarioError::MappingParse {
                        line: line_no,
                        reason: e.to_string(),
                    })?;
                Ok(SemanticLabel { kind, words })
            };
            pairs.push((parse(old_raw)?, parse(new_raw)?));
        }
        Self::from_pairs(pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_tsv(&text)
    }

    pub fn target_for(&self, label: &SemanticLabel) -> Option<&SemanticLabel> {
        self.pairs.get(label)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// All labels involved on either side of the mapping.
    pub fn watch_labels(&self) -> BTreeSet<SemanticLabel> {
        self.pairs
            .iter()
            .flat_map(|(from, to)| [from.clone(), to.clone()])
            .collect()
    }
}

/// Replace every mapped node label; structure and tokens unchanged. Returns
/// the rewritten tree and the number of node labels replaced.
pub fn apply_label_mapping(mr: &MrTree, mapping: &LabelMapping) -> (MrTree, usize) {
    fn conv(node: &MrNode, mapping: &LabelMapping, replaced: &mut usize) -> MrNode {
        let label = match mapping.target_for(&node.semantic_label()) {
            Some(target) => {
                *replaced += 1;
                target.words.clone()
            }
            None => node.label.clone(),
        };
        MrNode {
            kind: node.kind,
            label,
            children: node
                .children
                .iter()
                .map(|c| match c {
                    MrChild::Node(n) => MrChild::Node(conv(n, mapping, replaced)),
                    MrChild::Token(t) => MrChild::Token(t.clone()),
                })
                .collect(),
        }
    }
    let mut replaced = 0;
    let tree = MrTree::new(conv(&mr.root, mapping, &mut replaced));
    (tree, replaced)
}

/// Counts reported by a refactoring pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefactorStats {
    pub entries_changed: usize,
    pub labels_replaced: usize,
}

/// Apply a label mapping across a dataset.
pub fn refactor_dataset(examples: &[Example], mapping: &LabelMapping) -> (Vec<Example>, RefactorStats) {
    let mut stats = RefactorStats::default();
    let refactored = examples
        .iter()
        .map(|example| {
            let (mr, replaced) = apply_label_mapping(&example.mr, mapping);
            if replaced > 0 {
                stats.entries_changed += 1;
                stats.labels_replaced += replaced;
            }
            Example {
                mr,
                ..example.clone()
            }
        })
        .collect();
    (refactored, stats)
}

/// Apply a label mapping across an index's stored MRs, in place.
pub fn refactor_index<S: Scalar>(
    index: &mut ExemplarIndex<S>,
    mapping: &LabelMapping,
) -> RefactorStats {
    let mut labels_replaced = 0;
    let entries_changed = index.rewrite_mrs(|mr| {
        let (tree, replaced) = apply_label_mapping(mr, mapping);
        if replaced > 0 {
            labels_replaced += replaced;
            Some(tree)
        } else {
            None
        }
    });
    RefactorStats {
        entries_changed,
        labels_replaced,
    }
}

/// True iff any exemplar MR contains any watched label.
pub fn guided_policy_watch(exemplars: &[Exemplar], watch_labels: &BTreeSet<SemanticLabel>) -> bool {
    exemplars
        .iter()
        .any(|e| tree_contains_any_label(&e.mr, watch_labels))
}

// ---------------------------------------------------------------------------
// Oracle evaluation sets
// ---------------------------------------------------------------------------

/// An example with a predefined exemplar list whose MRs all share the gold
/// template.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleEvalItem {
    pub id: String,
    pub query: String,
    pub exemplars: ExemplarList,
    pub gold: MrTree,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleEvalSet {
    pub items: Vec<OracleEvalItem>,
    /// Examples dropped because no same-template exemplar exists.
    pub dropped: usize,
}

/// Build the oracle evaluation set: per example, the highest-ranked
/// same-template exemplars (strictly same-template, never padded); examples
/// with no same-template entry are dropped and counted.
pub fn build_oracle_eval_set<S: Scalar>(
    examples: &[Example],
    index: &ExemplarIndex<S>,
    retrieval_config: &RetrievalConfig,
) -> Result<OracleEvalSet, ScenarioError> {
    let mut items = Vec::new();
    let mut dropped = 0;
    for example in examples {
        let pool = index.rank(&example.query, retrieval_config)?;
        match make_oracle_exemplars(
            example,
            &pool,
            retrieval_config.k,
            retrieval_config.exclude_exact_query,
            false,
        ) {
            OracleExemplars::Available(exemplars) => items.push(OracleEvalItem {
                id: example.id.clone(),
                query: example.query.clone(),
                exemplars,
                gold: example.mr.clone(),
            }),
            OracleExemplars::Unavailable => dropped += 1,
        }
    }
    Ok(OracleEvalSet { items, dropped })
}

/// Evaluate a generator over a predefined oracle evaluation set, with or
/// without the guiding tag.
pub fn evaluate_oracle_set(
    set: &OracleEvalSet,
    aug_config: &AugmentationConfig,
    generator: &Generator,
    guided: bool,
) -> Result<EvalOutcome, ScenarioError> {
    let mut counts = MetricCounts::default();
    let mut per_example = Vec::with_capacity(set.items.len());
    for item in &set.items {
        let x_plus = build_augmented_query(&item.query, &item.exemplars.items, guided, aug_config)?;
        let generated = generator
            .generate(&x_plus, aug_config)
            .map_err(|source| EvalError::Example {
                id: item.id.clone(),
                stage: "generate",
                source: Box::new(source),
            })?;
        let (valid, exact, template) = score_prediction(&generated.output_text, &item.gold);
        // Every exemplar shares the gold template, so recall is true by
        // construction; coverage still depends on the exemplar labels.
        let recall = true;
        let coverage = {
            let pool = crate::retrieval::RankedPool {
                query: item.query.clone(),
                items: item
                    .exemplars
                    .items
                    .iter()
                    .map(|e| crate::retrieval::ScoredExemplar {
                        score: 0.0f64,
                        exemplar: e.clone(),
                    })
                    .collect(),
            };
            label_coverage_at_k(&item.gold, &pool, item.exemplars.items.len())
        };
        counts.n += 1;
        counts.exact += exact as usize;
        counts.template += template as usize;
        counts.recall += recall as usize;
        counts.coverage += coverage as usize;
        counts.invalid += (!valid) as usize;
        per_example.push(PerExampleResult {
            id: item.id.clone(),
            query: item.query.clone(),
            gold: serialize_mr(&item.gold),
            prediction: generated.output_text,
            exemplar_ids: item.exemplars.ids(),
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

// ---------------------------------------------------------------------------
// Scenario runner
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Standard,
    SeenBootstrap,
    UnseenBootstrap,
    ParseGuiding,
    SchemaRefactor,
}

/// Everything a scenario run needs besides the generator.
#[derive(Debug, Clone)]
pub struct ScenarioInputs<S: Scalar> {
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub embedder: Embedder<S>,
    pub retrieval: RetrievalConfig,
    pub augmentation: AugmentationConfig,
    pub policy: GuidedPolicy,
    pub seed: u64,
    /// Bootstrap scenarios: the domain to bootstrap and support-set size.
    pub new_domain: Option<String>,
    pub sup_size: usize,
    /// Schema refactoring: the label merge mapping.
    pub mapping: Option<LabelMapping>,
}

/// Run provenance recorded alongside the metric cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioProvenance {
    pub seed: u64,
    pub retrieval: RetrievalConfig,
    pub augmentation: AugmentationConfig,
    pub index_sizes: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropped_oracle_examples: Option<usize>,
}

/// One named MetricsReport per evaluation cell, plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub kind: ScenarioKind,
    pub cells: BTreeMap<String, MetricsReport>,
    pub provenance: ScenarioProvenance,
}

/// Wire splits, index construction and mutation, guided policy, generator,
/// and evaluation into the configured scenario. Deterministic per seed for
/// deterministic generators.
pub fn run_scenario<S: Scalar>(
    kind: ScenarioKind,
    inputs: &ScenarioInputs<S>,
    generator: &Generator,
) -> Result<ScenarioReport, ScenarioError> {
    let mut cells = BTreeMap::new();
    let mut index_sizes = BTreeMap::new();
    let mut dropped_oracle_examples = None;

    match kind {
        ScenarioKind::Standard => {
            let index = ExemplarIndex::build(&inputs.train, inputs.embedder.clone())?;
            index_sizes.insert("train".to_string(), index.len());
            let outcome = evaluate(
                &inputs.dev,
                &index,
                &inputs.retrieval,
                &inputs.augmentation,
                generator,
                &inputs.policy,
            )?;
            cells.insert("standard".to_string(), outcome.report);
        }
        ScenarioKind::SeenBootstrap | ScenarioKind::UnseenBootstrap => {
            let new_domain = inputs
                .new_domain
                .as_deref()
                .ok_or(ScenarioError::MissingInput { what: "new_domain" })?;
            let mode = match kind {
                ScenarioKind::SeenBootstrap => BootstrapMode::Seen,
                _ => BootstrapMode::Unseen,
            };
            let split = split_by_domain(
                &inputs.train,
                &inputs.dev,
                new_domain,
                inputs.sup_size,
                inputs.seed,
            )?;
            let train_index = bootstrap_index(&split, mode, Phase::Train, &inputs.embedder)?;
            index_sizes.insert("train_phase".to_string(), train_index.len());
            let test_index = bootstrap_index(&split, mode, Phase::Test, &inputs.embedder)?;
            index_sizes.insert("test_phase".to_string(), test_index.len());
            for (name, examples) in [("n_dev", &split.n_dev), ("o_dev", &split.o_dev)] {
                let outcome = evaluate(
                    examples,
                    &test_index,
                    &inputs.retrieval,
                    &inputs.augmentation,
                    generator,
                    &inputs.policy,
                )?;
                cells.insert(name.to_string(), outcome.report);
            }
        }
        ScenarioKind::ParseGuiding => {
            let index = ExemplarIndex::build(&inputs.train, inputs.embedder.clone())?;
            index_sizes.insert("train".to_string(), index.len());
            let standard = evaluate(
                &inputs.dev,
                &index,
                &inputs.retrieval,
                &inputs.augmentation,
                generator,
                &GuidedPolicy::Never,
            )?;
            cells.insert("standard".to_string(), standard.report);
            let oracle_set = build_oracle_eval_set(&inputs.dev, &index, &inputs.retrieval)?;
            dropped_oracle_examples = Some(oracle_set.dropped);
            for (name, guided) in [("oracle_unguided", false), ("oracle_guided", true)] {
                let outcome =
                    evaluate_oracle_set(&oracle_set, &inputs.augmentation, generator, guided)?;
                cells.insert(name.to_string(), outcome.report);
            }
        }
        ScenarioKind::SchemaRefactor => {
            let mapping = inputs
                .mapping
                .as_ref()
                .ok_or(ScenarioError::MissingInput { what: "mapping" })?;
            let (pre_train, _) = refactor_dataset(&inputs.train, mapping);
            let (pre_dev, _) = refactor_dataset(&inputs.dev, mapping);
            let mut index = ExemplarIndex::build(&pre_train, inputs.embedder.clone())?;
            index_sizes.insert("pre_refactoring".to_string(), index.len());
            let pre = evaluate(
                &pre_dev,
                &index,
                &inputs.retrieval,
                &inputs.augmentation,
                generator,
                &inputs.policy,
            )?;
            cells.insert("pre_refactoring".to_string(), pre.report);
            // The control action: swap the index to post-refactoring data.
            index.swap_all(&inputs.train)?;
            index_sizes.insert("post_refactoring".to_string(), index.len());
            let post = evaluate(
                &inputs.dev,
                &index,
                &inputs.retrieval,
                &inputs.augmentation,
                generator,
                &inputs.policy,
            )?;
            cells.insert("post_refactoring".to_string(), post.report);
        }
    }

    Ok(ScenarioReport {
        kind,
        cells,
        provenance: ScenarioProvenance {
            seed: inputs.seed,
            retrieval: inputs.retrieval.clone(),
            augmentation: inputs.augmentation.clone(),
            index_sizes,
            dropped_oracle_examples,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::BuiltinEmbedderSpec;
    use crate::generation::Generator;
    use crate::mr::{labels_of, parse_mr, NodeKind};
    use crate::testkit;

    fn builtin() -> Embedder<f64> {
        Embedder::Builtin(BuiltinEmbedderSpec::default())
    }

    fn two_domain_data() -> (Vec<Example>, Vec<Example>) {
        let mut train = testkit::synthetic_examples(31, 60, "alpha");
        train.extend(testkit::synthetic_examples(32, 40, "beta"));
        let mut dev = testkit::synthetic_examples(33, 12, "alpha");
        dev.extend(testkit::synthetic_examples(34, 8, "beta"));
        (train, dev)
    }

    #[test]
    fn split_partitions_and_samples_support() {
        let (train, dev) = two_domain_data();
        let split = split_by_domain(&train, &dev, "beta", 10, 5).unwrap();
        assert_eq!(split.o_train.len(), 60);
        assert_eq!(split.n_train.len(), 40);
        assert_eq!(split.o_dev.len(), 12);
        assert_eq!(split.n_dev.len(), 8);
        assert_eq!(split.n_sup.len(), 10);
        assert!(split
            .n_sup
            .iter()
            .all(|e| split.n_train.iter().any(|n| n.id == e.id)));
        // Deterministic per seed.
        let again = split_by_domain(&train, &dev, "beta", 10, 5).unwrap();
        assert_eq!(
            split.n_sup.iter().map(|e| &e.id).collect::<Vec<_>>(),
            again.n_sup.iter().map(|e| &e.id).collect::<Vec<_>>()
        );
        let other = split_by_domain(&train, &dev, "beta", 10, 6).unwrap();
        assert_eq!(other.n_sup.len(), 10);
    }

    #[test]
    fn split_clamps_and_validates_domains() {
        let (train, dev) = two_domain_data();
        let split = split_by_domain(&train, &dev, "beta", 1000, 5).unwrap();
        assert_eq!(split.n_sup.len(), split.n_train.len());
        assert!(matches!(
            split_by_domain(&train, &dev, "gamma", 10, 5),
            Err(ScenarioError::UnknownDomain { .. })
        ));
        // Domain present only in dev: no training examples to sample.
        let dev_only: Vec<Example> = testkit::synthetic_examples(35, 3, "devonly");
        let mut dev2 = dev.clone();
        dev2.extend(dev_only);
        assert!(matches!(
            split_by_domain(&train, &dev2, "devonly", 10, 5),
            Err(ScenarioError::EmptyNewDomain { .. })
        ));
    }

    #[test]
    fn bootstrap_index_contents_by_mode_and_phase() {
        let (train, dev) = two_domain_data();
        let split = split_by_domain(&train, &dev, "beta", 10, 5).unwrap();

        let seen_train = bootstrap_index(&split, BootstrapMode::Seen, Phase::Train, &builtin()).unwrap();
        let seen_test = bootstrap_index(&split, BootstrapMode::Seen, Phase::Test, &builtin()).unwrap();
        assert_eq!(seen_train.len(), 70);
        assert_eq!(seen_test.len(), 70);

        let unseen_train =
            bootstrap_index(&split, BootstrapMode::Unseen, Phase::Train, &builtin()).unwrap();
        assert_eq!(unseen_train.len(), 60);
        assert_eq!(unseen_train.domain_counts().get("beta"), None);

        let unseen_test =
            bootstrap_index(&split, BootstrapMode::Unseen, Phase::Test, &builtin()).unwrap();
        assert_eq!(unseen_test.len(), 70);
        // Restricted to the new domain, the test-phase index is exactly N_sup.
        let beta_ids: std::collections::BTreeSet<&str> = unseen_test
            .entries()
            .iter()
            .filter(|e| e.domain == "beta")
            .map(|e| e.id.as_str())
            .collect();
        let sup_ids: std::collections::BTreeSet<&str> =
            split.n_sup.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(beta_ids, sup_ids);
    }

    fn merge_mapping() -> LabelMapping {
        LabelMapping::parse_tsv("IN:GET_REMINDER\tIN:GET_EVENT\nSL:NEWS_CATEGORY\tSL:NEWS_TOPIC\n")
            .unwrap()
    }

    #[test]
    fn label_mapping_parses_and_validates() {
        let mapping = merge_mapping();
        assert_eq!(mapping.len(), 2);
        let watch = mapping.watch_labels();
        assert_eq!(watch.len(), 4);
        assert!(watch.contains(&SemanticLabel::new(NodeKind::Intent, ["get", "reminder"])));
        assert!(watch.contains(&SemanticLabel::new(NodeKind::Intent, ["get", "event"])));

        assert!(matches!(
            LabelMapping::parse_tsv("IN:GET_REMINDER\tSL:GET_EVENT\n"),
            Err(ScenarioError::KindMismatch { .. })
        ));
        assert!(matches!(
            LabelMapping::parse_tsv("IN:GET_REMINDER only\n"),
            Err(ScenarioError::MappingParse { line: 1, .. })
        ));
        // Comments and blank lines are fine.
        let with_comments =
            LabelMapping::parse_tsv("# merge pairs\n\nIN:GET_REMINDER\tIN:GET_EVENT\n").unwrap();
        assert_eq!(with_comments.len(), 1);
    }

    #[test]
    fn apply_label_mapping_replaces_labels_only() {
        let mapping = merge_mapping();
        let mr = parse_mr("[IN get reminder = [SL date time = for today]]").unwrap();
        let (mapped, replaced) = apply_label_mapping(&mr, &mapping);
        assert_eq!(replaced, 1);
        assert_eq!(
            serialize_mr(&mapped),
            "[IN get event = [SL date time = for today]]"
        );

        let untouched = parse_mr("[IN get weather = today]").unwrap();
        let (same, replaced) = apply_label_mapping(&untouched, &mapping);
        assert_eq!(replaced, 0);
        assert_eq!(same, untouched);
    }

    #[test]
    fn refactor_counts_node_occurrences() {
        // 7 examples with get reminder nodes (some nested twice).
        let examples: Vec<Example> = vec![
            ("r1", "[IN get reminder = [SL todo = x]]"),
            ("r2", "[IN get reminder = [SL todo = y] [SL news category = z]]"),
            ("r3", "[IN get event = [SL todo = a]]"),
            ("r4", "[IN create call = [SL contact = b]]"),
        ]
        .into_iter()
        .enumerate()
        .map(|(i, (id, mr))| Example {
            id: id.to_string(),
            query: format!("query number {i}"),
            mr: parse_mr(mr).unwrap(),
            domain: "d".into(),
        })
        .collect();
        let (refactored, stats) = refactor_dataset(&examples, &merge_mapping());
        assert_eq!(stats.entries_changed, 2);
        assert_eq!(stats.labels_replaced, 3);
        assert!(serialize_mr(&refactored[1].mr).contains("news topic"));
        // Tokens and structure untouched.
        assert_eq!(
            labels_of(&refactored[3].mr),
            labels_of(&examples[3].mr)
        );
    }

    #[test]
    fn refactor_index_rewrites_in_place() {
        let examples: Vec<Example> = (0..5)
            .map(|i| Example {
                id: format!("e{i}"),
                query: format!("reminder query {i}"),
                mr: parse_mr("[IN get reminder = [SL todo = x]]").unwrap(),
                domain: "d".into(),
            })
            .collect();
        let mut index = ExemplarIndex::build(&examples, builtin()).unwrap();
        let stats = refactor_index(&mut index, &merge_mapping());
        assert_eq!(stats.entries_changed, 5);
        assert_eq!(stats.labels_replaced, 5);
        assert!(index
            .entries()
            .iter()
            .all(|e| serialize_mr(&e.mr).starts_with("[IN get event")));
    }

    #[test]
    fn watch_policy_fires_on_exemplar_mrs_only() {
        let mapping = merge_mapping();
        let watch = mapping.watch_labels();
        let hit = Exemplar {
            id: "a".into(),
            query: "any".into(),
            mr: parse_mr("[IN get stories news = [SL news category = sports]]").unwrap(),
            domain: "d".into(),
        };
        let miss = Exemplar {
            id: "b".into(),
            // Watched words in the query text must not trigger the policy.
            query: "news category updates".into(),
            mr: parse_mr("[IN get weather = today]").unwrap(),
            domain: "d".into(),
        };
        assert!(guided_policy_watch(&[miss.clone(), hit], &watch));
        assert!(!guided_policy_watch(&[miss], &watch));
        assert!(!guided_policy_watch(&[], &watch));
        let empty = std::collections::BTreeSet::new();
        let anything = Exemplar {
            id: "c".into(),
            query: "q".into(),
            mr: parse_mr("[IN get reminder = x]").unwrap(),
            domain: "d".into(),
        };
        assert!(!guided_policy_watch(&[anything], &empty));
    }

    fn paraphrase_examples() -> Vec<Example> {
        // Each template occurs at least twice with different queries.
        let groups = [
            ("[IN create call = [SL contact = mom]]", ["call mom now", "ring mom please"]),
            ("[IN get weather = [SL date time = today]]", ["weather today city", "forecast today town"]),
            ("[IN play music = [SL music genre = jazz]]", ["play jazz songs", "start jazz radio"]),
        ];
        let mut out = Vec::new();
        for (gi, (mr, queries)) in groups.iter().enumerate() {
            for (qi, query) in queries.iter().enumerate() {
                out.push(Example {
                    id: format!("p{gi}{qi}"),
                    query: query.to_string(),
                    mr: parse_mr(mr).unwrap(),
                    domain: "main".into(),
                });
            }
        }
        out
    }

    #[test]
    fn oracle_eval_set_is_strictly_same_template() {
        let examples = paraphrase_examples();
        let index = ExemplarIndex::build(&examples, builtin()).unwrap();
        let config = RetrievalConfig {
            k: 2,
            exclude_exact_query: true,
            ..Default::default()
        };
        let set = build_oracle_eval_set(&examples, &index, &config).unwrap();
        assert_eq!(set.dropped, 0);
        assert_eq!(set.items.len(), examples.len());
        for item in &set.items {
            let gold_template = crate::mr::template_of(&item.gold);
            assert!(!item.exemplars.items.is_empty());
            for e in &item.exemplars.items {
                assert_eq!(crate::mr::template_of(&e.mr), gold_template);
                assert_ne!(e.query, item.query, "self-exclusion violated");
            }
        }
    }

    #[test]
    fn oracle_eval_set_drops_unique_templates() {
        let mut examples = paraphrase_examples();
        examples.push(Example {
            id: "solo".into(),
            query: "totally unique request".into(),
            mr: parse_mr("[IN create timer = [SL duration = five]]").unwrap(),
            domain: "main".into(),
        });
        let index = ExemplarIndex::build(&examples, builtin()).unwrap();
        let config = RetrievalConfig {
            k: 2,
            exclude_exact_query: true,
            ..Default::default()
        };
        let set = build_oracle_eval_set(&examples, &index, &config).unwrap();
        assert_eq!(set.dropped, 1);
        assert_eq!(set.items.len(), examples.len() - 1);
    }

    #[test]
    fn oracle_set_evaluation_with_template_copy_is_faithful() {
        let examples = paraphrase_examples();
        let index = ExemplarIndex::build(&examples, builtin()).unwrap();
        let config = RetrievalConfig {
            k: 2,
            exclude_exact_query: true,
            ..Default::default()
        };
        let set = build_oracle_eval_set(&examples, &index, &config).unwrap();
        let generator = Generator::TemplateCopy;
        for guided in [false, true] {
            let outcome =
                evaluate_oracle_set(&set, &AugmentationConfig::default(), &generator, guided)
                    .unwrap();
            assert_eq!(outcome.report.template_accuracy, 1.0, "guided={guided}");
            assert_eq!(outcome.report.invalid_rate, 0.0);
            assert!(outcome.per_example.iter().all(|r| r.guided == guided));
        }
    }

    #[test]
    fn seen_bootstrap_mixes_sources_roughly_evenly() {
        let (train, dev) = two_domain_data();
        let split = split_by_domain(&train, &dev, "beta", 20, 5).unwrap();
        let index =
            bootstrap_index(&split, BootstrapMode::Seen, Phase::Train, &builtin()).unwrap();
        let retrieval = RetrievalConfig {
            k: 2,
            exclude_exact_query: true,
            ..Default::default()
        };
        let aug = AugmentationConfig {
            lists_per_example: 25,
            anonymized_fraction: 0.0,
            ..Default::default()
        };
        let instances = bootstrap_training_data(
            &split,
            BootstrapMode::Seen,
            &index,
            &retrieval,
            &aug,
            11,
        )
        .unwrap();
        assert_eq!(instances.len(), 25 * (60 + 20));
        // Count instances whose source example came from the support set by
        // matching the raw query prefix of x+.
        let sup_queries: std::collections::BTreeSet<&str> =
            split.n_sup.iter().map(|e| e.query.as_str()).collect();
        let sup_share = instances
            .iter()
            .filter(|i| {
                let query = i.augmented_query.split(" @@ ").next().unwrap();
                sup_queries.contains(query)
            })
            .count() as f64
            / instances.len() as f64;
        assert!((sup_share - 0.5).abs() < 0.05, "support share {sup_share}");
        // Determinism.
        let again = bootstrap_training_data(
            &split,
            BootstrapMode::Seen,
            &index,
            &retrieval,
            &aug,
            11,
        )
        .unwrap();
        assert_eq!(instances, again);
    }

    #[test]
    fn scenario_reports_have_expected_cells() {
        let (train, dev) = two_domain_data();
        let inputs = ScenarioInputs {
            train: train.clone(),
            dev: dev.clone(),
            embedder: builtin(),
            retrieval: RetrievalConfig { k: 2, ..Default::default() },
            augmentation: AugmentationConfig::default(),
            policy: GuidedPolicy::Never,
            seed: 3,
            new_domain: Some("beta".into()),
            sup_size: 10,
            mapping: Some(merge_mapping()),
        };
        let generator = Generator::Echo;

        let standard = run_scenario(ScenarioKind::Standard, &inputs, &generator).unwrap();
        assert_eq!(standard.cells.len(), 1);
        assert!(standard.cells.contains_key("standard"));

        for kind in [ScenarioKind::SeenBootstrap, ScenarioKind::UnseenBootstrap] {
            let report = run_scenario(kind, &inputs, &generator).unwrap();
            assert_eq!(report.cells.len(), 2);
            assert!(report.cells.contains_key("n_dev"));
            assert!(report.cells.contains_key("o_dev"));
            assert!(report.provenance.index_sizes.contains_key("train_phase"));
            assert!(report.provenance.index_sizes.contains_key("test_phase"));
        }

        let guiding = run_scenario(ScenarioKind::ParseGuiding, &inputs, &generator).unwrap();
        assert_eq!(guiding.cells.len(), 3);
        assert!(guiding.provenance.dropped_oracle_examples.is_some());

        let refactor = run_scenario(ScenarioKind::SchemaRefactor, &inputs, &generator).unwrap();
        assert_eq!(refactor.cells.len(), 2);
        assert!(refactor.cells.contains_key("pre_refactoring"));
        assert!(refactor.cells.contains_key("post_refactoring"));

        // Reports serialize to JSON.
        let json = serde_json::to_string(&refactor).unwrap();
        assert!(json.contains("post_refactoring"));
    }

    #[test]
    fn schema_refactor_with_post_gold_lookup_is_perfect_post() {
        let (train, dev) = two_domain_data();
        let table: std::collections::BTreeMap<String, String> = dev
            .iter()
            .map(|e| (e.query.clone(), serialize_mr(&e.mr)))
            .collect();
        let inputs = ScenarioInputs {
            train,
            dev,
            embedder: builtin(),
            retrieval: RetrievalConfig { k: 2, ..Default::default() },
            augmentation: AugmentationConfig::default(),
            policy: GuidedPolicy::Never,
            seed: 3,
            new_domain: None,
            sup_size: 0,
            mapping: Some(merge_mapping()),
        };
        let generator = Generator::Lookup(table);
        let report =
            run_scenario(ScenarioKind::SchemaRefactor, &inputs, &generator).unwrap();
        assert_eq!(report.cells["post_refactoring"].exact_match, 1.0);
    }
}
