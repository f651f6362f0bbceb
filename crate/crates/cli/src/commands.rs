//! Implementations behind the CLI subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::Serialize;

use casper_core::augmentation::{
    build_augmented_query, make_training_data, training_data_to_tsv, AugmentationConfig,
};
use casper_core::dataset::{load_examples, save_jsonl, Example};
use casper_core::embedding::load_precomputed;
use casper_core::evaluation::{evaluate, EvalOutcome, GuidedPolicy};
use casper_core::generation::Generator;
use casper_core::mr::{ingest_raw_top, parse_mr, serialize_mr, template_of};
use casper_core::retrieval::{sampled_k, top_k, RetrievalConfig};
use casper_core::scenarios::{
    self, bootstrap_training_data, build_oracle_eval_set, refactor_dataset, refactor_index,
    BootstrapMode, LabelMapping, Phase, ScenarioInputs, ScenarioKind,
};
use casper_core::Index64;

use crate::config::{AppConfig, EmbedderConfig};
use crate::error::CliError;
use crate::service::{self, ServiceState};

/// Load a snapshot, optionally attaching a precomputed sidecar for queries
/// not present among the stored entries.
pub fn load_index(path: &Path, embeddings: Option<&Path>) -> Result<Index64, CliError> {
    let mut index = Index64::load_snapshot(path)?;
    if let Some(sidecar) = embeddings {
        let table = load_precomputed(sidecar)?;
        index.attach_precomputed(table)?;
    }
    Ok(index)
}

/// Resolve `--index self` (build over the dataset) or a snapshot path.
pub fn resolve_index(
    spec: &str,
    examples: &[Example],
    embedder: &EmbedderConfig,
    embeddings: Option<&Path>,
) -> Result<Index64, CliError> {
    if spec == "self" {
        let index = Index64::build(examples, embedder.build()?)?;
        return Ok(index);
    }
    load_index(Path::new(spec), embeddings)
}

pub fn build_index(
    dataset: &Path,
    out: &Path,
    embedder: &EmbedderConfig,
) -> Result<(), CliError> {
    let examples = load_examples(dataset)?;
    let index = Index64::build(&examples, embedder.build()?)?;
    index.save_snapshot(out)?;
    eprintln!(
        "indexed {} entries (dim {}) into {}",
        index.len(),
        index.dimension(),
        out.display()
    );
    Ok(())
}

pub fn retrieve(
    index: &Index64,
    query: &str,
    config: &RetrievalConfig,
) -> Result<String, CliError> {
    let pool = index.rank(query, config)?;
    let list = top_k(&pool, config)?;
    let scores: std::collections::HashMap<&str, f64> = pool
        .items
        .iter()
        .map(|s| (s.exemplar.id.as_str(), s.score))
        .collect();
    let mut out = String::new();
    for exemplar in &list.items {
        out.push_str(&format!(
            "{:.6}\t{}\t{}\t{}\n",
            scores[exemplar.id.as_str()],
            exemplar.id,
            exemplar.query,
            serialize_mr(&exemplar.mr)
        ));
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn augment(
    index: &Index64,
    query: &str,
    config: &RetrievalConfig,
    aug: &AugmentationConfig,
    guided: bool,
    sampled_seed: Option<u64>,
) -> Result<String, CliError> {
    let pool = index.rank(query, config)?;
    let list = match sampled_seed {
        Some(seed) => sampled_k(&pool, config, seed)?,
        None => top_k(&pool, config)?,
    };
    Ok(build_augmented_query(query, &list.items, guided, aug)?)
}

pub fn make_train(
    dataset: &Path,
    index: &Index64,
    out: &Path,
    config: &RetrievalConfig,
    aug: &AugmentationConfig,
    seed: u64,
) -> Result<(), CliError> {
    let examples = load_examples(dataset)?;
    let instances = make_training_data(&examples, index, config, aug, seed)?;
    std::fs::write(out, training_data_to_tsv(&instances))
        .map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
    eprintln!("wrote {} training instances to {}", instances.len(), out.display());
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub enum ParseOutput {
    Canonical,
    Template,
    RawTemplate,
}

pub fn parse_lines(lines: &[String], raw: bool, output: ParseOutput) -> Result<String, CliError> {
    let mut out = String::new();
    for line in lines {
        let tree = if raw {
            ingest_raw_top(line)?
        } else {
            parse_mr(line)?
        };
        let rendered = match output {
            ParseOutput::Canonical => serialize_mr(&tree),
            ParseOutput::Template => template_of(&tree).canonical_string(),
            ParseOutput::RawTemplate => template_of(&tree).raw_string(),
        };
        out.push_str(&rendered);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn write_per_example_jsonl(path: &Path, outcome: &EvalOutcome) -> Result<(), CliError> {
    let mut file = std::fs::File::create(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    for result in &outcome.per_example {
        let line = serde_json::to_string(result).expect("result serializes");
        writeln!(file, "{line}").map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn eval(
    dataset: &Path,
    index_spec: &str,
    embedder: &EmbedderConfig,
    embeddings: Option<&Path>,
    config: &RetrievalConfig,
    aug: &AugmentationConfig,
    generator: &Generator,
    policy: &GuidedPolicy,
    report_path: Option<&Path>,
    per_example_path: Option<&Path>,
) -> Result<String, CliError> {
    let examples = load_examples(dataset)?;
    let index = resolve_index(index_spec, &examples, embedder, embeddings)?;
    let outcome = evaluate(&examples, &index, config, aug, generator, policy)?;
    if let Some(path) = report_path {
        write_json(path, &outcome.report)?;
    }
    if let Some(path) = per_example_path {
        write_per_example_jsonl(path, &outcome)?;
    }
    let mut out = outcome.report.table();
    out.push('\n');
    out.push_str(&serde_json::to_string(&outcome.report).expect("report serializes"));
    out.push('\n');
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn bootstrap(
    train: &Path,
    dev: &Path,
    new_domain: &str,
    mode: BootstrapMode,
    sup_size: usize,
    seed: u64,
    embedder: &EmbedderConfig,
    config: &RetrievalConfig,
    aug: &AugmentationConfig,
    generator: &Generator,
    report_path: Option<&Path>,
    emit_train: Option<&Path>,
) -> Result<String, CliError> {
    let train = load_examples(train)?;
    let dev = load_examples(dev)?;
    let kind = match mode {
        BootstrapMode::Seen => ScenarioKind::SeenBootstrap,
        BootstrapMode::Unseen => ScenarioKind::UnseenBootstrap,
    };
    let inputs = ScenarioInputs {
        train: train.clone(),
        dev,
        embedder: embedder.build()?,
        retrieval: config.clone(),
        augmentation: aug.clone(),
        policy: GuidedPolicy::Never,
        seed,
        new_domain: Some(new_domain.to_string()),
        sup_size,
        mapping: None,
    };
    let report = scenarios::run_scenario(kind, &inputs, generator)?;

    if let Some(path) = emit_train {
        let split = scenarios::split_by_domain(&inputs.train, &inputs.dev, new_domain, sup_size, seed)?;
        let train_index =
            scenarios::bootstrap_index(&split, mode, Phase::Train, &inputs.embedder)?;
        let train_retrieval = RetrievalConfig {
            exclude_exact_query: true,
            ..config.clone()
        };
        let instances =
            bootstrap_training_data(&split, mode, &train_index, &train_retrieval, aug, seed)?;
        std::fs::write(path, training_data_to_tsv(&instances))
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        eprintln!("wrote {} training instances to {}", instances.len(), path.display());
    }

    if let Some(path) = report_path {
        write_json(path, &report)?;
    }
    Ok(serde_json::to_string_pretty(&report).expect("report serializes") + "\n")
}

pub fn refactor_snapshot(
    index_path: &Path,
    mapping_path: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let mapping = LabelMapping::load(mapping_path)?;
    let mut index = Index64::load_snapshot(index_path)?;
    let stats = refactor_index(&mut index, &mapping);
    index.save_snapshot(out)?;
    eprintln!(
        "replaced {} node labels across {} entries",
        stats.labels_replaced, stats.entries_changed
    );
    Ok(())
}

pub fn refactor_dataset_file(
    dataset_path: &Path,
    mapping_path: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let mapping = LabelMapping::load(mapping_path)?;
    let examples = load_examples(dataset_path)?;
    let (refactored, stats) = refactor_dataset(&examples, &mapping);
    let records: Vec<_> = refactored.iter().map(Example::to_record).collect();
    save_jsonl(out, &records)?;
    eprintln!(
        "replaced {} node labels across {} entries",
        stats.labels_replaced, stats.entries_changed
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct OracleSetLine<'a> {
    id: &'a str,
    query: &'a str,
    gold: String,
    exemplars: Vec<OracleExemplarLine<'a>>,
}

#[derive(Debug, Serialize)]
struct OracleExemplarLine<'a> {
    id: &'a str,
    query: &'a str,
    mr: String,
}

pub fn oracle_set(
    dataset: &Path,
    index_spec: &str,
    embedder: &EmbedderConfig,
    embeddings: Option<&Path>,
    config: &RetrievalConfig,
    out: &Path,
) -> Result<(), CliError> {
    let examples = load_examples(dataset)?;
    let index = resolve_index(index_spec, &examples, embedder, embeddings)?;
    let set = build_oracle_eval_set(&examples, &index, config)?;
    let mut file = std::fs::File::create(out)
        .map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
    for item in &set.items {
        let line = OracleSetLine {
            id: &item.id,
            query: &item.query,
            gold: serialize_mr(&item.gold),
            exemplars: item
                .exemplars
                .items
                .iter()
                .map(|e| OracleExemplarLine {
                    id: &e.id,
                    query: &e.query,
                    mr: serialize_mr(&e.mr),
                })
                .collect(),
        };
        writeln!(file, "{}", serde_json::to_string(&line).expect("line serializes"))
            .map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
    }
    eprintln!(
        "oracle set: kept {} examples, dropped {} without same-template exemplars",
        set.items.len(),
        set.dropped
    );
    Ok(())
}

pub fn index_add(snapshot: &Path, records: &Path, out: &Path) -> Result<(), CliError> {
    let mut index = Index64::load_snapshot(snapshot)?;
    let examples = load_examples(records)?;
    let added = index.add_entries(&examples)?;
    index.save_snapshot(out)?;
    eprintln!("added {added} entries; index now has {}", index.len());
    Ok(())
}

pub fn index_remove(
    snapshot: &Path,
    ids: Option<Vec<String>>,
    domain: Option<String>,
    out: &Path,
) -> Result<(), CliError> {
    let mut index = Index64::load_snapshot(snapshot)?;
    let removed = match (ids, domain) {
        (Some(ids), None) => index.remove_by_ids(&ids),
        (None, Some(domain)) => index.remove_by_domain(&domain),
        _ => {
            return Err(CliError::usage(
                "pass exactly one of --ids or --domain",
            ))
        }
    };
    index.save_snapshot(out)?;
    eprintln!("removed {removed} entries; index now has {}", index.len());
    Ok(())
}

pub fn index_swap(from: &Path, out: &Path) -> Result<(), CliError> {
    let index = Index64::load_snapshot(from)?;
    index.save_snapshot(out)?;
    eprintln!("swapped in {} entries from {}", index.len(), from.display());
    Ok(())
}

pub fn serve(config: &AppConfig) -> Result<(), CliError> {
    config.validate_paths()?;
    config.retrieval.validate()?;
    config.augmentation.validate()?;
    let snapshot = config
        .index_snapshot
        .as_ref()
        .ok_or_else(|| CliError::usage("serve requires index_snapshot (or --index)"))?;
    let mut index = Index64::load_snapshot(snapshot)?;
    if let EmbedderConfig::Precomputed { path } = &config.embedder {
        index.attach_precomputed(load_precomputed(path)?)?;
    }
    let state = Arc::new(ServiceState {
        index: RwLock::new(index),
        generator: config.generator.build()?,
        retrieval: config.retrieval.clone(),
        augmentation: config.augmentation.clone(),
        policy: config.guided_policy.build()?,
    });
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| CliError::data(format!("failed to start runtime: {e}")))?;
    let bind_addr = config.bind_addr.clone();
    runtime
        .block_on(service::serve(state, &bind_addr, |addr| {
            eprintln!("listening on {addr}");
        }))
        .map_err(|e| CliError::data(format!("service failed: {e}")))
}

/// Read MR inputs for `parse`: either one literal or a file of lines.
pub fn read_parse_inputs(
    mr: Option<String>,
    input: Option<PathBuf>,
) -> Result<Vec<String>, CliError> {
    match (mr, input) {
        (Some(mr), None) => Ok(vec![mr]),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            Ok(text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(String::from)
                .collect())
        }
        _ => Err(CliError::usage("pass exactly one of --mr or --input")),
    }
}
