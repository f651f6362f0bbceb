//! `casper`: retrieval-augmented semantic parsing toolkit.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use casper_cli::commands::{self, ParseOutput};
use casper_cli::config::{
    AppConfig, EmbedderConfig, GeneratorConfig, GuidedPolicyConfig, DEFAULT_BIND_ADDR,
};
use casper_cli::error::CliError;
use casper_cli::ingest::{convert_tsv, TsvColumns};
use casper_core::augmentation::AugmentationConfig;
use casper_core::retrieval::RetrievalConfig;
use casper_core::scenarios::BootstrapMode;

#[derive(Parser)]
#[command(
    name = "casper",
    version,
    about = "Controllable retrieval-augmented semantic parsing: index exemplars, augment queries, \
             delegate generation, and change parser behavior by editing the index"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RetrievalArgs {
    /// Number of exemplars per augmented query.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Geometric sampling parameter for sampled-k.
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// Ranked-pool size per query.
    #[arg(long, default_value_t = 100)]
    cache_size: usize,
    /// Drop index entries whose query equals the input exactly.
    #[arg(long)]
    exclude_exact: bool,
}

impl RetrievalArgs {
    fn to_config(&self) -> RetrievalConfig {
        RetrievalConfig {
            k: self.k,
            p: self.p,
            cache_size: self.cache_size,
            exclude_exact_query: self.exclude_exact,
        }
    }
}

#[derive(Args)]
struct EmbedderArgs {
    /// Built-in embedder dimension.
    #[arg(long, default_value_t = casper_core::embedding::DEFAULT_DIMENSION)]
    dim: usize,
    /// Built-in embedder feature-hash seed.
    #[arg(long, default_value_t = casper_core::embedding::DEFAULT_HASH_SEED)]
    hash_seed: u64,
    /// Built-in embedder character n-gram order.
    #[arg(long, default_value_t = casper_core::embedding::DEFAULT_CHAR_NGRAM)]
    char_ngram: usize,
    /// Precomputed-embedding sidecar file (overrides the built-in embedder).
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

impl EmbedderArgs {
    fn to_config(&self) -> EmbedderConfig {
        match &self.embeddings {
            Some(path) => EmbedderConfig::Precomputed { path: path.clone() },
            None => EmbedderConfig::Builtin {
                dimension: self.dim,
                seed: self.hash_seed,
                char_ngram: self.char_ngram,
            },
        }
    }
}

#[derive(Args)]
struct AugmentationArgs {
    #[arg(long, default_value = "@@")]
    exemplar_sep: String,
    #[arg(long, default_value = "##")]
    mr_sep: String,
    #[arg(long, default_value = "PLATINUM")]
    tag: String,
    /// Sampled-k exemplar lists generated per training example.
    #[arg(long, default_value_t = 20)]
    lists_per_example: usize,
    /// Fraction of training instances with anonymized labels.
    #[arg(long, default_value_t = 0.5)]
    anonymized_fraction: f64,
    /// Fraction of training instances built from guided oracle exemplars.
    #[arg(long, default_value_t = 0.0)]
    oracle_fraction: f64,
}

impl AugmentationArgs {
    fn to_config(&self) -> AugmentationConfig {
        AugmentationConfig {
            exemplar_separator: self.exemplar_sep.clone(),
            mr_separator: self.mr_sep.clone(),
            guiding_tag: self.tag.clone(),
            lists_per_example: self.lists_per_example,
            anonymized_fraction: self.anonymized_fraction,
            oracle_fraction: self.oracle_fraction,
        }
    }
}

#[derive(Args)]
struct GeneratorArgs {
    /// echo | template-copy | lookup:PATH | http:URL | process:COMMAND
    #[arg(long, default_value = "echo")]
    generator: String,
    #[arg(long, default_value_t = 10_000)]
    gen_timeout_ms: u64,
    #[arg(long, default_value_t = 4)]
    gen_max_in_flight: usize,
}

impl GeneratorArgs {
    fn to_config(&self) -> Result<GeneratorConfig, CliError> {
        GeneratorConfig::from_cli(&self.generator, self.gen_timeout_ms, self.gen_max_in_flight)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Convert an MTOP-style TSV into the native JSONL dataset format.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Column of the example id (omit to generate sequential ids).
        #[arg(long, default_value = "0")]
        id_col: Option<usize>,
        #[arg(long, default_value_t = 3)]
        query_col: usize,
        #[arg(long, default_value_t = 4)]
        domain_col: usize,
        #[arg(long, default_value_t = 6)]
        mr_col: usize,
        /// Column of the tokens JSON; the query is the space-joined tokens.
        #[arg(long, default_value = "7")]
        tokens_col: Option<usize>,
        /// Use the raw utterance column instead of the tokens JSON.
        #[arg(long)]
        use_utterance: bool,
        /// The MR column is already canonical (default expects raw labels).
        #[arg(long)]
        canonical_mr: bool,
    },
    /// Build an index snapshot from a JSONL dataset.
    BuildIndex {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        embedder: EmbedderArgs,
    },
    /// Rank an index for a query and print the top-k exemplars.
    Retrieve {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        query: String,
        #[command(flatten)]
        retrieval: RetrievalArgs,
        /// Sidecar embeddings for queries unknown to a precomputed index.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Print the augmented query for an input.
    Augment {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long)]
        guided: bool,
        /// Use sampled-k with this seed instead of top-k.
        #[arg(long)]
        sampled_seed: Option<u64>,
        #[command(flatten)]
        retrieval: RetrievalArgs,
        #[command(flatten)]
        augmentation: AugmentationArgs,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Construct generator training data (sampled-k lists, variant mix).
    MakeTrain {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Keep entries whose query equals the example query (excluded by
        /// default during training-data construction).
        #[arg(long)]
        include_exact: bool,
        #[command(flatten)]
        retrieval: RetrievalArgs,
        #[command(flatten)]
        augmentation: AugmentationArgs,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Parse and canonicalize MRs (or extract templates).
    Parse {
        /// One MR literal.
        #[arg(long)]
        mr: Option<String>,
        /// File with one MR per line.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Inputs use raw MTOP-style labels.
        #[arg(long)]
        raw: bool,
        /// Print the canonical template instead of the MR.
        #[arg(long)]
        template: bool,
        /// Print the raw-label template instead of the MR.
        #[arg(long)]
        raw_template: bool,
    },
    /// Evaluate a generator over a dataset and report all metrics.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// Snapshot path, or "self" to index the dataset itself.
        #[arg(long)]
        index: String,
        #[command(flatten)]
        retrieval: RetrievalArgs,
        #[command(flatten)]
        augmentation: AugmentationArgs,
        #[command(flatten)]
        embedder: EmbedderArgs,
        #[command(flatten)]
        generator: GeneratorArgs,
        /// never | always | watch:MAPPING_PATH
        #[arg(long, default_value = "never")]
        guided: String,
        /// Write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Stream per-example results as JSONL here.
        #[arg(long)]
        per_example: Option<PathBuf>,
    },
    /// Run a domain-bootstrap scenario (seen or unseen support set).
    Bootstrap {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        new_domain: String,
        #[arg(long, value_parser = parse_mode)]
        mode: BootstrapMode,
        #[arg(long, default_value_t = 100)]
        sup_size: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        retrieval: RetrievalArgs,
        #[command(flatten)]
        augmentation: AugmentationArgs,
        #[command(flatten)]
        embedder: EmbedderArgs,
        #[command(flatten)]
        generator: GeneratorArgs,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write bootstrap training data (50/50 support mix when seen).
        #[arg(long)]
        emit_train: Option<PathBuf>,
    },
    /// Apply a label mapping to an index snapshot or a dataset.
    Refactor {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        mapping: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the same-template oracle evaluation set.
    OracleSet {
        #[arg(long)]
        dataset: PathBuf,
        /// Snapshot path, or "self" to index the dataset itself.
        #[arg(long)]
        index: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        retrieval: RetrievalArgs,
        #[command(flatten)]
        embedder: EmbedderArgs,
    },
    /// Offline index mutations mirroring the service endpoints.
    Index {
        #[command(subcommand)]
        op: IndexOp,
    },
    /// Serve the parse + index-control HTTP API.
    Serve {
        /// JSON config file (flags below override it).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        addr: Option<String>,
        #[arg(long)]
        generator: Option<String>,
        #[arg(long, default_value_t = 10_000)]
        gen_timeout_ms: u64,
        #[arg(long, default_value_t = 4)]
        gen_max_in_flight: usize,
        /// never | always | watch:MAPPING_PATH
        #[arg(long)]
        guided: Option<String>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum IndexOp {
    /// Add JSONL records to a snapshot.
    Add {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Remove entries by ids or by domain.
    Remove {
        #[arg(long)]
        snapshot: PathBuf,
        /// Comma-separated entry ids.
        #[arg(long, value_delimiter = ',')]
        ids: Option<Vec<String>>,
        #[arg(long)]
        domain: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replace a snapshot wholesale with another snapshot's contents.
    Swap {
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_mode(value: &str) -> Result<BootstrapMode, String> {
    match value {
        "seen" => Ok(BootstrapMode::Seen),
        "unseen" => Ok(BootstrapMode::Unseen),
        _ => Err(format!("unknown mode {value:?} (expected seen or unseen)")),
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest {
            input,
            output,
            id_col,
            query_col,
            domain_col,
            mr_col,
            tokens_col,
            use_utterance,
            canonical_mr,
        } => {
            let columns = TsvColumns {
                id: id_col,
                query: query_col,
                domain: domain_col,
                mr: mr_col,
                tokens_json: if use_utterance { None } else { tokens_col },
            };
            let stats = convert_tsv(&input, &output, &columns, !canonical_mr)?;
            eprintln!("ingested {} records into {}", stats.records, output.display());
            Ok(())
        }
        Command::BuildIndex { dataset, out, embedder } => {
            commands::build_index(&dataset, &out, &embedder.to_config())
        }
        Command::Retrieve {
            index,
            query,
            retrieval,
            embeddings,
        } => {
            let index = commands::load_index(&index, embeddings.as_deref())?;
            print!("{}", commands::retrieve(&index, &query, &retrieval.to_config())?);
            Ok(())
        }
        Command::Augment {
            index,
            query,
            guided,
            sampled_seed,
            retrieval,
            augmentation,
            embeddings,
        } => {
            let index = commands::load_index(&index, embeddings.as_deref())?;
            let x_plus = commands::augment(
                &index,
                &query,
                &retrieval.to_config(),
                &augmentation.to_config(),
                guided,
                sampled_seed,
            )?;
            println!("{x_plus}");
            Ok(())
        }
        Command::MakeTrain {
            dataset,
            index,
            out,
            seed,
            include_exact,
            retrieval,
            augmentation,
            embeddings,
        } => {
            let index = commands::load_index(&index, embeddings.as_deref())?;
            let config = RetrievalConfig {
                exclude_exact_query: !include_exact,
                ..retrieval.to_config()
            };
            commands::make_train(&dataset, &index, &out, &config, &augmentation.to_config(), seed)
        }
        Command::Parse {
            mr,
            input,
            raw,
            template,
            raw_template,
        } => {
            let output = match (template, raw_template) {
                (_, true) => ParseOutput::RawTemplate,
                (true, false) => ParseOutput::Template,
                (false, false) => ParseOutput::Canonical,
            };
            let lines = commands::read_parse_inputs(mr, input)?;
            print!("{}", commands::parse_lines(&lines, raw, output)?);
            Ok(())
        }
        Command::Eval {
            dataset,
            index,
            retrieval,
            augmentation,
            embedder,
            generator,
            guided,
            report,
            per_example,
        } => {
            let output = commands::eval(
                &dataset,
                &index,
                &embedder.to_config(),
                embedder.embeddings.as_deref(),
                &retrieval.to_config(),
                &augmentation.to_config(),
                &generator.to_config()?.build()?,
                &GuidedPolicyConfig::from_cli(&guided)?.build()?,
                report.as_deref(),
                per_example.as_deref(),
            )?;
            print!("{output}");
            Ok(())
        }
        Command::Bootstrap {
            train,
            dev,
            new_domain,
            mode,
            sup_size,
            seed,
            retrieval,
            augmentation,
            embedder,
            generator,
            report,
            emit_train,
        } => {
            let output = commands::bootstrap(
                &train,
                &dev,
                &new_domain,
                mode,
                sup_size,
                seed,
                &embedder.to_config(),
                &retrieval.to_config(),
                &augmentation.to_config(),
                &generator.to_config()?.build()?,
                report.as_deref(),
                emit_train.as_deref(),
            )?;
            print!("{output}");
            Ok(())
        }
        Command::Refactor {
            index,
            dataset,
            mapping,
            out,
        } => match (index, dataset) {
            (Some(index), None) => commands::refactor_snapshot(&index, &mapping, &out),
            (None, Some(dataset)) => commands::refactor_dataset_file(&dataset, &mapping, &out),
            _ => Err(CliError::usage("pass exactly one of --index or --dataset")),
        },
        Command::OracleSet {
            dataset,
            index,
            out,
            retrieval,
            embedder,
        } => commands::oracle_set(
            &dataset,
            &index,
            &embedder.to_config(),
            embedder.embeddings.as_deref(),
            &retrieval.to_config(),
            &out,
        ),
        Command::Index { op } => match op {
            IndexOp::Add { snapshot, records, out } => commands::index_add(&snapshot, &records, &out),
            IndexOp::Remove {
                snapshot,
                ids,
                domain,
                out,
            } => commands::index_remove(&snapshot, ids, domain, &out),
            IndexOp::Swap { from, out } => commands::index_swap(&from, &out),
        },
        Command::Serve {
            config,
            index,
            addr,
            generator,
            gen_timeout_ms,
            gen_max_in_flight,
            guided,
            embeddings,
        } => {
            let mut app_config = match config {
                Some(path) => AppConfig::load(&path)?,
                None => {
                    let mut c = AppConfig::default();
                    c.apply_env_overrides(|name| std::env::var(name).ok());
                    c
                }
            };
            if let Some(index) = index {
                app_config.index_snapshot = Some(index);
            }
            if let Some(addr) = addr {
                app_config.bind_addr = addr;
            }
            if let Some(spec) = generator {
                app_config.generator =
                    GeneratorConfig::from_cli(&spec, gen_timeout_ms, gen_max_in_flight)?;
            }
            if let Some(guided) = guided {
                app_config.guided_policy = GuidedPolicyConfig::from_cli(&guided)?;
            }
            if let Some(path) = embeddings {
                app_config.embedder = EmbedderConfig::Precomputed { path };
            }
            if app_config.bind_addr.is_empty() {
                app_config.bind_addr = DEFAULT_BIND_ADDR.to_string();
            }
            env_logger::Builder::new()
                .parse_filters(&app_config.log_level)
                .try_init()
                .ok();
            commands::serve(&app_config)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(error) = run(cli.command) {
        eprintln!("{}", error.to_json_line());
        std::process::exit(error.exit_code());
    }
}
