//! Deterministic synthetic MRs, queries, and datasets for tests and
//! fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Example;
use crate::mr::{MrChild, MrNode, MrTree, NodeKind};

const INTENT_VOCAB: &[&str] = &[
    "create call", "get call", "get contact", "get weather", "create alarm", "get reminder",
    "send message", "play music", "get event", "create timer", "get stories news", "update call",
];

const SLOT_VOCAB: &[&str] = &[
    "contact", "time", "date time", "relation", "name app", "location", "weather attribute",
    "music track title", "recipient", "news type", "alarm name", "person reminded",
];

const TOKEN_VOCAB: &[&str] = &[
    "call", "mom", "dad", "today", "tomorrow", "please", "jack", "zoey", "work", "home",
    "morning", "evening", "music", "jazz", "weather", "rain", "alarm", "six", "message", "hi",
    "reminder", "meeting", "lunch", "weekend", "party", "brother", "sister", "cancel", "next",
    "friday",
];

fn pick<'a, R: Rng>(rng: &mut R, vocab: &[&'a str]) -> &'a str {
    vocab[rng.random_range(0..vocab.len())]
}

/// Shape knobs for random trees.
#[derive(Debug, Clone)]
pub struct TreeGenConfig {
    pub max_depth: usize,
    pub max_children: usize,
    pub max_span_tokens: usize,
}

impl Default for TreeGenConfig {
    fn default() -> Self {
        Self {
            max_depth: 3,
            max_children: 3,
            max_span_tokens: 3,
        }
    }
}

/// A random valid tree: intent root, slots under intents, intents under
/// slots, every node with at least one child.
pub fn random_tree<R: Rng>(rng: &mut R, config: &TreeGenConfig) -> MrTree {
    MrTree::new(random_node(rng, config, NodeKind::Intent, 0))
}

fn random_node<R: Rng>(
    rng: &mut R,
    config: &TreeGenConfig,
    kind: NodeKind,
    depth: usize,
) -> MrNode {
    let label = match kind {
        NodeKind::Intent => pick(rng, INTENT_VOCAB),
        NodeKind::Slot => pick(rng, SLOT_VOCAB),
    };
    let n_children = rng.random_range(1..=config.max_children);
    let mut children = Vec::with_capacity(n_children);
    for _ in 0..n_children {
        let nest = depth < config.max_depth && rng.random_range(0..100) < 45;
        if nest {
            let child_kind = match kind {
                NodeKind::Intent => NodeKind::Slot,
                NodeKind::Slot => NodeKind::Intent,
            };
            children.push(MrChild::Node(random_node(rng, config, child_kind, depth + 1)));
        } else {
            let span = rng.random_range(1..=config.max_span_tokens);
            for _ in 0..span {
                children.push(MrChild::Token(pick(rng, TOKEN_VOCAB).to_string()));
            }
        }
    }
    MrNode::new(kind, label.split_whitespace(), children)
}

/// `n` random trees, deterministic per seed.
pub fn random_trees(seed: u64, n: usize) -> Vec<MrTree> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = TreeGenConfig::default();
    (0..n).map(|_| random_tree(&mut rng, &config)).collect()
}

/// A random whitespace-joined query of `len` tokens.
pub fn random_query<R: Rng>(rng: &mut R, len: usize) -> String {
    (0..len)
        .map(|_| pick(rng, TOKEN_VOCAB))
        .collect::<Vec<_>>()
        .join(" ")
}

/// A synthetic dataset of unique-query examples in one domain.
pub fn synthetic_examples(seed: u64, n: usize, domain: &str) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = TreeGenConfig::default();
    (0..n)
        .map(|i| {
            let len = rng.random_range(3..=7);
            Example {
                id: format!("{domain}-{i:05}"),
                // A unique marker token keeps queries distinct.
                query: format!("{} q{i}x", random_query(&mut rng, len)),
                mr: random_tree(&mut rng, &config),
                domain: domain.to_string(),
            }
        })
        .collect()
}
