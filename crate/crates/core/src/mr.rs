//! Decoupled-TOP meaning representations.
//!
//! An MR is a tree of intent and slot nodes over query token spans. The
//! canonical serialization looks like
//! `[IN get call = [SL contact = Jack] [SL time = today]]`: lowercase
//! word-split labels, a `=` between label and children, single spaces
//! between siblings, and no space before `]`. Raw MTOP-style strings
//! (`[IN:GET_CALL [SL:CONTACT Jack ] ]`) are ingested by lowercasing and
//! word-splitting the labels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Characters that may not appear inside label words or token text because
/// they collide with the serialization and separator grammar.
pub const FORBIDDEN_CHARS: [char; 5] = ['=', '[', ']', '@', '#'];

/// Size of the numeric label pool used by anonymization ("0" through "99").
pub const NUMERIC_LABEL_POOL: usize = 100;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MrError {
    #[error("expected '[' at byte {pos}")]
    ExpectedOpenBracket { pos: usize },
    #[error("unbalanced brackets at byte {pos}")]
    UnbalancedBrackets { pos: usize },
    #[error("missing '=' after label at byte {pos}")]
    MissingEquals { pos: usize },
    #[error("empty label at byte {pos}")]
    EmptyLabel { pos: usize },
    #[error("node has no children at byte {pos}")]
    EmptyChildren { pos: usize },
    #[error("root node must be an intent (byte {pos})")]
    RootNotIntent { pos: usize },
    #[error("trailing garbage at byte {pos}")]
    TrailingGarbage { pos: usize },
    #[error("unknown kind tag {found:?} at byte {pos}")]
    UnknownKindTag { pos: usize, found: String },
    #[error("unknown label prefix in {found:?} (expected \"IN:\" or \"SL:\")")]
    UnknownPrefix { found: String },
    #[error("forbidden character {ch:?} at byte {pos}")]
    ForbiddenChar { pos: usize, ch: char },
    #[error("{distinct} distinct labels exceed the pool of {NUMERIC_LABEL_POOL} numeric labels")]
    LabelSpaceExhausted { distinct: usize },
    #[error("anonymization map is not injective: {numeric:?} assigned twice")]
    NotInjective { numeric: String },
}

/// Whether a node names an intent or a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Intent,
    Slot,
}

impl NodeKind {
    /// Canonical tag: `IN` or `SL`.
    pub fn tag(self) -> &'static str {
        match self {
            NodeKind::Intent => "IN",
            NodeKind::Slot => "SL",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// A node label together with its kind; the key type for label sets and
/// anonymization maps.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SemanticLabel {
    pub kind: NodeKind,
    pub words: Vec<String>,
}

impl SemanticLabel {
    pub fn new(kind: NodeKind, words: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            kind,
            words: words.into_iter().map(Into::into).collect(),
        }
    }

    /// Canonical text of the label words, e.g. `get call`.
    pub fn text(&self) -> String {
        self.words.join(" ")
    }

    /// Raw MTOP-style rendering, e.g. `IN:GET_CALL`.
    pub fn raw(&self) -> String {
        format!(
            "{}:{}",
            self.kind.tag(),
            self.words
                .iter()
                .map(|w| w.to_uppercase())
                .collect::<Vec<_>>()
                .join("_")
        )
    }
}

impl fmt::Display for SemanticLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind.tag(), self.text())
    }
}

/// A child of an MR node: either a nested node or a single query token.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MrChild {
    Node(MrNode),
    Token(String),
}

/// An intent or slot node with an ordered child sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MrNode {
    pub kind: NodeKind,
    pub label: Vec<String>,
    pub children: Vec<MrChild>,
}

impl MrNode {
    pub fn new(
        kind: NodeKind,
        label: impl IntoIterator<Item = impl Into<String>>,
        children: Vec<MrChild>,
    ) -> Self {
        Self {
            kind,
            label: label.into_iter().map(Into::into).collect(),
            children,
        }
    }

    pub fn intent(label: &str, children: Vec<MrChild>) -> Self {
        Self::new(NodeKind::Intent, label.split_whitespace(), children)
    }

    pub fn slot(label: &str, children: Vec<MrChild>) -> Self {
        Self::new(NodeKind::Slot, label.split_whitespace(), children)
    }

    pub fn token(text: &str) -> MrChild {
        MrChild::Token(text.to_string())
    }

    pub fn semantic_label(&self) -> SemanticLabel {
        SemanticLabel {
            kind: self.kind,
            words: self.label.clone(),
        }
    }
}

/// A parsed meaning representation; the root is always an intent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MrTree {
    pub root: MrNode,
}

impl MrTree {
    pub fn new(root: MrNode) -> Self {
        Self { root }
    }
}

impl fmt::Display for MrTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_mr(self))
    }
}

// ---------------------------------------------------------------------------
// Lexing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open(usize),
    Close(usize),
    Atom { pos: usize, text: String },
}

impl Tok {
    fn pos(&self) -> usize {
        match self {
            Tok::Open(p) | Tok::Close(p) => *p,
            Tok::Atom { pos, .. } => *pos,
        }
    }
}

/// Split into `[`, `]`, and whitespace-delimited atoms, with byte positions.
fn lex(text: &str) -> Vec<Tok> {
    let mut toks = Vec::new();
    let mut atom_start: Option<usize> = None;
    let mut atom = String::new();
    let flush = |toks: &mut Vec<Tok>, start: &mut Option<usize>, atom: &mut String| {
        if let Some(pos) = start.take() {
            toks.push(Tok::Atom {
                pos,
                text: std::mem::take(atom),
            });
        }
    };
    for (pos, ch) in text.char_indices() {
        match ch {
            '[' => {
                flush(&mut toks, &mut atom_start, &mut atom);
                toks.push(Tok::Open(pos));
            }
            ']' => {
                flush(&mut toks, &mut atom_start, &mut atom);
                toks.push(Tok::Close(pos));
            }
            c if c.is_whitespace() => flush(&mut toks, &mut atom_start, &mut atom),
            c => {
                if atom_start.is_none() {
                    atom_start = Some(pos);
                }
                atom.push(c);
            }
        }
    }
    flush(&mut toks, &mut atom_start, &mut atom);
    toks
}

fn check_word(word: &str, pos: usize) -> Result<(), MrError> {
    for ch in word.chars() {
        if FORBIDDEN_CHARS.contains(&ch) {
            return Err(MrError::ForbiddenChar { pos, ch });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Canonical parsing
// ---------------------------------------------------------------------------

struct Parser {
    toks: Vec<Tok>,
    idx: usize,
    end: usize,
}

impl Parser {
    fn new(text: &str) -> Self {
        Self {
            toks: lex(text),
            idx: 0,
            end: text.len(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.idx).cloned();
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    fn here(&self) -> usize {
        self.peek().map(Tok::pos).unwrap_or(self.end)
    }

    fn expect_open(&mut self) -> Result<usize, MrError> {
        match self.next() {
            Some(Tok::Open(pos)) => Ok(pos),
            Some(t) => Err(MrError::ExpectedOpenBracket { pos: t.pos() }),
            None => Err(MrError::ExpectedOpenBracket { pos: self.end }),
        }
    }

    fn finish_root(&mut self, root: MrNode, root_pos: usize) -> Result<MrTree, MrError> {
        if root.kind != NodeKind::Intent {
            return Err(MrError::RootNotIntent { pos: root_pos });
        }
        if let Some(t) = self.peek() {
            return Err(MrError::TrailingGarbage { pos: t.pos() });
        }
        Ok(MrTree::new(root))
    }

    fn canonical_node(&mut self) -> Result<MrNode, MrError> {
        self.expect_open()?;
        let (kind, tag_pos) = match self.next() {
            Some(Tok::Atom { pos, text }) => match text.as_str() {
                "IN" => (NodeKind::Intent, pos),
                "SL" => (NodeKind::Slot, pos),
                _ => return Err(MrError::UnknownKindTag { pos, found: text }),
            },
            Some(t) => {
                return Err(MrError::UnknownKindTag {
                    pos: t.pos(),
                    found: String::new(),
                })
            }
            None => return Err(MrError::UnbalancedBrackets { pos: self.end }),
        };

        let mut label = Vec::new();
        loop {
            match self.next() {
                Some(Tok::Atom { text, .. }) if text == "=" => break,
                Some(Tok::Atom { pos, text }) => {
                    check_word(&text, pos)?;
                    label.push(text);
                }
                Some(t) => return Err(MrError::MissingEquals { pos: t.pos() }),
                None => return Err(MrError::MissingEquals { pos: self.end }),
            }
        }
        if label.is_empty() {
            return Err(MrError::EmptyLabel { pos: tag_pos });
        }

        let mut children = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::Open(_)) => children.push(MrChild::Node(self.canonical_node()?)),
                Some(Tok::Close(pos)) => {
                    let pos = *pos;
                    self.idx += 1;
                    if children.is_empty() {
                        return Err(MrError::EmptyChildren { pos });
                    }
                    return Ok(MrNode {
                        kind,
                        label,
                        children,
                    });
                }
                Some(Tok::Atom { .. }) => {
                    if let Some(Tok::Atom { pos, text }) = self.next() {
                        check_word(&text, pos)?;
                        children.push(MrChild::Token(text));
                    }
                }
                None => return Err(MrError::UnbalancedBrackets { pos: self.end }),
            }
        }
    }

    fn raw_node(&mut self) -> Result<MrNode, MrError> {
        self.expect_open()?;
        let (kind, label) = match self.next() {
            Some(Tok::Atom { pos, text }) => {
                let (kind, words) = preprocess_raw_label(&text)?;
                for w in &words {
                    check_word(w, pos)?;
                }
                (kind, words)
            }
            Some(t) => {
                return Err(MrError::UnknownPrefix {
                    found: match t {
                        Tok::Open(_) => "[".to_string(),
                        Tok::Close(_) => "]".to_string(),
                        Tok::Atom { text, .. } => text,
                    },
                })
            }
            None => return Err(MrError::UnbalancedBrackets { pos: self.end }),
        };

        let mut children = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::Open(_)) => children.push(MrChild::Node(self.raw_node()?)),
                Some(Tok::Close(pos)) => {
                    let pos = *pos;
                    self.idx += 1;
                    if children.is_empty() {
                        return Err(MrError::EmptyChildren { pos });
                    }
                    return Ok(MrNode {
                        kind,
                        label,
                        children,
                    });
                }
                Some(Tok::Atom { .. }) => {
                    if let Some(Tok::Atom { pos, text }) = self.next() {
                        check_word(&text, pos)?;
                        children.push(MrChild::Token(text));
                    }
                }
                None => return Err(MrError::UnbalancedBrackets { pos: self.end }),
            }
        }
    }
}

/// Parse a canonical-form MR string.
pub fn parse_mr(text: &str) -> Result<MrTree, MrError> {
    let mut p = Parser::new(text);
    let root_pos = p.here();
    let root = p.canonical_node()?;
    p.finish_root(root, root_pos)
}

/// True iff `text` parses as a canonical MR.
pub fn is_valid_mr(text: &str) -> bool {
    parse_mr(text).is_ok()
}

/// Split a raw `IN:NAME_WITH_UNDERSCORES` / `SL:...` label into its kind and
/// lowercase word sequence.
pub fn preprocess_raw_label(raw: &str) -> Result<(NodeKind, Vec<String>), MrError> {
    let (kind, name) = if let Some(rest) = raw.strip_prefix("IN:") {
        (NodeKind::Intent, rest)
    } else if let Some(rest) = raw.strip_prefix("SL:") {
        (NodeKind::Slot, rest)
    } else {
        return Err(MrError::UnknownPrefix {
            found: raw.to_string(),
        });
    };
    let words: Vec<String> = name
        .split('_')
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect();
    if words.is_empty() {
        return Err(MrError::UnknownPrefix {
            found: raw.to_string(),
        });
    }
    Ok((kind, words))
}

/// Ingest a raw MTOP-style serialization (uppercase underscore labels, no
/// `=` separators) into a canonical tree.
pub fn ingest_raw_top(raw_mr: &str) -> Result<MrTree, MrError> {
    let mut p = Parser::new(raw_mr);
    let root_pos = p.here();
    let root = p.raw_node()?;
    p.finish_root(root, root_pos)
}

/// Canonical serialization: single spaces between siblings, ` = ` between
/// label and children, no space before `]`.
pub fn serialize_mr(tree: &MrTree) -> String {
    let mut out = String::new();
    write_node(&tree.root, &mut out);
    out
}

fn write_node(node: &MrNode, out: &mut String) {
    out.push('[');
    out.push_str(node.kind.tag());
    out.push(' ');
    out.push_str(&node.label.join(" "));
    out.push_str(" =");
    for child in &node.children {
        out.push(' ');
        match child {
            MrChild::Node(n) => write_node(n, out),
            MrChild::Token(t) => out.push_str(t),
        }
    }
    out.push(']');
}

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

/// Tree structure and labels of an MR with the query tokens discarded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TemplateNode {
    pub kind: NodeKind,
    pub label: Vec<String>,
    pub children: Vec<TemplateNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Template {
    pub root: TemplateNode,
}

impl Template {
    /// Canonical template string, e.g. `[IN get call [SL contact] [SL time]]`.
    pub fn canonical_string(&self) -> String {
        let mut out = String::new();
        Self::write(&self.root, &mut out, false);
        out
    }

    /// Raw-label template string, e.g. `[IN:GET_CALL [SL:CONTACT]]`.
    pub fn raw_string(&self) -> String {
        let mut out = String::new();
        Self::write(&self.root, &mut out, true);
        out
    }

    fn write(node: &TemplateNode, out: &mut String, raw: bool) {
        out.push('[');
        if raw {
            out.push_str(
                &SemanticLabel {
                    kind: node.kind,
                    words: node.label.clone(),
                }
                .raw(),
            );
        } else {
            out.push_str(node.kind.tag());
            out.push(' ');
            out.push_str(&node.label.join(" "));
        }
        for child in &node.children {
            out.push(' ');
            Self::write(child, out, raw);
        }
        out.push(']');
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_string())
    }
}

/// Drop all token children, keeping structure and labels.
pub fn template_of(tree: &MrTree) -> Template {
    fn conv(node: &MrNode) -> TemplateNode {
        TemplateNode {
            kind: node.kind,
            label: node.label.clone(),
            children: node
                .children
                .iter()
                .filter_map(|c| match c {
                    MrChild::Node(n) => Some(conv(n)),
                    MrChild::Token(_) => None,
                })
                .collect(),
        }
    }
    Template {
        root: conv(&tree.root),
    }
}

/// The set of distinct node labels in a tree.
pub fn labels_of(tree: &MrTree) -> BTreeSet<SemanticLabel> {
    let mut out = BTreeSet::new();
    collect_labels(&tree.root, &mut |l| {
        out.insert(l);
    });
    out
}

/// Labels in pre-order, first occurrence only.
pub fn labels_in_order(tree: &MrTree) -> Vec<SemanticLabel> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    collect_labels(&tree.root, &mut |l| {
        if seen.insert(l.clone()) {
            out.push(l);
        }
    });
    out
}

fn collect_labels(node: &MrNode, f: &mut impl FnMut(SemanticLabel)) {
    f(node.semantic_label());
    for child in &node.children {
        if let MrChild::Node(n) = child {
            collect_labels(n, f);
        }
    }
}

/// True iff any node in the tree carries one of the given labels.
pub fn tree_contains_any_label(tree: &MrTree, labels: &BTreeSet<SemanticLabel>) -> bool {
    let mut found = false;
    collect_labels(&tree.root, &mut |l| {
        if labels.contains(&l) {
            found = true;
        }
    });
    found
}

// ---------------------------------------------------------------------------
// Anonymization
// ---------------------------------------------------------------------------

/// Injective map from semantic labels to numeric labels ("0".."99"),
/// shared across one training instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnonymizationMap {
    mapping: BTreeMap<SemanticLabel, String>,
    pub seed: u64,
}

impl AnonymizationMap {
    /// Assign numeric labels to `labels` in order, drawing without
    /// replacement from a seed-shuffled pool.
    pub fn generate(labels: &[SemanticLabel], seed: u64) -> Result<Self, MrError> {
        if labels.len() > NUMERIC_LABEL_POOL {
            return Err(MrError::LabelSpaceExhausted {
                distinct: labels.len(),
            });
        }
        let mut pool: Vec<String> = (0..NUMERIC_LABEL_POOL).map(|n| n.to_string()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        pool.shuffle(&mut rng);
        let mapping = labels
            .iter()
            .cloned()
            .zip(pool.into_iter())
            .collect::<BTreeMap<_, _>>();
        Ok(Self { mapping, seed })
    }

    /// Build a map from explicit pairs, rejecting non-injective assignments.
    pub fn from_pairs(
        pairs: impl IntoIterator<Item = (SemanticLabel, String)>,
    ) -> Result<Self, MrError> {
        let mut mapping = BTreeMap::new();
        let mut used = BTreeSet::new();
        for (label, numeric) in pairs {
            if !used.insert(numeric.clone()) {
                return Err(MrError::NotInjective { numeric });
            }
            mapping.insert(label, numeric);
        }
        Ok(Self { mapping, seed: 0 })
    }

    pub fn numeric_for(&self, label: &SemanticLabel) -> Option<&str> {
        self.mapping.get(label).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SemanticLabel, &str)> {
        self.mapping.iter().map(|(l, n)| (l, n.as_str()))
    }

    /// Replace every mapped label with its numeric label; tokens and
    /// structure are untouched. Labels outside the map are left as-is.
    pub fn apply_tree(&self, tree: &MrTree) -> MrTree {
        fn conv(node: &MrNode, map: &AnonymizationMap) -> MrNode {
            let label = match map.numeric_for(&node.semantic_label()) {
                Some(numeric) => vec![numeric.to_string()],
                None => node.label.clone(),
            };
            MrNode {
                kind: node.kind,
                label,
                children: node
                    .children
                    .iter()
                    .map(|c| match c {
                        MrChild::Node(n) => MrChild::Node(conv(n, map)),
                        MrChild::Token(t) => MrChild::Token(t.clone()),
                    })
                    .collect(),
            }
        }
        MrTree::new(conv(&tree.root, self))
    }

    /// Numeric label back to semantic label; total inverse of the map image.
    pub fn invert(&self) -> BTreeMap<String, SemanticLabel> {
        self.mapping
            .iter()
            .map(|(l, n)| (n.clone(), l.clone()))
            .collect()
    }

    /// Undo `apply_tree`: restore every numeric label found in the map image.
    pub fn unapply_tree(&self, tree: &MrTree) -> MrTree {
        let inverse = self.invert();
        fn conv(node: &MrNode, inv: &BTreeMap<String, SemanticLabel>) -> MrNode {
            let label = if node.label.len() == 1 {
                match inv.get(&node.label[0]) {
                    Some(l) if l.kind == node.kind => l.words.clone(),
                    _ => node.label.clone(),
                }
            } else {
                node.label.clone()
            };
            MrNode {
                kind: node.kind,
                label,
                children: node
                    .children
                    .iter()
                    .map(|c| match c {
                        MrChild::Node(n) => MrChild::Node(conv(n, inv)),
                        MrChild::Token(t) => MrChild::Token(t.clone()),
                    })
                    .collect(),
            }
        }
        MrTree::new(conv(&tree.root, &inverse))
    }
}

/// Anonymize a target together with its exemplar MRs under one shared map.
///
/// Labels are collected in pre-order from the target first, then from each
/// exemplar; numeric labels are drawn without replacement, deterministically
/// per seed.
pub fn anonymize_instance(
    target: &MrTree,
    exemplar_mrs: &[MrTree],
    seed: u64,
) -> Result<(MrTree, Vec<MrTree>, AnonymizationMap), MrError> {
    let mut seen = BTreeSet::new();
    let mut labels = Vec::new();
    let mut take = |tree: &MrTree| {
        for l in labels_in_order(tree) {
            if seen.insert(l.clone()) {
                labels.push(l);
            }
        }
    };
    take(target);
    for mr in exemplar_mrs {
        take(mr);
    }
    let map = AnonymizationMap::generate(&labels, seed)?;
    let anon_target = map.apply_tree(target);
    let anon_exemplars = exemplar_mrs.iter().map(|mr| map.apply_tree(mr)).collect();
    Ok((anon_target, anon_exemplars, map))
}
