//! Corpus normalization: code-token subtokenization, Javadoc summary
//! extraction, AST label normalization, vocabularies, and the encoded
//! example form consumed by the model.

mod dataset;
mod generator;
mod vocab;

pub use dataset::{
    encode_example, read_corpus, read_dataset, write_corpus, write_dataset, CorpusRecord,
    EncodedExample, EncodedTree, ExtendedVocab,
};
pub use generator::{generate_corpus, generate_records, nested_method, rare_identifier_corpus};
pub use vocab::{build_vocab, Channel, Vocabulary, BOS, EOS, PAD, UNK};

use thiserror::Error;

use crate::frontend::{self, FrontendError, Token, TokenKind};
use crate::splitter::{self, SplitResult};
use crate::tree::{NodeClass, NodeId, Tree, TreeNode};

pub const NUM_TOKEN: &str = "<NUM>";
pub const STRING_TOKEN: &str = "<STRING>";

/// One normalized training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub code_tokens: Vec<String>,
    pub split: SplitResult,
    pub summary_tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PreprocessError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error("no summary sentence found")]
    EmptySummary,
}

#[derive(Debug, Clone, Copy)]
pub struct Limits {
    pub max_code_tokens: usize,
    pub max_summary_tokens: usize,
    pub max_subtrees: usize,
    pub max_subtree_nodes: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_code_tokens: 200,
            max_summary_tokens: 30,
            max_subtrees: 40,
            max_subtree_nodes: 100,
        }
    }
}

/// Splits an identifier into lowercase subtokens at camel-case,
/// snake-case, and letter-digit boundaries.
pub fn split_subtokens(ident: &str) -> Vec<String> {
    let mut out = Vec::new();
    for run in ident.split(|c: char| !c.is_alphanumeric()) {
        if run.is_empty() {
            continue;
        }
        let chars: Vec<char> = run.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let prev = chars[i - 1];
            let cur = chars[i];
            let next_lower = chars.get(i + 1).map(|c| c.is_lowercase()).unwrap_or(false);
            let boundary = (prev.is_lowercase() && cur.is_uppercase())
                || (prev.is_uppercase() && cur.is_uppercase() && next_lower)
                || (prev.is_ascii_digit() != cur.is_ascii_digit()
                    && (prev.is_ascii_digit() || cur.is_ascii_digit()));
            if boundary {
                out.push(chars[start..i].iter().collect::<String>().to_lowercase());
                start = i;
            }
        }
        out.push(chars[start..].iter().collect::<String>().to_lowercase());
    }
    out
}

/// Normalizes lexer tokens into the code-channel token sequence:
/// identifiers split to lowercase subtokens, numerals and string/char
/// literals replaced by generic tokens, operators and punctuation kept.
pub fn normalize_code_tokens(tokens: &[Token]) -> Vec<String> {
    let mut out = Vec::new();
    for tok in tokens {
        match tok.kind {
            TokenKind::Identifier => out.extend(split_subtokens(&tok.text)),
            TokenKind::Keyword => out.push(tok.text.clone()),
            TokenKind::IntLiteral | TokenKind::FloatLiteral => out.push(NUM_TOKEN.to_string()),
            TokenKind::StringLiteral | TokenKind::CharLiteral => {
                out.push(STRING_TOKEN.to_string())
            }
            TokenKind::Operator | TokenKind::Punctuation => out.push(tok.text.clone()),
        }
    }
    out
}

/// Extracts the first sentence of a Javadoc block as lowercase tokens.
///
/// Comment markers and leading `*` are stripped, inline `{@tag ...}`
/// forms reduce to their argument text, and collection stops at the
/// first block tag line or at the first `.`/`?`/`!` followed by
/// whitespace or end of text.
pub fn extract_summary(javadoc: &str) -> Result<Vec<String>, PreprocessError> {
    let mut text = javadoc.trim();
    if let Some(stripped) = text.strip_prefix("/**") {
        text = stripped;
    }
    if let Some(stripped) = text.strip_suffix("*/") {
        text = stripped;
    }
    let mut body = String::new();
    for line in text.lines() {
        let line = line.trim_start().trim_start_matches('*').trim();
        if line.starts_with('@') {
            break;
        }
        if !body.is_empty() {
            body.push(' ');
        }
        body.push_str(line);
    }
    let body = strip_inline_tags(&body);
    let sentence = first_sentence(&body);
    let tokens = tokenize_summary_text(sentence);
    if tokens.is_empty() {
        return Err(PreprocessError::EmptySummary);
    }
    Ok(tokens)
}

fn strip_inline_tags(text: &str) -> String {
    let mut out = String::new();
    let mut rest = text;
    while let Some(start) = rest.find("{@") {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        match tail.find('}') {
            Some(end) => {
                let inner = &tail[2..end];
                let arg = inner.split_once(char::is_whitespace).map(|(_, a)| a).unwrap_or("");
                out.push_str(arg.trim());
                rest = &tail[end + 1..];
            }
            None => {
                rest = &tail[2..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn first_sentence(text: &str) -> &str {
    let bytes = text.as_bytes();
    for (i, c) in text.char_indices() {
        if matches!(c, '.' | '?' | '!') {
            let next = bytes.get(i + 1);
            if next.is_none() || next.map(|b| (*b as char).is_whitespace()) == Some(true) {
                return &text[..i + 1];
            }
        }
    }
    text
}

/// Lowercase alphanumeric runs; punctuation acts as a separator only.
pub fn tokenize_summary_text(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(|s| s.to_lowercase())
        .collect()
}

/// Rewrites terminal labels for the AST channel: literal terminals
/// become the generic tokens, identifier-shaped terminals become a
/// chain of one node per lowercase subtoken, and symbol terminals stay
/// as-is. Non-terminal labels (including placeholder leaves) are used
/// whole.
pub fn normalize_split(split: &SplitResult) -> SplitResult {
    let mut out = split.clone();
    for subtree in &mut out.subtrees {
        let paths: Vec<Vec<usize>> = subtree
            .placeholders
            .iter()
            .map(|&(node, _)| path_of(&subtree.tree, node))
            .collect();
        let mut nested = subtree.tree.to_nested();
        normalize_node(&mut nested);
        let tree = Tree::from_nested(nested);
        for (ph, path) in subtree.placeholders.iter_mut().zip(paths) {
            ph.0 = resolve_path(&tree, &path);
        }
        subtree.tree = tree;
    }
    out
}

fn normalize_node(node: &mut TreeNode) {
    if node.class == NodeClass::Terminal {
        let label = node.label.as_str();
        if label.starts_with('"') || label.starts_with('\'') {
            node.label = STRING_TOKEN.to_string();
        } else if label.starts_with(|c: char| c.is_ascii_digit())
            || (label.starts_with('.') && label.len() > 1)
        {
            node.label = NUM_TOKEN.to_string();
        } else if label.chars().any(char::is_alphabetic) {
            let subtokens = split_subtokens(label);
            if !subtokens.is_empty() {
                let mut iter = subtokens.into_iter().rev();
                let mut chain = TreeNode::terminal(iter.next().unwrap());
                for sub in iter {
                    chain = TreeNode::terminal(sub).with_children(vec![chain]);
                }
                *node = chain;
            }
        }
        return;
    }
    for child in &mut node.children {
        normalize_node(child);
    }
}

fn path_of(tree: &Tree, mut id: NodeId) -> Vec<usize> {
    let mut path = Vec::new();
    while let Some(parent) = tree.node(id).parent {
        let pos = tree
            .node(parent)
            .children
            .iter()
            .position(|&c| c == id)
            .expect("child listed under parent");
        path.push(pos);
        id = parent;
    }
    path.reverse();
    path
}

fn resolve_path(tree: &Tree, path: &[usize]) -> NodeId {
    let mut id = tree.root();
    for &step in path {
        id = tree.node(id).children[step];
    }
    id
}

/// Parses, splits, and normalizes one corpus record. The summary comes
/// from the record's own summary text when present, otherwise from the
/// Javadoc embedded in the code.
pub fn preprocess_record(
    id: &str,
    code: &str,
    summary_text: Option<&str>,
    limits: &Limits,
) -> Result<Example, PreprocessError> {
    let lexed = frontend::lex(code).map_err(FrontendError::from)?;
    let ast = frontend::parse_method(&lexed.tokens).map_err(FrontendError::from)?;

    let summary_tokens = match summary_text {
        Some(text) => {
            let tokens = tokenize_summary_text(first_sentence(&strip_inline_tags(text)));
            if tokens.is_empty() {
                return Err(PreprocessError::EmptySummary);
            }
            tokens
        }
        None => extract_summary(lexed.javadoc.as_deref().unwrap_or(""))?,
    };

    let mut code_tokens = normalize_code_tokens(&lexed.tokens);
    if code_tokens.len() > limits.max_code_tokens {
        log::warn!(
            "example {id}: code truncated from {} to {} tokens",
            code_tokens.len(),
            limits.max_code_tokens
        );
        code_tokens.truncate(limits.max_code_tokens);
    }
    let mut summary_tokens = summary_tokens;
    if summary_tokens.len() > limits.max_summary_tokens {
        log::warn!(
            "example {id}: summary truncated from {} to {} tokens",
            summary_tokens.len(),
            limits.max_summary_tokens
        );
        summary_tokens.truncate(limits.max_summary_tokens);
    }

    let mut split = normalize_split(&splitter::split(&ast));
    truncate_split(id, &mut split, limits);

    Ok(Example {
        id: id.to_string(),
        code_tokens,
        split,
        summary_tokens,
    })
}

/// Caps subtree count and per-subtree node count for encoding. A
/// truncated split is model input only; it is no longer stitchable.
fn truncate_split(id: &str, split: &mut SplitResult, limits: &Limits) {
    if split.subtrees.len() > limits.max_subtrees {
        log::warn!(
            "example {id}: subtrees truncated from {} to {}",
            split.subtrees.len(),
            limits.max_subtrees
        );
        split.subtrees.truncate(limits.max_subtrees);
        split
            .structure
            .edges
            .retain(|&(p, c)| p < limits.max_subtrees && c < limits.max_subtrees);
        for subtree in &mut split.subtrees {
            subtree
                .placeholders
                .retain(|&(_, child)| child < limits.max_subtrees);
        }
    }
    for subtree in &mut split.subtrees {
        if subtree.tree.len() > limits.max_subtree_nodes {
            log::warn!(
                "example {id}: subtree truncated from {} to {} nodes",
                subtree.tree.len(),
                limits.max_subtree_nodes
            );
            let nested = subtree.tree.to_nested();
            let mut budget = limits.max_subtree_nodes;
            let pruned = prune_nested(&nested, &mut budget).expect("budget is nonzero");
            subtree.tree = Tree::from_nested(pruned);
            let len = subtree.tree.len();
            subtree.placeholders.retain(|&(node, _)| node < len);
        }
    }
}

// Keeps the first `budget` nodes in preorder.
fn prune_nested(node: &TreeNode, budget: &mut usize) -> Option<TreeNode> {
    if *budget == 0 {
        return None;
    }
    *budget -= 1;
    let mut out = TreeNode::new(node.label.clone(), node.class);
    for child in &node.children {
        match prune_nested(child, budget) {
            Some(c) => out.push(c),
            None => break,
        }
    }
    Some(out)
}
