//! Corpus and encoded-dataset file formats (JSON lines), plus the
//! per-example extended vocabulary used by the copy mechanism.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, UNK};
use super::Example;
use crate::splitter::SubtreeKind;

/// One raw corpus record. When `summary` is absent the Javadoc embedded
/// in `code` supplies it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

/// Encoded subtree: preorder label ids plus a parent pointer per node
/// (root has parent -1).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedTree {
    pub kind: SubtreeKind,
    pub label_ids: Vec<u32>,
    pub parents: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub id: String,
    pub code_tokens: Vec<String>,
    pub code_ids: Vec<u32>,
    pub summary_tokens: Vec<String>,
    /// Base-vocabulary ids (no bos/eos framing).
    pub summary_ids: Vec<u32>,
    pub subtrees: Vec<EncodedTree>,
    pub edges: Vec<(usize, usize)>,
}

pub fn encode_example(
    example: &Example,
    ast_vocab: &Vocabulary,
    code_vocab: &Vocabulary,
    summary_vocab: &Vocabulary,
) -> EncodedExample {
    let subtrees = example
        .split
        .subtrees
        .iter()
        .map(|s| EncodedTree {
            kind: s.kind,
            label_ids: s
                .tree
                .nodes()
                .iter()
                .map(|n| ast_vocab.id(&n.label))
                .collect(),
            parents: s
                .tree
                .nodes()
                .iter()
                .map(|n| n.parent.map(|p| p as i32).unwrap_or(-1))
                .collect(),
        })
        .collect();
    EncodedExample {
        id: example.id.clone(),
        code_tokens: example.code_tokens.clone(),
        code_ids: code_vocab.encode(&example.code_tokens),
        summary_tokens: example.summary_tokens.clone(),
        summary_ids: summary_vocab.encode(&example.summary_tokens),
        subtrees,
        edges: example.split.structure.edges.clone(),
    }
}

/// Per-example extension of the summary vocabulary with the example's
/// own code tokens, so copied out-of-vocabulary tokens are scorable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtendedVocab {
    pub base_size: usize,
    /// Tokens owning ids `base_size..base_size + ext_tokens.len()`.
    pub ext_tokens: Vec<String>,
    /// For each code position, the extended-space id of its token.
    pub code_position_ids: Vec<u32>,
}

impl ExtendedVocab {
    pub fn build(code_tokens: &[String], summary_vocab: &Vocabulary) -> ExtendedVocab {
        let base_size = summary_vocab.size();
        let mut ext_tokens: Vec<String> = Vec::new();
        let mut code_position_ids = Vec::with_capacity(code_tokens.len());
        for tok in code_tokens {
            let id = if summary_vocab.contains(tok) {
                summary_vocab.id(tok)
            } else {
                match ext_tokens.iter().position(|t| t == tok) {
                    Some(k) => (base_size + k) as u32,
                    None => {
                        ext_tokens.push(tok.clone());
                        (base_size + ext_tokens.len() - 1) as u32
                    }
                }
            };
            code_position_ids.push(id);
        }
        ExtendedVocab {
            base_size,
            ext_tokens,
            code_position_ids,
        }
    }

    pub fn size(&self) -> usize {
        self.base_size + self.ext_tokens.len()
    }

    /// Target id for a gold summary token: base vocabulary first, then
    /// this example's copyable tokens, else unk.
    pub fn target_id(&self, token: &str, summary_vocab: &Vocabulary) -> u32 {
        let id = summary_vocab.id(token);
        if id != UNK || token == "<unk>" {
            return id;
        }
        self.ext_tokens
            .iter()
            .position(|t| t == token)
            .map(|k| (self.base_size + k) as u32)
            .unwrap_or(UNK)
    }

    /// Printable token for an extended-space id.
    pub fn token<'a>(&'a self, id: u32, summary_vocab: &'a Vocabulary) -> &'a str {
        if (id as usize) < self.base_size {
            summary_vocab.token(id)
        } else {
            self.ext_tokens
                .get(id as usize - self.base_size)
                .map(String::as_str)
                .unwrap_or("<unk>")
        }
    }
}

pub fn read_corpus(path: &Path) -> std::io::Result<Vec<CorpusRecord>> {
    read_jsonl(path)
}

pub fn write_corpus(path: &Path, records: &[CorpusRecord]) -> std::io::Result<()> {
    write_jsonl(path, records)
}

pub fn read_dataset(path: &Path) -> std::io::Result<Vec<EncodedExample>> {
    read_jsonl(path)
}

pub fn write_dataset(path: &Path, examples: &[EncodedExample]) -> std::io::Result<()> {
    write_jsonl(path, examples)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> std::io::Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("{}:{}: {e}", path.display(), lineno + 1),
            )
        })?;
        out.push(value);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> std::io::Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{build_vocab, preprocess_record, Channel, Limits};

    fn example() -> Example {
        preprocess_record(
            "e0",
            "/** Counts the rows here. */ int countRows(Table t) { int n = 0; return n; }",
            None,
            &Limits::default(),
        )
        .unwrap()
    }

    #[test]
    fn encoded_trees_align_with_split() {
        let ex = example();
        let ast_vocab = build_vocab(std::slice::from_ref(&ex), Channel::Ast, 1000);
        let code_vocab = build_vocab(std::slice::from_ref(&ex), Channel::Code, 1000);
        let sum_vocab = build_vocab(std::slice::from_ref(&ex), Channel::Summary, 1000);
        let enc = encode_example(&ex, &ast_vocab, &code_vocab, &sum_vocab);
        assert_eq!(enc.subtrees.len(), ex.split.subtrees.len());
        for (et, st) in enc.subtrees.iter().zip(&ex.split.subtrees) {
            assert_eq!(et.label_ids.len(), st.tree.len());
            assert_eq!(et.parents[0], -1);
        }
        assert_eq!(enc.code_ids.len(), ex.code_tokens.len());
    }

    #[test]
    fn extended_vocab_assigns_oov_ids() {
        let ex = example();
        let tiny = Vocabulary::build(
            ["the", "rows", "counts", "a", "b"].into_iter(),
            Channel::Summary,
            5,
        );
        let ext = ExtendedVocab::build(&ex.code_tokens, &tiny);
        assert_eq!(ext.code_position_ids.len(), ex.code_tokens.len());
        // `count` is in the code but not the summary vocabulary.
        let count_ext = ext.target_id("count", &tiny);
        assert!(count_ext as usize >= ext.base_size);
        assert_eq!(ext.token(count_ext, &tiny), "count");
        // In-vocabulary summary tokens keep their base ids.
        assert_eq!(ext.target_id("rows", &tiny), tiny.id("rows"));
        // Tokens in neither map to unk.
        assert_eq!(ext.target_id("quux", &tiny), UNK);
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let records = vec![
            CorpusRecord {
                id: "a".into(),
                code: "int f() { return 1; }".into(),
                summary: Some("returns one".into()),
            },
            CorpusRecord {
                id: "b".into(),
                code: "void g() { }".into(),
                summary: None,
            },
        ];
        write_corpus(&path, &records).unwrap();
        assert_eq!(read_corpus(&path).unwrap(), records);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.contains("\"summary\":null"));
    }
}
