//! Token/id vocabularies for the three input channels.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Example;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;

const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Ast,
    Code,
    Summary,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Ast => "ast",
            Channel::Code => "code",
            Channel::Summary => "summary",
        }
    }
}

/// Token table with four reserved ids; corpus tokens start at id 4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pub channel: Channel,
    tokens: Vec<String>,
    map: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    channel: Channel,
    tokens: Vec<String>,
}

impl Vocabulary {
    /// Keeps the `cap` most frequent tokens; ties break toward the
    /// lexicographically smaller token. Reserved names never enter the
    /// table.
    pub fn build<'a>(
        tokens: impl IntoIterator<Item = &'a str>,
        channel: Channel,
        cap: usize,
    ) -> Vocabulary {
        assert!(cap >= 5, "vocabulary cap must be at least 5");
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for tok in tokens {
            if !RESERVED.contains(&tok) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(cap);
        Vocabulary::from_tokens(channel, ranked.into_iter().map(|(t, _)| t.to_string()).collect())
    }

    pub fn from_tokens(channel: Channel, tokens: Vec<String>) -> Vocabulary {
        let map = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32 + 4))
            .collect();
        Vocabulary {
            channel,
            tokens,
            map,
        }
    }

    /// Total id space including the four reserved ids.
    pub fn size(&self) -> usize {
        self.tokens.len() + 4
    }

    pub fn id(&self, token: &str) -> u32 {
        if let Some(pos) = RESERVED.iter().position(|r| *r == token) {
            return pos as u32;
        }
        self.map.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.map.contains_key(token)
    }

    pub fn token(&self, id: u32) -> &str {
        match id {
            0..=3 => RESERVED[id as usize],
            _ => self
                .tokens
                .get(id as usize - 4)
                .map(String::as_str)
                .unwrap_or(RESERVED[UNK as usize]),
        }
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&VocabFile {
            channel: self.channel,
            tokens: self.tokens.clone(),
        })
        .expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Vocabulary, serde_json::Error> {
        let file: VocabFile = serde_json::from_str(text)?;
        Ok(Vocabulary::from_tokens(file.channel, file.tokens))
    }
}

/// Channel-token extraction plus [`Vocabulary::build`] over a corpus.
pub fn build_vocab(corpus: &[Example], channel: Channel, cap: usize) -> Vocabulary {
    let mut tokens: Vec<&str> = Vec::new();
    for example in corpus {
        match channel {
            Channel::Code => tokens.extend(example.code_tokens.iter().map(String::as_str)),
            Channel::Summary => tokens.extend(example.summary_tokens.iter().map(String::as_str)),
            Channel::Ast => {
                for subtree in &example.split.subtrees {
                    tokens.extend(subtree.tree.nodes().iter().map(|n| n.label.as_str()));
                }
            }
        }
    }
    Vocabulary::build(tokens, channel, cap)
}
