//! Bidirectional token and tag index maps.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Reserved unknown token; always index 0.
pub const UNKNOWN_TOKEN: &str = "<unk>";

/// Token vocabulary with a reserved unknown entry at index 0.
/// Lookup is exact-string; callers that want case folding normalize first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from tokens in first-occurrence order, with the
    /// unknown token inserted at index 0.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        v.push(UNKNOWN_TOKEN);
        for t in tokens {
            let t = t.as_ref();
            if !v.index.contains_key(t) {
                v.push(t);
            }
        }
        v
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn from_token_list(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }

    fn push(&mut self, token: &str) {
        self.index.insert(token.to_string(), self.tokens.len());
        self.tokens.push(token.to_string());
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn unknown_index(&self) -> usize {
        0
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index of `token`, falling back to the unknown index.
    pub fn index_or_unknown(&self, token: &str) -> usize {
        self.index_of(token).unwrap_or(0)
    }

    pub fn token_of(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }
}

/// Tag inventory; tags are stored sorted so the index assignment is
/// deterministic regardless of corpus order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSet {
    tags: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl TagSet {
    pub fn from_tags<I, S>(tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut uniq: Vec<String> = Vec::new();
        for t in tags {
            let t = t.as_ref();
            if !uniq.iter().any(|u| u == t) {
                uniq.push(t.to_string());
            }
        }
        uniq.sort();
        Self::from_tag_list(uniq)
    }

    pub fn from_tag_list(tags: Vec<String>) -> Self {
        let index = tags
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        TagSet { tags, index }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn index_of(&self, tag: &str) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn tag_of(&self, index: usize) -> &str {
        &self.tags[index]
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }
}
