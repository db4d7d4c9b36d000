use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{CadGraph, GraphError};

/// Reserved token for entity types never seen while building the vocabulary.
pub const OOV_TOKEN: &str = "<OOV>";

/// Ordered set of entity-type tokens defining the one-hot feature space.
/// The OOV slot is always the last index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct EntityVocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl EntityVocabulary {
    /// Sorted distinct type tokens across `graphs`, plus the OOV slot.
    pub fn build<'a>(
        graphs: impl IntoIterator<Item = &'a CadGraph>,
    ) -> Result<Self, GraphError> {
        let mut seen = BTreeSet::new();
        let mut any = false;
        for g in graphs {
            any = true;
            seen.extend(g.nodes.iter().map(|n| n.type_token.as_str()));
        }
        if !any {
            return Err(GraphError::EmptyCorpus);
        }
        let mut tokens: Vec<String> = seen
            .into_iter()
            .filter(|t| *t != OOV_TOKEN)
            .map(str::to_string)
            .collect();
        tokens.push(OOV_TOKEN.to_string());
        Ok(Self::from_tokens_unchecked(tokens))
    }

    fn from_tokens_unchecked(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn oov_index(&self) -> usize {
        self.tokens.len() - 1
    }

    /// Index of `token`, or the OOV index if unknown.
    pub fn index(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(self.oov_index())
    }

    pub fn contains(&self, token: &str) -> bool {
        token != OOV_TOKEN && self.index.contains_key(token)
    }
}

impl TryFrom<Vec<String>> for EntityVocabulary {
    type Error = String;

    fn try_from(tokens: Vec<String>) -> Result<Self, Self::Error> {
        if tokens.last().map(String::as_str) != Some(OOV_TOKEN) {
            return Err("vocabulary must end with the OOV token".into());
        }
        let v = Self::from_tokens_unchecked(tokens);
        if v.index.len() != v.tokens.len() {
            return Err("vocabulary contains duplicate tokens".into());
        }
        Ok(v)
    }
}

impl From<EntityVocabulary> for Vec<String> {
    fn from(v: EntityVocabulary) -> Self {
        v.tokens
    }
}

/// One-hot node-type features, stored as the hot column per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMatrix {
    pub hot: Vec<usize>,
    pub cols: usize,
    /// Rows that fell back to the OOV slot.
    pub oov_hits: usize,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.hot.len()
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        u8::from(self.hot[row] == col)
    }

    pub fn row(&self, row: usize) -> Vec<u8> {
        (0..self.cols).map(|c| self.get(row, c)).collect()
    }
}

pub fn encode_features(graph: &CadGraph, vocab: &EntityVocabulary) -> FeatureMatrix {
    let mut oov_hits = 0;
    let hot = graph
        .nodes
        .iter()
        .map(|n| {
            let i = vocab.index(&n.type_token);
            if i == vocab.oov_index() {
                oov_hits += 1;
            }
            i
        })
        .collect();
    FeatureMatrix {
        hot,
        cols: vocab.len(),
        oov_hits,
    }
}
