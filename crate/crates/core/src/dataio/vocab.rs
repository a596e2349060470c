use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::types::SentenceRecord;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const PAD_INDEX: usize = 0;
pub const UNK_INDEX: usize = 1;

/// Token → index map with `<pad>` = 0 and `<unk>` = 1. Serialized as the
/// token list in index order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Vocabulary containing only the special tokens.
    pub fn specials() -> Self {
        Vocabulary::from_tokens(Vec::<String>::new())
    }

    /// Specials first, then `tokens` in order (duplicates and specials skipped).
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for tok in [PAD.to_string(), UNK.to_string()]
            .into_iter()
            .chain(tokens.into_iter().map(Into::into))
        {
            if !vocab.index.contains_key(&tok) {
                vocab.index.insert(tok.clone(), vocab.tokens.len());
                vocab.tokens.push(tok);
            }
        }
        vocab
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index of `token`, or `<unk>`.
    pub fn lookup(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK_INDEX)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.lookup(t)).collect()
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = String;

    fn try_from(tokens: Vec<String>) -> Result<Self, Self::Error> {
        if tokens.first().map(String::as_str) != Some(PAD) || tokens.get(1).map(String::as_str) != Some(UNK) {
            return Err(format!("vocabulary must start with {PAD} and {UNK}"));
        }
        let n = tokens.len();
        let vocab = Vocabulary::from_tokens(tokens);
        if vocab.len() != n {
            return Err("vocabulary contains duplicate tokens".into());
        }
        Ok(vocab)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

/// Builds a vocabulary from training records. Tokens seen at least
/// `min_count` times get an index, ordered by descending frequency then
/// first appearance.
pub fn build_vocab(records: &[SentenceRecord], min_count: usize) -> Vocabulary {
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    let mut order = 0;
    for tok in records.iter().flat_map(|r| r.tokens.iter()) {
        let entry = counts.entry(tok.as_str()).or_insert_with(|| {
            order += 1;
            (0, order)
        });
        entry.0 += 1;
    }
    let mut kept: Vec<(&str, usize, usize)> = counts
        .into_iter()
        .filter(|(_, (c, _))| *c >= min_count.max(1))
        .map(|(t, (c, o))| (t, c, o))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    Vocabulary::from_tokens(kept.into_iter().map(|(t, _, _)| t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<SentenceRecord> {
        vec![SentenceRecord::new(
            "x",
            vec!["a".into(), "a".into(), "b".into()],
            vec![],
        )]
    }

    #[test]
    fn min_count_one() {
        let v = build_vocab(&corpus(), 1);
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "a", "b"]);
        assert_eq!(v.lookup("b"), 3);
    }

    #[test]
    fn min_count_two_sends_rare_to_unk() {
        let v = build_vocab(&corpus(), 2);
        assert_eq!(v.len(), 3);
        assert_eq!(v.lookup("b"), UNK_INDEX);
        assert_eq!(v.lookup("zzz"), UNK_INDEX);
    }

    #[test]
    fn empty_corpus() {
        let v = build_vocab(&[], 1);
        assert_eq!(v.tokens(), &[PAD, UNK]);
    }

    #[test]
    fn serde_round_trip_and_rejects_bad_lists() {
        let v = build_vocab(&corpus(), 1);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocabulary>(&s).unwrap(), v);
        assert!(serde_json::from_str::<Vocabulary>(r#"["a","b"]"#).is_err());
    }
}
