use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const SEP: usize = 3;

pub const RESERVED: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

/// Characters split off a word as standalone tokens. Hyphens and
/// apostrophes stay inside words.
const PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':', '"', '(', ')', '[', ']', '{', '}'];

/// Lowercased whitespace tokenization with punctuation split off.
///
/// `"Fun for only children."` yields `["fun", "for", "only", "children", "."]`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let lower = word.to_lowercase();
        let mut current = String::new();
        for ch in lower.chars() {
            if PUNCTUATION.contains(&ch) {
                if !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
                out.push(ch.to_string());
            } else {
                current.push(ch);
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

/// Token to id mapping with four reserved ids (`PAD`, `UNK`, `CLS`, `SEP`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// An empty vocabulary holding only the reserved tokens.
    pub fn reserved_only() -> Self {
        let id_to_token: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            token_to_id,
            id_to_token,
        }
    }

    /// Builds a vocabulary from raw texts. Tokens seen at least `min_count`
    /// times receive ids in order of first appearance.
    pub fn build<S: AsRef<str>>(texts: &[S], min_count: usize) -> Result<Self> {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut order: Vec<String> = Vec::new();
        for text in texts {
            for tok in tokenize(text.as_ref()) {
                let c = counts.entry(tok.clone()).or_insert(0);
                if *c == 0 {
                    order.push(tok);
                }
                *c += 1;
            }
        }
        if order.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut vocab = Self::reserved_only();
        for tok in order {
            if counts[&tok] >= min_count.max(1) {
                vocab.insert(tok);
            }
        }
        Ok(vocab)
    }

    fn insert(&mut self, tok: String) -> usize {
        if let Some(&id) = self.token_to_id.get(&tok) {
            return id;
        }
        let id = self.id_to_token.len();
        self.token_to_id.insert(tok.clone(), id);
        self.id_to_token.push(tok);
        id
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// Writes one token per line; the line number is the id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        for tok in &self.id_to_token {
            writeln!(f, "{tok}")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path)?;
        let mut vocab = Self::reserved_only();
        for (row, line) in BufReader::new(f).lines().enumerate() {
            let line = line?;
            if row < RESERVED.len() {
                if line != RESERVED[row] {
                    return Err(Error::row(path, row + 1, format!("expected reserved token {}", RESERVED[row])));
                }
                continue;
            }
            if line.is_empty() || vocab.contains(&line) {
                return Err(Error::row(path, row + 1, "empty or duplicate token"));
            }
            vocab.insert(line);
        }
        Ok(vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_splits_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("Fun for only children."),
            vec!["fun", "for", "only", "children", "."]
        );
        assert_eq!(tokenize("zzz-unknown-word"), vec!["zzz-unknown-word"]);
        assert_eq!(tokenize("  don't STOP!! "), vec!["don't", "stop", "!", "!"]);
        assert!(tokenize(" \t ").is_empty());
    }

    #[test]
    fn min_count_filters_rare_tokens() {
        let v = Vocabulary::build(&["a b", "a c"], 2).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), UNK);
        assert_eq!(v.id("c"), UNK);
    }

    #[test]
    fn single_token_corpus() {
        let v = Vocabulary::build(&["x"], 1).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.token(PAD), Some("[PAD]"));
        assert_eq!(v.token(UNK), Some("[UNK]"));
        assert_eq!(v.token(CLS), Some("[CLS]"));
        assert_eq!(v.token(SEP), Some("[SEP]"));
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(matches!(Vocabulary::build::<&str>(&[], 1), Err(Error::EmptyCorpus)));
        assert!(matches!(Vocabulary::build(&["  "], 1), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn ids_are_a_bijection() {
        let v = Vocabulary::build(&["the cat sat on the mat", "a dog"], 1).unwrap();
        for (id, tok) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(tok), id);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = Vocabulary::build(&["one two three", "two"], 1).unwrap();
        v.save(&path).unwrap();
        assert_eq!(Vocabulary::load(&path).unwrap(), v);
    }
}
