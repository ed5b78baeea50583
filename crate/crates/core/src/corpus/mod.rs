//! Tokenization, vocabularies, dataset files and the synthetic task generator.

mod dataset;
mod synthetic;
mod vocab;

use std::ops::Range;

pub use dataset::{load_dataset, read_rows, DataFormat, LabelMap, LoadOptions, RawRow, Schema, Split};
pub use synthetic::{generate_synthetic, keyword_oracle, SyntheticConfig, SyntheticData, Task};
pub use vocab::{tokenize, Vocabulary, CLS, PAD, RESERVED, SEP, UNK};

use crate::error::{Error, Result};

/// Token ids plus a mask marking special tokens, which are never mixed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    ids: Vec<usize>,
    special_mask: Vec<bool>,
}

impl TokenSequence {
    pub fn new(ids: Vec<usize>, special_mask: Vec<bool>) -> Result<Self> {
        if ids.len() != special_mask.len() {
            return Err(Error::Config(format!(
                "ids ({}) and special mask ({}) differ in length",
                ids.len(),
                special_mask.len()
            )));
        }
        Ok(Self { ids, special_mask })
    }

    /// `[CLS] content... [SEP]`, with the mask derived from the layout.
    pub fn from_content(content: &[usize]) -> Self {
        let mut ids = Vec::with_capacity(content.len() + 2);
        ids.push(CLS);
        ids.extend_from_slice(content);
        ids.push(SEP);
        let mut special_mask = vec![false; ids.len()];
        special_mask[0] = true;
        special_mask[ids.len() - 1] = true;
        Self { ids, special_mask }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn special_mask(&self) -> &[bool] {
        &self.special_mask
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn content_length(&self) -> usize {
        self.special_mask.iter().filter(|s| !**s).count()
    }

    pub fn content_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.special_mask[i]).collect()
    }

    /// The contiguous block of content positions.
    pub fn content_range(&self) -> Result<Range<usize>> {
        let pos = self.content_positions();
        match (pos.first(), pos.last()) {
            (Some(&a), Some(&b)) if b - a + 1 == pos.len() => Ok(a..b + 1),
            (Some(_), Some(_)) => Err(Error::NonContiguousContent),
            _ => Err(Error::EmptyContent),
        }
    }

    pub(crate) fn set_id(&mut self, pos: usize, id: usize) {
        debug_assert!(!self.special_mask[pos]);
        self.ids[pos] = id;
    }

    /// Appends `PAD` tokens (marked special) up to `len`.
    pub fn padded_to(&self, len: usize) -> Self {
        let mut out = self.clone();
        while out.ids.len() < len {
            out.ids.push(PAD);
            out.special_mask.push(true);
        }
        out
    }
}

/// Encodes raw text as `[CLS] tokens [SEP]`, keeping the prefix when the
/// text is longer than `max_len - 2` tokens.
pub fn encode(vocab: &Vocabulary, text: &str, max_len: usize) -> Result<TokenSequence> {
    if max_len < 3 {
        return Err(Error::MaxLenTooSmall(max_len));
    }
    let content: Vec<usize> = tokenize(text)
        .iter()
        .take(max_len - 2)
        .map(|t| vocab.id(t))
        .collect();
    if content.is_empty() {
        return Err(Error::EmptyContent);
    }
    Ok(TokenSequence::from_content(&content))
}

/// Space-joined content tokens; special positions are skipped.
pub fn decode(vocab: &Vocabulary, seq: &TokenSequence) -> String {
    seq.content_positions()
        .into_iter()
        .map(|i| vocab.token(seq.ids()[i]).unwrap_or("[UNK]"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// One sentence (single task) or two (paired task) with a class index.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub sentences: Vec<TokenSequence>,
    pub label: usize,
}

impl LabeledExample {
    pub fn single(seq: TokenSequence, label: usize) -> Self {
        Self {
            sentences: vec![seq],
            label,
        }
    }

    pub fn paired(first: TokenSequence, second: TokenSequence, label: usize) -> Self {
        Self {
            sentences: vec![first, second],
            label,
        }
    }

    pub fn first(&self) -> &TokenSequence {
        &self.sentences[0]
    }

    pub fn second(&self) -> Option<&TokenSequence> {
        self.sentences.get(1)
    }

    pub fn is_paired(&self) -> bool {
        self.sentences.len() == 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<LabeledExample>,
    num_classes: usize,
    paired: bool,
    split: Split,
}

impl Dataset {
    pub fn new(examples: Vec<LabeledExample>, num_classes: usize, split: Split) -> Result<Self> {
        let first = examples.first().ok_or(Error::EmptyDataset)?;
        let paired = first.is_paired();
        for ex in &examples {
            if ex.label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: ex.label,
                    num_classes,
                });
            }
            if ex.is_paired() != paired {
                return Err(Error::SentenceCount {
                    expected: first.sentences.len(),
                    got: ex.sentences.len(),
                });
            }
        }
        Ok(Self {
            examples,
            num_classes,
            paired,
            split,
        })
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn is_paired(&self) -> bool {
        self.paired
    }

    pub fn split(&self) -> Split {
        self.split
    }
}
