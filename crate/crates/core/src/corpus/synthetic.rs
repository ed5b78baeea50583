//! Seeded keyword-topic datasets standing in for real benchmarks.
//!
//! Every class owns a disjoint set of pseudo-word keywords. A sentence has
//! 6 to 12 tokens: two to four keywords of its class, the rest drawn from a
//! shared pool of function words. The paired task asks whether two
//! sentences were drawn from the same topic.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, LabelMap, LabeledExample, RawRow, Split, Vocabulary};
use crate::error::{Error, Result};

const NOISE: [&str; 40] = [
    "the", "a", "of", "and", "to", "in", "is", "it", "that", "was", "for", "on", "are", "with", "as",
    "this", "at", "be", "by", "from", "or", "an", "but", "not", "what", "all", "were", "when", "we",
    "there", "can", "had", "which", "their", "said", "if", "do", "will", "each", "about",
];

const CONSONANTS: [char; 12] = ['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't'];
const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];

const MIN_LEN: usize = 6;
const MAX_LEN: usize = 12;
const MIN_KEYWORDS: usize = 2;
const MAX_KEYWORDS: usize = 4;

pub const MATCH: &str = "match";
pub const MISMATCH: &str = "mismatch";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Single,
    Paired,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Single => "single",
            Task::Paired => "paired",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Task::Single),
            "paired" => Ok(Task::Paired),
            _ => Err(Error::Config(format!("unknown task {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub task: Task,
    /// Number of keyword topics. Equals the class count for the single
    /// task; the paired task always has two classes.
    pub num_classes: usize,
    pub n_train: usize,
    pub n_valid: usize,
    pub seed: u64,
    pub keywords_per_class: usize,
    pub noise_words: usize,
}

impl SyntheticConfig {
    pub fn new(task: Task, num_classes: usize, n_train: usize, n_valid: usize, seed: u64) -> Self {
        Self {
            task,
            num_classes,
            n_train,
            n_valid,
            seed,
            keywords_per_class: 10,
            noise_words: 30,
        }
    }

    fn output_classes(&self) -> usize {
        match self.task {
            Task::Single => self.num_classes,
            Task::Paired => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub task: Task,
    pub train: Vec<RawRow>,
    pub valid: Vec<RawRow>,
    pub keywords: Vec<Vec<String>>,
    pub noise: Vec<String>,
    pub labels: LabelMap,
}

fn pseudo_word(k: usize) -> String {
    let mut w = String::with_capacity(4);
    w.push(CONSONANTS[k % 12]);
    w.push(VOWELS[(k / 12) % 5]);
    w.push(CONSONANTS[(k / 60) % 12]);
    w.push(VOWELS[(k / 720) % 5]);
    w
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    if cfg.num_classes < 2 {
        return Err(Error::Config("synthetic data needs at least 2 classes".into()));
    }
    let classes = cfg.output_classes();
    if cfg.n_train < classes || cfg.n_valid < classes {
        return Err(Error::Config(format!(
            "split sizes must be at least the class count ({classes})"
        )));
    }
    if cfg.noise_words < MAX_LEN - MIN_KEYWORDS || cfg.noise_words > NOISE.len() {
        return Err(Error::Config(format!(
            "noise_words must be in {}..={}",
            MAX_LEN - MIN_KEYWORDS,
            NOISE.len()
        )));
    }
    if cfg.keywords_per_class == 0 || cfg.num_classes * cfg.keywords_per_class > 3600 {
        return Err(Error::Config("keywords_per_class out of range".into()));
    }

    let keywords: Vec<Vec<String>> = (0..cfg.num_classes)
        .map(|c| {
            (0..cfg.keywords_per_class)
                .map(|j| pseudo_word(c * cfg.keywords_per_class + j))
                .collect()
        })
        .collect();
    let noise: Vec<String> = NOISE[..cfg.noise_words].iter().map(|s| s.to_string()).collect();

    let labels = match cfg.task {
        Task::Single => LabelMap::from_labels((0..cfg.num_classes).map(|c| format!("c{c}"))),
        Task::Paired => LabelMap::from_labels([MATCH, MISMATCH]),
    };

    let gen = Generator {
        cfg,
        keywords: &keywords,
        noise: &noise,
        labels: &labels,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train = gen.split(cfg.n_train, &mut rng);
    rng.set_stream(1);
    let valid = gen.split(cfg.n_valid, &mut rng);

    Ok(SyntheticData {
        task: cfg.task,
        train,
        valid,
        keywords,
        noise,
        labels,
    })
}

struct Generator<'a> {
    cfg: &'a SyntheticConfig,
    keywords: &'a [Vec<String>],
    noise: &'a [String],
    labels: &'a LabelMap,
}

impl Generator<'_> {
    fn sentence(&self, topic: usize, rng: &mut ChaCha8Rng) -> String {
        let len = rng.random_range(MIN_LEN..=MAX_LEN);
        let n_kw = rng.random_range(MIN_KEYWORDS..=MAX_KEYWORDS);
        let kw = &self.keywords[topic];
        let mut words: Vec<&str> = (0..n_kw).map(|_| kw[rng.random_range(0..kw.len())].as_str()).collect();
        words.extend((n_kw..len).map(|_| self.noise[rng.random_range(0..self.noise.len())].as_str()));
        words.shuffle(rng);
        words.join(" ")
    }

    fn split(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<RawRow> {
        let topics = self.cfg.num_classes;
        (0..n)
            .map(|i| match self.cfg.task {
                Task::Single => {
                    let c = i % topics;
                    RawRow {
                        texts: vec![self.sentence(c, rng)],
                        label: self.labels.label(c).unwrap().to_string(),
                    }
                }
                Task::Paired => {
                    let matched = i % 2 == 0;
                    let p = rng.random_range(0..topics);
                    let q = if matched {
                        p
                    } else {
                        (p + rng.random_range(1..topics)) % topics
                    };
                    RawRow {
                        texts: vec![self.sentence(p, rng), self.sentence(q, rng)],
                        label: if matched { MATCH } else { MISMATCH }.to_string(),
                    }
                }
            })
            .collect()
    }
}

impl SyntheticData {
    /// Builds a vocabulary over the training texts and encodes both splits.
    pub fn encode(&self, max_len: usize) -> Result<(Vocabulary, Dataset, Dataset)> {
        let texts: Vec<&str> = self.train.iter().flat_map(|r| r.texts.iter().map(String::as_str)).collect();
        let vocab = Vocabulary::build(&texts, 1)?;
        let encode_split = |rows: &[RawRow], split| -> Result<Dataset> {
            let examples = rows
                .iter()
                .map(|r| {
                    Ok(LabeledExample {
                        sentences: r
                            .texts
                            .iter()
                            .map(|t| super::encode(&vocab, t, max_len))
                            .collect::<Result<_>>()?,
                        label: self.labels.get(&r.label).expect("generator label"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Dataset::new(examples, self.labels.len(), split)
        };
        let train = encode_split(&self.train, Split::Train)?;
        let valid = encode_split(&self.valid, Split::Valid)?;
        Ok((vocab, train, valid))
    }

    fn topic_of(&self, text: &str) -> usize {
        let mut votes = vec![0usize; self.keywords.len()];
        for tok in text.split_whitespace() {
            for (c, kw) in self.keywords.iter().enumerate() {
                if kw.iter().any(|k| k == tok) {
                    votes[c] += 1;
                }
            }
        }
        // First maximum wins ties.
        let mut best = 0;
        for (c, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = c;
            }
        }
        best
    }
}

/// Keyword majority vote, the Bayes-optimal rule for the generated tasks.
pub fn keyword_oracle(data: &SyntheticData, row: &RawRow) -> String {
    match data.task {
        Task::Single => format!("c{}", data.topic_of(&row.texts[0])),
        Task::Paired => {
            if data.topic_of(&row.texts[0]) == data.topic_of(&row.texts[1]) {
                MATCH.to_string()
            } else {
                MISMATCH.to_string()
            }
        }
    }
}
