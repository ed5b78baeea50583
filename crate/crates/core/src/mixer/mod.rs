//! Input-level mixing: saliency-guided span replacement and its ablations,
//! UNK replacement, and the ratio sampler used by the interpolation
//! baselines.
//!
//! Every input-level variant keeps the first sequence's frame: special
//! tokens stay where they are and the content length does not change. The
//! label ratio is always recounted from the mixed tokens:
//! `lambda = (tokens taken from b) / (content tokens of the mix)`.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::corpus::{TokenSequence, UNK};
use crate::error::{Error, Result};
use crate::model::SoftLabel;
use crate::saliency::SaliencyMap;

/// Mixing strategy. `None` trains without mixup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    None,
    Ssmix,
    RandomSpan,
    RandomToken,
    UnkReplace,
    EmbedMix,
    HiddenMix,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::None,
        Variant::EmbedMix,
        Variant::HiddenMix,
        Variant::Ssmix,
        Variant::RandomSpan,
        Variant::RandomToken,
        Variant::UnkReplace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::None => "none",
            Variant::Ssmix => "ssmix",
            Variant::RandomSpan => "random_span",
            Variant::RandomToken => "random_token",
            Variant::UnkReplace => "unk_replace",
            Variant::EmbedMix => "embedmix",
            Variant::HiddenMix => "hiddenmix",
        }
    }

    /// Variants that splice tokens rather than interpolate vectors.
    pub fn is_input_level(self) -> bool {
        matches!(
            self,
            Variant::Ssmix | Variant::RandomSpan | Variant::RandomToken | Variant::UnkReplace
        )
    }

    pub fn is_interpolation(self) -> bool {
        matches!(self, Variant::EmbedMix | Variant::HiddenMix)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixConfig {
    pub lambda0: f64,
    pub variant: Variant,
    pub alpha: f64,
}

impl MixConfig {
    pub fn new(variant: Variant, lambda0: f64, alpha: f64) -> Result<Self> {
        if !(lambda0 > 0.0 && lambda0 < 1.0) {
            return Err(Error::Config(format!("lambda0 must be in (0, 1), got {lambda0}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self {
            lambda0,
            variant,
            alpha,
        })
    }
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            lambda0: 0.1,
            variant: Variant::Ssmix,
            alpha: 0.2,
        }
    }
}

/// A contiguous run of content positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub len: usize,
}

impl Span {
    pub fn positions(self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanMode {
    Least,
    Most,
}

/// One replaced position of the mixed sequence. `source` is the position
/// in the second sequence the token came from, or `None` for UNK.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Replacement {
    pub position: usize,
    pub source: Option<usize>,
}

/// What happened to one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SentenceProvenance {
    pub replacements: Vec<Replacement>,
    /// Span removed from the first sequence, for span variants.
    pub span_a: Option<Span>,
    /// Span taken from the second sequence, for span variants.
    pub span_b: Option<Span>,
}

impl SentenceProvenance {
    pub fn from_b(&self) -> usize {
        self.replacements.iter().filter(|r| r.source.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixResult {
    pub mixed: Vec<TokenSequence>,
    pub soft_label: SoftLabel,
    pub provenance: Vec<SentenceProvenance>,
    pub lambda: f64,
}

/// `max(min(floor(lambda0 * len_a), len_b), 1)`.
///
/// The product is nudged by 1e-9 before flooring so that, for example,
/// `0.29 * 100` floors to 29 rather than 28.
pub fn span_length(lambda0: f64, len_a: usize, len_b: usize) -> Result<usize> {
    if len_a == 0 || len_b == 0 {
        return Err(Error::EmptyContent);
    }
    let prior = (lambda0 * len_a as f64 + 1e-9).floor().max(0.0) as usize;
    Ok(prior.min(len_b).max(1))
}

/// The window of `l` consecutive content positions with the smallest
/// (`Least`) or largest (`Most`) score sum. Ties go to the leftmost window.
pub fn select_span(sal: &SaliencyMap, special_mask: &[bool], l: usize, mode: SpanMode) -> Result<Span> {
    if sal.len() != special_mask.len() {
        return Err(Error::SaliencyLength {
            expected: special_mask.len(),
            got: sal.len(),
        });
    }
    let range = content_range(special_mask)?;
    if l == 0 || l > range.len() {
        return Err(Error::SpanTooLong {
            len: l,
            content: range.len(),
        });
    }
    let scores = sal.scores();
    let mut best: Option<(usize, f64)> = None;
    for start in range.start..=range.end - l {
        let sum: f64 = scores[start..start + l].iter().sum();
        let better = match (best, mode) {
            (None, _) => true,
            (Some((_, b)), SpanMode::Least) => sum < b,
            (Some((_, b)), SpanMode::Most) => sum > b,
        };
        if better {
            best = Some((start, sum));
        }
    }
    let (start, _) = best.expect("at least one window");
    Ok(Span { start, len: l })
}

fn content_range(mask: &[bool]) -> Result<std::ops::Range<usize>> {
    let first = mask.iter().position(|s| !s).ok_or(Error::EmptyContent)?;
    let last = mask.iter().rposition(|s| !s).expect("non-empty");
    if mask[first..=last].iter().any(|s| *s) {
        return Err(Error::NonContiguousContent);
    }
    Ok(first..last + 1)
}

fn splice_span(a: &TokenSequence, b: &TokenSequence, span_a: Span, span_b: Span) -> (TokenSequence, SentenceProvenance) {
    let mut mixed = a.clone();
    let replacements = span_a
        .positions()
        .zip(span_b.positions())
        .map(|(pa, pb)| {
            mixed.set_id(pa, b.ids()[pb]);
            Replacement {
                position: pa,
                source: Some(pb),
            }
        })
        .collect();
    (
        mixed,
        SentenceProvenance {
            replacements,
            span_a: Some(span_a),
            span_b: Some(span_b),
        },
    )
}

fn finish(y_a: usize, y_b: usize, parts: Vec<(TokenSequence, SentenceProvenance)>) -> Result<MixResult> {
    let from_b: usize = parts.iter().map(|(_, p)| p.from_b()).sum();
    let content: usize = parts.iter().map(|(s, _)| s.content_length()).sum();
    let lambda = from_b as f64 / content as f64;
    let (mixed, provenance) = parts.into_iter().unzip();
    Ok(MixResult {
        mixed,
        soft_label: SoftLabel::new(y_a, y_b, lambda)?,
        provenance,
        lambda,
    })
}

fn check_pairing(a: &[TokenSequence], b: &[TokenSequence]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::SentenceCount {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Saliency-guided span mixup. For each sentence, the least salient span of
/// `a` is replaced by the equally long most salient span of `b`. With two
/// sentences each is mixed independently and the ratio counts both.
pub fn ssmix(
    a: &[TokenSequence],
    b: &[TokenSequence],
    sal_a: &[SaliencyMap],
    sal_b: &[SaliencyMap],
    y_a: usize,
    y_b: usize,
    lambda0: f64,
) -> Result<MixResult> {
    check_pairing(a, b)?;
    if sal_a.len() != a.len() || sal_b.len() != b.len() {
        return Err(Error::SentenceCount {
            expected: a.len(),
            got: sal_a.len().min(sal_b.len()),
        });
    }
    let mut parts = Vec::with_capacity(a.len());
    for i in 0..a.len() {
        sal_a[i].check_aligned(&a[i])?;
        sal_b[i].check_aligned(&b[i])?;
        let l = span_length(lambda0, a[i].content_length(), b[i].content_length())?;
        let span_a = select_span(&sal_a[i], a[i].special_mask(), l, SpanMode::Least)?;
        let span_b = select_span(&sal_b[i], b[i].special_mask(), l, SpanMode::Most)?;
        parts.push(splice_span(&a[i], &b[i], span_a, span_b));
    }
    finish(y_a, y_b, parts)
}

/// [`ssmix`] for paired-sentence inputs `(p, q)`.
pub fn ssmix_paired(
    a: &[TokenSequence],
    b: &[TokenSequence],
    sal_a: &[SaliencyMap],
    sal_b: &[SaliencyMap],
    y_a: usize,
    y_b: usize,
    lambda0: f64,
) -> Result<MixResult> {
    if a.len() != 2 {
        return Err(Error::SentenceCount {
            expected: 2,
            got: a.len(),
        });
    }
    ssmix(a, b, sal_a, sal_b, y_a, y_b, lambda0)
}

/// Span mixup with both spans drawn uniformly over valid windows.
pub fn random_span_mix<R: Rng + ?Sized>(
    a: &[TokenSequence],
    b: &[TokenSequence],
    y_a: usize,
    y_b: usize,
    lambda0: f64,
    rng: &mut R,
) -> Result<MixResult> {
    check_pairing(a, b)?;
    let mut parts = Vec::with_capacity(a.len());
    for (sa, sb) in a.iter().zip(b) {
        let ra = sa.content_range()?;
        let rb = sb.content_range()?;
        let l = span_length(lambda0, ra.len(), rb.len())?;
        let span_a = Span {
            start: rng.random_range(ra.start..=ra.end - l),
            len: l,
        };
        let span_b = Span {
            start: rng.random_range(rb.start..=rb.end - l),
            len: l,
        };
        parts.push(splice_span(sa, sb, span_a, span_b));
    }
    finish(y_a, y_b, parts)
}

/// Position-preserving token mixup: `l` positions shared by the content of
/// both sequences are drawn without replacement, and each takes the token
/// of `b` at the same index.
pub fn random_token_mix<R: Rng + ?Sized>(
    a: &[TokenSequence],
    b: &[TokenSequence],
    y_a: usize,
    y_b: usize,
    lambda0: f64,
    rng: &mut R,
) -> Result<MixResult> {
    check_pairing(a, b)?;
    let mut parts = Vec::with_capacity(a.len());
    for (sa, sb) in a.iter().zip(b) {
        let eligible: Vec<usize> = sa
            .content_positions()
            .into_iter()
            .filter(|&i| i < sb.len() && !sb.special_mask()[i])
            .collect();
        if eligible.is_empty() {
            return Err(Error::NoSharedPositions);
        }
        let l = span_length(lambda0, sa.content_length(), sb.content_length())?.min(eligible.len());
        let mut picked: Vec<usize> = index::sample(rng, eligible.len(), l).into_iter().map(|k| eligible[k]).collect();
        picked.sort_unstable();
        let mut mixed = sa.clone();
        let replacements = picked
            .into_iter()
            .map(|p| {
                mixed.set_id(p, sb.ids()[p]);
                Replacement {
                    position: p,
                    source: Some(p),
                }
            })
            .collect();
        parts.push((
            mixed,
            SentenceProvenance {
                replacements,
                ..Default::default()
            },
        ));
    }
    finish(y_a, y_b, parts)
}

/// Word dropout baseline: `max(min(floor(lambda0 * n), n), 1)` random
/// content positions become UNK. The label stays `y_a` with ratio 0.
pub fn unk_replace<R: Rng + ?Sized>(a: &[TokenSequence], y_a: usize, lambda0: f64, rng: &mut R) -> Result<MixResult> {
    if a.is_empty() {
        return Err(Error::SentenceCount { expected: 1, got: 0 });
    }
    let mut parts = Vec::with_capacity(a.len());
    for sa in a {
        let positions = sa.content_positions();
        let k = span_length(lambda0, positions.len(), positions.len())?;
        let mut picked: Vec<usize> = index::sample(rng, positions.len(), k).into_iter().map(|i| positions[i]).collect();
        picked.sort_unstable();
        let mut mixed = sa.clone();
        let replacements = picked
            .into_iter()
            .map(|p| {
                mixed.set_id(p, UNK);
                Replacement {
                    position: p,
                    source: None,
                }
            })
            .collect();
        parts.push((
            mixed,
            SentenceProvenance {
                replacements,
                ..Default::default()
            },
        ));
    }
    finish(y_a, y_a, parts)
}

/// Draws `l' ~ Beta(alpha, alpha)` as `X / (X + Y)` with independent
/// `X, Y ~ Gamma(alpha, 1)`, and returns `max(l', 1 - l')`.
pub fn sample_interp_lambda<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::Config(format!("alpha {alpha}: {e}")))?;
    loop {
        let x = gamma.sample(rng);
        let y = gamma.sample(rng);
        let total = x + y;
        // Both draws can underflow to zero for very small alpha.
        if total > 0.0 && total.is_finite() {
            let l = x / total;
            return Ok(l.max(1.0 - l));
        }
    }
}
