//! Connotation-constrained masked rewriting.
//!
//! Used twice: to turn premises into pseudo-parallel training data
//! ([`RewriteMode::Different`]) and as the lexical-replacement baseline that
//! prefers trust-bearing substitutes ([`RewriteMode::Prefer`]).

use std::fmt;
use std::ops::{AddAssign, Range};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backends::{MaskedInfiller, MASK_TOKEN};
use crate::error::{Error, Result};
use crate::lexicon::{has_different_connotation, ConnotationLexicon, EmotionLabel, EmotionSet};
use crate::pairformat::contains_marker;
use crate::text::{normalize_whitespace, sorted_disjoint, tokenize, TokenSpan};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replacement {
    /// Location of the replaced text in the original sentence.
    pub span: TokenSpan,
    pub original: String,
    pub replacement: String,
    pub original_emotions: EmotionSet,
    pub replacement_emotions: EmotionSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteResult {
    pub original: String,
    pub rewritten: String,
    pub replacements: Vec<Replacement>,
}

impl RewriteResult {
    pub fn unchanged(text: impl Into<String>) -> Self {
        let text = text.into();
        RewriteResult {
            rewritten: text.clone(),
            original: text,
            replacements: Vec::new(),
        }
    }

    /// Build a result by splicing `replacements` into `original`.
    pub fn from_replacements(
        original: impl Into<String>,
        replacements: Vec<Replacement>,
    ) -> Result<Self> {
        let original = original.into();
        let rewritten = apply_replacements(&original, &replacements)?;
        Ok(RewriteResult {
            original,
            rewritten,
            replacements,
        })
    }

    /// Byte ranges of the replacement strings inside `rewritten`.
    pub fn rewritten_ranges(&self) -> Vec<Range<usize>> {
        let mut delta: isize = 0;
        self.replacements
            .iter()
            .map(|r| {
                let old = r
                    .span
                    .byte_range(&self.original)
                    .expect("replacement span lies inside the original");
                let start = (old.start as isize + delta) as usize;
                delta += r.replacement.len() as isize - old.len() as isize;
                start..start + r.replacement.len()
            })
            .collect()
    }

    /// Checks every structural invariant of the result.
    pub fn validate(&self) -> Result<()> {
        if apply_replacements(&self.original, &self.replacements)? != self.rewritten {
            return Err(Error::InvalidInput(
                "replacements do not reproduce the rewritten sentence".into(),
            ));
        }
        for r in &self.replacements {
            if r.original.to_lowercase() == r.replacement.to_lowercase() {
                return Err(Error::InvalidInput(format!(
                    "`{}` replaced by itself",
                    r.original
                )));
            }
        }
        Ok(())
    }
}

/// Splice replacements into `original`; spans must be left-to-right and disjoint.
pub fn apply_replacements(original: &str, replacements: &[Replacement]) -> Result<String> {
    let mut out = String::with_capacity(original.len());
    let mut cursor = 0;
    for r in replacements {
        r.span.validate(original)?;
        if r.span.surface != r.original {
            return Err(Error::InvalidSpan(format!(
                "span surface `{}` differs from recorded original `{}`",
                r.span.surface, r.original
            )));
        }
        let range = r.span.byte_range(original)?;
        if range.start < cursor {
            return Err(Error::InvalidSpan(
                "replacements overlap or are out of order".into(),
            ));
        }
        out.push_str(&original[cursor..range.start]);
        out.push_str(&r.replacement);
        cursor = range.end;
    }
    out.push_str(&original[cursor..]);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewriteMode {
    /// Accept only substitutes whose emotion set differs from the original's.
    Different,
    /// Prefer substitutes carrying the emotion; otherwise take the top survivor.
    Prefer(EmotionLabel),
}

impl RewriteMode {
    pub fn prefer(label: EmotionLabel) -> Result<Self> {
        if label == EmotionLabel::Neutral {
            return Err(Error::Config("cannot prefer the neutral label".into()));
        }
        Ok(RewriteMode::Prefer(label))
    }
}

impl fmt::Display for RewriteMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RewriteMode::Different => f.write_str("different"),
            RewriteMode::Prefer(l) => write!(f, "prefer:{l}"),
        }
    }
}

impl FromStr for RewriteMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "different" => Ok(RewriteMode::Different),
            Some(("prefer", label)) => RewriteMode::prefer(label.parse()?),
            _ => Err(Error::Config(format!(
                "rewrite mode `{s}` must be `different` or `prefer:<emotion>`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RewriteConfig {
    /// Infiller candidates requested per mask.
    pub top_n: usize,
    pub max_spans: Option<usize>,
}

impl Default for RewriteConfig {
    fn default() -> Self {
        RewriteConfig {
            top_n: 20,
            max_spans: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteStats {
    pub candidates: usize,
    pub accepted: usize,
    pub skipped: usize,
    pub fallback_used: usize,
    pub backend_errors: usize,
}

impl AddAssign for RewriteStats {
    fn add_assign(&mut self, o: Self) {
        self.candidates += o.candidates;
        self.accepted += o.accepted;
        self.skipped += o.skipped;
        self.fallback_used += o.fallback_used;
        self.backend_errors += o.backend_errors;
    }
}

/// Word tokens with a non-neutral connotation, left to right, at most `max_spans`.
pub fn select_candidates(
    text: &str,
    lex: &ConnotationLexicon,
    max_spans: Option<usize>,
) -> Vec<TokenSpan> {
    let tokens = tokenize(text);
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.is_word() && !lex.lookup(t.text).is_neutral())
        .take(max_spans.unwrap_or(usize::MAX))
        .map(|(i, _)| TokenSpan::from_tokens(text, &tokens, i, i))
        .collect()
}

/// Cleans an infiller token; `None` if it must not be used as a substitute.
fn usable_candidate(token: &str, original: &str) -> Option<String> {
    let t = normalize_whitespace(token);
    let first = t.chars().next()?;
    if !first.is_alphabetic() {
        // punctuation or a sub-token fragment
        return None;
    }
    if t.to_lowercase() == original.to_lowercase() || contains_marker(&t) || t.contains(MASK_TOKEN)
    {
        return None;
    }
    Some(t)
}

/// Mask `span` in `text`, query the infiller and pick a substitute under `mode`.
///
/// The returned replacement's span refers to `text`.
pub fn infill(
    text: &str,
    span: &TokenSpan,
    mode: RewriteMode,
    infiller: &dyn MaskedInfiller,
    lex: &ConnotationLexicon,
    top_n: usize,
    stats: &mut RewriteStats,
) -> Option<Replacement> {
    let range = span.byte_range(text).ok()?;
    let masked = format!(
        "{}{}{}",
        &text[..range.start],
        MASK_TOKEN,
        &text[range.end..]
    );
    let predictions = match infiller.predict(&masked, top_n) {
        Ok(p) => p,
        Err(_) => {
            stats.backend_errors += 1;
            return None;
        }
    };
    let mut predictions: Vec<_> = predictions
        .into_iter()
        .filter(|p| p.score.is_finite())
        .take(top_n)
        .collect();
    predictions.sort_by(|a, b| b.score.total_cmp(&a.score));

    let original = &text[range];
    let original_emotions = lex.phrase_emotions(original);
    let survivors: Vec<(String, EmotionSet)> = predictions
        .iter()
        .filter_map(|p| usable_candidate(&p.token, original))
        .map(|t| {
            let e = lex.phrase_emotions(&t);
            (t, e)
        })
        .collect();

    let chosen = match mode {
        RewriteMode::Different => survivors
            .into_iter()
            .find(|(_, e)| has_different_connotation(original_emotions, *e)),
        RewriteMode::Prefer(target) => match survivors.iter().position(|(_, e)| e.contains(target))
        {
            Some(i) => survivors.into_iter().nth(i),
            None => {
                let top = survivors.into_iter().next();
                if top.is_some() {
                    stats.fallback_used += 1;
                }
                top
            }
        },
    };
    match chosen {
        Some((replacement, replacement_emotions)) => {
            stats.accepted += 1;
            Some(Replacement {
                span: span.clone(),
                original: original.to_string(),
                replacement,
                original_emotions,
                replacement_emotions,
            })
        }
        None => {
            stats.skipped += 1;
            None
        }
    }
}

/// Apply [`infill`] to each span left to right, masking against the partially
/// rewritten sentence. Spans are given in `text` coordinates.
fn rewrite_spans(
    text: &str,
    spans: &[TokenSpan],
    mode: RewriteMode,
    infiller: &dyn MaskedInfiller,
    lex: &ConnotationLexicon,
    top_n: usize,
    stats: &mut RewriteStats,
) -> Result<RewriteResult> {
    let mut current = text.to_string();
    let mut delta: isize = 0;
    let mut replacements = Vec::new();
    for span in spans {
        stats.candidates += 1;
        let orig = span.byte_range(text)?;
        let start = (orig.start as isize + delta) as usize;
        let end = start + orig.len();
        let cs = current[..start].chars().count();
        let shifted =
            TokenSpan::from_char_range(&current, cs, cs + current[start..end].chars().count())?;
        if let Some(rep) = infill(&current, &shifted, mode, infiller, lex, top_n, stats) {
            current.replace_range(start..end, &rep.replacement);
            delta += rep.replacement.len() as isize - orig.len() as isize;
            replacements.push(Replacement {
                span: span.clone(),
                ..rep
            });
        }
    }
    Ok(RewriteResult {
        original: text.to_string(),
        rewritten: current,
        replacements,
    })
}

/// Rewrite every candidate word of `text` (see [`select_candidates`]).
pub fn rewrite_sentence(
    text: &str,
    mode: RewriteMode,
    infiller: &dyn MaskedInfiller,
    lex: &ConnotationLexicon,
    cfg: &RewriteConfig,
) -> (RewriteResult, RewriteStats) {
    let mut stats = RewriteStats::default();
    let spans = select_candidates(text, lex, cfg.max_spans);
    let result = rewrite_spans(text, &spans, mode, infiller, lex, cfg.top_n, &mut stats)
        .expect("candidate spans come from tokenizing the same text");
    (result, stats)
}

/// Lexical-replacement baseline: substitute exactly `target_spans`, each as a
/// single mask, preferring trust-bearing candidates.
pub fn lexrep_reframe(
    text: &str,
    target_spans: &[TokenSpan],
    infiller: &dyn MaskedInfiller,
    lex: &ConnotationLexicon,
    top_n: usize,
) -> Result<(RewriteResult, RewriteStats)> {
    let spans = sorted_disjoint(target_spans)?;
    for s in &spans {
        s.validate(text)?;
    }
    let mut stats = RewriteStats::default();
    let result = rewrite_spans(
        text,
        &spans,
        RewriteMode::Prefer(EmotionLabel::Trust),
        infiller,
        lex,
        top_n,
        &mut stats,
    )?;
    Ok((result, stats))
}
