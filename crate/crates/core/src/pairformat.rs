//! Text format shared by training pairs and inference sources.
//!
//! A source is `code [DELIM] code ... <body>`, where the body is a sentence
//! whose edited spans are wrapped as `[SEP] span [SEP]`. The space between a
//! marker and the span it delimits is always present and belongs to the
//! marker; the space on the outer side of a marker, if any, belongs to the
//! sentence. That keeps parsing an exact inverse even when a span touches
//! punctuation (`your [SEP] safety [SEP].`).
//!
//! A source without spans and without codes is just the sentence. If such a
//! sentence happens to start with an emotion label the parser reads that word
//! as a control code; sentences from [`serialize_pair`] with at least one
//! replacement are never ambiguous.

use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::EmotionLabel;
use crate::rewrite::RewriteResult;
use crate::text::{normalize_whitespace, sorted_disjoint, TokenSpan};

pub const SEP: &str = "[SEP]";
pub const DELIM: &str = "[DELIM]";

pub fn contains_marker(text: &str) -> bool {
    text.contains(SEP) || text.contains(DELIM)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub source: String,
    pub target: String,
    pub control_codes: Vec<EmotionLabel>,
    pub span_count: usize,
}

impl TrainingPair {
    /// A pair with no edits: source and target are the same sentence.
    pub fn plain(text: impl Into<String>) -> Self {
        let text = text.into();
        TrainingPair {
            source: text.clone(),
            target: text,
            control_codes: Vec::new(),
            span_count: 0,
        }
    }
}

/// Result of [`parse_source`]. Spans index into `plain_text`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSource {
    pub codes: Vec<EmotionLabel>,
    pub plain_text: String,
    pub spans: Vec<TokenSpan>,
}

fn assemble(codes: &[EmotionLabel], body: &str) -> String {
    if codes.is_empty() {
        return body.to_string();
    }
    let codes: Vec<&str> = codes.iter().map(|c| c.as_str()).collect();
    format!("{} {}", codes.join(&format!(" {DELIM} ")), body)
}

/// Wrap the given (sorted, disjoint) byte ranges of `text` in `[SEP]` markers.
fn demarcate(text: &str, ranges: &[Range<usize>]) -> String {
    let mut out = String::with_capacity(text.len() + ranges.len() * 12);
    let mut cursor = 0;
    for r in ranges {
        out.push_str(&text[cursor..r.start]);
        out.push_str(SEP);
        out.push(' ');
        out.push_str(&text[r.clone()]);
        out.push(' ');
        out.push_str(SEP);
        cursor = r.end;
    }
    out.push_str(&text[cursor..]);
    out
}

/// Serialize a rewrite into a training pair: the rewritten sentence with its
/// replacements demarcated is the source, the original sentence the target.
///
/// Control codes are the emotions of the replaced words, flattened in
/// first-occurrence order without duplicates.
pub fn serialize_pair(r: &RewriteResult) -> TrainingPair {
    let mut codes: Vec<EmotionLabel> = Vec::new();
    for rep in &r.replacements {
        for label in rep.original_emotions.iter() {
            if !codes.contains(&label) {
                codes.push(label);
            }
        }
    }
    let ranges = r.rewritten_ranges();
    debug_assert!(!contains_marker(&r.original) && !contains_marker(&r.rewritten));
    TrainingPair {
        source: assemble(&codes, &demarcate(&r.rewritten, &ranges)),
        target: r.original.clone(),
        control_codes: codes,
        span_count: ranges.len(),
    }
}

/// Source used at inference time: one control code plus demarcated spans.
pub fn build_inference_source(
    text: &str,
    spans: &[TokenSpan],
    code: EmotionLabel,
) -> Result<String> {
    let spans = sorted_disjoint(spans)?;
    let ranges = spans
        .iter()
        .map(|s| {
            s.validate(text)?;
            s.byte_range(text)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(&[code], &demarcate(text, &ranges)))
}

/// Source without demarcators: the control code followed by the sentence.
pub fn build_plain_source(text: &str, code: EmotionLabel) -> String {
    assemble(&[code], text)
}

fn split_word(s: &str) -> (&str, Option<&str>) {
    match s.split_once(' ') {
        Some((w, rest)) => (w, Some(rest)),
        None => (s, None),
    }
}

/// Inverse of the source format.
pub fn parse_source(source: &str) -> Result<ParsedSource> {
    let mut codes = Vec::new();
    let mut rest = source;
    let has_delim = source.contains(DELIM);
    loop {
        let (word, tail) = split_word(rest);
        match word.parse::<EmotionLabel>() {
            Ok(label) => {
                codes.push(label);
                rest = tail.unwrap_or("");
            }
            Err(_) if !codes.is_empty() || has_delim => {
                return Err(Error::Format(format!("unknown control code `{word}`")));
            }
            Err(_) => break,
        }
        match rest.strip_prefix(DELIM) {
            Some(after) => {
                rest = after
                    .strip_prefix(' ')
                    .ok_or_else(|| Error::Format(format!("{DELIM} must be followed by a space")))?;
            }
            None => break,
        }
    }
    if rest.contains(DELIM) {
        return Err(Error::Format(format!("{DELIM} inside the sentence body")));
    }
    let body = rest;
    let marker_count = body.matches(SEP).count();
    if !marker_count.is_multiple_of(2) {
        return Err(Error::Format(format!(
            "odd number of {SEP} markers ({marker_count})"
        )));
    }

    let mut plain = String::with_capacity(body.len());
    let mut byte_spans = Vec::new();
    let mut rest = body;
    let mut open: Option<usize> = None;
    while let Some(idx) = rest.find(SEP) {
        match open.take() {
            None => {
                plain.push_str(&rest[..idx]);
                rest = rest[idx + SEP.len()..].strip_prefix(' ').ok_or_else(|| {
                    Error::Format(format!("opening {SEP} must be followed by a space"))
                })?;
                open = Some(plain.len());
            }
            Some(start) => {
                let inner = rest[..idx].strip_suffix(' ').ok_or_else(|| {
                    Error::Format(format!("closing {SEP} must be preceded by a space"))
                })?;
                if inner.is_empty() {
                    return Err(Error::Format("empty demarcated span".into()));
                }
                plain.push_str(inner);
                byte_spans.push(start..plain.len());
                rest = &rest[idx + SEP.len()..];
            }
        }
    }
    plain.push_str(rest);

    let spans = byte_spans
        .into_iter()
        .map(|r| {
            let start = plain[..r.start].chars().count();
            let end = start + plain[r].chars().count();
            TokenSpan::from_char_range(&plain, start, end)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ParsedSource {
        codes,
        plain_text: plain,
        spans,
    })
}

/// The sentence inside a source, markers and codes removed. Malformed
/// sources are cleaned leniently instead of failing.
pub fn plain_body(source: &str) -> String {
    match parse_source(source) {
        Ok(p) => p.plain_text,
        Err(_) => {
            let words: Vec<&str> = source
                .split_whitespace()
                .filter(|w| *w != SEP && *w != DELIM)
                .collect();
            let skip = words
                .iter()
                .take_while(|w| w.parse::<EmotionLabel>().is_ok())
                .count();
            normalize_whitespace(&words[skip..].join(" "))
        }
    }
}

fn check_field(field: &str, what: &str) -> Result<()> {
    if field.contains('\t') || field.contains('\n') || field.contains('\r') {
        return Err(Error::InvalidInput(format!(
            "{what} contains a tab or newline"
        )));
    }
    Ok(())
}

/// `source<TAB>target` lines, UTF-8, LF endings.
pub fn write_tsv(pairs: &[TrainingPair], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = String::new();
    for p in pairs {
        check_field(&p.source, "source")?;
        check_field(&p.target, "target")?;
        buf.push_str(&p.source);
        buf.push('\t');
        buf.push_str(&p.target);
        buf.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn parse_tsv(data: &str) -> Result<Vec<TrainingPair>> {
    let mut pairs = Vec::new();
    for (i, line) in data.split_terminator('\n').enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::malformed(
                i + 1,
                format!("expected exactly one tab, found {}", fields.len() - 1),
            ));
        }
        let parsed = parse_source(fields[0]).map_err(|e| Error::malformed(i + 1, e.to_string()))?;
        pairs.push(TrainingPair {
            source: fields[0].to_string(),
            target: fields[1].to_string(),
            control_codes: parsed.codes,
            span_count: parsed.spans.len(),
        });
    }
    Ok(pairs)
}

pub fn read_tsv(path: impl AsRef<Path>) -> Result<Vec<TrainingPair>> {
    let path = path.as_ref();
    parse_tsv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}
