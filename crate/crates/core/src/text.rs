//! Tokenization and span bookkeeping shared by every stage.
//!
//! Tokens are maximal runs of alphanumeric characters; every other
//! non-whitespace character is a token of its own. Offsets exposed through
//! [`TokenSpan`] count Unicode scalar values, not bytes.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub byte_start: usize,
    pub byte_end: usize,
    pub char_start: usize,
    pub char_end: usize,
}

impl Token<'_> {
    pub fn is_word(&self) -> bool {
        self.text.chars().all(char::is_alphanumeric)
    }
}

pub fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    // (byte_start, char_start) of the word run in progress
    let mut run: Option<(usize, usize)> = None;
    let mut char_idx = 0;
    for (byte_idx, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if run.is_none() {
                run = Some((byte_idx, char_idx));
            }
        } else {
            if let Some((bs, cs)) = run.take() {
                tokens.push(Token {
                    text: &text[bs..byte_idx],
                    byte_start: bs,
                    byte_end: byte_idx,
                    char_start: cs,
                    char_end: char_idx,
                });
            }
            if !c.is_whitespace() {
                let end = byte_idx + c.len_utf8();
                tokens.push(Token {
                    text: &text[byte_idx..end],
                    byte_start: byte_idx,
                    byte_end: end,
                    char_start: char_idx,
                    char_end: char_idx + 1,
                });
            }
        }
        char_idx += 1;
    }
    if let Some((bs, cs)) = run {
        tokens.push(Token {
            text: &text[bs..],
            byte_start: bs,
            byte_end: text.len(),
            char_start: cs,
            char_end: char_idx,
        });
    }
    tokens
}

/// Lowercased tokens joined by single spaces; the key form used for phrase lookup.
pub fn phrase_key(text: &str) -> String {
    tokenize(text)
        .iter()
        .map(|t| t.text.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Collapse every whitespace run (tabs and newlines included) to one space and trim.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Byte offset of the `char_idx`-th character; `char_idx == char_len` maps to `text.len()`.
pub fn byte_offset(text: &str, char_idx: usize) -> Option<usize> {
    if char_idx == 0 {
        return Some(0);
    }
    let mut count = 0;
    for (b, _) in text.char_indices() {
        if count == char_idx {
            return Some(b);
        }
        count += 1;
    }
    (count == char_idx).then_some(text.len())
}

/// A contiguous region of a sentence.
///
/// `start`/`end` are character offsets, `token_start..token_end` the indices
/// of the covered tokens under [`tokenize`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
    #[serde(default)]
    pub token_start: usize,
    #[serde(default)]
    pub token_end: usize,
    pub surface: String,
}

impl TokenSpan {
    /// Span covering tokens `first..=last` of `tokens`, which were produced from `text`.
    pub fn from_tokens(text: &str, tokens: &[Token<'_>], first: usize, last: usize) -> Self {
        let a = &tokens[first];
        let b = &tokens[last];
        TokenSpan {
            start: a.char_start,
            end: b.char_end,
            token_start: first,
            token_end: last + 1,
            surface: text[a.byte_start..b.byte_end].to_string(),
        }
    }

    /// Build a span from character offsets, deriving surface and token indices.
    pub fn from_char_range(text: &str, start: usize, end: usize) -> Result<Self> {
        let range = char_range_to_bytes(text, start, end)?;
        let tokens = tokenize(text);
        let token_start = tokens
            .iter()
            .position(|t| t.char_end > start)
            .unwrap_or(tokens.len());
        let token_end = tokens
            .iter()
            .rposition(|t| t.char_start < end)
            .map_or(token_start, |i| (i + 1).max(token_start));
        Ok(TokenSpan {
            start,
            end,
            token_start,
            token_end,
            surface: text[range].to_string(),
        })
    }

    pub fn byte_range(&self, text: &str) -> Result<Range<usize>> {
        char_range_to_bytes(text, self.start, self.end)
    }

    /// Checks offsets against `text` and that `surface` matches the slice.
    pub fn validate(&self, text: &str) -> Result<()> {
        let range = self.byte_range(text)?;
        if text[range] != self.surface {
            return Err(Error::InvalidSpan(format!(
                "surface `{}` does not match text at {}..{}",
                self.surface, self.start, self.end
            )));
        }
        Ok(())
    }

    pub fn overlaps(&self, other: &TokenSpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

fn char_range_to_bytes(text: &str, start: usize, end: usize) -> Result<Range<usize>> {
    if start >= end {
        return Err(Error::InvalidSpan(format!(
            "empty or inverted range {start}..{end}"
        )));
    }
    match (byte_offset(text, start), byte_offset(text, end)) {
        (Some(s), Some(e)) => Ok(s..e),
        _ => Err(Error::InvalidSpan(format!(
            "range {start}..{end} exceeds text length {}",
            char_len(text)
        ))),
    }
}

/// Sort spans by start and reject overlaps.
pub fn sorted_disjoint(spans: &[TokenSpan]) -> Result<Vec<TokenSpan>> {
    let mut sorted = spans.to_vec();
    sorted.sort_by_key(|s| (s.start, s.end));
    for pair in sorted.windows(2) {
        if pair[0].overlaps(&pair[1]) {
            return Err(Error::InvalidSpan(format!(
                "overlapping spans `{}` and `{}`",
                pair[0].surface, pair[1].surface
            )));
        }
    }
    Ok(sorted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_words_and_punctuation() {
        let toks: Vec<_> = tokenize("restore America's soft power.")
            .iter()
            .map(|t| t.text)
            .collect();
        assert_eq!(toks, ["restore", "America", "'", "s", "soft", "power", "."]);
    }

    #[test]
    fn offsets_count_chars() {
        let text = "café au lait";
        let toks = tokenize(text);
        assert_eq!(toks[1].char_start, 5);
        assert_eq!(toks[1].byte_start, 6);
        let span = TokenSpan::from_tokens(text, &toks, 1, 2);
        assert_eq!(span.surface, "au lait");
        span.validate(text).unwrap();
        assert_eq!(span.byte_range(text).unwrap(), 6..13);
    }

    #[test]
    fn whitespace_normalization() {
        assert_eq!(normalize_whitespace(" a\tb\n\nc  "), "a b c");
    }

    #[test]
    fn span_validation_rejects_bad_ranges() {
        let text = "abc";
        assert!(TokenSpan::from_char_range(text, 2, 2).is_err());
        assert!(TokenSpan::from_char_range(text, 1, 4).is_err());
        let mut s = TokenSpan::from_char_range(text, 0, 3).unwrap();
        s.surface = "abd".into();
        assert!(s.validate(text).is_err());
    }

    #[test]
    fn overlap_detection() {
        let t = "soft power vacuum";
        let a = TokenSpan::from_char_range(t, 0, 10).unwrap();
        let b = TokenSpan::from_char_range(t, 5, 17).unwrap();
        assert!(sorted_disjoint(&[a.clone(), b]).is_err());
        let c = TokenSpan::from_char_range(t, 11, 17).unwrap();
        assert_eq!(
            sorted_disjoint(&[c.clone(), a.clone()]).unwrap(),
            vec![a, c]
        );
    }
}
