//! Connotation and emotion lexicons, partisan collocations, and the span
//! finders built on them.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::text::{phrase_key, tokenize, TokenSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EmotionLabel {
    Anticipation,
    Anger,
    Fear,
    Joy,
    Trust,
    Sadness,
    Disgust,
    Surprise,
    Neutral,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; 9] = [
        EmotionLabel::Anticipation,
        EmotionLabel::Anger,
        EmotionLabel::Fear,
        EmotionLabel::Joy,
        EmotionLabel::Trust,
        EmotionLabel::Sadness,
        EmotionLabel::Disgust,
        EmotionLabel::Surprise,
        EmotionLabel::Neutral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EmotionLabel::Anticipation => "anticipation",
            EmotionLabel::Anger => "anger",
            EmotionLabel::Fear => "fear",
            EmotionLabel::Joy => "joy",
            EmotionLabel::Trust => "trust",
            EmotionLabel::Sadness => "sadness",
            EmotionLabel::Disgust => "disgust",
            EmotionLabel::Surprise => "surprise",
            EmotionLabel::Neutral => "neutral",
        }
    }

    fn bit(self) -> u16 {
        1 << (self as u16)
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmotionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EmotionLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::UnknownEmotion(s.to_string()))
    }
}

impl Serialize for EmotionLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for EmotionLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A non-empty set of emotion labels. `neutral` never co-occurs with another label.
///
/// Iteration order is the declaration order of [`EmotionLabel`].
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct EmotionSet(u16);

impl EmotionSet {
    pub const NEUTRAL: EmotionSet = EmotionSet(1 << (EmotionLabel::Neutral as u16));

    pub fn single(label: EmotionLabel) -> Self {
        EmotionSet(label.bit())
    }

    pub fn new(labels: impl IntoIterator<Item = EmotionLabel>) -> Result<Self> {
        let bits = labels.into_iter().fold(0u16, |acc, l| acc | l.bit());
        if bits == 0 {
            return Err(Error::InvalidEmotionSet("empty".into()));
        }
        if bits & EmotionLabel::Neutral.bit() != 0 && bits != EmotionLabel::Neutral.bit() {
            return Err(Error::InvalidEmotionSet(
                "neutral cannot be combined with other labels".into(),
            ));
        }
        Ok(EmotionSet(bits))
    }

    pub fn contains(self, label: EmotionLabel) -> bool {
        self.0 & label.bit() != 0
    }

    pub fn is_neutral(self) -> bool {
        self == Self::NEUTRAL
    }

    /// Union where `neutral` is the identity element.
    pub fn union(self, other: EmotionSet) -> EmotionSet {
        match (self.is_neutral(), other.is_neutral()) {
            (true, _) => other,
            (_, true) => self,
            _ => EmotionSet(self.0 | other.0),
        }
    }

    pub fn iter(self) -> impl Iterator<Item = EmotionLabel> {
        EmotionLabel::ALL
            .into_iter()
            .filter(move |l| self.contains(*l))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        false
    }
}

impl fmt::Debug for EmotionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl fmt::Display for EmotionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<_> = self.iter().map(EmotionLabel::as_str).collect();
        f.write_str(&labels.join(";"))
    }
}

impl FromStr for EmotionSet {
    type Err = Error;

    /// Parses `;`-joined labels.
    fn from_str(s: &str) -> Result<Self> {
        let labels = s
            .split(';')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<EmotionLabel>>>()?;
        EmotionSet::new(labels)
    }
}

impl Serialize for EmotionSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for EmotionSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// True iff the two sets differ.
pub fn has_different_connotation(a: EmotionSet, b: EmotionSet) -> bool {
    a != b
}

/// Counters collected while ingesting a lexicon file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadStats {
    pub rows: usize,
    pub duplicates: usize,
    /// Rows whose word has more than one token; these are skipped.
    pub multi_token_rows: usize,
    /// Rows that only carried labels outside the closed label set (NRC sentiment columns).
    pub ignored_rows: usize,
}

fn normalize_word(word: &str) -> String {
    word.trim().to_lowercase()
}

fn is_single_token(word: &str) -> bool {
    tokenize(word).len() == 1
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Words labelled with emotional connotations.
#[derive(Debug, Clone)]
pub struct ConnotationLexicon {
    entries: BTreeMap<String, EmotionSet>,
    source_path: PathBuf,
    stats: LoadStats,
}

impl ConnotationLexicon {
    /// Reads a `word,emotions` CSV where emotions are `;`-joined labels.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut lex = Self::from_csv_str(&read_file(path)?)?;
        lex.source_path = path.to_path_buf();
        Ok(lex)
    }

    pub fn from_csv_str(data: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(data.as_bytes());
        let mut entries: BTreeMap<String, EmotionSet> = BTreeMap::new();
        let mut stats = LoadStats::default();
        let mut saw_header = false;
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                Error::malformed(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.iter().all(str::is_empty) {
                continue;
            }
            if !saw_header {
                saw_header = true;
                let header: Vec<_> = record.iter().map(str::to_lowercase).collect();
                if header != ["word", "emotions"] {
                    return Err(Error::malformed(line, "expected header `word,emotions`"));
                }
                continue;
            }
            if record.len() != 2 {
                return Err(Error::malformed(
                    line,
                    format!("expected 2 fields, found {}", record.len()),
                ));
            }
            let word = normalize_word(&record[0]);
            if word.is_empty() {
                return Err(Error::malformed(line, "empty word"));
            }
            let labels = record[1]
                .split(';')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(str::parse)
                .collect::<Result<Vec<EmotionLabel>>>()?;
            if labels.is_empty() {
                return Err(Error::malformed(line, "no emotion labels"));
            }
            // neutral next to real labels is absorbed by the union
            let set = labels.into_iter().fold(EmotionSet::NEUTRAL, |acc, l| {
                acc.union(EmotionSet::single(l))
            });
            stats.rows += 1;
            if !is_single_token(&word) {
                stats.multi_token_rows += 1;
                continue;
            }
            match entries.get_mut(&word) {
                Some(existing) => {
                    stats.duplicates += 1;
                    *existing = existing.union(set);
                }
                None => {
                    entries.insert(word, set);
                }
            }
        }
        if entries.is_empty() {
            return Err(Error::EmptyLexicon);
        }
        Ok(ConnotationLexicon {
            entries,
            source_path: PathBuf::new(),
            stats,
        })
    }

    /// Build directly from `(word, set)` pairs; duplicates are unioned.
    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, EmotionSet)>,
        S: AsRef<str>,
    {
        let mut map: BTreeMap<String, EmotionSet> = BTreeMap::new();
        let mut stats = LoadStats::default();
        for (word, set) in entries {
            let word = normalize_word(word.as_ref());
            stats.rows += 1;
            if word.is_empty() || !is_single_token(&word) {
                stats.multi_token_rows += 1;
                continue;
            }
            map.entry(word)
                .and_modify(|e| {
                    stats.duplicates += 1;
                    *e = e.union(set)
                })
                .or_insert(set);
        }
        if map.is_empty() {
            return Err(Error::EmptyLexicon);
        }
        Ok(ConnotationLexicon {
            entries: map,
            source_path: PathBuf::new(),
            stats,
        })
    }

    /// Case-insensitive exact-match lookup. Absent words are `{neutral}`.
    pub fn lookup(&self, token: &str) -> EmotionSet {
        debug_assert!(!token.is_empty(), "lookup of empty token");
        self.entries
            .get(&normalize_word(token))
            .copied()
            .unwrap_or(EmotionSet::NEUTRAL)
    }

    /// Emotions of a word or phrase: the union over its tokens, `{neutral}` if none carry any.
    pub fn phrase_emotions(&self, phrase: &str) -> EmotionSet {
        tokenize(phrase)
            .iter()
            .filter(|t| t.is_word())
            .fold(EmotionSet::NEUTRAL, |acc, t| acc.union(self.lookup(t.text)))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn source_path(&self) -> &Path {
        &self.source_path
    }

    pub fn stats(&self) -> &LoadStats {
        &self.stats
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, EmotionSet)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Word-level emotion associations in the NRC file layout.
#[derive(Debug, Clone)]
pub struct EmotionLexicon {
    entries: BTreeMap<String, EmotionSet>,
    stats: LoadStats,
}

impl EmotionLexicon {
    /// Reads `word<TAB>emotion<TAB>flag` rows. The NRC sentiment columns
    /// `positive`/`negative` are skipped since they are not emotions.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tsv_str(&read_file(path.as_ref())?)
    }

    pub fn from_tsv_str(data: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, EmotionSet> = BTreeMap::new();
        let mut stats = LoadStats::default();
        for (i, raw) in data.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::malformed(
                    line,
                    format!("expected 3 tab-separated fields, found {}", fields.len()),
                ));
            }
            let word = normalize_word(fields[0]);
            let label = fields[1].trim().to_lowercase();
            let flag = fields[2].trim();
            if word.is_empty() {
                return Err(Error::malformed(line, "empty word"));
            }
            stats.rows += 1;
            let member = match flag {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::malformed(
                        line,
                        format!("flag `{other}` is not 0 or 1"),
                    ))
                }
            };
            if label == "positive" || label == "negative" {
                stats.ignored_rows += 1;
                continue;
            }
            let label: EmotionLabel = label.parse()?;
            if !member {
                continue;
            }
            if !is_single_token(&word) {
                stats.multi_token_rows += 1;
                continue;
            }
            let set = EmotionSet::single(label);
            entries
                .entry(word)
                .and_modify(|e| *e = e.union(set))
                .or_insert(set);
        }
        if entries.is_empty() {
            return Err(Error::EmptyLexicon);
        }
        Ok(EmotionLexicon { entries, stats })
    }

    pub fn lookup(&self, token: &str) -> EmotionSet {
        self.entries
            .get(&normalize_word(token))
            .copied()
            .unwrap_or(EmotionSet::NEUTRAL)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stats(&self) -> &LoadStats {
        &self.stats
    }
}

/// Multi-word phrases targeted for reframing.
#[derive(Debug, Clone)]
pub struct CollocationList {
    phrases: HashSet<String>,
    max_len: usize,
}

impl CollocationList {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::from_text(&read_file(path.as_ref())?))
    }

    /// One phrase per line, `#` starts a comment line.
    pub fn from_text(data: &str) -> Self {
        Self::new(
            data.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn new<I, S>(phrases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = HashSet::new();
        let mut max_len = 0;
        for p in phrases {
            let key = phrase_key(p.as_ref());
            if key.is_empty() {
                continue;
            }
            max_len = max_len.max(key.split(' ').count());
            set.insert(key);
        }
        CollocationList {
            phrases: set,
            max_len,
        }
    }

    pub fn contains(&self, phrase: &str) -> bool {
        self.phrases.contains(&phrase_key(phrase))
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }
}

/// Word tokens whose emotion set contains `target`, left to right.
pub fn find_emotion_words(
    text: &str,
    lex: &EmotionLexicon,
    target: EmotionLabel,
) -> Vec<TokenSpan> {
    assert!(
        target != EmotionLabel::Neutral,
        "target emotion must not be neutral"
    );
    let tokens = tokenize(text);
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.is_word() && lex.lookup(t.text).contains(target))
        .map(|(i, _)| TokenSpan::from_tokens(text, &tokens, i, i))
        .collect()
}

/// Greedy leftmost-longest scan for listed phrases over lowercased tokens.
pub fn find_collocations(text: &str, coll: &CollocationList) -> Vec<TokenSpan> {
    let tokens = tokenize(text);
    let lowered: Vec<String> = tokens.iter().map(|t| t.text.to_lowercase()).collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let longest = (1..=coll.max_len.min(tokens.len() - i))
            .rev()
            .find(|&len| coll.phrases.contains(&lowered[i..i + len].join(" ")));
        match longest {
            Some(len) => {
                spans.push(TokenSpan::from_tokens(text, &tokens, i, i + len - 1));
                i += len;
            }
            None => i += 1,
        }
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(s: &str) -> EmotionSet {
        s.parse().unwrap()
    }

    const CSV: &str = "word,emotions\nresources,joy;trust\ndefense,anticipation;anger;fear\nprepare,anticipation\n";

    #[test]
    fn loads_rows() {
        let lex = ConnotationLexicon::from_csv_str(CSV).unwrap();
        assert_eq!(lex.lookup("resources"), set("joy;trust"));
        assert_eq!(lex.lookup("defense"), set("anticipation;anger;fear"));
        assert_eq!(lex.len(), 3);
    }

    #[test]
    fn lookup_folds_case_and_defaults_to_neutral() {
        let lex = ConnotationLexicon::from_csv_str(CSV).unwrap();
        assert_eq!(lex.lookup("Resources"), set("joy;trust"));
        assert_eq!(lex.lookup("tools"), EmotionSet::NEUTRAL);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(
            ConnotationLexicon::from_csv_str(""),
            Err(Error::EmptyLexicon)
        ));
        assert!(matches!(
            ConnotationLexicon::from_csv_str("word,emotions\n"),
            Err(Error::EmptyLexicon)
        ));
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = ConnotationLexicon::from_csv_str("word,emotions\nok,joy\nbad\n").unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 3, .. }), "{err}");
        let err = ConnotationLexicon::from_csv_str("word,emotions\nx,y,z\n").unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 2, .. }), "{err}");
    }

    #[test]
    fn unknown_label_is_named() {
        let err = ConnotationLexicon::from_csv_str("word,emotions\nx,joy;bliss\n").unwrap_err();
        assert_eq!(err.to_string(), "unknown emotion label `bliss`");
    }

    #[test]
    fn duplicates_union_and_multi_token_rows_are_flagged() {
        let lex = ConnotationLexicon::from_csv_str(
            "word,emotions\nhope,joy\nHope,trust\nsoft power,trust\nwar,neutral;fear\n",
        )
        .unwrap();
        assert_eq!(lex.lookup("hope"), set("joy;trust"));
        assert_eq!(lex.lookup("war"), set("fear"));
        assert_eq!(lex.stats().duplicates, 1);
        assert_eq!(lex.stats().multi_token_rows, 1);
        assert_eq!(lex.lookup("soft"), EmotionSet::NEUTRAL);
    }

    #[test]
    fn emotion_set_invariants() {
        assert!(EmotionSet::new([]).is_err());
        assert!(EmotionSet::new([EmotionLabel::Neutral, EmotionLabel::Joy]).is_err());
        let s =
            EmotionSet::new([EmotionLabel::Fear, EmotionLabel::Anger, EmotionLabel::Fear]).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.to_string(), "anger;fear");
    }

    #[test]
    fn different_connotation() {
        assert!(has_different_connotation(
            set("joy;trust"),
            EmotionSet::NEUTRAL
        ));
        assert!(!has_different_connotation(set("fear"), set("fear")));
        assert!(has_different_connotation(set("fear"), set("fear;anger")));
    }

    #[test]
    fn nrc_layout() {
        let tsv = "dangerous\tfear\t1\ndangerous\tjoy\t0\ndangerous\tnegative\t1\nthreat\tanger\t1\nthreat\tfear\t1\n";
        let lex = EmotionLexicon::from_tsv_str(tsv).unwrap();
        assert_eq!(lex.lookup("Dangerous"), set("fear"));
        assert_eq!(lex.lookup("threat"), set("anger;fear"));
        assert!(matches!(
            EmotionLexicon::from_tsv_str("x\tfear\t2\n"),
            Err(Error::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn emotion_words_in_order() {
        let lex = EmotionLexicon::from_tsv_str("dangerous\tfear\t1\n").unwrap();
        let spans = find_emotion_words("a dangerous folly", &lex, EmotionLabel::Fear);
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].surface, "dangerous");
        assert_eq!((spans[0].start, spans[0].end), (2, 11));
        let spans = find_emotion_words("Dangerous, so dangerous!", &lex, EmotionLabel::Fear);
        assert_eq!(spans.len(), 2);
        assert!(find_emotion_words("all calm", &lex, EmotionLabel::Fear).is_empty());
    }

    #[test]
    fn collocations_leftmost_longest() {
        let coll = CollocationList::from_text("# partisan\nsoft power\npower vacuum\n");
        let spans = find_collocations("restore America's soft power", &coll);
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].surface, "soft power");
        assert_eq!((spans[0].token_start, spans[0].token_end), (4, 6));

        let spans = find_collocations("soft power vacuum", &coll);
        assert_eq!(
            spans.iter().map(|s| s.surface.as_str()).collect::<Vec<_>>(),
            ["soft power"]
        );
        assert!(find_collocations("nothing here", &coll).is_empty());
        assert_eq!(coll.max_len(), 2);
    }

    #[test]
    fn collocations_prefer_longer_phrase() {
        let coll = CollocationList::new(["soft power", "soft power vacuum", "vacuum"]);
        let spans = find_collocations("A Soft Power Vacuum vacuum", &coll);
        let got: Vec<_> = spans.iter().map(|s| s.surface.as_str()).collect();
        assert_eq!(got, ["Soft Power Vacuum", "vacuum"]);
    }
}
