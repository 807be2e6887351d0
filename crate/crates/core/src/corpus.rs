//! Argument corpora: JSONL ingestion, claim/premise labelling and sampled test sets.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backends::ArgumentClassifier;
use crate::error::{Error, Result};
use crate::lexicon::{
    find_collocations, find_emotion_words, CollocationList, EmotionLabel, EmotionLexicon,
};
use crate::pairformat::contains_marker;
use crate::parallel::map_ordered;
use crate::text::{normalize_whitespace, TokenSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgLabel {
    Claim,
    Premise,
    NonArgument,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgumentRecord {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<ArgLabel>,
}

impl ArgumentRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        ArgumentRecord {
            id: id.into(),
            text: normalize_whitespace(&text.into()),
            source: String::new(),
            label: None,
        }
    }

    pub fn with_label(mut self, label: ArgLabel) -> Self {
        self.label = Some(label);
        self
    }
}

/// Parse corpus JSONL: one object per line with `id` and `text`, optionally `source` and `label`.
pub fn parse_jsonl(data: &str) -> Result<Vec<ArgumentRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in data.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: ArgumentRecord =
            serde_json::from_str(line).map_err(|e| Error::malformed(i + 1, e.to_string()))?;
        rec.text = normalize_whitespace(&rec.text);
        if rec.text.is_empty() {
            return Err(Error::malformed(i + 1, "empty text"));
        }
        if contains_marker(&rec.text) {
            return Err(Error::malformed(
                i + 1,
                "text contains a reserved marker token",
            ));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn ingest(path: impl AsRef<Path>) -> Result<Vec<ArgumentRecord>> {
    let path = path.as_ref();
    parse_jsonl(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classified {
    pub records: Vec<ArgumentRecord>,
    /// Items the classifier failed on; they are labelled `non_argument`.
    pub warnings: usize,
}

pub fn classify_arguments(
    records: &[ArgumentRecord],
    classifier: &dyn ArgumentClassifier,
    workers: usize,
) -> Classified {
    let labels = map_ordered(records, workers, classifier.reentrant(), |r| {
        classifier.classify(&r.text)
    });
    let mut warnings = 0;
    let records = records
        .iter()
        .zip(labels)
        .map(|(r, label)| {
            let label = label.unwrap_or_else(|_| {
                warnings += 1;
                ArgLabel::NonArgument
            });
            r.clone().with_label(label)
        })
        .collect();
    Classified { records, warnings }
}

pub fn filter_premises(records: &[ArgumentRecord]) -> Result<Vec<ArgumentRecord>> {
    let mut out = Vec::new();
    for r in records {
        match r.label {
            None => return Err(Error::Unlabeled(r.id.clone())),
            Some(ArgLabel::Premise) => out.push(r.clone()),
            Some(_) => {}
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Partisan,
    Fear,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Partisan => "partisan",
            Task::Fear => "fear",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "partisan" => Ok(Task::Partisan),
            "fear" => Ok(Task::Fear),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

/// Lexical resources used to locate the spans a task targets.
#[derive(Debug, Clone, Copy, Default)]
pub struct SpanLexicons<'a> {
    pub collocations: Option<&'a CollocationList>,
    pub emotions: Option<&'a EmotionLexicon>,
}

impl SpanLexicons<'_> {
    pub fn find(&self, task: Task, text: &str) -> Result<Vec<TokenSpan>> {
        match task {
            Task::Partisan => self
                .collocations
                .map(|c| find_collocations(text, c))
                .ok_or_else(|| Error::Config("partisan task needs a collocation list".into())),
            Task::Fear => self
                .emotions
                .map(|l| find_emotion_words(text, l, EmotionLabel::Fear))
                .ok_or_else(|| Error::Config("fear task needs an emotion lexicon".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestItem {
    #[serde(flatten)]
    pub record: ArgumentRecord,
    pub task: Task,
    pub spans: Vec<TokenSpan>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledTestSet {
    pub task: Task,
    pub items: Vec<TestItem>,
    pub seed: u64,
}

/// Keep records with at least one task span, then draw `n` of them uniformly
/// without replacement. Sampled records keep their corpus order.
pub fn build_test_set(
    records: &[ArgumentRecord],
    task: Task,
    lexicons: SpanLexicons<'_>,
    n: usize,
    seed: u64,
) -> Result<SampledTestSet> {
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be at least 1".into()));
    }
    let mut pool = Vec::new();
    for r in records {
        let spans = lexicons.find(task, &r.text)?;
        if !spans.is_empty() {
            pool.push(TestItem {
                record: r.clone(),
                task,
                spans,
            });
        }
    }
    if pool.is_empty() {
        return Err(Error::NoMatchingArguments);
    }
    let items = if n >= pool.len() {
        pool
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = sample(&mut rng, pool.len(), n).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| pool[i].clone()).collect()
    };
    Ok(SampledTestSet { task, items, seed })
}

pub fn write_test_set(items: &[TestItem], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_test_set(path: impl AsRef<Path>) -> Result<Vec<TestItem>> {
    let path = path.as_ref();
    let data = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in data.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: TestItem =
            serde_json::from_str(line).map_err(|e| Error::malformed(i + 1, e.to_string()))?;
        for span in &item.spans {
            span.validate(&item.record.text)
                .map_err(|e| Error::malformed(i + 1, e.to_string()))?;
        }
        if !seen.insert(item.record.id.clone()) {
            return Err(Error::DuplicateId(item.record.id));
        }
        items.push(item);
    }
    Ok(items)
}
