//! Model interfaces used by the pipeline and the deterministic mock
//! implementations that back tests and desk-scale runs.
//!
//! Every backend is selected by a spec string: `mock:<fixture>` loads a mock
//! from a JSON fixture (a few mocks also take an inline argument, e.g.
//! `mock:echo` or `mock:hash:64`), `model:<identifier>` names a real model.
//! No real-model adapters are compiled into this crate; callers that have one
//! (the Python bindings, for instance) pass it in as a trait object.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::ArgLabel;
use crate::error::{Error, Result};
use crate::pairformat::{plain_body, TrainingPair};
use crate::reframe::TrainConfig;
use crate::text::tokenize;

/// Placeholder substituted for the masked span in infiller queries.
pub const MASK_TOKEN: &str = "[MASK]";

const SIMPLEX_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub token: String,
    pub score: f64,
}

impl Prediction {
    pub fn new(token: impl Into<String>, score: f64) -> Self {
        Prediction {
            token: token.into(),
            score,
        }
    }
}

/// Fill-in-the-blank model: ranks replacements for the single [`MASK_TOKEN`] in a sentence.
pub trait MaskedInfiller: Send + Sync {
    /// At most `top_n` predictions, best first.
    fn predict(&self, masked: &str, top_n: usize) -> Result<Vec<Prediction>>;

    fn reentrant(&self) -> bool {
        true
    }
}

/// Opaque description of a fine-tuned generator state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub backend: String,
    pub epoch: usize,
    pub train_pairs: usize,
    pub tag: String,
}

pub trait Seq2SeqGenerator: Send + Sync {
    fn name(&self) -> String;

    /// Run one more epoch on top of `previous` (or the pretrained model when `None`).
    fn train_epoch(
        &self,
        previous: Option<&Checkpoint>,
        train: &[TrainingPair],
        epoch: usize,
        cfg: &TrainConfig,
    ) -> Result<Checkpoint>;

    fn perplexity(&self, checkpoint: &Checkpoint, pairs: &[TrainingPair]) -> Result<f64>;

    /// One top-k sample. Must be deterministic for fixed `(source, k, seed)`.
    fn sample(
        &self,
        checkpoint: &Checkpoint,
        source: &str,
        k: usize,
        seed: u64,
        max_len: usize,
    ) -> Result<String>;

    fn reentrant(&self) -> bool {
        true
    }
}

/// Probabilities over entailment, neutral and contradiction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliScores {
    pub entailment: f64,
    pub neutral: f64,
    pub contradiction: f64,
}

impl NliScores {
    pub fn new(entailment: f64, neutral: f64, contradiction: f64) -> Result<Self> {
        let s = NliScores {
            entailment,
            neutral,
            contradiction,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn uniform() -> Self {
        NliScores {
            entailment: 1.0 / 3.0,
            neutral: 1.0 / 3.0,
            contradiction: 1.0 / 3.0,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.entailment, self.neutral, self.contradiction]
    }

    pub fn validate(&self) -> Result<()> {
        let parts = self.as_array();
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Backend(format!(
                "invalid NLI probabilities {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::Backend(format!(
                "NLI probabilities {parts:?} sum to {sum}, not 1"
            )));
        }
        Ok(())
    }
}

pub trait EntailmentScorer: Send + Sync {
    fn score(&self, premise: &str, hypothesis: &str) -> Result<NliScores>;

    fn reentrant(&self) -> bool {
        true
    }
}

/// Scores through `scorer` and rejects anything off the probability simplex.
pub fn score_checked(
    scorer: &dyn EntailmentScorer,
    premise: &str,
    hypothesis: &str,
) -> Result<NliScores> {
    let s = scorer.score(premise, hypothesis)?;
    s.validate()?;
    Ok(s)
}

pub trait SentenceEncoder: Send + Sync {
    fn dim(&self) -> usize;

    fn encode(&self, text: &str) -> Result<Vec<f64>>;

    fn reentrant(&self) -> bool {
        true
    }
}

pub trait ArgumentClassifier: Send + Sync {
    fn classify(&self, text: &str) -> Result<ArgLabel>;

    fn reentrant(&self) -> bool {
        true
    }
}

// ---------------------------------------------------------------------------
// Mock infiller
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, Deserialize)]
struct InfillerFixture {
    #[serde(default)]
    contexts: HashMap<String, Vec<(String, f64)>>,
    #[serde(default)]
    default: Vec<(String, f64)>,
}

/// Table-driven infiller keyed by the masked sentence.
///
/// Unknown contexts return the fixture's `default` row, which is empty unless
/// the fixture sets one.
#[derive(Debug, Clone, Default)]
pub struct MockInfiller {
    table: HashMap<String, Vec<Prediction>>,
    default: Vec<Prediction>,
}

impl MockInfiller {
    pub fn new<I, K>(table: I) -> Self
    where
        I: IntoIterator<Item = (K, Vec<Prediction>)>,
        K: Into<String>,
    {
        MockInfiller {
            table: table.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            default: Vec::new(),
        }
    }

    pub fn with_default(mut self, default: Vec<Prediction>) -> Self {
        self.default = default;
        self
    }

    pub fn from_json(data: &str) -> Result<Self> {
        let fx: InfillerFixture = serde_json::from_str(data)?;
        let convert = |row: Vec<(String, f64)>| -> Vec<Prediction> {
            row.into_iter()
                .map(|(t, s)| Prediction::new(t, s))
                .collect()
        };
        Ok(MockInfiller {
            table: fx
                .contexts
                .into_iter()
                .map(|(k, v)| (k, convert(v)))
                .collect(),
            default: convert(fx.default),
        })
    }
}

impl MaskedInfiller for MockInfiller {
    fn predict(&self, masked: &str, top_n: usize) -> Result<Vec<Prediction>> {
        let row = self.table.get(masked).unwrap_or(&self.default);
        Ok(row.iter().take(top_n).cloned().collect())
    }
}

// ---------------------------------------------------------------------------
// Mock generator
// ---------------------------------------------------------------------------

/// One rewrite rule for [`MockGenerator`]. `source` matches exactly,
/// `contains` matches a substring; `k` restricts the rule to one sweep value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub output: String,
}

impl GeneratorRule {
    fn matches(&self, source: &str, k: usize) -> bool {
        if self.k.is_some_and(|rk| rk != k) {
            return false;
        }
        match (&self.source, &self.contains) {
            (Some(s), _) => s == source,
            (None, Some(c)) => source.contains(c.as_str()),
            (None, None) => true,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
struct GeneratorFixture {
    #[serde(default)]
    rules: Vec<GeneratorRule>,
}

/// Rule-based generator; sources without a matching rule are echoed with
/// control codes and demarcators removed.
#[derive(Debug, Default)]
pub struct MockGenerator {
    rules: Vec<GeneratorRule>,
    last_train_pairs: AtomicUsize,
}

impl MockGenerator {
    pub fn echo() -> Self {
        Self::default()
    }

    pub fn new(rules: Vec<GeneratorRule>) -> Self {
        MockGenerator {
            rules,
            last_train_pairs: AtomicUsize::new(0),
        }
    }

    pub fn from_json(data: &str) -> Result<Self> {
        let fx: GeneratorFixture = serde_json::from_str(data)?;
        Ok(Self::new(fx.rules))
    }

    /// Number of training pairs seen by the most recent epoch.
    pub fn trained_pairs(&self) -> usize {
        self.last_train_pairs.load(Ordering::Relaxed)
    }

    /// Synthetic validation curve with its minimum at epoch 4.
    pub fn perplexity_at(epoch: usize) -> f64 {
        let e = epoch.max(1) as f64;
        2.0 + 8.0 / e + 0.5 * e
    }
}

impl Seq2SeqGenerator for MockGenerator {
    fn name(&self) -> String {
        "mock".to_string()
    }

    fn train_epoch(
        &self,
        _previous: Option<&Checkpoint>,
        train: &[TrainingPair],
        epoch: usize,
        _cfg: &TrainConfig,
    ) -> Result<Checkpoint> {
        self.last_train_pairs.store(train.len(), Ordering::Relaxed);
        Ok(Checkpoint {
            backend: self.name(),
            epoch,
            train_pairs: train.len(),
            tag: format!("mock-epoch-{epoch}"),
        })
    }

    fn perplexity(&self, checkpoint: &Checkpoint, _pairs: &[TrainingPair]) -> Result<f64> {
        Ok(Self::perplexity_at(checkpoint.epoch))
    }

    fn sample(
        &self,
        _checkpoint: &Checkpoint,
        source: &str,
        k: usize,
        _seed: u64,
        max_len: usize,
    ) -> Result<String> {
        let out = match self.rules.iter().find(|r| r.matches(source, k)) {
            Some(rule) => rule.output.clone(),
            None => plain_body(source),
        };
        Ok(truncate_words(&out, max_len))
    }
}

fn truncate_words(text: &str, max_len: usize) -> String {
    text.split_whitespace()
        .take(max_len)
        .collect::<Vec<_>>()
        .join(" ")
}

// ---------------------------------------------------------------------------
// Mock scorer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
struct ScorerRow {
    #[serde(default)]
    premise: Option<String>,
    #[serde(default)]
    hypothesis: Option<String>,
    #[serde(default)]
    contains: Option<String>,
    scores: [f64; 3],
}

#[derive(Debug, Default, Deserialize)]
struct ScorerFixture {
    #[serde(default)]
    pairs: Vec<ScorerRow>,
}

/// Table-driven entailment scorer with a uniform fallback.
///
/// Exact `(premise, hypothesis)` rows win; otherwise the first `contains`
/// rule whose substring occurs in the hypothesis applies.
#[derive(Debug, Clone, Default)]
pub struct MockScorer {
    exact: HashMap<(String, String), NliScores>,
    contains: Vec<(String, NliScores)>,
}

impl MockScorer {
    pub fn new<I, P, H>(table: I) -> Result<Self>
    where
        I: IntoIterator<Item = ((P, H), [f64; 3])>,
        P: Into<String>,
        H: Into<String>,
    {
        let mut exact = HashMap::new();
        for ((p, h), [e, n, c]) in table {
            exact.insert((p.into(), h.into()), NliScores::new(e, n, c)?);
        }
        Ok(MockScorer {
            exact,
            contains: Vec::new(),
        })
    }

    pub fn with_contains_rule(
        mut self,
        needle: impl Into<String>,
        scores: [f64; 3],
    ) -> Result<Self> {
        let [e, n, c] = scores;
        self.contains
            .push((needle.into(), NliScores::new(e, n, c)?));
        Ok(self)
    }

    pub fn from_json(data: &str) -> Result<Self> {
        let fx: ScorerFixture = serde_json::from_str(data)?;
        let mut scorer = MockScorer::default();
        for row in fx.pairs {
            let [e, n, c] = row.scores;
            let s = NliScores::new(e, n, c)?;
            match (row.premise, row.hypothesis, row.contains) {
                (Some(p), Some(h), _) => {
                    scorer.exact.insert((p, h), s);
                }
                (_, _, Some(needle)) => scorer.contains.push((needle, s)),
                _ => {
                    return Err(Error::Backend(
                        "scorer row needs premise+hypothesis or contains".into(),
                    ))
                }
            }
        }
        Ok(scorer)
    }
}

impl EntailmentScorer for MockScorer {
    fn score(&self, premise: &str, hypothesis: &str) -> Result<NliScores> {
        if let Some(s) = self
            .exact
            .get(&(premise.to_string(), hypothesis.to_string()))
        {
            return Ok(*s);
        }
        Ok(self
            .contains
            .iter()
            .find(|(needle, _)| hypothesis.contains(needle.as_str()))
            .map_or_else(NliScores::uniform, |(_, s)| *s))
    }
}

// ---------------------------------------------------------------------------
// Hash encoder
// ---------------------------------------------------------------------------

/// Bag-of-tokens encoder: each lowercased word token adds 1 to bucket
/// `fnv1a(token) % dim`.
#[derive(Debug, Clone)]
pub struct HashEncoder {
    dim: usize,
}

impl HashEncoder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 8 {
            return Err(Error::Backend(format!(
                "hash encoder dimension {dim} is below 8"
            )));
        }
        Ok(HashEncoder { dim })
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.to_lowercase().as_bytes()) % self.dim as u64) as usize
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl SentenceEncoder for HashEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.dim];
        for tok in tokenize(text).iter().filter(|t| t.is_word()) {
            v[self.bucket(tok.text)] += 1.0;
        }
        Ok(v)
    }
}

// ---------------------------------------------------------------------------
// Rule classifier
// ---------------------------------------------------------------------------

const PREMISE_MARKERS: &[&str] = &[
    "because",
    "since",
    "given that",
    "as shown",
    "due to",
    "for example",
    "for instance",
    "the reason",
];
const QUESTION_WORDS: &[&str] = &[
    "is", "are", "do", "does", "did", "can", "could", "would", "will", "what", "why", "how", "who",
    "when", "where", "which",
];

/// Discourse-marker heuristic standing in for a trained claim/premise model.
///
/// Questions are non-arguments, sentences with a premise marker are premises,
/// everything else is a claim. Fixture overrides take precedence.
#[derive(Debug, Clone, Default)]
pub struct RuleClassifier {
    overrides: HashMap<String, ArgLabel>,
}

#[derive(Debug, Default, Deserialize)]
struct ClassifierFixture {
    #[serde(default)]
    labels: HashMap<String, ArgLabel>,
}

impl RuleClassifier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_json(data: &str) -> Result<Self> {
        let fx: ClassifierFixture = serde_json::from_str(data)?;
        Ok(RuleClassifier {
            overrides: fx.labels,
        })
    }
}

fn contains_phrase(words: &[String], phrase: &str) -> bool {
    let needle: Vec<&str> = phrase.split(' ').collect();
    words
        .windows(needle.len())
        .any(|w| w.iter().zip(&needle).all(|(a, b)| a == b))
}

impl ArgumentClassifier for RuleClassifier {
    fn classify(&self, text: &str) -> Result<ArgLabel> {
        if let Some(label) = self.overrides.get(text) {
            return Ok(*label);
        }
        let words: Vec<String> = tokenize(text)
            .iter()
            .filter(|t| t.is_word())
            .map(|t| t.text.to_lowercase())
            .collect();
        if words.is_empty() {
            return Err(Error::Backend("nothing to classify".into()));
        }
        let question =
            text.trim_end().ends_with('?') || QUESTION_WORDS.contains(&words[0].as_str());
        if question {
            Ok(ArgLabel::NonArgument)
        } else if PREMISE_MARKERS.iter().any(|m| contains_phrase(&words, m)) {
            Ok(ArgLabel::Premise)
        } else {
            Ok(ArgLabel::Claim)
        }
    }
}

// ---------------------------------------------------------------------------
// Backend selection
// ---------------------------------------------------------------------------

/// A parsed backend selector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Mock(String),
    Model(String),
}

impl FromStr for BackendSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("mock", rest)) => Ok(BackendSpec::Mock(rest.to_string())),
            Some(("model", rest)) if !rest.is_empty() => Ok(BackendSpec::Model(rest.to_string())),
            _ => Err(Error::Config(format!(
                "backend `{s}` must be `mock:<fixture>` or `model:<identifier>`"
            ))),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Mock(a) => write!(f, "mock:{a}"),
            BackendSpec::Model(a) => write!(f, "model:{a}"),
        }
    }
}

impl BackendSpec {
    /// Resolve a relative fixture path against `base`.
    pub fn resolve(&self, base: &Path) -> BackendSpec {
        match self {
            BackendSpec::Mock(arg) if looks_like_path(arg) && Path::new(arg).is_relative() => {
                BackendSpec::Mock(base.join(arg).to_string_lossy().into_owned())
            }
            other => other.clone(),
        }
    }

    /// The fixture file this spec reads, if any.
    pub fn fixture_path(&self) -> Option<PathBuf> {
        match self {
            BackendSpec::Mock(arg) if looks_like_path(arg) => Some(PathBuf::from(arg)),
            _ => None,
        }
    }
}

fn looks_like_path(arg: &str) -> bool {
    arg.ends_with(".json")
}

fn unavailable(id: &str) -> Error {
    Error::Backend(format!(
        "no adapter is available for `model:{id}`; supply a backend implementation through the library API"
    ))
}

fn read_fixture(path: &str) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_infiller(spec: &BackendSpec) -> Result<Arc<dyn MaskedInfiller>> {
    match spec {
        BackendSpec::Mock(arg) if arg.is_empty() || arg == "empty" => {
            Ok(Arc::new(MockInfiller::default()))
        }
        BackendSpec::Mock(path) => Ok(Arc::new(MockInfiller::from_json(&read_fixture(path)?)?)),
        BackendSpec::Model(id) => Err(unavailable(id)),
    }
}

pub fn load_generator(spec: &BackendSpec) -> Result<Arc<dyn Seq2SeqGenerator>> {
    match spec {
        BackendSpec::Mock(arg) if arg.is_empty() || arg == "echo" => {
            Ok(Arc::new(MockGenerator::echo()))
        }
        BackendSpec::Mock(path) => Ok(Arc::new(MockGenerator::from_json(&read_fixture(path)?)?)),
        BackendSpec::Model(id) => Err(unavailable(id)),
    }
}

pub fn load_scorer(spec: &BackendSpec) -> Result<Arc<dyn EntailmentScorer>> {
    match spec {
        BackendSpec::Mock(arg) if arg.is_empty() || arg == "uniform" => {
            Ok(Arc::new(MockScorer::default()))
        }
        BackendSpec::Mock(path) => Ok(Arc::new(MockScorer::from_json(&read_fixture(path)?)?)),
        BackendSpec::Model(id) => Err(unavailable(id)),
    }
}

#[derive(Debug, Deserialize)]
struct EncoderFixture {
    dim: usize,
}

pub fn load_encoder(spec: &BackendSpec) -> Result<Arc<dyn SentenceEncoder>> {
    match spec {
        BackendSpec::Mock(arg) => {
            let dim = if let Some(d) = arg.strip_prefix("hash:") {
                d.parse()
                    .map_err(|_| Error::Config(format!("bad hash encoder dimension `{d}`")))?
            } else if arg.is_empty() || arg == "hash" {
                256
            } else {
                serde_json::from_str::<EncoderFixture>(&read_fixture(arg)?)?.dim
            };
            Ok(Arc::new(HashEncoder::new(dim)?))
        }
        BackendSpec::Model(id) => Err(unavailable(id)),
    }
}

pub fn load_classifier(spec: &BackendSpec) -> Result<Arc<dyn ArgumentClassifier>> {
    match spec {
        BackendSpec::Mock(arg) if arg.is_empty() || arg == "rules" => {
            Ok(Arc::new(RuleClassifier::new()))
        }
        BackendSpec::Mock(path) => Ok(Arc::new(RuleClassifier::from_json(&read_fixture(path)?)?)),
        BackendSpec::Model(id) => Err(unavailable(id)),
    }
}
