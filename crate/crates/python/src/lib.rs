//! Python bindings: lexicons, span finders, rewriting, the source format,
//! entailment reranking, evaluation statistics and the file pipeline.
//!
//! Infillers and scorers can be plain dicts (fixture tables) or Python
//! callables, so real models can be plugged in from Python.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use reframer_core::backends::{
    EntailmentScorer, HashEncoder, MaskedInfiller, MockInfiller, NliScores, Prediction,
};
use reframer_core::config::{PipelineConfig, RawConfig};
use reframer_core::evaluate::{RandomizationConfig, TestMode};
use reframer_core::lexicon::{self, EmotionLabel, EmotionSet};
use reframer_core::pairformat;
use reframer_core::reframe::{Candidate, NliDirection, RankedCandidate};
use reframer_core::rewrite::{self, RewriteMode, RewriteResult};
use reframer_core::text::{self, TokenSpan};
use reframer_core::{pipeline, Error, ErrorKind};

fn to_py(e: Error) -> PyErr {
    match e.kind() {
        ErrorKind::Backend => PyRuntimeError::new_err(e.to_string()),
        ErrorKind::Config | ErrorKind::Data => PyValueError::new_err(e.to_string()),
    }
}

fn labels(set: EmotionSet) -> Vec<String> {
    set.iter().map(|l| l.as_str().to_string()).collect()
}

fn span_tuple(s: &TokenSpan) -> (usize, usize, String) {
    (s.start, s.end, s.surface.clone())
}

fn spans_from(text: &str, spans: Vec<(usize, usize)>) -> PyResult<Vec<TokenSpan>> {
    spans
        .into_iter()
        .map(|(a, b)| TokenSpan::from_char_range(text, a, b).map_err(to_py))
        .collect()
}

#[pyclass(name = "ConnotationLexicon", frozen)]
struct PyConnotationLexicon(lexicon::ConnotationLexicon);

#[pymethods]
impl PyConnotationLexicon {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        lexicon::ConnotationLexicon::load(path)
            .map(Self)
            .map_err(to_py)
    }

    /// Parse `word,emotions` CSV text.
    #[staticmethod]
    fn from_csv(data: &str) -> PyResult<Self> {
        lexicon::ConnotationLexicon::from_csv_str(data)
            .map(Self)
            .map_err(to_py)
    }

    fn lookup(&self, word: &str) -> Vec<String> {
        labels(self.0.lookup(word))
    }

    fn phrase_emotions(&self, phrase: &str) -> Vec<String> {
        labels(self.0.phrase_emotions(phrase))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "EmotionLexicon", frozen)]
struct PyEmotionLexicon(lexicon::EmotionLexicon);

#[pymethods]
impl PyEmotionLexicon {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        lexicon::EmotionLexicon::load(path).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn from_tsv(data: &str) -> PyResult<Self> {
        lexicon::EmotionLexicon::from_tsv_str(data)
            .map(Self)
            .map_err(to_py)
    }

    fn lookup(&self, word: &str) -> Vec<String> {
        labels(self.0.lookup(word))
    }

    /// Word spans carrying `emotion`, as `(start, end, surface)` character offsets.
    fn find(&self, text: &str, emotion: &str) -> PyResult<Vec<(usize, usize, String)>> {
        let label: EmotionLabel = emotion.parse().map_err(to_py)?;
        if label == EmotionLabel::Neutral {
            return Err(PyValueError::new_err("target emotion must not be neutral"));
        }
        Ok(lexicon::find_emotion_words(text, &self.0, label)
            .iter()
            .map(span_tuple)
            .collect())
    }
}

#[pyclass(name = "CollocationList", frozen)]
struct PyCollocationList(lexicon::CollocationList);

#[pymethods]
impl PyCollocationList {
    #[new]
    fn new(phrases: Vec<String>) -> Self {
        Self(lexicon::CollocationList::new(phrases))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        lexicon::CollocationList::load(path)
            .map(Self)
            .map_err(to_py)
    }

    fn __contains__(&self, phrase: &str) -> bool {
        self.0.contains(phrase)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Leftmost-longest phrase matches as `(start, end, surface)`.
    fn find(&self, text: &str) -> Vec<(usize, usize, String)> {
        lexicon::find_collocations(text, &self.0)
            .iter()
            .map(span_tuple)
            .collect()
    }
}

/// A Python callable `f(masked, top_n) -> [(token, score), ...]`.
struct CallableInfiller(Py<PyAny>);

impl MaskedInfiller for CallableInfiller {
    fn predict(&self, masked: &str, top_n: usize) -> reframer_core::Result<Vec<Prediction>> {
        Python::attach(|py| {
            let rows: Vec<(String, f64)> = self
                .0
                .bind(py)
                .call1((masked, top_n))
                .and_then(|r| r.extract())
                .map_err(|e| Error::Backend(format!("infiller callback failed: {e}")))?;
            Ok(rows
                .into_iter()
                .map(|(t, s)| Prediction::new(t, s))
                .collect())
        })
    }

    fn reentrant(&self) -> bool {
        false
    }
}

fn infiller_from(obj: &Bound<'_, PyAny>) -> PyResult<Box<dyn MaskedInfiller>> {
    if obj.is_callable() {
        return Ok(Box::new(CallableInfiller(obj.clone().unbind())));
    }
    let table: HashMap<String, Vec<(String, f64)>> = obj.extract()?;
    Ok(Box::new(MockInfiller::new(table.into_iter().map(
        |(k, rows)| {
            (
                k,
                rows.into_iter()
                    .map(|(t, s)| Prediction::new(t, s))
                    .collect(),
            )
        },
    ))))
}

/// A Python callable `f(premise, hypothesis) -> (entailment, neutral, contradiction)`.
struct CallableScorer(Py<PyAny>);

impl EntailmentScorer for CallableScorer {
    fn score(&self, premise: &str, hypothesis: &str) -> reframer_core::Result<NliScores> {
        Python::attach(|py| {
            let (e, n, c): (f64, f64, f64) = self
                .0
                .bind(py)
                .call1((premise, hypothesis))
                .and_then(|r| r.extract())
                .map_err(|e| Error::Backend(format!("scorer callback failed: {e}")))?;
            NliScores::new(e, n, c)
        })
    }

    fn reentrant(&self) -> bool {
        false
    }
}

fn scorer_from(obj: &Bound<'_, PyAny>) -> PyResult<Box<dyn EntailmentScorer>> {
    if obj.is_callable() {
        return Ok(Box::new(CallableScorer(obj.clone().unbind())));
    }
    let table: HashMap<(String, String), (f64, f64, f64)> = obj.extract()?;
    let scorer = reframer_core::backends::MockScorer::new(
        table.into_iter().map(|(k, (e, n, c))| (k, [e, n, c])),
    )
    .map_err(to_py)?;
    Ok(Box::new(scorer))
}

#[pyclass(name = "RewriteResult", frozen)]
struct PyRewriteResult(RewriteResult);

#[pymethods]
impl PyRewriteResult {
    #[getter]
    fn original(&self) -> &str {
        &self.0.original
    }

    #[getter]
    fn rewritten(&self) -> &str {
        &self.0.rewritten
    }

    /// One dict per replacement, left to right.
    #[getter]
    fn replacements<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
        let list = PyList::empty(py);
        for r in &self.0.replacements {
            let d = PyDict::new(py);
            d.set_item("start", r.span.start)?;
            d.set_item("end", r.span.end)?;
            d.set_item("original", &r.original)?;
            d.set_item("replacement", &r.replacement)?;
            d.set_item("original_emotions", labels(r.original_emotions))?;
            d.set_item("replacement_emotions", labels(r.replacement_emotions))?;
            list.append(d)?;
        }
        Ok(list)
    }

    /// Serialized training pair `(source, target)`.
    fn to_pair(&self) -> (String, String) {
        let p = pairformat::serialize_pair(&self.0);
        (p.source, p.target)
    }

    fn __repr__(&self) -> String {
        format!(
            "RewriteResult({:?} -> {:?})",
            self.0.original, self.0.rewritten
        )
    }
}

/// Tokens of `text`: alphanumeric runs and single punctuation characters.
#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    text::tokenize(text)
        .iter()
        .map(|t| t.text.to_string())
        .collect()
}

/// Rewrite every connotation-bearing word of `text`.
///
/// `mode` is `"different"` or `"prefer:<emotion>"`; `infiller` is a dict
/// from masked sentence to `[(token, score)]` or a callable.
#[pyfunction]
#[pyo3(signature = (text, lexicon, infiller, mode = "different", top_n = 20, max_spans = None))]
fn rewrite_sentence(
    text: &str,
    lexicon: &PyConnotationLexicon,
    infiller: &Bound<'_, PyAny>,
    mode: &str,
    top_n: usize,
    max_spans: Option<usize>,
) -> PyResult<PyRewriteResult> {
    let mode: RewriteMode = mode.parse().map_err(to_py)?;
    let inf = infiller_from(infiller)?;
    let cfg = rewrite::RewriteConfig { top_n, max_spans };
    let (result, _) = rewrite::rewrite_sentence(text, mode, inf.as_ref(), &lexicon.0, &cfg);
    Ok(PyRewriteResult(result))
}

/// Lexical-replacement baseline over the given `(start, end)` character spans.
#[pyfunction]
#[pyo3(signature = (text, spans, lexicon, infiller, top_n = 20))]
fn lexrep(
    text: &str,
    spans: Vec<(usize, usize)>,
    lexicon: &PyConnotationLexicon,
    infiller: &Bound<'_, PyAny>,
    top_n: usize,
) -> PyResult<PyRewriteResult> {
    let spans = spans_from(text, spans)?;
    let inf = infiller_from(infiller)?;
    let (result, _) =
        rewrite::lexrep_reframe(text, &spans, inf.as_ref(), &lexicon.0, top_n).map_err(to_py)?;
    Ok(PyRewriteResult(result))
}

/// Inference source for `text`: the control code plus demarcated spans.
#[pyfunction]
#[pyo3(signature = (text, spans, code = "trust"))]
fn build_source(text: &str, spans: Vec<(usize, usize)>, code: &str) -> PyResult<String> {
    let code: EmotionLabel = code.parse().map_err(to_py)?;
    let spans = spans_from(text, spans)?;
    pairformat::build_inference_source(text, &spans, code).map_err(to_py)
}

/// Split a source into `{"codes", "text", "spans"}`.
#[pyfunction]
fn parse_source<'py>(py: Python<'py>, source: &str) -> PyResult<Bound<'py, PyDict>> {
    let parsed = pairformat::parse_source(source).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item(
        "codes",
        parsed.codes.iter().map(|c| c.as_str()).collect::<Vec<_>>(),
    )?;
    d.set_item("text", parsed.plain_text)?;
    d.set_item(
        "spans",
        parsed.spans.iter().map(span_tuple).collect::<Vec<_>>(),
    )?;
    Ok(d)
}

fn ranked_dict<'py>(py: Python<'py>, c: &RankedCandidate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("text", &c.text)?;
    d.set_item("k", c.k)?;
    d.set_item("entail_prob", c.entail_prob)?;
    d.set_item("scores", c.scores.as_array().to_vec())?;
    Ok(d)
}

/// Pick the candidate most entailed by `text`. `candidates` are `(text, k)`
/// pairs; `scorer` maps `(premise, hypothesis)` to NLI probabilities or is a
/// callable. Returns `(best, ranking)`.
#[pyfunction]
#[pyo3(signature = (text, candidates, scorer, direction = "fwd"))]
fn rerank<'py>(
    py: Python<'py>,
    text: &str,
    candidates: Vec<(String, usize)>,
    scorer: &Bound<'py, PyAny>,
    direction: &str,
) -> PyResult<(Bound<'py, PyDict>, Vec<Bound<'py, PyDict>>)> {
    let direction: NliDirection = direction.parse().map_err(to_py)?;
    let scorer = scorer_from(scorer)?;
    let cands: Vec<Candidate> = candidates
        .into_iter()
        .map(|(text, k)| Candidate { text, k })
        .collect();
    let (best, all) = reframer_core::reframe::rerank(text, &cands, scorer.as_ref(), direction, 1)
        .map_err(to_py)?;
    let all = all
        .iter()
        .map(|c| ranked_dict(py, c))
        .collect::<PyResult<Vec<_>>>()?;
    Ok((ranked_dict(py, &best)?, all))
}

/// Paired sign-flip randomization test; `mode` is auto, exact or approximate.
#[pyfunction]
#[pyo3(signature = (a, b, iterations = 10_000, seed = 0, mode = "auto"))]
fn randomization_test(
    a: Vec<f64>,
    b: Vec<f64>,
    iterations: usize,
    seed: u64,
    mode: &str,
) -> PyResult<f64> {
    let mode = match mode {
        "auto" => TestMode::Auto,
        "exact" => TestMode::Exact,
        "approximate" => TestMode::Approximate,
        other => return Err(PyValueError::new_err(format!("unknown mode `{other}`"))),
    };
    let cfg = RandomizationConfig {
        iterations,
        seed,
        mode,
    };
    reframer_core::evaluate::randomization_test(&a, &b, &cfg).map_err(to_py)
}

/// Cosine similarity under the hashing encoder: `(value, value × 100 rounded)`.
#[pyfunction]
#[pyo3(signature = (a, b, dim = 256))]
fn semantic_similarity(a: &str, b: &str, dim: usize) -> PyResult<(f64, f64)> {
    let enc = HashEncoder::new(dim).map_err(to_py)?;
    let s = reframer_core::evaluate::semantic_similarity(a, b, &enc).map_err(to_py)?;
    Ok((s.value, s.reported))
}

/// Run one pipeline stage from a config file. `overrides` replaces config
/// keys; `outputs` lists system files for `evaluate`. Returns the path of the
/// main artifact.
#[pyfunction]
#[pyo3(signature = (stage, config, overrides = None, outputs = None))]
fn run_stage(
    py: Python<'_>,
    stage: &str,
    config: PathBuf,
    overrides: Option<HashMap<String, String>>,
    outputs: Option<Vec<PathBuf>>,
) -> PyResult<String> {
    let mut raw = RawConfig::load(&config).map_err(to_py)?;
    for (k, v) in overrides.unwrap_or_default() {
        raw.set(&k, &v).map_err(to_py)?;
    }
    let cfg = PipelineConfig::from_raw(&raw).map_err(to_py)?;
    let stage = stage.to_string();
    let outputs = outputs.unwrap_or_default();
    py.detach(move || -> reframer_core::Result<PathBuf> {
        Ok(match stage.as_str() {
            "build-data" => {
                pipeline::build_data(&cfg)?;
                cfg.out_dir.join("train.tsv")
            }
            "train" => {
                pipeline::train(&cfg, None)?;
                cfg.checkpoint.clone()
            }
            "build-test-set" => {
                pipeline::build_test_set(&cfg)?;
                pipeline::test_set_path(&cfg)
            }
            "reframe" => pipeline::reframe(&cfg)?.0,
            "lexrep" => pipeline::lexrep(&cfg)?.0,
            "evaluate" => {
                pipeline::evaluate(&cfg, &outputs)?;
                cfg.out_dir.join("report.json")
            }
            other => return Err(Error::Config(format!("unknown stage `{other}`"))),
        })
    })
    .map(|p| p.to_string_lossy().into_owned())
    .map_err(to_py)
}

#[pymodule]
fn reframer_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConnotationLexicon>()?;
    m.add_class::<PyEmotionLexicon>()?;
    m.add_class::<PyCollocationList>()?;
    m.add_class::<PyRewriteResult>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(rewrite_sentence, m)?)?;
    m.add_function(wrap_pyfunction!(lexrep, m)?)?;
    m.add_function(wrap_pyfunction!(build_source, m)?)?;
    m.add_function(wrap_pyfunction!(parse_source, m)?)?;
    m.add_function(wrap_pyfunction!(rerank, m)?)?;
    m.add_function(wrap_pyfunction!(randomization_test, m)?)?;
    m.add_function(wrap_pyfunction!(semantic_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(run_stage, m)?)?;
    Ok(())
}
