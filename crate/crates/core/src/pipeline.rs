//! End-to-end stages driven by a [`PipelineConfig`]: each reads its inputs,
//! runs one step and writes its artifacts under `out_dir`.
//!
//! Every artifact carries the schema version, config hash and seed so a run
//! can be traced back to its configuration. Nothing path- or time-dependent is
//! written, so reruns with the same config produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backends::{self, Checkpoint};
use crate::config::PipelineConfig;
use crate::corpus::{self, SpanLexicons, Task, TestItem};
use crate::error::{Error, Result};
use crate::evaluate::{self, EvaluationReport, OutputRecord};
use crate::lexicon::{CollocationList, ConnotationLexicon, EmotionLexicon};
use crate::pairformat::{self, TrainingPair};
use crate::parallel::map_ordered;
use crate::reframe::{self, CandidateRecord, EpochMetrics, ReframeConfig, Reframer};
use crate::rewrite::{self, RewriteStats};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
}

impl ArtifactMeta {
    pub fn of(cfg: &PipelineConfig) -> Self {
        ArtifactMeta {
            schema_version: SCHEMA_VERSION,
            config_hash: cfg.config_hash.clone(),
            seed: cfg.seed,
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_bytes(path: &Path, data: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    fs::write(path, data).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut data = serde_json::to_vec_pretty(value)?;
    data.push(b'\n');
    write_bytes(path, &data)
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut data = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut data, row)?;
        data.push(b'\n');
    }
    write_bytes(path, &data)
}

/// Shuffle `0..n` with `seed` and cut it at `floor(n * ratio)`. Both halves
/// come back sorted.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((n as f64) * ratio).floor() as usize;
    let mut train = idx[..cut.min(n)].to_vec();
    let mut val = idx[cut.min(n)..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildDataSummary {
    #[serde(flatten)]
    pub meta: ArtifactMeta,
    pub records: usize,
    pub premises: usize,
    pub classifier_warnings: usize,
    pub pairs: usize,
    pub dropped_unchanged: usize,
    pub train_pairs: usize,
    pub val_pairs: usize,
    pub candidates: usize,
    pub accepted: usize,
    pub skipped: usize,
    pub fallback_used: usize,
    pub backend_errors: usize,
}

/// Classify the corpus, rewrite every premise and write `train.tsv`,
/// `val.tsv` and `build_data_stats.json`.
pub fn build_data(cfg: &PipelineConfig) -> Result<BuildDataSummary> {
    let corpus_path = cfg.require(&cfg.corpus, "corpus")?;
    let lex_path = cfg.require(&cfg.connotation_lexicon, "connotation_lexicon")?;
    cfg.require_backend(&cfg.infiller, "infiller")?;
    cfg.require_backend(&cfg.classifier, "classifier")?;

    let lex = ConnotationLexicon::load(&lex_path)?;
    let infiller = backends::load_infiller(&cfg.infiller)?;
    let classifier = backends::load_classifier(&cfg.classifier)?;
    let records = corpus::ingest(&corpus_path)?;
    let classified = corpus::classify_arguments(&records, classifier.as_ref(), cfg.workers);
    let premises = corpus::filter_premises(&classified.records)?;

    let rewritten = map_ordered(&premises, cfg.workers, infiller.reentrant(), |r| {
        rewrite::rewrite_sentence(
            &r.text,
            cfg.rewrite_mode,
            infiller.as_ref(),
            &lex,
            &cfg.rewrite,
        )
    });
    let mut stats = RewriteStats::default();
    let mut pairs = Vec::new();
    let mut dropped = 0;
    for (result, s) in rewritten {
        stats += s;
        if result.replacements.is_empty() {
            dropped += 1;
        } else {
            pairs.push(pairformat::serialize_pair(&result));
        }
    }
    if pairs.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no training pairs: {} premises, none rewritten",
            premises.len()
        )));
    }
    let (train_idx, val_idx) = split_indices(pairs.len(), cfg.split_ratio, cfg.seed);
    let train: Vec<TrainingPair> = train_idx.iter().map(|&i| pairs[i].clone()).collect();
    let val: Vec<TrainingPair> = val_idx.iter().map(|&i| pairs[i].clone()).collect();
    ensure_dir(&cfg.out_dir)?;
    pairformat::write_tsv(&train, cfg.out_dir.join("train.tsv"))?;
    pairformat::write_tsv(&val, cfg.out_dir.join("val.tsv"))?;

    let summary = BuildDataSummary {
        meta: ArtifactMeta::of(cfg),
        records: records.len(),
        premises: premises.len(),
        classifier_warnings: classified.warnings,
        pairs: pairs.len(),
        dropped_unchanged: dropped,
        train_pairs: train.len(),
        val_pairs: val.len(),
        candidates: stats.candidates,
        accepted: stats.accepted,
        skipped: stats.skipped,
        fallback_used: stats.fallback_used,
        backend_errors: stats.backend_errors,
    };
    write_json(&cfg.out_dir.join("build_data_stats.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointFile {
    #[serde(flatten)]
    pub meta: ArtifactMeta,
    pub checkpoint: Checkpoint,
    pub best_perplexity: f64,
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    #[serde(flatten)]
    meta: &'a ArtifactMeta,
    #[serde(flatten)]
    metrics: &'a EpochMetrics,
}

/// Fine-tune on `train.tsv`/`val.tsv` from `data_dir` (default `out_dir`),
/// writing the checkpoint and `train_metrics.jsonl`.
pub fn train(cfg: &PipelineConfig, data_dir: Option<&Path>) -> Result<CheckpointFile> {
    let dir = data_dir.unwrap_or(&cfg.out_dir);
    let train_path = dir.join("train.tsv");
    if !train_path.exists() {
        return Err(Error::Config(format!(
            "training data {} does not exist",
            train_path.display()
        )));
    }
    cfg.require_backend(&cfg.generator, "generator")?;
    let train = pairformat::read_tsv(&train_path)?;
    let val_path = dir.join("val.tsv");
    let val = if val_path.exists() {
        pairformat::read_tsv(&val_path)?
    } else {
        Vec::new()
    };
    let generator = backends::load_generator(&cfg.generator)?;
    let trained = reframe::fine_tune(&train, &val, generator.as_ref(), &cfg.train)?;
    let meta = ArtifactMeta::of(cfg);
    let rows: Vec<MetricsRow> = trained
        .log
        .iter()
        .map(|m| MetricsRow {
            meta: &meta,
            metrics: m,
        })
        .collect();
    write_jsonl(&cfg.out_dir.join("train_metrics.jsonl"), &rows)?;
    let file = CheckpointFile {
        meta,
        checkpoint: trained.checkpoint,
        best_perplexity: trained.best_perplexity,
    };
    write_json(&cfg.checkpoint, &file)?;
    Ok(file)
}

pub fn read_checkpoint(path: &Path) -> Result<CheckpointFile> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "checkpoint {} does not exist",
            path.display()
        )));
    }
    let data = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&data)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSetSummary {
    #[serde(flatten)]
    pub meta: ArtifactMeta,
    pub task: Task,
    pub records: usize,
    pub sampled: usize,
    pub path: String,
}

pub fn test_set_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.test_set
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join(format!("test_{}.jsonl", cfg.task)))
}

/// Sample the task's test set from the corpus. Writes the items and a
/// `.meta.json` sidecar next to them.
pub fn build_test_set(cfg: &PipelineConfig) -> Result<TestSetSummary> {
    let corpus_path = cfg.require(&cfg.corpus, "corpus")?;
    let collocations = match cfg.task {
        Task::Partisan => Some(CollocationList::load(
            cfg.require(&cfg.collocations, "collocations")?,
        )?),
        Task::Fear => None,
    };
    let emotions = match cfg.task {
        Task::Fear => Some(EmotionLexicon::load(
            cfg.require(&cfg.emotion_lexicon, "emotion_lexicon")?,
        )?),
        Task::Partisan => None,
    };
    let records = corpus::ingest(&corpus_path)?;
    let lexicons = SpanLexicons {
        collocations: collocations.as_ref(),
        emotions: emotions.as_ref(),
    };
    let set = corpus::build_test_set(&records, cfg.task, lexicons, cfg.sample_size, cfg.seed)?;
    let path = test_set_path(cfg);
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    corpus::write_test_set(&set.items, &path)?;
    let summary = TestSetSummary {
        meta: ArtifactMeta::of(cfg),
        task: cfg.task,
        records: records.len(),
        sampled: set.items.len(),
        path: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    write_json(&path.with_extension("meta.json"), &summary)?;
    Ok(summary)
}

fn load_test_items(cfg: &PipelineConfig) -> Result<Vec<TestItem>> {
    let path = test_set_path(cfg);
    if !path.exists() {
        return Err(Error::Config(format!(
            "test set {} does not exist",
            path.display()
        )));
    }
    corpus::read_test_set(path)
}

/// One line of a system's output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemOutputLine {
    #[serde(flatten)]
    pub meta: ArtifactMeta,
    pub id: String,
    pub task: Task,
    pub system: String,
    pub input: String,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ReframeConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<CandidateRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replacements: Vec<(String, String)>,
}

/// Run the reframing model over the test set. Output goes to
/// `reframe_<variant>.jsonl`.
pub fn reframe(cfg: &PipelineConfig) -> Result<(PathBuf, Vec<SystemOutputLine>)> {
    let items = load_test_items(cfg)?;
    cfg.require_backend(&cfg.generator, "generator")?;
    cfg.require_backend(&cfg.scorer, "scorer")?;
    let ckpt = read_checkpoint(&cfg.checkpoint)?;
    let generator = backends::load_generator(&cfg.generator)?;
    if ckpt.checkpoint.backend != generator.name() {
        return Err(Error::Config(format!(
            "checkpoint was trained with `{}` but the generator is `{}`",
            ckpt.checkpoint.backend,
            generator.name()
        )));
    }
    let scorer = backends::load_scorer(&cfg.scorer)?;
    let reframer = Reframer {
        generator: generator.as_ref(),
        checkpoint: &ckpt.checkpoint,
        scorer: scorer.as_ref(),
        sweep: &cfg.sweep,
        config: cfg.reframe,
        workers: cfg.workers,
    };
    let outputs = reframer.reframe_all(&items)?;
    let system = cfg.reframe.variant_name().to_string();
    let meta = ArtifactMeta::of(cfg);
    let lines: Vec<SystemOutputLine> = items
        .iter()
        .zip(outputs)
        .map(|(item, o)| SystemOutputLine {
            meta: meta.clone(),
            id: o.id,
            task: item.task,
            system: system.clone(),
            input: o.input,
            output: o.output,
            config: Some(o.config),
            candidates: o.candidates,
            replacements: Vec::new(),
        })
        .collect();
    let path = cfg.out_dir.join(format!("reframe_{system}.jsonl"));
    write_jsonl(&path, &lines)?;
    Ok((path, lines))
}

/// Lexical-replacement baseline over the test set, written to `lexrep.jsonl`.
pub fn lexrep(cfg: &PipelineConfig) -> Result<(PathBuf, Vec<SystemOutputLine>)> {
    let items = load_test_items(cfg)?;
    let lex =
        ConnotationLexicon::load(cfg.require(&cfg.connotation_lexicon, "connotation_lexicon")?)?;
    cfg.require_backend(&cfg.infiller, "infiller")?;
    let infiller = backends::load_infiller(&cfg.infiller)?;
    let results = map_ordered(&items, cfg.workers, infiller.reentrant(), |item| {
        rewrite::lexrep_reframe(
            &item.record.text,
            &item.spans,
            infiller.as_ref(),
            &lex,
            cfg.rewrite.top_n,
        )
    });
    let meta = ArtifactMeta::of(cfg);
    let mut lines = Vec::with_capacity(items.len());
    for (item, r) in items.iter().zip(results) {
        let (result, _) = r?;
        lines.push(SystemOutputLine {
            meta: meta.clone(),
            id: item.record.id.clone(),
            task: item.task,
            system: "lexrep".into(),
            input: result.original.clone(),
            output: result.rewritten.clone(),
            config: None,
            candidates: Vec::new(),
            replacements: result
                .replacements
                .iter()
                .map(|r| (r.original.clone(), r.replacement.clone()))
                .collect(),
        });
    }
    let path = cfg.out_dir.join("lexrep.jsonl");
    write_jsonl(&path, &lines)?;
    Ok((path, lines))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    #[serde(flatten)]
    pub meta: ArtifactMeta,
    pub reports: Vec<EvaluationReport>,
}

/// Score output files against their inputs. A record's system is its
/// `system` field, or the file stem when absent. Writes `report.json` and
/// `report.txt`.
pub fn evaluate(cfg: &PipelineConfig, files: &[PathBuf]) -> Result<ReportFile> {
    if files.is_empty() {
        return Err(Error::Config("no output files to evaluate".into()));
    }
    let mut by_system: Vec<(String, Vec<OutputRecord>)> = Vec::new();
    for f in files {
        if !f.exists() {
            return Err(Error::Config(format!(
                "output file {} does not exist",
                f.display()
            )));
        }
        let stem = f
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        for r in evaluate::read_outputs(f)? {
            let system = r.system.clone().unwrap_or_else(|| stem.clone());
            match by_system.iter_mut().find(|(s, _)| *s == system) {
                Some((_, recs)) => recs.push(r),
                None => by_system.push((system, vec![r])),
            }
        }
    }
    cfg.require_backend(&cfg.encoder, "encoder")?;
    let encoder = backends::load_encoder(&cfg.encoder)?;
    let grouped = evaluate::group_outputs(&by_system)?;
    let reports = grouped
        .iter()
        .map(|(task, outs)| {
            evaluate::build_report(task, outs, encoder.as_ref(), &cfg.test, cfg.workers)
        })
        .collect::<Result<Vec<_>>>()?;
    let file = ReportFile {
        meta: ArtifactMeta::of(cfg),
        reports,
    };
    write_json(&cfg.out_dir.join("report.json"), &file)?;
    write_bytes(
        &cfg.out_dir.join("report.txt"),
        evaluate::render_table(&file.reports).as_bytes(),
    )?;
    Ok(file)
}
