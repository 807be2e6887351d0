//! Automatic evaluation: similarity of reframings to their inputs and paired
//! approximate randomization tests between systems.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backends::SentenceEncoder;
use crate::error::{Error, Result};
use crate::parallel::map_ordered;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Largest sample for which [`TestMode::Auto`] enumerates every flip.
pub const EXACT_MAX_ITEMS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    /// Cosine similarity.
    pub value: f64,
    /// `value * 100` rounded to one decimal.
    pub reported: f64,
}

impl SimilarityScore {
    pub fn new(value: f64) -> Self {
        SimilarityScore {
            value,
            reported: round1(value * 100.0),
        }
    }
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    if a == b {
        return if a.iter().all(|x| *x == 0.0) {
            0.0
        } else {
            1.0
        };
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

pub fn semantic_similarity(a: &str, b: &str, enc: &dyn SentenceEncoder) -> Result<SimilarityScore> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("similarity of an empty string".into()));
    }
    let va = enc.encode(a)?;
    let vb = enc.encode(b)?;
    if va.len() != vb.len() {
        return Err(Error::Backend(format!(
            "encoder returned vectors of different sizes ({} and {})",
            va.len(),
            vb.len()
        )));
    }
    Ok(SimilarityScore::new(cosine(&va, &vb)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMode {
    /// Exact for at most [`EXACT_MAX_ITEMS`] items, sampled otherwise.
    #[default]
    Auto,
    Exact,
    Approximate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomizationConfig {
    pub iterations: usize,
    pub seed: u64,
    pub mode: TestMode,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        RandomizationConfig {
            iterations: 10_000,
            seed: 0,
            mode: TestMode::Auto,
        }
    }
}

fn at_least(stat: f64, observed: f64) -> bool {
    stat >= observed - 1e-12 * observed.abs().max(1.0)
}

/// Two-sided paired approximate randomization test on the difference of means.
///
/// Each permutation swaps the two systems' scores on every item independently
/// with probability ½. The sampled p-value is `(hits + 1) / (R + 1)`; the exact
/// mode enumerates all `2^n` swaps and returns the exact proportion.
pub fn randomization_test(a: &[f64], b: &[f64], cfg: &RandomizationConfig) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "score lists differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("empty score lists".into()));
    }
    if cfg.iterations == 0 {
        return Err(Error::Config("iterations must be at least 1".into()));
    }
    let n = a.len();
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let observed = (diffs.iter().sum::<f64>() / n as f64).abs();
    let exact = match cfg.mode {
        TestMode::Exact => true,
        TestMode::Approximate => false,
        TestMode::Auto => n <= EXACT_MAX_ITEMS,
    };
    if exact {
        if n > 30 {
            return Err(Error::InvalidInput(format!(
                "exact test over {n} items is infeasible"
            )));
        }
        let total: u64 = 1 << n;
        let hits = (0..total)
            .filter(|mask| {
                let s: f64 = diffs
                    .iter()
                    .enumerate()
                    .map(|(i, d)| if mask >> i & 1 == 1 { -d } else { *d })
                    .sum();
                at_least((s / n as f64).abs(), observed)
            })
            .count();
        return Ok(hits as f64 / total as f64);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut hits = 0usize;
    for _ in 0..cfg.iterations {
        let mut s = 0.0;
        let mut bits = 0u64;
        for (i, d) in diffs.iter().enumerate() {
            if i % 64 == 0 {
                bits = rng.next_u64();
            }
            s += if bits >> (i % 64) & 1 == 1 { -d } else { *d };
        }
        if at_least((s / n as f64).abs(), observed) {
            hits += 1;
        }
    }
    Ok((hits + 1) as f64 / (cfg.iterations + 1) as f64)
}

/// One system's output for one item, as read from an outputs JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub id: String,
    pub input: String,
    pub output: String,
    #[serde(default)]
    pub task: Option<String>,
    #[serde(default)]
    pub system: Option<String>,
}

pub fn read_outputs(path: impl AsRef<Path>) -> Result<Vec<OutputRecord>> {
    let path = path.as_ref();
    let data = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    data.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::malformed(i + 1, e.to_string())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemScores {
    /// Mean of `per_item`, unrounded.
    pub mean: f64,
    /// `mean` rounded to one decimal.
    pub mean_reported: f64,
    /// Similarity × 100 per item, in `item_ids` order.
    pub per_item: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub system_a: String,
    pub system_b: String,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub task: String,
    pub n_items: usize,
    pub item_ids: Vec<String>,
    pub seed: u64,
    pub iterations: usize,
    pub per_system: BTreeMap<String, SystemScores>,
    pub significance: Vec<PairwiseTest>,
}

/// Items (id → input) plus each system's outputs for one task.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskOutputs {
    pub inputs: BTreeMap<String, String>,
    pub systems: BTreeMap<String, BTreeMap<String, String>>,
}

/// Group output records by task, checking that every system covers the same
/// items with the same inputs.
pub fn group_outputs(
    files: &[(String, Vec<OutputRecord>)],
) -> Result<BTreeMap<String, TaskOutputs>> {
    let mut tasks: BTreeMap<String, TaskOutputs> = BTreeMap::new();
    for (system, records) in files {
        for r in records {
            let task = r.task.clone().unwrap_or_else(|| "default".to_string());
            let entry = tasks.entry(task).or_default();
            match entry.inputs.get(&r.id) {
                Some(existing) if *existing != r.input => {
                    return Err(Error::InvalidInput(format!(
                        "system `{system}` has a different input for item `{}`",
                        r.id
                    )))
                }
                Some(_) => {}
                None => {
                    entry.inputs.insert(r.id.clone(), r.input.clone());
                }
            }
            let outputs = entry.systems.entry(system.clone()).or_default();
            if outputs.insert(r.id.clone(), r.output.clone()).is_some() {
                return Err(Error::DuplicateId(format!("{system}/{}", r.id)));
            }
        }
    }
    for (task, t) in &tasks {
        for (system, outputs) in &t.systems {
            if let Some(missing) = t.inputs.keys().find(|id| !outputs.contains_key(*id)) {
                return Err(Error::InvalidInput(format!(
                    "system `{system}` has no output for item `{missing}` (task {task})"
                )));
            }
        }
    }
    Ok(tasks)
}

/// Similarity of every system's outputs to the inputs, per-system means, and
/// pairwise randomization tests (systems in name order).
pub fn build_report(
    task: &str,
    outputs: &TaskOutputs,
    enc: &dyn SentenceEncoder,
    test: &RandomizationConfig,
    workers: usize,
) -> Result<EvaluationReport> {
    let item_ids: Vec<String> = outputs.inputs.keys().cloned().collect();
    let mut per_system = BTreeMap::new();
    for (system, outs) in &outputs.systems {
        let pairs = item_ids
            .iter()
            .map(|id| {
                let out = outs.get(id).ok_or_else(|| {
                    Error::InvalidInput(format!("system `{system}` has no output for item `{id}`"))
                })?;
                Ok((outputs.inputs[id].as_str(), out.as_str()))
            })
            .collect::<Result<Vec<_>>>()?;
        let per_item = map_ordered(&pairs, workers, enc.reentrant(), |(input, out)| {
            semantic_similarity(input, out, enc).map(|s| s.value * 100.0)
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
        let mean = if per_item.is_empty() {
            0.0
        } else {
            per_item.iter().sum::<f64>() / per_item.len() as f64
        };
        per_system.insert(
            system.clone(),
            SystemScores {
                mean,
                mean_reported: round1(mean),
                per_item,
            },
        );
    }
    let names: Vec<&String> = per_system.keys().collect();
    let mut significance = Vec::new();
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            let p = if item_ids.is_empty() {
                1.0
            } else {
                randomization_test(&per_system[*a].per_item, &per_system[*b].per_item, test)?
            };
            significance.push(PairwiseTest {
                system_a: (*a).clone(),
                system_b: (*b).clone(),
                p_value: p,
            });
        }
    }
    Ok(EvaluationReport {
        task: task.to_string(),
        n_items: item_ids.len(),
        item_ids,
        seed: test.seed,
        iterations: test.iterations,
        per_system,
        significance,
    })
}

/// Plain-text table: one row per system, one column per task, mean similarity × 100.
pub fn render_table(reports: &[EvaluationReport]) -> String {
    let systems: BTreeSet<&String> = reports.iter().flat_map(|r| r.per_system.keys()).collect();
    let width = systems.iter().map(|s| s.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = write!(out, "{:<width$}", "system");
    for r in reports {
        let _ = write!(out, "  {:>10}", r.task);
    }
    out.push('\n');
    for s in systems {
        let _ = write!(out, "{s:<width$}");
        for r in reports {
            match r.per_system.get(s) {
                Some(sc) => {
                    let _ = write!(out, "  {:>10.1}", sc.mean_reported);
                }
                None => {
                    let _ = write!(out, "  {:>10}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}
