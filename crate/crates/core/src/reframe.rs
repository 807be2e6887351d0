//! Controllable generation: fine-tuning harness, top-k sweep, and entailment reranking.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::{score_checked, Checkpoint, EntailmentScorer, NliScores, Seq2SeqGenerator};
use crate::corpus::TestItem;
use crate::error::{Error, Result};
use crate::lexicon::EmotionLabel;
use crate::pairformat::{
    build_inference_source, build_plain_source, contains_marker, plain_body, TrainingPair,
};
use crate::parallel::map_ordered;
use crate::text::{normalize_whitespace, TokenSpan};

/// Fine-tuning settings. The kept checkpoint is always the one with the
/// lowest validation perplexity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub max_tokens_per_batch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            max_tokens_per_batch: 1024,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_pairs: usize,
    pub val_pairs: usize,
    pub val_perplexity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedGenerator {
    pub checkpoint: Checkpoint,
    pub best_perplexity: f64,
    pub log: Vec<EpochMetrics>,
}

/// Train for `cfg.epochs` epochs and keep the checkpoint with the lowest
/// validation perplexity (earliest on ties). With no validation pairs the
/// training pairs stand in.
pub fn fine_tune(
    train: &[TrainingPair],
    val: &[TrainingPair],
    gen: &dyn Seq2SeqGenerator,
    cfg: &TrainConfig,
) -> Result<TrainedGenerator> {
    if train.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if cfg.epochs == 0 {
        return Err(Error::Config("epochs must be at least 1".into()));
    }
    let eval_set = if val.is_empty() { train } else { val };
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(Checkpoint, f64)> = None;
    let mut previous: Option<Checkpoint> = None;
    for epoch in 1..=cfg.epochs {
        let ckpt = gen.train_epoch(previous.as_ref(), train, epoch, cfg)?;
        let ppl = gen.perplexity(&ckpt, eval_set)?;
        if !ppl.is_finite() {
            return Err(Error::Backend(format!(
                "non-finite perplexity at epoch {epoch}"
            )));
        }
        log.push(EpochMetrics {
            epoch,
            train_pairs: train.len(),
            val_pairs: val.len(),
            val_perplexity: ppl,
        });
        if best.as_ref().is_none_or(|(_, b)| ppl < *b) {
            best = Some((ckpt.clone(), ppl));
        }
        previous = Some(ckpt);
    }
    let (checkpoint, best_perplexity) = best.expect("at least one epoch ran");
    Ok(TrainedGenerator {
        checkpoint,
        best_perplexity,
        log,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub k_values: Vec<usize>,
    pub samples_per_k: usize,
    pub seed: u64,
    pub max_len: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            k_values: (1..=10).map(|i| i * 5).collect(),
            samples_per_k: 1,
            seed: 0,
            max_len: 256,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() {
            return Err(Error::Config("k_values must not be empty".into()));
        }
        if self.k_values.contains(&0) {
            return Err(Error::Config("every k must be at least 1".into()));
        }
        if self.samples_per_k == 0 {
            return Err(Error::Config("samples_per_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Stable seed derived from a base seed and a list of labels.
pub fn derive_seed(seed: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Generation {
    pub candidates: Vec<Candidate>,
    /// Sweep values whose sampling failed.
    pub failed_k: Vec<usize>,
}

/// Sample the generator once per `(k, i)` in the sweep and drop exact duplicates,
/// keeping sweep order.
pub fn generate_candidates(
    source: &str,
    gen: &dyn Seq2SeqGenerator,
    checkpoint: &Checkpoint,
    sweep: &SweepConfig,
) -> Result<Generation> {
    sweep.validate()?;
    let mut out = Generation::default();
    for &k in &sweep.k_values {
        let mut failed = false;
        for i in 0..sweep.samples_per_k {
            let seed = derive_seed(sweep.seed, &[&k.to_string(), &i.to_string()]);
            match gen.sample(checkpoint, source, k, seed, sweep.max_len) {
                Ok(text) => {
                    let text = if contains_marker(&text) {
                        plain_body(&text)
                    } else {
                        normalize_whitespace(&text)
                    };
                    if text.is_empty() {
                        failed = true;
                    } else if !out.candidates.iter().any(|c| c.text == text) {
                        out.candidates.push(Candidate { text, k });
                    }
                }
                Err(_) => failed = true,
            }
        }
        if failed {
            out.failed_k.push(k);
        }
    }
    if out.candidates.is_empty() {
        return Err(Error::Backend("generator produced no candidates".into()));
    }
    Ok(out)
}

/// Which way round the input and a candidate are fed to the entailment model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NliDirection {
    /// Input entails candidate.
    #[default]
    Fwd,
    /// Candidate entails input.
    Bwd,
    /// The weaker of the two directions.
    Min,
}

impl FromStr for NliDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fwd" => Ok(NliDirection::Fwd),
            "bwd" => Ok(NliDirection::Bwd),
            "min" => Ok(NliDirection::Min),
            other => Err(Error::Config(format!(
                "nli_direction `{other}` is not fwd, bwd or min"
            ))),
        }
    }
}

impl fmt::Display for NliDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NliDirection::Fwd => "fwd",
            NliDirection::Bwd => "bwd",
            NliDirection::Min => "min",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub text: String,
    pub k: usize,
    pub entail_prob: f64,
    pub scores: NliScores,
}

fn score_direction(
    scorer: &dyn EntailmentScorer,
    input: &str,
    candidate: &str,
    direction: NliDirection,
) -> Result<NliScores> {
    match direction {
        NliDirection::Fwd => score_checked(scorer, input, candidate),
        NliDirection::Bwd => score_checked(scorer, candidate, input),
        NliDirection::Min => {
            let f = score_checked(scorer, input, candidate)?;
            let b = score_checked(scorer, candidate, input)?;
            Ok(if b.entailment < f.entailment { b } else { f })
        }
    }
}

/// Ranking order: higher entailment, then smaller k, then lexicographic text.
pub fn rank_order(a: &RankedCandidate, b: &RankedCandidate) -> Ordering {
    b.entail_prob
        .total_cmp(&a.entail_prob)
        .then(a.k.cmp(&b.k))
        .then_with(|| a.text.cmp(&b.text))
}

/// Score each candidate against the input and return the best plus the full ranking.
pub fn rerank(
    input: &str,
    candidates: &[Candidate],
    scorer: &dyn EntailmentScorer,
    direction: NliDirection,
    workers: usize,
) -> Result<(RankedCandidate, Vec<RankedCandidate>)> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidates to rerank".into()));
    }
    let scored = map_ordered(candidates, workers, scorer.reentrant(), |c| {
        score_direction(scorer, input, &c.text, direction).map(|scores| RankedCandidate {
            text: c.text.clone(),
            k: c.k,
            entail_prob: scores.entailment,
            scores,
        })
    });
    let mut all = scored.into_iter().collect::<Result<Vec<_>>>()?;
    all.sort_by(rank_order);
    Ok((all[0].clone(), all))
}

/// Which parts of the system are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReframeConfig {
    pub use_demarcators: bool,
    pub use_entailment: bool,
    pub control_code: EmotionLabel,
    #[serde(default)]
    pub nli_direction: NliDirection,
}

impl Default for ReframeConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl ReframeConfig {
    /// Demarcated spans plus entailment reranking.
    pub fn full() -> Self {
        ReframeConfig {
            use_demarcators: true,
            use_entailment: true,
            control_code: EmotionLabel::Trust,
            nli_direction: NliDirection::Fwd,
        }
    }

    pub fn without_entailment() -> Self {
        ReframeConfig {
            use_entailment: false,
            ..Self::full()
        }
    }

    pub fn without_demarcators() -> Self {
        ReframeConfig {
            use_demarcators: false,
            use_entailment: false,
            ..Self::full()
        }
    }

    pub fn variant_name(&self) -> &'static str {
        match (self.use_demarcators, self.use_entailment) {
            (true, true) => "full",
            (true, false) => "no-entailment",
            (false, false) => "no-demarcator",
            (false, true) => "no-demarcator-with-entailment",
        }
    }

    pub fn from_variant(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "no-entailment" => Ok(Self::without_entailment()),
            "no-demarcator" => Ok(Self::without_demarcators()),
            other => Err(Error::Config(format!(
                "variant `{other}` is not full, no-entailment or no-demarcator"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub text: String,
    pub k: usize,
    pub entail_prob: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReframeOutput {
    pub id: String,
    pub input: String,
    pub output: String,
    pub config: ReframeConfig,
    pub candidates: Vec<CandidateRecord>,
}

/// Everything needed to reframe one argument.
#[derive(Clone, Copy)]
pub struct Reframer<'a> {
    pub generator: &'a dyn Seq2SeqGenerator,
    pub checkpoint: &'a Checkpoint,
    pub scorer: &'a dyn EntailmentScorer,
    pub sweep: &'a SweepConfig,
    pub config: ReframeConfig,
    pub workers: usize,
}

impl Reframer<'_> {
    pub fn source_for(&self, text: &str, spans: &[TokenSpan]) -> Result<String> {
        if self.config.use_demarcators {
            if spans.is_empty() {
                return Err(Error::InvalidInput(
                    "demarcated reframing needs at least one span".into(),
                ));
            }
            build_inference_source(text, spans, self.config.control_code)
        } else {
            Ok(build_plain_source(text, self.config.control_code))
        }
    }

    /// Reframe one argument using the sweep seed as given.
    pub fn reframe(&self, id: &str, text: &str, spans: &[TokenSpan]) -> Result<ReframeOutput> {
        self.reframe_with_seed(id, text, spans, self.sweep.seed)
    }

    fn reframe_with_seed(
        &self,
        id: &str,
        text: &str,
        spans: &[TokenSpan],
        seed: u64,
    ) -> Result<ReframeOutput> {
        let source = self.source_for(text, spans)?;
        let sweep = SweepConfig {
            seed,
            ..self.sweep.clone()
        };
        let generation = generate_candidates(&source, self.generator, self.checkpoint, &sweep)?;
        let (output, candidates) = if self.config.use_entailment {
            let (best, all) = rerank(
                text,
                &generation.candidates,
                self.scorer,
                self.config.nli_direction,
                self.workers,
            )?;
            let records = all
                .into_iter()
                .map(|c| CandidateRecord {
                    text: c.text,
                    k: c.k,
                    entail_prob: Some(c.entail_prob),
                })
                .collect();
            (best.text, records)
        } else {
            let min_k = generation
                .candidates
                .iter()
                .map(|c| c.k)
                .min()
                .expect("non-empty");
            let first = generation
                .candidates
                .iter()
                .find(|c| c.k == min_k)
                .expect("candidate with the minimal k exists");
            let records = generation
                .candidates
                .iter()
                .map(|c| CandidateRecord {
                    text: c.text.clone(),
                    k: c.k,
                    entail_prob: None,
                })
                .collect();
            (first.text.clone(), records)
        };
        Ok(ReframeOutput {
            id: id.to_string(),
            input: text.to_string(),
            output,
            config: self.config,
            candidates,
        })
    }

    /// Reframe a test set. Each record samples with a seed derived from the
    /// sweep seed and its id, so results do not depend on scheduling.
    pub fn reframe_all(&self, items: &[TestItem]) -> Result<Vec<ReframeOutput>> {
        let reentrant = self.generator.reentrant() && self.scorer.reentrant();
        let inner = Reframer {
            workers: 1,
            ..*self
        };
        map_ordered(items, self.workers, reentrant, |item| {
            let seed = derive_seed(self.sweep.seed, &[&item.record.id]);
            inner.reframe_with_seed(&item.record.id, &item.record.text, &item.spans, seed)
        })
        .into_iter()
        .collect()
    }
}
