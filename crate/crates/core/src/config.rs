//! Flat `key = value` pipeline configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the directory holding the config file. Command-line
//! overrides are applied with [`RawConfig::set`] before typing.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::backends::BackendSpec;
use crate::corpus::Task;
use crate::error::{Error, Result};
use crate::evaluate::{RandomizationConfig, TestMode};
use crate::lexicon::EmotionLabel;
use crate::reframe::{ReframeConfig, SweepConfig, TrainConfig};
use crate::rewrite::{RewriteConfig, RewriteMode};

const KNOWN_KEYS: &[&str] = &[
    "connotation_lexicon",
    "emotion_lexicon",
    "collocations",
    "corpus",
    "out_dir",
    "infiller",
    "generator",
    "scorer",
    "encoder",
    "classifier",
    "rewrite_mode",
    "top_n",
    "max_spans",
    "split_ratio",
    "epochs",
    "max_tokens_per_batch",
    "checkpoint",
    "k_values",
    "samples_per_k",
    "max_len",
    "variant",
    "use_demarcators",
    "use_entailment",
    "control_code",
    "nli_direction",
    "task",
    "sample_size",
    "test_set",
    "iterations",
    "test_mode",
    "seed",
    "workers",
];

/// Keys that may change between runs without changing any artifact.
const UNHASHED_KEYS: &[&str] = &["out_dir", "workers"];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl RawConfig {
    pub fn parse(data: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg = RawConfig {
            values: BTreeMap::new(),
            base_dir: base_dir.into(),
        };
        for (i, line) in data.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&data, base)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    /// Short stable digest of every artifact-relevant key.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.values {
            if UNHASHED_KEYS.contains(&k.as_str()) {
                continue;
            }
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize()[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None | Some("") => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`"))),
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key)
            .filter(|v| !v.is_empty())
            .map(|v| self.base_dir.join(v))
    }

    fn backend(&self, key: &str, default: &str) -> Result<BackendSpec> {
        let spec: BackendSpec = self.get(key).unwrap_or(default).parse()?;
        Ok(spec.resolve(&self.base_dir))
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "`{key}` must be true or false, got `{v}`"
        ))),
    }
}

/// Typed view of a [`RawConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub connotation_lexicon: Option<PathBuf>,
    pub emotion_lexicon: Option<PathBuf>,
    pub collocations: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub test_set: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub infiller: BackendSpec,
    pub generator: BackendSpec,
    pub scorer: BackendSpec,
    pub encoder: BackendSpec,
    pub classifier: BackendSpec,
    pub rewrite_mode: RewriteMode,
    pub rewrite: RewriteConfig,
    pub split_ratio: f64,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    pub reframe: ReframeConfig,
    pub task: Task,
    pub sample_size: usize,
    pub test: RandomizationConfig,
    pub seed: u64,
    pub workers: usize,
    pub config_hash: String,
}

impl PipelineConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let seed: u64 = raw.parsed("seed", 0)?;
        let out_dir = raw
            .path("out_dir")
            .unwrap_or_else(|| raw.base_dir.join("out"));
        let checkpoint = raw
            .path("checkpoint")
            .unwrap_or_else(|| out_dir.join("checkpoint.json"));

        let k_values = match raw.get("k_values") {
            None | Some("") => SweepConfig::default().k_values,
            Some(v) => v
                .split(',')
                .map(|k| {
                    k.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("invalid k value `{k}`")))
                })
                .collect::<Result<Vec<usize>>>()?,
        };
        let sweep = SweepConfig {
            k_values,
            samples_per_k: raw.parsed("samples_per_k", 1)?,
            seed,
            max_len: raw.parsed("max_len", SweepConfig::default().max_len)?,
        };
        sweep.validate()?;

        let mut reframe = match raw.get("variant") {
            Some(v) if !v.is_empty() => ReframeConfig::from_variant(v)?,
            _ => ReframeConfig::full(),
        };
        if let Some(v) = raw.get("use_demarcators") {
            reframe.use_demarcators = parse_bool("use_demarcators", v)?;
        }
        if let Some(v) = raw.get("use_entailment") {
            reframe.use_entailment = parse_bool("use_entailment", v)?;
        }
        reframe.control_code = raw
            .parsed("control_code", EmotionLabel::Trust)
            .map_err(|_| Error::Config("invalid control_code".into()))?;
        reframe.nli_direction = raw.parsed("nli_direction", Default::default())?;

        let max_spans = match raw.get("max_spans") {
            None | Some("") | Some("none") => None,
            Some(v) => Some(
                v.parse()
                    .map_err(|_| Error::Config(format!("invalid max_spans `{v}`")))?,
            ),
        };
        let rewrite = RewriteConfig {
            top_n: raw.parsed("top_n", 20)?,
            max_spans,
        };
        if rewrite.top_n == 0 {
            return Err(Error::Config("top_n must be at least 1".into()));
        }
        let split_ratio: f64 = raw.parsed("split_ratio", 0.9)?;
        if !(0.0..=1.0).contains(&split_ratio) {
            return Err(Error::Config(format!(
                "split_ratio {split_ratio} is outside [0, 1]"
            )));
        }
        let test_mode = match raw.get("test_mode") {
            None | Some("") | Some("auto") => TestMode::Auto,
            Some("exact") => TestMode::Exact,
            Some("approximate") => TestMode::Approximate,
            Some(other) => return Err(Error::Config(format!("unknown test_mode `{other}`"))),
        };
        let train = TrainConfig {
            epochs: raw.parsed("epochs", 20)?,
            max_tokens_per_batch: raw.parsed("max_tokens_per_batch", 1024)?,
            seed,
        };
        if train.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        let sample_size = raw.parsed("sample_size", 100)?;
        if sample_size == 0 {
            return Err(Error::Config("sample_size must be at least 1".into()));
        }
        Ok(PipelineConfig {
            connotation_lexicon: raw.path("connotation_lexicon"),
            emotion_lexicon: raw.path("emotion_lexicon"),
            collocations: raw.path("collocations"),
            corpus: raw.path("corpus"),
            test_set: raw.path("test_set"),
            out_dir,
            checkpoint,
            infiller: raw.backend("infiller", "mock:empty")?,
            generator: raw.backend("generator", "mock:echo")?,
            scorer: raw.backend("scorer", "mock:uniform")?,
            encoder: raw.backend("encoder", "mock:hash")?,
            classifier: raw.backend("classifier", "mock:rules")?,
            rewrite_mode: raw.parsed("rewrite_mode", RewriteMode::Different)?,
            rewrite,
            split_ratio,
            train,
            sweep,
            reframe,
            task: raw.parsed("task", Task::Partisan)?,
            sample_size,
            test: RandomizationConfig {
                iterations: raw.parsed("iterations", 10_000)?,
                seed,
                mode: test_mode,
            },
            seed,
            workers: raw.parsed::<usize>("workers", 1)?.max(1),
            config_hash: raw.hash(),
        })
    }

    /// A required input path: configured and present on disk.
    pub fn require(&self, path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        let p = path
            .clone()
            .ok_or_else(|| Error::Config(format!("`{key}` is not configured")))?;
        if !p.exists() {
            return Err(Error::Config(format!(
                "`{key}` path {} does not exist",
                p.display()
            )));
        }
        Ok(p)
    }

    /// Check that a backend's fixture file exists.
    pub fn require_backend(&self, spec: &BackendSpec, key: &str) -> Result<()> {
        if let Some(p) = spec.fixture_path() {
            if !p.exists() {
                return Err(Error::Config(format!(
                    "`{key}` fixture {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}
