//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs without the libtest harness so every line is printed under plain
//! `cargo test`. Exits non-zero if any criterion fails.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reframer::backends::{HashEncoder, MockScorer};
use reframer::evaluate::{randomization_test, semantic_similarity, RandomizationConfig, TestMode};
use reframer::lexicon::{ConnotationLexicon, EmotionLabel, EmotionSet};
use reframer::pairformat::{self, parse_source, serialize_pair, TrainingPair};
use reframer::reframe::{rerank, Candidate, NliDirection};
use reframer::rewrite::{Replacement, RewriteResult};
use reframer::text::{tokenize, TokenSpan};

type Outcome = Result<String, String>;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn cli(cmd: &str, out: &Path, extra: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_reframer"))
        .arg(cmd)
        .arg("--config")
        .arg(fixtures().join("toy.conf"))
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!(
            "`{cmd}` exited {:?}: {}",
            o.status.code(),
            String::from_utf8_lossy(&o.stderr).trim()
        ))
    }
}

fn tempdir() -> tempfile::TempDir {
    tempfile::tempdir().expect("temp dir")
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn jsonl(path: &Path) -> Result<Vec<serde_json::Value>, String> {
    read(path)?
        .lines()
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Split a serialized source into its body segments without using the
/// library parser: returns (outside segments, span contents).
fn split_source(source: &str) -> Result<(Vec<String>, Vec<String>), String> {
    let labels: Vec<&str> = EmotionLabel::ALL.iter().map(|l| l.as_str()).collect();
    let mut rest = source;
    while let Some((word, tail)) = rest.split_once(' ') {
        if !labels.contains(&word) {
            break;
        }
        match tail.strip_prefix("[DELIM] ") {
            Some(t) => rest = t,
            None => {
                rest = tail;
                break;
            }
        }
    }
    let mut outside = Vec::new();
    let mut spans = Vec::new();
    while let Some(open) = rest.find("[SEP] ") {
        let after = &rest[open + 6..];
        let close = after.find(" [SEP]").ok_or("unclosed span")?;
        outside.push(rest[..open].to_string());
        spans.push(after[..close].to_string());
        rest = &after[close + 6..];
    }
    outside.push(rest.to_string());
    Ok((outside, spans))
}

/// Walk `target` along the outside segments; the text between consecutive
/// segments is the original word aligned with each span.
fn align(target: &str, outside: &[String]) -> Option<Vec<String>> {
    let mut rest = target.strip_prefix(outside[0].as_str())?;
    let mut words = Vec::new();
    for seg in &outside[1..] {
        let end = if seg.is_empty() {
            rest.len()
        } else {
            1 + rest.get(1..)?.find(seg.as_str())?
        };
        words.push(rest[..end].to_string());
        rest = rest[end..].strip_prefix(seg.as_str())?;
    }
    rest.is_empty().then_some(words)
}

fn criterion_1() -> Outcome {
    let dir = tempdir();
    let start = Instant::now();
    cli("build-data", dir.path(), &[])?;
    let elapsed = start.elapsed();
    let lex =
        ConnotationLexicon::load(fixtures().join("connotation.csv")).map_err(|e| e.to_string())?;
    let mut pairs: Vec<TrainingPair> = Vec::new();
    for f in ["train.tsv", "val.tsv"] {
        pairs.extend(pairformat::read_tsv(dir.path().join(f)).map_err(|e| e.to_string())?);
    }
    ensure(!pairs.is_empty(), || "no pairs produced".into())?;
    let corpus = read(&fixtures().join("corpus.jsonl"))?;
    ensure(corpus.lines().count() == 50, || {
        "toy corpus is not 50 sentences".into()
    })?;
    let mut spans = 0;
    for p in &pairs {
        let (outside, replaced) = split_source(&p.source)?;
        let originals = align(&p.target, &outside)
            .ok_or_else(|| format!("text outside spans differs: {}", p.source))?;
        for (src, tgt) in replaced.iter().zip(&originals) {
            spans += 1;
            ensure(lex.phrase_emotions(src) != lex.phrase_emotions(tgt), || {
                format!("`{src}` and `{tgt}` share a connotation in: {}", p.source)
            })?;
        }
    }
    ensure(elapsed < Duration::from_secs(10), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "{} pairs, {spans} spans, all sound; {:.2}s",
        pairs.len(),
        elapsed.as_secs_f64()
    ))
}

const VOCAB: &[&str] = &[
    "we", "need", "more", "tools", "city", "budget", "plan", "people", "vote", "money", "tax",
    "school", "road", "café", "naïve", "x2",
];
const PUNCT: &[&str] = &[",", ".", "!", "'", ";"];

fn random_rewrite(rng: &mut ChaCha8Rng) -> RewriteResult {
    let n = rng.random_range(1..14);
    let mut text = String::new();
    for i in 0..n {
        let punct = i > 0 && rng.random_bool(0.2);
        if i > 0 && !(punct && rng.random_bool(0.7)) {
            text.push(' ');
        }
        text.push_str(if punct {
            PUNCT.choose(rng).unwrap()
        } else {
            VOCAB.choose(rng).unwrap()
        });
    }
    let tokens = tokenize(&text);
    let mut reps = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i].is_word() && rng.random_bool(0.4) {
            let span = TokenSpan::from_tokens(&text, &tokens, i, i);
            let replacement = loop {
                let w = VOCAB.choose(rng).unwrap();
                if w.to_lowercase() != span.surface.to_lowercase() {
                    break w.to_string();
                }
            };
            let emo = |rng: &mut ChaCha8Rng| {
                let labels: Vec<EmotionLabel> = EmotionLabel::ALL[..8]
                    .iter()
                    .copied()
                    .filter(|_| rng.random_bool(0.3))
                    .collect();
                EmotionSet::new(labels).unwrap_or(EmotionSet::single(EmotionLabel::Fear))
            };
            reps.push(Replacement {
                original: span.surface.clone(),
                span,
                replacement,
                original_emotions: emo(rng),
                replacement_emotions: emo(rng),
            });
        }
        i += 1;
    }
    RewriteResult::from_replacements(text, reps).expect("valid random rewrite")
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let results: Vec<RewriteResult> = (0..1000).map(|_| random_rewrite(&mut rng)).collect();
    let mut failures = 0;
    let mut pairs = Vec::new();
    for r in &results {
        let pair = serialize_pair(r);
        let ok = match parse_source(&pair.source) {
            Ok(parsed) => {
                parsed.codes == pair.control_codes
                    && parsed.plain_text == r.rewritten
                    && parsed.spans.len() == r.replacements.len()
                    && parsed
                        .spans
                        .iter()
                        .zip(&r.replacements)
                        .all(|(s, rep)| s.surface == rep.replacement)
                    && pair.target == r.original
            }
            Err(_) => false,
        };
        if !ok {
            failures += 1;
        }
        pairs.push(pair);
    }
    let dir = tempdir();
    let path = dir.path().join("pairs.tsv");
    pairformat::write_tsv(&pairs, &path).map_err(|e| e.to_string())?;
    let back = pairformat::read_tsv(&path).map_err(|e| e.to_string())?;
    let tsv_failures =
        pairs.iter().zip(&back).filter(|(a, b)| a != b).count() + pairs.len().abs_diff(back.len());
    ensure(failures == 0 && tsv_failures == 0, || {
        format!("{failures} serialize/parse and {tsv_failures} write/read failures")
    })?;
    Ok("1000 rewrites: serialize/parse and write/read identical".into())
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut agree = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..10);
        let mut seen = HashSet::new();
        let mut rows = Vec::new();
        while rows.len() < n {
            let text: String = (0..rng.random_range(1..4))
                .map(|_| *["a", "b", "c"].choose(&mut rng).unwrap())
                .collect();
            if seen.insert(text.clone()) {
                let w: [f64; 3] = [0, 0, 0].map(|_: i32| rng.random_range(1..4) as f64);
                let s: f64 = w.iter().sum();
                rows.push((text, rng.random_range(1..5) * 5, w.map(|x| x / s)));
            }
        }
        let scorer = MockScorer::new(rows.iter().map(|(t, _, w)| (("input", t.as_str()), *w)))
            .map_err(|e| e.to_string())?;
        let cands: Vec<Candidate> = rows
            .iter()
            .map(|(t, k, _)| Candidate {
                text: t.clone(),
                k: *k,
            })
            .collect();
        let (best, _) =
            rerank("input", &cands, &scorer, NliDirection::Fwd, 1).map_err(|e| e.to_string())?;
        let oracle = rows
            .iter()
            .reduce(|a, b| {
                let better = b.2[0] > a.2[0]
                    || (b.2[0] == a.2[0] && (b.1 < a.1 || (b.1 == a.1 && b.0 < a.0)));
                if better {
                    b
                } else {
                    a
                }
            })
            .unwrap();
        if best.text == oracle.0 {
            agree += 1;
        }
    }
    ensure(agree == 100, || {
        format!("{agree}/100 agree with brute force")
    })?;

    let dir = tempdir();
    cli("build-data", dir.path(), &[])?;
    cli("train", dir.path(), &[])?;
    cli("build-test-set", dir.path(), &[])?;
    cli("reframe", dir.path(), &["--variant", "no-entailment"])?;
    cli("reframe", dir.path(), &["--variant", "full"])?;
    let pick = |file: &str| -> Result<String, String> {
        jsonl(&dir.path().join(file))?
            .into_iter()
            .find(|v| {
                v["input"]
                    .as_str()
                    .is_some_and(|s| s.contains("soft power"))
            })
            .and_then(|v| v["output"].as_str().map(str::to_string))
            .ok_or_else(|| format!("soft power item missing from {file}"))
    };
    let before = pick("reframe_no-entailment.jsonl")?;
    let after = pick("reframe_full.jsonl")?;
    ensure(
        before.contains("military strength") && after.contains("diplomatic communication"),
        || format!("expected the flip, got `{before}` then `{after}`"),
    )?;
    Ok(
        "100/100 match brute force; soft power flips military strength -> diplomatic communication"
            .into(),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let exact = RandomizationConfig {
        iterations: 1,
        seed: 0,
        mode: TestMode::Exact,
    };
    let same = [0.4, 0.9, 0.1, 0.7, 0.3];
    let p_same = randomization_test(&same, &same, &exact).map_err(|e| e.to_string())?;
    ensure(p_same == 1.0, || format!("identical lists gave {p_same}"))?;
    let p_split = randomization_test(&[1.0; 10], &[0.0; 10], &exact).map_err(|e| e.to_string())?;
    ensure(p_split == 2.0 / 1024.0, || {
        format!("ten 1s vs ten 0s gave {p_split}")
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let a: Vec<f64> = (0..12).map(|_| rng.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = a.iter().map(|x| x + rng.random_range(-0.4..0.6)).collect();
        let pe = randomization_test(&a, &b, &exact).map_err(|e| e.to_string())?;
        let approx = RandomizationConfig {
            iterations: 10_000,
            seed: i,
            mode: TestMode::Approximate,
        };
        let pa = randomization_test(&a, &b, &approx).map_err(|e| e.to_string())?;
        worst = worst.max((pe - pa).abs());
    }
    let elapsed = start.elapsed();
    ensure(worst <= 0.02, || {
        format!("approximate vs exact gap {worst:.4}")
    })?;
    ensure(elapsed < Duration::from_secs(30), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "p(identical)=1.0, p(1s vs 0s)=2/1024, max |approx-exact|={worst:.4} over 20 n=12; {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn criterion_5() -> Outcome {
    let enc = HashEncoder::new(64).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let alphabet: Vec<char> = "abcdefghijklmnopqrstuvwxyz ABCXYZ0123456789.,'-éü"
        .chars()
        .collect();
    for _ in 0..50 {
        let len = rng.random_range(1..60);
        let mut s: String = (0..len)
            .map(|_| *alphabet.choose(&mut rng).unwrap())
            .collect();
        s.push('q');
        let sim = semantic_similarity(&s, &s, &enc).map_err(|e| e.to_string())?;
        ensure(sim.reported == 100.0, || {
            format!("`{s}` scored {}", sim.reported)
        })?;
    }
    let (a, b) = ("alpha bravo", "charlie delta");
    let left: HashSet<usize> = ["alpha", "bravo"].iter().map(|t| enc.bucket(t)).collect();
    let right: HashSet<usize> = ["charlie", "delta"].iter().map(|t| enc.bucket(t)).collect();
    ensure(left.is_disjoint(&right), || "fixture tokens collide".into())?;
    let sim = semantic_similarity(a, b, &enc).map_err(|e| e.to_string())?;
    ensure(sim.reported == 0.0, || {
        format!("disjoint fixture scored {}", sim.reported)
    })?;
    Ok("50 random strings report 100.0; disjoint fixture reports 0.0".into())
}

fn run_pipeline(dir: &Path) -> Result<(), String> {
    cli("build-data", dir, &[])?;
    cli("train", dir, &[])?;
    cli("build-test-set", dir, &[])?;
    cli("reframe", dir, &[])?;
    cli("lexrep", dir, &[])?;
    let outs = [dir.join("reframe_full.jsonl"), dir.join("lexrep.jsonl")];
    cli(
        "evaluate",
        dir,
        &[outs[0].to_str().unwrap(), outs[1].to_str().unwrap()],
    )
}

fn criterion_6() -> Outcome {
    let (a, b) = (tempdir(), tempdir());
    run_pipeline(a.path())?;
    run_pipeline(b.path())?;
    let files = [
        "train.tsv",
        "val.tsv",
        "build_data_stats.json",
        "reframe_full.jsonl",
        "report.json",
        "report.txt",
    ];
    for f in files {
        let x = std::fs::read(a.path().join(f)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.path().join(f)).map_err(|e| e.to_string())?;
        ensure(x == y, || format!("{f} differs between runs"))?;
    }
    Ok(format!(
        "{} artifacts byte-identical across reruns",
        files.len()
    ))
}

fn criterion_7() -> Outcome {
    let dir = tempdir();
    cli("build-data", dir.path(), &[])?;
    cli("train", dir.path(), &[])?;
    cli("build-test-set", dir.path(), &[])?;
    let checkpoint = read(&dir.path().join("checkpoint.json"))?;
    let mut variants = Vec::new();
    for v in ["no-demarcator", "no-entailment", "full"] {
        cli("reframe", dir.path(), &["--variant", v])?;
        variants.push(jsonl(&dir.path().join(format!("reframe_{v}.jsonl")))?);
    }
    ensure(
        read(&dir.path().join("checkpoint.json"))? == checkpoint,
        || "checkpoint changed".into(),
    )?;
    let (plain, no_ent, full) = (&variants[0], &variants[1], &variants[2]);
    ensure(
        !plain.is_empty() && plain.len() == no_ent.len() && plain.len() == full.len(),
        || "variants cover different items".into(),
    )?;
    for v in plain {
        ensure(v["output"] == v["input"], || {
            format!("no-demarcator changed {}", v["id"])
        })?;
    }
    for v in no_ent {
        let cands = v["candidates"].as_array().ok_or("no candidates")?;
        let min_k = cands
            .iter()
            .filter_map(|c| c["k"].as_u64())
            .min()
            .ok_or("no k")?;
        let first = cands
            .iter()
            .find(|c| c["k"].as_u64() == Some(min_k))
            .unwrap();
        ensure(v["output"] == first["text"], || {
            format!("no-entailment did not keep smallest k for {}", v["id"])
        })?;
    }
    let mut changed = 0;
    for v in full {
        let cands = v["candidates"].as_array().ok_or("no candidates")?;
        let max = cands
            .iter()
            .filter_map(|c| c["entail_prob"].as_f64())
            .fold(f64::MIN, f64::max);
        let chosen = cands
            .iter()
            .find(|c| c["text"] == v["output"])
            .ok_or("output not among candidates")?;
        ensure(chosen["entail_prob"].as_f64() == Some(max), || {
            format!(
                "full did not take the max-entailment candidate for {}",
                v["id"]
            )
        })?;
        if v["output"] != v["input"] {
            changed += 1;
        }
    }
    ensure(changed > 0, || "full config reframed nothing".into())?;
    Ok(format!(
        "{} items: no-demarcator echoes input, no-entailment keeps smallest k, full takes max entailment",
        full.len()
    ))
}

type Check = fn() -> Outcome;

fn main() {
    let criteria: [(&str, Check); 7] = [
        ("data-creation soundness", criterion_1),
        ("format round-trips", criterion_2),
        ("reranker oracle", criterion_3),
        ("statistics", criterion_4),
        ("similarity sanity", criterion_5),
        ("determinism", criterion_6),
        ("ablation matrix", criterion_7),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("[PASS] {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {} {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "[SKIP] 8 real-backend smoke run: needs pretrained masked LM, seq2seq, NLI and encoder adapters (`model:` backends); none are configured"
    );
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
