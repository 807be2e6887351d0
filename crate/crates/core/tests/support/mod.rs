#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reframer::lexicon::{EmotionLabel, EmotionSet};
use reframer::rewrite::{Replacement, RewriteResult};
use reframer::text::{tokenize, TokenSpan};

/// Words that are never emotion labels, so a sentence body cannot be
/// mistaken for a control code.
pub const VOCAB: &[&str] = &[
    "we", "need", "more", "tools", "city", "budget", "plan", "people", "vote", "money", "tax",
    "school", "road", "river", "green", "open", "market", "policy", "today", "never", "café",
    "naïve", "x2", "Über",
];
pub const PUNCT: &[&str] = &[",", ".", "!", "?", "'", ";", ":", "-"];

pub fn random_sentence(rng: &mut impl Rng) -> String {
    let n = rng.random_range(1..16);
    let mut out = String::new();
    for i in 0..n {
        let punct = i > 0 && rng.random_bool(0.2);
        let tok = if punct {
            *PUNCT.choose(rng).unwrap()
        } else {
            *VOCAB.choose(rng).unwrap()
        };
        if i > 0 && !(punct && rng.random_bool(0.7)) {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

pub fn random_emotions(rng: &mut impl Rng) -> EmotionSet {
    if rng.random_bool(0.1) {
        return EmotionSet::NEUTRAL;
    }
    let labels: Vec<EmotionLabel> = EmotionLabel::ALL[..8]
        .iter()
        .copied()
        .filter(|_| rng.random_bool(0.3))
        .collect();
    if labels.is_empty() {
        EmotionSet::single(*EmotionLabel::ALL[..8].choose(rng).unwrap())
    } else {
        EmotionSet::new(labels).unwrap()
    }
}

fn random_phrase(rng: &mut impl Rng, avoid: &str) -> String {
    loop {
        let n = if rng.random_bool(0.8) { 1 } else { 2 };
        let words: Vec<&str> = (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect();
        let p = words.join(" ");
        if p.to_lowercase() != avoid.to_lowercase() {
            return p;
        }
    }
}

/// A valid rewrite of a random sentence: some word runs (one or two tokens)
/// replaced by other vocabulary.
pub fn random_rewrite(seed: u64) -> RewriteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let text = random_sentence(&mut rng);
    let tokens = tokenize(&text);
    let mut reps = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i].is_word() && rng.random_bool(0.35) {
            let last = if i + 1 < tokens.len() && tokens[i + 1].is_word() && rng.random_bool(0.2) {
                i + 1
            } else {
                i
            };
            let span = TokenSpan::from_tokens(&text, &tokens, i, last);
            let replacement = random_phrase(&mut rng, &span.surface);
            reps.push(Replacement {
                original: span.surface.clone(),
                span,
                replacement,
                original_emotions: random_emotions(&mut rng),
                replacement_emotions: random_emotions(&mut rng),
            });
            i = last + 2;
        } else {
            i += 1;
        }
    }
    RewriteResult::from_replacements(text, reps).unwrap()
}
