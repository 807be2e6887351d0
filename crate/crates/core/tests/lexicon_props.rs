mod support;

use proptest::prelude::*;
use proptest::sample::select;
use reframer::lexicon::{
    find_collocations, find_emotion_words, has_different_connotation, CollocationList,
    ConnotationLexicon, EmotionLabel, EmotionLexicon, EmotionSet,
};
use reframer::text::tokenize;

const WORDS: &[&str] = &[
    "soft",
    "power",
    "tax",
    "cuts",
    "border",
    "security",
    "the",
    "big",
    "government",
    "care",
];

/// Every (start, len) where the lowercased token run equals a listed phrase,
/// then a left-to-right pick preferring the longer match at each start.
fn oracle(text: &str, phrases: &[Vec<String>]) -> Vec<(usize, usize)> {
    let toks: Vec<String> = tokenize(text)
        .iter()
        .map(|t| t.text.to_lowercase())
        .collect();
    let mut matches = Vec::new();
    for start in 0..toks.len() {
        for p in phrases {
            if !p.is_empty()
                && start + p.len() <= toks.len()
                && toks[start..start + p.len()] == p[..]
            {
                matches.push((start, p.len()));
            }
        }
    }
    matches.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut out = Vec::new();
    let mut cursor = 0;
    for (s, l) in matches {
        if s >= cursor {
            out.push((s, l));
            cursor = s + l;
        }
    }
    out
}

fn emotion_set() -> impl Strategy<Value = EmotionSet> {
    prop::collection::vec(select(&EmotionLabel::ALL[..8]), 0..5).prop_map(|labels| {
        if labels.is_empty() {
            EmotionSet::NEUTRAL
        } else {
            EmotionSet::new(labels).unwrap()
        }
    })
}

fn casing(word: &str, mask: u32) -> String {
    word.chars()
        .enumerate()
        .map(|(i, c)| {
            if mask >> (i % 32) & 1 == 1 {
                c.to_uppercase().collect::<String>()
            } else {
                c.to_lowercase().collect()
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn collocation_scan_matches_exhaustive_oracle(
        phrases in prop::collection::vec(prop::collection::vec(select(WORDS), 1..4), 1..6),
        words in prop::collection::vec((select(WORDS), any::<u32>(), select(&[" ", " ", ", ", ". "][..])), 0..20),
    ) {
        let text: String = words.iter().map(|(w, m, sep)| format!("{}{}", casing(w, *m), sep)).collect();
        let lines: Vec<String> = phrases.iter().map(|p| p.join(" ")).collect();
        let list = CollocationList::new(&lines);
        let phrase_toks: Vec<Vec<String>> = phrases.iter().map(|p| p.iter().map(|w| w.to_string()).collect()).collect();
        let got: Vec<(usize, usize)> = find_collocations(&text, &list)
            .iter()
            .map(|s| (s.token_start, s.token_end - s.token_start))
            .collect();
        prop_assert_eq!(got, oracle(&text, &phrase_toks));
        for s in find_collocations(&text, &list) {
            s.validate(&text).unwrap();
            prop_assert!(list.contains(&s.surface));
        }
    }

    #[test]
    fn lookup_ignores_case(idx in 0usize..40, mask in any::<u32>()) {
        let lex = ConnotationLexicon::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/connotation.csv")).unwrap();
        let entries: Vec<(String, EmotionSet)> = lex.entries().map(|(w, e)| (w.to_string(), e)).collect();
        let (word, set) = &entries[idx % entries.len()];
        prop_assert_eq!(lex.lookup(&casing(word, mask)), *set);
        let nrc = EmotionLexicon::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/emotion.tsv")).unwrap();
        prop_assert_eq!(nrc.lookup(&casing(word, mask)), nrc.lookup(word));
    }

    #[test]
    fn different_connotation_is_symmetric_and_irreflexive(a in emotion_set(), b in emotion_set()) {
        prop_assert_eq!(has_different_connotation(a, b), has_different_connotation(b, a));
        prop_assert!(!has_different_connotation(a, a));
        prop_assert_eq!(has_different_connotation(a, b), a != b);
    }

    #[test]
    fn emotion_set_text_round_trip(a in emotion_set(), b in emotion_set()) {
        prop_assert_eq!(a.to_string().parse::<EmotionSet>().unwrap(), a);
        prop_assert_eq!(a.union(EmotionSet::NEUTRAL), a);
        prop_assert_eq!(a.union(b), b.union(a));
        prop_assert!(!(a.union(b).is_neutral() && !(a.is_neutral() && b.is_neutral())));
    }

    #[test]
    fn emotion_words_carry_the_target(seed in any::<u64>()) {
        let nrc = EmotionLexicon::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/emotion.tsv")).unwrap();
        let text = format!("{} danger and Terror, then calm", support::random_sentence(&mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed)));
        let spans = find_emotion_words(&text, &nrc, EmotionLabel::Fear);
        prop_assert!(spans.len() >= 2);
        for s in &spans {
            s.validate(&text).unwrap();
            prop_assert!(nrc.lookup(&s.surface).contains(EmotionLabel::Fear));
        }
    }
}

#[test]
fn fixture_lexicon_statistics() {
    let lex = ConnotationLexicon::load(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../fixtures/connotation.csv"
    ))
    .unwrap();
    assert_eq!(lex.stats().multi_token_rows, 1);
    assert_eq!(lex.lookup("calm"), EmotionSet::NEUTRAL);
    assert_eq!(lex.lookup("tools"), EmotionSet::NEUTRAL);
}
