mod support;

use proptest::prelude::*;
use reframer::pairformat::{self, parse_source, parse_tsv, serialize_pair, DELIM, SEP};

/// Swap each parsed span of the rewritten body back to its original words.
fn undo(plain: &str, spans: &[reframer::text::TokenSpan], originals: &[String]) -> String {
    let mut out = String::new();
    let mut cursor = 0;
    for (s, orig) in spans.iter().zip(originals) {
        let r = s.byte_range(plain).unwrap();
        out.push_str(&plain[cursor..r.start]);
        out.push_str(orig);
        cursor = r.end;
    }
    out.push_str(&plain[cursor..]);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn serialize_then_parse_is_identity(seed in any::<u64>()) {
        let r = support::random_rewrite(seed);
        let pair = serialize_pair(&r);
        let parsed = parse_source(&pair.source).unwrap();
        prop_assert_eq!(&parsed.codes, &pair.control_codes);
        prop_assert_eq!(&parsed.plain_text, &r.rewritten);
        prop_assert_eq!(parsed.spans.len(), r.replacements.len());
        for ((span, range), rep) in parsed.spans.iter().zip(r.rewritten_ranges()).zip(&r.replacements) {
            prop_assert_eq!(&span.surface, &rep.replacement);
            prop_assert_eq!(span.byte_range(&r.rewritten).unwrap(), range);
        }
        prop_assert_eq!(pair.target, r.original);
    }

    #[test]
    fn undoing_replacements_recovers_target(seed in any::<u64>()) {
        let r = support::random_rewrite(seed);
        let pair = serialize_pair(&r);
        let parsed = parse_source(&pair.source).unwrap();
        let originals: Vec<String> = r.replacements.iter().map(|x| x.original.clone()).collect();
        prop_assert_eq!(undo(&parsed.plain_text, &parsed.spans, &originals), pair.target);
        prop_assert_eq!(pairformat::plain_body(&pair.source), r.rewritten);
    }

    #[test]
    fn marker_counts_match_span_and_code_counts(seed in any::<u64>()) {
        let r = support::random_rewrite(seed);
        let pair = serialize_pair(&r);
        prop_assert_eq!(pair.source.matches(SEP).count(), 2 * pair.span_count);
        prop_assert_eq!(pair.span_count, r.replacements.len());
        prop_assert_eq!(pair.source.matches(DELIM).count(), pair.control_codes.len().saturating_sub(1));
        let mut seen = std::collections::HashSet::new();
        prop_assert!(pair.control_codes.iter().all(|c| seen.insert(*c)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn tsv_write_then_read_is_identity(seed in any::<u64>(), n in 1usize..200) {
        let pairs: Vec<_> = (0..n as u64)
            .map(|i| serialize_pair(&support::random_rewrite(seed.wrapping_add(i))))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.tsv");
        pairformat::write_tsv(&pairs, &path).unwrap();
        let back = pairformat::read_tsv(&path).unwrap();
        prop_assert_eq!(&back, &pairs);
        let data = std::fs::read_to_string(&path).unwrap();
        prop_assert_eq!(parse_tsv(&data).unwrap(), pairs);
        prop_assert!(!data.contains('\r'));
    }
}

#[test]
fn generator_covers_edge_cases() {
    let cases: Vec<_> = (0..1000).map(support::random_rewrite).collect();
    assert!(cases.iter().any(|r| r.replacements.is_empty()));
    assert!(cases.iter().any(|r| r.replacements.len() >= 3));
    assert!(cases
        .iter()
        .any(|r| r.replacements.iter().any(|x| x.original.contains(' '))));
    assert!(cases
        .iter()
        .any(|r| !r.original.is_ascii() && !r.replacements.is_empty()));
    assert!(cases.iter().any(|r| r
        .replacements
        .windows(2)
        .any(|w| w[0].span.token_end + 1 == w[1].span.token_start)));
}
