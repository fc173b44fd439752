use proptest::prelude::*;

use super::*;

fn char_inventory(texts: &[&str]) -> SymbolInventory {
    build_inventory(texts, Mode::Character, None).unwrap()
}

#[test]
fn inventory_from_two_texts_has_sorted_symbols() {
    let inv = char_inventory(&["ab", "ba"]);
    assert_eq!(inv.size(), 4);
    assert_eq!(inv.symbol(PAD_ID), Some("<pad>"));
    assert_eq!(inv.symbol(EOS_ID), Some("<eos>"));
    assert_eq!(inv.symbol(2), Some("a"));
    assert_eq!(inv.symbol(3), Some("b"));
}

#[test]
fn inventory_covers_cjk_text() {
    let inv = char_inventory(&["你好"]);
    assert_eq!(inv.size(), 4);
    assert_eq!(inv.index_of("你"), Some(2));
    assert_eq!(inv.index_of("好"), Some(3));
}

#[test]
fn inventory_build_is_deterministic() {
    let a = serde_json::to_string(&char_inventory(&["你好hi", "ok 啊"])).unwrap();
    let b = serde_json::to_string(&char_inventory(&["你好hi", "ok 啊"])).unwrap();
    assert_eq!(a, b);
}

#[test]
fn inventory_round_trips_through_serde() {
    let inv = char_inventory(&["你好 hi"]);
    let json = serde_json::to_string(&inv).unwrap();
    let back: SymbolInventory = serde_json::from_str(&json).unwrap();
    back.validate().unwrap();
    assert_eq!(inv, back);
}

#[test]
fn inventory_rejects_empty_corpus() {
    assert!(matches!(
        build_inventory(&[], Mode::Character, None),
        Err(TextError::EmptyCorpus)
    ));
    assert!(matches!(
        build_inventory(&["   "], Mode::Character, None),
        Err(TextError::EmptyCorpus)
    ));
}

#[test]
fn validate_catches_corrupted_inventories() {
    let good = char_inventory(&["ab"]);
    let json = serde_json::to_string(&good).unwrap();
    let bad: SymbolInventory =
        serde_json::from_str(&json.replace("<pad>", "a")).unwrap();
    assert!(matches!(bad.validate(), Err(TextError::BadInventory { .. })));
}

#[test]
fn tokenize_maps_chars_and_appends_eos() {
    let inv = char_inventory(&["ab", "ba"]);
    let seq = tokenize("ab", &inv, None).unwrap();
    assert_eq!(seq.ids, vec![2, 3, EOS_ID]);
    assert_eq!(seq.source_text, "ab");
}

#[test]
fn tokenize_rejects_empty_and_unknown() {
    let inv = char_inventory(&["ab"]);
    assert!(matches!(tokenize("", &inv, None), Err(TextError::EmptyText)));
    assert!(matches!(tokenize(" \t ", &inv, None), Err(TextError::EmptyText)));
    match tokenize("ax", &inv, None) {
        Err(TextError::UnknownSymbol { symbol, offset }) => {
            assert_eq!(symbol, "x");
            assert_eq!(offset, 1);
        }
        other => panic!("expected UnknownSymbol, got {other:?}"),
    }
}

#[test]
fn whitespace_collapses_to_space_symbol_when_present() {
    let inv = char_inventory(&["a b"]);
    let seq = tokenize("a \t  b", &inv, None).unwrap();
    let space = inv.index_of(" ").unwrap();
    let (a, b) = (inv.index_of("a").unwrap(), inv.index_of("b").unwrap());
    assert_eq!(seq.ids, vec![a, space, b, EOS_ID]);
}

#[test]
fn whitespace_is_dropped_without_space_symbol() {
    let inv = char_inventory(&["ab"]);
    let seq = tokenize("a b", &inv, None).unwrap();
    assert_eq!(seq.ids, vec![2, 3, EOS_ID]);
}

#[test]
fn detokenize_reproduces_normalized_text() {
    let inv = char_inventory(&["你好 hi there"]);
    let seq = tokenize("你好   hi\tthere", &inv, None).unwrap();
    assert_eq!(detokenize(&seq, &inv), "你好 hi there");
}

#[test]
fn mask_mixed_script_text() {
    let inv = char_inventory(&["你好hi"]);
    let seq = tokenize("你好hi", &inv, None).unwrap();
    let mask = derive_language_mask("你好hi", &seq, None).unwrap();
    assert_eq!(
        mask.langs,
        vec![Lang::Cn, Lang::Cn, Lang::En, Lang::En, Lang::En]
    );
}

#[test]
fn mask_pure_latin_is_all_en() {
    let inv = char_inventory(&["abc"]);
    let seq = tokenize("abc", &inv, None).unwrap();
    let mask = derive_language_mask("abc", &seq, None).unwrap();
    assert_eq!(mask.langs, vec![Lang::En; 4]);
}

#[test]
fn punctuation_and_space_inherit_from_the_left() {
    // "你, a" with a space symbol: comma and space both follow 你.
    let inv = char_inventory(&["你, a"]);
    let seq = tokenize("你, a", &inv, None).unwrap();
    let mask = derive_language_mask("你, a", &seq, None).unwrap();
    assert_eq!(
        mask.langs,
        vec![Lang::Cn, Lang::Cn, Lang::Cn, Lang::En, Lang::En]
    );

    // Without a space symbol the space position disappears entirely.
    let inv = char_inventory(&["你,a"]);
    let seq = tokenize("你, a", &inv, None).unwrap();
    let mask = derive_language_mask("你, a", &seq, None).unwrap();
    assert_eq!(mask.langs, vec![Lang::Cn, Lang::Cn, Lang::En, Lang::En]);
}

#[test]
fn leading_punctuation_defaults_to_en() {
    let inv = char_inventory(&["!你"]);
    let seq = tokenize("!你", &inv, None).unwrap();
    let mask = derive_language_mask("!你", &seq, None).unwrap();
    assert_eq!(mask.langs, vec![Lang::En, Lang::Cn, Lang::Cn]);
}

#[test]
fn explicit_spans_override_script_classes() {
    let inv = char_inventory(&["abcd"]);
    let seq = tokenize("abcd", &inv, None).unwrap();
    let spans = [(Lang::Cn, 0, 2), (Lang::En, 2, 4)];
    let mask = derive_language_mask("abcd", &seq, Some(&spans)).unwrap();
    assert_eq!(
        mask.langs,
        vec![Lang::Cn, Lang::Cn, Lang::En, Lang::En, Lang::En]
    );
}

#[test]
fn bad_explicit_spans_are_rejected() {
    let inv = char_inventory(&["abcd"]);
    let seq = tokenize("abcd", &inv, None).unwrap();
    for spans in [
        vec![(Lang::Cn, 0, 2)],                       // gap at the end
        vec![(Lang::Cn, 1, 4)],                       // gap at the start
        vec![(Lang::Cn, 0, 3), (Lang::En, 2, 4)],     // overlap
        vec![(Lang::Cn, 0, 2), (Lang::En, 2, 9)],     // past the end
        vec![(Lang::Cn, 0, 0), (Lang::En, 0, 4)],     // empty span
    ] {
        assert!(
            matches!(
                derive_language_mask("abcd", &seq, Some(&spans)),
                Err(TextError::InvalidSpans { .. })
            ),
            "spans {spans:?} should be rejected"
        );
    }
}

#[test]
fn phoneme_mode_tokenizes_via_lexicon() {
    let lex = Lexicon::parse("hello\tHH EH L OW\nworld\tW ER L D\n").unwrap();
    let inv = build_inventory(&["hello world"], Mode::Phoneme, Some(&lex)).unwrap();
    assert!(inv.has_space());
    let seq = tokenize("hello  world", &inv, Some(&lex)).unwrap();
    let symbols: Vec<&str> = seq.ids.iter().map(|&id| inv.symbol(id).unwrap()).collect();
    assert_eq!(
        symbols,
        vec!["HH", "EH", "L", "OW", " ", "W", "ER", "L", "D", "<eos>"]
    );
    // All phonemes of "hello" share the word's origin; mask stays aligned.
    let mask = derive_language_mask("hello world", &seq, None).unwrap();
    assert_eq!(mask.langs, vec![Lang::En; seq.len()]);
}

#[test]
fn phoneme_mode_requires_lexicon_and_coverage() {
    let lex = Lexicon::parse("hello\tHH EH L OW\n").unwrap();
    assert!(matches!(
        build_inventory(&["hello"], Mode::Phoneme, None),
        Err(TextError::LexiconRequired)
    ));
    match build_inventory(&["hello there"], Mode::Phoneme, Some(&lex)) {
        Err(TextError::UncoveredWord { word }) => assert_eq!(word, "there"),
        other => panic!("expected UncoveredWord, got {other:?}"),
    }
    let inv = build_inventory(&["hello"], Mode::Phoneme, Some(&lex)).unwrap();
    assert!(matches!(
        tokenize("hello", &inv, None),
        Err(TextError::LexiconRequired)
    ));
}

#[test]
fn lexicon_rejects_malformed_lines() {
    assert!(matches!(
        Lexicon::parse("word without tab\n"),
        Err(TextError::LexiconParse { line: 1, .. })
    ));
    assert!(matches!(
        Lexicon::parse("# comment\nok\tA\nbad\t\n"),
        Err(TextError::LexiconParse { line: 3, .. })
    ));
}

fn mixed_text_strategy() -> impl Strategy<Value = String> {
    let alphabet = prop::sample::select(
        "你好世界中文hello ab,.!?  "
            .chars()
            .collect::<Vec<char>>(),
    );
    prop::collection::vec(alphabet, 1..24)
        .prop_map(|cs| cs.into_iter().collect::<String>())
        .prop_filter("normalizes to empty", |s| !normalize_text(s).is_empty())
}

proptest! {
    #[test]
    fn mask_indicators_partition_every_position(text in mixed_text_strategy()) {
        let inv = char_inventory(&[text.as_str()]);
        let seq = tokenize(&text, &inv, None).unwrap();
        let mask = derive_language_mask(&text, &seq, None).unwrap();
        prop_assert_eq!(mask.len(), seq.len());
        let cn = mask.indicator(Lang::Cn);
        let en = mask.indicator(Lang::En);
        for i in 0..mask.len() {
            prop_assert_eq!(cn[i] + en[i], 1.0);
        }
    }

    #[test]
    fn tokenize_detokenize_round_trips(text in mixed_text_strategy()) {
        let inv = char_inventory(&[text.as_str()]);
        let seq = tokenize(&text, &inv, None).unwrap();
        prop_assert_eq!(detokenize(&seq, &inv), normalize_text(&text));
    }
}
