//! Turn raw code-switched text into model inputs: a symbol id sequence and a
//! per-position language mask.
//!
//! Run with `cargo run --example text_frontend`.

use xtts::textfront::{
    build_inventory, derive_language_mask, detokenize, normalize_text, tokenize, Lang, Lexicon,
    Mode,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = ["你好 world", "打开 the door", "关灯 please"];
    let utterance = "  你好   the world ";

    // Character mode: the inventory is every character seen in the corpus,
    // plus reserved padding and end-of-sequence markers.
    let inventory = build_inventory(&corpus, Mode::Character, None)?;
    println!("inventory: {} symbols in character mode", inventory.size());

    println!("raw text:   {utterance:?}");
    println!("normalized: {:?}", normalize_text(utterance));

    let seq = tokenize(utterance, &inventory, None)?;
    let symbols: Vec<&str> = seq
        .ids
        .iter()
        .map(|&id| inventory.symbol(id).unwrap())
        .collect();
    println!("ids:        {:?}", seq.ids);
    println!("symbols:    {symbols:?}");
    println!("round trip: {:?}", detokenize(&seq, &inventory));

    // The language mask aligns one language tag with every symbol, eos
    // included. Without annotations it is derived from script: CJK
    // characters are Mandarin, Latin is English, punctuation and spaces
    // inherit from the left.
    let mask = derive_language_mask(utterance, &seq, None)?;
    let tags: Vec<&str> = mask
        .langs
        .iter()
        .map(|l| if *l == Lang::Cn { "cn" } else { "en" })
        .collect();
    println!("mask:       {tags:?}");

    // Corpora with human span annotations override the heuristic, which
    // matters for romanized Mandarin the script test cannot catch. Here the
    // final word is declared Mandarin despite its Latin script. Spans index
    // characters of the normalized text and must tile it exactly.
    let spans = [(Lang::Cn, 0, 3), (Lang::En, 3, 7), (Lang::Cn, 7, 12)];
    let annotated = derive_language_mask(utterance, &seq, Some(&spans))?;
    println!(
        "annotated:  {:?}",
        annotated
            .langs
            .iter()
            .map(|l| if *l == Lang::Cn { "cn" } else { "en" })
            .collect::<Vec<_>>()
    );

    // Phoneme mode swaps characters for lexicon entries; every word of the
    // corpus needs one.
    let lexicon = Lexicon::parse(
        "hello\tHH AH L OW\n\
         world\tW ER L D\n",
    )?;
    let phone_inv = build_inventory(&["hello world"], Mode::Phoneme, Some(&lexicon))?;
    let phone_seq = tokenize("hello world", &phone_inv, Some(&lexicon))?;
    let phones: Vec<&str> = phone_seq
        .ids
        .iter()
        .map(|&id| phone_inv.symbol(id).unwrap())
        .collect();
    println!("phonemes:   {phones:?}");

    Ok(())
}
