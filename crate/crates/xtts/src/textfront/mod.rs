//! Text frontend: raw mixed-script strings in, symbol-id sequences with an
//! aligned per-symbol language mask out.
//!
//! The language mask is what lets one input sequence drive two monolingual
//! encoders: every symbol (including punctuation and the end-of-sequence
//! marker) is assigned exactly one of `CN` or `EN`, so the two indicator
//! vectors partition the sequence.
//!
//! Character mode needs no external resources. Phoneme mode reads a
//! user-supplied lexicon file (`word<TAB>ph1 ph2 ...` per line) and errors
//! on any word it does not cover.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[cfg(test)]
mod tests;

/// Reserved symbol index for padding.
pub const PAD_ID: usize = 0;
/// Reserved symbol index for the end-of-sequence marker.
pub const EOS_ID: usize = 1;

const PAD_SYMBOL: &str = "<pad>";
const EOS_SYMBOL: &str = "<eos>";

#[derive(Debug, Error)]
pub enum TextError {
    #[error("corpus has no usable text")]
    EmptyCorpus,
    #[error("text is empty after whitespace normalization")]
    EmptyText,
    #[error("symbol {symbol:?} at offset {offset} is not in the inventory")]
    UnknownSymbol { symbol: String, offset: usize },
    #[error("word {word:?} has no lexicon entry")]
    UncoveredWord { word: String },
    #[error("phoneme mode requires a lexicon")]
    LexiconRequired,
    #[error("lexicon line {line}: {msg}")]
    LexiconParse { line: usize, msg: String },
    #[error("invalid language spans: {msg}")]
    InvalidSpans { msg: String },
    #[error("inventory is malformed: {msg}")]
    BadInventory { msg: String },
}

/// Input granularity of the frontend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Character,
    Phoneme,
}

/// Language tag carried by every symbol position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Lang {
    Cn,
    En,
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Lang::Cn => "CN",
            Lang::En => "EN",
        })
    }
}

/// Ordered symbol table with `<pad>` at index 0 and `<eos>` at index 1.
/// Content symbols follow in sorted order, so two builds over the same
/// corpus serialize identically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolInventory {
    symbols: Vec<String>,
    mode: Mode,
}

impl SymbolInventory {
    fn new(content: BTreeSet<String>, mode: Mode) -> Self {
        let mut symbols = vec![PAD_SYMBOL.to_string(), EOS_SYMBOL.to_string()];
        symbols.extend(content);
        SymbolInventory { symbols, mode }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    pub fn has_space(&self) -> bool {
        self.index_of(" ").is_some()
    }

    /// Check the reserved slots and uniqueness. Call after deserializing
    /// from an untrusted source (for example a checkpoint header).
    pub fn validate(&self) -> Result<(), TextError> {
        let bad = |msg: String| Err(TextError::BadInventory { msg });
        if self.symbols.len() < 2 {
            return bad(format!("only {} symbols", self.symbols.len()));
        }
        if self.symbols[PAD_ID] != PAD_SYMBOL || self.symbols[EOS_ID] != EOS_SYMBOL {
            return bad("reserved pad/eos slots are not at indices 0 and 1".into());
        }
        let unique: BTreeSet<&String> = self.symbols.iter().collect();
        if unique.len() != self.symbols.len() {
            return bad("duplicate symbols".into());
        }
        Ok(())
    }
}

/// Tokenized utterance: inventory ids ending in `<eos>`, plus the char
/// offset (into the whitespace-normalized text) each symbol came from.
/// Offsets let the language mask cover phoneme symbols, whose strings
/// carry no script information of their own.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolSequence {
    pub ids: Vec<usize>,
    pub source_text: String,
    pub origins: Vec<usize>,
}

impl SymbolSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Per-symbol language assignment aligned with a [`SymbolSequence`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageMask {
    pub langs: Vec<Lang>,
}

impl LanguageMask {
    /// 1.0 where the position carries `lang`, 0.0 elsewhere. The CN and EN
    /// indicators of one mask always sum to the all-ones vector.
    pub fn indicator(&self, lang: Lang) -> Vec<f64> {
        self.langs
            .iter()
            .map(|&l| if l == lang { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.langs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.langs.is_empty()
    }
}

/// Word-to-phonemes table for phoneme mode.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl Lexicon {
    /// Parse `word<TAB>ph1 ph2 ...` lines. Blank lines and `#` comments
    /// are ignored.
    pub fn parse(text: &str) -> Result<Self, TextError> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, phones) = line.split_once('\t').ok_or_else(|| TextError::LexiconParse {
                line: i + 1,
                msg: "expected word<TAB>phonemes".into(),
            })?;
            let phones: Vec<String> = phones.split_whitespace().map(String::from).collect();
            if word.is_empty() || phones.is_empty() {
                return Err(TextError::LexiconParse {
                    line: i + 1,
                    msg: "empty word or phoneme list".into(),
                });
            }
            entries.insert(word.to_string(), phones);
        }
        Ok(Lexicon { entries })
    }

    pub fn load(path: &Path) -> Result<Self, TextError> {
        let text = std::fs::read_to_string(path).map_err(|e| TextError::LexiconParse {
            line: 0,
            msg: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn lookup(&self, word: &str) -> Option<&[String]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Collapse runs of whitespace to single spaces and trim the ends.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Build the symbol inventory for a corpus of utterance texts.
///
/// Character mode collects every character of the normalized texts.
/// Phoneme mode collects every phoneme the lexicon produces, erroring on
/// the first word without an entry. Both keep `" "` as a symbol when any
/// text has more than one word.
pub fn build_inventory(
    texts: &[&str],
    mode: Mode,
    lexicon: Option<&Lexicon>,
) -> Result<SymbolInventory, TextError> {
    let normalized: Vec<String> = texts
        .iter()
        .map(|t| normalize_text(t))
        .filter(|t| !t.is_empty())
        .collect();
    if normalized.is_empty() {
        return Err(TextError::EmptyCorpus);
    }
    let mut content = BTreeSet::new();
    match mode {
        Mode::Character => {
            for text in &normalized {
                for c in text.chars() {
                    content.insert(c.to_string());
                }
            }
        }
        Mode::Phoneme => {
            let lexicon = lexicon.ok_or(TextError::LexiconRequired)?;
            for text in &normalized {
                if text.contains(' ') {
                    content.insert(" ".to_string());
                }
                for word in text.split(' ') {
                    let phones = lexicon.lookup(word).ok_or_else(|| TextError::UncoveredWord {
                        word: word.to_string(),
                    })?;
                    content.extend(phones.iter().cloned());
                }
            }
        }
    }
    Ok(SymbolInventory::new(content, mode))
}

/// Convert one utterance text to inventory ids, appending `<eos>`.
///
/// Whitespace collapses to the inventory's space symbol, or disappears if
/// the inventory has none. `lexicon` is required in phoneme mode and
/// ignored in character mode. Reported offsets index characters of the
/// normalized text.
pub fn tokenize(
    text: &str,
    inv: &SymbolInventory,
    lexicon: Option<&Lexicon>,
) -> Result<SymbolSequence, TextError> {
    let normalized = normalize_text(text);
    if normalized.is_empty() {
        return Err(TextError::EmptyText);
    }
    let space_id = inv.index_of(" ");
    let mut ids = Vec::new();
    let mut origins = Vec::new();

    match inv.mode {
        Mode::Character => {
            for (offset, c) in normalized.chars().enumerate() {
                if c == ' ' {
                    if let Some(id) = space_id {
                        ids.push(id);
                        origins.push(offset);
                    }
                    continue;
                }
                let id = inv.index_of(&c.to_string()).ok_or_else(|| {
                    TextError::UnknownSymbol {
                        symbol: c.to_string(),
                        offset,
                    }
                })?;
                ids.push(id);
                origins.push(offset);
            }
        }
        Mode::Phoneme => {
            let lexicon = lexicon.ok_or(TextError::LexiconRequired)?;
            let mut offset = 0;
            for (i, word) in normalized.split(' ').enumerate() {
                if i > 0 {
                    if let Some(id) = space_id {
                        ids.push(id);
                        origins.push(offset - 1);
                    }
                }
                let phones = lexicon.lookup(word).ok_or_else(|| TextError::UncoveredWord {
                    word: word.to_string(),
                })?;
                for ph in phones {
                    let id = inv.index_of(ph).ok_or_else(|| TextError::UnknownSymbol {
                        symbol: ph.clone(),
                        offset,
                    })?;
                    ids.push(id);
                    origins.push(offset);
                }
                offset += word.chars().count() + 1;
            }
        }
    }

    if ids.is_empty() {
        return Err(TextError::EmptyText);
    }
    origins.push(normalized.chars().count());
    ids.push(EOS_ID);
    Ok(SymbolSequence {
        ids,
        source_text: text.to_string(),
        origins,
    })
}

/// Read the symbol strings back from a sequence. In character mode this
/// reproduces the normalized text exactly; in phoneme mode it yields the
/// space-joined phoneme string (a debugging aid, not an inverse).
pub fn detokenize(seq: &SymbolSequence, inv: &SymbolInventory) -> String {
    let parts: Vec<&str> = seq
        .ids
        .iter()
        .filter(|&&id| id != PAD_ID && id != EOS_ID)
        .filter_map(|&id| inv.symbol(id))
        .collect();
    match inv.mode {
        Mode::Character => parts.concat(),
        Mode::Phoneme => parts.join(" "),
    }
}

fn is_cjk(c: char) -> bool {
    matches!(
        c as u32,
        0x4E00..=0x9FFF | 0x3400..=0x4DBF | 0xF900..=0xFAFF | 0x20000..=0x2A6DF
    )
}

/// Script class of a single character, `None` for punctuation, space and
/// anything else that inherits its language from the left.
fn char_lang(c: char) -> Option<Lang> {
    if is_cjk(c) {
        Some(Lang::Cn)
    } else if c.is_ascii_alphanumeric() {
        Some(Lang::En)
    } else {
        None
    }
}

/// Assign one language per symbol of `seq`.
///
/// With `explicit_spans` given as `(lang, start, end)` char ranges over the
/// normalized text, they must tile it exactly. Otherwise languages are
/// derived from script: CJK ideographs are CN, Latin letters and digits are
/// EN, and everything else (punctuation, space, eos) inherits the nearest
/// preceding content character's language, defaulting to EN at the start.
pub fn derive_language_mask(
    text: &str,
    seq: &SymbolSequence,
    explicit_spans: Option<&[(Lang, usize, usize)]>,
) -> Result<LanguageMask, TextError> {
    let normalized = normalize_text(text);
    let chars: Vec<char> = normalized.chars().collect();

    // Language of every character of the normalized text.
    let char_langs: Vec<Lang> = match explicit_spans {
        Some(spans) => {
            let mut sorted = spans.to_vec();
            sorted.sort_by_key(|&(_, start, _)| start);
            let mut langs = Vec::with_capacity(chars.len());
            let mut expected_start = 0;
            for &(lang, start, end) in &sorted {
                if start != expected_start {
                    return Err(TextError::InvalidSpans {
                        msg: format!(
                            "span starting at {start} leaves {expected_start}..{start} uncovered or overlapped"
                        ),
                    });
                }
                if end <= start {
                    return Err(TextError::InvalidSpans {
                        msg: format!("span {start}..{end} is empty or reversed"),
                    });
                }
                langs.extend(std::iter::repeat(lang).take(end - start));
                expected_start = end;
            }
            if expected_start != chars.len() {
                return Err(TextError::InvalidSpans {
                    msg: format!(
                        "spans cover 0..{expected_start} but the normalized text has {} chars",
                        chars.len()
                    ),
                });
            }
            langs
        }
        None => {
            let mut langs = Vec::with_capacity(chars.len());
            let mut current = Lang::En;
            for &c in &chars {
                if let Some(l) = char_lang(c) {
                    current = l;
                }
                langs.push(current);
            }
            langs
        }
    };

    // The eos symbol sits one past the end and takes the final character's
    // assignment, which the inheritance scan has already resolved.
    let trailing = char_langs.last().copied().unwrap_or(Lang::En);

    let langs = seq
        .origins
        .iter()
        .map(|&o| char_langs.get(o).copied().unwrap_or(trailing))
        .collect();
    Ok(LanguageMask { langs })
}
