//! Input ingestion: text documents split into sentences, or phoneme
//! transcriptions with optional gold word boundaries.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::phonology::Inventory;

/// Dense terminal index.
pub type Sym = u16;

/// Whether terminals are characters or phoneme symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Text,
    Phoneme,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Text => f.write_str("text"),
            Mode::Phoneme => f.write_str("phoneme"),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Mode::Text),
            "phoneme" => Ok(Mode::Phoneme),
            other => Err(Error::InvalidParameter(format!("unknown mode '{other}'"))),
        }
    }
}

/// A terminal symbol: its id and printable name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Terminal<'a> {
    pub id: Sym,
    pub glyph: &'a str,
}

/// The closed set of terminals for one corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    mode: Mode,
    glyphs: Vec<String>,
    index: HashMap<String, Sym>,
}

impl Alphabet {
    pub fn new(mode: Mode, glyphs: Vec<String>) -> Result<Self> {
        if glyphs.len() > Sym::MAX as usize {
            return Err(Error::InvalidParameter(format!(
                "alphabet of {} symbols is too large",
                glyphs.len()
            )));
        }
        let mut index = HashMap::with_capacity(glyphs.len());
        for (i, g) in glyphs.iter().enumerate() {
            if mode == Mode::Text && g.chars().count() != 1 {
                return Err(Error::InvalidParameter(format!(
                    "text glyph {g:?} is not a single character"
                )));
            }
            if index.insert(g.clone(), i as Sym).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate glyph {g:?}")));
            }
        }
        Ok(Alphabet {
            mode,
            glyphs,
            index,
        })
    }

    /// Text alphabet from a set of characters, in code point order.
    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Self {
        let set: BTreeSet<char> = chars.into_iter().collect();
        let glyphs = set.into_iter().map(String::from).collect();
        Alphabet::new(Mode::Text, glyphs).expect("distinct single characters")
    }

    /// Phoneme alphabet covering a whole inventory, ids equal to phone ids.
    pub fn phonemes(inventory: &Inventory) -> Self {
        let glyphs = inventory.phones().iter().map(|p| p.mnemonic.to_string()).collect();
        Alphabet::new(Mode::Phoneme, glyphs).expect("inventory mnemonics are unique")
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.glyphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.glyphs.is_empty()
    }

    pub fn glyph(&self, id: Sym) -> &str {
        &self.glyphs[id as usize]
    }

    pub fn glyphs(&self) -> &[String] {
        &self.glyphs
    }

    pub fn lookup(&self, glyph: &str) -> Option<Sym> {
        self.index.get(glyph).copied()
    }

    pub fn terminals(&self) -> impl Iterator<Item = Terminal<'_>> {
        self.glyphs.iter().enumerate().map(|(i, g)| Terminal {
            id: i as Sym,
            glyph: g,
        })
    }

    /// Renders a terminal sequence: concatenated characters in text mode,
    /// space-separated mnemonics in phoneme mode.
    pub fn render(&self, seq: &[Sym]) -> String {
        match self.mode {
            Mode::Text => seq.iter().map(|&s| self.glyph(s)).collect(),
            Mode::Phoneme => seq
                .iter()
                .map(|&s| self.glyph(s))
                .collect::<Vec<_>>()
                .join(" "),
        }
    }

    /// Inverse of [`Alphabet::render`].
    pub fn parse(&self, rendered: &str) -> Result<Vec<Sym>> {
        match self.mode {
            Mode::Text => rendered
                .chars()
                .map(|c| {
                    let mut buf = [0u8; 4];
                    self.lookup(c.encode_utf8(&mut buf))
                        .ok_or(Error::OutOfAlphabet { ch: c, line: 0 })
                })
                .collect(),
            Mode::Phoneme => rendered
                .split_whitespace()
                .map(|t| {
                    self.lookup(t).ok_or_else(|| Error::UnknownPhoneme {
                        token: t.to_string(),
                        line: 0,
                    })
                })
                .collect(),
        }
    }
}

/// One unsegmented input sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub terminals: Vec<Sym>,
    /// 1-based line on which the utterance starts.
    pub source_line: usize,
}

impl Utterance {
    pub fn new(terminals: Vec<Sym>) -> Self {
        Utterance {
            terminals,
            source_line: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.terminals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terminals.is_empty()
    }
}

/// Gold word regions of an utterance, as region boundaries `0 = b0 < b1 < ... = len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrueSegmentation {
    boundaries: Vec<usize>,
}

impl TrueSegmentation {
    pub fn new(boundaries: Vec<usize>) -> Result<Self> {
        let ok = boundaries.len() >= 2
            && boundaries[0] == 0
            && boundaries.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "boundaries {boundaries:?} must start at 0 and strictly increase"
            )));
        }
        Ok(TrueSegmentation { boundaries })
    }

    /// Builds the segmentation from region lengths (zero lengths are skipped).
    pub fn from_lengths(lengths: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut b = vec![0];
        for len in lengths {
            if len > 0 {
                b.push(b.last().unwrap() + len);
            }
        }
        TrueSegmentation::new(b)
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// Total length covered.
    pub fn len(&self) -> usize {
        *self.boundaries.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn regions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.boundaries.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Text ingestion switches.
#[derive(Debug, Clone)]
pub struct TextConfig {
    pub case_fold: bool,
    pub sentence_split: bool,
    /// When set, characters outside this alphabet are rejected.
    pub alphabet: Option<Alphabet>,
}

impl Default for TextConfig {
    fn default() -> Self {
        TextConfig {
            case_fold: true,
            sentence_split: true,
            alphabet: None,
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_text(path: impl AsRef<Path>, config: &TextConfig) -> Result<(Alphabet, Vec<Utterance>)> {
    parse_text(&read(path.as_ref())?, config)
}

/// Splits a document into utterances.
///
/// Line breaks and tabs become spaces. With sentence splitting on, a new
/// utterance starts after every '.', '?' and '!', which stays as the last
/// character of its sentence. Utterances that are empty or all whitespace
/// are dropped.
pub fn parse_text(text: &str, config: &TextConfig) -> Result<(Alphabet, Vec<Utterance>)> {
    let mut sentences: Vec<(Vec<char>, usize)> = Vec::new();
    let mut current = Vec::new();
    let mut line = 1;
    let mut start_line = 1;
    for raw in text.chars() {
        let is_newline = raw == '\n';
        let c = match raw {
            '\n' | '\t' | '\r' => ' ',
            c => c,
        };
        let folded: Vec<char> = if config.case_fold {
            c.to_lowercase().collect()
        } else {
            vec![c]
        };
        for ch in folded {
            if current.is_empty() {
                start_line = line;
            }
            if let Some(alpha) = &config.alphabet {
                let mut buf = [0u8; 4];
                if alpha.lookup(ch.encode_utf8(&mut buf)).is_none() {
                    return Err(Error::OutOfAlphabet { ch, line });
                }
            }
            current.push(ch);
            if config.sentence_split && matches!(ch, '.' | '?' | '!') {
                sentences.push((std::mem::take(&mut current), start_line));
            }
        }
        if is_newline {
            line += 1;
        }
    }
    if !current.is_empty() {
        sentences.push((current, start_line));
    }
    sentences.retain(|(s, _)| s.iter().any(|c| !c.is_whitespace()));

    let alphabet = match &config.alphabet {
        Some(a) => a.clone(),
        None => Alphabet::from_chars(sentences.iter().flat_map(|(s, _)| s.iter().copied())),
    };
    let utterances = sentences
        .into_iter()
        .map(|(chars, source_line)| {
            let terminals = chars
                .into_iter()
                .map(|c| {
                    let mut buf = [0u8; 4];
                    alphabet.lookup(c.encode_utf8(&mut buf)).expect("alphabet covers text")
                })
                .collect();
            Utterance {
                terminals,
                source_line,
            }
        })
        .collect();
    Ok((alphabet, utterances))
}

/// Reads a fixed text alphabet: every character of the file except line breaks.
pub fn load_alphabet(path: impl AsRef<Path>) -> Result<Alphabet> {
    let text = read(path.as_ref())?;
    Ok(Alphabet::from_chars(text.chars().filter(|&c| c != '\n' && c != '\r')))
}

/// A phoneme corpus, with gold segmentations for lines that carried `|` marks.
#[derive(Debug, Clone)]
pub struct PhonemeCorpus {
    pub alphabet: Alphabet,
    pub utterances: Vec<Utterance>,
    pub gold: Vec<Option<TrueSegmentation>>,
}

pub fn load_phonemes(path: impl AsRef<Path>) -> Result<PhonemeCorpus> {
    parse_phonemes(&read(path.as_ref())?, &Inventory::standard())
}

/// Parses one utterance per line of whitespace-separated phoneme mnemonics.
/// A `|` token marks a gold word boundary.
pub fn parse_phonemes(text: &str, inventory: &Inventory) -> Result<PhonemeCorpus> {
    let alphabet = Alphabet::phonemes(inventory);
    let mut utterances = Vec::new();
    let mut gold = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let mut terminals = Vec::new();
        let mut boundaries = vec![0];
        let mut marked = false;
        for token in line.split_whitespace() {
            if token == "|" {
                marked = true;
                if terminals.len() > *boundaries.last().unwrap() {
                    boundaries.push(terminals.len());
                }
                continue;
            }
            let sym = alphabet.lookup(token).ok_or_else(|| Error::UnknownPhoneme {
                token: token.to_string(),
                line: line_no,
            })?;
            terminals.push(sym);
        }
        if terminals.is_empty() {
            continue;
        }
        if *boundaries.last().unwrap() < terminals.len() {
            boundaries.push(terminals.len());
        }
        gold.push(if marked {
            Some(TrueSegmentation::new(boundaries)?)
        } else {
            None
        });
        utterances.push(Utterance {
            terminals,
            source_line: line_no,
        });
    }
    Ok(PhonemeCorpus {
        alphabet,
        utterances,
        gold,
    })
}

/// Renders an utterance with `|` between gold regions, in the format
/// accepted by [`parse_phonemes`] (phoneme mode) or [`parse_gold_text`].
pub fn render_segmented(alphabet: &Alphabet, seq: &[Sym], seg: &TrueSegmentation) -> String {
    let parts: Vec<String> = seg
        .regions()
        .map(|(a, b)| alphabet.render(&seq[a..b]))
        .collect();
    match alphabet.mode() {
        Mode::Text => parts.join("|"),
        Mode::Phoneme => parts.join(" | "),
    }
}

/// Parses text-mode gold lines where `|` separates words. Lines are taken
/// verbatim (no case folding or splitting).
pub fn parse_gold_text(text: &str, alphabet: &Alphabet) -> Result<(Vec<Utterance>, Vec<TrueSegmentation>)> {
    let mut utterances = Vec::new();
    let mut gold = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut terminals = Vec::new();
        let mut lengths = Vec::new();
        for word in line.split('|') {
            let mut n = 0;
            for c in word.chars() {
                let mut buf = [0u8; 4];
                let s = alphabet
                    .lookup(c.encode_utf8(&mut buf))
                    .ok_or(Error::OutOfAlphabet { ch: c, line: i + 1 })?;
                terminals.push(s);
                n += 1;
            }
            lengths.push(n);
        }
        if terminals.is_empty() {
            continue;
        }
        gold.push(TrueSegmentation::from_lengths(lengths)?);
        utterances.push(Utterance {
            terminals,
            source_line: i + 1,
        });
    }
    Ok((utterances, gold))
}
