//! The hierarchical dictionary: words represented by sequences of other
//! words, a multigram distribution over all of them, and ideal-code
//! description-length accounting.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::path::Path;

use crate::corpus::{Alphabet, Mode, Sym, Utterance};
use crate::error::{Error, Result};

pub type WordId = usize;

/// How a word's representation relates to its surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WordKind {
    /// An alphabet symbol; no representation.
    Terminal,
    /// The surfaces of the representation concatenate to the surface.
    Concat,
    /// The surface is a phonological variant of the concatenated
    /// representation, paid for by `channel_bits`.
    Variant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Word {
    pub surface: Vec<Sym>,
    pub rep: Vec<WordId>,
    pub kind: WordKind,
    /// Expected number of uses in the combined description.
    pub count: f64,
    /// Ideal index length in bits, `-log2 p(w)`; infinite for unused words.
    pub code_len: f64,
    /// Cost of mapping the representation's surface to this word's surface
    /// (variants only).
    pub channel_bits: f64,
}

impl Word {
    pub fn is_terminal(&self) -> bool {
        self.kind == WordKind::Terminal
    }

    /// Words may only be represented by words with a smaller key, which
    /// keeps the representation graph acyclic.
    fn order_key(&self) -> (usize, bool) {
        (self.surface.len(), self.kind == WordKind::Variant)
    }
}

/// Bits needed for the input and for the dictionary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescriptionLength {
    pub input_bits: f64,
    pub dictionary_bits: f64,
    pub total_bits: f64,
}

impl DescriptionLength {
    pub fn new(input_bits: f64, dictionary_bits: f64) -> Self {
        DescriptionLength {
            input_bits,
            dictionary_bits,
            total_bits: input_bits + dictionary_bits,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    alphabet: Alphabet,
    words: Vec<Word>,
    total: f64,
    index: HashMap<Vec<Sym>, WordId>,
    overhead_bits: f64,
}

pub(crate) fn code_len(count: f64, total: f64) -> f64 {
    if count > 0.0 {
        -(count / total).log2()
    } else {
        f64::INFINITY
    }
}

impl Lexicon {
    /// A terminal-only lexicon with the given per-terminal counts.
    pub fn with_terminal_counts(alphabet: Alphabet, counts: &[f64]) -> Result<Self> {
        if counts.len() != alphabet.len() {
            return Err(Error::InvalidParameter(format!(
                "{} counts for an alphabet of {}",
                counts.len(),
                alphabet.len()
            )));
        }
        let mut words = Vec::with_capacity(alphabet.len());
        let mut index = HashMap::new();
        for t in alphabet.terminals() {
            index.insert(vec![t.id], words.len());
            words.push(Word {
                surface: vec![t.id],
                rep: Vec::new(),
                kind: WordKind::Terminal,
                count: 0.0,
                code_len: f64::INFINITY,
                channel_bits: 0.0,
            });
        }
        let mut lex = Lexicon {
            alphabet,
            words,
            total: 0.0,
            index,
            overhead_bits: 0.0,
        };
        lex.renormalize(counts)?;
        Ok(lex)
    }

    /// Terminal-only lexicon with counts from symbol frequencies.
    pub fn from_corpus(alphabet: Alphabet, utterances: &[Utterance]) -> Result<Self> {
        let mut counts = vec![0.0; alphabet.len()];
        for u in utterances {
            for &s in &u.terminals {
                counts[s as usize] += 1.0;
            }
        }
        Lexicon::with_terminal_counts(alphabet, &counts)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn word(&self, id: WordId) -> Result<&Word> {
        self.words.get(id).ok_or(Error::UnknownWord(id))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn nonterminal_count(&self) -> usize {
        self.words.len() - self.alphabet.len()
    }

    pub fn lookup(&self, surface: &[Sym]) -> Option<WordId> {
        self.index.get(surface).copied()
    }

    pub fn total_count(&self) -> f64 {
        self.total
    }

    pub fn probability(&self, id: WordId) -> f64 {
        if self.total > 0.0 {
            self.words[id].count / self.total
        } else {
            0.0
        }
    }

    pub fn overhead_bits(&self) -> f64 {
        self.overhead_bits
    }

    /// Per-nonterminal constant added to the dictionary cost.
    pub fn set_overhead_bits(&mut self, bits: f64) {
        self.overhead_bits = bits;
    }

    pub fn counts(&self) -> Vec<f64> {
        self.words.iter().map(|w| w.count).collect()
    }

    /// Sum of the index lengths of a word's representation (plus channel
    /// bits for variants). Terminals cost nothing.
    pub fn word_cost(&self, id: WordId) -> Result<f64> {
        let w = self.word(id)?;
        Ok(w.rep.iter().map(|&r| self.words[r].code_len).sum::<f64>() + w.channel_bits)
    }

    /// Bits spent writing down every nonterminal.
    pub fn dictionary_bits(&self) -> f64 {
        self.words
            .iter()
            .enumerate()
            .filter(|(_, w)| !w.is_terminal())
            .map(|(id, _)| self.word_cost(id).unwrap() + self.overhead_bits)
            .sum()
    }

    /// Combines per-utterance encoding costs (bits) with the dictionary cost.
    pub fn description_length(&self, utterance_costs: &[f64]) -> DescriptionLength {
        DescriptionLength::new(utterance_costs.iter().sum(), self.dictionary_bits())
    }

    /// Installs new counts and recomputes probabilities and code lengths.
    pub fn renormalize(&mut self, counts: &[f64]) -> Result<()> {
        if counts.len() != self.words.len() {
            return Err(Error::InvalidParameter(format!(
                "{} counts for {} words",
                counts.len(),
                self.words.len()
            )));
        }
        if let Some(c) = counts.iter().find(|c| !(**c >= 0.0 && c.is_finite())) {
            return Err(Error::InvalidParameter(format!("invalid count {c}")));
        }
        let total: f64 = counts.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroCounts);
        }
        self.total = total;
        for (w, &c) in self.words.iter_mut().zip(counts) {
            w.count = c;
            w.code_len = code_len(c, total);
        }
        Ok(())
    }

    fn surface_of(&self, rep: &[WordId]) -> Vec<Sym> {
        rep.iter()
            .flat_map(|&r| self.words[r].surface.iter().copied())
            .collect()
    }

    fn check_rep(&self, surface: &[Sym], kind: WordKind, rep: &[WordId]) -> std::result::Result<(), String> {
        if kind == WordKind::Terminal {
            return Err("only alphabet symbols are terminals".into());
        }
        if rep.is_empty() {
            return Err("nonterminal with empty representation".into());
        }
        if let Some(&bad) = rep.iter().find(|&&r| r >= self.words.len()) {
            return Err(format!("representation refers to unknown word {bad}"));
        }
        let key = (surface.len(), kind == WordKind::Variant);
        if let Some(&r) = rep.iter().find(|&&r| self.words[r].order_key() >= key) {
            return Err(format!(
                "representation member {r} is not shorter than the word it represents"
            ));
        }
        let joined = self.surface_of(rep);
        match kind {
            WordKind::Concat if joined != surface => {
                Err("representation does not concatenate to the surface".into())
            }
            WordKind::Variant if joined.len() > surface.len() => {
                Err("variant is shorter than its representation".into())
            }
            _ => Ok(()),
        }
    }

    /// Adds a nonterminal and returns its id. Its probability is set
    /// from `count` against the current total, without renormalizing
    /// the other words.
    pub fn add_word(&mut self, surface: Vec<Sym>, rep: Vec<WordId>, kind: WordKind, count: f64) -> Result<WordId> {
        if self.index.contains_key(&surface) {
            return Err(Error::InvalidParameter(format!(
                "word '{}' already exists",
                self.alphabet.render(&surface)
            )));
        }
        self.check_rep(&surface, kind, &rep)
            .map_err(|reason| Error::InvalidParameter(reason))?;
        let id = self.words.len();
        self.index.insert(surface.clone(), id);
        self.total += count;
        self.words.push(Word {
            surface,
            rep,
            kind,
            count,
            code_len: code_len(count, self.total),
            channel_bits: 0.0,
        });
        Ok(id)
    }

    pub fn set_rep(&mut self, id: WordId, rep: Vec<WordId>) -> Result<()> {
        let w = self.word(id)?;
        self.check_rep(&w.surface, w.kind, &rep)
            .map_err(|reason| Error::InvalidParameter(reason))?;
        self.words[id].rep = rep;
        Ok(())
    }

    pub fn set_channel_bits(&mut self, id: WordId, bits: f64) -> Result<()> {
        let w = self.words.get_mut(id).ok_or(Error::UnknownWord(id))?;
        if w.kind != WordKind::Variant {
            return Err(Error::InvalidParameter("only variants carry channel bits".into()));
        }
        w.channel_bits = bits;
        Ok(())
    }

    /// Removes a nonterminal. Every representation that used it gets its
    /// representation spliced in instead. Ids above `id` shift down by one;
    /// the returned vector maps old ids to new ones (`None` for `id`).
    /// The caller is responsible for renormalizing.
    pub fn remove_word(&mut self, id: WordId) -> Result<Vec<Option<WordId>>> {
        let w = self.word(id)?;
        if w.is_terminal() {
            return Err(Error::TerminalDeletion(id));
        }
        let inner = w.rep.clone();
        let removed = self.words.remove(id);
        self.index.remove(&removed.surface);
        self.total -= removed.count;
        let remap: Vec<Option<WordId>> = (0..=self.words.len())
            .map(|old| match old.cmp(&id) {
                std::cmp::Ordering::Less => Some(old),
                std::cmp::Ordering::Equal => None,
                std::cmp::Ordering::Greater => Some(old - 1),
            })
            .collect();
        let inner: Vec<WordId> = inner.iter().map(|&r| remap[r].unwrap()).collect();
        for word in &mut self.words {
            if word.rep.contains(&id) {
                word.rep = word
                    .rep
                    .iter()
                    .flat_map(|&r| if r == id { inner.clone() } else { vec![remap[r].unwrap()] })
                    .collect();
            } else {
                word.rep.iter_mut().for_each(|r| *r = remap[*r].unwrap());
            }
        }
        for v in self.index.values_mut() {
            *v = remap[*v].unwrap();
        }
        Ok(remap)
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<()> {
        let bad = |id: usize, reason: String| Error::MalformedLexicon { line: id, reason };
        for t in self.alphabet.terminals() {
            let w = self.words.get(t.id as usize).ok_or_else(|| bad(t.id as usize, "missing terminal".into()))?;
            if w.kind != WordKind::Terminal || w.surface != [t.id] || !w.rep.is_empty() {
                return Err(bad(t.id as usize, format!("terminal '{}' is malformed", t.glyph)));
            }
        }
        for (id, w) in self.words.iter().enumerate().skip(self.alphabet.len()) {
            self.check_rep(&w.surface, w.kind, &w.rep).map_err(|r| bad(id, r))?;
            if self.index.get(&w.surface) != Some(&id) {
                return Err(bad(id, "surface index is stale".into()));
            }
        }
        if self.index.len() != self.words.len() {
            return Err(bad(0, "duplicate surfaces".into()));
        }
        Ok(())
    }

    /// Renders a word's representation with nested brackets, e.g. `[[ an]d]`.
    pub fn bracketed(&self, id: WordId) -> String {
        let w = &self.words[id];
        if w.is_terminal() {
            return self.alphabet.glyph(w.surface[0]).to_string();
        }
        let sep = if self.alphabet.mode() == Mode::Phoneme { " " } else { "" };
        let inner: Vec<String> = w.rep.iter().map(|&r| self.bracketed(r)).collect();
        let mark = if w.kind == WordKind::Variant { "~" } else { "" };
        format!("{mark}[{}]", inner.join(sep))
    }

    /// Words ranked by probability (ties by id), as a tab-separated table
    /// of rank, `-log p`, representation cost, count and bracketing.
    pub fn ranked_table(&self) -> String {
        let mut order: Vec<WordId> = (0..self.words.len()).collect();
        order.sort_by(|&a, &b| {
            self.words[b]
                .count
                .partial_cmp(&self.words[a].count)
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut out = String::from("rank\t-log p\t|rep|\tcount\trep\n");
        for (rank, id) in order.into_iter().enumerate() {
            let w = &self.words[id];
            let cost = if w.is_terminal() {
                String::new()
            } else {
                format!("{:.3}", self.word_cost(id).unwrap())
            };
            let shown = if w.is_terminal() {
                self.alphabet.render(&w.surface)
            } else {
                self.bracketed(id)
            };
            let _ = writeln!(out, "{rank}\t{:.3}\t{cost}\t{:.2}\t{shown}", w.code_len, w.count);
        }
        out
    }

    /// Line-oriented serialization: a header, then one word per line as
    /// `id TAB count TAB surface TAB rep-ids`, terminals first. Variants
    /// prefix their rep with `~` and add a fifth column of channel bits.
    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "# lexmdl lexicon\n# mode={}\n# overhead_bits={:?}\n",
            self.alphabet.mode(),
            self.overhead_bits
        );
        for (id, w) in self.words.iter().enumerate() {
            let surface = match self.alphabet.mode() {
                Mode::Text => escape(&self.alphabet.render(&w.surface)),
                Mode::Phoneme => self.alphabet.render(&w.surface),
            };
            let rep = w.rep.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(" ");
            match w.kind {
                WordKind::Variant => {
                    let _ = writeln!(out, "{id}\t{:?}\t{surface}\t~{rep}\t{:?}", w.count, w.channel_bits);
                }
                _ => {
                    let _ = writeln!(out, "{id}\t{:?}\t{surface}\t{rep}", w.count);
                }
            }
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let bad = |line: usize, reason: &str| Error::MalformedLexicon {
            line,
            reason: reason.to_string(),
        };
        let mut mode = Mode::Text;
        let mut overhead = 0.0;
        struct Row {
            line: usize,
            file_id: String,
            count: f64,
            surface: String,
            rep: Vec<String>,
            variant: bool,
            channel_bits: f64,
        }
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if let Some(h) = line.strip_prefix('#') {
                let h = h.trim();
                if let Some(m) = h.strip_prefix("mode=") {
                    mode = m.parse().map_err(|_| bad(n, "unknown mode"))?;
                } else if let Some(o) = h.strip_prefix("overhead_bits=") {
                    overhead = o.parse().map_err(|_| bad(n, "bad overhead_bits"))?;
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 4 || cols.len() > 5 {
                return Err(bad(n, "expected 4 or 5 tab-separated fields"));
            }
            let count: f64 = cols[1].parse().map_err(|_| bad(n, "bad count"))?;
            let (variant, rep_field) = match cols[3].strip_prefix('~') {
                Some(r) => (true, r),
                None => (false, cols[3]),
            };
            let channel_bits = match cols.get(4) {
                Some(c) => c.parse().map_err(|_| bad(n, "bad channel bits"))?,
                None => 0.0,
            };
            rows.push(Row {
                line: n,
                file_id: cols[0].to_string(),
                count,
                surface: cols[2].to_string(),
                rep: rep_field.split_whitespace().map(String::from).collect(),
                variant,
                channel_bits,
            });
        }

        let mut ids = HashMap::new();
        for (dense, r) in rows.iter().enumerate() {
            if ids.insert(r.file_id.clone(), dense).is_some() {
                return Err(bad(r.line, "duplicate id"));
            }
        }
        let n_terminals = rows.iter().take_while(|r| r.rep.is_empty() && !r.variant).count();
        if rows[n_terminals..].iter().any(|r| r.rep.is_empty()) {
            return Err(bad(rows[n_terminals].line, "terminals must come first"));
        }
        let glyphs: Vec<String> = rows[..n_terminals]
            .iter()
            .map(|r| match mode {
                Mode::Text => unescape(&r.surface),
                Mode::Phoneme => r.surface.clone(),
            })
            .collect();
        let alphabet = Alphabet::new(mode, glyphs).map_err(|e| bad(0, &e.to_string()))?;
        let counts: Vec<f64> = rows.iter().map(|r| r.count).collect();
        let mut lex = Lexicon::with_terminal_counts(alphabet, &vec![1.0; n_terminals])
            .map_err(|e| bad(0, &e.to_string()))?;
        lex.overhead_bits = overhead;

        // Insert nonterminals in key order so that every representation
        // member exists first, then restore file order.
        let mut pending: Vec<usize> = (n_terminals..rows.len()).collect();
        let mut surfaces = Vec::with_capacity(rows.len());
        for r in &rows[..n_terminals] {
            surfaces.push(Some(lex.alphabet.parse(&unescape_for(mode, &r.surface)).map_err(|e| bad(r.line, &e.to_string()))?));
        }
        for r in &rows[n_terminals..] {
            let s = lex
                .alphabet
                .parse(&unescape_for(mode, &r.surface))
                .map_err(|e| bad(r.line, &e.to_string()))?;
            if s.is_empty() {
                return Err(bad(r.line, "empty surface"));
            }
            surfaces.push(Some(s));
        }
        pending.sort_by_key(|&i| (surfaces[i].as_ref().unwrap().len(), rows[i].variant, i));
        let mut words: Vec<Option<Word>> = vec![None; rows.len()];
        for (i, w) in lex.words.drain(..).enumerate() {
            words[i] = Some(w);
        }
        for &i in &pending {
            let r = &rows[i];
            let rep = r
                .rep
                .iter()
                .map(|x| ids.get(x).copied().ok_or_else(|| bad(r.line, &format!("unknown id {x}"))))
                .collect::<Result<Vec<_>>>()?;
            words[i] = Some(Word {
                surface: surfaces[i].take().unwrap(),
                rep,
                kind: if r.variant { WordKind::Variant } else { WordKind::Concat },
                count: 0.0,
                code_len: f64::INFINITY,
                channel_bits: r.channel_bits,
            });
        }
        lex.words = words.into_iter().map(Option::unwrap).collect();
        lex.index = lex
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.surface.clone(), i))
            .collect();
        for (i, w) in lex.words.iter().enumerate().skip(n_terminals) {
            lex.check_rep(&w.surface, w.kind, &w.rep)
                .map_err(|reason| bad(rows[i].line, &reason))?;
        }
        if lex.index.len() != lex.words.len() {
            return Err(bad(0, "duplicate surfaces"));
        }
        lex.renormalize(&counts).map_err(|e| bad(0, &e.to_string()))?;
        Ok(lex)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_tsv()).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Lexicon::from_tsv(&text)
    }

    /// Hash of the serialized form.
    pub fn checksum(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.to_tsv().hash(&mut h);
        h.finish()
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('t') => out.push('\t'),
                Some('n') => out.push('\n'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn unescape_for(mode: Mode, s: &str) -> String {
    match mode {
        Mode::Text => unescape(s),
        Mode::Phoneme => s.to_string(),
    }
}
