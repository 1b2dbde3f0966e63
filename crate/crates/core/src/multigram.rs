//! Forward–backward and Viterbi over word lattices, expected counts and EM.
//!
//! A lattice holds word hypotheses `(start, end, word)`. In the noisy
//! channel a hypothesis' weight depends on the first phoneme of the word
//! that follows it, so every hypothesis carries one log weight per
//! possible next key and an entry key of its own. Exact matching uses a
//! single key.

use rayon::prelude::*;

use crate::channel::NoisyMatcher;
use crate::corpus::{render_segmented, Mode, Sym, TrueSegmentation, Utterance};
use crate::error::{Error, Result};
use crate::lexicon::{Lexicon, WordId, WordKind};

const LN2: f64 = std::f64::consts::LN_2;

/// Relative tolerance under which two path scores count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// Utterances handed to one worker at a time in the E-step.
const CHUNK: usize = 32;

/// Trie of the surfaces of all words with non-zero probability.
#[derive(Debug, Clone)]
pub struct SurfaceTrie {
    nodes: Vec<TrieNode>,
}

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: Vec<(Sym, u32)>,
    word: Option<WordId>,
}

impl SurfaceTrie {
    pub const ROOT: usize = 0;

    pub fn new(lex: &Lexicon) -> Self {
        let mut trie = SurfaceTrie {
            nodes: vec![TrieNode::default()],
        };
        for (id, w) in lex.words().iter().enumerate() {
            if w.code_len.is_finite() {
                let mut node = Self::ROOT;
                for &s in &w.surface {
                    node = match trie.nodes[node].children.binary_search_by_key(&s, |c| c.0) {
                        Ok(i) => trie.nodes[node].children[i].1 as usize,
                        Err(i) => {
                            let next = trie.nodes.len();
                            trie.nodes.push(TrieNode::default());
                            trie.nodes[node].children.insert(i, (s, next as u32));
                            next
                        }
                    };
                }
                trie.nodes[node].word = Some(id);
            }
        }
        trie
    }

    pub fn child(&self, node: usize, sym: Sym) -> Option<usize> {
        let c = &self.nodes[node].children;
        c.binary_search_by_key(&sym, |x| x.0).ok().map(|i| c[i].1 as usize)
    }

    pub fn children(&self, node: usize) -> impl Iterator<Item = (Sym, usize)> + '_ {
        self.nodes[node].children.iter().map(|&(s, n)| (s, n as usize))
    }

    pub fn word(&self, node: usize) -> Option<WordId> {
        self.nodes[node].word
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HypHead {
    pub start: usize,
    pub end: usize,
    pub word: WordId,
    /// Key this word presents to the word before it.
    pub entry: usize,
}

/// Word hypotheses over a sequence of `len` symbols.
#[derive(Debug, Clone)]
pub struct Lattice {
    len: usize,
    keys: usize,
    end_key: usize,
    heads: Vec<HypHead>,
    weights: Vec<f64>,
}

impl Lattice {
    pub fn new(len: usize, keys: usize, end_key: usize) -> Self {
        assert!(end_key < keys);
        Lattice {
            len,
            keys,
            end_key,
            heads: Vec::new(),
            weights: Vec::new(),
        }
    }

    /// Adds a hypothesis with natural-log weights indexed by next key.
    pub fn push(&mut self, head: HypHead, log_weights: &[f64]) {
        debug_assert_eq!(log_weights.len(), self.keys);
        debug_assert!(head.start < head.end && head.end <= self.len);
        self.heads.push(head);
        self.weights.extend_from_slice(log_weights);
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn heads(&self) -> &[HypHead] {
        &self.heads
    }

    pub fn log_weights(&self, h: usize) -> &[f64] {
        &self.weights[h * self.keys..(h + 1) * self.keys]
    }

    fn by_position(&self) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let mut by_start = vec![Vec::new(); self.len + 1];
        let mut by_end = vec![Vec::new(); self.len + 1];
        for (i, h) in self.heads.iter().enumerate() {
            by_start[h.start].push(i);
            by_end[h.end].push(i);
        }
        (by_start, by_end)
    }

    /// Log of the suffix weight at `pos` for next key `n`, given the
    /// backward table.
    fn suffix(&self, table: &[f64], pos: usize, n: usize) -> f64 {
        if pos == self.len {
            if n == self.end_key {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            table[pos * self.keys + n]
        }
    }
}

/// Running log-sum-exp.
#[derive(Clone, Copy)]
struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    fn new() -> Self {
        LogSum {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    fn value(self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub word: WordId,
    pub posterior: f64,
}

/// Forward and backward values plus word-span posteriors. `alpha(k)` is
/// the probability of the first `k` symbols and `beta(k)` that of the
/// rest; both are kept in the log domain.
#[derive(Debug, Clone)]
pub struct Chart {
    len: usize,
    keys: usize,
    end_key: usize,
    log_alpha: Vec<f64>,
    log_beta: Vec<f64>,
    log_total: f64,
    spans: Vec<Span>,
}

impl Chart {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn log_alpha(&self, k: usize) -> f64 {
        self.log_alpha[k * self.keys + self.end_key]
    }

    pub fn log_beta(&self, k: usize) -> f64 {
        if k == self.len {
            return 0.0;
        }
        let mut acc = LogSum::new();
        for e in 0..self.keys {
            acc.add(self.log_beta[k * self.keys + e]);
        }
        acc.value()
    }

    pub fn alpha(&self, k: usize) -> f64 {
        self.log_alpha(k).exp()
    }

    pub fn beta(&self, k: usize) -> f64 {
        self.log_beta(k).exp()
    }

    /// Natural log of the total sequence probability.
    pub fn log_total(&self) -> f64 {
        self.log_total
    }

    pub fn total(&self) -> f64 {
        self.log_total.exp()
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }
}

pub fn forward_backward(lattice: &Lattice) -> Result<Chart> {
    let (len, keys) = (lattice.len, lattice.keys);
    let (by_start, by_end) = lattice.by_position();
    let mut la = vec![f64::NEG_INFINITY; (len + 1) * keys];
    la[..keys].fill(0.0);
    for l in 1..=len {
        for n in 0..keys {
            let mut acc = LogSum::new();
            for &h in &by_end[l] {
                let head = lattice.heads[h];
                acc.add(la[head.start * keys + head.entry] + lattice.log_weights(h)[n]);
            }
            la[l * keys + n] = acc.value();
        }
    }

    let mut lb = vec![f64::NEG_INFINITY; (len + 1) * keys];
    let mut tail = vec![f64::NEG_INFINITY; lattice.heads.len()];
    for k in (0..len).rev() {
        let mut acc = vec![LogSum::new(); keys];
        for &h in &by_start[k] {
            let head = lattice.heads[h];
            let w = lattice.log_weights(h);
            let mut t = LogSum::new();
            for (n, &wn) in w.iter().enumerate() {
                t.add(wn + lattice.suffix(&lb, head.end, n));
            }
            tail[h] = t.value();
            acc[head.entry].add(tail[h]);
        }
        for (e, a) in acc.into_iter().enumerate() {
            lb[k * keys + e] = a.value();
        }
    }

    let log_total = la[len * keys + lattice.end_key];
    if !log_total.is_finite() {
        return Err(Error::Unparseable);
    }
    let spans = lattice
        .heads
        .iter()
        .enumerate()
        .map(|(h, head)| Span {
            start: head.start,
            end: head.end,
            word: head.word,
            posterior: (la[head.start * keys + head.entry] + tail[h] - log_total).exp(),
        })
        .collect();
    Ok(Chart {
        len,
        keys,
        end_key: lattice.end_key,
        log_alpha: la,
        log_beta: lb,
        log_total,
        spans,
    })
}

/// Best top-level path as `(start, end, word)` triples and its natural-log
/// probability. Ties prefer the longer word, then the smaller id.
pub fn viterbi(lattice: &Lattice) -> Result<(Vec<HypHead>, f64)> {
    let (len, keys) = (lattice.len, lattice.keys);
    let (by_start, _) = lattice.by_position();
    let mut vb = vec![f64::NEG_INFINITY; (len + 1) * keys];
    let mut best: Vec<Option<usize>> = vec![None; (len + 1) * keys];
    let mut next_key = vec![0usize; lattice.heads.len()];
    for k in (0..len).rev() {
        for &h in &by_start[k] {
            let head = lattice.heads[h];
            let mut t = f64::NEG_INFINITY;
            for (n, &wn) in lattice.log_weights(h).iter().enumerate() {
                let v = wn + lattice.suffix(&vb, head.end, n);
                if v > t {
                    t = v;
                    next_key[h] = n;
                }
            }
            if t == f64::NEG_INFINITY {
                continue;
            }
            let slot = k * keys + head.entry;
            let cur = vb[slot];
            let better = match best[slot] {
                None => true,
                Some(b) => {
                    let tol = TIE_TOLERANCE * t.abs().max(cur.abs()).max(1.0);
                    if (t - cur).abs() <= tol {
                        let other = lattice.heads[b];
                        (head.end, std::cmp::Reverse(head.word)) > (other.end, std::cmp::Reverse(other.word))
                    } else {
                        t > cur
                    }
                }
            };
            if better {
                vb[slot] = t;
                best[slot] = Some(h);
            }
        }
    }
    let mut entry = 0;
    for e in 1..keys {
        if vb[e] > vb[entry] {
            entry = e;
        }
    }
    let score = vb[entry];
    if !score.is_finite() {
        return Err(Error::Unparseable);
    }
    let mut path = Vec::new();
    let mut k = 0;
    while k < len {
        let h = best[k * keys + entry].ok_or(Error::Unparseable)?;
        path.push(lattice.heads[h]);
        k = lattice.heads[h].end;
        entry = next_key[h];
    }
    Ok((path, score))
}

/// How word surfaces are matched against input.
#[derive(Clone, Copy)]
pub enum Matching<'a> {
    Exact,
    Noisy(&'a NoisyMatcher),
}

pub(crate) fn log_prob(lex: &Lexicon, w: WordId) -> f64 {
    -lex.words()[w].code_len * LN2
}

/// Exact-surface lattice. With `exclude_whole`, a single word covering
/// the entire sequence is left out (used to parse a word's own surface).
pub fn exact_lattice(lex: &Lexicon, trie: &SurfaceTrie, seq: &[Sym], exclude_whole: bool) -> Lattice {
    let mut lat = Lattice::new(seq.len(), 1, 0);
    for k in 0..seq.len() {
        let mut node = SurfaceTrie::ROOT;
        for j in k..seq.len() {
            match trie.child(node, seq[j]) {
                Some(c) => node = c,
                None => break,
            }
            if let Some(w) = trie.word(node) {
                if exclude_whole && k == 0 && j + 1 == seq.len() {
                    continue;
                }
                lat.push(
                    HypHead {
                        start: k,
                        end: j + 1,
                        word: w,
                        entry: 0,
                    },
                    &[log_prob(lex, w)],
                );
            }
        }
    }
    lat
}

pub fn build_lattice(lex: &Lexicon, trie: &SurfaceTrie, seq: &[Sym], matching: Matching) -> Result<Lattice> {
    match matching {
        Matching::Exact => Ok(exact_lattice(lex, trie, seq, false)),
        Matching::Noisy(m) => m.lattice(lex, trie, seq),
    }
}

/// A node of a hierarchical parse: a word, the input span it covers and
/// the expansion of its representation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseNode {
    pub word: WordId,
    pub start: usize,
    pub end: usize,
    pub children: Vec<ParseNode>,
}

impl ParseNode {
    fn visit<'a>(&'a self, out: &mut Vec<&'a ParseNode>) {
        out.push(self);
        for c in &self.children {
            c.visit(out);
        }
    }
}

/// A segmentation of one sequence: the top-level words, each expanded
/// recursively down to terminals.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub roots: Vec<ParseNode>,
    /// Cost of the top-level path in bits.
    pub bits: f64,
    len: usize,
}

impl Segmentation {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> Vec<WordId> {
        self.roots.iter().map(|n| n.word).collect()
    }

    /// Top-level boundaries, starting at 0 and ending at the length.
    pub fn boundaries(&self) -> Vec<usize> {
        std::iter::once(0).chain(self.roots.iter().map(|n| n.end)).collect()
    }

    /// Every node at every level, in pre-order.
    pub fn nodes(&self) -> Vec<&ParseNode> {
        let mut out = Vec::new();
        for r in &self.roots {
            r.visit(&mut out);
        }
        out
    }

    /// Spans `(start, end)` of every word at every level.
    pub fn spans(&self) -> Vec<(usize, usize)> {
        self.nodes().into_iter().map(|n| (n.start, n.end)).collect()
    }

    /// Top-level rendering with `|` between words.
    pub fn render(&self, lex: &Lexicon, seq: &[Sym]) -> String {
        let lengths = self.roots.iter().map(|n| n.end - n.start);
        let seg = TrueSegmentation::from_lengths(lengths).expect("top level tiles the input");
        render_segmented(lex.alphabet(), seq, &seg)
    }

    /// Full bracketing: every nonterminal in brackets, terminals bare.
    pub fn render_deep(&self, lex: &Lexicon, seq: &[Sym]) -> String {
        fn go(n: &ParseNode, lex: &Lexicon, seq: &[Sym], sep: &str, out: &mut Vec<String>) {
            if n.children.is_empty() {
                out.push(lex.alphabet().render(&seq[n.start..n.end]));
            } else {
                let mut inner = Vec::new();
                for c in &n.children {
                    go(c, lex, seq, sep, &mut inner);
                }
                inner.retain(|s| !s.is_empty());
                out.push(format!("[{}]", inner.join(sep)));
            }
        }
        let sep = if lex.alphabet().mode() == Mode::Phoneme { " " } else { "" };
        let mut out = Vec::new();
        for r in &self.roots {
            go(r, lex, seq, sep, &mut out);
        }
        out.join(sep)
    }
}

/// Maps each boundary `0..=a.len()` of `a` to a position in `b` along a
/// minimum edit-distance alignment (substitutions preferred, then
/// deletions from `a`).
pub fn align_offsets(a: &[Sym], b: &[Sym]) -> Vec<usize> {
    if a == b {
        return (0..=a.len()).collect();
    }
    let (n, m) = (a.len(), b.len());
    let mut d = vec![0u32; (n + 1) * (m + 1)];
    let at = |i: usize, j: usize| i * (m + 1) + j;
    for i in 0..=n {
        for j in 0..=m {
            d[at(i, j)] = if i == 0 {
                j as u32
            } else if j == 0 {
                i as u32
            } else {
                let sub = d[at(i - 1, j - 1)] + u32::from(a[i - 1] != b[j - 1]);
                sub.min(d[at(i - 1, j)] + 1).min(d[at(i, j - 1)] + 1)
            };
        }
    }
    // A boundary takes the leftmost column its row visits, so inserted
    // symbols belong to the following symbol of `a`.
    let mut offsets = vec![0; n + 1];
    let (mut i, mut j) = (n, m);
    while i > 0 {
        let diag = j > 0 && d[at(i, j)] == d[at(i - 1, j - 1)] + u32::from(a[i - 1] != b[j - 1]);
        if diag || d[at(i, j)] == d[at(i - 1, j)] + 1 {
            offsets[i] = j;
            i -= 1;
            j -= usize::from(diag);
        } else {
            j -= 1;
        }
    }
    offsets[n] = m;
    offsets
}

/// Expands `word` whose surface offsets map to input positions via `pos`
/// (`pos.len() == surface.len() + 1`).
fn expand(lex: &Lexicon, word: WordId, pos: &[usize]) -> ParseNode {
    let w = &lex.words()[word];
    let mut node = ParseNode {
        word,
        start: pos[0],
        end: pos[pos.len() - 1],
        children: Vec::new(),
    };
    if w.kind == WordKind::Terminal {
        return node;
    }
    let joined: Vec<Sym> = w
        .rep
        .iter()
        .flat_map(|&r| lex.words()[r].surface.iter().copied())
        .collect();
    // Offsets within the representation's own concatenated surface.
    let inner: Vec<usize> = match w.kind {
        WordKind::Variant => align_offsets(&joined, &w.surface).into_iter().map(|o| pos[o]).collect(),
        _ => pos.to_vec(),
    };
    let mut o = 0;
    for &r in &w.rep {
        let l = lex.words()[r].surface.len();
        node.children.push(expand(lex, r, &inner[o..=o + l]));
        o += l;
    }
    node
}

/// Expands a top-level path into a full parse tree over `seq`.
pub fn expand_path(lex: &Lexicon, seq: &[Sym], path: &[HypHead], log_prob: f64) -> Segmentation {
    let roots = path
        .iter()
        .map(|h| {
            let surface = &lex.words()[h.word].surface;
            let observed = &seq[h.start..h.end];
            let pos: Vec<usize> = align_offsets(surface, observed).into_iter().map(|o| o + h.start).collect();
            expand(lex, h.word, &pos)
        })
        .collect();
    Segmentation {
        roots,
        bits: -log_prob / LN2,
        len: seq.len(),
    }
}

pub fn viterbi_parse(lex: &Lexicon, trie: &SurfaceTrie, seq: &[Sym], matching: Matching) -> Result<Segmentation> {
    let lat = build_lattice(lex, trie, seq, matching)?;
    let (path, score) = viterbi(&lat)?;
    Ok(expand_path(lex, seq, &path, score))
}

/// Viterbi parses of every utterance, in order.
pub fn parse_all(lex: &Lexicon, utterances: &[Utterance], matching: Matching) -> Result<Vec<Segmentation>> {
    let trie = SurfaceTrie::new(lex);
    utterances
        .par_iter()
        .map(|u| viterbi_parse(lex, &trie, &u.terminals, matching))
        .collect()
}

/// Bits needed to encode each utterance along its Viterbi path.
pub fn viterbi_bits(lex: &Lexicon, utterances: &[Utterance], matching: Matching) -> Result<Vec<f64>> {
    let trie = SurfaceTrie::new(lex);
    utterances
        .par_iter()
        .map(|u| {
            let lat = build_lattice(lex, &trie, &u.terminals, matching)?;
            Ok(-viterbi(&lat)?.1 / LN2)
        })
        .collect()
}

/// Exact Viterbi parse of a nonterminal's surface using strictly shorter
/// words only.
pub fn parse_surface(lex: &Lexicon, trie: &SurfaceTrie, surface: &[Sym]) -> Result<Vec<WordId>> {
    let lat = exact_lattice(lex, trie, surface, true);
    Ok(viterbi(&lat)?.0.into_iter().map(|h| h.word).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountMode {
    /// Posterior-weighted counts over all parses.
    Complete,
    /// Counts from the single best parse.
    Viterbi,
}

/// Whether nonterminal representations are re-derived during estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepPolicy {
    Fixed,
    Reparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmConfig {
    pub mode: CountMode,
    pub reps: RepPolicy,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            mode: CountMode::Complete,
            reps: RepPolicy::Reparse,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Counts {
    pub counts: Vec<f64>,
    /// Log-likelihood (bits) of the input and dictionary surfaces under
    /// the model that produced these counts.
    pub log_likelihood: f64,
}

fn add_sequence(lat: &Lattice, mode: CountMode, counts: &mut [f64]) -> Result<f64> {
    match mode {
        CountMode::Complete => {
            let chart = forward_backward(lat)?;
            for s in chart.spans() {
                counts[s.word] += s.posterior;
            }
            Ok(chart.log_total())
        }
        CountMode::Viterbi => {
            let (path, score) = viterbi(lat)?;
            for h in path {
                counts[h.word] += 1.0;
            }
            Ok(score)
        }
    }
}

/// Expected usage counts of every word in the combined description of
/// the input and the dictionary.
pub fn accumulate_counts(lex: &Lexicon, utterances: &[Utterance], config: EmConfig, matching: Matching) -> Result<Counts> {
    let trie = SurfaceTrie::new(lex);
    let n = lex.len();
    let partials: Vec<(Vec<f64>, f64)> = utterances
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut counts = vec![0.0; n];
            let mut ll = 0.0;
            for u in chunk {
                let lat = build_lattice(lex, &trie, &u.terminals, matching)?;
                ll += add_sequence(&lat, config.mode, &mut counts)?;
            }
            Ok((counts, ll))
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0.0; n];
    let mut ll = 0.0;
    for (c, l) in partials {
        for (a, b) in counts.iter_mut().zip(c) {
            *a += b;
        }
        ll += l;
    }

    let nonterminals: Vec<WordId> = (lex.alphabet().len()..n).collect();
    let dict: Vec<(Vec<f64>, f64)> = nonterminals
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut counts = vec![0.0; n];
            let mut ll = 0.0;
            for &x in chunk {
                let w = &lex.words()[x];
                if config.reps == RepPolicy::Reparse && w.kind == WordKind::Concat {
                    let lat = exact_lattice(lex, &trie, &w.surface, true);
                    let mut local = vec![0.0; n];
                    if let Ok(l) = add_sequence(&lat, config.mode, &mut local) {
                        counts.iter_mut().zip(local).for_each(|(a, b)| *a += b);
                        ll += l;
                        continue;
                    }
                }
                for &r in &w.rep {
                    counts[r] += 1.0;
                    ll += log_prob(lex, r);
                }
            }
            Ok((counts, ll))
        })
        .collect::<Result<_>>()?;
    for (c, l) in dict {
        for (a, b) in counts.iter_mut().zip(c) {
            *a += b;
        }
        ll += l;
    }
    Ok(Counts {
        counts,
        log_likelihood: ll / LN2,
    })
}

/// Re-derives every concatenative representation as the Viterbi parse of
/// the word's surface. Words whose surface cannot be parsed keep theirs.
pub fn reparse_reps(lex: &mut Lexicon) -> Result<()> {
    let trie = SurfaceTrie::new(lex);
    let ids: Vec<WordId> = (lex.alphabet().len()..lex.len())
        .filter(|&x| lex.words()[x].kind == WordKind::Concat)
        .collect();
    let reps: Vec<Option<Vec<WordId>>> = ids
        .par_iter()
        .map(|&x| parse_surface(lex, &trie, &lex.words()[x].surface).ok())
        .collect();
    for (x, rep) in ids.into_iter().zip(reps) {
        if let Some(rep) = rep {
            lex.set_rep(x, rep)?;
        }
    }
    Ok(())
}

/// Runs `iters` rounds of count accumulation and renormalization and
/// returns the log-likelihood (bits) seen in each E-step.
pub fn em_iterate(lex: &mut Lexicon, utterances: &[Utterance], iters: usize, config: EmConfig, matching: Matching) -> Result<Vec<f64>> {
    let mut trace = Vec::with_capacity(iters);
    for _ in 0..iters {
        let c = accumulate_counts(lex, utterances, config, matching)?;
        lex.renormalize(&c.counts)?;
        if config.reps == RepPolicy::Reparse {
            reparse_reps(lex)?;
        }
        trace.push(c.log_likelihood);
    }
    Ok(trace)
}
