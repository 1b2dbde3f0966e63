//! The three-state phoneme-to-phone transducer and noisy word matching.
//!
//! Each underlying phoneme `u` is read from the start state by an ordered
//! cascade of decisions: insert a phone first (`c_I`), else map to an extra
//! phone (`c_M`), else delete `u`, else copy it to a surface phone. The
//! inserted state cannot insert again and the mapped state must end in a
//! copy. `q` is always the previous surface phone and `n` the next
//! underlying phoneme.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::corpus::Sym;
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::multigram::{log_prob, HypHead, Lattice, SurfaceTrie};
use crate::phonology::{ChannelParams, PhoneId, PhoneTables, Phonology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    Start,
    Inserted,
    Mapped,
}

impl Tag {
    pub const ALL: [Tag; 3] = [Tag::Start, Tag::Inserted, Tag::Mapped];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Insert,
    Map,
    Delete,
    Copy,
}

impl Action {
    pub fn name(self) -> &'static str {
        match self {
            Action::Insert => "insert",
            Action::Map => "map",
            Action::Delete => "delete",
            Action::Copy => "copy",
        }
    }

    /// Whether the action consumes the underlying phoneme.
    pub fn advances(self) -> bool {
        matches!(self, Action::Delete | Action::Copy)
    }
}

/// One row of a state's outgoing distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub action: Action,
    pub phone: Option<PhoneId>,
    pub next: Tag,
    pub prob: f64,
}

/// One step of an alignment between phonemes and phones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub action: Action,
    /// The phoneme under the read head.
    pub phoneme: PhoneId,
    pub phone: Option<PhoneId>,
}

#[derive(Debug, Clone)]
pub struct Transducer {
    tables: PhoneTables,
    params: ChannelParams,
    /// Deletion probability per (q, u, n) context.
    delete: Vec<f64>,
}

impl Transducer {
    pub fn new(phonology: &Phonology) -> Self {
        let tables = PhoneTables::new(phonology);
        let params = phonology.params().clone();
        let p = tables.phones();
        let ctx = p + 1;
        let mut delete = vec![0.0; ctx * p * ctx];
        for q in 0..ctx {
            for u in 0..p {
                for n in 0..ctx {
                    let row = tables.copy_row(q, u, n);
                    let mass = if q < p { row[q] } else { 0.0 } + if n < p { row[n] } else { 0.0 };
                    delete[(q * p + u) * ctx + n] = params.c_delete.min(mass);
                }
            }
        }
        Transducer { tables, params, delete }
    }

    pub fn phones(&self) -> usize {
        self.tables.phones()
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    pub fn tables(&self) -> &PhoneTables {
        &self.tables
    }

    fn ctx(&self, x: Option<PhoneId>) -> usize {
        x.unwrap_or(self.tables.sentinel())
    }

    /// `min(c_D, p_C(q|q,u,n) + p_C(n|q,u,n))`, sentinel terms counting 0.
    #[inline]
    pub fn delete_prob(&self, q: usize, u: usize, n: usize) -> f64 {
        let p = self.tables.phones();
        self.delete[(q * p + u) * (p + 1) + n]
    }

    /// Every outgoing transition from `tag` while `u` is under the read
    /// head.
    pub fn step_distribution(&self, tag: Tag, q: Option<PhoneId>, u: PhoneId, n: Option<PhoneId>) -> Vec<Transition> {
        let (qi, ni) = (self.ctx(q), self.ctx(n));
        let (ci, cm) = (self.params.c_insert, self.params.c_map);
        let d = self.delete_prob(qi, u, ni);
        let p = self.phones();
        let mut out = Vec::new();
        let mut emit = |action, next, scale: f64, dist: &dyn Fn(usize) -> f64| {
            for s in 0..p {
                out.push(Transition {
                    action,
                    phone: Some(s),
                    next,
                    prob: scale * dist(s),
                });
            }
        };
        let map = |s| self.tables.map(qi, u, s);
        let copy = |s| self.tables.copy(qi, u, ni, s);
        match tag {
            Tag::Start => {
                emit(Action::Insert, Tag::Inserted, ci, &|s| self.tables.insert(s));
                emit(Action::Map, Tag::Mapped, cm * (1.0 - ci), &map);
                emit(Action::Copy, Tag::Start, (1.0 - ci) * (1.0 - cm) * (1.0 - d), &copy);
                out.push(Transition {
                    action: Action::Delete,
                    phone: None,
                    next: Tag::Start,
                    prob: (1.0 - ci) * (1.0 - cm) * d,
                });
            }
            Tag::Inserted => {
                emit(Action::Map, Tag::Mapped, cm, &map);
                emit(Action::Copy, Tag::Start, (1.0 - cm) * (1.0 - d), &copy);
                out.push(Transition {
                    action: Action::Delete,
                    phone: None,
                    next: Tag::Start,
                    prob: (1.0 - cm) * d,
                });
            }
            Tag::Mapped => {
                emit(Action::Map, Tag::Mapped, cm, &map);
                emit(Action::Copy, Tag::Start, 1.0 - cm, &copy);
            }
        }
        out
    }

    /// Forward table over (phonemes read, phones emitted, state).
    fn derivations(&self, pi: &[PhoneId], phi: &[PhoneId], prev: Option<PhoneId>, next: Option<PhoneId>, best: bool) -> Vec<[f64; 3]> {
        let (np, nf) = (pi.len(), phi.len());
        let at = |r: usize, j: usize| r * (nf + 1) + j;
        let mut f = vec![[0.0; 3]; (np + 1) * (nf + 1)];
        f[at(0, 0)][0] = 1.0;
        let (ci, cm) = (self.params.c_insert, self.params.c_map);
        let combine = |slot: &mut f64, v: f64| {
            if best {
                *slot = slot.max(v)
            } else {
                *slot += v
            }
        };
        for r in 0..np {
            let u = pi[r];
            let n = if r + 1 < np { pi[r + 1] } else { self.ctx(next) };
            for j in 0..=nf {
                let q = if j == 0 { self.ctx(prev) } else { phi[j - 1] };
                let [s, i, m] = f[at(r, j)];
                let d = self.delete_prob(q, u, n);
                let del = s * (1.0 - ci) * (1.0 - cm) * d;
                let del_i = i * (1.0 - cm) * d;
                combine(&mut f[at(r + 1, j)][0], if best { del.max(del_i) } else { del + del_i });
                if j < nf {
                    let x = phi[j];
                    let pm = self.tables.map(q, u, x);
                    let pc = self.tables.copy(q, u, n, x);
                    let ins = s * ci * self.tables.insert(x);
                    let cands_m = [s * cm * (1.0 - ci) * pm, i * cm * pm, m * cm * pm];
                    let cands_c = [
                        s * (1.0 - ci) * (1.0 - cm) * (1.0 - d) * pc,
                        i * (1.0 - cm) * (1.0 - d) * pc,
                        m * (1.0 - cm) * pc,
                    ];
                    let fold = |c: [f64; 3]| if best { c[0].max(c[1]).max(c[2]) } else { c.iter().sum() };
                    combine(&mut f[at(r, j + 1)][1], ins);
                    combine(&mut f[at(r, j + 1)][2], fold(cands_m));
                    combine(&mut f[at(r + 1, j + 1)][0], fold(cands_c));
                }
            }
        }
        f
    }

    /// `p(phi | pi)` summed over all derivations, with the phone before
    /// and the phoneme after the word given as context.
    pub fn phi_given_pi_in(&self, pi: &[PhoneId], phi: &[PhoneId], prev: Option<PhoneId>, next: Option<PhoneId>) -> f64 {
        if pi.is_empty() {
            return if phi.is_empty() { 1.0 } else { 0.0 };
        }
        self.derivations(pi, phi, prev, next, false)[pi.len() * (phi.len() + 1) + phi.len()][0]
    }

    /// `p(phi | pi)` at utterance edges on both sides.
    pub fn phi_given_pi(&self, pi: &[PhoneId], phi: &[PhoneId]) -> f64 {
        self.phi_given_pi_in(pi, phi, None, None)
    }

    /// The single most probable derivation and its log2 probability.
    pub fn best_alignment(&self, pi: &[PhoneId], phi: &[PhoneId]) -> Option<(f64, Vec<Step>)> {
        if pi.is_empty() {
            return None;
        }
        let f = self.derivations(pi, phi, None, None, true);
        let nf = phi.len();
        let at = |r: usize, j: usize| r * (nf + 1) + j;
        let total = f[at(pi.len(), nf)][0];
        if total <= 0.0 {
            return None;
        }
        // Walk back, re-deriving which predecessor produced each maximum.
        let (ci, cm) = (self.params.c_insert, self.params.c_map);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        let mut steps = Vec::new();
        let (mut r, mut j, mut tag) = (pi.len(), nf, Tag::Start);
        while r > 0 || j > 0 {
            let target = f[at(r, j)][tag.index()];
            let q_of = |j: usize| if j == 0 { self.ctx(None) } else { phi[j - 1] };
            match tag {
                Tag::Start => {
                    let rr = r - 1;
                    let u = pi[rr];
                    let n = if rr + 1 < pi.len() { pi[rr + 1] } else { self.ctx(None) };
                    // Delete from (rr, j).
                    let q = q_of(j);
                    let d = self.delete_prob(q, u, n);
                    let [s, i, _] = f[at(rr, j)];
                    if close(target, s * (1.0 - ci) * (1.0 - cm) * d) {
                        steps.push(Step { action: Action::Delete, phoneme: u, phone: None });
                        r = rr;
                        continue;
                    }
                    if close(target, i * (1.0 - cm) * d) {
                        steps.push(Step { action: Action::Delete, phoneme: u, phone: None });
                        r = rr;
                        tag = Tag::Inserted;
                        continue;
                    }
                    let jj = j - 1;
                    let q = q_of(jj);
                    let d = self.delete_prob(q, u, n);
                    let pc = self.tables.copy(q, u, n, phi[jj]);
                    let [s, i, m] = f[at(rr, jj)];
                    steps.push(Step { action: Action::Copy, phoneme: u, phone: Some(phi[jj]) });
                    tag = if close(target, s * (1.0 - ci) * (1.0 - cm) * (1.0 - d) * pc) {
                        Tag::Start
                    } else if close(target, i * (1.0 - cm) * (1.0 - d) * pc) {
                        Tag::Inserted
                    } else {
                        debug_assert!(close(target, m * (1.0 - cm) * pc));
                        Tag::Mapped
                    };
                    r = rr;
                    j = jj;
                }
                Tag::Inserted => {
                    steps.push(Step { action: Action::Insert, phoneme: pi[r], phone: Some(phi[j - 1]) });
                    j -= 1;
                    tag = Tag::Start;
                }
                Tag::Mapped => {
                    let jj = j - 1;
                    let pm = self.tables.map(q_of(jj), pi[r], phi[jj]);
                    let [s, i, _] = f[at(r, jj)];
                    steps.push(Step { action: Action::Map, phoneme: pi[r], phone: Some(phi[jj]) });
                    tag = if close(target, s * cm * (1.0 - ci) * pm) {
                        Tag::Start
                    } else if close(target, i * cm * pm) {
                        Tag::Inserted
                    } else {
                        Tag::Mapped
                    };
                    j = jj;
                }
            }
        }
        steps.reverse();
        Some((total.log2(), steps))
    }

    /// Samples a phone string for `pi`. Returns the phones and, for each
    /// phoneme boundary `0..=pi.len()`, the number of phones emitted when
    /// the read head reached it.
    pub fn sample<R: Rng>(&self, pi: &[PhoneId], rng: &mut R) -> (Vec<PhoneId>, Vec<usize>) {
        let mut out: Vec<PhoneId> = Vec::new();
        let mut offsets = vec![0];
        let mut tag = Tag::Start;
        let mut r = 0;
        while r < pi.len() {
            let q = out.last().copied();
            let n = pi.get(r + 1).copied();
            let dist = self.step_distribution(tag, q, pi[r], n);
            let weights: Vec<f64> = dist.iter().map(|t| t.prob).collect();
            let t = dist[WeightedIndex::new(&weights).expect("transitions have mass").sample(rng)];
            if let Some(s) = t.phone {
                out.push(s);
            }
            if t.action.advances() {
                r += 1;
                offsets.push(out.len());
            }
            tag = t.next;
        }
        (out, offsets)
    }
}

/// Counters describing how much of the noisy lattice pruning removed.
#[derive(Debug, Default)]
pub struct PruneStats {
    pub cells_kept: AtomicU64,
    pub cells_pruned: AtomicU64,
    pub nodes_pruned: AtomicU64,
}

impl PruneStats {
    pub fn snapshot(&self) -> (u64, u64, u64) {
        (
            self.cells_kept.load(Ordering::Relaxed),
            self.cells_pruned.load(Ordering::Relaxed),
            self.nodes_pruned.load(Ordering::Relaxed),
        )
    }
}

/// Word matching through the transducer. Lexicon symbols are phone ids.
#[derive(Debug)]
pub struct NoisyMatcher {
    transducer: Transducer,
    prune_budget: f64,
    stats: PruneStats,
}

/// Masses over phones emitted so far, per state, for one partial word.
#[derive(Debug, Clone)]
struct Band {
    lo: usize,
    cells: Vec<[f64; 3]>,
}

impl Band {
    fn max(&self) -> f64 {
        self.cells.iter().flat_map(|c| c.iter().copied()).fold(0.0, f64::max)
    }
}

impl NoisyMatcher {
    pub fn new(phonology: &Phonology, prune_budget: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&prune_budget) {
            return Err(Error::InvalidParameter(format!("prune budget {prune_budget} must be in [0, 1)")));
        }
        Ok(NoisyMatcher {
            transducer: Transducer::new(phonology),
            prune_budget,
            stats: PruneStats::default(),
        })
    }

    pub fn transducer(&self) -> &Transducer {
        &self.transducer
    }

    pub fn prune_budget(&self) -> f64 {
        self.prune_budget
    }

    pub fn stats(&self) -> &PruneStats {
        &self.stats
    }

    /// Emission phase for phoneme `u`: insertions and maps from the
    /// start-state masses in `s`, before `u` is consumed.
    fn expand(&self, seq: &[Sym], k: usize, s: &Band, u: usize) -> Band {
        let t = &self.transducer;
        let (ci, cm) = (t.params.c_insert, t.params.c_map);
        let limit = seq.len() - k;
        let mut cells: Vec<[f64; 3]> = s.cells.iter().map(|c| [c[0], 0.0, 0.0]).collect();
        // Extra phones can run to the end of the sequence; grow as needed.
        let mut x = 0;
        while x < cells.len() {
            let j = s.lo + x;
            let [sv, iv, mv] = cells[x];
            if j < limit && (sv > 0.0 || iv > 0.0 || mv > 0.0) {
                let ph = seq[k + j] as usize;
                let q = if k + j == 0 { t.tables.sentinel() } else { seq[k + j - 1] as usize };
                let pm = t.tables.map(q, u, ph);
                let ins = sv * ci * t.tables.insert(ph);
                let map = (sv * (1.0 - ci) + iv + mv) * cm * pm;
                if ins > 0.0 || map > 0.0 {
                    if x + 1 == cells.len() {
                        cells.push([0.0; 3]);
                    }
                    cells[x + 1][1] += ins;
                    cells[x + 1][2] += map;
                }
            }
            x += 1;
        }
        Band { lo: s.lo, cells }
    }

    /// Consumption phase for `u` with next phoneme context `n`: deletes and
    /// copies, producing start-state masses after `u`.
    fn finalize(&self, seq: &[Sym], k: usize, pre: &Band, u: usize, n: usize, out: &mut Band) {
        let t = &self.transducer;
        let (ci, cm) = (t.params.c_insert, t.params.c_map);
        let limit = seq.len() - k;
        out.lo = pre.lo;
        out.cells.clear();
        out.cells.resize(pre.cells.len() + 1, [0.0; 3]);
        for (x, &[sv, iv, mv]) in pre.cells.iter().enumerate() {
            if sv == 0.0 && iv == 0.0 && mv == 0.0 {
                continue;
            }
            let j = pre.lo + x;
            let q = if k + j == 0 { t.tables.sentinel() } else { seq[k + j - 1] as usize };
            let d = t.delete_prob(q, u, n);
            let open = sv * (1.0 - ci) * (1.0 - cm) + iv * (1.0 - cm);
            out.cells[x][0] += open * d;
            if j < limit {
                let pc = t.tables.copy(q, u, n, seq[k + j] as usize);
                out.cells[x + 1][0] += (open * (1.0 - d) + mv * (1.0 - cm)) * pc;
            }
        }
        while out.cells.last().is_some_and(|c| c[0] == 0.0) {
            out.cells.pop();
        }
    }

    /// Zeroes cells below the budget relative to `best`, trims the band,
    /// and reports whether anything survives.
    fn prune(&self, band: &mut Band, best: f64) -> bool {
        let floor = self.prune_budget * best;
        let mut kept = 0;
        let mut pruned = 0;
        for c in band.cells.iter_mut() {
            for v in c.iter_mut() {
                if *v > 0.0 {
                    if *v < floor {
                        *v = 0.0;
                        pruned += 1;
                    } else {
                        kept += 1;
                    }
                }
            }
        }
        let zero = |c: &[f64; 3]| c.iter().all(|v| *v == 0.0);
        while band.cells.last().is_some_and(zero) {
            band.cells.pop();
        }
        let lead = band.cells.iter().take_while(|c| zero(c)).count();
        band.cells.drain(..lead);
        band.lo += lead;
        self.stats.cells_kept.fetch_add(kept, Ordering::Relaxed);
        self.stats.cells_pruned.fetch_add(pruned, Ordering::Relaxed);
        !band.cells.is_empty()
    }

    /// Lattice of word hypotheses weighted by `p(w) p(phones | surf(w))`,
    /// keyed by the first phoneme of the following word.
    pub fn lattice(&self, lex: &Lexicon, trie: &SurfaceTrie, seq: &[Sym]) -> Result<Lattice> {
        let p = self.transducer.phones();
        if lex.alphabet().len() != p {
            return Err(Error::InvalidParameter(format!(
                "lexicon has {} terminals but the channel has {p} phones",
                lex.alphabet().len()
            )));
        }
        let n_len = seq.len();
        let end_key = p;
        let mut lat = Lattice::new(n_len, p + 1, end_key);
        let entries: Vec<usize> = trie.children(SurfaceTrie::ROOT).map(|(s, _)| s as usize).collect();
        let mut weights = vec![f64::NEG_INFINITY; p + 1];
        let mut fin = Band { lo: 0, cells: Vec::new() };
        // Per end offset: log weights by next key, for one word.
        let mut ends: Vec<Vec<f64>> = Vec::new();

        for k in 0..n_len {
            let root = Band { lo: 0, cells: vec![[1.0, 0.0, 0.0]] };
            // Level r holds (trie node, phoneme u, emission band for u).
            let mut level: Vec<(usize, usize, Band)> = trie
                .children(SurfaceTrie::ROOT)
                .map(|(s, node)| (node, s as usize, self.expand(seq, k, &root, s as usize)))
                .collect();
            while !level.is_empty() {
                let best = level.iter().map(|(_, _, b)| b.max()).fold(0.0, f64::max);
                let mut next = Vec::new();
                for (node, u, mut pre) in level {
                    if !self.prune(&mut pre, best) {
                        self.stats.nodes_pruned.fetch_add(1, Ordering::Relaxed);
                        continue;
                    }
                    if let Some(w) = trie.word(node) {
                        let lp = log_prob(lex, w);
                        ends.clear();
                        let width = pre.cells.len() + 1;
                        ends.resize(width, vec![f64::NEG_INFINITY; p + 1]);
                        let keys: &[usize] = &entries;
                        for &n in keys.iter().chain(std::iter::once(&end_key)) {
                            self.finalize(seq, k, &pre, u, n, &mut fin);
                            for (x, c) in fin.cells.iter().enumerate() {
                                let l = k + fin.lo + x;
                                let at_end = l == n_len;
                                if c[0] > 0.0 && l > k && at_end == (n == end_key) {
                                    ends[x][n] = lp + c[0].ln();
                                }
                            }
                        }
                        for (x, e) in ends.iter().enumerate() {
                            if e.iter().any(|v| v.is_finite()) {
                                weights.copy_from_slice(e);
                                let head = HypHead {
                                    start: k,
                                    end: k + pre.lo + x,
                                    word: w,
                                    entry: lex.words()[w].surface[0] as usize,
                                };
                                lat.push(head, &weights);
                            }
                        }
                    }
                    for (s, child) in trie.children(node) {
                        let mut after = Band { lo: 0, cells: Vec::new() };
                        self.finalize(seq, k, &pre, u, s as usize, &mut after);
                        if !after.cells.is_empty() {
                            let e = self.expand(seq, k, &after, s as usize);
                            next.push((child, s as usize, e));
                        }
                    }
                }
                level = next;
            }
        }
        if !reachable(&lat) {
            return Err(if self.prune_budget > 0.0 {
                Error::PrunedAway { budget: self.prune_budget }
            } else {
                Error::Unparseable
            });
        }
        Ok(lat)
    }
}

fn reachable(lat: &Lattice) -> bool {
    let mut ok = vec![false; lat.len() + 1];
    ok[0] = true;
    let mut heads: Vec<&HypHead> = lat.heads().iter().collect();
    heads.sort_by_key(|h| h.start);
    for h in heads {
        if ok[h.start] {
            ok[h.end] = true;
        }
    }
    ok[lat.len()]
}
