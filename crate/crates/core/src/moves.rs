//! Dictionary changes: adding words built from adjacent words, deleting
//! words that no longer pay for themselves, and merging systematic
//! surface variants. Changes are scored with first-order estimates of how
//! counts and probabilities shift, then the outer training loop applies
//! them between rounds of EM.

use std::collections::{BTreeMap, HashMap, HashSet};

use log::{debug, info};
use rayon::prelude::*;

use crate::channel::NoisyMatcher;
use crate::corpus::{Sym, Utterance};
use crate::error::{Error, Result};
use crate::lexicon::{DescriptionLength, Lexicon, WordId, WordKind};
use crate::multigram::{
    em_iterate, exact_lattice, forward_backward, parse_all, viterbi_bits, CountMode, EmConfig, Matching,
    RepPolicy, Segmentation, SurfaceTrie,
};
use crate::phonology::{ChannelParams, Phonology};

/// A proposed word.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub surface: Vec<Sym>,
    pub rep: Vec<WordId>,
    pub kind: WordKind,
    /// Estimated uses of the new word, `c'(X)`.
    pub est_count: f64,
    /// Per word: expected uses inside the surface under the current
    /// model, `c(w|X)`, and uses in the new representation, `c'(w|X)`.
    pub usage: BTreeMap<WordId, (f64, f64)>,
    /// Change in channel bits if adopted (variants only).
    pub channel_delta: f64,
    /// Channel bits stored with a variant's dictionary entry.
    pub channel_bits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaReport {
    pub delta_bits: f64,
    pub breakdown: Vec<(&'static str, f64)>,
    /// Components of the new word that would be left with almost no uses
    /// of their own, and so are worth re-scoring for deletion.
    pub deletable_components: Vec<WordId>,
}

/// `-c log2(c / total)`, zero for zero counts.
fn index_bits(c: f64, total: f64) -> f64 {
    if c > 0.0 {
        -c * (c / total).log2()
    } else {
        0.0
    }
}

/// Word sequences whose adjacent pairs and triples are candidates: the
/// top level of every parse and every concatenative representation.
fn sequences<'a>(lex: &'a Lexicon, parses: &'a [Segmentation]) -> impl Iterator<Item = Vec<WordId>> + 'a {
    parses.iter().map(|p| p.words()).chain(
        lex.words()
            .iter()
            .filter(|w| w.kind == WordKind::Concat)
            .map(|w| w.rep.clone()),
    )
}

/// Adjacent pairs and triples from the parses, counted without overlap
/// inside each sequence and merged by surface. The most frequent word
/// sequence for a surface becomes its representation. Surfaces already in
/// the lexicon are skipped. At most `cap` candidates, most frequent first.
pub fn propose_candidates(lex: &Lexicon, parses: &[Segmentation], cap: usize) -> Vec<Candidate> {
    let mut by_surface: HashMap<Vec<Sym>, HashMap<Vec<WordId>, f64>> = HashMap::new();
    for seq in sequences(lex, parses) {
        for n in [2, 3] {
            let mut next_free: HashMap<&[WordId], usize> = HashMap::new();
            for i in 0..seq.len().saturating_sub(n - 1) {
                let gram = &seq[i..i + n];
                if next_free.get(gram).is_some_and(|&f| i < f) {
                    continue;
                }
                next_free.insert(gram, i + n);
                let surface: Vec<Sym> = gram.iter().flat_map(|&w| lex.words()[w].surface.iter().copied()).collect();
                if lex.lookup(&surface).is_some() {
                    continue;
                }
                *by_surface.entry(surface).or_default().entry(gram.to_vec()).or_insert(0.0) += 1.0;
            }
        }
    }
    let mut out: Vec<Candidate> = by_surface
        .into_iter()
        .map(|(surface, reps)| {
            let total = reps.values().sum();
            let (rep, _) = reps
                .into_iter()
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| b.0.cmp(&a.0)))
                .unwrap();
            Candidate {
                surface,
                rep,
                kind: WordKind::Concat,
                est_count: total,
                usage: BTreeMap::new(),
                channel_delta: 0.0,
                channel_bits: 0.0,
            }
        })
        .collect();
    out.sort_by(|a, b| b.est_count.partial_cmp(&a.est_count).unwrap().then_with(|| a.surface.cmp(&b.surface)));
    out.truncate(cap);
    out
}

/// Fills `usage` for a concatenative candidate: expected uses of each
/// word when parsing its surface now, and one use per representation slot.
pub fn fill_usage(lex: &Lexicon, trie: &SurfaceTrie, cand: &mut Candidate) -> Result<()> {
    cand.usage.clear();
    if cand.kind == WordKind::Concat {
        let chart = forward_backward(&exact_lattice(lex, trie, &cand.surface, false))?;
        for s in chart.spans() {
            cand.usage.entry(s.word).or_insert((0.0, 0.0)).0 += s.posterior;
        }
    } else {
        for &w in &cand.rep {
            cand.usage.entry(w).or_insert((0.0, 0.0)).0 += 1.0;
        }
    }
    for &w in &cand.rep {
        cand.usage.entry(w).or_insert((0.0, 0.0)).1 += 1.0;
    }
    Ok(())
}

/// Estimated change in description length from adding `cand`.
pub fn score_addition(lex: &Lexicon, cand: &Candidate) -> DeltaReport {
    let cx = cand.est_count;
    let c_total = lex.total_count();
    let sum_now: f64 = cand.usage.values().map(|u| u.0).sum();
    let sum_new: f64 = cand.usage.values().map(|u| u.1).sum();
    let c_new = c_total + sum_new + cx * (1.0 - sum_now);
    if !(c_new > 0.0) || !(cx > 0.0) {
        return DeltaReport {
            delta_bits: f64::INFINITY,
            breakdown: Vec::new(),
            deletable_components: Vec::new(),
        };
    }
    let new_word = index_bits(cx, c_new);
    let mut affected = 0.0;
    let mut affected_count = 0.0;
    let mut deletable = Vec::new();
    for (&w, &(now, new)) in &cand.usage {
        let c = lex.words()[w].count;
        let c2 = (c + new - cx * now).max(0.0);
        affected += index_bits(c2, c_new) - index_bits(c, c_total);
        affected_count += c;
        if new > 0.0 && lex.words()[w].kind != WordKind::Terminal && c2 - new < 0.5 {
            deletable.push(w);
        }
    }
    let unaffected = (c_total - affected_count).max(0.0) * (c_new / c_total).log2();
    let delta = new_word + affected + unaffected + cand.channel_delta;
    DeltaReport {
        delta_bits: delta,
        breakdown: vec![
            ("new word indices", new_word),
            ("affected words", affected),
            ("other words", unaffected),
            ("channel", cand.channel_delta),
        ],
        deletable_components: deletable,
    }
}

/// Counts after deleting `x`: its uses are replaced by its representation.
fn counts_after_deletion(lex: &Lexicon, x: WordId) -> Vec<f64> {
    let w = &lex.words()[x];
    let cx = w.count;
    let mut counts = lex.counts();
    for &r in &w.rep {
        counts[r] += cx - 1.0;
    }
    for c in counts.iter_mut() {
        *c = c.max(0.0);
    }
    counts[x] = 0.0;
    counts
}

/// Estimated change in description length from deleting `x`.
pub fn score_deletion(lex: &Lexicon, x: WordId) -> Result<DeltaReport> {
    let w = lex.word(x)?;
    if w.is_terminal() {
        return Err(Error::TerminalDeletion(x));
    }
    let cx = w.count;
    let c_total = lex.total_count();
    let c_new = c_total - cx + w.rep.len() as f64 * (cx - 1.0);
    let recovered = -index_bits(cx, c_total);
    let mut slots: BTreeMap<WordId, f64> = BTreeMap::new();
    for &r in &w.rep {
        *slots.entry(r).or_insert(0.0) += 1.0;
    }
    let mut affected = 0.0;
    let mut affected_count = 0.0;
    for (&r, &n) in &slots {
        let c = lex.words()[r].count;
        let c2 = (c + n * (cx - 1.0)).max(0.0);
        affected += index_bits(c2, c_new) - index_bits(c, c_total);
        affected_count += c;
    }
    let unaffected = (c_total - cx - affected_count).max(0.0) * (c_new / c_total).log2();
    // Every use of a variant falls back on the channel once it is gone.
    let channel = if w.kind == WordKind::Variant {
        (cx - 1.0) * w.channel_bits
    } else {
        0.0
    };
    Ok(DeltaReport {
        delta_bits: recovered + affected + unaffected + channel,
        breakdown: vec![
            ("recovered indices", recovered),
            ("affected words", affected),
            ("other words", unaffected),
            ("channel", channel),
        ],
        deletable_components: Vec::new(),
    })
}

/// Deletes `x`, moving its uses onto its representation.
pub fn delete_word(lex: &mut Lexicon, x: WordId) -> Result<()> {
    let counts = counts_after_deletion(lex, x);
    let remap = lex.remove_word(x)?;
    let mut kept = vec![0.0; lex.len()];
    for (old, c) in counts.into_iter().enumerate() {
        if let Some(new) = remap[old] {
            kept[new] = c;
        }
    }
    lex.renormalize(&kept)
}

/// A surface variant proposal for `word`: the dominant observed
/// realization, if it is frequent, the majority, different from the
/// word's surface and at least as long.
pub fn merge_surface_variant(
    lex: &Lexicon,
    matcher: &NoisyMatcher,
    word: WordId,
    observed: &[Sym],
    support: usize,
    occurrences: usize,
    min_support: usize,
) -> Option<Candidate> {
    let w = &lex.words()[word];
    if w.is_terminal()
        || support < min_support
        || 2 * support <= occurrences
        || observed == w.surface.as_slice()
        || observed.len() < w.surface.len()
        || (observed.len() == w.surface.len() && w.kind == WordKind::Variant)
        || lex.lookup(observed).is_some()
    {
        return None;
    }
    let t = matcher.transducer();
    let ids = |s: &[Sym]| s.iter().map(|&x| x as usize).collect::<Vec<_>>();
    let (under, over) = (ids(&w.surface), ids(observed));
    let mapped = -t.phi_given_pi(&under, &over).log2();
    let faithful = -t.phi_given_pi(&over, &over).log2();
    if !mapped.is_finite() {
        return None;
    }
    let mut usage = BTreeMap::new();
    usage.insert(word, (1.0, 1.0));
    Some(Candidate {
        surface: observed.to_vec(),
        rep: vec![word],
        kind: WordKind::Variant,
        est_count: support as f64,
        usage,
        channel_delta: mapped - support as f64 * (mapped - faithful),
        channel_bits: mapped,
    })
}

/// Variant proposals from the top level of noisy parses.
fn variant_candidates(lex: &Lexicon, matcher: &NoisyMatcher, utterances: &[Utterance], parses: &[Segmentation], min_support: usize) -> Vec<Candidate> {
    let mut seen: BTreeMap<WordId, (usize, BTreeMap<Vec<Sym>, usize>)> = BTreeMap::new();
    for (u, p) in utterances.iter().zip(parses) {
        for node in &p.roots {
            let e = seen.entry(node.word).or_default();
            e.0 += 1;
            *e.1.entry(u.terminals[node.start..node.end].to_vec()).or_insert(0) += 1;
        }
    }
    let mut out = Vec::new();
    for (word, (total, realizations)) in seen {
        // Most frequent realization; ties go to the smaller surface.
        let (obs, support) = realizations
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .unwrap();
        if let Some(c) = merge_surface_variant(lex, matcher, word, obs, *support, total, min_support) {
            out.push(c);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// EM iterations per estimation stage.
    pub em_iters: usize,
    pub max_outer: usize,
    pub count_mode: CountMode,
    /// Scales the co-occurrence estimate of a new word's count.
    pub new_word_discount: f64,
    /// Skip deleting words whose representation cost grew by more than
    /// this factor during the current deletion pass.
    pub deletion_guard: f64,
    pub merge_min_support: usize,
    pub candidate_cap: usize,
    pub overhead_bits: f64,
    /// Channel parameters; `Some` enables noisy matching.
    pub channel: Option<ChannelParams>,
    pub prune_budget: f64,
    /// Recompute the settled description length around every move.
    pub audit: bool,
    /// Count floor for terminals left unused after training.
    pub terminal_floor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            em_iters: 3,
            max_outer: 15,
            count_mode: CountMode::Complete,
            new_word_discount: 1.0,
            deletion_guard: 2.0,
            merge_min_support: 3,
            candidate_cap: 10_000,
            overhead_bits: 0.0,
            channel: None,
            prune_budget: 1e-4,
            audit: false,
            terminal_floor: 1.0,
        }
    }
}

impl TrainConfig {
    fn em(&self) -> EmConfig {
        EmConfig {
            mode: self.count_mode,
            reps: RepPolicy::Reparse,
        }
    }

    /// Applies one `key = value` setting. Returns `false` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let bad = || Error::InvalidParameter(format!("{key}: '{value}' is not valid"));
        let f = || value.parse::<f64>().map_err(|_| bad());
        let n = || value.parse::<usize>().map_err(|_| bad());
        match key {
            "em_iters" => self.em_iters = n()?,
            "max_outer" | "iters" => self.max_outer = n()?,
            "count_mode" => {
                self.count_mode = match value {
                    "complete" => CountMode::Complete,
                    "viterbi" => CountMode::Viterbi,
                    _ => return Err(bad()),
                }
            }
            "new_word_discount" => self.new_word_discount = f()?,
            "deletion_guard" => self.deletion_guard = f()?,
            "merge_min_support" => self.merge_min_support = n()?,
            "candidate_cap" => self.candidate_cap = n()?,
            "overhead_bits" => self.overhead_bits = f()?,
            "prune_budget" => self.prune_budget = f()?,
            "audit" => self.audit = value.parse().map_err(|_| bad())?,
            "terminal_floor" => self.terminal_floor = f()?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub input_bits: f64,
    pub dictionary_bits: f64,
    pub total_bits: f64,
    pub words_added: usize,
    pub words_deleted: usize,
    pub lexicon_size: usize,
}

impl TraceRow {
    pub const HEADER: &'static str =
        "iteration\tinput_bits\tdictionary_bits\ttotal_bits\twords_added\twords_deleted\tlexicon_size";

    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{:.3}\t{:.3}\t{:.3}\t{}\t{}\t{}",
            self.iteration,
            self.input_bits,
            self.dictionary_bits,
            self.total_bits,
            self.words_added,
            self.words_deleted,
            self.lexicon_size
        )
    }
}

/// Predicted and settled effect of one accepted move.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub iteration: usize,
    pub kind: &'static str,
    pub surface: String,
    pub predicted: f64,
    pub actual: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MoveSummary {
    pub added: usize,
    pub deleted: usize,
    pub audit: Vec<AuditEntry>,
}

/// Description length after settling counts and representations with one
/// round of Viterbi re-estimation.
pub fn settled_description_length(lex: &Lexicon, utterances: &[Utterance], matching: Matching) -> Result<f64> {
    let mut l = lex.clone();
    let cfg = EmConfig {
        mode: CountMode::Viterbi,
        reps: RepPolicy::Reparse,
    };
    em_iterate(&mut l, utterances, 1, cfg, matching)?;
    Ok(description_length(&l, utterances, matching)?.total_bits)
}

/// Input bits along Viterbi paths plus dictionary bits.
pub fn description_length(lex: &Lexicon, utterances: &[Utterance], matching: Matching) -> Result<DescriptionLength> {
    Ok(lex.description_length(&viterbi_bits(lex, utterances, matching)?))
}

/// One outer iteration: EM, a batch of additions, EM, then deletions.
pub fn apply_moves(
    lex: &mut Lexicon,
    utterances: &[Utterance],
    config: &TrainConfig,
    matching: Matching,
    iteration: usize,
) -> Result<MoveSummary> {
    let mut summary = MoveSummary::default();
    em_iterate(lex, utterances, config.em_iters, config.em(), matching)?;

    // Additions.
    let parses = parse_all(lex, utterances, matching)?;
    let mut cands = propose_candidates(lex, &parses, config.candidate_cap);
    let trie = SurfaceTrie::new(lex);
    cands.par_iter_mut().try_for_each(|c| {
        c.est_count *= config.new_word_discount;
        fill_usage(lex, &trie, c)
    })?;
    if let Matching::Noisy(m) = matching {
        let mut variants = variant_candidates(lex, m, utterances, &parses, config.merge_min_support);
        for v in &mut variants {
            v.est_count *= config.new_word_discount;
        }
        cands.extend(variants);
    }
    let mut scored: Vec<(f64, Candidate)> = cands
        .into_par_iter()
        .map(|c| (score_addition(lex, &c).delta_bits, c))
        .filter(|(d, _)| *d < 0.0)
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.surface.cmp(&b.1.surface)));
    let mut added: HashSet<Vec<Sym>> = HashSet::new();
    let mut before = if config.audit {
        settled_description_length(lex, utterances, matching)?
    } else {
        0.0
    };
    for (delta, c) in scored {
        if added.contains(&c.surface) || lex.lookup(&c.surface).is_some() {
            continue;
        }
        let id = match lex.add_word(c.surface.clone(), c.rep.clone(), c.kind, c.est_count) {
            Ok(id) => id,
            Err(Error::InvalidParameter(reason)) => {
                debug!("skipping candidate: {reason}");
                continue;
            }
            Err(e) => return Err(e),
        };
        if c.kind == WordKind::Variant {
            lex.set_channel_bits(id, c.channel_bits)?;
        }
        debug!("add '{}' delta {delta:.2}", lex.alphabet().render(&c.surface));
        if config.audit {
            let after = settled_description_length(lex, utterances, matching)?;
            summary.audit.push(AuditEntry {
                iteration,
                kind: "add",
                surface: lex.alphabet().render(&c.surface),
                predicted: delta,
                actual: after - before,
            });
            before = after;
        }
        added.insert(c.surface);
        summary.added += 1;
    }
    if summary.added > 0 {
        let counts = lex.counts();
        lex.renormalize(&counts)?;
    }

    em_iterate(lex, utterances, config.em_iters, config.em(), matching)?;

    // Deletions.
    let original: HashMap<Vec<Sym>, f64> = (lex.alphabet().len()..lex.len())
        .map(|x| (lex.words()[x].surface.clone(), lex.word_cost(x).unwrap()))
        .collect();
    let mut before = if config.audit {
        settled_description_length(lex, utterances, matching)?
    } else {
        0.0
    };
    loop {
        let mut order: Vec<(f64, Vec<Sym>)> = (lex.alphabet().len()..lex.len())
            .filter(|&x| !added.contains(&lex.words()[x].surface))
            .map(|x| Ok((score_deletion(lex, x)?.delta_bits, lex.words()[x].surface.clone())))
            .collect::<Result<Vec<_>>>()?;
        order.retain(|(d, _)| *d < 0.0);
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)));
        let mut changed = false;
        for (_, surface) in order {
            let Some(x) = lex.lookup(&surface) else { continue };
            let delta = score_deletion(lex, x)?.delta_bits;
            if delta >= 0.0 {
                continue;
            }
            let cost = lex.word_cost(x)?;
            if cost > config.deletion_guard * original[&surface] {
                debug!("guard keeps '{}'", lex.alphabet().render(&surface));
                continue;
            }
            delete_word(lex, x)?;
            debug!("delete '{}' delta {delta:.2}", lex.alphabet().render(&surface));
            if config.audit {
                let after = settled_description_length(lex, utterances, matching)?;
                summary.audit.push(AuditEntry {
                    iteration,
                    kind: "delete",
                    surface: lex.alphabet().render(&surface),
                    predicted: delta,
                    actual: after - before,
                });
                before = after;
            }
            summary.deleted += 1;
            changed = true;
        }
        if !changed {
            break;
        }
    }
    Ok(summary)
}

/// Runs the outer loop to convergence and records a trace of description
/// lengths.
pub struct Trainer {
    config: TrainConfig,
    lexicon: Lexicon,
    utterances: Vec<Utterance>,
    matcher: Option<NoisyMatcher>,
    trace: Vec<TraceRow>,
    audit: Vec<AuditEntry>,
    converged: bool,
}

impl Trainer {
    /// Starts from a terminal-only lexicon estimated from the corpus. In
    /// noisy mode the alphabet must be a phone inventory subset.
    pub fn new(config: TrainConfig, lexicon: Lexicon, utterances: Vec<Utterance>) -> Result<Self> {
        let matcher = match &config.channel {
            Some(params) => {
                let glyphs: Vec<&str> = lexicon.alphabet().glyphs().iter().map(|s| s.as_str()).collect();
                let inventory = crate::phonology::Inventory::subset(&glyphs)?;
                let phonology = Phonology::new(inventory, params.clone())?;
                Some(NoisyMatcher::new(&phonology, config.prune_budget)?)
            }
            None => None,
        };
        let mut lexicon = lexicon;
        lexicon.set_overhead_bits(config.overhead_bits);
        let mut t = Trainer {
            config,
            lexicon,
            utterances,
            matcher,
            trace: Vec::new(),
            audit: Vec::new(),
            converged: false,
        };
        let dl = t.description_length()?;
        t.trace.push(TraceRow {
            iteration: 0,
            input_bits: dl.input_bits,
            dictionary_bits: dl.dictionary_bits,
            total_bits: dl.total_bits,
            words_added: 0,
            words_deleted: 0,
            lexicon_size: t.lexicon.len(),
        });
        Ok(t)
    }

    pub fn matching(&self) -> Matching<'_> {
        match &self.matcher {
            Some(m) => Matching::Noisy(m),
            None => Matching::Exact,
        }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn description_length(&self) -> Result<DescriptionLength> {
        description_length(&self.lexicon, &self.utterances, self.matching())
    }

    /// One outer iteration. Returns its trace row.
    pub fn step(&mut self) -> Result<TraceRow> {
        let iteration = self.trace.len();
        let matching = match &self.matcher {
            Some(m) => Matching::Noisy(m),
            None => Matching::Exact,
        };
        let summary = apply_moves(&mut self.lexicon, &self.utterances, &self.config, matching, iteration)?;
        let dl = description_length(&self.lexicon, &self.utterances, matching)?;
        let row = TraceRow {
            iteration,
            input_bits: dl.input_bits,
            dictionary_bits: dl.dictionary_bits,
            total_bits: dl.total_bits,
            words_added: summary.added,
            words_deleted: summary.deleted,
            lexicon_size: self.lexicon.len(),
        };
        info!(
            "iteration {iteration}: {:.1} bits ({:.1} input + {:.1} dictionary), +{} -{} words, {} total",
            row.total_bits, row.input_bits, row.dictionary_bits, row.words_added, row.words_deleted, row.lexicon_size
        );
        self.audit.extend(summary.audit);
        self.converged = summary.added == 0 && summary.deleted == 0;
        self.trace.push(row.clone());
        Ok(row)
    }

    /// Iterates until nothing changes or `max_outer` iterations have run.
    pub fn run(&mut self) -> Result<()> {
        while !self.converged && self.trace.len() <= self.config.max_outer {
            self.step()?;
        }
        Ok(())
    }

    /// The trained lexicon, with unused terminals given the floor count so
    /// unseen input stays encodable.
    pub fn into_lexicon(self) -> Result<Lexicon> {
        let mut lex = self.lexicon;
        let floor = self.config.terminal_floor;
        if floor > 0.0 {
            let mut counts = lex.counts();
            let mut changed = false;
            for c in counts.iter_mut().take(lex.alphabet().len()) {
                if *c == 0.0 {
                    *c = floor;
                    changed = true;
                }
            }
            if changed {
                lex.renormalize(&counts)?;
            }
        }
        Ok(lex)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Alphabet;
    use rand::{Rng, SeedableRng};

    fn text(lines: &[&str]) -> (Lexicon, Vec<Utterance>) {
        let alphabet = Alphabet::from_chars(lines.iter().flat_map(|l| l.chars()));
        let utts: Vec<Utterance> = lines.iter().map(|l| Utterance::new(alphabet.parse(l).unwrap())).collect();
        (Lexicon::from_corpus(alphabet, &utts).unwrap(), utts)
    }

    fn oracle_dl(lex: &Lexicon, utts: &[Utterance]) -> f64 {
        let mut l = lex.clone();
        let cfg = EmConfig {
            mode: CountMode::Viterbi,
            reps: RepPolicy::Reparse,
        };
        em_iterate(&mut l, utts, 3, cfg, Matching::Exact).unwrap();
        description_length(&l, utts, Matching::Exact).unwrap().total_bits
    }

    fn candidate(lex: &Lexicon, surface: &str, rep: &[&str], est: f64) -> Candidate {
        let a = lex.alphabet();
        let mut c = Candidate {
            surface: a.parse(surface).unwrap(),
            rep: rep.iter().map(|r| lex.lookup(&a.parse(r).unwrap()).unwrap()).collect(),
            kind: WordKind::Concat,
            est_count: est,
            usage: BTreeMap::new(),
            channel_delta: 0.0,
            channel_bits: 0.0,
        };
        fill_usage(lex, &SurfaceTrie::new(lex), &mut c).unwrap();
        c
    }

    #[test]
    fn pairs_are_counted_from_parses() {
        let (lex, utts) = text(&["abab", "ba"]);
        let parses = parse_all(&lex, &utts, Matching::Exact).unwrap();
        let cands = propose_candidates(&lex, &parses, 100);
        let find = |s: &str| cands.iter().find(|c| c.surface == lex.alphabet().parse(s).unwrap()).map(|c| c.est_count);
        assert_eq!(find("ab"), Some(2.0));
        assert_eq!(find("ba"), Some(2.0));
        assert_eq!(find("aba"), Some(1.0));
        assert_eq!(find("bab"), Some(1.0));
        assert!(cands.iter().all(|c| c.rep.len() == 2 || c.rep.len() == 3));
    }

    #[test]
    fn overlapping_repeats_are_not_double_counted() {
        let (lex, utts) = text(&["aaaa"]);
        let parses = parse_all(&lex, &utts, Matching::Exact).unwrap();
        let cands = propose_candidates(&lex, &parses, 100);
        assert_eq!(cands[0].surface, vec![0, 0]);
        assert_eq!(cands[0].est_count, 2.0);
    }

    #[test]
    fn existing_words_are_not_proposed() {
        let (mut lex, utts) = text(&["abab"]);
        lex.add_word(vec![0, 1], vec![0, 1], WordKind::Concat, 2.0).unwrap();
        let parses = parse_all(&lex, &utts, Matching::Exact).unwrap();
        assert!(propose_candidates(&lex, &parses, 100).iter().all(|c| c.surface != vec![0, 1]));
    }

    #[test]
    fn frequent_pair_is_worth_adding() {
        let lines = vec!["ab"; 1000];
        let (lex, utts) = text(&lines);
        let c = candidate(&lex, "ab", &["a", "b"], 1000.0);
        let report = score_addition(&lex, &c);
        assert!(report.delta_bits < 0.0, "{report:?}");
        let mut with = lex.clone();
        with.add_word(c.surface.clone(), c.rep.clone(), WordKind::Concat, 1000.0).unwrap();
        assert!(oracle_dl(&with, &utts) < oracle_dl(&lex, &utts));
    }

    #[test]
    fn rare_long_candidate_is_not() {
        let (lex, _) = text(&["abcdefgh", "hgfedcba"]);
        let c = candidate(&lex, "abc", &["a", "b", "c"], 1.0);
        assert!(score_addition(&lex, &c).delta_bits > 0.0);
    }

    #[test]
    fn chance_cooccurrence_is_not_added() {
        let mut gains = 0;
        for seed in 0..20 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let line: String = (0..400).map(|_| if rng.gen_bool(0.5) { 'a' } else { 'b' }).collect();
            let (lex, _) = text(&[&line]);
            let c = candidate(&lex, "ab", &["a", "b"], 100.0);
            if score_addition(&lex, &c).delta_bits < 0.0 {
                gains += 1;
            }
        }
        assert!(gains <= 2, "{gains} of 20 seeds accept a chance pair");
    }

    #[test]
    fn unused_words_are_deleted_and_used_ones_kept() {
        let lines = vec!["ab"; 1000];
        let (mut lex, utts) = text(&lines);
        let ab = lex.add_word(vec![0, 1], vec![0, 1], WordKind::Concat, 1000.0).unwrap();
        em_iterate(&mut lex, &utts, 2, EmConfig::default(), Matching::Exact).unwrap();
        let keep = score_deletion(&lex, ab).unwrap();
        assert!(keep.delta_bits > 0.0, "{keep:?}");
        let without = {
            let mut l = lex.clone();
            delete_word(&mut l, ab).unwrap();
            l
        };
        assert!(oracle_dl(&without, &utts) > oracle_dl(&lex, &utts));

        let unused = lex.add_word(vec![1, 0], vec![1, 0], WordKind::Concat, 0.0).unwrap();
        assert!(score_deletion(&lex, unused).unwrap().delta_bits < 0.0);
        assert!(matches!(score_deletion(&lex, 0), Err(Error::TerminalDeletion(0))));
    }

    #[test]
    fn deletion_moves_counts_onto_the_representation() {
        let (mut lex, _) = crate::lexicon::tests::thecat_lexicon();
        let at = lex.lookup(&lex.alphabet().parse("at").unwrap()).unwrap();
        let total = lex.total_count();
        delete_word(&mut lex, at).unwrap();
        lex.validate().unwrap();
        let a = lex.lookup(&[3]).unwrap();
        // c(a) = 1 + 1 * (2 - 1); C' = 17 - 2 + 2 * (2 - 1).
        assert_eq!(lex.words()[a].count, 2.0);
        assert_eq!(lex.total_count(), total - 2.0 + 2.0);
    }

    #[test]
    fn thecat_thehat_is_learned() {
        let lines = vec!["thecatthehat"; 100];
        let (lex, utts) = text(&lines);
        let config = TrainConfig {
            max_outer: 3,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(config, lex, utts).unwrap();
        let start = t.trace()[0].total_bits;
        for _ in 0..3 {
            t.step().unwrap();
        }
        let lex = t.lexicon();
        let has = |s: &str| lex.lookup(&lex.alphabet().parse(s).unwrap()).is_some();
        assert!(has("the") || has("cat") || has("hat") || has("thecat") || has("thehat"));
        assert!(t.trace().last().unwrap().total_bits < start);
    }

    #[test]
    fn converged_lexicon_is_a_fixed_point() {
        let (lex, utts) = text(&["abcabcabc", "abcabc", "abc"]);
        let mut t = Trainer::new(TrainConfig::default(), lex, utts).unwrap();
        t.run().unwrap();
        assert!(t.converged());
        let before = t.lexicon().clone();
        let row = t.step().unwrap();
        assert_eq!((row.words_added, row.words_deleted), (0, 0));
        assert_eq!(t.lexicon().words().len(), before.words().len());
    }

    #[test]
    fn training_is_deterministic() {
        let lines = ["thedogsawthecat", "thecatsawthedog", "adogandacat"];
        let run = || {
            let (lex, utts) = text(&lines);
            let mut t = Trainer::new(TrainConfig::default(), lex, utts).unwrap();
            t.run().unwrap();
            t.into_lexicon().unwrap().to_tsv()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn audit_is_recorded() {
        let lines = vec!["thecatthehat"; 30];
        let (lex, utts) = text(&lines);
        let config = TrainConfig {
            audit: true,
            max_outer: 2,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(config, lex, utts).unwrap();
        t.run().unwrap();
        assert!(!t.audit().is_empty());
        let helped = t.audit().iter().filter(|a| a.actual < 0.0).count();
        eprintln!("audit: {helped}/{} accepted moves reduced the settled length", t.audit().len());
    }

    #[test]
    fn words_added_in_a_pass_survive_it() {
        for seed in 0..50u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let words = ["ab", "cab", "bca", "cc"];
            let lines: Vec<String> = (0..20)
                .map(|_| (0..4).map(|_| words[rng.gen_range(0..words.len())]).collect())
                .collect();
            let refs: Vec<&str> = lines.iter().map(|s| s.as_str()).collect();
            let (mut lex, utts) = text(&refs);
            let config = TrainConfig::default();
            let before: HashSet<Vec<Sym>> = lex.words().iter().map(|w| w.surface.clone()).collect();
            let s = apply_moves(&mut lex, &utts, &config, Matching::Exact, 1).unwrap();
            let after: HashSet<Vec<Sym>> = lex.words().iter().map(|w| w.surface.clone()).collect();
            assert_eq!(after.difference(&before).count(), s.added, "seed {seed}");
            lex.validate().unwrap();
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn moves_keep_the_lexicon_acyclic(lines in proptest::collection::vec("[abc]{1,12}", 1..8)) {
                let refs: Vec<&str> = lines.iter().map(|s| s.as_str()).collect();
                let (mut lex, utts) = text(&refs);
                let config = TrainConfig::default();
                for i in 0..2 {
                    apply_moves(&mut lex, &utts, &config, Matching::Exact, i).unwrap();
                    prop_assert!(lex.validate().is_ok());
                }
            }
        }
    }
}
