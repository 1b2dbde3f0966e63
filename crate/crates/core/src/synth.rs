//! Seeded synthetic corpora sampled from a known lexicon, optionally
//! passed through the phoneme-to-phone channel.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::Transducer;
use crate::corpus::{Alphabet, Sym, TrueSegmentation, Utterance};
use crate::error::{Error, Result};
use crate::lexicon::{Lexicon, WordId, WordKind};

/// Number of words per utterance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LengthDistribution {
    /// Geometric on 1, 2, ... with the given mean.
    Geometric { mean: f64 },
    Fixed(usize),
}

impl Default for LengthDistribution {
    fn default() -> Self {
        LengthDistribution::Geometric { mean: 6.0 }
    }
}

impl LengthDistribution {
    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        match *self {
            LengthDistribution::Fixed(n) => n,
            LengthDistribution::Geometric { mean } => {
                let p = 1.0 / mean.max(1.0);
                let mut k = 1;
                while rng.gen::<f64>() >= p {
                    k += 1;
                }
                k
            }
        }
    }
}

/// Utterances with their true segmentation and the words drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub utterances: Vec<Utterance>,
    pub gold: Vec<TrueSegmentation>,
    pub words: Vec<Vec<WordId>>,
}

/// Draws utterances of independent words from the lexicon's distribution.
pub fn generate(lex: &Lexicon, utterance_count: usize, length: LengthDistribution, seed: u64) -> Result<SynthCorpus> {
    let weights: Vec<f64> = lex.words().iter().map(|w| w.count).collect();
    let dist = WeightedIndex::new(&weights).map_err(|_| Error::ZeroCounts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SynthCorpus {
        utterances: Vec::with_capacity(utterance_count),
        gold: Vec::with_capacity(utterance_count),
        words: Vec::with_capacity(utterance_count),
    };
    for _ in 0..utterance_count {
        let n = length.sample(&mut rng).max(1);
        let words: Vec<WordId> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let terminals: Vec<Sym> = words.iter().flat_map(|&w| lex.words()[w].surface.iter().copied()).collect();
        let gold = TrueSegmentation::from_lengths(words.iter().map(|&w| lex.words()[w].surface.len()))?;
        out.utterances.push(Utterance::new(terminals));
        out.gold.push(gold);
        out.words.push(words);
    }
    Ok(out)
}

/// Passes every utterance through the transducer. Word regions follow the
/// read head; words whose phones were all deleted lose their region and
/// utterances left empty are dropped.
pub fn corrupt(corpus: &SynthCorpus, transducer: &Transducer, seed: u64) -> Result<SynthCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SynthCorpus {
        utterances: Vec::new(),
        gold: Vec::new(),
        words: Vec::new(),
    };
    for ((u, g), words) in corpus.utterances.iter().zip(&corpus.gold).zip(&corpus.words) {
        let pi: Vec<usize> = u.terminals.iter().map(|&s| s as usize).collect();
        if let Some(&bad) = pi.iter().find(|&&s| s >= transducer.phones()) {
            return Err(Error::InvalidParameter(format!("symbol {bad} is not a phone of the channel")));
        }
        let (phones, offsets) = transducer.sample(&pi, &mut rng);
        if phones.is_empty() {
            continue;
        }
        let mut kept = Vec::new();
        let mut lengths = Vec::new();
        for ((a, b), &w) in g.regions().zip(words) {
            let len = offsets[b] - offsets[a];
            if len > 0 {
                kept.push(w);
                lengths.push(len);
            }
        }
        out.utterances.push(Utterance {
            terminals: phones.into_iter().map(|s| s as Sym).collect(),
            source_line: u.source_line,
        });
        out.gold.push(TrueSegmentation::from_lengths(lengths)?);
        out.words.push(kept);
    }
    Ok(out)
}

/// `count` distinct random words over the first `alphabet_size` symbols,
/// with lengths in `min_len..=max_len`.
pub fn random_vocabulary(alphabet_size: usize, count: usize, min_len: usize, max_len: usize, seed: u64) -> Vec<Vec<Sym>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words: Vec<Vec<Sym>> = Vec::with_capacity(count);
    while words.len() < count {
        let len = rng.gen_range(min_len..=max_len);
        let w: Vec<Sym> = (0..len).map(|_| rng.gen_range(0..alphabet_size) as Sym).collect();
        if !words.contains(&w) {
            words.push(w);
        }
    }
    words.shuffle(&mut rng);
    words
}

/// A lexicon whose only used words are `words`, each represented by its
/// terminals, with probabilities proportional to `weights`.
pub fn vocabulary_lexicon(alphabet: Alphabet, words: &[Vec<Sym>], weights: &[f64]) -> Result<Lexicon> {
    let n = alphabet.len();
    let mut lex = Lexicon::with_terminal_counts(alphabet, &vec![1.0; n])?;
    let mut counts = vec![0.0; n];
    for (w, &c) in words.iter().zip(weights) {
        match lex.lookup(w) {
            Some(id) => counts[id] += c,
            None => {
                let rep = w.iter().map(|&s| s as WordId).collect();
                lex.add_word(w.clone(), rep, WordKind::Concat, c)?;
                counts.push(c);
            }
        }
    }
    lex.renormalize(&counts)?;
    Ok(lex)
}
