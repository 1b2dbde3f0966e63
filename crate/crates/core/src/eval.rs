//! Compression and segmentation-quality metrics.

use std::collections::HashSet;

use crate::corpus::{TrueSegmentation, Utterance};
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::multigram::{viterbi_bits, Matching, Segmentation};

#[derive(Debug, Clone, PartialEq)]
pub struct CompressionReport {
    pub symbols: usize,
    pub total_bits: f64,
    pub input_bits: f64,
    pub dictionary_bits: f64,
    pub bits_per_char: f64,
    pub entropy_rate_bits_per_char: f64,
    pub parameter_fraction: f64,
    pub held_out: bool,
}

impl CompressionReport {
    pub const HEADER: &'static str =
        "symbols\ttotal_bits\tinput_bits\tdictionary_bits\tbits_per_char\tentropy_rate\tparameter_fraction\theld_out";

    pub fn to_tsv(&self) -> String {
        format!(
            "{}\n{}\t{:.3}\t{:.3}\t{:.3}\t{:.4}\t{:.4}\t{:.4}\t{}\n",
            Self::HEADER,
            self.symbols,
            self.total_bits,
            self.input_bits,
            self.dictionary_bits,
            self.bits_per_char,
            self.entropy_rate_bits_per_char,
            self.parameter_fraction,
            self.held_out
        )
    }
}

/// Encodes `utterances` with a fixed lexicon. With `held_out` the corpus
/// is unseen text: the lexicon is only read, which the report checks.
pub fn compression_report(lex: &Lexicon, utterances: &[Utterance], matching: Matching, held_out: bool) -> Result<CompressionReport> {
    let checksum = lex.checksum();
    let bits = viterbi_bits(lex, utterances, matching)?;
    let dl = lex.description_length(&bits);
    debug_assert_eq!(checksum, lex.checksum());
    let symbols: usize = utterances.iter().map(|u| u.len()).sum();
    let per = |b: f64| if symbols > 0 { b / symbols as f64 } else { 0.0 };
    Ok(CompressionReport {
        symbols,
        total_bits: dl.total_bits,
        input_bits: dl.input_bits,
        dictionary_bits: dl.dictionary_bits,
        bits_per_char: per(dl.total_bits),
        entropy_rate_bits_per_char: per(dl.input_bits),
        parameter_fraction: if dl.total_bits > 0.0 { dl.dictionary_bits / dl.total_bits } else { 0.0 },
        held_out,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationReport {
    pub region_count: usize,
    pub recalled: usize,
    pub crossed: usize,
    pub recall: f64,
    pub crossing: f64,
}

impl SegmentationReport {
    pub const HEADER: &'static str = "regions\trecalled\tcrossed\trecall\tcrossing";

    pub fn to_tsv(&self) -> String {
        format!(
            "{}\n{}\t{}\t{}\t{:.4}\t{:.4}\n",
            Self::HEADER,
            self.region_count,
            self.recalled,
            self.crossed,
            self.recall,
            self.crossing
        )
    }
}

/// Whether span `(a, b)` partially overlaps region `(x, y)`.
pub fn crosses((a, b): (usize, usize), (x, y): (usize, usize)) -> bool {
    (a < x && x < b && b < y) || (x < a && a < y && y < b)
}

/// Recall: gold regions spanned exactly by a word at some level. Crossing:
/// gold regions partially overlapped by some word.
pub fn segmentation_report(parses: &[Segmentation], gold: &[TrueSegmentation]) -> Result<SegmentationReport> {
    if parses.len() != gold.len() {
        return Err(Error::LengthMismatch {
            parse: parses.len(),
            gold: gold.len(),
        });
    }
    let (mut regions, mut recalled, mut crossed) = (0, 0, 0);
    for (p, g) in parses.iter().zip(gold) {
        if p.len() != g.len() {
            return Err(Error::LengthMismatch {
                parse: p.len(),
                gold: g.len(),
            });
        }
        let spans: HashSet<(usize, usize)> = p.spans().into_iter().filter(|(a, b)| a < b).collect();
        for r in g.regions() {
            regions += 1;
            if spans.contains(&r) {
                recalled += 1;
            }
            if spans.iter().any(|&s| crosses(s, r)) {
                crossed += 1;
            }
        }
    }
    let frac = |n: usize| if regions > 0 { n as f64 / regions as f64 } else { 0.0 };
    Ok(SegmentationReport {
        region_count: regions,
        recalled,
        crossed,
        recall: frac(recalled),
        crossing: frac(crossed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Alphabet;
    use crate::lexicon::tests::thecat_lexicon;
    use crate::lexicon::WordKind;
    use crate::multigram::{viterbi_parse, SurfaceTrie};

    fn abcd() -> Lexicon {
        let a = Alphabet::from_chars("abcd".chars());
        let mut lex = Lexicon::with_terminal_counts(a, &[1.0; 4]).unwrap();
        let ab = lex.add_word(vec![0, 1], vec![0, 1], WordKind::Concat, 1.0).unwrap();
        let cd = lex.add_word(vec![2, 3], vec![2, 3], WordKind::Concat, 1.0).unwrap();
        lex.add_word(vec![1, 2], vec![1, 2], WordKind::Concat, 1.0).unwrap();
        lex.add_word(vec![0, 1, 2, 3], vec![ab, cd], WordKind::Concat, 10.0).unwrap();
        lex
    }

    fn gold() -> TrueSegmentation {
        TrueSegmentation::new(vec![0, 2, 4]).unwrap()
    }

    #[test]
    fn thecat_compression() {
        let (lex, input) = thecat_lexicon();
        let r = compression_report(&lex, &[Utterance::new(input)], Matching::Exact, false).unwrap();
        assert_eq!(r.symbols, 14);
        assert!((r.input_bits - 16.36).abs() < 0.02);
        assert!((r.entropy_rate_bits_per_char - 16.36 / 14.0).abs() < 0.01);
        assert!((r.bits_per_char - r.total_bits / 14.0).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&r.parameter_fraction));
    }

    #[test]
    fn uniform_binary_is_one_bit_per_char() {
        let a = Alphabet::from_chars("ab".chars());
        let lex = Lexicon::with_terminal_counts(a, &[1.0, 1.0]).unwrap();
        let u = Utterance::new(vec![0, 1, 1, 0, 0, 0, 1, 1]);
        let r = compression_report(&lex, std::slice::from_ref(&u), Matching::Exact, true).unwrap();
        assert_eq!(r.entropy_rate_bits_per_char, 1.0);
        let twice = compression_report(&lex, &[u.clone(), u], Matching::Exact, true).unwrap();
        assert_eq!(twice.input_bits, 2.0 * r.input_bits);
    }

    #[test]
    fn exact_top_level_parse() {
        let lex = abcd();
        let mut flat = lex.clone();
        let big = flat.lookup(&[0, 1, 2, 3]).unwrap();
        flat.remove_word(big).unwrap();
        let seg = viterbi_parse(&flat, &SurfaceTrie::new(&flat), &[0, 1, 2, 3], Matching::Exact).unwrap();
        let r = segmentation_report(&[seg], &[gold()]).unwrap();
        assert_eq!((r.recall, r.crossing), (1.0, 0.0));
    }

    #[test]
    fn lower_levels_count_for_recall() {
        let lex = abcd();
        let seg = viterbi_parse(&lex, &SurfaceTrie::new(&lex), &[0, 1, 2, 3], Matching::Exact).unwrap();
        assert_eq!(seg.roots.len(), 1);
        let r = segmentation_report(&[seg], &[gold()]).unwrap();
        assert_eq!((r.recall, r.crossing), (1.0, 0.0));
    }

    #[test]
    fn a_word_across_the_boundary_crosses_both_regions() {
        let mut lex = abcd();
        let big = lex.lookup(&[0, 1, 2, 3]).unwrap();
        lex.remove_word(big).unwrap();
        let mut counts = lex.counts();
        for w in [[0, 1], [2, 3]] {
            counts[lex.lookup(&w).unwrap()] = 0.0;
        }
        lex.renormalize(&counts).unwrap();
        let seg = viterbi_parse(&lex, &SurfaceTrie::new(&lex), &[0, 1, 2, 3], Matching::Exact).unwrap();
        assert_eq!(seg.boundaries(), vec![0, 1, 3, 4]);
        let r = segmentation_report(&[seg], &[gold()]).unwrap();
        assert_eq!(r.crossing, 1.0);
        assert_eq!(r.recall, 0.0);
    }

    #[test]
    fn terminal_only_parse_recalls_single_symbol_regions() {
        let a = Alphabet::from_chars("abcd".chars());
        let lex = Lexicon::with_terminal_counts(a, &[1.0; 4]).unwrap();
        let seg = viterbi_parse(&lex, &SurfaceTrie::new(&lex), &[0, 1, 2, 3], Matching::Exact).unwrap();
        let g = TrueSegmentation::new(vec![0, 1, 3, 4]).unwrap();
        let r = segmentation_report(&[seg], &[g]).unwrap();
        assert!((r.recall - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let lex = abcd();
        let seg = viterbi_parse(&lex, &SurfaceTrie::new(&lex), &[0, 1], Matching::Exact).unwrap();
        assert!(matches!(
            segmentation_report(&[seg], &[gold()]),
            Err(Error::LengthMismatch { parse: 2, gold: 4 })
        ));
    }

    #[test]
    fn crossing_definition() {
        assert!(crosses((1, 3), (0, 2)));
        assert!(crosses((1, 3), (2, 4)));
        assert!(!crosses((0, 4), (1, 2)));
        assert!(!crosses((1, 2), (0, 4)));
        assert!(!crosses((0, 2), (2, 4)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn utterance_order_does_not_matter(seed in 0u64..1000, n in 2usize..6) {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let lex = abcd();
                let trie = SurfaceTrie::new(&lex);
                let mut items = Vec::new();
                for _ in 0..n {
                    let len = rng.gen_range(1..8);
                    let seq: Vec<u16> = (0..len).map(|_| rng.gen_range(0..4)).collect();
                    let mut b = vec![0];
                    for i in 1..len {
                        if rng.gen_bool(0.4) { b.push(i); }
                    }
                    b.push(len);
                    let seg = viterbi_parse(&lex, &trie, &seq, Matching::Exact).unwrap();
                    items.push((seg, TrueSegmentation::new(b).unwrap()));
                }
                let (p, g): (Vec<_>, Vec<_>) = items.iter().cloned().unzip();
                let fwd = segmentation_report(&p, &g).unwrap();
                let (p, g): (Vec<_>, Vec<_>) = items.into_iter().rev().unzip();
                let rev = segmentation_report(&p, &g).unwrap();
                prop_assert_eq!(fwd, rev);
            }
        }
    }
}
