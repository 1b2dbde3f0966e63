//! The `lexmdl` command line.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::channel::{NoisyMatcher, Transducer};
use crate::config::Settings;
use crate::corpus::{self, Alphabet, Mode, TextConfig, TrueSegmentation, Utterance};
use crate::error::{Error, Result};
use crate::eval::{compression_report, segmentation_report};
use crate::lexicon::Lexicon;
use crate::moves::Trainer;
use crate::multigram::{parse_all, Matching};
use crate::phonology::{Inventory, Phonology};
use crate::synth::{self, LengthDistribution};

#[derive(Debug, Parser)]
#[command(name = "lexmdl", version, about = "Learn hierarchical lexicons by minimum description length")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Config file of `key = value` lines; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CorpusArgs {
    #[arg(long, value_parser = ["text", "phoneme"])]
    mode: Option<String>,
    #[arg(long)]
    no_case_fold: bool,
    #[arg(long)]
    no_sentence_split: bool,
    /// Fixed text alphabet; other characters are rejected.
    #[arg(long)]
    alphabet: Option<PathBuf>,
    /// Exact matching in phoneme mode (no channel).
    #[arg(long)]
    exact: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn a lexicon from a corpus.
    Train {
        corpus: PathBuf,
        #[command(flatten)]
        input: CorpusArgs,
        /// Maximum outer iterations.
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long, default_value = "lexicon.tsv")]
        out: PathBuf,
        #[arg(long, default_value = "dl_trace.tsv")]
        log: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Record predicted against settled description-length changes.
        #[arg(long)]
        audit: bool,
    },
    /// Print the Viterbi segmentation of every utterance.
    Segment {
        lexicon: PathBuf,
        corpus: PathBuf,
        #[command(flatten)]
        input: CorpusArgs,
        /// Print full bracketings instead of top-level words.
        #[arg(long)]
        deep: bool,
    },
    /// Compression report, plus recall and crossing against a gold segmentation.
    Eval {
        lexicon: PathBuf,
        corpus: PathBuf,
        #[command(flatten)]
        input: CorpusArgs,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        held_out: bool,
    },
    /// Ranked table of a lexicon.
    Inspect { lexicon: PathBuf },
    /// Sample a corpus from a lexicon.
    Synth {
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Pass phoneme utterances through the channel.
        #[arg(long)]
        corrupt: bool,
        /// Also write the true segmentation with `|` marks.
        #[arg(long)]
        gold_out: Option<PathBuf>,
    },
    /// Score a phone string against a phoneme string.
    ChannelScore {
        #[arg(long)]
        pi: String,
        #[arg(long)]
        phi: String,
    },
    /// The phone inventory.
    Phones {
        /// Print the full feature chart.
        #[arg(long)]
        dump: bool,
    },
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 on usage errors, 2 on data errors.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().ansi().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let mut settings = Settings::default();
    if let Some(path) = &cli.config {
        settings.load(path)?;
    }
    if let Some(n) = cli.threads.or(settings.threads) {
        // Fails only if a pool already exists, e.g. across in-process runs.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Train {
            corpus,
            input,
            iters,
            out: lex_path,
            log,
            seed,
            audit,
        } => {
            input.apply(&mut settings);
            if let Some(n) = iters {
                settings.train.max_outer = n;
            }
            if let Some(s) = seed {
                settings.seed = s;
            }
            settings.train.audit |= audit;
            train(&settings, &corpus, input.alphabet.as_deref(), &lex_path, &log, out)
        }
        Command::Segment {
            lexicon,
            corpus,
            input,
            deep,
        } => {
            input.apply(&mut settings);
            let lex = Lexicon::load(&lexicon)?;
            let utts = load_for(&lex, &corpus, &settings)?;
            let matcher = matcher_for(&lex, &settings)?;
            let parses = parse_all(&lex, &utts, matching(&matcher))?;
            for (u, p) in utts.iter().zip(&parses) {
                let line = if deep {
                    p.render_deep(&lex, &u.terminals)
                } else {
                    p.render(&lex, &u.terminals)
                };
                writeln!(out, "{line}").map_err(stdout_err)?;
            }
            Ok(())
        }
        Command::Eval {
            lexicon,
            corpus,
            input,
            gold,
            held_out,
        } => {
            input.apply(&mut settings);
            let lex = Lexicon::load(&lexicon)?;
            let utts = load_for(&lex, &corpus, &settings)?;
            let matcher = matcher_for(&lex, &settings)?;
            let report = compression_report(&lex, &utts, matching(&matcher), held_out)?;
            write!(out, "{}", report.to_tsv()).map_err(stdout_err)?;
            if let Some(g) = gold {
                let (gold_utts, gold_segs) = load_gold(&lex, &g)?;
                let parses = parse_all(&lex, &gold_utts, matching(&matcher))?;
                let seg = segmentation_report(&parses, &gold_segs)?;
                write!(out, "{}", seg.to_tsv()).map_err(stdout_err)?;
            }
            Ok(())
        }
        Command::Inspect { lexicon } => {
            let lex = Lexicon::load(&lexicon)?;
            write!(out, "{}", lex.ranked_table()).map_err(stdout_err)
        }
        Command::Synth {
            lexicon,
            n,
            seed,
            corrupt,
            gold_out,
        } => {
            let lex = Lexicon::load(&lexicon)?;
            let seed = seed.unwrap_or(settings.seed);
            let mut sample = synth::generate(&lex, n, LengthDistribution::default(), seed)?;
            if corrupt {
                if lex.alphabet().mode() != Mode::Phoneme {
                    return Err(Error::InvalidParameter("--corrupt needs a phoneme lexicon".into()));
                }
                let transducer = Transducer::new(&phonology_for(lex.alphabet(), &settings)?);
                sample = synth::corrupt(&sample, &transducer, seed.wrapping_add(1))?;
            }
            let alphabet = lex.alphabet();
            for u in &sample.utterances {
                writeln!(out, "{}", alphabet.render(&u.terminals)).map_err(stdout_err)?;
            }
            if let Some(path) = gold_out {
                let mut text = String::new();
                for (u, g) in sample.utterances.iter().zip(&sample.gold) {
                    text.push_str(&corpus::render_segmented(alphabet, &u.terminals, g));
                    text.push('\n');
                }
                std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            }
            Ok(())
        }
        Command::ChannelScore { pi, phi } => {
            let phonology = Phonology::new(Inventory::standard(), settings.channel.clone())?;
            let inventory = phonology.inventory();
            let parse = |s: &str| {
                s.split_whitespace()
                    .map(|t| {
                        inventory.lookup(t).ok_or_else(|| Error::UnknownPhoneme {
                            token: t.to_string(),
                            line: 1,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            };
            let (pi, phi) = (parse(&pi)?, parse(&phi)?);
            let t = Transducer::new(&phonology);
            let p = t.phi_given_pi(&pi, &phi);
            writeln!(out, "log2_prob\t{:.6}", p.log2()).map_err(stdout_err)?;
            if let Some((_, steps)) = t.best_alignment(&pi, &phi) {
                writeln!(out, "action\tphoneme\tphone").map_err(stdout_err)?;
                let name = |id: usize| inventory.phones()[id].mnemonic;
                for s in steps {
                    let phone = s.phone.map(name).unwrap_or("-");
                    writeln!(out, "{}\t{}\t{}", s.action.name(), name(s.phoneme), phone).map_err(stdout_err)?;
                }
            }
            Ok(())
        }
        Command::Phones { dump } => {
            let inventory = Inventory::standard();
            if dump {
                write!(out, "{}", inventory.dump()).map_err(stdout_err)
            } else {
                let names: Vec<&str> = inventory.phones().iter().map(|p| p.mnemonic).collect();
                writeln!(out, "{}", names.join(" ")).map_err(stdout_err)
            }
        }
    }
}

impl CorpusArgs {
    fn apply(&self, settings: &mut Settings) {
        if let Some(m) = &self.mode {
            settings.mode = Some(m.parse().expect("validated by clap"));
        }
        settings.case_fold &= !self.no_case_fold;
        settings.sentence_split &= !self.no_sentence_split;
        settings.noisy &= !self.exact;
    }
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn train(settings: &Settings, corpus_path: &Path, alphabet: Option<&Path>, lex_path: &Path, log_path: &Path, out: &mut dyn Write) -> Result<()> {
    let mut config = settings.train.clone();
    let (alphabet, utts) = match settings.mode.unwrap_or(Mode::Text) {
        Mode::Text => {
            let fixed = alphabet.map(corpus::load_alphabet).transpose()?;
            let text = TextConfig {
                case_fold: settings.case_fold,
                sentence_split: settings.sentence_split,
                alphabet: fixed,
            };
            corpus::load_text(corpus_path, &text)?
        }
        Mode::Phoneme => {
            let c = corpus::load_phonemes(corpus_path)?;
            if settings.noisy {
                config.channel = Some(settings.channel.clone());
            }
            (c.alphabet, c.utterances)
        }
    };
    info!("{} utterances, {} terminals", utts.len(), utts.iter().map(|u| u.len()).sum::<usize>());
    let lexicon = Lexicon::from_corpus(alphabet, &utts)?;
    let max_outer = config.max_outer;
    let mut trainer = Trainer::new(config, lexicon, utts)?;
    write_trace(&trainer, log_path)?;
    while !trainer.converged() && trainer.trace().len() <= max_outer {
        trainer.step()?;
        write_trace(&trainer, log_path)?;
    }
    if !trainer.audit().is_empty() {
        writeln!(out, "iteration\tmove\tsurface\tpredicted\tactual").map_err(stdout_err)?;
        for a in trainer.audit() {
            writeln!(out, "{}\t{}\t{}\t{:.3}\t{:.3}", a.iteration, a.kind, a.surface, a.predicted, a.actual)
                .map_err(stdout_err)?;
        }
    }
    let last = trainer.trace().last().cloned().expect("trace starts with the initial row");
    let lex = trainer.into_lexicon()?;
    lex.save(lex_path)?;
    writeln!(
        out,
        "{} words, {:.1} bits after {} iterations",
        lex.len(),
        last.total_bits,
        last.iteration
    )
    .map_err(stdout_err)?;
    Ok(())
}

fn write_trace(trainer: &Trainer, path: &Path) -> Result<()> {
    let mut text = String::from(crate::moves::TraceRow::HEADER);
    text.push('\n');
    for row in trainer.trace() {
        text.push_str(&row.to_tsv());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads a corpus in the lexicon's alphabet.
fn load_for(lex: &Lexicon, path: &Path, settings: &Settings) -> Result<Vec<Utterance>> {
    match lex.alphabet().mode() {
        Mode::Text => {
            let text = TextConfig {
                case_fold: settings.case_fold,
                sentence_split: settings.sentence_split,
                alphabet: Some(lex.alphabet().clone()),
            };
            Ok(corpus::load_text(path, &text)?.1)
        }
        Mode::Phoneme => {
            let c = corpus::load_phonemes(path)?;
            remap(&c.alphabet, lex.alphabet(), c.utterances)
        }
    }
}

fn load_gold(lex: &Lexicon, path: &Path) -> Result<(Vec<Utterance>, Vec<TrueSegmentation>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match lex.alphabet().mode() {
        Mode::Text => corpus::parse_gold_text(&text, lex.alphabet()),
        Mode::Phoneme => {
            let c = corpus::parse_phonemes(&text, &Inventory::standard())?;
            let mut segs = Vec::with_capacity(c.gold.len());
            for (u, g) in c.utterances.iter().zip(c.gold) {
                segs.push(match g {
                    Some(g) => g,
                    None => TrueSegmentation::new(vec![0, u.len()])?,
                });
            }
            Ok((remap(&c.alphabet, lex.alphabet(), c.utterances)?, segs))
        }
    }
}

fn remap(from: &Alphabet, to: &Alphabet, utterances: Vec<Utterance>) -> Result<Vec<Utterance>> {
    utterances
        .into_iter()
        .map(|mut u| {
            for s in u.terminals.iter_mut() {
                let glyph = from.glyph(*s);
                *s = to.lookup(glyph).ok_or_else(|| Error::UnknownPhoneme {
                    token: glyph.to_string(),
                    line: u.source_line,
                })?;
            }
            Ok(u)
        })
        .collect()
}

fn phonology_for(alphabet: &Alphabet, settings: &Settings) -> Result<Phonology> {
    let glyphs: Vec<&str> = alphabet.glyphs().iter().map(|s| s.as_str()).collect();
    Phonology::new(Inventory::subset(&glyphs)?, settings.channel.clone())
}

fn matcher_for(lex: &Lexicon, settings: &Settings) -> Result<Option<NoisyMatcher>> {
    if lex.alphabet().mode() == Mode::Phoneme && settings.noisy {
        let phonology = phonology_for(lex.alphabet(), settings)?;
        Ok(Some(NoisyMatcher::new(&phonology, settings.train.prune_budget)?))
    } else {
        Ok(None)
    }
}

fn matching(matcher: &Option<NoisyMatcher>) -> Matching<'_> {
    match matcher {
        Some(m) => Matching::Noisy(m),
        None => Matching::Exact,
    }
}
