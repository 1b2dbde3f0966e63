//! Learning hierarchical lexicons from unsegmented symbol sequences by
//! minimizing the combined description length of the input and the
//! dictionary under a multigram model.
//!
//! The pipeline: [`corpus`] turns text or phoneme transcriptions into
//! terminal sequences; [`lexicon`] holds the dictionary and its code
//! lengths; [`multigram`] runs forward–backward and Viterbi over word
//! lattices; [`moves`] adds and deletes words; [`phonology`] and
//! [`channel`] model how phonemes surface as phones; [`eval`] reports
//! compression and segmentation quality; [`synth`] generates test corpora.

pub mod channel;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod lexicon;
pub mod moves;
pub mod multigram;
pub mod phonology;
pub mod synth;

pub use corpus::{Alphabet, Mode, Sym, TrueSegmentation, Utterance};
pub use error::{Error, Result};
pub use lexicon::{DescriptionLength, Lexicon, Word, WordId, WordKind};
pub use moves::{TrainConfig, Trainer};
pub use multigram::{Chart, CountMode, Segmentation};
pub use phonology::{ChannelParams, Inventory, Phonology};
