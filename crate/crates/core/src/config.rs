//! `key = value` configuration files.
//!
//! Keys are routed to the training configuration, then to the channel
//! parameters, then to the run settings below. Anything else is an error.

use std::path::Path;

use crate::corpus::Mode;
use crate::error::{Error, Result};
use crate::moves::TrainConfig;
use crate::phonology::ChannelParams;

/// Everything a config file can set.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub train: TrainConfig,
    pub channel: ChannelParams,
    pub mode: Option<Mode>,
    pub case_fold: bool,
    pub sentence_split: bool,
    /// Noisy matching in phoneme mode.
    pub noisy: bool,
    pub threads: Option<usize>,
    pub seed: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            train: TrainConfig::default(),
            channel: ChannelParams::default(),
            mode: None,
            case_fold: true,
            sentence_split: true,
            noisy: true,
            threads: None,
            seed: 0,
        }
    }
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        if self.train.set(key, value)? || self.channel.set(key, value)? {
            return Ok(true);
        }
        let bad = || Error::InvalidParameter(format!("{key}: '{value}' is not valid"));
        let flag = || value.parse::<bool>().map_err(|_| bad());
        match key {
            "mode" => self.mode = Some(value.parse()?),
            "case_fold" => self.case_fold = flag()?,
            "sentence_split" => self.sentence_split = flag()?,
            "noisy" => self.noisy = flag()?,
            "threads" => self.threads = Some(value.parse().map_err(|_| bad())?),
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Applies every line of a config file on top of the current values.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| Error::Config {
                line,
                reason: format!("expected key = value, found '{body}'"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match self.set(key, value) {
                Ok(true) => {}
                Ok(false) => {
                    return Err(Error::Config {
                        line,
                        reason: format!("unknown key '{key}'"),
                    })
                }
                Err(e) => {
                    return Err(Error::Config {
                        line,
                        reason: e.to_string(),
                    })
                }
            }
        }
        self.channel.validate()
    }

    pub fn load(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multigram::CountMode;

    #[test]
    fn keys_reach_every_section() {
        let mut s = Settings::default();
        s.apply(
            "# comment\n\
             iters = 4\n\
             count_mode = viterbi  # trailing\n\
             c_I = 0.1\n\
             mu.voicing = 0.5\n\
             mode = phoneme\n\
             noisy = false\n\
             seed = 9\n\
             \n",
        )
        .unwrap();
        assert_eq!(s.train.max_outer, 4);
        assert_eq!(s.train.count_mode, CountMode::Viterbi);
        assert_eq!(s.channel.c_insert, 0.1);
        assert_eq!(s.mode, Some(Mode::Phoneme));
        assert!(!s.noisy);
        assert_eq!(s.seed, 9);
    }

    #[test]
    fn unknown_key_names_its_line() {
        let err = Settings::default().apply("iters = 2\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }), "{err}");
    }

    #[test]
    fn bad_values_and_lines_are_rejected() {
        assert!(matches!(Settings::default().apply("iters = many"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(Settings::default().apply("just words"), Err(Error::Config { line: 1, .. })));
        assert!(Settings::default().apply("c_I = 1.0").is_err());
    }
}
