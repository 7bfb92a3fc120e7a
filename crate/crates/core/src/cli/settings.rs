//! Flat `key = value` config files. Keys match the long flag names with
//! dashes or underscores; `#` starts a comment line. Flags given on the
//! command line win over file values.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const KNOWN_KEYS: &[&str] = &[
    // gen
    "nodes_per_block",
    "blocks",
    "p_in",
    "p_out",
    "feature_dim",
    "signal",
    "feature_noise",
    // train
    "mode",
    "layers",
    "width",
    "heads",
    "leaky_slope",
    "epochs",
    "batch_size",
    "conv_fanout",
    "prop_fanout",
    "prop_steps",
    "lr",
    "weight_decay",
    "lambda_rec",
    "lambda_var",
    "lambda_cov",
    "prefetch",
    "directed",
    // probe
    "probe_epochs",
    "probe_lr",
    "probe_weight_decay",
    // bench
    "depths",
    "batches",
    // shared
    "seed",
];

#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: HashMap<String, String>,
    source: String,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl Settings {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut values = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: source.into(),
                line: i + 1,
                message: "expected `key = value`".into(),
            })?;
            let key = normalize(k);
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Parse {
                    path: source.into(),
                    line: i + 1,
                    message: format!("unknown key {:?}", key),
                });
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Settings {
            values,
            source: source.to_string(),
        })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Settings::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Settings::parse(&text, &p.display().to_string())
            }
        }
    }

    /// The flag if given, else the file value, else `default`.
    pub fn pick<T: FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| {
                Error::Config(format!("{}: invalid value {:?} for {}", self.source, raw, key))
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let s = Settings::parse("# comment\nepochs = 7\nbatch-size=32\n", "cfg").unwrap();
        assert_eq!(s.pick("epochs", None, 1usize).unwrap(), 7);
        assert_eq!(s.pick("epochs", Some(9usize), 1).unwrap(), 9);
        assert_eq!(s.pick("batch_size", None, 1usize).unwrap(), 32);
        assert_eq!(s.pick("seed", None, 3u64).unwrap(), 3);
    }

    #[test]
    fn bad_files_are_rejected() {
        assert!(Settings::parse("nonsense\n", "cfg").is_err());
        assert!(Settings::parse("colour = red\n", "cfg").is_err());
        let s = Settings::parse("epochs = many\n", "cfg").unwrap();
        assert!(matches!(s.pick("epochs", None, 1usize), Err(Error::Config(_))));
    }
}
