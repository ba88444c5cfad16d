//! `key=value` config files. Command-line flags win over file entries.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use pcfg_core::{PcfError, Result};

#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
}

impl Settings {
    /// Blank lines and `#` comments are skipped; keys use the long flag
    /// names (`steps`, `stop-score-grad`, ...).
    pub fn parse(text: &str, origin: &str) -> Result<Settings> {
        let mut file = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(PcfError::Parse {
                    path: origin.into(),
                    msg: format!("line {}: expected key=value", no + 1),
                });
            };
            file.insert(k.trim().replace('_', "-"), v.trim().to_string());
        }
        Ok(Settings { file })
    }

    pub fn load(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path).map_err(|e| PcfError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Settings::parse(&text, &path.display().to_string())
    }

    /// The flag value if given, else the file entry, else `None`.
    pub fn opt<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| PcfError::Argument(format!("config key `{key}`: {e}"))),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.opt(key, flag)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.opt(key, flag)?
            .ok_or_else(|| PcfError::Argument(format!("missing required option --{key}")))
    }

    /// Switches: the flag, or a truthy file entry.
    pub fn switch(&self, key: &str, flag: bool) -> Result<bool> {
        if flag {
            return Ok(true);
        }
        match self.file.get(key).map(String::as_str) {
            None | Some("false") | Some("0") => Ok(false),
            Some("true") | Some("1") => Ok(true),
            Some(other) => Err(PcfError::Argument(format!("config key `{key}`: `{other}` is not a boolean"))),
        }
    }
}

/// `x,y,z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triple(pub [f64; 3]);

impl FromStr for Triple {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{s}`: {e}")))
            .collect::<std::result::Result<_, _>>()?;
        match v.as_slice() {
            [x, y, z] => Ok(Triple([*x, *y, *z])),
            _ => Err(format!("`{s}`: expected three comma-separated numbers")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file_entries() {
        let s = Settings::parse("# run\nsteps = 50\nlr=0.001\nstop_score_grad=true\n", "t").unwrap();
        assert_eq!(s.get("steps", None, 1u64).unwrap(), 50);
        assert_eq!(s.get("steps", Some(7u64), 1).unwrap(), 7);
        assert_eq!(s.get("seed", None, 3u64).unwrap(), 3);
        assert_eq!(s.get::<f64>("lr", None, 0.0).unwrap(), 0.001);
        assert!(s.switch("stop-score-grad", false).unwrap());
        assert!(s.require::<u64>("missing", None).is_err());
        assert!(Settings::parse("steps\n", "t").is_err());
        assert!(s.get::<u64>("lr", None, 0).is_err());
    }

    #[test]
    fn triples() {
        assert_eq!("0.35,0,0.1".parse::<Triple>().unwrap(), Triple([0.35, 0.0, 0.1]));
        assert!("1,2".parse::<Triple>().is_err());
    }
}
