//! `key = value` configuration files with `#` comments and dotted keys.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let k = k.trim();
            if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
                return Err(Error::Config(format!("line {}: invalid key {k:?}", n + 1)));
            }
            if entries.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k}", n + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}"))))
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| Error::Config(format!("missing key {key}")))
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|p| p.trim().parse::<T>().map_err(|_| Error::Config(format!("{key}: cannot parse {p:?}"))))
                    .collect()
            })
            .transpose()
    }

    /// Canonical text: sorted `key=value` lines.
    pub fn canonical(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// 64-bit FNV-1a hash of the canonical text.
    pub fn hash(&self) -> u64 {
        self.canonical().bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_dotted_keys() {
        let c = Config::parse("# header\nseed = 7\nsweep.h = -1, 0.5 ,2 # trailing\n\n").unwrap();
        assert_eq!(c.require::<u64>("seed").unwrap(), 7);
        assert_eq!(c.get_list::<f64>("sweep.h").unwrap().unwrap(), vec![-1.0, 0.5, 2.0]);
        assert_eq!(c.get_or("missing", 3usize).unwrap(), 3);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(Config::parse("novalue"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("a b = 1"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("a = 1\na = 2"), Err(Error::Config(_))));
        let c = Config::parse("n = x").unwrap();
        assert!(matches!(c.require::<u64>("n"), Err(Error::Config(_))));
    }

    #[test]
    fn hash_ignores_order_and_formatting() {
        let a = Config::parse("x = 1\ny=2").unwrap();
        let b = Config::parse("# c\ny = 2\n  x=1  ").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), Config::parse("x = 1\ny = 3").unwrap().hash());
    }
}
