//! `key = value` configuration files. `#` starts a comment; blank lines are
//! ignored; later keys override earlier ones.

use bvren::{Q, Scale};
use std::collections::BTreeMap;
use std::str::FromStr;

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, String> {
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(format!("line {}: empty key", n + 1));
            }
            values.insert(k.to_string(), v.trim().to_string());
        }
        Ok(Config { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, String> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| format!("bad value for {key}: {v:?}")),
        }
    }

    pub fn rational(&self, key: &str, default: Q) -> Result<Q, String> {
        self.get(key, default)
    }

    pub fn scale(&self, key: &str, default: Scale) -> Result<Scale, String> {
        match self.raw(key) {
            None => Ok(default),
            Some("inf") | Some("infinity") => Ok(Scale::Infinite),
            Some(v) => v.parse::<Q>().map(Scale::Finite).map_err(|_| format!("bad scale for {key}: {v:?}")),
        }
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>, String> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.split(',').map(|x| x.trim().parse().map_err(|_| format!("bad entry in {key}: {x:?}"))).collect(),
        }
    }

    /// Comma-separated `i:k` pairs.
    pub fn labels(&self, key: &str, default: Vec<(u32, u32)>) -> Result<Vec<(u32, u32)>, String> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.split(',').map(|x| parse_pair(x, ':').ok_or_else(|| format!("bad label in {key}: {x:?}"))).collect(),
        }
    }

    /// `i:k:coefficient` triples, comma-separated.
    pub fn couplings<T: FromStr>(&self, key: &str, default: Vec<(u32, u32, T)>) -> Result<Vec<(u32, u32, T)>, String> {
        let Some(v) = self.raw(key) else { return Ok(default) };
        v.split(',')
            .map(|x| parse_coupling(x).ok_or_else(|| format!("bad coupling in {key}: {x:?}")))
            .collect()
    }
}

fn parse_coupling<T: FromStr>(s: &str) -> Option<(u32, u32, T)> {
    let p: Vec<&str> = s.trim().split(':').collect();
    match p.as_slice() {
        [i, k, c] => Some((i.trim().parse().ok()?, k.trim().parse().ok()?, c.trim().parse().ok()?)),
        _ => None,
    }
}

pub fn parse_pair(s: &str, sep: char) -> Option<(u32, u32)> {
    let (a, b) = s.trim().split_once(sep)?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_overrides_and_lists() {
        let c = Config::parse("# header\nn = 3\nt = 1/2  # trailing\nn = 4\nmenu = 0:3, 0:4\ng = 1:2:0.5\n\n").unwrap();
        assert_eq!(c.get("n", 0u32).unwrap(), 4);
        assert_eq!(c.rational("t", Q::new(1, 1)).unwrap(), Q::new(1, 2));
        assert_eq!(c.labels("menu", vec![]).unwrap(), vec![(0, 3), (0, 4)]);
        assert_eq!(c.couplings("g", vec![]).unwrap(), vec![(1, 2, 0.5)]);
        assert_eq!(c.get("missing", 7u32).unwrap(), 7);
        assert!(Config::parse("no equals sign").is_err());
        assert!(c.get::<u32>("t", 0).is_err());
    }

    #[test]
    fn scales() {
        let c = Config::parse("a = inf\nb = 3/2").unwrap();
        assert_eq!(c.scale("a", Scale::finite(1, 1)).unwrap(), Scale::Infinite);
        assert_eq!(c.scale("b", Scale::Infinite).unwrap(), Scale::finite(3, 2));
    }
}
