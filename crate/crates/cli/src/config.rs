//! Flat `key = value` configuration merged with command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug)]
enum Origin {
    File { line: usize },
    Flag,
}

/// Resolved settings for one command. Flags override file values.
#[derive(Clone, Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, (String, Option<Origin>)>,
    file: Option<String>,
}

/// Parse `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config(text: &str, allowed: &[&str], file: &str) -> Result<Vec<(String, String, usize)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("{file}:{}: expected key = value, got `{line}`", i + 1)))?;
        let key = k.trim().replace('-', "_");
        if !allowed.contains(&key.as_str()) {
            return Err(ConfigError(format!(
                "{file}:{}: unknown key `{key}` (accepted: {})",
                i + 1,
                allowed.join(", ")
            )));
        }
        if out.iter().any(|(seen, _, _)| *seen == key) {
            return Err(ConfigError(format!("{file}:{}: duplicate key `{key}`", i + 1)));
        }
        out.push((key, v.trim().to_string(), i + 1));
    }
    Ok(out)
}

impl Settings {
    pub fn load(path: Option<&Path>, allowed: &[&str], flags: Vec<(&str, Option<String>)>) -> Result<Self, ConfigError> {
        let mut s = Settings::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
            let name = p.display().to_string();
            for (k, v, line) in parse_config(&text, allowed, &name)? {
                s.values.insert(k, (v, Some(Origin::File { line })));
            }
            s.file = Some(name);
        }
        for (k, v) in flags {
            debug_assert!(allowed.contains(&k), "flag {k} missing from the key list");
            if let Some(v) = v {
                s.values.insert(k.to_string(), (v, Some(Origin::Flag)));
            }
        }
        Ok(s)
    }

    fn context(&self, key: &str) -> String {
        match self.values.get(key).and_then(|(_, o)| o.as_ref()) {
            Some(Origin::File { line }) => format!("{}:{line}: key `{key}`", self.file.as_deref().unwrap_or("config")),
            Some(Origin::Flag) => format!("flag --{}", key.replace('_', "-")),
            None => format!("key `{key}`"),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| ConfigError(format!("{}: cannot parse `{v}`: {e}", self.context(key)))),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let v = self.raw(key).ok_or_else(|| ConfigError(format!("missing required key `{key}`")))?;
        v.parse().map_err(|e| ConfigError(format!("{}: cannot parse `{v}`: {e}", self.context(key))))
    }

    /// Every resolved value, for the manifest.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.values.iter().map(|(k, (v, _))| (k.clone(), v.clone())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects() {
        let ok = parse_config("# c\ngroup = su2\n\nmax-len=8 # tail\n", &["group", "max_len"], "t").unwrap();
        assert_eq!(ok[1], ("max_len".to_string(), "8".to_string(), 4));
        let err = parse_config("group = su2\nbogus = 1\n", &["group"], "t").unwrap_err();
        assert!(err.0.starts_with("t:2: unknown key `bogus`"));
        assert!(parse_config("group su2\n", &["group"], "t").is_err());
        assert!(parse_config("group=a\ngroup=b\n", &["group"], "t").is_err());
    }

    #[test]
    fn flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.cfg");
        std::fs::write(&p, "seed = 3\nlevels = 2\n").unwrap();
        let s = Settings::load(Some(&p), &["seed", "levels"], vec![("seed", Some("9".into())), ("levels", None)]).unwrap();
        assert_eq!(s.get::<u64>("seed", 0).unwrap(), 9);
        assert_eq!(s.get::<usize>("levels", 0).unwrap(), 2);
        let bad = Settings::load(Some(&p), &["seed", "levels"], vec![("levels", Some("x".into()))]).unwrap();
        assert!(bad.get::<usize>("levels", 0).unwrap_err().0.contains("--levels"));
    }
}
