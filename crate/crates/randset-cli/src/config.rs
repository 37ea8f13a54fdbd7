//! Plain-text experiment configuration: `[section]` headers over
//! `key = value` lines, `#`/`;` comments. Values stay strings until a
//! command asks for a typed view; commands materialize their defaults into
//! the config so reports echo the complete effective configuration.

use randset::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Config {
    pub fn new() -> Self {
        Config::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| bad_line(lineno, raw, "unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(bad_line(lineno, raw, "empty section name"));
                }
                section = name.to_string();
                cfg.sections.entry(section.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad_line(lineno, raw, "expected 'key = value'"))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(bad_line(lineno, raw, "empty key"));
            }
            if section.is_empty() {
                return Err(bad_line(lineno, raw, "key outside any [section]"));
            }
            cfg.sections
                .get_mut(&section)
                .expect("section entry created above")
                .insert(key.to_string(), value.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidArgument(format!("cannot read config '{}': {e}", path.display()))
        })?;
        Config::parse(&text)
    }

    /// Applies one `--set section.key=value` override.
    pub fn apply_set(&mut self, spec: &str) -> Result<()> {
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("--set '{spec}': expected section.key=value")))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| Error::InvalidArgument(format!("--set '{spec}': key must be section.key")))?;
        if section.is_empty() || key.is_empty() {
            return Err(Error::InvalidArgument(format!("--set '{spec}': empty section or key")));
        }
        self.set(section, key, value.trim());
        Ok(())
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Display) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    /// All keys of a section (empty map when the section is absent).
    pub fn section(&self, name: &str) -> BTreeMap<String, String> {
        self.sections.get(name).cloned().unwrap_or_default()
    }

    /// Returns the current value, inserting `default` first when the key is
    /// absent — this is how commands materialize their defaults.
    pub fn ensure(&mut self, section: &str, key: &str, default: impl Display) -> String {
        if let Some(v) = self.get(section, key) {
            return v.to_string();
        }
        let v = default.to_string();
        self.set(section, key, &v);
        v
    }

    /// Like [`Config::ensure`] but parses the value; parse failures name the
    /// offending key.
    pub fn ensure_parsed<T>(&mut self, section: &str, key: &str, default: T) -> Result<T>
    where
        T: FromStr + Display,
    {
        let raw = self.ensure(section, key, default);
        raw.parse().map_err(|_| {
            Error::InvalidArgument(format!("bad value '{raw}' for {section}.{key}"))
        })
    }

    pub fn ensure_bool(&mut self, section: &str, key: &str, default: bool) -> Result<bool> {
        let raw = self.ensure(section, key, default);
        match raw.as_str() {
            "true" | "1" | "yes" | "on" => Ok(true),
            "false" | "0" | "no" | "off" => Ok(false),
            _ => Err(Error::InvalidArgument(format!(
                "bad boolean '{raw}' for {section}.{key}"
            ))),
        }
    }

    /// Canonical text form: sorted sections, sorted keys, `key = value`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, keys) in &self.sections {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&format!("[{name}]\n"));
            for (k, v) in keys {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

fn bad_line(lineno: usize, raw: &str, what: &str) -> Error {
    Error::Format(format!("config line {}: {what}: '{raw}'", lineno + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_comments_and_values() {
        let cfg = Config::parse(
            "# top comment\n[run]\nseed = 12\nout_dir = out # not a comment marker inside values\n\n[dataset]\nname=mnist-pc\n; another\n",
        )
        .unwrap();
        assert_eq!(cfg.get("run", "seed"), Some("12"));
        assert_eq!(cfg.get("dataset", "name"), Some("mnist-pc"));
        // Values keep inner characters; only ends are trimmed.
        assert_eq!(cfg.get("run", "out_dir"), Some("out # not a comment marker inside values"));
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Config::parse("[run\n").is_err());
        assert!(Config::parse("[]\n").is_err());
        assert!(Config::parse("ключ без секции = 1\n").is_err());
        assert!(Config::parse("[a]\nno equals sign\n").is_err());
    }

    #[test]
    fn set_overrides_and_render_round_trip() {
        let mut cfg = Config::parse("[run]\nseed = 1\n").unwrap();
        cfg.apply_set("run.seed=9").unwrap();
        cfg.apply_set("probe.epochs = 30").unwrap();
        assert_eq!(cfg.get("run", "seed"), Some("9"));
        assert_eq!(cfg.get("probe", "epochs"), Some("30"));
        let text = cfg.render();
        let reparsed = Config::parse(&text).unwrap();
        assert_eq!(cfg, reparsed);
        assert!(Config::parse("x=1").is_err());
        assert!(cfg.clone().apply_set("no-dot=1").is_err());
    }

    #[test]
    fn ensure_materializes_defaults() {
        let mut cfg = Config::new();
        let v: u64 = cfg.ensure_parsed("run", "seed", 42u64).unwrap();
        assert_eq!(v, 42);
        assert_eq!(cfg.get("run", "seed"), Some("42"));
        cfg.set("run", "n_runs", "not-a-number");
        assert!(cfg.ensure_parsed::<usize>("run", "n_runs", 5).is_err());
        assert!(cfg.ensure_bool("dataset", "rotate", false).unwrap() == false);
        cfg.set("dataset", "rotate", "yes");
        assert!(cfg.ensure_bool("dataset", "rotate", false).unwrap());
    }
}
