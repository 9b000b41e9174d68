//! Flat INI-style configuration: `[section]` headers and `key = value`
//! lines, `#`/`;` comments. Unknown sections or keys are rejected against
//! a per-command schema.

use std::collections::BTreeMap;

#[derive(Debug, Default)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Ini, String> {
        let mut ini = Ini::default();
        let mut current = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                current = name.trim().to_ascii_lowercase();
                ini.sections.entry(current.clone()).or_default();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!("line {}: expected key = value", lineno + 1));
            };
            if current.is_empty() {
                return Err(format!("line {}: key outside any [section]", lineno + 1));
            }
            let key = key.trim().to_ascii_lowercase();
            let prev = ini
                .sections
                .get_mut(&current)
                .unwrap()
                .insert(key.clone(), value.trim().to_string());
            if prev.is_some() {
                return Err(format!("line {}: duplicate key '{key}'", lineno + 1));
            }
        }
        Ok(ini)
    }

    /// Reject unknown sections and keys. `schema` maps section names to
    /// their allowed keys.
    pub fn check_schema(&self, schema: &[(&str, &[&str])]) -> Result<(), String> {
        for (section, keys) in &self.sections {
            let Some((_, allowed)) = schema.iter().find(|(s, _)| s == section) else {
                return Err(format!("unknown section [{section}]"));
            };
            for key in keys.keys() {
                if !allowed.contains(&key.as_str()) {
                    return Err(format!("unknown key '{key}' in section [{section}]"));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn get_f64(&self, section: &str, key: &str) -> Result<Option<f64>, String> {
        self.get(section, key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| format!("[{section}] {key}: not a number: '{v}'"))
            })
            .transpose()
    }

    pub fn require_f64(&self, section: &str, key: &str) -> Result<f64, String> {
        self.get_f64(section, key)?
            .ok_or_else(|| format!("missing [{section}] {key}"))
    }

    pub fn get_u64(&self, section: &str, key: &str) -> Result<Option<u64>, String> {
        self.get(section, key)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| format!("[{section}] {key}: not an integer: '{v}'"))
            })
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_values() {
        let ini = Ini::parse("# boxes\n[U]\nx1 = 0.3\nx2=0.7\n\n[v]\nx1 = 0.6\n").unwrap();
        assert_eq!(ini.get("u", "x1"), Some("0.3"));
        assert_eq!(ini.require_f64("v", "x1").unwrap(), 0.6);
        assert!(ini.get("u", "missing").is_none());
    }

    #[test]
    fn rejects_unknown_keys() {
        let ini = Ini::parse("[u]\nbogus = 1\n").unwrap();
        let err = ini.check_schema(&[("u", &["x1", "x2"])]).unwrap_err();
        assert!(err.contains("bogus"));
    }

    #[test]
    fn rejects_duplicates_and_orphans() {
        assert!(Ini::parse("[a]\nk=1\nk=2\n").is_err());
        assert!(Ini::parse("k=1\n").is_err());
    }
}
