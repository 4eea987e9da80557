//! Flat key-value configuration files with one section per subcommand:
//!
//! ```text
//! # comment
//! [train]
//! alpha = 0.0005
//! epochs = 15000
//! ```
//!
//! Unknown sections, unknown keys, and duplicate keys are rejected so a
//! typo never silently falls back to a default. Flags override file
//! values, and every command echoes its fully resolved section into the
//! output directory; the echo parses back to the same values.

use std::collections::BTreeMap;
use std::path::Path;

pub type Section = BTreeMap<String, String>;

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    pub sections: BTreeMap<String, Section>,
}

/// Every legal key, per section.
pub const KNOWN: &[(&str, &[&str])] = &[
    ("prepare", &["source", "length", "stride", "n", "features", "seed"]),
    (
        "train",
        &[
            "data",
            "epochs",
            "batch",
            "learning_rate",
            "weight_decay",
            "alpha",
            "steps",
            "hidden",
            "heads",
            "encoder_blocks",
            "dit_blocks",
            "strategy",
            "seed",
            "checkpoint_every",
            "log_every",
        ],
    ),
    ("generate", &["checkpoint", "n", "seed"]),
    ("evaluate", &["real", "syn", "seed"]),
    ("plot", &["real", "syn", "seed"]),
];

fn known_keys(section: &str) -> Option<&'static [&'static str]> {
    KNOWN.iter().find(|(s, _)| *s == section).map(|(_, ks)| *ks)
}

pub fn parse(text: &str) -> Result<ConfigFile, String> {
    let mut out = ConfigFile::default();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let ln = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return Err(format!("line {ln}: malformed section header {line:?}"));
            };
            let name = name.trim();
            if known_keys(name).is_none() {
                let sections: Vec<&str> = KNOWN.iter().map(|(s, _)| *s).collect();
                return Err(format!(
                    "line {ln}: unknown section [{name}]; expected one of {}",
                    sections.join(", ")
                ));
            }
            out.sections.entry(name.to_string()).or_default();
            current = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {ln}: expected `key = value`, got {line:?}"));
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(section) = current.as_deref() else {
            return Err(format!("line {ln}: key {key:?} appears before any [section]"));
        };
        let allowed = known_keys(section).expect("section checked at header");
        if !allowed.contains(&key) {
            return Err(format!(
                "line {ln}: unknown key {key:?} in section [{section}]; expected one of {}",
                allowed.join(", ")
            ));
        }
        let sec = out.sections.get_mut(section).expect("section entry exists");
        if sec.insert(key.to_string(), value.to_string()).is_some() {
            return Err(format!("line {ln}: duplicate key {key:?} in section [{section}]"));
        }
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<ConfigFile, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

impl ConfigFile {
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.get(name)
    }
}

/// Render one resolved section; keys are emitted sorted so the echo is
/// deterministic.
pub fn render(section: &str, pairs: &[(&str, String)]) -> String {
    let mut sorted: Vec<&(&str, String)> = pairs.iter().collect();
    sorted.sort_by_key(|(k, _)| *k);
    let mut text = format!("[{section}]\n");
    for (k, v) in sorted {
        text.push_str(k);
        text.push_str(" = ");
        text.push_str(v);
        text.push('\n');
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_comments_and_values() {
        let cfg = parse(
            "# top comment\n\n[train]\nalpha = 0.0005\nepochs=3\n\n[prepare]\n  source = sines  \n",
        )
        .unwrap();
        let train = cfg.section("train").unwrap();
        assert_eq!(train.get("alpha").unwrap(), "0.0005");
        assert_eq!(train.get("epochs").unwrap(), "3");
        assert_eq!(cfg.section("prepare").unwrap().get("source").unwrap(), "sines");
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        let err = parse("[train]\nbogus = 1\n").unwrap_err();
        assert!(err.contains("unknown key \"bogus\""), "{err}");
        let err = parse("[nope]\n").unwrap_err();
        assert!(err.contains("unknown section [nope]"), "{err}");
        let err = parse("[train]\nalpha = 1\nalpha = 2\n").unwrap_err();
        assert!(err.contains("duplicate key"), "{err}");
        let err = parse("alpha = 1\n").unwrap_err();
        assert!(err.contains("before any [section]"), "{err}");
        let err = parse("[train]\nalpha\n").unwrap_err();
        assert!(err.contains("expected `key = value`"), "{err}");
    }

    #[test]
    fn render_parses_back_to_the_same_values() {
        let pairs = vec![
            ("epochs", "15000".to_string()),
            ("alpha", "0.0005".to_string()),
            ("strategy", "shared".to_string()),
        ];
        let text = render("train", &pairs);
        // sorted output
        assert!(text.find("alpha").unwrap() < text.find("epochs").unwrap());
        let reparsed = parse(&text).unwrap();
        let sec = reparsed.section("train").unwrap();
        for (k, v) in &pairs {
            assert_eq!(sec.get(*k).unwrap(), v);
        }
    }
}
