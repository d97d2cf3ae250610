//! Pipeline configuration assembled from defaults, a `key=value` file and
//! command-line flags, remembering where each value came from.

use std::fmt;
use std::fs;
use std::path::Path;

use rerank_core::config::CONFIG_KEYS;
use rerank_core::PipelineConfig;

use crate::error::{CliError, FormatError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Default,
    File,
    Flag,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Default => "default",
            Source::File => "file",
            Source::Flag => "flag",
        })
    }
}

/// Parse `key=value` lines. Blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(FormatError::Line {
                line: i + 1,
                message: format!("expected key=value, got `{line}`"),
            });
        };
        let k = k.trim();
        if !CONFIG_KEYS.contains(&k) {
            return Err(FormatError::Line {
                line: i + 1,
                message: format!("unknown key `{k}`"),
            });
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Serialize every field so [`parse_config_text`] reproduces it.
pub fn render_config(config: &PipelineConfig) -> String {
    config
        .to_key_values()
        .into_iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect()
}

#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub config: PipelineConfig,
    pub sources: Vec<(&'static str, Source)>,
}

impl ResolvedConfig {
    /// One line per key: value and origin.
    pub fn banner(&self) -> String {
        let mut s = String::from("configuration (flag > file > default):\n");
        for (key, src) in &self.sources {
            let value = self.config.get(key).unwrap_or_default();
            s.push_str(&format!("  {key:<17} = {value:<24} [{src}]\n"));
        }
        s
    }
}

/// Apply defaults, then the config file, then flags.
pub fn resolve(file: Option<&Path>, flags: &[(&'static str, String)]) -> Result<ResolvedConfig, CliError> {
    let mut config = PipelineConfig::default();
    let mut sources: Vec<(&'static str, Source)> = CONFIG_KEYS.iter().map(|k| (*k, Source::Default)).collect();
    let mut mark = |key: &str, src: Source| {
        if let Some(slot) = sources.iter_mut().find(|(k, _)| *k == key) {
            slot.1 = src;
        }
    };
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let pairs = parse_config_text(&text).map_err(|e| CliError::format(path, e))?;
        for (k, v) in pairs {
            config.set(&k, &v)?;
            mark(&k, Source::File);
        }
    }
    for (k, v) in flags {
        config.set(k, v)?;
        mark(k, Source::Flag);
    }
    config.validate()?;
    Ok(ResolvedConfig { config, sources })
}
