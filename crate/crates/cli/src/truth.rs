//! Ground-truth files: whitespace-separated lines
//!
//! ```text
//! <query_id> relevant <id> [<id> ...]
//! <query_id> junk <id> [<id> ...]
//! ```
//!
//! A query may appear on several lines; `#` starts a comment line.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rerank_core::eval::{GroundTruth, QueryTruth};

use crate::error::{CliError, FormatError};
use crate::output::write_atomic;

pub fn parse_truth(text: &str) -> Result<GroundTruth, FormatError> {
    let mut acc: BTreeMap<String, QueryTruth> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| FormatError::Line { line: i + 1, message };
        let mut fields = line.split_whitespace();
        let (Some(q), Some(kind)) = (fields.next(), fields.next()) else {
            return Err(err("expected `<query> relevant|junk <id>...`".into()));
        };
        let entry = acc.entry(q.to_string()).or_default();
        let set = match kind {
            "relevant" => &mut entry.relevant,
            "junk" => &mut entry.junk,
            other => return Err(err(format!("unknown kind `{other}`"))),
        };
        set.extend(fields.map(str::to_string));
    }
    let mut truth = GroundTruth::new();
    for (q, t) in acc {
        truth.insert(q, t).map_err(|e| FormatError::Line {
            line: 0,
            message: e.to_string(),
        })?;
    }
    Ok(truth)
}

pub fn write_truth<W: Write + ?Sized>(w: &mut W, truth: &GroundTruth) -> io::Result<()> {
    for (q, t) in truth.iter() {
        if !t.relevant.is_empty() {
            write!(w, "{q} relevant")?;
            for id in &t.relevant {
                write!(w, " {id}")?;
            }
            writeln!(w)?;
        }
        if !t.junk.is_empty() {
            write!(w, "{q} junk")?;
            for id in &t.junk {
                write!(w, " {id}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

pub fn load_truth(path: &Path) -> Result<GroundTruth, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_truth(&text).map_err(|e| CliError::format(path, e))
}

pub fn save_truth(path: &Path, truth: &GroundTruth) -> Result<(), CliError> {
    write_atomic(path, |w| write_truth(w, truth))
}
