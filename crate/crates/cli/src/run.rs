//! Run files: one line per (query, gallery) pair.
//!
//! ```text
//! # query_id gallery_id rank score
//! q1 g7 1 0.418803394
//! ```
//!
//! Ranks start at 1 per query; scores are distances (smaller is better,
//! non-decreasing down the list) printed with 9 significant digits.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rerank_core::{FeatureSet, Ranking};

use crate::error::{CliError, FormatError};
use crate::output::{format_g, write_atomic};

pub const HEADER: &str = "# query_id gallery_id rank score (score is a distance; ascending is better)";

pub fn write_run<W: Write + ?Sized>(w: &mut W, rankings: &[Ranking], features: &FeatureSet) -> io::Result<()> {
    writeln!(w, "{HEADER}")?;
    for r in rankings {
        let q = features.id(r.query);
        for (rank, item) in r.items.iter().enumerate() {
            writeln!(w, "{q} {} {} {}", features.id(item.index), rank + 1, format_g(item.score, 9))?;
        }
    }
    Ok(())
}

pub fn save_run(path: &Path, rankings: &[Ranking], features: &FeatureSet) -> Result<(), CliError> {
    write_atomic(path, |w| write_run(w, rankings, features))
}

/// Ranked gallery ids per query, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub query: String,
    pub gallery: Vec<String>,
    pub scores: Vec<f64>,
}

pub fn parse_run(text: &str) -> Result<Vec<RunEntry>, FormatError> {
    let mut out: Vec<RunEntry> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| FormatError::Line { line: line_no, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [q, g, rank, score] = fields[..] else {
            return Err(err(format!("expected 4 fields, got {}", fields.len())));
        };
        let rank: usize = rank.parse().map_err(|_| err(format!("bad rank `{rank}`")))?;
        let score: f64 = score.parse().map_err(|_| err(format!("bad score `{score}`")))?;
        let entry = match out.last_mut() {
            Some(e) if e.query == q => e,
            _ => {
                if out.iter().any(|e| e.query == q) {
                    return Err(err(format!("lines for query `{q}` are not contiguous")));
                }
                out.push(RunEntry {
                    query: q.to_string(),
                    gallery: Vec::new(),
                    scores: Vec::new(),
                });
                out.last_mut().expect("just pushed")
            }
        };
        if rank != entry.gallery.len() + 1 {
            return Err(err(format!("rank {rank} out of sequence for query `{q}`")));
        }
        if entry.scores.last().is_some_and(|&prev| score < prev) {
            return Err(err(format!("score decreases for query `{q}`")));
        }
        entry.gallery.push(g.to_string());
        entry.scores.push(score);
    }
    Ok(out)
}

pub fn load_run(path: &Path) -> Result<Vec<RunEntry>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_run(&text).map_err(|e| CliError::format(path, e))
}
