use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Dialogue, Labels};
use crate::error::{Error, Result};

/// Reads one JSON dialogue per line. Blank lines are skipped; every other
/// line must parse and satisfy the utterance invariants.
pub fn load_dialogues(path: &Path, labels: Option<&Labels>) -> Result<Vec<Dialogue>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let dialogue: Dialogue = serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        dialogue
            .validate(labels)
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push(dialogue);
    }
    Ok(out)
}

pub fn save_dialogues(dialogues: &[Dialogue], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for d in dialogues {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One label per line; blank lines ignored.
pub fn load_labels(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

pub fn save_labels(labels: &[String], path: &Path) -> Result<()> {
    let mut text = labels.join("\n");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
