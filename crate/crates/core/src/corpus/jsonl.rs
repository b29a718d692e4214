use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::CorpusRecord;
use crate::error::{Error, Result};

pub fn to_jsonl(records: &[CorpusRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_jsonl(records: &[CorpusRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<CorpusRecord>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        if let Some(r) = parse_line(&line?, i + 1, path)? {
            out.push(r);
        }
    }
    Ok(out)
}

/// Parses JSONL text; errors name `origin` and the 1-based line number.
pub fn parse_jsonl(text: &str, origin: impl AsRef<Path>) -> Result<Vec<CorpusRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(r) = parse_line(line, i + 1, origin.as_ref())? {
            out.push(r);
        }
    }
    Ok(out)
}

fn parse_line(line: &str, lineno: usize, path: &Path) -> Result<Option<CorpusRecord>> {
    if line.trim().is_empty() {
        return Ok(None);
    }
    let err = |message: String| Error::Parse { path: path.to_path_buf(), line: lineno, message };
    let record: CorpusRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
    record.validate().map_err(|e| err(e.to_string()))?;
    Ok(Some(record))
}
