use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::types::{validate_record, SentenceRecord, Violation};

/// Reads a JSON-lines dataset. Blank lines are ignored.
///
/// Invalid records abort the load when `strict` is set; otherwise they are
/// logged with their line number and skipped.
pub fn load_dataset(path: impl AsRef<Path>, strict: bool) -> Result<Vec<SentenceRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file), path, strict)
}

/// Reads system output. Only structural problems (no tokens, spans outside
/// the sentence) make a record invalid; overlapping or repeated triplets are
/// legitimate predictions and are kept for scoring.
pub fn load_predictions(path: impl AsRef<Path>, strict: bool) -> Result<Vec<SentenceRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(BufReader::new(file), path, strict, |r| {
        validate_record(r)
            .into_iter()
            .filter(|v| matches!(v, Violation::EmptyTokens | Violation::SpanOutOfRange { .. }))
            .collect()
    })
}

pub fn read_dataset<R: BufRead>(reader: R, path: &Path, strict: bool) -> Result<Vec<SentenceRecord>> {
    read_records(reader, path, strict, validate_record)
}

fn read_records<R: BufRead>(
    reader: R,
    path: &Path,
    strict: bool,
    check: impl Fn(&SentenceRecord) -> Vec<Violation>,
) -> Result<Vec<SentenceRecord>> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let problem = match serde_json::from_str::<SentenceRecord>(&line) {
            Ok(record) => {
                let violations = check(&record);
                if violations.is_empty() {
                    records.push(record);
                    continue;
                }
                let joined: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
                format!("record '{}': {}", record.id, joined.join("; "))
            }
            Err(e) => format!("malformed record: {e}"),
        };
        if strict {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: problem,
            });
        }
        warn!("{}:{line_no}: skipping {problem}", path.display());
    }
    Ok(records)
}

pub fn write_jsonl<T: serde::Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
