//! JSONL corpus files: one [`Dialogue`] per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::dialogue::Dialogue;
use crate::error::{CoreError, Result};

pub fn to_jsonl(dialogues: &[Dialogue]) -> String {
    let mut out = String::new();
    for d in dialogues {
        out.push_str(&serde_json::to_string(d).expect("dialogue serializes"));
        out.push('\n');
    }
    out
}

pub fn write_corpus(path: impl AsRef<Path>, dialogues: &[Dialogue]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(to_jsonl(dialogues).as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Dialogue>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let d: Dialogue = serde_json::from_str(&line).map_err(|source| CoreError::CorpusLine {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?;
        d.validate()?;
        out.push(d);
    }
    Ok(out)
}

/// Hex sha256 of the canonical JSONL encoding.
pub fn corpus_hash(dialogues: &[Dialogue]) -> String {
    hex::encode(Sha256::digest(to_jsonl(dialogues).as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::{Provenance, Utterance};

    #[test]
    fn file_round_trip() {
        let d = Dialogue {
            task_id: "travel".into(),
            persona_id: "adventurer".into(),
            reward: 1,
            provenance: Provenance::Critiqued,
            utterances: vec![Utterance::human("hello"), Utterance::agent("hi there")],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        write_corpus(&path, &[d.clone(), d.clone()]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(read_corpus(&path).unwrap(), vec![d.clone(), d]);
    }

    #[test]
    fn bad_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "{\"task_id\": 3}\n").unwrap();
        match read_corpus(&path) {
            Err(CoreError::CorpusLine { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
