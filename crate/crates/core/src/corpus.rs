//! JSONL conversation corpora.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::lexicon::Lexicon;
use crate::vocab::TokenSeq;
use crate::{Error, Result};

pub const DEFAULT_MAX_LEN: usize = 20;

/// One line of a corpus file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub post: String,
    pub reply: String,
    pub emotion: String,
    pub topic: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pair {
    pub post: TokenSeq,
    pub reply: TokenSeq,
    pub emotion_label: usize,
    pub topic_label: usize,
}

/// Parses every non-blank line as a [`Record`]. Line numbers are 1-based.
pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records(path: &Path, records: &[Record]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Input(e.to_string()))?;
        writeln!(f, "{line}")?;
    }
    Ok(())
}

/// Tokenizes and validates records against the lexicon.
pub fn resolve_records(records: &[Record], lex: &Lexicon, max_len: usize) -> Result<Vec<Pair>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| resolve_record(r, i + 1, lex, max_len))
        .collect()
}

fn resolve_record(r: &Record, line: usize, lex: &Lexicon, max_len: usize) -> Result<Pair> {
    let emotion_label = lex.dicts.emotion_index(&r.emotion).ok_or_else(|| Error::Label {
        line,
        kind: "emotion",
        label: r.emotion.clone(),
    })?;
    let topic_label = lex.dicts.topic_index(&r.topic).ok_or_else(|| Error::Label {
        line,
        kind: "topic",
        label: r.topic.clone(),
    })?;
    let tok = |text: &str, what: &str| -> Result<TokenSeq> {
        let seq = lex.vocab.tokenize(text).map_err(|_| Error::Record {
            line,
            msg: format!("empty {what}"),
        })?;
        if seq.len() > max_len {
            return Err(Error::Record {
                line,
                msg: format!("{what} has {} tokens, limit {max_len}", seq.len()),
            });
        }
        Ok(seq)
    };
    Ok(Pair {
        post: tok(&r.post, "post")?,
        reply: tok(&r.reply, "reply")?,
        emotion_label,
        topic_label,
    })
}

pub fn load_jsonl(path: &Path, lex: &Lexicon, max_len: usize) -> Result<Vec<Pair>> {
    resolve_records(&read_records(path)?, lex, max_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::Dictionaries;
    use crate::vocab::Vocab;
    use std::collections::{BTreeMap, BTreeSet};

    fn lex() -> Lexicon {
        let set = |ws: &[&str]| ws.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        let dicts = Dictionaries::new(
            BTreeMap::from([("happy".into(), set(&["happy"])), ("sad".into(), set(&["sad"]))]),
            BTreeMap::from([("weather".into(), set(&["rain"])), ("food".into(), set(&["cake"]))]),
        )
        .unwrap();
        let vocab = Vocab::from_words(["happy", "sad", "rain", "cake", "i", "am", "so", "the"]);
        Lexicon::new(vocab, dicts).unwrap()
    }

    fn write(dir: &Path, lines: &[&str]) -> std::path::PathBuf {
        let p = dir.join("c.jsonl");
        fs::write(&p, lines.join("\n")).unwrap();
        p
    }

    #[test]
    fn loads_valid_lines() {
        let dir = tempfile::tempdir().unwrap();
        let line = r#"{"post":"the rain","reply":"so happy","emotion":"happy","topic":"weather"}"#;
        let p = write(dir.path(), &[line, line, line]);
        let pairs = load_jsonl(&p, &lex(), DEFAULT_MAX_LEN).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[0].emotion_label, 0);
        assert_eq!(pairs[0].topic_label, 1);
    }

    #[test]
    fn unknown_label_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let ok = r#"{"post":"the rain","reply":"so happy","emotion":"happy","topic":"weather"}"#;
        let bad = r#"{"post":"the rain","reply":"so happy","emotion":"joyful","topic":"weather"}"#;
        let p = write(dir.path(), &[ok, bad]);
        match load_jsonl(&p, &lex(), DEFAULT_MAX_LEN) {
            Err(Error::Label { line, label, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(label, "joyful");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let ok = r#"{"post":"the rain","reply":"so happy","emotion":"happy","topic":"weather"}"#;
        let p = write(dir.path(), &[ok, ok, "{not json"]);
        assert!(matches!(load_jsonl(&p, &lex(), 20), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), &[]);
        assert!(load_jsonl(&p, &lex(), 20).unwrap().is_empty());
    }

    #[test]
    fn overlong_reply_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let line = r#"{"post":"the rain","reply":"so so so happy","emotion":"happy","topic":"weather"}"#;
        let p = write(dir.path(), &[line]);
        assert!(matches!(load_jsonl(&p, &lex(), 3), Err(Error::Record { line: 1, .. })));
    }
}
