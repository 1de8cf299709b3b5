//! Emotion and topic dictionaries, and their compiled token-level view.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::vocab::{TokenId, Vocab};
use crate::{Error, Result};

/// Label → word-set maps for emotions and topics. Labels are kept sorted so
/// that label indices do not depend on how the dictionaries were loaded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dictionaries {
    emotion_labels: Vec<String>,
    emotion_words: Vec<BTreeSet<String>>,
    topic_labels: Vec<String>,
    topic_words: Vec<BTreeSet<String>>,
}

impl Dictionaries {
    pub fn new(emotion: BTreeMap<String, BTreeSet<String>>, topic: BTreeMap<String, BTreeSet<String>>) -> Result<Self> {
        if emotion.len() < 2 || topic.len() < 2 {
            return Err(Error::Config(format!(
                "need at least two emotion and two topic labels, got {} and {}",
                emotion.len(),
                topic.len()
            )));
        }
        let mut seen: BTreeMap<&str, String> = BTreeMap::new();
        for (kind, map) in [("emotion", &emotion), ("topic", &topic)] {
            for (label, words) in map {
                if words.is_empty() {
                    return Err(Error::Config(format!("{kind} label `{label}` has no words")));
                }
                for w in words {
                    if let Some(prev) = seen.insert(w, format!("{kind}/{label}")) {
                        return Err(Error::Config(format!(
                            "word `{w}` appears in both {prev} and {kind}/{label}"
                        )));
                    }
                }
            }
        }
        let (emotion_labels, emotion_words) = emotion.into_iter().unzip();
        let (topic_labels, topic_words) = topic.into_iter().unzip();
        Ok(Dictionaries {
            emotion_labels,
            emotion_words,
            topic_labels,
            topic_words,
        })
    }

    pub fn emotion_labels(&self) -> &[String] {
        &self.emotion_labels
    }

    pub fn topic_labels(&self) -> &[String] {
        &self.topic_labels
    }

    pub fn emotion_words(&self, label: usize) -> &BTreeSet<String> {
        &self.emotion_words[label]
    }

    pub fn topic_words(&self, label: usize) -> &BTreeSet<String> {
        &self.topic_words[label]
    }

    pub fn emotion_index(&self, label: &str) -> Option<usize> {
        self.emotion_labels.iter().position(|l| l == label)
    }

    pub fn topic_index(&self, label: &str) -> Option<usize> {
        self.topic_labels.iter().position(|l| l == label)
    }

    pub fn all_words(&self) -> impl Iterator<Item = &str> {
        self.emotion_words
            .iter()
            .chain(&self.topic_words)
            .flat_map(|s| s.iter().map(String::as_str))
    }

    /// Reads `dir/emotion/<label>` and `dir/topic/<label>`, one word per line.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |sub: &str| -> Result<BTreeMap<String, BTreeSet<String>>> {
            let mut out = BTreeMap::new();
            for entry in fs::read_dir(dir.join(sub))? {
                let entry = entry?;
                if !entry.file_type()?.is_file() {
                    continue;
                }
                let label = entry.file_name().to_string_lossy().into_owned();
                let words = fs::read_to_string(entry.path())?
                    .lines()
                    .map(|l| l.trim().to_lowercase())
                    .filter(|l| !l.is_empty())
                    .collect();
                out.insert(label, words);
            }
            Ok(out)
        };
        Dictionaries::new(read("emotion")?, read("topic")?)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        for (sub, labels, words) in [
            ("emotion", &self.emotion_labels, &self.emotion_words),
            ("topic", &self.topic_labels, &self.topic_words),
        ] {
            let d = dir.join(sub);
            fs::create_dir_all(&d)?;
            for (label, set) in labels.iter().zip(words) {
                let mut text = set.iter().cloned().collect::<Vec<_>>().join("\n");
                text.push('\n');
                fs::write(d.join(label), text)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeywordKind {
    Emotion,
    Topic,
}

/// Vocabulary plus dictionaries resolved to token ids.
#[derive(Clone, Debug)]
pub struct Lexicon {
    pub vocab: Vocab,
    pub dicts: Dictionaries,
    emotion_of: Vec<Option<usize>>,
    topic_of: Vec<Option<usize>>,
    emotion_ids: Vec<Vec<TokenId>>,
    topic_ids: Vec<Vec<TokenId>>,
}

impl Lexicon {
    pub fn new(vocab: Vocab, dicts: Dictionaries) -> Result<Self> {
        let mut emotion_of = vec![None; vocab.len()];
        let mut topic_of = vec![None; vocab.len()];
        let resolve = |words: &BTreeSet<String>, label: usize, of: &mut Vec<Option<usize>>| {
            words
                .iter()
                .map(|w| {
                    let id = vocab
                        .id(w)
                        .ok_or_else(|| Error::Config(format!("dictionary word `{w}` not in vocabulary")))?;
                    of[id] = Some(label);
                    Ok(id)
                })
                .collect::<Result<Vec<_>>>()
        };
        let emotion_ids = (0..dicts.emotion_labels.len())
            .map(|l| resolve(&dicts.emotion_words[l], l, &mut emotion_of))
            .collect::<Result<Vec<_>>>()?;
        let topic_ids = (0..dicts.topic_labels.len())
            .map(|l| resolve(&dicts.topic_words[l], l, &mut topic_of))
            .collect::<Result<Vec<_>>>()?;
        Ok(Lexicon {
            vocab,
            dicts,
            emotion_of,
            topic_of,
            emotion_ids,
            topic_ids,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn n_emotions(&self) -> usize {
        self.emotion_ids.len()
    }

    pub fn n_topics(&self) -> usize {
        self.topic_ids.len()
    }

    pub fn emotion_of(&self, t: TokenId) -> Option<usize> {
        self.emotion_of.get(t).copied().flatten()
    }

    pub fn topic_of(&self, t: TokenId) -> Option<usize> {
        self.topic_of.get(t).copied().flatten()
    }

    /// Sorted token ids of one label's dictionary.
    pub fn keyword_ids(&self, kind: KeywordKind, label: usize) -> &[TokenId] {
        match kind {
            KeywordKind::Emotion => &self.emotion_ids[label],
            KeywordKind::Topic => &self.topic_ids[label],
        }
    }

    pub fn label_of(&self, kind: KeywordKind, t: TokenId) -> Option<usize> {
        match kind {
            KeywordKind::Emotion => self.emotion_of(t),
            KeywordKind::Topic => self.topic_of(t),
        }
    }
}
