use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::{Error, Result};

pub type TokenId = usize;
pub type TokenSeq = Vec<TokenId>;

pub const PAD: TokenId = 0;
pub const GO: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;
pub const NUM_RESERVED: usize = 4;

const RESERVED: [&str; NUM_RESERVED] = ["<pad>", "<go>", "<eos>", "<unk>"];

pub fn is_special(id: TokenId) -> bool {
    id < NUM_RESERVED
}

/// Strips reserved ids (PAD, GO, EOS, UNK stays) from a sequence.
pub fn words_only(seq: &[TokenId]) -> TokenSeq {
    seq.iter()
        .copied()
        .filter(|&t| t != PAD && t != GO && t != EOS)
        .collect()
}

/// Bidirectional token map. Ids 0..4 are reserved; words follow in sorted order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    ids: HashMap<String, TokenId>,
    tokens: Vec<String>,
}

impl Vocab {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let sorted: BTreeSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().to_lowercase())
            .filter(|w| !w.is_empty() && !RESERVED.contains(&w.as_str()))
            .collect();
        let tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).chain(sorted).collect();
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { ids, tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= NUM_RESERVED
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        self.tokens.get(id).map(String::as_str).unwrap_or("<unk>")
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Lowercased whitespace split with UNK for unknown words.
    pub fn tokenize(&self, text: &str) -> Result<TokenSeq> {
        let seq: TokenSeq = text
            .split_whitespace()
            .map(|w| self.id(&w.to_lowercase()).unwrap_or(UNK))
            .collect();
        if seq.is_empty() {
            return Err(Error::Input("empty text".into()));
        }
        Ok(seq)
    }

    /// Joins word tokens with single spaces, dropping PAD/GO/EOS.
    pub fn detokenize(&self, seq: &[TokenId]) -> String {
        words_only(seq)
            .iter()
            .map(|&t| self.token(t))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < NUM_RESERVED || tokens[..NUM_RESERVED] != RESERVED {
            return Err(Error::Input(format!(
                "{}: vocabulary must start with the reserved tokens",
                path.display()
            )));
        }
        let ids: HashMap<String, TokenId> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if ids.len() != tokens.len() {
            return Err(Error::Input("duplicate vocabulary entry".into()));
        }
        Ok(Vocab { ids, tokens })
    }
}
