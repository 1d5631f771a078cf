//! Token/id vocabularies with reserved entries.
//!
//! Input vocabularies reserve `<unk>`; output vocabularies reserve both
//! `<eos>` (sequence terminator) and `<unk>` (embedding fallback for copied
//! tokens that are not otherwise in the table — never a legal write action).

use std::collections::HashMap;

pub const UNK: &str = "<unk>";
pub const EOS: &str = "<eos>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Build from an ordered token list. Duplicates keep their first id.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in tokens {
            v.push(t.into());
        }
        v
    }

    /// Input-side vocabulary: `<unk>` first, then the given tokens.
    pub fn input_vocab<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab::from_tokens([UNK]);
        for t in tokens {
            v.push(t.into());
        }
        v
    }

    /// Output-side vocabulary: `<eos>` and `<unk>` first, then the tokens.
    pub fn output_vocab<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab::from_tokens([EOS, UNK]);
        for t in tokens {
            v.push(t.into());
        }
        v
    }

    fn push(&mut self, token: String) {
        if !self.index.contains_key(&token) {
            self.index.insert(token.clone(), self.tokens.len());
            self.tokens.push(token);
        }
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, falling back to `<unk>`. Panics if the vocabulary has
    /// no `<unk>` entry (all model vocabularies do).
    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token)
            .or_else(|| self.id(UNK))
            .expect("vocabulary has no <unk> entry")
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn eos_id(&self) -> Option<usize> {
        self.id(EOS)
    }

    pub fn unk_id(&self) -> Option<usize> {
        self.id(UNK)
    }
}
