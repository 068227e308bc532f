//! Word-level tokenizer over a corpus-built vocabulary.
//!
//! Ids `0..5` are reserved for `[PAD]`, `[CLS]`, `[SEP]`, `[MASK]`, and `[UNK]`.
//! Regular tokens follow in (frequency desc, token asc) order.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const CLS: TokenId = 1;
pub const SEP: TokenId = 2;
pub const MASK: TokenId = 3;
pub const UNK: TokenId = 4;

pub const RESERVED: [&str; 5] = ["[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]"];

/// Lowercases and splits a cell on whitespace, emitting every punctuation
/// character as its own token. Runs of letters and digits stay together.
pub fn tokenize_cell(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            flush(&mut current, &mut tokens);
        } else if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else {
            flush(&mut current, &mut tokens);
            tokens.push(ch.to_lowercase().collect());
        }
    }
    flush(&mut current, &mut tokens);
    tokens
}

fn flush(current: &mut String, tokens: &mut Vec<String>) {
    if !current.is_empty() {
        tokens.push(std::mem::take(current));
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TokenVocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl TryFrom<Vec<String>> for TokenVocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        TokenVocabulary::from_tokens(tokens)
    }
}

impl From<TokenVocabulary> for Vec<String> {
    fn from(v: TokenVocabulary) -> Self {
        v.tokens
    }
}

impl TokenVocabulary {
    /// Rebuilds a vocabulary from its id-ordered token list, which must begin with
    /// the reserved tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len()
            || tokens.iter().zip(RESERVED).any(|(t, r)| t != r)
        {
            return Err(Error::Config(format!(
                "token vocabulary must start with {RESERVED:?}"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate().skip(RESERVED.len()) {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("invalid token {tok:?} at id {i}")));
            }
            if index.insert(tok.clone(), i as TokenId).is_some() {
                return Err(Error::Config(format!("duplicate token {tok:?}")));
            }
        }
        Ok(TokenVocabulary { tokens, index })
    }

    /// The vocabulary containing only the reserved tokens plus `regular`, in order.
    pub fn with_regular<S: Into<String>>(regular: impl IntoIterator<Item = S>) -> Result<Self> {
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(regular.into_iter().map(Into::into))
            .collect();
        Self::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Id of a regular token. Reserved token strings are not looked up.
    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn is_special(id: TokenId) -> bool {
        (id as usize) < RESERVED.len()
    }

    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<TokenId> {
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(UNK))
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter()
            .map(|&id| self.token(id).unwrap_or(RESERVED[UNK as usize]).to_owned())
            .collect()
    }

    pub fn encode_cell(&self, text: &str) -> Vec<TokenId> {
        self.encode_tokens(&tokenize_cell(text))
    }

    /// One token per line, line number equals id.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        for tok in &self.tokens {
            writeln!(out, "{tok}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_tokens(text.lines().map(str::to_owned).collect())
    }
}

/// Counts cell and header tokens over `corpus` and keeps the most frequent ones.
///
/// At most `max_size - 5` regular tokens are kept, each seen at least `min_freq`
/// times; ties in frequency are broken lexicographically.
pub fn build_token_vocabulary(
    corpus: &Corpus,
    max_size: usize,
    min_freq: usize,
) -> Result<TokenVocabulary> {
    if max_size <= RESERVED.len() {
        return Err(Error::Config(format!(
            "vocabulary max_size must exceed {}, got {max_size}",
            RESERVED.len()
        )));
    }
    if corpus.is_empty() {
        return Err(Error::EmptyInput(
            "cannot build a vocabulary from an empty corpus".into(),
        ));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for table in corpus.tables() {
        let headers = table.headers.iter().flatten();
        let cells = table.columns.iter().flat_map(|c| c.values.iter());
        for text in headers.chain(cells) {
            for tok in tokenize_cell(text) {
                *counts.entry(tok).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, n)| *n >= min_freq.max(1))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size - RESERVED.len());
    TokenVocabulary::with_regular(ranked.into_iter().map(|(t, _)| t))
}
