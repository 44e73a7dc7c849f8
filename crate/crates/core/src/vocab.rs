//! Token vocabularies shared by the language models and the n-gram stores.
//!
//! Two modes exist. Byte mode maps every byte to its own id (plus optional
//! `<s>`/`</s>` specials at 256 and 257) and round-trips any string exactly.
//! Word mode is a whitespace tokenizer over an explicit table, loaded from a
//! file with one token per line where the line number is the id.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::TokenId;

pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocabMode {
    Byte,
    Word,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SpecialTokens {
    pub bos_id: Option<TokenId>,
    pub eos_id: Option<TokenId>,
}

#[derive(Debug, Clone)]
pub struct Vocab {
    mode: VocabMode,
    table: Vec<String>,
    index: HashMap<String, TokenId>,
    special: SpecialTokens,
    unk_id: Option<TokenId>,
    bos_marker: String,
    eos_marker: String,
}

impl Vocab {
    /// Byte vocabulary of size 258: ids 0..256 are raw bytes, 256 is `<s>`, 257 is `</s>`.
    pub fn bytes() -> Self {
        let mut v = Self::bytes_plain();
        v.table.push(BOS_TOKEN.to_string());
        v.table.push(EOS_TOKEN.to_string());
        v.special = SpecialTokens {
            bos_id: Some(256),
            eos_id: Some(257),
        };
        v
    }

    /// Byte vocabulary of exactly 256 ids and no specials.
    pub fn bytes_plain() -> Self {
        let table = (0u16..256).map(|b| format!("<0x{b:02X}>")).collect();
        Self {
            mode: VocabMode::Byte,
            table,
            index: HashMap::new(),
            special: SpecialTokens::default(),
            unk_id: None,
            bos_marker: BOS_TOKEN.to_string(),
            eos_marker: EOS_TOKEN.to_string(),
        }
    }

    /// Word vocabulary from an explicit table. `<s>`, `</s>` and `<unk>` entries are
    /// picked up as specials.
    pub fn words<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let table: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if table.is_empty() {
            return Err(Error::InvalidVocab("empty word table".into()));
        }
        if table.len() > u32::MAX as usize {
            return Err(Error::InvalidVocab("table exceeds 32-bit id range".into()));
        }
        let mut index = HashMap::with_capacity(table.len());
        for (id, tok) in table.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::InvalidVocab(format!(
                    "line {id}: tokens must be nonempty and contain no whitespace"
                )));
            }
            if index.insert(tok.clone(), id as TokenId).is_some() {
                return Err(Error::InvalidVocab(format!("duplicate token `{tok}`")));
            }
        }
        let special = SpecialTokens {
            bos_id: index.get(BOS_TOKEN).copied(),
            eos_id: index.get(EOS_TOKEN).copied(),
        };
        let unk_id = index.get(UNK_TOKEN).copied();
        Ok(Self {
            mode: VocabMode::Word,
            table,
            index,
            special,
            unk_id,
            bos_marker: BOS_TOKEN.to_string(),
            eos_marker: EOS_TOKEN.to_string(),
        })
    }

    /// Loads a word vocabulary: UTF-8, one token per line, line number = id.
    pub fn load_words(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::words(text.lines().map(str::trim_end).filter(|l| !l.is_empty()))
    }

    /// Overrides how `<s>` and `</s>` are rendered by [`Vocab::detokenize`].
    pub fn with_markers(mut self, bos: impl Into<String>, eos: impl Into<String>) -> Self {
        self.bos_marker = bos.into();
        self.eos_marker = eos.into();
        self
    }

    pub fn mode(&self) -> VocabMode {
        self.mode
    }

    pub fn size(&self) -> usize {
        self.table.len()
    }

    pub fn special(&self) -> SpecialTokens {
        self.special
    }

    pub fn unk_id(&self) -> Option<TokenId> {
        self.unk_id
    }

    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        match self.mode {
            VocabMode::Word => self.index.get(token).copied(),
            VocabMode::Byte => match token.as_bytes() {
                [b] => Some(*b as TokenId),
                _ => None,
            },
        }
    }

    /// Surface string of a single id (byte ids render as `<0xNN>`).
    pub fn token_str(&self, id: TokenId) -> Result<&str> {
        self.table.get(id as usize).map(String::as_str).ok_or(Error::OutOfVocabulary {
            id,
            size: self.size(),
        })
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<TokenId>> {
        match self.mode {
            VocabMode::Byte => Ok(text.bytes().map(TokenId::from).collect()),
            VocabMode::Word => text
                .split_whitespace()
                .map(|w| match self.index.get(w) {
                    Some(&id) => Ok(id),
                    None => self.unk_id.ok_or_else(|| Error::UnknownToken(w.to_string())),
                })
                .collect(),
        }
    }

    pub fn detokenize(&self, ids: &[TokenId]) -> Result<String> {
        match self.mode {
            VocabMode::Byte => {
                let mut bytes = Vec::with_capacity(ids.len());
                for &id in ids {
                    self.check(id)?;
                    if id < 256 {
                        bytes.push(id as u8);
                    } else {
                        bytes.extend_from_slice(self.marker(id).as_bytes());
                    }
                }
                Ok(String::from_utf8_lossy(&bytes).into_owned())
            }
            VocabMode::Word => {
                let mut words = Vec::with_capacity(ids.len());
                for &id in ids {
                    self.check(id)?;
                    words.push(self.marker(id));
                }
                Ok(words.join(" "))
            }
        }
    }

    /// Checksum binding n-gram stores to this vocabulary.
    pub fn hash(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(match self.mode {
            VocabMode::Byte => b"byte",
            VocabMode::Word => b"word",
        });
        h.update((self.table.len() as u64).to_le_bytes());
        for tok in &self.table {
            h.update((tok.len() as u32).to_le_bytes());
            h.update(tok.as_bytes());
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
    }

    fn check(&self, id: TokenId) -> Result<()> {
        if (id as usize) < self.size() {
            Ok(())
        } else {
            Err(Error::OutOfVocabulary {
                id,
                size: self.size(),
            })
        }
    }

    fn marker(&self, id: TokenId) -> &str {
        if Some(id) == self.special.bos_id {
            &self.bos_marker
        } else if Some(id) == self.special.eos_id {
            &self.eos_marker
        } else {
            &self.table[id as usize]
        }
    }
}
