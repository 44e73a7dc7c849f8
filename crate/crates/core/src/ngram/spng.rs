//! SPNG binary persistence.
//!
//! ```text
//! magic "SPNG" | version u16 | vocab_hash u64 | order count u8
//! per order: n u8 | weight f64 | entry count u64 | entries
//! entry:     n × token u32 | count u64
//! ```
//! All integers little-endian; entries sorted lexicographically by key.

use std::fs;
use std::path::Path;

use super::{check_order, NGramEnsemble, NGramStore};
use crate::error::{Error, Result};
use crate::vocab::Vocab;
use crate::TokenId;

pub const SPNG_MAGIC: &[u8; 4] = b"SPNG";
pub const SPNG_VERSION: u16 = 1;

impl NGramEnsemble {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SPNG_MAGIC);
        out.extend_from_slice(&SPNG_VERSION.to_le_bytes());
        out.extend_from_slice(&self.vocab_hash.to_le_bytes());
        out.push(self.stores.len() as u8);
        for (store, w) in &self.stores {
            out.push(store.n as u8);
            out.extend_from_slice(&w.to_le_bytes());
            out.extend_from_slice(&(store.counts.len() as u64).to_le_bytes());
            for (key, count) in &store.counts {
                for t in key {
                    out.extend_from_slice(&t.to_le_bytes());
                }
                out.extend_from_slice(&count.to_le_bytes());
            }
        }
        out
    }

    /// Parses SPNG bytes and checks the vocabulary hash against `vocab`.
    pub fn from_bytes(raw: &[u8], vocab: &Vocab) -> Result<Self> {
        let ens = parse(raw)?;
        let active = vocab.hash();
        if ens.vocab_hash != active {
            return Err(Error::VocabMismatch {
                file: ens.vocab_hash,
                active,
            });
        }
        Ok(ens)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, vocab: &Vocab) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?, vocab)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Malformed("truncated SPNG file".into())),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn parse(raw: &[u8]) -> Result<NGramEnsemble> {
    let mut r = Reader { buf: raw, pos: 0 };
    if raw.len() < 4 || r.take(4)? != SPNG_MAGIC {
        return Err(Error::BadMagic { expected: "SPNG" });
    }
    let version = r.u16()?;
    if version != SPNG_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let vocab_hash = r.u64()?;
    let orders = r.u8()?;
    let mut stores = Vec::with_capacity(orders as usize);
    for _ in 0..orders {
        let n = r.u8()? as usize;
        check_order(n).map_err(|_| Error::Malformed(format!("order {n} out of range")))?;
        let weight = r.f64()?;
        let entries = r.u64()?;
        let mut store = NGramStore::new(n)?;
        let mut prev: Option<Vec<TokenId>> = None;
        for _ in 0..entries {
            let key = (0..n).map(|_| r.u32()).collect::<Result<Vec<TokenId>>>()?;
            let count = r.u64()?;
            if count == 0 {
                return Err(Error::Malformed("zero count entry".into()));
            }
            if prev.as_ref().is_some_and(|p| *p >= key) {
                return Err(Error::Malformed("entries not strictly sorted".into()));
            }
            store.insert(&key, count);
            prev = Some(key);
        }
        stores.push((store, weight));
    }
    if r.pos != raw.len() {
        return Err(Error::Malformed("trailing bytes after last order".into()));
    }
    Ok(NGramEnsemble::from_parts(vocab_hash, stores))
}
