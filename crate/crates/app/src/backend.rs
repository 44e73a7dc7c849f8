//! Resolves backend names, vocabularies and n-gram stores from paths.

use std::path::Path;
use std::sync::Arc;

use spd_core::lm::{LanguageModel, LinearMockLM, MockConfig, TinyTransformerLM, TransformerConfig};
use spd_core::ngram::NGramEnsemble;
use spd_core::vocab::Vocab;

use crate::error::{AppError, Result};

pub const MOCK_DIM: usize = 32;

/// Shape of the built-in `tiny` backend and the `init-model` defaults.
pub fn tiny_config(vocab_size: usize) -> TransformerConfig {
    TransformerConfig {
        vocab_size,
        dim: 32,
        layers: 2,
        heads: 4,
        context_len: 256,
    }
}

/// `mock`, `tiny` or `splm:<path>`. Built-in backends are seeded with 0.
pub fn load_backend(spec: &str, vocab: &Vocab) -> Result<Arc<dyn LanguageModel>> {
    let model: Arc<dyn LanguageModel> = match spec {
        "mock" => Arc::new(LinearMockLM::new(&MockConfig::new(vocab.size(), MOCK_DIM, 0))?),
        "tiny" => Arc::new(TinyTransformerLM::random(tiny_config(vocab.size()), 0)?),
        _ => match spec.strip_prefix("splm:") {
            Some(path) => {
                let m = TinyTransformerLM::load(path).map_err(|e| match e {
                    spd_core::Error::Io(source) => AppError::File { path: path.into(), source },
                    e => e.into(),
                })?;
                if m.vocab_size() != vocab.size() {
                    return Err(spd_core::Error::InvalidParam(format!(
                        "checkpoint vocabulary size {} does not match active vocabulary size {}",
                        m.vocab_size(),
                        vocab.size()
                    ))
                    .into());
                }
                Arc::new(m)
            }
            None => return Err(AppError::UnknownBackend(spec.to_string())),
        },
    };
    Ok(model)
}

pub fn load_vocab(path: Option<&Path>) -> Result<Vocab> {
    match path {
        None => Ok(Vocab::bytes()),
        Some(p) => Vocab::load_words(p).map_err(|e| match e {
            spd_core::Error::Io(source) => AppError::File { path: p.into(), source },
            e => e.into(),
        }),
    }
}

pub fn load_ngram(path: &Path, vocab: &Vocab) -> Result<NGramEnsemble> {
    if !path.is_file() {
        return Err(AppError::NgramNotFound(path.into()));
    }
    NGramEnsemble::load(path, vocab).map_err(|e| match e {
        spd_core::Error::Io(source) => AppError::File { path: path.into(), source },
        e => e.into(),
    })
}
