use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Matrix;
use super::{check_inputs, check_token, Embedding, ForwardCounter, LanguageModel, Logits};
use crate::error::{Error, Result};
use crate::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockEmbedding {
    /// Gaussian rows with norm close to one.
    Random,
    /// `embed(i)` is the i-th basis vector; needs `dim >= vocab_size`.
    Identity,
}

#[derive(Debug, Clone)]
pub struct MockConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub seed: u64,
    /// Standard deviation of a logit for a unit-norm hidden state.
    pub logit_scale: f64,
    /// Spectral norm the transition matrix is rescaled to. Must be below 1.
    pub spectral_norm: f64,
    pub embedding: MockEmbedding,
}

impl MockConfig {
    pub fn new(vocab_size: usize, dim: usize, seed: u64) -> Self {
        Self {
            vocab_size,
            dim,
            seed,
            logit_scale: 3.0,
            spectral_norm: 0.9,
            embedding: MockEmbedding::Random,
        }
    }
}

/// Linear recurrent model: `h_t = R·h_{t-1} + x_t`, `logits = A·h_t`.
///
/// Logits are an affine function of every input with the input weights
/// entering linearly, so a convex combination of last inputs yields the same
/// convex combination of logits up to rounding.
#[derive(Debug)]
pub struct LinearMockLM {
    embeddings: Matrix,
    output: Matrix,
    transition: Matrix,
    initial: Vec<f64>,
    counter: ForwardCounter,
}

impl LinearMockLM {
    pub fn new(config: &MockConfig) -> Result<Self> {
        let MockConfig {
            vocab_size: v,
            dim: d,
            ..
        } = *config;
        if v == 0 || d == 0 {
            return Err(Error::InvalidParam("vocab size and dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&config.spectral_norm) {
            return Err(Error::InvalidParam("transition spectral norm must be in [0, 1)".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let embeddings = match config.embedding {
            MockEmbedding::Random => Matrix::random_normal(v, d, 1.0 / (d as f64).sqrt(), &mut rng),
            MockEmbedding::Identity => {
                if d < v {
                    return Err(Error::InvalidParam(format!(
                        "identity embeddings need dim >= vocab size ({d} < {v})"
                    )));
                }
                let mut data = vec![0.0; v * d];
                for i in 0..v {
                    data[i * d + i] = 1.0;
                }
                Matrix::from_vec(v, d, data)
            }
        };
        let output = Matrix::random_normal(v, d, config.logit_scale / (d as f64).sqrt(), &mut rng);
        let mut transition = Matrix::random_normal(d, d, 1.0, &mut rng);
        let sigma = transition.spectral_norm();
        if sigma > 0.0 {
            transition.scale(config.spectral_norm / sigma);
        }
        let initial = Matrix::random_normal(1, d, 0.1 / (d as f64).sqrt(), &mut rng)
            .data()
            .to_vec();
        Ok(Self {
            embeddings,
            output,
            transition,
            initial,
            counter: ForwardCounter::default(),
        })
    }

    /// Builds from explicit matrices: `embeddings` and `output` are `V×d`,
    /// `transition` is `d×d`.
    pub fn from_parts(
        embeddings: Matrix,
        output: Matrix,
        transition: Matrix,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let d = embeddings.cols();
        if output.cols() != d
            || output.rows() != embeddings.rows()
            || transition.rows() != d
            || transition.cols() != d
            || initial.len() != d
        {
            return Err(Error::InvalidParam("inconsistent mock model shapes".into()));
        }
        Ok(Self {
            embeddings,
            output,
            transition,
            initial,
            counter: ForwardCounter::default(),
        })
    }

    pub fn embedding_matrix(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn output_matrix(&self) -> &Matrix {
        &self.output
    }

    pub fn transition(&self) -> &Matrix {
        &self.transition
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.initial
    }

    fn hidden(&self, inputs: &[Embedding]) -> Vec<f64> {
        let mut h = self.initial.clone();
        for x in inputs {
            h = self.transition.matvec(&h);
            for (hi, xi) in h.iter_mut().zip(x.as_slice()) {
                *hi += xi;
            }
        }
        h
    }
}

impl LanguageModel for LinearMockLM {
    fn name(&self) -> &str {
        "mock"
    }

    fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    fn vocab_size(&self) -> usize {
        self.embeddings.rows()
    }

    fn embed(&self, id: TokenId) -> Result<Embedding> {
        check_token(id, self.vocab_size())?;
        Ok(Embedding(self.embeddings.row(id as usize).to_vec()))
    }

    fn forward(&self, inputs: &[Embedding]) -> Result<Logits> {
        check_inputs(inputs, self.dim(), None)?;
        self.counter.bump();
        Ok(Logits(self.output.matvec(&self.hidden(inputs))))
    }

    fn forward_count(&self) -> u64 {
        self.counter.get()
    }

    fn forward_hidden(&self, inputs: &[Embedding]) -> Result<Option<Vec<Vec<f64>>>> {
        check_inputs(inputs, self.dim(), None)?;
        self.counter.bump();
        Ok(Some(vec![self.hidden(inputs)]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::tensor::cosine;

    #[test]
    fn single_input_matches_definition() {
        let m = LinearMockLM::new(&MockConfig::new(10, 6, 1)).unwrap();
        let x = m.embed(3).unwrap();
        let mut h = m.transition().matvec(m.initial_state());
        for (a, b) in h.iter_mut().zip(x.as_slice()) {
            *a += b;
        }
        let expected = m.output_matrix().matvec(&h);
        assert_eq!(m.forward(&[x]).unwrap().into_vec(), expected);
    }

    #[test]
    fn identity_embeddings() {
        let mut cfg = MockConfig::new(4, 6, 2);
        cfg.embedding = MockEmbedding::Identity;
        let m = LinearMockLM::new(&cfg).unwrap();
        assert_eq!(m.embed(0).unwrap().as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        cfg.dim = 3;
        assert!(LinearMockLM::new(&cfg).is_err());
    }

    #[test]
    fn embed_is_deterministic_and_checked() {
        let m = LinearMockLM::new(&MockConfig::new(10, 6, 1)).unwrap();
        assert_eq!(m.embed(7).unwrap(), m.embed(7).unwrap());
        assert_eq!(m.embed(7).unwrap().dim(), 6);
        assert!(m.embed(10).is_err());
    }

    #[test]
    fn spectral_norm_is_enforced() {
        let m = LinearMockLM::new(&MockConfig::new(10, 12, 5)).unwrap();
        assert!((m.transition().spectral_norm() - 0.9).abs() < 1e-9);
    }

    #[test]
    fn superposed_input_is_linear() {
        let m = LinearMockLM::new(&MockConfig::new(12, 8, 9)).unwrap();
        let prefix = m.embed_all(&[1, 2, 3]).unwrap();
        let (za, zb) = (m.embed(4).unwrap(), m.embed(9).unwrap());
        let mixed: Vec<f64> = za
            .as_slice()
            .iter()
            .zip(zb.as_slice())
            .map(|(a, b)| 0.5 * a + 0.5 * b)
            .collect();
        let run = |last: Embedding| {
            let mut v = prefix.clone();
            v.push(last);
            m.forward(&v).unwrap().into_vec()
        };
        let lhs = run(Embedding::new(mixed).unwrap());
        let la = run(za);
        let lb = run(zb);
        for i in 0..lhs.len() {
            assert!((lhs[i] - (0.5 * la[i] + 0.5 * lb[i])).abs() < 1e-9);
        }
        let rhs: Vec<f64> = la.iter().zip(&lb).map(|(a, b)| 0.5 * a + 0.5 * b).collect();
        assert!((cosine(&lhs, &rhs) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn counter_counts_each_forward() {
        let m = LinearMockLM::new(&MockConfig::new(5, 4, 0)).unwrap();
        let x = vec![m.embed(0).unwrap()];
        for _ in 0..3 {
            m.forward(&x).unwrap();
        }
        assert_eq!(m.forward_count(), 3);
        assert!(matches!(m.forward(&[]), Err(Error::EmptyInput)));
        assert!(matches!(
            m.forward(&[Embedding::zeros(3)]),
            Err(Error::DimensionMismatch { expected: 4, got: 3 })
        ));
        assert_eq!(m.forward_count(), 3);
    }
}
