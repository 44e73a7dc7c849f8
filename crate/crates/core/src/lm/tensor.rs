use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn random_normal<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * std
            })
            .collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// `self · x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ · x`
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        out
    }

    /// Largest singular value by power iteration on `AᵀA`.
    pub fn spectral_norm(&self) -> f64 {
        if self.data.iter().all(|&v| v == 0.0) {
            return 0.0;
        }
        let mut v = vec![1.0 / (self.cols as f64).sqrt(); self.cols];
        let mut sigma = 0.0;
        for _ in 0..500 {
            let w = self.matvec_t(&self.matvec(&v));
            let n = norm(&w);
            if n == 0.0 {
                return 0.0;
            }
            v = w.iter().map(|x| x / n).collect();
            let next = n.sqrt();
            if (next - sigma).abs() <= 1e-14 * next {
                sigma = next;
                break;
            }
            sigma = next;
        }
        sigma
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        return if norm(a) == norm(b) { 1.0 } else { 0.0 };
    }
    (dot(a, b) / denom).clamp(-1.0, 1.0)
}

/// `acc += w · x`
pub fn axpy(acc: &mut [f64], w: f64, x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += w * v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = Matrix::from_vec(2, 2, vec![3.0, 0.0, 0.0, -5.0]);
        assert!((m.spectral_norm() - 5.0).abs() < 1e-9);
        assert_eq!(Matrix::zeros(3, 3).spectral_norm(), 0.0);
    }

    #[test]
    fn spectral_norm_bounds_random_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Matrix::random_normal(8, 8, 1.0, &mut rng);
        let s = m.spectral_norm();
        for _ in 0..50 {
            let x: Vec<f64> = (0..8).map(|_| rng.random::<f64>() - 0.5).collect();
            assert!(norm(&m.matvec(&x)) <= s * norm(&x) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn cosine_scale_invariant() {
        let a = [1.0, 2.0, -3.0];
        let b = [0.5, -1.0, 4.0];
        let c = cosine(&a, &b);
        let scaled: Vec<f64> = b.iter().map(|v| v * 7.5).collect();
        assert!((cosine(&a, &scaled) - c).abs() < 1e-15);
        assert!((cosine(&a, &a) - 1.0).abs() < 1e-15);
    }
}
