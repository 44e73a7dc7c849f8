use crate::dist::Distribution;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingParams {
    /// Weight of the n-gram distribution in the exponential mean, in `[0, 1]`.
    pub alpha: f64,
    /// Multiplier applied when the two supports do not overlap, in `(0, 1]`.
    pub delta: f64,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        Self {
            alpha: 0.54,
            delta: 0.25,
        }
    }
}

impl SmoothingParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParam(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::InvalidParam(format!("delta {} outside (0, 1]", self.delta)));
        }
        Ok(())
    }
}

/// Exponential mean `p_lm^(1-α) · p_ng^α` over the tokens both distributions
/// support. With no common token, falls back to `δ · p_lm^(1-α)` over all of
/// `p_lm`. Scores are not renormalized.
pub fn smooth(p_lm: &Distribution, p_ng: &Distribution, params: SmoothingParams) -> Result<Distribution> {
    params.validate()?;
    if p_lm.is_empty() {
        return Err(Error::InvalidParam("language model distribution is empty".into()));
    }
    let SmoothingParams { alpha, delta } = params;
    let overlap: Distribution = p_lm
        .iter()
        .filter(|&(t, _)| p_ng.contains(t))
        .map(|(t, p)| (t, p.powf(1.0 - alpha) * p_ng.get(t).powf(alpha)))
        .collect();
    if !overlap.is_empty() {
        return Ok(overlap);
    }
    Ok(p_lm.iter().map(|(t, p)| (t, delta * p.powf(1.0 - alpha))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(alpha: f64, delta: f64) -> SmoothingParams {
        SmoothingParams { alpha, delta }
    }

    #[test]
    fn alpha_zero_restricts_to_intersection() {
        let lm = Distribution::from_pairs([(1, 0.6), (2, 0.4)]);
        let ng = Distribution::from_pairs([(1, 0.9), (3, 0.1)]);
        let out = smooth(&lm, &ng, params(0.0, 0.25)).unwrap();
        assert_eq!(out, Distribution::from_pairs([(1, 0.6)]));
    }

    #[test]
    fn hand_computed_overlap() {
        let lm = Distribution::from_pairs([(1, 0.6), (2, 0.4)]);
        let ng = Distribution::from_pairs([(1, 0.5), (3, 0.5)]);
        let out = smooth(&lm, &ng, params(0.5, 0.25)).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out.get(1) - 0.547_722_557_5).abs() < 1e-9);
    }

    #[test]
    fn hand_computed_disjoint_penalty() {
        let lm = Distribution::from_pairs([(1, 0.6), (2, 0.4)]);
        let ng = Distribution::from_pairs([(3, 1.0)]);
        let out = smooth(&lm, &ng, params(0.5, 0.25)).unwrap();
        assert!((out.get(1) - 0.193_649_167_3).abs() < 1e-9);
        assert!((out.get(2) - 0.158_113_883_0).abs() < 1e-9);
        let empty = smooth(&lm, &Distribution::new(), params(0.5, 0.25)).unwrap();
        assert_eq!(empty, out);
    }

    #[test]
    fn alpha_one_returns_ngram_values() {
        let lm = Distribution::from_pairs([(1, 0.6), (2, 0.4)]);
        let ng = Distribution::from_pairs([(1, 0.125), (2, 0.02)]);
        let out = smooth(&lm, &ng, params(1.0, 0.25)).unwrap();
        assert!((out.get(1) - 0.125).abs() < 1e-12);
        assert!((out.get(2) - 0.02).abs() < 1e-12);
    }

    #[test]
    fn parameter_errors() {
        let lm = Distribution::from_pairs([(1, 1.0)]);
        assert!(smooth(&lm, &lm, params(-0.1, 0.5)).is_err());
        assert!(smooth(&lm, &lm, params(1.1, 0.5)).is_err());
        assert!(smooth(&lm, &lm, params(0.5, 0.0)).is_err());
        assert!(smooth(&lm, &lm, params(0.5, 1.5)).is_err());
        assert!(smooth(&Distribution::new(), &lm, params(0.5, 0.5)).is_err());
    }
}
