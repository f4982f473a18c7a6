use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dropout rates at the three TuckER sites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutSpec {
    /// On the head entity embedding.
    pub input: f64,
    /// On the relation-specific matrix `G ×₂ w_r`.
    pub relation: f64,
    /// On the combined head-relation vector before scoring candidate tails.
    pub combined: f64,
}

impl Default for DropoutSpec {
    fn default() -> Self {
        Self { input: 0.5, relation: 0.2, combined: 0.2 }
    }
}

impl DropoutSpec {
    pub const NONE: DropoutSpec = DropoutSpec { input: 0.0, relation: 0.0, combined: 0.0 };

    pub fn validate(&self) -> Result<()> {
        for (name, rate) in [("input", self.input), ("relation", self.relation), ("combined", self.combined)] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::InvalidArgument(format!("{name} dropout rate {rate} outside [0, 1)")));
            }
        }
        Ok(())
    }

    pub fn is_none(&self) -> bool {
        self.input == 0.0 && self.relation == 0.0 && self.combined == 0.0
    }

    /// Draws masks for an entity dimension `d_e`.
    pub fn sample<R: Rng + ?Sized>(&self, d_e: usize, rng: &mut R) -> DropoutMasks {
        DropoutMasks {
            input: mask(d_e, self.input, rng),
            relation: mask(d_e * d_e, self.relation, rng),
            combined: mask(d_e, self.combined, rng),
        }
    }
}

/// Inverted-dropout multipliers: each entry is `0` or `1 / (1 - rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub input: Vec<f64>,
    /// Row-major `d_e × d_e`.
    pub relation: Vec<f64>,
    pub combined: Vec<f64>,
}

impl DropoutMasks {
    pub fn ones(d_e: usize) -> Self {
        Self { input: vec![1.0; d_e], relation: vec![1.0; d_e * d_e], combined: vec![1.0; d_e] }
    }

    pub(crate) fn check(&self, d_e: usize) -> Result<()> {
        if self.input.len() != d_e || self.relation.len() != d_e * d_e || self.combined.len() != d_e {
            return Err(Error::DimensionMismatch(format!("dropout masks do not match d_e = {d_e}")));
        }
        Ok(())
    }
}

pub fn mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    if rate == 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 / (1.0 - rate);
    // Drop when a uniform 32-bit draw falls below rate · 2³².
    let threshold = (rate * 4_294_967_296.0).round() as u64;
    (0..len).map(|_| if (rng.next_u32() as u64) < threshold { 0.0 } else { keep }).collect()
}

/// Applies inverted dropout to `x` in place.
pub fn apply_dropout<R: Rng + ?Sized>(x: &mut [f64], rate: f64, rng: &mut R) {
    if rate == 0.0 {
        return;
    }
    let m = mask(x.len(), rate, rng);
    for (v, m) in x.iter_mut().zip(m) {
        *v *= m;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn zero_rate_is_identity() {
        let mut r = stream(1, Purpose::Test, 0, 0);
        let mut x = vec![1.5, -2.0, 3.0];
        apply_dropout(&mut x, 0.0, &mut r);
        assert_eq!(x, vec![1.5, -2.0, 3.0]);
    }

    #[test]
    fn inverted_scaling_is_unbiased() {
        let mut r = stream(2, Purpose::Test, 0, 0);
        let rate = 0.3;
        let n = 200_000;
        let m = mask(n, rate, &mut r);
        let mean = m.iter().sum::<f64>() / n as f64;
        // Each multiplier has mean 1 and variance rate / (1 - rate).
        let sd = (rate / (1.0 - rate) / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sd, "mean {mean}");
    }

    #[test]
    fn validation() {
        assert!(DropoutSpec::default().validate().is_ok());
        assert!(DropoutSpec { input: 1.0, ..DropoutSpec::NONE }.validate().is_err());
        assert!(DropoutSpec { relation: -0.1, ..DropoutSpec::NONE }.validate().is_err());
    }
}
