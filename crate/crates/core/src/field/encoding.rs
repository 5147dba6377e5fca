//! Sinusoidal positional encoding.

use serde::{Deserialize, Serialize};

use crate::math::Vec3;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PositionalEncodingConfig {
    pub position_frequencies: usize,
    pub direction_frequencies: usize,
    pub include_input: bool,
}

impl Default for PositionalEncodingConfig {
    fn default() -> Self {
        Self {
            position_frequencies: 6,
            direction_frequencies: 4,
            include_input: true,
        }
    }
}

impl PositionalEncodingConfig {
    /// Encoded dimension of a 3-vector with `frequencies` bands.
    pub fn encoded_dim(frequencies: usize, include_input: bool) -> usize {
        3 * (usize::from(include_input) + 2 * frequencies)
    }

    pub fn position_dim(&self) -> usize {
        Self::encoded_dim(self.position_frequencies, self.include_input)
    }

    pub fn direction_dim(&self) -> usize {
        Self::encoded_dim(self.direction_frequencies, self.include_input)
    }
}

/// Encodes one 3-vector: `[x, sin(2^k pi x), cos(2^k pi x)]` for
/// `k = 0..freqs-1`, componentwise.
pub fn positional_encode(x: Vec3, frequencies: usize, include_input: bool) -> Vec<f64> {
    let mut out = Vec::with_capacity(PositionalEncodingConfig::encoded_dim(
        frequencies,
        include_input,
    ));
    let comps = x.to_array();
    if include_input {
        out.extend_from_slice(&comps);
    }
    for k in 0..frequencies {
        let f = (1u64 << k) as f64 * std::f64::consts::PI;
        for &c in &comps {
            out.push((f * c).sin());
        }
        for &c in &comps {
            out.push((f * c).cos());
        }
    }
    out
}

/// Convenience wrapper using the position part of a config.
pub fn encode_point(x: Vec3, cfg: &PositionalEncodingConfig) -> Vec<f64> {
    positional_encode(x, cfg.position_frequencies, cfg.include_input)
}

/// Tape version of [`positional_encode`] over a `[n x 3]` batch.
pub fn encode_tape(tape: &mut Tape, x: Var, frequencies: usize, include_input: bool) -> Var {
    let mut parts = Vec::with_capacity(1 + 2 * frequencies);
    if include_input {
        parts.push(x);
    }
    for k in 0..frequencies {
        let f = (1u64 << k) as f64 * std::f64::consts::PI;
        let scaled = tape.scale(x, f);
        parts.push(tape.sin(scaled));
        parts.push(tape.cos(scaled));
    }
    tape.concat_cols(&parts)
}
