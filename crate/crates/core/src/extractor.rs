//! Two-universal Toeplitz hashing, used twice: extraction of the biased
//! device output into the initial key, and privacy amplification of the
//! reconciled key.
//!
//! The matrix convention: a seed of `n_in + n_out - 1` bits defines
//! `T[i][j] = seed[(i - j) + (n_in - 1)]`, so seed bit `n_in - 1` is the
//! main diagonal. The seed is public (Toeplitz hashing is a strong
//! extractor), but its transmission is still authenticated for integrity.
//!
//! Output lengths come from the leftover hash lemma specialised to a
//! delta-biased source: each raw bit contributes `-log2((1 + 2*delta)/2)`
//! bits of min-entropy and the smoothing parameter costs `2*log2(1/eps)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitSequence;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractorError {
    #[error("seed has {got} bits, dimensions {n_in}x{n_out} need {expected}")]
    SeedLengthMismatch {
        n_in: usize,
        n_out: usize,
        expected: usize,
        got: usize,
    },
    #[error("input has {got} bits, seed expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("output length {n_out} exceeds input length {n_in}")]
    OutputTooLong { n_in: usize, n_out: usize },
    #[error("target unreachable: a source with bias 0.5 has no extractable entropy")]
    UnreachableTarget,
}

/// Seed and dimensions of one Toeplitz matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToeplitzSeed {
    seed: BitSequence,
    n_in: usize,
    n_out: usize,
}

impl ToeplitzSeed {
    pub fn new(seed: BitSequence, n_in: usize, n_out: usize) -> Result<Self, ExtractorError> {
        if n_out > n_in {
            return Err(ExtractorError::OutputTooLong { n_in, n_out });
        }
        let expected = if n_in == 0 { 0 } else { n_in + n_out - 1 };
        if seed.len() != expected {
            return Err(ExtractorError::SeedLengthMismatch {
                n_in,
                n_out,
                expected,
                got: seed.len(),
            });
        }
        Ok(Self { seed, n_in, n_out })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn seed_bits(&self) -> &BitSequence {
        &self.seed
    }

    pub fn required_seed_len(n_in: usize, n_out: usize) -> usize {
        if n_in == 0 {
            0
        } else {
            n_in + n_out - 1
        }
    }
}

/// `T(seed) * input` over GF(2).
///
/// Evaluated matrix-free: input bit `j` contributes the seed window
/// starting at `n_in - 1 - j`, so the whole product is `n_in` window XORs.
/// Bit-identical to the dense matrix definition.
pub fn toeplitz_extract(
    input: &BitSequence,
    seed: &ToeplitzSeed,
) -> Result<BitSequence, ExtractorError> {
    if input.len() != seed.n_in {
        return Err(ExtractorError::DimensionMismatch {
            expected: seed.n_in,
            got: input.len(),
        });
    }
    let mut out = BitSequence::zeros(seed.n_out);
    if seed.n_out == 0 {
        return Ok(out);
    }
    for j in 0..seed.n_in {
        if input.get(j).unwrap() {
            out.xor_window(&seed.seed, seed.n_in - 1 - j, seed.n_out);
        }
    }
    Ok(out)
}

/// Extractable almost-uniform bits from `raw_len` bits of bias `delta`:
/// `floor(raw_len * (-log2((1 + 2*delta)/2)) - 2*log2(1/eps_stat))`,
/// clamped at zero.
pub fn extractable_length(raw_len: usize, delta: f64, eps_stat: f64) -> usize {
    assert!((0.0..=0.5).contains(&delta), "delta outside [0, 0.5]");
    assert!(eps_stat > 0.0 && eps_stat < 1.0);
    let per_bit = -((1.0 + 2.0 * delta) / 2.0).log2();
    let value = raw_len as f64 * per_bit - 2.0 * (1.0 / eps_stat).log2();
    if value <= 0.0 {
        0
    } else {
        value.floor() as usize
    }
}

/// Smallest round count `N` with `extractable_length(2*N*m, ...) >= target`.
pub fn rounds_needed(
    target_len: usize,
    states_per_round: usize,
    delta: f64,
    eps_stat: f64,
) -> Result<usize, ExtractorError> {
    assert!(states_per_round >= 1);
    if target_len == 0 {
        return Ok(0);
    }
    if delta >= 0.5 {
        return Err(ExtractorError::UnreachableTarget);
    }
    let per_bit = -((1.0 + 2.0 * delta) / 2.0).log2();
    let raw_needed = (target_len as f64 + 2.0 * (1.0 / eps_stat).log2()) / per_bit;
    let mut n = (raw_needed / (2.0 * states_per_round as f64))
        .floor()
        .max(0.0) as usize;
    // land exactly on the boundary despite floating-point slop
    while extractable_length(2 * n * states_per_round, delta, eps_stat) >= target_len && n > 0 {
        n -= 1;
    }
    while extractable_length(2 * n * states_per_round, delta, eps_stat) < target_len {
        n += 1;
    }
    Ok(n)
}

/// Inputs and resolved output length of one extraction step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionPlan {
    pub raw_len: usize,
    pub delta: f64,
    pub eps_stat: f64,
    pub out_len: usize,
}

impl ExtractionPlan {
    pub fn new(raw_len: usize, delta: f64, eps_stat: f64) -> Self {
        Self {
            raw_len,
            delta,
            eps_stat,
            out_len: extractable_length(raw_len, delta, eps_stat),
        }
    }
}

/// Test-vector record for cross-implementation checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToeplitzTestVector {
    pub n_in: usize,
    pub n_out: usize,
    pub seed_hex: String,
    pub input_hex: String,
    pub output_hex: String,
}

impl ToeplitzTestVector {
    pub fn generate(input: &BitSequence, seed: &ToeplitzSeed) -> Result<Self, ExtractorError> {
        let output = toeplitz_extract(input, seed)?;
        Ok(Self {
            n_in: seed.n_in(),
            n_out: seed.n_out(),
            seed_hex: seed.seed_bits().to_hex(),
            input_hex: input.to_hex(),
            output_hex: output.to_hex(),
        })
    }

    pub fn check(&self) -> Result<bool, ExtractorError> {
        let seed = ToeplitzSeed::new(
            BitSequence::from_hex(
                &self.seed_hex,
                ToeplitzSeed::required_seed_len(self.n_in, self.n_out),
            )
            .expect("seed hex"),
            self.n_in,
            self.n_out,
        )?;
        let input = BitSequence::from_hex(&self.input_hex, self.n_in).expect("input hex");
        Ok(toeplitz_extract(&input, &seed)?.to_hex() == self.output_hex)
    }
}
