//! Wegman-Carter information-theoretic authentication.
//!
//! A `2t`-bit secret key selects an LFSR-Toeplitz hash: the first `t` bits
//! (MSB first) are the LFSR initial state, the next `t` bits select an
//! irreducible connection polynomial via [`crate::gf2::resolve_irreducible`].
//! The hash of an `n`-bit message is `T * m` over GF(2) where column `j` of
//! the `t x n` matrix is the LFSR state after `j` clocks, i.e.
//! `T[i][j] = s_{i+j}` for the output stream `s`. Tags are masked with a
//! fresh `t`-bit one-time pad, which is what lets the matrix key persist
//! across messages.
//!
//! The forgery probability per authenticated message is bounded by
//! `n * 2^(1-t)`, which also yields the minimum tag length for a target
//! failure probability.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitSequence;
use crate::gf2::{self, Lfsr};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuthError {
    #[error("one-time pad has {got} bits, tag needs {expected}")]
    OtpLengthMismatch { expected: usize, got: usize },
    #[error("matrix key has {0} bits, expected an even positive length 2t")]
    BadKeyLength(usize),
    #[error("tag length {0} outside supported range 1..=127")]
    TagTooLong(usize),
    #[error(transparent)]
    Gf2(#[from] gf2::Gf2Error),
}

/// Verification result; a mismatch is a value, not an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerifyOutcome {
    Accept,
    Reject,
}

/// Reusable hash selection: `2t` key bits split into initial state and
/// polynomial selector.
#[derive(Debug, Clone, PartialEq)]
pub struct WcKeyMaterial {
    matrix_key: BitSequence,
    tag_len: usize,
    poly: u128,
    initial_state: u128,
}

impl WcKeyMaterial {
    /// Derive the hash function from a `2t`-bit key.
    pub fn from_key(matrix_key: BitSequence) -> Result<Self, AuthError> {
        let len = matrix_key.len();
        if len == 0 || len % 2 != 0 {
            return Err(AuthError::BadKeyLength(len));
        }
        let t = len / 2;
        if t > 127 {
            return Err(AuthError::TagTooLong(t));
        }
        // First half: initial state, key bit 0 = first LFSR output s_0
        // (register bit 0). Second half: polynomial selector, MSB first.
        let mut initial_state = 0u128;
        for j in 0..t {
            if matrix_key.get(j).unwrap() {
                initial_state |= 1 << j;
            }
        }
        let mut selector = 0u128;
        for j in 0..t {
            selector = (selector << 1) | matrix_key.get(t + j).unwrap() as u128;
        }
        let poly = gf2::resolve_irreducible(t, selector)?;
        Ok(Self {
            matrix_key,
            tag_len: t,
            poly,
            initial_state,
        })
    }

    pub fn tag_len(&self) -> usize {
        self.tag_len
    }

    pub fn matrix_key(&self) -> &BitSequence {
        &self.matrix_key
    }

    /// Resolved connection polynomial (bit `j` = coefficient of `x^j`).
    pub fn polynomial(&self) -> u128 {
        self.poly
    }

    /// Unmasked LFSR-Toeplitz hash of `msg`; linear in the message.
    pub fn hash(&self, msg: &BitSequence) -> BitSequence {
        let t = self.tag_len;
        let n = msg.len();
        if n == 0 {
            return BitSequence::zeros(t);
        }
        let mut lfsr = Lfsr::new(self.poly, self.initial_state);
        let stream = lfsr.stream(n + t - 1);
        // tag[i] = XOR_{j : m_j = 1} s_{i+j}: for each set message bit,
        // fold a t-bit window of the stream into the accumulator.
        let mut acc = BitSequence::zeros(t);
        for j in 0..n {
            if msg.get(j).unwrap() {
                acc.xor_window(&stream, j, t);
            }
        }
        acc
    }
}

/// A masked tag together with the length of the message it covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthTag {
    pub masked_tag: BitSequence,
    pub msg_len: usize,
}

/// Smallest tag length `t` with `n * 2^(1-t) <= eps`.
///
/// Computed and compared in log2 space so enormous `n / eps` ratios never
/// overflow; exact power-of-two boundaries resolve to the smaller `t`.
pub fn required_tag_length(msg_len_bits: usize, target_eps: f64) -> usize {
    assert!(msg_len_bits >= 1, "messages shorter than 1 bit are padded");
    assert!(target_eps > 0.0 && target_eps < f64::INFINITY);
    let bound_log2 = |t: usize| (msg_len_bits as f64).log2() + 1.0 - t as f64;
    let eps_log2 = target_eps.log2();
    let guess = ((msg_len_bits as f64).log2() + 1.0 - eps_log2).ceil();
    let mut t = if guess.is_finite() && guess >= 1.0 {
        guess as usize
    } else {
        1
    };
    while t > 1 && bound_log2(t - 1) <= eps_log2 {
        t -= 1;
    }
    while bound_log2(t) > eps_log2 {
        t += 1;
    }
    t
}

/// Masked tag: `(T_LFSR * msg) XOR otp`. The pad must be fresh for every
/// message; the matrix key may be reused.
pub fn tag(
    msg: &BitSequence,
    keys: &WcKeyMaterial,
    otp: &BitSequence,
) -> Result<AuthTag, AuthError> {
    if otp.len() != keys.tag_len() {
        return Err(AuthError::OtpLengthMismatch {
            expected: keys.tag_len(),
            got: otp.len(),
        });
    }
    let masked_tag = keys.hash(msg).xor(otp).expect("tag lengths equal");
    Ok(AuthTag {
        masked_tag,
        msg_len: msg.len(),
    })
}

/// Recompute and compare; requires the sender's key and pad offsets.
pub fn verify(
    msg: &BitSequence,
    received: &AuthTag,
    keys: &WcKeyMaterial,
    otp: &BitSequence,
) -> Result<VerifyOutcome, AuthError> {
    let expected = tag(msg, keys, otp)?;
    Ok(if expected.masked_tag == received.masked_tag {
        VerifyOutcome::Accept
    } else {
        VerifyOutcome::Reject
    })
}

/// Test-vector record for cross-implementation checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WcTestVector {
    pub t: usize,
    pub n: usize,
    pub matrix_key_hex: String,
    pub otp_hex: String,
    pub msg_hex: String,
    pub masked_tag_hex: String,
}

impl WcTestVector {
    pub fn generate(
        keys: &WcKeyMaterial,
        msg: &BitSequence,
        otp: &BitSequence,
    ) -> Result<Self, AuthError> {
        let tag = tag(msg, keys, otp)?;
        Ok(Self {
            t: keys.tag_len(),
            n: msg.len(),
            matrix_key_hex: keys.matrix_key().to_hex(),
            otp_hex: otp.to_hex(),
            msg_hex: msg.to_hex(),
            masked_tag_hex: tag.masked_tag.to_hex(),
        })
    }

    /// Recompute the tag from the recorded inputs and compare.
    pub fn check(&self) -> Result<bool, AuthError> {
        let keys = WcKeyMaterial::from_key(
            BitSequence::from_hex(&self.matrix_key_hex, 2 * self.t).expect("key hex"),
        )?;
        let msg = BitSequence::from_hex(&self.msg_hex, self.n).expect("msg hex");
        let otp = BitSequence::from_hex(&self.otp_hex, self.t).expect("otp hex");
        let tag = tag(&msg, &keys, &otp)?;
        Ok(tag.masked_tag.to_hex() == self.masked_tag_hex)
    }
}
