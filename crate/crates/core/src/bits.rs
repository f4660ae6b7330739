//! Packed bit strings: the universal currency for keys, challenges,
//! responses, syndromes and tags.
//!
//! Bit order is fixed once and for all so that serialized artifacts are
//! comparable across implementations: index 0 is the first protocol bit and
//! bytes pack most-significant-bit first (bit `i` lives in byte `i / 8` at
//! position `7 - i % 8`). The trailing bits of the last byte are kept zero,
//! so equal sequences are byte-equal.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BitsError {
    #[error("length mismatch: {left} vs {right} bits")]
    LengthMismatch { left: usize, right: usize },
    #[error("bit index {index} out of range for sequence of {len} bits")]
    OutOfRange { index: usize, len: usize },
    #[error("hex string holds {available} bits, {requested} requested")]
    HexTooShort { requested: usize, available: usize },
    #[error("invalid hex string: {0}")]
    BadHex(String),
}

/// A packed binary sequence with an explicit bit length.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitSequence {
    bytes: Vec<u8>,
    len: usize,
}

impl BitSequence {
    pub fn new() -> Self {
        Self::default()
    }

    /// All-zero sequence of `n` bits.
    pub fn zeros(n: usize) -> Self {
        Self {
            bytes: vec![0u8; n.div_ceil(8)],
            len: n,
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut seq = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                seq.bytes[i / 8] |= 0x80 >> (i % 8);
            }
        }
        seq
    }

    /// Interpret the first `len` bits of `bytes` (MSB-first per byte).
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self, BitsError> {
        if bytes.len() * 8 < len {
            return Err(BitsError::HexTooShort {
                requested: len,
                available: bytes.len() * 8,
            });
        }
        let mut out = Self {
            bytes: bytes[..len.div_ceil(8)].to_vec(),
            len,
        };
        out.mask_tail();
        Ok(out)
    }

    pub fn from_hex(hex: &str, len: usize) -> Result<Self, BitsError> {
        let bytes = decode_hex(hex)?;
        Self::from_bytes(&bytes, len)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, index: usize) -> Option<bool> {
        if index >= self.len {
            return None;
        }
        Some(self.bytes[index / 8] & (0x80 >> (index % 8)) != 0)
    }

    /// Checked access; out-of-range is an error, never a silent truncation.
    pub fn try_get(&self, index: usize) -> Result<bool, BitsError> {
        self.get(index).ok_or(BitsError::OutOfRange {
            index,
            len: self.len,
        })
    }

    pub fn set(&mut self, index: usize, value: bool) -> Result<(), BitsError> {
        if index >= self.len {
            return Err(BitsError::OutOfRange {
                index,
                len: self.len,
            });
        }
        let mask = 0x80 >> (index % 8);
        if value {
            self.bytes[index / 8] |= mask;
        } else {
            self.bytes[index / 8] &= !mask;
        }
        Ok(())
    }

    pub fn push(&mut self, value: bool) {
        if self.len % 8 == 0 {
            self.bytes.push(0);
        }
        self.len += 1;
        if value {
            self.bytes[(self.len - 1) / 8] |= 0x80 >> ((self.len - 1) % 8);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i).unwrap())
    }

    /// Concatenation; `len(a || b) == len(a) + len(b)`.
    pub fn concat(&self, other: &Self) -> Self {
        let mut out = self.clone();
        if out.len % 8 == 0 {
            out.bytes.extend_from_slice(&other.bytes);
            out.len += other.len;
            out.bytes.truncate(out.len.div_ceil(8));
            out.mask_tail();
        } else {
            for b in other.iter() {
                out.push(b);
            }
        }
        out
    }

    /// Copy of the bits `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self, BitsError> {
        let end = start.checked_add(len).ok_or(BitsError::OutOfRange {
            index: usize::MAX,
            len: self.len,
        })?;
        if end > self.len {
            return Err(BitsError::OutOfRange {
                index: end,
                len: self.len,
            });
        }
        let mut out = Self::zeros(len);
        out.xor_window(self, start, len);
        Ok(out)
    }

    pub fn xor(&self, other: &Self) -> Result<Self, BitsError> {
        if self.len != other.len {
            return Err(BitsError::LengthMismatch {
                left: self.len,
                right: other.len,
            });
        }
        let mut out = self.clone();
        for (a, b) in out.bytes.iter_mut().zip(&other.bytes) {
            *a ^= b;
        }
        Ok(out)
    }

    /// XOR `src[src_start .. src_start + len]` into `self[0 .. len]`.
    ///
    /// This is the inner loop of the Toeplitz hashes, so it works on whole
    /// bytes with a bit offset rather than bit by bit.
    pub fn xor_window(&mut self, src: &Self, src_start: usize, len: usize) {
        debug_assert!(len <= self.len);
        debug_assert!(src_start + len <= src.len);
        if len == 0 {
            return;
        }
        let shift = (src_start % 8) as u32;
        let base = src_start / 8;
        let n_bytes = len.div_ceil(8);
        for k in 0..n_bytes {
            let hi = *src.bytes.get(base + k).unwrap_or(&0);
            let b = if shift == 0 {
                hi
            } else {
                let lo = *src.bytes.get(base + k + 1).unwrap_or(&0);
                (hi << shift) | (lo >> (8 - shift))
            };
            let mask = if k == n_bytes - 1 && len % 8 != 0 {
                0xffu8 << (8 - len % 8)
            } else {
                0xff
            };
            self.bytes[k] ^= b & mask;
        }
        self.mask_tail();
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn ones_fraction(&self) -> f64 {
        if self.len == 0 {
            return 0.0;
        }
        self.count_ones() as f64 / self.len as f64
    }

    pub fn to_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(self.bytes.len() * 2);
        for b in &self.bytes {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }

    fn mask_tail(&mut self) {
        if self.len % 8 != 0 {
            if let Some(last) = self.bytes.last_mut() {
                *last &= 0xffu8 << (8 - self.len % 8);
            }
        }
    }
}

impl fmt::Debug for BitSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitSequence[{} bits: {}]", self.len, self.to_hex())
    }
}

impl FromIterator<bool> for BitSequence {
    fn from_iter<T: IntoIterator<Item = bool>>(iter: T) -> Self {
        let mut seq = Self::new();
        for b in iter {
            seq.push(b);
        }
        seq
    }
}

fn decode_hex(hex: &str) -> Result<Vec<u8>, BitsError> {
    let hex = hex.trim();
    if hex.len() % 2 != 0 {
        return Err(BitsError::BadHex(format!("odd length {}", hex.len())));
    }
    (0..hex.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&hex[i..i + 2], 16)
                .map_err(|_| BitsError::BadHex(hex[i..i + 2].to_string()))
        })
        .collect()
}
