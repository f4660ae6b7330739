//! Key-consumption accounting for the extracted initial key.
//!
//! The pool is the uniform key produced by the extraction step, partitioned
//! into a basis-selection region and an authentication region. Bits are
//! consumed exactly once; drawing past a region boundary is an explicit
//! exhaustion error rather than a wrap-around.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitSequence;

/// The two regions of the partitioned pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// Basis-selection bits (Scenario 1 only).
    Qkd,
    /// Wegman-Carter one-time-pad bits.
    Aut,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Qkd => write!(f, "QKD"),
            Region::Aut => write!(f, "AUT"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("{region} region exhausted: {requested} bits requested, {available} available")]
    Exhausted {
        region: Region,
        requested: usize,
        available: usize,
    },
    #[error("partition point {partition} exceeds pool length {pool_len}")]
    BadPartition { partition: usize, pool_len: usize },
}

/// Partitioned pool with monotone consumption cursors.
#[derive(Debug, Clone)]
pub struct KeyLedger {
    pool: BitSequence,
    partition: usize,
    cursor_qkd: usize,
    cursor_aut: usize,
}

impl KeyLedger {
    /// Partition `pool` into `[0, partition)` for basis bits and
    /// `[partition, len)` for authentication. A partition of 0 dedicates the
    /// whole pool to authentication.
    pub fn new(pool: BitSequence, partition: usize) -> Result<Self, LedgerError> {
        if partition > pool.len() {
            return Err(LedgerError::BadPartition {
                partition,
                pool_len: pool.len(),
            });
        }
        Ok(Self {
            pool,
            partition,
            cursor_qkd: 0,
            cursor_aut: partition,
        })
    }

    /// Next `n_bits` of `region`; the cursor advances so every bit is used
    /// at most once.
    pub fn draw(&mut self, region: Region, n_bits: usize) -> Result<BitSequence, LedgerError> {
        let available = self.remaining(region);
        if n_bits > available {
            return Err(LedgerError::Exhausted {
                region,
                requested: n_bits,
                available,
            });
        }
        let start = match region {
            Region::Qkd => self.cursor_qkd,
            Region::Aut => self.cursor_aut,
        };
        let out = self.pool.slice(start, n_bits).expect("cursor within pool");
        match region {
            Region::Qkd => self.cursor_qkd += n_bits,
            Region::Aut => self.cursor_aut += n_bits,
        }
        Ok(out)
    }

    pub fn remaining(&self, region: Region) -> usize {
        match region {
            Region::Qkd => self.partition - self.cursor_qkd,
            Region::Aut => self.pool.len() - self.cursor_aut,
        }
    }

    pub fn consumed(&self, region: Region) -> usize {
        match region {
            Region::Qkd => self.cursor_qkd,
            Region::Aut => self.cursor_aut - self.partition,
        }
    }

    pub fn pool_len(&self) -> usize {
        self.pool.len()
    }

    pub fn partition_point(&self) -> usize {
        self.partition
    }

    pub fn region_len(&self, region: Region) -> usize {
        match region {
            Region::Qkd => self.partition,
            Region::Aut => self.pool.len() - self.partition,
        }
    }
}
