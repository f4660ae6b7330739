//! The moded hybrid-entangled device and the verifier's correlation check.
//!
//! Mode 0 builds the challenge-response database and can be used exactly
//! once; the device then locks and is handed to the prover. Mode 1 turns a
//! challenge into entangled pairs whose Bell state is keyed by the second
//! response half, Mode 2 measures the prover's subsystem in the basis keyed
//! by the first half. The device never exposes the response itself, only
//! pair handles and outcome bits.
//!
//! Pairs are simulated at the correlation level, never as state vectors:
//! the prover outcome is uniform (the local marginal of a Bell state is
//! maximally mixed) and the verifier outcome follows the matching-basis
//! correlation rule with a possible noise flip. The joint outcome is
//! sampled atomically at pair creation, so announcement order cannot leak
//! anything.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitSequence;
use crate::channel::ChannelParams;
use crate::puf::{self, CrpDatabase, PufConfig, PufError};
use crate::rng::RngHandle;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HepufError {
    #[error("mode 0 already relinquished; the database mode works exactly once")]
    DeviceLocked,
    #[error("device still in setup; lock it before prover-side use")]
    DeviceNotLocked,
    #[error("pair index {index} out of range for {m} states per round")]
    IndexOutOfRange { index: usize, m: usize },
    #[error("subsystem already measured")]
    AlreadyMeasured,
    #[error("pair lost in transmission; no detection event")]
    PairLost,
    #[error("verifier measured before the prover announced")]
    ProverOutcomePending,
    #[error("outcome lists have {prover} and {verifier} bits for m = {m}")]
    LengthMismatch {
        m: usize,
        prover: usize,
        verifier: usize,
    },
    #[error(transparent)]
    Puf(#[from] PufError),
}

/// The three fixed behaviors of the device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeviceMode {
    /// Database generation; verifier only, single use.
    Mode0,
    /// Entangled-pair generation keyed by the response state half.
    Mode1,
    /// Local measurement keyed by the response basis half.
    Mode2,
}

/// Bell state selected by one response state bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BellStateId {
    /// Identical matching-basis outcomes; state bit 0.
    PhiPlus,
    /// Opposite matching-basis outcomes; state bit 1.
    PsiMinus,
}

impl BellStateId {
    pub fn from_state_bit(bit: bool) -> Self {
        if bit {
            BellStateId::PsiMinus
        } else {
            BellStateId::PhiPlus
        }
    }
}

/// Measurement basis selected by one response basis bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasurementBasis {
    Z,
    X,
}

impl MeasurementBasis {
    pub fn from_basis_bit(bit: bool) -> Self {
        if bit {
            MeasurementBasis::X
        } else {
            MeasurementBasis::Z
        }
    }
}

/// One generated pair. Consumed at most once per side.
#[derive(Debug, Clone)]
pub struct PairHandle {
    pub state: BellStateId,
    pub pair_index: usize,
    pub round_index: usize,
    pub lost: bool,
    noise_flip: bool,
    prep_basis: MeasurementBasis,
    prover_outcome: bool,
    prover_consumed: bool,
    verifier_consumed: bool,
}

impl PairHandle {
    /// Prover-side measurement for a pair prepared outside the device: an
    /// impersonator holds its own source and measures freely. The honest
    /// path goes through [`HepufDevice::mode2_measure`].
    pub fn measure_local(&mut self) -> Result<bool, HepufError> {
        if self.lost {
            return Err(HepufError::PairLost);
        }
        if self.prover_consumed {
            return Err(HepufError::AlreadyMeasured);
        }
        self.prover_consumed = true;
        Ok(self.prover_outcome)
    }

    /// Build a pair directly from its hidden coordinates. This is the
    /// adversary's entry point: an impersonator prepares a state and basis
    /// of its own choosing without a device.
    pub fn forge(
        state: BellStateId,
        prep_basis: MeasurementBasis,
        round_index: usize,
        pair_index: usize,
        channel: &ChannelParams,
        rng: &mut RngHandle,
    ) -> Self {
        let q = channel.flip_probability().unwrap_or(0.0);
        Self {
            state,
            pair_index,
            round_index,
            lost: !rng.bernoulli(channel.single_transmittance()),
            noise_flip: rng.bernoulli(q),
            prep_basis,
            prover_outcome: rng.bit(),
            prover_consumed: false,
            verifier_consumed: false,
        }
    }
}

/// The device: a weak PUF in a tamper-proof box with the pair source and
/// the keyed measurement.
#[derive(Debug, Clone)]
pub struct HepufDevice {
    puf: PufConfig,
    locked: bool,
}

impl HepufDevice {
    pub fn new(puf: PufConfig) -> Self {
        Self { puf, locked: false }
    }

    pub fn is_locked(&self) -> bool {
        self.locked
    }

    /// Current fixed behavior: the database mode until relinquished, then
    /// the pair-generation mode (measurement alternates with it in prover
    /// hands and never unlocks Mode 0 again).
    pub fn mode(&self) -> DeviceMode {
        if self.locked {
            DeviceMode::Mode1
        } else {
            DeviceMode::Mode0
        }
    }

    /// States generated per challenge (half the response length).
    pub fn states_per_round(&self) -> usize {
        self.puf.response_len / 2
    }

    pub fn config(&self) -> &PufConfig {
        &self.puf
    }

    /// Mode 0: build the database, then lock. Works exactly once.
    pub fn mode0_build(&mut self, challenges: &[BitSequence]) -> Result<CrpDatabase, HepufError> {
        if self.locked {
            return Err(HepufError::DeviceLocked);
        }
        let db = puf::build_database(&self.puf, challenges)?;
        self.locked = true;
        Ok(db)
    }

    /// Mode 1: generate the `j`-th pair for `challenge`. The response is
    /// computed internally; only the handle leaves the box.
    pub fn mode1_generate(
        &self,
        challenge: &BitSequence,
        round_index: usize,
        j: usize,
        channel: &ChannelParams,
        rng: &mut RngHandle,
    ) -> Result<PairHandle, HepufError> {
        if !self.locked {
            return Err(HepufError::DeviceNotLocked);
        }
        let m = self.states_per_round();
        if j >= m {
            return Err(HepufError::IndexOutOfRange { index: j, m });
        }
        let response = puf::eval(&self.puf, challenge)?;
        let basis_bit = response.get(j).expect("within first half");
        let state_bit = response.get(m + j).expect("within second half");
        let q = channel
            .flip_probability()
            .map_err(|_| PufError::BadBias(channel.fidelity))?;
        Ok(PairHandle {
            state: BellStateId::from_state_bit(state_bit),
            pair_index: j,
            round_index,
            lost: !rng.bernoulli(channel.single_transmittance()),
            noise_flip: rng.bernoulli(q),
            prep_basis: MeasurementBasis::from_basis_bit(basis_bit),
            prover_outcome: rng.bit(),
            prover_consumed: false,
            verifier_consumed: false,
        })
    }

    /// Mode 2: reveal the prover-side outcome of a pair.
    pub fn mode2_measure(&self, handle: &mut PairHandle) -> Result<bool, HepufError> {
        if !self.locked {
            return Err(HepufError::DeviceNotLocked);
        }
        handle.measure_local()
    }
}

/// Verifier-side measurement in `basis` (taken from the database).
///
/// A matching basis reproduces the correlation rule (identical outcomes for
/// the plus state, opposite for the singlet, in Z and in X alike), flipped
/// by channel noise; a mismatched basis yields an independent uniform bit.
pub fn verifier_measure(
    handle: &mut PairHandle,
    basis: MeasurementBasis,
    rng: &mut RngHandle,
) -> Result<bool, HepufError> {
    if handle.lost {
        return Err(HepufError::PairLost);
    }
    if !handle.prover_consumed {
        return Err(HepufError::ProverOutcomePending);
    }
    if handle.verifier_consumed {
        return Err(HepufError::AlreadyMeasured);
    }
    handle.verifier_consumed = true;
    if basis == handle.prep_basis {
        let anti = handle.state == BellStateId::PsiMinus;
        Ok(handle.prover_outcome ^ anti ^ handle.noise_flip)
    } else {
        Ok(rng.bit())
    }
}

/// All-or-nothing verdict of one authentication round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoundVerdict {
    Accept,
    Reject,
}

/// Check all `m` correlations of a round against the stored response:
/// outcomes must be identical where the state bit is 0 and opposite where
/// it is 1. A single failure rejects the round.
pub fn verify_round(
    db_response: &BitSequence,
    prover_outcomes: &[bool],
    verifier_outcomes: &[bool],
) -> Result<RoundVerdict, HepufError> {
    let m = db_response.len() / 2;
    if db_response.len() != 2 * m || prover_outcomes.len() != m || verifier_outcomes.len() != m {
        return Err(HepufError::LengthMismatch {
            m,
            prover: prover_outcomes.len(),
            verifier: verifier_outcomes.len(),
        });
    }
    for j in 0..m {
        let expect_equal = !db_response.get(m + j).expect("state half");
        let equal = prover_outcomes[j] == verifier_outcomes[j];
        if equal != expect_equal {
            return Ok(RoundVerdict::Reject);
        }
    }
    Ok(RoundVerdict::Accept)
}
