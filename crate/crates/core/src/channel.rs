//! Statistical models of the lossy quantum channel and the tamperable
//! classical channel, plus the timing figures used for rate conversion.
//!
//! Noise is isotropic (Werner) depolarization: a Bell-state fidelity `F`
//! maps to a matching-basis correlation flip probability `q = 2(1-F)/3`.
//! Attenuation is the only loss mechanism; dark counts and detector
//! inefficiency are excluded, which is why the simulated QBER is flat
//! across attenuation levels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitSequence;
use crate::rng::RngHandle;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("fidelity {0} outside [0.25, 1]")]
    FidelityOutOfRange(f64),
}

/// Channel and timing parameters of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Bell-state fidelity of the source.
    pub fidelity: f64,
    /// Fiber attenuation per side, dB. Total link attenuation is twice this.
    pub attenuation_db_per_side: f64,
    /// Device actuation rate of the authentication subroutine.
    pub hepuf_round_rate_hz: f64,
    /// Effective processed-signal rate of the QKD subroutine.
    pub qkd_signal_rate_hz: f64,
    /// Raw pair generation rate of the source.
    pub source_pair_rate_hz: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            fidelity: 0.9917,
            attenuation_db_per_side: 0.0,
            hepuf_round_rate_hz: 1.0,
            qkd_signal_rate_hz: 13.0,
            source_pair_rate_hz: 3.0e5,
        }
    }
}

impl ChannelParams {
    pub fn with_total_attenuation_db(mut self, total_db: f64) -> Self {
        self.attenuation_db_per_side = total_db / 2.0;
        self
    }

    pub fn total_attenuation_db(&self) -> f64 {
        2.0 * self.attenuation_db_per_side
    }

    /// Survival probability of one transmitted photon.
    pub fn single_transmittance(&self) -> f64 {
        transmittance(self)
    }

    /// Survival probability of a pair with both halves transmitted.
    pub fn pair_survival(&self) -> f64 {
        let eta = transmittance(self);
        eta * eta
    }

    pub fn flip_probability(&self) -> Result<f64, ChannelError> {
        qber_from_fidelity(self.fidelity)
    }
}

/// Per-side transmittance `eta = 10^(-A/10)`.
pub fn transmittance(params: &ChannelParams) -> f64 {
    10f64.powf(-params.attenuation_db_per_side / 10.0)
}

/// Correlation flip probability of the isotropic depolarization model.
pub fn qber_from_fidelity(fidelity: f64) -> Result<f64, ChannelError> {
    if !(0.25..=1.0).contains(&fidelity) {
        return Err(ChannelError::FidelityOutOfRange(fidelity));
    }
    Ok(2.0 * (1.0 - fidelity) / 3.0)
}

/// Modeled wall-clock time of a run.
pub fn elapsed_time(hepuf_states: usize, qkd_signals: usize, params: &ChannelParams) -> f64 {
    hepuf_states as f64 / params.hepuf_round_rate_hz
        + qkd_signals as f64 / params.qkd_signal_rate_hz
}

/// Message classes of the classical channel (also the wire codes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum MsgType {
    Challenge = 0x01,
    Outcome = 0x02,
    SeedInt = 0x03,
    BasisDecl = 0x04,
    PeReveal = 0x05,
    Syndrome = 0x06,
    HashVerify = 0x07,
    PaSeed = 0x08,
    Abort = 0x09,
    Ack = 0x0a,
}

impl MsgType {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0x01 => MsgType::Challenge,
            0x02 => MsgType::Outcome,
            0x03 => MsgType::SeedInt,
            0x04 => MsgType::BasisDecl,
            0x05 => MsgType::PeReveal,
            0x06 => MsgType::Syndrome,
            0x07 => MsgType::HashVerify,
            0x08 => MsgType::PaSeed,
            0x09 => MsgType::Abort,
            0x0a => MsgType::Ack,
            _ => return None,
        })
    }
}

/// One classical message; `tag` is present iff the message class is
/// authenticated in the active scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassicalMessage {
    pub msg_type: MsgType,
    pub payload: BitSequence,
    pub tag: Option<BitSequence>,
}

impl ClassicalMessage {
    pub fn plain(msg_type: MsgType, payload: BitSequence) -> Self {
        Self {
            msg_type,
            payload,
            tag: None,
        }
    }

    pub fn tagged(msg_type: MsgType, payload: BitSequence, tag: BitSequence) -> Self {
        Self {
            msg_type,
            payload,
            tag: Some(tag),
        }
    }
}

/// Man-in-the-middle behavior injected into a run; exactly one mode active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AdversaryHook {
    /// Honest channel.
    None,
    /// Flip a payload bit of matching classical messages, leaving the tag
    /// untouched (a forgery attempt).
    TamperClassical {
        /// Restrict tampering to one message class; `None` tampers all.
        target: Option<MsgType>,
        /// Payload bit to flip (reduced modulo the payload length).
        bit_index: usize,
    },
    /// Measure-and-resend on the quantum path for a fraction of signals.
    InterceptResend { fraction: f64 },
    /// Impersonate the prover without the device, guessing responses from
    /// the characterized bias.
    GuessPuf { guess_bias: f64 },
}

impl AdversaryHook {
    pub fn is_none(&self) -> bool {
        matches!(self, AdversaryHook::None)
    }
}

/// Pass a classical message through the adversary. Quantum-path modes leave
/// classical traffic unchanged.
pub fn deliver(
    msg: &ClassicalMessage,
    hook: &AdversaryHook,
    _rng: &mut RngHandle,
) -> ClassicalMessage {
    match hook {
        AdversaryHook::TamperClassical { target, bit_index }
            if target.is_none() || *target == Some(msg.msg_type) =>
        {
            let mut tampered = msg.clone();
            if !tampered.payload.is_empty() {
                let i = bit_index % tampered.payload.len();
                let flipped = !tampered.payload.get(i).unwrap();
                tampered.payload.set(i, flipped).unwrap();
            }
            tampered
        }
        _ => msg.clone(),
    }
}
