//! Adversarial test harness: empirical attack rates against their
//! analytical bounds.
//!
//! Three attacks are measured. Device impersonation guesses responses from
//! the characterized bias and must beat the per-round cheat bound. Classical
//! tampering forges pad-masked tags and must beat the per-message hashing
//! bound. Intercept-resend measures in a random basis and shows up as an
//! error-rate floor of one quarter on the touched signals.

use serde::{Deserialize, Serialize};

use crate::auth::{self, VerifyOutcome, WcKeyMaterial};
use crate::channel::AdversaryHook;
use crate::hepuf::{
    verifier_measure, verify_round, BellStateId, MeasurementBasis, PairHandle, RoundVerdict,
};
use crate::protocol::{ProtocolError, ScenarioConfig};
use crate::puf;
use crate::rng::{RngHandle, Stream};
use crate::security::hepuf_cheat_bound;

/// Forged-message parameters of the tamper trial.
const WC_MSG_LEN: usize = 32;
const WC_TAG_LEN: usize = 8;
/// Sifted bits sampled per intercept-resend session.
const INTERCEPT_SESSION_BITS: usize = 1000;

/// Measured rate of one attack next to its analytical reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub hook: AdversaryHook,
    pub trials: usize,
    pub successes: usize,
    pub measured_rate: f64,
    /// Analytical bound (impersonation, tampering) or expectation
    /// (intercept-resend error rate).
    pub bound: f64,
    /// Monte-Carlo standard deviation of the measured rate at the bound.
    pub sigma: f64,
    /// Fraction of sessions aborting on the error estimate
    /// (intercept-resend only).
    pub abort_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub seed: u64,
    pub m: usize,
    pub entries: Vec<AttackOutcome>,
}

/// Run `trials` independent trials of each hook against the configured
/// device and channel.
pub fn run_adversary_suite(
    config: &ScenarioConfig,
    hooks: &[AdversaryHook],
    trials: usize,
    seed: u64,
) -> Result<AttackReport, ProtocolError> {
    if trials == 0 {
        return Err(ProtocolError::ConfigInvalid(
            "adversary suite needs at least one trial".into(),
        ));
    }
    let master = RngHandle::new(seed);
    let mut entries = Vec::with_capacity(hooks.len());
    for hook in hooks {
        let outcome = match hook {
            AdversaryHook::GuessPuf { guess_bias } => {
                guess_puf_trials(config, *guess_bias, trials, &master)?
            }
            AdversaryHook::TamperClassical { .. } => tamper_trials(hook.clone(), trials, &master),
            AdversaryHook::InterceptResend { fraction } => {
                intercept_trials(config, *fraction, trials, &master)?
            }
            AdversaryHook::None => control_trials(config, trials, &master)?,
        };
        entries.push(outcome);
    }
    Ok(AttackReport {
        seed,
        m: config.m,
        entries,
    })
}

/// Impersonation without the device: guess both response halves from the
/// bias direction, prepare and announce accordingly, and hope the
/// verifier's correlations hold.
fn guess_puf_trials(
    config: &ScenarioConfig,
    guess_bias: f64,
    trials: usize,
    master: &RngHandle,
) -> Result<AttackOutcome, ProtocolError> {
    let puf = config.puf_config();
    let m = config.m;
    let mut setup = master.fork(Stream::Setup);
    let mut adv = master.fork(Stream::Adversary);
    let mut alice = master.fork(Stream::Alice);

    let mut successes = 0usize;
    for round in 0..trials {
        let challenge = setup.bits(puf.challenge_len);
        let response = puf::eval(&puf, &challenge)?;
        let mut announced = Vec::with_capacity(m);
        let mut verifier_outcomes = Vec::with_capacity(m);
        for j in 0..m {
            // a biased device leans toward ones, so the best blind guess
            // is the heavy value; an unbiased one leaves only coin flips
            let guess_state = if guess_bias > 0.0 { true } else { adv.bit() };
            let guess_basis = if guess_bias > 0.0 { true } else { adv.bit() };
            let mut handle = loop {
                let candidate = PairHandle::forge(
                    BellStateId::from_state_bit(guess_state),
                    MeasurementBasis::from_basis_bit(guess_basis),
                    round,
                    j,
                    &config.channel,
                    &mut adv,
                );
                if !candidate.lost {
                    break candidate;
                }
            };
            announced.push(handle.measure_local()?);
            let true_basis = MeasurementBasis::from_basis_bit(response.get(j).expect("basis half"));
            verifier_outcomes.push(verifier_measure(&mut handle, true_basis, &mut alice)?);
        }
        if verify_round(&response, &announced, &verifier_outcomes)? == RoundVerdict::Accept {
            successes += 1;
        }
    }
    let bound = hepuf_cheat_bound(config.puf_injected_bias, m).linear();
    let sigma = (bound * (1.0 - bound) / trials as f64).sqrt();
    Ok(AttackOutcome {
        hook: AdversaryHook::GuessPuf { guess_bias },
        trials,
        successes,
        measured_rate: successes as f64 / trials as f64,
        bound,
        sigma,
        abort_rate: None,
    })
}

/// Forge pad-masked tags: flip a random nonzero payload pattern and keep
/// the tag. Acceptance rate is bounded by `n 2^(1-t)` over random keys.
fn tamper_trials(hook: AdversaryHook, trials: usize, master: &RngHandle) -> AttackOutcome {
    let mut setup = master.fork(Stream::Setup);
    let mut adv = master.fork(Stream::Adversary);
    let mut successes = 0usize;
    for _ in 0..trials {
        let keys = WcKeyMaterial::from_key(setup.bits(2 * WC_TAG_LEN)).expect("even key");
        let msg = setup.bits(WC_MSG_LEN);
        let otp = setup.bits(WC_TAG_LEN);
        let tag = auth::tag(&msg, &keys, &otp).expect("fresh pad");
        let delta = loop {
            let d = adv.bits(WC_MSG_LEN);
            if d.count_ones() > 0 {
                break d;
            }
        };
        let forged = msg.xor(&delta).expect("equal length");
        if auth::verify(&forged, &tag, &keys, &otp).expect("fresh pad") == VerifyOutcome::Accept {
            successes += 1;
        }
    }
    let bound = WC_MSG_LEN as f64 * 2f64.powi(1 - WC_TAG_LEN as i32);
    let sigma = (bound * (1.0 - bound) / trials as f64).sqrt();
    AttackOutcome {
        hook,
        trials,
        successes,
        measured_rate: successes as f64 / trials as f64,
        bound,
        sigma,
        abort_rate: None,
    }
}

/// Measure-resend sessions: per matched signal the interceptor guesses the
/// basis, decorrelating half the mismatches, so touched signals carry an
/// extra flip probability of one quarter.
fn intercept_trials(
    config: &ScenarioConfig,
    fraction: f64,
    trials: usize,
    master: &RngHandle,
) -> Result<AttackOutcome, ProtocolError> {
    let q = config.channel.flip_probability()?;
    let fraction = fraction.clamp(0.0, 1.0);
    let mut chan = master.fork(Stream::Channel);
    let mut adv = master.fork(Stream::Adversary);
    let sessions = (trials / INTERCEPT_SESSION_BITS).max(1);
    let mut qber_sum = 0.0f64;
    let mut aborts = 0usize;
    for _ in 0..sessions {
        let mut errors = 0usize;
        for _ in 0..INTERCEPT_SESSION_BITS {
            let mut flip = chan.bernoulli(q);
            if fraction > 0.0 && adv.bernoulli(fraction) {
                flip ^= adv.bernoulli(0.25);
            }
            errors += flip as usize;
        }
        let qber = errors as f64 / INTERCEPT_SESSION_BITS as f64;
        qber_sum += qber;
        if qber > config.qber_tol {
            aborts += 1;
        }
    }
    let x = fraction * 0.25;
    let expected = q * (1.0 - x) + (1.0 - q) * x;
    let sigma = (expected * (1.0 - expected) / (sessions * INTERCEPT_SESSION_BITS) as f64).sqrt();
    Ok(AttackOutcome {
        hook: AdversaryHook::InterceptResend { fraction },
        trials: sessions * INTERCEPT_SESSION_BITS,
        successes: aborts,
        measured_rate: qber_sum / sessions as f64,
        bound: expected,
        sigma,
        abort_rate: Some(aborts as f64 / sessions as f64),
    })
}

/// No-adversary control: zero forgeries can be accepted because none are
/// made; at perfect fidelity no session may false-abort.
fn control_trials(
    config: &ScenarioConfig,
    trials: usize,
    master: &RngHandle,
) -> Result<AttackOutcome, ProtocolError> {
    let q = config.channel.flip_probability()?;
    let mut chan = master.fork(Stream::Channel);
    let sessions = (trials / INTERCEPT_SESSION_BITS).max(1);
    let mut aborts = 0usize;
    let mut qber_sum = 0.0;
    for _ in 0..sessions {
        let errors = (0..INTERCEPT_SESSION_BITS)
            .filter(|_| chan.bernoulli(q))
            .count();
        let qber = errors as f64 / INTERCEPT_SESSION_BITS as f64;
        qber_sum += qber;
        if qber > config.qber_tol {
            aborts += 1;
        }
    }
    Ok(AttackOutcome {
        hook: AdversaryHook::None,
        trials: sessions * INTERCEPT_SESSION_BITS,
        successes: aborts,
        measured_rate: qber_sum / sessions as f64,
        bound: q,
        sigma: (q * (1.0 - q) / (sessions * INTERCEPT_SESSION_BITS) as f64).sqrt(),
        abort_rate: Some(aborts as f64 / sessions as f64),
    })
}
