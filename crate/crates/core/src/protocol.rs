//! Two-party orchestration of the full session: device setup, batched
//! authentication rounds, key partition, the QKD phase with parameter
//! estimation, modeled reconciliation, error verification and privacy
//! amplification, with every classical post-processing message
//! authenticated against the AUT ledger region.
//!
//! Reconciliation is idealized: the leakage `z = ceil(f_ec h2(qber) n)` is
//! charged as an authenticated syndrome message and the estimator is then
//! set to the reference key, while the error-verification hash is really
//! computed and really aborts on mismatch. Both parties run inside one
//! process with synchronized ledgers; a tampered message shows up as a tag
//! rejection, not as divergent ledger state.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auth::{self, AuthTag, VerifyOutcome, WcKeyMaterial};
use crate::bits::BitSequence;
use crate::channel::{
    deliver, elapsed_time, qber_from_fidelity, AdversaryHook, ChannelParams, ClassicalMessage,
    MsgType,
};
use crate::extractor::{extractable_length, rounds_needed, toeplitz_extract, ToeplitzSeed};
use crate::finite_key::{finite_key_optimize, FiniteKeyProblem, FiniteKeySolution};
use crate::hepuf::{verifier_measure, verify_round, HepufDevice, MeasurementBasis, RoundVerdict};
use crate::ledger::{KeyLedger, Region};
use crate::puf::{estimate_bias, CrpDatabase, PufConfig};
use crate::rng::{RngHandle, Stream};
use crate::security::{AuthStage, EpsilonBudget, MessageProfile};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("too many rejected rounds: {attempted} attempts for {target} accepted")]
    TooManyRejects { attempted: usize, target: usize },
    #[error("challenge database exhausted after {0} rounds")]
    DatabaseExhausted(usize),
    #[error("channel produced no detection in {0} attempts")]
    ChannelDead(usize),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Puf(#[from] crate::puf::PufError),
    #[error(transparent)]
    Hepuf(#[from] crate::hepuf::HepufError),
    #[error(transparent)]
    Auth(#[from] crate::auth::AuthError),
    #[error(transparent)]
    Extractor(#[from] crate::extractor::ExtractorError),
    #[error(transparent)]
    Channel(#[from] crate::channel::ChannelError),
    #[error(transparent)]
    Security(#[from] crate::security::SecurityError),
}

/// The two operating modes of the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Bases drawn from the secret pool; no sifting loss, larger pool.
    One,
    /// Bases declared publicly and sifted; the pool only funds
    /// authentication.
    Two,
}

impl Scenario {
    pub fn number(self) -> u8 {
        match self {
            Scenario::One => 1,
            Scenario::Two => 2,
        }
    }
}

/// Everything one run needs to know.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    /// Detected-signal budget of the QKD phase.
    pub n_signals: usize,
    /// States per authentication round.
    pub m: usize,
    /// Accepted-round target override; default sizes from the pool demand.
    pub target_rounds: Option<usize>,
    pub eps: EpsilonBudget,
    /// Sizing bound on the device bias (the measured bias must stay below
    /// it for the pool to come out as provisioned).
    pub delta_assumed: f64,
    /// Abort threshold on the estimated error rate.
    pub qber_tol: f64,
    pub f_ec: f64,
    pub channel: ChannelParams,
    pub challenge_len: usize,
    pub puf_model_seed: u64,
    pub puf_injected_bias: f64,
    /// Extra AUT bits provisioned beyond the planned tag costs.
    pub aut_slack_bits: usize,
    pub adversary: AdversaryHook,
}

impl ScenarioConfig {
    /// Demonstration-scale defaults; callers override what the run varies.
    pub fn new(scenario: Scenario, channel: ChannelParams) -> Self {
        Self {
            scenario,
            n_signals: 10_000,
            m: 44,
            target_rounds: None,
            eps: crate::security::compose_budget(2.5e-11, [1.0, 1.0, 1.0, 1.0]),
            delta_assumed: 0.01,
            qber_tol: 0.05,
            f_ec: 1.06,
            channel,
            challenge_len: 64,
            puf_model_seed: 0x485a_11ab,
            puf_injected_bias: 0.0016,
            aut_slack_bits: 64,
            adversary: AdversaryHook::None,
        }
    }

    pub fn puf_config(&self) -> PufConfig {
        PufConfig {
            challenge_len: self.challenge_len,
            response_len: 2 * self.m,
            model_seed: self.puf_model_seed,
            injected_bias: self.puf_injected_bias,
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        self.eps.validate()?;
        if self.m == 0 {
            return Err(ProtocolError::ConfigInvalid("m must be positive".into()));
        }
        if self.n_signals == 0 {
            return Err(ProtocolError::ConfigInvalid(
                "n_signals must be positive".into(),
            ));
        }
        if !(0.0..0.5).contains(&self.delta_assumed) {
            return Err(ProtocolError::ConfigInvalid(format!(
                "delta_assumed {} outside [0, 0.5)",
                self.delta_assumed
            )));
        }
        if self.eps.eps_a <= 0.0 {
            return Err(ProtocolError::ConfigInvalid(
                "eps_a must be positive (every run authenticates)".into(),
            ));
        }
        self.puf_config().validate()?;
        qber_from_fidelity(self.channel.fidelity)?;
        let c = &self.channel;
        if c.hepuf_round_rate_hz <= 0.0
            || c.qkd_signal_rate_hz <= 0.0
            || c.source_pair_rate_hz <= 0.0
            || c.attenuation_db_per_side < 0.0
        {
            return Err(ProtocolError::ConfigInvalid(
                "channel rates must be positive and attenuation non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// One planned authenticated message.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannedMessage {
    pub stage: AuthStage,
    pub len: usize,
    pub eps_share: f64,
}

/// Pre-run sizing: pool demand, round target, the per-stage budget split
/// and the calibrated message profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub qber_plan: f64,
    pub b_plan: usize,
    pub beta: f64,
    pub planned_ell: usize,
    pub ev_tag_len: usize,
    pub k_qkd: usize,
    pub k_aut: usize,
    pub required_pool: usize,
    pub target_rounds: usize,
    pub db_size: usize,
    pub messages: Vec<PlannedMessage>,
    /// Security exponent for the finite-key program.
    pub s: f64,
    /// Budget handed to the finite-key program (total minus the
    /// authentication share, which is accounted separately).
    pub eps_qkd_for_optimizer: f64,
}

impl RunPlan {
    pub fn stage_share(&self, stage: AuthStage) -> f64 {
        self.messages
            .iter()
            .find(|m| m.stage == stage)
            .map(|m| m.eps_share)
            .expect("stage planned")
    }
}

/// Size a run before touching any quantum state.
pub fn plan(config: &ScenarioConfig) -> Result<RunPlan, ProtocolError> {
    config.validate()?;
    let qber_plan = qber_from_fidelity(config.channel.fidelity)?;
    let scenario2 = config.scenario == Scenario::Two;
    let b_plan = if scenario2 {
        (config.n_signals / 2).max(2)
    } else {
        config.n_signals
    };
    let s = config.eps.exponent();
    let eps_qkd_for_optimizer =
        (config.eps.eps_qkd - config.eps.eps_a).max(config.eps.eps_qkd / 2.0);

    let mut problem = FiniteKeyProblem::new(b_plan, qber_plan, s, config.f_ec);
    problem.eps_qkd = Some(eps_qkd_for_optimizer);
    let plan_sol = finite_key_optimize(&problem);
    let (beta, planned_ell, n_plan, z_plan) = if plan_sol.feasible {
        (
            plan_sol.beta,
            plan_sol.ell,
            plan_sol.n,
            plan_sol.syndrome_len,
        )
    } else {
        // still provision the transcript; the run will release no key
        let k = (b_plan / 4).max(1);
        let n = b_plan - k;
        let z =
            (config.f_ec * crate::security::binary_entropy(qber_plan) * n as f64).ceil() as usize;
        (0.25, 0, n, z)
    };
    let ev_tag_len = problem.ev_tag_len_resolved();
    let k_plan = ((beta * b_plan as f64).floor() as usize).clamp(1, b_plan - 1);

    let k_qkd = if scenario2 { 0 } else { config.n_signals };
    // message set: the seed confirmation, the (scenario 2) two-sided basis
    // declaration, then one message per post-processing stage
    let stage_count = if scenario2 { 6 } else { 5 };
    let share = config.eps.eps_a / stage_count as f64;
    let ev_msg = (n_plan + ev_tag_len).saturating_sub(1) + ev_tag_len;
    let pa_msg = (n_plan + planned_ell.max(1)).saturating_sub(1);

    // the seed length depends on the pool, which depends on the tag costs,
    // which depend on the seed length; iterate to the fixed point
    let mut sint_len = 1usize;
    let mut k_aut = 0usize;
    let mut target_rounds = config.target_rounds.unwrap_or(1);
    let mut messages = Vec::new();
    for _ in 0..8 {
        messages = vec![PlannedMessage {
            stage: AuthStage::SeedInt,
            len: sint_len,
            eps_share: share,
        }];
        if scenario2 {
            // two declarations share the basis stage budget
            messages.push(PlannedMessage {
                stage: AuthStage::Basis,
                len: config.n_signals,
                eps_share: share / 2.0,
            });
        }
        messages.extend([
            PlannedMessage {
                stage: AuthStage::ParamEst,
                len: 64 + k_plan,
                eps_share: share,
            },
            PlannedMessage {
                stage: AuthStage::Syndrome,
                len: z_plan.max(1),
                eps_share: share,
            },
            PlannedMessage {
                stage: AuthStage::ErrorVerify,
                len: ev_msg,
                eps_share: share,
            },
            PlannedMessage {
                stage: AuthStage::PaSeed,
                len: pa_msg,
                eps_share: share,
            },
        ]);
        let mut otp_bits = 0usize;
        for msg in &messages {
            let mut t = auth::required_tag_length(msg.len.max(1), msg.eps_share);
            if msg.stage == AuthStage::Basis {
                t *= 2; // both declarations
            }
            otp_bits += t;
        }
        let new_k_aut = otp_bits + config.aut_slack_bits;
        let required = k_qkd + new_k_aut;
        let new_target = config.target_rounds.unwrap_or(rounds_needed(
            required,
            config.m,
            config.delta_assumed,
            config.eps.eps_stat,
        )?);
        let raw = 2 * new_target * config.m;
        let pool_plan = extractable_length(raw, config.delta_assumed, config.eps.eps_stat);
        let new_sint = (raw + pool_plan).saturating_sub(1).max(1);
        let stable = new_k_aut == k_aut && new_target == target_rounds && new_sint == sint_len;
        k_aut = new_k_aut;
        target_rounds = new_target;
        sint_len = new_sint;
        if stable {
            break;
        }
    }

    Ok(RunPlan {
        qber_plan,
        b_plan,
        beta,
        planned_ell,
        ev_tag_len,
        k_qkd,
        k_aut,
        required_pool: k_qkd + k_aut,
        target_rounds,
        // enough one-time entries to cover the whole reject budget
        db_size: 10 * target_rounds + 16,
        messages,
        s,
        eps_qkd_for_optimizer,
    })
}

/// The calculator-facing cost profile of this plan (per-stage cumulative
/// lengths as the cost model counts them).
pub fn planned_profile(config: &ScenarioConfig, plan: &RunPlan) -> MessageProfile {
    let scenario2 = config.scenario == Scenario::Two;
    let find = |stage: AuthStage| {
        plan.messages
            .iter()
            .find(|m| m.stage == stage)
            .map_or(0, |m| m.len)
    };
    MessageProfile {
        basis: if scenario2 { plan.b_plan } else { 0 },
        pe: find(AuthStage::ParamEst),
        syndrome: find(AuthStage::Syndrome),
        ev: find(AuthStage::ErrorVerify),
        pa_seed: find(AuthStage::PaSeed),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    AliceToBob,
    BobToAlice,
}

/// One transcript line: what crossed the classical channel and whether its
/// authentication held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub msg_type: MsgType,
    pub stage: Option<AuthStage>,
    pub payload_len: usize,
    pub tag_len: usize,
    /// Verification result for authenticated messages; `None` for plain ones.
    pub accepted: Option<bool>,
    /// Delivered payload (post-adversary), packed hex.
    pub payload_hex: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbortReason {
    QberExceeded,
    EvMismatch,
    AuthReject,
    LedgerExhausted,
}

/// Ordered record of the classical exchange.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub entries: Vec<TranscriptEntry>,
    pub abort_reason: Option<AbortReason>,
}

impl SessionTranscript {
    fn record_plain(
        &mut self,
        direction: Direction,
        msg: &ClassicalMessage,
        stage: Option<AuthStage>,
    ) {
        self.entries.push(TranscriptEntry {
            direction,
            msg_type: msg.msg_type,
            stage,
            payload_len: msg.payload.len(),
            tag_len: 0,
            accepted: None,
            payload_hex: msg.payload.to_hex(),
        });
    }
}

/// Raw keys and everything derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct RawKeyRecord {
    pub x: BitSequence,
    pub y: BitSequence,
    /// Kept positions of the detected signals (always full in Scenario 1).
    pub sift_mask: Vec<bool>,
    pub pe_subset: Vec<usize>,
    pub qber_est: f64,
    pub x_remainder: BitSequence,
    pub x_hat: BitSequence,
    pub syndrome_len: usize,
    pub key_a: BitSequence,
    pub key_b: BitSequence,
}

/// Output of the authentication phase.
#[derive(Debug)]
pub struct HepufPhaseOutput {
    pub ledger: KeyLedger,
    pub accepted_rounds: usize,
    pub attempted_rounds: usize,
    pub delta_hat: f64,
    pub raw_len: usize,
    pub pool_len: usize,
    pub pair_regenerations: usize,
    /// Seed as sent and as received (they differ only under tampering).
    pub seed_sent: BitSequence,
    pub seed_received: BitSequence,
}

/// Per-party deterministic substreams of one run.
pub struct PartyRngs {
    pub alice: RngHandle,
    pub bob: RngHandle,
    pub channel: RngHandle,
    pub adversary: RngHandle,
    pub setup: RngHandle,
    pub wc_keys: RngHandle,
}

impl PartyRngs {
    pub fn new(master: &RngHandle) -> Self {
        Self {
            alice: master.fork(Stream::Alice),
            bob: master.fork(Stream::Bob),
            channel: master.fork(Stream::Channel),
            adversary: master.fork(Stream::Adversary),
            setup: master.fork(Stream::Setup),
            wc_keys: master.fork(Stream::Custom(1)),
        }
    }
}

const MAX_PAIR_REGEN: usize = 10_000_000;

/// Run the batched authentication rounds until `target_rounds` accept, then
/// extract the pool and partition it.
pub fn run_hepuf_phase(
    config: &ScenarioConfig,
    plan: &RunPlan,
    device: &HepufDevice,
    db: &CrpDatabase,
    rngs: &mut PartyRngs,
    transcript: &mut SessionTranscript,
) -> Result<HepufPhaseOutput, ProtocolError> {
    let m = config.m;
    let mut accepted = 0usize;
    let mut attempted = 0usize;
    let mut pair_regens = 0usize;
    let mut responses: Vec<BitSequence> = Vec::with_capacity(plan.target_rounds);
    let mut next_challenge = 0usize;

    while accepted < plan.target_rounds {
        if attempted >= 10 * plan.target_rounds.max(1) {
            return Err(ProtocolError::TooManyRejects {
                attempted,
                target: plan.target_rounds,
            });
        }
        let Some(challenge) = db.challenge(next_challenge) else {
            return Err(ProtocolError::DatabaseExhausted(next_challenge));
        };
        next_challenge += 1;
        attempted += 1;

        // challenge travels on the public channel
        let challenge_msg = ClassicalMessage::plain(MsgType::Challenge, challenge.clone());
        let delivered_challenge = deliver(&challenge_msg, &config.adversary, &mut rngs.adversary);
        transcript.record_plain(Direction::AliceToBob, &delivered_challenge, None);

        let mut prover_outcomes = Vec::with_capacity(m);
        let mut handles = Vec::with_capacity(m);
        for j in 0..m {
            // lost pairs regenerate within the same actuation slot
            let mut regen = 0usize;
            let handle = loop {
                let candidate = device.mode1_generate(
                    &delivered_challenge.payload,
                    attempted - 1,
                    j,
                    &config.channel,
                    &mut rngs.channel,
                )?;
                if !candidate.lost {
                    break candidate;
                }
                regen += 1;
                if regen > MAX_PAIR_REGEN {
                    return Err(ProtocolError::ChannelDead(regen));
                }
            };
            pair_regens += regen;
            let mut handle = handle;
            prover_outcomes.push(device.mode2_measure(&mut handle)?);
            handles.push(handle);
        }

        // outcome announcement, also public
        let outcome_msg =
            ClassicalMessage::plain(MsgType::Outcome, BitSequence::from_bools(&prover_outcomes));
        let delivered_outcomes = deliver(&outcome_msg, &config.adversary, &mut rngs.adversary);
        transcript.record_plain(Direction::BobToAlice, &delivered_outcomes, None);
        let announced: Vec<bool> = delivered_outcomes.payload.iter().collect();

        // the verifier measures against her database entry
        let db_response = db
            .response(challenge)
            .expect("challenge drawn from the database");
        let mut verifier_outcomes = Vec::with_capacity(m);
        for (j, handle) in handles.iter_mut().enumerate() {
            let basis = MeasurementBasis::from_basis_bit(db_response.get(j).expect("basis half"));
            verifier_outcomes.push(verifier_measure(handle, basis, &mut rngs.alice)?);
        }
        if verify_round(&db_response, &announced, &verifier_outcomes)? == RoundVerdict::Accept {
            accepted += 1;
            responses.push(db_response);
        }
    }

    // both sides hold the accepted responses; estimate the bias and extract
    let est = estimate_bias(&responses, 0.99)?;
    let raw = responses
        .iter()
        .fold(BitSequence::new(), |acc, r| acc.concat(r));
    let raw_len = raw.len();
    let pool_len = extractable_length(raw_len, est.delta_hat, config.eps.eps_stat);

    let seed_bits = rngs
        .alice
        .bits(ToeplitzSeed::required_seed_len(raw_len, pool_len));
    let seed_msg = ClassicalMessage::plain(MsgType::SeedInt, seed_bits.clone());
    let delivered_seed = deliver(&seed_msg, &config.adversary, &mut rngs.adversary);
    transcript.record_plain(
        Direction::AliceToBob,
        &delivered_seed,
        Some(AuthStage::SeedInt),
    );

    let seed = ToeplitzSeed::new(seed_bits.clone(), raw_len, pool_len)?;
    let pool = toeplitz_extract(&raw, &seed)?;
    let partition = plan.k_qkd.min(pool.len());
    let ledger = KeyLedger::new(pool, partition).expect("partition clamped to pool");

    Ok(HepufPhaseOutput {
        ledger,
        accepted_rounds: accepted,
        attempted_rounds: attempted,
        delta_hat: est.delta_hat,
        raw_len,
        pool_len,
        pair_regenerations: pair_regens,
        seed_sent: seed_bits,
        seed_received: delivered_seed.payload,
    })
}

/// Output of the QKD phase.
#[derive(Debug)]
pub struct QkdPhaseOutput {
    pub record: Option<RawKeyRecord>,
    pub abort: Option<AbortReason>,
    pub solution: Option<FiniteKeySolution>,
    pub measurement_ran: bool,
    pub b_sifted: usize,
    pub qber_est: f64,
    pub qber_true: f64,
    pub pairs_generated: usize,
    pub ell: usize,
}

/// Authenticated side of the classical channel: per-stage hash keys plus
/// the send-verify path every post-processing message goes through.
struct AuthChannel {
    keys: HashMap<AuthStage, WcKeyMaterial>,
    adversary: AdversaryHook,
}

enum SendError {
    Exhausted,
    Rejected,
}

impl AuthChannel {
    fn new(adversary: AdversaryHook) -> Self {
        Self {
            keys: HashMap::new(),
            adversary,
        }
    }

    /// Stage key, created on first use at the tag length the actual message
    /// demands. Matrix keys come from the device-pairing stream: with
    /// pad-masked tags they are reusable, so they amortize like the
    /// database and are not charged to the per-session pool.
    fn stage_keys(
        &mut self,
        stage: AuthStage,
        tag_len: usize,
        wc_rng: &mut RngHandle,
    ) -> WcKeyMaterial {
        self.keys
            .entry(stage)
            .or_insert_with(|| {
                WcKeyMaterial::from_key(wc_rng.bits(2 * tag_len)).expect("even key length")
            })
            .clone()
    }

    /// Authenticate, deliver, verify. Returns the receiver's payload view.
    #[allow(clippy::too_many_arguments)]
    fn send(
        &mut self,
        plan: &RunPlan,
        ledger: &mut KeyLedger,
        wc_rng: &mut RngHandle,
        adv_rng: &mut RngHandle,
        transcript: &mut SessionTranscript,
        direction: Direction,
        stage: AuthStage,
        msg_type: MsgType,
        payload: BitSequence,
    ) -> Result<BitSequence, SendError> {
        // empty payloads are padded to one bit before tagging
        let payload = if payload.is_empty() {
            BitSequence::zeros(1)
        } else {
            payload
        };
        let share = plan.stage_share(stage);
        let t = auth::required_tag_length(payload.len(), share);
        let keys = self.stage_keys(stage, t, wc_rng);
        // a stage key fixes its tag length; later messages of the stage
        // reuse it (their lengths match by construction)
        let t = keys.tag_len();
        let otp = match ledger.draw(Region::Aut, t) {
            Ok(bits) => bits,
            Err(_) => return Err(SendError::Exhausted),
        };
        let tag = auth::tag(&payload, &keys, &otp).expect("pad drawn at tag length");
        let msg = ClassicalMessage::tagged(msg_type, payload, tag.masked_tag);
        let delivered = deliver(&msg, &self.adversary, adv_rng);
        let verdict = auth::verify(
            &delivered.payload,
            &AuthTag {
                masked_tag: delivered.tag.clone().expect("tag attached"),
                msg_len: delivered.payload.len(),
            },
            &keys,
            &otp,
        )
        .expect("pad length fixed");
        let accepted = verdict == VerifyOutcome::Accept;
        transcript.entries.push(TranscriptEntry {
            direction,
            msg_type,
            stage: Some(stage),
            payload_len: delivered.payload.len(),
            tag_len: t,
            accepted: Some(accepted),
            payload_hex: delivered.payload.to_hex(),
        });
        if accepted {
            Ok(delivered.payload)
        } else {
            Err(SendError::Rejected)
        }
    }

    /// Best-effort authenticated abort notice; exhaustion here does not
    /// mask the original abort reason.
    #[allow(clippy::too_many_arguments)]
    fn send_abort(
        &mut self,
        plan: &RunPlan,
        ledger: &mut KeyLedger,
        wc_rng: &mut RngHandle,
        adv_rng: &mut RngHandle,
        transcript: &mut SessionTranscript,
        direction: Direction,
        stage: AuthStage,
        reason: AbortReason,
    ) {
        let code = match reason {
            AbortReason::QberExceeded => 1u8,
            AbortReason::EvMismatch => 2,
            AbortReason::AuthReject => 3,
            AbortReason::LedgerExhausted => 4,
        };
        let payload = BitSequence::from_bytes(&[code], 8).expect("one byte");
        let _ = self.send(
            plan,
            ledger,
            wc_rng,
            adv_rng,
            transcript,
            direction,
            stage,
            MsgType::Abort,
            payload,
        );
    }
}

/// Run measurement, sifting and the authenticated post-processing stages.
pub fn run_qkd_phase(
    config: &ScenarioConfig,
    plan: &RunPlan,
    ledger: &mut KeyLedger,
    seed_sent: &BitSequence,
    seed_received: &BitSequence,
    rngs: &mut PartyRngs,
    transcript: &mut SessionTranscript,
) -> Result<QkdPhaseOutput, ProtocolError> {
    let scenario2 = config.scenario == Scenario::Two;
    let n = config.n_signals;
    let q = config.channel.flip_probability()?;
    let survival = config.channel.pair_survival();
    let mut chan = AuthChannel::new(config.adversary.clone());
    let mut out = QkdPhaseOutput {
        record: None,
        abort: None,
        solution: None,
        measurement_ran: false,
        b_sifted: 0,
        qber_est: 0.0,
        qber_true: 0.0,
        pairs_generated: 0,
        ell: 0,
    };
    let fail =
        |out: &mut QkdPhaseOutput, transcript: &mut SessionTranscript, reason: AbortReason| {
            out.abort = Some(reason);
            transcript.abort_reason = Some(reason);
        };

    // the first authenticated exchange confirms the extraction seed
    // retroactively: its pad-masked tag rides alone and the receiver
    // recomputes it over the seed as received
    {
        let share = plan.stage_share(AuthStage::SeedInt);
        let t = auth::required_tag_length(seed_sent.len().max(1), share);
        let keys = chan.stage_keys(AuthStage::SeedInt, t, &mut rngs.wc_keys);
        let otp = match ledger.draw(Region::Aut, keys.tag_len()) {
            Ok(bits) => bits,
            Err(_) => {
                fail(&mut out, transcript, AbortReason::LedgerExhausted);
                return Ok(out);
            }
        };
        let sent_tag = auth::tag(seed_sent, &keys, &otp).expect("pad drawn at tag length");
        let msg = ClassicalMessage::tagged(
            MsgType::Ack,
            BitSequence::zeros(1),
            sent_tag.masked_tag.clone(),
        );
        let delivered = deliver(&msg, &config.adversary, &mut rngs.adversary);
        let expect_tag = auth::tag(seed_received, &keys, &otp).expect("pad drawn at tag length");
        let accepted = delivered.tag.as_ref() == Some(&expect_tag.masked_tag);
        transcript.entries.push(TranscriptEntry {
            direction: Direction::AliceToBob,
            msg_type: MsgType::Ack,
            stage: Some(AuthStage::SeedInt),
            payload_len: 1,
            tag_len: keys.tag_len(),
            accepted: Some(accepted),
            payload_hex: delivered.payload.to_hex(),
        });
        if !accepted {
            fail(&mut out, transcript, AbortReason::AuthReject);
            return Ok(out);
        }
    }

    // --- measurement -----------------------------------------------------
    let (alice_bases, bob_bases) = if scenario2 {
        (rngs.alice.bits(n), rngs.bob.bits(n))
    } else {
        // both parties read the same pool region; a draw past the region
        // is the under-provisioned path
        match ledger.draw(Region::Qkd, n) {
            Ok(bits) => (bits.clone(), bits),
            Err(_) => {
                fail(&mut out, transcript, AbortReason::LedgerExhausted);
                return Ok(out);
            }
        }
    };

    let intercept_fraction = match &config.adversary {
        AdversaryHook::InterceptResend { fraction } => fraction.clamp(0.0, 1.0),
        _ => 0.0,
    };
    let mut alice_raw = BitSequence::zeros(n);
    let mut bob_raw = BitSequence::zeros(n);
    let mut pairs_generated = 0usize;
    for i in 0..n {
        pairs_generated += rngs.channel.geometric(survival.max(1e-12)) as usize;
        let alice_bit = rngs.channel.bit();
        let bases_match = alice_bases.get(i) == bob_bases.get(i);
        let bob_bit = if bases_match {
            let mut flip = rngs.channel.bernoulli(q);
            if intercept_fraction > 0.0 && rngs.adversary.bernoulli(intercept_fraction) {
                // measure-resend in a random basis decorrelates half the
                // time, costing an extra flip with probability 1/4
                flip ^= rngs.adversary.bernoulli(0.25);
            }
            alice_bit ^ flip
        } else {
            rngs.channel.bit()
        };
        if alice_bit {
            alice_raw.set(i, true).unwrap();
        }
        if bob_bit {
            bob_raw.set(i, true).unwrap();
        }
    }
    out.measurement_ran = true;
    out.pairs_generated = pairs_generated;

    // --- sifting -----------------------------------------------------------
    let sift_mask: Vec<bool> = if scenario2 {
        let bob_decl = match chan.send(
            plan,
            ledger,
            &mut rngs.wc_keys,
            &mut rngs.adversary,
            transcript,
            Direction::BobToAlice,
            AuthStage::Basis,
            MsgType::BasisDecl,
            bob_bases.clone(),
        ) {
            Ok(p) => p,
            Err(e) => {
                fail(&mut out, transcript, abort_reason(e));
                return Ok(out);
            }
        };
        // Alice's declaration completes the exchange; each side then keeps
        // the positions where the verified strings agree
        if let Err(e) = chan.send(
            plan,
            ledger,
            &mut rngs.wc_keys,
            &mut rngs.adversary,
            transcript,
            Direction::AliceToBob,
            AuthStage::Basis,
            MsgType::BasisDecl,
            alice_bases.clone(),
        ) {
            fail(&mut out, transcript, abort_reason(e));
            return Ok(out);
        }
        (0..n)
            .map(|i| alice_bases.get(i) == bob_decl.get(i))
            .collect()
    } else {
        vec![true; n]
    };

    let x: BitSequence = (0..n)
        .filter(|&i| sift_mask[i])
        .map(|i| alice_raw.get(i).unwrap())
        .collect();
    let y: BitSequence = (0..n)
        .filter(|&i| sift_mask[i])
        .map(|i| bob_raw.get(i).unwrap())
        .collect();
    let b = x.len();
    out.b_sifted = b;
    out.qber_true = if b == 0 {
        0.0
    } else {
        x.xor(&y).expect("equal length").count_ones() as f64 / b as f64
    };
    if b < 8 {
        fail(&mut out, transcript, AbortReason::QberExceeded);
        return Ok(out);
    }

    // --- parameter estimation ----------------------------------------------
    let k = ((plan.beta * b as f64).floor() as usize).clamp(1, b - 1);
    let pe_seed = rngs.alice.u64();
    let mut pe_subset = RngHandle::new(pe_seed)
        .fork(Stream::Custom(7))
        .sample_indices(k, b);
    pe_subset.sort_unstable();
    let revealed: BitSequence = pe_subset.iter().map(|&i| x.get(i).unwrap()).collect();
    let pe_payload = BitSequence::from_bytes(&pe_seed.to_be_bytes(), 64)
        .unwrap()
        .concat(&revealed);
    let pe_view = match chan.send(
        plan,
        ledger,
        &mut rngs.wc_keys,
        &mut rngs.adversary,
        transcript,
        Direction::AliceToBob,
        AuthStage::ParamEst,
        MsgType::PeReveal,
        pe_payload,
    ) {
        Ok(p) => p,
        Err(e) => {
            fail(&mut out, transcript, abort_reason(e));
            return Ok(out);
        }
    };
    // the receiver recomputes the subset from the delivered seed
    let mut seed_bytes = [0u8; 8];
    seed_bytes.copy_from_slice(&pe_view.to_bytes()[..8]);
    let mut bob_subset = RngHandle::new(u64::from_be_bytes(seed_bytes))
        .fork(Stream::Custom(7))
        .sample_indices(k, b);
    bob_subset.sort_unstable();
    let mismatches = bob_subset
        .iter()
        .enumerate()
        .filter(|(slot, &i)| pe_view.get(64 + slot).unwrap() != y.get(i).unwrap())
        .count();
    let qber_est = mismatches as f64 / k as f64;
    out.qber_est = qber_est;
    if qber_est > config.qber_tol {
        chan.send_abort(
            plan,
            ledger,
            &mut rngs.wc_keys,
            &mut rngs.adversary,
            transcript,
            Direction::BobToAlice,
            AuthStage::ParamEst,
            AbortReason::QberExceeded,
        );
        fail(&mut out, transcript, AbortReason::QberExceeded);
        return Ok(out);
    }

    let keep: Vec<usize> = (0..b)
        .filter(|i| pe_subset.binary_search(i).is_err())
        .collect();
    let x_rem: BitSequence = keep.iter().map(|&i| x.get(i).unwrap()).collect();
    let y_rem: BitSequence = keep.iter().map(|&i| y.get(i).unwrap()).collect();
    let n_rem = x_rem.len();

    // --- reconciliation (idealized, leakage charged) -------------------------
    let z = ((config.f_ec * crate::security::binary_entropy(qber_est) * n_rem as f64).ceil()
        as usize)
        .min(n_rem);
    let x_hat = if z > 0 {
        let syndrome = rngs.alice.bits(z);
        if let Err(e) = chan.send(
            plan,
            ledger,
            &mut rngs.wc_keys,
            &mut rngs.adversary,
            transcript,
            Direction::AliceToBob,
            AuthStage::Syndrome,
            MsgType::Syndrome,
            syndrome,
        ) {
            fail(&mut out, transcript, abort_reason(e));
            return Ok(out);
        }
        x_rem.clone()
    } else {
        // nothing leaked, nothing corrected
        y_rem.clone()
    };

    // --- error verification ---------------------------------------------------
    let ev_len = plan.ev_tag_len.min(n_rem).max(1);
    let ev_seed_bits = rngs
        .alice
        .bits(ToeplitzSeed::required_seed_len(n_rem, ev_len));
    let ev_seed = ToeplitzSeed::new(ev_seed_bits.clone(), n_rem, ev_len)?;
    let hash_a = toeplitz_extract(&x_rem, &ev_seed)?;
    let ev_payload = ev_seed_bits.concat(&hash_a);
    let ev_view = match chan.send(
        plan,
        ledger,
        &mut rngs.wc_keys,
        &mut rngs.adversary,
        transcript,
        Direction::AliceToBob,
        AuthStage::ErrorVerify,
        MsgType::HashVerify,
        ev_payload,
    ) {
        Ok(p) => p,
        Err(e) => {
            fail(&mut out, transcript, abort_reason(e));
            return Ok(out);
        }
    };
    let seed_view = ev_view.slice(0, ev_view.len() - ev_len).expect("seed part");
    let hash_view = ev_view
        .slice(ev_view.len() - ev_len, ev_len)
        .expect("hash part");
    let hash_b = toeplitz_extract(&x_hat, &ToeplitzSeed::new(seed_view, n_rem, ev_len)?)?;
    if hash_b != hash_view {
        chan.send_abort(
            plan,
            ledger,
            &mut rngs.wc_keys,
            &mut rngs.adversary,
            transcript,
            Direction::BobToAlice,
            AuthStage::ErrorVerify,
            AbortReason::EvMismatch,
        );
        fail(&mut out, transcript, AbortReason::EvMismatch);
        return Ok(out);
    }

    // --- privacy amplification -------------------------------------------------
    let mut problem = FiniteKeyProblem::new(b, qber_est, plan.s, config.f_ec);
    problem.eps_qkd = Some(plan.eps_qkd_for_optimizer);
    problem.fixed_k = Some(k);
    problem.syndrome_len = Some(z);
    problem.ev_tag_len = Some(ev_len);
    let solution = finite_key_optimize(&problem);
    let ell = if solution.feasible { solution.ell } else { 0 };
    let (key_a, key_b) = if ell > 0 {
        let pa_seed_bits = rngs.alice.bits(ToeplitzSeed::required_seed_len(n_rem, ell));
        let pa_view = match chan.send(
            plan,
            ledger,
            &mut rngs.wc_keys,
            &mut rngs.adversary,
            transcript,
            Direction::AliceToBob,
            AuthStage::PaSeed,
            MsgType::PaSeed,
            pa_seed_bits.clone(),
        ) {
            Ok(p) => p,
            Err(e) => {
                fail(&mut out, transcript, abort_reason(e));
                return Ok(out);
            }
        };
        let key_a = toeplitz_extract(&x_rem, &ToeplitzSeed::new(pa_seed_bits, n_rem, ell)?)?;
        let key_b = toeplitz_extract(&x_hat, &ToeplitzSeed::new(pa_view, n_rem, ell)?)?;
        (key_a, key_b)
    } else {
        (BitSequence::new(), BitSequence::new())
    };

    out.ell = ell;
    out.solution = Some(solution);
    out.record = Some(RawKeyRecord {
        x,
        y,
        sift_mask,
        pe_subset,
        qber_est,
        x_remainder: x_rem,
        x_hat,
        syndrome_len: z,
        key_a,
        key_b,
    });
    Ok(out)
}

fn abort_reason(e: SendError) -> AbortReason {
    match e {
        SendError::Exhausted => AbortReason::LedgerExhausted,
        SendError::Rejected => AbortReason::AuthReject,
    }
}

/// Full session result; everything a run grid needs, serializable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub seed: u64,
    pub scenario: u8,
    pub attenuation_db_total: f64,
    pub fidelity: f64,
    pub m: usize,
    pub target_rounds: usize,
    pub accepted_rounds: usize,
    pub attempted_rounds: usize,
    pub hepuf_states: usize,
    pub pair_regenerations: usize,
    pub delta_hat: f64,
    pub raw_len: usize,
    pub pool_len: usize,
    pub required_pool: usize,
    pub k_qkd: usize,
    pub k_aut: usize,
    pub qkd_drawn: usize,
    pub aut_drawn: usize,
    pub pool_remaining: usize,
    pub n_signals: usize,
    pub pairs_generated: usize,
    pub b_sifted: usize,
    pub qber_est: f64,
    pub qber_sifted_true: f64,
    pub ell: usize,
    pub elapsed_s: f64,
    pub skr_bps: f64,
    pub abort_reason: Option<AbortReason>,
    pub eps: EpsilonBudget,
    pub finite_key: Option<FiniteKeySolution>,
    pub transcript: SessionTranscript,
    #[serde(skip)]
    pub raw_record: Option<RawKeyRecord>,
}

impl SessionReport {
    pub const CSV_HEADER: &'static str =
        "scenario,attenuation_db_total,N_accepted,m,delta_hat,K_qkd,K_aut,qber_pct,ell,skr_bps,abort_reason";

    pub fn csv_row(&self) -> String {
        let abort = match self.abort_reason {
            None => String::new(),
            Some(r) => format!("{r:?}"),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.scenario,
            self.attenuation_db_total,
            self.accepted_rounds,
            self.m,
            self.delta_hat,
            self.k_qkd,
            self.k_aut,
            100.0 * self.qber_sifted_true,
            self.ell,
            self.skr_bps,
            abort
        )
    }

    /// Keys released by the run, when it completed.
    pub fn keys(&self) -> Option<(&BitSequence, &BitSequence)> {
        self.raw_record.as_ref().map(|r| (&r.key_a, &r.key_b))
    }
}

/// Chain setup, the authentication phase, key partition and the QKD phase.
pub fn run_full(config: &ScenarioConfig, seed: u64) -> Result<SessionReport, ProtocolError> {
    let plan = plan(config)?;
    let master = RngHandle::new(seed);
    let mut rngs = PartyRngs::new(&master);
    let mut transcript = SessionTranscript::default();

    // setup: distinct challenges, then the one-shot database mode
    let puf = config.puf_config();
    let mut device = HepufDevice::new(puf.clone());
    let mut challenges = Vec::with_capacity(plan.db_size);
    let mut seen = std::collections::HashSet::new();
    while challenges.len() < plan.db_size {
        let c = rngs.setup.bits(puf.challenge_len);
        if seen.insert(c.to_hex()) {
            challenges.push(c);
        }
    }
    let db = device.mode0_build(&challenges)?;

    let hepuf_out = run_hepuf_phase(config, &plan, &device, &db, &mut rngs, &mut transcript)?;
    let mut ledger = hepuf_out.ledger;

    let qkd_out = run_qkd_phase(
        config,
        &plan,
        &mut ledger,
        &hepuf_out.seed_sent,
        &hepuf_out.seed_received,
        &mut rngs,
        &mut transcript,
    )?;

    let hepuf_states = hepuf_out.attempted_rounds * config.m;
    let qkd_signals = if qkd_out.measurement_ran {
        config.n_signals
    } else {
        0
    };
    let elapsed = elapsed_time(hepuf_states, qkd_signals, &config.channel);
    let skr = if elapsed > 0.0 {
        qkd_out.ell as f64 / elapsed
    } else {
        0.0
    };

    Ok(SessionReport {
        seed,
        scenario: config.scenario.number(),
        attenuation_db_total: config.channel.total_attenuation_db(),
        fidelity: config.channel.fidelity,
        m: config.m,
        target_rounds: plan.target_rounds,
        accepted_rounds: hepuf_out.accepted_rounds,
        attempted_rounds: hepuf_out.attempted_rounds,
        hepuf_states,
        pair_regenerations: hepuf_out.pair_regenerations,
        delta_hat: hepuf_out.delta_hat,
        raw_len: hepuf_out.raw_len,
        pool_len: hepuf_out.pool_len,
        required_pool: plan.required_pool,
        k_qkd: ledger.partition_point(),
        k_aut: ledger.region_len(Region::Aut),
        qkd_drawn: ledger.consumed(Region::Qkd),
        aut_drawn: ledger.consumed(Region::Aut),
        pool_remaining: ledger.remaining(Region::Qkd) + ledger.remaining(Region::Aut),
        n_signals: config.n_signals,
        pairs_generated: qkd_out.pairs_generated,
        b_sifted: qkd_out.b_sifted,
        qber_est: qkd_out.qber_est,
        qber_sifted_true: qkd_out.qber_true,
        ell: qkd_out.ell,
        elapsed_s: elapsed,
        skr_bps: skr,
        abort_reason: qkd_out.abort,
        eps: config.eps,
        finite_key: qkd_out.solution,
        transcript,
        raw_record: qkd_out.record,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(scenario: Scenario) -> ScenarioConfig {
        let channel = ChannelParams::default().with_total_attenuation_db(30.0);
        let mut config = ScenarioConfig::new(scenario, channel);
        // sized so the sifted block clears the finite-size floor at 1e-11
        config.n_signals = match scenario {
            Scenario::One => 4000,
            Scenario::Two => 8000,
        };
        config
    }

    #[test]
    fn plan_is_consistent() {
        for scenario in [Scenario::One, Scenario::Two] {
            let config = small_config(scenario);
            let p = plan(&config).unwrap();
            assert_eq!(p.required_pool, p.k_qkd + p.k_aut);
            assert!(
                extractable_length(
                    2 * p.target_rounds * config.m,
                    config.delta_assumed,
                    config.eps.eps_stat
                ) >= p.required_pool
            );
            match scenario {
                Scenario::One => {
                    assert_eq!(p.k_qkd, config.n_signals);
                    assert_eq!(p.messages.len(), 5);
                }
                Scenario::Two => {
                    assert_eq!(p.k_qkd, 0);
                    assert_eq!(p.messages.len(), 6);
                }
            }
            // the calculator's view of the same plan never exceeds the
            // runtime provisioning (which adds the seed stage, the
            // two-sided declaration and the slack)
            let profile = planned_profile(&config, &p);
            let cost =
                crate::security::auth_cost(scenario == Scenario::Two, &profile, config.eps.eps_a);
            assert!(cost.total_bits < p.k_aut);
        }
    }

    #[test]
    fn scenario2_full_run_completes_with_equal_keys() {
        let config = small_config(Scenario::Two);
        let report = run_full(&config, 42).unwrap();
        assert!(report.abort_reason.is_none(), "{:?}", report.abort_reason);
        let (ka, kb) = report.keys().unwrap();
        assert_eq!(ka, kb);
        assert_eq!(ka.len(), report.ell);
        assert!(report.ell > 0);
        assert!(report.skr_bps > 0.0);
        // ledger conservation
        assert_eq!(
            report.qkd_drawn + report.aut_drawn + report.pool_remaining,
            report.pool_len
        );
    }

    #[test]
    fn scenario1_full_run_completes() {
        let config = small_config(Scenario::One);
        let report = run_full(&config, 43).unwrap();
        assert!(report.abort_reason.is_none(), "{:?}", report.abort_reason);
        let (ka, kb) = report.keys().unwrap();
        assert_eq!(ka, kb);
        // basis bits really came from the pool
        assert_eq!(report.qkd_drawn, config.n_signals);
        assert_eq!(report.b_sifted, config.n_signals);
    }

    #[test]
    fn replay_is_bit_identical() {
        let config = small_config(Scenario::Two);
        let a = run_full(&config, 7).unwrap();
        let b = run_full(&config, 7).unwrap();
        assert_eq!(a, b);
        let c = run_full(&config, 8).unwrap();
        assert_ne!(a.transcript, c.transcript);
    }

    #[test]
    fn noiseless_run_has_zero_qber() {
        let mut config = small_config(Scenario::Two);
        config.channel.fidelity = 1.0;
        let report = run_full(&config, 11).unwrap();
        assert!(report.abort_reason.is_none());
        assert_eq!(report.qber_sifted_true, 0.0);
        assert_eq!(report.qber_est, 0.0);
        let (ka, kb) = report.keys().unwrap();
        assert_eq!(ka, kb);
    }

    #[test]
    fn undersized_ledger_aborts_without_key() {
        let mut config = small_config(Scenario::One);
        // force far fewer rounds than the pool demand needs
        config.target_rounds = Some(3);
        let report = run_full(&config, 13).unwrap();
        assert_eq!(report.abort_reason, Some(AbortReason::LedgerExhausted));
        assert_eq!(report.ell, 0);
        assert!(report.keys().is_none());
    }

    #[test]
    fn tampered_syndrome_rejects_and_releases_nothing() {
        let mut config = small_config(Scenario::Two);
        config.adversary = AdversaryHook::TamperClassical {
            target: Some(MsgType::Syndrome),
            bit_index: 0,
        };
        let report = run_full(&config, 17).unwrap();
        assert_eq!(report.abort_reason, Some(AbortReason::AuthReject));
        assert_eq!(report.ell, 0);
        assert!(report.keys().is_none());
        // the failed stage still consumed pad bits
        assert!(report.aut_drawn > 0);
    }

    #[test]
    fn tampered_seed_fails_retroactive_check() {
        let mut config = small_config(Scenario::Two);
        config.adversary = AdversaryHook::TamperClassical {
            target: Some(MsgType::SeedInt),
            bit_index: 5,
        };
        let report = run_full(&config, 19).unwrap();
        assert_eq!(report.abort_reason, Some(AbortReason::AuthReject));
        assert_eq!(report.ell, 0);
    }

    #[test]
    fn intercept_resend_inflates_qber_and_aborts() {
        let mut config = small_config(Scenario::Two);
        config.adversary = AdversaryHook::InterceptResend { fraction: 1.0 };
        let report = run_full(&config, 23).unwrap();
        assert_eq!(report.abort_reason, Some(AbortReason::QberExceeded));
        assert!(
            (report.qber_est - 0.25).abs() < 0.05,
            "qber_est = {}",
            report.qber_est
        );
        assert_eq!(report.ell, 0);
    }

    #[test]
    fn reject_rate_tracks_the_all_correct_rule() {
        let config = small_config(Scenario::Two);
        let report = run_full(&config, 29).unwrap();
        let q = config.channel.flip_probability().unwrap();
        let p_accept = (1.0 - q).powi(config.m as i32);
        let attempted = report.attempted_rounds as f64;
        let sigma = (attempted * p_accept * (1.0 - p_accept)).sqrt();
        assert!(
            (report.accepted_rounds as f64 - attempted * p_accept).abs() < 4.0 * sigma,
            "accepted {} of {}",
            report.accepted_rounds,
            report.attempted_rounds
        );
    }

    #[test]
    fn tampered_challenge_decorrelates_verification() {
        // a flipped challenge bit makes the prover answer a different CRP;
        // the round then fails the all-correct rule almost surely
        use crate::hepuf::{verifier_measure, verify_round, MeasurementBasis, RoundVerdict};
        use crate::puf;

        let m = 8usize;
        let puf_config = PufConfig {
            challenge_len: 64,
            response_len: 2 * m,
            model_seed: 0x7e57,
            injected_bias: 0.0,
        };
        let mut device = crate::hepuf::HepufDevice::new(puf_config.clone());
        device.mode0_build(&[]).unwrap();
        let channel = ChannelParams {
            fidelity: 1.0,
            ..ChannelParams::default()
        };
        let master = RngHandle::new(3571);
        let mut setup = master.fork(Stream::Setup);
        let mut chan_rng = master.fork(Stream::Channel);
        let mut alice = master.fork(Stream::Alice);

        let trials = 2000usize;
        let mut rejects = 0usize;
        for round in 0..trials {
            let challenge = setup.bits(64);
            let mut tampered = challenge.clone();
            tampered.set(0, !tampered.get(0).unwrap()).unwrap();
            let true_response = puf::eval(&puf_config, &challenge).unwrap();
            let mut prover = Vec::with_capacity(m);
            let mut verifier = Vec::with_capacity(m);
            for j in 0..m {
                // the prover acts on the tampered challenge
                let mut handle = device
                    .mode1_generate(&tampered, round, j, &channel, &mut chan_rng)
                    .unwrap();
                prover.push(device.mode2_measure(&mut handle).unwrap());
                let basis = MeasurementBasis::from_basis_bit(true_response.get(j).unwrap());
                verifier.push(verifier_measure(&mut handle, basis, &mut alice).unwrap());
            }
            if verify_round(&true_response, &prover, &verifier).unwrap() == RoundVerdict::Reject {
                rejects += 1;
            }
        }
        let reject_rate = rejects as f64 / trials as f64;
        assert!(reject_rate >= 0.99, "reject rate = {reject_rate}");
    }

    #[test]
    fn persistent_challenge_tampering_trips_the_reject_guard() {
        let mut config = small_config(Scenario::Two);
        config.n_signals = 1000;
        config.adversary = AdversaryHook::TamperClassical {
            target: Some(MsgType::Challenge),
            bit_index: 0,
        };
        match run_full(&config, 37) {
            Err(ProtocolError::TooManyRejects { attempted, target }) => {
                assert!(attempted >= 10 * target);
            }
            other => panic!("expected TooManyRejects, got {other:?}"),
        }
    }

    #[test]
    fn scenario_ordering_holds() {
        // same channel and budgets: scenario 2 needs a far smaller pool
        let c1 = small_config(Scenario::One);
        let c2 = small_config(Scenario::Two);
        let r1 = run_full(&c1, 31).unwrap();
        let r2 = run_full(&c2, 31).unwrap();
        assert!(r2.required_pool * 5 < r1.required_pool);
        assert!(r2.elapsed_s < r1.elapsed_s);
    }
}
