//! Closed-form security arithmetic: the device cheat bound and minimum
//! sample size, failure-budget composition, and the per-stage
//! authentication cost accounting.
//!
//! Every failure probability is evaluated in base-2 log space first. The
//! cheat bound at protocol scale is around `2^-35` per round and products
//! of such terms underflow naive pipelines long before the quantities stop
//! being meaningful, so [`Log2Prob`] carries the exponent and converts to
//! linear only at the edges.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auth::required_tag_length;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SecurityError {
    #[error("target unreachable: per-state bound {base} is not below 1")]
    UnreachableTarget { base: f64 },
    #[error("parameter {name} = {value} outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
}

/// A probability carried as its base-2 logarithm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Log2Prob(f64);

impl Log2Prob {
    pub fn from_log2(log2: f64) -> Self {
        Self(log2)
    }

    pub fn from_linear(p: f64) -> Self {
        assert!(p >= 0.0, "probabilities are non-negative");
        Self(p.log2())
    }

    pub fn log2(self) -> f64 {
        self.0
    }

    /// Linear value; underflows to 0.0 below about `2^-1074`.
    pub fn linear(self) -> f64 {
        self.0.exp2()
    }
}

/// Product of probabilities = sum of exponents.
impl std::ops::Mul for Log2Prob {
    type Output = Log2Prob;

    #[allow(clippy::suspicious_arithmetic_impl)] // log domain
    fn mul(self, other: Self) -> Self {
        Self(self.0 + other.0)
    }
}

/// Sum of probabilities via log-add-exp; exact to f64 rounding even when
/// both terms underflow linearly.
impl std::ops::Add for Log2Prob {
    type Output = Log2Prob;

    fn add(self, other: Self) -> Self {
        let (hi, lo) = if self.0 >= other.0 {
            (self.0, other.0)
        } else {
            (other.0, self.0)
        };
        if hi == f64::NEG_INFINITY {
            return Self(f64::NEG_INFINITY);
        }
        Self(hi + (1.0 + (lo - hi).exp2()).log2())
    }
}

/// Binary entropy `h2(x) = -x log2 x - (1-x) log2(1-x)`, with the boundary
/// values pinned to 0 by continuity.
pub fn binary_entropy(x: f64) -> f64 {
    assert!((0.0..=1.0).contains(&x), "h2 argument {x} outside [0, 1]");
    if x == 0.0 || x == 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Per-round base of the cheat bound: `1/2 + delta * sqrt((1 + 4 delta^2)/2)`.
fn cheat_base(delta: f64) -> f64 {
    0.5 + delta * ((1.0 + 4.0 * delta * delta) / 2.0).sqrt()
}

/// Probability that an unbounded adversary defeats one authentication round
/// of `m` states against a device of bias `delta`:
/// `(1/2 + delta sqrt((1+4 delta^2)/2))^m`.
pub fn hepuf_cheat_bound(delta: f64, m: usize) -> Log2Prob {
    assert!((0.0..=0.5).contains(&delta), "delta outside [0, 0.5]");
    assert!(m >= 1);
    Log2Prob::from_log2(m as f64 * cheat_base(delta).log2())
}

/// Smallest `m` with `hepuf_cheat_bound(delta, m) <= target_eps`.
pub fn min_sample_size(delta: f64, target_eps: f64) -> Result<usize, SecurityError> {
    if !(0.0..=0.5).contains(&delta) {
        return Err(SecurityError::OutOfRange {
            name: "delta",
            value: delta,
            range: "[0, 0.5]",
        });
    }
    if !(0.0..1.0).contains(&target_eps) || target_eps == 0.0 {
        return Err(SecurityError::OutOfRange {
            name: "target_eps",
            value: target_eps,
            range: "(0, 1)",
        });
    }
    let base = cheat_base(delta);
    if base >= 1.0 {
        return Err(SecurityError::UnreachableTarget { base });
    }
    let per_round = base.log2();
    let eps_log2 = target_eps.log2();
    let mut m = (eps_log2 / per_round).floor().max(1.0) as usize;
    // walk onto the exact boundary regardless of floating-point slop
    while m > 1 && (m - 1) as f64 * per_round <= eps_log2 {
        m -= 1;
    }
    while m as f64 * per_round > eps_log2 {
        m += 1;
    }
    Ok(m)
}

/// All failure-probability parameters of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBudget {
    pub eps_qkd: f64,
    pub eps_pa: f64,
    pub eps_pe: f64,
    pub eps_ec: f64,
    pub eps_a: f64,
    pub eps_hepuf: f64,
    pub eps_stat: f64,
}

impl EpsilonBudget {
    /// Components must compose under the total: `pa + pe + ec + a <= qkd`.
    pub fn validate(&self) -> Result<(), SecurityError> {
        let all = [
            ("eps_qkd", self.eps_qkd),
            ("eps_pa", self.eps_pa),
            ("eps_pe", self.eps_pe),
            ("eps_ec", self.eps_ec),
            ("eps_a", self.eps_a),
            ("eps_hepuf", self.eps_hepuf),
            ("eps_stat", self.eps_stat),
        ];
        for (name, v) in all {
            // components other than the ceilings may be exactly 0
            let ok = if name == "eps_qkd" || name == "eps_hepuf" || name == "eps_stat" {
                v > 0.0 && v < 1.0
            } else {
                (0.0..1.0).contains(&v)
            };
            if !ok {
                return Err(SecurityError::OutOfRange {
                    name: "epsilon",
                    value: v,
                    range: "(0, 1)",
                });
            }
        }
        let sum = self.eps_pa + self.eps_pe + self.eps_ec + self.eps_a;
        if sum > self.eps_qkd * (1.0 + 1e-12) {
            return Err(SecurityError::OutOfRange {
                name: "component sum",
                value: sum,
                range: "<= eps_qkd",
            });
        }
        Ok(())
    }

    /// The security exponent `s` with `eps_qkd = 10^-s`.
    pub fn exponent(&self) -> f64 {
        -self.eps_qkd.log10()
    }

    /// Error-correction failure convention `eps_ec = 10^-(s+2)`.
    pub fn eps_ec_from_exponent(&self) -> f64 {
        10f64.powf(-(self.exponent() + 2.0))
    }
}

/// Split `total_eps` over (PA, PE, EC, A) proportionally to `weights`; the
/// statistical and device ceilings default to the same total.
pub fn compose_budget(total_eps: f64, weights: [f64; 4]) -> EpsilonBudget {
    assert!(total_eps > 0.0 && total_eps < 1.0);
    assert!(weights.iter().all(|w| w.is_finite() && *w >= 0.0));
    let wsum: f64 = weights.iter().sum();
    assert!(wsum > 0.0, "at least one weight must be positive");
    let scale = total_eps / wsum;
    let mut parts = weights.map(|w| w * scale);
    // guard the <= total invariant against rounding in the sum
    let sum: f64 = parts.iter().sum();
    if sum > total_eps {
        let shrink = total_eps / sum * (1.0 - f64::EPSILON);
        for p in &mut parts {
            *p *= shrink;
        }
    }
    EpsilonBudget {
        eps_qkd: total_eps,
        eps_pa: parts[0],
        eps_pe: parts[1],
        eps_ec: parts[2],
        eps_a: parts[3],
        eps_hepuf: total_eps,
        eps_stat: total_eps,
    }
}

/// The authenticated stages of the classical transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AuthStage {
    /// Retroactive authentication of the extraction seed.
    SeedInt,
    /// Measurement-basis declaration (absent in Scenario 1).
    Basis,
    /// Parameter-estimation reveal.
    ParamEst,
    /// Error-correction syndrome.
    Syndrome,
    /// Error-verification seed and hash.
    ErrorVerify,
    /// Privacy-amplification seed.
    PaSeed,
}

/// Cumulative per-stage message lengths (bits). A zero length marks the
/// stage inactive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageProfile {
    pub basis: usize,
    pub pe: usize,
    pub syndrome: usize,
    pub ev: usize,
    pub pa_seed: usize,
}

impl MessageProfile {
    /// Default profile from the natural transcript sizes: basis declaration
    /// of `b` bits (Scenario 2 only), `k` revealed bits, the syndrome, the
    /// verification seed plus hash, and the amplification seed.
    pub fn calibrated(
        scenario2: bool,
        b: usize,
        k: usize,
        n: usize,
        z: usize,
        ell: usize,
        ev_tag_len: usize,
    ) -> Self {
        Self {
            basis: if scenario2 { b } else { 0 },
            pe: k,
            syndrome: z,
            ev: (n + ev_tag_len).saturating_sub(1) + ev_tag_len,
            pa_seed: (n + ell).saturating_sub(1),
        }
    }

    fn rows(&self) -> [(AuthStage, usize); 5] {
        [
            (AuthStage::Basis, self.basis),
            (AuthStage::ParamEst, self.pe),
            (AuthStage::Syndrome, self.syndrome),
            (AuthStage::ErrorVerify, self.ev),
            (AuthStage::PaSeed, self.pa_seed),
        ]
    }
}

/// Cost record of one authenticated stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageCost {
    pub stage: AuthStage,
    pub msg_len: usize,
    pub tag_len: usize,
    /// Fresh pad bits consumed by the stage (equal to the tag length).
    pub otp_cost: usize,
    /// Failure contribution `n * 2^(1 - t)`.
    pub eps: f64,
}

/// Authentication cost of one protocol run.
///
/// `total_bits` counts the per-message one-time pads, which is what the
/// per-session key pool must fund. The `2t`-bit matrix keys are reported
/// separately: with pad-masked tags they stay secret and persist across
/// sessions, so they amortize over the device pairing like the
/// challenge-response database itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthCostBreakdown {
    pub stages: Vec<StageCost>,
    /// Per-session secret-key cost: sum of the pad lengths.
    pub total_bits: usize,
    /// One-time hash-selection material, amortized across sessions.
    pub matrix_key_bits: usize,
    pub total_eps: f64,
}

/// Tag lengths and key costs for a message profile under an authentication
/// budget split equally across the active stages. Scenario 1 has no basis
/// declaration, so its basis row is forced inactive.
pub fn auth_cost(scenario2: bool, profile: &MessageProfile, eps_a: f64) -> AuthCostBreakdown {
    assert!(eps_a > 0.0 && eps_a < 1.0);
    let mut profile = *profile;
    if !scenario2 {
        profile.basis = 0;
    }
    let active = profile.rows().iter().filter(|(_, len)| *len > 0).count();
    let mut stages = Vec::with_capacity(5);
    let mut total_bits = 0usize;
    let mut matrix_key_bits = 0usize;
    let mut total_eps = 0.0f64;
    if active == 0 {
        return AuthCostBreakdown {
            stages,
            total_bits,
            matrix_key_bits,
            total_eps,
        };
    }
    let share = eps_a / active as f64;
    for (stage, msg_len) in profile.rows() {
        if msg_len == 0 {
            continue;
        }
        let tag_len = required_tag_length(msg_len, share);
        let eps = msg_len as f64 * 2f64.powi(1 - tag_len as i32);
        stages.push(StageCost {
            stage,
            msg_len,
            tag_len,
            otp_cost: tag_len,
            eps,
        });
        total_bits += tag_len;
        matrix_key_bits += 2 * tag_len;
        total_eps += eps;
    }
    AuthCostBreakdown {
        stages,
        total_bits,
        matrix_key_bits,
        total_eps,
    }
}
