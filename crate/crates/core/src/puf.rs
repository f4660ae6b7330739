//! Simulated weak classical PUF with a controllable per-bit bias.
//!
//! The model is a keyed pseudorandom function of the challenge whose output
//! bits are drawn through a Bernoulli(1/2 + delta) threshold. The protocol
//! only consumes two properties of the real hardware — determinism in
//! (device, challenge) and the response bias magnitude — so that is all the
//! model reproduces.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::bits::BitSequence;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PufError {
    #[error("challenge has {got} bits, device expects {expected}")]
    BadChallengeLength { expected: usize, got: usize },
    #[error("duplicate challenge {0}")]
    DuplicateChallenge(String),
    #[error("bias estimation needs at least one bit")]
    EmptyInput,
    #[error("injected bias {0} outside [0, 0.5]")]
    BadBias(f64),
    #[error("response length {0} must be even (responses split into two halves)")]
    OddResponseLength(usize),
}

/// Static description of one simulated device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PufConfig {
    /// Bits per challenge.
    pub challenge_len: usize,
    /// Bits per response; even, since a response splits into basis and
    /// state halves.
    pub response_len: usize,
    /// Device identity; two devices with different seeds are unrelated.
    pub model_seed: u64,
    /// Target deviation of the per-bit ones-probability from 1/2.
    pub injected_bias: f64,
}

impl PufConfig {
    pub fn validate(&self) -> Result<(), PufError> {
        if !(0.0..=0.5).contains(&self.injected_bias) {
            return Err(PufError::BadBias(self.injected_bias));
        }
        if self.response_len % 2 != 0 {
            return Err(PufError::OddResponseLength(self.response_len));
        }
        Ok(())
    }
}

/// Deterministic response of `response_len` bits, each independently
/// Bernoulli(1/2 + injected_bias) over uniformly random challenges.
pub fn eval(config: &PufConfig, challenge: &BitSequence) -> Result<BitSequence, PufError> {
    config.validate()?;
    if challenge.len() != config.challenge_len {
        return Err(PufError::BadChallengeLength {
            expected: config.challenge_len,
            got: challenge.len(),
        });
    }
    // Key the PRF with (model_seed, challenge bytes). Challenges up to
    // 192 bits map injectively into the seed; longer ones fold by XOR.
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&config.model_seed.to_le_bytes());
    for (i, b) in challenge.to_bytes().iter().enumerate() {
        seed[8 + i % 24] ^= b;
    }
    let mut prf = ChaCha12Rng::from_seed(seed);
    let p = 0.5 + config.injected_bias;
    Ok((0..config.response_len).map(|_| prf.gen_bool(p)).collect())
}

/// The verifier's one-time challenge-response database.
#[derive(Debug, Clone)]
pub struct CrpDatabase {
    pub config: PufConfig,
    entries: BTreeMap<String, String>,
    challenges: Vec<BitSequence>,
}

impl CrpDatabase {
    pub fn len(&self) -> usize {
        self.challenges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.challenges.is_empty()
    }

    pub fn challenge(&self, index: usize) -> Option<&BitSequence> {
        self.challenges.get(index)
    }

    pub fn response(&self, challenge: &BitSequence) -> Option<BitSequence> {
        self.entries
            .get(&challenge.to_hex())
            .map(|hex| BitSequence::from_hex(hex, self.config.response_len).expect("stored hex"))
    }

    /// JSON document: `{config: {...}, entries: [{challenge_hex, response_hex}]}`.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Entry<'a> {
            challenge_hex: &'a str,
            response_hex: &'a str,
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            config: &'a PufConfig,
            entries: Vec<Entry<'a>>,
        }
        let entries = self
            .challenges
            .iter()
            .map(|c| {
                let hex = c.to_hex();
                let response_hex = self.entries.get(&hex).expect("entry for challenge");
                Entry {
                    challenge_hex: self.entries.get_key_value(&hex).unwrap().0,
                    response_hex,
                }
            })
            .collect();
        serde_json::to_string_pretty(&Doc {
            config: &self.config,
            entries,
        })
        .expect("serializable")
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        #[derive(Deserialize)]
        struct Entry {
            challenge_hex: String,
            response_hex: String,
        }
        #[derive(Deserialize)]
        struct Doc {
            config: PufConfig,
            entries: Vec<Entry>,
        }
        let doc: Doc = serde_json::from_str(json)?;
        let mut entries = BTreeMap::new();
        let mut challenges = Vec::new();
        for e in doc.entries {
            challenges.push(
                BitSequence::from_hex(&e.challenge_hex, doc.config.challenge_len)
                    .expect("challenge hex"),
            );
            entries.insert(e.challenge_hex, e.response_hex);
        }
        Ok(Self {
            config: doc.config,
            entries,
            challenges,
        })
    }
}

/// One database entry per distinct challenge, responses computed by [`eval`].
pub fn build_database(
    config: &PufConfig,
    challenges: &[BitSequence],
) -> Result<CrpDatabase, PufError> {
    let mut entries = BTreeMap::new();
    let mut ordered = Vec::with_capacity(challenges.len());
    for challenge in challenges {
        let response = eval(config, challenge)?;
        let key = challenge.to_hex();
        if entries.insert(key.clone(), response.to_hex()).is_some() {
            return Err(PufError::DuplicateChallenge(key));
        }
        ordered.push(challenge.clone());
    }
    Ok(CrpDatabase {
        config: config.clone(),
        entries,
        challenges: ordered,
    })
}

/// Empirical bias of a pooled set of response strings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasEstimate {
    /// `|ones_fraction - 1/2|` over all pooled bits.
    pub delta_hat: f64,
    pub sample_count: usize,
    /// Wilson-score half-width at the requested confidence level.
    pub confidence_halfwidth: f64,
}

/// Pooled bias estimate; the caller takes the worst case across runs.
pub fn estimate_bias(
    responses: &[BitSequence],
    confidence_level: f64,
) -> Result<BiasEstimate, PufError> {
    let n: usize = responses.iter().map(|r| r.len()).sum();
    if n == 0 {
        return Err(PufError::EmptyInput);
    }
    let ones: usize = responses.iter().map(|r| r.count_ones()).sum();
    let p = ones as f64 / n as f64;
    let z = Normal::new(0.0, 1.0)
        .expect("unit normal")
        .inverse_cdf(0.5 + confidence_level.clamp(0.0, 0.999_999) / 2.0);
    let nf = n as f64;
    // Wilson score half-width: strictly positive for finite samples.
    let halfwidth = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / (1.0 + z * z / nf);
    Ok(BiasEstimate {
        delta_hat: (p - 0.5).abs(),
        sample_count: n,
        confidence_halfwidth: halfwidth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngHandle, Stream};

    fn config(bias: f64) -> PufConfig {
        PufConfig {
            challenge_len: 64,
            response_len: 88,
            model_seed: 0xfeed,
            injected_bias: bias,
        }
    }

    fn random_challenges(n: usize, len: usize, seed: u64) -> Vec<BitSequence> {
        let mut rng = RngHandle::new(seed).fork(Stream::Setup);
        (0..n).map(|_| rng.bits(len)).collect()
    }

    #[test]
    fn eval_is_deterministic() {
        let cfg = config(0.1);
        let challenge = BitSequence::from_hex("0123456789abcdef", 64).unwrap();
        assert_eq!(
            eval(&cfg, &challenge).unwrap(),
            eval(&cfg, &challenge).unwrap()
        );
    }

    #[test]
    fn eval_rejects_bad_length() {
        let cfg = config(0.0);
        let challenge = BitSequence::zeros(32);
        assert!(matches!(
            eval(&cfg, &challenge),
            Err(PufError::BadChallengeLength {
                expected: 64,
                got: 32
            })
        ));
    }

    #[test]
    fn unbiased_ones_fraction_within_3_sigma() {
        let cfg = config(0.0);
        let challenges = random_challenges(1200, 64, 11); // > 10^5 bits
        let total: usize = challenges
            .iter()
            .map(|c| eval(&cfg, c).unwrap().count_ones())
            .sum();
        let n = (1200 * cfg.response_len) as f64;
        let sigma = (0.25 / n).sqrt();
        let frac = total as f64 / n;
        assert!((frac - 0.5).abs() < 3.0 * sigma, "frac = {frac}");
    }

    #[test]
    fn injected_bias_recovered() {
        // Monte-Carlo against the configured Bernoulli marginal.
        for &bias in &[0.01, 0.1, 0.3] {
            let cfg = config(bias);
            let challenges = random_challenges(1200, 64, 13);
            let responses: Vec<_> = challenges.iter().map(|c| eval(&cfg, c).unwrap()).collect();
            let est = estimate_bias(&responses, 0.99).unwrap();
            let n = est.sample_count as f64;
            let p = 0.5 + bias;
            let band = 3.0 * (p * (1.0 - p) / n).sqrt();
            assert!(
                (est.delta_hat - bias).abs() < band,
                "bias {bias}: got {} (band {band})",
                est.delta_hat
            );
        }
    }

    #[test]
    fn database_has_one_entry_per_challenge() {
        let cfg = config(0.0);
        let challenges = random_challenges(351, 64, 17);
        let db = build_database(&cfg, &challenges).unwrap();
        assert_eq!(db.len(), 351);
        for c in &challenges {
            assert_eq!(db.response(c).unwrap().len(), 88);
        }
    }

    #[test]
    fn duplicate_challenge_rejected() {
        let cfg = config(0.0);
        let c = BitSequence::zeros(64);
        assert!(matches!(
            build_database(&cfg, &[c.clone(), c]),
            Err(PufError::DuplicateChallenge(_))
        ));
    }

    #[test]
    fn empty_database() {
        let db = build_database(&config(0.0), &[]).unwrap();
        assert!(db.is_empty());
    }

    #[test]
    fn degenerate_bias_estimates() {
        let all_zero = BitSequence::zeros(100);
        let est = estimate_bias(&[all_zero], 0.99).unwrap();
        assert_eq!(est.delta_hat, 0.5);
        assert!(est.confidence_halfwidth > 0.0);

        let alternating: BitSequence = (0..100).map(|i| i % 2 == 1).collect();
        let est = estimate_bias(&[alternating], 0.99).unwrap();
        assert_eq!(est.delta_hat, 0.0);

        assert!(matches!(
            estimate_bias(&[], 0.99),
            Err(PufError::EmptyInput)
        ));
    }

    #[test]
    fn bernoulli_sample_recovers_percent_scale_bias() {
        // Bernoulli(0.511) over 10^5 bits: delta_hat near 0.011.
        let mut rng = RngHandle::new(23).fork(Stream::Channel);
        let sample: BitSequence = (0..100_000).map(|_| rng.bernoulli(0.511)).collect();
        let est = estimate_bias(&[sample], 0.99).unwrap();
        assert!(
            (est.delta_hat - 0.011).abs() <= est.confidence_halfwidth,
            "delta_hat = {}, halfwidth = {}",
            est.delta_hat,
            est.confidence_halfwidth
        );
    }

    #[test]
    fn split_convention_halves_rejoin() {
        let cfg = config(0.2);
        let challenge = random_challenges(1, 64, 29).pop().unwrap();
        let resp = eval(&cfg, &challenge).unwrap();
        let m = cfg.response_len / 2;
        let basis_half = resp.slice(0, m).unwrap();
        let state_half = resp.slice(m, m).unwrap();
        assert_eq!(basis_half.concat(&state_half), resp);
    }

    #[test]
    fn database_json_round_trip() {
        let cfg = config(0.1);
        let challenges = random_challenges(5, 64, 31);
        let db = build_database(&cfg, &challenges).unwrap();
        let restored = CrpDatabase::from_json(&db.to_json()).unwrap();
        assert_eq!(restored.len(), db.len());
        for c in &challenges {
            assert_eq!(restored.response(c), db.response(c));
        }
    }
}
