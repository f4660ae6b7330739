//! Run-grid configuration: strict schema, TOML with a JSON alternative.
//!
//! Unknown keys are rejected before any computation so a typo in a config
//! never silently runs with defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use hepuf_qkd::channel::ChannelParams;
use hepuf_qkd::protocol::{Scenario, ScenarioConfig};
use hepuf_qkd::security::compose_budget;

use crate::CliError;

fn default_seed() -> u64 {
    7
}
fn default_trials() -> usize {
    1
}
fn default_scenarios() -> Vec<u8> {
    vec![1, 2]
}
fn default_attenuations() -> Vec<f64> {
    vec![30.0, 40.0, 50.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<u8>,
    #[serde(default = "default_attenuations")]
    pub attenuations_db_total: Vec<f64>,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub puf: PufSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub fidelity: f64,
    pub hepuf_round_rate_hz: f64,
    pub qkd_signal_rate_hz: f64,
    pub source_pair_rate_hz: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        let c = ChannelParams::default();
        Self {
            fidelity: c.fidelity,
            hepuf_round_rate_hz: c.hepuf_round_rate_hz,
            qkd_signal_rate_hz: c.qkd_signal_rate_hz,
            source_pair_rate_hz: c.source_pair_rate_hz,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    /// Detected-signal budget when bases come from the pool.
    pub n_signals_scenario1: usize,
    /// Detected-signal budget when bases are declared and sifted.
    pub n_signals_scenario2: usize,
    pub m: usize,
    pub eps_qkd: f64,
    pub delta_assumed: f64,
    pub qber_tol: f64,
    pub f_ec: f64,
    pub aut_slack_bits: usize,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            n_signals_scenario1: 30_000,
            n_signals_scenario2: 60_000,
            m: 44,
            eps_qkd: 2.5e-11,
            delta_assumed: 0.01,
            qber_tol: 0.05,
            f_ec: 1.06,
            aut_slack_bits: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PufSection {
    pub challenge_len: usize,
    pub model_seed: u64,
    pub injected_bias: f64,
}

impl Default for PufSection {
    fn default() -> Self {
        Self {
            challenge_len: 64,
            model_seed: 0x485a_11ab,
            injected_bias: 0.0016,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
            _ => toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.trials == 0 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        if self.scenarios.is_empty() || self.attenuations_db_total.is_empty() {
            return Err(CliError::Config(
                "scenarios and attenuations_db_total must be non-empty".into(),
            ));
        }
        for s in &self.scenarios {
            if !matches!(s, 1 | 2) {
                return Err(CliError::Config(format!("unknown scenario {s}")));
            }
        }
        Ok(())
    }

    /// The protocol configuration of one grid cell.
    pub fn cell(&self, scenario: u8, attenuation_db_total: f64) -> ScenarioConfig {
        let scenario = if scenario == 1 {
            Scenario::One
        } else {
            Scenario::Two
        };
        let channel = ChannelParams {
            fidelity: self.channel.fidelity,
            attenuation_db_per_side: attenuation_db_total / 2.0,
            hepuf_round_rate_hz: self.channel.hepuf_round_rate_hz,
            qkd_signal_rate_hz: self.channel.qkd_signal_rate_hz,
            source_pair_rate_hz: self.channel.source_pair_rate_hz,
        };
        let mut config = ScenarioConfig::new(scenario, channel);
        config.n_signals = match scenario {
            Scenario::One => self.protocol.n_signals_scenario1,
            Scenario::Two => self.protocol.n_signals_scenario2,
        };
        config.m = self.protocol.m;
        config.eps = compose_budget(self.protocol.eps_qkd, [1.0, 1.0, 1.0, 1.0]);
        config.delta_assumed = self.protocol.delta_assumed;
        config.qber_tol = self.protocol.qber_tol;
        config.f_ec = self.protocol.f_ec;
        config.aut_slack_bits = self.protocol.aut_slack_bits;
        config.challenge_len = self.puf.challenge_len;
        config.puf_model_seed = self.puf.model_seed;
        config.puf_injected_bias = self.puf.injected_bias;
        config
    }
}
