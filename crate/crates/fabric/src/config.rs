//! Declarative fabric configuration (TOML).
//!
//! Everything except `seed` has a default. Cluster means, noise and
//! probabilities are configuration, not ground truth.

use serde::{Deserialize, Serialize};

use crate::error::FabricError;
use crate::sequencer::SequencerProgram;

/// Program loaded into sequencer memory at boot when the config does not
/// provide one.
pub const DEFAULT_PROGRAM: &[&str] = &[
    "PULSE_MANIP 3142", // 0: pi pulse, then readout
    "PULSE_READOUT 0",
    "END",
    "PULSE_READOUT 0", // 3: ground-state readout
    "END",
    "PULSE_MANIP 1571", // 5: pi/2 pulse, then readout
    "PULSE_READOUT 0",
    "END",
    "PULSE_READOUT 0", // 8: capture both signal paths
    "PULSE_READOUT 1",
    "END",
];

/// Entry points into [`DEFAULT_PROGRAM`].
pub mod entry {
    pub const PI_READOUT: u32 = 0;
    pub const GROUND_READOUT: u32 = 3;
    pub const HALF_PI_READOUT: u32 = 5;
    pub const DUAL_CAPTURE: u32 = 8;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FabricConfig {
    pub seed: u64,
    #[serde(default)]
    pub bus: BusConfig,
    #[serde(default)]
    pub qubit: QubitConfig,
    #[serde(default)]
    pub recording: RecordingConfig,
    #[serde(default)]
    pub sequencer: SequencerConfig,
    #[serde(default)]
    pub signal: SignalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BusConfig {
    pub read_cost_ns: u64,
    pub write_cost_ns: u64,
}

impl Default for BusConfig {
    fn default() -> Self {
        Self {
            read_cost_ns: 306,
            write_cost_ns: 323,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    pub amplitude: f64,
    pub frequency_hz: f64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            amplitude: 0.0,
            frequency_hz: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QubitConfig {
    /// Energy relaxation time. `0` disables relaxation entirely.
    pub t1_ns: f64,
    /// Mean (I, Q) response per level 0..=3.
    pub cluster_means: [[f64; 2]; 4],
    pub readout_sigma: f64,
    /// Probability that a manipulation pulse leaves the qubit subspace.
    pub leakage_prob: f64,
    /// Share of leakage events that land in level 3 (the rest go to 2).
    pub leakage_to_3_fraction: f64,
    pub drift: DriftConfig,
}

impl Default for QubitConfig {
    fn default() -> Self {
        Self {
            t1_ns: 10_000.0,
            cluster_means: [
                [100_000.0, 35_000.0],
                [95_000.0, 0.0],
                [88_000.0, -30_000.0],
                [70_000.0, -60_000.0],
            ],
            readout_sigma: 5_000.0,
            leakage_prob: 0.0,
            leakage_to_3_fraction: 0.5,
            drift: DriftConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecordingConfig {
    /// Latency between readout trigger and a valid result.
    pub duration_ns: u64,
    pub channels: u32,
    /// Spacing of trace samples after down-conversion.
    pub trace_sample_period_ns: u64,
    pub max_trace_len: u32,
}

impl Default for RecordingConfig {
    fn default() -> Self {
        Self {
            duration_ns: 500,
            channels: 2,
            trace_sample_period_ns: 100,
            max_trace_len: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequencerConfig {
    /// Reset value of the relaxation-delay register.
    pub relaxation_delay_ns: u32,
    pub max_program_len: u32,
    /// Assembly lines loaded at boot; empty selects [`DEFAULT_PROGRAM`].
    pub program: Vec<String>,
}

impl Default for SequencerConfig {
    fn default() -> Self {
        Self {
            relaxation_delay_ns: 100_000,
            max_program_len: 1024,
            program: Vec::new(),
        }
    }
}

/// Source feeding the trace capture of the recording channels: a shared
/// complex AR(1) field split onto every channel plus independent channel
/// noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub source_amplitude: f64,
    pub source_corr_ns: f64,
    pub noise_sigma: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            source_amplitude: 2_000.0,
            source_corr_ns: 400.0,
            noise_sigma: 1_000.0,
        }
    }
}

impl FabricConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            bus: BusConfig::default(),
            qubit: QubitConfig::default(),
            recording: RecordingConfig::default(),
            sequencer: SequencerConfig::default(),
            signal: SignalConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, FabricError> {
        let config: FabricConfig =
            toml::from_str(text).map_err(|e| FabricError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), FabricError> {
        let bad = |msg: &str| Err(FabricError::Config(msg.to_owned()));
        let q = &self.qubit;
        if !(q.t1_ns >= 0.0 && q.t1_ns.is_finite()) {
            return bad("qubit.t1_ns must be finite and >= 0");
        }
        if !(q.readout_sigma >= 0.0 && q.readout_sigma.is_finite()) {
            return bad("qubit.readout_sigma must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&q.leakage_prob) {
            return bad("qubit.leakage_prob must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&q.leakage_to_3_fraction) {
            return bad("qubit.leakage_to_3_fraction must lie in [0, 1]");
        }
        if q.cluster_means.iter().flatten().any(|v| !v.is_finite()) {
            return bad("qubit.cluster_means must be finite");
        }
        if !q.drift.amplitude.is_finite() || !q.drift.frequency_hz.is_finite() {
            return bad("qubit.drift must be finite");
        }
        if self.recording.channels == 0 || self.recording.channels > 8 {
            return bad("recording.channels must lie in 1..=8");
        }
        if self.recording.trace_sample_period_ns == 0 {
            return bad("recording.trace_sample_period_ns must be > 0");
        }
        let s = &self.signal;
        if !(s.source_corr_ns > 0.0) || s.noise_sigma < 0.0 || !s.source_amplitude.is_finite() {
            return bad("signal parameters out of range");
        }
        self.boot_program()?;
        Ok(())
    }

    /// The program loaded into sequencer memory at boot.
    pub fn boot_program(&self) -> Result<SequencerProgram, FabricError> {
        let text: Vec<&str> = if self.sequencer.program.is_empty() {
            DEFAULT_PROGRAM.to_vec()
        } else {
            self.sequencer.program.iter().map(String::as_str).collect()
        };
        let program = SequencerProgram::parse_lines(&text)?;
        if program.len() > self.sequencer.max_program_len as usize {
            return Err(FabricError::Config(
                "sequencer.program exceeds max_program_len".into(),
            ));
        }
        program.validate()?;
        Ok(program)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_required() {
        let err = FabricConfig::from_toml_str("[qubit]\nt1_ns = 5.0\n").unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = FabricConfig::from_toml_str("seed = 7\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.bus.read_cost_ns, 306);
        assert_eq!(cfg.bus.write_cost_ns, 323);
        assert_eq!(cfg.recording.duration_ns, 500);
        assert_eq!(cfg.boot_program().unwrap().len(), DEFAULT_PROGRAM.len());
    }

    #[test]
    fn rejects_out_of_range_probability() {
        let err = FabricConfig::from_toml_str("seed = 1\n[qubit]\nleakage_prob = 1.5\n");
        assert!(err.is_err());
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(FabricConfig::from_toml_str("seed = 1\nbogus = 2\n").is_err());
    }

    #[test]
    fn custom_program_is_parsed() {
        let cfg =
            FabricConfig::from_toml_str("seed = 1\n[sequencer]\nprogram = [\"WAIT 8\", \"END\"]\n")
                .unwrap();
        assert_eq!(cfg.boot_program().unwrap().len(), 2);
    }
}
