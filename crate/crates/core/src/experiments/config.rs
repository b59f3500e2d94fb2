use std::path::Path;

use serde::{Deserialize, Serialize};

use super::distance::DistanceModel;
use super::purity::PurityModel;
use crate::chain::ChainParams;
use crate::constants::BandParams;
use crate::error::{Error, Result};
use crate::receivers::ReceiverKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// Two-mode squeezed vacuum degraded by the purity model.
    Tmsv,
    /// Symmetric classically correlated thermal pair.
    Classical,
    /// Coherent tone on the signal.
    Coherent,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Tmsv => "tmsv",
            SourceKind::Classical => "classical",
            SourceKind::Coherent => "coherent",
        }
    }

    pub(crate) fn code(self) -> u64 {
        match self {
            SourceKind::Tmsv => 1,
            SourceKind::Classical => 2,
            SourceKind::Coherent => 3,
        }
    }

    /// Receivers that apply to this source.
    pub fn receivers(self) -> &'static [ReceiverKind] {
        match self {
            SourceKind::Tmsv | SourceKind::Classical => &[ReceiverKind::PcRaw, ReceiverKind::PcCalibrated],
            SourceKind::Coherent => &[ReceiverKind::Homodyne, ReceiverKind::Heterodyne],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Signal photon number.
    NS,
    /// Round-trip transmissivity, linear.
    Eta,
    /// Object distance, m.
    Distance,
    /// Environment temperature, K; sets `n_env` at the signal carrier.
    Temperature,
}

impl SweepVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVariable::NS => "n_s",
            SweepVariable::Eta => "eta",
            SweepVariable::Distance => "distance",
            SweepVariable::Temperature => "temperature",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub kinds: Vec<SourceKind>,
    /// Signal photon number when it is not swept.
    #[serde(default = "default_n_s")]
    pub n_s: f64,
    #[serde(default)]
    pub purity: PurityModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    /// Transmissivity when it is not swept.
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_receivers")]
    pub receivers: Vec<ReceiverKind>,
    /// Records per hypothesis for correlated sources.
    #[serde(default = "default_records")]
    pub records: usize,
    /// Records per hypothesis for the coherent source.
    #[serde(default = "default_coherent_records")]
    pub coherent_records: usize,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    /// Independent modes `M` in the reported error probability.
    #[serde(default = "default_decision_modes")]
    pub decision_modes: f64,
    /// Worker threads; unset uses all cores. Output does not depend on it.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Sample records; otherwise only closed forms are reported.
    #[serde(default = "default_true")]
    pub monte_carlo: bool,
    /// Route every record through IF synthesis and FFT demodulation.
    #[serde(default)]
    pub via_if: bool,
}

/// A complete experiment description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub source: SourceSection,
    #[serde(default = "ChainParams::reference")]
    pub chain: ChainParams,
    #[serde(default = "BandParams::reference")]
    pub band: BandParams,
    pub sweep: SweepSection,
    #[serde(default)]
    pub distance_model: DistanceModel,
}

fn default_n_s() -> f64 {
    0.5
}

fn default_eta() -> f64 {
    1.0
}

fn default_receivers() -> Vec<ReceiverKind> {
    ReceiverKind::ALL.to_vec()
}

fn default_records() -> usize {
    380_000
}

fn default_coherent_records() -> usize {
    192_000
}

fn default_repetitions() -> usize {
    3
}

fn default_decision_modes() -> f64 {
    100.0
}

fn default_true() -> bool {
    true
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if cfg.name.is_none() {
            cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or("sweep")
    }

    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        self.band.validate()?;
        self.distance_model.validate()?;
        self.source.purity.resolve()?;
        let s = &self.sweep;
        if s.grid.is_empty() {
            return Err(Error::config("sweep.grid is empty"));
        }
        if s.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("sweep.grid holds a non-finite value"));
        }
        if s.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("sweep.grid must be strictly increasing"));
        }
        if self.source.kinds.is_empty() {
            return Err(Error::config("source.kinds is empty"));
        }
        if !(self.source.n_s >= 0.0) {
            return Err(Error::config(format!("source.n_s must be ≥ 0, got {}", self.source.n_s)));
        }
        if !(0.0..=1.0).contains(&s.eta) {
            return Err(Error::config(format!("sweep.eta must lie in [0, 1], got {}", s.eta)));
        }
        if s.monte_carlo && (s.records < 1000 || s.coherent_records < 1000) {
            return Err(Error::config("sweep.records and sweep.coherent_records must be ≥ 1000"));
        }
        if s.repetitions < 1 {
            return Err(Error::config("sweep.repetitions must be ≥ 1"));
        }
        if !(s.decision_modes >= 1.0) {
            return Err(Error::config("sweep.decision_modes must be ≥ 1"));
        }
        if s.workers == Some(0) {
            return Err(Error::config("sweep.workers must be ≥ 1"));
        }
        let bad = |what: &str| Err(Error::config(format!("sweep.grid: {what}")));
        match s.variable {
            SweepVariable::NS if s.grid[0] < 0.0 => return bad("photon numbers must be ≥ 0"),
            SweepVariable::Eta if s.grid[0] < 0.0 || s.grid[s.grid.len() - 1] > 1.0 => {
                return bad("transmissivities must lie in [0, 1]")
            }
            SweepVariable::Distance if s.grid[0] <= 0.0 => return bad("distances must be positive"),
            SweepVariable::Temperature if s.grid[0] <= 0.0 => return bad("temperatures must be positive"),
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[source]
kinds = ["tmsv", "coherent"]

[sweep]
variable = "n_s"
grid = [0.1, 0.5]
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = SweepConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.chain, ChainParams::reference());
        assert_eq!(cfg.band, BandParams::reference());
        assert_eq!(cfg.sweep.records, 380_000);
        assert_eq!(cfg.sweep.repetitions, 3);
        assert_eq!(cfg.sweep.receivers.len(), 5);
    }

    #[test]
    fn missing_key_is_named() {
        let text = MINIMAL.replace("grid = [0.1, 0.5]\n", "");
        let err = SweepConfig::from_toml_str(&text).unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("grid"), "{err}");
    }

    #[test]
    fn invalid_values_rejected() {
        for (from, to) in [
            ("grid = [0.1, 0.5]", "grid = [0.5, 0.1]"),
            ("grid = [0.1, 0.5]", "grid = []"),
            ("variable = \"n_s\"", "variable = \"eta\"\nrecords = 10"),
            ("kinds = [\"tmsv\", \"coherent\"]", "kinds = [\"tmsv\"]\nbogus = 1"),
        ] {
            let text = MINIMAL.replace(from, to);
            assert!(SweepConfig::from_toml_str(&text).unwrap_err().is_config(), "{to}");
        }
    }

    #[test]
    fn serializes_back() {
        let cfg = SweepConfig::from_toml_str(MINIMAL).unwrap();
        let again = SweepConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(again.sweep, cfg.sweep);
        assert!((again.chain.g_s_amp / cfg.chain.g_s_amp - 1.0).abs() < 1e-12);
    }
}
