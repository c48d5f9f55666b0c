use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tribell_core::belltest::{EngineKind, FlagTreatment, MeasurementSetting};
use tribell_core::optics::DetectorModel;
use tribell_core::protocols::{AttemptConfig, ChannelPhases, ExcitationParams, RetrievalParams, TimingParams};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolChoice {
    Pair,
    Ghz,
    W,
}

/// Where the three-party state comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Post-selected component of ideal pair (and W Fock) states.
    #[default]
    Ideal,
    /// Ideal pairs without post-selection; the stations do the post-selection.
    Raw,
    /// Heralded pairs at the configured `p_c`, post-selected.
    Heralded,
    /// Product of single-qubit states given by `product` (Bloch angles).
    Product,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseConfig {
    pub pair: [f64; 3],
    pub a2: f64,
    pub a3: f64,
    /// Station compensation phases; calibrated to the channel phases when absent.
    pub compensation: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub protocol: ProtocolChoice,
    pub engine: EngineKind,
    pub source: Source,
    pub p_c: f64,
    pub eta: f64,
    pub dark: f64,
    pub retrieval_efficiency: f64,
    pub phases: PhaseConfig,
    pub drift_width: f64,
    pub n_max: u8,
    pub flag_treatment: FlagTreatment,
    pub shots: u64,
    pub seed: u64,
    pub t0: f64,
    pub t1: f64,
    pub attempt_cap: u64,
    pub mermin_a: MeasurementSetting,
    pub mermin_b: MeasurementSetting,
    /// `[θ, φ]` per party: `cos(θ/2)|0⟩ + e^{iφ} sin(θ/2)|1⟩`.
    pub product: [[f64; 2]; 3],
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            protocol: ProtocolChoice::Ghz,
            engine: EngineKind::Exact,
            source: Source::Ideal,
            p_c: 1e-3,
            eta: 0.0,
            dark: 0.0,
            retrieval_efficiency: 1.0,
            phases: PhaseConfig::default(),
            drift_width: 0.0,
            n_max: 2,
            flag_treatment: FlagTreatment::Trace,
            shots: 100_000,
            seed: 1,
            t0: 1.0,
            t1: 1.0,
            attempt_cap: AttemptConfig::DEFAULT_CAP,
            mermin_a: MeasurementSetting::X,
            mermin_b: MeasurementSetting::Y,
            product: [[0.0; 2]; 3],
        }
    }
}

/// Command-line values that override the file.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long, value_parser = parse_engine)]
    pub engine: Option<EngineKind>,
    #[arg(long, value_enum)]
    pub source: Option<Source>,
    #[arg(long)]
    pub shots: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Detector loss probability.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Dark-click probability per detection window.
    #[arg(long)]
    pub dark: Option<f64>,
    /// Raman emission probability per pulse.
    #[arg(long)]
    pub pc: Option<f64>,
    #[arg(long, value_parser = parse_flag)]
    pub flag_treatment: Option<FlagTreatment>,
    #[arg(long)]
    pub n_max: Option<u8>,
}

fn parse_engine(s: &str) -> Result<EngineKind, String> {
    s.parse().map_err(|e: tribell_core::Error| e.to_string())
}

fn parse_flag(s: &str) -> Result<FlagTreatment, String> {
    s.parse().map_err(|e: tribell_core::Error| e.to_string())
}

pub fn parse_setting(s: &str) -> Result<MeasurementSetting, String> {
    s.parse().map_err(|e: tribell_core::Error| e.to_string())
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($field:ident, $value:expr) => {
                if let Some(v) = $value {
                    self.$field = v;
                }
            };
        }
        set!(engine, o.engine);
        set!(source, o.source);
        set!(shots, o.shots);
        set!(seed, o.seed);
        set!(eta, o.eta);
        set!(dark, o.dark);
        set!(p_c, o.pc);
        set!(flag_treatment, o.flag_treatment);
        set!(n_max, o.n_max);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.detector()?;
        self.excitation()?;
        self.retrieval()?;
        self.timing()?;
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(CliError::Config(format!("{name} must be finite")))
            }
        };
        for (i, p) in self.phases.pair.iter().enumerate() {
            finite(&format!("phases.pair[{i}]"), *p)?;
        }
        finite("phases.a2", self.phases.a2)?;
        finite("phases.a3", self.phases.a3)?;
        for c in self.phases.compensation.iter().flatten() {
            finite("phases.compensation", *c)?;
        }
        for q in self.product.iter().flatten() {
            finite("product", *q)?;
        }
        if !(0.0..=std::f64::consts::TAU).contains(&self.drift_width) {
            return Err(CliError::Config(format!("drift_width {} outside [0, 2π]", self.drift_width)));
        }
        if self.n_max == 0 || self.n_max > 8 {
            return Err(CliError::Config(format!("n_max {} outside [1, 8]", self.n_max)));
        }
        if self.engine == EngineKind::MonteCarlo && self.shots == 0 {
            return Err(CliError::Config("shots must be at least 1".into()));
        }
        if self.attempt_cap == 0 {
            return Err(CliError::Config("attempt_cap must be at least 1".into()));
        }
        Ok(())
    }

    pub fn detector(&self) -> Result<DetectorModel, CliError> {
        Ok(DetectorModel::new(self.eta, self.dark)?)
    }

    pub fn excitation(&self) -> Result<ExcitationParams, CliError> {
        Ok(ExcitationParams::new(self.p_c, 0.0)?)
    }

    pub fn retrieval(&self) -> Result<RetrievalParams, CliError> {
        Ok(RetrievalParams::new(self.retrieval_efficiency)?)
    }

    pub fn timing(&self) -> Result<TimingParams, CliError> {
        Ok(TimingParams::new(self.t0, self.t1)?)
    }

    pub fn channel_phases(&self) -> ChannelPhases {
        ChannelPhases {
            pair: self.phases.pair,
            a2: self.phases.a2,
            a3: self.phases.a3,
        }
    }

    /// Canonical serialization: fixed field order, shortest round-trip floats.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        hex::encode(&digest[..8])
    }
}
