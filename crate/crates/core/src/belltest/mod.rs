//! Three-party measurement stations, correlation functions and nonlocality tests.
//!
//! Every qubit is dual-rail: party `p` holds one excitation in `rail0` (`|0⟩`) or
//! `rail1` (`|1⟩`). For GHZ, party `i` owns `L_i` and `R_{i+1}` (indices mod 3); for W,
//! party `i` owns `B_i` (`|0⟩`) and `A_i` (`|1⟩`), with `C_i` as its σz flag.
//!
//! Three engines evaluate the same experiment: exact enumeration of click patterns
//! through the full optical train, Monte-Carlo trajectory sampling of that train, and
//! an abstract ideal-qubit reference.

mod engine;
mod experiments;
pub mod qubit;
mod state;
mod station;

use std::fmt;
use std::str::FromStr;

pub use engine::{Compensation, StationSetup};
pub(crate) use engine::{OutcomeTree, Pipeline};
pub use experiments::{
    correlation, exact_correlation, ghz_battery, mermin_value, outcome_distribution, sample_correlation,
    sample_outcomes, w_all_equal_probability, w_discrepancies, w_property_probabilities, Discrepancy, GhzBattery,
    WProperties,
};
pub use qubit::QubitState;
pub use state::{PartyModes, PreparedState};
pub use station::{
    correction_table, erasure_optics, erasure_station, phase_plate, station_measure_xy, station_measure_z,
    station_optics, ErasureOutcome, PartyStation, StationOutcome,
};

use crate::error::{usage, Error};
use crate::optics::ClickPattern;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Ghz,
    W,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum MeasurementSetting {
    X,
    Y,
    Z,
}

impl MeasurementSetting {
    pub fn code(self) -> u64 {
        match self {
            MeasurementSetting::X => 0,
            MeasurementSetting::Y => 1,
            MeasurementSetting::Z => 2,
        }
    }
}

impl fmt::Display for MeasurementSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeasurementSetting::X => "X",
            MeasurementSetting::Y => "Y",
            MeasurementSetting::Z => "Z",
        })
    }
}

impl FromStr for MeasurementSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_uppercase().as_str() {
            "X" => Ok(MeasurementSetting::X),
            "Y" => Ok(MeasurementSetting::Y),
            "Z" => Ok(MeasurementSetting::Z),
            _ => Err(usage(format!("unknown measurement setting {s:?}"))),
        }
    }
}

pub fn settings_label(settings: [MeasurementSetting; 3]) -> String {
    settings.iter().map(|s| s.to_string()).collect()
}

/// How the W flag modes `C_i` of σx/σy parties are handled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlagTreatment {
    /// Left unmeasured: their which-path information decoheres the qubits.
    #[default]
    Trace,
    /// Retrieved, mixed on a DFT multiport and detected; the click selects a phase
    /// correction applied before the σx/σy optics.
    Erase,
    /// Coherently reset to vacuum, leaving the ideal qubit state.
    Abstract,
}

impl fmt::Display for FlagTreatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlagTreatment::Trace => "trace",
            FlagTreatment::Erase => "erase",
            FlagTreatment::Abstract => "abstract",
        })
    }
}

impl FromStr for FlagTreatment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "trace" => Ok(FlagTreatment::Trace),
            "erase" => Ok(FlagTreatment::Erase),
            "abstract" => Ok(FlagTreatment::Abstract),
            _ => Err(usage(format!("unknown flag treatment {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    #[default]
    Exact,
    MonteCarlo,
    Abstract,
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EngineKind::Exact => "exact",
            EngineKind::MonteCarlo => "montecarlo",
            EngineKind::Abstract => "abstract",
        })
    }
}

impl FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "exact" => Ok(EngineKind::Exact),
            "montecarlo" => Ok(EngineKind::MonteCarlo),
            "abstract" => Ok(EngineKind::Abstract),
            _ => Err(usage(format!("unknown engine {s:?}"))),
        }
    }
}

/// Engine choice plus the sampling budget used by the Monte-Carlo engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Engine {
    pub kind: EngineKind,
    pub shots: u64,
    pub seed: u64,
}

impl Engine {
    pub fn exact() -> Self {
        Engine {
            kind: EngineKind::Exact,
            shots: 0,
            seed: 0,
        }
    }

    pub fn reference() -> Self {
        Engine {
            kind: EngineKind::Abstract,
            shots: 0,
            seed: 0,
        }
    }

    pub fn monte_carlo(shots: u64, seed: u64) -> Self {
        Engine {
            kind: EngineKind::MonteCarlo,
            shots,
            seed,
        }
    }
}

/// One shot's station results. `values[p]` is `x_p` for σx/σy parties and `z_p` for σz parties.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutcomeRecord {
    pub values: Option<[i8; 3]>,
    /// Erasure-multiport click pattern, when flags were erased.
    pub erasure: Option<ClickPattern>,
}

impl OutcomeRecord {
    pub fn valid(values: [i8; 3]) -> Self {
        OutcomeRecord {
            values: Some(values),
            erasure: None,
        }
    }

    pub fn invalid() -> Self {
        OutcomeRecord {
            values: None,
            erasure: None,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.values.is_some()
    }
}

/// Observable eigenvalue of a recorded value: σz = −z, σx/σy = x.
pub fn eigenvalue(setting: MeasurementSetting, value: i8) -> i8 {
    match setting {
        MeasurementSetting::Z => -value,
        _ => value,
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct CorrelationEstimate {
    pub settings: [MeasurementSetting; 3],
    pub value: f64,
    pub stderr: f64,
    pub shots: u64,
    pub valid_fraction: f64,
    pub engine: EngineKind,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ProbabilityEstimate {
    pub value: f64,
    pub stderr: f64,
    pub shots: u64,
    /// Probability (or frequency) of the conditioning event, coincidence included.
    pub valid_fraction: f64,
    pub engine: EngineKind,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct MerminResult {
    pub a: MeasurementSetting,
    pub b: MeasurementSetting,
    /// `⟨a a a⟩, ⟨a b b⟩, ⟨b a b⟩, ⟨b b a⟩`.
    pub terms: [CorrelationEstimate; 4],
    pub value: f64,
    pub stderr: f64,
    pub violated: bool,
}
