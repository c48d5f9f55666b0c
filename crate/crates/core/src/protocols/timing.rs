//! Repeat-until-success accounting.

use rayon::prelude::*;

use super::{pair_before_detection, prepare_pair, ExcitationParams};
use crate::belltest::{outcome_distribution, FlagTreatment, MeasurementSetting, Pipeline, PreparedState, StationSetup};
use crate::error::{config, usage, Error, Result};
use crate::fock::ZERO_NORM_THRESHOLD;
use crate::optics::DetectorModel;
use crate::protocols::extract_coincidence_component;
use crate::rng::{shot_rng, RunId};
use crate::sampling::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimingProtocol {
    Pair,
    Ghz,
    W,
}

/// Preparation times of one pair (`t0`) and of one W Fock state (`t1`), in seconds.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct TimingParams {
    t0: f64,
    t1: f64,
}

impl TimingParams {
    pub fn new(t0: f64, t1: f64) -> Result<Self> {
        if !(t0 > 0.0 && t0.is_finite() && t1 > 0.0 && t1.is_finite()) {
            return Err(config(format!("preparation times must be positive (t0 = {t0}, t1 = {t1})")));
        }
        Ok(TimingParams { t0, t1 })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }
}

/// Closed-form total preparation times: `t0` for a pair, `4t0/(1−η)³` for GHZ and
/// `4·max(t0, t1)/(1−η)³` for W.
pub fn expected_time(protocol: TimingProtocol, timing: &TimingParams, eta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&eta) {
        return Err(usage(format!("η = {eta}: the expected time diverges or is undefined")));
    }
    let survive = (1.0 - eta).powi(3);
    Ok(match protocol {
        TimingProtocol::Pair => timing.t0,
        TimingProtocol::Ghz => 4.0 * timing.t0 / survive,
        TimingProtocol::W => 4.0 * timing.t0.max(timing.t1) / survive,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttemptConfig {
    pub protocol: TimingProtocol,
    /// Raman pulse of the pair herald (pair protocol only).
    pub excitation: ExcitationParams,
    pub detector: DetectorModel,
    pub n_max: u8,
    pub attempt_cap: u64,
}

impl AttemptConfig {
    pub const DEFAULT_CAP: u64 = 1_000_000;
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct AttemptStats {
    pub samples: Vec<u64>,
    pub mean: f64,
    pub stderr: f64,
    /// Per-round success probability by exact click-pattern enumeration.
    pub success_probability: f64,
    /// `1 / success_probability`.
    pub analytic_attempts: f64,
    /// Weight of the one-excitation-per-party component of the ideal raw state
    /// (GHZ and W only), independent of detector behaviour.
    pub coincidence_weight: Option<f64>,
}

enum Round {
    Pair(Trajectory<bool>),
    Stations(crate::belltest::OutcomeTree),
}

impl Round {
    fn success<R: rand::Rng>(&self, rng: &mut R) -> bool {
        match self {
            Round::Pair(t) => *t.sample(rng),
            Round::Stations(t) => t.sample(rng).is_valid(),
        }
    }
}

const XXX: [MeasurementSetting; 3] = [MeasurementSetting::X; 3];

/// Samples the number of rounds until the first success, one independent stream per shot.
///
/// A pair round succeeds on a single herald click; a GHZ or W round is one
/// post-selection attempt on the ideal raw state (all pairs and the W Fock state already
/// heralded) and succeeds on a three-station coincidence behind lossy detectors.
pub fn simulate_attempts(cfg: &AttemptConfig, shots: u64, seed: u64) -> Result<AttemptStats> {
    if shots == 0 {
        return Err(usage("simulate_attempts needs at least one shot"));
    }
    if cfg.attempt_cap == 0 {
        return Err(config("attempt cap must be at least 1"));
    }
    let setup = StationSetup {
        detector: cfg.detector,
        ..StationSetup::default()
    };
    let (round, success_probability, coincidence_weight) = match cfg.protocol {
        TimingProtocol::Pair => {
            let p = prepare_pair(("L", "R"), 0.0, &cfg.excitation, &cfg.detector, cfg.n_max)?.probability;
            let (s, d1, d2) = pair_before_detection(("L", "R"), 0.0, &cfg.excitation, cfg.n_max)?;
            let tree = Trajectory::build(&s, &[(d1, cfg.detector), (d2, cfg.detector)], &mut |pat, _| {
                Ok(pat.clicks() == 1)
            })?;
            (Round::Pair(tree), p, None)
        }
        TimingProtocol::Ghz | TimingProtocol::W => {
            let prepared = if cfg.protocol == TimingProtocol::Ghz {
                PreparedState::ghz_raw_ideal([0.0; 3], cfg.n_max)?
            } else {
                PreparedState::w_raw_ideal([0.0; 3], 0.0, 0.0, cfg.n_max)?
            };
            let dist = outcome_distribution(&prepared, XXX, FlagTreatment::Trace, &setup)?;
            let p: f64 = dist.iter().filter(|(r, _)| r.is_valid()).map(|(_, p)| p).sum();
            let pairs: Vec<_> = prepared.parties().iter().map(|m| (m.rail0.clone(), m.rail1.clone())).collect();
            let weight = extract_coincidence_component(prepared.state(), &pairs)?.0;
            let tree = Pipeline::new(&prepared, XXX, FlagTreatment::Trace, &setup)?.tree()?;
            (Round::Stations(tree), p, Some(weight))
        }
    };
    if success_probability < ZERO_NORM_THRESHOLD {
        return Err(Error::AttemptCap { cap: cfg.attempt_cap });
    }
    let run = RunId(0x7000 + cfg.protocol as u64);
    let samples = (0..shots)
        .into_par_iter()
        .map(|k| {
            let mut rng = shot_rng(seed, run, k);
            (1..=cfg.attempt_cap)
                .find(|_| round.success(&mut rng))
                .ok_or(Error::AttemptCap { cap: cfg.attempt_cap })
        })
        .collect::<Result<Vec<u64>>>()?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<u64>() as f64 / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|&s| (s as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(AttemptStats {
        samples,
        mean,
        stderr: (var / n).sqrt(),
        success_probability,
        analytic_attempts: 1.0 / success_probability,
        coincidence_weight,
    })
}
