use rayon::prelude::*;

use super::engine::Pipeline;
use super::qubit;
use super::{
    eigenvalue, CorrelationEstimate, Engine, EngineKind, FlagTreatment, MeasurementSetting, MerminResult,
    OutcomeRecord, PreparedState, ProbabilityEstimate, StationSetup,
};
use crate::error::{numerical, usage, Result};
use crate::rng::{shot_rng, RunId};

use MeasurementSetting::{X, Y, Z};

/// Purposes that get independent random streams under one seed.
#[derive(Clone, Copy)]
enum Purpose {
    Correlation = 1,
    TwoMinus = 2,
    ConditionalJk = 3,
    ConditionalIk = 4,
    AllEqual = 5,
}

fn run_id(purpose: Purpose, settings: [MeasurementSetting; 3], extra: u64) -> RunId {
    let code = settings.iter().fold(0, |acc, s| acc * 3 + s.code());
    RunId(((purpose as u64) << 32) | (extra << 8) | code)
}

/// Exact outcome distribution through the optical train.
pub fn outcome_distribution(
    prepared: &PreparedState,
    settings: [MeasurementSetting; 3],
    flag: FlagTreatment,
    setup: &StationSetup,
) -> Result<Vec<(OutcomeRecord, f64)>> {
    Pipeline::new(prepared, settings, flag, setup)?.exact()
}

/// Monte-Carlo shots through the optical train; shot `k` uses stream `k` of `run`.
pub fn sample_outcomes(
    prepared: &PreparedState,
    settings: [MeasurementSetting; 3],
    flag: FlagTreatment,
    setup: &StationSetup,
    shots: u64,
    seed: u64,
    run: RunId,
) -> Result<Vec<OutcomeRecord>> {
    if shots == 0 {
        return Err(usage("Monte-Carlo runs need at least one shot"));
    }
    let pipeline = Pipeline::new(prepared, settings, flag, setup)?;
    if pipeline.has_drift() {
        return (0..shots)
            .into_par_iter()
            .map(|k| pipeline.sample_drifting(&mut shot_rng(seed, run, k)))
            .collect();
    }
    let tree = pipeline.tree()?;
    Ok((0..shots)
        .into_par_iter()
        .map(|k| tree.sample(&mut shot_rng(seed, run, k)).clone())
        .collect())
}

enum Outcomes {
    Weighted(Vec<(OutcomeRecord, f64)>, EngineKind),
    Shots(Vec<OutcomeRecord>),
}

fn outcomes(
    prepared: &PreparedState,
    settings: [MeasurementSetting; 3],
    flag: FlagTreatment,
    setup: &StationSetup,
    engine: &Engine,
    run: RunId,
) -> Result<Outcomes> {
    prepared.check_settings(settings)?;
    Ok(match engine.kind {
        EngineKind::Exact => Outcomes::Weighted(outcome_distribution(prepared, settings, flag, setup)?, EngineKind::Exact),
        EngineKind::Abstract => {
            let reference = prepared.reference().with_phases(setup.compensation_phases(prepared));
            Outcomes::Weighted(qubit::outcome_distribution(&reference, settings), EngineKind::Abstract)
        }
        EngineKind::MonteCarlo => {
            Outcomes::Shots(sample_outcomes(prepared, settings, flag, setup, engine.shots, engine.seed, run)?)
        }
    })
}

impl Outcomes {
    fn correlation(&self, settings: [MeasurementSetting; 3]) -> Result<CorrelationEstimate> {
        let product = |v: &[i8; 3]| -> i64 { (0..3).map(|p| eigenvalue(settings[p], v[p]) as i64).product() };
        match self {
            Outcomes::Weighted(dist, engine) => {
                let (mut valid, mut sum) = (0.0, 0.0);
                for (rec, p) in dist {
                    if let Some(v) = &rec.values {
                        valid += p;
                        sum += p * product(v) as f64;
                    }
                }
                if valid < crate::fock::ZERO_NORM_THRESHOLD {
                    return Err(numerical("no valid coincidences"));
                }
                Ok(CorrelationEstimate {
                    settings,
                    value: (sum / valid).clamp(-1.0, 1.0),
                    stderr: 0.0,
                    shots: 0,
                    valid_fraction: valid,
                    engine: *engine,
                })
            }
            Outcomes::Shots(recs) => {
                let vals: Vec<i64> = recs.iter().filter_map(|r| r.values.as_ref().map(product)).collect();
                let n = vals.len();
                if n == 0 {
                    return Err(numerical("no valid coincidences among the sampled shots"));
                }
                let plus = vals.iter().filter(|&&v| v > 0).count();
                let mean = (2 * plus as i64 - n as i64) as f64 / n as f64;
                let stderr = if n > 1 {
                    let q = plus as f64 / n as f64;
                    // Sample variance of ±1 values.
                    (4.0 * q * (1.0 - q) * n as f64 / (n - 1) as f64 / n as f64).sqrt()
                } else {
                    0.0
                };
                Ok(CorrelationEstimate {
                    settings,
                    value: mean,
                    stderr,
                    shots: recs.len() as u64,
                    valid_fraction: n as f64 / recs.len() as f64,
                    engine: EngineKind::MonteCarlo,
                })
            }
        }
    }

    /// `P(event | condition, valid)`.
    fn probability(
        &self,
        event: impl Fn(&[i8; 3]) -> bool,
        condition: impl Fn(&[i8; 3]) -> bool,
    ) -> Result<ProbabilityEstimate> {
        match self {
            Outcomes::Weighted(dist, engine) => {
                let (mut cond, mut both) = (0.0, 0.0);
                for (rec, p) in dist {
                    if let Some(v) = &rec.values {
                        if condition(v) {
                            cond += p;
                            if event(v) {
                                both += p;
                            }
                        }
                    }
                }
                if cond < crate::fock::ZERO_NORM_THRESHOLD {
                    return Err(numerical("conditioning event has zero probability"));
                }
                Ok(ProbabilityEstimate {
                    value: (both / cond).clamp(0.0, 1.0),
                    stderr: 0.0,
                    shots: 0,
                    valid_fraction: cond,
                    engine: *engine,
                })
            }
            Outcomes::Shots(recs) => {
                let conditioned: Vec<&[i8; 3]> = recs.iter().filter_map(|r| r.values.as_ref()).filter(|v| condition(v)).collect();
                let n = conditioned.len();
                if n == 0 {
                    return Err(numerical("conditioning event never occurred among the sampled shots"));
                }
                let k = conditioned.iter().filter(|v| event(v)).count();
                let p = k as f64 / n as f64;
                Ok(ProbabilityEstimate {
                    value: p,
                    stderr: (p * (1.0 - p) / n as f64).sqrt(),
                    shots: recs.len() as u64,
                    valid_fraction: n as f64 / recs.len() as f64,
                    engine: EngineKind::MonteCarlo,
                })
            }
        }
    }
}

/// `E(a₁a₂a₃)` from the chosen engine, conditioned on a three-station coincidence.
pub fn correlation(
    prepared: &PreparedState,
    settings: [MeasurementSetting; 3],
    flag: FlagTreatment,
    setup: &StationSetup,
    engine: &Engine,
) -> Result<CorrelationEstimate> {
    outcomes(prepared, settings, flag, setup, engine, run_id(Purpose::Correlation, settings, 0))?.correlation(settings)
}

pub fn exact_correlation(
    prepared: &PreparedState,
    settings: [MeasurementSetting; 3],
    flag: FlagTreatment,
    setup: &StationSetup,
) -> Result<CorrelationEstimate> {
    correlation(prepared, settings, flag, setup, &Engine::exact())
}

pub fn sample_correlation(
    prepared: &PreparedState,
    settings: [MeasurementSetting; 3],
    flag: FlagTreatment,
    setup: &StationSetup,
    shots: u64,
    seed: u64,
) -> Result<CorrelationEstimate> {
    correlation(prepared, settings, flag, setup, &Engine::monte_carlo(shots, seed))
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct GhzBattery {
    /// `E(YYX), E(YXY), E(XYY), E(XXX)`.
    pub terms: [CorrelationEstimate; 4],
    /// Local realism forces `x₁x₂x₃ = (y₁y₂x₃)(y₁x₂y₃)(x₁y₂y₃)`.
    pub lhv_xxx_prediction: f64,
    pub quantum_xxx: f64,
    /// Set when the measured `E(XXX)` has the opposite sign to the LHV prediction.
    pub contradiction: bool,
}

pub const GHZ_BATTERY: [[MeasurementSetting; 3]; 4] = [[Y, Y, X], [Y, X, Y], [X, Y, Y], [X, X, X]];

pub fn ghz_battery(prepared: &PreparedState, engine: &Engine, setup: &StationSetup) -> Result<GhzBattery> {
    let terms = GHZ_BATTERY
        .iter()
        .map(|&s| correlation(prepared, s, FlagTreatment::Trace, setup, engine))
        .collect::<Result<Vec<_>>>()?;
    let lhv = terms[0].value * terms[1].value * terms[2].value;
    let quantum = terms[3].value;
    Ok(GhzBattery {
        lhv_xxx_prediction: lhv,
        quantum_xxx: quantum,
        contradiction: lhv * quantum < 0.0,
        terms: terms.try_into().expect("four experiments"),
    })
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct WProperties {
    /// `P(exactly two z = −1)` under `(Z, Z, Z)`.
    pub two_minus_one: ProbabilityEstimate,
    /// `P(x_j = x_k | z_i = −1)`, averaged over the three choices of `i`.
    pub xj_eq_xk_given_zi: ProbabilityEstimate,
    /// `P(x_i = x_k | z_j = −1)`, averaged likewise from independent runs.
    pub xi_eq_xk_given_zj: ProbabilityEstimate,
}

fn mean_estimate(parts: &[ProbabilityEstimate]) -> ProbabilityEstimate {
    let n = parts.len() as f64;
    ProbabilityEstimate {
        value: parts.iter().map(|p| p.value).sum::<f64>() / n,
        stderr: parts.iter().map(|p| p.stderr * p.stderr).sum::<f64>().sqrt() / n,
        shots: parts.iter().map(|p| p.shots).sum(),
        valid_fraction: parts.iter().map(|p| p.valid_fraction).sum::<f64>() / n,
        engine: parts[0].engine,
    }
}

fn check_w(prepared: &PreparedState) -> Result<()> {
    if prepared.protocol() != super::Protocol::W {
        return Err(usage("W properties need a W-protocol state"));
    }
    Ok(())
}

pub fn w_property_probabilities(
    prepared: &PreparedState,
    engine: &Engine,
    flag: FlagTreatment,
    setup: &StationSetup,
) -> Result<WProperties> {
    check_w(prepared)?;
    let zzz = [Z, Z, Z];
    let two_minus_one = outcomes(prepared, zzz, flag, setup, engine, run_id(Purpose::TwoMinus, zzz, 0))?
        .probability(|v| v.iter().filter(|&&z| z == -1).count() == 2, |_| true)?;
    let conditional = |purpose: Purpose| -> Result<ProbabilityEstimate> {
        let parts = (0..3)
            .map(|i| {
                let mut s = [X; 3];
                s[i] = Z;
                let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                outcomes(prepared, s, flag, setup, engine, run_id(purpose, s, i as u64))?
                    .probability(|v| v[j] == v[k], |v| v[i] == -1)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(mean_estimate(&parts))
    };
    Ok(WProperties {
        two_minus_one,
        xj_eq_xk_given_zi: conditional(Purpose::ConditionalJk)?,
        xi_eq_xk_given_zj: conditional(Purpose::ConditionalIk)?,
    })
}

/// `P(x₁ = x₂ = x₃)` under `(X, X, X)`.
pub fn w_all_equal_probability(
    prepared: &PreparedState,
    engine: &Engine,
    flag: FlagTreatment,
    setup: &StationSetup,
) -> Result<ProbabilityEstimate> {
    check_w(prepared)?;
    let xxx = [X, X, X];
    outcomes(prepared, xxx, flag, setup, engine, run_id(Purpose::AllEqual, xxx, 0))?
        .probability(|v| v[0] == v[1] && v[1] == v[2], |_| true)
}

/// `⟨a₁a₂a₃⟩ − ⟨a₁b₂b₃⟩ − ⟨b₁a₂b₃⟩ − ⟨b₁b₂a₃⟩`.
pub fn mermin_value(
    prepared: &PreparedState,
    a: MeasurementSetting,
    b: MeasurementSetting,
    engine: &Engine,
    flag: FlagTreatment,
    setup: &StationSetup,
) -> Result<MerminResult> {
    let settings = [[a, a, a], [a, b, b], [b, a, b], [b, b, a]];
    let terms = settings
        .iter()
        .map(|&s| correlation(prepared, s, flag, setup, engine))
        .collect::<Result<Vec<_>>>()?;
    let value = terms[0].value - terms[1].value - terms[2].value - terms[3].value;
    let stderr = terms.iter().map(|t| t.stderr * t.stderr).sum::<f64>().sqrt();
    Ok(MerminResult {
        a,
        b,
        value,
        stderr,
        violated: value.abs() > 2.0,
        terms: terms.try_into().expect("four terms"),
    })
}

/// A W-test quantity that departs from the ideal-qubit prediction.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Discrepancy {
    pub quantity: &'static str,
    pub ideal: f64,
    pub obtained: f64,
    pub stderr: f64,
}

/// Compares the W results with the ideal values `1, 1, 1` and `3/4`; a quantity is listed
/// when it misses by more than `max(1e-9, 5·stderr)`.
pub fn w_discrepancies(props: &WProperties, all_equal: &ProbabilityEstimate) -> Vec<Discrepancy> {
    [
        ("P(two z = -1)", 1.0, &props.two_minus_one),
        ("P(x_j = x_k | z_i = -1)", 1.0, &props.xj_eq_xk_given_zi),
        ("P(x_i = x_k | z_j = -1)", 1.0, &props.xi_eq_xk_given_zj),
        ("P(x_1 = x_2 = x_3)", 0.75, all_equal),
    ]
    .into_iter()
    .filter(|(_, ideal, e)| (e.value - ideal).abs() > (5.0 * e.stderr).max(1e-9))
    .map(|(quantity, ideal, e)| Discrepancy {
        quantity,
        ideal,
        obtained: e.value,
        stderr: e.stderr,
    })
    .collect()
}
