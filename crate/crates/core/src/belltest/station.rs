use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use super::MeasurementSetting;
use crate::error::{usage, Error, Result};
use crate::fock::{ModeId, ModeRegistry, StateVector};
use crate::optics::{
    beam_splitter, click_pattern_distribution, detect_threshold, multiport, phase_shift, BeamSplitterSpec,
    ClickPattern, DetectorModel, MultiportSpec,
};
use crate::protocols::{retrieve_to_fresh, RetrievalParams};

/// One party's measurement station. `rail0`/`rail1` feed detectors `D_A`/`D_B`.
#[derive(Clone, Debug)]
pub struct PartyStation {
    pub party: usize,
    pub rail0: ModeId,
    pub rail1: ModeId,
    pub flag: Option<ModeId>,
    /// Phase added to `rail1` to cancel channel phases.
    pub compensation: f64,
    pub detector: DetectorModel,
}

#[derive(Clone, Debug)]
pub struct StationOutcome {
    /// `None` marks an invalid (zero or double click) event.
    pub value: Option<i8>,
    pub pattern: ClickPattern,
    pub probability: f64,
    pub state: Option<StateVector>,
}

/// Phase plate on `rail0`: 0 for σx, π/2 for σy.
pub fn phase_plate(setting: MeasurementSetting) -> Result<f64> {
    match setting {
        MeasurementSetting::X => Ok(0.0),
        MeasurementSetting::Y => Ok(FRAC_PI_2),
        MeasurementSetting::Z => Err(usage("σz is not measured at the rail beam splitter")),
    }
}

/// Compensation and phase plate, then the 50/50 splitter.
///
/// `rail1` also receives a fixed −π/2 so that, with the symmetric splitter, `D_A` (the
/// `rail0` output) fires for the `+1` eigenvector `|0⟩ + e^{iβ}|1⟩` (β = 0 for σx, π/2 for σy).
pub fn station_optics(state: &StateVector, station: &PartyStation, setting: MeasurementSetting) -> Result<StateVector> {
    let plate = phase_plate(setting)?;
    let mut s = phase_shift(state, &station.rail0, plate)?;
    s = phase_shift(&s, &station.rail1, station.compensation - FRAC_PI_2)?;
    beam_splitter(&s, &BeamSplitterSpec::balanced(station.rail0.clone(), station.rail1.clone())?)
}

/// Maps a `(D_A, D_B)` pattern to `+1`, `−1` or invalid.
pub fn rail_value(d_a: bool, d_b: bool) -> Option<i8> {
    match (d_a, d_b) {
        (true, false) => Some(1),
        (false, true) => Some(-1),
        _ => None,
    }
}

/// σx/σy measurement of a photonic dual-rail qubit; one entry per click pattern.
pub fn station_measure_xy(
    state: &StateVector,
    station: &PartyStation,
    setting: MeasurementSetting,
) -> Result<Vec<StationOutcome>> {
    let s = station_optics(state, station, setting)?;
    let dets = [(station.rail0.clone(), station.detector), (station.rail1.clone(), station.detector)];
    Ok(click_pattern_distribution(&s, &dets)?
        .into_iter()
        .map(|o| StationOutcome {
            value: rail_value(o.pattern.0[0], o.pattern.0[1]),
            pattern: o.pattern,
            probability: o.probability,
            state: o.state,
        })
        .collect())
}

/// σz readout: retrieve the flag ensemble and detect it; click → `z = +1`.
pub fn station_measure_z(
    state: &StateVector,
    station: &PartyStation,
    retrieval: &RetrievalParams,
) -> Result<Vec<StationOutcome>> {
    let flag = station
        .flag
        .as_ref()
        .ok_or_else(|| usage(format!("party {} has no flag ensemble", station.party)))?;
    let (s, photon) = retrieve_to_fresh(state, flag, retrieval)?;
    Ok(detect_threshold(&s, &photon, &station.detector)?
        .into_iter()
        .map(|b| StationOutcome {
            value: Some(if b.clicked { 1 } else { -1 }),
            pattern: ClickPattern(vec![b.clicked]),
            probability: b.probability,
            state: b.state,
        })
        .collect())
}

/// Phase corrections `[k][j] = −arg(U_kj)` for a click at output `k` of an `m`-port,
/// read off by sending one photon into each input.
pub fn correction_table(m: usize) -> Result<Vec<Vec<f64>>> {
    let labels: Vec<String> = (0..m).map(|j| format!("in{j}")).collect();
    let reg = Arc::new(ModeRegistry::with_labels(1, &labels)?);
    let modes: Vec<ModeId> = reg.modes().collect();
    let mut table = vec![vec![0.0; m]; m];
    for j in 0..m {
        let mut occ = vec![0u8; m];
        occ[j] = 1;
        let out = erasure_optics(&StateVector::basis(reg.clone(), &occ)?, &modes)?;
        for (k, row) in table.iter_mut().enumerate() {
            let mut o = vec![0u8; m];
            o[k] = 1;
            row[j] = -out.amplitude(&o).arg();
        }
    }
    Ok(table)
}

/// The erasure interferometer: a DFT multiport over the flag modes (identity for one flag).
pub fn erasure_optics(state: &StateVector, flags: &[ModeId]) -> Result<StateVector> {
    match flags.len() {
        0 => Err(usage("erasure needs at least one flag mode")),
        1 => Ok(state.clone()),
        _ => multiport(state, &MultiportSpec::new(flags.to_vec())?),
    }
}

#[derive(Clone, Debug)]
pub struct ErasureOutcome {
    pub pattern: ClickPattern,
    pub probability: f64,
    /// Phase to add on `rail1` of the party owning each flag, in flag order.
    pub corrections: Vec<f64>,
    pub state: Option<StateVector>,
}

/// Corrections selected by an erasure click pattern: a single click at output `k` picks
/// row `k` of the table, anything else leaves the phases alone.
pub fn erasure_corrections(pattern: &ClickPattern, table: &[Vec<f64>]) -> Vec<f64> {
    let m = pattern.len();
    if pattern.clicks() == 1 && m > 1 {
        let k = pattern.0.iter().position(|&c| c).expect("one click");
        table[k].clone()
    } else {
        vec![0.0; m]
    }
}

/// Interferes the (photonic) flag modes, detects every output and returns each click
/// pattern with its phase corrections and collapsed state.
pub fn erasure_station(state: &StateVector, flags: &[ModeId], detector: &DetectorModel) -> Result<Vec<ErasureOutcome>> {
    let reg = state.registry();
    let idx = flags.iter().map(|f| reg.resolve(f)).collect::<Result<Vec<_>>>()?;
    let single = state
        .terms()
        .all(|(o, _)| idx.iter().map(|&i| o[i] as u32).sum::<u32>() == 1);
    let mixed = erasure_optics(state, flags)?;
    let dets: Vec<_> = flags.iter().map(|f| (f.clone(), *detector)).collect();
    let table = correction_table(flags.len().max(2))?;
    let outcomes = click_pattern_distribution(&mixed, &dets)?;
    if single && detector.is_ideal() && outcomes[0].probability > 1e-10 {
        return Err(Error::Internal(format!(
            "erasure registered no click with probability {} for a guaranteed excitation",
            outcomes[0].probability
        )));
    }
    Ok(outcomes
        .into_iter()
        .map(|o| ErasureOutcome {
            corrections: erasure_corrections(&o.pattern, &table),
            pattern: o.pattern,
            probability: o.probability,
            state: o.state,
        })
        .collect())
}
