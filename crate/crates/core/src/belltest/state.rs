use std::sync::Arc;

use super::{MeasurementSetting, Protocol, QubitState};
use crate::error::{numerical, usage, Result};
use crate::fock::{Amplitude, ModeId, ModeRegistry, StateVector};
use crate::optics::DetectorModel;
use crate::protocols::{
    extract_coincidence_component, ideal_pair, ideal_w_fock, prepare_ghz_raw, prepare_pair, prepare_w_fock,
    prepare_w_raw, ChannelPhases, ExcitationParams, HeraldResult,
};

#[derive(Clone, Debug, PartialEq)]
pub struct PartyModes {
    pub rail0: ModeId,
    pub rail1: ModeId,
    pub flag: Option<ModeId>,
}

/// A three-party ensemble state together with its dual-rail layout and the ideal
/// qubit state it is meant to carry.
#[derive(Clone, Debug)]
pub struct PreparedState {
    protocol: Protocol,
    state: StateVector,
    parties: [PartyModes; 3],
    reference: QubitState,
    calibration: [f64; 3],
    drift_modes: Vec<ModeId>,
}

fn labels(prefix: &str) -> [String; 3] {
    std::array::from_fn(|i| format!("{prefix}{}", i + 1))
}

impl PreparedState {
    fn ghz_layout(state: StateVector, phases: [f64; 3], drift: bool) -> Result<Self> {
        let (l, r) = (labels("L"), labels("R"));
        let parties = (0..3)
            .map(|i| {
                Ok(PartyModes {
                    rail0: state.mode(&l[i])?,
                    rail1: state.mode(&r[(i + 1) % 3])?,
                    flag: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let phi_r: f64 = phases.iter().sum();
        let drift_modes = if drift {
            r.iter().map(|m| state.mode(m)).collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(PreparedState {
            protocol: Protocol::Ghz,
            state,
            parties: parties.try_into().expect("three parties"),
            reference: QubitState::ghz(phi_r),
            calibration: [-phi_r, 0.0, 0.0],
            drift_modes,
        })
    }

    fn w_layout(state: StateVector, pair_phases: [f64; 3], a2: f64, a3: f64, drift: bool) -> Result<Self> {
        let (a, b, c) = (labels("A"), labels("B"), labels("C"));
        let parties = (0..3)
            .map(|i| {
                Ok(PartyModes {
                    rail0: state.mode(&b[i])?,
                    rail1: state.mode(&a[i])?,
                    flag: Some(state.mode(&c[i])?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let theta = [pair_phases[0], a2 + pair_phases[1], a3 + pair_phases[2]];
        let drift_modes = if drift {
            [&c[0], &c[1], &c[2], &a[1], &a[2]]
                .iter()
                .map(|m| state.mode(m))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(PreparedState {
            protocol: Protocol::W,
            state,
            parties: parties.try_into().expect("three parties"),
            reference: QubitState::w(theta),
            calibration: theta.map(|t| -t),
            drift_modes,
        })
    }

    /// GHZ state from three pair states over `(L_i, R_i)` whose relative phases are
    /// `phases`; with `extract`, only the one-excitation-per-party component is kept.
    pub fn ghz_from_pairs(pairs: [&StateVector; 3], phases: [f64; 3], extract: bool) -> Result<Self> {
        let mut raw = prepare_ghz_raw(pairs)?;
        let layout = Self::ghz_layout(raw.clone(), phases, true)?;
        if extract {
            let rails: Vec<_> = layout.parties.iter().map(|p| (p.rail0.clone(), p.rail1.clone())).collect();
            raw = extract_coincidence_component(&raw, &rails)?.1;
            return Self::ghz_layout(raw, phases, true);
        }
        Ok(layout)
    }

    fn ideal_pairs(prefixes: (&str, &str), phases: [f64; 3], n_max: u8) -> Result<Vec<StateVector>> {
        (0..3)
            .map(|i| ideal_pair(&format!("{}{}", prefixes.0, i + 1), &format!("{}{}", prefixes.1, i + 1), phases[i], n_max))
            .collect()
    }

    /// The post-selected GHZ component of ideal pairs.
    pub fn ghz_ideal(phases: [f64; 3], n_max: u8) -> Result<Self> {
        let p = Self::ideal_pairs(("L", "R"), phases, n_max)?;
        Self::ghz_from_pairs([&p[0], &p[1], &p[2]], phases, true)
    }

    /// Product of three ideal pairs, before any post-selection.
    pub fn ghz_raw_ideal(phases: [f64; 3], n_max: u8) -> Result<Self> {
        let p = Self::ideal_pairs(("L", "R"), phases, n_max)?;
        Self::ghz_from_pairs([&p[0], &p[1], &p[2]], phases, false)
    }

    /// W state from pairs over `(B_i, C_i)` and a Fock state over `A_1..A_3`.
    pub fn w_from_parts(
        pairs: [&StateVector; 3],
        w_fock: &StateVector,
        pair_phases: [f64; 3],
        a2: f64,
        a3: f64,
        extract: bool,
    ) -> Result<Self> {
        let mut raw = prepare_w_raw(pairs, w_fock)?;
        if extract {
            let a = labels("A");
            let b = labels("B");
            let rails = (0..3)
                .map(|i| Ok((raw.mode(&a[i])?, raw.mode(&b[i])?)))
                .collect::<Result<Vec<_>>>()?;
            raw = extract_coincidence_component(&raw, &rails)?.1;
        }
        Self::w_layout(raw, pair_phases, a2, a3, true)
    }

    pub fn w_ideal(pair_phases: [f64; 3], a2: f64, a3: f64, n_max: u8) -> Result<Self> {
        let p = Self::ideal_pairs(("B", "C"), pair_phases, n_max)?;
        let a = ideal_w_fock(["A1", "A2", "A3"], a2, a3, n_max)?;
        Self::w_from_parts([&p[0], &p[1], &p[2]], &a, pair_phases, a2, a3, true)
    }

    pub fn w_raw_ideal(pair_phases: [f64; 3], a2: f64, a3: f64, n_max: u8) -> Result<Self> {
        let p = Self::ideal_pairs(("B", "C"), pair_phases, n_max)?;
        let a = ideal_w_fock(["A1", "A2", "A3"], a2, a3, n_max)?;
        Self::w_from_parts([&p[0], &p[1], &p[2]], &a, pair_phases, a2, a3, false)
    }

    /// Builds the state from heralded preparations. Every herald must succeed.
    pub fn heralded(
        protocol: Protocol,
        params: &ExcitationParams,
        phases: &ChannelPhases,
        detector: &DetectorModel,
        n_max: u8,
        extract: bool,
    ) -> Result<(Self, Vec<HeraldResult>)> {
        let names = match protocol {
            Protocol::Ghz => ("L", "R"),
            Protocol::W => ("B", "C"),
        };
        let mut heralds = Vec::new();
        for i in 0..3 {
            let l = format!("{}{}", names.0, i + 1);
            let r = format!("{}{}", names.1, i + 1);
            heralds.push(prepare_pair((&l, &r), phases.pair[i], params, detector, n_max)?);
        }
        if protocol == Protocol::W {
            heralds.push(prepare_w_fock(["A1", "A2", "A3"], params, phases.a2, phases.a3, detector, n_max)?);
        }
        let mut states = Vec::new();
        for h in &heralds {
            match (&h.state, h.success) {
                (Some(s), true) => states.push(s.clone()),
                _ => return Err(numerical("a herald has zero success probability")),
            }
        }
        let eff: [f64; 3] = std::array::from_fn(|i| heralds[i].phases[0]);
        let prepared = match protocol {
            Protocol::Ghz => Self::ghz_from_pairs([&states[0], &states[1], &states[2]], eff, extract)?,
            Protocol::W => {
                Self::w_from_parts([&states[0], &states[1], &states[2]], &states[3], eff, phases.a2, phases.a3, extract)?
            }
        };
        Ok((prepared, heralds))
    }

    /// Product of single-qubit states `q[p] = [amp of |0⟩, amp of |1⟩]` in the
    /// protocol's dual-rail layout. For W, `|1⟩` also carries the `C` flag excitation.
    pub fn product(protocol: Protocol, qubits: [[Amplitude; 2]; 3], n_max: u8) -> Result<Self> {
        let reference = QubitState::product(qubits);
        let (reg_labels, occs): (&[&str], Vec<Vec<u8>>) = match protocol {
            Protocol::Ghz => (
                &["L1", "R1", "L2", "R2", "L3", "R3"],
                (0..8usize)
                    .map(|code| {
                        let mut o = vec![0u8; 6];
                        for p in 0..3 {
                            if code >> (2 - p) & 1 == 0 {
                                o[2 * p] = 1;
                            } else {
                                o[2 * ((p + 1) % 3) + 1] = 1;
                            }
                        }
                        o
                    })
                    .collect(),
            ),
            Protocol::W => (
                &["B1", "C1", "B2", "C2", "B3", "C3", "A1", "A2", "A3"],
                (0..8usize)
                    .map(|code| {
                        let mut o = vec![0u8; 9];
                        for p in 0..3 {
                            if code >> (2 - p) & 1 == 0 {
                                o[2 * p] = 1;
                            } else {
                                o[2 * p + 1] = 1;
                                o[6 + p] = 1;
                            }
                        }
                        o
                    })
                    .collect(),
            ),
        };
        let reg = Arc::new(ModeRegistry::with_labels(n_max, reg_labels)?);
        let state = StateVector::from_terms(reg, occs.iter().zip(reference.0.iter()).map(|(o, a)| (&o[..], *a)))?
            .normalize()?;
        let mut prepared = match protocol {
            Protocol::Ghz => Self::ghz_layout(state, [0.0; 3], false)?,
            Protocol::W => Self::w_layout(state, [0.0; 3], 0.0, 0.0, false)?,
        };
        prepared.reference = reference;
        prepared.calibration = [0.0; 3];
        Ok(prepared)
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn parties(&self) -> &[PartyModes; 3] {
        &self.parties
    }

    /// Ideal qubit state, channel phases included.
    pub fn reference(&self) -> &QubitState {
        &self.reference
    }

    /// Station compensation phases (on each party's `|1⟩` rail) that null the channel phases.
    pub fn calibration(&self) -> [f64; 3] {
        self.calibration
    }

    /// Modes whose phase carries a channel phase; jittered in phase-drift runs.
    pub fn drift_modes(&self) -> &[ModeId] {
        &self.drift_modes
    }

    pub fn check_settings(&self, settings: [MeasurementSetting; 3]) -> Result<()> {
        if self.protocol == Protocol::Ghz && settings.contains(&MeasurementSetting::Z) {
            return Err(usage("σz measurements need a flag ensemble (W protocol only)"));
        }
        Ok(())
    }
}
