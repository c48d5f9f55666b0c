use rand::Rng;

use super::station::{erasure_corrections, erasure_optics, station_optics};
use super::{correction_table, FlagTreatment, MeasurementSetting, OutcomeRecord, PartyStation, PreparedState, Protocol};
use crate::error::{config, Result};
use crate::fock::{ModeId, StateVector};
use crate::optics::{pattern_probabilities, phase_shift, ClickPattern, DetectorModel};
use crate::protocols::{retrieve_to_fresh, RetrievalParams};
use crate::sampling::{walk, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compensation {
    /// Null the prepared state's channel phases.
    #[default]
    Calibrated,
    Manual([f64; 3]),
}

/// Detection hardware and station calibration shared by all three parties.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StationSetup {
    pub detector: DetectorModel,
    pub retrieval: RetrievalParams,
    pub compensation: Compensation,
    /// Full width of the uniform per-shot channel-phase jitter (Monte Carlo only).
    pub drift_width: f64,
}

impl Default for StationSetup {
    fn default() -> Self {
        StationSetup {
            detector: DetectorModel::ideal(),
            retrieval: RetrievalParams::default(),
            compensation: Compensation::Calibrated,
            drift_width: 0.0,
        }
    }
}

impl StationSetup {
    pub fn compensation_phases(&self, prepared: &PreparedState) -> [f64; 3] {
        match self.compensation {
            Compensation::Calibrated => prepared.calibration(),
            Compensation::Manual(c) => c,
        }
    }
}

/// State after retrieval, with the photonic modes each station reads.
struct Retrieved {
    state: StateVector,
    rails: [(ModeId, ModeId); 3],
    /// `(party, photon)` for σz parties.
    z_photons: Vec<(usize, ModeId)>,
    /// `(party, photon)` for flags sent to the erasure interferometer.
    erase_flags: Vec<(usize, ModeId)>,
}

pub(crate) enum OutcomeTree {
    Direct(Trajectory<OutcomeRecord>),
    Erased(Trajectory<Trajectory<OutcomeRecord>>),
}

impl OutcomeTree {
    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &OutcomeRecord {
        match self {
            OutcomeTree::Direct(t) => t.sample(rng),
            OutcomeTree::Erased(t) => t.sample(rng).sample(rng),
        }
    }
}

/// The full optical train for one setting triple.
pub(crate) struct Pipeline<'a> {
    prepared: &'a PreparedState,
    settings: [MeasurementSetting; 3],
    flag: FlagTreatment,
    setup: &'a StationSetup,
    compensation: [f64; 3],
    table: Vec<Vec<f64>>,
}

impl<'a> Pipeline<'a> {
    pub(crate) fn new(
        prepared: &'a PreparedState,
        settings: [MeasurementSetting; 3],
        flag: FlagTreatment,
        setup: &'a StationSetup,
    ) -> Result<Self> {
        prepared.check_settings(settings)?;
        if !(0.0..=std::f64::consts::TAU).contains(&setup.drift_width) {
            return Err(config(format!("phase drift width {} outside [0, 2π]", setup.drift_width)));
        }
        let erased = (0..3)
            .filter(|&p| settings[p] != MeasurementSetting::Z && prepared.parties()[p].flag.is_some())
            .count();
        let table = if flag == FlagTreatment::Erase && erased >= 2 {
            correction_table(erased)?
        } else {
            Vec::new()
        };
        Ok(Pipeline {
            prepared,
            settings,
            flag,
            setup,
            compensation: setup.compensation_phases(prepared),
            table,
        })
    }

    fn is_xy(&self, p: usize) -> bool {
        self.settings[p] != MeasurementSetting::Z
    }

    fn retrieve(&self, state: &StateVector) -> Result<Retrieved> {
        let parties = self.prepared.parties();
        let mut s = state.clone();
        if self.flag == FlagTreatment::Abstract && self.prepared.protocol() == Protocol::W {
            let flags: Vec<ModeId> = (0..3)
                .filter(|&p| self.is_xy(p))
                .filter_map(|p| parties[p].flag.clone())
                .collect();
            if !flags.is_empty() {
                s = s.reset_modes(&flags)?.normalize()?;
            }
        }
        let ret = &self.setup.retrieval;
        let mut rails = Vec::with_capacity(3);
        for party in parties {
            let (s0, r0) = retrieve_to_fresh(&s, &party.rail0, ret)?;
            let (s1, r1) = retrieve_to_fresh(&s0, &party.rail1, ret)?;
            s = s1;
            rails.push((r0, r1));
        }
        let mut z_photons = Vec::new();
        let mut erase_flags = Vec::new();
        for (p, party) in parties.iter().enumerate() {
            let Some(flag) = &party.flag else { continue };
            if !self.is_xy(p) {
                let (next, ph) = retrieve_to_fresh(&s, flag, ret)?;
                s = next;
                z_photons.push((p, ph));
            } else if self.flag == FlagTreatment::Erase {
                let (next, ph) = retrieve_to_fresh(&s, flag, ret)?;
                s = next;
                erase_flags.push((p, ph));
            }
        }
        Ok(Retrieved {
            state: s,
            rails: rails.try_into().expect("three parties"),
            z_photons,
            erase_flags,
        })
    }

    fn erase_modes(r: &Retrieved) -> Vec<ModeId> {
        r.erase_flags.iter().map(|(_, m)| m.clone()).collect()
    }

    fn erase_detectors(&self, r: &Retrieved) -> Vec<(ModeId, DetectorModel)> {
        r.erase_flags.iter().map(|(_, m)| (m.clone(), self.setup.detector)).collect()
    }

    fn party_corrections(&self, r: &Retrieved, pattern: &ClickPattern) -> [f64; 3] {
        let mut out = [0.0; 3];
        if self.table.is_empty() {
            return out;
        }
        for ((p, _), c) in r.erase_flags.iter().zip(erasure_corrections(pattern, &self.table)) {
            out[*p] = c;
        }
        out
    }

    /// Station optics and the ordered detector list `[D_A¹, D_B¹, D_A², D_B², D_A³, D_B³, D_C…]`.
    fn stations(
        &self,
        state: &StateVector,
        r: &Retrieved,
        corrections: [f64; 3],
    ) -> Result<(StateVector, Vec<(ModeId, DetectorModel)>)> {
        let mut s = state.clone();
        let mut dets = Vec::with_capacity(6 + r.z_photons.len());
        for (p, (r0, r1)) in r.rails.iter().enumerate() {
            let station = PartyStation {
                party: p + 1,
                rail0: r0.clone(),
                rail1: r1.clone(),
                flag: None,
                compensation: self.compensation[p] + corrections[p],
                detector: self.setup.detector,
            };
            // σz parties still pass their rails through the σx optics for the coincidence check.
            let setting = if self.is_xy(p) { self.settings[p] } else { MeasurementSetting::X };
            s = station_optics(&s, &station, setting)?;
            dets.push((r0.clone(), self.setup.detector));
            dets.push((r1.clone(), self.setup.detector));
        }
        dets.extend(r.z_photons.iter().map(|(_, m)| (m.clone(), self.setup.detector)));
        Ok((s, dets))
    }

    fn record(&self, r: &Retrieved, pattern: &ClickPattern, erasure: Option<&ClickPattern>) -> OutcomeRecord {
        let c = &pattern.0;
        let mut values = [0i8; 3];
        for (p, v) in values.iter_mut().enumerate() {
            match super::station::rail_value(c[2 * p], c[2 * p + 1]) {
                Some(x) => *v = x,
                None => {
                    return OutcomeRecord {
                        values: None,
                        erasure: erasure.cloned(),
                    }
                }
            }
        }
        for (i, (p, _)) in r.z_photons.iter().enumerate() {
            values[*p] = if c[6 + i] { 1 } else { -1 };
        }
        OutcomeRecord {
            values: Some(values),
            erasure: erasure.cloned(),
        }
    }

    fn push_exact(
        &self,
        state: &StateVector,
        r: &Retrieved,
        corrections: [f64; 3],
        weight: f64,
        erasure: Option<&ClickPattern>,
        out: &mut Vec<(OutcomeRecord, f64)>,
    ) -> Result<()> {
        let (s, dets) = self.stations(state, r, corrections)?;
        for (i, p) in pattern_probabilities(&s, &dets)?.into_iter().enumerate() {
            if p > 0.0 {
                let rec = self.record(r, &ClickPattern::from_index(i, dets.len()), erasure);
                out.push((rec, weight * p));
            }
        }
        Ok(())
    }

    /// Exact distribution over outcome records.
    pub(crate) fn exact(&self) -> Result<Vec<(OutcomeRecord, f64)>> {
        let r = self.retrieve(self.prepared.state())?;
        let mut out = Vec::new();
        if r.erase_flags.is_empty() {
            self.push_exact(&r.state, &r, [0.0; 3], 1.0, None, &mut out)?;
        } else {
            let outcomes = super::erasure_station(&r.state, &Self::erase_modes(&r), &self.setup.detector)?;
            for o in outcomes {
                let Some(st) = &o.state else { continue };
                let corr = self.party_corrections(&r, &o.pattern);
                self.push_exact(st, &r, corr, o.probability, Some(&o.pattern), &mut out)?;
            }
        }
        Ok(out)
    }

    /// Precomputed trajectory tree for drift-free sampling.
    pub(crate) fn tree(&self) -> Result<OutcomeTree> {
        let r = self.retrieve(self.prepared.state())?;
        if r.erase_flags.is_empty() {
            let (s, dets) = self.stations(&r.state, &r, [0.0; 3])?;
            return Ok(OutcomeTree::Direct(Trajectory::build(&s, &dets, &mut |p, _| {
                Ok(self.record(&r, p, None))
            })?));
        }
        let mixed = erasure_optics(&r.state, &Self::erase_modes(&r))?;
        let tree = Trajectory::build(&mixed, &self.erase_detectors(&r), &mut |ep, st| {
            let (s, dets) = self.stations(st, &r, self.party_corrections(&r, ep))?;
            Trajectory::build(&s, &dets, &mut |p, _| Ok(self.record(&r, p, Some(ep))))
        })?;
        Ok(OutcomeTree::Erased(tree))
    }

    pub(crate) fn has_drift(&self) -> bool {
        self.setup.drift_width > 0.0 && !self.prepared.drift_modes().is_empty()
    }

    /// One shot with freshly jittered channel phases, collapsing detector by detector.
    pub(crate) fn sample_drifting<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<OutcomeRecord> {
        let mut s = self.prepared.state().clone();
        for m in self.prepared.drift_modes() {
            let delta = (rng.gen::<f64>() - 0.5) * self.setup.drift_width;
            s = phase_shift(&s, m, delta)?;
        }
        let r = self.retrieve(&s)?;
        let (state, corr, erasure) = if r.erase_flags.is_empty() {
            (r.state.clone(), [0.0; 3], None)
        } else {
            let mixed = erasure_optics(&r.state, &Self::erase_modes(&r))?;
            let (ep, st) = walk(&mixed, &self.erase_detectors(&r), rng)?;
            let corr = self.party_corrections(&r, &ep);
            (st, corr, Some(ep))
        };
        let (fs, dets) = self.stations(&state, &r, corr)?;
        let (p, _) = walk(&fs, &dets, rng)?;
        Ok(self.record(&r, &p, erasure.as_ref()))
    }
}
