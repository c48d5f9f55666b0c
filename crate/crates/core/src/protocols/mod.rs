//! Preparation procedures for ensemble entanglement.
//!
//! Each atomic ensemble is one bosonic mode (its collective excitation), and each
//! forward-scattered Stokes field is one photonic mode. A weak Raman pulse creates
//! correlated atom/photon pairs; detecting Stokes photons behind linear optics
//! heralds entangled atomic states.

mod timing;

pub use timing::{expected_time, simulate_attempts, AttemptConfig, AttemptStats, TimingParams, TimingProtocol};

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::sync::Arc;

use crate::error::{config, numerical, usage, Result};
use crate::fock::{superpose, Amplitude, ModeId, ModeRegistry, StateVector, ZERO_NORM_THRESHOLD};
use crate::optics::{
    apply_loss, beam_splitter, detect_threshold, linear_transform, phase_shift, BeamSplitterSpec, ClickPattern,
    DetectorModel,
};

/// Weak Raman pulse: per-pulse Stokes emission probability and pump phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExcitationParams {
    p_c: f64,
    phase: f64,
}

impl ExcitationParams {
    pub const MAX_P_C: f64 = 0.2;
    pub const WEAK_P_C: f64 = 0.1;

    pub fn new(p_c: f64, phase: f64) -> Result<Self> {
        if !(0.0..=Self::MAX_P_C).contains(&p_c) {
            return Err(config(format!("p_c = {p_c} outside [0, {}]", Self::MAX_P_C)));
        }
        if !phase.is_finite() {
            return Err(config("excitation phase must be finite"));
        }
        Ok(ExcitationParams { p_c, phase })
    }

    pub fn p_c(&self) -> f64 {
        self.p_c
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn with_phase(self, phase: f64) -> Self {
        ExcitationParams { phase, ..self }
    }

    /// Set when `p_c` is large enough that multi-excitation errors dominate.
    pub fn warning(&self) -> Option<String> {
        (self.p_c > Self::WEAK_P_C).then(|| {
            format!(
                "p_c = {} exceeds {}: two-excitation contamination is no longer small",
                self.p_c,
                Self::WEAK_P_C
            )
        })
    }
}

/// Unknown-but-fixed optical channel phases.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelPhases {
    /// Phases of the three pair channels.
    pub pair: [f64; 3],
    /// Phases of ensembles A₂, A₃ relative to A₁ on the shared Stokes line.
    pub a2: f64,
    pub a3: f64,
}

impl ChannelPhases {
    /// Total GHZ phase, always recomputed from the pair phases.
    pub fn phi_r(&self) -> f64 {
        self.pair.iter().sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RetrievalParams {
    efficiency: f64,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        RetrievalParams { efficiency: 1.0 }
    }
}

impl RetrievalParams {
    pub fn new(efficiency: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&efficiency) {
            return Err(config(format!("retrieval efficiency {efficiency} is not a probability")));
        }
        Ok(RetrievalParams { efficiency })
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }
}

/// Outcome of a heralded preparation.
#[derive(Clone, Debug)]
pub struct HeraldResult {
    pub success: bool,
    /// Conditional state (normalized) for the reported click pattern; `None` on failure.
    pub state: Option<StateVector>,
    /// Total probability of the accepted herald patterns.
    pub probability: f64,
    pub pattern: ClickPattern,
    pub attempts: u64,
    /// Phases of the ideal target the conditional state approximates
    /// (`[φ]` for a pair, `[φ_A2, φ_A3]` for the W Fock state).
    pub phases: Vec<f64>,
    /// Atomic modes the conditional state lives on, in target order.
    pub ensembles: Vec<ModeId>,
}

pub fn stokes_label(ensemble: &str) -> String {
    format!("{ensemble}-stokes")
}

pub fn photon_label(ensemble: &str) -> String {
    format!("{ensemble}-photon")
}

/// `1 + x·S†b† + (x²/2)·(S†b†)²` with `x = √p_c·e^{iφ}`. No vacuum check on `photon`.
fn excite(state: &StateVector, ensemble: &ModeId, photon: &ModeId, params: &ExcitationParams) -> Result<StateVector> {
    let x = Amplitude::from_polar(params.p_c.sqrt(), params.phase);
    let once = state.apply_create(ensemble)?.apply_create(photon)?;
    let twice = once.apply_create(ensemble)?.apply_create(photon)?;
    superpose(&[
        (Amplitude::new(1.0, 0.0), state),
        (x, &once),
        (x * x * 0.5, &twice),
    ])
}

/// Weak Raman excitation of `ensemble` with forward Stokes emission into `photon`,
/// kept to second order in `√p_c` and renormalized.
pub fn raman_excite(
    state: &StateVector,
    ensemble: &ModeId,
    photon: &ModeId,
    params: &ExcitationParams,
) -> Result<StateVector> {
    if !state.is_vacuum_in(photon)? {
        return Err(usage(format!("Stokes mode {photon} is not in vacuum")));
    }
    excite(state, ensemble, photon, params)?.normalize()
}

/// The ideal pair state `(S_first† + e^{iφ} S_second†)|vac⟩/√2` on a fresh registry.
pub fn ideal_pair(first: &str, second: &str, phase: f64, n_max: u8) -> Result<StateVector> {
    let reg = Arc::new(ModeRegistry::with_labels(n_max, &[first, second])?);
    StateVector::from_terms(
        reg,
        [
            (&[1u8, 0][..], Amplitude::new(FRAC_1_SQRT_2, 0.0)),
            (&[0u8, 1][..], Amplitude::from_polar(FRAC_1_SQRT_2, phase)),
        ],
    )
}

/// The ideal W Fock state `(S_1† + e^{iφ₂} S_2† + e^{iφ₃} S_3†)|vac⟩/√3`.
pub fn ideal_w_fock(labels: [&str; 3], phase_a2: f64, phase_a3: f64, n_max: u8) -> Result<StateVector> {
    let reg = Arc::new(ModeRegistry::with_labels(n_max, &labels)?);
    let amp = 1.0 / 3f64.sqrt();
    StateVector::from_terms(
        reg,
        [
            (&[1u8, 0, 0][..], Amplitude::new(amp, 0.0)),
            (&[0u8, 1, 0][..], Amplitude::from_polar(amp, phase_a2)),
            (&[0u8, 0, 1][..], Amplitude::from_polar(amp, phase_a3)),
        ],
    )
}

/// Pair-preparation optics up to (not including) detection: both ensembles excited,
/// the second Stokes field delayed by the channel phase, then a 50/50 splitter.
/// Returns the state and the two detector modes `(D₁, D₂)`.
pub fn pair_before_detection(
    labels: (&str, &str),
    channel_phase: f64,
    params: &ExcitationParams,
    n_max: u8,
) -> Result<(StateVector, ModeId, ModeId)> {
    let mut reg = ModeRegistry::new(n_max)?;
    let first = reg.register(labels.0)?;
    let second = reg.register(labels.1)?;
    let b1 = reg.register_with_cutoff(&stokes_label(labels.0), 2 * n_max)?;
    let b2 = reg.register_with_cutoff(&stokes_label(labels.1), 2 * n_max)?;
    let mut s = StateVector::vacuum(Arc::new(reg))?;
    s = raman_excite(&s, &first, &b1, params)?;
    s = raman_excite(&s, &second, &b2, params)?;
    s = phase_shift(&s, &b2, channel_phase)?;
    s = beam_splitter(&s, &BeamSplitterSpec::balanced(b1.clone(), b2.clone())?)?;
    Ok((s, b1, b2))
}

/// Heralded entanglement of two ensembles by single-click detection behind a beam splitter.
///
/// Both single-click patterns are accepted. The reported conditional state is the
/// `D₁`-only branch; the `D₂`-only branch differs by a known π phase on the second
/// ensemble, which [`sample_pair`] corrects. With the symmetric splitter the target's
/// phase is the channel phase plus π/2.
pub fn prepare_pair(
    labels: (&str, &str),
    channel_phase: f64,
    params: &ExcitationParams,
    detector: &DetectorModel,
    n_max: u8,
) -> Result<HeraldResult> {
    let (s, d1, d2) = pair_before_detection(labels, channel_phase, params, n_max)?;
    let ensembles = vec![s.mode(labels.0)?, s.mode(labels.1)?];
    let phases = vec![channel_phase + FRAC_PI_2];
    let [q1, k1] = detect_threshold(&s, &d1, detector)?;
    let p_10 = match &k1.state {
        Some(st) => k1.probability * detect_threshold(st, &d2, detector)?[0].probability,
        None => 0.0,
    };
    let (p_01, _) = match &q1.state {
        Some(st) => {
            let [_, k2] = detect_threshold(st, &d2, detector)?;
            (q1.probability * k2.probability, k2.state)
        }
        None => (0.0, None),
    };
    let probability = p_10 + p_01;
    if probability < ZERO_NORM_THRESHOLD {
        return Ok(HeraldResult {
            success: false,
            state: None,
            probability: 0.0,
            pattern: ClickPattern(vec![false, false]),
            attempts: 1,
            phases,
            ensembles,
        });
    }
    let (pattern, state) = if p_10 >= ZERO_NORM_THRESHOLD {
        let st = k1.state.as_ref().expect("click branch present");
        (vec![true, false], detect_threshold(st, &d2, detector)?[0].state.clone())
    } else {
        let st = q1.state.as_ref().expect("quiet branch present");
        let [_, k2] = detect_threshold(st, &d2, detector)?;
        let corrected = k2.state.map(|s| phase_shift(&s, &ensembles[1], PI)).transpose()?;
        (vec![false, true], corrected)
    };
    Ok(HeraldResult {
        success: true,
        state,
        probability,
        pattern: ClickPattern(pattern),
        attempts: 1,
        phases,
        ensembles,
    })
}

/// Repeat-until-success pair preparation with sampled click patterns.
pub fn sample_pair<R: rand::Rng>(
    labels: (&str, &str),
    channel_phase: f64,
    params: &ExcitationParams,
    detector: &DetectorModel,
    n_max: u8,
    attempt_cap: u64,
    rng: &mut R,
) -> Result<HeraldResult> {
    let exact = prepare_pair(labels, channel_phase, params, detector, n_max)?;
    let (s, d1, d2) = pair_before_detection(labels, channel_phase, params, n_max)?;
    let tree = crate::sampling::Trajectory::build(&s, &[(d1, *detector), (d2, *detector)], &mut |p, st| {
        Ok((p.clone(), st.clone()))
    })?;
    for attempt in 1..=attempt_cap {
        let (pattern, st) = tree.sample(rng);
        if pattern.clicks() != 1 {
            continue;
        }
        let state = if pattern.0[1] {
            phase_shift(st, &exact.ensembles[1], PI)?
        } else {
            st.clone()
        };
        return Ok(HeraldResult {
            success: true,
            state: Some(state),
            pattern: pattern.clone(),
            attempts: attempt,
            ..exact
        });
    }
    Err(crate::Error::AttemptCap { cap: attempt_cap })
}

/// Heralded W-type Fock state: three ensembles in a line share one Stokes mode, so a
/// single click cannot tell which ensemble emitted.
pub fn prepare_w_fock(
    labels: [&str; 3],
    params: &ExcitationParams,
    phase_a2: f64,
    phase_a3: f64,
    detector: &DetectorModel,
    n_max: u8,
) -> Result<HeraldResult> {
    let (s, shared) = w_fock_before_detection(labels, params, phase_a2, phase_a3, n_max)?;
    let ensembles = labels.iter().map(|l| s.mode(l)).collect::<Result<Vec<_>>>()?;
    let [_, click] = detect_threshold(&s, &shared, detector)?;
    let success = click.probability >= ZERO_NORM_THRESHOLD;
    Ok(HeraldResult {
        success,
        state: if success { click.state } else { None },
        probability: if success { click.probability } else { 0.0 },
        pattern: ClickPattern(vec![success]),
        attempts: 1,
        phases: vec![phase_a2, phase_a3],
        ensembles,
    })
}

/// W Fock preparation up to detection of the shared Stokes mode.
pub fn w_fock_before_detection(
    labels: [&str; 3],
    params: &ExcitationParams,
    phase_a2: f64,
    phase_a3: f64,
    n_max: u8,
) -> Result<(StateVector, ModeId)> {
    let mut reg = ModeRegistry::new(n_max)?;
    let modes = labels.iter().map(|l| reg.register(l)).collect::<Result<Vec<_>>>()?;
    let shared = reg.register_with_cutoff(&format!("{}-{}-stokes", labels[0], labels[2]), 3 * n_max)?;
    let mut s = StateVector::vacuum(Arc::new(reg))?;
    for (mode, extra) in modes.iter().zip([0.0, phase_a2, phase_a3]) {
        let p = params.with_phase(params.phase + extra);
        s = excite(&s, mode, &shared, &p)?.normalize()?;
    }
    Ok((s, shared))
}

/// Tensor product of the three pair states.
pub fn prepare_ghz_raw(pairs: [&StateVector; 3]) -> Result<StateVector> {
    pairs[0].tensor(pairs[1])?.tensor(pairs[2])
}

/// Tensor product of three pair states over `(B_i, C_i)` and the W Fock state over `A`.
pub fn prepare_w_raw(pairs: [&StateVector; 3], w_fock: &StateVector) -> Result<StateVector> {
    prepare_ghz_raw(pairs)?.tensor(w_fock)
}

/// Projects onto the subspace with exactly one excitation in each listed pair of modes.
/// Returns the subspace weight and the normalized component.
pub fn extract_coincidence_component(state: &StateVector, pairs: &[(ModeId, ModeId)]) -> Result<(f64, StateVector)> {
    let reg = state.registry();
    let mut idx = Vec::with_capacity(pairs.len());
    let mut seen: Vec<usize> = Vec::new();
    for (a, b) in pairs {
        let (i, j) = (reg.resolve(a)?, reg.resolve(b)?);
        if i == j || seen.contains(&i) || seen.contains(&j) {
            return Err(usage("coincidence pairs must be disjoint"));
        }
        seen.extend([i, j]);
        idx.push((i, j));
    }
    let part = state.filter(|o| idx.iter().all(|&(i, j)| o[i] + o[j] == 1));
    let weight = part.norm_sqr() / state.norm_sqr();
    if weight < ZERO_NORM_THRESHOLD {
        return Err(numerical("no weight in the coincidence subspace"));
    }
    Ok((weight, part.normalize()?))
}

/// Moves the excitation of `ensemble` into the vacuum mode `photon`; efficiency below
/// one sends the light through a loss channel into a fresh ancilla.
pub fn retrieve(state: &StateVector, ensemble: &ModeId, photon: &ModeId, params: &RetrievalParams) -> Result<StateVector> {
    if !state.is_vacuum_in(photon)? {
        return Err(usage(format!("retrieval target {photon} is not in vacuum")));
    }
    let one = Amplitude::new(1.0, 0.0);
    let zero = Amplitude::default();
    let swapped = linear_transform(state, &[ensemble.clone(), photon.clone()], &vec![vec![zero, one], vec![one, zero]])?;
    if params.efficiency >= 1.0 {
        return Ok(swapped);
    }
    let cutoff = swapped.registry().cutoff(swapped.registry().resolve(photon)?);
    let (ext, anc) = swapped.with_fresh_mode(&format!("{}~rloss", photon.label()), cutoff)?;
    apply_loss(&ext, photon, 1.0 - params.efficiency, &anc)
}

/// Registers `<ensemble>-photon` (same truncation as the ensemble) and retrieves into it.
pub fn retrieve_to_fresh(state: &StateVector, ensemble: &ModeId, params: &RetrievalParams) -> Result<(StateVector, ModeId)> {
    let cutoff = state.registry().cutoff(state.registry().resolve(ensemble)?);
    let label = photon_label(ensemble.label());
    let ext = state.extend(&[(&label, cutoff)])?;
    let photon = ext.mode(&label)?;
    Ok((retrieve(&ext, ensemble, &photon, params)?, photon))
}

/// Fraction of the state's weight with two or more excitations summed over `modes`.
pub fn multi_excitation_weight(state: &StateVector, modes: &[ModeId]) -> Result<f64> {
    let idx = modes
        .iter()
        .map(|m| state.registry().resolve(m))
        .collect::<Result<Vec<_>>>()?;
    let multi = state.filter(|o| idx.iter().map(|&i| o[i] as u32).sum::<u32>() >= 2);
    Ok(multi.norm_sqr() / state.norm_sqr())
}
