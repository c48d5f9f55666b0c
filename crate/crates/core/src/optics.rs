//! Linear optics, loss channels and threshold photodetection on [`StateVector`]s.
//!
//! Passive elements act on creation operators, `a_j† → Σ_k U[k][j] a_k†`, and are
//! expanded term by term in the occupation basis. The two-mode beam splitter uses
//! the symmetric convention
//!
//! ```text
//! a₁† → cosθ·a₁† + i·sinθ·a₂†
//! a₂† → i·sinθ·a₁† + cosθ·a₂†
//! ```
//!
//! and every sign convention elsewhere in the crate is defined relative to it.
//!
//! Detector loss is a beam splitter into a fresh ancilla mode placed in front of
//! an ideal threshold detector; dark counts use a one-excitation flag ancilla.
//! Both keep every measurement trajectory a pure state.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{FRAC_PI_4, FRAC_PI_2, PI};
use std::fmt;

use smallvec::SmallVec;

use crate::error::{config, usage, Result};
use crate::fock::{Amplitude, ModeId, Occupation, StateVector, ZERO_NORM_THRESHOLD};

/// Square matrix acting on creation operators, indexed `[output][input]`.
pub type ModeMatrix = Vec<Vec<Amplitude>>;

type SubOcc = SmallVec<[u8; 8]>;

/// Applies the passive linear transformation `u` to `modes`.
pub fn linear_transform(state: &StateVector, modes: &[ModeId], u: &ModeMatrix) -> Result<StateVector> {
    let reg = state.registry();
    let idx = modes
        .iter()
        .map(|m| reg.resolve(m))
        .collect::<Result<Vec<_>>>()?;
    for (i, a) in idx.iter().enumerate() {
        if idx[..i].contains(a) {
            return Err(usage(format!("mode {} listed twice", modes[i])));
        }
    }
    let m = idx.len();
    if u.len() != m || u.iter().any(|row| row.len() != m) {
        return Err(usage(format!("expected a {m}x{m} mode matrix")));
    }

    let mut cache: HashMap<SubOcc, Vec<(SubOcc, Amplitude)>> = HashMap::new();
    let mut out: BTreeMap<Occupation, Amplitude> = BTreeMap::new();
    let mut overflow: BTreeMap<Occupation, Amplitude> = BTreeMap::new();
    for (occ, amp) in state.map_terms() {
        let input: SubOcc = idx.iter().map(|&i| occ[i]).collect();
        let expansion = cache
            .entry(input)
            .or_insert_with_key(|input| expand_creation(input, u));
        for (sub, coeff) in expansion.iter() {
            let mut next = occ.clone();
            let mut fits = true;
            for (&i, &n) in idx.iter().zip(sub.iter()) {
                next.set(i, n);
                fits &= n <= reg.cutoff(i);
            }
            let target = if fits { &mut out } else { &mut overflow };
            *target.entry(next).or_default() += amp * coeff;
        }
    }
    let leaked = overflow.values().map(|a| a.norm_sqr()).sum();
    Ok(state.with_amps(out, leaked))
}

/// Expands `Π_j (Σ_k U[k][j] a_k†)^{n_j} / √(n_j!) |0⟩` into occupation terms.
fn expand_creation(input: &[u8], u: &ModeMatrix) -> Vec<(SubOcc, Amplitude)> {
    let m = input.len();
    let mut terms: BTreeMap<SubOcc, Amplitude> = BTreeMap::new();
    terms.insert(SmallVec::from_elem(0, m), Amplitude::new(1.0, 0.0));
    for (j, &n) in input.iter().enumerate() {
        for _ in 0..n {
            let mut next: BTreeMap<SubOcc, Amplitude> = BTreeMap::new();
            for (occ, a) in &terms {
                for (k, row) in u.iter().enumerate() {
                    let coeff = row[j];
                    if coeff == Amplitude::default() {
                        continue;
                    }
                    let mut o = occ.clone();
                    o[k] += 1;
                    let factor = (o[k] as f64).sqrt();
                    *next.entry(o).or_default() += a * coeff * factor;
                }
            }
            terms = next;
        }
        let fact: f64 = (1..=n as u32).map(|x| x as f64).product();
        let inv = 1.0 / fact.sqrt();
        for a in terms.values_mut() {
            *a *= inv;
        }
    }
    terms.into_iter().filter(|(_, a)| a.norm() > 0.0).collect()
}

/// Phase plate: occupation `n` of `mode` picks up `e^{inφ}`.
pub fn phase_shift(state: &StateVector, mode: &ModeId, phi: f64) -> Result<StateVector> {
    let idx = state.registry().resolve(mode)?;
    let amps = state
        .map_terms()
        .iter()
        .map(|(o, a)| (o.clone(), a * Amplitude::from_polar(1.0, phi * o[idx] as f64)))
        .collect();
    Ok(state.with_amps(amps, 0.0))
}

/// Two-mode beam splitter.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamSplitterSpec {
    pub first: ModeId,
    pub second: ModeId,
    theta: f64,
    adjoint: bool,
}

impl BeamSplitterSpec {
    pub fn new(first: ModeId, second: ModeId, theta: f64) -> Result<Self> {
        if first.label() == second.label() {
            return Err(usage(format!("beam splitter on identical modes {first}")));
        }
        if !(0.0..=FRAC_PI_2).contains(&theta) {
            return Err(config(format!("mixing angle {theta} outside [0, π/2]")));
        }
        Ok(BeamSplitterSpec {
            first,
            second,
            theta,
            adjoint: false,
        })
    }

    /// 50/50 splitter.
    pub fn balanced(first: ModeId, second: ModeId) -> Result<Self> {
        Self::new(first, second, FRAC_PI_4)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// The inverse element (mixing angle −θ).
    pub fn inverse(&self) -> Self {
        BeamSplitterSpec {
            adjoint: !self.adjoint,
            ..self.clone()
        }
    }

    pub fn matrix(&self) -> ModeMatrix {
        let (s, c) = self.theta.sin_cos();
        let cross = Amplitude::new(0.0, if self.adjoint { -s } else { s });
        let diag = Amplitude::new(c, 0.0);
        vec![vec![diag, cross], vec![cross, diag]]
    }
}

pub fn beam_splitter(state: &StateVector, spec: &BeamSplitterSpec) -> Result<StateVector> {
    linear_transform(state, &[spec.first.clone(), spec.second.clone()], &spec.matrix())
}

/// Couples `mode` to the vacuum ancilla `loss_mode` so that each quantum survives in
/// `mode` with probability `1 − η`.
pub fn apply_loss(state: &StateVector, mode: &ModeId, eta: f64, loss_mode: &ModeId) -> Result<StateVector> {
    check_probability("loss", eta)?;
    if !state.is_vacuum_in(loss_mode)? {
        return Err(usage(format!("loss ancilla {loss_mode} is not in vacuum")));
    }
    if eta == 0.0 {
        state.registry().resolve(mode)?;
        return Ok(state.clone());
    }
    let theta = (1.0 - eta).sqrt().acos();
    let spec = BeamSplitterSpec::new(mode.clone(), loss_mode.clone(), theta)?;
    beam_splitter(state, &spec)
}

/// Balanced `m`-port whose creation-operator matrix is the discrete Fourier transform
/// `U[j][k] = e^{2πijk/m}/√m`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiportSpec {
    modes: Vec<ModeId>,
}

impl MultiportSpec {
    pub fn new(modes: Vec<ModeId>) -> Result<Self> {
        if modes.len() < 2 {
            return Err(config("multiport needs at least two modes"));
        }
        for (i, m) in modes.iter().enumerate() {
            if modes[..i].iter().any(|o| o.label() == m.label()) {
                return Err(usage(format!("mode {m} listed twice in multiport")));
            }
        }
        Ok(MultiportSpec { modes })
    }

    pub fn modes(&self) -> &[ModeId] {
        &self.modes
    }

    pub fn matrix(&self) -> ModeMatrix {
        dft_matrix(self.modes.len())
    }
}

pub fn dft_matrix(m: usize) -> ModeMatrix {
    let norm = 1.0 / (m as f64).sqrt();
    (0..m)
        .map(|j| {
            (0..m)
                .map(|k| Amplitude::from_polar(norm, 2.0 * PI * (j * k) as f64 / m as f64))
                .collect()
        })
        .collect()
}

pub fn multiport(state: &StateVector, spec: &MultiportSpec) -> Result<StateVector> {
    linear_transform(state, &spec.modes, &spec.matrix())
}

/// Threshold (click/no-click) detector with lumped loss and dark-click probability.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetectorModel {
    loss: f64,
    dark: f64,
}

impl DetectorModel {
    pub fn new(loss: f64, dark: f64) -> Result<Self> {
        check_probability("detector loss", loss)?;
        check_probability("dark-click probability", dark)?;
        Ok(DetectorModel { loss, dark })
    }

    pub fn ideal() -> Self {
        DetectorModel { loss: 0.0, dark: 0.0 }
    }

    pub fn lossy(loss: f64) -> Result<Self> {
        Self::new(loss, 0.0)
    }

    pub fn loss(&self) -> f64 {
        self.loss
    }

    pub fn dark(&self) -> f64 {
        self.dark
    }

    pub fn is_ideal(&self) -> bool {
        self.loss == 0.0 && self.dark == 0.0
    }

    /// Probability of no click given `n` incident quanta.
    pub fn no_click_given(&self, n: u8) -> f64 {
        (1.0 - self.dark) * self.loss.powi(n as i32)
    }

    /// Closed-form click probability for a photon-number distribution.
    pub fn click_probability(&self, number_dist: &[f64]) -> f64 {
        let total: f64 = number_dist.iter().sum();
        let silent: f64 = number_dist
            .iter()
            .enumerate()
            .map(|(n, p)| p * self.no_click_given(n as u8))
            .sum();
        (total - silent) / total
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(config(format!("{name} {p} is not a probability")))
    }
}

/// One boolean per detector, in query order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClickPattern(pub Vec<bool>);

impl ClickPattern {
    /// Pattern whose detector `d` clicked iff bit `d` of `index` is set.
    pub fn from_index(index: usize, len: usize) -> Self {
        ClickPattern((0..len).map(|d| index >> d & 1 == 1).collect())
    }

    pub fn index(&self) -> usize {
        self.0.iter().enumerate().map(|(d, &c)| (c as usize) << d).sum()
    }

    pub fn clicks(&self) -> usize {
        self.0.iter().filter(|&&c| c).count()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for ClickPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &c in &self.0 {
            f.write_str(if c { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// One outcome of a single threshold detection.
#[derive(Clone, Debug)]
pub struct DetectionBranch {
    pub clicked: bool,
    pub probability: f64,
    /// Normalized post-measurement state, absent for (numerically) impossible outcomes.
    pub state: Option<StateVector>,
}

/// Exact two-outcome threshold detection of `mode`, `[no click, click]`.
pub fn detect_threshold(state: &StateVector, mode: &ModeId, detector: &DetectorModel) -> Result<[DetectionBranch; 2]> {
    let mut s = state.clone();
    let cutoff = s.registry().cutoff(s.registry().resolve(mode)?);
    if detector.loss > 0.0 {
        let (ext, anc) = s.with_fresh_mode(&format!("{}~loss", mode.label()), cutoff)?;
        s = apply_loss(&ext, mode, detector.loss, &anc)?;
    }
    let mut flag = None;
    if detector.dark > 0.0 {
        let (ext, f) = s.with_fresh_mode(&format!("{}~dark", mode.label()), 1)?;
        let fi = ext.registry().resolve(&f)?;
        let (quiet, noisy) = ((1.0 - detector.dark).sqrt(), detector.dark.sqrt());
        let mut amps = BTreeMap::new();
        for (o, a) in ext.map_terms() {
            amps.insert(o.clone(), a * quiet);
            let mut lit = o.clone();
            lit.set(fi, 1);
            amps.insert(lit, a * noisy);
        }
        s = ext.with_amps(amps, 0.0);
        flag = Some(fi);
    }
    let mi = s.registry().resolve(mode)?;
    let clicked = |o: &Occupation| o[mi] > 0 || flag.is_some_and(|f| o[f] == 1);
    let total = s.norm_sqr();
    let branch = |want: bool| -> Result<DetectionBranch> {
        let part = s.filter(|o| clicked(o) == want);
        let probability = part.norm_sqr() / total;
        let state = if probability >= ZERO_NORM_THRESHOLD {
            Some(part.normalize()?)
        } else {
            None
        };
        Ok(DetectionBranch {
            clicked: want,
            probability,
            state,
        })
    };
    Ok([branch(false)?, branch(true)?])
}

fn check_distinct(detectors: &[(ModeId, DetectorModel)]) -> Result<()> {
    for (i, (m, _)) in detectors.iter().enumerate() {
        if detectors[..i].iter().any(|(o, _)| o.label() == m.label()) {
            return Err(usage(format!("detector mode {m} listed twice")));
        }
    }
    Ok(())
}

/// Joint click-pattern probabilities, indexed by [`ClickPattern::index`].
///
/// Threshold detection with loss and dark counts is diagonal in the occupation basis,
/// so each pattern probability is `Σ |ψ(n)|² Π_d P(c_d | n_d)`; no collapse is needed.
pub fn pattern_probabilities(state: &StateVector, detectors: &[(ModeId, DetectorModel)]) -> Result<Vec<f64>> {
    check_distinct(detectors)?;
    let idx = detectors
        .iter()
        .map(|(m, _)| state.registry().resolve(m))
        .collect::<Result<Vec<_>>>()?;
    let mut grouped: BTreeMap<SubOcc, f64> = BTreeMap::new();
    for (o, a) in state.map_terms() {
        let key: SubOcc = idx.iter().map(|&i| o[i]).collect();
        *grouped.entry(key).or_default() += a.norm_sqr();
    }
    let k = detectors.len();
    let mut probs = vec![0.0; 1 << k];
    let mut local = vec![0.0; 1 << k];
    for (ns, w) in &grouped {
        local.iter_mut().for_each(|p| *p = 0.0);
        local[0] = *w;
        for (d, (&n, (_, det))) in ns.iter().zip(detectors).enumerate() {
            let quiet = det.no_click_given(n);
            let bit = 1 << d;
            for pat in 0..bit {
                let p = local[pat];
                local[pat] = p * quiet;
                local[pat | bit] = p * (1.0 - quiet);
            }
        }
        for (acc, p) in probs.iter_mut().zip(&local) {
            *acc += p;
        }
    }
    let total = state.norm_sqr();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}

/// A click pattern with its probability and collapsed state.
#[derive(Clone, Debug)]
pub struct PatternOutcome {
    pub pattern: ClickPattern,
    pub probability: f64,
    pub state: Option<StateVector>,
}

/// Exact joint distribution over all `2^k` click patterns of `detectors`.
///
/// Probabilities come from the diagonal formula of [`pattern_probabilities`];
/// collapsed states come from sequential [`detect_threshold`] calls.
pub fn click_pattern_distribution(state: &StateVector, detectors: &[(ModeId, DetectorModel)]) -> Result<Vec<PatternOutcome>> {
    let probs = pattern_probabilities(state, detectors)?;
    let mut states: Vec<Option<StateVector>> = vec![None; probs.len()];
    collapse_all(Some(state.clone()), detectors, 0, 0, &mut states)?;
    Ok(states
        .into_iter()
        .enumerate()
        .map(|(i, s)| PatternOutcome {
            pattern: ClickPattern::from_index(i, detectors.len()),
            probability: probs[i],
            state: s,
        })
        .collect())
}

fn collapse_all(
    state: Option<StateVector>,
    detectors: &[(ModeId, DetectorModel)],
    depth: usize,
    index: usize,
    out: &mut [Option<StateVector>],
) -> Result<()> {
    let Some(state) = state else {
        return Ok(());
    };
    if depth == detectors.len() {
        out[index] = Some(state);
        return Ok(());
    }
    let (mode, det) = &detectors[depth];
    let [quiet, click] = detect_threshold(&state, mode, det)?;
    collapse_all(quiet.state, detectors, depth + 1, index, out)?;
    collapse_all(click.state, detectors, depth + 1, index | 1 << depth, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{inner, ModeRegistry, DEFAULT_N_MAX};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> Amplitude {
        Amplitude::new(re, im)
    }

    fn reg(labels: &[&str]) -> Arc<ModeRegistry> {
        Arc::new(ModeRegistry::with_labels(DEFAULT_N_MAX, labels).unwrap())
    }

    fn close(a: Amplitude, b: Amplitude) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn phase_shift_examples() {
        let r = reg(&["a"]);
        let a = r.mode("a").unwrap();
        let one = StateVector::basis(r.clone(), &[1]).unwrap();
        let same = phase_shift(&one, &a, 0.0).unwrap();
        assert_eq!(same.amplitude(&[1]), c(1.0, 0.0));
        assert!(close(phase_shift(&one, &a, PI).unwrap().amplitude(&[1]), c(-1.0, 0.0)));
        let two = StateVector::basis(r, &[2]).unwrap();
        assert!(close(
            phase_shift(&two, &a, FRAC_PI_2).unwrap().amplitude(&[2]),
            c(-1.0, 0.0)
        ));
    }

    #[test]
    fn beam_splitter_single_photon_convention() {
        let r = reg(&["a", "b"]);
        let spec = BeamSplitterSpec::balanced(r.mode("a").unwrap(), r.mode("b").unwrap()).unwrap();
        let out = beam_splitter(&StateVector::basis(r, &[1, 0]).unwrap(), &spec).unwrap();
        assert!(close(out.amplitude(&[1, 0]), c(FRAC_1_SQRT_2, 0.0)));
        assert!(close(out.amplitude(&[0, 1]), c(0.0, FRAC_1_SQRT_2)));
    }

    #[test]
    fn hong_ou_mandel_against_operator_algebra() {
        // Oracle: (c a† + i s b†)(i s a† + c b†)|0⟩ expanded by hand at θ = π/4
        // = (i/2)(a†² + b†²)|0⟩ = (i/√2)(|2,0⟩ + |0,2⟩); the a†b† terms cancel.
        let r = reg(&["a", "b"]);
        let spec = BeamSplitterSpec::balanced(r.mode("a").unwrap(), r.mode("b").unwrap()).unwrap();
        let out = beam_splitter(&StateVector::basis(r, &[1, 1]).unwrap(), &spec).unwrap();
        assert!(close(out.amplitude(&[2, 0]), c(0.0, FRAC_1_SQRT_2)));
        assert!(close(out.amplitude(&[0, 2]), c(0.0, FRAC_1_SQRT_2)));
        assert!(out.amplitude(&[1, 1]).norm() < 1e-15);
        let det = [
            (spec.first.clone(), DetectorModel::ideal()),
            (spec.second.clone(), DetectorModel::ideal()),
        ];
        let probs = pattern_probabilities(&out, &det).unwrap();
        assert!(probs[0b11].abs() < 1e-10);
    }

    #[test]
    fn beam_splitter_zero_angle_is_identity_and_same_mode_rejected() {
        let r = reg(&["a", "b"]);
        let (a, b) = (r.mode("a").unwrap(), r.mode("b").unwrap());
        let s = StateVector::basis(r, &[2, 1]).unwrap();
        let out = beam_splitter(&s, &BeamSplitterSpec::new(a.clone(), b, 0.0).unwrap()).unwrap();
        assert!(close(out.amplitude(&[2, 1]), c(1.0, 0.0)));
        assert_eq!(out.len(), 1);
        assert!(BeamSplitterSpec::new(a.clone(), a, 0.5).is_err());
    }

    #[test]
    fn loss_channel_examples() {
        let r = reg(&["a", "loss"]);
        let (a, l) = (r.mode("a").unwrap(), r.mode("loss").unwrap());
        let one = StateVector::basis(r.clone(), &[1, 0]).unwrap();
        let kept = apply_loss(&one, &a, 0.0, &l).unwrap();
        assert!(close(kept.amplitude(&[1, 0]), c(1.0, 0.0)));
        let gone = apply_loss(&one, &a, 1.0, &l).unwrap();
        assert!(gone.amplitude(&[1, 0]).norm() < 1e-15);
        assert!((gone.amplitude(&[0, 1]).norm() - 1.0).abs() < 1e-12);
        let partial = apply_loss(&one, &a, 0.3, &l).unwrap();
        let p = DetectorModel::ideal().click_probability(&partial.number_distribution(&a).unwrap());
        assert!((p - 0.7).abs() < 1e-12);
        let busy = StateVector::basis(r, &[0, 1]).unwrap();
        assert!(apply_loss(&busy, &a, 0.2, &l).is_err());
    }

    #[test]
    fn threshold_detection_examples() {
        let r = reg(&["a"]);
        let a = r.mode("a").unwrap();
        let one = StateVector::basis(r.clone(), &[1]).unwrap();
        let [_, click] = detect_threshold(&one, &a, &DetectorModel::ideal()).unwrap();
        assert!((click.probability - 1.0).abs() < 1e-15);
        let two = StateVector::basis(r.clone(), &[2]).unwrap();
        let [quiet, click] = detect_threshold(&two, &a, &DetectorModel::lossy(0.3).unwrap()).unwrap();
        assert!((click.probability - 0.91).abs() < 1e-12);
        assert!((quiet.probability + click.probability - 1.0).abs() < 1e-12);
        let vac = StateVector::vacuum(r).unwrap();
        let [_, click] = detect_threshold(&vac, &a, &DetectorModel::new(0.0, 0.01).unwrap()).unwrap();
        assert!((click.probability - 0.01).abs() < 1e-15);
        let blind = DetectorModel::lossy(1.0).unwrap();
        let [_, click] = detect_threshold(&two, &a, &blind).unwrap();
        assert!(click.probability.abs() < 1e-15);
        assert!(click.state.is_none());
    }

    #[test]
    fn detection_matches_closed_form() {
        let r = reg(&["a"]);
        let a = r.mode("a").unwrap();
        let s = StateVector::from_terms(
            r,
            [
                (&[0u8][..], c(0.5, 0.0)),
                (&[1u8][..], c(0.0, 0.5)),
                (&[2u8][..], c(FRAC_1_SQRT_2, 0.0)),
            ],
        )
        .unwrap();
        let det = DetectorModel::new(0.25, 0.05).unwrap();
        let dist = s.number_distribution(&a).unwrap();
        let expected = 0.05 + 0.95 * (1.0 - (0.25 + 0.25 * 0.25 + 0.5 * 0.0625));
        assert!((det.click_probability(&dist) - expected).abs() < 1e-14);
        let [quiet, click] = detect_threshold(&s, &a, &det).unwrap();
        assert!((click.probability - expected).abs() < 1e-12);
        assert!((quiet.probability + click.probability - 1.0).abs() < 1e-12);
        for b in [quiet, click] {
            assert!((b.state.unwrap().norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn click_patterns_vacuum_and_duplicates() {
        let r = reg(&["a", "b"]);
        let (a, b) = (r.mode("a").unwrap(), r.mode("b").unwrap());
        let vac = StateVector::vacuum(r).unwrap();
        let det = [(a.clone(), DetectorModel::ideal()), (b, DetectorModel::ideal())];
        let dist = click_pattern_distribution(&vac, &det).unwrap();
        assert_eq!(dist.len(), 4);
        assert_eq!(dist[0].pattern, ClickPattern(vec![false, false]));
        assert!((dist[0].probability - 1.0).abs() < 1e-15);
        let dup = [(a.clone(), DetectorModel::ideal()), (a, DetectorModel::ideal())];
        assert!(click_pattern_distribution(&vac, &dup).is_err());
    }

    #[test]
    fn hom_brute_force_amplitude_oracle() {
        // Independent route: sum the two indistinguishable paths to |1,1⟩ by hand.
        // Both transmitted: cosθ·cosθ; both reflected: (i sinθ)(i sinθ).
        let theta = FRAC_PI_4;
        let amp = theta.cos() * theta.cos() + (c(0.0, theta.sin()) * c(0.0, theta.sin())).re;
        assert!(amp.abs() < 1e-15);
        let r = reg(&["a", "b"]);
        let (a, b) = (r.mode("a").unwrap(), r.mode("b").unwrap());
        let out = beam_splitter(
            &StateVector::basis(r, &[1, 1]).unwrap(),
            &BeamSplitterSpec::balanced(a.clone(), b.clone()).unwrap(),
        )
        .unwrap();
        let det = [(a, DetectorModel::ideal()), (b, DetectorModel::ideal())];
        let dist = click_pattern_distribution(&out, &det).unwrap();
        assert!(dist[0b11].probability < 1e-10);
        assert!(dist[0b11].state.is_none());
        let total: f64 = dist.iter().map(|d| d.probability).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn two_port_dft_is_phased_balanced_splitter() {
        // DFT₂ = diag(1, −i) · BS(π/4) · diag(1, −i), checked entrywise.
        let r = reg(&["a", "b"]);
        let (a, b) = (r.mode("a").unwrap(), r.mode("b").unwrap());
        let bs = BeamSplitterSpec::balanced(a.clone(), b.clone()).unwrap().matrix();
        let d = [c(1.0, 0.0), c(0.0, -1.0)];
        let dft = dft_matrix(2);
        for j in 0..2 {
            for k in 0..2 {
                assert!(close(dft[j][k], d[j] * bs[j][k] * d[k]));
            }
        }
        let s = StateVector::from_terms(
            r.clone(),
            [(&[1u8, 0][..], c(0.6, 0.0)), (&[1u8, 1][..], c(0.0, 0.8))],
        )
        .unwrap();
        let via_dft = multiport(&s, &MultiportSpec::new(vec![a.clone(), b.clone()]).unwrap()).unwrap();
        let mut via_bs = phase_shift(&s, &b, -FRAC_PI_2).unwrap();
        via_bs = beam_splitter(&via_bs, &BeamSplitterSpec::balanced(a, b.clone()).unwrap()).unwrap();
        via_bs = phase_shift(&via_bs, &b, -FRAC_PI_2).unwrap();
        assert!((inner(&via_dft, &via_bs).unwrap() - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn three_port_spreads_single_photon_evenly() {
        let r = reg(&["a", "b", "c"]);
        let modes: Vec<_> = r.modes().collect();
        let spec = MultiportSpec::new(modes.clone()).unwrap();
        let out = multiport(&StateVector::basis(r.clone(), &[1, 0, 0]).unwrap(), &spec).unwrap();
        for m in &modes {
            let p = out.number_distribution(m).unwrap()[1];
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        let vac = multiport(&StateVector::vacuum(r).unwrap(), &spec).unwrap();
        assert_eq!(vac.amplitude(&[0, 0, 0]), c(1.0, 0.0));
        assert!(MultiportSpec::new(vec![modes[0].clone()]).is_err());
        assert!(MultiportSpec::new(vec![modes[0].clone(), modes[0].clone()]).is_err());
    }

    #[test]
    fn truncation_leakage_is_reported() {
        let r = reg(&["a", "b"]);
        let spec = BeamSplitterSpec::balanced(r.mode("a").unwrap(), r.mode("b").unwrap()).unwrap();
        // |2,1⟩ has three photons; outputs with 3 in one mode exceed n_max = 2.
        let out = beam_splitter(&StateVector::basis(r, &[2, 1]).unwrap(), &spec).unwrap();
        assert!(out.leakage() > 0.0);
        assert!((out.norm_sqr() + out.leakage() - 1.0).abs() < 1e-12);
    }

    fn arb_state() -> impl Strategy<Value = StateVector> {
        // Random amplitudes on all 3-mode kets with total photon number ≤ 2.
        let kets: Vec<[u8; 3]> = (0..=2u8)
            .flat_map(|x| (0..=2u8).flat_map(move |y| (0..=2u8).map(move |z| [x, y, z])))
            .filter(|k| k.iter().sum::<u8>() <= 2)
            .collect();
        let n = kets.len();
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n).prop_filter_map("nonzero", move |amps| {
            let r = reg(&["a", "b", "c"]);
            let terms: Vec<(&[u8], Amplitude)> = kets
                .iter()
                .zip(&amps)
                .map(|(k, &(re, im))| (&k[..], c(re, im)))
                .collect();
            StateVector::from_terms(r, terms).ok()?.normalize().ok()
        })
    }

    proptest! {
        #[test]
        fn passive_elements_preserve_norm(s in arb_state(), theta in 0.0..FRAC_PI_2, phi in -PI..PI) {
            let r = s.registry().clone();
            let (a, b, cm) = (r.mode("a").unwrap(), r.mode("b").unwrap(), r.mode("c").unwrap());
            let bs = BeamSplitterSpec::new(a.clone(), b.clone(), theta).unwrap();
            let out = beam_splitter(&s, &bs).unwrap();
            prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-10);
            prop_assert!(out.leakage() < 1e-10);
            let back = beam_splitter(&out, &bs.inverse()).unwrap();
            prop_assert!((inner(&s, &back).unwrap() - c(1.0, 0.0)).norm() < 1e-10);
            let ph = phase_shift(&s, &cm, phi).unwrap();
            prop_assert!((ph.norm_sqr() - 1.0).abs() < 1e-10);
            let mp = multiport(&s, &MultiportSpec::new(vec![a, b, cm]).unwrap()).unwrap();
            prop_assert!((mp.norm_sqr() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn unitaries_preserve_inner_products(s in arb_state(), t in arb_state(), theta in 0.0..FRAC_PI_2) {
            let r = s.registry().clone();
            let bs = BeamSplitterSpec::new(r.mode("a").unwrap(), r.mode("c").unwrap(), theta).unwrap();
            let before = inner(&s, &t).unwrap();
            let after = inner(&beam_splitter(&s, &bs).unwrap(), &beam_splitter(&t, &bs).unwrap()).unwrap();
            prop_assert!((before - after).norm() < 1e-10);
        }

        #[test]
        fn phases_compose_additively(s in arb_state(), p1 in -PI..PI, p2 in -PI..PI) {
            let b = s.registry().mode("b").unwrap();
            let two = phase_shift(&phase_shift(&s, &b, p1).unwrap(), &b, p2).unwrap();
            let one = phase_shift(&s, &b, p1 + p2).unwrap();
            for (o, x) in one.terms() {
                prop_assert!((two.amplitude(o) - x).norm() < 1e-12);
            }
        }

        #[test]
        fn detection_outcomes_sum_to_one(s in arb_state(), eta in 0.0..=1.0f64, dark in 0.0..=0.2f64) {
            let det = DetectorModel::new(eta, dark).unwrap();
            let a = s.registry().mode("a").unwrap();
            let [q, k] = detect_threshold(&s, &a, &det).unwrap();
            prop_assert!((q.probability + k.probability - 1.0).abs() < 1e-10);
            let closed = det.click_probability(&s.number_distribution(&a).unwrap());
            prop_assert!((k.probability - closed).abs() < 1e-10);
            let blind = DetectorModel::lossy(1.0).unwrap();
            let [_, k] = detect_threshold(&s, &a, &blind).unwrap();
            prop_assert!(k.probability.abs() < 1e-12);
        }

        #[test]
        fn number_probabilities_account_for_leakage(s in arb_state(), theta in 0.0..FRAC_PI_2) {
            // Three photons can leak past n_max = 2 once a third is created.
            let r = s.registry().clone();
            let a = r.mode("a").unwrap();
            let pumped = s.apply_create(&a).unwrap();
            let bs = BeamSplitterSpec::new(a.clone(), r.mode("b").unwrap(), theta).unwrap();
            let out = beam_splitter(&pumped, &bs).unwrap();
            let before = pumped.norm_sqr();
            let total: f64 = out.number_distribution(&a).unwrap().iter().sum();
            prop_assert!((total + (out.leakage() - pumped.leakage()) - before).abs() < 1e-10);
        }
    }
}
