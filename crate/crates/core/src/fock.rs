//! Sparse complex state vectors over a truncated multimode Fock space.
//!
//! A [`StateVector`] maps occupation vectors (one photon/excitation count per
//! registered mode) to complex amplitudes. Every mode carries its own
//! truncation `n_max`; operations that would push a count above it drop the
//! offending terms and add their squared weight to a leakage figure carried
//! by the state, so non-unitarity from truncation is always observable.
//!
//! States are immutable values. Every operation returns a new state.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use num_complex::Complex64;
use smallvec::SmallVec;

use crate::error::{config, numerical, usage, Result};

/// Amplitudes with magnitude below this are never stored.
pub const PRUNE_THRESHOLD: f64 = 1e-15;
/// Norms (and conditioning probabilities) below this are treated as zero.
pub const ZERO_NORM_THRESHOLD: f64 = 1e-14;
/// Default per-mode truncation.
pub const DEFAULT_N_MAX: u8 = 2;

pub type Amplitude = Complex64;

/// Handle to a registered mode. The index is a lookup hint; the label is authoritative,
/// so a handle stays valid in any registry derived by [`StateVector::extend`] or
/// [`StateVector::tensor`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeId {
    index: usize,
    label: Arc<str>,
}

impl ModeId {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// Ordered set of named bosonic modes with per-mode truncation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeRegistry {
    labels: Vec<Arc<str>>,
    cutoffs: Vec<u8>,
    n_max: u8,
}

impl ModeRegistry {
    /// Empty registry whose modes default to truncation `n_max`.
    pub fn new(n_max: u8) -> Result<Self> {
        if n_max < 1 {
            return Err(config("n_max must be at least 1"));
        }
        Ok(ModeRegistry {
            labels: Vec::new(),
            cutoffs: Vec::new(),
            n_max,
        })
    }

    /// Builds a registry from labels, all at truncation `n_max`.
    pub fn with_labels<S: AsRef<str>>(n_max: u8, labels: &[S]) -> Result<Self> {
        let mut reg = ModeRegistry::new(n_max)?;
        for l in labels {
            reg.register(l.as_ref())?;
        }
        Ok(reg)
    }

    pub fn register(&mut self, label: &str) -> Result<ModeId> {
        let n = self.n_max;
        self.register_with_cutoff(label, n)
    }

    pub fn register_with_cutoff(&mut self, label: &str, cutoff: u8) -> Result<ModeId> {
        if cutoff < 1 {
            return Err(config(format!("mode {label}: n_max must be at least 1")));
        }
        if self.position(label).is_some() {
            return Err(usage(format!("mode label {label:?} already registered")));
        }
        let label: Arc<str> = Arc::from(label);
        self.labels.push(label.clone());
        self.cutoffs.push(cutoff);
        Ok(ModeId {
            index: self.labels.len() - 1,
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_max(&self) -> u8 {
        self.n_max
    }

    pub fn cutoff(&self, index: usize) -> u8 {
        self.cutoffs[index]
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(|l| &**l)
    }

    pub fn modes(&self) -> impl Iterator<Item = ModeId> + '_ {
        self.labels.iter().enumerate().map(|(index, label)| ModeId {
            index,
            label: label.clone(),
        })
    }

    pub fn contains(&self, label: &str) -> bool {
        self.position(label).is_some()
    }

    pub fn mode(&self, label: &str) -> Result<ModeId> {
        self.position(label)
            .map(|index| ModeId {
                index,
                label: self.labels[index].clone(),
            })
            .ok_or_else(|| usage(format!("mode {label:?} is not registered")))
    }

    /// Position of `mode` in this registry.
    pub fn resolve(&self, mode: &ModeId) -> Result<usize> {
        if self.labels.get(mode.index).is_some_and(|l| *l == mode.label) {
            return Ok(mode.index);
        }
        self.position(&mode.label)
            .ok_or_else(|| usage(format!("mode {:?} is not registered", &*mode.label)))
    }

    /// A label not yet in use, built from `base` and a numeric suffix.
    pub fn fresh_label(&self, base: &str) -> String {
        (0..)
            .map(|k| format!("{base}{k}"))
            .find(|l| !self.contains(l))
            .expect("unbounded label search")
    }

    fn position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| &**l == label)
    }

    fn concat(&self, other: &ModeRegistry) -> Result<ModeRegistry> {
        if let Some(dup) = other.labels.iter().find(|l| self.contains(l)) {
            return Err(usage(format!("registries overlap on mode {:?}", &**dup)));
        }
        let mut out = self.clone();
        out.labels.extend(other.labels.iter().cloned());
        out.cutoffs.extend(other.cutoffs.iter().copied());
        Ok(out)
    }
}

/// Per-mode occupation counts, indexed like the owning registry.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Occupation(SmallVec<[u8; 24]>);

impl Occupation {
    pub fn zeros(len: usize) -> Self {
        Occupation(SmallVec::from_elem(0, len))
    }

    pub fn total(&self) -> u32 {
        self.0.iter().map(|&n| n as u32).sum()
    }

    pub(crate) fn set(&mut self, index: usize, n: u8) {
        self.0[index] = n;
    }

    pub(crate) fn extended(&self, extra: usize) -> Self {
        let mut v = self.0.clone();
        v.extend(std::iter::repeat_n(0, extra));
        Occupation(v)
    }
}

impl Deref for Occupation {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        &self.0
    }
}

impl From<&[u8]> for Occupation {
    fn from(v: &[u8]) -> Self {
        Occupation(SmallVec::from_slice(v))
    }
}

/// Sparse pure state over a [`ModeRegistry`].
#[derive(Clone, Debug)]
pub struct StateVector {
    registry: Arc<ModeRegistry>,
    amps: BTreeMap<Occupation, Amplitude>,
    norm_sqr: f64,
    leakage: f64,
}

impl StateVector {
    pub(crate) fn from_map(
        registry: Arc<ModeRegistry>,
        mut amps: BTreeMap<Occupation, Amplitude>,
        leakage: f64,
    ) -> Self {
        amps.retain(|_, a| a.norm() >= PRUNE_THRESHOLD);
        let norm_sqr = amps.values().map(|a| a.norm_sqr()).sum();
        StateVector {
            registry,
            amps,
            norm_sqr,
            leakage,
        }
    }

    /// The all-zero occupation with amplitude 1.
    pub fn vacuum(registry: Arc<ModeRegistry>) -> Result<Self> {
        if registry.is_empty() {
            return Err(config("vacuum of an empty registry"));
        }
        let mut amps = BTreeMap::new();
        amps.insert(Occupation::zeros(registry.len()), Amplitude::new(1.0, 0.0));
        Ok(StateVector::from_map(registry, amps, 0.0))
    }

    /// A single basis ket with unit amplitude.
    pub fn basis(registry: Arc<ModeRegistry>, occupation: &[u8]) -> Result<Self> {
        StateVector::from_terms(registry, [(occupation, Amplitude::new(1.0, 0.0))])
    }

    /// Builds a state from explicit `(occupation, amplitude)` terms. Repeated occupations add.
    pub fn from_terms<'a, I>(registry: Arc<ModeRegistry>, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [u8], Amplitude)>,
    {
        if registry.is_empty() {
            return Err(config("state over an empty registry"));
        }
        let mut amps: BTreeMap<Occupation, Amplitude> = BTreeMap::new();
        for (occ, amp) in terms {
            if occ.len() != registry.len() {
                return Err(usage(format!(
                    "occupation of length {} for a {}-mode registry",
                    occ.len(),
                    registry.len()
                )));
            }
            for (i, &n) in occ.iter().enumerate() {
                if n > registry.cutoff(i) {
                    return Err(usage(format!(
                        "occupation {n} exceeds n_max {} of mode {}",
                        registry.cutoff(i),
                        registry.labels[i]
                    )));
                }
            }
            check_finite(amp)?;
            *amps.entry(Occupation::from(occ)).or_default() += amp;
        }
        Ok(StateVector::from_map(registry, amps, 0.0))
    }

    pub fn registry(&self) -> &Arc<ModeRegistry> {
        &self.registry
    }

    pub fn mode(&self, label: &str) -> Result<ModeId> {
        self.registry.mode(label)
    }

    /// Iterates over stored terms in occupation order.
    pub fn terms(&self) -> impl Iterator<Item = (&Occupation, &Amplitude)> {
        self.amps.iter()
    }

    pub fn amplitude(&self, occupation: &[u8]) -> Amplitude {
        self.amps
            .get(&Occupation::from(occupation))
            .copied()
            .unwrap_or_default()
    }

    /// Number of stored basis terms.
    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.norm_sqr
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr.sqrt()
    }

    /// Squared weight dropped by truncation on the way to this state.
    pub fn leakage(&self) -> f64 {
        self.leakage
    }

    /// Applies the creation operator of `mode`. Terms already at the mode's
    /// truncation are dropped and their weight added to the leakage figure.
    pub fn apply_create(&self, mode: &ModeId) -> Result<Self> {
        let idx = self.registry.resolve(mode)?;
        let cutoff = self.registry.cutoff(idx);
        let mut leaked = 0.0;
        let mut out = BTreeMap::new();
        for (occ, amp) in &self.amps {
            let n = occ[idx];
            if n >= cutoff {
                leaked += amp.norm_sqr();
                continue;
            }
            let mut next = occ.clone();
            next.set(idx, n + 1);
            out.insert(next, amp * ((n + 1) as f64).sqrt());
        }
        Ok(StateVector::from_map(
            self.registry.clone(),
            out,
            self.leakage + leaked,
        ))
    }

    pub fn scale(&self, factor: Amplitude) -> Self {
        let amps = self
            .amps
            .iter()
            .map(|(o, a)| (o.clone(), a * factor))
            .collect();
        StateVector::from_map(
            self.registry.clone(),
            amps,
            self.leakage * factor.norm_sqr(),
        )
    }

    /// Rescales to unit norm. The leakage figure is rescaled by the same factor.
    pub fn normalize(&self) -> Result<Self> {
        let norm = self.norm();
        if norm < ZERO_NORM_THRESHOLD {
            return Err(numerical(format!(
                "cannot normalize a state of norm {norm:e}"
            )));
        }
        let inv = 1.0 / norm;
        let amps = self.amps.iter().map(|(o, a)| (o.clone(), a * inv)).collect();
        Ok(StateVector::from_map(
            self.registry.clone(),
            amps,
            self.leakage * inv * inv,
        ))
    }

    /// Squared weight of each occupation `0..=n_max` of `mode` (not divided by the norm).
    pub fn number_distribution(&self, mode: &ModeId) -> Result<Vec<f64>> {
        let idx = self.registry.resolve(mode)?;
        let mut dist = vec![0.0; self.registry.cutoff(idx) as usize + 1];
        for (occ, amp) in &self.amps {
            dist[occ[idx] as usize] += amp.norm_sqr();
        }
        Ok(dist)
    }

    /// Keeps only terms for which `keep` holds, without renormalizing.
    pub fn filter(&self, mut keep: impl FnMut(&Occupation) -> bool) -> Self {
        let amps = self
            .amps
            .iter()
            .filter(|(o, _)| keep(o))
            .map(|(o, a)| (o.clone(), *a))
            .collect();
        StateVector::from_map(self.registry.clone(), amps, 0.0)
    }

    /// Projects onto occupation `n` of `mode`. Returns the outcome probability and the
    /// normalized post-measurement state.
    pub fn project_number(&self, mode: &ModeId, n: u8) -> Result<(f64, Self)> {
        let idx = self.registry.resolve(mode)?;
        if n > self.registry.cutoff(idx) {
            return Err(usage(format!(
                "occupation {n} exceeds n_max {} of mode {mode}",
                self.registry.cutoff(idx)
            )));
        }
        let projected = self.filter(|o| o[idx] == n);
        let p = projected.norm_sqr;
        if p < ZERO_NORM_THRESHOLD {
            return Err(numerical(format!(
                "collapse onto n={n} in mode {mode} has probability {p:e}"
            )));
        }
        Ok((p, projected.normalize()?))
    }

    /// Product state over the concatenation of both registries.
    pub fn tensor(&self, other: &StateVector) -> Result<Self> {
        let registry = Arc::new(self.registry.concat(&other.registry)?);
        let mut amps = BTreeMap::new();
        for (oa, aa) in &self.amps {
            for (ob, ab) in &other.amps {
                let mut occ = oa.0.clone();
                occ.extend_from_slice(&ob.0);
                amps.insert(Occupation(occ), aa * ab);
            }
        }
        Ok(StateVector::from_map(
            registry,
            amps,
            self.leakage + other.leakage,
        ))
    }

    /// Appends vacuum modes `(label, n_max)` to the registry.
    pub fn extend(&self, modes: &[(&str, u8)]) -> Result<Self> {
        let mut reg = (*self.registry).clone();
        for (label, cutoff) in modes {
            reg.register_with_cutoff(label, *cutoff)?;
        }
        let extra = modes.len();
        let amps = self
            .amps
            .iter()
            .map(|(o, a)| (o.extended(extra), *a))
            .collect();
        Ok(StateVector::from_map(Arc::new(reg), amps, self.leakage))
    }

    /// Registers a fresh vacuum mode whose label starts with `base`.
    pub fn with_fresh_mode(&self, base: &str, cutoff: u8) -> Result<(Self, ModeId)> {
        let label = self.registry.fresh_label(base);
        let next = self.extend(&[(&label, cutoff)])?;
        let mode = next.mode(&label)?;
        Ok((next, mode))
    }

    /// Coherently returns `modes` to vacuum, summing amplitudes of terms that
    /// become identical. Not a physical operation: it models an ideal removal
    /// of which-path labels carried by those modes. The result is not normalized.
    pub fn reset_modes(&self, modes: &[ModeId]) -> Result<Self> {
        let idx = modes
            .iter()
            .map(|m| self.registry.resolve(m))
            .collect::<Result<Vec<_>>>()?;
        let mut amps: BTreeMap<Occupation, Amplitude> = BTreeMap::new();
        for (occ, amp) in &self.amps {
            let mut o = occ.clone();
            for &i in &idx {
                o.set(i, 0);
            }
            *amps.entry(o).or_default() += amp;
        }
        Ok(StateVector::from_map(self.registry.clone(), amps, 0.0))
    }

    /// True when every stored term has occupation 0 in `mode`.
    pub fn is_vacuum_in(&self, mode: &ModeId) -> Result<bool> {
        let idx = self.registry.resolve(mode)?;
        Ok(self.amps.keys().all(|o| o[idx] == 0))
    }

    pub(crate) fn map_terms(&self) -> &BTreeMap<Occupation, Amplitude> {
        &self.amps
    }

    pub(crate) fn with_amps(&self, amps: BTreeMap<Occupation, Amplitude>, leaked: f64) -> Self {
        StateVector::from_map(self.registry.clone(), amps, self.leakage + leaked)
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (occ, amp) in &self.amps {
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            write!(f, "({:.6}{:+.6}i)|", amp.re, amp.im)?;
            for (i, n) in occ.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{n}")?;
            }
            f.write_str("⟩")?;
        }
        if first {
            f.write_str("0")?;
        }
        Ok(())
    }
}

fn check_finite(a: Amplitude) -> Result<()> {
    if a.re.is_finite() && a.im.is_finite() {
        Ok(())
    } else {
        Err(numerical(format!("non-finite amplitude {a}")))
    }
}

fn same_registry(a: &StateVector, b: &StateVector) -> Result<()> {
    if Arc::ptr_eq(&a.registry, &b.registry) || a.registry == b.registry {
        Ok(())
    } else {
        Err(usage("states live on different mode registries"))
    }
}

/// Linear combination `Σ cᵢ|ψᵢ⟩`, pruned but not normalized.
pub fn superpose(terms: &[(Amplitude, &StateVector)]) -> Result<StateVector> {
    let (_, first) = terms
        .first()
        .ok_or_else(|| usage("superpose needs at least one term"))?;
    let mut amps: BTreeMap<Occupation, Amplitude> = BTreeMap::new();
    let mut leakage = 0.0;
    for (c, s) in terms {
        check_finite(*c)?;
        same_registry(first, s)?;
        leakage += c.norm_sqr() * s.leakage;
        for (o, a) in &s.amps {
            *amps.entry(o.clone()).or_default() += c * a;
        }
    }
    Ok(StateVector::from_map(first.registry.clone(), amps, leakage))
}

/// `⟨a|b⟩`, conjugate-linear in `a`.
pub fn inner(a: &StateVector, b: &StateVector) -> Result<Amplitude> {
    same_registry(a, b)?;
    let (small, large, conj_small) = if a.amps.len() <= b.amps.len() {
        (a, b, true)
    } else {
        (b, a, false)
    };
    let mut acc = Amplitude::default();
    for (o, x) in &small.amps {
        if let Some(y) = large.amps.get(o) {
            acc += if conj_small { x.conj() * y } else { y.conj() * x };
        }
    }
    Ok(acc)
}

/// `|⟨a|b⟩|²` for normalized states, clamped to `[0, 1]`.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    let ip = inner(a, b)?;
    let denom = a.norm_sqr * b.norm_sqr;
    if denom < ZERO_NORM_THRESHOLD * ZERO_NORM_THRESHOLD {
        return Err(numerical("fidelity with a zero state"));
    }
    Ok((ip.norm_sqr() / denom).clamp(0.0, 1.0))
}

/// Fidelity `⟨t|ρ|t⟩` of a pure target defined on a subset of the state's modes
/// against the state's reduced density matrix on that subset.
pub fn marginal_fidelity(state: &StateVector, target: &StateVector) -> Result<f64> {
    let sub: Vec<usize> = target
        .registry
        .labels()
        .map(|l| state.registry.mode(l).map(|m| m.index))
        .collect::<Result<_>>()?;
    let rest: Vec<usize> = (0..state.registry.len())
        .filter(|i| !sub.contains(i))
        .collect();
    // Group ⟨t|ψ⟩ partial overlaps by the occupation of the traced modes.
    let mut partial: BTreeMap<SmallVec<[u8; 24]>, Amplitude> = BTreeMap::new();
    for (occ, amp) in &state.amps {
        let key: SmallVec<[u8; 24]> = sub.iter().map(|&i| occ[i]).collect();
        if let Some(t) = target.amps.get(&Occupation(key)) {
            let env: SmallVec<[u8; 24]> = rest.iter().map(|&i| occ[i]).collect();
            *partial.entry(env).or_default() += t.conj() * amp;
        }
    }
    let denom = state.norm_sqr * target.norm_sqr;
    if denom < ZERO_NORM_THRESHOLD * ZERO_NORM_THRESHOLD {
        return Err(numerical("fidelity with a zero state"));
    }
    let f: f64 = partial.values().map(|a| a.norm_sqr()).sum();
    Ok((f / denom).clamp(0.0, 1.0))
}
