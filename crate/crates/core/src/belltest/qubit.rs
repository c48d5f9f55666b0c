//! Three-qubit reference model: ideal dual-rail qubits measured projectively.

use std::f64::consts::FRAC_1_SQRT_2;

use super::{MeasurementSetting, OutcomeRecord};
use crate::fock::Amplitude;

/// Amplitudes indexed by `4·q₁ + 2·q₂ + q₃`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitState(pub [Amplitude; 8]);

impl QubitState {
    /// `(|000⟩ + e^{iφ}|111⟩)/√2`.
    pub fn ghz(phi: f64) -> Self {
        let mut a = [Amplitude::default(); 8];
        a[0] = Amplitude::new(FRAC_1_SQRT_2, 0.0);
        a[7] = Amplitude::from_polar(FRAC_1_SQRT_2, phi);
        QubitState(a)
    }

    /// `(e^{iθ₁}|100⟩ + e^{iθ₂}|010⟩ + e^{iθ₃}|001⟩)/√3`.
    pub fn w(theta: [f64; 3]) -> Self {
        let mut a = [Amplitude::default(); 8];
        let r = 1.0 / 3f64.sqrt();
        a[4] = Amplitude::from_polar(r, theta[0]);
        a[2] = Amplitude::from_polar(r, theta[1]);
        a[1] = Amplitude::from_polar(r, theta[2]);
        QubitState(a)
    }

    pub fn product(qubits: [[Amplitude; 2]; 3]) -> Self {
        let mut a = [Amplitude::default(); 8];
        for (i, amp) in a.iter_mut().enumerate() {
            *amp = qubits[0][i >> 2 & 1] * qubits[1][i >> 1 & 1] * qubits[2][i & 1];
        }
        QubitState(a)
    }

    /// Multiplies `|1⟩` of party `p` by `e^{iφ_p}`.
    pub fn with_phases(&self, phi: [f64; 3]) -> Self {
        let mut a = self.0;
        for (i, amp) in a.iter_mut().enumerate() {
            for (p, &ph) in phi.iter().enumerate() {
                if i >> (2 - p) & 1 == 1 {
                    *amp *= Amplitude::from_polar(1.0, ph);
                }
            }
        }
        QubitState(a)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|a| a.norm_sqr()).sum()
    }
}

/// Recorded value and measurement vector for one local outcome.
///
/// X/Y: `+1` is the `+1` eigenvector. Z: the recorded `z = +1` flags an excitation in the
/// `|1⟩` rail, which is the `σz = −1` eigenvector.
fn outcome_vector(setting: MeasurementSetting, value: i8) -> [Amplitude; 2] {
    let h = FRAC_1_SQRT_2;
    let s = value as f64;
    match setting {
        MeasurementSetting::X => [Amplitude::new(h, 0.0), Amplitude::new(s * h, 0.0)],
        MeasurementSetting::Y => [Amplitude::new(h, 0.0), Amplitude::new(0.0, s * h)],
        MeasurementSetting::Z => {
            if value > 0 {
                [Amplitude::default(), Amplitude::new(1.0, 0.0)]
            } else {
                [Amplitude::new(1.0, 0.0), Amplitude::default()]
            }
        }
    }
}

/// Joint outcome distribution of local projective measurements.
pub fn outcome_distribution(state: &QubitState, settings: [MeasurementSetting; 3]) -> Vec<(OutcomeRecord, f64)> {
    let total = state.norm_sqr();
    let mut out = Vec::with_capacity(8);
    for code in 0..8 {
        let values: [i8; 3] = std::array::from_fn(|p| if code >> (2 - p) & 1 == 0 { 1 } else { -1 });
        let vecs: [[Amplitude; 2]; 3] = std::array::from_fn(|p| outcome_vector(settings[p], values[p]));
        let mut amp = Amplitude::default();
        for (i, a) in state.0.iter().enumerate() {
            let bra = vecs[0][i >> 2 & 1] * vecs[1][i >> 1 & 1] * vecs[2][i & 1];
            amp += bra.conj() * a;
        }
        out.push((OutcomeRecord::valid(values), amp.norm_sqr() / total));
    }
    out
}
