//! Acceptance gate: one PASS/FAIL line per criterion, tolerances fixed below.

use std::f64::consts::{FRAC_PI_2, PI};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tribell_core::belltest::{
    ghz_battery, mermin_value, w_all_equal_probability, w_property_probabilities, Engine, FlagTreatment,
    MeasurementSetting, PreparedState, Protocol, StationSetup,
};
use tribell_core::fock::{fidelity, marginal_fidelity, Amplitude, ModeId, ModeRegistry, StateVector};
use tribell_core::optics::{
    apply_loss, beam_splitter, click_pattern_distribution, detect_threshold, multiport, phase_shift,
    BeamSplitterSpec, DetectorModel, MultiportSpec,
};
use tribell_core::protocols::{
    expected_time, extract_coincidence_component, ideal_pair, prepare_ghz_raw, prepare_pair, simulate_attempts,
    AttemptConfig, ExcitationParams, TimingParams, TimingProtocol,
};

use MeasurementSetting::{X, Y, Z};

const EXACT_TOL: f64 = 1e-9;
const ALGEBRA_TOL: f64 = 1e-10;
const MC_SIGMAS: f64 = 5.0;
const TIMING_SIGMAS: f64 = 3.0;

struct Gate {
    lines: Vec<(String, bool)>,
}

impl Gate {
    fn check(&mut self, id: &str, ok: bool, detail: String) {
        println!("[{}] criterion {id}: {detail}", if ok { "PASS" } else { "FAIL" });
        self.lines.push((id.to_string(), ok));
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

/// Monte-Carlo agreement; a zero stderr only accepts agreement to rounding.
fn mc_agrees(mc: f64, stderr: f64, exact: f64) -> bool {
    (mc - exact).abs() <= MC_SIGMAS * stderr + 1e-12
}

fn pair_state(g: &mut Gate) {
    let start = Instant::now();
    let params = ExcitationParams::new(1e-3, 0.0).unwrap();
    let phi = 0.4;
    let h = prepare_pair(("L", "R"), phi, &params, &DetectorModel::ideal(), 2).unwrap();
    let target = ideal_pair("L", "R", h.phases[0], 2).unwrap();
    let f = marginal_fidelity(h.state.as_ref().unwrap(), &target).unwrap();
    let elapsed = start.elapsed();
    g.check(
        "1",
        h.success && f >= 0.999 && elapsed < Duration::from_secs(1),
        format!(
            "pair fidelity {f:.6} (≥ 0.999, target phase {:.4} = φ + π/2: {}), runtime {elapsed:?} (< 1 s)",
            h.phases[0],
            within(h.phases[0], phi + FRAC_PI_2, 1e-12)
        ),
    );
}

fn ghz_extraction(g: &mut Gate) {
    let mut ok = true;
    let mut detail = Vec::new();
    for phi_r in [0.0, PI / 3.0, PI] {
        let phases = [phi_r, 0.0, 0.0];
        let pairs: Vec<StateVector> = (1..=3)
            .map(|i| ideal_pair(&format!("L{i}"), &format!("R{i}"), phases[i - 1], 2).unwrap())
            .collect();
        let raw = prepare_ghz_raw([&pairs[0], &pairs[1], &pairs[2]]).unwrap();
        let m = |l: &str| raw.mode(l).unwrap();
        let rails: Vec<(ModeId, ModeId)> =
            (1..=3).map(|i| (m(&format!("L{i}")), m(&format!("R{}", i % 3 + 1)))).collect();
        let (w, comp) = extract_coincidence_component(&raw, &rails).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let target = StateVector::from_terms(
            raw.registry().clone(),
            [
                (&[1u8, 0, 1, 0, 1, 0][..], Amplitude::new(h, 0.0)),
                (&[0u8, 1, 0, 1, 0, 1][..], Amplitude::from_polar(h, phi_r)),
            ],
        )
        .unwrap();
        let f = fidelity(&comp, &target).unwrap();
        ok &= within(w, 0.25, ALGEBRA_TOL) && within(f, 1.0, ALGEBRA_TOL);
        detail.push(format!("φr={phi_r:.4}: weight {w:.12}, fidelity {f:.12}"));
    }
    g.check("2", ok, detail.join("; "));
}

fn ghz_battery_check(g: &mut Gate) {
    let start = Instant::now();
    let st = PreparedState::ghz_ideal([0.3, -0.2, 1.1], 2).unwrap();
    let setup = StationSetup::default();
    let exact = ghz_battery(&st, &Engine::exact(), &setup).unwrap();
    let mc = ghz_battery(&st, &Engine::monte_carlo(100_000, 1), &setup).unwrap();
    let elapsed = start.elapsed();
    let expected = [-1.0, -1.0, -1.0, 1.0];
    let exact_ok = exact.terms.iter().zip(expected).all(|(t, e)| within(t.value, e, EXACT_TOL));
    let mc_ok = mc.terms.iter().zip(&exact.terms).all(|(m, e)| mc_agrees(m.value, m.stderr, e.value));
    let values: Vec<String> = exact.terms.iter().map(|t| format!("{:+.9}", t.value)).collect();
    g.check(
        "3",
        exact_ok && within(exact.lhv_xxx_prediction, -1.0, 0.0) && mc_ok && elapsed < Duration::from_secs(30),
        format!(
            "exact (YYX, YXY, XYY, XXX) = ({}), LHV XXX {}, MC 10^5 within 5σ: {mc_ok}, runtime {elapsed:?} (< 30 s)",
            values.join(", "),
            exact.lhv_xxx_prediction
        ),
    );
}

fn w_properties(g: &mut Gate) {
    let st = PreparedState::w_ideal([0.2, 0.7, -0.4], 0.9, -1.3, 2).unwrap();
    let setup = StationSetup::default();
    let probs = |engine: &Engine, flag| {
        let p = w_property_probabilities(&st, engine, flag, &setup).unwrap();
        [p.two_minus_one.value, p.xj_eq_xk_given_zi.value, p.xi_eq_xk_given_zj.value]
    };
    let abs = probs(&Engine::reference(), FlagTreatment::Abstract);
    let abs_optics = probs(&Engine::exact(), FlagTreatment::Abstract);
    let trace = probs(&Engine::exact(), FlagTreatment::Trace);
    let erase = probs(&Engine::exact(), FlagTreatment::Erase);
    let ok = abs.iter().chain(&abs_optics).chain(&erase).all(|&p| within(p, 1.0, EXACT_TOL))
        && within(trace[0], 1.0, EXACT_TOL)
        && within(trace[1], 0.5, EXACT_TOL)
        && within(trace[2], 0.5, EXACT_TOL);
    g.check(
        "4",
        ok,
        format!("abstract {abs:?}, abstract through optics {abs_optics:?}, trace {trace:?}, erase {erase:?}"),
    );
}

fn w_all_equal(g: &mut Gate) {
    let st = PreparedState::w_ideal([0.0; 3], 0.0, 0.0, 2).unwrap();
    let setup = StationSetup::default();
    let abs = w_all_equal_probability(&st, &Engine::reference(), FlagTreatment::Abstract, &setup).unwrap();
    let exact = w_all_equal_probability(&st, &Engine::exact(), FlagTreatment::Abstract, &setup).unwrap();
    let mc = w_all_equal_probability(&st, &Engine::monte_carlo(100_000, 5), FlagTreatment::Abstract, &setup).unwrap();
    let ok = within(abs.value, 0.75, EXACT_TOL)
        && within(exact.value, 0.75, EXACT_TOL)
        && mc_agrees(mc.value, mc.stderr, exact.value);
    g.check(
        "5",
        ok,
        format!(
            "abstract {:.12}, exact {:.12}, MC 10^5 {:.5} ± {:.5}",
            abs.value, exact.value, mc.value, mc.stderr
        ),
    );
}

fn mermin(g: &mut Gate) {
    let setup = StationSetup::default();
    let w = PreparedState::w_ideal([0.0; 3], 0.0, 0.0, 2).unwrap();
    let ghz = PreparedState::ghz_ideal([0.0; 3], 2).unwrap();
    let one = Amplitude::new(1.0, 0.0);
    let zero = Amplitude::default();
    let product = PreparedState::product(Protocol::Ghz, [[one, zero]; 3], 2).unwrap();
    let w_abs = mermin_value(&w, Z, X, &Engine::exact(), FlagTreatment::Abstract, &setup).unwrap();
    let w_erase = mermin_value(&w, Z, X, &Engine::exact(), FlagTreatment::Erase, &setup).unwrap();
    let g4 = mermin_value(&ghz, X, Y, &Engine::exact(), FlagTreatment::Trace, &setup).unwrap();
    let prod = mermin_value(&product, X, Y, &Engine::exact(), FlagTreatment::Trace, &setup).unwrap();
    let ok = within(w_abs.value, -3.0, EXACT_TOL)
        && within(w_erase.value, -3.0, EXACT_TOL)
        && w_abs.violated
        && within(g4.value, 4.0, EXACT_TOL)
        && g4.violated
        && prod.value.abs() <= 2.0 + EXACT_TOL
        && !prod.violated;
    g.check(
        "6",
        ok,
        format!(
            "W(Z,X) abstract {:.12}, erase {:.12}; GHZ(X,Y) {:.12}; |000⟩ {:.12}",
            w_abs.value, w_erase.value, g4.value, prod.value
        ),
    );
}

fn timing(g: &mut Gate) {
    let timing = TimingParams::new(1.0, 1.0).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for eta in [0.0f64, 0.1, 0.5] {
        let formula = 4.0 / (1.0 - eta).powi(3);
        let t = expected_time(TimingProtocol::Ghz, &timing, eta).unwrap();
        let cfg = AttemptConfig {
            protocol: TimingProtocol::Ghz,
            excitation: ExcitationParams::new(1e-3, 0.0).unwrap(),
            detector: DetectorModel::lossy(eta).unwrap(),
            n_max: 2,
            attempt_cap: AttemptConfig::DEFAULT_CAP,
        };
        let s = simulate_attempts(&cfg, 10_000, 3).unwrap();
        ok &= t == formula && (s.mean - formula).abs() <= TIMING_SIGMAS * s.stderr;
        detail.push(format!("η={eta}: formula {t}, simulated {:.3} ± {:.3}", s.mean, s.stderr));
    }
    let w_cfg = AttemptConfig {
        protocol: TimingProtocol::W,
        excitation: ExcitationParams::new(1e-3, 0.0).unwrap(),
        detector: DetectorModel::ideal(),
        n_max: 2,
        attempt_cap: AttemptConfig::DEFAULT_CAP,
    };
    let w = simulate_attempts(&w_cfg, 100, 3).unwrap();
    let weight = w.coincidence_weight.unwrap_or(f64::NAN);
    let w_time = expected_time(TimingProtocol::W, &TimingParams::new(1.0, 2.0).unwrap(), 0.0).unwrap();
    ok &= within(weight, 0.125, ALGEBRA_TOL) && w_time == 8.0;
    detail.push(format!(
        "W: enumerated coincidence weight {weight:.12} beside formula {w_time} (t1 = 2); threshold-click success {}",
        w.success_probability
    ));
    g.check("7", ok, detail.join("; "));
}

fn random_state(rng: &mut ChaCha8Rng, reg: &Arc<ModeRegistry>, n_max: u8) -> StateVector {
    let occupations: Vec<[u8; 4]> = (0..=n_max)
        .flat_map(|a| (0..=n_max - a).flat_map(move |b| (0..=n_max - a - b).map(move |c| [a, b, c, 0])))
        .collect();
    let terms: Vec<([u8; 4], Amplitude)> = occupations
        .into_iter()
        .map(|o| (o, Amplitude::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)))
        .collect();
    StateVector::from_terms(reg.clone(), terms.iter().map(|(o, a)| (&o[..], *a)))
        .unwrap()
        .normalize()
        .unwrap()
}

fn unitarity(g: &mut Gate) {
    let n_max = 3;
    let reg = Arc::new(ModeRegistry::with_labels(n_max, &["a", "b", "c", "loss"]).unwrap());
    let m = |l: &str| reg.mode(l).unwrap();
    let (a, b, c, loss) = (m("a"), m("b"), m("c"), m("loss"));
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s = random_state(&mut rng, &reg, n_max);
        let theta = rng.gen::<f64>() * FRAC_PI_2;
        let phi = rng.gen::<f64>() * 2.0 * PI;
        let eta = rng.gen::<f64>();
        let bs = BeamSplitterSpec::new(a.clone(), b.clone(), theta).unwrap();
        let dft = MultiportSpec::new(vec![a.clone(), b.clone(), c.clone()]).unwrap();
        let outputs = [
            beam_splitter(&s, &bs).unwrap().norm_sqr(),
            phase_shift(&s, &c, phi).unwrap().norm_sqr(),
            multiport(&s, &dft).unwrap().norm_sqr(),
            apply_loss(&s, &b, eta, &loss).unwrap().norm_sqr(),
        ];
        let detector = DetectorModel::new(eta, 0.01).unwrap();
        let branches = detect_threshold(&s, &a, &detector).unwrap();
        let branch_total: f64 = branches.iter().map(|br| br.probability).sum();
        for x in outputs.into_iter().chain([branch_total]) {
            worst = worst.max((x - 1.0).abs());
        }
    }
    let hom_reg = Arc::new(ModeRegistry::with_labels(2, &["a", "b"]).unwrap());
    let hom_in = StateVector::basis(hom_reg.clone(), &[1, 1]).unwrap();
    let (ha, hb) = (hom_reg.mode("a").unwrap(), hom_reg.mode("b").unwrap());
    let out = beam_splitter(&hom_in, &BeamSplitterSpec::balanced(ha.clone(), hb.clone()).unwrap()).unwrap();
    let dist = click_pattern_distribution(&out, &[(ha, DetectorModel::ideal()), (hb, DetectorModel::ideal())]).unwrap();
    let coincidence: f64 = dist.iter().filter(|o| o.pattern.clicks() == 2).map(|o| o.probability).sum();
    g.check(
        "8",
        worst <= ALGEBRA_TOL && within(coincidence, 0.0, ALGEBRA_TOL),
        format!("max norm deviation over 100 random states {worst:.3e}; HOM coincidence {coincidence:.3e}"),
    );
}

fn run_cli(threads: usize) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_tribell"))
        .args(["--threads", &threads.to_string(), "ghz", "--engine", "montecarlo", "--shots", "20000", "--seed", "11"])
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn determinism(g: &mut Gate) {
    let a = run_cli(1);
    let b = run_cli(1);
    let c = run_cli(4);
    g.check(
        "9",
        !a.is_empty() && a == b && a == c,
        format!(
            "CSV bytes identical for repeated runs: {}, for 1 vs 4 threads: {} ({} bytes)",
            a == b,
            a == c,
            a.len()
        ),
    );
}

#[test]
fn acceptance() {
    let mut g = Gate { lines: Vec::new() };
    pair_state(&mut g);
    ghz_extraction(&mut g);
    ghz_battery_check(&mut g);
    w_properties(&mut g);
    w_all_equal(&mut g);
    mermin(&mut g);
    timing(&mut g);
    unitarity(&mut g);
    determinism(&mut g);
    let failed: Vec<&str> = g.lines.iter().filter(|(_, ok)| !ok).map(|(id, _)| id.as_str()).collect();
    println!("{} of {} criteria passed", g.lines.len() - failed.len(), g.lines.len());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
