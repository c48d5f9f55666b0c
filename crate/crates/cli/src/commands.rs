use tribell_core::belltest::{
    ghz_battery, mermin_value, settings_label, w_all_equal_probability, w_discrepancies, w_property_probabilities,
    Compensation, Engine, PreparedState, ProbabilityEstimate, Protocol, StationSetup,
};
use tribell_core::fock::{marginal_fidelity, Amplitude};
use tribell_core::protocols::{
    expected_time, ideal_pair, multi_excitation_weight, prepare_pair, simulate_attempts, AttemptConfig, TimingProtocol,
};

use crate::config::{ProtocolChoice, RunConfig, Source};
use crate::report::{Report, ResultRecord};
use crate::CliError;

fn engine(cfg: &RunConfig) -> Engine {
    Engine {
        kind: cfg.engine,
        shots: cfg.shots,
        seed: cfg.seed,
    }
}

fn setup(cfg: &RunConfig) -> Result<StationSetup, CliError> {
    Ok(StationSetup {
        detector: cfg.detector()?,
        retrieval: cfg.retrieval()?,
        compensation: match cfg.phases.compensation {
            Some(c) => Compensation::Manual(c),
            None => Compensation::Calibrated,
        },
        drift_width: cfg.drift_width,
    })
}

fn three_party(cfg: &RunConfig) -> Result<Protocol, CliError> {
    match cfg.protocol {
        ProtocolChoice::Ghz => Ok(Protocol::Ghz),
        ProtocolChoice::W => Ok(Protocol::W),
        ProtocolChoice::Pair => Err(CliError::Config("this command needs protocol ghz or w".into())),
    }
}

fn prepared(cfg: &RunConfig, notes: &mut Vec<String>) -> Result<PreparedState, CliError> {
    let protocol = three_party(cfg)?;
    let ph = cfg.phases;
    let n = cfg.n_max;
    Ok(match (cfg.source, protocol) {
        (Source::Ideal, Protocol::Ghz) => PreparedState::ghz_ideal(ph.pair, n)?,
        (Source::Ideal, Protocol::W) => PreparedState::w_ideal(ph.pair, ph.a2, ph.a3, n)?,
        (Source::Raw, Protocol::Ghz) => PreparedState::ghz_raw_ideal(ph.pair, n)?,
        (Source::Raw, Protocol::W) => PreparedState::w_raw_ideal(ph.pair, ph.a2, ph.a3, n)?,
        (Source::Heralded, _) => {
            let params = cfg.excitation()?;
            notes.extend(params.warning());
            let (state, heralds) =
                PreparedState::heralded(protocol, &params, &cfg.channel_phases(), &cfg.detector()?, n, true)?;
            for (i, h) in heralds.iter().enumerate() {
                notes.push(format!("herald {} probability {}", i + 1, crate::report::fmt_g(h.probability)));
            }
            state
        }
        (Source::Product, _) => {
            let q = cfg
                .product
                .map(|[theta, phi]| [Amplitude::new((theta / 2.0).cos(), 0.0), Amplitude::from_polar((theta / 2.0).sin(), phi)]);
            PreparedState::product(protocol, q, n)?
        }
    })
}

fn probability_row(name: &str, settings: &str, p: &ProbabilityEstimate) -> ResultRecord {
    ResultRecord::new(name, settings, p.value, &p.engine.to_string()).stats(p.stderr, p.shots, p.valid_fraction)
}

pub fn cmd_pair(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut notes = Vec::new();
    let params = cfg.excitation()?;
    notes.extend(params.warning());
    let det = cfg.detector()?;
    let h = prepare_pair(("L", "R"), cfg.phases.pair[0], &params, &det, cfg.n_max)?;
    let mut records = vec![
        ResultRecord::new("pair_success", "-", if h.success { 1.0 } else { 0.0 }, "exact"),
        ResultRecord::new("pair_herald_probability", "-", h.probability, "exact"),
    ];
    match &h.state {
        Some(state) if h.success => {
            let target = ideal_pair("L", "R", h.phases[0], cfg.n_max)?;
            records.push(ResultRecord::new("pair_fidelity", "-", marginal_fidelity(state, &target)?, "exact"));
            records.push(ResultRecord::new(
                "pair_contamination",
                "-",
                multi_excitation_weight(state, &h.ensembles)?,
                "exact",
            ));
            records.push(ResultRecord::new("pair_target_phase", "-", h.phases[0], "exact"));
            if cfg.engine == tribell_core::belltest::EngineKind::MonteCarlo {
                let stats = simulate_attempts(&attempt_config(cfg, TimingProtocol::Pair)?, cfg.shots, cfg.seed)?;
                records.push(
                    ResultRecord::new("pair_mean_attempts", "-", stats.mean, "montecarlo").stats(stats.stderr, cfg.shots, 1.0),
                );
                records.push(ResultRecord::new("pair_analytic_attempts", "-", stats.analytic_attempts, "exact"));
            }
        }
        _ => notes.push("herald probability is zero: no conditional state was produced".into()),
    }
    Ok(Report { records, notes })
}

pub fn cmd_ghz(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut notes = Vec::new();
    let state = prepared(cfg, &mut notes)?;
    let b = ghz_battery(&state, &engine(cfg), &setup(cfg)?)?;
    let mut records: Vec<ResultRecord> = b
        .terms
        .iter()
        .map(|t| {
            ResultRecord::new("ghz_correlation", &settings_label(t.settings), t.value, &t.engine.to_string())
                .stats(t.stderr, t.shots, t.valid_fraction)
        })
        .collect();
    let eng = cfg.engine.to_string();
    records.push(ResultRecord::new("ghz_lhv_xxx_prediction", "XXX", b.lhv_xxx_prediction, &eng));
    records.push(ResultRecord::new("ghz_contradiction", "XXX", if b.contradiction { 1.0 } else { 0.0 }, &eng));
    Ok(Report { records, notes })
}

pub fn cmd_w(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut notes = Vec::new();
    let state = prepared(cfg, &mut notes)?;
    let (eng, st) = (engine(cfg), setup(cfg)?);
    let props = w_property_probabilities(&state, &eng, cfg.flag_treatment, &st)?;
    let all = w_all_equal_probability(&state, &eng, cfg.flag_treatment, &st)?;
    let mut records = vec![
        probability_row("w_two_z_minus_one", "ZZZ", &props.two_minus_one),
        probability_row("w_xj_eq_xk_given_zi", "ZXX+XZX+XXZ", &props.xj_eq_xk_given_zi),
        probability_row("w_xi_eq_xk_given_zj", "ZXX+XZX+XXZ", &props.xi_eq_xk_given_zj),
        probability_row("w_all_equal", "XXX", &all),
    ];
    for d in w_discrepancies(&props, &all) {
        notes.push(format!(
            "discrepancy: {} = {} (ideal {}) under flag treatment {}",
            d.quantity,
            crate::report::fmt_g(d.obtained),
            crate::report::fmt_g(d.ideal),
            cfg.flag_treatment
        ));
        records.push(
            ResultRecord::new("w_discrepancy", d.quantity, d.obtained - d.ideal, &cfg.engine.to_string())
                .stats(d.stderr, all.shots, 1.0),
        );
    }
    Ok(Report { records, notes })
}

pub fn cmd_mermin(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut notes = Vec::new();
    let state = prepared(cfg, &mut notes)?;
    let m = mermin_value(&state, cfg.mermin_a, cfg.mermin_b, &engine(cfg), cfg.flag_treatment, &setup(cfg)?)?;
    let mut records: Vec<ResultRecord> = m
        .terms
        .iter()
        .map(|t| {
            ResultRecord::new("mermin_term", &settings_label(t.settings), t.value, &t.engine.to_string())
                .stats(t.stderr, t.shots, t.valid_fraction)
        })
        .collect();
    let label = format!("a={};b={}", m.a, m.b);
    let eng = cfg.engine.to_string();
    let shots = m.terms.iter().map(|t| t.shots).sum();
    records.push(ResultRecord::new("mermin_value", &label, m.value, &eng).stats(m.stderr, shots, 1.0));
    records.push(ResultRecord::new("mermin_violated", &label, if m.violated { 1.0 } else { 0.0 }, &eng));
    Ok(Report { records, notes })
}

fn attempt_config(cfg: &RunConfig, protocol: TimingProtocol) -> Result<AttemptConfig, CliError> {
    Ok(AttemptConfig {
        protocol,
        excitation: cfg.excitation()?,
        detector: cfg.detector()?,
        n_max: cfg.n_max,
        attempt_cap: cfg.attempt_cap,
    })
}

pub fn cmd_timing(cfg: &RunConfig) -> Result<Report, CliError> {
    let protocol = match cfg.protocol {
        ProtocolChoice::Pair => TimingProtocol::Pair,
        ProtocolChoice::Ghz => TimingProtocol::Ghz,
        ProtocolChoice::W => TimingProtocol::W,
    };
    let timing = cfg.timing()?;
    let formula = expected_time(protocol, &timing, cfg.eta)?;
    let stats = simulate_attempts(&attempt_config(cfg, protocol)?, cfg.shots, cfg.seed)?;
    let round = match protocol {
        TimingProtocol::W => timing.t0().max(timing.t1()),
        _ => timing.t0(),
    };
    let name = format!("{protocol:?}").to_lowercase();
    let mut records = vec![
        ResultRecord::new("formula_time", &name, formula, "exact"),
        ResultRecord::new("simulated_mean_attempts", &name, stats.mean, "montecarlo").stats(stats.stderr, cfg.shots, 1.0),
        ResultRecord::new("simulated_time", &name, stats.mean * round, "montecarlo").stats(
            stats.stderr * round,
            cfg.shots,
            1.0,
        ),
        ResultRecord::new("enumerated_success_probability", &name, stats.success_probability, "exact"),
        ResultRecord::new("analytic_attempts", &name, stats.analytic_attempts, "exact"),
    ];
    let mut notes = Vec::new();
    if let Some(w) = stats.coincidence_weight {
        records.push(ResultRecord::new("coincidence_weight", &name, w, "exact"));
        if protocol == TimingProtocol::W {
            notes.push(format!(
                "closed-form time assumes a per-round success of 1/4 at η = 0; the one-excitation-per-party weight is {} \
                 (8 rounds), while threshold-click coincidences succeed with probability {}",
                crate::report::fmt_g(w),
                crate::report::fmt_g(stats.success_probability)
            ));
        }
    }
    Ok(Report { records, notes })
}
