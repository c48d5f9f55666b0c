use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// One output row.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRecord {
    pub experiment: String,
    pub settings: String,
    pub value: f64,
    pub stderr: f64,
    pub shots: u64,
    pub valid_fraction: f64,
    pub engine: String,
}

impl ResultRecord {
    pub fn new(experiment: &str, settings: &str, value: f64, engine: &str) -> Self {
        ResultRecord {
            experiment: experiment.into(),
            settings: settings.into(),
            value,
            stderr: 0.0,
            shots: 0,
            valid_fraction: 1.0,
            engine: engine.into(),
        }
    }

    pub fn stats(mut self, stderr: f64, shots: u64, valid_fraction: f64) -> Self {
        self.stderr = stderr;
        self.shots = shots;
        self.valid_fraction = valid_fraction;
        self
    }
}

pub struct Report {
    pub records: Vec<ResultRecord>,
    pub notes: Vec<String>,
}

/// `%.12g`: twelve significant digits, trailing zeros removed.
pub fn fmt_g(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..DIGITS).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Value rounded to the printed precision, for JSON output.
fn rounded(x: f64) -> serde_json::Value {
    match fmt_g(x).parse::<f64>() {
        Ok(v) if v.is_finite() => serde_json::json!(v),
        _ => serde_json::Value::Null,
    }
}

pub fn render(report: &Report, config: &RunConfig, format: Format) -> Result<Vec<u8>, CliError> {
    let hash = config.hash();
    match format {
        Format::Csv => {
            let mut out = Vec::new();
            writeln!(out, "# config {}", config.canonical_json())?;
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut out);
            w.write_record([
                "experiment",
                "settings",
                "value",
                "stderr",
                "shots",
                "valid_fraction",
                "engine",
                "config_hash",
            ])
            .map_err(csv_err)?;
            for r in &report.records {
                w.write_record([
                    r.experiment.as_str(),
                    r.settings.as_str(),
                    &fmt_g(r.value),
                    &fmt_g(r.stderr),
                    &r.shots.to_string(),
                    &fmt_g(r.valid_fraction),
                    r.engine.as_str(),
                    &hash,
                ])
                .map_err(csv_err)?;
            }
            w.flush()?;
            drop(w);
            Ok(out)
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Row<'a> {
                experiment: &'a str,
                settings: &'a str,
                value: serde_json::Value,
                stderr: serde_json::Value,
                shots: u64,
                valid_fraction: serde_json::Value,
                engine: &'a str,
                config_hash: &'a str,
            }
            let rows: Vec<Row> = report
                .records
                .iter()
                .map(|r| Row {
                    experiment: &r.experiment,
                    settings: &r.settings,
                    value: rounded(r.value),
                    stderr: rounded(r.stderr),
                    shots: r.shots,
                    valid_fraction: rounded(r.valid_fraction),
                    engine: &r.engine,
                    config_hash: &hash,
                })
                .collect();
            let doc = serde_json::json!({
                "config": config,
                "config_hash": hash,
                "records": rows,
                "notes": report.notes,
            });
            let mut out = serde_json::to_vec_pretty(&doc).map_err(|e| CliError::Internal(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Internal(e.to_string())
}

/// Writes the whole file or nothing.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_g(0.0), "0");
        assert_eq!(fmt_g(1.0), "1");
        assert_eq!(fmt_g(-1.0), "-1");
        assert_eq!(fmt_g(0.75), "0.75");
        assert_eq!(fmt_g(2.0 / 3.0), "0.666666666667");
        assert_eq!(fmt_g(32.0), "32");
        assert_eq!(fmt_g(1e-5), "1e-05");
        assert_eq!(fmt_g(1.234e-7), "1.234e-07");
        assert_eq!(fmt_g(123456789012345.0), "1.23456789012e+14");
        assert_eq!(fmt_g(0.999000249875), "0.999000249875");
        assert_eq!(fmt_g(5.487997256516), "5.48799725652");
    }
}
