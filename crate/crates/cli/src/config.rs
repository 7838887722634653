use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Verify,
    PoissonSweep,
    NormalDemo,
    PairDemo,
    ProcessDemo,
    ConcentrationDemo,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Verify => "verify",
            Experiment::PoissonSweep => "poisson_sweep",
            Experiment::NormalDemo => "normal_demo",
            Experiment::PairDemo => "pair_demo",
            Experiment::ProcessDemo => "process_demo",
            Experiment::ConcentrationDemo => "concentration_demo",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub experiment: Experiment,
    pub n: Vec<usize>,
    pub p: Vec<f64>,
    pub lambda: Vec<f64>,
    pub seed: u64,
    pub truncation_eps: f64,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub jobs: usize,
    /// Multiplies every certified bound before the margin is taken. Only
    /// useful to exercise the failure path; 1 in normal use.
    pub bound_scale: f64,
}

impl SweepConfig {
    /// Default grids per experiment.
    pub fn defaults(experiment: Experiment) -> Self {
        let (n, p, lambda): (Vec<usize>, Vec<f64>, Vec<f64>) = match experiment {
            Experiment::Verify => (vec![], vec![], vec![0.5, 1.0, 2.0, 5.0, 10.0]),
            Experiment::PoissonSweep => (vec![1, 10, 50, 100, 200], vec![0.01, 0.02, 0.05, 0.1], vec![]),
            Experiment::NormalDemo => (vec![25, 50, 100, 200, 400], vec![], vec![]),
            Experiment::PairDemo => (vec![4, 10, 25, 100], vec![], vec![]),
            Experiment::ProcessDemo => (vec![1, 2, 4, 6, 10, 16], vec![0.05, 0.1, 0.2], vec![]),
            Experiment::ConcentrationDemo => (vec![25, 100, 400], vec![], vec![]),
        };
        SweepConfig {
            experiment,
            n,
            p,
            lambda,
            seed: 0x5eed,
            truncation_eps: 1e-12,
            format: Format::Csv,
            out: None,
            jobs: 0,
            bound_scale: 1.0,
        }
    }

    /// Sets one key from a config file or flag value.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "n" => self.n = parse_list(&key, value)?,
            "p" => self.p = parse_list(&key, value)?,
            "lambda" => self.lambda = parse_list(&key, value)?,
            "seed" => self.seed = parse_one(&key, value)?,
            "truncation_eps" => self.truncation_eps = parse_one(&key, value)?,
            "jobs" => self.jobs = parse_one(&key, value)?,
            "bound_scale" => self.bound_scale = parse_one(&key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "format" => {
                self.format = Format::from_str(value, true).map_err(|_| bad(format!("unknown format '{value}'")))?
            }
            "experiment" => {
                let e = Experiment::from_str(&value.replace('_', "-"), true)
                    .map_err(|_| bad(format!("unknown experiment '{value}'")))?;
                if e != self.experiment {
                    return Err(bad(format!(
                        "config file is for '{e}' but '{}' was requested",
                        self.experiment
                    )));
                }
            }
            other => return Err(bad(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.truncation_eps > 0.0 && self.truncation_eps <= 1e-6) {
            return Err(bad(format!(
                "truncation_eps = {} must lie in (0, 1e-6]",
                self.truncation_eps
            )));
        }
        if !(self.bound_scale > 0.0 && self.bound_scale.is_finite()) {
            return Err(bad("bound_scale must be positive"));
        }
        let needs_n = !matches!(self.experiment, Experiment::Verify);
        let needs_p = matches!(self.experiment, Experiment::PoissonSweep | Experiment::ProcessDemo);
        if needs_n && self.n.is_empty() {
            return Err(bad(format!("{} needs a nonempty n grid", self.experiment)));
        }
        if needs_p && self.p.is_empty() {
            return Err(bad(format!("{} needs a nonempty p grid", self.experiment)));
        }
        if self.experiment == Experiment::Verify && self.lambda.is_empty() {
            return Err(bad("verify needs a nonempty lambda grid"));
        }
        if let Some(p) = self.p.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(bad(format!("p = {p} outside [0, 1]")));
        }
        if let Some(l) = self.lambda.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(bad(format!("lambda = {l} must be positive")));
        }
        if self.n.contains(&0) {
            return Err(bad("n must be positive"));
        }
        Ok(())
    }

    /// The settings that determine the output, in a stable order.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "experiment": self.experiment.name(),
            "n": self.n,
            "p": self.p,
            "lambda": self.lambda,
            "seed": self.seed,
            "truncation_eps": self.truncation_eps,
            "format": self.format.name(),
            "bound_scale": self.bound_scale,
        })
    }
}

fn parse_one<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| bad(format!("cannot parse {key} = '{value}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
    let value = value.trim_start_matches('[').trim_end_matches(']');
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_one(key, v.trim())).collect()
}

/// Reads `key = value` lines (with `#` comments) or a flat JSON object.
pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    parse_config_text(&text)
}

pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    if text.trim_start().starts_with('{') {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| bad(format!("invalid JSON config: {e}")))?;
        let object = value.as_object().ok_or_else(|| bad("JSON config must be an object"))?;
        return object
            .iter()
            .map(|(k, v)| Ok((k.clone(), json_scalar(k, v)?)))
            .collect();
    }
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| bad(format!("expected key = value, got '{l}'")))
        })
        .collect()
}

fn json_scalar(key: &str, v: &serde_json::Value) -> Result<String, ConfigError> {
    use serde_json::Value;
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Array(items) => items
            .iter()
            .map(|i| match i {
                Value::Number(n) => Ok(n.to_string()),
                _ => Err(bad(format!("{key}: list entries must be numbers"))),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(|v| v.join(",")),
        _ => Err(bad(format!("{key}: unsupported value {v}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_and_json_agree() {
        let kv = parse_config_text("n = 10, 50 # grid\np=0.1\nseed=7\n").unwrap();
        let js = parse_config_text(r#"{"n": [10, 50], "p": [0.1], "seed": 7}"#).unwrap();
        let mut a = SweepConfig::defaults(Experiment::PoissonSweep);
        let mut b = a.clone();
        for (k, v) in &kv {
            a.apply(k, v).unwrap();
        }
        for (k, v) in &js {
            b.apply(k, v).unwrap();
        }
        assert_eq!(a, b);
        assert_eq!(a.n, vec![10, 50]);
        assert_eq!(a.seed, 7);
    }

    #[test]
    fn validation() {
        let mut c = SweepConfig::defaults(Experiment::Verify);
        assert!(c.validate().is_ok());
        c.truncation_eps = 1e-3;
        assert!(c.validate().is_err());
        let mut s = SweepConfig::defaults(Experiment::PoissonSweep);
        s.apply("n", "").unwrap();
        assert!(s.validate().is_err());
        assert!(s.apply("colour", "blue").is_err());
        assert!(s.apply("experiment", "pair_demo").is_err());
        assert!(s.apply("experiment", "poisson_sweep").is_ok());
    }
}
