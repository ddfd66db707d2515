//! Flat `key = value` run configuration.
//!
//! ```text
//! # model, original scale
//! model.a = 0.2
//! model.b = 0.5
//! model.sigma = 1.2
//! model.x = 2
//! model.T = 5
//! model.k_tilde = 5
//! constraint.kind = all            # or a comma list: strict, var, es_p
//! constraint.C_tilde = 0
//! constraint.epsilon = 0.01
//! constraint.nu = 0.1
//! simulation.n_steps = 1000
//! simulation.seeds = 2020, 2015, 1994, 2
//! simulation.mc_samples = 100000
//! output.dir = out
//! ```
//!
//! Missing keys keep their defaults, which are the parameters above. Unknown
//! or repeated keys are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::design::{ConstraintSpec, Regime};
use crate::kernel::ModelParams;
use crate::oracle::MIN_SAMPLES;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("field `{field}`: {message}")]
    Invalid {
        field: &'static str,
        message: String,
    },
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub x: f64,
    pub horizon: f64,
    pub k_tilde: f64,
    pub regimes: Vec<Regime>,
    pub c_tilde: f64,
    pub epsilon: f64,
    pub nu: f64,
    pub n_steps: usize,
    pub seeds: Vec<u64>,
    pub mc_samples: usize,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            a: 0.2,
            b: 0.5,
            sigma: 1.2,
            x: 2.0,
            horizon: 5.0,
            k_tilde: 5.0,
            regimes: Regime::ALL.to_vec(),
            c_tilde: 0.0,
            epsilon: 0.01,
            nu: 0.1,
            n_steps: 1000,
            seeds: vec![2020, 2015, 1994, 2],
            mc_samples: 100_000,
            output_dir: PathBuf::from("out"),
        }
    }
}

const KEYS: [&str; 14] = [
    "model.a",
    "model.b",
    "model.sigma",
    "model.x",
    "model.T",
    "model.k_tilde",
    "constraint.kind",
    "constraint.C_tilde",
    "constraint.epsilon",
    "constraint.nu",
    "simulation.n_steps",
    "simulation.seeds",
    "simulation.mc_samples",
    "output.dir",
];

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

fn parse_f64(field: &'static str, value: &str) -> Result<f64, ConfigError> {
    value
        .parse()
        .map_err(|_| invalid(field, format!("`{value}` is not a number")))
}

fn parse_usize(field: &'static str, value: &str) -> Result<usize, ConfigError> {
    value
        .parse()
        .map_err(|_| invalid(field, format!("`{value}` is not a nonnegative integer")))
}

/// Parses a comma-separated regime list, or `all`.
pub fn parse_regimes(field: &'static str, value: &str) -> Result<Vec<Regime>, ConfigError> {
    if value.trim().eq_ignore_ascii_case("all") {
        return Ok(Regime::ALL.to_vec());
    }
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let regime: Regime = item.parse().map_err(|e: String| invalid(field, e))?;
        if !out.contains(&regime) {
            out.push(regime);
        }
    }
    if out.is_empty() {
        return Err(invalid(field, "no regime given"));
    }
    Ok(out)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.trim().to_string(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(&known) = KEYS.iter().find(|&&k| k == key) else {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            };
            if seen.contains(&known) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
            seen.push(known);
            match known {
                "model.a" => cfg.a = parse_f64(known, value)?,
                "model.b" => cfg.b = parse_f64(known, value)?,
                "model.sigma" => cfg.sigma = parse_f64(known, value)?,
                "model.x" => cfg.x = parse_f64(known, value)?,
                "model.T" => cfg.horizon = parse_f64(known, value)?,
                "model.k_tilde" => cfg.k_tilde = parse_f64(known, value)?,
                "constraint.kind" => cfg.regimes = parse_regimes(known, value)?,
                "constraint.C_tilde" => cfg.c_tilde = parse_f64(known, value)?,
                "constraint.epsilon" => cfg.epsilon = parse_f64(known, value)?,
                "constraint.nu" => cfg.nu = parse_f64(known, value)?,
                "simulation.n_steps" => cfg.n_steps = parse_usize(known, value)?,
                "simulation.seeds" => {
                    cfg.seeds = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| {
                            s.parse()
                                .map_err(|_| invalid(known, format!("`{s}` is not a seed")))
                        })
                        .collect::<Result<_, _>>()?
                }
                "simulation.mc_samples" => cfg.mc_samples = parse_usize(known, value)?,
                "output.dir" => {
                    if value.is_empty() {
                        return Err(invalid(known, "empty path"));
                    }
                    cfg.output_dir = PathBuf::from(value)
                }
                _ => unreachable!("key table and match arms agree"),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Re-checks every model and constraint invariant.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let params = self.params()?;
        for &regime in &self.regimes {
            self.constraint(regime).validate(&params).map_err(|e| {
                let field = match regime {
                    Regime::Var => "constraint.epsilon",
                    Regime::EsP | Regime::EsQ => "constraint.nu",
                    _ => "constraint.C_tilde",
                };
                invalid(field, e.to_string())
            })?;
        }
        if self.regimes.is_empty() {
            return Err(invalid("constraint.kind", "no regime given"));
        }
        if self.n_steps == 0 {
            return Err(invalid("simulation.n_steps", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("simulation.seeds", "at least one seed is required"));
        }
        if self.mc_samples < MIN_SAMPLES {
            return Err(invalid(
                "simulation.mc_samples",
                format!("must be at least {MIN_SAMPLES}"),
            ));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ModelParams, ConfigError> {
        ModelParams::new(
            self.a,
            self.b,
            self.sigma,
            self.x,
            self.horizon,
            self.k_tilde,
        )
        .map_err(|e| {
            let field = match &e {
                crate::kernel::ModelError::NotPositive { name: "sigma", .. } => "model.sigma",
                crate::kernel::ModelError::NotPositive { .. } => "model.T",
                crate::kernel::ModelError::DriftOrdering { .. } => "model.a",
                _ => "model",
            };
            invalid(field, e.to_string())
        })
    }

    pub fn constraint(&self, regime: Regime) -> ConstraintSpec {
        ConstraintSpec::for_regime(regime, self.c_tilde, self.epsilon, self.nu)
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let kinds = if self.regimes == Regime::ALL {
            "all".to_string()
        } else {
            self.regimes
                .iter()
                .map(|r| r.name())
                .collect::<Vec<_>>()
                .join(", ")
        };
        let seeds = self
            .seeds
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(s, "model.a = {:?}", self.a);
        let _ = writeln!(s, "model.b = {:?}", self.b);
        let _ = writeln!(s, "model.sigma = {:?}", self.sigma);
        let _ = writeln!(s, "model.x = {:?}", self.x);
        let _ = writeln!(s, "model.T = {:?}", self.horizon);
        let _ = writeln!(s, "model.k_tilde = {:?}", self.k_tilde);
        let _ = writeln!(s, "constraint.kind = {kinds}");
        let _ = writeln!(s, "constraint.C_tilde = {:?}", self.c_tilde);
        let _ = writeln!(s, "constraint.epsilon = {:?}", self.epsilon);
        let _ = writeln!(s, "constraint.nu = {:?}", self.nu);
        let _ = writeln!(s, "simulation.n_steps = {}", self.n_steps);
        let _ = writeln!(s, "simulation.seeds = {seeds}");
        let _ = writeln!(s, "simulation.mc_samples = {}", self.mc_samples);
        let _ = writeln!(s, "output.dir = {}", self.output_dir.display());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
        assert_eq!(
            RunConfig::parse("# nothing\n\n   \n").unwrap(),
            RunConfig::default()
        );
    }

    #[test]
    fn default_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn parses_overrides_and_comments() {
        let cfg = RunConfig::parse(
            "model.x = 2.5  # more capital\nconstraint.kind = var, es_q\nsimulation.seeds = 7\noutput.dir = /tmp/r\n",
        )
        .unwrap();
        assert_eq!(cfg.x, 2.5);
        assert_eq!(cfg.regimes, vec![Regime::Var, Regime::EsQ]);
        assert_eq!(cfg.seeds, vec![7]);
        assert_eq!(cfg.output_dir, PathBuf::from("/tmp/r"));
    }

    #[test]
    fn rejects_bad_input() {
        let cases = [
            ("model.q = 1", "unknown key"),
            ("model.a 0.2", "expected `key = value`"),
            ("model.a = 0.2\nmodel.a = 0.3", "given twice"),
            ("model.a = fast", "model.a"),
            ("constraint.epsilon = 1.5", "constraint.epsilon"),
            ("constraint.nu = -1", "constraint.nu"),
            ("model.sigma = 0", "model.sigma"),
            ("model.a = 0.6", "model.a"),
            ("constraint.kind = cvar", "constraint.kind"),
            ("simulation.n_steps = 0", "simulation.n_steps"),
            ("simulation.mc_samples = 10", "simulation.mc_samples"),
        ];
        for (text, needle) in cases {
            let err = RunConfig::parse(text).unwrap_err().to_string();
            assert!(err.contains(needle), "{text:?}: {err}");
        }
    }
}
