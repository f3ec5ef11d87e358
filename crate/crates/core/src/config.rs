//! TOML run configuration.
//!
//! ```toml
//! [system]
//! kind = "pendulum"
//! length = 1.0
//! initial_angle = 0.785
//!
//! [integrator]
//! scheme = "dirac2"
//! h = 0.002
//! target_periods = 100
//!
//! [output]
//! trajectory = "traj.csv"
//! ```
//!
//! Omitted physical parameters take the defaults of
//! [`PendulumScenario`](crate::harness::PendulumScenario). Unknown keys are
//! rejected everywhere.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{PendulumScenario, ZieglerScenario};
use crate::integrators::SchemeId;
use crate::models::{MechanicalSystem, ModelError, State};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

impl ConfigError {
    fn invalid(key: &str, reason: impl Into<String>) -> Self {
        Self::Invalid { key: key.to_string(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SystemConfig {
    Pendulum(PendulumConfig),
    Ziegler(ZieglerConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendulumConfig {
    #[serde(default = "defaults::mass")]
    pub mass: f64,
    #[serde(default = "defaults::gravity")]
    pub gravity: f64,
    #[serde(default = "defaults::length")]
    pub length: f64,
    /// Release angle from the downward vertical (rad).
    #[serde(default = "defaults::angle")]
    pub initial_angle: f64,
    #[serde(default)]
    pub initial_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZieglerConfig {
    pub lengths: Vec<f64>,
    pub masses: Vec<f64>,
    pub stiffness: f64,
    pub load: f64,
    /// Joint angles from the upward vertical (rad).
    pub initial_angles: Vec<f64>,
    /// Defaults to rest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_rates: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub scheme: String,
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_periods: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svg: Option<PathBuf>,
}

mod defaults {
    use crate::harness::PendulumScenario;

    pub fn mass() -> f64 {
        PendulumScenario::default().mass
    }
    pub fn gravity() -> f64 {
        PendulumScenario::default().gravity
    }
    pub fn length() -> f64 {
        PendulumScenario::default().length
    }
    pub fn angle() -> f64 {
        PendulumScenario::default().initial_angle
    }
}

/// How long to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Duration {
    Steps(usize),
    Periods(usize),
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(1);
        ConfigError::Syntax { line, message: e.message().to_string() }
    })?;
    config.validate()?;
    Ok(config)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn positive(key: &str, x: f64) -> Result<(), ConfigError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(key, format!("must be positive and finite, got {x}")))
    }
}

fn finite(key: &str, x: f64) -> Result<(), ConfigError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::invalid(key, format!("must be finite, got {x}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.system.validate()?;
        self.integrator.validate()
    }

    pub fn scheme(&self) -> SchemeId {
        SchemeId::from_str(&self.integrator.scheme).expect("validated scheme name")
    }

    pub fn duration(&self) -> Duration {
        match (self.integrator.steps, self.integrator.target_periods) {
            (Some(s), _) => Duration::Steps(s),
            (None, Some(p)) => Duration::Periods(p),
            (None, None) => unreachable!("validated duration"),
        }
    }

    /// Serializes back to TOML text accepted by [`parse_config`].
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    /// Builds the mechanical system and its consistent initial state.
    pub fn build(&self) -> Result<(MechanicalSystem, State), ModelError> {
        let h = self.integrator.h;
        match &self.system {
            SystemConfig::Pendulum(c) => {
                let sc = PendulumScenario {
                    mass: c.mass,
                    gravity: c.gravity,
                    length: c.length,
                    initial_angle: c.initial_angle,
                    initial_rate: c.initial_rate,
                    h,
                };
                Ok((sc.system()?, sc.initial_state()?))
            }
            SystemConfig::Ziegler(c) => {
                let sc = ZieglerScenario {
                    lengths: c.lengths.clone(),
                    masses: c.masses.clone(),
                    stiffness: c.stiffness,
                    load: c.load,
                    initial_angles: c.initial_angles.clone(),
                    initial_rates: c
                        .initial_rates
                        .clone()
                        .unwrap_or_else(|| vec![0.0; c.lengths.len()]),
                    h,
                };
                Ok((sc.system()?, sc.initial_state()?))
            }
        }
    }
}

impl SystemConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        match self {
            SystemConfig::Pendulum(c) => {
                positive("mass", c.mass)?;
                positive("gravity", c.gravity)?;
                positive("length", c.length)?;
                finite("initial_angle", c.initial_angle)?;
                finite("initial_rate", c.initial_rate)
            }
            SystemConfig::Ziegler(c) => {
                let n = c.lengths.len();
                if n == 0 {
                    return Err(ConfigError::invalid("lengths", "at least one link is required"));
                }
                for (key, list) in [
                    ("masses", &c.masses),
                    ("initial_angles", &c.initial_angles),
                ]
                .into_iter()
                .chain(c.initial_rates.as_ref().map(|r| ("initial_rates", r)))
                {
                    if list.len() != n {
                        return Err(ConfigError::invalid(
                            key,
                            format!("expected {n} entries, got {}", list.len()),
                        ));
                    }
                }
                c.lengths.iter().try_for_each(|&x| positive("lengths", x))?;
                c.masses.iter().try_for_each(|&x| positive("masses", x))?;
                c.initial_angles.iter().try_for_each(|&x| finite("initial_angles", x))?;
                if let Some(r) = &c.initial_rates {
                    r.iter().try_for_each(|&x| finite("initial_rates", x))?;
                }
                if !(c.stiffness.is_finite() && c.stiffness >= 0.0) {
                    return Err(ConfigError::invalid("stiffness", "must be non-negative and finite"));
                }
                finite("load", c.load)
            }
        }
    }
}

impl IntegratorConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        SchemeId::from_str(&self.scheme).map_err(|e| ConfigError::invalid("scheme", e.to_string()))?;
        positive("h", self.h)?;
        match (self.steps, self.target_periods) {
            (Some(_), Some(_)) | (None, None) => Err(ConfigError::invalid(
                "steps",
                "exactly one of `steps` and `target_periods` must be given",
            )),
            (Some(0), None) => Err(ConfigError::invalid("steps", "must be at least 1")),
            (None, Some(0)) => Err(ConfigError::invalid("target_periods", "must be at least 1")),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[system]
kind = "pendulum"

[integrator]
scheme = "dirac2"
h = 0.002
target_periods = 100
"#;

    fn key_of(err: ConfigError) -> String {
        match err {
            ConfigError::Invalid { key, .. } => key,
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_pendulum() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.scheme(), SchemeId::Dirac2);
        assert_eq!(c.duration(), Duration::Periods(100));
        assert_eq!(c.system, SystemConfig::Pendulum(PendulumConfig {
            mass: 1.0,
            gravity: 9.81,
            length: 1.0,
            initial_angle: std::f64::consts::FRAC_PI_4,
            initial_rate: 0.0,
        }));
        assert_eq!(c.output, OutputConfig::default());
    }

    #[test]
    fn unknown_scheme_names_the_key() {
        let text = MINIMAL.replace("dirac2", "verlet");
        assert_eq!(key_of(parse_config(&text).unwrap_err()), "scheme");
    }

    #[test]
    fn negative_timestep_names_the_key() {
        let text = MINIMAL.replace("0.002", "-1.0");
        assert_eq!(key_of(parse_config(&text).unwrap_err()), "h");
    }

    #[test]
    fn both_durations_rejected() {
        let text = MINIMAL.replace("target_periods = 100", "target_periods = 100\nsteps = 5");
        assert_eq!(key_of(parse_config(&text).unwrap_err()), "steps");
        let text = MINIMAL.replace("target_periods = 100", "");
        assert_eq!(key_of(parse_config(&text).unwrap_err()), "steps");
    }

    #[test]
    fn unknown_keys_rejected_with_line() {
        let text = MINIMAL.replace("kind = \"pendulum\"", "kind = \"pendulum\"\nlenght = 2.0");
        match parse_config(&text).unwrap_err() {
            ConfigError::Syntax { line, message } => {
                assert!(message.contains("lenght"), "{message}");
                assert!((2..=4).contains(&line), "line {line}");
            }
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("h = 0.002", "h = 0.002\ntheta = 1");
        assert!(matches!(parse_config(&text), Err(ConfigError::Syntax { .. })));
    }

    #[test]
    fn syntax_error_reports_line() {
        let text = "[system]\nkind = \"pendulum\"\n\n[integrator\nscheme = 1\n";
        match parse_config(text).unwrap_err() {
            ConfigError::Syntax { line, .. } => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ziegler_lengths_must_agree() {
        let text = r#"
[system]
kind = "ziegler"
lengths = [1.0, 1.0]
masses = [1.0]
stiffness = 1.0
load = 0.25
initial_angles = [0.1, 0.0]

[integrator]
scheme = "dirac1"
h = 0.001
steps = 10
"#;
        assert_eq!(key_of(parse_config(text).unwrap_err()), "masses");
        let ok = text.replace("masses = [1.0]", "masses = [1.0, 2.0]");
        let c = parse_config(&ok).unwrap();
        let (system, state) = c.build().unwrap();
        assert_eq!(system.dim(), 4);
        assert_eq!(state.q.len(), 4);
    }

    #[test]
    fn serialize_round_trip() {
        let mut c = parse_config(MINIMAL).unwrap();
        c.output.svg = Some("swept.svg".into());
        assert_eq!(parse_config(&c.to_toml()).unwrap(), c);
    }
}
