//! Configuration-file value types shared by kernel, model, and run descriptions,
//! and the run configuration itself.

use std::path::PathBuf;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::scenarios::{preset, ScenarioSpec};

/// A complex number written as a real scalar or a `[re, im]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexValue {
    Real(f64),
    Pair([f64; 2]),
}

impl ComplexValue {
    pub fn value(&self) -> Complex64 {
        match *self {
            ComplexValue::Real(x) => Complex64::new(x, 0.0),
            ComplexValue::Pair([re, im]) => Complex64::new(re, im),
        }
    }

    pub fn from_complex(z: Complex64) -> Self {
        if z.im == 0.0 {
            ComplexValue::Real(z.re)
        } else {
            ComplexValue::Pair([z.re, z.im])
        }
    }
}

/// A matrix given by name ("sigma_z"), by name with a complex factor, or as
/// nested row arrays of real and (optional) imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Named(String),
    Scaled {
        name: String,
        factor: ComplexValue,
    },
    Explicit {
        re: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        im: Option<Vec<Vec<f64>>>,
    },
}

impl MatrixSpec {
    pub fn named(name: &str) -> Self {
        MatrixSpec::Named(name.to_string())
    }

    pub fn scaled(name: &str, factor: Complex64) -> Self {
        MatrixSpec::Scaled { name: name.to_string(), factor: ComplexValue::from_complex(factor) }
    }

    pub fn from_matrix(m: &CMat) -> Self {
        let re = (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].re).collect()).collect();
        let has_im = m.iter().any(|z| z.im != 0.0);
        let im = has_im.then(|| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].im).collect()).collect());
        MatrixSpec::Explicit { re, im }
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        let m = match self {
            MatrixSpec::Named(name) => lookup(name)?,
            MatrixSpec::Scaled { name, factor } => lookup(name)? * factor.value(),
            MatrixSpec::Explicit { re, im } => {
                let rows = re.len();
                let cols = re.first().map_or(0, |r| r.len());
                if rows == 0 || cols == 0 || re.iter().any(|r| r.len() != cols) {
                    return Err(Error::Config("matrix 're' must be a non-empty rectangular array".into()));
                }
                if let Some(im) = im {
                    if im.len() != rows || im.iter().any(|r| r.len() != cols) {
                        return Err(Error::Config("matrix 'im' must match the shape of 're'".into()));
                    }
                }
                CMat::from_fn(rows, cols, |i, j| Complex64::new(re[i][j], im.as_ref().map_or(0.0, |m| m[i][j])))
            }
        };
        linalg::ensure_finite(&m, "matrix entry")?;
        Ok(m)
    }
}

fn lookup(name: &str) -> Result<CMat> {
    linalg::named_operator(name).ok_or_else(|| Error::Config(format!("unknown matrix name '{name}'")))
}

/// Current configuration schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// A scenario given by preset name or written out in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Preset(String),
    Inline(Box<ScenarioSpec>),
}

/// One batch run: which scenario, how many trajectories, and what to check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub scenario: ScenarioRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    /// Ensemble size; the scenario's default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Integration step override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Checks to run; the scenario's list when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn for_preset(name: &str) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            scenario: ScenarioRef::Preset(name.to_string()),
            variant: None,
            ensemble: None,
            seed: 0,
            dt: None,
            out: None,
            checks: vec![],
            threads: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(Self::explain(text, e)))?;
        c.validate()?;
        Ok(c)
    }

    /// Untagged-enum errors say little; re-parse an inline scenario for a precise message.
    fn explain(text: &str, e: serde_json::Error) -> String {
        let inline = serde_json::from_str::<serde_json::Value>(text)
            .ok()
            .and_then(|v| v.get("scenario").filter(|s| s.is_object()).cloned());
        match inline.map(serde_json::from_value::<ScenarioSpec>) {
            Some(Err(inner)) => format!("inline scenario: {inner}"),
            _ => e.to_string(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported schema {}, expected {SCHEMA_VERSION}", self.schema)));
        }
        if self.ensemble.is_some_and(|m| m < 2) {
            return Err(Error::Config("ensemble must be at least 2".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if self.dt.is_some_and(|dt| !(dt.is_finite() && dt > 0.0)) {
            return Err(Error::Config("dt must be positive".into()));
        }
        Ok(())
    }

    /// The scenario with the variant and step override applied.
    pub fn resolve(&self) -> Result<ScenarioSpec> {
        let mut spec = match &self.scenario {
            ScenarioRef::Preset(name) => preset(name)?,
            ScenarioRef::Inline(s) => (**s).clone(),
        };
        if let Some(v) = &self.variant {
            spec = spec.variant(v)?;
        }
        if let Some(dt) = self.dt {
            spec.dt = dt;
        }
        Ok(spec)
    }

    pub fn ensemble_size(&self, spec: &ScenarioSpec) -> usize {
        self.ensemble.unwrap_or(spec.ensemble)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::PRESET_NAMES;

    #[test]
    fn run_config_round_trip() {
        let mut c = RunConfig::for_preset("dephasing_qubit");
        c.ensemble = Some(20000);
        c.seed = 7;
        c.checks = vec!["trace".into()];
        c.threads = Some(2);
        c.out = Some(PathBuf::from("out"));
        let text = c.to_json().unwrap();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json().unwrap(), text);
        for name in PRESET_NAMES {
            let mut c = RunConfig::for_preset(name);
            c.scenario = ScenarioRef::Inline(Box::new(preset(name).unwrap()));
            let back = RunConfig::from_json(&c.to_json().unwrap()).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.resolve().unwrap(), preset(name).unwrap());
        }
    }

    #[test]
    fn run_config_rejects_bad_input() {
        assert!(RunConfig::from_json(r#"{"schema": 2, "scenario": "dephasing_qubit"}"#).is_err());
        assert!(RunConfig::from_json(r#"{"schema": 1, "scenario": "dephasing_qubit", "ensemble": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"schema": 1, "scenario": "dephasing_qubit", "bogus": 1}"#).is_err());
        let c = RunConfig::from_json(r#"{"schema": 1, "scenario": "nope"}"#).unwrap();
        assert!(matches!(c.resolve(), Err(Error::UnknownPreset(_))));
        let c = RunConfig::from_json(r#"{"schema": 1, "scenario": "eta_sweep", "variant": "ratio-0.50", "dt": 0.02}"#)
            .unwrap();
        let s = c.resolve().unwrap();
        assert_eq!(s.dt, 0.02);
        assert!(s.variants.is_empty());
    }

    #[test]
    fn matrix_specs() {
        assert_eq!(MatrixSpec::named("sigma_z").to_matrix().unwrap(), linalg::sigma_z());
        let m = MatrixSpec::scaled("sigma_minus", Complex64::new(0.0, 1.0)).to_matrix().unwrap();
        assert_eq!(m, linalg::sigma_minus() * Complex64::new(0.0, 1.0));
        assert_eq!(MatrixSpec::from_matrix(&m).to_matrix().unwrap(), m);
        assert!(MatrixSpec::named("sigma_w").to_matrix().is_err());
        let ragged: MatrixSpec = serde_json::from_str(r#"{"re": [[1, 0], [0]]}"#).unwrap();
        assert!(ragged.to_matrix().is_err());
    }
}
