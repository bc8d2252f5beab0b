//! The physical-constants table.
//!
//! A copy ships inside the crate (`data/constants.toml`); [`Constants::load`]
//! honors the `LWI_CONSTANTS` environment variable.

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable naming an alternative constants file.
pub const CONSTANTS_ENV: &str = "LWI_CONSTANTS";

/// Table format version understood by this build.
pub const TABLE_VERSION: u32 = 1;

const EMBEDDED: &str = include_str!("../data/constants.toml");

#[derive(Debug, Error)]
pub enum ConstantsError {
    #[error("cannot read constants table {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed constants table: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("constants table version {found} is not supported (expected {TABLE_VERSION})")]
    Version { found: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physical {
    /// m/s
    pub speed_of_light: f64,
    /// J/K
    pub boltzmann: f64,
    /// Pa per torr
    pub torr: f64,
}

/// `log10(P/torr) = a + b/T + c·T + d·log10(T)` on `[t_min, t_max]` K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaporPressureFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl VaporPressureFit {
    /// Vapor pressure in torr; no range check.
    pub fn pressure_torr(&self, temperature: f64) -> f64 {
        let t = temperature;
        10f64.powf(self.a + self.b / t + self.c * t + self.d * t.log10())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Species {
    /// kg
    pub mass: f64,
    /// m
    pub d1_wavelength: f64,
    /// MHz
    pub d1_natural_linewidth: f64,
    pub vapor_pressure: VaporPressureFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    pub version: u32,
    pub physical: Physical,
    pub rb87: Species,
}

impl Constants {
    pub fn parse(text: &str) -> Result<Self, ConstantsError> {
        let c: Constants = toml::from_str(text)?;
        if c.version != TABLE_VERSION {
            return Err(ConstantsError::Version { found: c.version });
        }
        Ok(c)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConstantsError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConstantsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// The table compiled into the crate.
    pub fn embedded() -> &'static Constants {
        static CELL: OnceLock<Constants> = OnceLock::new();
        CELL.get_or_init(|| Constants::parse(EMBEDDED).expect("embedded constants table is valid"))
    }

    /// The table named by `LWI_CONSTANTS`, or the embedded one.
    pub fn load() -> Result<Self, ConstantsError> {
        match std::env::var_os(CONSTANTS_ENV) {
            Some(p) => Self::from_path(Path::new(&p)),
            None => Ok(*Self::embedded()),
        }
    }

    pub fn embedded_text() -> &'static str {
        EMBEDDED
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_parses() {
        let c = Constants::embedded();
        assert_eq!(c.physical.speed_of_light, 299_792_458.0);
        assert_eq!(c.rb87.d1_natural_linewidth, 5.75);
    }

    #[test]
    fn rejects_other_versions() {
        let text = EMBEDDED.replace("version = 1", "version = 7");
        assert!(matches!(
            Constants::parse(&text),
            Err(ConstantsError::Version { found: 7 })
        ));
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = EMBEDDED.replace("torr = ", "bar = 1.0\ntorr = ");
        let err = Constants::parse(&text).unwrap_err().to_string();
        assert!(err.contains("bar"), "{err}");
    }
}
