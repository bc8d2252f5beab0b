//! Run configuration: scenario presets overlaid with user overrides.
//!
//! Configs are TOML. Every scenario has a complete preset; a user file or
//! `key=value` assignments only name what they change. The resolved config,
//! constants table included, is self-contained and parses back to the same
//! value.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::bloch::{validate_rates, DriveConfig, RateSet};
use crate::cavity::{CavitySpec, GainModel};
use crate::constants::{Constants, ConstantsError};
use crate::ode::{Method, StepControl};
use crate::roots::{grid, Spacing};
use crate::vapor::{CollisionModel, DensityTemplate, VaporConditions};

const DEFAULTS: &str = include_str!("../presets/defaults.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Fig3PumpSweep,
    Fig4DensitySweep,
    GainMap,
    SinglePoint,
    Transient,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Fig3PumpSweep,
        Scenario::Fig4DensitySweep,
        Scenario::GainMap,
        Scenario::SinglePoint,
        Scenario::Transient,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Fig3PumpSweep => "fig3-pump-sweep",
            Scenario::Fig4DensitySweep => "fig4-density-sweep",
            Scenario::GainMap => "gain-map",
            Scenario::SinglePoint => "single-point",
            Scenario::Transient => "transient",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Scenario::Fig3PumpSweep => "steady intensity against coupling power",
            Scenario::Fig4DensitySweep => {
                "steady intensity against atomic density, with optical depth"
            }
            Scenario::GainMap => "small-signal gain over Rabi frequency and density",
            Scenario::SinglePoint => "steady state, gain and inversion at one operating point",
            Scenario::Transient => "time evolution from the unpumped ground state",
        }
    }

    fn overlay(self) -> &'static str {
        match self {
            Scenario::Fig3PumpSweep => include_str!("../presets/fig3-pump-sweep.toml"),
            Scenario::Fig4DensitySweep => include_str!("../presets/fig4-density-sweep.toml"),
            Scenario::GainMap => include_str!("../presets/gain-map.toml"),
            Scenario::SinglePoint => include_str!("../presets/single-point.toml"),
            Scenario::Transient => include_str!("../presets/transient.toml"),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| ConfigError::UnknownScenario(s.to_owned()))
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("TOML parse error: {0}")]
    Parse(String),
    #[error("unknown key `{key}` in [{section}]{}", line_suffix(*.line))]
    UnknownKey {
        key: String,
        section: String,
        line: Option<usize>,
    },
    #[error("missing key `scenario`")]
    MissingScenario,
    #[error("unknown scenario `{0}` (expected one of fig3-pump-sweep, fig4-density-sweep, gain-map, single-point, transient)")]
    UnknownScenario(String),
    #[error("bad value: {0}")]
    Type(String),
    #[error("invalid override `{0}`: expected key=value")]
    Override(String),
    #[error("invalid configuration: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Constants(#[from] ConstantsError),
}

fn line_suffix(line: Option<usize>) -> String {
    line.map(|l| format!(" (line {l})")).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    /// Coupling power, mW.
    PumpPower,
    /// Coupling Rabi frequency, MHz.
    Omega,
    /// Atomic density, m⁻³.
    NDensity,
}

impl SweepParameter {
    pub fn label(self) -> &'static str {
        match self {
            SweepParameter::PumpPower => "coupling power (mW)",
            SweepParameter::Omega => "coupling Rabi frequency (MHz)",
            SweepParameter::NDensity => "atomic density (m^-3)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl FromStr for Format {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" => Ok(Format::Svg),
            other => Err(ConfigError::Invalid(vec![format!(
                "unknown output format `{other}` (expected csv, json or svg)"
            )])),
        }
    }
}

/// Drive section; `g` follows from `g_sqrt_n / sqrt(n_density)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    /// MHz
    pub omega: f64,
    pub a: f64,
    /// MHz
    pub g_sqrt_n: f64,
    /// m⁻³
    pub n_density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaporSection {
    /// K
    pub temperature: f64,
    /// m
    pub cell_length: f64,
    pub refractive_index: f64,
    /// MHz
    pub natural_linewidth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSection {
    /// MHz/√mW
    pub calibration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub spacing: Spacing,
}

impl SweepSpec {
    pub fn values(&self) -> Vec<f64> {
        grid(self.min, self.max, self.points, self.spacing)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainMapSpec {
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_points: usize,
    pub density_min: f64,
    pub density_max: f64,
    pub density_points: usize,
    pub spacing: Spacing,
}

impl GainMapSpec {
    pub fn omegas(&self) -> Vec<f64> {
        grid(
            self.omega_min,
            self.omega_max,
            self.omega_points,
            self.spacing,
        )
    }

    pub fn densities(&self) -> Vec<f64> {
        grid(
            self.density_min,
            self.density_max,
            self.density_points,
            self.spacing,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransientSpec {
    /// µs
    pub t_final: f64,
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl TransientSpec {
    pub fn step_control(&self) -> StepControl {
        StepControl {
            method: self.method,
            rtol: self.rtol,
            atol: self.atol,
            max_steps: self.max_steps,
            ..StepControl::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub directory: String,
    pub formats: Vec<Format>,
}

/// A fully resolved run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub model: GainModel,
    pub rates: RateSet,
    pub drive: DriveSection,
    pub cavity: CavitySpec,
    pub vapor: VaporSection,
    pub collision: CollisionModel,
    pub pump: PumpSection,
    pub sweep: SweepSpec,
    pub gain_map: GainMapSpec,
    pub transient: TransientSpec,
    pub output: OutputSpec,
    pub constants: Constants,
}

impl RunConfig {
    pub fn drive(&self) -> DriveConfig {
        let d = self.drive;
        DriveConfig::from_collective(d.omega, d.a, d.g_sqrt_n, d.n_density)
    }

    /// Rates scale with density around the configured operating point.
    pub fn density_template(&self) -> DensityTemplate {
        DensityTemplate::new(self.drive.n_density, self.rates, self.drive.g_sqrt_n)
    }

    pub fn vapor_conditions(&self) -> VaporConditions {
        let v = self.vapor;
        VaporConditions {
            cell_length: v.cell_length,
            refractive_index: v.refractive_index,
            natural_linewidth: v.natural_linewidth,
            ..VaporConditions::rb87_d1(v.temperature, &self.constants)
        }
    }

    pub fn wants(&self, format: Format) -> bool {
        self.output.formats.contains(&format)
    }

    /// Serialized form written as `resolved-config.toml`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Every problem with the resolved values, in a stable order.
    pub fn problems(&self) -> Vec<String> {
        let mut out: Vec<String> = validate_rates(&self.rates)
            .iter()
            .map(|v| format!("rates: {v}"))
            .collect();
        out.extend(
            self.drive()
                .violations()
                .into_iter()
                .map(|m| format!("drive: {m}")),
        );
        if !(self.drive.g_sqrt_n >= 0.0 && self.drive.g_sqrt_n.is_finite()) {
            out.push(format!(
                "drive: g_sqrt_n must be >= 0, got {}",
                self.drive.g_sqrt_n
            ));
        }
        if !(self.drive.n_density > 0.0 && self.drive.n_density.is_finite()) {
            out.push(format!(
                "drive: n_density must be > 0, got {}",
                self.drive.n_density
            ));
        }
        if let Err(e) = self.cavity.validate() {
            out.push(format!("cavity: {e}"));
        }
        if let Err(e) = self.vapor_conditions().validate() {
            out.push(format!("vapor: {e}"));
        }
        if let Err(e) = self.collision.validate() {
            out.push(format!("collision: {e}"));
        }
        if !(self.pump.calibration > 0.0 && self.pump.calibration.is_finite()) {
            out.push(format!(
                "pump: calibration must be > 0, got {}",
                self.pump.calibration
            ));
        }
        check_axis(
            &mut out,
            "sweep",
            self.sweep.min,
            self.sweep.max,
            self.sweep.points,
            self.sweep.spacing,
        );
        match self.sweep.parameter {
            SweepParameter::PumpPower if self.sweep.min < 0.0 => out.push(format!(
                "sweep: pump power must be >= 0, got min = {}",
                self.sweep.min
            )),
            SweepParameter::NDensity if self.sweep.min <= 0.0 => out.push(format!(
                "sweep: density must be > 0, got min = {}",
                self.sweep.min
            )),
            SweepParameter::Omega if self.sweep.min < 0.0 => out.push(format!(
                "sweep: omega must be >= 0, got min = {}",
                self.sweep.min
            )),
            _ => {}
        }
        if self.model == GainModel::LargeOmega {
            let zero_omega = match self.sweep.parameter {
                SweepParameter::NDensity => self.drive.omega <= 0.0,
                _ => self.sweep.min <= 0.0,
            };
            let sweeping = matches!(
                self.scenario,
                Scenario::Fig3PumpSweep | Scenario::Fig4DensitySweep
            );
            if sweeping && zero_omega {
                out.push("model: large-omega needs omega > 0 over the whole sweep".into());
            }
        }
        let m = &self.gain_map;
        check_axis(
            &mut out,
            "gain_map omega",
            m.omega_min,
            m.omega_max,
            m.omega_points,
            m.spacing,
        );
        check_axis(
            &mut out,
            "gain_map density",
            m.density_min,
            m.density_max,
            m.density_points,
            m.spacing,
        );
        if m.density_min <= 0.0 {
            out.push("gain_map: density_min must be > 0".into());
        }
        let t = &self.transient;
        if !(t.t_final > 0.0 && t.t_final.is_finite()) {
            out.push(format!("transient: t_final must be > 0, got {}", t.t_final));
        }
        if !(t.rtol > 0.0 && t.atol > 0.0) {
            out.push("transient: rtol and atol must be > 0".into());
        }
        if t.max_steps == 0 {
            out.push("transient: max_steps must be >= 1".into());
        }
        if self.output.formats.is_empty() {
            out.push("output: formats must name at least one of csv, json, svg".into());
        }
        out
    }
}

fn check_axis(
    out: &mut Vec<String>,
    name: &str,
    min: f64,
    max: f64,
    points: usize,
    spacing: Spacing,
) {
    if points < 2 {
        out.push(format!("{name}: points must be >= 2, got {points}"));
    }
    if !(min.is_finite() && max.is_finite() && min < max) {
        out.push(format!(
            "{name}: need min < max, got min = {min}, max = {max}"
        ));
    }
    if spacing == Spacing::Log && !(min > 0.0) {
        out.push(format!("{name}: log spacing needs min > 0, got {min}"));
    }
}

fn parse_table(text: &str) -> Result<Table, ConfigError> {
    text.parse::<Table>()
        .map_err(|e| ConfigError::Parse(e.to_string()))
}

/// Complete preset for `scenario` as a TOML table, constants excluded.
pub fn preset_table(scenario: Scenario) -> Table {
    let mut base = parse_table(DEFAULTS).expect("defaults preset parses");
    let overlay = parse_table(scenario.overlay()).expect("scenario preset parses");
    merge(&mut base, overlay);
    base
}

/// Text of the shared defaults and the scenario overlay.
pub fn preset_sources(scenario: Scenario) -> (&'static str, &'static str) {
    (DEFAULTS, scenario.overlay())
}

/// Preset for `scenario` with the embedded constants table.
pub fn preset(scenario: Scenario) -> RunConfig {
    let mut t = Table::new();
    t.insert("scenario".into(), Value::String(scenario.name().into()));
    resolve(t, Constants::embedded()).expect("presets are valid")
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn check_keys(
    reference: &Table,
    user: &Table,
    section: &str,
    text: &str,
) -> Result<(), ConfigError> {
    for (k, v) in user {
        match reference.get(k) {
            Some(Value::Table(r)) => {
                if let Value::Table(u) = v {
                    let sub = if section.is_empty() {
                        k.clone()
                    } else {
                        format!("{section}.{k}")
                    };
                    check_keys(r, u, &sub, text)?;
                } else {
                    return Err(ConfigError::Type(format!("`{k}` must be a table")));
                }
            }
            Some(_) => {}
            None if section.is_empty() && k == "constants" => {}
            None => {
                return Err(ConfigError::UnknownKey {
                    key: k.clone(),
                    section: if section.is_empty() {
                        "top level".into()
                    } else {
                        section.into()
                    },
                    line: find_line(text, k),
                })
            }
        }
    }
    Ok(())
}

fn find_line(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('=') || rest.starts_with('.'))
        })
        .map(|i| i + 1)
}

/// Overlays `user` on the preset of its scenario and validates the result.
///
/// A `[constants]` table in `user` replaces `constants` wholesale.
pub fn resolve(user: Table, constants: &Constants) -> Result<RunConfig, ConfigError> {
    resolve_with_source(user, constants, "")
}

/// Like [`resolve`]; `source` is the text `user` came from and is only
/// used to put line numbers on unknown-key errors.
pub fn resolve_with_source(
    mut user: Table,
    constants: &Constants,
    source: &str,
) -> Result<RunConfig, ConfigError> {
    let scenario: Scenario = match user.get("scenario") {
        Some(Value::String(s)) => s.parse()?,
        Some(other) => {
            return Err(ConfigError::Type(format!(
                "`scenario` must be a string, got {other}"
            )))
        }
        None => return Err(ConfigError::MissingScenario),
    };
    let mut table = preset_table(scenario);
    check_keys(&table, &user, "", source)?;
    let consts = match user.remove("constants") {
        Some(c) => c,
        None => Value::try_from(constants).map_err(|e| ConfigError::Type(e.to_string()))?,
    };
    merge(&mut table, user);
    table.insert("constants".into(), consts);
    let cfg: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Type(e.to_string()))?;
    if cfg.constants.version != crate::constants::TABLE_VERSION {
        return Err(ConstantsError::Version {
            found: cfg.constants.version,
        }
        .into());
    }
    let problems = cfg.problems();
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(problems))
    }
}

/// Parses a user config, taking constants from the file or else from
/// [`Constants::load`].
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let user = parse_table(text)?;
    let constants = if user.contains_key("constants") {
        *Constants::embedded()
    } else {
        Constants::load()?
    };
    resolve_with_source(user, &constants, text)
}

/// Like [`parse_config`] with an explicit constants table.
pub fn parse_config_with(text: &str, constants: &Constants) -> Result<RunConfig, ConfigError> {
    resolve_with_source(parse_table(text)?, constants, text)
}

/// Parses `key=value` with a dotted key and a TOML value; bare words that
/// are not valid TOML are taken as strings.
pub fn parse_assignment(assignment: &str) -> Result<(Vec<String>, Value), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(assignment.into()))?;
    let path: Vec<String> = key.trim().split('.').map(|s| s.trim().to_owned()).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Override(assignment.into()));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_owned()));
    Ok((path, value))
}

/// Applies one `key=value` assignment to a user table.
pub fn apply_assignment(table: &mut Table, assignment: &str) -> Result<(), ConfigError> {
    let (path, value) = parse_assignment(assignment)?;
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.clone())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(ConfigError::Type(format!("`{p}` is not a table"))),
        };
    }
    cur.insert(last.clone(), value);
    Ok(())
}

/// Parses user text into a table for further overrides.
pub fn user_table(text: &str) -> Result<Table, ConfigError> {
    parse_table(text)
}
