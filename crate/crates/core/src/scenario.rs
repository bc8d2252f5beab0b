//! Scenario execution: maps a resolved [`RunConfig`] onto the model
//! pipeline and renders the requested files.

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::bloch::CoherenceVector;
use crate::cavity::{
    cavity_derived, gain_map, optical_depth_column, steady_intensity, sweep_density, sweep_omega,
    sweep_pump, Branch, CavityError, GainMapCell, SweepResult,
};
use crate::config::{Format, RunConfig, Scenario, SweepParameter};
use crate::gain::{
    classify_legs, default_probe_amplitude, inversion_closed, linear_gain_closed,
    linear_gain_numeric, rough_gain, GainError, LegClassification,
};
use crate::output::{
    render_svg, to_csv, to_json, trajectory_rows, write_atomic, AxesMeta, Figure, Panel, Scale,
    Series, TrajectoryRow,
};
use crate::steady::{
    integrate_transient, residual_norm, steady_state, unpumped_equilibrium, SteadyError,
};
use crate::vapor::{collision_rate, optical_depth_at_temperature, thermal_velocity, VaporError};

/// Name of the echoed configuration file.
pub const RESOLVED_CONFIG: &str = "resolved-config.toml";

/// Most points drawn per transient curve; the CSV keeps every step.
const TRANSIENT_PLOT_POINTS: usize = 2000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("numerical failure: {message}")]
    Numerical {
        message: String,
        /// Extra machine-readable context, such as a scanned grid.
        details: Option<serde_json::Value>,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot encode output: {0}")]
    Encode(String),
}

impl ScenarioError {
    fn numerical(e: impl std::fmt::Display) -> Self {
        ScenarioError::Numerical {
            message: e.to_string(),
            details: None,
        }
    }
}

impl From<CavityError> for ScenarioError {
    fn from(e: CavityError) -> Self {
        let details = match &e {
            CavityError::BracketFailure { grid } => Some(serde_json::json!({
                "scanned_grid": grid.iter().map(|&(x, h)| [x, h]).collect::<Vec<_>>(),
                "columns": ["g_times_a_mhz", "gain_minus_loss_mhz"],
            })),
            _ => None,
        };
        ScenarioError::Numerical {
            message: e.to_string(),
            details,
        }
    }
}

impl From<SteadyError> for ScenarioError {
    fn from(e: SteadyError) -> Self {
        Self::numerical(e)
    }
}

impl From<GainError> for ScenarioError {
    fn from(e: GainError) -> Self {
        Self::numerical(e)
    }
}

impl From<VaporError> for ScenarioError {
    fn from(e: VaporError) -> Self {
        Self::numerical(e)
    }
}

/// Optical-depth companion row of a density sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OpticalDepthRow {
    pub sweep_param: f64,
    pub temperature_k: f64,
    pub doppler_fwhm_mhz: f64,
    pub optical_depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateReport {
    pub rho_aa: f64,
    pub rho_bb: f64,
    pub rho_cc: f64,
    pub i_rho_ab: f64,
    pub rho_cb: f64,
    pub i_rho_ca: f64,
}

impl From<CoherenceVector> for StateReport {
    fn from(s: CoherenceVector) -> Self {
        Self {
            rho_aa: s.rho_aa,
            rho_bb: s.rho_bb,
            rho_cc: s.rho_cc(),
            i_rho_ab: s.u,
            rho_cb: s.v,
            i_rho_ca: s.w,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CavityReport {
    pub fsr_mhz: f64,
    pub finesse: f64,
    pub amplitude_decay_mhz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LasingReport {
    pub intensity: f64,
    pub amplitude: f64,
    pub gain_at_solution_mhz: f64,
    pub branch: Branch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VaporReport {
    pub temperature_k: f64,
    pub n_density: f64,
    pub doppler_fwhm_mhz: f64,
    pub optical_depth: f64,
    pub thermal_velocity_m_s: f64,
    pub collision_rate_mhz: f64,
}

/// Everything computed for one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointReport {
    pub omega_mhz: f64,
    pub a: f64,
    pub g_sqrt_n_mhz: f64,
    pub n_density: f64,
    pub steady_state: StateReport,
    pub residual_norm: f64,
    pub inversion: f64,
    pub inversion_small_signal: f64,
    pub linear_gain_mhz: f64,
    pub linear_gain_numeric_mhz: f64,
    pub rough_gain_mhz: f64,
    pub leg_class: LegClassification,
    pub cavity: CavityReport,
    pub lasing: LasingReport,
    pub vapor: VaporReport,
}

impl PointReport {
    /// `(quantity, value)` pairs for the flat CSV view.
    pub fn quantities(&self) -> Vec<(&'static str, String)> {
        let s = &self.steady_state;
        let f = |v: f64| v.to_string();
        vec![
            ("omega_mhz", f(self.omega_mhz)),
            ("a", f(self.a)),
            ("g_sqrt_n_mhz", f(self.g_sqrt_n_mhz)),
            ("n_density", f(self.n_density)),
            ("rho_aa", f(s.rho_aa)),
            ("rho_bb", f(s.rho_bb)),
            ("rho_cc", f(s.rho_cc)),
            ("i_rho_ab", f(s.i_rho_ab)),
            ("rho_cb", f(s.rho_cb)),
            ("i_rho_ca", f(s.i_rho_ca)),
            ("residual_norm", f(self.residual_norm)),
            ("inversion", f(self.inversion)),
            ("inversion_small_signal", f(self.inversion_small_signal)),
            ("linear_gain_mhz", f(self.linear_gain_mhz)),
            ("linear_gain_numeric_mhz", f(self.linear_gain_numeric_mhz)),
            ("rough_gain_mhz", f(self.rough_gain_mhz)),
            ("leg_class", self.leg_class.as_str().to_owned()),
            ("fsr_mhz", f(self.cavity.fsr_mhz)),
            ("finesse", f(self.cavity.finesse)),
            ("amplitude_decay_mhz", f(self.cavity.amplitude_decay_mhz)),
            ("lasing_intensity", f(self.lasing.intensity)),
            ("lasing_amplitude", f(self.lasing.amplitude)),
            ("gain_at_solution_mhz", f(self.lasing.gain_at_solution_mhz)),
            (
                "lasing_branch",
                match self.lasing.branch {
                    Branch::Stable => "stable",
                    Branch::Unstable => "unstable",
                    Branch::None => "none",
                }
                .to_owned(),
            ),
            ("temperature_k", f(self.vapor.temperature_k)),
            ("vapor_density", f(self.vapor.n_density)),
            ("doppler_fwhm_mhz", f(self.vapor.doppler_fwhm_mhz)),
            ("optical_depth", f(self.vapor.optical_depth)),
            ("thermal_velocity_m_s", f(self.vapor.thermal_velocity_m_s)),
            ("collision_rate_mhz", f(self.vapor.collision_rate_mhz)),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransientResult {
    pub rows: Vec<TrajectoryRow>,
    pub final_residual: f64,
}

/// Computed results of one scenario, before rendering.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioData {
    Sweep {
        sweep: SweepResult,
        optical_depth: Option<Vec<OpticalDepthRow>>,
    },
    GainMap(Vec<GainMapCell>),
    Point(Box<PointReport>),
    Transient(TransientResult),
}

pub fn compute(cfg: &RunConfig) -> Result<ScenarioData, ScenarioError> {
    let loss = cfg.cavity.amplitude_decay();
    let drive = cfg.drive();
    match cfg.scenario {
        Scenario::Fig3PumpSweep | Scenario::Fig4DensitySweep => {
            let values = cfg.sweep.values();
            let (sweep, optical_depth) = match cfg.sweep.parameter {
                SweepParameter::PumpPower => (
                    sweep_pump(
                        &cfg.rates,
                        &drive,
                        loss,
                        &values,
                        cfg.pump.calibration,
                        cfg.model,
                    )?,
                    None,
                ),
                SweepParameter::Omega => (
                    sweep_omega(&cfg.rates, &drive, loss, &values, cfg.model)?,
                    None,
                ),
                SweepParameter::NDensity => {
                    let sweep = sweep_density(
                        &cfg.density_template(),
                        drive.omega,
                        loss,
                        &values,
                        cfg.model,
                    )?;
                    let od = optical_depth_column(&sweep, &cfg.vapor_conditions(), &cfg.constants)?
                        .into_iter()
                        .map(|p| OpticalDepthRow {
                            sweep_param: p.n_density,
                            temperature_k: p.temperature_k,
                            doppler_fwhm_mhz: p.doppler_fwhm_mhz,
                            optical_depth: p.optical_depth,
                        })
                        .collect();
                    (sweep, Some(od))
                }
            };
            Ok(ScenarioData::Sweep {
                sweep,
                optical_depth,
            })
        }
        Scenario::GainMap => Ok(ScenarioData::GainMap(gain_map(
            &cfg.density_template(),
            &cfg.gain_map.omegas(),
            &cfg.gain_map.densities(),
            loss,
        )?)),
        Scenario::SinglePoint => Ok(ScenarioData::Point(Box::new(point_report(cfg)?))),
        Scenario::Transient => {
            let traj = integrate_transient(
                &cfg.rates,
                &drive,
                unpumped_equilibrium(&cfg.rates),
                cfg.transient.t_final,
                &cfg.transient.step_control(),
            )?;
            Ok(ScenarioData::Transient(TransientResult {
                rows: trajectory_rows(&traj),
                final_residual: traj.final_residual,
            }))
        }
    }
}

fn point_report(cfg: &RunConfig) -> Result<PointReport, ScenarioError> {
    let rates = &cfg.rates;
    let drive = cfg.drive();
    let state = steady_state(rates, &drive)?;
    let linear = linear_gain_closed(rates, &drive).value;
    let numeric = linear_gain_numeric(rates, &drive, default_probe_amplitude(rates, &drive))?;
    let cav = cavity_derived(&cfg.cavity, &cfg.constants);
    let lasing = steady_intensity(rates, &drive, cav.amplitude_decay, cfg.model)?;
    let cond = cfg.vapor_conditions();
    let od = optical_depth_at_temperature(&cond, &cfg.constants)?;
    Ok(PointReport {
        omega_mhz: drive.omega,
        a: drive.a,
        g_sqrt_n_mhz: cfg.drive.g_sqrt_n,
        n_density: drive.n_density,
        steady_state: state.into(),
        residual_norm: residual_norm(&state, rates, &drive),
        inversion: state.inversion(),
        inversion_small_signal: inversion_closed(rates, drive.omega),
        linear_gain_mhz: linear,
        linear_gain_numeric_mhz: numeric,
        rough_gain_mhz: rough_gain(rates, &drive),
        leg_class: classify_legs(rates),
        cavity: CavityReport {
            fsr_mhz: cav.fsr,
            finesse: cav.finesse,
            amplitude_decay_mhz: cav.amplitude_decay,
        },
        lasing: LasingReport {
            intensity: lasing.intensity,
            amplitude: lasing.amplitude,
            gain_at_solution_mhz: lasing.gain_at_solution,
            branch: lasing.branch,
        },
        vapor: VaporReport {
            temperature_k: od.temperature_k,
            n_density: od.n_density,
            doppler_fwhm_mhz: od.doppler_fwhm_mhz,
            optical_depth: od.optical_depth,
            thermal_velocity_m_s: thermal_velocity(
                cond.temperature,
                cond.atomic_mass,
                cfg.collision.velocity_convention,
                &cfg.constants,
            ),
            collision_rate_mhz: collision_rate(od.n_density, &cfg.collision, &cond, &cfg.constants),
        },
    })
}

/// One output file, not yet written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

fn artifact(name: String, text: String) -> Artifact {
    Artifact {
        name,
        bytes: text.into_bytes(),
    }
}

fn encode<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, ScenarioError> {
    r.map_err(|e| ScenarioError::Encode(e.to_string()))
}

fn thin<T: Copy>(rows: &[T], max: usize) -> Vec<T> {
    let every = rows.len().div_ceil(max).max(1);
    let mut out: Vec<T> = rows.iter().step_by(every).copied().collect();
    if !(rows.len() - 1).is_multiple_of(every) {
        out.extend(rows.last().copied());
    }
    out
}

fn sweep_meta(cfg: &RunConfig) -> AxesMeta {
    AxesMeta {
        title: format!("{}: {}", cfg.scenario.name(), cfg.scenario.describe()),
        x_label: cfg.sweep.parameter.label().to_owned(),
        x_scale: match cfg.sweep.spacing {
            crate::roots::Spacing::Linear => Scale::Linear,
            crate::roots::Spacing::Log => Scale::Log,
        },
        loss: Some(cfg.cavity.amplitude_decay()),
    }
}

fn gain_map_figure(cfg: &RunConfig, cells: &[GainMapCell]) -> Figure {
    let loss = cfg.cavity.amplitude_decay();
    let densities = cfg.gain_map.densities();
    let n = cfg.gain_map.omega_points;
    let picks: Vec<usize> = if densities.len() <= 5 {
        (0..densities.len()).collect()
    } else {
        (0..5).map(|k| k * (densities.len() - 1) / 4).collect()
    };
    let mut series: Vec<Series> = picks
        .iter()
        .map(|&j| {
            let row = &cells[j * n..(j + 1) * n];
            Series::new(
                format!("N = {:.3e} m^-3", densities[j]),
                row.iter()
                    .map(|c| (c.omega_mhz, c.linear_gain_mhz))
                    .collect(),
            )
        })
        .collect();
    series.push(Series::new(
        "cavity loss",
        vec![
            (cfg.gain_map.omega_min, loss),
            (cfg.gain_map.omega_max, loss),
        ],
    ));
    Figure {
        title: format!("{}: {}", cfg.scenario.name(), cfg.scenario.describe()),
        x_label: "coupling Rabi frequency (MHz)".into(),
        x_scale: match cfg.gain_map.spacing {
            crate::roots::Spacing::Linear => Scale::Linear,
            crate::roots::Spacing::Log => Scale::Log,
        },
        panels: vec![
            Panel::new("small-signal gain (MHz)", series).with_range(-2.0 * loss, 10.0 * loss)
        ],
    }
}

fn transient_figure(cfg: &RunConfig, rows: &[TrajectoryRow]) -> Figure {
    let rows = thin(rows, TRANSIENT_PLOT_POINTS);
    let col = |pick: fn(&TrajectoryRow) -> f64| rows.iter().map(|r| (r.t_us, pick(r))).collect();
    Figure {
        title: format!("{}: {}", cfg.scenario.name(), cfg.scenario.describe()),
        x_label: "time (us)".into(),
        x_scale: Scale::Linear,
        panels: vec![
            Panel::new(
                "populations",
                vec![
                    Series::new("rho_aa", col(|r| r.rho_aa)),
                    Series::new("rho_bb", col(|r| r.rho_bb)),
                    Series::new("rho_cc", col(|r| r.rho_cc)),
                ],
            ),
            Panel::new(
                "coherences",
                vec![
                    Series::new("i rho_ab", col(|r| r.i_rho_ab)),
                    Series::new("rho_cb", col(|r| r.rho_cb)),
                    Series::new("i rho_ca", col(|r| r.i_rho_ca)),
                ],
            ),
        ],
    }
}

/// Files for `data` in the formats `cfg` asks for, plus the resolved config.
pub fn render(cfg: &RunConfig, data: &ScenarioData) -> Result<Vec<Artifact>, ScenarioError> {
    let stem = cfg.scenario.name();
    let mut out = vec![artifact(RESOLVED_CONFIG.into(), cfg.to_toml())];
    match data {
        ScenarioData::Sweep {
            sweep,
            optical_depth,
        } => {
            if cfg.wants(Format::Csv) {
                out.push(artifact(
                    format!("{stem}.csv"),
                    encode(to_csv(&sweep.rows))?,
                ));
                if let Some(od) = optical_depth {
                    out.push(artifact(format!("{stem}-od.csv"), encode(to_csv(od))?));
                }
            }
            if cfg.wants(Format::Json) {
                out.push(artifact(format!("{stem}.json"), encode(to_json(sweep))?));
                if let Some(od) = optical_depth {
                    out.push(artifact(format!("{stem}-od.json"), encode(to_json(od))?));
                }
            }
            if cfg.wants(Format::Svg) {
                let mut fig = crate::output::sweep_figure(sweep, &sweep_meta(cfg));
                if let Some(od) = optical_depth {
                    fig.panels.push(Panel::new(
                        "optical depth",
                        vec![Series::new(
                            "optical depth",
                            od.iter()
                                .map(|r| (r.sweep_param, r.optical_depth))
                                .collect(),
                        )],
                    ));
                }
                out.push(artifact(format!("{stem}.svg"), render_svg(&fig)));
            }
        }
        ScenarioData::GainMap(cells) => {
            if cfg.wants(Format::Csv) {
                out.push(artifact(format!("{stem}.csv"), encode(to_csv(cells))?));
            }
            if cfg.wants(Format::Json) {
                out.push(artifact(format!("{stem}.json"), encode(to_json(cells))?));
            }
            if cfg.wants(Format::Svg) {
                out.push(artifact(
                    format!("{stem}.svg"),
                    render_svg(&gain_map_figure(cfg, cells)),
                ));
            }
        }
        ScenarioData::Point(report) => {
            if cfg.wants(Format::Csv) {
                #[derive(Serialize)]
                struct Row<'a> {
                    quantity: &'a str,
                    value: &'a str,
                }
                let q = report.quantities();
                let rows: Vec<Row> = q
                    .iter()
                    .map(|(k, v)| Row {
                        quantity: k,
                        value: v,
                    })
                    .collect();
                out.push(artifact(format!("{stem}.csv"), encode(to_csv(&rows))?));
            }
            if cfg.wants(Format::Json) {
                out.push(artifact(format!("{stem}.json"), encode(to_json(report))?));
            }
        }
        ScenarioData::Transient(t) => {
            if cfg.wants(Format::Csv) {
                out.push(artifact(format!("{stem}.csv"), encode(to_csv(&t.rows))?));
            }
            if cfg.wants(Format::Json) {
                out.push(artifact(format!("{stem}.json"), encode(to_json(t))?));
            }
            if cfg.wants(Format::Svg) {
                out.push(artifact(
                    format!("{stem}.svg"),
                    render_svg(&transient_figure(cfg, &t.rows)),
                ));
            }
        }
    }
    Ok(out)
}

/// One line per scenario for terminal output.
pub fn summarize(data: &ScenarioData) -> String {
    match data {
        ScenarioData::Sweep { sweep, .. } => {
            let lasing = sweep.rows.iter().filter(|r| r.intensity > 0.0).count();
            match sweep.peak_index() {
                Some(i) if sweep.rows[i].intensity > 0.0 => {
                    let p = &sweep.rows[i];
                    format!(
                        "{} rows, {lasing} lasing; peak a^2 = {:e} at {} = {}",
                        sweep.rows.len(),
                        p.intensity,
                        sweep.parameter,
                        p.sweep_param
                    )
                }
                _ => format!("{} rows, none lasing", sweep.rows.len()),
            }
        }
        ScenarioData::GainMap(cells) => format!(
            "{} cells, {} above loss",
            cells.len(),
            cells.iter().filter(|c| c.lasing).count()
        ),
        ScenarioData::Point(r) => format!(
            "linear gain {:.4} MHz (rough {:.4} MHz), inversion {:.6}, {}",
            r.linear_gain_mhz, r.rough_gain_mhz, r.inversion, r.leg_class
        ),
        ScenarioData::Transient(t) => format!(
            "{} samples to t = {} us, final residual {:e}",
            t.rows.len(),
            t.rows.last().map_or(0.0, |r| r.t_us),
            t.final_residual
        ),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Computes the scenario and writes its files atomically into `out_dir`.
pub fn run_scenario(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutcome, ScenarioError> {
    let data = compute(cfg)?;
    let files = render(cfg, &data)?
        .into_iter()
        .map(|a| {
            write_atomic(out_dir, &a.name, &a.bytes).map_err(|source| ScenarioError::Io {
                path: out_dir.join(&a.name).display().to_string(),
                source,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(RunOutcome {
        files,
        summary: summarize(&data),
    })
}
