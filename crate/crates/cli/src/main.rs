//! `lwi`: run model scenarios from presets and config files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lwi_core::config::{
    apply_assignment, preset, preset_sources, resolve_with_source, user_table, ConfigError,
    Scenario,
};
use lwi_core::constants::{Constants, CONSTANTS_ENV};
use lwi_core::scenario::{run_scenario, ScenarioError};
use toml::{Table, Value};

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "lwi",
    version,
    about = "Three-level lasing-without-inversion model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its data and plots.
    Run {
        /// fig3-pump-sweep, fig4-density-sweep, gain-map, single-point or transient.
        scenario: String,
        /// TOML file with overrides of the scenario preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one value, e.g. `--set rates.gamma_b=0.012`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory (default: output.directory of the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated subset of csv,json,svg.
        #[arg(long)]
        format: Option<String>,
        /// Physical-constants table (default: $LWI_CONSTANTS, else built in).
        #[arg(long)]
        constants: Option<PathBuf>,
    },
    /// Check a config file without running it.
    Validate {
        config: PathBuf,
        #[arg(long)]
        constants: Option<PathBuf>,
    },
    /// Inspect the built-in scenario presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// Name and purpose of every preset.
    List,
    /// The preset sources, or with --resolved the complete resolved config.
    Show {
        scenario: String,
        #[arg(long)]
        resolved: bool,
    },
}

struct Failure {
    kind: &'static str,
    code: u8,
    message: String,
    details: Option<serde_json::Value>,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let details = match &e {
            ConfigError::Invalid(problems) => Some(serde_json::json!({ "problems": problems })),
            ConfigError::UnknownKey { key, section, line } => {
                Some(serde_json::json!({ "key": key, "section": section, "line": line }))
            }
            _ => None,
        };
        Failure {
            kind: "config",
            code: EXIT_CONFIG,
            message: e.to_string(),
            details,
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let message = e.to_string();
        match e {
            ScenarioError::Numerical { details, .. } => Failure {
                kind: "numerical",
                code: EXIT_NUMERICAL,
                message,
                details,
            },
            ScenarioError::Encode(_) => Failure {
                kind: "numerical",
                code: EXIT_NUMERICAL,
                message,
                details: None,
            },
            ScenarioError::Io { .. } => io_failure(message),
        }
    }
}

fn io_failure(message: String) -> Failure {
    Failure {
        kind: "io",
        code: EXIT_IO,
        message,
        details: None,
    }
}

fn config_failure(message: String) -> Failure {
    Failure {
        kind: "config",
        code: EXIT_CONFIG,
        message,
        details: None,
    }
}

fn load_constants(path: Option<&Path>) -> Result<Constants, Failure> {
    match path {
        Some(p) => Constants::from_path(p),
        None => Constants::load(),
    }
    .map_err(|e| ConfigError::from(e).into())
}

fn read_table(path: &Path) -> Result<(Table, String), Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_failure(format!("cannot read {}: {e}", path.display())))?;
    let table = user_table(&text).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })?;
    Ok((table, text))
}

fn set_path(table: &mut Table, section: &str, key: &str, value: Value) {
    let entry = table
        .entry(section.to_owned())
        .or_insert_with(|| Value::Table(Table::new()));
    if let Value::Table(t) = entry {
        t.insert(key.to_owned(), value);
    }
}

#[allow(clippy::too_many_arguments)]
fn run(
    scenario: &str,
    config: Option<&Path>,
    set: &[String],
    out: Option<&Path>,
    format: Option<&str>,
    constants: Option<&Path>,
) -> Result<(), Failure> {
    let scenario: Scenario = scenario.parse().map_err(Failure::from)?;
    let (mut table, source) = match config {
        Some(p) => read_table(p)?,
        None => (Table::new(), String::new()),
    };
    match table.get("scenario") {
        Some(Value::String(s)) if s != scenario.name() => {
            return Err(config_failure(format!(
                "config is for scenario `{s}` but `{scenario}` was requested"
            )))
        }
        _ => {
            table.insert("scenario".into(), Value::String(scenario.name().into()));
        }
    }
    for assignment in set {
        apply_assignment(&mut table, assignment).map_err(Failure::from)?;
    }
    if let Some(f) = format {
        let formats = f
            .split(',')
            .map(|s| Value::String(s.trim().to_owned()))
            .collect();
        set_path(&mut table, "output", "formats", Value::Array(formats));
    }
    if let Some(dir) = out {
        set_path(
            &mut table,
            "output",
            "directory",
            Value::String(dir.display().to_string()),
        );
    }
    let consts = load_constants(constants)?;
    let cfg = resolve_with_source(table, &consts, &source).map_err(Failure::from)?;
    let outcome = run_scenario(&cfg, Path::new(&cfg.output.directory)).map_err(Failure::from)?;
    println!("{}: {}", cfg.scenario, outcome.summary);
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn validate(path: &Path, constants: Option<&Path>) -> Result<(), Failure> {
    let (table, source) = read_table(path)?;
    let consts = if table.contains_key("constants") {
        *Constants::embedded()
    } else {
        load_constants(constants)?
    };
    let cfg = resolve_with_source(table, &consts, &source).map_err(Failure::from)?;
    println!("ok: {} ({})", path.display(), cfg.scenario);
    Ok(())
}

fn presets(action: &PresetAction) -> Result<(), Failure> {
    match action {
        PresetAction::List => {
            for sc in Scenario::ALL {
                println!("{:<20} {}", sc.name(), sc.describe());
            }
        }
        PresetAction::Show { scenario, resolved } => {
            let sc: Scenario = scenario.parse().map_err(Failure::from)?;
            if *resolved {
                print!("{}", preset(sc).to_toml());
            } else {
                let (defaults, overlay) = preset_sources(sc);
                print!("{defaults}\n# --- {sc} ---\n{overlay}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            scenario,
            config,
            set,
            out,
            format,
            constants,
        } => run(
            scenario,
            config.as_deref(),
            set,
            out.as_deref(),
            format.as_deref(),
            constants.as_deref(),
        ),
        Command::Validate { config, constants } => validate(config, constants.as_deref()),
        Command::Presets { action } => presets(action),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let mut record = serde_json::json!({
                "error": f.kind,
                "exit_code": f.code,
                "message": f.message,
            });
            if let Some(d) = f.details {
                record["details"] = d;
            }
            if f.kind == "config" && f.message.contains("constants") {
                record["constants_env"] = serde_json::Value::String(CONSTANTS_ENV.into());
            }
            eprintln!("{record}");
            ExitCode::from(f.code)
        }
    }
}
