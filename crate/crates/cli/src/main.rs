use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use plate_cli::experiment::STRUCTURE_TOL;
use plate_cli::{
    compare_runs, preset, run_experiment, sweep, CliError, RunConfig, EXIT_OK, EXIT_STRUCTURE,
};
use plate_core::MaterialModel;

#[derive(Parser)]
#[command(
    name = "plate",
    version,
    about = "Pseudo-spectral dissipative plate simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to `output.dir` of the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// `KEY=VALUE` with a dotted key path, applied before parsing.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run (or print) a named preset.
    Preset {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Print the resolved config as JSON instead of running it.
        #[arg(long)]
        print: bool,
    },
    /// Run the cartesian product of parameter axes in parallel.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `KEY=V1,V2,...`; repeat for more axes.
        #[arg(long, value_name = "KEY=V1,V2")]
        vary: Vec<String>,
        #[arg(long, default_value_t = 4)]
        threads: usize,
    },
    /// Compare checkpoint fields and rates of two run directories.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the structural conditions of a material model.
    ValidateModel {
        /// Take the model from a run config.
        #[arg(long, conflicts_with = "model")]
        config: Option<PathBuf>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// `NAME=VALUE` model parameter; repeatable.
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
    },
}

fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    RunConfig::from_json_with_overrides(&text, overrides)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn output_dir(cfg: &RunConfig, out: Option<PathBuf>) -> Result<PathBuf, CliError> {
    out.or_else(|| cfg.output.dir.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set output.dir".into()))
}

fn execute(cfg: &RunConfig, out: Option<PathBuf>) -> Result<i32, CliError> {
    let dir = output_dir(cfg, out)?;
    let m = run_experiment(cfg, &dir)?;
    match &m.message {
        Some(msg) => eprintln!("{}: {msg}", m.status),
        None => println!("{}: wrote {}", m.status, dir.display()),
    }
    Ok(m.exit_code)
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run {
            config,
            out,
            overrides,
        } => execute(&load(&config, &overrides)?, out),
        Command::Preset {
            name,
            out,
            overrides,
            print,
        } => {
            let cfg = preset(&name)?.with_overrides(&overrides)?;
            if print {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&cfg).expect("config serializes")
                );
                return Ok(EXIT_OK);
            }
            execute(&cfg, out)
        }
        Command::Sweep {
            config,
            out,
            vary,
            threads,
        } => {
            let base = load(&config, &[])?;
            let entries = sweep(&base, &vary, &out, threads)?;
            for e in &entries {
                println!(
                    "{} [{}] exit {}",
                    e.dir.display(),
                    e.overrides.join(" "),
                    e.exit_code
                );
            }
            Ok(entries.iter().map(|e| e.exit_code).max().unwrap_or(EXIT_OK))
        }
        Command::Compare { a, b, out } => {
            let report = compare_runs(&a, &b)?;
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            match out {
                Some(p) => fs::write(p, text)?,
                None => println!("{text}"),
            }
            Ok(EXIT_OK)
        }
        Command::ValidateModel {
            config,
            model,
            dim,
            params,
        } => {
            let model = match (config, model) {
                (Some(path), _) => load(&path, &[])?.model()?,
                (None, Some(name)) => {
                    let mut map = BTreeMap::new();
                    for p in &params {
                        let (k, v) = p.split_once('=').ok_or_else(|| {
                            CliError::Config(format!("parameter `{p}` is not NAME=VALUE"))
                        })?;
                        let v: f64 = v.parse().map_err(|_| {
                            CliError::Config(format!("parameter `{p}` is not a number"))
                        })?;
                        map.insert(k.to_string(), v);
                    }
                    MaterialModel::from_name(&name, dim, &map)
                        .map_err(|e| CliError::Config(e.to_string()))?
                }
                (None, None) => return Err(CliError::Config("pass --config or --model".into())),
            };
            let report = model.validate_structure(STRUCTURE_TOL);
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            Ok(if report.passed {
                EXIT_OK
            } else {
                EXIT_STRUCTURE
            })
        }
    }
}

fn main() -> ExitCode {
    let code = match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
