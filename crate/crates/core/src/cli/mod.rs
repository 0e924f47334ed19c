//! Config-driven runner behind the `dphase` binary.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

pub use config::ExperimentConfig;

use crate::error::Error;

/// Shipped recipes, usable as `--config NAME`.
pub const RECIPES: &[(&str, &str)] = &[
    ("zhikov-step", include_str!("../../recipes/zhikov-step.toml")),
    ("example1", include_str!("../../recipes/example1.toml")),
    ("example2", include_str!("../../recipes/example2.toml")),
    ("zsigma", include_str!("../../recipes/zsigma.toml")),
    ("zsigma-scaled", include_str!("../../recipes/zsigma-scaled.toml")),
    ("lavrentiev-dirichlet", include_str!("../../recipes/lavrentiev-dirichlet.toml")),
    ("lavrentiev-zhikov", include_str!("../../recipes/lavrentiev-zhikov.toml")),
    ("mollify-bound", include_str!("../../recipes/mollify-bound.toml")),
    ("truncation", include_str!("../../recipes/truncation.toml")),
    ("witnesses", include_str!("../../recipes/witnesses.toml")),
];

pub fn recipe(name: &str) -> Option<&'static str> {
    RECIPES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[derive(Debug, Parser)]
#[command(name = "dphase", version, about = "Sampled checks and mollification experiments for double-phase densities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Config file, or the name of a shipped recipe.
    #[arg(long, global = true)]
    pub config: Option<String>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Overrides the config's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Run even when pre-checks fail.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Condition {
    F1,
    F2,
    F3,
    F4,
    Zsigma,
    Hprop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WitnessKind {
    NonUhlenbeck,
    NonProduct,
    Bcdfm,
    Bcm,
    Hh,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Check one structure condition on samples.
    Check { condition: Condition },
    /// Mollify the configured field and check the gradient bound.
    Mollify,
    /// Energy of the configured field over the domain ball.
    Energy,
    /// Energy convergence along the ε-sequence.
    Converge,
    /// Truncation identities.
    Truncate,
    /// Counterexample transcripts.
    Witness { kind: WitnessKind },
    /// Discrete infima over the full and the mollified class.
    Lavrentiev,
}

/// Result of one command: exit code plus files written.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub summary: String,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

/// Writes output files with the metadata header every file carries.
pub struct Output {
    dir: PathBuf,
    header: Vec<(String, String)>,
    files: Vec<PathBuf>,
}

impl Output {
    fn new(dir: &Path, command: &str, cfg: &ExperimentConfig) -> crate::Result<Self> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            header: vec![
                ("command".into(), command.into()),
                ("config_sha256".into(), cfg.digest()),
                ("seed".into(), cfg.seed().to_string()),
            ],
            files: Vec::new(),
        })
    }

    fn metadata(&self) -> &[(String, String)] {
        &self.header
    }

    fn header_text(&self) -> String {
        self.header.iter().map(|(k, v)| format!("# {k}: {v}\n")).collect()
    }

    /// Writes `body` after the metadata header.
    fn text(&mut self, name: &str, body: &str) -> crate::Result<()> {
        let content = format!("{}{body}", self.header_text());
        self.raw(name, content.as_bytes())
    }

    /// Writes `bytes` as is; callers include the header themselves.
    fn raw(&mut self, name: &str, bytes: &[u8]) -> crate::Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        self.files.push(path);
        Ok(())
    }
}

fn load_config(arg: Option<&str>) -> crate::Result<(ExperimentConfig, PathBuf)> {
    let Some(arg) = arg else {
        return Ok((ExperimentConfig::parse("")?, PathBuf::from(".")));
    };
    let path = Path::new(arg);
    if path.exists() {
        let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        return Ok((ExperimentConfig::load(path)?, base));
    }
    match recipe(arg) {
        Some(text) => Ok((ExperimentConfig::parse(text)?, PathBuf::from("."))),
        None => Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or shipped recipe"),
        }),
    }
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> crate::Result<Outcome> {
    let (cfg, base) = load_config(cli.config.as_deref())?;
    let cfg = cfg.with_seed(cli.seed);
    let name = match &cli.command {
        Command::Check { condition } => format!("check {}", condition.to_possible_value().unwrap().get_name()),
        Command::Witness { kind } => format!("witness {}", kind.to_possible_value().unwrap().get_name()),
        Command::Mollify => "mollify".into(),
        Command::Energy => "energy".into(),
        Command::Converge => "converge".into(),
        Command::Truncate => "truncate".into(),
        Command::Lavrentiev => "lavrentiev".into(),
    };
    let mut out = Output::new(&cli.out, &name, &cfg)?;
    let (passed, summary) = match &cli.command {
        Command::Check { condition } => commands::check(&cfg, *condition, &mut out)?,
        Command::Mollify => commands::mollify(&cfg, &base, &mut out)?,
        Command::Energy => commands::energy(&cfg, &base, &mut out)?,
        Command::Converge => commands::converge(&cfg, &base, cli.force, &mut out)?,
        Command::Truncate => commands::truncate(&cfg, &base, &mut out)?,
        Command::Witness { kind } => commands::witness(&cfg, *kind, &mut out)?,
        Command::Lavrentiev => commands::lavrentiev(&cfg, &mut out)?,
    };
    Ok(Outcome {
        passed,
        summary,
        files: out.files,
    })
}

/// Exit code for an error: 1 when the run completed without the sought
/// result, 2 for bad input or refused preconditions.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Inconclusive(_) | Error::NotConverged(_) => 1,
        _ => 2,
    }
}

/// Entry point of the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(o) => {
            println!("{}", o.summary);
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            o.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            error_exit_code(&e)
        }
    }
}
