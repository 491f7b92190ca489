use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use mechsqueeze_cli::config::{parse_override, Entry, Feedback, Format};
use mechsqueeze_cli::mcval::{self, McError};
use mechsqueeze_cli::{emit, exit, output, parse_with_overrides, run_sweep, RunConfig};

#[derive(Parser)]
#[command(name = "mechsqueeze", version, about = "Mechanical squeezing via BAE measurement and feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Conditional steady state only (feedback = none).
    Conditional(Common),
    /// Markovian (current) feedback; requires a markov_* feedback.
    Markov(Common),
    /// Bayesian (state-based) feedback; requires a bayes_* feedback.
    Bayes(Common),
    /// Any configuration with a sweep.
    Sweep(Common),
    /// Monte-Carlo check of the excess-noise matrix.
    McValidate {
        #[command(flatten)]
        common: Common,
        /// Largest accepted |z| over the matrix entries.
        #[arg(long, default_value_t = 4.0)]
        z_max: f64,
        /// Multiply the reference by this factor before testing (harness self-check).
        #[arg(long, default_value_t = 1.0)]
        mismatch_reference: f64,
    },
    /// Run a named preset.
    Preset {
        name: String,
        #[command(flatten)]
        common: Common,
        /// Print the resolved configuration instead of running it.
        #[arg(long)]
        emit_config: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DbConvention {
    Absolute,
    Vacuum,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    db_convention: Option<DbConvention>,
    #[arg(long, env = "MECHSQUEEZE_THREADS")]
    threads: Option<usize>,
    /// Override one key, e.g. `--set params.g=0.3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

enum Failure {
    Config(String),
    Numerical(String),
    Validation(String),
    Io(anyhow::Error),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => exit::CONFIG,
            Failure::Numerical(_) => exit::NUMERICAL,
            Failure::Validation(_) => exit::VALIDATION,
            Failure::Io(_) => exit::IO,
        }
    }
}

impl Common {
    fn overrides(&self) -> Result<Vec<Entry>, Failure> {
        let mut out = Vec::new();
        for s in &self.set {
            out.push(parse_override(s).map_err(|e| Failure::Config(e.to_string()))?);
        }
        let mut push = |key: &str, value: String| out.push(Entry { line: 0, key: key.into(), value });
        if let Some(seed) = self.seed {
            push("numerics.base_seed", seed.to_string());
        }
        if let Some(f) = self.format {
            push("output.format", match f { FormatArg::Csv => "csv", FormatArg::Json => "json" }.into());
        }
        if let Some(c) = self.db_convention {
            push("output.db_convention", match c { DbConvention::Absolute => "absolute", DbConvention::Vacuum => "vacuum" }.into());
        }
        if let Some(out_path) = &self.out {
            push("output.path", out_path.clone());
        }
        Ok(out)
    }

    fn load(&self, preset: Option<&str>) -> Result<RunConfig, Failure> {
        let mut text = match &self.config {
            Some(path) => std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?,
            None => String::new(),
        };
        if let Some(name) = preset {
            text = format!("preset = {name}\n{text}");
        }
        parse_with_overrides(&text, &self.overrides()?).map_err(|e| Failure::Config(e.to_string()))
    }

    fn pool(&self) -> Result<rayon::ThreadPool, Failure> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads.unwrap_or(0))
            .build()
            .map_err(|e| Failure::Io(e.into()))
    }
}

fn write_output(cfg: &RunConfig, body: &str) -> Result<(), Failure> {
    match &cfg.output.path {
        Some(path) => std::fs::write(path, body).with_context(|| format!("writing {path}")).map_err(Failure::Io),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn sweep(cfg: &RunConfig, common: &Common) -> Result<(), Failure> {
    let rows = common.pool()?.install(|| run_sweep(cfg));
    let body = match cfg.output.format {
        Format::Csv => output::to_csv(cfg, &rows),
        Format::Json => output::to_json(cfg, &rows),
    };
    write_output(cfg, &body)?;
    let failed: Vec<String> = rows.iter().enumerate().filter(|(_, r)| !r.ok()).map(|(i, r)| format!("row {i}: {}", r.status)).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("{} of {} rows failed\n{}", failed.len(), rows.len(), failed.join("\n"))))
    }
}

fn require(cfg: &RunConfig, ok: bool, what: &str) -> Result<(), Failure> {
    if ok {
        Ok(())
    } else {
        Err(Failure::Config(format!("this subcommand needs {what}, got feedback = {}", cfg.feedback.name())))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Conditional(c) => {
            let cfg = c.load(None)?;
            require(&cfg, cfg.feedback == Feedback::None, "feedback = none")?;
            sweep(&cfg, &c)
        }
        Command::Markov(c) => {
            let cfg = c.load(None)?;
            require(&cfg, cfg.feedback.is_markov(), "a markov_* feedback")?;
            sweep(&cfg, &c)
        }
        Command::Bayes(c) => {
            let cfg = c.load(None)?;
            require(&cfg, cfg.feedback.is_bayes(), "a bayes_* feedback")?;
            sweep(&cfg, &c)
        }
        Command::Sweep(c) => {
            let cfg = c.load(None)?;
            if cfg.sweep.is_none() {
                return Err(Failure::Config("sweep needs sweep.variable and a grid".into()));
            }
            sweep(&cfg, &c)
        }
        Command::Preset { name, common, emit_config } => {
            let cfg = common.load(Some(&name))?;
            if emit_config {
                print!("{}", emit(&cfg));
                return Ok(());
            }
            sweep(&cfg, &common)
        }
        Command::McValidate { common, z_max, mismatch_reference } => {
            let cfg = common.load(None)?;
            let outcome = common
                .pool()?
                .install(|| mcval::mc_validate(&cfg, z_max, mismatch_reference))
                .map_err(|e| match e {
                    McError::Config(m) => Failure::Config(m),
                    McError::Numerical(m) => Failure::Numerical(m),
                })?;
            let body = match cfg.output.format {
                Format::Csv => mcval::to_csv(&cfg, &outcome),
                Format::Json => mcval::to_json(&cfg, &outcome),
            };
            write_output(&cfg, &body)?;
            if outcome.report.pass {
                Ok(())
            } else {
                Err(Failure::Validation(format!(
                    "ensemble disagrees with the reference: |z| = {:.3} > {}",
                    outcome.report.worst_z, z_max
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(exit::SUCCESS as u8),
        Err(f) => {
            match &f {
                Failure::Config(m) => eprintln!("configuration error: {m}"),
                Failure::Numerical(m) => eprintln!("numerical failure: {m}"),
                Failure::Validation(m) => eprintln!("validation failure: {m}"),
                Failure::Io(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(f.code() as u8)
        }
    }
}
