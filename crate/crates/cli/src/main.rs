//! `spinlab`: runs one protocol from a TOML configuration and writes CSV,
//! manifest and SVG artifacts into the output directory.

mod config;
mod error;
mod plot;
mod run;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{RunConfig, OUTPUT_DIR_ENV};
use error::CliError;

const EXAMPLE_CONFIG: &str = include_str!("../spinlab.example.toml");

#[derive(Parser)]
#[command(name = "spinlab", version, about = "Electron-nuclear spin protocol simulator")]
struct Cli {
    /// Upper bound on worker threads; all cores when absent.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pulsed ODMR frequency sweep.
    Odmr(RunArgs),
    /// Rabi oscillation on one line or both MW lines.
    Rabi(RunArgs),
    /// CPMG coherence decay for one pulse number.
    Cpmg(RunArgs),
    /// CPMG T2 over a ladder of pulse numbers and the fitted exponent.
    T2scaling(RunArgs),
    /// Bell-state preparation plus tomography.
    Bell(RunArgs),
    /// Tomography round trip of a (mixed) Bell state.
    Tomo(RunArgs),
    /// CPMG response to an AC field versus pulse spacing.
    Acscan(RunArgs),
    /// Correlation spectroscopy, with or without the nuclear memory.
    Correlate(RunArgs),
    /// Runs the protocol named by the config's `protocol` key.
    Run(RunArgs),
    /// Checks a configuration without running anything.
    Validate {
        #[arg(short, long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

impl OnOff {
    fn toml(self) -> String {
        matches!(self, OnOff::On).to_string()
    }
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration; the shipped defaults when absent.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override any key, e.g. `--set noise.sigma_mhz=4.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Root seed of every random stream.
    #[arg(long)]
    seed: Option<u64>,
    /// Repetitions per sweep point; tomography has its own `shots` keys.
    #[arg(long)]
    shots: Option<u64>,
    /// Bell state (bell, tomo) or line (rabi).
    #[arg(long)]
    kind: Option<String>,
    /// Dephasing and relaxation.
    #[arg(long)]
    noise: Option<OnOff>,
    /// Pulse numbers: a list for t2scaling, one value elsewhere.
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// AC field frequency in MHz.
    #[arg(long)]
    fac: Option<f64>,
    /// Nuclear memory between the correlation blocks.
    #[arg(long)]
    memory: Option<OnOff>,
}

fn flag_error(flag: &str, protocol: &str) -> CliError {
    CliError::Parse(format!("--{flag} does not apply to `{protocol}`"))
}

/// Translates the convenience flags into `key.path = value` overrides.
fn overrides(args: &RunArgs, protocol: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for s in &args.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::Parse(format!("--set expects KEY=VALUE, got `{s}`")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    let mut push = |k: &str, v: String| out.push((k.to_string(), v));
    if let Some(s) = args.seed {
        push("seed", s.to_string());
    }
    if let Some(s) = args.shots {
        push("shots", s.to_string());
    }
    if let Some(n) = args.noise {
        push("noise.enabled", n.toml());
    }
    if let Some(k) = &args.kind {
        let key = match protocol {
            "bell" => "bell.kind",
            "tomo" => "tomo.state",
            "rabi" => "rabi.target",
            _ => return Err(flag_error("kind", protocol)),
        };
        push(key, format!("{k:?}"));
    }
    if !args.n.is_empty() {
        let list = args.n.iter().map(|n| n.to_string()).collect::<Vec<_>>();
        match protocol {
            "t2scaling" => push("t2scaling.n", format!("[{}]", list.join(","))),
            "cpmg" | "acscan" | "correlate" if list.len() == 1 => push(&format!("{protocol}.n_pulses"), list[0].clone()),
            _ => return Err(flag_error("n", protocol)),
        }
    }
    if let Some(f) = args.fac {
        match protocol {
            "acscan" | "correlate" => push(&format!("{protocol}.f_ac_mhz"), format!("{f:?}")),
            _ => return Err(flag_error("fac", protocol)),
        }
    }
    if let Some(m) = args.memory {
        match protocol {
            "correlate" => push("correlate.memory", m.toml()),
            _ => return Err(flag_error("memory", protocol)),
        }
    }
    Ok(out)
}

fn read_config(path: Option<&Path>) -> Result<String, CliError> {
    match path {
        None => Ok(EXAMPLE_CONFIG.to_string()),
        Some(p) => std::fs::read_to_string(p).map_err(|source| CliError::Io { path: p.display().to_string(), source }),
    }
}

fn load(args: &RunArgs, protocol: &str) -> Result<RunConfig, CliError> {
    let text = read_config(args.config.as_deref())?;
    let cfg = RunConfig::load(&text, &overrides(args, protocol)?, std::env::var(OUTPUT_DIR_ENV).ok())?;
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(CliError::Invalid(v));
    }
    Ok(cfg)
}

fn execute(protocol: Option<&str>, args: &RunArgs) -> Result<(), CliError> {
    let protocol = match protocol {
        Some(p) => p.to_string(),
        None => {
            let text = read_config(args.config.as_deref())?;
            let cfg = RunConfig::load(&text, &overrides(args, "run")?, None)?;
            cfg.protocol.ok_or_else(|| CliError::Invalid(vec![("protocol".into(), "required by `spinlab run`".into())]))?
        }
    };
    let cfg = load(args, &protocol)?;
    let artifacts = run::run(&protocol, &cfg)?;
    let dir = Path::new(&cfg.output_dir);
    let io = |source| CliError::Io { path: dir.display().to_string(), source };
    std::fs::create_dir_all(dir).map_err(io)?;
    // stdout may be a closed pipe; the artifacts are what matters
    let mut out = std::io::stdout().lock();
    for line in &artifacts.summary {
        let _ = writeln!(out, "{line}");
    }
    for (name, content) in &artifacts.files {
        let path = dir.join(name);
        std::fs::write(&path, content).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
        let _ = writeln!(out, "wrote {}", path.display());
    }
    Ok(())
}

/// Prints every violation; exit status 1 when there are any.
fn validate(path: Option<&Path>) -> ExitCode {
    let report = read_config(path)
        .and_then(|text| RunConfig::load(&text, &[], None))
        .map(|cfg| cfg.violations())
        .unwrap_or_else(|e| match e {
            CliError::Invalid(v) => v,
            other => vec![("(file)".into(), other.to_string().replace('\n', " "))],
        });
    if report.is_empty() {
        println!("ok: no violations");
        return ExitCode::SUCCESS;
    }
    for (key, message) in &report {
        println!("{key}: {message}");
    }
    println!("{} violation(s)", report.len());
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (protocol, args) = match &cli.command {
        Command::Validate { config } => return validate(config.as_deref()),
        Command::Odmr(a) => (Some("odmr"), a),
        Command::Rabi(a) => (Some("rabi"), a),
        Command::Cpmg(a) => (Some("cpmg"), a),
        Command::T2scaling(a) => (Some("t2scaling"), a),
        Command::Bell(a) => (Some("bell"), a),
        Command::Tomo(a) => (Some("tomo"), a),
        Command::Acscan(a) => (Some("acscan"), a),
        Command::Correlate(a) => (Some("correlate"), a),
        Command::Run(a) => (None, a),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        pool = pool.num_threads(w.max(1));
    }
    let result = match pool.build() {
        Ok(pool) => pool.install(|| execute(protocol, args)),
        Err(e) => Err(CliError::Parse(format!("--workers: {e}"))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            for line in e.lines() {
                eprintln!("{line}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
