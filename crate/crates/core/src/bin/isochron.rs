use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use isochron::config::{Artifact, RunConfig};
use isochron::manifold::{self, CloudKind};
use isochron::{runner, Error};

#[derive(Parser)]
#[command(name = "isochron", version, about = "Self-triggered inter-execution time bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Run artifact from `synthesize`; synthesized on the fly when absent.
    #[arg(long)]
    artifact: Option<PathBuf>,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize comparison models and pick t*; writes the run artifact.
    Synthesize(Common),
    /// Average inter-execution times per σ (and iteration count).
    Table(Common),
    /// Point clouds of the approximate and exact isochrones.
    Manifold {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of approx, exact, sphere.
        #[arg(long, value_delimiter = ',', default_value = "approx,exact,sphere")]
        kinds: Vec<String>,
        #[arg(long)]
        t_star: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Per-execution inter-execution times along closed-loop runs.
    Trace {
        #[command(flatten)]
        common: Common,
        /// Initial plant state, comma-separated; defaults to experiment.x0.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Check χ (from the artifact or the config overrides) on a fresh sample set.
    Verify(Common),
}

enum Failure {
    Usage(String),
    Lib(Error),
    Unverified,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::Usage(_) => 1,
        Failure::Unverified => 2,
        Failure::Lib(e) => match e {
            Error::Config(_) | Error::Parse(_) | Error::Dimension(_) | Error::Invalid(_) | Error::Io(_) => 1,
            Error::Infeasible(_) => 2,
            Error::Integration { .. } | Error::ImmediateTrigger { .. } | Error::Eval(_) => 3,
        },
    }
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn artifact(cfg: &RunConfig, common: &Common) -> Result<Artifact, Failure> {
    match &common.artifact {
        Some(p) => Ok(Artifact::load(p)?),
        None => Ok(runner::synthesize(cfg)?),
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synthesize(c) => {
            let cfg = load(&c)?;
            let art = runner::synthesize(&cfg)?;
            for e in &art.entries {
                if !e.low.verified {
                    eprintln!("warning: low-order coefficients for sigma = {:?} failed verification", e.sigma);
                }
            }
            let out = c.out.clone().or(cfg.output.artifact.as_ref().map(PathBuf::from));
            let mut w = sink(out.as_deref())?;
            writeln!(w, "{}", art.to_json())?;
            w.flush()?;
        }
        Command::Table(c) => {
            let cfg = load(&c)?;
            let art = artifact(&cfg, &c)?;
            let rows = runner::table(&cfg, &art)?;
            let mut w = sink(c.out.as_deref())?;
            runner::write_table_csv(&rows, &mut w)?;
            w.flush()?;
        }
        Command::Manifold { common, kinds, t_star, sigma } => {
            let kinds = kinds
                .iter()
                .map(|k| CloudKind::parse(k.trim()).ok_or_else(|| Failure::Usage(format!("unknown cloud kind '{k}'"))))
                .collect::<Result<Vec<_>, _>>()?;
            let cfg = load(&common)?;
            let art = artifact(&cfg, &common)?;
            let clouds = runner::manifold_clouds(&cfg, &art, sigma, t_star, &kinds)?;
            let mut w = sink(common.out.as_deref())?;
            manifold::write_csv(&clouds, &mut w)?;
            w.flush()?;
        }
        Command::Trace { common, x0, sigma } => {
            let cfg = load(&common)?;
            let x0 = x0
                .or(cfg.experiment.x0.clone())
                .ok_or_else(|| Failure::Usage("trace needs --x0 or experiment.x0".into()))?;
            if runner::outside_region(&cfg, &x0) {
                eprintln!("warning: x0 lies outside the region; bounds are only guaranteed inside it");
            }
            let art = artifact(&cfg, &common)?;
            let traces = runner::traces(&cfg, &art, sigma, &x0)?;
            if let Some(dir) = &cfg.output.trace_dir {
                std::fs::create_dir_all(dir)?;
                for (s, tr) in &traces {
                    let name = match s {
                        Some(s) => format!("{}_sigma{s}.csv", tr.strategy),
                        None => format!("{}.csv", tr.strategy),
                    };
                    let mut f = BufWriter::new(File::create(Path::new(dir).join(name))?);
                    tr.write_csv(&mut f)?;
                    f.flush()?;
                }
            }
            let mut w = sink(common.out.as_deref())?;
            runner::write_exec_csv(&traces, &mut w)?;
            w.flush()?;
        }
        Command::Verify(c) => {
            let cfg = load(&c)?;
            let art = c.artifact.as_ref().map(|p| Artifact::load(p)).transpose()?;
            let rows = runner::verify(&cfg, art.as_ref())?;
            let mut w = sink(c.out.as_deref())?;
            runner::write_verify_csv(&rows, &mut w)?;
            w.flush()?;
            if rows.iter().any(|r| !r.report.passed) {
                return Err(Failure::Unverified);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Lib(e) => eprintln!("error: {e}"),
                Failure::Unverified => eprintln!("error: coefficients failed verification"),
            }
            ExitCode::from(exit_code(&f))
        }
    }
}
