use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use qhall_cli::commands::RowOutcome;
use qhall_cli::config::template;
use qhall_cli::{CliError, RunConfig, SelftestOptions};

#[derive(Parser)]
#[command(name = "qhall", version, about = "Canonical determinant-line partition functions and their large-p expansion")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; defaults to the configured path, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    p_min: Option<u32>,
    #[arg(long)]
    p_max: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Working decimal digits.
    #[arg(long)]
    precision_digits: Option<u32>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a commented configuration template.
    Init {
        #[arg(long)]
        out: Option<PathBuf>,
        /// 0 for the sphere, 1 for the torus.
        #[arg(long, default_value_t = 0)]
        genus: u8,
    },
    /// Run the identity suites.
    Selftest {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        precision_digits: Option<u32>,
        /// Tolerance of the special-function identities.
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Predicted expansion coefficients (JSON).
    Predict(Common),
    /// log Z_p over the configured range (CSV).
    Compute(Common),
    /// Free and pinned fits of a computed series (JSON).
    Fit {
        #[command(flatten)]
        common: Common,
        /// CSV produced by `compute`; defaults to the configured csv path.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Predict, compute, fit and compare.
    Verify(Common),
    /// Torsion routes and the Landau-level torsion of L^p.
    Torsion(Common),
}

fn load(c: &Common) -> Result<RunConfig, CliError> {
    let path = c.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(v) = c.p_min {
        cfg.run.p_min = v;
    }
    if let Some(v) = c.p_max {
        cfg.run.p_max = v;
    }
    if let Some(v) = c.seed {
        cfg.run.seed = v;
    }
    if c.precision_digits.is_some() {
        cfg.run.precision_digits = c.precision_digits;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn emit_json<T: Serialize>(path: Option<&Path>, v: &T) -> Result<(), CliError> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn json_path<'a>(c: &'a Common, cfg: &'a RunConfig) -> Option<&'a Path> {
    c.out.as_deref().or(cfg.output.json.as_deref())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Init { out, genus } => {
            if genus > 1 {
                return Err(CliError::Config(format!("genus {genus} is not supported (0 or 1)")));
            }
            let mut w = sink(out.as_deref())?;
            w.write_all(template(genus).as_bytes())?;
            w.flush()?;
        }
        Cmd::Selftest { out, seed, precision_digits, tolerance } => {
            let mut opts = SelftestOptions::default();
            if let Some(s) = seed {
                opts.seed = s;
            }
            if let Some(d) = precision_digits {
                opts.digits = d;
            }
            if let Some(t) = tolerance {
                if !(t > 0.0) {
                    return Err(CliError::Config("tolerance must be positive".into()));
                }
                opts.tolerance = t;
            }
            let rep = qhall_cli::selftest(&opts)?;
            emit_json(out.as_deref(), &rep)?;
            if let Some(f) = rep.first_failure() {
                return Err(CliError::Verify(format!(
                    "identity '{}' failed: residual {:.3e} > {:.1e}",
                    f.name, f.residual, f.tolerance
                )));
            }
        }
        Cmd::Predict(c) => {
            let cfg = load(&c)?;
            let rep = qhall_cli::predict(&cfg)?;
            emit_json(json_path(&c, &cfg), &rep)?;
        }
        Cmd::Compute(c) => {
            let cfg = load(&c)?;
            let out = qhall_cli::compute(&cfg)?;
            let rows: Vec<_> = out.iter().map(|r| r.row()).collect();
            qhall_cli::write_csv(sink(c.out.as_deref().or(cfg.output.csv.as_deref()))?, &rows)?;
            let bad: Vec<String> = out
                .iter()
                .filter_map(|r| match r {
                    RowOutcome::Unresolved { p, message, .. } => Some(format!("p = {p}: {message}")),
                    _ => None,
                })
                .collect();
            if !bad.is_empty() {
                return Err(CliError::Numerical(bad.join("; ")));
            }
        }
        Cmd::Fit { common: c, input } => {
            let cfg = load(&c)?;
            cfg.validate_for_fit()?;
            let path = input
                .or_else(|| cfg.output.csv.clone())
                .ok_or_else(|| CliError::Config("fit needs --input or output.csv".into()))?;
            let rows: Vec<_> = qhall_cli::read_csv(&path)?
                .into_iter()
                .filter(|r| r.p >= cfg.run.p_min && r.p <= cfg.run.p_max)
                .collect();
            let (prot, samples) = qhall_cli::fit_csv(&cfg, &rows)?;
            if let Some(p) = &cfg.output.residuals {
                qhall_cli::write_residuals(sink(Some(p))?, &samples, &prot)?;
            }
            emit_json(json_path(&c, &cfg), &prot)?;
        }
        Cmd::Verify(c) => {
            let cfg = load(&c)?;
            let rep = qhall_cli::verify(&cfg, &Default::default())?;
            if let Some(p) = &cfg.output.residuals {
                qhall_cli::write_residuals(sink(Some(p))?, &rep.samples, &rep.protocol())?;
            }
            emit_json(json_path(&c, &cfg), &rep)?;
            if !rep.pass {
                let lines: Vec<String> = rep
                    .comparisons
                    .iter()
                    .filter(|x| !x.pass)
                    .map(|x| {
                        format!(
                            "{} ({}): fitted {:.9} predicted {:.9} delta {:.3e} > {:.1e}{}",
                            x.coefficient,
                            x.protocol,
                            x.fitted,
                            x.predicted,
                            x.delta,
                            x.tolerance,
                            if x.relative { " (relative)" } else { "" }
                        )
                    })
                    .collect();
                return Err(CliError::Verify(lines.join("; ")));
            }
        }
        Cmd::Torsion(c) => {
            let cfg = load(&c)?;
            let rep = qhall_cli::torsion(&cfg)?;
            emit_json(json_path(&c, &cfg), &rep)?;
            if !rep.pass {
                return Err(CliError::Verify("torsion checks failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qhall: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
