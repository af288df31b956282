use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use tradevar_core::io::{
    parse_duration, parse_time, portfolio_to_toml, read_generator_spec, write_trades_csv,
};
use tradevar_core::report::{self, SweepOptions};
use tradevar_core::synthetic::generate;
use tradevar_core::{AlignMode, AnalyzeOptions, Error, Regime, RegimeThresholds, WindowParams};

#[derive(Parser)]
#[command(
    name = "tradevar",
    version,
    about = "Market-based portfolio variance from trade data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a trade file against a portfolio and write a variance report.
    Analyze {
        #[arg(long)]
        trades: PathBuf,
        #[arg(long)]
        portfolio: PathBuf,
        /// Window center, epoch seconds or ISO-8601. Omit with the width to
        /// cover the whole file.
        #[arg(long, requires = "window_width")]
        window_center: Option<String>,
        /// Window width in seconds, or with an s/m/h/d suffix.
        #[arg(long, requires = "window_center")]
        window_width: Option<String>,
        #[arg(long)]
        buckets: usize,
        /// Merge empty buckets instead of failing.
        #[arg(long)]
        lenient: bool,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the volume CV over generated data for one regime preset.
    Sweep {
        #[arg(long)]
        regime: Regime,
        /// Comma-separated χ values.
        #[arg(long, value_delimiter = ',', required = true)]
        chi: Vec<f64>,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        psi0: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        securities: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate synthetic trades from a TOML generator spec.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        /// Trades CSV; the portfolio goes next to it unless given.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        portfolio_out: Option<PathBuf>,
    },
}

fn write_output(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Analyze {
            trades,
            portfolio,
            window_center,
            window_width,
            buckets,
            lenient,
            format,
            out,
        } => {
            let window = match (window_center, window_width) {
                (Some(c), Some(w)) => WindowParams::Centered {
                    center: parse_time(&c)?,
                    width: parse_duration(&w)?,
                },
                _ => WindowParams::WholeFile,
            };
            let options = AnalyzeOptions {
                window,
                buckets,
                mode: if lenient {
                    AlignMode::Lenient
                } else {
                    AlignMode::Strict
                },
                thresholds: RegimeThresholds::default(),
            };
            let doc = report::analyze(&trades, &portfolio, &options)?;
            let text = match format {
                Format::Json => report::to_json(&doc)?,
                Format::Csv => report::to_csv(&doc)?,
            };
            write_output(out.as_deref(), &text)
        }
        Command::Sweep {
            regime,
            chi,
            a,
            psi0,
            n,
            seed,
            securities,
            out,
        } => {
            let rows = report::sweep(
                regime,
                &chi,
                &SweepOptions {
                    a,
                    psi0,
                    buckets: n,
                    seed,
                    securities,
                },
            )?;
            write_output(out.as_deref(), &report::sweep_to_csv(&rows))
        }
        Command::Generate {
            spec,
            out,
            portfolio_out,
        } => {
            let gen = read_generator_spec(&spec)?;
            let data = generate(&gen)?;
            log::info!(
                "generated {} securities x {} buckets, measured chi {:.6}",
                gen.securities,
                gen.buckets,
                data.calibration.measured_volume_cv
            );
            let mut buf = Vec::new();
            write_trades_csv(&mut buf, &data.ticks())?;
            fs::write(&out, buf).with_context(|| format!("writing {}", out.display()))?;
            let portfolio_path =
                portfolio_out.unwrap_or_else(|| out.with_extension("portfolio.toml"));
            if portfolio_path == out {
                bail!("portfolio output would overwrite the trades file");
            }
            fs::write(&portfolio_path, portfolio_to_toml(&data.portfolio))
                .with_context(|| format!("writing {}", portfolio_path.display()))
        }
    }
}

fn error_json(err: &anyhow::Error) -> String {
    let kind = err
        .downcast_ref::<Error>()
        .map(Error::kind)
        .or_else(|| err.downcast_ref::<std::io::Error>().map(|_| "IoError"))
        .unwrap_or("Error");
    let message = format!("{err:#}");
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TRADEVAR_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", error_json(&err));
            ExitCode::FAILURE
        }
    }
}
