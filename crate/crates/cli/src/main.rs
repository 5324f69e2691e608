use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use quantpol::mdp::ActionBox;
use quantpol::quantizer::build_uniform_net;
use quantpol_cli::config::{parse_config, ExperimentConfig};
use quantpol_cli::experiments::{self, ExperimentError, RunOptions};
use quantpol_cli::report::{self, render, render_rollouts, write_report, Metadata, OutputFormat, Report};

#[derive(Parser)]
#[command(name = "quantpol", version, about = "Quantized stationary policies: convergence and bound experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed, overriding `seeds.root`
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving `<command>.csv` and `<command>.json`
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format printed to stdout
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Also write per-rollout costs to `<command>_rollouts.csv`
    #[arg(long, global = true)]
    dump_rollouts: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Paired gaps over the codebook schedule with a log-log slope fit
    Convergence,
    /// Measured gaps against the upper and lower bounds
    Bounds,
    /// Distance of n-step laws to the invariant measure
    Ergodicity,
    /// Marginal TV between a policy and its quantizations
    Tvcheck,
    /// Shannon lower bounds for the schedule
    Slb,
    /// Print a uniform net
    Codebook {
        /// Number of levels requested
        #[arg(long)]
        k: usize,
        /// Symmetric box half-width (ignored when --lo/--hi are given)
        #[arg(long, default_value_t = 1.0)]
        half_width: f64,
        /// Dimension of the symmetric box
        #[arg(long, default_value_t = 1)]
        dim: usize,
        /// Lower corner, comma separated
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        lo: Option<Vec<f64>>,
        /// Upper corner, comma separated
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        hi: Option<Vec<f64>>,
    },
}

fn load(common: &Common) -> Result<(ExperimentConfig, Metadata), ExperimentError> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| ExperimentError::Unsupported("--config is required for this command".into()))?;
    let (mut cfg, text) = parse_config(path)?;
    if let Some(seed) = common.seed {
        cfg.seeds.root = seed;
    }
    let meta = Metadata::new(&cfg, &text);
    Ok((cfg, meta))
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> Option<PathBuf> {
    common.out.clone().or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
}

fn emit<R: Report>(report: &R, common: &Common, dir: Option<&Path>) -> Result<bool, ExperimentError> {
    let format = match common.format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    print!("{}", render(report, format));
    if let Some(dir) = dir {
        for p in write_report(report, dir)? {
            eprintln!("wrote {}", p.display());
        }
    }
    for line in report.summary() {
        eprintln!("{line}");
    }
    Ok(report.passed())
}

fn dump(report: &report::ExperimentReport, common: &Common, dir: Option<&Path>) -> Result<(), ExperimentError> {
    if !common.dump_rollouts {
        return Ok(());
    }
    let dir = dir.unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}_rollouts.csv", report.command));
    std::fs::write(&path, render_rollouts(&report.rollouts))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool, ExperimentError> {
    let common = &cli.common;
    let opts = RunOptions {
        dump_rollouts: common.dump_rollouts,
    };
    match cli.command {
        Command::Codebook { k, half_width, dim, lo, hi } => {
            let bx = match (lo, hi) {
                (Some(lo), Some(hi)) => ActionBox::new(lo, hi)?,
                (None, None) => ActionBox::symmetric(dim, half_width)?,
                _ => return Err(ExperimentError::Unsupported("--lo and --hi must be given together".into())),
            };
            let cb = build_uniform_net(&bx, k)?;
            eprintln!(
                "levels = {}, rate = {} bits, radius = {}",
                cb.len(),
                cb.rate_bits(),
                cb.covering_radius().unwrap_or(f64::NAN)
            );
            print!("{}", cb.to_text());
            if let Some(dir) = &common.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("codebook.txt"), cb.to_text())?;
            }
            Ok(true)
        }
        Command::Convergence => {
            let (cfg, meta) = load(common)?;
            let dir = out_dir(common, &cfg);
            let r = experiments::run_convergence(&cfg, meta, opts)?;
            dump(&r, common, dir.as_deref())?;
            emit(&r, common, dir.as_deref())
        }
        Command::Bounds => {
            let (cfg, meta) = load(common)?;
            let dir = out_dir(common, &cfg);
            let r = experiments::run_bounds_check(&cfg, meta, opts)?;
            dump(&r, common, dir.as_deref())?;
            emit(&r, common, dir.as_deref())
        }
        Command::Ergodicity => {
            let (cfg, meta) = load(common)?;
            let dir = out_dir(common, &cfg);
            emit(&experiments::run_ergodicity(&cfg, meta)?, common, dir.as_deref())
        }
        Command::Tvcheck => {
            let (cfg, meta) = load(common)?;
            let dir = out_dir(common, &cfg);
            emit(&experiments::run_tvcheck(&cfg, meta)?, common, dir.as_deref())
        }
        Command::Slb => {
            let (cfg, meta) = load(common)?;
            let dir = out_dir(common, &cfg);
            emit(&experiments::run_slb(&cfg, meta)?, common, dir.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
