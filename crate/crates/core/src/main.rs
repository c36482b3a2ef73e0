use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cifusion::fusion::{FusionConfig, FusionMode, DEFAULT_XI_GUARD};
use cifusion::io::config::parse_config;
use cifusion::io::csv::{format_sensitivity, read_timeseries};
use cifusion::lockin::{demodulate, ReferenceSignal};
use cifusion::{pipeline, Error, Result};

#[derive(Parser)]
#[command(name = "cifusion", version, about = "Capacitive imaging simulation and amplitude/phase fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a raster scan and write R, PHI, X and Y images.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fuse an R and a PHI image into DELTA, XI, DELTA_P or XI_P.
    Fuse {
        #[arg(long)]
        r: PathBuf,
        #[arg(long)]
        phi: PathBuf,
        /// delta, xi, delta_prime or xi_prime
        #[arg(long)]
        mode: FusionMode,
        /// Lower bound on R_norm in the Ξ denominators.
        #[arg(long, default_value_t = DEFAULT_XI_GUARD)]
        guard: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also write a PGM of this bit depth next to the CSV.
        #[arg(long)]
        pgm: Option<u8>,
    },
    /// Evaluate R.csv and PHI.csv from an image directory against the configured defects.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Demodulate a sampled time series at the reference frequency.
    Demod {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        fin: f64,
        #[arg(long)]
        vref: f64,
        #[arg(long, allow_hyphen_values = true)]
        thetaref: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the sensitivity map at one probe position.
    Sensitivity {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = parse_config(&config)?;
            fs::create_dir_all(&out)?;
            for p in pipeline::simulate(&cfg, &out)? {
                log::info!("wrote {}", p.display());
            }
        }
        Command::Fuse {
            r,
            phi,
            mode,
            guard,
            out,
            pgm,
        } => {
            let cfg = FusionConfig {
                mode,
                xi_guard: guard,
                ..FusionConfig::default()
            };
            cfg.validate()?;
            pipeline::fuse_files(&r, &phi, &cfg, &out, pgm)?;
        }
        Command::Analyze { config, images, out } => {
            let cfg = parse_config(&config)?;
            pipeline::analyze_dir(&cfg, &images, &out)?;
        }
        Command::Demod {
            input,
            fin,
            vref,
            thetaref,
            out,
        } => {
            let ts = read_timeseries(&input)?;
            let reference = ReferenceSignal::new(fin, vref, thetaref)?;
            fs::write(out, to_json(&demodulate(&ts, &reference)?)?)?;
        }
        Command::Sensitivity { config, out } => {
            let cfg = parse_config(&config)?;
            let (map, grid) = pipeline::sensitivity(&cfg)?;
            fs::write(&out, format_sensitivity(&map, &grid))?;
            let profile: Vec<[f64; 2]> = pipeline::center_depth_profile(&map, &grid)
                .into_iter()
                .map(|(d, v)| [d, v])
                .collect();
            fs::write(out.with_extension("depth.json"), to_json(&profile)?)?;
        }
    }
    Ok(())
}

/// One line, `error: kind=<tag> msg="<escaped message>"`.
fn report(kind: &str, msg: &str) {
    let msg = msg.trim().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    eprintln!("error: kind={kind} msg=\"{msg}\"");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            report("usage", text.lines().next().unwrap_or_default().trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
    }
}
