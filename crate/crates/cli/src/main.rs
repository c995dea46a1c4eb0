use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flatlayer::regularize::Method;
use flatlayer_cli::run::{run_bench, run_evaluate, run_invert, run_phantom, run_synthesize};
use flatlayer_cli::{CliError, CliResult, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "flatlayer", version, about = "Flat-layer inverse scattering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (overrides the config).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Noise seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Comma-separated frequencies, e.g. `1,2,3`.
    #[arg(long, global = true, value_name = "LIST", value_delimiter = ',')]
    freq: Option<Vec<f64>>,

    /// Relative noise level of the synthesized data.
    #[arg(long, global = true, value_name = "FLOAT")]
    delta: Option<f64>,

    #[arg(long, global = true, value_enum)]
    method: Option<MethodArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Tsvd,
    Tikhonov,
}

#[derive(Subcommand)]
enum Command {
    /// Write the exact inhomogeneity of the configured phantom.
    Phantom,
    /// Forward-solve every frequency and write receiver data.
    Synthesize,
    /// Reconstruct the inhomogeneity from receiver data.
    Invert {
        /// Directory holding the synthesized data (defaults to --out).
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Compare reconstructions with the phantom.
    Evaluate,
    /// Time the full inversion over a list of transverse sizes.
    Bench {
        /// Comma-separated N values (defaults to the config's list).
        #[arg(long, value_name = "LIST", value_delimiter = ',')]
        n: Option<Vec<usize>>,
    },
}

fn load_config(c: &Common) -> CliResult<RunConfig> {
    let path = c
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    cfg.apply(&Overrides {
        out: c.out.clone(),
        seed: c.seed,
        frequencies: c.freq.clone(),
        delta: c.delta,
        method: c.method.map(|m| match m {
            MethodArg::Tsvd => Method::Tsvd,
            MethodArg::Tikhonov => Method::Tikhonov,
        }),
    })?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = load_config(&cli.common)?;
    let out = cfg.output.dir.display().to_string();
    match cli.command {
        Command::Phantom => {
            let m = run_phantom(&cfg)?;
            println!("wrote exact xi to {out} (contrast {:.4})", m.summary["contrast"]);
        }
        Command::Synthesize => {
            let m = run_synthesize(&cfg)?;
            for f in &m.forward {
                println!("omega {}: {} Born iterations", f.omega, f.iterations);
            }
            println!("wrote {} files to {out}", m.files.len());
        }
        Command::Invert { data } => {
            let m = run_invert(&cfg, data.as_deref())?;
            for r in &m.ranks {
                println!("omega {}: sigma_ref {:.4e}, rank histogram {:?}", r.omega, r.sigma_ref, r.rank_histogram);
            }
            println!("wrote {} files to {out}", m.files.len());
        }
        Command::Evaluate => {
            let m = run_evaluate(&cfg)?;
            for (k, v) in &m.summary {
                println!("{k} = {v:.6}");
            }
        }
        Command::Bench { n } => {
            let (records, fit, _) = run_bench(&cfg, n.as_deref())?;
            for r in &records {
                println!("N = {:4}  M = {}  M1 = {}  t = {:.4} s", r.n, r.m, r.m1, r.seconds);
            }
            println!("fitted exponent {:.3}, t0 = {:.3e} s", fit.exponent, fit.t0);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
