use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use lie_transport::audit::Strategy;
use lie_transport::commands::{
    cmd_audit, cmd_deform, cmd_dphi_check, cmd_hodge_info, cmd_lb_check, cmd_solve, cmd_verify, AuditOptions,
    DeformOptions, DphiOptions, LbOptions, RunSummary, ZetaKind,
};
use lie_transport::config::RunConfig;
use lie_transport::Error;

/// Exit code when a run completes but one of its checks fails.
const EXIT_CHECK_FAILED: u8 = 5;

#[derive(Parser)]
#[command(name = "lie-transport", version, about = "Lie solutions of the mass-transport equation on flat tori")]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Random,
    Orbit,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ZetaArg {
    Random,
    Harmonic,
}

#[derive(Subcommand)]
enum Command {
    /// Discrete complex, adjointness, twist window and w = b·DT checks.
    Verify,
    /// Newton solve for the chart at the configured (or given) τ.
    Solve {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        tau: Option<Vec<f64>>,
        /// Write T, w and θ as CSV and binary dumps.
        #[arg(long)]
        dump: bool,
    },
    /// Continuation of the family along one cohomology direction.
    Deform {
        /// 1-based direction.
        #[arg(long)]
        direction: usize,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        step_size: Option<f64>,
        #[arg(long)]
        dump: bool,
    },
    /// Search for cycles on which the map is not cyclically monotone.
    Audit {
        #[arg(long, default_value_t = 8)]
        k_max: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = StrategyArg::Both)]
        strategy: StrategyArg,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        tau: Option<Vec<f64>>,
    },
    /// Laplace–Beltrami identity for L under grid refinement (n = 3).
    LbCheck {
        #[arg(long, value_delimiter = ',', default_values_t = [16usize, 32])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 0.005)]
        amplitude: f64,
        #[arg(long, default_value_t = 4)]
        modes: usize,
        #[arg(long, default_value_t = 1)]
        max_wavenumber: i32,
    },
    /// Finite-difference sweep of the derivative of Φ at the solved chart.
    DphiCheck {
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value_t = ZetaArg::Random)]
        zeta: ZetaArg,
    },
    /// Harmonic 1-forms of the state metric (or the flat one) and, in 2D, the kernel dimension.
    HodgeInfo {
        #[arg(long)]
        flat: bool,
    },
}

fn configure_threads() -> Result<(), Error> {
    if let Ok(v) = std::env::var("LT_THREADS") {
        let threads: usize = v.parse().map_err(|_| Error::Config(format!("LT_THREADS must be a positive integer, got {v:?}")))?;
        if threads == 0 {
            return Err(Error::Config("LT_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<RunSummary, Error> {
    configure_threads()?;
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let out = cli.out.clone().unwrap_or_else(|| cfg.out.clone());
    match cli.command {
        Command::Verify => cmd_verify(&cfg, &out),
        Command::Solve { tau, dump } => cmd_solve(&cfg, &out, tau, dump),
        Command::Deform { direction, steps, step_size, dump } => {
            cmd_deform(&cfg, &out, &DeformOptions { direction, steps, step_size, dump })
        }
        Command::Audit { k_max, samples, seed, strategy, tau } => {
            let strategy = match strategy {
                StrategyArg::Random => Strategy::Random,
                StrategyArg::Orbit => Strategy::Orbit,
                StrategyArg::Both => Strategy::Both,
            };
            cmd_audit(&cfg, &out, &AuditOptions { k_max, samples, seed, strategy, tau })
        }
        Command::LbCheck { sizes, amplitude, modes, max_wavenumber } => {
            cmd_lb_check(&cfg, &out, &LbOptions { sizes, amplitude, modes, max_wavenumber })
        }
        Command::DphiCheck { eps, zeta } => {
            let mut opts = DphiOptions::default();
            if let Some(e) = eps {
                opts.eps = e;
            }
            opts.zeta = match zeta {
                ZetaArg::Random => ZetaKind::Random,
                ZetaArg::Harmonic => ZetaKind::Harmonic,
            };
            cmd_dphi_check(&cfg, &out, &opts)
        }
        Command::HodgeInfo { flat } => cmd_hodge_info(&cfg, &out, flat),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            for c in &summary.checks {
                println!("{} {} = {:e} (threshold {:e})", if c.pass { "ok  " } else { "FAIL" }, c.name, c.value, c.threshold);
            }
            println!("{}: {}", summary.command, if summary.passed { "passed" } else { "failed" });
            if summary.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CHECK_FAILED)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
