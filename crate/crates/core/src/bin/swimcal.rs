use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use swimcal::harness::{
    self, build_reference, load_records, plot::plot_convergence, run_experiment, summarize_dir, ExperimentConfig,
    HarnessError, Overrides, ReferenceSpec,
};
use swimcal::proposer::stub::{StubConfig, StubReply, StubServer};
use swimcal::swimsim::SwimmerModel;

#[derive(Parser)]
#[command(name = "swimcal", version, about = "Swimmer simulator calibration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic reference directory.
    GenRef {
        /// Hidden-parameter seed.
        #[arg(long, default_value_t = 0)]
        hidden_seed: u64,
        /// Observation noise std in meters.
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,
        #[arg(long, default_value_t = 0)]
        noise_seed: u64,
        /// Take reference settings (frequencies, schedule) from a config file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every (method, seed) cell of an experiment config.
    Run {
        config: PathBuf,
        /// Run a single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Recompute the summary table from an output directory.
    Summarize {
        dir: PathBuf,
        /// Print JSON instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Redraw the convergence plot from an output directory.
    Plot {
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve a canned proposer on the wire protocol.
    ServeStub {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, value_enum, default_value_t = StubMode::Midpoint)]
        reply: StubMode,
        /// Fraction of the way to the box midpoint (midpoint mode).
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
        /// JSON array answered in fixed mode.
        #[arg(long)]
        theta: Option<String>,
        #[arg(long, default_value_t = 0)]
        delay_ms: u64,
        #[arg(long, default_value_t = 0)]
        fail_first: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StubMode {
    Midpoint,
    Echo,
    Fixed,
}

fn gen_ref(
    hidden_seed: u64,
    noise_sigma: f64,
    noise_seed: u64,
    config: Option<PathBuf>,
    out: PathBuf,
) -> Result<(), HarnessError> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::load(&p)?,
        None => ExperimentConfig::new(
            ReferenceSpec::Synthetic {
                hidden_seed,
                noise_sigma,
                noise_seed,
            },
            vec![harness::MethodSpec::new(swimcal::calib::Method::Random)],
        ),
    };
    if matches!(cfg.reference, ReferenceSpec::Directory { .. }) {
        cfg.reference = ReferenceSpec::Synthetic {
            hidden_seed,
            noise_sigma,
            noise_seed,
        };
    }
    let reference = build_reference(&cfg, &SwimmerModel::default())?;
    std::fs::create_dir_all(&out).map_err(|e| swimcal::error::IoError::new(&out, e))?;
    reference.write_dir(&out)?;
    if let Some(t) = reference.theta_star() {
        println!("theta_star = {}", serde_json::to_string(t).expect("vector serializes"));
    }
    println!("wrote {} trajectories to {}", reference.frequencies.len(), out.display());
    Ok(())
}

fn run(
    config: PathBuf,
    seed: Option<u64>,
    budget: Option<usize>,
    out: Option<PathBuf>,
    workers: Option<usize>,
) -> Result<i32, HarnessError> {
    let mut cfg = ExperimentConfig::load(&config)?;
    if workers.is_some() {
        cfg.workers = workers;
    }
    cfg.apply(&Overrides {
        seed,
        budget,
        output_dir: out,
    })?;
    let outcome = run_experiment(&cfg)?;
    print!("{}", outcome.summary.render_table());
    for stem in outcome.aborted() {
        eprintln!("aborted: {stem}");
    }
    println!("results in {}", outcome.output_dir.display());
    Ok(outcome.exit_code())
}

fn serve_stub(
    addr: String,
    mode: StubMode,
    fraction: f64,
    theta: Option<String>,
    delay_ms: u64,
    fail_first: usize,
) -> Result<(), HarnessError> {
    let reply = match mode {
        StubMode::Midpoint => StubReply::TowardMidpoint(fraction),
        StubMode::Echo => StubReply::Echo,
        StubMode::Fixed => {
            let text = theta.ok_or_else(|| HarnessError::Config("--theta is required with --reply fixed".into()))?;
            let v: Vec<f64> = serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("--theta: {e}")))?;
            StubReply::Fixed(v)
        }
    };
    let config = StubConfig {
        reply,
        delay: Duration::from_millis(delay_ms),
        fail_first,
    };
    let server = StubServer::start(&addr, config).map_err(|e| HarnessError::Config(format!("bind {addr}: {e}")))?;
    println!("serving on {}", server.endpoint());
    server.join();
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenRef {
            hidden_seed,
            noise_sigma,
            noise_seed,
            config,
            out,
        } => gen_ref(hidden_seed, noise_sigma, noise_seed, config, out).map(|_| 0),
        Command::Run {
            config,
            seed,
            budget,
            out,
            workers,
        } => run(config, seed, budget, out, workers),
        Command::Summarize { dir, json } => summarize_dir(&dir).map(|s| {
            if json {
                println!("{}", serde_json::to_string_pretty(&s).expect("summary serializes"));
            } else {
                print!("{}", s.render_table());
            }
            0
        }),
        Command::Plot { dir, out } => load_records(&dir).and_then(|records| {
            let path = out.unwrap_or_else(|| dir.join("convergence.svg"));
            let svg = plot_convergence(&records)?;
            swimcal::io::write_atomic(&path, svg.as_bytes())?;
            println!("wrote {}", path.display());
            Ok(0)
        }),
        Command::ServeStub {
            addr,
            reply,
            fraction,
            theta,
            delay_ms,
            fail_first,
        } => serve_stub(addr, reply, fraction, theta, delay_ms, fail_first).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
