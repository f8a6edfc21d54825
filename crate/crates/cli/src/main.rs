//! `hetnet`: command-line front end.
//!
//! Exit codes: 0 success, 1 hypothesis failure, 2 numerical abort,
//! 3 unreadable or inconsistent config, 4 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hetnet::config::{load_config, LoadedConfig};
use hetnet::runs::{
    run_channel, run_flight, run_glv_sim, run_measure, run_omega, run_perturb, run_scaling, run_transit, run_validate,
    run_verdict, run_wedge, write_outputs, ChannelOverrides, FlightOptions, GlvSimOptions, MeasureOptions,
    OmegaOptions, PerturbOptions, RunOutput, ScalingOptions, TransitOptions, ValidateOptions, WedgeOptions,
};
use hetnet::sampling::Workers;
use hetnet::stability::DEFAULT_SAMPLES;
use hetnet::Error;

const EXIT_HYPOTHESIS: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_USAGE: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "hetnet", version, about = "Stability experiments for heteroclinic networks")]
struct Cli {
    /// Directory for reports and CSV files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads for sampling (results do not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check H1-H4, print derived constants and run the lemma suite.
    Validate {
        config: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        lemma_samples: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Time of flight and exit point for one in-section point.
    Flight {
        /// Expanding eigenvalues, strictly descending.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        lambdas: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        x: Vec<f64>,
    },
    /// One leg of the return map from a principal node.
    Transit {
        config: PathBuf,
        #[arg(long)]
        node: Option<String>,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        y: Vec<f64>,
    },
    /// Wedge defect and membership of an in-section point.
    Wedge {
        config: PathBuf,
        #[arg(long)]
        node: Option<String>,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        x: Vec<f64>,
        #[arg(long)]
        eps: f64,
    },
    /// Monte Carlo measure of the wedge complement.
    Measure {
        config: PathBuf,
        /// Principal nodes to measure (default: all).
        #[arg(long, value_delimiter = ',')]
        node: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0.5")]
        eps: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.01")]
        delta: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Log-log slope of the wedge-complement ratio against delta.
    Scaling {
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        node: Vec<String>,
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.02,0.01,0.005,0.0025")]
        deltas: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Iterate the return map from sampled wedge starts.
    Omega {
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        loops: usize,
        #[arg(long, default_value_t = 1000)]
        starts: u64,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Integrate one GLV trajectory and extract its itinerary.
    GlvSim {
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        x0: Option<Vec<f64>>,
        #[arg(long)]
        t_max: Option<f64>,
    },
    /// Fraction of sampled starts that follow the principal cycle.
    Channel {
        config: PathBuf,
        #[command(flatten)]
        overrides: ChannelArgs,
    },
    /// Re-run the channel experiment on randomly perturbed systems.
    Perturb {
        config: PathBuf,
        #[arg(long)]
        magnitude: Option<f64>,
        #[arg(long)]
        count: Option<u64>,
        #[command(flatten)]
        overrides: ChannelArgs,
    },
    /// Merge reports of one network into a verdict.
    Verdict { reports: Vec<PathBuf> },
}

#[derive(clap::Args, Debug)]
struct ChannelArgs {
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t_max: Option<f64>,
}

impl From<ChannelArgs> for ChannelOverrides {
    fn from(a: ChannelArgs) -> Self {
        ChannelOverrides {
            eps: a.eps,
            delta: a.delta,
            samples: a.samples,
            seed: a.seed,
            t_max: a.t_max,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    let root = e.root();
    match root {
        Error::Hypothesis { .. } => EXIT_HYPOTHESIS,
        Error::Config(_) | Error::Io(_) | Error::AmbiguousConnections(_) => EXIT_CONFIG,
        _ if root.is_numerical_abort() => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

fn config(path: &Path) -> Result<LoadedConfig, Error> {
    load_config(path)
}

fn dispatch(cli: Cli) -> Result<Option<RunOutput>, Error> {
    let w = Workers(cli.workers);
    let out = match cli.command {
        Command::Validate {
            config: c,
            lemma_samples,
            seed,
        } => run_validate(&config(&c)?, &ValidateOptions { lemma_samples, seed }, w)?,
        Command::Flight { lambdas, x } => run_flight(&FlightOptions { lambdas, x })?,
        Command::Transit { config: c, node, x, y } => run_transit(&config(&c)?, &TransitOptions { node, x, y })?,
        Command::Wedge { config: c, node, x, eps } => run_wedge(&config(&c)?, &WedgeOptions { node, x, eps })?,
        Command::Measure {
            config: c,
            node,
            eps,
            delta,
            samples,
            seed,
        } => run_measure(
            &config(&c)?,
            &MeasureOptions {
                nodes: node,
                eps,
                delta,
                samples,
                seed,
            },
            w,
        )?,
        Command::Scaling {
            config: c,
            node,
            eps,
            deltas,
            samples,
            seed,
        } => run_scaling(
            &config(&c)?,
            &ScalingOptions {
                nodes: node,
                eps,
                deltas,
                samples,
                seed,
            },
            w,
        )?,
        Command::Omega {
            config: c,
            loops,
            starts,
            delta,
            eps,
            seed,
        } => run_omega(
            &config(&c)?,
            &OmegaOptions {
                loops,
                starts,
                delta,
                eps,
                seed,
            },
            w,
        )?,
        Command::GlvSim { config: c, x0, t_max } => run_glv_sim(&config(&c)?, &GlvSimOptions { x0, t_max })?,
        Command::Channel { config: c, overrides } => run_channel(&config(&c)?, &overrides.into(), w)?,
        Command::Perturb {
            config: c,
            magnitude,
            count,
            overrides,
        } => run_perturb(
            &config(&c)?,
            &PerturbOptions {
                magnitude,
                count,
                channel: overrides.into(),
            },
            w,
        )?,
        Command::Verdict { reports } => {
            let (bundle, text) = run_verdict(&reports)?;
            std::fs::create_dir_all(&cli.out_dir)?;
            let path = cli.out_dir.join("verdict.json");
            std::fs::write(&path, text)?;
            println!("{:?}: {}", bundle.verdict.verdict, bundle.verdict.text);
            println!("wrote {}", path.display());
            return Ok(None);
        }
    };
    for p in write_outputs(&cli.out_dir, &out)? {
        println!("wrote {}", p.display());
    }
    println!("{}", out.summary);
    Ok(Some(out))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(Some(out)) if out.hypotheses_failed => {
            eprintln!("hypothesis check failed; see the report");
            ExitCode::from(EXIT_HYPOTHESIS)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
