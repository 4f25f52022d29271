use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use landau_cli::{sampler_test, thread_count, CliError, ExperimentConfig, ExperimentKind, SamplerTestConfig};
use landau_core::sphere::SamplerKind;

#[derive(Parser)]
#[command(
    name = "landau",
    version,
    about = "Particle solvers for the Landau collision operator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a convergence-study config and print the fitted slope.
    Convergence { config: PathBuf },
    /// Run a cpu-bench config and print seconds per step.
    Bench { config: PathBuf },
    /// Check a sphere sampler against the heat kernel.
    SamplerTest {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        tau: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use the tangent-space substepping sampler with this substep.
        #[arg(long)]
        substep: Option<f64>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn init_pool(threads: Option<usize>) -> landau_cli::Result<()> {
    if let Some(n) = thread_count(threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config {
                field: "threads".into(),
                message: e.to_string(),
            })?;
    }
    Ok(())
}

fn load_expecting(path: &Path, kind: ExperimentKind) -> landau_cli::Result<ExperimentConfig> {
    let config = ExperimentConfig::load(path)?;
    if config.kind != kind {
        return Err(CliError::Config {
            field: "kind".into(),
            message: format!("this subcommand needs kind = {kind:?}, found {:?}", config.kind),
        });
    }
    Ok(config)
}

fn execute(cli: Cli) -> landau_cli::Result<()> {
    let config = match cli.command {
        Command::Run {
            config,
            output_dir,
            seed,
        } => {
            let mut c = ExperimentConfig::load(&config)?;
            if let Some(dir) = output_dir {
                c.output_dir = dir;
            }
            if let Some(s) = seed {
                c.seed = s;
            }
            c
        }
        Command::Convergence { config } => load_expecting(&config, ExperimentKind::ConvergenceStudy)?,
        Command::Bench { config } => load_expecting(&config, ExperimentKind::CpuBench)?,
        Command::SamplerTest {
            dim,
            tau,
            samples,
            seed,
            substep,
            threads,
        } => {
            init_pool(threads)?;
            let test = SamplerTestConfig {
                dim,
                tau,
                samples,
                sampler: substep.map(|substep| SamplerKind::TangentSubstep { substep }),
            };
            let report = sampler_test(&test, seed)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            return Ok(());
        }
    };
    init_pool(config.threads)?;
    let manifest = landau_cli::run(&config)?;
    log::info!("finished in {:.2} s", manifest.wall_seconds);
    for path in &manifest.outputs {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
