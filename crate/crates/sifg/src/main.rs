use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sifg::runner::{compare_runs, load_config, run_experiment};
use sifg::targets::ica_synthesize;

#[derive(Parser)]
#[command(
    name = "sifg",
    version,
    about = "Particle-based variational inference: semi-implicit functional \
             gradient flow, its adaptive variant, SVGD, and an L2 velocity-fit \
             baseline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config (every seed unless overridden).
    Run {
        /// Path to a TOML experiment config.
        config: PathBuf,
        /// Run only this seed instead of the config's seed list.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Output directory, overriding the config's `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate several run manifests into one comparison CSV.
    Compare {
        /// Paths to `manifest.json` files from comparable runs.
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic ICA dataset (JSON) with known ground truth.
    SynthesizeIca {
        /// Source dimension.
        #[arg(long)]
        d: usize,
        /// Number of observations.
        #[arg(long)]
        n: usize,
        /// Generator seed.
        #[arg(long)]
        seed: u64,
        /// Output JSON path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    // SIFG_NUM_THREADS caps the worker pool; outputs do not depend on it.
    if let Ok(v) = std::env::var("SIFG_NUM_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("warning: could not set thread pool size: {e}");
                }
            }
            _ => eprintln!("warning: ignoring invalid SIFG_NUM_THREADS={v:?}"),
        }
    }

    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> sifg::Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed_override,
            out,
        } => {
            let cfg = load_config(&config)?;
            let base = std::env::current_dir()?;
            let manifest = run_experiment(&cfg, &base, out.as_deref(), seed_override)?;
            println!(
                "{} run {} ({} seed{}) -> {}",
                manifest.label,
                manifest.status,
                manifest.runs.len(),
                if manifest.runs.len() == 1 { "" } else { "s" },
                manifest.out_dir
            );
            for run in &manifest.runs {
                match run.aborted_at_iteration {
                    Some(k) => println!(
                        "  seed {}: aborted at iteration {k} ({})",
                        run.seed,
                        run.abort_reason.as_deref().unwrap_or("unknown")
                    ),
                    None => println!("  seed {}: ok", run.seed),
                }
            }
            Ok(())
        }
        Command::Compare { manifests, out } => {
            let table = compare_runs(&manifests)?;
            std::fs::write(&out, table.to_csv())?;
            println!(
                "wrote {} rows x {} method column pairs -> {}",
                table.iterations.len(),
                table.columns.len(),
                out.display()
            );
            Ok(())
        }
        Command::SynthesizeIca { d, n, seed, out } => {
            let (model, _) = ica_synthesize(d, n, seed)?;
            let json = serde_json::to_string_pretty(&model)
                .map_err(|e| sifg::Error::Parse(e.to_string()))?;
            std::fs::write(&out, json)?;
            println!(
                "wrote synthetic ICA dataset (d = {d}, n_obs = {n}) -> {}",
                out.display()
            );
            Ok(())
        }
    }
}
