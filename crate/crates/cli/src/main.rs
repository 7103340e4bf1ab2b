use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gas_core::config::{parse_config, Mode};
use gas_core::{resume_experiment, run_experiment};

#[derive(Parser)]
#[command(name = "gas-sim", about = "Buffered asynchronous split learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file.
    Run {
        /// Path to a key=value config file.
        #[arg(long)]
        config: PathBuf,
        /// Override the configured mode (gas | async_nogen | sync).
        #[arg(long)]
        mode: Option<String>,
        /// Override the configured master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Emit a per-event trace.jsonl alongside the metrics.
        #[arg(long)]
        trace: bool,
        /// Output directory for metrics.csv / metrics.jsonl / final_model.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Resume a checkpointed run to completion.
    Resume {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn real_main() -> Result<(), gas_core::Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            mode,
            seed,
            trace,
            out,
        } => {
            let text = std::fs::read_to_string(&config)?;
            let mut cfg = parse_config(&text)?;
            if let Some(m) = mode {
                cfg.mode = Mode::parse(&m).ok_or_else(|| {
                    gas_core::Error::ValidationError(format!("unknown mode '{m}'"))
                })?;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if trace {
                cfg.trace = true;
            }
            let out = out.or_else(|| cfg.out_dir.clone());
            let result = run_experiment(cfg, out.as_deref())?;
            let last = result.metrics.rows.last();
            match last {
                Some(row) => println!(
                    "done: t={} sim_time={:.3}s server_updates={} test_accuracy={:.4}",
                    row.aggregation_index,
                    row.sim_time,
                    row.server_update_count,
                    row.test_accuracy
                ),
                None => println!("done: no aggregations performed"),
            }
        }
        Command::Resume { checkpoint, out } => {
            let result = resume_experiment(&checkpoint, out.as_deref())?;
            match result.metrics.rows.last() {
                Some(row) => println!(
                    "done: t={} sim_time={:.3}s server_updates={} test_accuracy={:.4}",
                    row.aggregation_index,
                    row.sim_time,
                    row.server_update_count,
                    row.test_accuracy
                ),
                None => println!("done: no aggregations performed"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
