//! CLI driver for the proactive-caching simulator.
//!
//! Subcommands mirror the experiment families: `storage-sweep`,
//! `backhaul-sweep`, `density-sweep`, plus `stats` for trace inspection and
//! `synth` for synthetic trace generation. Configuration comes from a flat
//! key=value file with flag overrides; all defaults match the reference
//! parameter table.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use edgecache_sim::experiments::{run_and_emit, ExperimentConfig, Pipeline, TraceSource};
use edgecache_sim::trace::{generate_synthetic_trace, trace_stats, write_final_traces};

#[derive(Parser)]
#[command(name = "edgecache", about = "Proactive edge-caching trace simulator")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Extra key=value overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Trace file override (final-traces format).
    #[arg(long, global = true)]
    trace_file: Option<PathBuf>,

    /// Output directory override.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Run independent sweep points on a worker pool.
    #[arg(long, global = true)]
    parallel: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep per-cell storage budget; emits satisfaction and backhaul CSVs.
    StorageSweep,
    /// Sweep the backhaul/wireless capacity ratio at fixed storage.
    BackhaulSweep,
    /// Sweep CF training density; emits the satisfaction-RMSE curve.
    DensitySweep,
    /// Print descriptive statistics for the configured trace.
    Stats {
        /// Emit one CSV row (with header) instead of the key=value block.
        #[arg(long)]
        csv: bool,
    },
    /// Generate a synthetic trace and write it in final-traces format.
    Synth {
        /// Output path for the generated trace.
        #[arg(long)]
        out: PathBuf,
    },
}

fn build_config(common: &CommonArgs) -> edgecache_sim::Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    for setting in &common.set {
        let (key, value) = setting.split_once('=').ok_or_else(|| {
            edgecache_sim::Error::Parse(format!("--set expects KEY=VALUE, got: {setting}"))
        })?;
        config.set(key.trim(), value.trim())?;
    }
    if let Some(seed) = common.seed {
        config.master_seed = seed;
    }
    if let Some(path) = &common.trace_file {
        config.trace = TraceSource::File(path.clone());
    }
    if let Some(dir) = &common.out_dir {
        config.output_dir = dir.clone();
    }
    if common.parallel {
        config.parallel = true;
    }
    Ok(config)
}

fn run(cli: &Cli) -> edgecache_sim::Result<()> {
    let config = build_config(&cli.common)?;
    match &cli.command {
        Command::StorageSweep => emit_sweep(&config, "storage"),
        Command::BackhaulSweep => emit_sweep(&config, "backhaul"),
        Command::DensitySweep => emit_sweep(&config, "density"),
        Command::Stats { csv } => {
            let pipeline = Pipeline::prepare(&config)?;
            if pipeline.skipped_rows > 0 {
                eprintln!("skipped {} malformed rows", pipeline.skipped_rows);
            }
            let stats = trace_stats(
                &pipeline.catalog,
                &pipeline.log,
                config.num_cells,
                pipeline.skipped_rows,
            )?;
            if *csv {
                println!("{}", edgecache_sim::trace::TraceStats::csv_header());
                println!("{}", stats.to_csv_row());
            } else {
                print!("{}", stats.to_kv_block());
            }
            Ok(())
        }
        Command::Synth { out } => {
            let params = match &config.trace {
                TraceSource::Synthetic(p) => p.clone(),
                TraceSource::File(_) => {
                    return Err(edgecache_sim::Error::InvalidInput(
                        "synth requires a synthetic trace configuration".into(),
                    ))
                }
            };
            let (catalog, log) = generate_synthetic_trace(&params)?;
            let file = std::fs::File::create(out)
                .map_err(|e| edgecache_sim::Error::io(out.clone(), e))?;
            let mut writer = std::io::BufWriter::new(file);
            write_final_traces(&catalog, &log, &mut writer)
                .map_err(|e| edgecache_sim::Error::io(out.clone(), e))?;
            eprintln!(
                "wrote {} requests over {} contents to {}",
                log.len(),
                catalog.len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn emit_sweep(config: &ExperimentConfig, sweep: &str) -> edgecache_sim::Result<()> {
    let paths = run_and_emit(config, sweep)?;
    for path in paths {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
