//! Command-line front end.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::classifier::{classify_em_hml, classify_mom, CandidateSet, ClassificationResult};
use crate::constellation::parse_format_list;
use crate::em::EmOptions;
use crate::error::{Error, Result};
use crate::experiment::{
    plot_series, read_results, run_experiment_with_threads, write_results, AggregateResult, ExperimentConfig,
    ResultFormat,
};
use crate::iq::{load_iq_block, IqFormat};

pub const THREADS_ENV: &str = "MODEMFUSE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "modemfuse", version, about = "Multi-radio EM-based modulation classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Em,
    Mom,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep described by a JSON config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        /// Output file; `.json` writes JSON, anything else CSV. Defaults to stdout CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Classify one IQ block read from a `sensor,n,re,im` CSV file.
    Classify {
        #[arg(long)]
        iq: PathBuf,
        #[arg(long, default_value = "16qam,32qam,64qam")]
        candidates: String,
        #[arg(long, value_enum, default_value = "em")]
        method: MethodArg,
        #[arg(long, default_value_t = 1e-4)]
        delta: f64,
    },
    /// Run the stopping-criterion study (SNR 0 and 5 dB).
    Tables {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Emit Pc-versus-SNR series from a results file.
    Plotdata {
        #[arg(long)]
        results: PathBuf,
    },
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{THREADS_ENV}='{v}' is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn emit(results: &[AggregateResult], out: Option<&PathBuf>, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => write_results(results, path, ResultFormat::from_path(path)),
        None => {
            let bytes = crate::experiment::results_csv(results)?;
            stdout.write_all(&bytes).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn tables_config(trials: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        snr_db_list: vec![0.0, 5.0],
        sensor_counts: vec![1, 2, 4],
        stop_deltas: vec![1e-4, 1e-3],
        trials,
        master_seed: seed,
        ..ExperimentConfig::default()
    }
}

fn print_tables(results: &[AggregateResult], config: &ExperimentConfig, out: &mut dyn Write) -> std::io::Result<()> {
    for &snr in &config.snr_db_list {
        writeln!(out, "Effect of stopping criterion (SNR = {snr} dB, {} trials)", config.trials)?;
        write!(out, "{:>12}", "")?;
        for l in &config.sensor_counts {
            write!(out, " | {:^15}", format!("L={l}"))?;
        }
        writeln!(out)?;
        write!(out, "{:>12}", "criterion")?;
        for _ in &config.sensor_counts {
            write!(out, " | {:>6} {:>8}", "iter", "Pc")?;
        }
        writeln!(out)?;
        for &delta in &config.stop_deltas {
            write!(out, "{:>12}", format!("delta={delta:e}"))?;
            for &l in &config.sensor_counts {
                let cell = results
                    .iter()
                    .find(|r| r.snr_db == snr && r.sensors == l && r.delta == delta);
                match cell {
                    Some(r) => write!(out, " | {:>6.0} {:>8.3}", r.mean_iterations, r.pc)?,
                    None => write!(out, " | {:>6} {:>8}", "-", "-")?,
                }
            }
            writeln!(out)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn print_classification(result: &ClassificationResult, candidates: &CandidateSet, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "hypothesis,llf,iterations")?;
    for (i, spec) in candidates.iter().enumerate() {
        let iters = result
            .per_hypothesis_em
            .as_ref()
            .map_or(0, |runs| runs[i].iterations);
        writeln!(out, "{},{},{}", spec.format(), result.per_hypothesis_llf[i], iters)?;
    }
    writeln!(out, "decision: {}", candidates[result.decision].format())
}

fn run(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<stdout>", e);
    match cli.command {
        Command::Sweep {
            config,
            seed,
            trials,
            out,
            threads,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            let out = out.or_else(|| cfg.output_path.clone());
            let results = run_experiment_with_threads(&cfg, thread_count(threads)?)?;
            emit(&results, out.as_ref(), stdout)?;
            if let Some(path) = &out {
                writeln!(stderr, "wrote {} cells to {}", results.len(), path.display()).map_err(io)?;
            }
        }
        Command::Classify {
            iq,
            candidates,
            method,
            delta,
        } => {
            let set = CandidateSet::new(&parse_format_list(&candidates)?)?;
            let block = load_iq_block(&iq, IqFormat::Csv)?;
            let options = EmOptions::with_delta(delta);
            options.validate()?;
            let result = match method {
                MethodArg::Em => classify_em_hml(&block, &set, &options)?,
                MethodArg::Mom => classify_mom(&block, &set, &options)?,
            };
            print_classification(&result, &set, stdout).map_err(io)?;
        }
        Command::Tables {
            trials,
            seed,
            out,
            threads,
        } => {
            let cfg = tables_config(trials, seed);
            cfg.validate()?;
            let results = run_experiment_with_threads(&cfg, thread_count(threads)?)?;
            print_tables(&results, &cfg, stdout).map_err(io)?;
            if let Some(path) = &out {
                write_results(&results, path, ResultFormat::from_path(path))?;
            }
        }
        Command::Plotdata { results } => {
            let rows = read_results(&results, ResultFormat::from_path(&results))?;
            let mut w = csv::Writer::from_writer(Vec::new());
            for p in plot_series(&rows) {
                w.serialize(p).map_err(|e| Error::Usage(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Usage(e.to_string()))?;
            stdout.write_all(&bytes).map_err(io)?;
        }
    }
    Ok(())
}

/// Exit code for an error: 2 for numeric failures, 1 for everything else.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numeric() {
        2
    } else {
        1
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn cli_main<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match run(cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}
