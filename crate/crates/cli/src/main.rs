//! `fbmcode`: simulation, coding sweeps, κ estimation and water-filling from the command line.

mod args;
mod config_file;
mod selftest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use fbm_coding::gauss_rd::{self, curve_to_csv};
use fbm_coding::grid_paths::SamplerMethod;
use fbm_coding::lab::{self, ReportFormat, SweepConfig};
use fbm_coding::{Execution, FbmSampler, RngSpec};

use args::{Cli, Command, SampleArgs, SpectrumKind, SweepArgs, WaterfillArgs};

/// Default directory for outputs when `--output` is not given.
pub const OUTPUT_DIR_ENV: &str = "FBMCODE_OUTPUT_DIR";

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration; exit status 2.
    Config(String),
    /// Anything that went wrong while running; exit status 1.
    Runtime(anyhow::Error),
}

impl From<fbm_coding::Error> for CliError {
    fn from(e: fbm_coding::Error) -> Self {
        match e {
            fbm_coding::Error::Config(msg) => CliError::Config(msg),
            other => CliError::Runtime(other.into()),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match config_file::merge(argv) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match with_threads(cli.threads, || run(cli.command)) {
        Ok(code) => code,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(feature = "parallel")]
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T>
where
    CliError: Send,
{
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(e.into()))?
            .install(f),
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads<T>(_threads: Option<usize>, f: impl FnOnce() -> CliResult<T>) -> CliResult<T> {
    f()
}

fn run(command: Command) -> CliResult<ExitCode> {
    match command {
        Command::Sample(a) => sample(a)?,
        Command::Rd(a) => rd(a)?,
        Command::Kappa(a) => kappa(a)?,
        Command::Waterfill(a) => waterfill(a)?,
        Command::Selftest(a) => return Ok(selftest::run(a.seed)),
    }
    Ok(ExitCode::SUCCESS)
}

/// Writes `text` to `output`, to `$FBMCODE_OUTPUT_DIR/default_name`, or to stdout.
fn emit(text: &str, output: Option<&Path>, default_name: &str) -> CliResult<()> {
    let path: Option<PathBuf> = match output {
        Some(p) => Some(p.to_path_buf()),
        None => std::env::var_os(OUTPUT_DIR_ENV).map(|dir| PathBuf::from(dir).join(default_name)),
    };
    match path {
        Some(p) => fs::write(&p, text)
            .map_err(|e| CliError::Runtime(anyhow::anyhow!("writing {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn extension(format: ReportFormat) -> &'static str {
    match format {
        ReportFormat::Csv => "csv",
        ReportFormat::Json => "json",
    }
}

fn sample(a: SampleArgs) -> CliResult<()> {
    let method = if a.cholesky { SamplerMethod::Cholesky } else { SamplerMethod::Auto };
    let sampler = FbmSampler::with_method(a.hurst, a.horizon, a.n_per_unit, method)?;
    let path = sampler.sample(&RngSpec::new(a.seed));
    let text = match a.format {
        ReportFormat::Csv => {
            let mut s = String::from("t,value\n");
            for (k, v) in path.values().iter().enumerate() {
                s.push_str(&format!("{},{}\n", path.time(k), v));
            }
            s
        }
        ReportFormat::Json => serde_json::to_string_pretty(&path).map_err(anyhow::Error::from)? + "\n",
    };
    emit(&text, a.output.as_deref(), &format!("sample.{}", extension(a.format)))
}

fn sweep(a: &SweepArgs) -> CliResult<lab::SweepOutput> {
    let config: SweepConfig = a.to_config()?;
    let out = lab::rd_sweep(&config, Execution::Parallel)?;
    for d in &out.diagnostics {
        if let Some(note) = &d.note {
            eprintln!("rate {}: {note}", d.target_rate);
        }
    }
    if let Some(path) = &a.diagnostics {
        let text = serde_json::to_string_pretty(&out.diagnostics).map_err(anyhow::Error::from)?;
        fs::write(path, text + "\n")
            .map_err(|e| CliError::Runtime(anyhow::anyhow!("writing {}: {e}", path.display())))?;
    }
    Ok(out)
}

fn rd(a: SweepArgs) -> CliResult<()> {
    let out = sweep(&a)?;
    let text = lab::report_to_string(&out.records, a.format)?;
    emit(&text, a.output.as_deref(), &format!("rd.{}", extension(a.format)))
}

fn kappa(a: SweepArgs) -> CliResult<()> {
    let out = sweep(&a)?;
    let estimate = lab::kappa_estimate(&out.records, a.hurst);
    match estimate.plateau {
        Some(p) => eprintln!("plateau {p}"),
        None => eprintln!("no plateau"),
    }
    let text = lab::kappa_to_string(&[estimate], a.format)?;
    emit(&text, a.output.as_deref(), &format!("kappa.{}", extension(a.format)))
}

fn waterfill(a: WaterfillArgs) -> CliResult<()> {
    let (spec, hurst) = match a.spectrum {
        SpectrumKind::ExactBm => {
            if a.hurst != 0.5 {
                return Err(CliError::Config("hurst: the exact-bm spectrum needs hurst 0.5".into()));
            }
            (gauss_rd::exact_bm_spectrum(a.terms)?, 0.5)
        }
        SpectrumKind::Discretized => {
            if a.n > gauss_rd::MAX_DISCRETIZATION {
                return Err(CliError::Config(format!(
                    "n: at most {} points",
                    gauss_rd::MAX_DISCRETIZATION
                )));
            }
            (gauss_rd::covariance_spectrum(a.hurst, a.n)?, a.hurst)
        }
    };
    let rates = a.rates.0;
    if rates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config("rates: must be increasing".into()));
    }
    let curve = gauss_rd::kappa_rd_estimate(&spec, hurst, &rates)?;
    if let Some(path) = &a.eigenvalues {
        spec.write_csv(path)?;
    }
    let text = match a.format {
        ReportFormat::Csv => curve_to_csv(&curve)?,
        ReportFormat::Json => serde_json::to_string_pretty(&curve).map_err(anyhow::Error::from)? + "\n",
    };
    emit(&text, a.output.as_deref(), &format!("waterfill.{}", extension(a.format)))
}
