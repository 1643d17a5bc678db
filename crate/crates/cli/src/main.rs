use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use phaseconv::{emit, parse_config, run_sweep, Experiment, Format};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Parser, Debug)]
#[command(name = "phaseconv", version, about = "Parameter sweeps for phase-reference conversion by estimation")]
struct Cli {
    /// u1-fom | u1-posterior | u1-rates | zd | mixed-bound | mixed-oracle
    #[arg(value_parser = |s: &str| s.parse::<Experiment>())]
    experiment: Experiment,
    /// JSON sweep description
    #[arg(long)]
    config: PathBuf,
    /// Output file (default: the config's "output", else stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Overrides the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all available cores)
    #[arg(long)]
    jobs: Option<usize>,
    /// Record wall time in JSON metadata (makes output non-reproducible)
    #[arg(long)]
    timing: bool,
}

const EXIT_VALIDATION: u8 = 1;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_VALIDATION) } else { ExitCode::SUCCESS };
        }
    };

    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", cli.config.display());
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let mut config = match parse_config(&text, cli.experiment) {
        Ok(c) => c,
        Err(errors) => {
            eprint!("{}: {errors}", cli.config.display());
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }

    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot start worker pool: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let start = Instant::now();
    let mut result = pool.install(|| run_sweep(&config));
    if cli.timing {
        result.metadata.wall_time_s = Some(start.elapsed().as_secs_f64());
    }

    for (key, value) in &result.metadata.extra {
        log::info!("{key}: {value}");
    }
    if result.failed_rows() > 0 {
        eprintln!("{} of {} rows failed", result.failed_rows(), result.rows.len());
    }

    let format = match cli.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    };
    let written = match cli.out.or(config.output.clone()) {
        Some(path) => File::create(&path).and_then(|f| {
            let mut w = BufWriter::new(f);
            emit::emit(&result, format, &mut w)?;
            w.flush()
        }),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            emit::emit(&result, format, &mut lock).and_then(|_| lock.flush())
        }
    };
    if let Err(e) = written {
        eprintln!("cannot write output: {e}");
        return ExitCode::from(EXIT_VALIDATION);
    }
    ExitCode::from(result.exit_code() as u8)
}
