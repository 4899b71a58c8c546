use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cipherid::leveled::BackendKind;
use cipherid::regressors::{write_io_csv, TaskSpec};
use cipherid_cli::datagen::gen_io;
use cipherid_cli::reporting::{collect, task_label, write_report};
use cipherid_cli::runner::{run_identify, validate_run, RunConfig, VerdictFile};

/// Encrypted system identification: benchmark data, runs, and reports.
#[derive(Debug, Parser)]
#[command(name = "cipherid", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TaskArg {
    /// Transfer-function model of the third-order benchmark plant
    Tf,
    /// State-space model (canonical form, measured state)
    Ssm,
    /// Multi-step predictor over a two-step horizon
    Msp,
}

impl TaskArg {
    fn spec(self) -> TaskSpec {
        match self {
            TaskArg::Tf => TaskSpec::TransferFunction { n: 3, m: 2 },
            TaskArg::Ssm => TaskSpec::StateSpace { n: 3, n_u: 1 },
            TaskArg::Msp => TaskSpec::MultiStep { n: 3, horizon: 2 },
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    /// Level accounting only; arithmetic stays exact f64
    Exact,
    /// Fixed-point rounding plus keyed per-multiplication noise
    Fixed,
}

impl BackendArg {
    fn kind(self) -> BackendKind {
        match self {
            BackendArg::Exact => BackendKind::Exact,
            BackendArg::Fixed => BackendKind::FixedPoint,
        }
    }
}

#[derive(Debug, Args)]
struct DataFlags {
    /// Model structure to identify
    #[arg(long, value_enum)]
    task: TaskArg,
    /// Number of input/output records
    #[arg(long = "L", default_value_t = 20)]
    samples: usize,
    /// Measurement noise standard deviation on the outputs
    #[arg(long, default_value_t = 1e-3)]
    noise_std: f64,
    /// Seed for record synthesis (inputs and noise use separate substreams)
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct RunFlags {
    #[command(flatten)]
    data: DataFlags,
    /// Target accuracy the reliability plan must certify
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    /// Arithmetic backend for the homomorphic emulation
    #[arg(long, value_enum, default_value_t = BackendArg::Exact)]
    backend: BackendArg,
    /// Fixed-point fractional bits (quantization step 2^-scale_bits)
    #[arg(long, default_value_t = 30)]
    scale_bits: u32,
    /// Multiplicative depth of the emulated scheme
    #[arg(long, default_value_t = 23)]
    max_level: u32,
    /// Division iteration count (default: server policy)
    #[arg(long)]
    k_div: Option<u32>,
    /// Inversion iteration count (default: derived from epsilon;
    /// 0 probes the initialization only)
    #[arg(long)]
    k_inv: Option<u32>,
}

impl RunFlags {
    fn config(&self, out_dir: PathBuf) -> RunConfig {
        RunConfig {
            task: self.data.task.spec(),
            samples: self.data.samples,
            noise_std: self.data.noise_std,
            seed: self.data.seed,
            epsilon: self.epsilon,
            backend: self.backend.kind(),
            scale_bits: self.scale_bits,
            max_level: self.max_level,
            k_div: self.k_div,
            k_inv: self.k_inv,
            out_dir,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize benchmark records into <out>/data.csv
    GenData {
        #[command(flatten)]
        flags: DataFlags,
        /// Run directory to create or reuse
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one identification exchange in <out> (request, response, verdict)
    Identify {
        #[command(flatten)]
        flags: RunFlags,
        /// Run directory to create or reuse
        #[arg(long)]
        out: PathBuf,
    },
    /// Decrypt and re-check the certificates of an existing run directory
    Validate {
        /// Run directory holding request.json and response.json
        #[arg(long)]
        dir: PathBuf,
        /// Stricter magnitude floor to verify against (default: the plan's)
        #[arg(long)]
        q: Option<f64>,
    },
    /// Aggregate run verdicts into <out>/report.csv and <out>/report.txt
    Report {
        /// Directory to write the report files into
        #[arg(long)]
        out: PathBuf,
        /// Run directories to include, in order
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
    /// Run consecutive seeds and write a combined report into <out>
    Sweep {
        #[command(flatten)]
        flags: RunFlags,
        /// Parent directory for the per-seed run directories and the report
        #[arg(long)]
        out: PathBuf,
        /// Number of runs; seeds count up from --seed
        #[arg(long, default_value_t = 20)]
        runs: u64,
    },
}

fn verdict_summary(v: &VerdictFile) -> String {
    let err = v
        .final_error
        .map(|e| format!("{e:.3e}"))
        .unwrap_or_else(|| "n/a".to_string());
    format!(
        "task={} mode={} seed={} backend={} error={} guaranteed={}",
        task_label(&v.task),
        v.mode.as_str(),
        v.seed.map(|s| s.to_string()).unwrap_or_else(|| "-".into()),
        v.backend.as_str(),
        err,
        v.guaranteed
    )
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { flags, out } => {
            let task = flags.task.spec();
            let data = gen_io(&task, flags.samples, flags.noise_std, flags.seed)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("data.csv");
            write_io_csv(&path, &data)?;
            println!(
                "wrote {} ({} records, task {})",
                path.display(),
                data.samples(),
                task_label(&task)
            );
        }
        Command::Identify { flags, out } => {
            let config = flags.config(out.clone());
            let verdict = run_identify(&config)
                .with_context(|| format!("identify run in {}", out.display()))?;
            println!("{}", verdict_summary(&verdict));
            println!("artifacts in {}", out.display());
        }
        Command::Validate { dir, q } => {
            let verdict = validate_run(&dir, q)
                .with_context(|| format!("validating {}", dir.display()))?;
            println!("{}", verdict_summary(&verdict));
        }
        Command::Report { out, dirs } => {
            let rows = collect(&dirs)?;
            let (csv, txt) = write_report(&out, &rows)?;
            println!("wrote {} and {}", csv.display(), txt.display());
        }
        Command::Sweep { flags, out, runs } => {
            anyhow::ensure!(runs >= 1, "--runs must be at least 1");
            let label = task_label(&flags.data.task.spec());
            let mut dirs = Vec::with_capacity(runs as usize);
            for i in 0..runs {
                let seed = flags.data.seed + i;
                let dir = out.join(format!("run-{label}-{seed:04}"));
                let mut config = flags.config(dir.clone());
                config.seed = seed;
                let verdict = run_identify(&config)
                    .with_context(|| format!("sweep run for seed {seed}"))?;
                println!("{}", verdict_summary(&verdict));
                dirs.push(dir);
            }
            let rows = collect(&dirs)?;
            let (csv, txt) = write_report(&out, &rows)?;
            println!("wrote {} and {}", csv.display(), txt.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
