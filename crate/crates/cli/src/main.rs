use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dp_budget::accountant::{account, calibrate_sigma, tradeoff_curve, AccountantKind, SubsampledGaussianSpec};
use dp_budget::config::{load_json, parse_json};
use dp_budget::report::{sig6, GuaranteeReport};
use dp_budget::train::{run_job, Algorithm, RunArtifact, TrainJob};
use dp_budget::tuning::{comparison_report, ComparisonRow, TuningConfig};
use dp_budget::{Error, Execution, PrivacyGuarantee};

#[derive(Parser)]
#[command(name = "dp-budget", version, about = "Differential-privacy budgeting for DP training")]
struct Cli {
    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Accountant {
    RdpClassic,
    RdpImproved,
    Pld,
}

impl From<Accountant> for AccountantKind {
    fn from(a: Accountant) -> Self {
        match a {
            Accountant::RdpClassic => AccountantKind::RdpClassic,
            Accountant::RdpImproved => AccountantKind::RdpImproved,
            Accountant::Pld => AccountantKind::Pld,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Table,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Account a Poisson-subsampled Gaussian run and print epsilon.
    Epsilon {
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        q: f64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        steps: u64,
        #[arg(long)]
        delta: f64,
        #[arg(long, value_enum, default_value = "rdp-improved")]
        accountant: Accountant,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Smallest noise multiplier meeting a target epsilon.
    Calibrate {
        #[arg(long)]
        target_eps: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        q: f64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        steps: u64,
        #[arg(long, value_enum, default_value = "rdp-improved")]
        accountant: Accountant,
    },
    /// Effective noise sigma/B against batch size at fixed privacy, as CSV.
    Tradeoff {
        #[arg(long)]
        n: u64,
        /// One or more target epsilons.
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        #[arg(long)]
        delta: f64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        steps: u64,
        /// Batch sizes; defaults to powers of two from 16 up to n/2.
        #[arg(long, value_delimiter = ',')]
        batches: Vec<u64>,
        #[arg(long, value_enum, default_value = "rdp-improved")]
        accountant: Accountant,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the privacy cost of hyperparameter-tuning schemes.
    TuningCost {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: TableFormat,
        /// Also write the CSV table here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run a training job; writes trace.csv and run.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Overrides the training seed in the config.
        #[arg(long, env = "DP_BUDGET_SEED")]
        seed: Option<u64>,
    },
    /// Render the guarantee report of a run artifact.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match run(cli.command, exec) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Infeasible(_) => 3,
                _ => 2,
            })
        }
    }
}

fn write(path: &Path, text: &str) -> dp_budget::Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn run(cmd: Command, exec: Execution) -> dp_budget::Result<String> {
    match cmd {
        Command::Epsilon { sigma, q, steps, delta, accountant, format } => {
            let spec = SubsampledGaussianSpec::new(sigma, q, steps)?;
            let a = account(&spec, delta, accountant.into())?;
            Ok(match format {
                Format::Json => serde_json::to_string_pretty(&a.guarantee)? + "\n",
                Format::Text => {
                    let mut s = format!("epsilon={}\ndelta={}\n", sig6(a.guarantee.epsilon), sig6(delta));
                    if let Some(order) = a.order {
                        s.push_str(&format!("order={}\n", sig6(order)));
                    }
                    s.push_str(&format!("accountant={}\n", a.guarantee.accountant));
                    s
                }
            })
        }
        Command::Calibrate { target_eps, delta, q, steps, accountant } => {
            let target = PrivacyGuarantee::new(target_eps, delta)?;
            let sigma = calibrate_sigma(&target, q, steps, accountant.into())?;
            let achieved = account(&SubsampledGaussianSpec::new(sigma, q, steps)?, delta, accountant.into())?;
            Ok(format!("sigma={}\nepsilon={}\n", sig6(sigma), sig6(achieved.guarantee.epsilon)))
        }
        Command::Tradeoff { n, eps, delta, steps, batches, accountant, out } => {
            let batches = if batches.is_empty() {
                std::iter::successors(Some(16u64), |b| b.checked_mul(2)).take_while(|&b| b <= n / 2).collect()
            } else {
                batches
            };
            let mut csv = String::from("epsilon,batch_size,sigma,sigma_eff\n");
            for e in eps {
                let curve = tradeoff_curve(n, e, delta, steps, &batches, accountant.into(), exec)?;
                for p in &curve.points {
                    csv.push_str(&format!("{},{},{},{}\n", sig6(e), p.batch_size, sig6(p.sigma), sig6(p.sigma_eff)));
                }
            }
            match out {
                Some(path) => {
                    write(&path, &csv)?;
                    Ok(format!("wrote {}\n", path.display()))
                }
                None => Ok(csv),
            }
        }
        Command::TuningCost { config, format, csv } => {
            let cfg: TuningConfig = load_json(&config)?;
            cfg.validate()?;
            let rows = comparison_report(&cfg.base_cost()?, &cfg.schemes, cfg.delta, exec);
            let csv_text = ComparisonRow::to_csv(&rows)?;
            if let Some(path) = csv {
                write(&path, &csv_text)?;
            }
            Ok(match format {
                TableFormat::Table => ComparisonRow::to_table(&rows),
                TableFormat::Csv => csv_text,
            })
        }
        Command::Train { config, out_dir, seed } => {
            let mut job: TrainJob = load_json(&config)?;
            if let Some(s) = seed {
                match &mut job.algorithm {
                    Algorithm::DpSgd { train }
                    | Algorithm::Microbatch { train, .. }
                    | Algorithm::Accumulated { train, .. } => train.seed = s,
                    Algorithm::Fedavg { fed, .. } => fed.seed = s,
                }
            }
            let (artifact, trace) = run_job(&job)?;
            std::fs::create_dir_all(&out_dir)?;
            let trace_path = out_dir.join("trace.csv");
            let run_path = out_dir.join("run.json");
            write(&trace_path, &trace.to_csv())?;
            write(&run_path, &(serde_json::to_string_pretty(&artifact)? + "\n"))?;
            Ok(format!(
                "algorithm={}\nepsilon={}\ndelta={}\ntest_accuracy={}\ntrace={}\nartifact={}\n",
                artifact.algorithm,
                sig6(artifact.guarantee.epsilon),
                sig6(artifact.guarantee.delta),
                sig6(artifact.test_accuracy),
                trace_path.display(),
                run_path.display()
            ))
        }
        Command::Report { run, format } => {
            let artifact: RunArtifact = parse_json(&std::fs::read_to_string(&run)?)?;
            let report = GuaranteeReport::from_artifact(&artifact)?;
            Ok(match format {
                Format::Text => report.to_text(),
                Format::Json => serde_json::to_string_pretty(&report)? + "\n",
            })
        }
    }
}
