use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use neurolesion::data::{generate_dataset, DatasetParams};
use neurolesion::experiment::{run_scenario, summarize_dir, sweep_all, ScenarioConfig, Settings, LATE_DEATH_FRAC};
use neurolesion::lesion::LesionMode;
use neurolesion::{Error, Result};

#[derive(Parser)]
#[command(
    name = "neurolesion",
    version,
    about = "Dead-neuron lesion experiments on dense and spiking networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its JSON report.
    Run {
        #[arg(long)]
        scenario: u8,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[command(flatten)]
        common: Common,
        /// Report path; CSV exports are written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run all six scenarios and write reports plus a summary.
    Sweep {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dataset utilities.
    Data {
        #[command(subcommand)]
        command: DataCommand,
    },
    /// Summaries of saved reports.
    Report {
        #[command(subcommand)]
        command: ReportCommand,
    },
    /// Settings utilities.
    Config {
        #[command(subcommand)]
        command: ConfigCommand,
    },
}

#[derive(Subcommand)]
enum ConfigCommand {
    /// Print the default settings as JSON, for use with `--config`.
    Default,
}

#[derive(Subcommand)]
enum DataCommand {
    /// Write the synthetic dataset as CSV.
    Gen {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Print the summary table of the reports in a sweep directory.
    Summarize { dir: PathBuf },
}

#[derive(Args)]
struct Common {
    /// Lesion time as a fraction of total training steps.
    #[arg(long)]
    death_frac: Option<f64>,
    /// Use the late-death fraction (0.8).
    #[arg(long, conflicts_with = "death_frac")]
    late: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    snn_epochs: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    dataset_seed: Option<u64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    keep: Option<f64>,
    /// zero_incoming, zero_outgoing or zero_both.
    #[arg(long)]
    lesion_mode: Option<String>,
    /// Let the dead neuron's weights keep training.
    #[arg(long)]
    no_freeze: bool,
    /// Full settings as JSON; flags override individual fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn settings(&self, seeds: u64) -> Result<Settings> {
        let mut s = match &self.config {
            Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => Settings::default(),
        };
        if seeds == 0 {
            return Err(Error::Config("--seeds must be at least 1".into()));
        }
        s.seeds = (1..=seeds).collect();
        if let Some(f) = self.death_frac {
            s.lesion.death_frac = f;
        }
        if self.late {
            s.lesion.death_frac = LATE_DEATH_FRAC;
        }
        if let Some(e) = self.epochs {
            s.train.epochs = e;
        }
        if let Some(e) = self.snn_epochs {
            s.snn_epochs = e;
        }
        if let Some(k) = self.folds {
            s.k_folds = k;
        }
        if let Some(d) = self.dataset_seed {
            s.dataset_seed = d;
        }
        if let Some(l) = self.l2 {
            s.train.l2_lambda = l;
        }
        if let Some(k) = self.keep {
            s.train.dropout_keep = k;
        }
        if let Some(m) = &self.lesion_mode {
            s.lesion.mode = match m.as_str() {
                "zero_incoming" => LesionMode::ZeroIncoming,
                "zero_outgoing" => LesionMode::ZeroOutgoing,
                "zero_both" => LesionMode::ZeroBoth,
                other => return Err(Error::Config(format!("unknown lesion mode {other:?}"))),
            };
        }
        if self.no_freeze {
            s.lesion.freeze = false;
        }
        s.validate()?;
        Ok(s)
    }
}

fn with_extension_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("NEUROLESION_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("NEUROLESION_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Run(e.to_string()))
}

fn execute(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Run {
            scenario,
            seeds,
            common,
            out,
        } => {
            let cfg = ScenarioConfig::table(scenario, &common.settings(seeds)?)?;
            let report = run_scenario(&cfg)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(&out, report.to_json()?)?;
            fs::write(with_extension_suffix(&out, "_seeds.csv"), report.seeds_csv())?;
            fs::write(
                with_extension_suffix(&out, "_compensation.csv"),
                report.compensation_csv(),
            )?;
            let a = &report.aggregate;
            println!(
                "scenario {}: {} ok, {} failed, median D {}, impact {}",
                scenario,
                a.seeds_ok,
                a.seeds_failed,
                a.median_degradation.map_or("-".into(), |d| format!("{d:.4}")),
                a.impact.class.map_or("-".into(), |c| c.to_string())
            );
        }
        Command::Sweep { seeds, common, out } => {
            let summary = sweep_all(&common.settings(seeds)?, &out)?;
            print!("{}", summary.to_table());
            if summary.partial {
                return Err(Error::Run("one or more scenarios failed".into()));
            }
        }
        Command::Data {
            command: DataCommand::Gen { seed, out },
        } => {
            let ds = generate_dataset(seed, DatasetParams::default())?;
            fs::write(&out, ds.to_csv())?;
        }
        Command::Config {
            command: ConfigCommand::Default,
        } => {
            print!("{}", neurolesion::experiment::to_canonical_json(&Settings::default())?);
        }
        Command::Report {
            command: ReportCommand::Summarize { dir },
        } => {
            print!("{}", summarize_dir(&dir)?.to_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Shape(_) | Error::Domain(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
