use crate::config::ExperimentConfig;
use crate::experiment::{datapoints, run_experiment, ProposalSet};
use crate::report::{emit_plots, read_results, write_truth_csv, CONFIG_FILE, RESULTS_FILE, TRUTH_FILE};
use crate::setup::{save_proposal, train_role, BenchModel, Role};
use crate::BenchError;
use amci::training::write_trace_csv;
use clap::{Args, Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "amci", version, about = "Amortized Monte Carlo integration experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one proposal and write its checkpoint and loss trace.
    Train {
        #[command(flatten)]
        common: Common,
        /// q1, q1-minus or q2.
        #[arg(long)]
        role: String,
        /// Checkpoint file to write; defaults to `<out>/<role>.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Sweep the configured estimators and write result tables.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Directory holding `q1.ckpt`, `q2.ckpt` (and optionally
        /// `q1-minus.ckpt`); overrides the config paths.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Turn `<out>/results.csv` into plot data and a gnuplot script.
    Plot {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Precompute ground truths for the configured datapoints.
    Truth {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, BenchError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.resolve()
}

fn prepare_out(dir: &Path, cfg: &ExperimentConfig) -> Result<(), BenchError> {
    fs::create_dir_all(dir).map_err(|e| BenchError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(CONFIG_FILE);
    fs::write(&path, cfg.to_toml()).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))
}

pub fn execute(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Train { common, role, checkpoint } => {
            let role: Role = role.parse()?;
            let cfg = load(&common)?;
            prepare_out(&common.out, &cfg)?;
            let model = BenchModel::new(cfg.model);
            let (q, report) = train_role(&cfg, &model, role)?;
            let path = checkpoint.unwrap_or_else(|| common.out.join(role.file_name()));
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| BenchError::Io(format!("{}: {e}", parent.display())))?;
            }
            save_proposal(&q, &cfg, role, &report, &path)?;
            let trace = common.out.join(format!("{role}.trace.csv"));
            let file = fs::File::create(&trace).map_err(|e| BenchError::Io(format!("{}: {e}", trace.display())))?;
            write_trace_csv(file, &report.trace).map_err(|e| BenchError::Io(format!("{}: {e}", trace.display())))?;
            eprintln!(
                "trained {role} for {} steps ({} dataset refreshes); best validation loss {} at step {}; wrote {}",
                report.steps,
                report.refreshes,
                report.best_val_loss,
                report.best_step,
                path.display()
            );
            Ok(())
        }
        Command::Run { common, jobs, checkpoint } => {
            let cfg = load(&common)?;
            prepare_out(&common.out, &cfg)?;
            let model = BenchModel::new(cfg.model);
            let proposals = ProposalSet::prepare(&cfg, &model, checkpoint.as_deref())?;
            let points = datapoints(&cfg, &model, jobs)?;
            let report = run_experiment(&cfg, &model, &proposals, points, jobs, checkpoint.as_deref())?;
            report.write_dir(&common.out)?;
            eprintln!("wrote {}", common.out.join(RESULTS_FILE).display());
            Ok(())
        }
        Command::Plot { out } => {
            let rows = read_results(&out.join(RESULTS_FILE))?;
            let files = emit_plots(&rows, &out.join("plot"))?;
            if files.is_empty() {
                eprintln!("warning: no estimator rows in {}; nothing to plot", out.join(RESULTS_FILE).display());
            } else {
                eprintln!("wrote {} plot files to {}", files.len(), out.join("plot").display());
            }
            Ok(())
        }
        Command::Truth { common, jobs } => {
            let mut cfg = load(&common)?;
            cfg.truth.cache = None;
            prepare_out(&common.out, &cfg)?;
            let model = BenchModel::new(cfg.model);
            let points = datapoints(&cfg, &model, jobs)?;
            let path = common.out.join(TRUTH_FILE);
            write_truth_csv(&path, &points)?;
            eprintln!("wrote {} ground truths to {}", points.len(), path.display());
            Ok(())
        }
    }
}
