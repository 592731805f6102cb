//! Command-line front end: simulate series, fit single models, run model
//! averaging and score the outputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use dqma::dgp::{simulate_abrupt, simulate_smooth};
use dqma::io::{
    dma_report, load_csv, score_dma_file, score_fit_files, write_dma_csv, write_fit_csv,
    write_fit_forecasts_csv, write_series_csv, write_truth_csv, RunConfig,
};
use dqma::{fit_full_model, run_dma, QuantileConfig};
use log::info;

#[derive(Parser)]
#[command(name = "dqma", version, about = "Time-varying quantile regression with dynamic model averaging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    Smooth,
    Abrupt,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a series and write it with its ground truth.
    Simulate {
        #[arg(long, value_enum, default_value = "smooth")]
        scenario: Scenario,
        #[arg(long, default_value_t = 200)]
        length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Fit the model with every regressor and write coefficient summaries.
    Fit {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Number of lagged responses appended as regressors.
        #[arg(long, default_value_t = 0)]
        lags: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write one-step forecasts here.
        #[arg(long)]
        forecasts: Option<PathBuf>,
    },
    /// Average over all regressor subsets with forgetting.
    Dma {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        lags: usize,
        #[arg(long)]
        out: PathBuf,
        /// Write the end-of-run report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score a fit against a truth file, or a model-averaging stream.
    Score {
        #[arg(long, requires = "truth", conflicts_with = "dma")]
        fit: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        dma: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Simulate {
            scenario,
            length,
            seed,
            out,
            truth,
        } => {
            let sim = match scenario {
                Scenario::Smooth => simulate_smooth(length, seed)?,
                Scenario::Abrupt => simulate_abrupt(length, seed)?,
            };
            write_series_csv(&out, &sim.to_series()?)?;
            if let Some(t) = truth {
                write_truth_csv(&t, &sim)?;
            }
        }
        Command::Fit {
            config,
            data,
            lags,
            out,
            forecasts,
        } => {
            let cfg = load_config(config.as_deref())?;
            let series = load_csv(&data, lags).with_context(|| format!("reading {}", data.display()))?;
            let mut fits = Vec::new();
            for (i, &tau) in cfg.taus.iter().enumerate() {
                info!("fitting tau={tau}");
                let qc = QuantileConfig::new(tau)?;
                fits.push((tau, fit_full_model(&series, &qc, &cfg.settings(i))?));
            }
            write_fit_csv(&out, &cfg, &fits)?;
            if let Some(f) = forecasts {
                write_fit_forecasts_csv(&f, &cfg, &series, &fits)?;
            }
        }
        Command::Dma {
            config,
            data,
            lags,
            out,
            report,
        } => {
            let cfg = load_config(config.as_deref())?;
            let series = load_csv(&data, lags).with_context(|| format!("reading {}", data.display()))?;
            let mut runs = Vec::new();
            for (i, &tau) in cfg.taus.iter().enumerate() {
                info!("averaging tau={tau}");
                let qc = QuantileConfig::new(tau)?;
                runs.push((tau, run_dma(&series, &qc, &cfg.settings(i))?));
            }
            write_dma_csv(&out, &cfg, &runs)?;
            let text = dma_report(&cfg, &series.column_names, &runs);
            match report {
                Some(p) => fs::write(&p, text)?,
                None => print!("{text}"),
            }
        }
        Command::Score { fit, truth, dma } => match (fit, truth, dma) {
            (Some(f), Some(t), None) => {
                println!("tau,coefficient,mean_pinball,coverage");
                for s in score_fit_files(&f, &t)? {
                    let cov = s.score.coverage.map_or(String::new(), |c| c.to_string());
                    println!("{},{},{},{}", s.tau, s.coefficient, s.score.mean_pinball, cov);
                }
            }
            (None, None, Some(d)) => {
                println!("tau,mean_pinball");
                for (tau, s) in score_dma_file(&d)? {
                    println!("{tau},{}", s.mean_pinball);
                }
            }
            _ => bail!("give either --fit with --truth, or --dma"),
        },
    }
    Ok(())
}
