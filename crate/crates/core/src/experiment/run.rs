//! Batch execution and artifact layout.
//!
//! ```text
//! <out>/resolved.toml      fully resolved config, re-parses to itself
//! <out>/constants.toml     bound constants including U0, H, G
//! <out>/<mode>/summary.csv
//! <out>/<mode>/regret.csv
//! <out>/<mode>/regret.svg
//! <out>/<mode>/estimate.svg   scalar systems only
//! <out>/<mode>/traces/run_NNN.csv
//! <out>/<mode>/database/run_NNN.csv
//! <out>/comparison.svg     and comparison.csv, multi-mode runs only
//! ```

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiment::config::{ExperimentConfig, ModeKind};
use crate::experiment::output::{self, SummaryRow, SUMMARY_BURN_IN};
use crate::experiment::plot;
use crate::sim::monte_carlo::monte_carlo;
use crate::sim::regret::fit_regret_exponent;

#[derive(Debug, Clone, PartialEq)]
pub struct ModeReport {
    pub mode: ModeKind,
    pub runs: usize,
    pub aborted: usize,
    pub terminal_mean_regret: Option<f64>,
    /// Exponent of the mean regret curve, if it has a usable fit.
    pub exponent: Option<f64>,
    pub mean_regret: Vec<f64>,
    pub std_regret: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub modes: Vec<ModeReport>,
}

impl RunReport {
    /// Every episode of some mode aborted.
    pub fn batch_failed(&self) -> bool {
        self.modes.iter().any(|m| m.aborted == m.runs)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Runs the configured mode.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunReport> {
    run_modes(cfg, &[cfg.mode], out_dir)
}

/// Runs naive, self-correcting and oracle-clean on the same seeds and adds
/// a comparison figure.
pub fn run_comparison(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunReport> {
    run_modes(
        cfg,
        &[ModeKind::Naive, ModeKind::SelfCorrecting, ModeKind::OracleClean],
        out_dir,
    )
}

pub fn run_modes(cfg: &ExperimentConfig, modes: &[ModeKind], out_dir: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let (resolved, consts) = cfg.resolve()?;
    mkdir(out_dir)?;
    write_text(&out_dir.join("resolved.toml"), &resolved.to_toml()?)?;
    let consts_text = toml::to_string(&consts).map_err(|e| Error::Io(e.to_string()))?;
    write_text(&out_dir.join("constants.toml"), &consts_text)?;

    let truth = resolved.truth()?;
    let scalar = truth.n() == 1 && truth.m() == 1;
    let mut reports = Vec::new();
    for &mode in modes {
        let dir = out_dir.join(mode.as_str());
        mkdir(&dir)?;
        let episode = resolved.episode_config(mode, &consts)?;
        // Traces come back in episode-index order.
        let batch = monte_carlo(&episode, resolved.runs, resolved.base_seed)?;

        let rows: Vec<SummaryRow> = batch
            .traces
            .iter()
            .enumerate()
            .map(|(i, t)| SummaryRow::from_trace(i, t))
            .collect();
        output::write_summary_csv(&rows, create(&dir.join("summary.csv"))?)?;

        let (mean, std) = output::regret_band(&batch.traces);
        output::write_regret_csv(&[(mode.as_str(), &mean, &std)], create(&dir.join("regret.csv"))?)?;

        if resolved.output.traces {
            let tdir = dir.join("traces");
            mkdir(&tdir)?;
            for (i, t) in batch.traces.iter().enumerate() {
                output::write_trace_csv(t, create(&tdir.join(format!("run_{i:03}.csv")))?)?;
            }
        }
        if resolved.output.database_dump {
            let ddir = dir.join("database");
            mkdir(&ddir)?;
            for (i, t) in batch.traces.iter().enumerate() {
                if let Some(db) = &t.database {
                    db.write_csv(create(&ddir.join(format!("run_{i:03}.csv")))?)?;
                }
            }
        }
        let completed = batch.aggregate.runs - batch.aggregate.aborted;
        if resolved.output.plots && completed > 0 {
            let title = format!("{} regret", mode.as_str());
            write_text(
                &dir.join("regret.svg"),
                &plot::regret_plot(&title, mode.as_str(), &mean, &std, completed),
            )?;
            if scalar {
                if let Some(first) = batch.traces.iter().find(|t| t.completed()) {
                    let title = format!("{} optimistic estimate (seed {})", mode.as_str(), first.seed);
                    write_text(&dir.join("estimate.svg"), &plot::estimate_plot(&title, first, &truth))?;
                }
            }
        }
        reports.push(ModeReport {
            mode,
            runs: batch.aggregate.runs,
            aborted: batch.aggregate.aborted,
            terminal_mean_regret: mean.last().copied(),
            exponent: fit_regret_exponent(&mean, SUMMARY_BURN_IN).ok().map(|f| f.exponent),
            mean_regret: mean,
            std_regret: std,
        });
    }

    if reports.len() > 1 {
        let curves: Vec<(&str, &[f64])> = reports
            .iter()
            .map(|r| (r.mode.as_str(), r.mean_regret.as_slice()))
            .collect();
        if resolved.output.plots {
            write_text(
                &out_dir.join("comparison.svg"),
                &plot::comparison_plot("mean cumulative regret", &curves),
            )?;
        }
        let table: Vec<(&str, &[f64], &[f64])> = reports
            .iter()
            .map(|r| (r.mode.as_str(), r.mean_regret.as_slice(), r.std_regret.as_slice()))
            .collect();
        output::write_regret_csv(&table, create(&out_dir.join("comparison.csv"))?)?;
    }
    Ok(RunReport {
        out_dir: out_dir.to_path_buf(),
        modes: reports,
    })
}
