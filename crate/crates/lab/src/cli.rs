//! The `sitcomm` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sitcomm_core::gridworld::LayoutId;

use crate::analysis::{compare_report, learning_curves, protocol_heatmap, LogData, RunSet, XAxis};
use crate::checkpoint;
use crate::config::ExperimentConfig;
use crate::oracle;
use crate::runlog::METRICS_FILE;
use crate::svg::{self, LinePlot};
use crate::sweep::{run_sweep, SweepSpec};
use crate::traces;
use crate::train::Trainer;
use crate::{LabError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "sitcomm",
    version,
    about = "Speaker/listener maze communication experiments"
)]
pub struct Cli {
    /// Seed for train and eval; seed offset for sweep.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one speaker/listener pair from a TOML config.
    Train {
        config: PathBuf,
        /// Continue the run in --out-dir from its latest checkpoint.
        #[arg(long)]
        resume: bool,
        /// Continue from this checkpoint instead of the latest one.
        #[arg(long, requires = "resume")]
        checkpoint: Option<PathBuf>,
    },
    /// Train every cell of a grid on every seed.
    Sweep { grid: PathBuf },
    /// Greedy rollouts of a checkpoint.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: u32,
    },
    /// Heatmaps, learning curves and regime comparisons.
    Analyze {
        #[command(subcommand)]
        what: Analyze,
    },
    /// Roll out the scripted pairs on every goal and print their metrics.
    Oracle {
        #[arg(value_parser = parse_layout)]
        layout: LayoutId,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Episode,
    EnvSteps,
}

impl From<Axis> for XAxis {
    fn from(a: Axis) -> Self {
        match a {
            Axis::Episode => XAxis::Episode,
            Axis::EnvSteps => XAxis::EnvSteps,
        }
    }
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    /// Trailing-mean window in log records.
    #[arg(long, default_value_t = 100)]
    pub smoothing: usize,
    #[arg(long, value_enum, default_value_t = Axis::Episode)]
    pub x: Axis,
}

#[derive(Debug, Subcommand)]
pub enum Analyze {
    /// Per-cell symbol, action and solicitation counts from trace files.
    Heatmap {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
    /// Mean and standard-error band of a metric across run logs.
    Curves {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long, default_value = "M_t")]
        metric: String,
        #[command(flatten)]
        curve: CurveArgs,
    },
    /// Compare regimes given as LABEL=PATH[,PATH...]; a directory without a
    /// log of its own stands for every run below it.
    Compare {
        #[arg(required = true)]
        sets: Vec<String>,
        #[command(flatten)]
        curve: CurveArgs,
    },
}

fn parse_layout(s: &str) -> std::result::Result<LayoutId, String> {
    LayoutId::from_name(s)
        .ok_or_else(|| format!("unknown layout {s:?}; expected tmaze, dead_ends or four_rooms"))
}

/// Parses `args` and runs the command. Returns the process exit status:
/// 0 on success, 2 on usage errors, 1 on runtime failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn out_dir(cli: &Cli, default: impl FnOnce() -> PathBuf) -> PathBuf {
    cli.out_dir.clone().unwrap_or_else(default)
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| LabError::io(path, e))
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train {
            config,
            resume,
            checkpoint,
        } => {
            let mut cfg = ExperimentConfig::load(config)?;
            if let Some(s) = cli.seed {
                cfg.run.seed = s;
            }
            let stem = config
                .file_stem()
                .map_or("run".into(), |s| s.to_string_lossy().into_owned());
            let dir = out_dir(cli, || {
                PathBuf::from("runs").join(format!("{stem}-seed{}", cfg.run.seed))
            });
            let trainer = if *resume {
                Trainer::resume(&dir, checkpoint.as_deref())?
            } else {
                Trainer::create(&cfg, &dir)?
            };
            let s = trainer.finish()?;
            let f = |v: Option<f64>| v.unwrap_or(0.0);
            println!(
                "{}: {} episodes, {} env steps, final window M_t={:.4} M_o={:.4} M_s={:.4}",
                dir.display(),
                s.episodes,
                s.env_steps,
                f(s.windowed.m_t()),
                f(s.windowed.m_o()),
                f(s.windowed.m_s())
            );
        }
        Command::Sweep { grid } => {
            let spec = SweepSpec::load(grid, cli.seed.unwrap_or(0))?;
            let dir = out_dir(cli, || {
                PathBuf::from("sweeps").join(grid.file_stem().unwrap_or_default())
            });
            let r = run_sweep(&spec, &dir)?;
            print!("{}", r.to_csv());
            if let Some(c) = r.best_cell {
                println!("best mean cell: {c} ({})", r.cells[c].label);
            }
            if let Some(p) = r.best_pair {
                println!("best pair: cell {} seed {} M_o={}", p.cell, p.seed, p.m_o);
            }
            let failures: usize = r.cells.iter().map(|c| c.failures.len()).sum();
            if failures > 0 {
                eprintln!(
                    "{failures} run(s) failed; see {}",
                    dir.join("sweep.json").display()
                );
            }
        }
        Command::Eval {
            checkpoint,
            episodes,
        } => {
            let mut ck = checkpoint::load(checkpoint)?;
            if let Some(s) = cli.seed {
                ck.run.config.seed = s;
            }
            let (m, eval_traces) = ck.run.evaluate(*episodes)?;
            let f = |v: Option<f64>| v.unwrap_or(0.0);
            println!(
                "greedy eval after episode {}: {} episodes M_t={:.4} M_o={:.4} M_s={:.4}",
                ck.run.episode,
                m.n,
                f(m.m_t()),
                f(m.m_o()),
                f(m.m_s())
            );
            if let Some(dir) = &cli.out_dir {
                let path = dir.join("eval.tsv");
                std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
                traces::write(&path, &eval_traces)?;
                println!("traces: {}", path.display());
            }
        }
        Command::Analyze { what } => analyze(cli, what)?,
        Command::Oracle { layout } => {
            let rows = oracle::oracle_rows(*layout)?;
            print!("{}", oracle::format_table(*layout, &rows));
            if let Some(dir) = &cli.out_dir {
                oracle::write_runs(&rows, dir)?;
            }
        }
    }
    Ok(())
}

/// A run directory, a log file, or a directory holding runs below it.
pub fn expand_logs(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.exists() {
        return Err(LabError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        ));
    }
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if path.join(METRICS_FILE).is_file() {
        return Ok(vec![path.join(METRICS_FILE)]);
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| LabError::io(path, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| LabError::io(path, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    let mut out = Vec::new();
    for e in entries.into_iter().filter(|e| e.is_dir()) {
        out.extend(expand_logs(&e)?);
    }
    if out.is_empty() {
        return Err(LabError::Analysis(format!(
            "{}: no {METRICS_FILE} found",
            path.display()
        )));
    }
    Ok(out)
}

fn load_logs(paths: &[PathBuf]) -> Result<Vec<LogData>> {
    let mut out = Vec::new();
    for p in paths {
        for log in expand_logs(p)? {
            out.push(LogData::load(&log)?);
        }
    }
    Ok(out)
}

fn analyze(cli: &Cli, what: &Analyze) -> Result<()> {
    let dir = out_dir(cli, || PathBuf::from("analysis"));
    match what {
        Analyze::Heatmap { traces: paths } => {
            let mut all = Vec::new();
            for p in paths {
                all.extend(traces::read(p)?);
            }
            let grid = protocol_heatmap(&all)?;
            write(&dir.join("heatmap.csv"), &grid.to_csv())?;
            let title = format!(
                "{} protocol over {} episodes",
                grid.layout.name(),
                grid.episodes
            );
            write(&dir.join("heatmap.svg"), &grid.to_svg(&title))?;
            println!(
                "{} episodes, {} steps -> {}",
                grid.episodes,
                grid.total_visits(),
                dir.display()
            );
        }
        Analyze::Curves {
            logs,
            metric,
            curve,
        } => {
            let data = load_logs(logs)?;
            let c = learning_curves(&data, metric, curve.smoothing, curve.x.into())?;
            write(&dir.join(format!("{metric}.csv")), &c.to_csv())?;
            let plot = LinePlot {
                title: format!("{metric} over {} run(s)", data.len()),
                x_label: c.axis.key().into(),
                y_label: metric.clone(),
                series: vec![c.plot_series("mean")],
            };
            write(&dir.join(format!("{metric}.svg")), &svg::line_plot(&plot))?;
            if let (Some(x), Some(m), Some(s)) = (c.x.last(), c.mean.last(), c.stderr.last()) {
                println!(
                    "{metric} at {} {x}: {m:.4} ± {s:.4} over {} run(s)",
                    c.axis.key(),
                    data.len()
                );
            }
        }
        Analyze::Compare { sets, curve } => {
            let mut run_sets = Vec::new();
            for s in sets {
                let (label, paths) = s.split_once('=').ok_or_else(|| {
                    LabError::Analysis(format!("{s:?}: expected LABEL=PATH[,PATH...]"))
                })?;
                let paths: Vec<PathBuf> = paths.split(',').map(PathBuf::from).collect();
                run_sets.push(RunSet {
                    label: label.to_string(),
                    logs: load_logs(&paths)?,
                });
            }
            let report = compare_report(&run_sets, curve.smoothing, curve.x.into())?;
            report.write(&dir, curve.x.into())?;
            print!("{}", report.finals_csv());
        }
    }
    Ok(())
}
