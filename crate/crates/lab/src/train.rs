//! Training runs on disk.
//!
//! An output directory holds
//!
//! - `run.json`: seed, config hash, resolved config and output options
//! - `metrics.ndjson`: the deterministic run log
//! - `timing.ndjson`: wall-clock stamps
//! - `checkpoints/`: `ep<N>.ckpt` every `checkpoint_every` episodes,
//!   `final.ckpt` at the end and `latest.ckpt` mirroring the newest one
//! - `traces/eval_<N>.tsv`: greedy evaluation rollouts after episode N

use std::path::{Path, PathBuf};

use sitcomm_core::metrics::RunningMetrics;
use sitcomm_core::train::{EpisodeReport, Run};

use crate::checkpoint;
use crate::config::{config_hash, ExperimentConfig, OutputOptions};
use crate::runlog::{self, EpisodeRecord, LogRecord, RunHeader, RunLog, METRICS_FILE, TIMING_FILE};
use crate::traces;
use crate::{LabError, Result};

pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const TRACE_DIR: &str = "traces";
pub const LATEST: &str = "latest.ckpt";
pub const FINAL: &str = "final.ckpt";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub episodes: u64,
    pub env_steps: u64,
    pub windowed: RunningMetrics,
    pub cumulative: RunningMetrics,
    pub final_checkpoint: PathBuf,
}

pub struct Trainer {
    pub run: Run,
    output: OutputOptions,
    dir: PathBuf,
    log: RunLog,
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| LabError::io(path, e))
}

impl Trainer {
    /// Starts a fresh run in `dir`, replacing any earlier log there.
    pub fn create(cfg: &ExperimentConfig, dir: &Path) -> Result<Self> {
        let run = Run::new(cfg.run.clone())?;
        create_dir(dir)?;
        create_dir(&dir.join(CHECKPOINT_DIR))?;
        let timing = dir.join(TIMING_FILE);
        if timing.exists() {
            std::fs::remove_file(&timing).map_err(|e| LabError::io(&timing, e))?;
        }
        runlog::write_header(
            dir,
            &RunHeader {
                seed: cfg.run.seed,
                config_hash: config_hash(&cfg.run),
                config: cfg.run.clone(),
                output: cfg.output.clone(),
            },
        )?;
        let mut log = RunLog::open(dir, 0)?;
        log.stamp("start", 0)?;
        Ok(Self {
            run,
            output: cfg.output.clone(),
            dir: dir.to_path_buf(),
            log,
        })
    }

    /// Continues the run in `dir` from `checkpoint`, or from its latest
    /// checkpoint. The log is cut back to what the checkpoint covers.
    pub fn resume(dir: &Path, checkpoint: Option<&Path>) -> Result<Self> {
        let header = runlog::read_header(dir)?;
        let path =
            checkpoint.map_or_else(|| dir.join(CHECKPOINT_DIR).join(LATEST), Path::to_path_buf);
        let ckpt = checkpoint::load(&path)?;
        if ckpt.run.config != header.config {
            return Err(LabError::Checkpoint(format!(
                "{} was written by a different config than {}",
                path.display(),
                dir.join(runlog::RUN_FILE).display()
            )));
        }
        let mut log = RunLog::open(dir, ckpt.log_offset)?;
        log.stamp("resume", ckpt.run.episode)?;
        Ok(Self {
            run: ckpt.run,
            output: header.output,
            dir: dir.to_path_buf(),
            log,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Plays one episode and logs it; `None` once the budget is spent.
    pub fn step(&mut self) -> Result<Option<EpisodeReport>> {
        if self.run.is_finished() {
            return Ok(None);
        }
        let report = self.run.step_episode()?;
        let ep = report.episode;
        if ep % self.output.log_every == 0 || self.run.is_finished() {
            self.log
                .append(&LogRecord::Episode(EpisodeRecord::from_report(&report)))?;
        }
        if let Some(ev) = report.stage_event {
            self.log.append(&LogRecord::Stage {
                episode: ep,
                env_steps: report.env_steps,
                from_stage: ev.from_stage,
                stage: ev.stage,
                penalty: ev.penalty,
                steps_in_stage: ev.steps_in_stage,
                success_rate: ev.success_rate,
            })?;
        }
        if self.run.eval_due() {
            self.evaluate()?;
        }
        if self.output.checkpoint_every > 0
            && ep % self.output.checkpoint_every == 0
            && !self.run.is_finished()
        {
            self.checkpoint(&format!("ep{ep}.ckpt"))?;
        }
        Ok(Some(report))
    }

    fn evaluate(&mut self) -> Result<()> {
        let n = self.run.config.eval_episodes;
        let (m, eval_traces) = self.run.evaluate(n)?;
        self.log.append(&LogRecord::Eval {
            episode: self.run.episode,
            env_steps: self.run.env_steps,
            episodes: u64::from(n),
            greedy: true,
            m_t: m.m_t().unwrap_or(0.0),
            m_o: m.m_o().unwrap_or(0.0),
            m_s: m.m_s().unwrap_or(0.0),
        })?;
        if self.output.eval_traces {
            let dir = self.dir.join(TRACE_DIR);
            create_dir(&dir)?;
            traces::write(
                &dir.join(format!("eval_{}.tsv", self.run.episode)),
                &eval_traces,
            )?;
        }
        Ok(())
    }

    /// Logs a pointer, then saves the run under `checkpoints/<name>` and as
    /// the latest checkpoint. The saved log offset covers the pointer line.
    pub fn checkpoint(&mut self, name: &str) -> Result<PathBuf> {
        let rel = format!("{CHECKPOINT_DIR}/{name}");
        self.log.append(&LogRecord::Checkpoint {
            episode: self.run.episode,
            env_steps: self.run.env_steps,
            path: rel.clone(),
        })?;
        self.log.flush()?;
        let path = self.dir.join(&rel);
        checkpoint::save(&path, &self.run, self.log.bytes())?;
        let latest = self.dir.join(CHECKPOINT_DIR).join(LATEST);
        std::fs::copy(&path, &latest).map_err(|e| LabError::io(&latest, e))?;
        self.log.stamp("checkpoint", self.run.episode)?;
        Ok(path)
    }

    /// Trains until the budget is spent and writes the final checkpoint.
    pub fn finish(mut self) -> Result<TrainSummary> {
        while self.step()?.is_some() {}
        let final_checkpoint = self.checkpoint(FINAL)?;
        self.log.stamp("end", self.run.episode)?;
        self.log.flush()?;
        Ok(TrainSummary {
            episodes: self.run.episode,
            env_steps: self.run.env_steps,
            windowed: self.run.recent.metrics(self.run.layout.s_opt),
            cumulative: self.run.cumulative,
            final_checkpoint,
        })
    }

    /// Stops without a final checkpoint, as an interrupted process would.
    pub fn abandon(mut self) -> Result<()> {
        self.log.flush()
    }
}

pub fn train(cfg: &ExperimentConfig, dir: &Path) -> Result<TrainSummary> {
    Trainer::create(cfg, dir)?.finish()
}

pub fn metrics_path(dir: &Path) -> PathBuf {
    dir.join(METRICS_FILE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sitcomm_core::comm::CommMode;
    use sitcomm_core::gridworld::{LayoutId, Visibility};
    use sitcomm_core::train::RunConfig;

    fn cfg(steps: u64) -> ExperimentConfig {
        ExperimentConfig {
            run: RunConfig {
                total_env_steps: steps,
                eval_every: 10,
                eval_episodes: 4,
                ..RunConfig::new(
                    LayoutId::Tmaze,
                    CommMode::Situated,
                    Visibility::Partial,
                    true,
                )
            },
            output: OutputOptions {
                checkpoint_every: 7,
                ..OutputOptions::default()
            },
        }
    }

    #[test]
    fn zero_budget_gives_empty_log_and_initial_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let s = train(&cfg(0), dir.path()).unwrap();
        assert_eq!((s.episodes, s.env_steps), (0, 0));
        let records = runlog::read_records(dir.path()).unwrap();
        assert!(matches!(
            records.as_slice(),
            [LogRecord::Checkpoint { episode: 0, .. }]
        ));
        let ck = checkpoint::load(&s.final_checkpoint).unwrap();
        assert_eq!(ck.run, Run::new(cfg(0).run).unwrap());
    }

    #[test]
    fn resume_from_periodic_checkpoint_matches_uninterrupted_run() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        train(&cfg(3_000), a.path()).unwrap();

        let mut t = Trainer::create(&cfg(3_000), b.path()).unwrap();
        for _ in 0..16 {
            t.step().unwrap();
        }
        t.abandon().unwrap();
        let ck = b.path().join(CHECKPOINT_DIR).join("ep14.ckpt");
        Trainer::resume(b.path(), Some(&ck))
            .unwrap()
            .finish()
            .unwrap();

        let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
        assert_eq!(read(a.path(), METRICS_FILE), read(b.path(), METRICS_FILE));
        assert_eq!(
            read(a.path(), "checkpoints/final.ckpt"),
            read(b.path(), "checkpoints/final.ckpt")
        );
        assert_eq!(
            read(a.path(), "traces/eval_10.tsv"),
            read(b.path(), "traces/eval_10.tsv")
        );
    }

    #[test]
    fn resume_rejects_foreign_checkpoint() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        train(&cfg(300), a.path()).unwrap();
        let mut other = cfg(300);
        other.run.rep_size = 8;
        train(&other, b.path()).unwrap();
        let foreign = b.path().join(CHECKPOINT_DIR).join(FINAL);
        assert!(matches!(
            Trainer::resume(a.path(), Some(&foreign)),
            Err(LabError::Checkpoint(_))
        ));
    }
}
