//! Newline-delimited JSON run logs.
//!
//! `metrics.ndjson` holds only values that follow from the config and seed,
//! so two runs of the same setting produce identical files. Wall-clock stamps
//! go to a separate `timing.ndjson`.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sitcomm_core::metrics::RunningMetrics;
use sitcomm_core::train::{EpisodeReport, RunConfig};

use crate::config::OutputOptions;
use crate::{LabError, Result};

pub const METRICS_FILE: &str = "metrics.ndjson";
pub const TIMING_FILE: &str = "timing.ndjson";
pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub env_steps: u64,
    #[serde(rename = "R")]
    pub reward: f64,
    pub steps: u32,
    pub messages: u32,
    pub stage: u32,
    pub penalty: f64,
    #[serde(rename = "M_t")]
    pub m_t: f64,
    #[serde(rename = "M_o")]
    pub m_o: f64,
    #[serde(rename = "M_s")]
    pub m_s: f64,
    pub cum_m_t: f64,
    pub cum_m_o: f64,
    pub cum_m_s: f64,
    pub speaker_loss: Option<f64>,
    pub listener_loss: Option<f64>,
}

impl EpisodeRecord {
    pub fn from_report(r: &EpisodeReport) -> Self {
        let w = |f: fn(&RunningMetrics) -> Option<f64>, m: &RunningMetrics| f(m).unwrap_or(0.0);
        Self {
            episode: r.episode,
            env_steps: r.env_steps,
            reward: r.summary.reward,
            steps: r.summary.steps,
            messages: r.summary.nonzero_messages,
            stage: r.stage,
            penalty: r.penalty,
            m_t: w(RunningMetrics::m_t, &r.windowed),
            m_o: w(RunningMetrics::m_o, &r.windowed),
            m_s: w(RunningMetrics::m_s, &r.windowed),
            cum_m_t: w(RunningMetrics::m_t, &r.cumulative),
            cum_m_o: w(RunningMetrics::m_o, &r.cumulative),
            cum_m_s: w(RunningMetrics::m_s, &r.cumulative),
            speaker_loss: r.speaker_loss,
            listener_loss: r.listener_loss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Episode(EpisodeRecord),
    Stage {
        episode: u64,
        env_steps: u64,
        from_stage: u32,
        stage: u32,
        penalty: f64,
        steps_in_stage: u64,
        success_rate: f64,
    },
    /// Greedy evaluation rollouts taken after `episode`.
    Eval {
        episode: u64,
        env_steps: u64,
        episodes: u64,
        greedy: bool,
        #[serde(rename = "M_t")]
        m_t: f64,
        #[serde(rename = "M_o")]
        m_o: f64,
        #[serde(rename = "M_s")]
        m_s: f64,
    },
    Checkpoint {
        episode: u64,
        env_steps: u64,
        path: String,
    },
}

/// Identity of a run, written once as `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub seed: u64,
    pub config_hash: String,
    pub config: RunConfig,
    pub output: OutputOptions,
}

pub struct RunLog {
    path: PathBuf,
    out: BufWriter<File>,
    bytes: u64,
    timing: BufWriter<File>,
    timing_path: PathBuf,
}

impl RunLog {
    /// Opens the log in `dir`, truncated to `keep_bytes` (0 for a fresh run).
    pub fn open(dir: &Path, keep_bytes: u64) -> Result<Self> {
        let path = dir.join(METRICS_FILE);
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(false)
            .open(&path)
            .map_err(|e| LabError::io(&path, e))?;
        let len = file.metadata().map_err(|e| LabError::io(&path, e))?.len();
        if len < keep_bytes {
            return Err(LabError::Checkpoint(format!(
                "{} holds {len} bytes but the checkpoint expects {keep_bytes}",
                path.display()
            )));
        }
        file.set_len(keep_bytes)
            .map_err(|e| LabError::io(&path, e))?;
        let mut out = BufWriter::new(file);
        std::io::Seek::seek(&mut out, std::io::SeekFrom::End(0))
            .map_err(|e| LabError::io(&path, e))?;
        let timing_path = dir.join(TIMING_FILE);
        let timing = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&timing_path)
            .map_err(|e| LabError::io(&timing_path, e))?;
        Ok(Self {
            path,
            out,
            bytes: keep_bytes,
            timing: BufWriter::new(timing),
            timing_path,
        })
    }

    pub fn append(&mut self, record: &LogRecord) -> Result<()> {
        let mut line = serde_json::to_vec(record).map_err(|e| LabError::Analysis(e.to_string()))?;
        line.push(b'\n');
        self.out
            .write_all(&line)
            .map_err(|e| LabError::io(&self.path, e))?;
        self.bytes += line.len() as u64;
        Ok(())
    }

    /// Bytes written so far; a checkpoint stores this to resume cleanly.
    pub fn bytes(&self) -> u64 {
        self.bytes
    }

    pub fn stamp(&mut self, event: &str, episode: u64) -> Result<()> {
        let ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        writeln!(
            self.timing,
            "{{\"event\":\"{event}\",\"episode\":{episode},\"unix_ms\":{ms}}}"
        )
        .map_err(|e| LabError::io(&self.timing_path, e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| LabError::io(&self.path, e))?;
        self.timing
            .flush()
            .map_err(|e| LabError::io(&self.timing_path, e))
    }
}

pub fn write_header(dir: &Path, header: &RunHeader) -> Result<()> {
    let path = dir.join(RUN_FILE);
    let text =
        serde_json::to_string_pretty(header).map_err(|e| LabError::Analysis(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| LabError::io(&path, e))
}

pub fn read_header(dir: &Path) -> Result<RunHeader> {
    let path = dir.join(RUN_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| LabError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| LabError::parse(&path, e.to_string()))
}

/// Accepts a log file or a run directory containing one.
pub fn resolve_log_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(METRICS_FILE)
    } else {
        path.to_path_buf()
    }
}

/// Every line of a log as a JSON object.
pub fn read_raw(path: &Path) -> Result<Vec<serde_json::Map<String, serde_json::Value>>> {
    let path = resolve_log_path(path);
    let file = File::open(&path).map_err(|e| LabError::io(&path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| LabError::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<serde_json::Value>(&line) {
            Ok(serde_json::Value::Object(map)) => out.push(map),
            Ok(_) => {
                return Err(LabError::parse(
                    &path,
                    format!("line {}: not an object", i + 1),
                ))
            }
            Err(e) => return Err(LabError::parse(&path, format!("line {}: {e}", i + 1))),
        }
    }
    Ok(out)
}

/// Typed records of a log.
pub fn read_records(path: &Path) -> Result<Vec<LogRecord>> {
    let path = resolve_log_path(path);
    read_raw(&path)?
        .into_iter()
        .enumerate()
        .map(|(i, m)| {
            serde_json::from_value(serde_json::Value::Object(m))
                .map_err(|e| LabError::parse(&path, format!("record {}: {e}", i + 1)))
        })
        .collect()
}
