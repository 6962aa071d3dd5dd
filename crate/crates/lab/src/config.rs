//! Experiment configuration files.
//!
//! A config is a TOML table whose top-level keys mirror [`RunConfig`] plus a
//! `[mode]` table and an optional `[output]` table. Every key except `layout`
//! and `[mode]` has a default, so a minimal file is
//!
//! ```toml
//! layout = "tmaze"
//! [mode]
//! kind = "cheap_talk"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sitcomm_core::comm::{
    CommMode, PenaltySchedule, StageMap, DESK_CAP_STEPS, DESK_MIN_STAGE_STEPS,
};
use sitcomm_core::gridworld::{LayoutId, Visibility};
use sitcomm_core::train::RunConfig;

use crate::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum StageMapSpec {
    /// `"mp1"` or `"mp2"`.
    Preset(String),
    Table(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeSpec {
    CheapTalk,
    FixedPenalty {
        penalty: f64,
    },
    Curriculum {
        stage_map: StageMapSpec,
        min_stage_steps: Option<u64>,
        threshold: Option<f64>,
        cap_steps: Option<u64>,
    },
    Situated,
    Upfront {
        tokens: u8,
    },
}

impl ModeSpec {
    pub fn resolve(&self) -> Result<CommMode> {
        Ok(match self {
            ModeSpec::CheapTalk => CommMode::CheapTalk,
            ModeSpec::FixedPenalty { penalty } => CommMode::FixedPenalty { penalty: *penalty },
            ModeSpec::Curriculum {
                stage_map,
                min_stage_steps,
                threshold,
                cap_steps,
            } => {
                let stage_map = match stage_map {
                    StageMapSpec::Preset(p) if p == "mp1" => StageMap::Linear,
                    StageMapSpec::Preset(p) if p == "mp2" => StageMap::mp2(),
                    StageMapSpec::Preset(p) => {
                        return Err(LabError::Config(format!("unknown stage map preset {p:?}")))
                    }
                    StageMapSpec::Table(t) => StageMap::Table(t.clone()),
                };
                CommMode::Curriculum {
                    schedule: PenaltySchedule {
                        stage_map,
                        min_stage_steps: min_stage_steps.unwrap_or(DESK_MIN_STAGE_STEPS[0]),
                        threshold: threshold.unwrap_or(0.95),
                        cap_steps: cap_steps.unwrap_or(DESK_CAP_STEPS),
                    },
                }
            }
            ModeSpec::Situated => CommMode::Situated,
            ModeSpec::Upfront { tokens } => CommMode::Upfront { tokens: *tokens },
        })
    }
}

/// What a training run writes besides the metric log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputOptions {
    /// Write an episode record every this many episodes.
    pub log_every: u64,
    /// Periodic checkpoint every this many episodes; 0 keeps only the final one.
    pub checkpoint_every: u64,
    /// Save the traces of evaluation rollouts.
    pub eval_traces: bool,
}

impl Default for OutputOptions {
    fn default() -> Self {
        Self {
            log_every: 1,
            checkpoint_every: 0,
            eval_traces: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    layout: LayoutId,
    mode: ModeSpec,
    visibility: Option<Visibility>,
    has_memory: Option<bool>,
    rep_size: Option<usize>,
    lr_speaker: Option<f64>,
    lr_listener: Option<f64>,
    seed: Option<u64>,
    total_env_steps: Option<u64>,
    metric_window: Option<usize>,
    eval_every: Option<u64>,
    eval_episodes: Option<u32>,
    epsilon: Option<f64>,
    gamma: Option<f64>,
    lambda: Option<f64>,
    hidden: Option<usize>,
    memory_size: Option<usize>,
    #[serde(default)]
    output: OutputOptions,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub run: RunConfig,
    pub output: OutputOptions,
}

impl ExperimentConfig {
    pub fn from_table(table: toml::Table) -> Result<Self> {
        let file: FileConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| LabError::Config(e.message().to_string()))?;
        Self::resolve(file)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: FileConfig = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        Self::resolve(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::parse(&text)
    }

    fn resolve(f: FileConfig) -> Result<Self> {
        let mut run = RunConfig::new(
            f.layout,
            f.mode.resolve()?,
            f.visibility.unwrap_or(Visibility::Partial),
            f.has_memory.unwrap_or(true),
        );
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = f.$field { run.$field = v; } )* };
        }
        set!(
            rep_size,
            lr_speaker,
            lr_listener,
            seed,
            total_env_steps,
            metric_window,
            eval_every,
            eval_episodes
        );
        set!(epsilon, gamma, lambda, hidden, memory_size);
        run.validate()?;
        if f.output.log_every == 0 {
            return Err(LabError::Config(
                "output.log_every must be at least 1".into(),
            ));
        }
        Ok(Self {
            run,
            output: f.output,
        })
    }
}

/// Hex SHA-256 of the run config with the seed cleared, so replicas of one
/// setting share a hash.
pub fn config_hash(run: &RunConfig) -> String {
    let mut unseeded = run.clone();
    unseeded.seed = 0;
    let bytes = serde_json::to_vec(&unseeded).expect("run configs always serialize");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_uses_defaults() {
        let c =
            ExperimentConfig::parse("layout = \"tmaze\"\n[mode]\nkind = \"cheap_talk\"\n").unwrap();
        assert_eq!(
            c.run,
            RunConfig::new(
                LayoutId::Tmaze,
                CommMode::CheapTalk,
                Visibility::Partial,
                true
            )
        );
        assert_eq!(c.output, OutputOptions::default());
    }

    #[test]
    fn curriculum_presets() {
        let text = "layout = \"dead_ends\"\n[mode]\nkind = \"curriculum\"\nstage_map = \"mp2\"\nthreshold = 0.97\n";
        let c = ExperimentConfig::parse(text).unwrap();
        let CommMode::Curriculum { schedule } = c.run.mode else {
            panic!()
        };
        assert_eq!(schedule.stage_map, StageMap::mp2());
        assert_eq!(
            (
                schedule.min_stage_steps,
                schedule.threshold,
                schedule.cap_steps
            ),
            (20_000, 0.97, 150_000)
        );
        let bad = "layout = \"tmaze\"\n[mode]\nkind = \"curriculum\"\nstage_map = \"mp9\"\n";
        assert!(ExperimentConfig::parse(bad).is_err());
    }

    #[test]
    fn invalid_files_rejected() {
        for text in [
            "layout = \"maze\"\n[mode]\nkind = \"cheap_talk\"\n",
            "layout = \"tmaze\"\n[mode]\nkind = \"shouting\"\n",
            "layout = \"tmaze\"\nrep = 8\n[mode]\nkind = \"cheap_talk\"\n",
            "layout = \"tmaze\"\nrep_size = 12\n[mode]\nkind = \"cheap_talk\"\n",
            "layout = \"tmaze\"\n[mode]\nkind = \"upfront\"\ntokens = 4\n",
        ] {
            assert!(ExperimentConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn hash_ignores_seed_only() {
        let a = RunConfig::new(
            LayoutId::Tmaze,
            CommMode::Situated,
            Visibility::Partial,
            true,
        );
        let b = RunConfig {
            seed: 9,
            ..a.clone()
        };
        let c = RunConfig {
            rep_size: 8,
            ..a.clone()
        };
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_ne!(config_hash(&a), config_hash(&c));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
