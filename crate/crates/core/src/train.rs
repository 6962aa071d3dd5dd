//! The training loop of one (config, seed) run, without any IO. Callers
//! drive it one episode at a time and persist whatever they need.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::agent::{AgentConfig, QAgent, Role};
use crate::comm::{AgentRngs, CommMode, StageState};
use crate::episode::{
    run_episode, EpisodeConfig, EpisodeRngs, EpisodeSummary, EpisodeTrace, StageEvent,
};
use crate::gridworld::{build_layout, LayoutId, MazeLayout, Visibility};
use crate::metrics::{neglog_messages, RunningMetrics, SUCCESS_WINDOW};
use crate::rng::{stream, Stream, StreamRng};
use crate::{Error, Result};

/// Desk-scale training budget.
pub const DESK_ENV_STEPS: u64 = 200_000;

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct RunConfig {
    pub layout: LayoutId,
    pub mode: CommMode,
    pub visibility: Visibility,
    pub has_memory: bool,
    pub rep_size: usize,
    pub lr_speaker: f64,
    pub lr_listener: f64,
    pub seed: u64,
    pub total_env_steps: u64,
    /// Episodes in the trailing metric window.
    pub metric_window: usize,
    /// Greedy evaluation every this many episodes; 0 disables it.
    pub eval_every: u64,
    pub eval_episodes: u32,
    pub epsilon: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub hidden: usize,
    pub memory_size: usize,
}

impl RunConfig {
    pub fn new(layout: LayoutId, mode: CommMode, visibility: Visibility, has_memory: bool) -> Self {
        Self {
            layout,
            mode,
            visibility,
            has_memory,
            rep_size: 16,
            lr_speaker: 1e-3,
            lr_listener: 1e-3,
            seed: 0,
            total_env_steps: DESK_ENV_STEPS,
            metric_window: SUCCESS_WINDOW,
            eval_every: 0,
            eval_episodes: 0,
            epsilon: AgentConfig::EPSILON,
            gamma: AgentConfig::GAMMA,
            lambda: AgentConfig::LAMBDA,
            hidden: 32,
            memory_size: 32,
        }
    }

    pub fn agent_config(&self, role: Role) -> AgentConfig {
        let lr = match role {
            Role::Speaker => self.lr_speaker,
            Role::Listener => self.lr_listener,
        };
        AgentConfig {
            role,
            visibility: self.visibility,
            has_memory: self.has_memory,
            rep_size: self.rep_size,
            learning_rate: lr,
            epsilon: self.epsilon,
            gamma: self.gamma,
            lambda: self.lambda,
            hidden: self.hidden,
            memory_size: self.memory_size,
            message_slots: self.mode.message_slots(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mode.validate()?;
        if self.metric_window == 0 {
            return Err(Error::Config("metric_window must be at least 1".into()));
        }
        self.agent_config(Role::Speaker).validate()?;
        self.agent_config(Role::Listener).validate()
    }
}

/// Metrics over the trailing window of episodes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricWindow {
    window: usize,
    recent: VecDeque<EpisodeSummary>,
}

impl MetricWindow {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            recent: VecDeque::new(),
        }
    }

    pub fn push(&mut self, summary: EpisodeSummary) {
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        self.recent.push_back(summary);
    }

    /// Recomputed from scratch so the result depends only on the window's
    /// contents.
    pub fn metrics(&self, s_opt: u32) -> RunningMetrics {
        let mut m = RunningMetrics::new(s_opt);
        for s in &self.recent {
            m.n += 1;
            m.sum_r += s.reward;
            m.sum_r_over_steps += s.reward / f64::from(s.steps);
            m.sum_neglog_m += neglog_messages(s.nonzero_messages);
        }
        m
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.recent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recent.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &EpisodeSummary> {
        self.recent.iter()
    }
}

/// What one training episode produced.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    /// 1-based index of the episode just finished.
    pub episode: u64,
    /// Env steps consumed so far, including this episode.
    pub env_steps: u64,
    pub summary: EpisodeSummary,
    pub stage: u32,
    pub penalty: f64,
    pub stage_event: Option<StageEvent>,
    pub windowed: RunningMetrics,
    pub cumulative: RunningMetrics,
    pub speaker_loss: Option<f64>,
    pub listener_loss: Option<f64>,
    pub trace: EpisodeTrace,
}

/// A live training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub config: RunConfig,
    pub layout: MazeLayout,
    pub speaker: QAgent,
    pub listener: QAgent,
    pub stage: StageState,
    pub rngs: EpisodeRngs,
    pub episode: u64,
    pub env_steps: u64,
    pub cumulative: RunningMetrics,
    pub recent: MetricWindow,
}

pub fn episode_rngs(seed: u64) -> EpisodeRngs {
    EpisodeRngs {
        env: stream(seed, Stream::Env),
        agents: AgentRngs {
            speaker: stream(seed, Stream::SpeakerExplore),
            listener: stream(seed, Stream::ListenerExplore),
        },
    }
}

/// Stream for the evaluation round that follows episode `episode`.
fn eval_stream(seed: u64, episode: u64) -> StreamRng {
    let mut r = stream(seed, Stream::Eval);
    r.set_stream(Stream::Eval as u64 | (episode << 8));
    r
}

impl Run {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let layout = build_layout(config.layout);
        let mut init = stream(config.seed, Stream::Init);
        let speaker = QAgent::new(config.agent_config(Role::Speaker), &mut init)?;
        let listener = QAgent::new(config.agent_config(Role::Listener), &mut init)?;
        Ok(Self {
            rngs: episode_rngs(config.seed),
            cumulative: RunningMetrics::new(layout.s_opt),
            recent: MetricWindow::new(config.metric_window),
            stage: StageState::default(),
            episode: 0,
            env_steps: 0,
            layout,
            speaker,
            listener,
            config,
        })
    }

    pub fn is_finished(&self) -> bool {
        self.env_steps >= self.config.total_env_steps
    }

    pub fn penalty(&self) -> f64 {
        match &self.config.mode {
            CommMode::FixedPenalty { penalty } => *penalty,
            CommMode::Curriculum { schedule } => schedule.stage_map.penalty(self.stage.stage),
            _ => 0.0,
        }
    }

    /// Plays and learns from one episode.
    pub fn step_episode(&mut self) -> Result<EpisodeReport> {
        let cfg = EpisodeConfig {
            layout: &self.layout,
            mode: &self.config.mode,
            visibility: self.config.visibility,
            explore: true,
            learn: true,
            gamma: self.config.gamma,
        };
        let penalty = self.penalty();
        let out = run_episode(
            &cfg,
            &mut self.speaker,
            &mut self.listener,
            &mut self.stage,
            &mut self.rngs,
        )?;
        let summary = out.trace.summary;
        self.episode += 1;
        self.env_steps += u64::from(summary.steps);
        self.cumulative
            .record_episode(summary.reward, summary.steps, summary.nonzero_messages)?;
        self.recent.push(summary);
        Ok(EpisodeReport {
            episode: self.episode,
            env_steps: self.env_steps,
            summary,
            stage: self.stage.stage,
            penalty,
            stage_event: out.stage_event,
            windowed: self.recent.metrics(self.layout.s_opt),
            cumulative: self.cumulative,
            speaker_loss: out.speaker_loss,
            listener_loss: out.listener_loss,
            trace: out.trace,
        })
    }

    /// Whether an evaluation round is due after the latest episode.
    pub fn eval_due(&self) -> bool {
        self.config.eval_every > 0
            && self.config.eval_episodes > 0
            && self.episode % self.config.eval_every == 0
    }

    /// Greedy rollouts with copies of the agents; the run itself is not
    /// touched.
    pub fn evaluate(&self, episodes: u32) -> Result<(RunningMetrics, Vec<EpisodeTrace>)> {
        let mut speaker = self.speaker.clone();
        let mut listener = self.listener.clone();
        let mut stage = self.stage.clone();
        let r = eval_stream(self.config.seed, self.episode);
        let mut rngs = EpisodeRngs {
            env: r.clone(),
            agents: AgentRngs {
                speaker: r.clone(),
                listener: r,
            },
        };
        rngs.agents
            .speaker
            .set_stream(rngs.env.get_stream() | 1 << 63);
        rngs.agents
            .listener
            .set_stream(rngs.env.get_stream() | 1 << 62);
        let cfg = EpisodeConfig {
            layout: &self.layout,
            mode: &self.config.mode,
            visibility: self.config.visibility,
            explore: false,
            learn: false,
            gamma: self.config.gamma,
        };
        let mut metrics = RunningMetrics::new(self.layout.s_opt);
        let mut traces = Vec::with_capacity(episodes as usize);
        for _ in 0..episodes {
            let out = run_episode(&cfg, &mut speaker, &mut listener, &mut stage, &mut rngs)?;
            let s = out.trace.summary;
            metrics.record_episode(s.reward, s.steps, s.nonzero_messages)?;
            traces.push(out.trace);
        }
        Ok((metrics, traces))
    }
}
