//! One full episode: reset, mediated steps until done, per-step trace, and
//! (optionally) the end-of-episode updates of both agents.

use alloc::vec;
use alloc::vec::Vec;

use crate::agent::{
    argmax, Actor, Ending, Message, MessageSlot, Observation, TrajStep, Trajectory,
};
use crate::comm::{
    advance_curriculum, count_nonzero_messages, generate_upfront, listener_features, mediate_step,
    speaker_features, AgentRngs, CommMode, StageState, StepContext,
};
use crate::gridworld::{
    reset, Cell, EnvState, Heading, LayoutId, ListenerAction, MazeLayout, Visibility,
};
use crate::rng::StreamRng;
use crate::Result;

/// One row of an episode trace; position and heading are taken before the
/// action.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceStep {
    pub cell: Cell,
    pub heading: Heading,
    pub delivered: Option<Message>,
    pub action: ListenerAction,
    pub solicited: bool,
    pub env_reward: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeSummary {
    /// Total environment reward, 1 on success and 0 otherwise.
    pub reward: f64,
    pub steps: u32,
    pub nonzero_messages: u32,
}

impl EpisodeSummary {
    pub fn success(&self) -> bool {
        self.reward > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeTrace {
    pub layout: LayoutId,
    pub goal: Cell,
    /// Upfront tokens; empty in the other modes.
    pub upfront: Vec<Message>,
    pub steps: Vec<TraceStep>,
    pub summary: EpisodeSummary,
}

impl EpisodeTrace {
    /// The summary implied by the per-step rows.
    pub fn recompute_summary(&self) -> EpisodeSummary {
        EpisodeSummary {
            reward: self.steps.iter().map(|s| s.env_reward).sum(),
            steps: self.steps.len() as u32,
            nonzero_messages: count_nonzero_messages(self),
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.recompute_summary() == self.summary
    }
}

/// A curriculum stage change triggered at the end of an episode.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageEvent {
    pub from_stage: u32,
    pub stage: u32,
    pub penalty: f64,
    /// Steps spent in the stage that just ended.
    pub steps_in_stage: u64,
    pub success_rate: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct EpisodeConfig<'a> {
    pub layout: &'a MazeLayout,
    pub mode: &'a CommMode,
    pub visibility: Visibility,
    /// ε-greedy exploration on; evaluation rollouts turn it off.
    pub explore: bool,
    pub learn: bool,
    /// Discount used to fold rewards between speaker decisions.
    pub gamma: f64,
}

/// The three streams an episode draws from.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRngs {
    pub env: StreamRng,
    pub agents: AgentRngs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub trace: EpisodeTrace,
    pub stage_event: Option<StageEvent>,
    pub speaker_loss: Option<f64>,
    pub listener_loss: Option<f64>,
}

/// Speaker decisions and the env step each was taken at.
struct SpeakerLog {
    steps: Vec<TrajStep>,
    taken_at: Vec<u32>,
}

impl SpeakerLog {
    /// Credits the reward of env step `t` to the latest decision at or
    /// before `t`, discounted to that decision.
    fn credit(&mut self, t: u32, reward: f64, gamma: f64) {
        if let (Some(last), Some(&t0)) = (self.steps.last_mut(), self.taken_at.last()) {
            let k = t - t0;
            last.reward += libm::pow(gamma, f64::from(k)) * reward;
            last.gap = k + 1;
        }
    }
}

fn traj_step(features: Vec<f64>, d: crate::agent::Decision) -> TrajStep {
    TrajStep {
        input: features,
        memory: d.memory,
        action: d.index,
        reward: 0.0,
        qvalues: d.qvalues,
        gap: 1,
    }
}

/// Plays one episode and, when `cfg.learn` is set, applies one fitted-Q
/// update to each agent. In curriculum mode the stage counters advance by the
/// episode's env steps and the stage gate is checked once at the end.
pub fn run_episode(
    cfg: &EpisodeConfig<'_>,
    speaker: &mut dyn Actor,
    listener: &mut dyn Actor,
    stage: &mut StageState,
    rngs: &mut EpisodeRngs,
) -> Result<EpisodeOutcome> {
    cfg.mode.validate()?;
    let layout = cfg.layout;
    let mut state = reset(layout, &mut rngs.env);
    let goal = state.goal_pos;
    speaker.begin_episode();
    listener.begin_episode();

    let mut slog = SpeakerLog {
        steps: Vec::new(),
        taken_at: Vec::new(),
    };
    let upfront = match cfg.mode {
        CommMode::Upfront { tokens } => {
            let msg = generate_upfront(
                speaker,
                layout,
                &state,
                *tokens,
                cfg.explore,
                &mut rngs.agents.speaker,
            )?;
            for d in msg.decisions {
                let mut s = traj_step(msg.features.clone(), d);
                s.gap = 0;
                slog.steps.push(s);
                slog.taken_at.push(0);
            }
            msg.tokens
        }
        _ => Vec::new(),
    };

    let snapshot = stage.clone();
    let ctx = StepContext {
        mode: cfg.mode,
        stage: &snapshot,
        layout,
        visibility: cfg.visibility,
        upfront: &upfront,
        explore: cfg.explore,
    };
    let mut trace_steps = Vec::new();
    let mut listener_steps = Vec::new();
    let mut pending = false;
    while !state.done {
        let t = state.step_count;
        let ms = mediate_step(&ctx, speaker, listener, &state, pending, &mut rngs.agents)?;
        let out = ms.outcome;
        trace_steps.push(TraceStep {
            cell: state.agent_pos,
            heading: state.heading,
            delivered: out.delivered_message,
            action: out.listener_action,
            solicited: out.solicited,
            env_reward: out.env_reward,
            penalty: out.penalty,
        });
        if let Some(choice) = ms.speaker {
            slog.steps.push(traj_step(choice.features, choice.decision));
            slog.taken_at.push(t);
        }
        slog.credit(t, out.env_reward - out.penalty, cfg.gamma);
        let mut ls = traj_step(ms.listener.features, ms.listener.decision);
        ls.reward = out.env_reward;
        listener_steps.push(ls);
        state = ms.state;
        pending = ms.pending_solicit;
    }

    let reached = state.agent_pos == goal;
    let mut outcome = EpisodeOutcome {
        trace: EpisodeTrace {
            layout: layout.id,
            goal,
            upfront,
            steps: trace_steps,
            summary: EpisodeSummary {
                reward: 0.0,
                steps: 0,
                nonzero_messages: 0,
            },
        },
        stage_event: None,
        speaker_loss: None,
        listener_loss: None,
    };
    outcome.trace.summary = outcome.trace.recompute_summary();

    if cfg.learn {
        let (speaker_end, listener_end) = if reached {
            (Ending::Terminal, Ending::Terminal)
        } else {
            timeout_bootstraps(
                cfg,
                speaker,
                listener,
                &state,
                pending,
                &outcome.trace.upfront,
            )?
        };
        let speaker_traj = Trajectory {
            steps: slog.steps,
            ending: Some(speaker_end),
        };
        let listener_traj = Trajectory {
            steps: listener_steps,
            ending: Some(listener_end),
        };
        outcome.speaker_loss = speaker.learn(&speaker_traj)?;
        outcome.listener_loss = listener.learn(&listener_traj)?;
    }

    if let Some(schedule) = cfg.mode.schedule() {
        stage.steps_in_stage += u64::from(outcome.trace.summary.steps);
        stage.success_window.push(outcome.trace.summary.success());
        let before = stage.clone();
        let rate = before.success_window.rate().rate;
        if schedule.should_advance(before.steps_in_stage, rate) {
            *stage = advance_curriculum(schedule, &before);
            outcome.stage_event = Some(StageEvent {
                from_stage: before.stage,
                stage: stage.stage,
                penalty: schedule.stage_map.penalty(stage.stage),
                steps_in_stage: before.steps_in_stage,
                success_rate: rate,
            });
        }
    }
    Ok(outcome)
}

/// Values bootstrapped from the state an episode timed out in. The listener
/// is evaluated on the input it would have received next; an upfront speaker
/// has no later decisions, so its trajectory ends outright.
fn timeout_bootstraps(
    cfg: &EpisodeConfig<'_>,
    speaker: &mut dyn Actor,
    listener: &mut dyn Actor,
    state: &EnvState,
    pending: bool,
    upfront: &[Message],
) -> Result<(Ending, Ending)> {
    let layout = cfg.layout;
    let sfeat = speaker_features(layout, state);
    let sobs = Observation {
        layout,
        state,
        features: &sfeat,
    };
    let speaker_needed = !matches!(cfg.mode, CommMode::Upfront { .. });
    let (speaker_end, greedy) = if speaker_needed {
        let q = speaker.peek(&sobs)?;
        let v = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (
            Ending::Timeout { bootstrap: v },
            Message::from_index(argmax(&q)),
        )
    } else {
        (Ending::Terminal, None)
    };
    let slots: Vec<MessageSlot> = match cfg.mode {
        CommMode::Upfront { .. } => upfront.iter().map(|m| MessageSlot::Delivered(*m)).collect(),
        CommMode::Situated if !pending => vec![MessageSlot::Empty],
        _ => vec![greedy.map_or(MessageSlot::Empty, MessageSlot::Delivered)],
    };
    let lfeat = listener_features(layout, state, cfg.visibility, &slots);
    let lobs = Observation {
        layout,
        state,
        features: &lfeat,
    };
    let listener_end = Ending::Timeout {
        bootstrap: listener.bootstrap(&lobs)?,
    };
    Ok((speaker_end, listener_end))
}
