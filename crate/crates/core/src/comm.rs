//! Communication regimes: what the speaker may say each step, what it costs,
//! and how the penalty curriculum advances.

use alloc::vec;
use alloc::vec::Vec;

use crate::agent::{
    encode_listener_input, encode_speaker_input, Actor, Decision, Message, MessageSlot, Observation,
};
use crate::episode::EpisodeTrace;
use crate::gridworld::{
    apply_action, listener_view, speaker_view, EnvState, ListenerAction, MazeLayout, Visibility,
};
use crate::metrics::{SuccessWindow, SUCCESS_WINDOW};
use crate::rng::StreamRng;
use crate::{Error, Result};

/// Full-scale minimum steps per curriculum stage.
pub const FULL_MIN_STAGE_STEPS: [u64; 2] = [2_000_000, 5_000_000];
pub const FULL_CAP_STEPS: u64 = 15_000_000;
/// The same gates scaled down by 100 for desk-sized runs.
pub const DESK_MIN_STAGE_STEPS: [u64; 2] = [20_000, 50_000];
pub const DESK_CAP_STEPS: u64 = 150_000;
pub const THRESHOLDS: [f64; 3] = [0.92, 0.95, 0.97];
pub const FIXED_PENALTIES: [f64; 3] = [0.01, 0.05, 0.1];

/// Stage → penalty mapping of a curriculum.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StageMap {
    /// `stage / 100` with no last stage.
    Linear,
    /// Explicit penalties; the last entry is the final stage.
    Table(Vec<f64>),
}

impl StageMap {
    pub fn mp2() -> Self {
        StageMap::Table(vec![0.0, 0.01, 0.05, 0.1, 0.2, 0.3])
    }

    pub fn penalty(&self, stage: u32) -> f64 {
        match self {
            StageMap::Linear => f64::from(stage) / 100.0,
            StageMap::Table(t) => t[(stage as usize).min(t.len() - 1)],
        }
    }

    pub fn last_stage(&self) -> Option<u32> {
        match self {
            StageMap::Linear => None,
            StageMap::Table(t) => Some(t.len() as u32 - 1),
        }
    }

    fn validate(&self) -> Result<()> {
        if let StageMap::Table(t) = self {
            if t.first() != Some(&0.0) {
                return Err(Error::Config("stage 0 penalty must be 0".into()));
            }
            if t.iter().any(|p| !p.is_finite()) || t.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::Config(
                    "stage penalties must be finite and non-decreasing".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PenaltySchedule {
    pub stage_map: StageMap,
    pub min_stage_steps: u64,
    pub threshold: f64,
    pub cap_steps: u64,
}

impl PenaltySchedule {
    /// `m_p1`: +0.01 per stage, desk-scale gates.
    pub fn mp1(min_stage_steps: u64, threshold: f64) -> Self {
        Self {
            stage_map: StageMap::Linear,
            min_stage_steps,
            threshold,
            cap_steps: DESK_CAP_STEPS,
        }
    }

    /// `m_p2`: 0, 0.01, 0.05, 0.1, 0.2, 0.3, desk-scale gates.
    pub fn mp2(min_stage_steps: u64, threshold: f64) -> Self {
        Self {
            stage_map: StageMap::mp2(),
            min_stage_steps,
            threshold,
            cap_steps: DESK_CAP_STEPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stage_map.validate()?;
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(
                "curriculum threshold must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// The gate: enough steps and enough success, or the stage cap reached.
    pub fn should_advance(&self, steps_in_stage: u64, success: f64) -> bool {
        (steps_in_stage >= self.min_stage_steps && success >= self.threshold)
            || steps_in_stage >= self.cap_steps
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum CommMode {
    CheapTalk,
    FixedPenalty { penalty: f64 },
    Curriculum { schedule: PenaltySchedule },
    Situated,
    Upfront { tokens: u8 },
}

impl CommMode {
    pub fn name(&self) -> &'static str {
        match self {
            CommMode::CheapTalk => "cheap_talk",
            CommMode::FixedPenalty { .. } => "fixed_penalty",
            CommMode::Curriculum { .. } => "curriculum",
            CommMode::Situated => "situated",
            CommMode::Upfront { .. } => "upfront",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CommMode::FixedPenalty { penalty } if !(penalty.is_finite() && *penalty >= 0.0) => Err(
                Error::Config("fixed penalty must be finite and non-negative".into()),
            ),
            CommMode::Curriculum { schedule } => schedule.validate(),
            CommMode::Upfront { tokens } if !(1..=3).contains(tokens) => Err(Error::Config(
                "upfront messages have 1, 2 or 3 tokens".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn is_situated(&self) -> bool {
        matches!(self, CommMode::Situated)
    }

    /// Message blocks in the listener input.
    pub fn message_slots(&self) -> usize {
        match self {
            CommMode::Upfront { tokens } => usize::from(*tokens),
            _ => 1,
        }
    }

    pub fn schedule(&self) -> Option<&PenaltySchedule> {
        match self {
            CommMode::Curriculum { schedule } => Some(schedule),
            _ => None,
        }
    }
}

/// Curriculum bookkeeping carried across episodes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageState {
    pub stage: u32,
    pub steps_in_stage: u64,
    pub success_window: SuccessWindow,
}

impl Default for StageState {
    fn default() -> Self {
        Self {
            stage: 0,
            steps_in_stage: 0,
            success_window: SuccessWindow::new(SUCCESS_WINDOW),
        }
    }
}

/// Speaker cost of `symbol`; only defined for the penalised modes.
pub fn message_penalty(mode: &CommMode, stage: &StageState, symbol: Message) -> Result<f64> {
    let per_message = match mode {
        CommMode::FixedPenalty { penalty } => *penalty,
        CommMode::Curriculum { schedule } => schedule.stage_map.penalty(stage.stage),
        _ => {
            return Err(Error::Mode(
                "message penalties exist only in penalised modes",
            ))
        }
    };
    Ok(if symbol.is_null() { 0.0 } else { per_message })
}

/// Applies the stage gate. On advance the stage moves up by one, held at the
/// last stage of a finite table and never lowered, and the step counter
/// restarts; the success window keeps its history.
pub fn advance_curriculum(schedule: &PenaltySchedule, state: &StageState) -> StageState {
    let mut next = state.clone();
    if schedule.should_advance(state.steps_in_stage, state.success_window.rate().rate) {
        next.stage = match schedule.stage_map.last_stage() {
            Some(last) => (state.stage + 1).min(last).max(state.stage),
            None => state.stage + 1,
        };
        next.steps_in_stage = 0;
    }
    next
}

/// What happened in one mediated step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub delivered_message: Option<Message>,
    pub listener_action: ListenerAction,
    pub env_reward: f64,
    /// Environment reward minus the message penalty; 0 when the speaker did
    /// not act.
    pub speaker_reward: f64,
    pub penalty: f64,
    /// The listener's action was a stay that asks for a message next step.
    pub solicited: bool,
    pub speaker_acted: bool,
}

/// A decision together with the features it was made from.
#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub features: Vec<f64>,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MediatedStep {
    pub outcome: StepOutcome,
    pub state: EnvState,
    pub pending_solicit: bool,
    pub speaker: Option<Choice>,
    pub listener: Choice,
}

/// Fixed inputs of a step.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub mode: &'a CommMode,
    pub stage: &'a StageState,
    pub layout: &'a MazeLayout,
    pub visibility: Visibility,
    /// The episode's upfront message; empty outside upfront mode.
    pub upfront: &'a [Message],
    pub explore: bool,
}

/// Exploration streams of the two agents.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRngs {
    pub speaker: StreamRng,
    pub listener: StreamRng,
}

fn to_message(index: usize) -> Result<Message> {
    Message::from_index(index).ok_or(Error::Shape {
        what: "speaker symbol",
        expected: Message::SYMBOLS,
        got: index,
    })
}

fn to_action(index: usize) -> Result<ListenerAction> {
    ListenerAction::from_index(index).ok_or(Error::Shape {
        what: "listener action",
        expected: ListenerAction::COUNT,
        got: index,
    })
}

/// Speaker features for `state`.
pub fn speaker_features(layout: &MazeLayout, state: &EnvState) -> Vec<f64> {
    encode_speaker_input(&speaker_view(layout, state))
}

/// Listener features for `state` given the message slots of this step.
pub fn listener_features(
    layout: &MazeLayout,
    state: &EnvState,
    visibility: Visibility,
    slots: &[MessageSlot],
) -> Vec<f64> {
    encode_listener_input(&listener_view(layout, state, visibility), slots)
}

/// Runs one timestep: the speaker talks if the regime lets it, the listener
/// acts on its view plus the delivered message, and the world moves.
pub fn mediate_step(
    ctx: &StepContext<'_>,
    speaker: &mut dyn Actor,
    listener: &mut dyn Actor,
    state: &EnvState,
    pending_solicit: bool,
    rngs: &mut AgentRngs,
) -> Result<MediatedStep> {
    if state.done {
        return Err(Error::EpisodeFinished);
    }
    let layout = ctx.layout;
    let speaks = match ctx.mode {
        CommMode::Upfront { .. } => false,
        CommMode::Situated => pending_solicit,
        _ => true,
    };

    let spoken = if speaks {
        let features = speaker_features(layout, state);
        let obs = Observation {
            layout,
            state,
            features: &features,
        };
        let decision = speaker.decide(&obs, ctx.explore, &mut rngs.speaker)?;
        Some(Choice { features, decision })
    } else {
        None
    };
    let delivered = spoken
        .as_ref()
        .map(|c| to_message(c.decision.index))
        .transpose()?;

    let slots: Vec<MessageSlot> = match ctx.mode {
        CommMode::Upfront { .. } => ctx
            .upfront
            .iter()
            .map(|m| MessageSlot::Delivered(*m))
            .collect(),
        _ => vec![delivered.map_or(MessageSlot::Empty, MessageSlot::Delivered)],
    };
    let features = listener_features(layout, state, ctx.visibility, &slots);
    let obs = Observation {
        layout,
        state,
        features: &features,
    };
    let decision = listener.decide(&obs, ctx.explore, &mut rngs.listener)?;
    let action = to_action(decision.index)?;
    let step = apply_action(layout, state, action)?;

    let penalty = match (ctx.mode, delivered) {
        (CommMode::FixedPenalty { .. } | CommMode::Curriculum { .. }, Some(m)) => {
            message_penalty(ctx.mode, ctx.stage, m)?
        }
        _ => 0.0,
    };
    let solicited = ctx.mode.is_situated() && action == ListenerAction::Stay;
    Ok(MediatedStep {
        outcome: StepOutcome {
            delivered_message: delivered,
            listener_action: action,
            env_reward: step.reward,
            speaker_reward: if speaks { step.reward - penalty } else { 0.0 },
            penalty,
            solicited,
            speaker_acted: speaks,
        },
        state: step.state,
        pending_solicit: solicited,
        speaker: spoken,
        listener: Choice { features, decision },
    })
}

/// The message an upfront speaker composes at reset.
#[derive(Debug, Clone, PartialEq)]
pub struct UpfrontMessage {
    pub tokens: Vec<Message>,
    /// The speaker features shared by every token choice.
    pub features: Vec<f64>,
    pub decisions: Vec<Decision>,
}

/// `tokens` successive symbol choices from the reset-time speaker view. A
/// recurrent speaker carries its memory from one token to the next.
pub fn generate_upfront(
    speaker: &mut dyn Actor,
    layout: &MazeLayout,
    state: &EnvState,
    tokens: u8,
    explore: bool,
    rng: &mut StreamRng,
) -> Result<UpfrontMessage> {
    if !(1..=3).contains(&tokens) {
        return Err(Error::Config(
            "upfront messages have 1, 2 or 3 tokens".into(),
        ));
    }
    if state.step_count != 0 {
        return Err(Error::Mode(
            "upfront messages are composed before the first step",
        ));
    }
    let features = speaker_features(layout, state);
    let obs = Observation {
        layout,
        state,
        features: &features,
    };
    let mut decisions = Vec::with_capacity(usize::from(tokens));
    let mut out = Vec::with_capacity(usize::from(tokens));
    for _ in 0..tokens {
        let d = speaker.decide(&obs, explore, rng)?;
        out.push(to_message(d.index)?);
        decisions.push(d);
    }
    Ok(UpfrontMessage {
        tokens: out,
        features,
        decisions,
    })
}

/// Non-null messages the listener received in an episode. Upfront tokens
/// count once per episode, not once per step.
pub fn count_nonzero_messages(trace: &EpisodeTrace) -> u32 {
    if !trace.upfront.is_empty() {
        return trace.upfront.iter().filter(|m| !m.is_null()).count() as u32;
    }
    trace
        .steps
        .iter()
        .filter(|s| s.delivered.is_some_and(|m| !m.is_null()))
        .count() as u32
}
