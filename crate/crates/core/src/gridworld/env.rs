use rand::Rng;

use super::layout::{Cell, MazeLayout};
use super::Heading;
use crate::{Error, Result};

/// Episode timeout in environment steps.
pub const EPISODE_LIMIT: u32 = 100;

/// Listener actions, in the order the network heads emit them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ListenerAction {
    MoveUp = 0,
    MoveDown = 1,
    MoveRight = 2,
    MoveLeft = 3,
    Stay = 4,
}

impl ListenerAction {
    pub const COUNT: usize = 5;
    pub const ALL: [ListenerAction; 5] = [
        ListenerAction::MoveUp,
        ListenerAction::MoveDown,
        ListenerAction::MoveRight,
        ListenerAction::MoveLeft,
        ListenerAction::Stay,
    ];
    pub const MOVES: [ListenerAction; 4] = [
        ListenerAction::MoveUp,
        ListenerAction::MoveDown,
        ListenerAction::MoveRight,
        ListenerAction::MoveLeft,
    ];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Movement direction, or `None` for `Stay`.
    pub fn heading(self) -> Option<Heading> {
        match self {
            ListenerAction::MoveUp => Some(Heading::Up),
            ListenerAction::MoveDown => Some(Heading::Down),
            ListenerAction::MoveRight => Some(Heading::Right),
            ListenerAction::MoveLeft => Some(Heading::Left),
            ListenerAction::Stay => None,
        }
    }

    pub fn towards(heading: Heading) -> Self {
        match heading {
            Heading::Up => ListenerAction::MoveUp,
            Heading::Down => ListenerAction::MoveDown,
            Heading::Right => ListenerAction::MoveRight,
            Heading::Left => ListenerAction::MoveLeft,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ListenerAction::MoveUp => "up",
            ListenerAction::MoveDown => "down",
            ListenerAction::MoveRight => "right",
            ListenerAction::MoveLeft => "left",
            ListenerAction::Stay => "stay",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnvState {
    pub agent_pos: Cell,
    pub heading: Heading,
    pub goal_pos: Cell,
    pub step_count: u32,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub state: EnvState,
    pub reward: f64,
    pub done: bool,
}

/// Starts an episode: listener on the start cell facing up, goal drawn
/// uniformly from the layout's candidates.
pub fn reset<R: Rng + ?Sized>(layout: &MazeLayout, rng: &mut R) -> EnvState {
    let goal = layout.goal_candidates[rng.random_range(0..layout.goal_candidates.len())];
    EnvState {
        agent_pos: layout.start,
        heading: Heading::Up,
        goal_pos: goal,
        step_count: 0,
        done: false,
    }
}

/// Applies one listener action. Moves into walls leave the position
/// unchanged but still turn the listener and consume a step.
pub fn apply_action(
    layout: &MazeLayout,
    state: &EnvState,
    action: ListenerAction,
) -> Result<StepResult> {
    if state.done {
        return Err(Error::EpisodeFinished);
    }
    let mut next = *state;
    if let Some(heading) = action.heading() {
        next.heading = heading;
        let target = state.agent_pos.offset(heading.delta());
        if layout.is_floor(target) {
            next.agent_pos = target;
        }
    }
    next.step_count += 1;
    let reached = next.agent_pos == next.goal_pos;
    next.done = reached || next.step_count >= EPISODE_LIMIT;
    Ok(StepResult {
        state: next,
        reward: if reached { 1.0 } else { 0.0 },
        done: next.done,
    })
}
