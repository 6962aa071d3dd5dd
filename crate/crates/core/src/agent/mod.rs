//! Speaker and listener Q-agents: input encodings, ε-greedy selection,
//! λ-return targets and the episodic fitted-Q update.

mod encode;
mod qagent;
mod trajectory;

pub use encode::{encode_listener_input, encode_speaker_input, MessageSlot};
pub use qagent::{fitted_q_update, AgentConfig, QAgent, Role};
pub use trajectory::{lambda_targets, Ending, TrajStep, Trajectory};

use rand::Rng;

use crate::gridworld::{EnvState, MazeLayout};
use crate::nn::{MemoryState, QValues, ACTIONS};
use crate::rng::StreamRng;
use crate::Result;

/// One of the five speaker symbols; `0` is the null message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Message(u8);

impl Message {
    pub const NULL: Message = Message(0);
    pub const SYMBOLS: usize = 5;

    pub fn new(symbol: u8) -> Option<Self> {
        (usize::from(symbol) < Self::SYMBOLS).then_some(Message(symbol))
    }

    pub fn from_index(i: usize) -> Option<Self> {
        u8::try_from(i).ok().and_then(Self::new)
    }

    pub fn symbol(self) -> u8 {
        self.0
    }

    pub fn is_null(self) -> bool {
        self.0 == 0
    }
}

/// ε-greedy choice over `qvalues`: greedy ties go to the lowest index, and
/// with probability `epsilon` the index is drawn uniformly instead.
pub fn select_action<R: Rng + ?Sized>(qvalues: &QValues, epsilon: f64, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    if u < epsilon {
        rng.random_range(0..ACTIONS)
    } else {
        argmax(qvalues)
    }
}

pub fn argmax(qvalues: &QValues) -> usize {
    let mut best = 0;
    for (i, q) in qvalues.iter().enumerate().skip(1) {
        if *q > qvalues[best] {
            best = i;
        }
    }
    best
}

/// Everything an agent may look at when choosing. Learned agents only use
/// `features`; scripted oracles read the layout and state directly.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub layout: &'a MazeLayout,
    pub state: &'a EnvState,
    pub features: &'a [f64],
}

/// A chosen index together with what the learner needs to replay it.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub index: usize,
    pub qvalues: QValues,
    /// Recurrent state the decision was evaluated from.
    pub memory: MemoryState,
}

/// Common interface of learned and scripted speakers/listeners.
pub trait Actor {
    /// Clears per-episode state such as the recurrent carry.
    fn begin_episode(&mut self);

    fn decide(
        &mut self,
        obs: &Observation<'_>,
        explore: bool,
        rng: &mut StreamRng,
    ) -> Result<Decision>;

    /// Q-values for `obs` without advancing any internal state.
    fn peek(&mut self, obs: &Observation<'_>) -> Result<QValues>;

    /// `max_a Q(obs, a)`, the value bootstrapped at a timeout.
    fn bootstrap(&mut self, obs: &Observation<'_>) -> Result<f64> {
        Ok(self
            .peek(obs)?
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// Learns from one finished episode; returns the regression loss if an
    /// update happened.
    fn learn(&mut self, traj: &Trajectory) -> Result<Option<f64>>;
}
