//! Non-learning speaker/listener pairs built on BFS, used as oracles for the
//! message counts an optimal protocol needs.

use alloc::vec;
use alloc::vec::Vec;

use crate::agent::{Actor, AgentConfig, Decision, Message, Observation, Trajectory};
use crate::comm::{CommMode, StageState};
use crate::episode::{run_episode, EpisodeConfig, EpisodeTrace};
use crate::gridworld::{
    distance_map, next_step_towards, EnvState, ListenerAction, MazeLayout, Visibility,
};
use crate::nn::{MemoryState, QValues, ACTIONS};
use crate::rng::StreamRng;
use crate::train::episode_rngs;
use crate::{Error, Result};

/// Experimental condition a scripted pair is built for. Memory is accepted
/// for symmetry with learned pairs but the scripts do not need it.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub visibility: Visibility,
    pub memory: bool,
    pub mode: CommMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeakerProtocol {
    /// Always name the next move on a shortest path.
    Direction,
    /// Name the next move only where the listener's default move is wrong
    /// or undefined; null otherwise.
    Corrections,
    /// Spell the goal's candidate index in base 5, least significant first.
    GoalIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ListenerPolicy {
    /// Follow non-null messages; otherwise take the default move if the view
    /// allows one, else stay.
    Follow,
    /// Decode the goal from the upfront tokens and walk a shortest path.
    GoalIndex,
}

fn one_hot(index: usize) -> QValues {
    let mut q = [0.0; ACTIONS];
    q[index] = 1.0;
    q
}

fn decision(index: usize) -> Decision {
    Decision {
        index,
        qvalues: one_hot(index),
        memory: MemoryState::default(),
    }
}

/// Shortest-path symbol for the listener's current cell: the action index
/// plus one, so that 0 stays the null message.
fn direction_symbol(layout: &MazeLayout, state: &EnvState) -> usize {
    let to_goal = distance_map(layout, state.goal_pos);
    next_step_towards(&to_goal, state.agent_pos).map_or(0, |a| a.index() + 1)
}

/// The move a partially sighted listener makes without advice: the only open
/// direction that does not turn back. `None` at junctions and dead ends.
pub fn default_move(layout: &MazeLayout, state: &EnvState) -> Option<ListenerAction> {
    let h = state.heading;
    let mut open = [h, h.left(), h.left().opposite()]
        .into_iter()
        .filter(|d| layout.is_floor(state.agent_pos.offset(d.delta())));
    match (open.next(), open.next()) {
        (Some(d), None) => Some(ListenerAction::towards(d)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedSpeaker {
    pub protocol: SpeakerProtocol,
    tokens_sent: u32,
}

impl ScriptedSpeaker {
    pub fn new(protocol: SpeakerProtocol) -> Self {
        Self {
            protocol,
            tokens_sent: 0,
        }
    }

    fn choose(&self, obs: &Observation<'_>) -> usize {
        let (layout, state) = (obs.layout, obs.state);
        match self.protocol {
            SpeakerProtocol::Direction => direction_symbol(layout, state),
            SpeakerProtocol::Corrections => {
                let symbol = direction_symbol(layout, state);
                match default_move(layout, state) {
                    Some(a) if a.index() + 1 == symbol => 0,
                    _ => symbol,
                }
            }
            SpeakerProtocol::GoalIndex => {
                let goal = layout
                    .goal_candidates
                    .iter()
                    .position(|g| *g == state.goal_pos)
                    .unwrap_or(0);
                (goal / 5usize.pow(self.tokens_sent)) % Message::SYMBOLS
            }
        }
    }
}

impl Actor for ScriptedSpeaker {
    fn begin_episode(&mut self) {
        self.tokens_sent = 0;
    }

    fn decide(
        &mut self,
        obs: &Observation<'_>,
        _explore: bool,
        _rng: &mut StreamRng,
    ) -> Result<Decision> {
        let index = self.choose(obs);
        self.tokens_sent += 1;
        Ok(decision(index))
    }

    fn peek(&mut self, obs: &Observation<'_>) -> Result<QValues> {
        Ok(one_hot(self.choose(obs)))
    }

    fn learn(&mut self, _traj: &Trajectory) -> Result<Option<f64>> {
        Ok(None)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedListener {
    pub policy: ListenerPolicy,
    pub visibility: Visibility,
    /// Message blocks at the end of the listener features.
    pub slots: usize,
}

impl ScriptedListener {
    /// Symbols in the message blocks of `features`; `None` for empty blocks.
    fn messages(&self, features: &[f64]) -> Result<Vec<Option<usize>>> {
        let width = self.slots * Message::SYMBOLS;
        if features.len() < width {
            return Err(Error::Shape {
                what: "listener features",
                expected: width,
                got: features.len(),
            });
        }
        Ok(features[features.len() - width..]
            .chunks_exact(Message::SYMBOLS)
            .map(|block| block.iter().position(|v| *v == 1.0))
            .collect())
    }

    fn choose(&self, obs: &Observation<'_>) -> Result<usize> {
        let (layout, state) = (obs.layout, obs.state);
        let messages = self.messages(obs.features)?;
        let stay = ListenerAction::Stay.index();
        Ok(match self.policy {
            ListenerPolicy::Follow => match messages.first().copied().flatten() {
                Some(symbol) if symbol > 0 => symbol - 1,
                _ => match self.visibility {
                    Visibility::Partial => {
                        default_move(layout, state).map_or(stay, ListenerAction::index)
                    }
                    Visibility::None => stay,
                },
            },
            ListenerPolicy::GoalIndex => {
                let goal = messages
                    .iter()
                    .rev()
                    .fold(0usize, |acc, m| acc * Message::SYMBOLS + m.unwrap_or(0));
                match layout.goal_candidates.get(goal) {
                    Some(g) => next_step_towards(&distance_map(layout, *g), state.agent_pos)
                        .map_or(stay, ListenerAction::index),
                    None => stay,
                }
            }
        })
    }
}

impl Actor for ScriptedListener {
    fn begin_episode(&mut self) {}

    fn decide(
        &mut self,
        obs: &Observation<'_>,
        _explore: bool,
        _rng: &mut StreamRng,
    ) -> Result<Decision> {
        Ok(decision(self.choose(obs)?))
    }

    fn peek(&mut self, obs: &Observation<'_>) -> Result<QValues> {
        Ok(one_hot(self.choose(obs)?))
    }

    fn learn(&mut self, _traj: &Trajectory) -> Result<Option<f64>> {
        Ok(None)
    }
}

/// BFS-driven speaker and listener for `condition` on any layout.
pub fn scripted_pair(
    _layout: &MazeLayout,
    condition: &Condition,
) -> (ScriptedSpeaker, ScriptedListener) {
    let (protocol, policy) = match (&condition.mode, condition.visibility) {
        (CommMode::Upfront { .. }, _) => (SpeakerProtocol::GoalIndex, ListenerPolicy::GoalIndex),
        (CommMode::Situated, _) | (_, Visibility::None) => {
            (SpeakerProtocol::Direction, ListenerPolicy::Follow)
        }
        (_, Visibility::Partial) => (SpeakerProtocol::Corrections, ListenerPolicy::Follow),
    };
    (
        ScriptedSpeaker::new(protocol),
        ScriptedListener {
            policy,
            visibility: condition.visibility,
            slots: condition.mode.message_slots(),
        },
    )
}

/// Runs the scripted pair greedily once per goal candidate, in candidate
/// order, by restricting the layout to that single goal.
pub fn rollout_every_goal(layout: &MazeLayout, condition: &Condition) -> Result<Vec<EpisodeTrace>> {
    let (mut speaker, mut listener) = scripted_pair(layout, condition);
    layout
        .goal_candidates
        .iter()
        .map(|g| {
            let mut single = layout.clone();
            single.goal_candidates = vec![*g];
            let cfg = EpisodeConfig {
                layout: &single,
                mode: &condition.mode,
                visibility: condition.visibility,
                explore: false,
                learn: false,
                gamma: AgentConfig::GAMMA,
            };
            let mut stage = StageState::default();
            Ok(run_episode(
                &cfg,
                &mut speaker,
                &mut listener,
                &mut stage,
                &mut episode_rngs(0),
            )?
            .trace)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comm::count_nonzero_messages;
    use crate::gridworld::{build_layout, LayoutId};
    use crate::metrics::RunningMetrics;

    fn cond(visibility: Visibility, mode: CommMode) -> Condition {
        Condition {
            visibility,
            memory: false,
            mode,
        }
    }

    #[test]
    fn unsituated_blind_pair_talks_every_step() {
        for t in rollout_every_goal(
            &build_layout(LayoutId::Tmaze),
            &cond(Visibility::None, CommMode::CheapTalk),
        )
        .unwrap()
        {
            assert_eq!(
                (
                    t.summary.reward,
                    t.summary.steps,
                    t.summary.nonzero_messages
                ),
                (1.0, 9, 9)
            );
            assert!(t.steps.iter().all(|s| s.delivered.is_some()));
        }
    }

    #[test]
    fn unsituated_sighted_pair_corrects_at_junctions() {
        for t in rollout_every_goal(
            &build_layout(LayoutId::Tmaze),
            &cond(Visibility::Partial, CommMode::CheapTalk),
        )
        .unwrap()
        {
            assert_eq!(
                (
                    t.summary.reward,
                    t.summary.steps,
                    t.summary.nonzero_messages
                ),
                (1.0, 9, 2)
            );
        }
    }

    #[test]
    fn situated_sighted_pair_solicits_twice() {
        for t in rollout_every_goal(
            &build_layout(LayoutId::Tmaze),
            &cond(Visibility::Partial, CommMode::Situated),
        )
        .unwrap()
        {
            assert_eq!(
                (
                    t.summary.reward,
                    t.summary.steps,
                    t.summary.nonzero_messages
                ),
                (1.0, 11, 2)
            );
            let solicits: Vec<_> = t
                .steps
                .iter()
                .filter(|s| s.solicited)
                .map(|s| s.cell)
                .collect();
            assert_eq!(solicits.len(), 2);
            assert_eq!(solicits[0], crate::gridworld::Cell { x: 4, y: 4 });
            assert!(t.is_consistent());
        }
    }

    #[test]
    fn situated_blind_pair_alternates() {
        for t in rollout_every_goal(
            &build_layout(LayoutId::Tmaze),
            &cond(Visibility::None, CommMode::Situated),
        )
        .unwrap()
        {
            assert_eq!(
                (
                    t.summary.reward,
                    t.summary.steps,
                    t.summary.nonzero_messages
                ),
                (1.0, 18, 9)
            );
        }
    }

    #[test]
    fn upfront_pair_spells_the_goal() {
        for (id, k) in [
            (LayoutId::Tmaze, 1),
            (LayoutId::DeadEnds, 1),
            (LayoutId::FourRooms, 3),
        ] {
            let layout = build_layout(id);
            for t in rollout_every_goal(
                &layout,
                &cond(Visibility::None, CommMode::Upfront { tokens: k }),
            )
            .unwrap()
            {
                assert_eq!(t.summary.reward, 1.0, "{id:?}");
                assert_eq!(
                    t.summary.steps,
                    crate::gridworld::shortest_path(&layout, layout.start, t.goal).unwrap()
                );
                assert_eq!(t.upfront.len(), usize::from(k));
                assert_eq!(
                    count_nonzero_messages(&t),
                    t.upfront.iter().filter(|m| !m.is_null()).count() as u32
                );
            }
        }
    }

    #[test]
    fn blind_pairs_solve_every_layout_optimally() {
        for id in [LayoutId::Tmaze, LayoutId::DeadEnds, LayoutId::FourRooms] {
            let layout = build_layout(id);
            let traces =
                rollout_every_goal(&layout, &cond(Visibility::None, CommMode::CheapTalk)).unwrap();
            assert_eq!(traces.len(), id.goal_count());
            for t in traces {
                assert_eq!(t.summary.reward, 1.0);
                assert_eq!(
                    t.summary.steps,
                    crate::gridworld::shortest_path(&layout, layout.start, t.goal).unwrap()
                );
            }
        }
    }

    #[test]
    fn scripted_metrics_on_tmaze() {
        let mut m = RunningMetrics::new(9);
        for t in rollout_every_goal(
            &build_layout(LayoutId::Tmaze),
            &cond(Visibility::None, CommMode::CheapTalk),
        )
        .unwrap()
        {
            m.record_episode(
                t.summary.reward,
                t.summary.steps,
                t.summary.nonzero_messages,
            )
            .unwrap();
        }
        assert_eq!(m.m_t(), Some(1.0));
        assert_eq!(m.m_o(), Some(1.0));
        assert!((m.m_s().unwrap() + 2.1972).abs() < 1e-4);
    }
}
