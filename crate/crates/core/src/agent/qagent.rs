use alloc::vec::Vec;
use rand::Rng;

use super::trajectory::{lambda_targets, Trajectory};
use super::{select_action, Actor, Decision, Observation};
use crate::gridworld::Visibility;
use crate::nn::{
    forward, init_params, loss_and_grads, Adam, Encoder, MemoryState, NetworkSpec, ParamSet,
    QValues, Sample, ACTIONS,
};
use crate::rng::StreamRng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Role {
    Speaker,
    Listener,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AgentConfig {
    pub role: Role,
    /// Listener view; ignored for the speaker, which always sees the map.
    pub visibility: Visibility,
    pub has_memory: bool,
    pub rep_size: usize,
    pub learning_rate: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub hidden: usize,
    pub memory_size: usize,
    /// Number of 5-wide message blocks in the listener input.
    pub message_slots: usize,
}

impl AgentConfig {
    pub const EPSILON: f64 = 0.01;
    pub const GAMMA: f64 = 0.99;
    pub const LAMBDA: f64 = 0.9;

    pub fn new(
        role: Role,
        visibility: Visibility,
        has_memory: bool,
        rep_size: usize,
        learning_rate: f64,
    ) -> Self {
        Self {
            role,
            visibility,
            has_memory,
            rep_size,
            learning_rate,
            epsilon: Self::EPSILON,
            gamma: Self::GAMMA,
            lambda: Self::LAMBDA,
            hidden: 32,
            memory_size: 32,
            message_slots: 1,
        }
    }

    pub fn network_spec(&self) -> NetworkSpec {
        let (encoder, aux_inputs) = match self.role {
            Role::Speaker => (Encoder::map(), 0),
            Role::Listener => (
                Encoder::Dense {
                    inputs: self.visibility.feature_len(),
                },
                self.message_slots * ACTIONS,
            ),
        };
        NetworkSpec {
            encoder,
            rep_size: self.rep_size,
            aux_inputs,
            hidden: self.hidden,
            memory: self.has_memory.then_some(self.memory_size),
            actions: ACTIONS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.epsilon)
            || !(0.0..=1.0).contains(&self.gamma)
            || !(0.0..=1.0).contains(&self.lambda)
        {
            return bad("epsilon, gamma and lambda must lie in [0, 1]");
        }
        if self.role == Role::Listener && self.message_slots == 0 {
            return bad("listener needs at least one message slot");
        }
        self.network_spec().validate()
    }
}

/// A learning agent: its network, optimiser state and recurrent carry.
#[derive(Debug, Clone, PartialEq)]
pub struct QAgent {
    pub config: AgentConfig,
    pub spec: NetworkSpec,
    pub params: ParamSet,
    pub adam: Adam,
    pub memory: MemoryState,
}

impl QAgent {
    pub fn new<R: Rng + ?Sized>(config: AgentConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let spec = config.network_spec();
        let params = init_params(&spec, rng);
        Self::from_parts(config, params, Adam::new(&ParamSet::zeros(&spec)))
    }

    pub fn from_parts(config: AgentConfig, params: ParamSet, adam: Adam) -> Result<Self> {
        config.validate()?;
        let spec = config.network_spec();
        if !params.matches(&spec) || !adam.m.matches(&spec) || !adam.v.matches(&spec) {
            return Err(Error::Config(
                "parameter shapes do not match the agent configuration".into(),
            ));
        }
        Ok(Self {
            memory: MemoryState::zeros(&spec),
            config,
            spec,
            params,
            adam,
        })
    }
}

/// Regresses Q(s_t, a_t) towards the episode's λ-returns with one Adam step.
/// Returns the loss before the update, or `None` for an empty trajectory.
pub fn fitted_q_update(agent: &mut QAgent, traj: &Trajectory) -> Result<Option<f64>> {
    let targets = lambda_targets(traj, agent.config.gamma, agent.config.lambda)?;
    if targets.is_empty() {
        return Ok(None);
    }
    let batch: Vec<Sample<'_>> = traj
        .steps
        .iter()
        .zip(&targets)
        .map(|(s, &target)| Sample {
            input: &s.input,
            memory: &s.memory,
            action: s.action,
            target,
        })
        .collect();
    let (loss, grads) = loss_and_grads(&agent.spec, &agent.params, &batch)?;
    agent
        .adam
        .step(&mut agent.params, &grads, agent.config.learning_rate)?;
    if !agent.params.all_finite() {
        return Err(Error::NonFinite("parameters after update"));
    }
    Ok(Some(loss))
}

impl Actor for QAgent {
    fn begin_episode(&mut self) {
        self.memory = MemoryState::zeros(&self.spec);
    }

    fn decide(
        &mut self,
        obs: &Observation<'_>,
        explore: bool,
        rng: &mut StreamRng,
    ) -> Result<Decision> {
        let (qvalues, next) = forward(&self.spec, &self.params, obs.features, &self.memory)?;
        let epsilon = if explore { self.config.epsilon } else { 0.0 };
        let index = select_action(&qvalues, epsilon, rng);
        let memory = core::mem::replace(&mut self.memory, next);
        Ok(Decision {
            index,
            qvalues,
            memory,
        })
    }

    fn peek(&mut self, obs: &Observation<'_>) -> Result<QValues> {
        Ok(forward(&self.spec, &self.params, obs.features, &self.memory)?.0)
    }

    fn learn(&mut self, traj: &Trajectory) -> Result<Option<f64>> {
        fitted_q_update(self, traj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{Ending, TrajStep};
    use crate::rng::{stream, Stream};
    use alloc::vec;

    fn listener(lr: f64) -> QAgent {
        let cfg = AgentConfig::new(Role::Listener, Visibility::Partial, true, 8, lr);
        QAgent::new(cfg, &mut stream(3, Stream::Init)).unwrap()
    }

    fn one_step(agent: &QAgent, input: Vec<f64>, reward: f64) -> Trajectory {
        let (q, _) = forward(
            &agent.spec,
            &agent.params,
            &input,
            &MemoryState::zeros(&agent.spec),
        )
        .unwrap();
        Trajectory {
            steps: vec![TrajStep {
                input,
                memory: MemoryState::zeros(&agent.spec),
                action: 1,
                reward,
                qvalues: q,
                gap: 1,
            }],
            ending: Some(Ending::Terminal),
        }
    }

    #[test]
    fn exact_targets_do_not_move_params() {
        let mut a = listener(1e-3);
        let input = vec![0.5; 14];
        let (q, _) = forward(&a.spec, &a.params, &input, &MemoryState::zeros(&a.spec)).unwrap();
        let traj = one_step(&a, input, q[1]);
        let before = a.params.clone();
        let loss = fitted_q_update(&mut a, &traj).unwrap();
        assert_eq!(loss, Some(0.0));
        assert_eq!(a.params, before);
    }

    #[test]
    fn repeated_updates_converge_to_constant_target() {
        let mut a = listener(1e-2);
        let input: Vec<f64> = (0..14).map(|i| (i % 3) as f64 * 0.5).collect();
        let traj = one_step(&a, input.clone(), 0.8);
        for _ in 0..2000 {
            fitted_q_update(&mut a, &traj).unwrap();
        }
        let (q, _) = forward(&a.spec, &a.params, &input, &MemoryState::zeros(&a.spec)).unwrap();
        assert!((q[1] - 0.8).abs() < 1e-2, "q = {}", q[1]);
    }

    #[test]
    fn identical_agents_update_identically() {
        let mut a = listener(1e-3);
        let mut b = listener(1e-3);
        let traj = one_step(&a, vec![1.0; 14], 1.0);
        fitted_q_update(&mut a, &traj).unwrap();
        fitted_q_update(&mut b, &traj).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn decide_advances_memory_and_reports_snapshot() {
        let mut a = listener(1e-3);
        let layout = crate::gridworld::build_layout(crate::gridworld::LayoutId::Tmaze);
        let state = crate::gridworld::reset(&layout, &mut stream(0, Stream::Env));
        let features = vec![1.0; 14];
        let obs = Observation {
            layout: &layout,
            state: &state,
            features: &features,
        };
        let mut r = stream(0, Stream::ListenerExplore);
        let d1 = a.decide(&obs, false, &mut r).unwrap();
        assert_eq!(d1.memory, MemoryState::zeros(&a.spec));
        let d2 = a.decide(&obs, false, &mut r).unwrap();
        assert_ne!(d2.memory, d1.memory);
        a.begin_episode();
        assert_eq!(a.memory, MemoryState::zeros(&a.spec));
    }

    #[test]
    fn mismatched_parts_rejected() {
        let a = listener(1e-3);
        let mut cfg = a.config;
        cfg.has_memory = false;
        assert!(QAgent::from_parts(cfg, a.params.clone(), a.adam.clone()).is_err());
    }
}
