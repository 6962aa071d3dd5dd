use alloc::vec::Vec;

use crate::nn::{MemoryState, QValues};
use crate::{Error, Result};

/// One decision of an agent inside an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajStep {
    pub input: Vec<f64>,
    pub memory: MemoryState,
    pub action: usize,
    /// Reward collected between this decision and the next one, already
    /// discounted to this decision's time.
    pub reward: f64,
    /// Q-values at selection time; their max is the bootstrap value of this
    /// step for earlier decisions.
    pub qvalues: QValues,
    /// Environment steps until the next decision; the discount applied across
    /// this step is `gamma^gap`.
    pub gap: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ending {
    /// The task ended; nothing is bootstrapped past the last step.
    Terminal,
    /// Cut off by the time limit; bootstrap from the state reached.
    Timeout { bootstrap: f64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub steps: Vec<TrajStep>,
    /// `None` while the episode is still running.
    pub ending: Option<Ending>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn max_q(q: &QValues) -> f64 {
    q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Forward-view λ-returns for every step.
///
/// Each target mixes the n-step returns of its step with weights
/// `(1-λ)λ^(n-1)`, truncated at the end of the episode with the leftover
/// mass `λ^(N-1)` on the longest return. Computed with the equivalent
/// backward recursion `G_t = r_t + d_t((1-λ) V_{t+1} + λ G_{t+1})`.
pub fn lambda_targets(traj: &Trajectory, gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    let ending = traj.ending.ok_or(Error::IncompleteTrajectory)?;
    let n = traj.steps.len();
    let mut targets = alloc::vec![0.0; n];
    let tail = match ending {
        Ending::Terminal => 0.0,
        Ending::Timeout { bootstrap } => bootstrap,
    };
    let mut next_return = tail;
    let mut next_value = tail;
    for t in (0..n).rev() {
        let step = &traj.steps[t];
        let discount = libm::pow(gamma, f64::from(step.gap));
        let g = if t + 1 == n {
            step.reward + discount * tail
        } else {
            step.reward + discount * ((1.0 - lambda) * next_value + lambda * next_return)
        };
        if !g.is_finite() {
            return Err(Error::NonFinite("lambda target"));
        }
        targets[t] = g;
        next_return = g;
        next_value = max_q(&step.qvalues);
    }
    Ok(targets)
}
