//! Task success, path optimality and message sparsity, plus the windowed
//! success rate and the standard error used to aggregate seeds.

use alloc::collections::VecDeque;

use crate::{Error, Result};

/// Episodes used by the curriculum's success estimate.
pub const SUCCESS_WINDOW: usize = 1000;

/// Order-free accumulators for the three episode metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunningMetrics {
    pub n: u64,
    pub sum_r: f64,
    pub sum_r_over_steps: f64,
    pub sum_neglog_m: f64,
    pub s_opt: u32,
}

impl RunningMetrics {
    pub fn new(s_opt: u32) -> Self {
        Self {
            n: 0,
            sum_r: 0.0,
            sum_r_over_steps: 0.0,
            sum_neglog_m: 0.0,
            s_opt,
        }
    }

    /// Adds one finished episode with reward `r`, `steps` environment steps
    /// and `nonzero_msgs` non-null messages.
    pub fn record_episode(&mut self, r: f64, steps: u32, nonzero_msgs: u32) -> Result<()> {
        if steps == 0 {
            return Err(Error::Config("episode must take at least one step".into()));
        }
        if !r.is_finite() {
            return Err(Error::NonFinite("episode reward"));
        }
        self.n += 1;
        self.sum_r += r;
        self.sum_r_over_steps += r / f64::from(steps);
        self.sum_neglog_m += neglog_messages(nonzero_msgs);
        Ok(())
    }

    /// Sums the accumulators of two runs over the same layout.
    pub fn merge(&mut self, other: &RunningMetrics) -> Result<()> {
        if self.s_opt != other.s_opt {
            return Err(Error::Config(
                "cannot merge metrics with different s_opt".into(),
            ));
        }
        self.n += other.n;
        self.sum_r += other.sum_r;
        self.sum_r_over_steps += other.sum_r_over_steps;
        self.sum_neglog_m += other.sum_neglog_m;
        Ok(())
    }

    fn mean(&self, sum: f64) -> Option<f64> {
        (self.n > 0).then(|| sum / self.n as f64)
    }

    /// Success rate `ΣR / n`.
    pub fn m_t(&self) -> Option<f64> {
        self.mean(self.sum_r)
    }

    /// Optimality `(s_opt / n) Σ R_i / s_i`.
    pub fn m_o(&self) -> Option<f64> {
        self.mean(self.sum_r_over_steps)
            .map(|m| m * f64::from(self.s_opt))
    }

    /// Sparsity: mean of `-ln max(m_i, 1)`.
    pub fn m_s(&self) -> Option<f64> {
        self.mean(self.sum_neglog_m)
    }
}

/// Contribution of one episode to the sparsity sum. Silent episodes count
/// like single-message ones.
pub fn neglog_messages(nonzero_msgs: u32) -> f64 {
    -libm::log(f64::from(nonzero_msgs.max(1)))
}

/// Windowed rate together with a flag for an empty history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowRate {
    pub rate: f64,
    pub empty: bool,
}

/// Mean of the last `min(window, len)` entries of `history`.
pub fn success_rate_window(history: &[f64], window: usize) -> Result<WindowRate> {
    if window == 0 {
        return Err(Error::Config("window must be at least 1".into()));
    }
    if history.is_empty() {
        return Ok(WindowRate {
            rate: 0.0,
            empty: true,
        });
    }
    let tail = &history[history.len().saturating_sub(window)..];
    Ok(WindowRate {
        rate: tail.iter().sum::<f64>() / tail.len() as f64,
        empty: false,
    })
}

/// Streaming version of [`success_rate_window`] for 0/1 outcomes.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SuccessWindow {
    window: usize,
    recent: VecDeque<bool>,
    hits: usize,
}

impl SuccessWindow {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            recent: VecDeque::with_capacity(window.max(1)),
            hits: 0,
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn push(&mut self, success: bool) {
        if self.recent.len() == self.window && self.recent.pop_front() == Some(true) {
            self.hits -= 1;
        }
        self.recent.push_back(success);
        self.hits += usize::from(success);
    }

    pub fn len(&self) -> usize {
        self.recent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recent.is_empty()
    }

    pub fn rate(&self) -> WindowRate {
        if self.recent.is_empty() {
            WindowRate {
                rate: 0.0,
                empty: true,
            }
        } else {
            WindowRate {
                rate: self.hits as f64 / self.recent.len() as f64,
                empty: false,
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.recent.iter().copied()
    }
}

/// Sample standard deviation over `sqrt(count)`; `None` below two values.
pub fn standard_error(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Some(libm::sqrt(ss / (n - 1) as f64) / libm::sqrt(n as f64))
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Median with the two middle values averaged for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}
