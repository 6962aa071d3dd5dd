//! Scripted-pair rollouts over every goal candidate, as a reference table.

use std::fmt::Write as _;
use std::path::Path;

use sitcomm_core::agent::Message;
use sitcomm_core::comm::CommMode;
use sitcomm_core::episode::EpisodeTrace;
use sitcomm_core::gridworld::{build_layout, shortest_path, LayoutId, Visibility};
use sitcomm_core::metrics::RunningMetrics;
use sitcomm_core::scripted::{rollout_every_goal, Condition};

use crate::runlog::{EpisodeRecord, LogRecord, RunLog};
use crate::traces;
use crate::{LabError, Result};

/// Upfront tokens the scripted speaker needs to name every goal.
pub fn upfront_tokens(id: LayoutId) -> u8 {
    let mut k = 1;
    while Message::SYMBOLS.pow(u32::from(k)) < id.goal_count() {
        k += 1;
    }
    k
}

pub fn conditions(id: LayoutId) -> Vec<Condition> {
    let mut out = Vec::new();
    for mode in [CommMode::CheapTalk, CommMode::Situated] {
        for visibility in [Visibility::None, Visibility::Partial] {
            out.push(Condition {
                visibility,
                memory: false,
                mode: mode.clone(),
            });
        }
    }
    out.push(Condition {
        visibility: Visibility::None,
        memory: false,
        mode: CommMode::Upfront {
            tokens: upfront_tokens(id),
        },
    });
    out
}

pub fn condition_name(c: &Condition) -> String {
    let mode = match c.mode {
        CommMode::Upfront { tokens } => format!("upfront{tokens}"),
        ref m => m.name().to_string(),
    };
    let vis = match c.visibility {
        Visibility::None => "none",
        Visibility::Partial => "partial",
    };
    format!("{mode}-{vis}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub condition: Condition,
    pub metrics: RunningMetrics,
    pub mean_steps: f64,
    pub mean_messages: f64,
    pub solicits: f64,
    /// Mean of shortest-path length over steps taken, per goal; 1 means
    /// every goal was reached by a shortest path.
    pub path_ratio: f64,
    pub traces: Vec<EpisodeTrace>,
}

pub fn oracle_rows(id: LayoutId) -> Result<Vec<OracleRow>> {
    let layout = build_layout(id);
    conditions(id)
        .into_iter()
        .map(|condition| {
            let traces = rollout_every_goal(&layout, &condition)?;
            let n = traces.len() as f64;
            let mut metrics = RunningMetrics::new(layout.s_opt);
            let mut path_ratio = 0.0;
            for t in &traces {
                let s = t.summary;
                metrics.record_episode(s.reward, s.steps, s.nonzero_messages)?;
                if s.success() {
                    path_ratio += f64::from(shortest_path(&layout, layout.start, t.goal)?)
                        / f64::from(s.steps);
                }
            }
            let sum = |f: fn(&EpisodeTrace) -> f64| traces.iter().map(f).sum::<f64>() / n;
            Ok(OracleRow {
                mean_steps: sum(|t| f64::from(t.summary.steps)),
                mean_messages: sum(|t| f64::from(t.summary.nonzero_messages)),
                solicits: sum(|t| t.steps.iter().filter(|s| s.solicited).count() as f64),
                path_ratio: path_ratio / n,
                condition,
                metrics,
                traces,
            })
        })
        .collect()
}

pub fn format_table(id: LayoutId, rows: &[OracleRow]) -> String {
    let layout = build_layout(id);
    let mut out = format!(
        "layout {} ({} goals, s_opt {})\n{:<18} {:>6} {:>6} {:>7} {:>7} {:>7} {:>8} {:>6}\n",
        id.name(),
        layout.goal_candidates.len(),
        layout.s_opt,
        "condition",
        "M_t",
        "M_o",
        "M_s",
        "steps",
        "msgs",
        "solicit",
        "path"
    );
    for r in rows {
        let f = |v: Option<f64>| v.unwrap_or(f64::NAN);
        let _ = writeln!(
            out,
            "{:<18} {:>6.3} {:>6.3} {:>7.3} {:>7.2} {:>7.2} {:>8.2} {:>6.3}",
            condition_name(&r.condition),
            f(r.metrics.m_t()),
            f(r.metrics.m_o()),
            f(r.metrics.m_s()),
            r.mean_steps,
            r.mean_messages,
            r.solicits,
            r.path_ratio
        );
    }
    out
}

/// Writes each condition as a run directory (`metrics.ndjson` with one
/// record per goal, running metrics over the goals so far, plus
/// `traces.tsv`), so the analysis commands accept oracle output.
pub fn write_runs(rows: &[OracleRow], dir: &Path) -> Result<()> {
    for r in rows {
        let run_dir = dir.join(condition_name(&r.condition));
        std::fs::create_dir_all(&run_dir).map_err(|e| LabError::io(&run_dir, e))?;
        let mut log = RunLog::open(&run_dir, 0)?;
        let mut m = RunningMetrics::new(r.metrics.s_opt);
        let mut env_steps = 0u64;
        for (i, t) in r.traces.iter().enumerate() {
            let s = t.summary;
            m.record_episode(s.reward, s.steps, s.nonzero_messages)?;
            env_steps += u64::from(s.steps);
            let v = |f: fn(&RunningMetrics) -> Option<f64>| f(&m).unwrap_or(0.0);
            log.append(&LogRecord::Episode(EpisodeRecord {
                episode: i as u64 + 1,
                env_steps,
                reward: s.reward,
                steps: s.steps,
                messages: s.nonzero_messages,
                stage: 0,
                penalty: 0.0,
                m_t: v(RunningMetrics::m_t),
                m_o: v(RunningMetrics::m_o),
                m_s: v(RunningMetrics::m_s),
                cum_m_t: v(RunningMetrics::m_t),
                cum_m_o: v(RunningMetrics::m_o),
                cum_m_s: v(RunningMetrics::m_s),
                speaker_loss: None,
                listener_loss: None,
            }))?;
        }
        log.flush()?;
        traces::write(&run_dir.join("traces.tsv"), &r.traces)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_counts() {
        assert_eq!(upfront_tokens(LayoutId::Tmaze), 1);
        assert_eq!(upfront_tokens(LayoutId::DeadEnds), 1);
        assert_eq!(upfront_tokens(LayoutId::FourRooms), 3);
    }

    #[test]
    fn every_scripted_condition_always_succeeds() {
        for id in LayoutId::ALL {
            for r in oracle_rows(id).unwrap() {
                assert_eq!(
                    r.metrics.m_t(),
                    Some(1.0),
                    "{id:?} {}",
                    condition_name(&r.condition)
                );
                assert!(r.traces.iter().all(EpisodeTrace::is_consistent));
            }
        }
    }

    #[test]
    fn tmaze_table() {
        let rows = oracle_rows(LayoutId::Tmaze).unwrap();
        let by = |name: &str| {
            rows.iter()
                .find(|r| condition_name(&r.condition) == name)
                .unwrap()
        };
        let close = |a: Option<f64>, b: f64| (a.unwrap() - b).abs() < 1e-12;
        assert!(close(by("cheap_talk-none").metrics.m_o(), 1.0));
        assert!(close(by("cheap_talk-none").metrics.m_s(), -(9f64.ln())));
        assert!(close(by("cheap_talk-partial").metrics.m_s(), -(2f64.ln())));
        assert!(close(by("situated-partial").metrics.m_o(), 9.0 / 11.0));
        assert!(close(by("situated-partial").metrics.m_s(), -(2f64.ln())));
        assert_eq!(by("situated-partial").solicits, 2.0);
        assert!(close(by("upfront1-none").metrics.m_o(), 1.0));
    }
}
