//! Episode traces as tab-separated text, one row per step.
//!
//! The first line is `# layout <id>`, the second the column header:
//!
//! | column | meaning |
//! |---|---|
//! | episode | index of the episode within the file |
//! | goal_x, goal_y | goal cell |
//! | upfront | upfront tokens joined by `,`, or `-` |
//! | t | step index from 0 |
//! | x, y | listener cell before the action |
//! | heading | listener heading before the action |
//! | delivered | symbol 0..4 the listener received this step, or `-` |
//! | action | listener action name |
//! | solicited | 1 if the listener solicited on this step |
//! | env_reward | environment reward of the step |
//! | penalty | message penalty charged to the speaker |
//!
//! Episode summaries are not stored; they are recomputed from the rows.

use std::fmt::Write as _;
use std::path::Path;

use sitcomm_core::agent::Message;
use sitcomm_core::episode::{EpisodeTrace, TraceStep};
use sitcomm_core::gridworld::{Cell, Heading, LayoutId, ListenerAction};

use crate::{LabError, Result};

pub const HEADER: &str = "episode\tgoal_x\tgoal_y\tupfront\tt\tx\ty\theading\tdelivered\taction\tsolicited\tenv_reward\tpenalty";

/// Renders traces of one layout. Fails on mixed layouts.
pub fn to_tsv(traces: &[EpisodeTrace]) -> Result<String> {
    let layout = common_layout(traces)?.unwrap_or(LayoutId::Tmaze);
    let mut out = format!("# layout {}\n{HEADER}\n", layout.name());
    for (e, tr) in traces.iter().enumerate() {
        let upfront = if tr.upfront.is_empty() {
            "-".to_string()
        } else {
            tr.upfront
                .iter()
                .map(|m| m.symbol().to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        for (t, s) in tr.steps.iter().enumerate() {
            let delivered = s
                .delivered
                .map_or("-".to_string(), |m| m.symbol().to_string());
            writeln!(
                out,
                "{e}\t{}\t{}\t{upfront}\t{t}\t{}\t{}\t{}\t{delivered}\t{}\t{}\t{}\t{}",
                tr.goal.x,
                tr.goal.y,
                s.cell.x,
                s.cell.y,
                s.heading.name(),
                s.action.name(),
                u8::from(s.solicited),
                s.env_reward,
                s.penalty
            )
            .expect("writing to a String");
        }
    }
    Ok(out)
}

pub fn common_layout(traces: &[EpisodeTrace]) -> Result<Option<LayoutId>> {
    let mut layout = None;
    for t in traces {
        match layout {
            None => layout = Some(t.layout),
            Some(l) if l != t.layout => {
                return Err(LabError::Analysis(format!(
                    "traces mix layouts {} and {}",
                    l.name(),
                    t.layout.name()
                )));
            }
            _ => {}
        }
    }
    Ok(layout)
}

pub fn write(path: &Path, traces: &[EpisodeTrace]) -> Result<()> {
    std::fs::write(path, to_tsv(traces)?).map_err(|e| LabError::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<EpisodeTrace>> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    parse(&text).map_err(|msg| LabError::parse(path, msg))
}

pub fn parse(text: &str) -> Result<Vec<EpisodeTrace>, String> {
    let mut lines = text.lines().enumerate();
    let layout = match lines.next() {
        Some((_, l)) => l
            .strip_prefix("# layout ")
            .and_then(LayoutId::from_name)
            .ok_or("first line must be `# layout <id>`")?,
        None => return Err("empty trace file".into()),
    };
    match lines.next() {
        Some((_, h)) if h == HEADER => {}
        _ => return Err("missing or unexpected column header".into()),
    }
    let mut traces: Vec<EpisodeTrace> = Vec::new();
    let mut current: Option<u64> = None;
    for (i, line) in lines {
        let err = |what: &str| format!("line {}: {what}", i + 1);
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 13 {
            return Err(err("expected 13 columns"));
        }
        let int = |c: &str| c.parse::<i64>().map_err(|_| err("bad integer"));
        let float = |c: &str| c.parse::<f64>().map_err(|_| err("bad number"));
        let symbol = |c: &str| {
            c.parse::<u8>()
                .ok()
                .and_then(Message::new)
                .ok_or_else(|| err("bad symbol"))
        };
        let episode = u64::try_from(int(cols[0])?).map_err(|_| err("negative episode"))?;
        let goal = Cell::new(int(cols[1])? as i32, int(cols[2])? as i32);
        let upfront = if cols[3] == "-" {
            Vec::new()
        } else {
            cols[3]
                .split(',')
                .map(symbol)
                .collect::<Result<Vec<_>, _>>()?
        };
        if current != Some(episode) {
            if current.is_some_and(|c| episode < c) {
                return Err(err("episode indices must not decrease"));
            }
            current = Some(episode);
            traces.push(EpisodeTrace {
                layout,
                goal,
                upfront,
                steps: Vec::new(),
                summary: Default::default(),
            });
        }
        let tr = traces.last_mut().expect("pushed above");
        if int(cols[4])? != tr.steps.len() as i64 {
            return Err(err("step index out of sequence"));
        }
        tr.steps.push(TraceStep {
            cell: Cell::new(int(cols[5])? as i32, int(cols[6])? as i32),
            heading: Heading::from_name(cols[7]).ok_or_else(|| err("bad heading"))?,
            delivered: if cols[8] == "-" {
                None
            } else {
                Some(symbol(cols[8])?)
            },
            action: ListenerAction::from_name(cols[9]).ok_or_else(|| err("bad action"))?,
            solicited: match cols[10] {
                "0" => false,
                "1" => true,
                _ => return Err(err("solicited must be 0 or 1")),
            },
            env_reward: float(cols[11])?,
            penalty: float(cols[12])?,
        });
    }
    for t in &mut traces {
        t.summary = t.recompute_summary();
    }
    Ok(traces)
}
