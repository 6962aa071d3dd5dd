//! Post-hoc analysis: protocol heatmaps from traces, learning curves and
//! cross-regime comparisons from run logs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sitcomm_core::agent::Message;
use sitcomm_core::episode::EpisodeTrace;
use sitcomm_core::gridworld::{build_layout, LayoutId, ListenerAction, GRID};
use sitcomm_core::metrics::{median, standard_error};

use crate::runlog::read_raw;
use crate::svg::{self, GridSquare, LinePlot, PlotSeries};
use crate::traces::common_layout;
use crate::{LabError, Result};

pub const SYMBOLS: usize = Message::SYMBOLS;
pub const ACTIONS: usize = ListenerAction::COUNT;

/// Counts for one maze cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CellCounts {
    pub visits: u64,
    /// Steps on which no message reached the listener.
    pub silent: u64,
    /// (delivered symbol, listener action) pairs.
    pub pairs: [[u64; ACTIONS]; SYMBOLS],
    /// Actions on silent steps.
    pub silent_actions: [u64; ACTIONS],
    pub solicits: u64,
}

impl CellCounts {
    pub fn symbol_counts(&self) -> [u64; SYMBOLS] {
        self.pairs.map(|row| row.iter().sum())
    }

    pub fn delivered(&self) -> u64 {
        self.symbol_counts().iter().sum()
    }

    /// Most frequent delivered symbol, lowest on ties, with its share of
    /// deliveries.
    pub fn dominant(&self) -> Option<(u8, f64)> {
        let counts = self.symbol_counts();
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return None;
        }
        let (best, n) =
            counts
                .iter()
                .enumerate()
                .fold((0, 0), |acc, (i, &n)| if n > acc.1 { (i, n) } else { acc });
        Some((best as u8, n as f64 / total as f64))
    }

    pub fn solicit_rate(&self) -> Option<f64> {
        (self.visits > 0).then(|| self.solicits as f64 / self.visits as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub layout: LayoutId,
    pub episodes: usize,
    /// Indexed `[y][x]`.
    pub cells: [[CellCounts; GRID]; GRID],
}

impl HeatmapGrid {
    pub fn at(&self, x: i32, y: i32) -> &CellCounts {
        &self.cells[y as usize][x as usize]
    }

    pub fn total_visits(&self) -> u64 {
        self.cells.iter().flatten().map(|c| c.visits).sum()
    }

    /// One row per visited cell with the dominant symbol, the solicitation
    /// rate and every count.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,visits,silent,dominant,dominant_p,solicits,solicit_rate");
        let actions = ListenerAction::ALL.map(|a| a.name());
        for s in 0..SYMBOLS {
            for a in actions {
                let _ = write!(out, ",s{s}_{a}");
            }
        }
        for a in actions {
            let _ = write!(out, ",silent_{a}");
        }
        out.push('\n');
        for y in 0..GRID {
            for x in 0..GRID {
                let c = &self.cells[y][x];
                if c.visits == 0 {
                    continue;
                }
                let (dom, p) = c.dominant().map_or(("-".into(), "-".into()), |(s, p)| {
                    (s.to_string(), p.to_string())
                });
                let rate = c.solicit_rate().unwrap_or(0.0);
                let _ = write!(
                    out,
                    "{x},{y},{},{},{dom},{p},{},{rate}",
                    c.visits, c.silent, c.solicits
                );
                for n in c.pairs.iter().flatten().chain(c.silent_actions.iter()) {
                    let _ = write!(out, ",{n}");
                }
                out.push('\n');
            }
        }
        out
    }

    /// Cells shaded by dominant symbol with opacity equal to its share;
    /// circles mark the solicitation rate.
    pub fn to_svg(&self, title: &str) -> String {
        let layout = build_layout(self.layout);
        let mut squares = Vec::new();
        for y in 0..GRID as i32 {
            for x in 0..GRID as i32 {
                let c = self.at(x, y);
                let dom = c.dominant();
                let mut text = dom.map_or(String::new(), |(s, p)| format!("{s} {:.0}%", p * 100.0));
                if layout
                    .goal_candidates
                    .contains(&sitcomm_core::gridworld::Cell::new(x, y))
                    && text.is_empty()
                {
                    text = "G".into();
                }
                squares.push(GridSquare {
                    x,
                    y,
                    wall: !layout.is_floor(sitcomm_core::gridworld::Cell::new(x, y)),
                    fill: dom.map(|(s, p)| (usize::from(s), p)),
                    text,
                    marker: c.solicit_rate().unwrap_or(0.0),
                });
            }
        }
        let legend: Vec<(usize, String)> =
            (0..SYMBOLS).map(|s| (s, format!("symbol {s}"))).collect();
        svg::grid_map(title, GRID as i32, &squares, &legend)
    }
}

pub fn protocol_heatmap(traces: &[EpisodeTrace]) -> Result<HeatmapGrid> {
    let layout = common_layout(traces)?
        .ok_or_else(|| LabError::Analysis("no traces to aggregate".into()))?;
    let mut cells = [[CellCounts::default(); GRID]; GRID];
    for t in traces {
        for s in &t.steps {
            if !s.cell.in_grid() {
                return Err(LabError::Analysis(format!(
                    "cell ({}, {}) is outside the grid",
                    s.cell.x, s.cell.y
                )));
            }
            let c = &mut cells[s.cell.y as usize][s.cell.x as usize];
            c.visits += 1;
            let a = s.action.index();
            match s.delivered {
                Some(m) => c.pairs[usize::from(m.symbol())][a] += 1,
                None => {
                    c.silent += 1;
                    c.silent_actions[a] += 1;
                }
            }
            c.solicits += u64::from(s.solicited);
        }
    }
    Ok(HeatmapGrid {
        layout,
        episodes: traces.len(),
        cells,
    })
}

/// Smallest set of records analysed by curves and comparisons: the episode
/// records of one log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogData {
    pub source: String,
    pub records: Vec<serde_json::Map<String, serde_json::Value>>,
}

impl LogData {
    pub fn load(path: &Path) -> Result<Self> {
        let records = read_raw(path)?
            .into_iter()
            .filter(|r| r.get("type").and_then(|t| t.as_str()) == Some("episode"))
            .collect();
        Ok(Self {
            source: path.display().to_string(),
            records,
        })
    }

    fn column(&self, key: &str) -> Vec<Option<f64>> {
        self.records
            .iter()
            .map(|r| r.get(key).and_then(|v| v.as_f64()))
            .collect()
    }

    /// (x, y) pairs of records carrying both keys; errors if no record
    /// carries the metric.
    pub fn series(&self, x_key: &str, metric: &str) -> Result<Vec<(f64, f64)>> {
        let pts: Vec<(f64, f64)> = self
            .column(x_key)
            .into_iter()
            .zip(self.column(metric))
            .filter_map(|(x, y)| Some((x?, y?)))
            .collect();
        if pts.is_empty() {
            return Err(LabError::Analysis(format!(
                "{}: metric {metric} not present",
                self.source
            )));
        }
        Ok(pts)
    }

    /// The metric in the last episode record, if present there.
    pub fn final_value(&self, metric: &str) -> Option<f64> {
        self.records.last()?.get(metric)?.as_f64()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XAxis {
    Episode,
    EnvSteps,
}

impl XAxis {
    pub fn key(self) -> &'static str {
        match self {
            XAxis::Episode => "episode",
            XAxis::EnvSteps => "env_steps",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSeries {
    pub metric: String,
    pub axis: XAxis,
    pub x: Vec<f64>,
    /// One aligned series per log.
    pub per_seed: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Standard error across seeds; zero for a single seed.
    pub stderr: Vec<f64>,
}

impl CurveSeries {
    pub fn lower(&self) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.stderr)
            .map(|(m, s)| m - s)
            .collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.stderr)
            .map(|(m, s)| m + s)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{},mean,stderr,lower,upper", self.axis.key());
        for i in 0..self.per_seed.len() {
            let _ = write!(out, ",run{i}");
        }
        out.push('\n');
        let (lo, hi) = (self.lower(), self.upper());
        for i in 0..self.x.len() {
            let _ = write!(
                out,
                "{},{},{},{},{}",
                self.x[i], self.mean[i], self.stderr[i], lo[i], hi[i]
            );
            for s in &self.per_seed {
                let _ = write!(out, ",{}", s[i]);
            }
            out.push('\n');
        }
        out
    }

    pub fn plot_series(&self, label: &str) -> PlotSeries {
        PlotSeries {
            label: label.to_string(),
            x: self.x.clone(),
            y: self.mean.clone(),
            band: Some((self.lower(), self.upper())),
        }
    }
}

/// Trailing mean over `window` points, each window summed afresh; window 1
/// returns the input.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let w = &values[(i + 1).saturating_sub(window)..=i];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

/// Per-log smoothed series resampled onto the first log's x values inside
/// the range every log covers. Each log contributes its latest point at or
/// before the grid value.
pub fn learning_curves(
    logs: &[LogData],
    metric: &str,
    smoothing: usize,
    axis: XAxis,
) -> Result<CurveSeries> {
    if logs.is_empty() {
        return Err(LabError::Analysis("no logs given".into()));
    }
    let series: Vec<(Vec<f64>, Vec<f64>)> = logs
        .iter()
        .map(|l| {
            let pts = l.series(axis.key(), metric)?;
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            Ok((x, smooth(&y, smoothing)))
        })
        .collect::<Result<_>>()?;
    let start = series
        .iter()
        .map(|s| s.0[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let end = series
        .iter()
        .map(|s| *s.0.last().expect("non-empty"))
        .fold(f64::INFINITY, f64::min);
    let grid: Vec<f64> = series[0]
        .0
        .iter()
        .copied()
        .filter(|x| *x >= start && *x <= end)
        .collect();
    let per_seed: Vec<Vec<f64>> = series
        .iter()
        .map(|(xs, ys)| {
            grid.iter()
                .map(|g| {
                    let i = xs.partition_point(|x| x <= g);
                    ys[i - 1]
                })
                .collect()
        })
        .collect();
    let mut mean = Vec::with_capacity(grid.len());
    let mut stderr = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let col: Vec<f64> = per_seed.iter().map(|s| s[i]).collect();
        mean.push(sorted_mean(&col).expect("at least one log"));
        stderr.push(standard_error(&col).unwrap_or(0.0));
    }
    Ok(CurveSeries {
        metric: metric.to_string(),
        axis,
        x: grid,
        per_seed,
        mean,
        stderr,
    })
}

/// Mean over values summed in ascending order, so the result does not
/// depend on the order runs were listed in.
pub fn sorted_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v.iter().sum::<f64>() / v.len() as f64)
}

fn sorted_stderr(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    standard_error(&v)
}

pub const REPORT_METRICS: [&str; 3] = ["M_t", "M_o", "M_s"];

/// Logs of one regime.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSet {
    pub label: String,
    pub logs: Vec<LogData>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalStat {
    pub label: String,
    pub metric: String,
    /// Runs whose last record carries the metric.
    pub n: usize,
    /// Runs missing it.
    pub missing: usize,
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub median: Option<f64>,
}

pub type LabelledCurve = (String, Option<CurveSeries>);

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    /// Row-major over metrics, then labels in input order.
    pub finals: Vec<FinalStat>,
    /// Curves per metric; `None` where a label's logs lack the metric.
    pub curves: Vec<(String, Vec<LabelledCurve>)>,
}

pub fn compare_report(sets: &[RunSet], smoothing: usize, axis: XAxis) -> Result<CompareReport> {
    if let Some(s) = sets.iter().find(|s| s.logs.is_empty()) {
        return Err(LabError::Analysis(format!("run set {} is empty", s.label)));
    }
    let mut finals = Vec::new();
    let mut curves = Vec::new();
    for metric in REPORT_METRICS {
        let mut row = Vec::new();
        for set in sets {
            let values: Vec<f64> = set
                .logs
                .iter()
                .filter_map(|l| l.final_value(metric))
                .collect();
            finals.push(FinalStat {
                label: set.label.clone(),
                metric: metric.to_string(),
                n: values.len(),
                missing: set.logs.len() - values.len(),
                mean: sorted_mean(&values),
                stderr: sorted_stderr(&values),
                median: median(&values),
            });
            row.push((
                set.label.clone(),
                learning_curves(&set.logs, metric, smoothing, axis).ok(),
            ));
        }
        curves.push((metric.to_string(), row));
    }
    Ok(CompareReport { finals, curves })
}

pub const MISSING: &str = "missing";

impl CompareReport {
    /// `label,metric,n,missing,mean,stderr,median`; absent numbers are
    /// written as `missing`.
    pub fn finals_csv(&self) -> String {
        let mut out = String::from("label,metric,n,missing,mean,stderr,median\n");
        let num = |v: Option<f64>| v.map_or(MISSING.to_string(), |v| v.to_string());
        for f in &self.finals {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                csv_field(&f.label),
                f.metric,
                f.n,
                f.missing,
                num(f.mean),
                num(f.stderr),
                num(f.median)
            );
        }
        out
    }

    pub fn final_stat(&self, label: &str, metric: &str) -> Option<&FinalStat> {
        self.finals
            .iter()
            .find(|f| f.label == label && f.metric == metric)
    }

    /// Writes `finals.csv` plus `<metric>.csv` and `<metric>.svg` for each
    /// metric into `dir`. Returns the files written.
    pub fn write(&self, dir: &Path, axis: XAxis) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
        let mut written = Vec::new();
        let mut put = |name: String, text: String| -> Result<()> {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| LabError::io(&p, e))?;
            written.push(p);
            Ok(())
        };
        put("finals.csv".into(), self.finals_csv())?;
        for (metric, row) in &self.curves {
            let mut csv = format!("label,{},mean,stderr\n", axis.key());
            let mut series = Vec::new();
            for (label, curve) in row {
                match curve {
                    Some(c) => {
                        for i in 0..c.x.len() {
                            let _ = writeln!(
                                csv,
                                "{},{},{},{}",
                                csv_field(label),
                                c.x[i],
                                c.mean[i],
                                c.stderr[i]
                            );
                        }
                        series.push(c.plot_series(label));
                    }
                    None => {
                        let _ = writeln!(csv, "{},{MISSING},{MISSING},{MISSING}", csv_field(label));
                    }
                }
            }
            put(format!("{metric}.csv"), csv)?;
            let plot = LinePlot {
                title: format!("{metric}, mean ± standard error"),
                x_label: axis.key().into(),
                y_label: metric.clone(),
                series,
            };
            put(format!("{metric}.svg"), svg::line_plot(&plot))?;
        }
        Ok(written)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// (label, metric) -> [mean, stderr, median].
pub type FinalsTable = BTreeMap<(String, String), [Option<f64>; 3]>;

/// Parses a finals CSV back into a table.
pub fn parse_finals_csv(text: &str) -> Result<FinalsTable> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let (label, rest) = if let Some(stripped) = line.strip_prefix('"') {
            let end = stripped
                .find("\",")
                .ok_or_else(|| LabError::Analysis(format!("line {}: unterminated label", i + 1)))?;
            (stripped[..end].replace("\"\"", "\""), &stripped[end + 2..])
        } else {
            let (l, r) = line
                .split_once(',')
                .ok_or_else(|| LabError::Analysis(format!("line {}: too few fields", i + 1)))?;
            (l.to_string(), r)
        };
        let cols: Vec<&str> = rest.split(',').collect();
        if cols.len() != 6 {
            return Err(LabError::Analysis(format!(
                "line {}: expected 7 fields",
                i + 1
            )));
        }
        let num = |s: &str| -> Result<Option<f64>> {
            if s == MISSING {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|_| LabError::Analysis(format!("line {}: bad number {s}", i + 1)))
            }
        };
        out.insert(
            (label, cols[0].to_string()),
            [num(cols[3])?, num(cols[4])?, num(cols[5])?],
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use sitcomm_core::episode::{EpisodeSummary, TraceStep};
    use sitcomm_core::gridworld::{Cell, Heading};

    fn log(points: &[(u64, f64)]) -> LogData {
        LogData {
            source: "mem".into(),
            records: points
                .iter()
                .map(|(e, v)| {
                    json!({"type": "episode", "episode": e, "env_steps": e * 10, "M_t": v, "M_o": v, "M_s": -v})
                        .as_object()
                        .unwrap()
                        .clone()
                })
                .collect(),
        }
    }

    #[test]
    fn symbol_counted_per_visit() {
        let step = |x, sym: Option<u8>| TraceStep {
            cell: Cell::new(x, 7),
            heading: Heading::Up,
            delivered: sym.map(|s| Message::new(s).unwrap()),
            action: ListenerAction::MoveUp,
            solicited: false,
            env_reward: 0.0,
            penalty: 0.0,
        };
        let t = EpisodeTrace {
            layout: LayoutId::Tmaze,
            goal: Cell::new(1, 1),
            upfront: vec![],
            steps: vec![step(4, Some(3)), step(4, Some(3)), step(5, None)],
            summary: EpisodeSummary {
                reward: 0.0,
                steps: 3,
                nonzero_messages: 2,
            },
        };
        let h = protocol_heatmap(std::slice::from_ref(&t)).unwrap();
        assert_eq!(h.at(4, 7).symbol_counts()[3], 2);
        assert_eq!(h.at(4, 7).dominant(), Some((3, 1.0)));
        assert_eq!(h.at(5, 7).silent, 1);
        assert_eq!(h.total_visits(), 3);
        let mut other = t;
        other.layout = LayoutId::DeadEnds;
        assert!(protocol_heatmap(&[other.clone(), other.clone()]).is_ok());
        let t2 = EpisodeTrace {
            layout: LayoutId::Tmaze,
            ..other.clone()
        };
        assert!(protocol_heatmap(&[other, t2]).is_err());
        assert!(protocol_heatmap(&[]).is_err());
    }

    #[test]
    fn two_opposite_seeds_have_half_stderr() {
        let c = learning_curves(
            &[log(&[(1, 0.0), (2, 0.0)]), log(&[(1, 1.0), (2, 1.0)])],
            "M_t",
            1,
            XAxis::Episode,
        )
        .unwrap();
        assert_eq!(c.mean, vec![0.5, 0.5]);
        for s in c.stderr {
            assert!((s - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_single_log_is_flat_with_zero_band() {
        let c = learning_curves(
            &[log(&[(1, 0.3), (2, 0.3), (3, 0.3)])],
            "M_o",
            2,
            XAxis::EnvSteps,
        )
        .unwrap();
        assert_eq!(c.x, vec![10.0, 20.0, 30.0]);
        assert!(c.mean.iter().all(|m| (m - 0.3).abs() < 1e-15));
        assert_eq!(c.stderr, vec![0.0; 3]);
    }

    #[test]
    fn unit_smoothing_is_identity() {
        let v = [0.1, 0.7, 0.2, 0.9];
        assert_eq!(smooth(&v, 1), v.to_vec());
        assert_eq!(
            smooth(&v, 2),
            vec![0.1, (0.1 + 0.7) / 2.0, (0.7 + 0.2) / 2.0, (0.2 + 0.9) / 2.0]
        );
        let c = learning_curves(&[log(&[(1, 0.1), (2, 0.7)])], "M_t", 1, XAxis::Episode).unwrap();
        assert_eq!(c.per_seed[0], vec![0.1, 0.7]);
    }

    #[test]
    fn curves_align_to_common_range() {
        let c = learning_curves(
            &[
                log(&[(1, 0.0), (2, 0.0), (3, 0.0)]),
                log(&[(2, 1.0), (4, 1.0)]),
            ],
            "M_t",
            1,
            XAxis::Episode,
        )
        .unwrap();
        assert_eq!(c.x, vec![2.0, 3.0]);
        assert_eq!(c.per_seed[1], vec![1.0, 1.0]);
    }

    #[test]
    fn missing_metric_is_an_error() {
        assert!(learning_curves(&[log(&[(1, 0.0)])], "M_x", 1, XAxis::Episode).is_err());
    }

    #[test]
    fn report_is_label_and_order_independent() {
        let runs = vec![log(&[(1, 0.1)]), log(&[(1, 0.7)]), log(&[(1, 0.3)])];
        let mut rev = runs.clone();
        rev.reverse();
        let sets = [
            RunSet {
                label: "a".into(),
                logs: runs.clone(),
            },
            RunSet {
                label: "b".into(),
                logs: rev,
            },
        ];
        let r = compare_report(&sets, 1, XAxis::Episode).unwrap();
        for m in REPORT_METRICS {
            let (a, b) = (r.final_stat("a", m).unwrap(), r.final_stat("b", m).unwrap());
            assert_eq!((a.mean, a.stderr, a.median), (b.mean, b.stderr, b.median));
        }
    }

    #[test]
    fn missing_metric_gets_marker() {
        let mut l = log(&[(1, 0.5)]);
        l.records[0].remove("M_s");
        let r = compare_report(
            &[RunSet {
                label: "x".into(),
                logs: vec![l],
            }],
            1,
            XAxis::Episode,
        )
        .unwrap();
        let csv = r.finals_csv();
        assert!(csv.contains("x,M_s,0,1,missing,missing,missing"));
        let back = parse_finals_csv(&csv).unwrap();
        assert_eq!(
            back[&("x".to_string(), "M_s".to_string())],
            [None, None, None]
        );
        assert!(r.curves[2].1[0].1.is_none());
    }
}
