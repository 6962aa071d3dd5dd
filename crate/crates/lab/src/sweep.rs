//! Hyperparameter sweeps: every cell of a grid, each trained on a set of
//! seeds, in parallel.
//!
//! A sweep file is TOML:
//!
//! ```toml
//! seeds = 10            # seeds 0..10, or an explicit list such as [3, 5]
//! [base]                # an experiment config, as accepted by `train`
//! layout = "tmaze"
//! [base.mode]
//! kind = "cheap_talk"
//! [grid]                # key -> values; dotted keys reach into tables
//! rep_size = [8, 16]
//! "mode.penalty" = [0.01, 0.05]
//! ```
//!
//! Cells enumerate the cartesian product over the grid keys in sorted order,
//! the last key varying fastest. Run `c`/`s` is written to `<out>/cell<c>/seed<s>/`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sitcomm_core::metrics::{mean, standard_error};

use crate::config::ExperimentConfig;
use crate::train::train;
use crate::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn resolve(&self, offset: u64) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (offset..offset + n).collect(),
            Seeds::List(l) => l.iter().map(|s| s + offset).collect(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    seeds: Seeds,
    base: toml::Table,
    #[serde(default)]
    grid: toml::Table,
}

/// One cell: the grid assignments and the config they produce.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub assignments: Vec<(String, toml::Value)>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub cells: Vec<Cell>,
    pub seeds: Vec<u64>,
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts = key.split('.').peekable();
    let mut t = table;
    while let Some(p) = parts.next() {
        if parts.peek().is_none() {
            t.insert(p.to_string(), value);
            return Ok(());
        }
        t = t
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| LabError::Config(format!("grid key {key}: {p} is not a table")))?;
    }
    Err(LabError::Config("empty grid key".into()))
}

impl SweepSpec {
    /// `seed_offset` shifts every seed, so `--seed` moves a whole sweep.
    pub fn parse(text: &str, seed_offset: u64) -> Result<Self> {
        let file: SweepFile = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        let seeds = file.seeds.resolve(seed_offset);
        if seeds.is_empty() {
            return Err(LabError::Config("a sweep needs at least one seed".into()));
        }
        let mut axes = Vec::new();
        for (k, v) in file.grid {
            match v {
                toml::Value::Array(values) if !values.is_empty() => axes.push((k, values)),
                _ => {
                    return Err(LabError::Config(format!(
                        "grid key {k} must map to a non-empty array"
                    )))
                }
            }
        }
        let mut combos: Vec<Vec<(String, toml::Value)>> = vec![Vec::new()];
        for (k, values) in &axes {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    values.iter().map(move |v| {
                        let mut c = c.clone();
                        c.push((k.clone(), v.clone()));
                        c
                    })
                })
                .collect();
        }
        let cells = combos
            .into_iter()
            .map(|assignments| {
                let mut table = file.base.clone();
                for (k, v) in &assignments {
                    set_dotted(&mut table, k, v.clone())?;
                }
                let config = ExperimentConfig::from_table(table)?;
                Ok(Cell {
                    assignments,
                    config,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cells, seeds })
    }

    pub fn load(path: &Path, seed_offset: u64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::parse(&text, seed_offset)
    }
}

/// Final windowed metrics of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedFinal {
    pub seed: u64,
    #[serde(rename = "M_t")]
    pub m_t: f64,
    #[serde(rename = "M_o")]
    pub m_o: f64,
    #[serde(rename = "M_s")]
    pub m_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub seed: u64,
    pub error: String,
}

/// Mean and standard error of one metric across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: Option<f64>,
}

impl Stat {
    fn of(values: &[f64]) -> Option<Self> {
        Some(Self {
            mean: mean(values)?,
            stderr: standard_error(values),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: usize,
    /// Grid assignments as `key=value` strings.
    pub label: String,
    pub finals: Vec<SeedFinal>,
    pub failures: Vec<Failure>,
    #[serde(rename = "M_t")]
    pub m_t: Option<Stat>,
    #[serde(rename = "M_o")]
    pub m_o: Option<Stat>,
    #[serde(rename = "M_s")]
    pub m_s: Option<Stat>,
}

impl CellResult {
    pub fn new(cell: usize, label: String, finals: Vec<SeedFinal>, failures: Vec<Failure>) -> Self {
        let stat = |f: fn(&SeedFinal) -> f64| Stat::of(&finals.iter().map(f).collect::<Vec<_>>());
        Self {
            cell,
            label,
            m_t: stat(|f| f.m_t),
            m_o: stat(|f| f.m_o),
            m_s: stat(|f| f.m_s),
            finals,
            failures,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestPair {
    pub cell: usize,
    pub seed: u64,
    #[serde(rename = "M_o")]
    pub m_o: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<CellResult>,
    /// Cell with the highest mean final M_o.
    pub best_cell: Option<usize>,
    /// Single run with the highest final M_o.
    pub best_pair: Option<BestPair>,
}

impl SweepResult {
    /// Selection keeps the first of equal candidates.
    pub fn select(cells: Vec<CellResult>) -> Self {
        let mut best_cell: Option<(usize, f64)> = None;
        let mut best_pair: Option<BestPair> = None;
        for c in &cells {
            if let Some(s) = c.m_o {
                if best_cell.is_none_or(|(_, m)| s.mean > m) {
                    best_cell = Some((c.cell, s.mean));
                }
            }
            for f in &c.finals {
                if best_pair.is_none_or(|b| f.m_o > b.m_o) {
                    best_pair = Some(BestPair {
                        cell: c.cell,
                        seed: f.seed,
                        m_o: f.m_o,
                    });
                }
            }
        }
        Self {
            cells,
            best_cell: best_cell.map(|(c, _)| c),
            best_pair,
        }
    }

    /// One row per cell: label, seeds, failures, then mean and standard
    /// error of each metric. Missing values are written as `missing`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell,label,seeds,failures,M_t,M_t_se,M_o,M_o_se,M_s,M_s_se\n");
        let num = |v: Option<f64>| v.map_or("missing".to_string(), |v| v.to_string());
        for c in &self.cells {
            out.push_str(&format!(
                "{},\"{}\",{},{}",
                c.cell,
                c.label.replace('"', "\"\""),
                c.finals.len(),
                c.failures.len()
            ));
            for s in [c.m_t, c.m_o, c.m_s] {
                out.push_str(&format!(
                    ",{},{}",
                    num(s.map(|s| s.mean)),
                    num(s.and_then(|s| s.stderr))
                ));
            }
            out.push('\n');
        }
        out
    }
}

pub fn run_dir(out: &Path, cell: usize, seed: u64) -> PathBuf {
    out.join(format!("cell{cell}")).join(format!("seed{seed}"))
}

/// Trains every (cell, seed) pair in parallel and writes `sweep.json` and
/// `sweep.csv` to `out`. A failing run is recorded and the sweep goes on.
pub fn run_sweep(spec: &SweepSpec, out: &Path) -> Result<SweepResult> {
    if spec.cells.is_empty() {
        return Err(LabError::Config("empty grid".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| LabError::io(out, e))?;
    let jobs: Vec<(usize, u64)> = (0..spec.cells.len())
        .flat_map(|c| spec.seeds.iter().map(move |s| (c, *s)))
        .collect();
    let outcomes: Vec<(usize, std::result::Result<SeedFinal, Failure>)> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let mut cfg = spec.cells[c].config.clone();
            cfg.run.seed = seed;
            let r = train(&cfg, &run_dir(out, c, seed))
                .map(|s| SeedFinal {
                    seed,
                    m_t: s.windowed.m_t().unwrap_or(0.0),
                    m_o: s.windowed.m_o().unwrap_or(0.0),
                    m_s: s.windowed.m_s().unwrap_or(0.0),
                })
                .map_err(|e| Failure {
                    seed,
                    error: e.to_string(),
                });
            (c, r)
        })
        .collect();
    let mut per_cell: BTreeMap<usize, (Vec<SeedFinal>, Vec<Failure>)> = BTreeMap::new();
    for (c, r) in outcomes {
        let entry = per_cell.entry(c).or_default();
        match r {
            Ok(f) => entry.0.push(f),
            Err(f) => entry.1.push(f),
        }
    }
    let cells = per_cell
        .into_iter()
        .map(|(c, (finals, failures))| CellResult::new(c, label(&spec.cells[c]), finals, failures))
        .collect();
    let result = SweepResult::select(cells);
    let json = out.join("sweep.json");
    let text =
        serde_json::to_string_pretty(&result).map_err(|e| LabError::Analysis(e.to_string()))?;
    std::fs::write(&json, text + "\n").map_err(|e| LabError::io(&json, e))?;
    let csv = out.join("sweep.csv");
    std::fs::write(&csv, result.to_csv()).map_err(|e| LabError::io(&csv, e))?;
    Ok(result)
}

fn label(cell: &Cell) -> String {
    cell.assignments
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finals(cell_seed_mo: &[(u64, f64)]) -> Vec<SeedFinal> {
        cell_seed_mo
            .iter()
            .map(|&(seed, m_o)| SeedFinal {
                seed,
                m_t: 1.0,
                m_o,
                m_s: -1.0,
            })
            .collect()
    }

    #[test]
    fn grid_expands_to_cartesian_product() {
        let text = r#"
seeds = 3
[base]
layout = "tmaze"
[base.mode]
kind = "fixed_penalty"
penalty = 0.0
[grid]
rep_size = [8, 16]
"mode.penalty" = [0.01, 0.05, 0.1]
"#;
        let spec = SweepSpec::parse(text, 100).unwrap();
        assert_eq!(spec.seeds, vec![100, 101, 102]);
        assert_eq!(spec.cells.len(), 6);
        assert_eq!(spec.cells[1].config.run.rep_size, 16);
        assert_eq!(
            spec.cells[4].config.run.mode,
            sitcomm_core::comm::CommMode::FixedPenalty { penalty: 0.1 }
        );
        assert!(SweepSpec::parse("seeds = 3\n[base]\nlayout = \"tmaze\"\n[base.mode]\nkind = \"situated\"\n[grid]\nrep_size = []\n", 0).is_err());
        assert!(SweepSpec::parse(
            "seeds = []\n[base]\nlayout = \"tmaze\"\n[base.mode]\nkind = \"situated\"\n",
            0
        )
        .is_err());
    }

    #[test]
    fn dominating_cell_is_selected() {
        let a = CellResult::new(
            0,
            "a".into(),
            finals(&[(0, 0.2), (1, 0.3), (2, 0.1)]),
            vec![],
        );
        let b = CellResult::new(
            1,
            "b".into(),
            finals(&[(0, 0.4), (1, 0.5), (2, 0.2)]),
            vec![],
        );
        let r = SweepResult::select(vec![a, b]);
        assert_eq!(r.best_cell, Some(1));
        assert_eq!(
            r.best_pair,
            Some(BestPair {
                cell: 1,
                seed: 1,
                m_o: 0.5
            })
        );
    }

    #[test]
    fn mean_is_over_every_replica() {
        let f = finals(&(0..10).map(|s| (s, s as f64 / 10.0)).collect::<Vec<_>>());
        let c = CellResult::new(0, String::new(), f, vec![]);
        assert_eq!(c.finals.len(), 10);
        assert!((c.m_o.unwrap().mean - 0.45).abs() < 1e-15);
    }

    #[test]
    fn failed_cell_is_not_selected() {
        let a = CellResult::new(
            0,
            "a".into(),
            vec![],
            vec![Failure {
                seed: 0,
                error: "boom".into(),
            }],
        );
        let b = CellResult::new(1, "b".into(), finals(&[(0, 0.0)]), vec![]);
        let r = SweepResult::select(vec![a, b]);
        assert_eq!(r.best_cell, Some(1));
        assert!(r
            .to_csv()
            .lines()
            .nth(1)
            .unwrap()
            .ends_with("missing,missing,missing,missing,missing,missing"));
    }

    #[test]
    fn identical_cells_give_identical_aggregates() {
        let text = r#"
seeds = 2
[base]
layout = "tmaze"
total_env_steps = 400
[base.mode]
kind = "cheap_talk"
[grid]
lr_speaker = [0.001, 0.001]
"#;
        let spec = SweepSpec::parse(text, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let r = run_sweep(&spec, dir.path()).unwrap();
        assert_eq!(r.cells.len(), 2);
        assert_eq!(r.cells[0].finals, r.cells[1].finals);
        assert_eq!(r.cells[0].m_o, r.cells[1].m_o);
        assert!(dir.path().join("cell1/seed1/metrics.ndjson").exists());
        assert!(dir.path().join("sweep.csv").exists());
    }
}
