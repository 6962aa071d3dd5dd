use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::bfs::distance_map;
use crate::{Error, Result};

/// Side length of every maze.
pub const GRID: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn offset(self, (dx, dy): (i32, i32)) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }

    pub fn in_grid(self) -> bool {
        (0..GRID as i32).contains(&self.x) && (0..GRID as i32).contains(&self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Wall,
    Floor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LayoutId {
    Tmaze,
    DeadEnds,
    FourRooms,
}

impl LayoutId {
    pub const ALL: [LayoutId; 3] = [LayoutId::Tmaze, LayoutId::DeadEnds, LayoutId::FourRooms];

    pub fn name(self) -> &'static str {
        match self {
            LayoutId::Tmaze => "tmaze",
            LayoutId::DeadEnds => "dead_ends",
            LayoutId::FourRooms => "four_rooms",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|id| id.name() == s)
    }

    /// Number of goal candidates each canonical layout must carry.
    pub fn goal_count(self) -> usize {
        match self {
            LayoutId::Tmaze => 4,
            LayoutId::DeadEnds => 5,
            LayoutId::FourRooms => 32,
        }
    }

    /// The bundled text fixture for this layout.
    pub fn fixture(self) -> &'static str {
        match self {
            LayoutId::Tmaze => include_str!("../../layouts/tmaze.txt"),
            LayoutId::DeadEnds => include_str!("../../layouts/dead_ends.txt"),
            LayoutId::FourRooms => include_str!("../../layouts/four_rooms.txt"),
        }
    }
}

/// Static maze geometry.
///
/// `s_opt` is the step count the optimality metric normalises by: the
/// shortest start-to-goal distance over all goal candidates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MazeLayout {
    pub id: LayoutId,
    grid: [[CellKind; GRID]; GRID],
    pub start: Cell,
    pub goal_candidates: Vec<Cell>,
    pub s_opt: u32,
}

/// Canonical layout for `id`, parsed from the bundled fixture.
pub fn build_layout(id: LayoutId) -> MazeLayout {
    MazeLayout::parse(id.fixture()).expect("bundled layout fixtures are valid")
}

impl MazeLayout {
    /// Cell kind at `cell`; anything outside the grid is a wall.
    pub fn kind(&self, cell: Cell) -> CellKind {
        if cell.in_grid() {
            self.grid[cell.y as usize][cell.x as usize]
        } else {
            CellKind::Wall
        }
    }

    pub fn is_floor(&self, cell: Cell) -> bool {
        self.kind(cell) == CellKind::Floor
    }

    pub fn floor_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..GRID as i32)
            .flat_map(|y| (0..GRID as i32).map(move |x| Cell::new(x, y)))
            .filter(|c| self.is_floor(*c))
    }

    /// Parses the text format: a header line `id=<name> s_opt=<n>` followed
    /// by nine rows of nine characters (`#` wall, `.` floor, `S` start,
    /// `G` goal candidate).
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Layout(msg);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let mut id = None;
        let mut s_opt = None;
        for field in header.split_whitespace() {
            match field.split_once('=') {
                Some(("id", v)) => {
                    id = Some(LayoutId::from_name(v).ok_or_else(|| bad(format!("unknown id {v}")))?)
                }
                Some(("s_opt", v)) => {
                    s_opt = Some(
                        v.parse::<u32>()
                            .map_err(|_| bad(format!("bad s_opt {v}")))?,
                    )
                }
                _ => return Err(bad(format!("unexpected header field {field}"))),
            }
        }
        let id = id.ok_or_else(|| bad("missing id".into()))?;
        let s_opt = s_opt.ok_or_else(|| bad("missing s_opt".into()))?;

        let mut grid = [[CellKind::Wall; GRID]; GRID];
        let mut start = None;
        let mut goals = Vec::new();
        let mut rows = 0;
        for (y, line) in lines.enumerate() {
            if y >= GRID {
                return Err(bad("more than 9 rows".into()));
            }
            rows += 1;
            let chars: Vec<char> = line.chars().collect();
            if chars.len() != GRID {
                return Err(bad(format!("row {y} has {} cells", chars.len())));
            }
            for (x, ch) in chars.into_iter().enumerate() {
                let cell = Cell::new(x as i32, y as i32);
                grid[y][x] = match ch {
                    '#' => CellKind::Wall,
                    '.' => CellKind::Floor,
                    'S' => {
                        if start.replace(cell).is_some() {
                            return Err(bad("more than one start".into()));
                        }
                        CellKind::Floor
                    }
                    'G' => {
                        goals.push(cell);
                        CellKind::Floor
                    }
                    other => return Err(bad(format!("unknown cell char {other:?}"))),
                };
            }
        }
        if rows != GRID {
            return Err(bad(format!("expected 9 rows, got {rows}")));
        }
        let layout = MazeLayout {
            id,
            grid,
            start: start.ok_or_else(|| bad("missing start".into()))?,
            goal_candidates: goals,
            s_opt,
        };
        layout.validate()?;
        Ok(layout)
    }

    /// Checks every structural invariant of a layout.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Layout(msg));
        for i in 0..GRID {
            let last = GRID - 1;
            if [
                self.grid[0][i],
                self.grid[last][i],
                self.grid[i][0],
                self.grid[i][last],
            ]
            .iter()
            .any(|k| *k != CellKind::Wall)
            {
                return bad("border must be walls".into());
            }
        }
        if !self.is_floor(self.start) {
            return bad("start is not floor".into());
        }
        if self.goal_candidates.len() != self.id.goal_count() {
            return bad(format!(
                "{} needs {} goal candidates, found {}",
                self.id.name(),
                self.id.goal_count(),
                self.goal_candidates.len()
            ));
        }
        let dist = distance_map(self, self.start);
        let mut nearest = u32::MAX;
        for g in &self.goal_candidates {
            match dist.get(*g) {
                Some(d) => nearest = nearest.min(d),
                None => return bad(format!("goal ({}, {}) unreachable", g.x, g.y)),
            }
        }
        if nearest != self.s_opt {
            return bad(format!(
                "s_opt {} but nearest goal is {nearest} steps away",
                self.s_opt
            ));
        }
        Ok(())
    }

    /// Renders the layout back into its text format, byte for byte.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "id={} s_opt={}", self.id.name(), self.s_opt);
        for y in 0..GRID as i32 {
            for x in 0..GRID as i32 {
                let c = Cell::new(x, y);
                let ch = if c == self.start {
                    'S'
                } else if self.goal_candidates.contains(&c) {
                    'G'
                } else if self.is_floor(c) {
                    '.'
                } else {
                    '#'
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}
