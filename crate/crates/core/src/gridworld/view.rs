use super::env::EnvState;
use super::layout::{Cell, CellKind, MazeLayout, GRID};

/// Binary RGB triple used for every rendered pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellColor(pub [u8; 3]);

impl CellColor {
    pub const WALL: CellColor = CellColor([1, 1, 1]);
    pub const FLOOR: CellColor = CellColor([0, 0, 0]);
    pub const AGENT: CellColor = CellColor([0, 1, 0]);
    pub const GOAL: CellColor = CellColor([0, 0, 1]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Visibility {
    None,
    Partial,
}

impl Visibility {
    /// Number of feature values the view contributes to the listener input.
    pub fn feature_len(self) -> usize {
        match self {
            Visibility::None => 0,
            Visibility::Partial => 9,
        }
    }
}

/// What the listener sees of the world.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ListenerView {
    None,
    /// Front-left, front and front-right cells relative to the heading.
    Partial([CellColor; 3]),
}

impl ListenerView {
    pub fn pixels(&self) -> &[CellColor] {
        match self {
            ListenerView::None => &[],
            ListenerView::Partial(px) => px,
        }
    }
}

/// Height × width × RGB.
pub type MapPixels = [[[u8; 3]; GRID]; GRID];

/// Full map, rotated so the listener's heading points up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpeakerView {
    pub pixels: MapPixels,
}

impl SpeakerView {
    pub fn flatten_into(&self, out: &mut alloc::vec::Vec<f64>) {
        for row in &self.pixels {
            for px in row {
                out.extend(px.iter().map(|v| f64::from(*v)));
            }
        }
    }
}

fn cell_color(layout: &MazeLayout, state: &EnvState, cell: Cell) -> CellColor {
    if cell == state.agent_pos {
        CellColor::AGENT
    } else if cell == state.goal_pos {
        CellColor::GOAL
    } else {
        match layout.kind(cell) {
            CellKind::Wall => CellColor::WALL,
            CellKind::Floor => CellColor::FLOOR,
        }
    }
}

pub fn listener_view(
    layout: &MazeLayout,
    state: &EnvState,
    visibility: Visibility,
) -> ListenerView {
    match visibility {
        Visibility::None => ListenerView::None,
        Visibility::Partial => {
            let fwd = state.heading.delta();
            let left = state.heading.left().delta();
            let ahead = state.agent_pos.offset(fwd);
            let px = [ahead.offset(left), ahead, ahead.offset((-left.0, -left.1))]
                .map(|c| cell_color(layout, state, c));
            ListenerView::Partial(px)
        }
    }
}

/// Unrotated map with agent and goal overlays; the agent is drawn on top.
pub fn render_map(layout: &MazeLayout, state: &EnvState) -> MapPixels {
    let mut px = [[[0u8; 3]; GRID]; GRID];
    for (y, row) in px.iter_mut().enumerate() {
        for (x, p) in row.iter_mut().enumerate() {
            *p = cell_color(layout, state, Cell::new(x as i32, y as i32)).0;
        }
    }
    px
}

fn rotate_ccw(src: &MapPixels) -> MapPixels {
    let mut out = [[[0u8; 3]; GRID]; GRID];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, p) in row.iter_mut().enumerate() {
            *p = src[c][GRID - 1 - r];
        }
    }
    out
}

pub(crate) fn rotate_quarter_turns(src: &MapPixels, turns: usize) -> MapPixels {
    let mut out = *src;
    for _ in 0..turns % 4 {
        out = rotate_ccw(&out);
    }
    out
}

pub fn speaker_view(layout: &MazeLayout, state: &EnvState) -> SpeakerView {
    let map = render_map(layout, state);
    SpeakerView {
        pixels: rotate_quarter_turns(&map, state.heading.quarter_turns_to_up()),
    }
}
