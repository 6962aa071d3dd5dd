//! Deterministic 9×9 mazes: layouts, transitions, rendering and BFS.

mod bfs;
mod env;
mod layout;
mod view;

pub use bfs::{distance_map, next_step_towards, shortest_path, DistanceMap};
pub use env::{apply_action, reset, EnvState, ListenerAction, StepResult, EPISODE_LIMIT};
pub use layout::{build_layout, Cell, CellKind, LayoutId, MazeLayout, GRID};
pub use view::{
    listener_view, render_map, speaker_view, CellColor, ListenerView, MapPixels, SpeakerView,
    Visibility,
};

/// Facing direction of the listener; the last direction it moved in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Heading {
    Up,
    Down,
    Left,
    Right,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::Up, Heading::Down, Heading::Left, Heading::Right];

    /// Unit step `(dx, dy)` with y growing downwards.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Heading::Up => (0, -1),
            Heading::Down => (0, 1),
            Heading::Left => (-1, 0),
            Heading::Right => (1, 0),
        }
    }

    /// Direction to the listener's left when facing `self`.
    pub fn left(self) -> Heading {
        match self {
            Heading::Up => Heading::Left,
            Heading::Left => Heading::Down,
            Heading::Down => Heading::Right,
            Heading::Right => Heading::Up,
        }
    }

    pub fn opposite(self) -> Heading {
        match self {
            Heading::Up => Heading::Down,
            Heading::Down => Heading::Up,
            Heading::Left => Heading::Right,
            Heading::Right => Heading::Left,
        }
    }

    /// Counter-clockwise quarter turns that bring this heading to `Up`.
    pub fn quarter_turns_to_up(self) -> usize {
        match self {
            Heading::Up => 0,
            Heading::Right => 1,
            Heading::Down => 2,
            Heading::Left => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Heading::Up => "up",
            Heading::Down => "down",
            Heading::Left => "left",
            Heading::Right => "right",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|h| h.name() == s)
    }
}
