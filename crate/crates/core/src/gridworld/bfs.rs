use alloc::collections::VecDeque;

use super::env::ListenerAction;
use super::layout::{Cell, MazeLayout, GRID};
use crate::{Error, Result};

/// BFS distances from one source over 4-connected floor cells.
#[derive(Debug, Clone)]
pub struct DistanceMap {
    dist: [[Option<u32>; GRID]; GRID],
}

impl DistanceMap {
    pub fn get(&self, cell: Cell) -> Option<u32> {
        if cell.in_grid() {
            self.dist[cell.y as usize][cell.x as usize]
        } else {
            None
        }
    }
}

pub fn distance_map(layout: &MazeLayout, source: Cell) -> DistanceMap {
    let mut dist = [[None; GRID]; GRID];
    if !layout.is_floor(source) {
        return DistanceMap { dist };
    }
    dist[source.y as usize][source.x as usize] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(cell) = queue.pop_front() {
        let d = dist[cell.y as usize][cell.x as usize].unwrap_or_default();
        for action in ListenerAction::MOVES {
            let next = cell.offset(action.heading().unwrap().delta());
            if layout.is_floor(next) && dist[next.y as usize][next.x as usize].is_none() {
                dist[next.y as usize][next.x as usize] = Some(d + 1);
                queue.push_back(next);
            }
        }
    }
    DistanceMap { dist }
}

/// Number of moves on a shortest floor path from `from` to `to`.
pub fn shortest_path(layout: &MazeLayout, from: Cell, to: Cell) -> Result<u32> {
    if !layout.is_floor(from) || !layout.is_floor(to) {
        return Err(Error::Layout(
            "shortest_path endpoints must be floor cells".into(),
        ));
    }
    distance_map(layout, to).get(from).ok_or(Error::Unreachable)
}

/// First move (in action order) that lies on a shortest path from `from`
/// to the source of `to_goal`, or `None` when already there or unreachable.
pub fn next_step_towards(to_goal: &DistanceMap, from: Cell) -> Option<ListenerAction> {
    let here = to_goal.get(from)?;
    if here == 0 {
        return None;
    }
    ListenerAction::MOVES.into_iter().find(|a| {
        let next = from.offset(a.heading().unwrap().delta());
        to_goal.get(next) == Some(here - 1)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{build_layout, LayoutId};

    #[test]
    fn tmaze_corners_are_nine_steps_from_start() {
        let t = build_layout(LayoutId::Tmaze);
        for g in &t.goal_candidates {
            assert_eq!(shortest_path(&t, t.start, *g), Ok(9));
        }
        assert_eq!(shortest_path(&t, t.start, Cell::new(4, 4)), Ok(3));
        assert_eq!(shortest_path(&t, t.start, t.start), Ok(0));
    }

    #[test]
    fn walls_are_rejected_and_islands_unreachable() {
        let t = build_layout(LayoutId::Tmaze);
        assert!(matches!(
            shortest_path(&t, t.start, Cell::new(0, 0)),
            Err(Error::Layout(_))
        ));
        // (5,2) becomes an isolated floor cell.
        let text = LayoutId::Tmaze
            .fixture()
            .replacen("#.#####.#", "#.###.#.#", 1);
        let sealed = MazeLayout::parse(&text).expect("still valid");
        assert_eq!(
            shortest_path(&sealed, sealed.start, Cell::new(5, 2)),
            Err(Error::Unreachable)
        );
    }

    #[test]
    fn following_next_step_reaches_goal_in_bfs_steps() {
        for id in LayoutId::ALL {
            let l = build_layout(id);
            for g in &l.goal_candidates {
                let map = distance_map(&l, *g);
                let mut at = l.start;
                let mut n = 0;
                while let Some(a) = next_step_towards(&map, at) {
                    at = at.offset(a.heading().unwrap().delta());
                    n += 1;
                }
                assert_eq!(at, *g);
                assert_eq!(Ok(n), shortest_path(&l, l.start, *g));
            }
        }
    }
}
