//! 8-connected occupancy grid.
//!
//! Cells are addressed by integer `(x, y)` with the origin at the top-left of
//! the text rendering; `StateId = y * width + x`. Straight moves cost 1 and
//! diagonal moves cost `√2`. A diagonal move is only allowed when both
//! straight cells it passes between are free.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Domain, GoalPredicate, HeuristicFn, Problem, SnapError, StateId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridCell {
    pub x: u32,
    pub y: u32,
}

impl GridCell {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

impl fmt::Display for GridCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("map is empty")]
    Empty,
    #[error("row {row} has width {got}, expected {expected}")]
    Ragged { row: usize, expected: usize, got: usize },
    #[error("unknown map character {ch:?} at row {row}, column {col}")]
    UnknownChar { ch: char, row: usize, col: usize },
    #[error("map has no start cell 'S'")]
    MissingStart,
    #[error("map has no goal cell 'T'")]
    MissingGoal,
    #[error("map has more than one '{0}' cell")]
    Duplicate(char),
    #[error("{what} cell {cell} is outside the {width}x{height} map")]
    OutOfBounds {
        what: &'static str,
        cell: GridCell,
        width: u32,
        height: u32,
    },
    #[error("{what} cell {cell} is blocked")]
    Blocked { what: &'static str, cell: GridCell },
}

/// Occupancy grid with a start and a goal cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    width: u32,
    height: u32,
    blocked: Vec<bool>,
    start: GridCell,
    goal: GridCell,
}

const NEIGHBORS: [(i64, i64); 8] = [
    (1, 0),
    (0, 1),
    (-1, 0),
    (0, -1),
    (1, 1),
    (-1, 1),
    (-1, -1),
    (1, -1),
];

impl GridMap {
    pub fn new(
        width: u32,
        height: u32,
        blocked: Vec<bool>,
        start: GridCell,
        goal: GridCell,
    ) -> Result<Self, GridError> {
        if width == 0 || height == 0 {
            return Err(GridError::Empty);
        }
        assert_eq!(blocked.len(), width as usize * height as usize);
        let map = Self {
            width,
            height,
            blocked,
            start,
            goal,
        };
        map.check_endpoint("start", start)?;
        map.check_endpoint("goal", goal)?;
        Ok(map)
    }

    /// Obstacle-free map.
    pub fn empty(width: u32, height: u32, start: GridCell, goal: GridCell) -> Result<Self, GridError> {
        Self::new(
            width,
            height,
            vec![false; width as usize * height as usize],
            start,
            goal,
        )
    }

    /// Parses the text format: `#` blocked, `.` free, `S` start, `T` goal.
    /// Blank lines and surrounding whitespace are ignored.
    pub fn parse(text: &str) -> Result<Self, GridError> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        if rows.is_empty() {
            return Err(GridError::Empty);
        }
        let width = rows[0].chars().count();
        let mut blocked = Vec::with_capacity(width * rows.len());
        let mut start = None;
        let mut goal = None;
        for (row, line) in rows.iter().enumerate() {
            let got = line.chars().count();
            if got != width {
                return Err(GridError::Ragged {
                    row,
                    expected: width,
                    got,
                });
            }
            for (col, ch) in line.chars().enumerate() {
                let cell = GridCell::new(col as u32, row as u32);
                match ch {
                    '#' => blocked.push(true),
                    '.' => blocked.push(false),
                    'S' => {
                        if start.replace(cell).is_some() {
                            return Err(GridError::Duplicate('S'));
                        }
                        blocked.push(false);
                    }
                    'T' => {
                        if goal.replace(cell).is_some() {
                            return Err(GridError::Duplicate('T'));
                        }
                        blocked.push(false);
                    }
                    ch => return Err(GridError::UnknownChar { ch, row, col }),
                }
            }
        }
        let start = start.ok_or(GridError::MissingStart)?;
        let goal = goal.ok_or(GridError::MissingGoal)?;
        Self::new(width as u32, rows.len() as u32, blocked, start, goal)
    }

    /// Renders the map back into the text format.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity((self.width as usize + 1) * self.height as usize);
        for y in 0..self.height {
            for x in 0..self.width {
                let cell = GridCell::new(x, y);
                let ch = if cell == self.start {
                    'S'
                } else if cell == self.goal {
                    'T'
                } else if self.is_blocked(cell) {
                    '#'
                } else {
                    '.'
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }

    /// Returns a copy with new start and goal cells.
    pub fn with_endpoints(&self, start: GridCell, goal: GridCell) -> Result<Self, GridError> {
        Self::new(self.width, self.height, self.blocked.clone(), start, goal)
    }

    fn check_endpoint(&self, what: &'static str, cell: GridCell) -> Result<(), GridError> {
        if !self.in_bounds(cell) {
            return Err(GridError::OutOfBounds {
                what,
                cell,
                width: self.width,
                height: self.height,
            });
        }
        if self.is_blocked(cell) {
            return Err(GridError::Blocked { what, cell });
        }
        Ok(())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn start(&self) -> GridCell {
        self.start
    }

    pub fn goal(&self) -> GridCell {
        self.goal
    }

    pub fn in_bounds(&self, cell: GridCell) -> bool {
        cell.x < self.width && cell.y < self.height
    }

    pub fn is_blocked(&self, cell: GridCell) -> bool {
        self.blocked[self.index(cell)]
    }

    pub fn set_blocked(&mut self, cell: GridCell, blocked: bool) {
        let i = self.index(cell);
        self.blocked[i] = blocked;
    }

    fn index(&self, cell: GridCell) -> usize {
        cell.y as usize * self.width as usize + cell.x as usize
    }

    pub fn state_of(&self, cell: GridCell) -> StateId {
        StateId(self.index(cell) as u64)
    }

    pub fn cell_of(&self, state: StateId) -> GridCell {
        let w = self.width as u64;
        GridCell::new((state.0 % w) as u32, (state.0 / w) as u32)
    }

    fn free(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && x < self.width as i64
            && y < self.height as i64
            && !self.blocked[y as usize * self.width as usize + x as usize]
    }

    /// Neighbors of a free cell with their move costs.
    pub fn neighbors(&self, cell: GridCell) -> Vec<(GridCell, f64)> {
        let mut out = Vec::with_capacity(8);
        let (x, y) = (cell.x as i64, cell.y as i64);
        for (dx, dy) in NEIGHBORS {
            let (nx, ny) = (x + dx, y + dy);
            if !self.free(nx, ny) {
                continue;
            }
            let cost = if dx != 0 && dy != 0 {
                if !self.free(x + dx, y) || !self.free(x, y + dy) {
                    continue;
                }
                SQRT_2
            } else {
                1.0
            };
            out.push((GridCell::new(nx as u32, ny as u32), cost));
        }
        out
    }

    /// Euclidean distance between cell centers.
    pub fn euclidean(a: GridCell, b: GridCell) -> f64 {
        let dx = a.x as f64 - b.x as f64;
        let dy = a.y as f64 - b.y as f64;
        dx.hypot(dy)
    }

    /// Builds the standard problem: Euclidean distance to the goal drives
    /// both the anchor and the baseline queue.
    pub fn problem(self: &Arc<Self>) -> Problem {
        let goal_state = self.state_of(self.goal);
        let anchor = self.toward(goal_state);
        let goal: GoalPredicate = Arc::new(move |s| s == goal_state);
        Problem {
            domain: self.clone(),
            start: self.state_of(self.start),
            goal,
            baseline: anchor.clone(),
            anchor,
        }
    }

    /// The trap map used to demonstrate guidance.
    ///
    /// A U-shaped obstacle opens away from the goal; the start sits inside
    /// its mouth so that greedy descent on the Euclidean distance floods the
    /// cavity before it can find the way around either arm.
    pub fn u_trap() -> Self {
        Self::u_trap_sized(UTrapLayout::default())
    }

    pub fn u_trap_sized(layout: UTrapLayout) -> Self {
        let UTrapLayout {
            inner_width,
            inner_depth,
            wall,
            margin,
            goal_gap,
        } = layout;
        let width = margin + inner_depth + wall + goal_gap + margin;
        let height = margin + wall + inner_width + wall + margin;
        let mut map = Self::empty(width, height, GridCell::new(0, 0), GridCell::new(0, 0)).unwrap();
        let left = margin;
        let base_x = margin + inner_depth;
        let top = margin;
        map.add_cup(GridCell::new(left, top), inner_depth, inner_width, wall);
        let mid = top + wall + inner_width / 2;
        map.start = GridCell::new(left + 2, mid);
        map.goal = GridCell::new(base_x + wall + goal_gap, mid);
        map
    }

    /// Blocks a cup opening towards -x. `corner` is the outer top-left
    /// cell of the upper arm; the base sits `inner_depth` cells to its right.
    pub fn add_cup(&mut self, corner: GridCell, inner_depth: u32, inner_width: u32, wall: u32) {
        let GridCell { x: left, y: top } = corner;
        let base_x = left + inner_depth;
        let bottom = top + wall + inner_width;
        for x in left..base_x + wall {
            for t in 0..wall {
                self.set_blocked(GridCell::new(x, top + t), true);
                self.set_blocked(GridCell::new(x, bottom + t), true);
            }
        }
        for y in top..bottom + wall {
            for t in 0..wall {
                self.set_blocked(GridCell::new(base_x + t, y), true);
            }
        }
    }

    /// A shallow cup in front of the start and a deep one further on, both
    /// opening away from the goal.
    pub fn two_cups() -> Self {
        let mut map = Self::empty(160, 70, GridCell::new(14, 35), GridCell::new(150, 35)).unwrap();
        map.add_cup(GridCell::new(24, 28), 6, 12, 2);
        map.add_cup(GridCell::new(90, 15), 20, 38, 2);
        map
    }
}

/// Geometry of the built-in trap map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UTrapLayout {
    /// Free cells between the two arms.
    pub inner_width: u32,
    /// Free cells from the mouth to the base.
    pub inner_depth: u32,
    pub wall: u32,
    /// Free border around the obstacle.
    pub margin: u32,
    /// Cells between the outer face of the base and the goal.
    pub goal_gap: u32,
}

impl Default for UTrapLayout {
    fn default() -> Self {
        Self {
            inner_width: 80,
            inner_depth: 70,
            wall: 2,
            margin: 8,
            goal_gap: 30,
        }
    }
}

impl Domain for GridMap {
    fn dimension(&self) -> usize {
        2
    }

    fn is_valid(&self, state: StateId) -> bool {
        state.0 < self.blocked.len() as u64 && !self.blocked[state.0 as usize]
    }

    fn successors(&self, state: StateId, out: &mut Vec<(StateId, f64)>) {
        let cell = self.cell_of(state);
        out.extend(
            self.neighbors(cell)
                .into_iter()
                .map(|(c, cost)| (self.state_of(c), cost)),
        );
    }

    fn configuration(&self, state: StateId) -> Vec<f64> {
        let cell = self.cell_of(state);
        vec![cell.x as f64, cell.y as f64]
    }

    fn nearest(&self, raw: &[f64]) -> Result<StateId, SnapError> {
        if raw.len() != 2 {
            return Err(SnapError::Dimension {
                expected: 2,
                got: raw.len(),
            });
        }
        let (x, y) = (raw[0].round(), raw[1].round());
        if !x.is_finite() || !y.is_finite() || x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            return Err(SnapError::OutOfBounds(raw.to_vec()));
        }
        Ok(self.state_of(GridCell::new(x as u32, y as u32)))
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    fn toward(&self, target: StateId) -> HeuristicFn {
        let width = self.width as u64;
        let (tx, ty) = ((target.0 % width) as f64, (target.0 / width) as f64);
        Arc::new(move |s: StateId| {
            let (x, y) = ((s.0 % width) as f64, (s.0 / width) as f64);
            (x - tx).hypot(y - ty)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty(w: u32, h: u32) -> GridMap {
        GridMap::empty(w, h, GridCell::new(0, 0), GridCell::new(w - 1, h - 1)).unwrap()
    }

    #[test]
    fn interior_cell_has_eight_successors() {
        let map = empty(5, 5);
        assert_eq!(map.neighbors(GridCell::new(2, 2)).len(), 8);
    }

    #[test]
    fn corner_cell_has_three_successors() {
        let map = empty(5, 5);
        let n = map.neighbors(GridCell::new(0, 0));
        assert_eq!(n.len(), 3);
        let diag: Vec<_> = n.iter().filter(|(_, c)| *c > 1.0).collect();
        assert_eq!(diag.len(), 1);
        assert_eq!(diag[0].1, SQRT_2);
    }

    #[test]
    fn diagonal_needs_both_straight_cells_free() {
        let mut map = empty(5, 5);
        map.set_blocked(GridCell::new(3, 2), true);
        let n = map.neighbors(GridCell::new(2, 2));
        let cells: Vec<GridCell> = n.iter().map(|(c, _)| *c).collect();
        assert!(!cells.contains(&GridCell::new(3, 2)));
        assert!(!cells.contains(&GridCell::new(3, 3)));
        assert!(!cells.contains(&GridCell::new(3, 1)));
        assert_eq!(n.len(), 5);
    }

    #[test]
    fn euclidean_heuristic_values() {
        let map = empty(6, 6);
        let h = map.toward(map.state_of(GridCell::new(3, 4)));
        assert_eq!(h(map.state_of(GridCell::new(0, 0))), 5.0);
        let h = map.toward(map.state_of(GridCell::new(2, 2)));
        assert_eq!(h(map.state_of(GridCell::new(2, 2))), 0.0);
        let h = map.toward(map.state_of(GridCell::new(1, 1)));
        assert_eq!(h(map.state_of(GridCell::new(0, 0))), SQRT_2);
    }

    #[test]
    fn parse_and_render_round_trip() {
        let text = "S..#\n.#..\n...T\n";
        let map = GridMap::parse(text).unwrap();
        assert_eq!(map.width(), 4);
        assert_eq!(map.height(), 3);
        assert_eq!(map.start(), GridCell::new(0, 0));
        assert_eq!(map.goal(), GridCell::new(3, 2));
        assert!(map.is_blocked(GridCell::new(1, 1)));
        assert_eq!(map.to_text(), text);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(GridMap::parse(""), Err(GridError::Empty));
        assert!(matches!(GridMap::parse("S.\n...T"), Err(GridError::Ragged { row: 1, .. })));
        assert!(matches!(GridMap::parse("S.x\n..T"), Err(GridError::UnknownChar { ch: 'x', .. })));
        assert_eq!(GridMap::parse("...\n..T"), Err(GridError::MissingStart));
        assert_eq!(GridMap::parse("SS.\n..T"), Err(GridError::Duplicate('S')));
    }

    #[test]
    fn blocked_start_is_rejected_with_its_cell() {
        let map = GridMap::parse("S#.\n..T").unwrap();
        let err = map.with_endpoints(GridCell::new(1, 0), GridCell::new(2, 1)).unwrap_err();
        assert_eq!(err.to_string(), "start cell (1, 0) is blocked");
    }

    #[test]
    fn snapping_rounds_to_nearest_cell() {
        let map = empty(8, 8);
        let (s, d) = map.snap(&[3.2, 4.7]).unwrap();
        assert_eq!(map.cell_of(s), GridCell::new(3, 5));
        assert!((d - 0.2f64.hypot(0.3)).abs() < 1e-12);
        let (s, d) = map.snap(&[2.0, 6.0]).unwrap();
        assert_eq!(map.cell_of(s), GridCell::new(2, 6));
        assert_eq!(d, 0.0);
        assert!(matches!(map.snap(&[-3.0, 1.0]), Err(SnapError::OutOfBounds(_))));
        assert!(matches!(map.snap(&[1.0]), Err(SnapError::Dimension { .. })));
    }

    #[test]
    fn u_trap_has_open_mouth_and_free_endpoints() {
        let map = GridMap::u_trap();
        assert!(!map.is_blocked(map.start()));
        assert!(!map.is_blocked(map.goal()));
        // goal lies east of the base, start inside the cavity
        assert!(map.goal().x > map.start().x);
        let layout = UTrapLayout::default();
        let base_x = layout.margin + layout.inner_depth;
        assert!(map.is_blocked(GridCell::new(base_x, map.start().y)));
        assert!(map.start().x < base_x);
    }
}
