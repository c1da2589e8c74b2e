//! ASCII grid maps.
//!
//! Map syntax, one character per cell:
//!
//! | char | meaning                          |
//! |------|----------------------------------|
//! | `#`  | wall                             |
//! | `.`  | floor                            |
//! | `X`  | fatal cell (entering kills)      |
//! | `S`  | start (floor)                    |
//! | `K`  | key (floor)                      |
//! | `D`  | door (floor)                     |
//! | `T`  | treasure (floor)                 |
//!
//! Every row must have the same width and exactly one `S` must be present.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EnvError, Pos};

const KDT1_MAP: &str = include_str!("../../layouts/kdt1.txt");
const KDT2_MAP: &str = include_str!("../../layouts/kdt2.txt");
const HAZARD_MAP: &str = include_str!("../../layouts/hazard.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cell {
    Wall,
    Floor,
    Fatal,
}

impl Cell {
    pub fn is_passable(self) -> bool {
        !matches!(self, Cell::Wall)
    }
}

/// Object markers found in a map file. All optional; a task decides which it needs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MapMarkers {
    pub key: Option<Pos>,
    pub door: Option<Pos>,
    pub treasure: Option<Pos>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    width: i32,
    height: i32,
    cells: Vec<Cell>,
    start: Pos,
    #[serde(skip)]
    markers: MapMarkers,
}

impl Layout {
    pub fn parse(text: &str) -> Result<Self, EnvError> {
        let rows: Vec<&str> = text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .filter(|l| !l.is_empty())
            .collect();
        if rows.is_empty() {
            return Err(EnvError::Layout { line: 0, msg: "empty map".into() });
        }
        let width = rows[0].chars().count();
        let mut cells = Vec::with_capacity(width * rows.len());
        let mut start = None;
        let mut markers = MapMarkers::default();

        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(EnvError::Layout {
                    line: y + 1,
                    msg: format!("row width {} differs from {}", row.chars().count(), width),
                });
            }
            for (x, ch) in row.chars().enumerate() {
                let pos = Pos::new(x as i32, y as i32);
                let place = |slot: &mut Option<Pos>, what: &str| {
                    if slot.replace(pos).is_some() {
                        Err(EnvError::Layout { line: y + 1, msg: format!("duplicate {what}") })
                    } else {
                        Ok(())
                    }
                };
                let cell = match ch {
                    '#' => Cell::Wall,
                    '.' => Cell::Floor,
                    'X' => Cell::Fatal,
                    'S' => {
                        place(&mut start, "start")?;
                        Cell::Floor
                    }
                    'K' => {
                        place(&mut markers.key, "key")?;
                        Cell::Floor
                    }
                    'D' => {
                        place(&mut markers.door, "door")?;
                        Cell::Floor
                    }
                    'T' => {
                        place(&mut markers.treasure, "treasure")?;
                        Cell::Floor
                    }
                    other => {
                        return Err(EnvError::Layout {
                            line: y + 1,
                            msg: format!("unknown map character {other:?}"),
                        })
                    }
                };
                cells.push(cell);
            }
        }
        let start = start.ok_or(EnvError::Layout { line: 0, msg: "map has no start cell 'S'".into() })?;
        Ok(Self { width: width as i32, height: rows.len() as i32, cells, start, markers })
    }

    pub fn load(path: &Path) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EnvError::Config(format!("reading map {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn kdt1() -> Self {
        Self::parse(KDT1_MAP).expect("built-in map")
    }

    pub fn kdt2() -> Self {
        Self::parse(KDT2_MAP).expect("built-in map")
    }

    pub fn hazard() -> Self {
        Self::parse(HAZARD_MAP).expect("built-in map")
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn start(&self) -> Pos {
        self.start
    }

    pub fn markers(&self) -> MapMarkers {
        self.markers
    }

    pub fn in_bounds(&self, p: Pos) -> bool {
        p.x >= 0 && p.y >= 0 && p.x < self.width && p.y < self.height
    }

    /// Cell at `p`; out-of-bounds positions read as walls.
    pub fn cell(&self, p: Pos) -> Cell {
        if self.in_bounds(p) {
            self.cells[(p.y * self.width + p.x) as usize]
        } else {
            Cell::Wall
        }
    }

    pub fn is_passable(&self, p: Pos) -> bool {
        self.cell(p).is_passable()
    }

    /// All cells the agent can stand on, fatal cells included, in row-major order.
    pub fn passable_cells(&self) -> impl Iterator<Item = Pos> + '_ {
        (0..self.height)
            .flat_map(move |y| (0..self.width).map(move |x| Pos::new(x, y)))
            .filter(move |p| self.is_passable(*p))
    }

    /// Floor cells squeezed between two walls along one axis.
    pub fn is_doorway(&self, p: Pos) -> bool {
        if self.cell(p) != Cell::Floor {
            return false;
        }
        let wall = |dx: i32, dy: i32| self.cell(Pos::new(p.x + dx, p.y + dy)) == Cell::Wall;
        (wall(-1, 0) && wall(1, 0)) || (wall(0, -1) && wall(0, 1))
    }

    /// Connected components of non-doorway floor cells, ordered by their first cell.
    pub fn rooms(&self) -> Vec<Vec<Pos>> {
        let mut room_of = vec![usize::MAX; self.cells.len()];
        let mut rooms = Vec::new();
        for seed in self.passable_cells() {
            let idx = (seed.y * self.width + seed.x) as usize;
            if room_of[idx] != usize::MAX || self.cell(seed) != Cell::Floor || self.is_doorway(seed) {
                continue;
            }
            let id = rooms.len();
            let mut members = Vec::new();
            let mut queue = VecDeque::from([seed]);
            room_of[idx] = id;
            while let Some(p) = queue.pop_front() {
                members.push(p);
                for n in p.neighbors() {
                    if !self.in_bounds(n) || self.cell(n) != Cell::Floor || self.is_doorway(n) {
                        continue;
                    }
                    let nidx = (n.y * self.width + n.x) as usize;
                    if room_of[nidx] == usize::MAX {
                        room_of[nidx] = id;
                        queue.push_back(n);
                    }
                }
            }
            members.sort();
            rooms.push(members);
        }
        rooms
    }

    /// Doorway cells with the indices of the rooms they connect.
    pub fn doorways(&self) -> Vec<(Pos, Vec<usize>)> {
        let rooms = self.rooms();
        let room_index = |p: Pos| rooms.iter().position(|r| r.binary_search(&p).is_ok());
        self.passable_cells()
            .filter(|p| self.is_doorway(*p))
            .map(|p| {
                let mut adj: Vec<usize> = p.neighbors().into_iter().filter_map(room_index).collect();
                adj.sort_unstable();
                adj.dedup();
                (p, adj)
            })
            .collect()
    }

    /// Mirror image about the vertical midline.
    pub fn mirror_x(&self, p: Pos) -> Pos {
        Pos::new(self.width - 1 - p.x, p.y)
    }
}
