//! Grid occupancy, BFS fields and clearance checks for the scripted experts.

use std::collections::VecDeque;

use crate::geometry::{Rect, Vec2};
use crate::maps::MapSpec;
use crate::metrics::{cell_center, cell_of, neighbors, GRID};

pub type Cell = (usize, usize);

fn index((col, row): Cell) -> usize {
    row * GRID + col
}

/// Distance from `p` to the nearest wall or arena boundary.
pub fn wall_clearance(map: &MapSpec, p: Vec2) -> f64 {
    map.solids().map(|r| r.distance(p)).fold(f64::INFINITY, f64::min)
}

/// True when every point of segment `a`-`b`, sampled at `step`, passes `ok`.
pub fn segment_all(a: Vec2, b: Vec2, step: f64, mut ok: impl FnMut(Vec2) -> bool) -> bool {
    let n = ((b - a).length() / step).ceil().max(1.0) as usize;
    (0..=n).all(|k| ok(a + (b - a) * (k as f64 / n as f64)))
}

/// Free cells are those whose center keeps `clearance` from every solid.
#[derive(Debug, Clone)]
pub struct Occupancy {
    free: Vec<bool>,
}

impl Occupancy {
    pub fn with_clearance(map: &MapSpec, clearance: f64) -> Occupancy {
        let mut free = vec![false; GRID * GRID];
        for row in 0..GRID {
            for col in 0..GRID {
                free[index((col, row))] = wall_clearance(map, cell_center(col, row)) >= clearance;
            }
        }
        Occupancy { free }
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.free[index(cell)]
    }

    pub fn set(&mut self, cell: Cell, free: bool) {
        self.free[index(cell)] = free;
    }

    /// Marks cells whose center lies within `radius` of `center` as blocked.
    pub fn block_disc(&mut self, center: Vec2, radius: f64) {
        let (c0, r0) = cell_of(center - Vec2::new(radius, radius));
        let (c1, r1) = cell_of(center + Vec2::new(radius, radius));
        for row in r0..=r1 {
            for col in c0..=c1 {
                if cell_center(col, row).distance(center) < radius {
                    self.set((col, row), false);
                }
            }
        }
    }

    /// The cell of `p` if free, else the free cell within `rings` whose
    /// center is closest to `p`.
    pub fn nearest_free(&self, p: Vec2, rings: usize) -> Option<Cell> {
        let (col, row) = cell_of(p);
        if self.is_free((col, row)) {
            return Some((col, row));
        }
        let mut best: Option<(f64, Cell)> = None;
        let lo = |v: usize| v.saturating_sub(rings);
        let hi = |v: usize| (v + rings).min(GRID - 1);
        for r in lo(row)..=hi(row) {
            for c in lo(col)..=hi(col) {
                if self.is_free((c, r)) {
                    let d = cell_center(c, r).distance(p);
                    if best.is_none_or(|b| d < b.0) {
                        best = Some((d, (c, r)));
                    }
                }
            }
        }
        best.map(|b| b.1)
    }
}

/// BFS distances (in cells) over an occupancy grid.
#[derive(Debug, Clone)]
pub struct Field {
    dist: Vec<Option<u32>>,
}

impl Field {
    pub fn bfs(occ: &Occupancy, sources: impl IntoIterator<Item = Cell>) -> Field {
        let mut dist = vec![None; GRID * GRID];
        let mut queue = VecDeque::new();
        for s in sources {
            if dist[index(s)].is_none() {
                dist[index(s)] = Some(0);
                queue.push_back(s);
            }
        }
        while let Some(cell) = queue.pop_front() {
            let d = dist[index(cell)].expect("queued cells are labelled");
            for n in neighbors(cell.0, cell.1) {
                if occ.is_free(n) && dist[index(n)].is_none() {
                    dist[index(n)] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        Field { dist }
    }

    /// Sources are free cells whose centers lie inside any of `rects`.
    pub fn to_rects(occ: &Occupancy, rects: &[Rect]) -> Field {
        let sources = (0..GRID * GRID)
            .map(|i| (i % GRID, i / GRID))
            .filter(|&c| occ.is_free(c) && rects.iter().any(|r| r.contains(cell_center(c.0, c.1))));
        Field::bfs(occ, sources)
    }

    pub fn get(&self, cell: Cell) -> Option<u32> {
        self.dist[index(cell)]
    }

    pub fn reachable(&self) -> impl Iterator<Item = (Cell, u32)> + '_ {
        self.dist
            .iter()
            .enumerate()
            .filter_map(|(i, d)| d.map(|d| ((i % GRID, i / GRID), d)))
    }

    /// Distance at `p`, borrowing the nearest labelled cell within two rings.
    pub fn at(&self, p: Vec2) -> Option<(Cell, u32)> {
        let (col, row) = cell_of(p);
        if let Some(d) = self.get((col, row)) {
            return Some(((col, row), d));
        }
        let mut best: Option<(f64, Cell, u32)> = None;
        for r in row.saturating_sub(2)..=(row + 2).min(GRID - 1) {
            for c in col.saturating_sub(2)..=(col + 2).min(GRID - 1) {
                if let Some(d) = self.get((c, r)) {
                    let e = cell_center(c, r).distance(p);
                    if best.is_none_or(|b| e < b.0) {
                        best = Some((e, (c, r), d));
                    }
                }
            }
        }
        best.map(|b| (b.1, b.2))
    }

    /// Steepest-descent path from `from`, at most `steps` cells long.
    pub fn descend(&self, from: Cell, steps: usize) -> Vec<Cell> {
        let mut path = Vec::new();
        let mut cur = from;
        let Some(mut d) = self.get(cur) else {
            return path;
        };
        while d > 0 && path.len() < steps {
            let Some((next, nd)) = neighbors(cur.0, cur.1)
                .filter_map(|n| self.get(n).map(|v| (n, v)))
                .min_by_key(|x| x.1)
            else {
                break;
            };
            if nd >= d {
                break;
            }
            path.push(next);
            cur = next;
            d = nd;
        }
        path
    }
}
