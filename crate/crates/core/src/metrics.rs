//! Evaluation metrics (completion rate, normalized final distance, waiting
//! time, action consistency) and the grid distance field they use.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::env::Episode;
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::maps::MapSpec;
use crate::physics::{SizeClass, WorldState};

/// Cells per side of the distance grid.
pub const GRID: usize = 48;
pub const CELL: f64 = 1.0 / GRID as f64;

/// Per-step item displacement below which a held item counts as stuck.
pub const STILL_EPS: f64 = 1e-4;

/// Goal distances on a 48×48 grid, from multi-source BFS over free cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    walls: Vec<bool>,
    /// Distance in cells, row-major with row = y; `None` is unreachable.
    cells: Vec<Option<u32>>,
}

/// Center of grid cell `(col, row)`.
pub fn cell_center(col: usize, row: usize) -> Vec2 {
    Vec2::new((col as f64 + 0.5) * CELL, (row as f64 + 0.5) * CELL)
}

/// Grid cell containing `p` (clamped into the grid).
pub fn cell_of(p: Vec2) -> (usize, usize) {
    let idx = |v: f64| ((v * GRID as f64).floor().max(0.0) as usize).min(GRID - 1);
    (idx(p.x), idx(p.y))
}

/// Cells whose center lies in a wall.
pub fn wall_mask(map: &MapSpec) -> Vec<bool> {
    let mut mask = vec![false; GRID * GRID];
    for row in 0..GRID {
        for col in 0..GRID {
            let c = cell_center(col, row);
            mask[row * GRID + col] = map.walls.iter().any(|w| w.contains(c));
        }
    }
    mask
}

impl DistanceField {
    pub fn build(map: &MapSpec) -> DistanceField {
        let walls = wall_mask(map);
        let mut cells = vec![None; GRID * GRID];
        let mut queue = VecDeque::new();
        for row in 0..GRID {
            for col in 0..GRID {
                let i = row * GRID + col;
                if !walls[i] && map.goal_regions.iter().any(|g| g.contains(cell_center(col, row))) {
                    cells[i] = Some(0);
                    queue.push_back((col, row));
                }
            }
        }
        while let Some((col, row)) = queue.pop_front() {
            let d = cells[row * GRID + col].expect("queued cells are labelled");
            for (nc, nr) in neighbors(col, row) {
                let j = nr * GRID + nc;
                if !walls[j] && cells[j].is_none() {
                    cells[j] = Some(d + 1);
                    queue.push_back((nc, nr));
                }
            }
        }
        DistanceField { walls, cells }
    }

    pub fn is_wall(&self, col: usize, row: usize) -> bool {
        self.walls[row * GRID + col]
    }

    /// Distance in cells, `None` if unreachable.
    pub fn cells(&self, col: usize, row: usize) -> Option<u32> {
        self.cells[row * GRID + col]
    }

    /// Distance in arena units for the cell at `(col, row)`.
    pub fn cell_distance(&self, col: usize, row: usize) -> Option<f64> {
        self.cells(col, row).map(cells_to_units)
    }

    /// Distance of a point; a point whose own cell is unreachable (typically a
    /// wall cell it only partly overlaps) borrows its best neighbour plus one.
    pub fn distance_at(&self, p: Vec2) -> Option<f64> {
        let (col, row) = cell_of(p);
        if let Some(d) = self.cells(col, row) {
            return Some(cells_to_units(d));
        }
        neighbors(col, row)
            .filter_map(|(c, r)| self.cells(c, r))
            .min()
            .map(|d| cells_to_units(d + 1))
    }

    /// Largest finite distance on the grid.
    pub fn max_distance(&self) -> f64 {
        cells_to_units(self.cells.iter().flatten().copied().max().unwrap_or(0))
    }

    /// Distance of `p`, with unreachable points scored one cell beyond the
    /// farthest reachable cell.
    pub fn distance_or_max(&self, p: Vec2) -> f64 {
        self.distance_at(p).unwrap_or(self.max_distance() + CELL)
    }

    /// Goal distance of item `i` in `state`; zero once delivered.
    pub fn item_distance(&self, state: &WorldState, i: usize) -> f64 {
        if state.item_delivered(i) {
            0.0
        } else {
            self.distance_or_max(state.items[i].position)
        }
    }

    /// Sum of item goal distances.
    pub fn total_distance(&self, state: &WorldState) -> f64 {
        (0..state.items.len()).map(|i| self.item_distance(state, i)).sum()
    }
}

/// Converts a cell count to arena units.
pub fn cells_to_units(cells: u32) -> f64 {
    f64::from(cells) / GRID as f64
}

/// 4-connected neighbours of a cell, in the order +x, -x, +y, -y.
pub fn neighbors(col: usize, row: usize) -> impl Iterator<Item = (usize, usize)> {
    let (c, r) = (col as i64, row as i64);
    [(c + 1, r), (c - 1, r), (c, r + 1), (c, r - 1)]
        .into_iter()
        .filter(|&(c, r)| c >= 0 && r >= 0 && c < GRID as i64 && r < GRID as i64)
        .map(|(c, r)| (c as usize, r as usize))
}

/// Completion weight: 1 for small items, 2 for medium and large.
pub fn size_weight(size: SizeClass) -> f64 {
    match size {
        SizeClass::Small => 1.0,
        SizeClass::Medium | SizeClass::Large => 2.0,
    }
}

/// Size-weighted fraction of items delivered at the final step.
pub fn tcr(ep: &Episode) -> f64 {
    let last = ep.last();
    let total: f64 = last.items.iter().map(|i| size_weight(i.size)).sum();
    if total == 0.0 {
        return 1.0;
    }
    let delivered: f64 = (0..last.items.len())
        .filter(|&i| last.item_delivered(i))
        .map(|i| size_weight(last.items[i].size))
        .sum();
    delivered / total
}

/// `1 - final/initial` summed goal distance; negative if items ended farther.
pub fn nfd(ep: &Episode, field: &DistanceField) -> Result<f64> {
    nfd_from_sums(field.total_distance(ep.first()), field.total_distance(ep.last()))
}

pub fn nfd_from_sums(initial: f64, final_: f64) -> Result<f64> {
    if initial <= 0.0 {
        return Err(Error::DegenerateEpisode);
    }
    Ok(1.0 - final_ / initial)
}

/// Seconds agents spent holding a medium or large item that did not move
/// while the partner was not attached to it.
pub fn waiting_time(ep: &Episode) -> f64 {
    let mut steps = 0usize;
    for t in 0..ep.steps() {
        let (before, after) = (&ep.states[t], &ep.states[t + 1]);
        for a in 0..2 {
            let (Some(i), Some(j)) = (before.agents[a].hold, after.agents[a].hold) else {
                continue;
            };
            if i != j || !after.items[i].size.is_heavy() {
                continue;
            }
            let moved = after.items[i].position.distance(before.items[i].position);
            let partner_on = after.agents[1 - a].hold == Some(i);
            if moved < STILL_EPS && !partner_on {
                steps += 1;
            }
        }
    }
    steps as f64 * ep.dt
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcDenominator {
    /// Average over joint-carry steps.
    #[default]
    Joint,
    /// Average over every step of the episode.
    Total,
}

/// Alignment of two commanded velocities along the inter-agent axis `d`, in
/// `[0, 1]`. `None` when both agents command zero motion.
pub fn ac_term(f1: Vec2, f2: Vec2, d: Vec2) -> Option<f64> {
    let norm = f1.length() + f2.length();
    if norm == 0.0 {
        return None;
    }
    Some(((f1 + f2).dot(d).abs() / norm).min(1.0))
}

/// Action consistency over joint carries of medium and large items; 1 when
/// the episode has none.
pub fn action_consistency(ep: &Episode, denominator: AcDenominator) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in 0..ep.steps() {
        let s = &ep.states[t];
        let joint = match (s.agents[0].hold, s.agents[1].hold) {
            (Some(i), Some(j)) => i == j && s.items[i].size.is_heavy(),
            _ => false,
        };
        if !joint {
            continue;
        }
        let Some(d) = (s.agents[1].position - s.agents[0].position).normalized() else {
            continue;
        };
        let [a0, a1] = &ep.actions[t];
        if let Some(term) = ac_term(a0.velocity(), a1.velocity(), d) {
            sum += term;
            count += 1;
        }
    }
    if count == 0 {
        return 1.0;
    }
    match denominator {
        AcDenominator::Joint => sum / count as f64,
        AcDenominator::Total => sum / ep.steps() as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemReport {
    pub item: usize,
    pub size: SizeClass,
    pub delivered: bool,
    pub initial_distance: f64,
    pub final_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tcr: f64,
    pub nfd: f64,
    pub wt_seconds: f64,
    pub ac: f64,
    pub per_item: Vec<ItemReport>,
}

pub fn evaluate(ep: &Episode, field: &DistanceField, denominator: AcDenominator) -> Result<MetricsReport> {
    let (first, last) = (ep.first(), ep.last());
    let per_item = (0..last.items.len())
        .map(|i| ItemReport {
            item: i,
            size: last.items[i].size,
            delivered: last.item_delivered(i),
            initial_distance: field.item_distance(first, i),
            final_distance: field.item_distance(last, i),
        })
        .collect();
    Ok(MetricsReport {
        tcr: tcr(ep),
        nfd: nfd(ep, field)?,
        wt_seconds: waiting_time(ep),
        ac: action_consistency(ep, denominator),
        per_item,
    })
}
