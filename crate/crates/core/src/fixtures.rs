//! Hand-built maps and episodes with known metric values, used by tests and
//! the acceptance suite.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::data_io::{Trajectory, TrajectoryHeader};
use crate::env::Episode;
use crate::geometry::{Rect, Vec2};
use crate::maps::{Category, ItemSpec, MapSpec, Pose, MAP_SCHEMA};
use crate::metrics::{cell_center, CELL};
use crate::physics::{resolve_grasp, ActionCommand, ItemShape, PhysicsParams, SizeClass, WorldState, AGENT_RADIUS};

/// Wall-free map with the given goals and items.
pub fn open_map(goals: Vec<Rect>, items: Vec<ItemSpec>) -> MapSpec {
    MapSpec {
        schema: MAP_SCHEMA.into(),
        id: 0,
        name: "fixture".into(),
        category: Category::Coordination,
        walls: vec![],
        goal_regions: goals,
        items,
        agent_spawns: [Pose { x: 0.05, y: 0.05, angle: 0.0 }, Pose { x: 0.95, y: 0.05, angle: PI }],
        notes: String::new(),
    }
}

pub fn item_spec(size: SizeClass, shape: ItemShape, radius: f64, mass: f64, at: Vec2) -> ItemSpec {
    ItemSpec {
        shape,
        size,
        mass,
        footprint_radius: radius,
        spawn: Pose { x: at.x, y: at.y, angle: 0.0 },
        randomization: None,
    }
}

fn still_episode(states: Vec<WorldState>) -> Episode {
    let n = states.len().saturating_sub(1);
    let actions = (0..n)
        .map(|t| [0, 1].map(|a| ActionCommand::idle(states[t].agents[a].heading)))
        .collect();
    Episode {
        states,
        actions,
        events: vec![Vec::new(); n],
        dt: PhysicsParams::default().dt,
    }
}

/// One small item delivered, one large item not: completion 1/3.
pub fn tcr_one_small_delivered() -> Episode {
    let map = open_map(
        vec![Rect::new(0.7, 0.7, 1.0, 1.0)],
        vec![
            item_spec(SizeClass::Small, ItemShape::Circle, 0.03, 1.0, Vec2::new(0.85, 0.85)),
            item_spec(SizeClass::Large, ItemShape::Polygon { sides: 4 }, 0.07, 2.0, Vec2::new(0.3, 0.3)),
        ],
    );
    still_episode(vec![WorldState::from_map(Arc::new(map))])
}

/// Map whose only goal is grid cell (0, 24), with one small item.
pub fn nfd_map() -> MapSpec {
    let (lo, hi) = (cell_center(0, 24) - Vec2::new(CELL / 2.0, CELL / 2.0), cell_center(0, 24) + Vec2::new(CELL / 2.0, CELL / 2.0));
    open_map(
        vec![Rect::new(lo.x, lo.y, hi.x, hi.y)],
        vec![item_spec(SizeClass::Small, ItemShape::Circle, 0.012, 1.0, cell_center(10, 24))],
    )
}

fn nfd_episode(final_col: usize) -> Episode {
    let map = Arc::new(nfd_map());
    let first = WorldState::from_map(map);
    let mut last = first.clone();
    last.items[0].position = cell_center(final_col, 24);
    still_episode(vec![first, last])
}

/// NFD fixtures as (episode, expected): item ends at distance 0, does not
/// move, or halves its distance (10 cells to 5).
pub fn nfd_cases() -> Vec<(Episode, f64)> {
    vec![(nfd_episode(0), 1.0), (nfd_episode(10), 0.0), (nfd_episode(5), 0.5)]
}

fn large_item_world(mass: f64) -> WorldState {
    let map = open_map(
        vec![Rect::new(0.8, 0.0, 1.0, 0.3)],
        vec![item_spec(SizeClass::Large, ItemShape::Circle, 0.07, mass, Vec2::new(0.5, 0.5))],
    );
    WorldState::from_map(Arc::new(map))
}

/// Both agents flank the large item on the x axis, holding it.
pub fn joint_carry_state() -> WorldState {
    let mut s = large_item_world(2.0);
    let r = 0.07;
    s.agents[0].position = Vec2::new(0.5 - r - AGENT_RADIUS, 0.5);
    s.agents[1].position = Vec2::new(0.5 + r + AGENT_RADIUS, 0.5);
    let params = PhysicsParams::default();
    resolve_grasp(&resolve_grasp(&s, 0, true, &params), 1, true, &params)
}

/// Agent 0 holds a large item alone for 30 steps, then the partner joins:
/// 3.0 s of waiting.
pub fn waiting_thirty_steps() -> Episode {
    let params = PhysicsParams::default();
    let joint = joint_carry_state();
    let mut alone = resolve_grasp(&joint, 1, true, &params);
    alone.agents[1].position = Vec2::new(0.9, 0.9);
    let mut states = vec![alone.clone(); 31];
    let mut joined = alone;
    joined.agents[1].position = joint.agents[1].position;
    joined = resolve_grasp(&joined, 1, true, &params);
    states.extend(std::iter::repeat_n(joined, 5));
    still_episode(states)
}

/// One-step joint-carry episodes with both agents moving at full speed:
/// aligned (AC 1), opposed (AC 0) and orthogonal (AC 0.5).
pub fn ac_cases() -> Vec<(Episode, f64)> {
    let s = joint_carry_state();
    let m = PhysicsParams::default().max_move();
    [(0.0, 1.0), (PI, 0.0), (PI / 2.0, 0.5)]
        .into_iter()
        .map(|(h2, expected)| {
            let actions = [ActionCommand::new(m, 0.0, false), ActionCommand::new(m, h2, false)];
            let ep = Episode {
                states: vec![s.clone(), s.clone()],
                actions: vec![actions],
                events: vec![Vec::new()],
                dt: PhysicsParams::default().dt,
            };
            (ep, expected)
        })
        .collect()
}

/// Map for the recombination fixtures: one small item and a wall block in
/// the middle.
pub fn splice_map() -> MapSpec {
    let mut map = open_map(
        vec![Rect::new(0.8, 0.8, 1.0, 1.0)],
        vec![item_spec(SizeClass::Small, ItemShape::Circle, 0.03, 1.0, Vec2::new(0.9, 0.5))],
    );
    map.walls = vec![Rect::new(0.45, 0.7, 0.55, 0.8)];
    map
}

/// Length of the recombination fixture trajectories, in steps.
pub const SPLICE_STEPS: usize = 50;

fn splice_trajectory(seed: u64, own: Vec2, partner: Vec2, meet_offset: Vec2) -> Trajectory {
    let map = splice_map();
    let base = WorldState::from_map(Arc::new(map.clone()));
    let mut states = Vec::with_capacity(SPLICE_STEPS + 1);
    for t in 0..=SPLICE_STEPS {
        let mut s = base.clone();
        s.agents[0].position = if t == 10 || t == 40 { cell_center(24, 20) + meet_offset } else { own };
        s.agents[1].position = partner + Vec2::new(0.001 * t as f64, 0.0);
        s.agents[1].heading = 0.01 * t as f64;
        states.push(s.to_vector());
    }
    let actions = (0..SPLICE_STEPS)
        .map(|t| [[0.0, 1.0, 0.0, 0.0], [0.01 + seed as f64 * 1e-3, 0.0, 1.0, (t % 2) as f64]])
        .collect();
    Trajectory {
        header: TrajectoryHeader::new(&map, seed, "fixture", SPLICE_STEPS),
        states,
        actions,
        events: vec![Vec::new(); SPLICE_STEPS],
    }
}

/// Two trajectories whose agent i shares a grid cell (and an empty hand) at
/// t = 10 and t = 40 and nowhere else.
pub fn splice_pair() -> (Trajectory, Trajectory) {
    (
        splice_trajectory(1, Vec2::new(0.3, 0.3), Vec2::new(0.2, 0.5), Vec2::new(-0.005, 0.003)),
        splice_trajectory(2, Vec2::new(0.7, 0.3), Vec2::new(0.6, 0.5), Vec2::new(0.004, -0.002)),
    )
}

/// Like [`splice_pair`], but the second trajectory's partner jumps into the
/// wall for the single step t = 10.
pub fn splice_pair_wall_jump() -> (Trajectory, Trajectory) {
    let (a, mut b) = splice_pair();
    b.states[10][8] = 0.5;
    b.states[10][9] = 0.75;
    (a, b)
}
