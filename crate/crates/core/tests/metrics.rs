use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;

use movingout::env::Episode;
use movingout::fixtures::{self, open_map};
use movingout::geometry::{Rect, Vec2};
use movingout::maps::{all_builtin_maps, MapSpec};
use movingout::metrics::*;
use movingout::physics::{ActionCommand, WorldState};
use movingout::Error;
use proptest::prelude::*;

/// Independent shortest paths: Dijkstra with unit weights over a grid built
/// from the raw rectangles.
fn dijkstra(map: &MapSpec) -> Vec<Option<u32>> {
    let n = GRID;
    let center = |c: usize, r: usize| Vec2::new((2 * c + 1) as f64 / (2 * n) as f64, (2 * r + 1) as f64 / (2 * n) as f64);
    let inside = |p: Vec2, q: &Rect| q.x0 <= p.x && p.x <= q.x1 && q.y0 <= p.y && p.y <= q.y1;
    let blocked: Vec<bool> = (0..n * n).map(|i| map.walls.iter().any(|w| inside(center(i % n, i / n), w))).collect();
    let mut dist = vec![u32::MAX; n * n];
    let mut heap = BinaryHeap::new();
    for i in 0..n * n {
        if !blocked[i] && map.goal_regions.iter().any(|g| inside(center(i % n, i / n), g)) {
            dist[i] = 0;
            heap.push(Reverse((0u32, i)));
        }
    }
    while let Some(Reverse((d, i))) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        let (c, r) = ((i % n) as i64, (i / n) as i64);
        for (dc, dr) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let (nc, nr) = (c + dc, r + dr);
            if nc < 0 || nr < 0 || nc >= n as i64 || nr >= n as i64 {
                continue;
            }
            let j = nr as usize * n + nc as usize;
            if !blocked[j] && d + 1 < dist[j] {
                dist[j] = d + 1;
                heap.push(Reverse((d + 1, j)));
            }
        }
    }
    dist.into_iter().map(|d| (d != u32::MAX).then_some(d)).collect()
}

#[test]
fn distance_field_matches_dijkstra_on_every_map() {
    for map in all_builtin_maps() {
        let field = DistanceField::build(&map);
        let oracle = dijkstra(&map);
        for row in 0..GRID {
            for col in 0..GRID {
                assert_eq!(field.cells(col, row), oracle[row * GRID + col], "map {} cell ({col},{row})", map.id);
            }
        }
    }
}

#[test]
fn empty_map_distance_is_manhattan() {
    let goal = Rect::new(0.0, 0.0, CELL, CELL);
    let field = DistanceField::build(&open_map(vec![goal], vec![]));
    assert_eq!(field.cell_distance(0, 0), Some(0.0));
    assert_eq!(field.cell_distance(3, 4), Some(7.0 / 48.0));
    assert_eq!(field.distance_at(cell_center(3, 4)), Some(7.0 / 48.0));
}

#[test]
fn sealed_cells_are_unreachable() {
    let mut map = open_map(vec![Rect::new(0.0, 0.0, 0.2, 0.2)], vec![]);
    map.walls = vec![
        Rect::new(0.5, 0.5, 0.7, 0.52),
        Rect::new(0.5, 0.68, 0.7, 0.7),
        Rect::new(0.5, 0.5, 0.52, 0.7),
        Rect::new(0.68, 0.5, 0.7, 0.7),
    ];
    let field = DistanceField::build(&map);
    let (c, r) = cell_of(Vec2::new(0.6, 0.6));
    assert_eq!(field.cells(c, r), None);
    assert!(field.cells(0, 47).is_some());
}

#[test]
fn map1_window_is_the_only_crossing() {
    // Window narrower than an agent, wider than any item.
    let m = movingout::maps::builtin_map(1).unwrap();
    let gap = m.walls[1].y0 - m.walls[0].y1;
    assert!(gap < 2.0 * movingout::physics::AGENT_RADIUS);
    assert!(m.items.iter().all(|i| 2.0 * i.footprint_radius < gap));
    let map = movingout::maps::builtin_map(1).unwrap();
    let field = DistanceField::build(&map);
    // Free cells inside the divider band.
    let divider_cols: Vec<usize> = (0..GRID).filter(|&c| (0..GRID).filter(|&r| field.is_wall(c, r)).count() > 40).collect();
    assert!(!divider_cols.is_empty());
    for &c in &divider_cols {
        let open: Vec<usize> = (0..GRID).filter(|&r| !field.is_wall(c, r)).collect();
        assert!(!open.is_empty(), "column {c}");
        assert!(open.windows(2).all(|w| w[1] == w[0] + 1), "column {c} has more than one opening");
    }
    // The far side is reachable only through that row.
    assert!(field.distance_at(Vec2::new(0.9, 0.5)).is_some());
}

#[test]
fn tcr_fixture() {
    let ep = fixtures::tcr_one_small_delivered();
    assert!((tcr(&ep) - 1.0 / 3.0).abs() < 1e-9);
}

#[test]
fn tcr_extremes() {
    let ep = fixtures::tcr_one_small_delivered();
    let mut all = ep.clone();
    let goal = all.states[0].map.goal_regions[0];
    let mut map = (*all.states[0].map).clone();
    map.goal_regions = vec![Rect::new(0.0, 0.0, 1.0, 1.0)];
    let s = WorldState::from_map(Arc::new(map));
    all.states = vec![s];
    assert_eq!(tcr(&all), 1.0);
    let mut none = ep;
    none.states[0].items[0].position = Vec2::new(goal.x0 - 0.2, 0.5);
    assert_eq!(tcr(&none), 0.0);
}

#[test]
fn nfd_fixtures() {
    let field = DistanceField::build(&fixtures::nfd_map());
    for (ep, expected) in fixtures::nfd_cases() {
        assert!((nfd(&ep, &field).unwrap() - expected).abs() < 1e-9);
    }
}

#[test]
fn nfd_is_not_clamped_and_rejects_degenerate() {
    assert!((nfd_from_sums(10.0, 15.0).unwrap() + 0.5).abs() < 1e-12);
    assert!(matches!(nfd_from_sums(0.0, 0.0), Err(Error::DegenerateEpisode)));
}

#[test]
fn waiting_time_fixture() {
    let ep = fixtures::waiting_thirty_steps();
    assert!((waiting_time(&ep) - 3.0).abs() < 1e-9);
}

#[test]
fn waiting_time_zero_cases() {
    // Joined from the start.
    let s = fixtures::joint_carry_state();
    let ep = Episode {
        states: vec![s.clone(); 10],
        actions: vec![[ActionCommand::idle(0.0); 2]; 9],
        events: vec![vec![]; 9],
        dt: 0.1,
    };
    assert_eq!(waiting_time(&ep), 0.0);
    // Nothing held.
    let ep = fixtures::tcr_one_small_delivered();
    assert_eq!(waiting_time(&ep), 0.0);
}

#[test]
fn action_consistency_fixtures() {
    for (ep, expected) in fixtures::ac_cases() {
        assert!((action_consistency(&ep, AcDenominator::Joint) - expected).abs() < 1e-9);
    }
    let x = Vec2::new(1.0, 0.0);
    assert_eq!(ac_term(x, x, x), Some(1.0));
    assert_eq!(ac_term(x, -x, x), Some(0.0));
    assert_eq!(ac_term(x, Vec2::new(0.0, 1.0), x), Some(0.5));
    assert_eq!(ac_term(Vec2::ZERO, Vec2::ZERO, x), None);
}

#[test]
fn action_consistency_without_joint_carry_is_one() {
    let ep = fixtures::tcr_one_small_delivered();
    assert_eq!(action_consistency(&ep, AcDenominator::Joint), 1.0);
    assert_eq!(action_consistency(&ep, AcDenominator::Total), 1.0);
}

#[test]
fn total_denominator_dilutes() {
    let (mut ep, _) = fixtures::ac_cases().remove(0);
    ep.states.push(ep.states[1].clone());
    ep.actions.push([ActionCommand::idle(0.0); 2]);
    ep.events.push(vec![]);
    // Second step has zero command so it is skipped for the joint average.
    assert_eq!(action_consistency(&ep, AcDenominator::Joint), 1.0);
    assert!((action_consistency(&ep, AcDenominator::Total) - 0.5).abs() < 1e-12);
}

#[test]
fn report_serializes_with_expected_keys() {
    let field = DistanceField::build(&fixtures::nfd_map());
    let (ep, _) = fixtures::nfd_cases().remove(2);
    let report = evaluate(&ep, &field, AcDenominator::Joint).unwrap();
    let v = serde_json::to_value(&report).unwrap();
    for key in ["tcr", "nfd", "wt_seconds", "ac", "per_item"] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

proptest! {
    #[test]
    fn ac_term_is_bounded(
        a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, d in -1.0f64..1.0, th in -3.2f64..3.2,
    ) {
        if let Some(v) = ac_term(Vec2::new(a, b), Vec2::new(c, d), Vec2::from_angle(th)) {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn nfd_invariant_under_item_permutation(
        moves in proptest::collection::vec((0.05f64..0.95, 0.05f64..0.95), 4), rot in 0usize..4,
    ) {
        let map = movingout::maps::builtin_map(3).unwrap();
        let field = DistanceField::build(&map);
        let first = WorldState::from_map(Arc::new(map.clone()));
        let mut last = first.clone();
        for (k, (x, y)) in moves.iter().enumerate() {
            last.items[k].position = Vec2::new(*x, *y);
        }
        let ep = |a: WorldState, b: WorldState| Episode { states: vec![a, b], actions: vec![[ActionCommand::idle(0.0); 2]], events: vec![vec![]], dt: 0.1 };
        let base = nfd(&ep(first.clone(), last.clone()), &field).unwrap();
        let mut pmap = map.clone();
        pmap.items.rotate_left(rot);
        let pmap = Arc::new(pmap);
        let permute = |s: &WorldState| {
            let mut p = s.clone();
            p.map = pmap.clone();
            p.items.rotate_left(rot);
            p
        };
        let permuted = nfd(&ep(permute(&first), permute(&last)), &field).unwrap();
        prop_assert!((base - permuted).abs() < 1e-12);
    }
}
