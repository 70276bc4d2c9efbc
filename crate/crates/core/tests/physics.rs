use std::f64::consts::PI;
use std::sync::Arc;

use movingout::geometry::{Hull, Rect, Vec2};
use movingout::maps::{all_builtin_maps, builtin_map, ItemSpec, MapSpec, Pose, MAP_SCHEMA};
use movingout::physics::*;
use movingout::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn open_map() -> MapSpec {
    MapSpec {
        schema: MAP_SCHEMA.into(),
        id: 0,
        name: "open".into(),
        category: movingout::maps::Category::Coordination,
        walls: vec![],
        goal_regions: vec![Rect::new(0.8, 0.8, 1.0, 1.0)],
        items: vec![],
        agent_spawns: [Pose { x: 0.5, y: 0.5, angle: 0.0 }, Pose { x: 0.2, y: 0.2, angle: 0.0 }],
        notes: String::new(),
    }
}

fn world(agents: [(f64, f64, f64); 2], items: Vec<ItemBody>) -> WorldState {
    let mut map = open_map();
    map.items = items
        .iter()
        .map(|i| ItemSpec {
            shape: i.shape,
            size: i.size,
            mass: i.mass,
            footprint_radius: i.footprint_radius,
            spawn: Pose { x: i.position.x, y: i.position.y, angle: i.angle },
            randomization: None,
        })
        .collect();
    let mut state = WorldState::from_map(Arc::new(map));
    for (a, (x, y, h)) in agents.into_iter().enumerate() {
        state.agents[a].position = Vec2::new(x, y);
        state.agents[a].heading = h;
    }
    state
}

fn item(size: SizeClass, shape: ItemShape, x: f64, y: f64, radius: f64, mass: f64) -> ItemBody {
    ItemBody {
        position: Vec2::new(x, y),
        angle: 0.0,
        shape,
        size,
        mass,
        footprint_radius: radius,
    }
}

fn idle(state: &WorldState, a: usize) -> ActionCommand {
    ActionCommand::idle(state.agents[a].heading)
}

fn run(state: &WorldState, actions: [ActionCommand; 2]) -> WorldState {
    step(state, &actions, &PhysicsParams::default()).unwrap().state
}

#[test]
fn free_agent_moves_along_heading() {
    let s = world([(0.5, 0.5, 0.0), (0.2, 0.2, 0.0)], vec![]);
    let next = run(&s, [ActionCommand::new(0.02, 0.0, false), idle(&s, 1)]);
    assert_eq!(next.agents[0].position, Vec2::new(0.52, 0.5));
}

#[test]
fn zero_action_is_identity() {
    let s = world(
        [(0.5, 0.5, 0.7), (0.2, 0.2, -2.0)],
        vec![item(SizeClass::Small, ItemShape::Star { points: 5 }, 0.8, 0.3, 0.03, 1.0)],
    );
    let next = run(&s, [idle(&s, 0), idle(&s, 1)]);
    assert_eq!(next, s);
}

#[test]
fn wall_clamps_at_agent_radius_and_slows_next_step() {
    let s = world([(0.03, 0.5, 0.0), (0.5, 0.5, 0.0)], vec![]);
    let next = run(&s, [ActionCommand::new(-0.05, 0.0, false), idle(&s, 1)]);
    assert_eq!(next.agents[0].position.x, AGENT_RADIUS);
    assert!(next.in_wall_contact(0));
    let after = run(&next, [ActionCommand::new(0.02, 0.0, false), idle(&next, 1)]);
    assert!((after.agents[0].position.x - (AGENT_RADIUS + 0.01)).abs() < 1e-15);
}

#[test]
fn turning_is_rate_limited() {
    let s = world([(0.5, 0.5, 0.0), (0.2, 0.2, 0.0)], vec![]);
    let next = run(&s, [ActionCommand::new(0.0, PI / 2.0, false), idle(&s, 1)]);
    let max_turn = PhysicsParams::default().max_turn();
    assert!((next.agents[0].heading - max_turn).abs() < 1e-15);
}

#[test]
fn invalid_heading_is_rejected() {
    let s = world([(0.5, 0.5, 0.0), (0.2, 0.2, 0.0)], vec![]);
    let params = PhysicsParams::default();
    let bad = ActionCommand {
        move_distance: 0.01,
        heading: Vec2::new(0.5, 0.5),
        grasp: false,
    };
    assert!(matches!(step(&s, &[bad, idle(&s, 1)], &params), Err(Error::InvalidAction(_))));
    let nan = ActionCommand {
        heading: Vec2::new(f64::NAN, 0.0),
        ..bad
    };
    assert!(matches!(step(&s, &[idle(&s, 0), nan], &params), Err(Error::InvalidAction(_))));
}

#[test]
fn grasp_attaches_nearest_item_within_reach() {
    // Boundary 0.01 away from the agent surface.
    let r = 0.03;
    let s = world(
        [(0.5, 0.5, 0.0), (0.2, 0.2, 0.0)],
        vec![item(SizeClass::Small, ItemShape::Circle, 0.5 + AGENT_RADIUS + 0.01 + r, 0.5, r, 1.0)],
    );
    let params = PhysicsParams::default();
    assert_eq!(resolve_grasp(&s, 0, false, &params), s);
    let held = resolve_grasp(&s, 0, true, &params);
    assert_eq!(held.agents[0].hold, Some(0));
    assert_eq!(held.attachments.len(), 1);
    let att = held.attachments[0];
    let grip = held.items[0].position + att.grip_offset.rotate(held.items[0].angle);
    assert!(held.items[0].hull().signed_distance(grip).abs() < 1e-6);
    // Agent 1 is far away: no-op.
    assert_eq!(resolve_grasp(&s, 1, true, &params), s);
}

#[test]
fn grasp_ties_go_to_lowest_item_id() {
    let r = 0.03;
    let d = AGENT_RADIUS + 0.01 + r;
    let s = world(
        [(0.5, 0.5, 0.0), (0.2, 0.2, 0.0)],
        vec![
            item(SizeClass::Small, ItemShape::Circle, 0.5 + d, 0.5, r, 1.0),
            item(SizeClass::Small, ItemShape::Circle, 0.5 - d, 0.5, r, 1.0),
        ],
    );
    let held = resolve_grasp(&s, 0, true, &PhysicsParams::default());
    assert_eq!(held.agents[0].hold, Some(0));
}

#[test]
fn release_keeps_partner_attachment() {
    let r = 0.07;
    let s = world(
        [(0.5 - r - AGENT_RADIUS, 0.5, 0.0), (0.5 + r + AGENT_RADIUS, 0.5, PI)],
        vec![item(SizeClass::Large, ItemShape::Circle, 0.5, 0.5, r, 2.0)],
    );
    let params = PhysicsParams::default();
    let both = resolve_grasp(&resolve_grasp(&s, 0, true, &params), 1, true, &params);
    assert_eq!(both.holder_count(0), 2);
    let one = resolve_grasp(&both, 0, true, &params);
    assert_eq!(one.agents[0].hold, None);
    assert_eq!(one.agents[1].hold, Some(0));
    assert_eq!(one.holder_count(0), 1);
}

fn duo_world(mass: f64) -> WorldState {
    let r = 0.07;
    let s = world(
        [(0.5 - r - AGENT_RADIUS, 0.5, 0.0), (0.5 + r + AGENT_RADIUS, 0.5, 0.0)],
        vec![item(SizeClass::Large, ItemShape::Circle, 0.5, 0.5, r, mass)],
    );
    let params = PhysicsParams::default();
    resolve_grasp(&resolve_grasp(&s, 0, true, &params), 1, true, &params)
}

#[test]
fn duo_equal_displacement_translates_item() {
    let s = duo_world(1.0);
    let next = run(&s, [ActionCommand::new(0.02, 0.0, false), ActionCommand::new(0.02, 0.0, false)]);
    let moved = next.items[0].position - s.items[0].position;
    assert!((moved.x - 0.02 * 0.8).abs() < 1e-15);
    assert!(moved.y.abs() < 1e-15);
    assert!(next.items[0].angle.abs() < 1e-15);
    // Holders ride along.
    let a0 = next.agents[0].position - s.agents[0].position;
    assert!((a0.x - 0.016).abs() < 1e-12);
}

#[test]
fn duo_opposite_tangential_displacement_rotates_in_place() {
    let mut s = duo_world(2.0);
    s.agents[0].heading = -PI / 2.0;
    s.agents[1].heading = PI / 2.0;
    let m = 0.02;
    let next = run(&s, [ActionCommand::new(m, -PI / 2.0, false), ActionCommand::new(m, PI / 2.0, false)]);
    // Two-point closed form: rotation is the change in direction of the grip
    // baseline; centroid motion is zero.
    let g0 = Vec2::new(0.43, 0.5);
    let g1 = Vec2::new(0.57, 0.5);
    let d0 = Vec2::new(0.0, -m);
    let d1 = Vec2::new(0.0, m);
    let before = (g1 - g0).angle();
    let after = ((g1 + d1) - (g0 + d0)).angle();
    let params = PhysicsParams::default();
    let expected = (after - before) * params.duo_factor[2] * params.mass_factor(2.0);
    assert!((next.items[0].angle - expected).abs() < 1e-12, "{} vs {expected}", next.items[0].angle);
    assert!(next.items[0].position.distance(s.items[0].position) < 1e-12);
}

#[test]
fn rigid_fit_matches_two_point_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let p: Vec<Vec2> = (0..2).map(|_| Vec2::new(rng.random(), rng.random())).collect();
        let d: Vec<Vec2> = (0..2)
            .map(|_| Vec2::new(rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03)))
            .collect();
        let (rot, pivot, t) = rigid_fit(&p, &d);
        let oracle_rot = movingout::geometry::wrap_angle(((p[1] + d[1]) - (p[0] + d[0])).angle() - (p[1] - p[0]).angle());
        let oracle_t = ((p[0] + d[0]) + (p[1] + d[1])) * 0.5 - (p[0] + p[1]) * 0.5;
        assert!((rot - oracle_rot).abs() < 1e-12);
        assert!((t - oracle_t).length() < 1e-15);
        assert!((pivot - (p[0] + p[1]) * 0.5).length() < 1e-15);
    }
}

#[test]
fn solo_large_item_does_not_translate() {
    let r = 0.07;
    let s = world(
        [(0.5 - r - AGENT_RADIUS, 0.5, 0.0), (0.1, 0.1, 0.0)],
        vec![item(SizeClass::Large, ItemShape::Polygon { sides: 6 }, 0.5, 0.5, r, 2.0)],
    );
    let s = resolve_grasp(&s, 0, true, &PhysicsParams::default());
    assert_eq!(s.agents[0].hold, Some(0));
    let out = step(&s, &[ActionCommand::new(0.03, 0.0, false), idle(&s, 1)], &PhysicsParams::default()).unwrap();
    assert_eq!(out.state.items[0], s.items[0]);
    assert_eq!(out.state.agents[0].position, s.agents[0].position);
    assert!(out.events.contains(&Event::Blocked { item: 0 }));
}

#[test]
fn collision_report_examples() {
    let s = world([(0.3, 0.3, 0.0), (0.4, 0.3, 0.0)], vec![]);
    assert!(check_collisions(&s).is_empty());

    let s = world([(0.01, 0.5, 0.0), (0.5, 0.5, 0.0)], vec![]);
    let report = check_collisions(&s);
    assert_eq!(report.collisions.len(), 1);
    assert!((report.collisions[0].depth - 0.015).abs() < 1e-15);

    // Axis-aligned square of half-extent 0.05 has circumradius 0.05*sqrt(2).
    let sq = item(SizeClass::Large, ItemShape::Polygon { sides: 4 }, 0.04, 0.5, 0.05 * 2f64.sqrt(), 2.0);
    let s = world([(0.5, 0.5, 0.0), (0.8, 0.5, 0.0)], vec![sq]);
    let report = check_collisions(&s);
    assert_eq!(report.collisions.len(), 1);
    assert!(matches!(report.collisions[0].pair, BodyPair::ItemWall { item: 0, .. }));
    assert!((report.collisions[0].depth - 0.01).abs() < 1e-12);
}

#[test]
fn star_collides_through_convex_hull() {
    let hull = item_hull(ItemShape::Star { points: 5 }, 0.05, Vec2::new(0.5, 0.5), 0.0);
    let Hull::Polygon(v) = hull else { panic!("star hull should be a polygon") };
    assert_eq!(v.len(), 5);
    for p in &v {
        assert!((p.distance(Vec2::new(0.5, 0.5)) - 0.05).abs() < 1e-15);
    }
}

fn solo_carry_displacement(size: SizeClass, mass: f64) -> f64 {
    let r = match size {
        SizeClass::Small => 0.03,
        SizeClass::Medium => 0.048,
        SizeClass::Large => 0.07,
    };
    let s = world(
        [(0.5 - r - AGENT_RADIUS, 0.5, 0.0), (0.1, 0.1, 0.0)],
        vec![item(size, ItemShape::Circle, 0.5, 0.5, r, mass)],
    );
    let s = resolve_grasp(&s, 0, true, &PhysicsParams::default());
    let next = run(&s, [ActionCommand::new(0.03, 0.0, false), idle(&s, 1)]);
    next.items[0].position.distance(s.items[0].position)
}

#[test]
fn speed_monotone_in_size_and_mass() {
    let by_size: Vec<f64> = SizeClass::ALL.iter().map(|&c| solo_carry_displacement(c, 1.0)).collect();
    assert!(by_size[0] >= by_size[1] && by_size[1] >= by_size[2], "{by_size:?}");
    assert_eq!(by_size[2], 0.0);
    let masses = [0.5, 1.0, 1.5, 2.0, 3.0];
    let by_mass: Vec<f64> = masses.iter().map(|&m| solo_carry_displacement(SizeClass::Small, m)).collect();
    for w in by_mass.windows(2) {
        assert!(w[0] >= w[1], "{by_mass:?}");
    }
    // Duo speed also monotone in mass.
    let duo = |m: f64| {
        let s = duo_world(m);
        let next = run(&s, [ActionCommand::new(0.03, 0.0, false), ActionCommand::new(0.03, 0.0, false)]);
        next.items[0].position.distance(s.items[0].position)
    };
    assert!(duo(1.0) >= duo(2.0) && duo(2.0) >= duo(4.0));
}

#[test]
fn state_vector_round_trips() {
    let s = duo_world(1.5);
    let v = s.to_vector();
    assert_eq!(v.len(), state_width(1));
    let back = WorldState::from_vector(s.map.clone(), &v).unwrap();
    assert_eq!(back, s);
    assert!(matches!(
        WorldState::from_vector(s.map.clone(), &v[1..]),
        Err(Error::WidthMismatch { .. })
    ));
}

fn random_action(rng: &mut ChaCha8Rng) -> ActionCommand {
    ActionCommand::new(
        rng.random_range(-0.04..0.04),
        rng.random_range(-PI..PI),
        rng.random_bool(0.08),
    )
}

/// Rolls random actions and checks invariants after every step.
fn fuzz(map: MapSpec, seed: u64, steps: usize) -> Vec<Vec<f64>> {
    let params = PhysicsParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = WorldState::from_map(Arc::new(map));
    let mut trace = vec![s.to_vector()];
    for _ in 0..steps {
        let actions = [random_action(&mut rng), random_action(&mut rng)];
        let next = step(&s, &actions, &params).unwrap().state;
        assert!(within_arena(&next), "body left the arena");
        for a in 0..2 {
            assert!(next.attachments.iter().filter(|x| x.agent == a).count() <= 1);
            assert_eq!(next.agents[a].hold, next.attachment_of(a).map(|x| x.item));
        }
        for (i, it) in next.items.iter().enumerate() {
            assert!(next.holder_count(i) <= 2);
            let prior = &s.items[i];
            let moved = it.position != prior.position || it.angle != prior.angle;
            if !moved {
                continue;
            }
            // Only held items move, and never a large one with a single holder.
            let holders = next.holder_count(i);
            assert!(holders > 0, "unheld item {i} moved");
            if it.size == SizeClass::Large {
                assert_eq!(holders, 2, "solo large item {i} moved");
            }
        }
        assert!(check_collisions(&next).max_penetration() <= 1e-6, "penetration after step");
        trace.push(next.to_vector());
        s = next;
    }
    trace
}

#[test]
fn ten_thousand_step_fuzz_stays_contained_on_every_map() {
    for (k, map) in all_builtin_maps().into_iter().enumerate() {
        fuzz(map, 1000 + k as u64, 10_000);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn runs_are_bit_identical(map_id in 1u32..=12, seed in any::<u64>()) {
        let map = builtin_map(map_id).unwrap();
        let a = fuzz(map.clone(), seed, 300);
        let b = fuzz(map, seed, 300);
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits())));
    }

    #[test]
    fn grip_offsets_lie_on_item_boundary(
        x in 0.2f64..0.8, y in 0.2f64..0.8, angle in -PI..PI, gap in 0.0f64..0.05,
        dir in -PI..PI, sides in 3u8..7, star in any::<bool>(),
    ) {
        let r = 0.05;
        let shape = if star { ItemShape::Star { points: 5 } } else { ItemShape::Polygon { sides } };
        let mut it = item(SizeClass::Medium, shape, x, y, r, 1.5);
        it.angle = angle;
        let hull = it.hull();
        // Walk out from the center until the agent surface sits `gap` away.
        let u = Vec2::from_angle(dir);
        let mut t = r;
        while hull.signed_distance(it.position + u * t) < AGENT_RADIUS + gap {
            t += 1e-4;
        }
        let p = it.position + u * t;
        let s = world([(p.x, p.y, 0.0), (0.05, 0.05, 0.0)], vec![it]);
        let held = resolve_grasp(&s, 0, true, &PhysicsParams::default());
        prop_assert_eq!(held.agents[0].hold, Some(0));
        let att = held.attachments[0];
        let grip = held.items[0].position + att.grip_offset.rotate(held.items[0].angle);
        prop_assert!(held.items[0].hull().signed_distance(grip).abs() < 1e-6);
    }

    #[test]
    fn blocked_groups_keep_prior_pose(seed in any::<u64>()) {
        // Push a jointly held large item into the right wall.
        let r = 0.07;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = world(
            [(0.8 - r - AGENT_RADIUS, 0.5, 0.0), (0.8, 0.5 + r + AGENT_RADIUS, 0.0)],
            vec![item(SizeClass::Large, ItemShape::Polygon { sides: 4 }, 0.8, 0.5, r, 1.0)],
        );
        let params = PhysicsParams::default();
        s = resolve_grasp(&resolve_grasp(&s, 0, true, &params), 1, true, &params);
        for _ in 0..60 {
            let m = rng.random_range(0.0..0.03);
            let out = step(&s, &[ActionCommand::new(m, 0.0, false), ActionCommand::new(m, 0.0, false)], &params).unwrap();
            if out.events.contains(&Event::Blocked { item: 0 }) {
                prop_assert_eq!(&out.state.items[0], &s.items[0]);
                prop_assert_eq!(out.state.agents[0].position, s.agents[0].position);
            }
            prop_assert!(out.state.items[0].hull().signed_distance(Vec2::new(1.0, 0.5)) >= -1e-9);
            s = out.state;
        }
        prop_assert!(s.items[0].position.x < 1.0 - r / 2f64.sqrt() + 1e-9);
    }
}
