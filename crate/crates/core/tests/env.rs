use std::f64::consts::PI;
use std::sync::Arc;

use movingout::env::*;
use movingout::geometry::Rect;
use movingout::maps::{all_builtin_maps, builtin_map};
use movingout::physics::{ActionCommand, Event, WorldState, AGENT_RADIUS};
use movingout::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn map6_observation_width() {
    let (_, obs) = Env::reset(EpisodeConfig::new(builtin_map(6).unwrap(), 0)).unwrap();
    assert_eq!(obs[0].len(), 54);
    assert_eq!(obs[1].len(), 54);
    assert_eq!(observation_width(4, ObsMode::SingleMap), 54);
}

#[test]
fn partner_blocks_mirror_self_blocks() {
    for map in all_builtin_maps() {
        let (_, obs) = Env::reset(EpisodeConfig::new(map, 3)).unwrap();
        assert_eq!(obs[0][0..5], obs[1][5..10]);
        assert_eq!(obs[1][0..5], obs[0][5..10]);
        assert_eq!(obs[0][10..], obs[1][10..]);
    }
}

#[test]
fn reset_is_deterministic() {
    let a = Env::reset(EpisodeConfig::new(builtin_map(9).unwrap(), 11)).unwrap().1;
    let b = Env::reset(EpisodeConfig::new(builtin_map(9).unwrap(), 11)).unwrap().1;
    assert_eq!(a, b);
}

#[test]
fn multi_map_mode_appends_geometry() {
    let mut cfg = EpisodeConfig::new(builtin_map(3).unwrap(), 0);
    cfg.obs_mode = ObsMode::MultiMap;
    let (_, obs) = Env::reset(cfg).unwrap();
    assert_eq!(obs[0].len(), observation_width(4, ObsMode::MultiMap));
    assert_eq!(obs[0][54..58], [0.25, 0.25, 0.42, 0.29]);
}

#[test]
fn delivered_at_reset_is_done() {
    let mut map = builtin_map(4).unwrap();
    map.goal_regions = vec![Rect::new(0.0, 0.0, 1.0, 1.0)];
    let (env, _) = Env::reset(EpisodeConfig::new(map, 0)).unwrap();
    assert_eq!(env.done(), Some(DoneReason::AllDelivered));
}

#[test]
fn grasp_next_to_item_logs_one_grasp() {
    let mut map = builtin_map(4).unwrap();
    let item = map.items[0].spawn;
    let r = map.items[0].footprint_radius;
    map.agent_spawns[0].x = item.x - r - AGENT_RADIUS - 0.005;
    map.agent_spawns[0].y = item.y;
    let (mut env, _) = Env::reset(EpisodeConfig::new(map, 0)).unwrap();
    let h1 = env.state().agents[1].heading;
    let tr = env.step([ActionCommand::new(0.0, 0.0, true), ActionCommand::idle(h1)]).unwrap();
    let grasps = tr.events.iter().filter(|e| matches!(e, Event::Grasp { .. })).count();
    assert_eq!(grasps, 1);
    assert_eq!(tr.observations[0][4], 1.0);
    assert_eq!(tr.observations[1][9], 1.0);
}

#[test]
fn horizon_ends_with_timeout() {
    let cfg = EpisodeConfig::new(builtin_map(2).unwrap(), 0).with_horizon(5);
    let (mut env, _) = Env::reset(cfg).unwrap();
    let mut last = None;
    for _ in 0..5 {
        let idle = [0, 1].map(|a| ActionCommand::idle(env.state().agents[a].heading));
        let tr = env.step(idle).unwrap();
        last = Some(tr);
    }
    let tr = last.unwrap();
    assert_eq!(tr.done, Some(DoneReason::Timeout));
    assert!(tr.events.contains(&Event::Timeout));
    assert!(env.step([ActionCommand::idle(0.0); 2]).is_err());
    assert_eq!(env.episode().steps(), 5);
    assert_eq!(env.episode().states.len(), 6);
}

#[test]
fn heading_encoding_and_decode_errors() {
    let a = ActionCommand::new(0.01, PI / 2.0, false);
    let v = encode_action(&a);
    assert!(v[1].abs() < 1e-15 && (v[2] - 1.0).abs() < 1e-15);
    assert!(matches!(decode_action(&[0.01, 0.0, 0.0, 1.0]), Err(Error::Decode(_))));
    assert!(matches!(decode_action(&[0.01, 1.0]), Err(Error::Decode(_))));
    let d = decode_action(&[0.0, 2.0, 0.0, 0.7]).unwrap();
    assert_eq!(d.heading.x, 1.0);
    assert!(d.grasp);
}

#[test]
fn decode_inverts_encode() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let a = ActionCommand::new(rng.random_range(-0.03..0.03), rng.random_range(-PI..PI), rng.random_bool(0.5));
        let b = decode_action(&encode_action(&a)).unwrap();
        assert!((a.move_distance - b.move_distance).abs() <= 1e-9);
        assert!((a.heading - b.heading).length() <= 1e-9);
        assert_eq!(a.grasp, b.grasp);
    }
}

fn states_close(a: &WorldState, b: &WorldState) -> bool {
    let (va, vb) = (a.to_vector(), b.to_vector());
    va.len() == vb.len() && va.iter().zip(&vb).all(|(x, y)| (x - y).abs() <= 1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn observations_jointly_determine_state(map_id in 1u32..=12, seed in any::<u64>()) {
        let map = Arc::new(builtin_map(map_id).unwrap());
        let cfg = EpisodeConfig { map: map.clone(), seed, horizon: 200, obs_mode: ObsMode::SingleMap };
        let (mut env, mut obs) = Env::reset(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while env.done().is_none() {
            let back = reconstruct_state(&obs[0], &obs[1], map.clone()).unwrap();
            prop_assert!(states_close(&back, env.state()), "t={}", env.t());
            for o in &obs {
                for k in [2usize, 7] {
                    prop_assert!((o[k].hypot(o[k + 1]) - 1.0).abs() < 1e-6);
                }
            }
            let acts = [0, 1].map(|_| ActionCommand::new(
                rng.random_range(-0.03..0.03), rng.random_range(-PI..PI), rng.random_bool(0.1)));
            obs = env.step(acts).unwrap().observations;
        }
    }

    #[test]
    fn episodes_are_deterministic(map_id in 1u32..=12, seed in any::<u64>()) {
        let play = || {
            let (mut env, _) = Env::reset(EpisodeConfig::new(builtin_map(map_id).unwrap(), seed).with_horizon(120)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            while env.done().is_none() {
                let acts = [0, 1].map(|_| ActionCommand::new(
                    rng.random_range(-0.03..0.03), rng.random_range(-PI..PI), rng.random_bool(0.1)));
                env.step(acts).unwrap();
            }
            env.into_episode()
        };
        prop_assert_eq!(play(), play());
    }
}
