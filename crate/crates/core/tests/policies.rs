use std::sync::Arc;

use movingout::data_io::{dataset_from, split, Dataset, DatasetKind, SplitMode, Trajectory, TrajectoryHeader};
use movingout::env::{encode_observation, Env, EpisodeConfig, ObsMode, AGENT_BLOCK};
use movingout::fixtures::{item_spec, open_map};
use movingout::geometry::{Rect, Vec2};
use movingout::maps::{builtin_map, MapSpec, Pose};
use movingout::physics::{Event, ItemShape, SizeClass, WorldState};
use movingout::policies::*;
use movingout::rollout::{agent_rng, map_for_seed, run_episode, RolloutConfig};
use movingout::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scripted_episode(map_id: u32, seed: u64) -> (Arc<MapSpec>, movingout::env::Episode) {
    let map = Arc::new(map_for_seed(&builtin_map(map_id).unwrap(), seed).unwrap());
    let (a, b) = scripted_expert_pair(map.clone(), 0.0);
    let ep = run_episode(map.clone(), seed, [&a, &b], &RolloutConfig::default()).unwrap();
    (map, ep)
}

#[test]
fn greedy_heads_east_to_an_item_due_east() {
    let mut map = open_map(
        vec![Rect::new(0.8, 0.2, 1.0, 0.4)],
        vec![item_spec(SizeClass::Small, ItemShape::Circle, 0.03, 1.0, Vec2::new(0.5, 0.3))],
    );
    map.agent_spawns = [Pose { x: 0.2, y: 0.3, angle: 0.0 }, Pose { x: 0.9, y: 0.9, angle: 0.0 }];
    let map = Arc::new(map);
    let state = WorldState::from_map(map.clone());
    let expert = ScriptedExpert::new(map, Role::Greedy, 0.0);
    let a = Policy::act(&expert, &encode_observation(&state, 0, ObsMode::SingleMap), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(a.heading.x > 0.99, "heading {:?}", a.heading);
    assert!(a.move_distance > 0.0);
}

#[test]
fn zero_network_does_not_move() {
    let policy = BcPolicy::zeroed(43, 16);
    let a = policy.act(&[0.3; 43], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(a.move_distance, 0.0);
    assert!(!a.grasp);
    a.validate().unwrap();
}

#[test]
fn bc_rejects_wrong_width() {
    let policy = BcPolicy::zeroed(43, 16);
    let r = policy.act(&[0.0; 42], &mut ChaCha8Rng::seed_from_u64(0));
    assert!(matches!(r, Err(Error::LayoutMismatch { expected: 43, actual: 42 })));
}

#[test]
fn noiseless_expert_is_deterministic() {
    let map = Arc::new(builtin_map(3).unwrap());
    let (a, _) = scripted_expert_pair(map.clone(), 0.0);
    let obs = encode_observation(&WorldState::from_map(map), 0, ObsMode::SingleMap);
    let x = Policy::act(&a, &obs, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let y = Policy::act(&a, &obs, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(x, y);
}

#[test]
fn noisy_expert_is_deterministic_given_rng() {
    let map = Arc::new(builtin_map(4).unwrap());
    let (a, _) = scripted_expert_pair(map.clone(), 0.5);
    let obs = encode_observation(&WorldState::from_map(map), 0, ObsMode::SingleMap);
    let x = Policy::act(&a, &obs, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let y = Policy::act(&a, &obs, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(x, y);
}

#[test]
fn empty_map_ends_at_reset_and_experts_idle() {
    let map = Arc::new(open_map(vec![Rect::new(0.8, 0.8, 1.0, 1.0)], vec![]));
    let (env, obs) = Env::reset(EpisodeConfig {
        map: map.clone(),
        seed: 0,
        horizon: 300,
        obs_mode: ObsMode::SingleMap,
    })
    .unwrap();
    assert!(env.done().is_some());
    let (a, b) = scripted_expert_pair(map, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (p, o) in [(&a, &obs[0]), (&b, &obs[1])] {
        let act = Policy::act(p, o, &mut rng).unwrap();
        assert_eq!(act.move_distance, 0.0);
        assert!(!act.grasp);
    }
}

#[test]
fn map1_experts_hand_items_over() {
    let mut handoffs = 0;
    for seed in 0..5 {
        let (_, ep) = scripted_episode(1, seed);
        let mut last_holder = vec![None; ep.first().items.len()];
        let mut found = false;
        for e in ep.events.iter().flatten() {
            if let Event::Grasp { agent, item } = *e {
                if last_holder[item].is_some_and(|h| h != agent) {
                    found = true;
                }
                last_holder[item] = Some(agent);
            }
        }
        handoffs += found as usize;
    }
    assert!(handoffs >= 3, "only {handoffs} of 5 episodes contain a handoff");
}

#[test]
fn map10_large_item_moves_only_once_both_hold_it() {
    for seed in 0..20 {
        let (_, ep) = scripted_episode(10, seed);
        let start = ep.first().items[0].position;
        let moved = ep.states.iter().position(|s| s.items[0].position != start);
        let Some(t) = moved else { continue };
        assert_eq!(ep.states[t - 1].holder_count(0), 2, "seed {seed}: item moved at step {t}");
    }
}

#[test]
fn expert_pair_delivers_on_map3() {
    let (_, ep) = scripted_episode(3, 0);
    assert!(ep.last().all_delivered());
}

#[test]
fn mirrored_blocks_predict_own_action() {
    // With identical self and partner blocks the swapped view is the same
    // observation, so the predicted partner action equals our own.
    let map = Arc::new(builtin_map(3).unwrap());
    let mut state = WorldState::from_map(map.clone());
    state.agents[1] = state.agents[0].clone();
    let obs = encode_observation(&state, 0, ObsMode::SingleMap);
    assert_eq!(swap_blocks(&obs).unwrap(), obs);
    let (a, _) = scripted_expert_pair(map, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let own = Policy::act(&a, &obs, &mut rng).unwrap();
    assert_eq!(predict_partner_action(&a, &obs, &mut rng).unwrap(), own);
}

#[test]
fn partner_prediction_is_the_swapped_view_of_agent_j() {
    let map = Arc::new(builtin_map(2).unwrap());
    let state = WorldState::from_map(map.clone());
    let (a, _) = scripted_expert_pair(map, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let obs_i = encode_observation(&state, 0, ObsMode::SingleMap);
    let obs_j = encode_observation(&state, 1, ObsMode::SingleMap);
    assert_eq!(swap_blocks(&obs_i).unwrap(), obs_j);
    assert_eq!(
        predict_partner_action(&a, &obs_i, &mut rng).unwrap(),
        Policy::act(&a, &obs_j, &mut rng).unwrap()
    );
}

#[test]
fn predicted_partner_grasp_matches_recorded_grasp() {
    let (map, ep) = scripted_episode(3, 1);
    let (a, b) = scripted_expert_pair(map, 0.0);
    let policies: [&dyn Policy; 2] = [&a, &b];
    let mut agree = 0;
    let mut total = 0;
    for agent in 0..2 {
        let mut rng = agent_rng(1, agent);
        for (t, s) in ep.states[..ep.steps()].iter().enumerate() {
            let obs = encode_observation(s, agent, ObsMode::SingleMap);
            let predicted = predict_partner_action(policies[agent], &obs, &mut rng).unwrap();
            agree += (predicted.grasp == ep.actions[t][1 - agent].grasp) as usize;
            total += 1;
        }
    }
    let rate = agree as f64 / total as f64;
    assert!(rate >= 0.7, "grasp agreement {rate}");
}

#[test]
fn swap_rejects_short_observations() {
    assert!(matches!(swap_blocks(&[0.0; 7]), Err(Error::LayoutMismatch { .. })));
}

proptest! {
    #[test]
    fn swap_is_an_involution(obs in prop::collection::vec(-2.0f64..2.0, 2 * AGENT_BLOCK..60)) {
        let twice = swap_blocks(&swap_blocks(&obs).unwrap()).unwrap();
        prop_assert_eq!(twice, obs);
    }

    #[test]
    fn bc_actions_are_valid(obs in prop::collection::vec(-3.0f64..3.0, 43), seed in 0u64..4) {
        let cfg = BcConfig { hidden: 8, ..Default::default() };
        let pairs = vec![movingout::data_io::BcPair { episode: 0, t: 0, agent: 0, obs: obs.clone(), action: [0.01, 1.0, 0.0, 0.0] }];
        let cfg = BcConfig { train: movingout::nn::TrainConfig { epochs: 1, seed, ..cfg.train }, ..cfg };
        let (policy, _) = BcPolicy::train(&pairs, ObsMode::SingleMap, &cfg).unwrap();
        let a = policy.act(&obs, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        prop_assert!(a.validate().is_ok());
    }
}

fn map3_pairs(episodes: u64) -> (Vec<movingout::data_io::BcPair>, Vec<movingout::data_io::BcPair>) {
    let trajs: Vec<Trajectory> = (0..episodes)
        .map(|seed| {
            let (map, ep) = scripted_episode(3, seed);
            Trajectory::from_episode(&ep, TrajectoryHeader::new(&map, seed, "scripted", 300))
        })
        .collect();
    let attrs: Vec<_> = trajs.iter().map(|_| Vec::new()).collect();
    let (train, test) = split(&attrs, SplitMode::ByEpisode, 0.8, 0).unwrap();
    let pick = |idx: &[usize]| {
        let chosen: Vec<Trajectory> = idx.iter().map(|&i| trajs[i].clone()).collect();
        match dataset_from(&chosen, DatasetKind::BcPairs, ObsMode::SingleMap).unwrap() {
            Dataset::BcPairs(v) => v,
            Dataset::Transitions(_) => unreachable!(),
        }
    };
    (pick(&train), pick(&test))
}

fn small_config(seed: u64) -> BcConfig {
    let mut cfg = BcConfig { hidden: 64, ..Default::default() };
    cfg.train.epochs = 15;
    cfg.train.seed = seed;
    cfg
}

#[test]
fn bc_beats_constant_predictor_on_held_out_actions() {
    let (train, test) = map3_pairs(50);
    let (policy, _) = BcPolicy::train(&train, ObsMode::SingleMap, &small_config(0)).unwrap();
    let (_, y_train) = bc_matrices(&train, 1).unwrap();
    let (_, y_test) = bc_matrices(&test, 1).unwrap();
    // Move and heading targets only; the grasp column is a logit.
    let mean: Vec<f64> = (0..3).map(|c| (0..y_train.rows).map(|r| y_train.get(r, c)).sum::<f64>() / y_train.rows as f64).collect();
    let (mut model, mut constant) = (0.0, 0.0);
    for (r, p) in test.iter().enumerate() {
        let out = policy.raw(&p.obs).unwrap();
        for c in 0..3 {
            model += (out[c] - y_test.get(r, c)).powi(2);
            constant += (mean[c] - y_test.get(r, c)).powi(2);
        }
    }
    assert!(model < constant, "model {model} vs constant {constant}");
}

#[test]
fn bc_training_is_deterministic() {
    let (train, _) = map3_pairs(3);
    let cfg = BcConfig { hidden: 16, train: movingout::nn::TrainConfig { epochs: 2, ..Default::default() }, ..Default::default() };
    let (a, _) = BcPolicy::train(&train, ObsMode::SingleMap, &cfg).unwrap();
    let (b, _) = BcPolicy::train(&train, ObsMode::SingleMap, &cfg).unwrap();
    assert_eq!(a.to_model_file().to_bytes(), b.to_model_file().to_bytes());
}

#[test]
fn bc_on_nothing_is_an_empty_dataset() {
    let r = BcPolicy::train(&[], ObsMode::SingleMap, &BcConfig::default());
    assert!(matches!(r, Err(Error::EmptyDataset)));
}

#[test]
fn chunked_head_predicts_eight_actions() {
    let (train, _) = map3_pairs(3);
    let mut cfg = small_config(0);
    cfg.horizon = 8;
    cfg.hidden = 16;
    cfg.train.epochs = 1;
    let (policy, _) = BcPolicy::train(&train, ObsMode::SingleMap, &cfg).unwrap();
    assert_eq!(policy.horizon(), 8);
    assert_eq!(policy.raw(&train[0].obs).unwrap().len(), 32);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.mnn");
    policy.save(&path).unwrap();
    assert_eq!(BcPolicy::load(&path).unwrap().horizon(), 8);
}

#[test]
fn policy_spec_validation() {
    let mut spec = PolicySpec::scripted(Role::Greedy, 0.1);
    spec.validate().unwrap();
    spec.noise = -1.0;
    assert!(matches!(spec.validate(), Err(Error::PolicySpec(_))));
    let missing = PolicySpec::bc("/nonexistent/net.mnn".into());
    assert!(matches!(missing.validate(), Err(Error::PolicySpec(_))));
    assert!(PolicySpec::parse("scripted-helper", 0.0).is_ok());
    assert!(matches!(PolicySpec::parse("nope", 0.0), Err(Error::PolicySpec(_))));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    PolicySpec::scripted(Role::Helper, 0.2).save(&path).unwrap();
    assert_eq!(PolicySpec::load(&path).unwrap(), PolicySpec::scripted(Role::Helper, 0.2));
}
