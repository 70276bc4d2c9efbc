use movingout::data_io::replay;
use movingout::metrics::{evaluate, AcDenominator, DistanceField};
use movingout_server::protocol::{Hello, HumanAction, MapRef};
use movingout_server::session::{Session, SessionError, Tick};

fn hello(map: u32, role: &str, seed: u64) -> Hello {
    Hello {
        map: MapRef::Id(map),
        role: role.into(),
        policy: "scripted-helper".into(),
        mode: Default::default(),
        seed,
        noise: 0.0,
        model: None,
    }
}

fn east(grasp: bool) -> HumanAction {
    HumanAction { move_distance: 0.03, cos: 1.0, sin: 0.0, grasp }
}

#[test]
fn open_returns_first_snapshot_with_geometry() {
    let (s, first) = Session::open(7, &hello(4, "i", 0), 500).unwrap();
    assert_eq!(s.id, 7);
    assert_eq!(first.t, 0);
    assert_eq!(first.session, Some(7));
    assert_eq!(first.human, Some(0));
    assert!(first.walls.is_some() && first.goals.is_some());
    assert_eq!(first.agents.len(), 2);
}

#[test]
fn bad_requests() {
    let mut h = hello(4, "i", 0);
    h.policy = "/nonexistent/policy.json".into();
    assert!(matches!(Session::open(1, &h, 500), Err(SessionError::BadRequest(_))));
    assert!(matches!(Session::open(1, &hello(99, "i", 0), 500), Err(SessionError::BadRequest(_))));
    assert!(matches!(Session::open(1, &hello(4, "k", 0), 500), Err(SessionError::BadRequest(_))));
    let mut h = hello(4, "i", 0);
    h.mode = movingout::rollout::SelectMode::BassModel;
    assert!(matches!(Session::open(1, &h, 500), Err(SessionError::BadRequest(_))));
}

#[test]
fn same_seed_sessions_start_identically() {
    let (_, a) = Session::open(1, &hello(6, "j", 3), 500).unwrap();
    let (_, b) = Session::open(2, &hello(6, "j", 3), 500).unwrap();
    assert_eq!(a.agents, b.agents);
    assert_eq!(a.items, b.items);
}

#[test]
fn without_input_the_human_agent_stays() {
    let (mut s, first) = Session::open(1, &hello(2, "i", 0), 500).unwrap();
    let mut last = first;
    for _ in 0..10 {
        let Tick::State(snap) = s.tick().unwrap() else { panic!("ended early") };
        last = snap;
    }
    assert_eq!(last.t, 10);
    assert_eq!((last.agents[0].x, last.agents[0].y), (s.trajectory().states[0][0], s.trajectory().states[0][1]));
}

#[test]
fn only_the_latest_action_is_consumed() {
    let (mut s, first) = Session::open(1, &hello(2, "j", 0), 500).unwrap();
    s.latch(HumanAction { move_distance: 0.03, cos: 0.0, sin: 1.0, grasp: false }).unwrap();
    s.latch(HumanAction { move_distance: 0.0, cos: 1.0, sin: 0.0, grasp: false }).unwrap();
    s.tick().unwrap();
    let traj = s.trajectory();
    assert_eq!(traj.actions[0][1], [0.0, 1.0, 0.0, 0.0]);
    // consumed, so the next tick falls back to a zero move
    s.tick().unwrap();
    assert_eq!(s.trajectory().actions[1][1][0], 0.0);
    assert_eq!(first.human, Some(1));
}

#[test]
fn invalid_actions_are_rejected() {
    let (mut s, _) = Session::open(1, &hello(2, "i", 0), 500).unwrap();
    let r = s.latch(HumanAction { move_distance: 0.03, cos: 0.5, sin: 0.5, grasp: false });
    assert!(matches!(r, Err(SessionError::BadRequest(_))));
}

#[test]
fn timeout_ends_with_metrics_that_replay_offline() {
    let (mut s, _) = Session::open(1, &hello(1, "i", 2), 500).unwrap();
    let mut end = None;
    for k in 0..500 {
        if k % 3 == 0 {
            s.latch(east(k % 50 == 0)).unwrap();
        }
        match s.tick().unwrap() {
            Tick::State(_) => assert!(k < 499),
            Tick::End(snap, e) => {
                assert_eq!(snap.t, k + 1);
                end = Some(e);
                break;
            }
        }
    }
    let end = end.expect("session ended");
    let traj = s.trajectory();
    if end.reason == "timeout" {
        assert_eq!(end.steps, 500);
    }
    replay(&traj).unwrap();
    let ep = traj.to_episode().unwrap();
    let offline = evaluate(&ep, &DistanceField::build(&traj.header.map), AcDenominator::Joint).unwrap();
    assert_eq!(offline, end.metrics);
}
