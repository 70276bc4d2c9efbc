//! Episode loop over the physics: ego-centric observations, action decoding,
//! horizons and event logging.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::maps::MapSpec;
use crate::physics::{self, ActionCommand, Event, PhysicsParams, WorldState};

pub const DEFAULT_HORIZON: usize = 300;
/// Step limit for live sessions (50 s at 10 Hz).
pub const LIVE_HORIZON: usize = 500;

/// Values per agent block in an observation.
pub const AGENT_BLOCK: usize = 5;
/// Values per item block in an observation.
pub const ITEM_BLOCK: usize = 11;
/// Wall slots in the multi-map geometry block (unused slots are zero).
pub const MAX_WALLS: usize = 8;
/// Goal slots in the multi-map geometry block.
pub const MAX_GOALS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObsMode {
    #[default]
    SingleMap,
    /// Appends wall and goal rectangles so one network can serve every map.
    MultiMap,
}

pub fn observation_width(items: usize, mode: ObsMode) -> usize {
    let base = 2 * AGENT_BLOCK + ITEM_BLOCK * items;
    match mode {
        ObsMode::SingleMap => base,
        ObsMode::MultiMap => base + 4 * (MAX_WALLS + MAX_GOALS),
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeConfig {
    pub map: Arc<MapSpec>,
    pub seed: u64,
    pub horizon: usize,
    pub obs_mode: ObsMode,
}

impl EpisodeConfig {
    pub fn new(map: MapSpec, seed: u64) -> Self {
        EpisodeConfig {
            map: Arc::new(map),
            seed,
            horizon: DEFAULT_HORIZON,
            obs_mode: ObsMode::SingleMap,
        }
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DoneReason {
    AllDelivered,
    Timeout,
}

/// Ego-centric observation of `agent`: self block, partner block, then items
/// in map order, optionally followed by the map geometry.
pub fn encode_observation(state: &WorldState, agent: usize, mode: ObsMode) -> Vec<f64> {
    let mut obs = Vec::with_capacity(observation_width(state.items.len(), mode));
    for a in [agent, 1 - agent] {
        let body = &state.agents[a];
        let (s, c) = body.heading.sin_cos();
        obs.extend([
            body.position.x,
            body.position.y,
            c,
            s,
            if body.hold.is_some() { 1.0 } else { 0.0 },
        ]);
    }
    for item in &state.items {
        let (s, c) = item.angle.sin_cos();
        obs.extend([item.position.x, item.position.y, c, s, item.footprint_radius]);
        let mut onehot = [0.0; 6];
        onehot[item.size.index()] = 1.0;
        onehot[3 + item.shape.one_hot_index()] = 1.0;
        obs.extend(onehot);
    }
    if mode == ObsMode::MultiMap {
        let rects = |list: &[crate::geometry::Rect], slots: usize, obs: &mut Vec<f64>| {
            for k in 0..slots {
                match list.get(k) {
                    Some(r) => obs.extend([r.x0, r.y0, r.x1, r.y1]),
                    None => obs.extend([0.0; 4]),
                }
            }
        };
        rects(&state.map.walls, MAX_WALLS, &mut obs);
        rects(&state.map.goal_regions, MAX_GOALS, &mut obs);
    }
    obs
}

/// `[move, cos, sin, grasp]`.
pub fn encode_action(action: &ActionCommand) -> [f64; 4] {
    action.to_array()
}

/// Parses `[move, cos, sin, grasp]`, normalizing the heading pair and
/// thresholding grasp at 0.5.
pub fn decode_action(v: &[f64]) -> Result<ActionCommand> {
    if v.len() != 4 {
        return Err(Error::Decode(format!("action vector has {} entries, expected 4", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Decode("action vector is not finite".into()));
    }
    let heading = Vec2::new(v[1], v[2]);
    let norm = heading.length();
    if norm < 1e-3 {
        return Err(Error::Decode(format!("heading pair norm {norm} is too small")));
    }
    Ok(ActionCommand {
        move_distance: v[0],
        heading: heading * (1.0 / norm),
        grasp: v[3] >= 0.5,
    })
}

/// Rebuilds the world state from both agents' observations and the map.
///
/// Angles come back through atan2 of their (cos, sin) pairs, so they match
/// the original to rounding rather than bit-for-bit. Attachments are
/// recovered from the hold flags by picking the closest item.
pub fn reconstruct_state(obs_i: &[f64], obs_j: &[f64], map: Arc<MapSpec>) -> Result<WorldState> {
    let mut state = WorldState::from_map(map);
    let k = state.items.len();
    for obs in [obs_i, obs_j] {
        if obs.len() < observation_width(k, ObsMode::SingleMap) {
            return Err(Error::LayoutMismatch {
                expected: observation_width(k, ObsMode::SingleMap),
                actual: obs.len(),
            });
        }
    }
    let blocks = [&obs_i[0..5], &obs_j[0..5]];
    for (a, b) in blocks.iter().enumerate() {
        state.agents[a].position = Vec2::new(b[0], b[1]);
        state.agents[a].heading = b[3].atan2(b[2]);
    }
    for (idx, item) in state.items.iter_mut().enumerate() {
        let b = &obs_i[10 + ITEM_BLOCK * idx..10 + ITEM_BLOCK * (idx + 1)];
        item.position = Vec2::new(b[0], b[1]);
        item.angle = b[3].atan2(b[2]);
    }
    for (a, b) in blocks.iter().enumerate() {
        if b[4] < 0.5 {
            continue;
        }
        let p = state.agents[a].position;
        let nearest = (0..k)
            .map(|i| (state.items[i].hull().signed_distance(p), i))
            .min_by(|x, y| x.0.total_cmp(&y.0))
            .ok_or_else(|| Error::Decode(format!("agent {a} holds an item but the map has none")))?;
        let item = &state.items[nearest.1];
        let grip = item.hull().closest_boundary_point(p);
        state.attachments.push(physics::Attachment {
            agent: a,
            item: nearest.1,
            grip_offset: (grip - item.position).rotate(-item.angle),
            anchor: (p - item.position).rotate(-item.angle),
        });
        state.agents[a].hold = Some(nearest.1);
    }
    state.attachments.sort_by_key(|x| (x.item, x.agent));
    Ok(state)
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: WorldState,
    pub observations: [Vec<f64>; 2],
    pub events: Vec<Event>,
    pub done: Option<DoneReason>,
}

/// Pure step: physics plus goal events and the termination rule. `t` is the
/// index of the state being stepped from.
pub fn env_step(
    state: &WorldState,
    t: usize,
    actions: &[ActionCommand; 2],
    config: &EpisodeConfig,
    params: &PhysicsParams,
) -> Result<Transition> {
    let out = physics::step(state, actions, params)?;
    let mut events = out.events;
    for i in 0..state.items.len() {
        match (state.item_delivered(i), out.state.item_delivered(i)) {
            (false, true) => events.push(Event::EnteredGoal { item: i }),
            (true, false) => events.push(Event::LeftGoal { item: i }),
            _ => {}
        }
    }
    let done = termination(&out.state, t + 1, config.horizon);
    if done == Some(DoneReason::Timeout) {
        events.push(Event::Timeout);
    }
    let observations = [0, 1].map(|a| encode_observation(&out.state, a, config.obs_mode));
    Ok(Transition {
        state: out.state,
        observations,
        events,
        done,
    })
}

pub fn termination(state: &WorldState, t: usize, horizon: usize) -> Option<DoneReason> {
    if state.all_delivered() {
        Some(DoneReason::AllDelivered)
    } else if t >= horizon {
        Some(DoneReason::Timeout)
    } else {
        None
    }
}

/// Recorded episode: `states` has one more entry than `actions`.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub states: Vec<WorldState>,
    pub actions: Vec<[ActionCommand; 2]>,
    pub events: Vec<Vec<Event>>,
    pub dt: f64,
}

impl Episode {
    pub fn steps(&self) -> usize {
        self.actions.len()
    }

    pub fn first(&self) -> &WorldState {
        &self.states[0]
    }

    pub fn last(&self) -> &WorldState {
        self.states.last().expect("episode has an initial state")
    }
}

/// A running episode that records its own history.
#[derive(Debug, Clone)]
pub struct Env {
    pub config: EpisodeConfig,
    pub params: PhysicsParams,
    episode: Episode,
    done: Option<DoneReason>,
}

impl Env {
    /// Starts an episode; returns the env and both agents' observations.
    pub fn reset(config: EpisodeConfig) -> Result<(Env, [Vec<f64>; 2])> {
        config.map.validate()?;
        if config.horizon == 0 {
            return Err(Error::MapValidation("episode horizon must be positive".into()));
        }
        let params = PhysicsParams::default();
        let state = WorldState::from_map(config.map.clone());
        let observations = [0, 1].map(|a| encode_observation(&state, a, config.obs_mode));
        let done = state.all_delivered().then_some(DoneReason::AllDelivered);
        let env = Env {
            episode: Episode {
                states: vec![state],
                actions: Vec::new(),
                events: Vec::new(),
                dt: params.dt,
            },
            config,
            params,
            done,
        };
        Ok((env, observations))
    }

    pub fn state(&self) -> &WorldState {
        self.episode.last()
    }

    pub fn t(&self) -> usize {
        self.episode.steps()
    }

    pub fn done(&self) -> Option<DoneReason> {
        self.done
    }

    pub fn observation(&self, agent: usize) -> Vec<f64> {
        encode_observation(self.state(), agent, self.config.obs_mode)
    }

    pub fn step(&mut self, actions: [ActionCommand; 2]) -> Result<Transition> {
        if let Some(reason) = self.done {
            return Err(Error::InvalidAction(format!("episode already finished ({reason:?})")));
        }
        let tr = env_step(self.state(), self.t(), &actions, &self.config, &self.params)?;
        self.episode.states.push(tr.state.clone());
        self.episode.actions.push(actions);
        self.episode.events.push(tr.events.clone());
        self.done = tr.done;
        Ok(tr)
    }

    pub fn episode(&self) -> &Episode {
        &self.episode
    }

    pub fn into_episode(self) -> Episode {
        self.episode
    }
}
