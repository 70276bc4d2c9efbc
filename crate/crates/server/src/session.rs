//! One live episode: a human-driven agent, a policy-driven agent and the
//! latched human input.

use std::path::Path;
use std::sync::Arc;

use movingout::bass::LatentDynamics;
use movingout::data_io::{Trajectory, TrajectoryHeader};
use movingout::env::{DoneReason, Env, EpisodeConfig};
use movingout::maps::{builtin_map, load_map};
use movingout::metrics::{evaluate, AcDenominator, DistanceField};
use movingout::physics::ActionCommand;
use movingout::policies::{Policy, PolicySpec};
use movingout::rollout::{agent_rng, map_for_seed, RolloutConfig, SelectMode, Selector};
use rand_chacha::ChaCha8Rng;

use crate::protocol::{EndMsg, Hello, HumanAction, MapRef, StateMsg};

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Sim(#[from] movingout::Error),
}

/// Result of advancing a session by one tick.
#[derive(Debug, Clone)]
pub enum Tick {
    State(StateMsg),
    /// The final snapshot plus the end-of-session report.
    End(StateMsg, EndMsg),
}

pub struct Session {
    pub id: u64,
    env: Env,
    human: usize,
    policy: Arc<dyn Policy>,
    selector: Selector,
    rng: ChaCha8Rng,
    latched: Option<ActionCommand>,
    field: DistanceField,
    header: TrajectoryHeader,
    pub overruns: usize,
}

fn parse_role(role: &str) -> Result<usize, SessionError> {
    match role {
        "i" | "agent-i" | "0" => Ok(0),
        "j" | "agent-j" | "1" => Ok(1),
        other => Err(SessionError::BadRequest(format!("unknown role {other:?}"))),
    }
}

impl Session {
    /// Validates the request and builds the episode; returns the session and
    /// the first snapshot (with walls and goals).
    pub fn open(id: u64, hello: &Hello, horizon: usize) -> Result<(Session, StateMsg), SessionError> {
        let bad = |e: movingout::Error| SessionError::BadRequest(e.to_string());
        let human = parse_role(&hello.role)?;
        let base = match &hello.map {
            MapRef::Id(id) => builtin_map(*id),
            MapRef::Name(s) => load_map(s),
        }
        .map_err(bad)?;
        let map = Arc::new(map_for_seed(&base, hello.seed).map_err(bad)?);
        let spec = PolicySpec::parse(&hello.policy, hello.noise).map_err(bad)?;
        let policy = spec.build(map.clone()).map_err(bad)?;
        let model = match (&hello.model, hello.mode) {
            (Some(p), _) => Some(Arc::new(LatentDynamics::load(Path::new(p)).map_err(bad)?)),
            (None, SelectMode::BassModel) => {
                return Err(SessionError::BadRequest("bass-model needs a model file".into()))
            }
            (None, _) => None,
        };
        let cfg = RolloutConfig {
            horizon,
            obs_mode: policy.obs_mode(),
            mode: hello.mode,
            model,
            ..Default::default()
        };
        let selector = Selector::new(&map, &cfg).map_err(bad)?;
        let (env, _) = Env::reset(EpisodeConfig {
            map: map.clone(),
            seed: hello.seed,
            horizon,
            obs_mode: cfg.obs_mode,
        })
        .map_err(bad)?;
        let label = if human == 0 {
            format!("human+{}", spec.label())
        } else {
            format!("{}+human", spec.label())
        };
        let session = Session {
            id,
            human,
            policy,
            selector,
            rng: agent_rng(hello.seed, 1 - human),
            latched: None,
            field: DistanceField::build(&map),
            header: TrajectoryHeader::new(&map, hello.seed, label, horizon),
            overruns: 0,
            env,
        };
        let mut first = StateMsg::snapshot(session.env.state(), 0);
        first.walls = Some(map.walls.clone());
        first.goals = Some(map.goal_regions.clone());
        first.session = Some(id);
        first.human = Some(human);
        Ok((session, first))
    }

    pub fn human(&self) -> usize {
        self.human
    }

    pub fn t(&self) -> usize {
        self.env.t()
    }

    /// Replaces the latched action; only the latest one before a tick counts.
    pub fn latch(&mut self, action: HumanAction) -> Result<(), SessionError> {
        let cmd = action.to_command();
        cmd.validate().map_err(|e| SessionError::BadRequest(e.to_string()))?;
        self.latched = Some(cmd);
        Ok(())
    }

    /// Consumes the latched action (zero move when none arrived), queries the
    /// policy and advances one step.
    pub fn tick(&mut self) -> Result<Tick, SessionError> {
        let state = self.env.state();
        let own = self
            .latched
            .take()
            .unwrap_or_else(|| ActionCommand::idle(state.agents[self.human].heading));
        let other = 1 - self.human;
        let theirs = self.selector.act(state, other, self.policy.as_ref(), &mut self.rng)?;
        let mut actions = [own, theirs];
        if self.human == 1 {
            actions.swap(0, 1);
        }
        let tr = self.env.step(actions)?;
        let snap = StateMsg::snapshot(&tr.state, self.env.t());
        Ok(match tr.done {
            None => Tick::State(snap),
            Some(reason) => Tick::End(snap, self.end_message(reason, None)?),
        })
    }

    pub fn end_message(&self, reason: DoneReason, log: Option<String>) -> Result<EndMsg, SessionError> {
        Ok(EndMsg {
            metrics: evaluate(self.env.episode(), &self.field, AcDenominator::default())?,
            reason: match reason {
                DoneReason::AllDelivered => "all-delivered".into(),
                DoneReason::Timeout => "timeout".into(),
            },
            steps: self.env.t(),
            overruns: self.overruns,
            log,
        })
    }

    /// The session so far as a stored trajectory.
    pub fn trajectory(&self) -> Trajectory {
        Trajectory::from_episode(self.env.episode(), self.header.clone())
    }
}
