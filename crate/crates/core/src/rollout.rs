//! Running whole episodes with a pair of policies, optionally with
//! candidate selection, and summarizing metrics across seeds.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bass::{select_action, Evaluator, LatentDynamics};
use crate::env::{encode_observation, Env, Episode, EpisodeConfig, ObsMode};
use crate::error::{Error, Result};
use crate::maps::{randomize, MapSpec};
use crate::metrics::{evaluate, AcDenominator, DistanceField, MetricsReport};
use crate::physics::{ActionCommand, WorldState};
use crate::policies::{Policy, PolicySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectMode {
    /// Execute the policy's action directly.
    #[default]
    Raw,
    /// Score candidates with the learned dynamics model.
    BassModel,
    /// Score candidates with the physics step.
    BassOracle,
}

#[derive(Clone)]
pub struct RolloutConfig {
    pub horizon: usize,
    pub obs_mode: ObsMode,
    pub mode: SelectMode,
    pub n_candidates: usize,
    pub model: Option<Arc<LatentDynamics>>,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            horizon: crate::env::DEFAULT_HORIZON,
            obs_mode: ObsMode::SingleMap,
            mode: SelectMode::Raw,
            n_candidates: 8,
            model: None,
        }
    }
}

/// Map instance used for `seed`: item attributes are re-sampled when the map
/// defines randomization ranges.
pub fn map_for_seed(map: &MapSpec, seed: u64) -> Result<MapSpec> {
    if map.has_randomization() {
        randomize(map, seed)
    } else {
        Ok(map.clone())
    }
}

/// Per-agent rng stream for an episode seed.
pub fn agent_rng(seed: u64, agent: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(agent as u64 + 1);
    rng
}

/// Chooses one agent's action each tick: the policy's own action, or the
/// best of a candidate set when selection is enabled.
pub struct Selector {
    mode: SelectMode,
    obs_mode: ObsMode,
    n_candidates: usize,
    model: Option<Arc<LatentDynamics>>,
    field: Option<DistanceField>,
}

impl Selector {
    pub fn new(map: &MapSpec, cfg: &RolloutConfig) -> Result<Selector> {
        if cfg.mode == SelectMode::BassModel && cfg.model.is_none() {
            return Err(Error::ModelFormat("bass-model selection needs a dynamics model".into()));
        }
        Ok(Selector {
            mode: cfg.mode,
            obs_mode: cfg.obs_mode,
            n_candidates: cfg.n_candidates,
            model: cfg.model.clone(),
            field: (cfg.mode != SelectMode::Raw).then(|| DistanceField::build(map)),
        })
    }

    pub fn act(&self, state: &WorldState, agent: usize, policy: &dyn Policy, rng: &mut ChaCha8Rng) -> Result<ActionCommand> {
        let evaluator = match (self.mode, &self.model) {
            (SelectMode::Raw, _) => return policy.act(&encode_observation(state, agent, self.obs_mode), rng),
            (SelectMode::BassModel, Some(m)) => Evaluator::Model(m),
            _ => Evaluator::Oracle,
        };
        let field = self.field.as_ref().expect("built for selection modes");
        Ok(select_action(state, agent, self.obs_mode, policy, evaluator, self.n_candidates, field, rng)?.0)
    }
}

/// Plays one episode on `map` (already instantiated for the seed).
pub fn run_episode(map: Arc<MapSpec>, seed: u64, policies: [&dyn Policy; 2], cfg: &RolloutConfig) -> Result<Episode> {
    let selector = Selector::new(&map, cfg)?;
    let config = EpisodeConfig {
        map,
        seed,
        horizon: cfg.horizon,
        obs_mode: cfg.obs_mode,
    };
    let (mut env, _) = Env::reset(config)?;
    let mut rngs = [agent_rng(seed, 0), agent_rng(seed, 1)];
    while env.done().is_none() {
        let mut actions = [ActionCommand::idle(0.0); 2];
        for a in 0..2 {
            actions[a] = selector.act(env.state(), a, policies[a], &mut rngs[a])?;
        }
        env.step(actions)?;
    }
    Ok(env.into_episode())
}

/// Metrics of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub map: u32,
    pub seed: u64,
    pub steps: usize,
    pub metrics: MetricsReport,
}

/// Runs `seeds` on a catalog map with a policy pair built per seed, in
/// parallel; results come back in seed order.
pub fn evaluate_map(
    map: &MapSpec,
    seeds: &[u64],
    specs: [&PolicySpec; 2],
    cfg: &RolloutConfig,
    denominator: AcDenominator,
) -> Result<Vec<SeedResult>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let inst = Arc::new(map_for_seed(map, seed)?);
            let a = specs[0].build(inst.clone())?;
            let b = specs[1].build(inst.clone())?;
            let ep = run_episode(inst.clone(), seed, [a.as_ref(), b.as_ref()], cfg)?;
            let field = DistanceField::build(&inst);
            Ok(SeedResult {
                map: map.id,
                seed,
                steps: ep.steps(),
                metrics: evaluate(&ep, &field, denominator)?,
            })
        })
        .collect()
}

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

pub fn mean_se(values: &[f64]) -> MeanSe {
    let n = values.len() as f64;
    if values.is_empty() {
        return MeanSe::default();
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return MeanSe { mean, se: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    MeanSe {
        mean,
        se: (var / n).sqrt(),
    }
}

/// Episode driven by uniformly random actions (grasp toggles are rare), for
/// determinism and round-trip checks.
pub fn fuzz_episode(map: Arc<MapSpec>, seed: u64, horizon: usize) -> Result<Episode> {
    let config = EpisodeConfig {
        map,
        seed,
        horizon,
        obs_mode: ObsMode::SingleMap,
    };
    let (mut env, _) = Env::reset(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_move = env.params.max_move();
    while env.done().is_none() {
        let actions = [0, 1].map(|_| {
            let m = rng.random_range(-max_move..=max_move);
            let h = rng.random_range(-PI..PI);
            ActionCommand::new(m, h, rng.random_bool(0.05))
        });
        env.step(actions)?;
    }
    Ok(env.into_episode())
}
