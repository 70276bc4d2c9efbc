//! Action producers: scripted experts, the behavior-cloned MLP and the
//! partner action predictor.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::BcPair;
use crate::env::{observation_width, ObsMode, AGENT_BLOCK};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::maps::MapSpec;
use crate::nn::{sigmoid, Activation, DenseNet, Loss, Matrix, ModelFile, Section, TrainConfig};
use crate::physics::{ActionCommand, PhysicsParams};
pub use crate::scripted::{Role, ScriptedExpert};

pub const POLICY_SCHEMA: &str = "movingout-policy/1";

/// Anything that maps an ego observation to an action.
pub trait Policy: Send + Sync {
    fn act(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> Result<ActionCommand>;

    /// Observation layout the policy reads.
    fn obs_mode(&self) -> ObsMode {
        ObsMode::SingleMap
    }
}

impl Policy for ScriptedExpert {
    fn act(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> Result<ActionCommand> {
        ScriptedExpert::act(self, obs, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    ScriptedGreedy,
    ScriptedHelper,
    BcMlp,
}

/// Policy spec file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub schema: String,
    pub kind: PolicyKind,
    /// Heading noise (radians) for scripted policies.
    #[serde(default)]
    pub noise: f64,
    /// Model file for bc-mlp; relative paths resolve against the spec file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net: Option<PathBuf>,
}

impl PolicySpec {
    pub fn scripted(role: Role, noise: f64) -> PolicySpec {
        PolicySpec {
            schema: POLICY_SCHEMA.into(),
            kind: match role {
                Role::Greedy => PolicyKind::ScriptedGreedy,
                Role::Helper => PolicyKind::ScriptedHelper,
            },
            noise,
            net: None,
        }
    }

    pub fn bc(net: PathBuf) -> PolicySpec {
        PolicySpec {
            schema: POLICY_SCHEMA.into(),
            kind: PolicyKind::BcMlp,
            noise: 0.0,
            net: Some(net),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != POLICY_SCHEMA {
            return Err(Error::SchemaVersion {
                expected: POLICY_SCHEMA.into(),
                found: self.schema.clone(),
            });
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::PolicySpec(format!("noise scale {} must be finite and >= 0", self.noise)));
        }
        if self.kind == PolicyKind::BcMlp {
            match &self.net {
                None => return Err(Error::PolicySpec("bc-mlp needs a net file".into())),
                Some(p) if !p.exists() => {
                    return Err(Error::PolicySpec(format!("net file {} does not exist", p.display())))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Reads and validates a spec file.
    pub fn load(path: &Path) -> Result<PolicySpec> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: PolicySpec =
            serde_json::from_str(&text).map_err(|e| Error::PolicySpec(format!("{}: {e}", path.display())))?;
        if let Some(net) = &spec.net {
            if net.is_relative() {
                spec.net = Some(path.parent().unwrap_or(Path::new(".")).join(net));
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("policy spec serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Parses either a spec file path or a bare kind name such as
    /// `scripted-greedy`.
    pub fn parse(arg: &str, noise: f64) -> Result<PolicySpec> {
        match arg {
            "scripted-greedy" => Ok(PolicySpec::scripted(Role::Greedy, noise)),
            "scripted-helper" => Ok(PolicySpec::scripted(Role::Helper, noise)),
            path => {
                let p = Path::new(path);
                if p.extension().is_some_and(|e| e == "json") {
                    PolicySpec::load(p)
                } else if p.exists() {
                    let spec = PolicySpec::bc(p.to_path_buf());
                    spec.validate()?;
                    Ok(spec)
                } else {
                    Err(Error::PolicySpec(format!("unknown policy {path:?}")))
                }
            }
        }
    }

    /// Instantiates the policy for `map`.
    pub fn build(&self, map: Arc<MapSpec>) -> Result<Arc<dyn Policy>> {
        self.validate()?;
        Ok(match self.kind {
            PolicyKind::ScriptedGreedy => Arc::new(ScriptedExpert::new(map, Role::Greedy, self.noise)),
            PolicyKind::ScriptedHelper => Arc::new(ScriptedExpert::new(map, Role::Helper, self.noise)),
            PolicyKind::BcMlp => {
                let path = self.net.as_ref().expect("validated above");
                Arc::new(BcPolicy::load(path)?)
            }
        })
    }

    pub fn label(&self) -> String {
        serde_json::to_value(self.kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default()
    }
}

/// The coordinated expert pair: a greedy agent and a helper.
pub fn scripted_expert_pair(map: Arc<MapSpec>, noise: f64) -> (ScriptedExpert, ScriptedExpert) {
    (
        ScriptedExpert::new(map.clone(), Role::Greedy, noise),
        ScriptedExpert::new(map, Role::Helper, noise),
    )
}

/// Exchanges the self and partner blocks (poses and hold flags).
pub fn swap_blocks(obs: &[f64]) -> Result<Vec<f64>> {
    if obs.len() < 2 * AGENT_BLOCK {
        return Err(Error::LayoutMismatch {
            expected: 2 * AGENT_BLOCK,
            actual: obs.len(),
        });
    }
    let mut out = obs.to_vec();
    out[..AGENT_BLOCK].copy_from_slice(&obs[AGENT_BLOCK..2 * AGENT_BLOCK]);
    out[AGENT_BLOCK..2 * AGENT_BLOCK].copy_from_slice(&obs[..AGENT_BLOCK]);
    Ok(out)
}

/// The partner's likely action: our own policy run from its point of view.
pub fn predict_partner_action(policy: &dyn Policy, obs: &[f64], rng: &mut ChaCha8Rng) -> Result<ActionCommand> {
    policy.act(&swap_blocks(obs)?, rng)
}

/// Network targets per action: `[move / max_move, cos, sin, grasp]`.
const ACTION_TARGETS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BcMeta {
    obs_width: usize,
    obs_mode: ObsMode,
    /// Actions predicted per call; only the first is executed.
    horizon: usize,
    hidden: usize,
}

/// Behavior-cloned MLP policy.
#[derive(Debug, Clone)]
pub struct BcPolicy {
    net: DenseNet,
    meta: BcMeta,
    max_move: f64,
}

#[derive(Debug, Clone)]
pub struct BcConfig {
    pub hidden: usize,
    /// Actions predicted per step (1, or 8 for the chunked head).
    pub horizon: usize,
    pub train: TrainConfig,
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig {
            hidden: 256,
            horizon: 1,
            train: TrainConfig {
                epochs: 30,
                batch_size: 256,
                lr: 1e-3,
                seed: 0,
            },
        }
    }
}

fn action_target(a: &[f64; 4], max_move: f64) -> [f64; 4] {
    [a[0] / max_move, a[1], a[2], a[3]]
}

/// Stacks `(obs, target)` rows for BC, appending the next `horizon - 1`
/// actions of the same agent (repeating the last one at episode end).
pub fn bc_matrices(pairs: &[BcPair], horizon: usize) -> Result<(Matrix, Matrix)> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let max_move = PhysicsParams::default().max_move();
    let mut xs = Vec::with_capacity(pairs.len());
    let mut ys = Vec::with_capacity(pairs.len());
    for (k, p) in pairs.iter().enumerate() {
        xs.push(p.obs.clone());
        let mut row = Vec::with_capacity(horizon * ACTION_TARGETS);
        let mut last = p.action;
        for h in 0..horizon {
            // Pairs are ordered (file, t, agent): the same agent recurs every 2 rows.
            if h > 0 {
                if let Some(q) = pairs.get(k + 2 * h) {
                    if q.episode == p.episode && q.agent == p.agent && q.t == p.t + h {
                        last = q.action;
                    }
                }
            }
            row.extend(action_target(&last, max_move));
        }
        ys.push(row);
    }
    Ok((Matrix::from_rows(&xs)?, Matrix::from_rows(&ys)?))
}

impl BcPolicy {
    /// Trains on (observation, action) pairs.
    pub fn train(pairs: &[BcPair], obs_mode: ObsMode, cfg: &BcConfig) -> Result<(BcPolicy, Vec<f64>)> {
        let horizon = cfg.horizon.max(1);
        let (x, y) = bc_matrices(pairs, horizon)?;
        let out = ACTION_TARGETS * horizon;
        let mut net = DenseNet::mlp(&[x.cols, cfg.hidden, cfg.hidden, out], Activation::Tanh, cfg.train.seed);
        let loss = Loss::Composite {
            logit_columns: (0..horizon).map(|h| h * ACTION_TARGETS + 3).collect(),
        };
        let curve = crate::nn::train(&mut net, &x, &y, &loss, &cfg.train)?;
        let meta = BcMeta {
            obs_width: x.cols,
            obs_mode,
            horizon,
            hidden: cfg.hidden,
        };
        Ok((BcPolicy::from_parts(net, meta), curve))
    }

    fn from_parts(net: DenseNet, meta: BcMeta) -> BcPolicy {
        BcPolicy {
            net,
            meta,
            max_move: PhysicsParams::default().max_move(),
        }
    }

    /// A policy whose network weights are all zero.
    pub fn zeroed(obs_width: usize, hidden: usize) -> BcPolicy {
        let mut net = DenseNet::mlp(&[obs_width, hidden, hidden, ACTION_TARGETS], Activation::Tanh, 0);
        for layer in &mut net.layers {
            layer.weights.scale(0.0);
            layer.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        BcPolicy::from_parts(
            net,
            BcMeta {
                obs_width,
                obs_mode: ObsMode::SingleMap,
                horizon: 1,
                hidden,
            },
        )
    }

    pub fn obs_width(&self) -> usize {
        self.meta.obs_width
    }

    pub fn obs_mode(&self) -> ObsMode {
        self.meta.obs_mode
    }

    pub fn horizon(&self) -> usize {
        self.meta.horizon
    }

    /// Whether this policy accepts observations of a map with `items` items.
    pub fn fits(&self, items: usize) -> bool {
        observation_width(items, self.meta.obs_mode) == self.meta.obs_width
    }

    /// Raw network output for one observation.
    pub fn raw(&self, obs: &[f64]) -> Result<Vec<f64>> {
        if obs.len() != self.meta.obs_width {
            return Err(Error::LayoutMismatch {
                expected: self.meta.obs_width,
                actual: obs.len(),
            });
        }
        self.net.predict(obs)
    }

    pub fn to_model_file(&self) -> ModelFile {
        let mut file = ModelFile::default();
        file.push("policy", Section::Net(self.net.clone()));
        file.push("meta", Section::Text(serde_json::to_string(&self.meta).expect("meta serializes")));
        file
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_model_file().save(path)
    }

    pub fn load(path: &Path) -> Result<BcPolicy> {
        let file = ModelFile::load(path)?;
        let meta: BcMeta = serde_json::from_str(&file.text("meta")?)
            .map_err(|e| Error::ModelFormat(format!("bad policy metadata: {e}")))?;
        let net = file.net("policy")?;
        if net.input_size() != meta.obs_width || net.output_size() != ACTION_TARGETS * meta.horizon {
            return Err(Error::ModelFormat("policy network does not match its metadata".into()));
        }
        Ok(BcPolicy::from_parts(net, meta))
    }
}

impl Policy for BcPolicy {
    fn obs_mode(&self) -> ObsMode {
        self.meta.obs_mode
    }

    fn act(&self, obs: &[f64], _rng: &mut ChaCha8Rng) -> Result<ActionCommand> {
        let out = self.raw(obs)?;
        let move_distance = if out[0].is_finite() {
            out[0].clamp(-1.0, 1.0) * self.max_move
        } else {
            0.0
        };
        let heading = Vec2::new(out[1], out[2])
            .normalized()
            .filter(|h| h.is_finite())
            .unwrap_or_else(|| Vec2::new(obs[2], obs[3]).normalized().unwrap_or(Vec2::new(1.0, 0.0)));
        Ok(ActionCommand {
            move_distance,
            heading,
            grasp: sigmoid(out[3]) > 0.5,
        })
    }
}
