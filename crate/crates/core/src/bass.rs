//! Behavior augmentation (partner perturbation and trajectory recombination),
//! the latent dynamics model, and reward-scored action selection.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data_io::{Provenance, TransitionSample, Trajectory};
use crate::env::{encode_observation, observation_width, ObsMode, AGENT_BLOCK, ITEM_BLOCK};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Vec2};
use crate::maps::MapSpec;
use crate::metrics::{cell_of, DistanceField, GRID};
use crate::nn::{Activation, Adam, DenseNet, Loss, Matrix, ModelFile, Section, Shuffler};
use crate::physics::{self, check_collisions, within_arena, ActionCommand, PhysicsParams, WorldState};
use crate::policies::{predict_partner_action, Policy};

pub const DEFAULT_SIGMA: f64 = 0.002;
/// Penetration above which a generated state counts as invalid.
pub const VALID_PENETRATION: f64 = 0.01;
pub const LATENT: usize = 32;
pub const HIDDEN: usize = 128;
/// Heading jitter of candidate actions, radians.
pub const CANDIDATE_HEADING_STD: f64 = 0.3;

/// State-vector offsets of the partner's (agent j) position and heading.
const PARTNER_X: usize = 8;
const PARTNER_HEADING: usize = 10;
/// Agent j occupies entries 8..16 of the state vector.
const PARTNER_SPAN: std::ops::Range<usize> = 8..16;

/// Copy of `traj` with Gaussian noise on agent j's position (and heading when
/// `heading` is set) at every state. Nothing else changes.
pub fn perturb_partner(traj: &Trajectory, sigma: f64, heading: bool, rng: &mut ChaCha8Rng) -> Trajectory {
    let mut out = traj.clone();
    out.header.provenance = Some(Provenance {
        method: "perturb".into(),
        sources: vec![source_id(traj)],
        splice: None,
        sigma: Some(sigma),
        perturb_heading: Some(heading),
    });
    if sigma <= 0.0 {
        return out;
    }
    let noise = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    for s in &mut out.states {
        s[PARTNER_X] += noise.sample(rng);
        s[PARTNER_X + 1] += noise.sample(rng);
        if heading {
            s[PARTNER_HEADING] = wrap_angle(s[PARTNER_HEADING] + noise.sample(rng));
        }
    }
    out
}

/// Short label naming a trajectory in provenance records.
pub fn source_id(traj: &Trajectory) -> String {
    format!("map{}-seed{}-{}", traj.header.map.id, traj.header.seed, &traj.header.map_hash)
}

/// Agent i's grid cell and hold flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpliceKey {
    pub col: u8,
    pub row: u8,
    pub holding: bool,
}

impl SpliceKey {
    pub fn of(state: &[f64]) -> SpliceKey {
        let (col, row) = cell_of(Vec2::new(state[0], state[1]));
        debug_assert!(col < GRID && row < GRID);
        SpliceKey {
            col: col as u8,
            row: row as u8,
            holding: state[3] >= 0.0,
        }
    }
}

/// Both splices of `a` and `b` over `[t1, t2]`: each keeps its own agent i
/// and items and takes agent j (states and actions) from the other.
pub fn splice(a: &Trajectory, b: &Trajectory, t1: usize, t2: usize) -> (Trajectory, Trajectory) {
    let one = |base: &Trajectory, donor: &Trajectory| {
        let mut out = base.clone();
        for t in t1..=t2 {
            out.states[t][PARTNER_SPAN].copy_from_slice(&donor.states[t][PARTNER_SPAN]);
            if t < t2 {
                out.actions[t][1] = donor.actions[t][1];
            }
        }
        out.header.provenance = Some(Provenance {
            method: "recombine".into(),
            sources: vec![source_id(base), source_id(donor)],
            splice: Some([t1, t2]),
            sigma: None,
            perturb_heading: None,
        });
        out
    };
    (one(a, b), one(b, a))
}

/// Every generated state stays in the arena without deep penetration.
pub fn is_valid(traj: &Trajectory) -> bool {
    let map = traj.map();
    traj.states.iter().all(|v| match WorldState::from_vector(map.clone(), v) {
        Ok(s) => within_arena(&s) && check_collisions(&s).max_penetration() <= VALID_PENETRATION,
        Err(_) => false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecombineOptions {
    pub validate: bool,
    /// Cap on splices per trajectory pair, earliest first.
    pub max_per_pair: Option<usize>,
}

impl Default for RecombineOptions {
    fn default() -> Self {
        RecombineOptions {
            validate: true,
            max_per_pair: None,
        }
    }
}

/// Splice times `(t1, t2)`, `t1 < t2`, where agent i has the same key in
/// both trajectories at both ends.
pub fn splice_points(a: &Trajectory, b: &Trajectory) -> Vec<(usize, usize)> {
    let len = a.states.len().min(b.states.len());
    let matches: Vec<usize> = (0..len)
        .filter(|&t| SpliceKey::of(&a.states[t]) == SpliceKey::of(&b.states[t]))
        .collect();
    let mut out = Vec::new();
    for (k, &t1) in matches.iter().enumerate() {
        for &t2 in &matches[k + 1..] {
            out.push((t1, t2));
        }
    }
    out
}

/// Recombines every pair of distinct trajectories on the same map.
pub fn recombine(trajs: &[Trajectory], opts: RecombineOptions) -> Vec<Trajectory> {
    let mut by_map: HashMap<&str, Vec<usize>> = HashMap::new();
    for (k, t) in trajs.iter().enumerate() {
        by_map.entry(t.header.map_hash.as_str()).or_default().push(k);
    }
    let mut out = Vec::new();
    for x in 0..trajs.len() {
        for &y in &by_map[trajs[x].header.map_hash.as_str()] {
            if y <= x {
                continue;
            }
            let points = splice_points(&trajs[x], &trajs[y]);
            let cap = opts.max_per_pair.unwrap_or(usize::MAX);
            for &(t1, t2) in points.iter().take(cap) {
                let (p, q) = splice(&trajs[x], &trajs[y], t1, t2);
                for r in [p, q] {
                    if !opts.validate || is_valid(&r) {
                        out.push(r);
                    }
                }
            }
        }
    }
    out
}

/// Per-dimension standardization; constant dimensions map to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    pub fn fit(rows: &[&[f64]]) -> Normalizer {
        let w = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; w];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(*r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; w];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(*r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale = var.iter().map(|v| if *v > 1e-12 { 1.0 / v.sqrt() } else { 0.0 }).collect();
        Normalizer { mean, scale }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) * s).collect()
    }

    pub fn invert(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| if *s > 0.0 { x / s + m } else { *m })
            .collect()
    }
}

/// Network input features of an action: `[move / max_move, cos, sin, grasp]`.
pub fn action_features(a: &[f64; 4]) -> [f64; 4] {
    let max_move = PhysicsParams::default().max_move();
    [a[0] / max_move, a[1], a[2], a[3]]
}

/// Encoder/decoder pairs for the current and next state plus the latent
/// transition network.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDynamics {
    pub norm: Normalizer,
    pub enc_now: DenseNet,
    pub dec_now: DenseNet,
    pub enc_next: DenseNet,
    pub dec_next: DenseNet,
    /// Latent change given `[z, action, partner action]`.
    pub transition: DenseNet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            epochs: 20,
            batch_size: 256,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// Loss parts of one training epoch (sample-weighted means).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DynamicsLoss {
    pub rec_now: f64,
    pub rec_next: f64,
    pub latent: f64,
    pub predicted: f64,
}

impl DynamicsLoss {
    pub fn total(&self) -> f64 {
        self.rec_now + self.rec_next + self.latent + self.predicted
    }
}

struct Batch {
    x: Matrix,
    next: Matrix,
    actions: Matrix,
}

fn mse(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    Loss::Mse.evaluate(pred, target)
}

impl LatentDynamics {
    pub fn new(norm: Normalizer, seed: u64) -> LatentDynamics {
        let w = norm.mean.len();
        let relu = |sizes: &[usize], s: u64| DenseNet::mlp(sizes, Activation::Relu, seed.wrapping_mul(31).wrapping_add(s));
        LatentDynamics {
            enc_now: relu(&[w, HIDDEN, LATENT], 1),
            dec_now: relu(&[LATENT, HIDDEN, w], 2),
            enc_next: relu(&[w, HIDDEN, LATENT], 3),
            dec_next: relu(&[LATENT, HIDDEN, w], 4),
            transition: relu(&[LATENT + 8, HIDDEN, HIDDEN, LATENT], 5),
            norm,
        }
    }

    pub fn width(&self) -> usize {
        self.norm.mean.len()
    }

    fn batch(&self, samples: &[&TransitionSample]) -> Result<Batch> {
        let x: Vec<Vec<f64>> = samples.iter().map(|s| self.norm.apply(&s.state)).collect();
        let next: Vec<Vec<f64>> = samples.iter().map(|s| self.norm.apply(&s.next)).collect();
        let actions: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| {
                let mut v = action_features(&s.action).to_vec();
                v.extend(action_features(&s.partner_action));
                v
            })
            .collect();
        Ok(Batch {
            x: Matrix::from_rows(&x)?,
            next: Matrix::from_rows(&next)?,
            actions: Matrix::from_rows(&actions)?,
        })
    }

    /// One joint gradient step on all five networks.
    fn train_step(&mut self, b: &Batch, opt: &mut [Adam; 5]) -> Result<DynamicsLoss> {
        let a_now = self.enc_now.forward(&b.x)?;
        let z_now = a_now.output().clone();
        let r_now = self.dec_now.forward(&z_now)?;
        let (rec_now, g_rec_now) = mse(r_now.output(), &b.x)?;

        let a_next = self.enc_next.forward(&b.next)?;
        let z_next = a_next.output().clone();
        let r_next = self.dec_next.forward(&z_next)?;
        let (rec_next, g_rec_next) = mse(r_next.output(), &b.next)?;

        let f_in = Matrix::hcat(&[&z_now, &b.actions])?;
        let a_f = self.transition.forward(&f_in)?;
        let mut z_pred = z_now.clone();
        z_pred.add_assign(a_f.output());
        let p = self.dec_next.forward(&z_pred)?;
        let (predicted, g_pred) = mse(p.output(), &b.next)?;
        let (latent, g_lat) = mse(&z_pred, &z_next)?;

        let (gd_now, gz_now_rec) = self.dec_now.backward(&r_now, &g_rec_now)?;
        let (mut gd_next, gz_next_rec) = self.dec_next.backward(&r_next, &g_rec_next)?;
        let (gd_next_pred, mut gz_pred) = self.dec_next.backward(&p, &g_pred)?;
        gd_next.add_assign(&gd_next_pred);
        gz_pred.add_assign(&g_lat);
        let (g_f, g_f_in) = self.transition.backward(&a_f, &gz_pred)?;
        let mut gz_now = gz_now_rec;
        gz_now.add_assign(&gz_pred);
        gz_now.add_assign(&g_f_in.columns(0, LATENT));
        let mut gz_next = gz_next_rec;
        let mut neg = g_lat;
        neg.scale(-1.0);
        gz_next.add_assign(&neg);
        let (ge_now, _) = self.enc_now.backward(&a_now, &gz_now)?;
        let (ge_next, _) = self.enc_next.backward(&a_next, &gz_next)?;

        let [o1, o2, o3, o4, o5] = opt;
        o1.update(&mut self.enc_now, &ge_now);
        o2.update(&mut self.dec_now, &gd_now);
        o3.update(&mut self.enc_next, &ge_next);
        o4.update(&mut self.dec_next, &gd_next);
        o5.update(&mut self.transition, &g_f);
        Ok(DynamicsLoss {
            rec_now,
            rec_next,
            latent,
            predicted,
        })
    }

    /// Trains all parts jointly; returns per-epoch losses.
    pub fn train(samples: &[TransitionSample], cfg: &DynamicsConfig) -> Result<(LatentDynamics, Vec<DynamicsLoss>)> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let w = samples[0].state.len();
        if let Some(bad) = samples.iter().find(|s| s.state.len() != w || s.next.len() != w) {
            return Err(Error::WidthMismatch {
                expected: w,
                actual: bad.state.len().max(bad.next.len()),
            });
        }
        let rows: Vec<&[f64]> = samples
            .iter()
            .flat_map(|s| [s.state.as_slice(), s.next.as_slice()])
            .collect();
        let mut model = LatentDynamics::new(Normalizer::fit(&rows), cfg.seed);
        let mut opt = [
            Adam::new(&model.enc_now, cfg.lr),
            Adam::new(&model.dec_now, cfg.lr),
            Adam::new(&model.enc_next, cfg.lr),
            Adam::new(&model.dec_next, cfg.lr),
            Adam::new(&model.transition, cfg.lr),
        ];
        let mut shuffler = Shuffler::new(samples.len(), cfg.seed);
        let mut curve = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            let order = shuffler.next_epoch().to_vec();
            let mut sum = DynamicsLoss::default();
            for (k, idx) in order.chunks(cfg.batch_size.max(1)).enumerate() {
                let chunk: Vec<&TransitionSample> = idx.iter().map(|&i| &samples[i]).collect();
                let batch = model.batch(&chunk)?;
                let l = model.train_step(&batch, &mut opt)?;
                if !l.total().is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: k,
                        loss: l.total(),
                    });
                }
                let wgt = idx.len() as f64 / samples.len() as f64;
                sum.rec_now += l.rec_now * wgt;
                sum.rec_next += l.rec_next * wgt;
                sum.latent += l.latent * wgt;
                sum.predicted += l.predicted * wgt;
            }
            curve.push(sum);
        }
        Ok((model, curve))
    }

    /// Decoded next state before post-processing.
    fn raw_predict(&self, states: &[&[f64]], actions: &[[f64; 8]]) -> Result<Vec<Vec<f64>>> {
        let x: Vec<Vec<f64>> = states.iter().map(|s| self.norm.apply(s)).collect();
        let x = Matrix::from_rows(&x)?;
        let z = self.enc_now.predict_batch(&x)?;
        let a = Matrix::from_rows(actions)?;
        let mut zp = z.clone();
        zp.add_assign(&self.transition.predict_batch(&Matrix::hcat(&[&z, &a])?)?);
        let out = self.dec_next.predict_batch(&zp)?;
        Ok((0..out.rows).map(|r| self.norm.invert(out.row(r))).collect())
    }

    /// Predicted next ego observations for a batch of candidate actions.
    pub fn predict_many(&self, state: &[f64], actions: &[(ActionCommand, ActionCommand)]) -> Result<Vec<Vec<f64>>> {
        if state.len() != self.width() {
            return Err(Error::ShapeMismatch {
                expected: self.width(),
                actual: state.len(),
            });
        }
        let feats: Vec<[f64; 8]> = actions
            .iter()
            .map(|(a, p)| {
                let (a, p) = (action_features(&a.to_array()), action_features(&p.to_array()));
                [a[0], a[1], a[2], a[3], p[0], p[1], p[2], p[3]]
            })
            .collect();
        let states = vec![state; actions.len()];
        let mut out = self.raw_predict(&states, &feats)?;
        for v in &mut out {
            postprocess(v);
        }
        Ok(out)
    }

    pub fn to_model_file(&self) -> ModelFile {
        let mut f = ModelFile::default();
        f.push("kind", Section::Text("latent-dynamics".into()));
        f.push("norm_mean", Section::Vector(self.norm.mean.clone()));
        f.push("norm_scale", Section::Vector(self.norm.scale.clone()));
        f.push("enc_now", Section::Net(self.enc_now.clone()));
        f.push("dec_now", Section::Net(self.dec_now.clone()));
        f.push("enc_next", Section::Net(self.enc_next.clone()));
        f.push("dec_next", Section::Net(self.dec_next.clone()));
        f.push("transition", Section::Net(self.transition.clone()));
        f
    }

    pub fn from_model_file(f: &ModelFile) -> Result<LatentDynamics> {
        if f.text("kind")? != "latent-dynamics" {
            return Err(Error::ModelFormat("not a latent dynamics model".into()));
        }
        let model = LatentDynamics {
            norm: Normalizer {
                mean: f.vector("norm_mean")?,
                scale: f.vector("norm_scale")?,
            },
            enc_now: f.net("enc_now")?,
            dec_now: f.net("dec_now")?,
            enc_next: f.net("enc_next")?,
            dec_next: f.net("dec_next")?,
            transition: f.net("transition")?,
        };
        let w = model.width();
        let ok = model.norm.scale.len() == w
            && model.enc_now.input_size() == w
            && model.dec_next.output_size() == w
            && model.transition.input_size() == LATENT + 8;
        if !ok {
            return Err(Error::ModelFormat("dynamics model parts have inconsistent sizes".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_model_file().save(path)
    }

    pub fn load(path: &Path) -> Result<LatentDynamics> {
        LatentDynamics::from_model_file(&ModelFile::load(path)?)
    }
}

/// Positions of (cos, sin) pairs and hold flags in an ego observation.
fn angle_pairs(width: usize) -> impl Iterator<Item = usize> {
    let items = width.saturating_sub(2 * AGENT_BLOCK) / ITEM_BLOCK;
    [2, AGENT_BLOCK + 2]
        .into_iter()
        .chain((0..items).map(|k| 2 * AGENT_BLOCK + ITEM_BLOCK * k + 2))
}

/// Renormalizes angle pairs and snaps hold flags to 0/1.
pub fn postprocess(v: &mut [f64]) {
    for k in angle_pairs(v.len()) {
        let (c, s) = (v[k], v[k + 1]);
        let n = (c * c + s * s).sqrt();
        if n > 1e-12 && n.is_finite() {
            v[k] = c / n;
            v[k + 1] = s / n;
        } else {
            v[k] = 1.0;
            v[k + 1] = 0.0;
        }
    }
    for k in [4, AGENT_BLOCK + 4] {
        v[k] = if v[k] >= 0.5 { 1.0 } else { 0.0 };
    }
}

/// Predicted next ego observation for state `s`, own action `a` and partner
/// action `ap`.
pub fn predict_next_state(model: &LatentDynamics, s: &[f64], a: &ActionCommand, ap: &ActionCommand) -> Result<Vec<f64>> {
    Ok(model.predict_many(s, &[(*a, *ap)])?.remove(0))
}

/// Mean squared error of predictions against true next states, and of the
/// persistence guess (next = current).
pub fn one_step_errors(model: &LatentDynamics, samples: &[TransitionSample]) -> Result<(f64, f64)> {
    let (mut model_err, mut keep_err, mut n) = (0.0, 0.0, 0usize);
    for chunk in samples.chunks(512) {
        let states: Vec<&[f64]> = chunk.iter().map(|s| s.state.as_slice()).collect();
        let feats: Vec<[f64; 8]> = chunk
            .iter()
            .map(|s| {
                let (a, p) = (action_features(&s.action), action_features(&s.partner_action));
                [a[0], a[1], a[2], a[3], p[0], p[1], p[2], p[3]]
            })
            .collect();
        if states.iter().any(|s| s.len() != model.width()) {
            return Err(Error::ShapeMismatch {
                expected: model.width(),
                actual: states.iter().map(|s| s.len()).find(|&l| l != model.width()).unwrap_or(0),
            });
        }
        let preds = model.raw_predict(&states, &feats)?;
        for (s, mut p) in chunk.iter().zip(preds) {
            postprocess(&mut p);
            for k in 0..s.next.len() {
                model_err += (p[k] - s.next[k]).powi(2);
                keep_err += (s.state[k] - s.next[k]).powi(2);
                n += 1;
            }
        }
    }
    Ok((model_err / n.max(1) as f64, keep_err / n.max(1) as f64))
}

/// Candidate actions and their predicted rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub actions: Vec<ActionCommand>,
    pub rewards: Vec<f64>,
}

/// How candidate successors are obtained.
#[derive(Clone, Copy)]
pub enum Evaluator<'a> {
    /// The real physics step.
    Oracle,
    Model(&'a LatentDynamics),
}

/// The policy action followed by `n - 1` variations: heading jitter, full
/// and half of the policy's move alternating, and a grasp on the last one
/// when the hand is empty. A release is never proposed: one-step progress
/// cannot see the value of keeping hold of an item, so a release would win
/// whenever every move looks bad for a single step.
pub fn candidates(base: ActionCommand, n: usize, holding: bool, rng: &mut ChaCha8Rng) -> Vec<ActionCommand> {
    let jitter = Normal::new(0.0, CANDIDATE_HEADING_STD).expect("constant std");
    let mut out = Vec::with_capacity(n);
    out.push(base);
    for k in 1..n {
        let angle = base.heading.angle() + jitter.sample(rng);
        let fraction = if k % 2 == 1 { 1.0 } else { 0.5 };
        let mut c = ActionCommand::new(base.move_distance * fraction, angle, base.grasp);
        if k == n - 1 && !holding {
            c.grasp = !base.grasp;
        }
        out.push(c);
    }
    out
}

/// Index of the largest reward, earliest on ties.
pub fn argmax_first(rewards: &[f64]) -> usize {
    let mut best = 0;
    for (k, r) in rewards.iter().enumerate() {
        if *r > rewards[best] {
            best = k;
        }
    }
    best
}

/// Reward of a state: minus the summed goal distance of its items.
pub fn score_state(state: &WorldState, field: &DistanceField) -> f64 {
    -field.total_distance(state)
}

/// World state holding the item poses of an ego observation; agents are left
/// at spawn since the reward only reads items.
pub fn items_from_observation(obs: &[f64], map: Arc<MapSpec>) -> WorldState {
    let mut s = WorldState::from_map(map);
    for (k, item) in s.items.iter_mut().enumerate() {
        let b = &obs[2 * AGENT_BLOCK + ITEM_BLOCK * k..];
        item.position = Vec2::new(b[0], b[1]);
        item.angle = b[3].atan2(b[2]);
    }
    s
}

/// Reward of the successor state reached when `agent` takes each candidate
/// and the partner takes `partner`.
pub fn score_candidates(
    state: &WorldState,
    agent: usize,
    obs_mode: ObsMode,
    cands: &[ActionCommand],
    partner: ActionCommand,
    evaluator: Evaluator<'_>,
    field: &DistanceField,
) -> Result<Vec<f64>> {
    match evaluator {
        Evaluator::Oracle => {
            let params = PhysicsParams::default();
            cands
                .iter()
                .map(|c| {
                    let mut joint = [*c, partner];
                    if agent == 1 {
                        joint.swap(0, 1);
                    }
                    physics::step(state, &joint, &params).map(|o| score_state(&o.state, field))
                })
                .collect()
        }
        Evaluator::Model(model) => {
            let ego = if observation_width(state.items.len(), obs_mode) == model.width() {
                encode_observation(state, agent, obs_mode)
            } else {
                encode_observation(state, agent, ObsMode::SingleMap)
            };
            let pairs: Vec<(ActionCommand, ActionCommand)> = cands.iter().map(|c| (*c, partner)).collect();
            Ok(model
                .predict_many(&ego, &pairs)?
                .iter()
                .map(|p| score_state(&items_from_observation(p, state.map.clone()), field))
                .collect())
        }
    }
}

/// Picks an action for `agent` by scoring candidate successors.
pub fn select_action(
    state: &WorldState,
    agent: usize,
    obs_mode: ObsMode,
    policy: &dyn Policy,
    evaluator: Evaluator<'_>,
    n: usize,
    field: &DistanceField,
    rng: &mut ChaCha8Rng,
) -> Result<(ActionCommand, CandidateSet)> {
    let obs = encode_observation(state, agent, obs_mode);
    let base = policy.act(&obs, rng)?;
    if n <= 1 {
        return Ok((
            base,
            CandidateSet {
                actions: vec![base],
                rewards: vec![0.0],
            },
        ));
    }
    let cands = candidates(base, n, state.agents[agent].hold.is_some(), rng);
    let partner = predict_partner_action(policy, &obs, rng)?;
    let rewards = score_candidates(state, agent, obs_mode, &cands, partner, evaluator, field)?;
    let best = argmax_first(&rewards);
    Ok((
        cands[best],
        CandidateSet {
            actions: cands,
            rewards,
        },
    ))
}
