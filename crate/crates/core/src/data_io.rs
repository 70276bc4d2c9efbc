//! Trajectory files, dataset assembly, train/test splits and replay checks.
//!
//! A trajectory file is line-delimited JSON: one header line, then one record
//! per state. Floats are written in shortest round-trip form, so reading a
//! file back gives bit-identical numbers.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{encode_observation, env_step, EpisodeConfig, Episode, ObsMode};
use crate::error::{Error, Result};
use crate::maps::{AttributeTuple, MapSpec};
use crate::physics::{ActionCommand, Event, PhysicsParams, WorldState};

pub const TRAJ_SCHEMA: &str = "movingout-traj/1";

/// Where a derived trajectory came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// `perturb` or `recombine`.
    pub method: String,
    pub sources: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splice: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb_heading: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub schema: String,
    pub map: MapSpec,
    pub map_hash: String,
    pub seed: u64,
    /// Attribute tuple of every item, in map order.
    pub attributes: Vec<AttributeTuple>,
    /// Which policies produced the actions.
    pub policy: String,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl TrajectoryHeader {
    pub fn new(map: &MapSpec, seed: u64, policy: impl Into<String>, horizon: usize) -> TrajectoryHeader {
        TrajectoryHeader {
            schema: TRAJ_SCHEMA.into(),
            map: map.clone(),
            map_hash: map.content_hash(),
            seed,
            attributes: map.items.iter().map(|i| i.attributes()).collect(),
            policy: policy.into(),
            horizon,
            provenance: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Record {
    t: usize,
    state: Vec<f64>,
    action_i: Option<[f64; 4]>,
    action_j: Option<[f64; 4]>,
    #[serde(default)]
    events: Vec<Event>,
}

/// A stored episode: `states.len() == actions.len() + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub header: TrajectoryHeader,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<[[f64; 4]; 2]>,
    pub events: Vec<Vec<Event>>,
}

impl Trajectory {
    pub fn from_episode(ep: &Episode, header: TrajectoryHeader) -> Trajectory {
        Trajectory {
            header,
            states: ep.states.iter().map(WorldState::to_vector).collect(),
            actions: ep.actions.iter().map(|[a, b]| [a.to_array(), b.to_array()]).collect(),
            events: ep.events.clone(),
        }
    }

    pub fn steps(&self) -> usize {
        self.actions.len()
    }

    pub fn map(&self) -> Arc<MapSpec> {
        Arc::new(self.header.map.clone())
    }

    pub fn world_states(&self) -> Result<Vec<WorldState>> {
        let map = self.map();
        self.states.iter().map(|v| WorldState::from_vector(map.clone(), v)).collect()
    }

    pub fn action_commands(&self, t: usize) -> [ActionCommand; 2] {
        self.actions[t].map(ActionCommand::from_array)
    }

    pub fn to_episode(&self) -> Result<Episode> {
        Ok(Episode {
            states: self.world_states()?,
            actions: (0..self.steps()).map(|t| self.action_commands(t)).collect(),
            events: self.events.clone(),
            dt: PhysicsParams::default().dt,
        })
    }

    /// Serialized JSONL text.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for (t, state) in self.states.iter().enumerate() {
            let record = Record {
                t,
                state: state.clone(),
                action_i: self.actions.get(t).map(|a| a[0]),
                action_j: self.actions.get(t).map(|a| a[1]),
                events: self.events.get(t).cloned().unwrap_or_default(),
            };
            out.push_str(&serde_json::to_string(&record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Trajectory> {
        parse_lines(text.lines().map(|l| Ok(l.to_string())))
    }
}

fn parse_lines(lines: impl Iterator<Item = std::io::Result<String>>) -> Result<Trajectory> {
    let mut lines = lines.enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    let first = first.map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let raw: serde_json::Value = serde_json::from_str(&first).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let found = raw.get("schema").and_then(|s| s.as_str()).unwrap_or_default();
    if found != TRAJ_SCHEMA {
        return Err(Error::SchemaVersion {
            expected: TRAJ_SCHEMA.into(),
            found: found.into(),
        });
    }
    let header: TrajectoryHeader = serde_json::from_value(raw).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let width = crate::physics::state_width(header.map.items.len());
    let mut traj = Trajectory {
        header,
        states: Vec::new(),
        actions: Vec::new(),
        events: Vec::new(),
    };
    let mut finished = false;
    for (line, text) in lines {
        let text = text.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse { line, message };
        if finished {
            return Err(bad("record after the final state".into()));
        }
        let record: Record = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if record.t != traj.states.len() {
            return Err(bad(format!("expected t = {}, found {}", traj.states.len(), record.t)));
        }
        if record.state.len() != width {
            return Err(bad(format!("state has {} values, expected {width}", record.state.len())));
        }
        traj.states.push(record.state);
        match (record.action_i, record.action_j) {
            (Some(a), Some(b)) => {
                traj.actions.push([a, b]);
                traj.events.push(record.events);
            }
            (None, None) => finished = true,
            _ => return Err(bad("record has only one action".into())),
        }
    }
    if !finished {
        return Err(Error::Parse {
            line: traj.states.len() + 2,
            message: "file ends before the final state record".into(),
        });
    }
    if traj.steps() > traj.header.horizon {
        return Err(Error::Parse {
            line: 1,
            message: format!("{} steps exceed horizon {}", traj.steps(), traj.header.horizon),
        });
    }
    Ok(traj)
}

pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(traj.to_jsonl().as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_lines(BufReader::new(file).lines())
}

/// Re-simulates the stored actions from the header's map and checks every
/// state and event bit for bit.
pub fn replay(traj: &Trajectory) -> Result<()> {
    let map = traj.map();
    if map.content_hash() != traj.header.map_hash {
        return Err(Error::ReplayDivergence {
            step: 0,
            detail: format!("map hash {} does not match header {}", map.content_hash(), traj.header.map_hash),
        });
    }
    let config = EpisodeConfig {
        map: map.clone(),
        seed: traj.header.seed,
        horizon: traj.header.horizon,
        obs_mode: ObsMode::SingleMap,
    };
    let params = PhysicsParams::default();
    let mut state = WorldState::from_map(map);
    compare(&state.to_vector(), &traj.states[0], 0)?;
    for t in 0..traj.steps() {
        let tr = env_step(&state, t, &traj.action_commands(t), &config, &params).map_err(|e| Error::ReplayDivergence {
            step: t + 1,
            detail: e.to_string(),
        })?;
        compare(&tr.state.to_vector(), &traj.states[t + 1], t + 1)?;
        if tr.events != traj.events[t] {
            return Err(Error::ReplayDivergence {
                step: t + 1,
                detail: "events differ".into(),
            });
        }
        if tr.done.is_some() && t + 1 < traj.steps() {
            return Err(Error::ReplayDivergence {
                step: t + 1,
                detail: "episode ended before the recorded actions did".into(),
            });
        }
        state = tr.state;
    }
    Ok(())
}

fn compare(actual: &[f64], stored: &[f64], step: usize) -> Result<()> {
    if let Some(k) = (0..actual.len()).find(|&k| actual[k].to_bits() != stored[k].to_bits()) {
        return Err(Error::ReplayDivergence {
            step,
            detail: format!("state entry {k}: simulated {} vs stored {}", actual[k], stored[k]),
        });
    }
    Ok(())
}

/// Trajectory files in `dir` ending in `.jsonl`, sorted by name.
pub fn list_trajectories(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    out.sort();
    Ok(out)
}

/// One behavior-cloning sample.
#[derive(Debug, Clone, PartialEq)]
pub struct BcPair {
    pub episode: usize,
    pub t: usize,
    pub agent: usize,
    pub obs: Vec<f64>,
    pub action: [f64; 4],
}

/// One dynamics sample from one agent's point of view: ego observations
/// before and after, own action and partner action.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSample {
    pub episode: usize,
    pub t: usize,
    pub agent: usize,
    pub state: Vec<f64>,
    pub action: [f64; 4],
    pub partner_action: [f64; 4],
    pub next: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    BcPairs,
    Transitions,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    BcPairs(Vec<BcPair>),
    Transitions(Vec<TransitionSample>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::BcPairs(v) => v.len(),
            Dataset::Transitions(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Samples of one trajectory, tagged with `episode`, ordered by (t, agent).
pub fn trajectory_samples(traj: &Trajectory, episode: usize, kind: DatasetKind, mode: ObsMode) -> Result<Dataset> {
    let states = traj.world_states()?;
    let obs: Vec<[Vec<f64>; 2]> = states
        .iter()
        .map(|s| [0, 1].map(|a| encode_observation(s, a, mode)))
        .collect();
    Ok(match kind {
        DatasetKind::BcPairs => Dataset::BcPairs(
            (0..traj.steps())
                .flat_map(|t| {
                    let obs = &obs;
                    (0..2).map(move |agent| BcPair {
                        episode,
                        t,
                        agent,
                        obs: obs[t][agent].clone(),
                        action: traj.actions[t][agent],
                    })
                })
                .collect(),
        ),
        DatasetKind::Transitions => Dataset::Transitions(
            (0..traj.steps())
                .flat_map(|t| {
                    let obs = &obs;
                    (0..2).map(move |agent| TransitionSample {
                        episode,
                        t,
                        agent,
                        state: obs[t][agent].clone(),
                        action: traj.actions[t][agent],
                        partner_action: traj.actions[t][1 - agent],
                        next: obs[t + 1][agent].clone(),
                    })
                })
                .collect(),
        ),
    })
}

/// Builds a dataset from trajectories, ordered by (trajectory, t, agent).
pub fn dataset_from(trajs: &[Trajectory], kind: DatasetKind, mode: ObsMode) -> Result<Dataset> {
    let mut width: Option<usize> = None;
    let mut out = match kind {
        DatasetKind::BcPairs => Dataset::BcPairs(Vec::new()),
        DatasetKind::Transitions => Dataset::Transitions(Vec::new()),
    };
    for (e, traj) in trajs.iter().enumerate() {
        let w = crate::env::observation_width(traj.header.map.items.len(), mode);
        match width {
            Some(expected) if expected != w => return Err(Error::WidthMismatch { expected, actual: w }),
            _ => width = Some(w),
        }
        match (&mut out, trajectory_samples(traj, e, kind, mode)?) {
            (Dataset::BcPairs(all), Dataset::BcPairs(v)) => all.extend(v),
            (Dataset::Transitions(all), Dataset::Transitions(v)) => all.extend(v),
            _ => unreachable!("sample kind follows the requested kind"),
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

/// Reads `paths` in order and builds a dataset.
pub fn build_dataset(paths: &[PathBuf], kind: DatasetKind, mode: ObsMode) -> Result<Dataset> {
    if paths.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let trajs = paths.iter().map(|p| read_trajectory(p)).collect::<Result<Vec<_>>>()?;
    dataset_from(&trajs, kind, mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    ByEpisode,
    /// No item attribute tuple may appear on both sides.
    ByAttribute,
}

/// Splits episodes (given by their item attribute tuples) into train and
/// test index sets; about `ratio` of the episodes go to train.
pub fn split(attributes: &[Vec<AttributeTuple>], mode: SplitMode, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InfeasibleSplit(format!("ratio {ratio} must lie strictly between 0 and 1")));
    }
    let n = attributes.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let want = ((n as f64) * ratio).round() as usize;
    match mode {
        SplitMode::ByEpisode => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let (train, test) = order.split_at(want.min(n));
            let (mut train, mut test) = (train.to_vec(), test.to_vec());
            train.sort_unstable();
            test.sort_unstable();
            Ok((train, test))
        }
        SplitMode::ByAttribute => {
            let groups = attribute_groups(attributes);
            if groups.len() < 2 {
                return Err(Error::InfeasibleSplit(
                    "every episode shares item attributes with every other".into(),
                ));
            }
            let mut order: Vec<Vec<usize>> = groups;
            order.shuffle(&mut rng);
            let mut cut = 0;
            let mut taken = 0;
            while cut < order.len() && taken < want.max(1) {
                taken += order[cut].len();
                cut += 1;
            }
            // Both sides must be non-empty; there are at least two groups.
            let cut = cut.min(order.len() - 1);
            let mut train: Vec<usize> = order[..cut].concat();
            let mut test: Vec<usize> = order[cut..].concat();
            train.sort_unstable();
            test.sort_unstable();
            Ok((train, test))
        }
    }
}

/// Connected components of episodes that share any attribute tuple.
fn attribute_groups(attributes: &[Vec<AttributeTuple>]) -> Vec<Vec<usize>> {
    let n = attributes.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut c = x;
        while parent[c] != r {
            let next = parent[c];
            parent[c] = r;
            c = next;
        }
        r
    }
    let mut owner: HashMap<&AttributeTuple, usize> = HashMap::new();
    for (e, tuples) in attributes.iter().enumerate() {
        for t in tuples {
            if let Some(&o) = owner.get(t) {
                let (a, b) = (find(&mut parent, o), find(&mut parent, e));
                parent[a.max(b)] = a.min(b);
            } else {
                owner.insert(t, e);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for e in 0..n {
        let r = find(&mut parent, e);
        groups.entry(r).or_default().push(e);
    }
    groups.into_values().collect()
}

/// Attribute tuples appearing in both index sets.
pub fn shared_attributes(attributes: &[Vec<AttributeTuple>], a: &[usize], b: &[usize]) -> HashSet<AttributeTuple> {
    let left: HashSet<AttributeTuple> = a.iter().flat_map(|&i| attributes[i].iter().copied()).collect();
    b.iter()
        .flat_map(|&i| attributes[i].iter().copied())
        .filter(|t| left.contains(t))
        .collect()
}
