use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use movingout::bass::{is_valid, one_step_errors, perturb_partner, recombine, DynamicsConfig, LatentDynamics, RecombineOptions};
use movingout::data_io::{
    dataset_from, list_trajectories, read_trajectory, replay as resimulate, split, write_trajectory, Dataset,
    DatasetKind, SplitMode, Trajectory, TrajectoryHeader,
};
use movingout::env::ObsMode;
use movingout::maps::{load_map, MapSpec, CATALOG_SIZE};
use movingout::metrics::{evaluate, AcDenominator, DistanceField};
use movingout::nn::TrainConfig;
use movingout::policies::{BcConfig, BcPolicy, PolicySpec};
use movingout::rollout::{evaluate_map, map_for_seed, run_episode, RolloutConfig, SeedResult, SelectMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::report::{table, EvalReport, MapSummary, ModeRun};
use crate::{
    AugmentArgs, CollectArgs, EpisodeArgs, EvalArgs, MapListArgs, ModeChoice, PlayArgs, ReplayArgs, TrainArgs,
    TrainKind, UsageError, TOOL_VERSION,
};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_maps(arg: &str) -> Result<Vec<MapSpec>> {
    if arg == "all" {
        return Ok((1..=CATALOG_SIZE).map(|id| load_map(&id.to_string())).collect::<Result<_, _>>()?);
    }
    let maps = arg
        .split(',')
        .map(|s| load_map(s.trim()).with_context(|| format!("map {s:?}")))
        .collect::<Result<Vec<_>>>()?;
    if maps.is_empty() {
        return Err(usage("no maps given"));
    }
    Ok(maps)
}

fn seed_list(a: &EpisodeArgs) -> Result<Vec<u64>> {
    if a.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    Ok((a.first_seed..a.first_seed + a.seeds).collect())
}

fn policy_specs(a: &EpisodeArgs) -> Result<[PolicySpec; 2]> {
    Ok([PolicySpec::parse(&a.policy, a.noise)?, PolicySpec::parse(&a.partner, a.noise)?])
}

fn dir_or(arg: Option<PathBuf>, data: &Path, sub: &str) -> PathBuf {
    arg.unwrap_or_else(|| data.join(sub))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn read_all(dir: &Path) -> Result<Vec<(PathBuf, Trajectory)>> {
    list_trajectories(dir)?
        .into_iter()
        .map(|p| {
            let t = read_trajectory(&p)?;
            Ok((p, t))
        })
        .collect()
}

pub fn collect(data: &Path, a: CollectArgs) -> Result<()> {
    let maps = parse_maps(&a.episodes.maps)?;
    let seeds = seed_list(&a.episodes)?;
    let specs = policy_specs(&a.episodes)?;
    let out = dir_or(a.out, data, "trajectories");
    create_dir(&out)?;
    let denominator = AcDenominator::from(a.episodes.ac_denominator);
    let label = format!("{}+{}", specs[0].label(), specs[1].label());
    let jobs: Vec<(usize, u64)> = (0..maps.len()).flat_map(|m| seeds.iter().map(move |&s| (m, s))).collect();
    let results = jobs
        .par_iter()
        .map(|&(m, seed)| -> Result<(Trajectory, SeedResult)> {
            let inst = Arc::new(map_for_seed(&maps[m], seed)?);
            let (pi, pj) = (specs[0].build(inst.clone())?, specs[1].build(inst.clone())?);
            let cfg = RolloutConfig {
                horizon: a.episodes.horizon,
                obs_mode: pi.obs_mode(),
                ..Default::default()
            };
            let ep = run_episode(inst.clone(), seed, [pi.as_ref(), pj.as_ref()], &cfg)?;
            let metrics = evaluate(&ep, &DistanceField::build(&inst), denominator)?;
            let traj = Trajectory::from_episode(&ep, TrajectoryHeader::new(&inst, seed, label.clone(), a.episodes.horizon));
            Ok((traj, SeedResult { map: maps[m].id, seed, steps: ep.steps(), metrics }))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut per_map: Vec<Vec<SeedResult>> = vec![Vec::new(); maps.len()];
    for (&(m, seed), (traj, result)) in jobs.iter().zip(results) {
        write_trajectory(&traj, &out.join(format!("map{:02}-seed{seed:04}.jsonl", maps[m].id)))?;
        per_map[m].push(result);
    }
    let rows = maps
        .iter()
        .zip(per_map)
        .map(|(map, runs)| ("collect".to_owned(), MapSummary::new(map.id, &map.name, runs)));
    print!("{}", table(rows));
    eprintln!("wrote {} trajectories to {}", jobs.len(), out.display());
    Ok(())
}

pub fn augment(data: &Path, a: AugmentArgs) -> Result<()> {
    if !(a.sigma >= 0.0 && a.sigma.is_finite()) {
        return Err(usage("--sigma must be finite and >= 0"));
    }
    let input = dir_or(a.input, data, "trajectories");
    let out = dir_or(a.out, data, "augmented");
    let sources = read_all(&input)?;
    if sources.is_empty() {
        return Err(movingout::Error::EmptyDataset).with_context(|| format!("no trajectories in {}", input.display()));
    }
    create_dir(&out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (mut perturbed, mut dropped) = (0, 0);
    for (path, traj) in &sources {
        let name = path.file_name().expect("listed files have names");
        write_trajectory(traj, &out.join(name))?;
        // sigma 0 would only duplicate the source
        if a.sigma > 0.0 {
            let p = perturb_partner(traj, a.sigma, a.perturb_heading, &mut rng);
            if !a.validate_augment || is_valid(&p) {
                let stem = path.file_stem().expect("listed files have names").to_string_lossy();
                write_trajectory(&p, &out.join(format!("{stem}.perturbed.jsonl")))?;
                perturbed += 1;
            } else {
                dropped += 1;
            }
        }
    }
    let trajs: Vec<Trajectory> = sources.into_iter().map(|(_, t)| t).collect();
    let opts = RecombineOptions {
        validate: a.validate_augment,
        max_per_pair: Some(a.max_splices_per_pair),
    };
    let recombined = recombine(&trajs, opts);
    for (k, r) in recombined.iter().enumerate() {
        write_trajectory(r, &out.join(format!("recombined-{k:05}.jsonl")))?;
    }
    println!(
        "sources {}  perturbed {perturbed} (dropped {dropped})  recombined {}  -> {}",
        trajs.len(),
        recombined.len(),
        out.display()
    );
    Ok(())
}

pub fn train(data: &Path, a: TrainArgs) -> Result<()> {
    let dir = dir_or(a.data, data, "trajectories");
    let trajs: Vec<Trajectory> = read_all(&dir)?.into_iter().map(|(_, t)| t).collect();
    if trajs.is_empty() {
        return Err(movingout::Error::EmptyDataset).with_context(|| format!("no trajectories in {}", dir.display()));
    }
    if !(0.0..1.0).contains(&a.holdout) {
        return Err(usage("--holdout must be in [0, 1)"));
    }
    let (train_idx, test_idx) = if a.holdout > 0.0 {
        let attrs: Vec<_> = trajs.iter().map(|_| Vec::new()).collect();
        split(&attrs, SplitMode::ByEpisode, 1.0 - a.holdout, a.seed)?
    } else {
        ((0..trajs.len()).collect(), Vec::new())
    };
    let pick = |idx: &[usize]| idx.iter().map(|&i| trajs[i].clone()).collect::<Vec<_>>();
    let mode = ObsMode::from(a.obs_mode);
    let name = match a.kind {
        TrainKind::Bc => "bc",
        TrainKind::Dynamics => "dynamics",
    };
    let out = a.out.unwrap_or_else(|| data.join("models").join(format!("{name}.mnn")));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    match a.kind {
        TrainKind::Bc => {
            if a.action_horizon == 0 {
                return Err(usage("--action-horizon must be at least 1"));
            }
            let Dataset::BcPairs(pairs) = dataset_from(&pick(&train_idx), DatasetKind::BcPairs, mode)? else {
                unreachable!("asked for bc pairs")
            };
            let defaults = BcConfig::default();
            let cfg = BcConfig {
                hidden: a.hidden,
                horizon: a.action_horizon,
                train: TrainConfig {
                    epochs: a.epochs.unwrap_or(defaults.train.epochs),
                    batch_size: a.batch_size,
                    lr: a.lr,
                    seed: a.seed,
                },
            };
            let (policy, curve) = BcPolicy::train(&pairs, mode, &cfg)?;
            policy.save(&out)?;
            println!("bc: {} pairs, final loss {:.6}", pairs.len(), curve.last().copied().unwrap_or(f64::NAN));
        }
        TrainKind::Dynamics => {
            let Dataset::Transitions(samples) = dataset_from(&pick(&train_idx), DatasetKind::Transitions, mode)? else {
                unreachable!("asked for transitions")
            };
            let cfg = DynamicsConfig {
                epochs: a.epochs.unwrap_or(DynamicsConfig::default().epochs),
                batch_size: a.batch_size,
                lr: a.lr,
                seed: a.seed,
            };
            let (model, curve) = LatentDynamics::train(&samples, &cfg)?;
            model.save(&out)?;
            if let Some(last) = curve.last() {
                println!(
                    "dynamics: {} transitions, final loss {:.6} (reconstruction {:.6} / {:.6}, prediction {:.6})",
                    samples.len(),
                    last.total(),
                    last.rec_now,
                    last.rec_next,
                    last.predicted
                );
            }
            if !test_idx.is_empty() {
                let Dataset::Transitions(test) = dataset_from(&pick(&test_idx), DatasetKind::Transitions, mode)? else {
                    unreachable!("asked for transitions")
                };
                let (model_mse, keep_mse) = one_step_errors(&model, &test)?;
                println!("held-out one-step MSE: model {model_mse:.6}, persistence {keep_mse:.6}");
            }
        }
    }
    eprintln!("saved {}", out.display());
    Ok(())
}

fn resolve_mode(m: ModeChoice, oracle: bool) -> SelectMode {
    match m {
        ModeChoice::Raw => SelectMode::Raw,
        ModeChoice::Bass if oracle => SelectMode::BassOracle,
        ModeChoice::Bass | ModeChoice::BassModel => SelectMode::BassModel,
        ModeChoice::BassOracle => SelectMode::BassOracle,
    }
}

fn mode_name(m: SelectMode) -> String {
    serde_json::to_value(m).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let seeds = seed_list(&a.episodes)?;
    if a.n_candidates == 0 {
        return Err(usage("--n-candidates must be at least 1"));
    }
    let maps = parse_maps(&a.episodes.maps)?;
    let specs = policy_specs(&a.episodes)?;
    let denominator = AcDenominator::from(a.episodes.ac_denominator);
    let mut modes: Vec<SelectMode> = a.mode.iter().map(|&m| resolve_mode(m, a.oracle)).collect();
    modes.dedup();
    let model = match (&a.model, modes.contains(&SelectMode::BassModel)) {
        (Some(p), _) => Some(Arc::new(LatentDynamics::load(p)?)),
        (None, true) => return Err(usage("bass-model needs --model (or pass --oracle)")),
        (None, false) => None,
    };
    let mut runs = Vec::new();
    for &mode in &modes {
        let mut summaries = Vec::new();
        for map in &maps {
            let obs_mode = specs[0].build(Arc::new(map.clone()))?.obs_mode();
            let cfg = RolloutConfig {
                horizon: a.episodes.horizon,
                obs_mode,
                mode,
                n_candidates: a.n_candidates,
                model: model.clone(),
            };
            let results = evaluate_map(map, &seeds, [&specs[0], &specs[1]], &cfg, denominator)?;
            summaries.push(MapSummary::new(map.id, &map.name, results));
        }
        runs.push(ModeRun {
            mode: mode_name(mode),
            maps: summaries,
        });
    }
    let report = EvalReport {
        tool_version: TOOL_VERSION.into(),
        policy: specs[0].label(),
        partner: specs[1].label(),
        noise: a.episodes.noise,
        n_candidates: a.n_candidates,
        ac_denominator: enum_name(denominator),
        runs,
    };
    print!(
        "{}",
        table(report.runs.iter().flat_map(|r| r.maps.iter().map(|m| (r.mode.clone(), m.clone()))))
    );
    if let Some(out) = a.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        let text = serde_json::to_string_pretty(&report)?;
        std::fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
        eprintln!("report written to {}", out.display());
    }
    Ok(())
}

fn enum_name(d: AcDenominator) -> String {
    serde_json::to_value(d).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

pub fn replay(a: ReplayArgs) -> Result<()> {
    let mut files = Vec::new();
    for p in &a.paths {
        if p.is_dir() {
            files.extend(list_trajectories(p)?);
        } else {
            files.push(p.clone());
        }
    }
    for path in &files {
        let traj = read_trajectory(path)?;
        if a.check {
            resimulate(&traj).with_context(|| format!("{}", path.display()))?;
            println!("ok {} ({} steps)", path.display(), traj.steps());
        } else {
            let ep = traj.to_episode()?;
            let report = evaluate(&ep, &DistanceField::build(&traj.header.map), AcDenominator::default())?;
            println!(
                "{}: {} steps, tcr {:.3} nfd {:.3} wt {:.1}s ac {:.3}",
                path.display(),
                traj.steps(),
                report.tcr,
                report.nfd,
                report.wt_seconds,
                report.ac
            );
        }
    }
    if a.check {
        println!("{} trajectories replayed bit-exactly", files.len());
    }
    Ok(())
}

pub fn play(data: &Path, a: PlayArgs) -> Result<()> {
    if a.max_sessions == 0 || a.tick_ms == 0 {
        return Err(usage("--max-sessions and --tick-ms must be positive"));
    }
    let cfg = movingout_server::ServerConfig {
        addr: std::net::SocketAddr::new(a.host, a.port),
        max_sessions: a.max_sessions,
        static_dir: a.static_dir,
        log_dir: Some(dir_or(a.log_dir, data, "sessions")),
        tick: Duration::from_millis(a.tick_ms),
        ..Default::default()
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(movingout_server::run(cfg))?;
    Ok(())
}

pub fn map_list(a: MapListArgs) -> Result<()> {
    let maps = parse_maps("all")?;
    if a.json {
        for m in &maps {
            println!("{}", serde_json::to_string(m)?);
        }
        return Ok(());
    }
    println!("{:>3}  {:<24} {:<12} {:>5} {:>5} {:>5}", "id", "name", "category", "items", "walls", "goals");
    for m in &maps {
        let category = serde_json::to_value(m.category)?;
        println!(
            "{:>3}  {:<24} {:<12} {:>5} {:>5} {:>5}",
            m.id,
            m.name,
            category.as_str().unwrap_or(""),
            m.items.len(),
            m.walls.len(),
            m.goal_regions.len()
        );
    }
    Ok(())
}
