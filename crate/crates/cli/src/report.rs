//! Per-map aggregation of evaluation runs and their text rendering.

use movingout::rollout::{mean_se, MeanSe, SeedResult};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapSummary {
    pub map: u32,
    pub name: String,
    pub seeds: usize,
    pub tcr: MeanSe,
    pub nfd: MeanSe,
    pub wt_seconds: MeanSe,
    pub ac: MeanSe,
    pub per_seed: Vec<SeedResult>,
}

impl MapSummary {
    pub fn new(map: u32, name: &str, runs: Vec<SeedResult>) -> MapSummary {
        let col = |f: fn(&SeedResult) -> f64| mean_se(&runs.iter().map(f).collect::<Vec<_>>());
        MapSummary {
            map,
            name: name.to_owned(),
            seeds: runs.len(),
            tcr: col(|r| r.metrics.tcr),
            nfd: col(|r| r.metrics.nfd),
            wt_seconds: col(|r| r.metrics.wt_seconds),
            ac: col(|r| r.metrics.ac),
            per_seed: runs,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeRun {
    pub mode: String,
    pub maps: Vec<MapSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool_version: String,
    pub policy: String,
    pub partner: String,
    pub noise: f64,
    pub n_candidates: usize,
    pub ac_denominator: String,
    pub runs: Vec<ModeRun>,
}

fn cell(m: MeanSe) -> String {
    format!("{:.3} ± {:.3}", m.mean, m.se)
}

/// Aligned table, one row per (mode, map).
pub fn table(rows: impl IntoIterator<Item = (String, MapSummary)>) -> String {
    let header = ["mode", "map", "name", "n", "TCR", "NFD", "WT (s)", "AC"].map(String::from);
    let mut lines = vec![header.to_vec()];
    for (mode, m) in rows {
        lines.push(vec![
            mode,
            m.map.to_string(),
            m.name.clone(),
            m.seeds.to_string(),
            cell(m.tcr),
            cell(m.nfd),
            cell(m.wt_seconds),
            cell(m.ac),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for l in &lines {
        let padded: Vec<String> = l.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        out.push_str(padded.join("  ").trim_end());
        out.push('\n');
    }
    out
}
