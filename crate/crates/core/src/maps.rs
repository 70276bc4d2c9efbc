//! The built-in 12-map catalog, map file loading/validation and seeded
//! randomization of item attributes.

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{circle_rect, overlap, Rect, Vec2};
use crate::physics::{item_hull, ItemShape, SizeClass, AGENT_RADIUS};

pub const MAP_SCHEMA: &str = "movingout-map/1";

/// Draws per item before a constrained randomization gives up.
pub const MAX_DRAWS: usize = 1000;

const CATALOG: [&str; 12] = [
    include_str!("../maps/map01_hand_off.json"),
    include_str!("../maps/map02_pass_or_split.json"),
    include_str!("../maps/map03_efficient_routes.json"),
    include_str!("../maps/map04_priority_pick.json"),
    include_str!("../maps/map05_corner_decision.json"),
    include_str!("../maps/map06_distance_priority.json"),
    include_str!("../maps/map07_top_bottom_priority.json"),
    include_str!("../maps/map08_adaptive_assist.json"),
    include_str!("../maps/map09_left_right.json"),
    include_str!("../maps/map10_single_rotation.json"),
    include_str!("../maps/map11_four_corners.json"),
    include_str!("../maps/map12_sequential_rotations.json"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Coordination,
    Awareness,
    ActionConsistency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub angle: f64,
}

impl Pose {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Per-item sampling ranges; scales multiply the item's declared value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRanges {
    pub mass_scale: [f64; 2],
    pub footprint_scale: [f64; 2],
    pub shapes: Vec<ItemShape>,
}

impl Default for ItemRanges {
    fn default() -> Self {
        ItemRanges {
            mass_scale: [0.5, 2.0],
            footprint_scale: [0.8, 1.25],
            shapes: vec![
                ItemShape::Circle,
                ItemShape::Polygon { sides: 4 },
                ItemShape::Polygon { sides: 5 },
                ItemShape::Polygon { sides: 6 },
                ItemShape::Star { points: 5 },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSpec {
    pub shape: ItemShape,
    pub size: SizeClass,
    pub mass: f64,
    pub footprint_radius: f64,
    pub spawn: Pose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub randomization: Option<ItemRanges>,
}

impl ItemSpec {
    pub fn attributes(&self) -> AttributeTuple {
        AttributeTuple::new(self.shape, self.size, self.mass, self.footprint_radius)
    }
}

/// Quantized identity of an item's physical attributes. Two items with the
/// same tuple count as identical objects when splitting datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttributeTuple {
    pub shape: ItemShape,
    pub size: SizeClass,
    pub mass_centi: u32,
    pub footprint_milli: u32,
}

impl AttributeTuple {
    pub fn new(shape: ItemShape, size: SizeClass, mass: f64, footprint: f64) -> Self {
        AttributeTuple {
            shape,
            size,
            mass_centi: (mass * 100.0).round() as u32,
            footprint_milli: (footprint * 1000.0).round() as u32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub schema: String,
    pub id: u32,
    pub name: String,
    pub category: Category,
    pub walls: Vec<Rect>,
    pub goal_regions: Vec<Rect>,
    pub items: Vec<ItemSpec>,
    pub agent_spawns: [Pose; 2],
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub notes: String,
}

/// Outside-the-arena slabs that act as the four boundary walls.
pub const BOUNDARY: [Rect; 4] = [
    Rect::new(-1.0, -1.0, 0.0, 2.0),
    Rect::new(1.0, -1.0, 2.0, 2.0),
    Rect::new(-1.0, -1.0, 2.0, 0.0),
    Rect::new(-1.0, 1.0, 2.0, 2.0),
];

impl MapSpec {
    /// Map walls followed by the four arena boundary slabs.
    pub fn solids(&self) -> impl Iterator<Item = &Rect> + '_ {
        self.walls.iter().chain(BOUNDARY.iter())
    }

    pub fn from_json(text: &str) -> Result<MapSpec> {
        let spec: MapSpec =
            serde_json::from_str(text).map_err(|e| Error::MapValidation(format!("malformed map document: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("map spec serializes")
    }

    /// Stable content hash (hex) of the canonical JSON encoding.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("map spec serializes");
        let digest = Sha256::digest(&bytes);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn has_randomization(&self) -> bool {
        self.items.iter().any(|i| i.randomization.is_some())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::MapValidation(format!("map {} ({}): {msg}", self.id, self.name)));
        if self.schema != MAP_SCHEMA {
            return fail(format!("schema {:?} is not {MAP_SCHEMA:?}", self.schema));
        }
        let arena = Rect::new(0.0, 0.0, 1.0, 1.0);
        for (k, w) in self.walls.iter().enumerate() {
            if !w.is_well_formed() || !arena.contains(Vec2::new(w.x0, w.y0)) || !arena.contains(Vec2::new(w.x1, w.y1)) {
                return fail(format!("wall {k} is malformed or leaves the arena"));
            }
        }
        for (k, g) in self.goal_regions.iter().enumerate() {
            if !g.is_well_formed() || !arena.contains(Vec2::new(g.x0, g.y0)) || !arena.contains(Vec2::new(g.x1, g.y1)) {
                return fail(format!("goal region {k} is malformed or leaves the arena"));
            }
        }
        if !self.items.is_empty() && self.goal_regions.is_empty() {
            return fail("items present but no goal region".into());
        }
        for (k, item) in self.items.iter().enumerate() {
            if !(item.mass.is_finite() && item.mass > 0.0) {
                return fail(format!("item {k} mass must be positive"));
            }
            let (lo, hi) = item.size.footprint_band();
            if !(item.footprint_radius >= lo && item.footprint_radius < hi) {
                return fail(format!(
                    "item {k} footprint {} outside the {:?} band [{lo}, {hi})",
                    item.footprint_radius, item.size
                ));
            }
            if let ItemShape::Polygon { sides } = item.shape {
                if sides < 3 {
                    return fail(format!("item {k} polygon needs at least 3 sides"));
                }
            }
            if let Some(r) = &item.randomization {
                if r.shapes.is_empty() || r.mass_scale[0] > r.mass_scale[1] || r.footprint_scale[0] > r.footprint_scale[1] {
                    return fail(format!("item {k} randomization ranges are empty"));
                }
            }
        }
        let goal_area: f64 = self.goal_regions.iter().map(Rect::area).sum();
        let item_area: f64 = self.items.iter().map(|i| std::f64::consts::PI * i.footprint_radius.powi(2)).sum();
        if goal_area < item_area {
            return fail(format!("goal area {goal_area:.4} is smaller than total item footprint {item_area:.4}"));
        }
        if let Some(msg) = self.spawn_conflict() {
            return fail(msg);
        }
        Ok(())
    }

    /// Describes the first overlap among spawn poses, if any.
    fn spawn_conflict(&self) -> Option<String> {
        let agents: Vec<Vec2> = self.agent_spawns.iter().map(Pose::position).collect();
        for (a, p) in agents.iter().enumerate() {
            if !p.is_finite() {
                return Some(format!("agent {a} spawn is not finite"));
            }
            if self.solids().any(|w| circle_rect(*p, AGENT_RADIUS, w).is_some()) {
                return Some(format!("agent {a} spawns inside a wall"));
            }
        }
        if agents[0].distance(agents[1]) < 2.0 * AGENT_RADIUS {
            return Some("agent spawns overlap".into());
        }
        let hulls: Vec<_> = self
            .items
            .iter()
            .map(|i| item_hull(i.shape, i.footprint_radius, i.spawn.position(), i.spawn.angle))
            .collect();
        for (k, h) in hulls.iter().enumerate() {
            if !self.items[k].spawn.position().is_finite() {
                return Some(format!("item {k} spawn is not finite"));
            }
            if self.solids().any(|w| overlap(h, &crate::geometry::Hull::from_rect(w)).is_some()) {
                return Some(format!("item {k} spawns inside a wall"));
            }
            for (a, p) in agents.iter().enumerate() {
                let agent = crate::geometry::Hull::Circle {
                    center: *p,
                    radius: AGENT_RADIUS,
                };
                if overlap(&agent, h).is_some() {
                    return Some(format!("item {k} overlaps agent {a} at spawn"));
                }
            }
            for (j, other) in hulls.iter().enumerate().skip(k + 1) {
                if overlap(h, other).is_some() {
                    return Some(format!("items {k} and {j} overlap at spawn"));
                }
            }
        }
        None
    }
}

/// Number of maps in the built-in catalog.
pub const CATALOG_SIZE: u32 = CATALOG.len() as u32;

/// Loads a built-in map by id (1..=12).
pub fn builtin_map(id: u32) -> Result<MapSpec> {
    let text = id
        .checked_sub(1)
        .and_then(|i| CATALOG.get(i as usize))
        .ok_or_else(|| Error::MapValidation(format!("unknown map id {id}; the catalog has maps 1..={CATALOG_SIZE}")))?;
    MapSpec::from_json(text)
}

/// Loads a map from either a catalog id or a JSON file path.
pub fn load_map(id_or_path: &str) -> Result<MapSpec> {
    if let Ok(id) = id_or_path.parse::<u32>() {
        return builtin_map(id);
    }
    let path = Path::new(id_or_path);
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MapSpec::from_json(&text)
}

pub fn all_builtin_maps() -> Vec<MapSpec> {
    (1..=CATALOG_SIZE).map(|id| builtin_map(id).expect("catalog maps are valid")).collect()
}

/// Samples new item attributes; same `(map, seed)` always yields the same spec.
pub fn randomize(map: &MapSpec, seed: u64) -> Result<MapSpec> {
    randomize_excluding(map, seed, &HashSet::new())
}

/// Like [`randomize`], but never produces an item whose attribute tuple is in
/// `excluded`.
pub fn randomize_excluding(map: &MapSpec, seed: u64, excluded: &HashSet<AttributeTuple>) -> Result<MapSpec> {
    if !map.has_randomization() {
        return Err(Error::MapValidation(format!(
            "map {} declares no randomization ranges",
            map.id
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (u64::from(map.id) << 48));
    let mut out = map.clone();
    for k in 0..out.items.len() {
        let Some(ranges) = map.items[k].randomization.clone() else {
            continue;
        };
        let nominal = &map.items[k];
        let (lo, hi) = nominal.size.footprint_band();
        let mut accepted = false;
        for _ in 0..MAX_DRAWS {
            let shape = ranges.shapes[rng.random_range(0..ranges.shapes.len())];
            let mass = quantize(nominal.mass * sample(&mut rng, ranges.mass_scale), 100.0);
            let footprint = quantize(
                (nominal.footprint_radius * sample(&mut rng, ranges.footprint_scale)).clamp(lo, hi - 1e-3),
                1000.0,
            );
            let candidate = ItemSpec {
                shape,
                mass,
                footprint_radius: footprint,
                ..nominal.clone()
            };
            if excluded.contains(&candidate.attributes()) {
                continue;
            }
            out.items[k] = candidate;
            if out.spawn_conflict().is_none() {
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::ExhaustedSampling {
                item: k,
                draws: MAX_DRAWS,
            });
        }
    }
    out.validate()?;
    Ok(out)
}

fn sample(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..=range[1])
    } else {
        range[0]
    }
}

fn quantize(v: f64, scale: f64) -> f64 {
    (v * scale).round() / scale
}

/// Every attribute tuple `randomize` could produce for `item`.
pub fn attribute_space(item: &ItemSpec) -> HashSet<AttributeTuple> {
    let ranges = item.randomization.clone().unwrap_or_default();
    let (lo, hi) = item.size.footprint_band();
    let mass_lo = (item.mass * ranges.mass_scale[0] * 100.0).round() as u32;
    let mass_hi = (item.mass * ranges.mass_scale[1] * 100.0).round() as u32;
    let fp = |s: f64| ((item.footprint_radius * s).clamp(lo, hi - 1e-3) * 1000.0).round() as u32;
    let (fp_lo, fp_hi) = (fp(ranges.footprint_scale[0]), fp(ranges.footprint_scale[1]));
    let mut out = HashSet::new();
    for &shape in &ranges.shapes {
        for m in mass_lo..=mass_hi {
            for f in fp_lo..=fp_hi {
                out.insert(AttributeTuple {
                    shape,
                    size: item.size,
                    mass_centi: m,
                    footprint_milli: f,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_is_valid_and_ordered() {
        let maps = all_builtin_maps();
        assert_eq!(maps.len(), 12);
        let names = [
            "Hand Off",
            "Pass Or Split",
            "Efficient Routes",
            "Priority Pick",
            "Corner Decision",
            "Distance Priority",
            "Top Bottom Priority",
            "Adaptive Assist",
            "Left Right",
            "Single Rotation",
            "Four Corners",
            "Sequential Rotations",
        ];
        for (k, m) in maps.iter().enumerate() {
            assert_eq!(m.id as usize, k + 1);
            assert_eq!(m.name, names[k]);
            let expected = match k {
                0..=3 => Category::Coordination,
                4..=7 => Category::Awareness,
                _ => Category::ActionConsistency,
            };
            assert_eq!(m.category, expected, "map {}", m.id);
        }
    }

    #[test]
    fn coordination_maps_hold_only_small_items() {
        for id in 1..=4 {
            let m = builtin_map(id).unwrap();
            assert!(m.items.iter().all(|i| i.size == SizeClass::Small), "map {id}");
        }
    }

    #[test]
    fn four_corners_has_large_items_in_each_corner() {
        let m = builtin_map(11).unwrap();
        assert_eq!(m.items.len(), 4);
        let mut quadrants = HashSet::new();
        for item in &m.items {
            assert_eq!(item.size, SizeClass::Large);
            let p = item.spawn.position();
            assert!((p.x < 0.25 || p.x > 0.75) && (p.y < 0.25 || p.y > 0.75));
            quadrants.insert((p.x > 0.5, p.y > 0.5));
        }
        assert_eq!(quadrants.len(), 4);
    }

    #[test]
    fn unknown_id_is_rejected() {
        assert!(matches!(builtin_map(0), Err(Error::MapValidation(_))));
        assert!(matches!(builtin_map(13), Err(Error::MapValidation(_))));
    }

    #[test]
    fn small_goal_region_is_rejected() {
        let mut m = builtin_map(3).unwrap();
        m.goal_regions = vec![Rect::new(0.45, 0.45, 0.46, 0.46)];
        let err = MapSpec::from_json(&m.to_json()).unwrap_err();
        assert!(matches!(err, Error::MapValidation(ref s) if s.contains("goal area")), "{err}");
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let mut m = builtin_map(2).unwrap();
        m.schema = "movingout-map/0".into();
        assert!(matches!(m.validate(), Err(Error::MapValidation(_))));
    }

    #[test]
    fn overlapping_spawn_is_rejected() {
        let mut m = builtin_map(3).unwrap();
        m.agent_spawns[1] = m.agent_spawns[0];
        assert!(m.validate().is_err());
    }

    #[test]
    fn json_round_trip_preserves_spec() {
        for m in all_builtin_maps() {
            let back = MapSpec::from_json(&m.to_json()).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.content_hash(), m.content_hash());
        }
    }

    #[test]
    fn randomize_is_deterministic() {
        let m = builtin_map(6).unwrap();
        assert_eq!(randomize(&m, 42).unwrap(), randomize(&m, 42).unwrap());
    }

    #[test]
    fn randomize_preserves_identity_and_ranges() {
        for m in all_builtin_maps() {
            let r = randomize(&m, 7).unwrap();
            assert_eq!(r.items.len(), m.items.len());
            for (a, b) in m.items.iter().zip(&r.items) {
                assert_eq!(a.size, b.size);
                assert_eq!(a.spawn, b.spawn);
                let ranges = a.randomization.as_ref().unwrap();
                assert!(ranges.shapes.contains(&b.shape));
                let ratio = b.mass / a.mass;
                assert!(ratio >= ranges.mass_scale[0] - 0.01 && ratio <= ranges.mass_scale[1] + 0.01);
            }
        }
    }

    #[test]
    fn different_seeds_change_some_attribute() {
        let m = builtin_map(8).unwrap();
        for s in 0..100u64 {
            let a = randomize(&m, 2 * s).unwrap();
            let b = randomize(&m, 2 * s + 1).unwrap();
            assert!(
                a.items.iter().zip(&b.items).any(|(x, y)| x.attributes() != y.attributes()),
                "seed pair {s}"
            );
        }
    }

    #[test]
    fn exhausted_exclusion_fails() {
        let m = builtin_map(4).unwrap();
        let all: HashSet<_> = m.items.iter().flat_map(attribute_space).collect();
        let err = randomize_excluding(&m, 1, &all).unwrap_err();
        assert!(matches!(err, Error::ExhaustedSampling { .. }));
    }

    #[test]
    fn exclusion_is_honoured() {
        let m = builtin_map(5).unwrap();
        let first = randomize(&m, 3).unwrap();
        let taken: HashSet<_> = first.items.iter().map(ItemSpec::attributes).collect();
        for seed in 0..20 {
            let r = randomize_excluding(&m, seed, &taken).unwrap();
            assert!(r.items.iter().all(|i| !taken.contains(&i.attributes())));
        }
    }
}
