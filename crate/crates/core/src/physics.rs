//! Kinematic two-agent physics: grasping, solo and joint carrying, and
//! positional constraint projection at a fixed 10 Hz step.
//!
//! Forbidden motions never partially apply. A carry group (item plus its
//! holders) that would end up penetrating anything keeps its prior pose, and a
//! free agent that cannot be projected out of contact stays where it was.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{circle_rect, overlap, wrap_angle, Hull, Rect, Vec2};
use crate::maps::MapSpec;

pub const AGENT_RADIUS: f64 = 0.025;

/// Penetration a proposed pose may have before the move is rejected.
pub const PENETRATION_TOLERANCE: f64 = 1e-9;

/// Distance slack for "touching a wall" when applying wall friction.
pub const CONTACT_SLACK: f64 = 1e-6;

/// Projection passes for a free agent before falling back to its prior pose.
const PROJECTION_PASSES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    pub const ALL: [SizeClass; 3] = [SizeClass::Small, SizeClass::Medium, SizeClass::Large];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Half-open footprint-radius band `[lo, hi)` that defines the class.
    pub fn footprint_band(self) -> (f64, f64) {
        match self {
            SizeClass::Small => (0.012, 0.04),
            SizeClass::Medium => (0.04, 0.06),
            SizeClass::Large => (0.06, 0.1),
        }
    }

    /// Needs a partner to move at all (medium can be dragged slowly alone).
    pub fn is_heavy(self) -> bool {
        self != SizeClass::Small
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ItemShape {
    Circle,
    Polygon { sides: u8 },
    Star { points: u8 },
}

impl ItemShape {
    /// Slot in the observation's shape one-hot block.
    pub fn one_hot_index(self) -> usize {
        match self {
            ItemShape::Circle => 0,
            ItemShape::Polygon { .. } => 1,
            ItemShape::Star { .. } => 2,
        }
    }

    pub fn label(self) -> String {
        match self {
            ItemShape::Circle => "circle".into(),
            ItemShape::Polygon { sides } => format!("{sides}-gon"),
            ItemShape::Star { points } => format!("{points}-star"),
        }
    }
}

/// Collision hull of an item. Stars collide through their convex hull.
pub fn item_hull(shape: ItemShape, radius: f64, position: Vec2, angle: f64) -> Hull {
    let ring = |n: u8, offset: f64| {
        let n = n.max(3);
        Hull::Polygon(
            (0..n)
                .map(|i| position + Vec2::from_angle(angle + offset + 2.0 * PI * f64::from(i) / f64::from(n)) * radius)
                .collect(),
        )
    };
    match shape {
        ItemShape::Circle => Hull::Circle {
            center: position,
            radius,
        },
        ItemShape::Polygon { sides } => ring(sides, PI / f64::from(sides.max(3))),
        ItemShape::Star { points } => ring(points, -PI / 2.0),
    }
}

pub fn agent_hull(position: Vec2) -> Hull {
    Hull::Circle {
        center: position,
        radius: AGENT_RADIUS,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentBody {
    pub position: Vec2,
    pub heading: f64,
    /// Index of the held item.
    pub hold: Option<usize>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemBody {
    pub position: Vec2,
    pub angle: f64,
    pub shape: ItemShape,
    pub size: SizeClass,
    pub mass: f64,
    pub footprint_radius: f64,
}

impl ItemBody {
    pub fn hull(&self) -> Hull {
        item_hull(self.shape, self.footprint_radius, self.position, self.angle)
    }

    pub fn hull_at(&self, position: Vec2, angle: f64) -> Hull {
        item_hull(self.shape, self.footprint_radius, position, angle)
    }
}

/// An agent gripping an item. Offsets live in the item frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub agent: usize,
    pub item: usize,
    /// Grip point on the item boundary.
    pub grip_offset: Vec2,
    /// Agent center at grasp time; holders ride rigidly with the item.
    pub anchor: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    pub dt: f64,
    pub base_speed: f64,
    pub turn_rate_max: f64,
    /// Solo speed multiplier per size class (small, medium, large).
    pub solo_factor: [f64; 3],
    /// Joint-carry speed multiplier per size class.
    pub duo_factor: [f64; 3],
    pub mass_reference: f64,
    pub mass_speed_exponent: f64,
    pub wall_friction_factor: f64,
    pub grab_radius: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        PhysicsParams {
            dt: 0.1,
            base_speed: 0.3,
            turn_rate_max: 2.0 * PI,
            solo_factor: [1.0, 0.4, 0.0],
            duo_factor: [1.0, 0.9, 0.8],
            mass_reference: 1.0,
            mass_speed_exponent: 0.5,
            wall_friction_factor: 0.5,
            grab_radius: 0.05,
        }
    }
}

impl PhysicsParams {
    /// Largest move distance per step.
    pub fn max_move(&self) -> f64 {
        self.base_speed * self.dt
    }

    pub fn max_turn(&self) -> f64 {
        self.turn_rate_max * self.dt
    }

    pub fn mass_factor(&self, mass: f64) -> f64 {
        (self.mass_reference / mass).powf(self.mass_speed_exponent).min(1.0)
    }
}

/// One agent's control for a step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionCommand {
    /// Signed distance along the heading; clamped to the per-step maximum.
    pub move_distance: f64,
    /// Target heading as (cos, sin).
    pub heading: Vec2,
    /// Toggle: grasp when free, release when holding.
    pub grasp: bool,
}

impl ActionCommand {
    pub fn new(move_distance: f64, heading_angle: f64, grasp: bool) -> Self {
        ActionCommand {
            move_distance,
            heading: Vec2::from_angle(heading_angle),
            grasp,
        }
    }

    /// Stand still facing `heading_angle`.
    pub fn idle(heading_angle: f64) -> Self {
        ActionCommand::new(0.0, heading_angle, false)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.move_distance.is_finite() {
            return Err(Error::InvalidAction(format!("move distance {} is not finite", self.move_distance)));
        }
        if !self.heading.is_finite() {
            return Err(Error::InvalidAction("heading components are not finite".into()));
        }
        let norm = self.heading.length();
        if (norm - 1.0).abs() > 1e-3 {
            return Err(Error::InvalidAction(format!("heading norm {norm} is not 1")));
        }
        Ok(())
    }

    /// `[move, cos, sin, grasp]`, the layout used in files and network inputs.
    pub fn to_array(&self) -> [f64; 4] {
        [self.move_distance, self.heading.x, self.heading.y, if self.grasp { 1.0 } else { 0.0 }]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        ActionCommand {
            move_distance: v[0],
            heading: Vec2::new(v[1], v[2]),
            grasp: v[3] >= 0.5,
        }
    }

    /// Commanded planar velocity direction scaled by move distance.
    pub fn velocity(&self) -> Vec2 {
        self.heading * self.move_distance
    }
}

/// Which two bodies touched. Wall indices count map walls first, then the
/// four arena boundary slabs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "pair", rename_all = "kebab-case")]
pub enum BodyPair {
    AgentWall { agent: usize, wall: usize },
    AgentAgent,
    AgentItem { agent: usize, item: usize },
    ItemWall { item: usize, wall: usize },
    ItemItem { a: usize, b: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    #[serde(flatten)]
    pub pair: BodyPair,
    pub depth: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub collisions: Vec<Collision>,
}

impl CollisionReport {
    pub fn is_empty(&self) -> bool {
        self.collisions.is_empty()
    }

    pub fn max_penetration(&self) -> f64 {
        self.collisions.iter().map(|c| c.depth).fold(0.0, f64::max)
    }
}

/// Things that happened during a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Event {
    Grasp { agent: usize, item: usize },
    Release { agent: usize, item: usize },
    /// A carry group's motion was rejected and it kept its pose.
    Blocked { item: usize },
    Contact {
        #[serde(flatten)]
        pair: BodyPair,
    },
    EnteredGoal { item: usize },
    LeftGoal { item: usize },
    Timeout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub map: Arc<MapSpec>,
    pub agents: [AgentBody; 2],
    pub items: Vec<ItemBody>,
    /// Sorted by (item, agent).
    pub attachments: Vec<Attachment>,
}

/// Width of the canonical state vector for `items` items.
pub fn state_width(items: usize) -> usize {
    16 + 3 * items
}

impl WorldState {
    /// Spawn configuration of a map.
    pub fn from_map(map: Arc<MapSpec>) -> WorldState {
        let agents = [0, 1].map(|a| {
            let pose = map.agent_spawns[a];
            AgentBody {
                position: pose.position(),
                heading: wrap_angle(pose.angle),
                hold: None,
                radius: AGENT_RADIUS,
            }
        });
        let items = map
            .items
            .iter()
            .map(|s| ItemBody {
                position: s.spawn.position(),
                angle: s.spawn.angle,
                shape: s.shape,
                size: s.size,
                mass: s.mass,
                footprint_radius: s.footprint_radius,
            })
            .collect();
        WorldState {
            map,
            agents,
            items,
            attachments: Vec::new(),
        }
    }

    pub fn attachment_of(&self, agent: usize) -> Option<&Attachment> {
        self.attachments.iter().find(|a| a.agent == agent)
    }

    pub fn holders(&self, item: usize) -> impl Iterator<Item = &Attachment> + '_ {
        self.attachments.iter().filter(move |a| a.item == item)
    }

    pub fn holder_count(&self, item: usize) -> usize {
        self.holders(item).count()
    }

    /// Both agents hold `item`.
    pub fn jointly_held(&self, item: usize) -> bool {
        self.holder_count(item) == 2
    }

    pub fn item_delivered(&self, item: usize) -> bool {
        let hull = self.items[item].hull();
        self.map.goal_regions.iter().any(|g| hull.inside_rect(g))
    }

    pub fn all_delivered(&self) -> bool {
        (0..self.items.len()).all(|i| self.item_delivered(i))
    }

    pub fn in_wall_contact(&self, agent: usize) -> bool {
        let body = &self.agents[agent];
        self.map
            .solids()
            .any(|w| w.distance(body.position) <= body.radius + CONTACT_SLACK)
    }

    pub fn width(&self) -> usize {
        state_width(self.items.len())
    }

    /// Canonical flat encoding: per agent `[x, y, heading, held item or -1,
    /// anchor x, anchor y, grip x, grip y]`, then per item `[x, y, angle]`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.width());
        for (a, body) in self.agents.iter().enumerate() {
            v.extend([body.position.x, body.position.y, body.heading]);
            match self.attachment_of(a) {
                Some(att) => v.extend([
                    att.item as f64,
                    att.anchor.x,
                    att.anchor.y,
                    att.grip_offset.x,
                    att.grip_offset.y,
                ]),
                None => v.extend([-1.0, 0.0, 0.0, 0.0, 0.0]),
            }
        }
        for item in &self.items {
            v.extend([item.position.x, item.position.y, item.angle]);
        }
        v
    }

    /// Inverse of [`WorldState::to_vector`]; item attributes come from `map`.
    pub fn from_vector(map: Arc<MapSpec>, v: &[f64]) -> Result<WorldState> {
        let mut state = WorldState::from_map(map);
        if v.len() != state.width() {
            return Err(Error::WidthMismatch {
                expected: state.width(),
                actual: v.len(),
            });
        }
        for a in 0..2 {
            let s = &v[8 * a..8 * a + 8];
            state.agents[a].position = Vec2::new(s[0], s[1]);
            state.agents[a].heading = s[2];
            if s[3] >= 0.0 {
                let item = s[3] as usize;
                if s[3].fract() != 0.0 || item >= state.items.len() {
                    return Err(Error::Decode(format!("agent {a} holds unknown item {}", s[3])));
                }
                state.agents[a].hold = Some(item);
                state.attachments.push(Attachment {
                    agent: a,
                    item,
                    anchor: Vec2::new(s[4], s[5]),
                    grip_offset: Vec2::new(s[6], s[7]),
                });
            }
        }
        for (k, item) in state.items.iter_mut().enumerate() {
            let s = &v[16 + 3 * k..19 + 3 * k];
            item.position = Vec2::new(s[0], s[1]);
            item.angle = s[2];
        }
        state.attachments.sort_by_key(|a| (a.item, a.agent));
        Ok(state)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: WorldState,
    pub events: Vec<Event>,
}

/// Advances the world by one fixed step.
pub fn step(state: &WorldState, actions: &[ActionCommand; 2], params: &PhysicsParams) -> Result<StepOutcome> {
    for (a, action) in actions.iter().enumerate() {
        action
            .validate()
            .map_err(|e| Error::InvalidAction(format!("agent {a}: {e}")))?;
    }
    let mut next = state.clone();
    let mut events = Vec::new();

    for (a, action) in actions.iter().enumerate() {
        if action.grasp {
            toggle_grasp(&mut next, a, params, &mut events);
        }
    }

    let friction = [0, 1].map(|a| {
        if state.in_wall_contact(a) {
            params.wall_friction_factor
        } else {
            1.0
        }
    });

    let max_turn = params.max_turn();
    for (a, action) in actions.iter().enumerate() {
        let body = &mut next.agents[a];
        let delta = wrap_angle(action.heading.angle() - body.heading);
        if delta.abs() > 1e-12 {
            body.heading = wrap_angle(body.heading + delta.clamp(-max_turn, max_turn));
        }
    }

    let max_move = params.max_move();
    let disp = [0, 1].map(|a| {
        let distance = actions[a].move_distance.clamp(-max_move, max_move) * friction[a];
        if distance == 0.0 {
            Vec2::ZERO
        } else {
            Vec2::from_angle(next.agents[a].heading) * distance
        }
    });

    carry_update(&mut next, &disp, params, &mut events);
    for (a, d) in disp.iter().enumerate() {
        if next.agents[a].hold.is_none() {
            move_free_agent(&mut next, a, *d, &mut events);
        }
    }
    Ok(StepOutcome { state: next, events })
}

/// Applies a grasp toggle for one agent outside of a full step.
pub fn resolve_grasp(state: &WorldState, agent: usize, toggle: bool, params: &PhysicsParams) -> WorldState {
    let mut next = state.clone();
    if toggle {
        toggle_grasp(&mut next, agent, params, &mut Vec::new());
    }
    next
}

fn toggle_grasp(state: &mut WorldState, agent: usize, params: &PhysicsParams, events: &mut Vec<Event>) {
    if let Some(item) = state.agents[agent].hold.take() {
        state.attachments.retain(|a| a.agent != agent);
        events.push(Event::Release { agent, item });
        return;
    }
    let p = state.agents[agent].position;
    let r = state.agents[agent].radius;
    let mut best: Option<(f64, usize, Hull)> = None;
    for (i, item) in state.items.iter().enumerate() {
        if state.holder_count(i) >= 2 {
            continue;
        }
        let hull = item.hull();
        let gap = hull.signed_distance(p) - r;
        if gap <= params.grab_radius && best.as_ref().is_none_or(|b| gap < b.0) {
            best = Some((gap, i, hull));
        }
    }
    let Some((_, i, hull)) = best else {
        return;
    };
    let item = &state.items[i];
    let grip = hull.closest_boundary_point(p);
    let attachment = Attachment {
        agent,
        item: i,
        grip_offset: (grip - item.position).rotate(-item.angle),
        anchor: (p - item.position).rotate(-item.angle),
    };
    state.attachments.push(attachment);
    state.attachments.sort_by_key(|a| (a.item, a.agent));
    state.agents[agent].hold = Some(i);
    events.push(Event::Grasp { agent, item: i });
}

/// Least-squares rigid motion mapping `points` onto `points + moves`.
/// Returns `(rotation, pivot, translation)`: x maps to
/// `pivot + R(rotation)(x - pivot) + translation`.
pub fn rigid_fit(points: &[Vec2], moves: &[Vec2]) -> (f64, Vec2, Vec2) {
    let n = points.len() as f64;
    let cp = points.iter().fold(Vec2::ZERO, |s, p| s + *p) * (1.0 / n);
    let targets: Vec<Vec2> = points.iter().zip(moves).map(|(p, d)| *p + *d).collect();
    let cq = targets.iter().fold(Vec2::ZERO, |s, p| s + *p) * (1.0 / n);
    let (mut cross, mut dot) = (0.0, 0.0);
    for (p, q) in points.iter().zip(&targets) {
        let a = *p - cp;
        let b = *q - cq;
        cross += a.cross(b);
        dot += a.dot(b);
    }
    let rotation = if cross == 0.0 && dot == 0.0 {
        0.0
    } else {
        cross.atan2(dot)
    };
    (rotation, cp, cq - cp)
}

/// Moves every held item with its holders and rejects groups whose new pose
/// would penetrate anything.
pub fn carry_update(state: &mut WorldState, disp: &[Vec2; 2], params: &PhysicsParams, events: &mut Vec<Event>) {
    for item in 0..state.items.len() {
        let holders: Vec<Attachment> = state.holders(item).copied().collect();
        if holders.is_empty() || holders.iter().all(|h| disp[h.agent] == Vec2::ZERO) {
            continue;
        }
        let body = &state.items[item];
        let mass = params.mass_factor(body.mass);
        let (position, angle) = match holders.as_slice() {
            [h] => {
                let factor = params.solo_factor[body.size.index()] * mass;
                if factor == 0.0 {
                    events.push(Event::Blocked { item });
                    continue;
                }
                (body.position + disp[h.agent] * factor, body.angle)
            }
            _ => {
                let factor = params.duo_factor[body.size.index()] * mass;
                let grips: Vec<Vec2> = holders
                    .iter()
                    .map(|h| body.position + h.grip_offset.rotate(body.angle))
                    .collect();
                let moves: Vec<Vec2> = holders.iter().map(|h| disp[h.agent]).collect();
                let (rotation, pivot, translation) = rigid_fit(&grips, &moves);
                let turn = rotation * factor;
                (
                    pivot + (body.position - pivot).rotate(turn) + translation * factor,
                    wrap_angle(body.angle + turn),
                )
            }
        };
        let hull = body.hull_at(position, angle);
        let riders: Vec<(usize, Vec2)> = holders
            .iter()
            .map(|h| (h.agent, position + h.anchor.rotate(angle)))
            .collect();
        if let Some(pair) = group_conflict(state, item, &hull, &riders) {
            events.push(Event::Blocked { item });
            events.push(Event::Contact { pair });
            continue;
        }
        state.items[item].position = position;
        state.items[item].angle = angle;
        for (agent, p) in riders {
            state.agents[agent].position = p;
        }
    }
}

/// First penetration a proposed carry-group pose would cause.
fn group_conflict(state: &WorldState, item: usize, hull: &Hull, riders: &[(usize, Vec2)]) -> Option<BodyPair> {
    let deep = |c: Option<crate::geometry::Contact>| c.is_some_and(|c| c.depth > PENETRATION_TOLERANCE);
    for (w, rect) in state.map.solids().enumerate() {
        if deep(hull_rect(hull, rect)) {
            return Some(BodyPair::ItemWall { item, wall: w });
        }
        for &(agent, p) in riders {
            if deep(circle_rect(p, AGENT_RADIUS, rect)) {
                return Some(BodyPair::AgentWall { agent, wall: w });
            }
        }
    }
    for (j, other) in state.items.iter().enumerate() {
        if j == item {
            continue;
        }
        let other_hull = other.hull();
        if deep(overlap(hull, &other_hull)) {
            return Some(BodyPair::ItemItem {
                a: item.min(j),
                b: item.max(j),
            });
        }
        for &(agent, p) in riders {
            if deep(overlap(&agent_hull(p), &other_hull)) {
                return Some(BodyPair::AgentItem { agent, item: j });
            }
        }
    }
    for (a, body) in state.agents.iter().enumerate() {
        if riders.iter().any(|r| r.0 == a) {
            continue;
        }
        let bystander = agent_hull(body.position);
        if deep(overlap(hull, &bystander)) {
            return Some(BodyPair::AgentItem { agent: a, item });
        }
        if riders.iter().any(|&(_, p)| deep(overlap(&agent_hull(p), &bystander))) {
            return Some(BodyPair::AgentAgent);
        }
    }
    None
}

fn hull_rect(hull: &Hull, rect: &Rect) -> Option<crate::geometry::Contact> {
    match hull {
        Hull::Circle { center, radius } => circle_rect(*center, *radius, rect),
        Hull::Polygon(_) => overlap(hull, &Hull::from_rect(rect)),
    }
}

/// Circle center placed just outside `rect` along the shortest exit.
fn place_outside(p: Vec2, r: f64, rect: &Rect) -> Vec2 {
    let closest = rect.closest_point(p);
    let offset = p - closest;
    let dist = offset.length();
    if dist > 1e-12 {
        return closest + offset * (r / dist);
    }
    let faces = [
        (p.x - rect.x0, Vec2::new(rect.x0 - r, p.y)),
        (rect.x1 - p.x, Vec2::new(rect.x1 + r, p.y)),
        (p.y - rect.y0, Vec2::new(p.x, rect.y0 - r)),
        (rect.y1 - p.y, Vec2::new(p.x, rect.y1 + r)),
    ];
    faces
        .into_iter()
        .fold((f64::INFINITY, p), |best, f| if f.0 < best.0 { f } else { best })
        .1
}

fn move_free_agent(state: &mut WorldState, agent: usize, d: Vec2, events: &mut Vec<Event>) {
    if d == Vec2::ZERO {
        return;
    }
    let prior = state.agents[agent].position;
    let r = state.agents[agent].radius;
    let other = state.agents[1 - agent].position;
    let item_hulls: Vec<Hull> = state.items.iter().map(ItemBody::hull).collect();
    let mut touched = Vec::new();
    let mut p = prior + d;
    for _ in 0..PROJECTION_PASSES {
        let mut pushed = false;
        for (w, rect) in state.map.solids().enumerate() {
            if circle_rect(p, r, rect).is_some() {
                p = place_outside(p, r, rect);
                pushed = true;
                touched.push(BodyPair::AgentWall { agent, wall: w });
            }
        }
        for (i, hull) in item_hulls.iter().enumerate() {
            if let Some(c) = overlap(&agent_hull(p), hull) {
                p += c.normal * c.depth;
                pushed = true;
                touched.push(BodyPair::AgentItem { agent, item: i });
            }
        }
        if let Some(c) = overlap(&agent_hull(p), &agent_hull(other)) {
            p += c.normal * c.depth;
            pushed = true;
            touched.push(BodyPair::AgentAgent);
        }
        if !pushed {
            break;
        }
    }
    if agent_penetration(state, agent, p, &item_hulls) > PENETRATION_TOLERANCE {
        p = prior;
    }
    state.agents[agent].position = p;
    touched.dedup();
    events.extend(touched.into_iter().map(|pair| Event::Contact { pair }));
}

fn agent_penetration(state: &WorldState, agent: usize, p: Vec2, item_hulls: &[Hull]) -> f64 {
    let r = state.agents[agent].radius;
    let walls = state
        .map
        .solids()
        .filter_map(|w| circle_rect(p, r, w))
        .map(|c| c.depth);
    let items = item_hulls.iter().filter_map(|h| overlap(&agent_hull(p), h)).map(|c| c.depth);
    let partner = overlap(&agent_hull(p), &agent_hull(state.agents[1 - agent].position)).map(|c| c.depth);
    walls.chain(items).chain(partner).fold(0.0, f64::max)
}

/// Every pairwise overlap in the state, with penetration depths.
pub fn check_collisions(state: &WorldState) -> CollisionReport {
    let mut collisions = Vec::new();
    let item_hulls: Vec<Hull> = state.items.iter().map(ItemBody::hull).collect();
    for (w, rect) in state.map.solids().enumerate() {
        for (a, body) in state.agents.iter().enumerate() {
            if let Some(c) = circle_rect(body.position, body.radius, rect) {
                collisions.push(Collision {
                    pair: BodyPair::AgentWall { agent: a, wall: w },
                    depth: c.depth,
                });
            }
        }
        for (i, hull) in item_hulls.iter().enumerate() {
            if let Some(c) = hull_rect(hull, rect) {
                collisions.push(Collision {
                    pair: BodyPair::ItemWall { item: i, wall: w },
                    depth: c.depth,
                });
            }
        }
    }
    let [a0, a1] = &state.agents;
    if let Some(c) = overlap(
        &Hull::Circle {
            center: a0.position,
            radius: a0.radius,
        },
        &Hull::Circle {
            center: a1.position,
            radius: a1.radius,
        },
    ) {
        collisions.push(Collision {
            pair: BodyPair::AgentAgent,
            depth: c.depth,
        });
    }
    for (a, body) in state.agents.iter().enumerate() {
        let circle = Hull::Circle {
            center: body.position,
            radius: body.radius,
        };
        for (i, hull) in item_hulls.iter().enumerate() {
            if let Some(c) = overlap(&circle, hull) {
                collisions.push(Collision {
                    pair: BodyPair::AgentItem { agent: a, item: i },
                    depth: c.depth,
                });
            }
        }
    }
    for i in 0..item_hulls.len() {
        for j in i + 1..item_hulls.len() {
            if let Some(c) = overlap(&item_hulls[i], &item_hulls[j]) {
                collisions.push(Collision {
                    pair: BodyPair::ItemItem { a: i, b: j },
                    depth: c.depth,
                });
            }
        }
    }
    CollisionReport { collisions }
}

/// Every body center lies inside the unit arena.
pub fn within_arena(state: &WorldState) -> bool {
    let inside = |p: Vec2| p.is_finite() && (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y);
    state.agents.iter().all(|a| inside(a.position)) && state.items.iter().all(|i| inside(i.position))
}
