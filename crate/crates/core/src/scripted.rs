//! Scripted expert agents used to generate demonstrations.
//!
//! Each expert reconstructs the full world from its ego observation and the
//! map, then picks one of: carry what it holds, help a partner stuck with a
//! heavy item, walk to the next item, or wait.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::env::reconstruct_state;
use crate::error::Result;
use crate::geometry::{wrap_angle, Rect, Vec2};
use crate::maps::MapSpec;
use crate::metrics::cell_center;
use crate::nav::{segment_all, wall_clearance, Cell, Field, Occupancy};
use crate::physics::{self, ActionCommand, Event, PhysicsParams, WorldState, AGENT_RADIUS};

/// Extra wall clearance kept by walking agents.
const WALK_MARGIN: f64 = 0.004;
/// Extra wall clearance kept by carried items.
const CARRY_MARGIN: f64 = 0.004;
/// Extra clearance for a jointly carried item, leaving room for the holders.
const JOINT_MARGIN: f64 = 0.03;
/// Gaps from the item boundary tried when placing an approach pose.
const POSE_GAPS: [f64; 3] = [0.004, 0.012, 0.022];
/// Grasp when within this gap of the target item, regardless of pose.
const LOOSE_GRASP_GAP: f64 = 0.014;
const LOOKAHEAD: usize = 8;
/// Separation kept between a holder's own item and the next nearest item.
const HOLD_MARGIN: f64 = 0.006;
/// Items this much farther than the nearest still count as possibly held.
const HOLD_SLACK: f64 = 0.02;
/// Sampling step for candidate delivery spots.
const GOAL_SPOT_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Nearest item first.
    Greedy,
    /// Prefers medium and large items, which need two agents.
    Helper,
}

#[derive(Debug, Clone)]
struct ItemPlan {
    solo_clearance: f64,
    joint_clearance: f64,
    solo: Field,
    joint: Field,
    solo_occ: Occupancy,
    joint_occ: Occupancy,
    /// Goal rectangles shrunk so an item centered inside is delivered.
    inset_goals: Vec<Rect>,
}

#[derive(Debug, Clone)]
pub struct ScriptedExpert {
    map: Arc<MapSpec>,
    role: Role,
    noise: f64,
    params: PhysicsParams,
    walk: Occupancy,
    plans: Vec<ItemPlan>,
}

fn inset(rect: &Rect, by: f64) -> Rect {
    let c = rect.center();
    let (hw, hh) = ((rect.x1 - rect.x0) / 2.0 - by, (rect.y1 - rect.y0) / 2.0 - by);
    let (hw, hh) = (hw.max(0.0), hh.max(0.0));
    Rect::new(c.x - hw, c.y - hh, c.x + hw, c.y + hh)
}

/// How much closer `agent` is to item `i` than to any other item.
fn hold_margin(state: &WorldState, agent: usize, i: usize) -> f64 {
    let p = state.agents[agent].position;
    let own = state.items[i].hull().signed_distance(p);
    state
        .items
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != i)
        .map(|(_, it)| it.hull().signed_distance(p) - own)
        .fold(f64::INFINITY, f64::min)
}

/// Re-picks held items when the nearest-item guess is close to a tie:
/// an item both agents could share wins, then undelivered items, then
/// heavy ones.
fn attribute_holds(mut state: WorldState) -> WorldState {
    let candidates = |state: &WorldState, a: usize| -> Vec<(usize, f64)> {
        let p = state.agents[a].position;
        let d: Vec<f64> = state.items.iter().map(|it| it.hull().signed_distance(p)).collect();
        let best = d.iter().copied().fold(f64::INFINITY, f64::min);
        d.iter()
            .enumerate()
            .filter(|&(_, &x)| x <= best + HOLD_SLACK)
            .map(|(k, &x)| (k, x))
            .collect()
    };
    let holding: Vec<usize> = (0..2).filter(|&a| state.agents[a].hold.is_some()).collect();
    if holding.is_empty() {
        return state;
    }
    let sets: Vec<Vec<(usize, f64)>> = (0..2).map(|a| candidates(&state, a)).collect();
    let mut picks = [None, None];
    for &a in &holding {
        let other = 1 - a;
        let shared = |k: usize| holding.contains(&other) && sets[other].iter().any(|c| c.0 == k);
        picks[a] = sets[a]
            .iter()
            .min_by(|x, y| {
                let key = |c: &(usize, f64)| (!shared(c.0), state.item_delivered(c.0), !state.items[c.0].size.is_heavy());
                key(x).cmp(&key(y)).then(x.1.total_cmp(&y.1))
            })
            .map(|c| c.0);
    }
    if (0..2).all(|a| picks[a] == state.agents[a].hold) {
        return state;
    }
    let before = state.clone();
    state.attachments.clear();
    for a in 0..2 {
        state.agents[a].hold = None;
    }
    for &a in &holding {
        let Some(i) = picks[a] else { continue };
        let item = &before.items[i];
        let p = state.agents[a].position;
        let grip = item.hull().closest_boundary_point(p);
        state.attachments.push(physics::Attachment {
            agent: a,
            item: i,
            grip_offset: (grip - item.position).rotate(-item.angle),
            anchor: (p - item.position).rotate(-item.angle),
        });
        state.agents[a].hold = Some(i);
    }
    state.attachments.sort_by_key(|x| (x.item, x.agent));
    state
}

/// Swaps the two agents so agent 1 becomes the ego agent.
fn swap_agents(state: &WorldState) -> WorldState {
    let mut s = state.clone();
    s.agents.swap(0, 1);
    for a in &mut s.attachments {
        a.agent = 1 - a.agent;
    }
    s.attachments.sort_by_key(|x| (x.item, x.agent));
    s
}

struct Target {
    item: usize,
    pose: Vec2,
    cost: u32,
}

impl ScriptedExpert {
    pub fn new(map: Arc<MapSpec>, role: Role, noise: f64) -> ScriptedExpert {
        let walk = Occupancy::with_clearance(&map, AGENT_RADIUS + WALK_MARGIN);
        let plans = map
            .items
            .iter()
            .map(|item| {
                let r = item.footprint_radius;
                let inset_goals: Vec<Rect> = map.goal_regions.iter().map(|g| inset(g, r + 0.008)).collect();
                let field = |clearance: f64| {
                    let occ = Occupancy::with_clearance(&map, clearance);
                    let f = Field::to_rects(&occ, &inset_goals);
                    if f.reachable().next().is_some() {
                        f
                    } else {
                        Field::to_rects(&occ, &map.goal_regions)
                    }
                };
                // Joint carries keep extra room for the holders unless that
                // makes the goals unreachable.
                let reaches = |clearance: f64| {
                    let occ = Occupancy::with_clearance(&map, clearance);
                    Field::to_rects(&occ, &inset_goals).reachable().next().is_some()
                };
                let joint_clearance = if reaches(r + JOINT_MARGIN) { r + JOINT_MARGIN } else { r + CARRY_MARGIN };
                ItemPlan {
                    solo_clearance: r + CARRY_MARGIN,
                    joint_clearance,
                    solo: field(r + CARRY_MARGIN),
                    joint: field(joint_clearance),
                    solo_occ: Occupancy::with_clearance(&map, r + CARRY_MARGIN),
                    joint_occ: Occupancy::with_clearance(&map, joint_clearance),
                    inset_goals,
                }
            })
            .collect();
        ScriptedExpert {
            map,
            role,
            noise,
            params: PhysicsParams::default(),
            walk,
            plans,
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// Chooses an action for the agent whose ego observation is `obs`.
    pub fn act(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> Result<ActionCommand> {
        let partner_view = crate::policies::swap_blocks(obs)?;
        let state = attribute_holds(reconstruct_state(obs, &partner_view, self.map.clone())?);
        let mut action = self.decide(&state, rng);
        if self.noise > 0.0 {
            let jitter = Normal::new(0.0, self.noise).expect("noise scale is finite and non-negative");
            let angle = action.heading.angle() + jitter.sample(rng);
            action.heading = Vec2::from_angle(angle);
        }
        Ok(action)
    }

    /// Decision for agent 0 of `state`.
    fn decide(&self, state: &WorldState, rng: &mut ChaCha8Rng) -> ActionCommand {
        let me = &state.agents[0];
        if let Some(i) = me.hold {
            return self.carry(state, i, rng);
        }
        if let Some(i) = state.agents[1].hold {
            if state.items[i].size.is_heavy() && state.holder_count(i) == 1 && !state.item_delivered(i) {
                // Grip beside the item, across from the partner, so neither
                // holder ends up leading the way.
                let item = state.items[i].position;
                let away = item - state.agents[1].position;
                let side = match self.carry_target(state, i, true).and_then(|t| (t - item).normalized()) {
                    Some(fwd) => {
                        let perp = fwd.rotate(FRAC_PI_2);
                        if perp.dot(away) >= 0.0 { perp } else { perp * -1.0 }
                    }
                    None => away,
                };
                if let Some(pose) = self.pose_for(state, i, side, &self.walk_field(state, Some(i))) {
                    return self.approach(state, i, pose.0, Some(0.7));
                }
            }
        }
        if let Some(t) = self.choose_target(state, true) {
            let loose = (!self.pass_mode(state)).then_some(0.0);
            return self.approach(state, t.item, t.pose, loose);
        }
        self.stage(state)
    }

    fn idle(&self, state: &WorldState) -> ActionCommand {
        ActionCommand::idle(state.agents[0].heading)
    }

    fn toggle(&self, state: &WorldState) -> ActionCommand {
        ActionCommand::new(0.0, state.agents[0].heading, true)
    }

    /// Walk BFS from agent 0 with items as obstacles (except `target`).
    fn walk_field(&self, state: &WorldState, target: Option<usize>) -> Field {
        let mut occ = self.walk.clone();
        for (i, item) in state.items.iter().enumerate() {
            // The target stays passable near its boundary so poses next to
            // it remain reachable.
            let shrink = if Some(i) == target { 0.7 } else { 1.0 };
            occ.block_disc(item.position, shrink * item.footprint_radius + AGENT_RADIUS - 0.005);
        }
        occ.block_disc(state.agents[1].position, 2.0 * AGENT_RADIUS - 0.005);
        let me = state.agents[0].position;
        match occ.nearest_free(me, 2) {
            Some(cell) => {
                occ.set(cell, true);
                Field::bfs(&occ, [cell])
            }
            None => Field::bfs(&occ, []),
        }
    }

    /// Whether agent 0 can walk to any goal region.
    fn goal_reachable(&self, state: &WorldState) -> bool {
        let field = self.static_walk(state);
        let found = field
            .reachable()
            .any(|(c, _)| self.map.goal_regions.iter().any(|g| g.contains(cell_center(c.0, c.1))));
        found
    }

    fn static_walk(&self, state: &WorldState) -> Field {
        match self.walk.nearest_free(state.agents[0].position, 2) {
            Some(cell) => Field::bfs(&self.walk, [cell]),
            None => Field::bfs(&self.walk, []),
        }
    }

    /// Agent 0 cannot reach a goal and must pass items to the partner.
    fn pass_mode(&self, state: &WorldState) -> bool {
        !self.map.goal_regions.is_empty() && !self.goal_reachable(state)
    }

    /// Closest goal distance item `i` could have while agent 0 still reaches
    /// it; items nearer than this are the partner's to finish.
    fn frontier(&self, state: &WorldState, i: usize) -> Option<u32> {
        let plan = &self.plans[i];
        self.static_walk(state).reachable().filter_map(|(c, _)| plan.solo.get(c)).min()
    }

    /// Item `i` is past what agent 0 can usefully do and the partner can
    /// grip it from its side.
    fn handed_over(&self, state: &WorldState, i: usize) -> bool {
        let Some(front) = self.frontier(state, i) else {
            return false;
        };
        let past = self.plans[i]
            .solo
            .at(state.items[i].position)
            .is_some_and(|(_, d)| d + 1 < front);
        if !past {
            return false;
        }
        let theirs = swap_agents(state);
        let side = theirs.agents[0].position - theirs.items[i].position;
        self.pose_for(&theirs, i, side, &self.walk_field(&theirs, Some(i))).is_some()
    }

    fn carry(&self, state: &WorldState, i: usize, rng: &mut ChaCha8Rng) -> ActionCommand {
        if state.item_delivered(i) {
            return self.toggle(state);
        }
        let joint = state.holder_count(i) == 2;
        let item = &state.items[i];
        if item.size.is_heavy() && !joint {
            if let Some(j) = state.agents[1].hold {
                // Both stuck holding different heavy items: the higher index lets go.
                if j != i && state.items[j].size.is_heavy() && state.holder_count(j) == 1 && i > j {
                    return self.toggle(state);
                }
            }
            let solo = self.params.solo_factor[item.size.index()];
            if solo == 0.0 || state.agents[1].hold.is_none() {
                return self.idle(state);
            }
        }
        if self.pass_mode(state) && self.handed_over(state, i) {
            return self.toggle(state);
        }
        self.pursue(state, i, joint, rng)
    }

    /// Point the carried item should head for next.
    fn carry_target(&self, state: &WorldState, i: usize, joint: bool) -> Option<Vec2> {
        let plan = &self.plans[i];
        let pos = state.items[i].position;
        let r = state.items[i].footprint_radius;
        let use_joint = joint && plan.joint.at(pos).is_some();
        let (static_field, occ, clearance) = if use_joint {
            (&plan.joint, &plan.joint_occ, plan.joint_clearance)
        } else {
            (&plan.solo, &plan.solo_occ, plan.solo_clearance)
        };
        let others = |p: Vec2, extra: f64| {
            state
                .items
                .iter()
                .enumerate()
                .all(|(k, it)| k == i || p.distance(it.position) >= r + it.footprint_radius + extra)
        };
        let clear = |b: Vec2| {
            segment_all(pos, b, 0.004, |p| wall_clearance(&self.map, p) >= clearance && others(p, 0.004))
        };
        if let Some(q) = self.goal_spot(state, i, &others, &clear) {
            return Some(q);
        }
        let mut occ = occ.clone();
        for (k, it) in state.items.iter().enumerate() {
            if k != i {
                occ.block_disc(it.position, r + it.footprint_radius + 0.004);
            }
        }
        let dynamic = Field::to_rects(&occ, &plan.inset_goals);
        let field = if dynamic.at(pos).is_some() { &dynamic } else { static_field };
        let (cell, _) = field.at(pos)?;
        let path = field.descend(cell, LOOKAHEAD);
        let pick = path
            .iter()
            .rev()
            .map(|c| cell_center(c.0, c.1))
            .find(|&p| clear(p))
            .or_else(|| path.first().map(|c| cell_center(c.0, c.1)));
        Some(pick.unwrap_or(cell_center(cell.0, cell.1)))
    }

    /// Delivery spot in a goal that item `i` can head straight for, away from
    /// other items and biased toward the goal interior.
    fn goal_spot(
        &self,
        state: &WorldState,
        i: usize,
        others: &dyn Fn(Vec2, f64) -> bool,
        clear: &dyn Fn(Vec2) -> bool,
    ) -> Option<Vec2> {
        let pos = state.items[i].position;
        let mut spots: Vec<(f64, Vec2)> = Vec::new();
        for g in &self.plans[i].inset_goals {
            let nx = ((g.x1 - g.x0) / GOAL_SPOT_STEP).floor() as usize;
            let ny = ((g.y1 - g.y0) / GOAL_SPOT_STEP).floor() as usize;
            for ix in 0..=nx {
                for iy in 0..=ny {
                    let p = Vec2::new(g.x0 + ix as f64 * GOAL_SPOT_STEP, g.y0 + iy as f64 * GOAL_SPOT_STEP);
                    if !others(p, 0.015) {
                        continue;
                    }
                    let depth = (p.x - g.x0).min(g.x1 - p.x).min(p.y - g.y0).min(g.y1 - p.y);
                    spots.push((p.distance(pos) - 0.6 * depth.min(0.08), p));
                }
            }
        }
        spots.sort_by(|a, b| a.0.total_cmp(&b.0));
        spots.into_iter().take(40).map(|(_, p)| p).find(|&p| clear(p))
    }

    fn pursue(&self, state: &WorldState, i: usize, joint: bool, rng: &mut ChaCha8Rng) -> ActionCommand {
        let item = &state.items[i];
        let Some(target) = self.carry_target(state, i, joint) else {
            return self.idle(state);
        };
        let Some(desired) = (target - item.position).normalized() else {
            return self.idle(state);
        };
        let narrow = [0i32, 1, -1, 2, -2];
        let wide = [3i32, -3, 4, -4];
        let try_dirs = |ks: &[i32]| {
            for fraction in [1.0, 0.35] {
                for &k in ks {
                    let dir = desired.rotate(f64::from(k) * 0.35);
                    if self.carry_moves(state, i, dir, fraction, joint) {
                        return Some((dir, fraction));
                    }
                }
            }
            None
        };
        let mut pick = try_dirs(&narrow);
        if pick.is_none() && !joint {
            // Holding from the leading side blocks the way: let go and
            // come back from behind.
            let me = state.agents[0].position;
            if (me - item.position).dot(desired) > 0.0 {
                return self.toggle(state);
            }
        }
        if pick.is_none() {
            pick = try_dirs(&wide);
        }
        if let Some((dir, fraction)) = pick {
            let mut action = self.drive(state, dir, fraction);
            if joint && !self.aligned(state.agents[1].heading, dir) {
                // Let the partner finish turning so the item is not twisted.
                action.move_distance = 0.0;
            }
            return action;
        }
        // Unstick with a random direction that at least moves. Joint holders
        // derive it from the item pose so both pick the same one.
        let p = item.position;
        let mut bits = p.x.to_bits() ^ p.y.to_bits().rotate_left(21) ^ item.angle.to_bits().rotate_left(42);
        let mut angle = 0.0;
        for _ in 0..12 {
            angle = if joint {
                bits = bits.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
                (bits >> 11) as f64 / (1u64 << 53) as f64 * TAU
            } else {
                rng.random::<f64>() * TAU
            };
            if self.carry_step(state, i, Vec2::from_angle(angle), 0.5, joint).is_some() {
                break;
            }
        }
        let mut action = self.drive(state, Vec2::from_angle(angle), 0.5);
        if joint && !self.aligned(state.agents[1].heading, Vec2::from_angle(angle)) {
            action.move_distance = 0.0;
        }
        action
    }

    /// Simulates one carry step along `dir` with headings already aligned.
    fn carry_moves(&self, state: &WorldState, i: usize, dir: Vec2, fraction: f64, joint: bool) -> bool {
        let Some(out) = self.carry_step(state, i, dir, fraction, joint) else {
            return false;
        };
        let item = &state.items[i];
        let factors = if joint { self.params.duo_factor } else { self.params.solo_factor };
        let expected = self.params.max_move() * fraction * factors[item.size.index()] * self.params.mass_factor(item.mass);
        let moved = out.items[i].position - item.position;
        moved.dot(dir) > 0.3 * expected
    }

    /// Outcome of one carry step along `dir`, if it is neither blocked nor
    /// leaves a holder ambiguous.
    fn carry_step(&self, state: &WorldState, i: usize, dir: Vec2, fraction: f64, joint: bool) -> Option<WorldState> {
        let mut s = state.clone();
        let angle = dir.angle();
        s.agents[0].heading = angle;
        let step = self.params.max_move() * fraction;
        let partner = if joint {
            s.agents[1].heading = angle;
            ActionCommand::new(step, angle, false)
        } else {
            ActionCommand::idle(s.agents[1].heading)
        };
        let out = physics::step(&s, &[ActionCommand::new(step, angle, false), partner], &self.params).ok()?;
        if out.events.iter().any(|e| matches!(e, Event::Blocked { item } if *item == i)) {
            return None;
        }
        // Holders must stay unambiguously nearest to their own item, since
        // the held item is recovered from proximity.
        for h in out.state.holders(i) {
            let before = hold_margin(state, h.agent, i);
            if hold_margin(&out.state, h.agent, i) < before.min(HOLD_MARGIN) {
                return None;
            }
        }
        Some(out.state)
    }

    /// Whether a heading will be along `dir` (or its reverse) after one turn.
    fn aligned(&self, heading: f64, dir: Vec2) -> bool {
        let off = wrap_angle(dir.angle() - heading).abs();
        off.min(PI - off) <= self.params.max_turn()
    }

    /// Turns toward `dir` (or its reverse, whichever is closer) and moves a
    /// fraction of full speed along it, scaled down while still turning.
    fn drive(&self, state: &WorldState, dir: Vec2, fraction: f64) -> ActionCommand {
        let h = state.agents[0].heading;
        let forward = wrap_angle(dir.angle() - h);
        let (angle, sign) = if forward.abs() <= FRAC_PI_2 {
            (dir.angle(), 1.0)
        } else {
            (wrap_angle(dir.angle() + PI), -1.0)
        };
        let left = (wrap_angle(angle - h).abs() - self.params.max_turn()).max(0.0);
        let scale = if left >= FRAC_PI_2 { 0.0 } else { left.cos() };
        ActionCommand::new(sign * self.params.max_move() * fraction.clamp(0.0, 1.0) * scale, angle, false)
    }

    /// Walks to `pose` and grasps item `i` on arrival. With `loose`, being
    /// close enough to grab on roughly the pose's side counts as arrival; the
    /// value is the minimum cosine between the two directions from the item.
    fn approach(&self, state: &WorldState, i: usize, pose: Vec2, loose: Option<f64>) -> ActionCommand {
        let me = state.agents[0].position;
        let gap = state.items[i].hull().signed_distance(me) - AGENT_RADIUS;
        let at_pose = me.distance(pose) <= 0.015 && gap <= self.params.grab_radius - 0.002;
        let center = state.items[i].position;
        let near_side = match (loose, (me - center).normalized(), (pose - center).normalized()) {
            (Some(min_cos), Some(a), Some(b)) => a.dot(b) > min_cos && gap <= LOOSE_GRASP_GAP,
            _ => false,
        };
        if (at_pose || near_side) && self.nearest_item(state) == Some(i) {
            return self.toggle(state);
        }
        let field = self.walk_field(state, Some(i));
        self.walk_to(state, pose, &field)
    }

    /// Item a grasp by agent 0 would attach to right now.
    fn nearest_item(&self, state: &WorldState) -> Option<usize> {
        let me = state.agents[0].position;
        (0..state.items.len())
            .filter(|&k| state.holder_count(k) < 2)
            .map(|k| (state.items[k].hull().signed_distance(me), k))
            .filter(|(d, _)| *d - AGENT_RADIUS <= self.params.grab_radius)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, k)| k)
    }

    fn walk_clear(&self, state: &WorldState, a: Vec2, b: Vec2) -> bool {
        segment_all(a, b, 0.005, |p| {
            wall_clearance(&self.map, p) >= AGENT_RADIUS + 0.001
                && state
                    .items
                    .iter()
                    .all(|it| it.hull().signed_distance(p) >= AGENT_RADIUS + 0.001)
                && p.distance(state.agents[1].position) >= 2.0 * AGENT_RADIUS + 0.001
        })
    }

    fn walk_to(&self, state: &WorldState, goal: Vec2, field: &Field) -> ActionCommand {
        let me = state.agents[0].position;
        let dist = me.distance(goal);
        let Some(dir) = (goal - me).normalized() else {
            return self.idle(state);
        };
        if self.walk_clear(state, me, goal) {
            return self.drive(state, dir, dist / self.params.max_move());
        }
        let path = self.path_to(field, goal);
        let pick = path
            .iter()
            .take(LOOKAHEAD)
            .rev()
            .map(|c| cell_center(c.0, c.1))
            .find(|&p| self.walk_clear(state, me, p))
            .or_else(|| path.first().map(|c| cell_center(c.0, c.1)));
        match pick.and_then(|p| (p - me).normalized()) {
            Some(d) => self.drive(state, d, 1.0),
            None => self.drive(state, dir, 1.0),
        }
    }

    /// Cells from agent 0 toward `goal`, following the walk field backwards.
    fn path_to(&self, field: &Field, goal: Vec2) -> Vec<Cell> {
        let Some((end, _)) = field.at(goal) else {
            return Vec::new();
        };
        let mut path = vec![end];
        path.extend(field.descend(end, usize::MAX));
        path.pop();
        path.reverse();
        path
    }

    /// Reachable pose next to item `i`, preferring the side `side` points to
    /// (from the item outward). Returns the pose and its walk cost.
    fn pose_for(&self, state: &WorldState, i: usize, side: Vec2, field: &Field) -> Option<(Vec2, u32)> {
        let item = &state.items[i];
        let hull = item.hull();
        let base = side.normalized().map_or(0.0, Vec2::angle);
        for gap in POSE_GAPS {
            // Nearest directions to `side` first.
            for k in (0..32).map(|k: i32| if k % 2 == 0 { k / 2 } else { -(k + 1) / 2 }) {
                let u = Vec2::from_angle(base + f64::from(k) * PI / 16.0);
                let want = AGENT_RADIUS + gap;
                let (mut lo, mut hi) = (0.0, item.footprint_radius + want + 0.01);
                for _ in 0..30 {
                    let mid = 0.5 * (lo + hi);
                    if hull.signed_distance(item.position + u * mid) < want {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let pose = item.position + u * hi;
                if wall_clearance(&self.map, pose) < AGENT_RADIUS + 0.002 {
                    continue;
                }
                let blocked = state
                    .items
                    .iter()
                    .enumerate()
                    .any(|(k, it)| k != i && it.hull().signed_distance(pose) < want + 0.006);
                if blocked || pose.distance(state.agents[1].position) < 2.0 * AGENT_RADIUS + 0.004 {
                    continue;
                }
                if let Some((_, d)) = field.at(pose) {
                    return Some((pose, d));
                }
            }
        }
        None
    }

    /// Best item for agent 0 to fetch next. With `avoid`, small items the
    /// partner is closer to are left to the partner.
    fn choose_target(&self, state: &WorldState, avoid: bool) -> Option<Target> {
        let pass = self.pass_mode(state);
        let mut options: Vec<Target> = Vec::new();
        for i in 0..state.items.len() {
            if state.item_delivered(i) || state.holder_count(i) > 0 {
                continue;
            }
            if pass && self.handed_over(state, i) {
                continue;
            }
            let field = self.walk_field(state, Some(i));
            let side = match self.carry_target(state, i, false) {
                Some(t) => state.items[i].position - t,
                None => state.agents[0].position - state.items[i].position,
            };
            if let Some((pose, cost)) = self.pose_for(state, i, side, &field) {
                options.push(Target { item: i, pose, cost });
            }
        }
        let heavy_first = self.role == Role::Helper;
        options.sort_by_key(|t| {
            let light = !state.items[t.item].size.is_heavy();
            (heavy_first && light, t.cost, t.item)
        });
        if avoid && state.agents[1].hold.is_none() && options.len() > 1 {
            let theirs = self.choose_target(&swap_agents(state), false);
            if let Some(theirs) = theirs {
                let mine = &options[0];
                let small = !state.items[mine.item].size.is_heavy();
                let key = |cost: u32, p: Vec2| (cost, (p.x * 1e6) as i64, (p.y * 1e6) as i64);
                if small
                    && theirs.item == mine.item
                    && key(theirs.cost, state.agents[1].position) < key(mine.cost, state.agents[0].position)
                {
                    options.remove(0);
                }
            }
        }
        options.into_iter().next()
    }

    /// Nothing to fetch: stand near an item the partner is bringing over when
    /// it cannot be reached directly, otherwise stay put.
    fn stage(&self, state: &WorldState) -> ActionCommand {
        let Some(j) = state.agents[1].hold else {
            return self.idle(state);
        };
        let field = self.walk_field(state, None);
        let partner = state.agents[1].position;
        if field.at(partner).is_some() {
            return self.idle(state);
        }
        let item = &state.items[j];
        let keep = item.footprint_radius + AGENT_RADIUS + 0.04;
        let spot = field
            .reachable()
            .map(|(c, _)| cell_center(c.0, c.1))
            .filter(|p| p.distance(item.position) >= keep)
            .min_by(|a, b| a.distance(item.position).total_cmp(&b.distance(item.position)));
        match spot {
            Some(p) if p.distance(state.agents[0].position) > 0.01 => self.walk_to(state, p, &field),
            _ => self.idle(state),
        }
    }
}
