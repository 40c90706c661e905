//! Reactive stage: replay the horizon, apply revealed events, and reallocate
//! beams whose assignment no longer holds.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::constraints::{visible_separation, ConstraintBeam, Ephemeris};
use crate::domain::{
    channel_mask, Beam, BeamId, Event, EventPayload, FrequencyAssignment, FrequencyPlan, GridConfig, PieceState,
    PlanPiece, Scenario, Slot, Trajectory, UserId,
};
use crate::geometry::{grid_steps, SatId, Vec3};
use crate::solver::SolveConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Kept,
    /// Moved inside its own widened interval.
    Widened,
    MovedToSlot,
    MovedToReservedSpectrum,
    ReSolved,
    Deactivated,
}

impl Action {
    pub fn is_reallocation(self) -> bool {
        matches!(
            self,
            Action::Widened | Action::MovedToSlot | Action::MovedToReservedSpectrum | Action::ReSolved
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Delay,
    TrajectoryChange,
    NewUser,
    /// Start of a beam the baseline left deactivated.
    Activation,
}

impl EventKind {
    pub fn of(p: &EventPayload) -> Self {
        match p {
            EventPayload::Delay { .. } => EventKind::Delay,
            EventPayload::TrajectoryChange { .. } => EventKind::TrajectoryChange,
            EventPayload::NewUser { .. } => EventKind::NewUser,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpsRecord {
    pub t: f64,
    pub event: EventKind,
    pub user_id: UserId,
    pub beam_id: BeamId,
    pub action: Action,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assignment: Option<FrequencyAssignment>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OperationsLog {
    pub records: Vec<OpsRecord>,
    pub n_realloc: u64,
    pub deactivations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSummary {
    pub records: usize,
    pub n_realloc: u64,
    pub deactivations: u64,
    pub by_action: BTreeMap<Action, usize>,
}

impl OperationsLog {
    pub fn push(&mut self, r: OpsRecord) {
        if r.action.is_reallocation() {
            self.n_realloc += 1;
        }
        if r.action == Action::Deactivated {
            self.deactivations += 1;
        }
        self.records.push(r);
    }

    /// One JSON object per line.
    pub fn write_ndjson<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn summary(&self) -> LogSummary {
        let mut by_action = BTreeMap::new();
        for r in &self.records {
            *by_action.entry(r.action).or_insert(0) += 1;
        }
        LogSummary {
            records: self.records.len(),
            n_realloc: self.n_realloc,
            deactivations: self.deactivations,
            by_action,
        }
    }
}

/// Channels another beam holds, per group, over the remaining window.
#[derive(Debug, Clone, PartialEq)]
pub struct Blocked {
    /// Assignments in use.
    pub primary: Vec<u128>,
    /// Assignments in use plus backup slots kept for other beams.
    pub reserved: Vec<u128>,
}

impl Blocked {
    pub fn new(grid: &GridConfig) -> Self {
        let n = grid.n_groups() as usize;
        Blocked {
            primary: vec![0; n],
            reserved: vec![0; n],
        }
    }
}

fn gidx(grid: &GridConfig, g: u32, p: u32) -> usize {
    ((g - 1) * grid.n_polarizations + (p - 1)) as usize
}

fn first_fit(blocked: &[u128], grid: &GridConfig, w: u32, lo: u32, hi: u32) -> Option<(u32, u32, u32)> {
    if w == 0 || lo + w - 1 > hi {
        return None;
    }
    for f in lo..=hi + 1 - w {
        let m = channel_mask(f, w);
        for g in 1..=grid.n_reuses {
            for p in 1..=grid.n_polarizations {
                if blocked[gidx(grid, g, p)] & m == 0 {
                    return Some((f, g, p));
                }
            }
        }
    }
    None
}

/// Reallocation cascade for one beam; the first step that succeeds wins.
///
/// 1. keep the current assignment;
/// 2. shrink or shift inside the current (widened) interval;
/// 3. move to the first free backup slot;
/// 4. first-fit inside the reserved spectrum;
/// 5. first-fit over the whole grid;
///
/// Steps 4 and 5 try the beam's current width first (`b_max` for a beam
/// without one) and narrow down to `b_min`.
/// 6. deactivate.
pub fn reallocate_beam(
    beam: &Beam,
    current: Option<&FrequencyAssignment>,
    slots: &[Slot],
    blocked: &Blocked,
    grid: &GridConfig,
    cfg: &SolveConfig,
) -> (Action, Option<FrequencyAssignment>) {
    let mk = |f, b, g, p| Some(FrequencyAssignment::new(beam.id, f, b, g, p));
    if let Some(a) = current {
        if blocked.primary[gidx(grid, a.g, a.p)] & a.channel_mask() == 0 {
            return (Action::Kept, Some(a.clone()));
        }
        if a.reserved_extra_channels > 0 {
            let row = blocked.reserved[gidx(grid, a.g, a.p)];
            for w in (beam.b_min..=a.b.min(beam.b_max)).rev() {
                for f in a.f..=a.f + a.b - w {
                    if row & channel_mask(f, w) == 0 {
                        return (Action::Widened, mk(f, w, a.g, a.p));
                    }
                }
            }
        }
    }
    for s in slots {
        if blocked.reserved[gidx(grid, s.g, s.p)] & channel_mask(s.f, beam.b_min) == 0 {
            return (Action::MovedToSlot, mk(s.f, beam.b_min, s.g, s.p));
        }
    }
    // relocations keep the width the beam had, narrowing only when needed
    let target = current
        .map_or(beam.b_max, |a| a.used_channels())
        .clamp(beam.b_min, beam.b_max.max(beam.b_min));
    let reserved = cfg.reserved_spectrum(grid);
    for (action, hi) in [(Action::MovedToReservedSpectrum, reserved), (Action::ReSolved, grid.n_channels)] {
        if hi == 0 {
            continue;
        }
        for w in (beam.b_min..=target).rev() {
            if let Some((f, g, p)) = first_fit(&blocked.reserved, grid, w, 1, hi) {
                return (action, mk(f, w, g, p));
            }
        }
    }
    (Action::Deactivated, None)
}

/// Candidate positions examined by the displacement step before giving up.
const DISPLACE_TRIES: usize = 16;

/// Order of events revealed at the same instant; `Equal` keeps arrival order.
pub type Priority = fn(&Event, &Event) -> Ordering;

pub fn fifo(_: &Event, _: &Event) -> Ordering {
    Ordering::Equal
}

#[derive(Debug, Clone)]
pub struct OpsConfig {
    /// Reservation parameters of the baseline (S4 to S6).
    pub solve: SolveConfig,
    pub delta_min_rad: f64,
    pub dt_s: f64,
    pub priority: Priority,
    /// Before deactivating, let one not-yet-started beam make room by moving.
    pub displace: bool,
}

impl Default for OpsConfig {
    fn default() -> Self {
        OpsConfig {
            solve: SolveConfig::default(),
            delta_min_rad: 0.8f64.to_radians(),
            dt_s: 60.0,
            priority: fifo,
            displace: false,
        }
    }
}

/// Position and serving satellite per grid step of a beam's window.
struct Track {
    first: usize,
    pts: Vec<(Vec3, Option<SatId>)>,
}

impl Track {
    fn new(g: &ConstraintBeam, eph: &Ephemeris) -> Self {
        let r = grid_steps(g.t_start, g.t_end, eph.dt);
        let r = r.start.min(eph.n_steps())..r.end.min(eph.n_steps());
        let pts = r
            .clone()
            .map(|k| {
                let pos = g.trajectory.position(k as f64 * eph.dt).ecef();
                (pos, eph.serving(k, pos))
            })
            .collect();
        Track { first: r.start, pts }
    }

    fn at(&self, k: usize) -> Option<&(Vec3, Option<SatId>)> {
        k.checked_sub(self.first).and_then(|o| self.pts.get(o))
    }

    fn steps(&self) -> std::ops::Range<usize> {
        self.first..self.first + self.pts.len()
    }
}

struct Ops<'a> {
    scenario: &'a Scenario,
    beams: &'a [Beam],
    grid: &'a GridConfig,
    cfg: &'a OpsConfig,
    eph: Ephemeris,
    geo: Vec<Option<ConstraintBeam>>,
    tracks: Vec<Option<Track>>,
    pieces: Vec<Vec<PlanPiece>>,
    slots: Vec<Vec<Slot>>,
    by_user: BTreeMap<UserId, Vec<usize>>,
    delay: BTreeMap<UserId, f64>,
    route: BTreeMap<UserId, Trajectory>,
    log: OperationsLog,
}

impl Ops<'_> {
    fn set_geo(&mut self, i: usize, g: ConstraintBeam) {
        self.tracks[i] = Some(Track::new(&g, &self.eph));
        self.geo[i] = Some(g);
    }

    /// What beam `i` knows about its user now.
    fn known_geo(&self, i: usize) -> ConstraintBeam {
        let b = &self.beams[i];
        let u = b.user_ids[0];
        let d = if b.is_mobile() { self.delay.get(&u).copied().unwrap_or(0.0) } else { 0.0 };
        let tr = self.route.get(&u).filter(|_| b.is_mobile()).unwrap_or(&b.trajectory);
        let h = self.scenario.horizon_s;
        ConstraintBeam {
            id: b.id,
            t_start: (b.t_start + d).min(h),
            t_end: (b.t_end + d).min(h),
            trajectory: if d > 0.0 { tr.shifted(d) } else { tr.clone() },
            uncertain_route: false,
            operational_area: None,
        }
    }

    fn blocked(&self, x: usize, from_step: usize) -> Blocked {
        let mut out = Blocked::new(self.grid);
        for (_, row, m, slot) in self.contributions(x, from_step) {
            if !slot {
                out.primary[row] |= m;
            }
            out.reserved[row] |= m;
        }
        out
    }

    /// Masks other beams put on beam `x` from `from_step` on, as
    /// (beam, group row, channels, is backup slot).
    fn contributions(&self, x: usize, from_step: usize) -> Vec<(usize, usize, u128, bool)> {
        let mut out = Vec::new();
        let Some(tx) = &self.tracks[x] else { return out };
        let dt = self.eph.dt;
        let thr = self.cfg.delta_min_rad;
        let np = self.grid.n_polarizations;
        let xid = self.beams[x].id;
        for (y, ty) in self.tracks.iter().enumerate() {
            let Some(ty) = ty else { continue };
            if y == x || self.pieces[y].is_empty() {
                continue;
            }
            let yid = self.beams[y].id;
            let lo = tx.steps().start.max(ty.steps().start).max(from_step);
            let hi = tx.steps().end.min(ty.steps().end);
            if lo >= hi {
                continue;
            }
            let b_min = self.beams[y].b_min;
            for pc in &self.pieces[y] {
                let PieceState::Assigned(a) = &pc.state else { continue };
                let r = grid_steps(pc.t_from, pc.t_to, dt);
                let (s, e) = (r.start.max(lo), r.end.min(hi));
                let (mut same_sat, mut close) = (false, false);
                for k in s..e {
                    let (&(px, sx), &(py, sy)) = (tx.at(k).unwrap(), ty.at(k).unwrap());
                    if sx.is_some() && sx == sy {
                        same_sat = true;
                    }
                    let (lead, other, vs) = if xid < yid { (px, py, sx) } else { (py, px, sy) };
                    if let Some(v) = vs {
                        let sat = self.eph.sat_position(k, v);
                        if visible_separation(&[lead], &[other], sat).is_some_and(|d| d <= thr) {
                            close = true;
                            break;
                        }
                    }
                }
                let mut add = |g: u32, p: u32, m: u128, slot: bool| {
                    if close {
                        for gg in 1..=self.grid.n_reuses {
                            out.push((y, ((gg - 1) * np + p - 1) as usize, m, slot));
                        }
                    } else if same_sat {
                        out.push((y, gidx(self.grid, g, p), m, slot));
                    }
                };
                add(a.g, a.p, a.channel_mask(), false);
                for sl in &self.slots[y] {
                    add(sl.g, sl.p, channel_mask(sl.f, b_min), true);
                }
            }
        }
        out
    }

    /// Replaces the pieces of beam `i` from `cut` to the end of its window.
    /// Pieces before the window's (possibly shifted) start are dropped.
    fn rewrite(&mut self, i: usize, cut: f64, t_end: f64, next: &Option<FrequencyAssignment>) {
        let t_start = self.geo[i].as_ref().map_or(0.0, |g| g.t_start);
        let mut ps: Vec<PlanPiece> = std::mem::take(&mut self.pieces[i])
            .into_iter()
            .filter(|p| p.t_from < cut && p.t_to > t_start)
            .map(|mut p| {
                p.t_from = p.t_from.max(t_start);
                p.t_to = p.t_to.min(cut);
                p
            })
            .filter(|p| p.t_from < p.t_to)
            .collect();
        if cut < t_end {
            let state = match next {
                Some(a) => PieceState::Assigned(a.clone()),
                None => PieceState::Deactivated,
            };
            match ps.last_mut() {
                Some(last) if last.t_to == cut && last.state == state => last.t_to = t_end,
                _ => ps.push(PlanPiece {
                    t_from: cut,
                    t_to: t_end,
                    state,
                }),
            }
        }
        self.pieces[i] = ps;
    }

    /// Last resort before deactivation: place beam `i` at `b_min` where a
    /// single not-yet-started beam is in the way, and move that beam.
    fn displace(&mut self, i: usize, t: f64, from_step: usize) -> Option<(usize, FrequencyAssignment, Action, FrequencyAssignment)> {
        let gi = self.geo[i].clone()?;
        let (id, w) = (self.beams[i].id, self.beams[i].b_min);
        let contrib = self.contributions(i, from_step);
        let movable: Vec<bool> = (0..self.beams.len())
            .map(|y| {
                self.geo[y].as_ref().is_some_and(|g| g.t_start > t)
                    && self.pieces[y].len() == 1
                    && self.pieces[y][0].assignment().is_some()
            })
            .collect();
        let mut tries = 0;
        for f in 1..=(self.grid.n_channels + 1).saturating_sub(w) {
            let m = channel_mask(f, w);
            for g in 1..=self.grid.n_reuses {
                for p in 1..=self.grid.n_polarizations {
                    let row = gidx(self.grid, g, p);
                    let mut victim = None;
                    let mut ok = true;
                    for &(y, r, cm, _) in &contrib {
                        if r == row && cm & m != 0 {
                            if victim.is_some_and(|v| v != y) || !movable[y] {
                                ok = false;
                                break;
                            }
                            victim = Some(y);
                        }
                    }
                    let (true, Some(y)) = (ok, victim) else { continue };
                    if tries == DISPLACE_TRIES {
                        return None;
                    }
                    tries += 1;
                    let mine = FrequencyAssignment::new(id, f, w, g, p);
                    let saved_i = self.pieces[i].clone();
                    let saved_y = self.pieces[y].clone();
                    self.rewrite(i, t.max(gi.t_start), gi.t_end, &Some(mine.clone()));
                    let old = self.pieces[y][0].assignment().cloned();
                    self.pieces[y].clear();
                    let gy = self.geo[y].clone()?;
                    let ky = (gy.t_start / self.eph.dt - 1e-9).ceil().max(0.0) as usize;
                    let blocked = self.blocked(y, ky);
                    let (action, next) =
                        reallocate_beam(&self.beams[y], old.as_ref(), &[], &blocked, self.grid, &self.cfg.solve);
                    match (action, next) {
                        (Action::Deactivated, _) | (_, None) => {
                            self.pieces[i] = saved_i;
                            self.pieces[y] = saved_y;
                        }
                        (action, Some(a)) => {
                            self.pieces[y] = saved_y;
                            self.rewrite(y, gy.t_start, gy.t_end, &Some(a.clone()));
                            return Some((y, mine, action, a));
                        }
                    }
                }
            }
        }
        None
    }

    /// Runs the cascade for beam `i` from `t` on and rewrites its future pieces.
    fn replan(&mut self, i: usize, t: f64, kind: EventKind, user: UserId) {
        let Some(g) = self.geo[i].clone() else { return };
        let from_step = (t / self.eph.dt - 1e-9).ceil().max(0.0) as usize;
        let current = self.pieces[i].iter().rev().find_map(|p| p.assignment().cloned());
        if current.is_none() && !self.pieces[i].is_empty() && t > g.t_start {
            // deactivated and already due; only follow the window
            self.pieces[i] = if g.t_start < g.t_end {
                vec![PlanPiece {
                    t_from: g.t_start,
                    t_to: g.t_end,
                    state: PieceState::Deactivated,
                }]
            } else {
                Vec::new()
            };
            return;
        }
        let blocked = self.blocked(i, from_step);
        let (action, next) = reallocate_beam(
            &self.beams[i],
            current.as_ref(),
            &self.slots[i],
            &blocked,
            self.grid,
            &self.cfg.solve,
        );
        if action == Action::MovedToSlot {
            if let Some(a) = &next {
                self.slots[i].retain(|s| (s.f, s.g, s.p) != (a.f, a.g, a.p));
            }
        }
        if action == Action::Deactivated && self.cfg.displace {
            if let Some((y, mine, ya, yn)) = self.displace(i, t, from_step) {
                for (beam_id, action, a) in [
                    (self.beams[y].id, ya, yn),
                    (self.beams[i].id, Action::ReSolved, mine),
                ] {
                    self.log.push(OpsRecord {
                        t,
                        event: kind,
                        user_id: user,
                        beam_id,
                        action,
                        assignment: Some(a),
                    });
                }
                return;
            }
        }
        self.rewrite(i, t.max(g.t_start), g.t_end, &next);
        self.log.push(OpsRecord {
            t,
            event: kind,
            user_id: user,
            beam_id: self.beams[i].id,
            action,
            assignment: next,
        });
    }

    fn activate(&mut self, i: usize, t: f64) {
        let pending = self.pieces[i].iter().all(|p| p.assignment().is_none());
        if pending && self.geo[i].as_ref().is_some_and(|g| t <= g.t_start) {
            self.replan(i, t, EventKind::Activation, self.beams[i].user_ids[0]);
        }
    }

    fn apply(&mut self, e: &Event) {
        let kind = EventKind::of(&e.payload);
        let user = e.payload.user_id();
        match &e.payload {
            EventPayload::Delay { delay_s, .. } => {
                self.delay.insert(user, *delay_s);
            }
            EventPayload::TrajectoryChange { trajectory, .. } => {
                self.route.insert(user, trajectory.clone());
            }
            EventPayload::NewUser { user: u } => {
                self.route.insert(user, u.trajectory.clone());
            }
        }
        let idx = self.by_user.get(&user).cloned().unwrap_or_default();
        for i in idx {
            let g = self.known_geo(i);
            self.set_geo(i, g);
            self.replan(i, e.t_reveal, kind, user);
        }
    }
}

/// Replays the horizon over a baseline plan. `beams` must hold every beam of
/// the scenario, including those of users revealed later.
///
/// The returned plan lists transmitted resources only; backup slots are
/// tracked internally and dropped from the output.
pub fn simulate_operations(
    baseline: &FrequencyPlan,
    scenario: &Scenario,
    beams: &[Beam],
    cfg: &OpsConfig,
) -> (FrequencyPlan, OperationsLog) {
    let n = beams.len();
    let mut ops = Ops {
        scenario,
        beams,
        grid: &scenario.grid,
        cfg,
        eph: Ephemeris::new(&scenario.constellation, scenario.horizon_s, cfg.dt_s),
        geo: vec![None; n],
        tracks: (0..n).map(|_| None).collect(),
        pieces: vec![Vec::new(); n],
        slots: vec![Vec::new(); n],
        by_user: BTreeMap::new(),
        delay: BTreeMap::new(),
        route: BTreeMap::new(),
        log: OperationsLog::default(),
    };
    for (i, b) in beams.iter().enumerate() {
        if b.is_mobile() {
            ops.by_user.entry(b.user_ids[0]).or_default().push(i);
        }
        let Some(ps) = baseline.assignments.get(&b.id) else { continue };
        let mut ps = ps.clone();
        for p in &mut ps {
            if let PieceState::Assigned(a) = &mut p.state {
                if ops.slots[i].is_empty() {
                    ops.slots[i] = std::mem::take(&mut a.backup_slots);
                } else {
                    a.backup_slots.clear();
                }
            }
        }
        ops.pieces[i] = ps;
        let g = ops.known_geo(i);
        ops.set_geo(i, g);
    }
    let mut events: Vec<&Event> = scenario.events.iter().collect();
    events.sort_by(|a, b| a.t_reveal.total_cmp(&b.t_reveal).then_with(|| (cfg.priority)(a, b)));
    // beams the baseline could not place get another chance when they start
    let mut starts: Vec<(f64, usize)> = (0..n)
        .filter(|&i| !ops.pieces[i].is_empty() && ops.pieces[i].iter().all(|p| p.assignment().is_none()))
        .map(|i| (beams[i].t_start, i))
        .collect();
    starts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut starts = starts.into_iter().peekable();
    for e in events {
        while let Some((t, i)) = starts.next_if(|s| s.0 < e.t_reveal) {
            ops.activate(i, t);
        }
        if let EventPayload::NewUser { user } = &e.payload {
            if ops.by_user.get(&user.id).is_none_or(|v| v.iter().any(|&i| !ops.pieces[i].is_empty())) {
                continue;
            }
        }
        ops.apply(e);
    }
    for (t, i) in starts {
        ops.activate(i, t);
    }
    let mut plan = FrequencyPlan::default();
    for (i, b) in beams.iter().enumerate() {
        if !ops.pieces[i].is_empty() {
            plan.assignments.insert(b.id, std::mem::take(&mut ops.pieces[i]));
        }
    }
    (plan, ops.log)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Time-averaged total power.
    pub power_w: f64,
    pub power_over_p_sat: f64,
    pub n_users: usize,
    pub n_served: usize,
    pub served_fraction: f64,
    pub n_beams: usize,
    pub n_realloc: u64,
    pub realloc_per_beam: f64,
    pub deactivations: u64,
}

/// Power of the assigned pieces and service counts against realized windows.
///
/// A user is served when each of its beams with a non-empty realized window
/// is covered by the plan without a deactivated piece.
pub fn compute_metrics(
    plan: &FrequencyPlan,
    scenario: &Scenario,
    beams: &[Beam],
    log: &OperationsLog,
    dt_s: f64,
    p_sat_w: f64,
) -> Metrics {
    let by_id: BTreeMap<BeamId, &Beam> = beams.iter().map(|b| (b.id, b)).collect();
    let mut energy = 0.0;
    for (id, pieces) in &plan.assignments {
        let Some(b) = by_id.get(id) else { continue };
        for pc in pieces {
            if let Some(a) = pc.assignment() {
                let w = b.power(a.used_channels()).unwrap_or(0.0);
                energy += w * grid_steps(pc.t_from, pc.t_to, dt_s).len() as f64 * dt_s;
            }
        }
    }
    let power = energy / scenario.horizon_s;
    let mut unserved = std::collections::BTreeSet::new();
    for b in beams {
        let g = crate::scenario::realized_beam(b, scenario);
        if !(g.t_start < g.t_end) {
            continue;
        }
        let ok = plan.assignments.get(&b.id).is_some_and(|ps| {
            ps.iter().all(|p| p.state != PieceState::Deactivated)
                && ps.first().is_some_and(|p| p.t_from <= g.t_start)
                && ps.last().is_some_and(|p| p.t_to >= g.t_end)
        });
        if !ok {
            unserved.extend(b.user_ids.iter().copied());
        }
    }
    let n_users = scenario.users.len();
    let n_served = scenario.users.iter().filter(|u| !unserved.contains(&u.id)).count();
    Metrics {
        power_w: power,
        power_over_p_sat: power / p_sat_w,
        n_users,
        n_served,
        served_fraction: if n_users == 0 { 0.0 } else { n_served as f64 / n_users as f64 },
        n_beams: beams.len(),
        n_realloc: log.n_realloc,
        realloc_per_beam: if beams.is_empty() { 0.0 } else { log.n_realloc as f64 / beams.len() as f64 },
        deactivations: log.deactivations,
    }
}
