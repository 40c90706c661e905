//! Proactive stage: static per-beam assignments minimizing time-averaged power
//! under the collapsed restriction sets, with optional reservations.
//!
//! Resource conflicts between two restricted beams:
//! - handover pair (`R_E`): same reuse group and polarization with overlapping
//!   channel intervals;
//! - interference pair (`R_A`): same polarization with overlapping intervals.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{visible_separation, ConstraintBeam, ConstraintConfig, Ephemeris, RestrictionSets};
use crate::domain::{channel_mask, Beam, BeamId, FrequencyAssignment, FrequencyPlan, GridConfig, PieceState, PlanPiece, Slot};
use crate::geometry::grid_steps;

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("inconsistent input: {0}")]
    InconsistentInput(String),
    #[error("search space too large: more than {0} nodes")]
    SearchSpaceTooLarge(u64),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// S4: reserved adjacent channels per mobile beam, in units of `b_min`.
    pub x_ch: Option<u32>,
    /// S5: backup slots per mobile beam.
    pub x_slots: Option<u32>,
    /// S6: fraction of the grid kept free at baseline time.
    pub x_spec: Option<f64>,
    pub seed: u64,
    /// Node budget of the backtracking placement search.
    pub node_budget: u64,
    pub horizon_s: f64,
    pub dt_s: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            x_ch: None,
            x_slots: None,
            x_spec: None,
            seed: 0,
            node_budget: 200_000,
            horizon_s: 86_400.0,
            dt_s: 60.0,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.x_ch == Some(0) {
            v.push("x_ch must be at least 1".to_string());
        }
        if self.x_slots == Some(0) {
            v.push("x_slots must be at least 1".to_string());
        }
        if self.x_spec.is_some_and(|x| !(x > 0.0 && x < 1.0)) {
            v.push("x_spec must lie in (0, 1)".to_string());
        }
        if !(self.horizon_s > 0.0 && self.dt_s > 0.0) {
            v.push("horizon and dt must be positive".to_string());
        }
        v
    }

    /// Channels kept free for emergencies: `ceil(x_spec * N_ch)`.
    pub fn reserved_spectrum(&self, grid: &GridConfig) -> u32 {
        self.x_spec
            .map(|x| (x * grid.n_channels as f64 - 1e-9).ceil().max(0.0) as u32)
            .unwrap_or(0)
            .min(grid.n_channels)
    }

    /// Lowest channel index available at baseline time.
    pub fn first_channel(&self, grid: &GridConfig) -> u32 {
        1 + self.reserved_spectrum(grid)
    }

    pub fn extra_channels(&self, beam: &Beam) -> u32 {
        match self.x_ch {
            Some(x) if beam.is_mobile() => x * beam.b_min,
            _ => 0,
        }
    }

    pub fn backup_slots(&self, beam: &Beam) -> u32 {
        match self.x_slots {
            Some(x) if beam.is_mobile() => x,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub objective_watts: f64,
    pub served: Vec<BeamId>,
    pub deactivated: Vec<BeamId>,
    pub assignments: Vec<FrequencyAssignment>,
    /// Beams that received fewer backup slots than requested.
    pub short_of_slots: Vec<BeamId>,
    pub search_nodes: u64,
    pub upgrades: u64,
    pub seed: u64,
    /// Not serialized, so reports stay byte-identical between runs.
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Time-averaged power of one beam held at `watts` over its window.
pub fn beam_energy_share(beam: &Beam, watts: f64, horizon_s: f64, dt_s: f64) -> f64 {
    let n = grid_steps(beam.t_start, beam.t_end, dt_s).len() as f64;
    watts * n * dt_s / horizon_s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Interference,
    Handover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Item {
    g: u32,
    p: u32,
    mask: u128,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Place {
    f: u32,
    w: u32,
    g: u32,
    p: u32,
    slots: Vec<Slot>,
}

/// Solver view of the instance with beams in index order.
struct Instance<'a> {
    beams: &'a [Beam],
    grid: &'a GridConfig,
    adj: Vec<Vec<(usize, Kind)>>,
    w_min: Vec<u32>,
    w_max: Vec<u32>,
    extra: Vec<u32>,
    n_slots: Vec<u32>,
    weight: Vec<f64>,
    f_lo: u32,
}

impl<'a> Instance<'a> {
    fn new(
        beams: &'a [Beam],
        sets: &RestrictionSets,
        grid: &'a GridConfig,
        cfg: &SolveConfig,
    ) -> Result<Self, SolveError> {
        let mut v = cfg.validate();
        v.extend(grid.validate());
        if let Some(m) = v.first() {
            return Err(SolveError::InconsistentInput(m.clone()));
        }
        let mut index = BTreeMap::new();
        for (k, b) in beams.iter().enumerate() {
            if index.insert(b.id, k).is_some() {
                return Err(SolveError::InconsistentInput(format!("duplicate beam id {}", b.id)));
            }
            let pt = &b.power_table;
            if pt.beam_id != b.id || pt.b_min != b.b_min || pt.b_max() != b.b_max || b.b_min < 1 {
                return Err(SolveError::InconsistentInput(format!(
                    "beam {} has no matching power table",
                    b.id
                )));
            }
        }
        let mut adj = vec![Vec::new(); beams.len()];
        let mut link = |i: BeamId, j: BeamId, kind: Kind| -> Result<(), SolveError> {
            let (Some(&a), Some(&b)) = (index.get(&i), index.get(&j)) else {
                return Ok(());
            };
            for (x, y) in [(a, b), (b, a)] {
                match adj[x].iter_mut().find(|(n, _)| *n == y) {
                    Some(e) => {
                        if kind == Kind::Interference {
                            e.1 = kind;
                        }
                    }
                    None => adj[x].push((y, kind)),
                }
            }
            Ok(())
        };
        for &(i, j) in &sets.r_e {
            link(i, j, Kind::Handover)?;
        }
        for &(i, j) in &sets.r_a {
            link(i, j, Kind::Interference)?;
        }
        for a in &mut adj {
            a.sort_unstable_by_key(|e| e.0);
        }
        let f_lo = cfg.first_channel(grid);
        let extra: Vec<u32> = beams.iter().map(|b| cfg.extra_channels(b)).collect();
        let w_min: Vec<u32> = beams.iter().zip(&extra).map(|(b, e)| b.b_min + e).collect();
        let w_max: Vec<u32> = beams
            .iter()
            .zip(&extra)
            .map(|(b, e)| (b.b_max + e).min(grid.n_channels))
            .collect();
        Ok(Instance {
            beams,
            grid,
            adj,
            w_min,
            w_max,
            extra,
            n_slots: beams.iter().map(|b| cfg.backup_slots(b)).collect(),
            weight: beams
                .iter()
                .map(|b| beam_energy_share(b, 1.0, cfg.horizon_s, cfg.dt_s))
                .collect(),
            f_lo,
        })
    }

    fn n(&self) -> usize {
        self.beams.len()
    }

    fn n_groups(&self) -> usize {
        self.grid.n_groups() as usize
    }

    fn gidx(&self, g: u32, p: u32) -> usize {
        ((g - 1) * self.grid.n_polarizations + (p - 1)) as usize
    }

    fn cost(&self, i: usize, w: u32) -> f64 {
        let b = w - self.extra[i];
        self.beams[i].power(b).expect("width inside the power table") * self.weight[i]
    }

    fn items(place: &Place, b_min: u32) -> impl Iterator<Item = Item> + '_ {
        std::iter::once(Item {
            g: place.g,
            p: place.p,
            mask: channel_mask(place.f, place.w),
        })
        .chain(place.slots.iter().map(move |s| Item {
            g: s.g,
            p: s.p,
            mask: channel_mask(s.f, b_min),
        }))
    }

    /// Per-group channel masks beam `i` must avoid, given everyone else.
    fn forbidden(&self, i: usize, state: &[Option<Place>]) -> Vec<u128> {
        let np = self.grid.n_polarizations;
        let mut forb = vec![0u128; self.n_groups()];
        for &(j, kind) in &self.adj[i] {
            let Some(pl) = &state[j] else { continue };
            for it in Self::items(pl, self.beams[j].b_min) {
                match kind {
                    Kind::Handover => forb[self.gidx(it.g, it.p)] |= it.mask,
                    Kind::Interference => {
                        for g in 1..=self.grid.n_reuses {
                            forb[((g - 1) * np + it.p - 1) as usize] |= it.mask;
                        }
                    }
                }
            }
        }
        forb
    }

    /// Lowest `(f, g, p)` fitting width `w`.
    fn first_fit(&self, forb: &[u128], w: u32) -> Option<(u32, u32, u32)> {
        let n = self.grid.n_channels;
        if w == 0 || self.f_lo + w - 1 > n {
            return None;
        }
        for f in self.f_lo..=n + 1 - w {
            let m = channel_mask(f, w);
            for g in 1..=self.grid.n_reuses {
                for p in 1..=self.grid.n_polarizations {
                    if forb[self.gidx(g, p)] & m == 0 {
                        return Some((f, g, p));
                    }
                }
            }
        }
        None
    }

    /// Whether width `w` fits anywhere in one group's free channels.
    fn fits(&self, blocked: u128, w: u32) -> bool {
        w >= 1
            && self.f_lo + w - 1 <= self.grid.n_channels
            && (self.f_lo..=self.grid.n_channels + 1 - w).any(|f| blocked & channel_mask(f, w) == 0)
    }

    /// Longest free run of channels across groups.
    fn widest(&self, forb: &[u128]) -> u32 {
        let mut best = 0;
        for &m in forb {
            let mut run = 0;
            for c in self.f_lo..=self.grid.n_channels {
                if m >> (c - 1) & 1 == 0 {
                    run += 1;
                    best = best.max(run);
                } else {
                    run = 0;
                }
            }
        }
        best
    }

    /// Places backup slots for beam `i` around its primary assignment.
    fn place_slots(&self, i: usize, place: &mut Place, state: &[Option<Place>]) {
        let want = self.n_slots[i];
        if want == 0 {
            return;
        }
        let mut forb = self.forbidden(i, state);
        let b = self.beams[i].b_min;
        let own = self.gidx(place.g, place.p);
        forb[own] |= channel_mask(place.f, place.w);
        place.slots.clear();
        for _ in 0..want {
            let Some((f, g, p)) = self.first_fit(&forb, b) else {
                break;
            };
            forb[self.gidx(g, p)] |= channel_mask(f, b);
            place.slots.push(Slot { f, g, p });
        }
    }

    fn objective(&self, state: &[Option<Place>]) -> f64 {
        state
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|pl| self.cost(i, pl.w)))
            .sum()
    }

    fn order(&self) -> Vec<usize> {
        let mut o: Vec<usize> = (0..self.n()).collect();
        o.sort_by(|&a, &b| {
            self.adj[b]
                .len()
                .cmp(&self.adj[a].len())
                .then(self.beams[b].b_min.cmp(&self.beams[a].b_min))
                .then(self.beams[a].id.cmp(&self.beams[b].id))
        });
        o
    }

    fn emit(&self, state: &[Option<Place>]) -> (FrequencyPlan, Vec<FrequencyAssignment>) {
        let mut plan = FrequencyPlan::default();
        let mut list = Vec::new();
        for (i, b) in self.beams.iter().enumerate() {
            let st = match &state[i] {
                Some(pl) => {
                    let a = FrequencyAssignment {
                        beam_id: b.id,
                        f: pl.f,
                        b: pl.w,
                        g: pl.g,
                        p: pl.p,
                        reserved_extra_channels: self.extra[i],
                        backup_slots: pl.slots.clone(),
                    };
                    list.push(a.clone());
                    PieceState::Assigned(a)
                }
                None => PieceState::Deactivated,
            };
            plan.assignments.insert(
                b.id,
                vec![PlanPiece {
                    t_from: b.t_start,
                    t_to: b.t_end,
                    state: st,
                }],
            );
        }
        (plan, list)
    }
}

/// Backtracking placement at minimum widths that maximizes the number of
/// placed beams within the node budget. The first leaf is plain first-fit.
struct Search<'a, 'b> {
    inst: &'b Instance<'a>,
    order: Vec<usize>,
    state: Vec<Option<Place>>,
    best: Option<(usize, Vec<Option<Place>>)>,
    nodes: u64,
    budget: u64,
}

impl Search<'_, '_> {
    /// Returns true when the search must stop.
    fn run(&mut self, depth: usize, served: usize) -> bool {
        let n = self.order.len();
        if depth == n {
            if self.best.as_ref().is_none_or(|(s, _)| served > *s) {
                self.best = Some((served, self.state.clone()));
            }
            return served == n;
        }
        if let Some((s, _)) = &self.best {
            if served + (n - depth) <= *s || self.nodes >= self.budget {
                return self.nodes >= self.budget;
            }
        }
        self.nodes += 1;
        let i = self.order[depth];
        let inst = self.inst;
        let forb = inst.forbidden(i, &self.state);
        let w = inst.w_min[i];
        let n_ch = inst.grid.n_channels;
        if inst.f_lo + w - 1 <= n_ch {
            for f in inst.f_lo..=n_ch + 1 - w {
                let m = channel_mask(f, w);
                for g in 1..=inst.grid.n_reuses {
                    for p in 1..=inst.grid.n_polarizations {
                        if forb[inst.gidx(g, p)] & m != 0 {
                            continue;
                        }
                        let mut pl = Place { f, w, g, p, slots: Vec::new() };
                        inst.place_slots(i, &mut pl, &self.state);
                        self.state[i] = Some(pl);
                        let stop = self.run(depth + 1, served + 1);
                        self.state[i] = None;
                        if stop {
                            return true;
                        }
                    }
                }
            }
        }
        self.run(depth + 1, served)
    }
}

#[derive(PartialEq)]
struct Upgrade {
    rate: f64,
    idx: usize,
}

impl Eq for Upgrade {}

impl PartialOrd for Upgrade {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Upgrade {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rate
            .total_cmp(&other.rate)
            .then(other.idx.cmp(&self.idx))
    }
}

/// Best power-reducing width for beam `i` given everyone else, as
/// `(saving per added channel, width, f, g, p)`.
fn best_upgrade(inst: &Instance, i: usize, state: &[Option<Place>]) -> Option<(f64, u32, u32, u32, u32)> {
    let cur = state[i].as_ref()?;
    let mut forb = inst.forbidden(i, state);
    for s in &cur.slots {
        forb[inst.gidx(s.g, s.p)] |= channel_mask(s.f, inst.beams[i].b_min);
    }
    let top = inst.widest(&forb).min(inst.w_max[i]);
    if top <= cur.w {
        return None;
    }
    let c0 = inst.cost(i, cur.w);
    let mut best: Option<(f64, u32)> = None;
    for w in cur.w + 1..=top {
        let rate = (c0 - inst.cost(i, w)) / (w - cur.w) as f64;
        if rate > 0.0 && best.is_none_or(|(r, _)| rate >= r) {
            best = Some((rate, w));
        }
    }
    let (rate, w) = best?;
    let (f, g, p) = inst.first_fit(&forb, w)?;
    Some((rate, w, f, g, p))
}

/// Greedy widening by largest power saving per added channel, re-evaluated
/// lazily. Returns the number of applied upgrades.
fn improve(inst: &Instance, state: &mut [Option<Place>], budget: u64) -> u64 {
    let mut heap = BinaryHeap::new();
    for i in 0..inst.n() {
        if let Some((rate, ..)) = best_upgrade(inst, i, state) {
            heap.push(Upgrade { rate, idx: i });
        }
    }
    let mut applied = 0;
    let mut evals = 0u64;
    while let Some(Upgrade { rate, idx }) = heap.pop() {
        evals += 1;
        if evals > budget.saturating_mul(10) {
            break;
        }
        let Some((now, w, f, g, p)) = best_upgrade(inst, idx, state) else {
            continue;
        };
        if now < rate * (1.0 - 1e-12) {
            if heap.peek().is_some_and(|top| top.rate > now) {
                heap.push(Upgrade { rate: now, idx });
                continue;
            }
        }
        let pl = state[idx].as_mut().expect("upgrade of a placed beam");
        pl.f = f;
        pl.w = w;
        pl.g = g;
        pl.p = p;
        applied += 1;
        if let Some((rate, ..)) = best_upgrade(inst, idx, state) {
            heap.push(Upgrade { rate, idx });
        }
    }
    applied
}

/// Moves one blocking neighbour of `i` elsewhere so that `i` fits at minimum
/// width. Returns true on success.
fn repair(inst: &Instance, i: usize, state: &mut [Option<Place>]) -> bool {
    let w = inst.w_min[i];
    let nbrs: Vec<usize> = inst.adj[i].iter().map(|e| e.0).filter(|&j| state[j].is_some()).collect();
    for j in nbrs {
        let saved = state[j].take();
        let forb = inst.forbidden(i, state);
        if let Some((f, g, p)) = inst.first_fit(&forb, w) {
            let mut pl = Place { f, w, g, p, slots: Vec::new() };
            inst.place_slots(i, &mut pl, state);
            state[i] = Some(pl);
            let fj = inst.forbidden(j, state);
            if let Some((f2, g2, p2)) = inst.first_fit(&fj, inst.w_min[j]) {
                let mut pj = Place {
                    f: f2,
                    w: inst.w_min[j],
                    g: g2,
                    p: p2,
                    slots: Vec::new(),
                };
                inst.place_slots(j, &mut pj, state);
                if pj.slots.len() >= saved.as_ref().map_or(0, |s| s.slots.len()) {
                    state[j] = Some(pj);
                    return true;
                }
            }
            state[i] = None;
        }
        state[j] = saved;
    }
    false
}

/// Baseline plan: backtracking first-fit at minimum widths, a repair retry
/// for unplaced beams, then greedy power-reducing widenings.
pub fn solve_baseline(
    beams: &[Beam],
    sets: &RestrictionSets,
    grid: &GridConfig,
    cfg: &SolveConfig,
) -> Result<(FrequencyPlan, SolveReport), SolveError> {
    let started = Instant::now();
    let inst = Instance::new(beams, sets, grid, cfg)?;
    let order = inst.order();
    let mut search = Search {
        inst: &inst,
        order: order.clone(),
        state: vec![None; inst.n()],
        best: None,
        nodes: 0,
        budget: cfg.node_budget.max(1),
    };
    search.run(0, 0);
    let nodes = search.nodes;
    let mut state = search.best.expect("the first descent reaches a leaf").1;
    for &i in &order {
        if state[i].is_none() {
            repair(&inst, i, &mut state);
        }
    }
    let mut upgrades = improve(&inst, &mut state, cfg.node_budget.max(1000) * inst.n().max(1) as u64);
    let lns = local_search(&inst, &mut state, &order, cfg.node_budget);
    upgrades += improve(&inst, &mut state, cfg.node_budget.max(1000) * inst.n().max(1) as u64);
    let (plan, assignments) = inst.emit(&state);
    let short_of_slots = beams
        .iter()
        .enumerate()
        .filter(|(i, _)| state[*i].as_ref().is_some_and(|pl| (pl.slots.len() as u32) < inst.n_slots[*i]))
        .map(|(_, b)| b.id)
        .collect();
    let report = SolveReport {
        objective_watts: inst.objective(&state),
        served: beams.iter().enumerate().filter(|(i, _)| state[*i].is_some()).map(|(_, b)| b.id).collect(),
        deactivated: beams.iter().enumerate().filter(|(i, _)| state[*i].is_none()).map(|(_, b)| b.id).collect(),
        assignments,
        short_of_slots,
        search_nodes: nodes + lns,
        upgrades,
        seed: cfg.seed,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok((plan, report))
}

pub const EXACT_MAX_BEAMS: usize = 8;
pub const EXACT_NODE_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    /// Largest number of simultaneously placeable beams.
    pub served: usize,
    /// Minimum objective among plans serving that many beams.
    pub objective_watts: f64,
    pub plan: FrequencyPlan,
    pub nodes: u64,
}

impl ExactSolution {
    pub fn all_served(&self, n_beams: usize) -> bool {
        self.served == n_beams
    }
}

/// Exhaustive search over the beams in `order` with every other beam held
/// fixed. The outer level picks a width (or deactivation) and a group per
/// beam; the inner level decides whether channel offsets exist.
///
/// Offsets are searched in left-justified form only: every beam starts at the
/// lowest allowed channel or right after an interval it conflicts with. Any
/// feasible plan reaches that form by sliding beams left one at a time.
struct Exact<'a, 'b> {
    inst: &'b Instance<'a>,
    order: Vec<usize>,
    /// Per subset member and group, channels blocked by fixed beams.
    fixed: Vec<Vec<u128>>,
    /// Restriction kind between subset members.
    kinds: Vec<Vec<Option<Kind>>>,
    choice: Vec<Option<(u32, u32, u32)>>,
    best: Option<(usize, f64, Vec<Option<Place>>)>,
    floor: Vec<f64>,
    nodes: u64,
    cap: u64,
    /// Explore group labels only up to relabelling; valid without fixed beams.
    relabel: bool,
}

impl<'a, 'b> Exact<'a, 'b> {
    fn new(inst: &'b Instance<'a>, order: Vec<usize>, state: &[Option<Place>], cap: u64, relabel: bool) -> Self {
        let mut base = state.to_vec();
        for &i in &order {
            base[i] = None;
        }
        let fixed = order.iter().map(|&i| inst.forbidden(i, &base)).collect();
        let kinds = order
            .iter()
            .map(|&i| {
                order
                    .iter()
                    .map(|&j| inst.adj[i].iter().find(|e| e.0 == j).map(|e| e.1))
                    .collect()
            })
            .collect();
        let mut floor = vec![0.0; order.len() + 1];
        for d in (0..order.len()).rev() {
            let i = order[d];
            let cheapest = if inst.w_min[i] <= inst.w_max[i] { inst.cost(i, inst.w_max[i]) } else { 0.0 };
            floor[d] = floor[d + 1] + cheapest;
        }
        Exact {
            inst,
            choice: vec![None; order.len()],
            order,
            fixed,
            kinds,
            best: None,
            floor,
            nodes: 0,
            cap,
            relabel,
        }
    }

    fn better(&self, served: usize, cost: f64) -> bool {
        match &self.best {
            None => true,
            Some((s, c, _)) => served > *s || served == *s && cost < *c - 1e-12 * c.abs(),
        }
    }

    fn conflict(&self, a: usize, b: usize) -> bool {
        let (Some((_, ga, pa)), Some((_, gb, pb))) = (self.choice[a], self.choice[b]) else {
            return false;
        };
        match self.kinds[a][b] {
            Some(Kind::Interference) => pa == pb,
            Some(Kind::Handover) => pa == pb && ga == gb,
            None => false,
        }
    }

    /// Channel offsets for the chosen members, if any exist.
    fn offsets(&mut self) -> Option<Vec<u32>> {
        let members: Vec<usize> = (0..self.order.len()).filter(|&k| self.choice[k].is_some()).collect();
        let mut pos = vec![0u32; self.order.len()];
        if self.place(&members, 0, (self.inst.f_lo, 0), &mut pos) {
            Some(pos)
        } else {
            None
        }
    }

    /// Channels member `u` may not use given the placed members.
    fn blocked(&self, members: &[usize], placed: u32, pos: &[u32], u: usize) -> u128 {
        let (_, g, p) = self.choice[u].expect("member has a choice");
        let mut m = self.fixed[u][self.inst.gidx(g, p)];
        for (b, &v) in members.iter().enumerate() {
            if placed >> b & 1 == 1 && self.conflict(u, v) {
                m |= channel_mask(pos[v], self.choice[v].unwrap().0);
            }
        }
        m
    }

    /// Places the remaining members in increasing `(offset, member)` order.
    fn place(&mut self, members: &[usize], placed: u32, last: (u32, usize), pos: &mut [u32]) -> bool {
        if placed.count_ones() as usize == members.len() {
            return true;
        }
        self.nodes += 1;
        let n_ch = self.inst.grid.n_channels;
        let f_lo = self.inst.f_lo;
        let fits = |blocked: u128, w: u32, from: u32| {
            (from..=(n_ch + 1).saturating_sub(w)).find(|&f| blocked & channel_mask(f, w) == 0)
        };
        for (a, &u) in members.iter().enumerate() {
            if placed >> a & 1 == 0 {
                let w = self.choice[u].unwrap().0;
                if fits(self.blocked(members, placed, pos, u), w, last.0).is_none() {
                    return false;
                }
            }
        }
        for (a, &u) in members.iter().enumerate() {
            if placed >> a & 1 == 1 {
                continue;
            }
            let w = self.choice[u].unwrap().0;
            let blocked = self.blocked(members, placed, pos, u);
            let mut cands = vec![f_lo];
            for c in f_lo + 1..=n_ch {
                if blocked >> (c - 2) & 1 == 1 {
                    cands.push(c);
                }
            }
            for f in cands {
                if (f, a) <= last && placed != 0 || f + w - 1 > n_ch || blocked & channel_mask(f, w) != 0 {
                    continue;
                }
                pos[u] = f;
                if self.place(members, placed | 1 << a, (f, a), pos) {
                    return true;
                }
            }
        }
        false
    }

    /// Returns false once the node cap is hit.
    fn run(&mut self, depth: usize, served: usize, cost: f64, g_used: u32, p_used: u32) -> bool {
        self.nodes += 1;
        if self.nodes > self.cap {
            return false;
        }
        let n = self.order.len();
        if depth == n {
            if self.better(served, cost) {
                let pos = self.offsets().expect("checked on the way down");
                let mut st: Vec<Option<Place>> = vec![None; self.inst.n()];
                for (k, &i) in self.order.iter().enumerate() {
                    if let Some((w, g, p)) = self.choice[k] {
                        st[i] = Some(Place { f: pos[k], w, g, p, slots: Vec::new() });
                    }
                }
                self.best = Some((served, cost, st));
            }
            return true;
        }
        if let Some((s, c, _)) = &self.best {
            let rest = n - depth;
            if served + rest < *s {
                return true;
            }
            if served + rest == *s && cost + self.floor[depth] >= *c - 1e-12 * c.abs() {
                return true;
            }
        }
        let inst = self.inst;
        let i = self.order[depth];
        let (mut g_top, p_top) = if self.relabel {
            ((g_used + 1).min(inst.grid.n_reuses), (p_used + 1).min(inst.grid.n_polarizations))
        } else {
            (inst.grid.n_reuses, inst.grid.n_polarizations)
        };
        let handover_free = self.kinds[depth].iter().all(|k| *k != Some(Kind::Handover));
        let fixed_flat = (1..=inst.grid.n_polarizations).all(|p| {
            (1..=inst.grid.n_reuses).all(|g| self.fixed[depth][inst.gidx(g, p)] == self.fixed[depth][inst.gidx(1, p)])
        });
        if handover_free && fixed_flat {
            g_top = 1;
        }
        for w in (inst.w_min[i]..=inst.w_max[i]).rev() {
            if inst.f_lo + w - 1 > inst.grid.n_channels {
                continue;
            }
            let c = inst.cost(i, w);
            for g in 1..=g_top {
                for p in 1..=p_top {
                    if !inst.fits(self.fixed[depth][inst.gidx(g, p)], w) {
                        continue;
                    }
                    self.choice[depth] = Some((w, g, p));
                    if self.offsets().is_some()
                        && !self.run(depth + 1, served + 1, cost + c, g_used.max(g), p_used.max(p))
                    {
                        self.choice[depth] = None;
                        return false;
                    }
                    self.choice[depth] = None;
                }
            }
        }
        self.run(depth + 1, served, cost, g_used, p_used)
    }
}

pub const NEIGHBOURHOOD: usize = 6;

/// Beam `i` plus the placed neighbours sharing its resources, closest in
/// channel index first.
fn neighbourhood(inst: &Instance, i: usize, state: &[Option<Place>]) -> Vec<usize> {
    let anchor = state[i].as_ref().map_or(inst.f_lo, |p| p.f);
    let mut nb: Vec<(u32, usize)> = inst.adj[i]
        .iter()
        .filter(|(j, _)| inst.n_slots[*j] == 0)
        .filter_map(|&(j, _)| state[j].as_ref().map(|p| (p.f.abs_diff(anchor), j)))
        .collect();
    nb.sort_unstable();
    let mut out = vec![i];
    out.extend(nb.into_iter().take(NEIGHBOURHOOD - 1).map(|(_, j)| j));
    out
}

/// Re-optimizes small neighbourhoods exactly with the rest of the plan held
/// fixed, within a total node budget. Returns nodes spent.
fn local_search(inst: &Instance, state: &mut Vec<Option<Place>>, order: &[usize], budget: u64) -> u64 {
    let mut spent = 0u64;
    let free: Vec<usize> = order.iter().copied().filter(|&i| inst.n_slots[i] == 0).collect();
    let mut hoods: Vec<Vec<usize>> = if free.len() <= NEIGHBOURHOOD && free.len() == inst.n() {
        vec![free.clone()]
    } else {
        Vec::new()
    };
    let mut improved = true;
    while improved && spent < budget {
        improved = false;
        if hoods.is_empty() || hoods.len() > 1 {
            let mut firsts: Vec<usize> = free.iter().copied().filter(|&i| state[i].is_none()).collect();
            firsts.extend(free.iter().copied().filter(|&i| state[i].is_some()));
            hoods = firsts.into_iter().map(|i| neighbourhood(inst, i, state)).collect();
        }
        for hood in &hoods {
            if spent >= budget {
                break;
            }
            let served = hood.iter().filter(|&&i| state[i].is_some()).count();
            let cost: f64 = hood
                .iter()
                .filter_map(|&i| state[i].as_ref().map(|p| inst.cost(i, p.w)))
                .sum();
            let mut ex = Exact::new(inst, hood.clone(), state, budget - spent, hood.len() == inst.n());
            ex.best = Some((served, cost, Vec::new()));
            ex.run(0, 0, 0.0, 0, 0);
            spent += ex.nodes;
            let (s2, c2, st) = ex.best.expect("incumbent kept");
            if s2 > served || c2 < cost - 1e-12 * cost.abs() {
                for &i in hood {
                    state[i] = st[i].clone();
                }
                improved = true;
            }
        }
        if hoods.len() == 1 {
            break;
        }
    }
    spent
}

/// Exhaustive branch and bound: maximizes the number of placed beams, then
/// minimizes power. Reuse-group and polarization labels are explored up to
/// relabelling.
pub fn solve_exact(
    beams: &[Beam],
    sets: &RestrictionSets,
    grid: &GridConfig,
    cfg: &SolveConfig,
) -> Result<ExactSolution, SolveError> {
    if beams.len() > EXACT_MAX_BEAMS {
        return Err(SolveError::SearchSpaceTooLarge(EXACT_NODE_CAP));
    }
    if cfg.x_slots.is_some() {
        return Err(SolveError::Unsupported("backup slots in the exact oracle".to_string()));
    }
    let inst = Instance::new(beams, sets, grid, cfg)?;
    let mut ex = Exact::new(&inst, inst.order(), &vec![None; inst.n()], EXACT_NODE_CAP, true);
    if !ex.run(0, 0, 0.0, 0, 0) {
        return Err(SolveError::SearchSpaceTooLarge(EXACT_NODE_CAP));
    }
    let (served, _, state) = ex.best.expect("the empty plan is always a leaf");
    let (plan, _) = inst.emit(&state);
    Ok(ExactSolution {
        served,
        objective_watts: inst.objective(&state),
        plan,
        nodes: ex.nodes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub beam_i: BeamId,
    pub beam_j: Option<BeamId>,
    pub t: f64,
    pub reason: String,
}

/// Per-instant check of a plan against actual positions on the time grid.
/// Uses only `delta_min_rad` from `cfg`; planning margins do not apply.
pub fn validate_plan(
    plan: &FrequencyPlan,
    beams: &[Beam],
    geo: &[ConstraintBeam],
    eph: &Ephemeris,
    grid: &GridConfig,
    cfg: &ConstraintConfig,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let dt = eph.dt;
    let by_id: BTreeMap<BeamId, &Beam> = beams.iter().map(|b| (b.id, b)).collect();
    for (&id, pieces) in &plan.assignments {
        for pc in pieces {
            let Some(a) = pc.assignment() else { continue };
            let bad = |r: &str| Violation {
                beam_i: id,
                beam_j: None,
                t: pc.t_from,
                reason: r.to_string(),
            };
            if a.f < 1 || a.b < 1 || a.f + a.b - 1 > grid.n_channels {
                out.push(bad("channel interval outside the grid"));
            }
            if a.g < 1 || a.g > grid.n_reuses || a.p < 1 || a.p > grid.n_polarizations {
                out.push(bad("group outside the grid"));
            }
            match by_id.get(&id) {
                None => out.push(bad("assignment for an unknown beam")),
                Some(b) => {
                    let used = a.b.checked_sub(a.reserved_extra_channels).unwrap_or(0);
                    if used < b.b_min || used > b.b_max {
                        out.push(bad("channel count outside [b_min, b_max]"));
                    }
                    for s in &a.backup_slots {
                        if s.f < 1 || s.f + b.b_min - 1 > grid.n_channels || s.g < 1 || s.g > grid.n_reuses || s.p < 1 || s.p > grid.n_polarizations {
                            out.push(bad("backup slot outside the grid"));
                        }
                    }
                }
            }
        }
    }
    let n_steps = eph.n_steps();
    let active: Vec<(&ConstraintBeam, std::ops::Range<usize>)> = geo
        .iter()
        .filter(|g| plan.assignments.contains_key(&g.id))
        .map(|g| {
            let r = grid_steps(g.t_start, g.t_end, dt);
            let r = r.start.min(n_steps)..r.end.min(n_steps);
            (g, r)
        })
        .collect();
    let thr = cfg.delta_min_rad;
    for k in 0..n_steps {
        let t = k as f64 * dt;
        let mut now: Vec<(BeamId, Vec<Item>, crate::geometry::Vec3, Option<crate::geometry::SatId>)> = Vec::new();
        for (g, r) in &active {
            if !r.contains(&k) {
                continue;
            }
            let Some(a) = plan.assignment_at(g.id, t) else { continue };
            let b_min = by_id.get(&g.id).map_or(a.b, |b| b.b_min);
            let mut items = vec![Item {
                g: a.g,
                p: a.p,
                mask: channel_mask(a.f, a.b),
            }];
            items.extend(a.backup_slots.iter().map(|s| Item {
                g: s.g,
                p: s.p,
                mask: channel_mask(s.f, b_min),
            }));
            let pos = g.trajectory.position(t).ecef();
            now.push((g.id, items, pos, eph.serving(k, pos)));
        }
        for x in 0..now.len() {
            for y in x + 1..now.len() {
                let (a, b) = (&now[x], &now[y]);
                let same_p = a.1.iter().any(|u| b.1.iter().any(|v| u.p == v.p && u.mask & v.mask != 0));
                if !same_p {
                    continue;
                }
                let same_gp = a.1.iter().any(|u| b.1.iter().any(|v| u.g == v.g && u.p == v.p && u.mask & v.mask != 0));
                let (lo, hi) = if a.0 < b.0 { (a, b) } else { (b, a) };
                if same_gp && lo.3.is_some() && lo.3 == hi.3 {
                    out.push(Violation {
                        beam_i: lo.0,
                        beam_j: Some(hi.0),
                        t,
                        reason: "same group on the same satellite".to_string(),
                    });
                    continue;
                }
                let Some(v) = lo.3 else { continue };
                let sat = eph.sat_position(k, v);
                if visible_separation(&[lo.2], &[hi.2], sat).is_some_and(|d| d <= thr) {
                    out.push(Violation {
                        beam_i: lo.0,
                        beam_j: Some(hi.0),
                        t,
                        reason: "same polarization below the separation threshold".to_string(),
                    });
                }
            }
        }
    }
    out
}

/// Writes the exact model as a mixed-integer program in LP text format.
///
/// Variables: `y_i_g_p` group choice, `z_i_w` width choice, `f_i` first
/// channel, `d_i` deactivation, `o_i_j_c` interval order per conflict `c`.
pub fn write_lp<W: Write>(
    beams: &[Beam],
    sets: &RestrictionSets,
    grid: &GridConfig,
    cfg: &SolveConfig,
    mut out: W,
) -> Result<(), SolveError> {
    let inst = Instance::new(beams, sets, grid, cfg)?;
    let io = |e: std::io::Error| SolveError::InconsistentInput(e.to_string());
    let big_m = grid.n_channels as f64 + 1.0;
    let penalty = 1.0
        + (0..inst.n())
            .map(|i| inst.cost(i, inst.w_min[i]))
            .sum::<f64>();
    let id = |i: usize| beams[i].id;
    let width = |i: usize| {
        (inst.w_min[i]..=inst.w_max[i])
            .map(|w| format!("{w} z_{}_{w}", id(i)))
            .collect::<Vec<_>>()
            .join(" + ")
    };
    writeln!(out, "\\ frequency assignment model, {} beams", inst.n()).map_err(io)?;
    let mut binaries: Vec<String> = Vec::new();
    writeln!(out, "Minimize").map_err(io)?;
    let mut terms = Vec::new();
    for i in 0..inst.n() {
        for w in inst.w_min[i]..=inst.w_max[i] {
            terms.push(format!("{:.12e} z_{}_{w}", inst.cost(i, w), id(i)));
            binaries.push(format!("z_{}_{w}", id(i)));
        }
        binaries.push(format!("d_{}", id(i)));
        terms.push(format!("{penalty:.12e} d_{}", id(i)));
    }
    writeln!(out, " obj: {}", terms.join(" + ")).map_err(io)?;
    writeln!(out, "Subject To").map_err(io)?;
    for i in 0..inst.n() {
        let ys: Vec<String> = (1..=grid.n_reuses)
            .flat_map(|g| (1..=grid.n_polarizations).map(move |p| (g, p)))
            .map(|(g, p)| format!("y_{}_{g}_{p}", id(i)))
            .collect();
        writeln!(out, " grp_{}: {} + d_{} = 1", id(i), ys.join(" + "), id(i)).map_err(io)?;
        binaries.extend(ys);
        let zs: Vec<String> = (inst.w_min[i]..=inst.w_max[i]).map(|w| format!("z_{}_{w}", id(i))).collect();
        writeln!(out, " wid_{}: {} + d_{} = 1", id(i), zs.join(" + "), id(i)).map_err(io)?;
        writeln!(out, " top_{}: f_{} + {} <= {}", id(i), id(i), width(i), grid.n_channels + 1).map_err(io)?;
    }
    let mut pairs: Vec<(usize, usize, Kind)> = Vec::new();
    for i in 0..inst.n() {
        for &(j, k) in &inst.adj[i] {
            if i < j {
                pairs.push((i, j, k));
            }
        }
    }
    for (i, j, kind) in pairs {
        let groups: Vec<(String, String, String)> = match kind {
            Kind::Handover => (1..=grid.n_reuses)
                .flat_map(|g| (1..=grid.n_polarizations).map(move |p| (g, p)))
                .map(|(g, p)| {
                    (
                        format!("{g}_{p}"),
                        format!("y_{}_{g}_{p}", id(i)),
                        format!("y_{}_{g}_{p}", id(j)),
                    )
                })
                .collect(),
            Kind::Interference => (1..=grid.n_polarizations)
                .map(|p| {
                    let sum = |b: usize| {
                        (1..=grid.n_reuses)
                            .map(|g| format!("y_{}_{g}_{p}", id(b)))
                            .collect::<Vec<_>>()
                            .join(" + ")
                    };
                    (format!("p{p}"), sum(i), sum(j))
                })
                .collect(),
        };
        for (tag, si, sj) in groups {
            let (a, b) = (id(i), id(j));
            let o = format!("o_{a}_{b}_{tag}");
            binaries.push(o.clone());
            let neg = |s: &str| format!("{big_m} {}", s.replace(" + ", &format!(" + {big_m} ")));
            writeln!(
                out,
                " ord_{a}_{b}_{tag}_1: f_{a} + {} - f_{b} + {big_m} {o} + {} + {} <= {}",
                width(i),
                neg(&si),
                neg(&sj),
                3.0 * big_m
            )
            .map_err(io)?;
            writeln!(
                out,
                " ord_{a}_{b}_{tag}_2: f_{b} + {} - f_{a} - {big_m} {o} + {} + {} <= {}",
                width(j),
                neg(&si),
                neg(&sj),
                2.0 * big_m
            )
            .map_err(io)?;
        }
    }
    writeln!(out, "Bounds").map_err(io)?;
    for i in 0..inst.n() {
        writeln!(out, " {} <= f_{} <= {}", inst.f_lo, id(i), grid.n_channels).map_err(io)?;
    }
    writeln!(out, "General").map_err(io)?;
    for i in 0..inst.n() {
        writeln!(out, " f_{}", id(i)).map_err(io)?;
    }
    writeln!(out, "Binary").map_err(io)?;
    for v in &binaries {
        writeln!(out, " {v}").map_err(io)?;
    }
    writeln!(out, "End").map_err(io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{GeoPoint, PowerTable, Trajectory, UserKind};
    use proptest::prelude::*;

    fn beam(id: BeamId, kind: UserKind, b_min: u32, b_max: u32, scale: f64) -> Beam {
        let p_watts = (b_min..=b_max).map(|b| scale * (1.0 + 8.0 / b as f64)).collect();
        Beam {
            id,
            user_ids: vec![id],
            kind,
            t_start: 0.0,
            t_end: 3600.0,
            demand_bps: 1e6,
            b_min,
            b_max,
            trajectory: Trajectory::fixed(GeoPoint::new(0.0, 0.0, 0.0)),
            power_table: PowerTable { beam_id: id, b_min, p_watts },
        }
    }

    fn grid(n_ch: u32, n_r: u32, n_p: u32) -> GridConfig {
        GridConfig {
            n_channels: n_ch,
            n_reuses: n_r,
            n_polarizations: n_p,
            channel_bandwidth_hz: 25e6,
        }
    }

    fn cfg() -> SolveConfig {
        SolveConfig {
            horizon_s: 3600.0,
            ..SolveConfig::default()
        }
    }

    /// Independent pairwise check of static assignments against the sets.
    fn static_conflicts(plan: &FrequencyPlan, beams: &[Beam], sets: &RestrictionSets) -> usize {
        let items = |id: BeamId| -> Vec<(u32, u32, u32, u32)> {
            let Some(a) = plan.assignment_at(id, 0.0) else { return Vec::new() };
            let bm = beams.iter().find(|b| b.id == id).unwrap().b_min;
            let mut v = vec![(a.f, a.f + a.b - 1, a.g, a.p)];
            v.extend(a.backup_slots.iter().map(|s| (s.f, s.f + bm - 1, s.g, s.p)));
            v
        };
        let overlap = |x: &(u32, u32, u32, u32), y: &(u32, u32, u32, u32)| x.0 <= y.1 && y.0 <= x.1;
        let mut bad = 0;
        for &(i, j) in &sets.r_a {
            for x in items(i) {
                bad += items(j).iter().filter(|y| x.3 == y.3 && overlap(&x, y)).count();
            }
        }
        for &(i, j) in &sets.r_e {
            for x in items(i) {
                bad += items(j)
                    .iter()
                    .filter(|y| x.2 == y.2 && x.3 == y.3 && overlap(&x, y))
                    .count();
            }
        }
        bad
    }

    #[test]
    fn single_beam_takes_cheapest_width_at_origin() {
        let bs = vec![beam(1, UserKind::Fixed, 2, 6, 1.0)];
        let (plan, rep) = solve_baseline(&bs, &RestrictionSets::default(), &grid(10, 2, 2), &cfg()).unwrap();
        let a = plan.assignment_at(1, 0.0).unwrap();
        assert_eq!((a.f, a.b, a.g, a.p), (1, 6, 1, 1));
        assert!(rep.deactivated.is_empty());
        let ex = solve_exact(&bs, &RestrictionSets::default(), &grid(10, 2, 2), &cfg()).unwrap();
        assert_eq!(ex.plan, plan);
        assert!((ex.objective_watts - rep.objective_watts).abs() < 1e-12);
    }

    #[test]
    fn handover_pair_splits_groups() {
        let bs = vec![beam(1, UserKind::Fixed, 2, 10, 1.0), beam(2, UserKind::Fixed, 2, 10, 1.0)];
        let mut sets = RestrictionSets::default();
        sets.insert_handover(1, 2);
        let (plan, _) = solve_baseline(&bs, &sets, &grid(10, 2, 1), &cfg()).unwrap();
        let a = plan.assignment_at(1, 0.0).unwrap();
        let b = plan.assignment_at(2, 0.0).unwrap();
        assert_ne!(a.g, b.g);
        assert_eq!((a.b, b.b), (10, 10));
    }

    #[test]
    fn pigeonhole_is_infeasible() {
        let bs: Vec<Beam> = (1..=3).map(|i| beam(i, UserKind::Fixed, 8, 8, 1.0)).collect();
        let mut sets = RestrictionSets::default();
        for (i, j) in [(1, 2), (1, 3), (2, 3)] {
            sets.insert_handover(i, j);
        }
        let g = grid(8, 1, 2);
        let ex = solve_exact(&bs, &sets, &g, &cfg()).unwrap();
        assert_eq!(ex.served, 2);
        assert!(!ex.all_served(3));
        let (plan, rep) = solve_baseline(&bs, &sets, &g, &cfg()).unwrap();
        assert_eq!(rep.deactivated.len(), 1);
        assert!(plan.is_deactivated(rep.deactivated[0]));
        assert_eq!(static_conflicts(&plan, &bs, &sets), 0);
    }

    #[test]
    fn clique_matches_exact() {
        let bs: Vec<Beam> = (1..=6).map(|i| beam(i, UserKind::Fixed, 1, 4, 1.0 + i as f64 * 0.1)).collect();
        let mut sets = RestrictionSets::default();
        for i in 1..=6 {
            for j in i + 1..=6 {
                sets.insert_interference(i, j);
            }
        }
        let g = grid(10, 2, 2);
        let (_, rep) = solve_baseline(&bs, &sets, &g, &cfg()).unwrap();
        let ex = solve_exact(&bs, &sets, &g, &cfg()).unwrap();
        assert_eq!(rep.served.len(), ex.served);
        assert!((rep.objective_watts - ex.objective_watts).abs() <= 1e-9 * ex.objective_watts);
    }

    #[test]
    fn reservations_are_honoured() {
        let bs: Vec<Beam> = (1..=5)
            .map(|i| beam(i, if i % 2 == 0 { UserKind::Fixed } else { UserKind::Aeronautical }, 2, 5, 1.0))
            .collect();
        let mut sets = RestrictionSets::default();
        for i in 1..=5 {
            for j in i + 1..=5 {
                if (i + j) % 3 == 0 {
                    sets.insert_interference(i, j);
                } else {
                    sets.insert_handover(i, j);
                }
            }
        }
        let c = SolveConfig {
            x_ch: Some(1),
            x_slots: Some(1),
            x_spec: Some(0.1),
            ..cfg()
        };
        let g = grid(40, 2, 2);
        let (plan, rep) = solve_baseline(&bs, &sets, &g, &c).unwrap();
        assert!(rep.deactivated.is_empty());
        assert!(rep.short_of_slots.is_empty());
        assert_eq!(static_conflicts(&plan, &bs, &sets), 0);
        for b in &bs {
            let a = plan.assignment_at(b.id, 0.0).unwrap();
            assert!(a.f >= 5);
            assert!(a.backup_slots.iter().all(|s| s.f >= 5));
            if b.is_mobile() {
                assert!(a.b >= 2 * b.b_min);
                assert_eq!(a.reserved_extra_channels, b.b_min);
                assert_eq!(a.backup_slots.len(), 1);
            } else {
                assert_eq!(a.reserved_extra_channels, 0);
                assert!(a.backup_slots.is_empty());
            }
        }
    }

    #[test]
    fn missing_power_table_is_rejected() {
        let mut b = beam(1, UserKind::Fixed, 2, 4, 1.0);
        b.power_table.p_watts.pop();
        let r = solve_baseline(&[b], &RestrictionSets::default(), &grid(10, 1, 1), &cfg());
        assert!(matches!(r, Err(SolveError::InconsistentInput(_))));
    }

    #[test]
    fn exact_refuses_large_instances() {
        let bs: Vec<Beam> = (1..=9).map(|i| beam(i, UserKind::Fixed, 1, 2, 1.0)).collect();
        let r = solve_exact(&bs, &RestrictionSets::default(), &grid(10, 1, 1), &cfg());
        assert!(matches!(r, Err(SolveError::SearchSpaceTooLarge(_))));
    }

    #[test]
    fn lp_dump_lists_every_section() {
        let bs = vec![beam(1, UserKind::Fixed, 1, 3, 1.0), beam(2, UserKind::Fixed, 1, 3, 1.0)];
        let mut sets = RestrictionSets::default();
        sets.insert_interference(1, 2);
        let mut out = Vec::new();
        write_lp(&bs, &sets, &grid(6, 1, 2), &cfg(), &mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        for sec in ["Minimize", "Subject To", "Bounds", "General", "Binary", "End"] {
            assert!(s.lines().any(|l| l == sec), "{sec}");
        }
        assert!(s.contains("ord_1_2_p1_1:"));
        assert!(s.contains(" o_1_2_p2"));
    }

    fn instance(seed: u64) -> (Vec<Beam>, RestrictionSets, GridConfig) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=6u32);
        let n_ch = rng.random_range(4..=12u32);
        let g = grid(n_ch, rng.random_range(1..=2), rng.random_range(1..=2));
        let bs: Vec<Beam> = (1..=n)
            .map(|i| {
                let lo = rng.random_range(1..=n_ch.min(5));
                let hi = rng.random_range(lo..=n_ch);
                beam(i, UserKind::Fixed, lo, hi, rng.random_range(0.5..2.0))
            })
            .collect();
        let mut sets = RestrictionSets::default();
        for i in 1..=n {
            for j in i + 1..=n {
                match rng.random_range(0..4) {
                    0 => sets.insert_interference(i, j),
                    1 => sets.insert_handover(i, j),
                    2 => {
                        sets.insert_interference(i, j);
                        sets.insert_handover(i, j);
                    }
                    _ => {}
                }
            }
        }
        (bs, sets, g)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn heuristic_tracks_exact(seed in any::<u64>()) {
            let (bs, sets, g) = instance(seed);
            let (plan, rep) = solve_baseline(&bs, &sets, &g, &cfg()).unwrap();
            let ex = solve_exact(&bs, &sets, &g, &cfg()).unwrap();
            prop_assert_eq!(static_conflicts(&plan, &bs, &sets), 0);
            prop_assert_eq!(static_conflicts(&ex.plan, &bs, &sets), 0);
            prop_assert_eq!(rep.served.len(), ex.served);
            prop_assert!(rep.objective_watts <= 1.10 * ex.objective_watts + 1e-12);
            let again = solve_baseline(&bs, &sets, &g, &cfg()).unwrap().0;
            prop_assert_eq!(again, plan);
        }
    }

    /// Every `(off | f, b, g, p)` tuple, lexicographic on (served, power).
    fn brute_force(bs: &[Beam], sets: &RestrictionSets, g: &GridConfig, c: &SolveConfig) -> (usize, f64) {
        let f_lo = c.first_channel(g);
        let mut opts: Vec<Vec<Option<(u32, u32, u32, u32)>>> = Vec::new();
        for b in bs {
            let mut v = vec![None];
            for w in b.b_min..=b.b_max {
                for f in f_lo..=g.n_channels {
                    if f + w - 1 > g.n_channels {
                        continue;
                    }
                    for gg in 1..=g.n_reuses {
                        for pp in 1..=g.n_polarizations {
                            v.push(Some((f, w, gg, pp)));
                        }
                    }
                }
            }
            opts.push(v);
        }
        let mut best = (0usize, 0.0f64);
        let mut idx = vec![0usize; bs.len()];
        loop {
            let pick: Vec<_> = idx.iter().enumerate().map(|(k, &x)| opts[k][x]).collect();
            let ok = (0..bs.len()).all(|a| {
                (a + 1..bs.len()).all(|b| match (pick[a], pick[b]) {
                    (Some(x), Some(y)) => {
                        let overlap = x.0 <= y.0 + y.1 - 1 && y.0 <= x.0 + x.1 - 1;
                        let (i, j) = (bs[a].id, bs[b].id);
                        !(overlap
                            && (sets.has_interference(i, j) && x.3 == y.3
                                || sets.has_handover(i, j) && x.2 == y.2 && x.3 == y.3))
                    }
                    _ => true,
                })
            });
            if ok {
                let served = pick.iter().flatten().count();
                let cost: f64 = pick
                    .iter()
                    .zip(bs)
                    .filter_map(|(x, b)| x.map(|x| beam_energy_share(b, b.power(x.1).unwrap(), c.horizon_s, c.dt_s)))
                    .sum();
                if served > best.0 || served == best.0 && cost < best.1 {
                    best = (served, cost);
                }
            }
            let mut k = 0;
            loop {
                if k == idx.len() {
                    return best;
                }
                idx[k] += 1;
                if idx[k] < opts[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn exact_matches_brute_force(seed in any::<u64>(), spec in proptest::option::of(0.1f64..0.4)) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..=3u32);
            let n_ch = rng.random_range(3..=6u32);
            let g = grid(n_ch, rng.random_range(1..=2), rng.random_range(1..=2));
            let bs: Vec<Beam> = (1..=n)
                .map(|i| {
                    let lo = rng.random_range(1..=3u32);
                    let hi = rng.random_range(lo..=n_ch.max(lo));
                    beam(i, UserKind::Fixed, lo, hi.min(n_ch).max(lo), rng.random_range(0.5..2.0))
                })
                .collect();
            let mut sets = RestrictionSets::default();
            for i in 1..=n {
                for j in i + 1..=n {
                    match rng.random_range(0..3) {
                        0 => sets.insert_interference(i, j),
                        1 => sets.insert_handover(i, j),
                        _ => {}
                    }
                }
            }
            let c = SolveConfig { x_spec: spec, ..cfg() };
            let ex = solve_exact(&bs, &sets, &g, &c).unwrap();
            let (served, cost) = brute_force(&bs, &sets, &g, &c);
            prop_assert_eq!(ex.served, served);
            prop_assert!((ex.objective_watts - cost).abs() <= 1e-9 * cost.max(1e-300));
        }
    }
}
