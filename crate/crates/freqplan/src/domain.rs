//! Shared data model: users, beams, plans, scenarios and events.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::{self, Constellation, Vec3, EARTH_RADIUS_M};

pub type UserId = u32;
pub type BeamId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub n_channels: u32,
    pub n_reuses: u32,
    pub n_polarizations: u32,
    pub channel_bandwidth_hz: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n_channels: 80,
            n_reuses: 8,
            n_polarizations: 2,
            channel_bandwidth_hz: 25e6,
        }
    }
}

impl GridConfig {
    pub fn n_groups(&self) -> u32 {
        self.n_reuses * self.n_polarizations
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_channels == 0 || self.n_reuses == 0 || self.n_polarizations == 0 {
            v.push("grid counts must be at least 1".to_string());
        }
        if self.n_channels > 128 {
            v.push("grid supports at most 128 channels".to_string());
        }
        if !(self.channel_bandwidth_hz > 0.0) {
            v.push("channel bandwidth must be positive".to_string());
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat_deg: f64,
    pub lon_deg: f64,
    #[serde(default)]
    pub alt_m: f64,
}

impl GeoPoint {
    pub fn new(lat_deg: f64, lon_deg: f64, alt_m: f64) -> Self {
        GeoPoint {
            lat_deg,
            lon_deg,
            alt_m,
        }
    }

    pub fn unit(&self) -> Vec3 {
        let (la, lo) = (self.lat_deg.to_radians(), self.lon_deg.to_radians());
        [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
    }

    pub fn ecef(&self) -> Vec3 {
        geometry::scale(self.unit(), EARTH_RADIUS_M + self.alt_m)
    }

    pub fn from_unit(u: Vec3) -> Self {
        let lat = u[2].clamp(-1.0, 1.0).asin().to_degrees();
        let lon = u[1].atan2(u[0]).to_degrees();
        GeoPoint::new(lat, lon, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub position: GeoPoint,
}

/// Time-stamped positions, interpolated along great circles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn fixed(p: GeoPoint) -> Self {
        Trajectory {
            samples: vec![TrajectorySample { t: 0.0, position: p }],
        }
    }

    pub fn is_static(&self) -> bool {
        self.samples.windows(2).all(|w| w[0].position == w[1].position)
    }

    pub fn start(&self) -> GeoPoint {
        self.samples[0].position
    }

    pub fn end(&self) -> GeoPoint {
        self.samples[self.samples.len() - 1].position
    }

    /// Position at `t`, clamped to the first and last sample.
    pub fn position(&self, t: f64) -> GeoPoint {
        let s = &self.samples;
        if t <= s[0].t {
            return s[0].position;
        }
        let last = s.len() - 1;
        if t >= s[last].t {
            return s[last].position;
        }
        let k = s.partition_point(|x| x.t <= t);
        let (a, b) = (&s[k - 1], &s[k]);
        if a.t == t {
            return a.position;
        }
        let f = (t - a.t) / (b.t - a.t);
        geometry::slerp(&a.position, &b.position, f)
    }

    /// Same path with every timestamp moved by `dt`.
    pub fn shifted(&self, dt: f64) -> Trajectory {
        Trajectory {
            samples: self
                .samples
                .iter()
                .map(|s| TrajectorySample {
                    t: s.t + dt,
                    position: s.position,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.samples.is_empty() {
            v.push("trajectory has no samples".to_string());
        }
        if self.samples.windows(2).any(|w| !(w[0].t < w[1].t)) {
            v.push("trajectory timestamps not strictly increasing".to_string());
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserKind {
    Fixed,
    Aeronautical,
    Maritime,
    LandMobile,
}

impl UserKind {
    pub fn is_mobile(self) -> bool {
        self != UserKind::Fixed
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UncertaintySpec {
    pub max_delay_s: f64,
    #[serde(default)]
    pub alt_trajectories: Vec<Trajectory>,
    #[serde(default)]
    pub operational_area: Option<Vec<GeoPoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: UserId,
    pub kind: UserKind,
    pub demand_bps: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub trajectory: Trajectory,
    pub known_a_priori: bool,
    #[serde(default)]
    pub uncertainty: UncertaintySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gateway {
    pub id: u32,
    pub position: GeoPoint,
}

/// Per-beam transmit power for each admissible channel count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    pub beam_id: BeamId,
    pub b_min: u32,
    pub p_watts: Vec<f64>,
}

impl PowerTable {
    pub fn b_max(&self) -> u32 {
        self.b_min + self.p_watts.len() as u32 - 1
    }

    pub fn get(&self, b: u32) -> Option<f64> {
        if b < self.b_min {
            return None;
        }
        self.p_watts.get((b - self.b_min) as usize).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    pub id: BeamId,
    pub user_ids: Vec<UserId>,
    pub kind: UserKind,
    pub t_start: f64,
    pub t_end: f64,
    pub demand_bps: f64,
    pub b_min: u32,
    pub b_max: u32,
    /// Footprint centre over the beam window.
    pub trajectory: Trajectory,
    pub power_table: PowerTable,
}

impl Beam {
    pub fn is_mobile(&self) -> bool {
        self.kind.is_mobile()
    }

    pub fn power(&self, b: u32) -> Option<f64> {
        self.power_table.get(b)
    }

    pub fn active_at(&self, t: f64) -> bool {
        self.t_start <= t && t < self.t_end
    }

    pub fn validate(&self, grid: &GridConfig) -> Vec<String> {
        let mut v = Vec::new();
        if self.b_min > self.b_max {
            v.push("b_min>b_max".to_string());
        }
        if self.b_min < 1 {
            v.push("b_min<1".to_string());
        }
        if self.b_max > grid.n_channels {
            v.push("b_max>n_channels".to_string());
        }
        if !(self.t_start < self.t_end) {
            v.push("empty service window".to_string());
        }
        if self.is_mobile() && self.user_ids.len() != 1 {
            v.push("mobile beam must carry exactly one user".to_string());
        }
        if self.user_ids.is_empty() {
            v.push("beam without users".to_string());
        }
        if self.power_table.b_min != self.b_min || self.power_table.b_max() != self.b_max {
            v.push("power table does not cover [b_min, b_max]".to_string());
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Slot {
    pub f: u32,
    pub g: u32,
    pub p: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyAssignment {
    pub beam_id: BeamId,
    pub f: u32,
    pub b: u32,
    pub g: u32,
    pub p: u32,
    #[serde(default)]
    pub reserved_extra_channels: u32,
    #[serde(default)]
    pub backup_slots: Vec<Slot>,
}

impl FrequencyAssignment {
    pub fn new(beam_id: BeamId, f: u32, b: u32, g: u32, p: u32) -> Self {
        FrequencyAssignment {
            beam_id,
            f,
            b,
            g,
            p,
            reserved_extra_channels: 0,
            backup_slots: Vec::new(),
        }
    }

    /// Channels actually carrying traffic.
    pub fn used_channels(&self) -> u32 {
        self.b - self.reserved_extra_channels
    }

    /// Bit k set for channel k+1 of the interval.
    pub fn channel_mask(&self) -> u128 {
        channel_mask(self.f, self.b)
    }

    pub fn same_resources(&self, other: &FrequencyAssignment) -> bool {
        (self.f, self.b, self.g, self.p) == (other.f, other.b, other.g, other.p)
    }
}

pub fn channel_mask(f: u32, b: u32) -> u128 {
    if b == 0 {
        return 0;
    }
    let ones = if b >= 128 { u128::MAX } else { (1u128 << b) - 1 };
    ones << (f - 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum PieceState {
    Assigned(FrequencyAssignment),
    Deactivated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanPiece {
    pub t_from: f64,
    pub t_to: f64,
    #[serde(flatten)]
    pub state: PieceState,
}

impl PlanPiece {
    pub fn assignment(&self) -> Option<&FrequencyAssignment> {
        match &self.state {
            PieceState::Assigned(a) => Some(a),
            PieceState::Deactivated => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrequencyPlan {
    pub assignments: BTreeMap<BeamId, Vec<PlanPiece>>,
}

impl FrequencyPlan {
    pub fn piece_at(&self, beam: BeamId, t: f64) -> Option<&PlanPiece> {
        self.assignments
            .get(&beam)?
            .iter()
            .find(|p| p.t_from <= t && t < p.t_to)
    }

    pub fn assignment_at(&self, beam: BeamId, t: f64) -> Option<&FrequencyAssignment> {
        self.piece_at(beam, t).and_then(|p| p.assignment())
    }

    pub fn is_deactivated(&self, beam: BeamId) -> bool {
        self.assignments
            .get(&beam)
            .is_some_and(|ps| ps.iter().any(|p| p.state == PieceState::Deactivated))
    }

    /// Piece continuity and cover of each beam window.
    pub fn validate_pieces(&self, beams: &[Beam]) -> Vec<String> {
        let mut v = Vec::new();
        for beam in beams {
            let Some(ps) = self.assignments.get(&beam.id) else {
                v.push(format!("beam {} missing from plan", beam.id));
                continue;
            };
            if ps.first().map(|p| p.t_from) != Some(beam.t_start)
                || ps.last().map(|p| p.t_to) != Some(beam.t_end)
            {
                v.push(format!("beam {} pieces do not cover its window", beam.id));
            }
            if ps.windows(2).any(|w| w[0].t_to != w[1].t_from) {
                v.push(format!("beam {} pieces not contiguous", beam.id));
            }
            if ps.iter().any(|p| !(p.t_from < p.t_to)) {
                v.push(format!("beam {} has an empty piece", beam.id));
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventPayload {
    Delay { user_id: UserId, delay_s: f64 },
    TrajectoryChange { user_id: UserId, trajectory: Trajectory },
    NewUser { user: User },
}

impl EventPayload {
    pub fn user_id(&self) -> UserId {
        match self {
            EventPayload::Delay { user_id, .. } => *user_id,
            EventPayload::TrajectoryChange { user_id, .. } => *user_id,
            EventPayload::NewUser { user } => user.id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t_reveal: f64,
    pub payload: EventPayload,
}

/// What actually happens to a user during operations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedTruth {
    pub user_id: UserId,
    pub delay_s: f64,
    /// Index into the user's alternative trajectories, none for the declared route.
    pub trajectory: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
}

impl Quantiles {
    pub fn get(&self, pct: u32) -> Option<f64> {
        match pct {
            50 => Some(self.p50),
            75 => Some(self.p75),
            95 => Some(self.p95),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub delay_s: Quantiles,
    /// Route deviation as a central angle.
    pub deviation_rad: Quantiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub grid: GridConfig,
    pub constellation: Constellation,
    pub gateways: Vec<Gateway>,
    pub users: Vec<User>,
    pub horizon_s: f64,
    pub seed: u64,
    #[serde(default)]
    pub events: Vec<Event>,
    #[serde(default)]
    pub truth: Vec<RealizedTruth>,
    /// Delay and route-deviation percentiles known before operations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priors: Option<Percentiles>,
}

impl Scenario {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// SHA-256 over the canonical serialization.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn user(&self, id: UserId) -> Option<&User> {
        self.users.iter().find(|u| u.id == id)
    }

    pub fn truth_for(&self, id: UserId) -> Option<&RealizedTruth> {
        self.truth.iter().find(|r| r.user_id == id)
    }

    pub fn known_users(&self) -> impl Iterator<Item = &User> {
        self.users.iter().filter(|u| u.known_a_priori)
    }

    /// Realized route and start time of a user.
    pub fn realized(&self, u: &User) -> (Trajectory, f64) {
        match self.truth_for(u.id) {
            Some(r) => {
                let tr = r
                    .trajectory
                    .and_then(|k| u.uncertainty.alt_trajectories.get(k))
                    .cloned()
                    .unwrap_or_else(|| u.trajectory.clone());
                (tr, r.delay_s)
            }
            None => (u.trajectory.clone(), 0.0),
        }
    }

    /// Same world with everything revealed before operations.
    pub fn with_truth_revealed(&self) -> Scenario {
        let users = self
            .users
            .iter()
            .map(|u| {
                let (tr, d) = self.realized(u);
                let mut v = u.clone();
                v.known_a_priori = true;
                if d > 0.0 {
                    v.trajectory = tr.shifted(d);
                    v.t_start = (u.t_start + d).min(self.horizon_s);
                    v.t_end = (u.t_end + d).min(self.horizon_s);
                } else {
                    v.trajectory = tr;
                }
                v.uncertainty = UncertaintySpec::default();
                v
            })
            .filter(|u| u.t_start < u.t_end)
            .collect();
        Scenario {
            grid: self.grid.clone(),
            constellation: self.constellation.clone(),
            gateways: self.gateways.clone(),
            users,
            horizon_s: self.horizon_s,
            seed: self.seed,
            events: Vec::new(),
            truth: Vec::new(),
            priors: self.priors,
        }
    }
}

/// Every invariant violation of a parsed scenario; empty means valid.
pub fn validate_scenario(s: &Scenario) -> Vec<String> {
    let mut v = s.grid.validate();
    v.extend(s.constellation.validate());
    if !(s.horizon_s > 0.0) {
        v.push("horizon must be positive".to_string());
    }
    let mut seen = std::collections::BTreeSet::new();
    for u in &s.users {
        let tag = |m: &str| format!("user {}: {}", u.id, m);
        if !seen.insert(u.id) {
            v.push(tag("duplicate id"));
        }
        if !(u.t_start < u.t_end) {
            v.push(tag("empty service window"));
        }
        if u.t_start < 0.0 || u.t_end > s.horizon_s {
            v.push(tag("service window outside horizon"));
        }
        if !(u.demand_bps > 0.0) {
            v.push(tag("demand must be positive"));
        }
        for m in u.trajectory.validate() {
            v.push(tag(&m));
        }
        if u.kind == UserKind::Fixed {
            if u.t_start != 0.0 || u.t_end != s.horizon_s {
                v.push(tag("fixed user must be served over the whole horizon"));
            }
            if !u.trajectory.is_static() {
                v.push(tag("fixed user must be static"));
            }
        }
        if !(u.uncertainty.max_delay_s >= 0.0) {
            v.push(tag("negative max delay"));
        }
        for tr in &u.uncertainty.alt_trajectories {
            for m in tr.validate() {
                v.push(tag(&format!("alternative {m}")));
            }
        }
    }
    for e in &s.events {
        let uid = e.payload.user_id();
        if !(e.t_reveal >= 0.0 && e.t_reveal <= s.horizon_s) {
            v.push(format!("event for user {uid}: reveal time outside horizon"));
        }
        if let EventPayload::NewUser { user } = &e.payload {
            if e.t_reveal > user.t_start {
                v.push(format!("event for user {uid}: revealed after it starts"));
            }
        } else if s.user(uid).is_none() {
            v.push(format!("event for unknown user {uid}"));
        }
    }
    for r in &s.truth {
        match s.user(r.user_id) {
            None => v.push(format!("truth for unknown user {}", r.user_id)),
            Some(u) => {
                if r.delay_s < 0.0 || r.delay_s > u.uncertainty.max_delay_s {
                    v.push(format!("user {}: realized delay out of range", u.id));
                }
                if r.trajectory.is_some_and(|k| k >= u.uncertainty.alt_trajectories.len()) {
                    v.push(format!("user {}: realized route index out of range", u.id));
                }
            }
        }
    }
    v
}
