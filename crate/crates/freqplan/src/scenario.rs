//! Synthetic user populations, uncertainty, and beam construction.

use std::f64::consts::PI;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::ConstraintBeam;
use crate::domain::{
    Beam, BeamId, Event, EventPayload, Gateway, GeoPoint, GridConfig, Percentiles, Quantiles, RealizedTruth, Scenario,
    Trajectory, TrajectorySample, UncertaintySpec, User, UserId, UserKind,
};
use crate::geometry::{self, central_angle, Constellation, EARTH_RADIUS_M};
use crate::linkbudget::{build_power_table, compute_b_range, LinkError, LinkParams, ModcodTable};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario spec: {0}")]
    InvalidSpec(String),
    #[error("beam for user {user}: {source}")]
    Link { user: UserId, source: LinkError },
    #[error("site list: {0}")]
    Sites(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyLevel {
    None,
    Low,
    High,
}

impl UncertaintyLevel {
    pub fn land_unknown_fraction(self) -> f64 {
        match self {
            UncertaintyLevel::None => 0.0,
            UncertaintyLevel::Low => 0.25,
            UncertaintyLevel::High => 0.75,
        }
    }
}

/// A sampling distribution for delays (seconds) or route deviations (km).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Constant { value: f64 },
    Uniform { lo: f64, hi: f64 },
    LogNormal { median: f64, sigma: f64 },
}

impl Distribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Distribution::Constant { value } => value,
            Distribution::Uniform { lo, hi } => {
                if hi > lo {
                    rng.random_range(lo..hi)
                } else {
                    lo
                }
            }
            Distribution::LogNormal { median, sigma } => {
                if sigma > 0.0 {
                    LogNormal::new(median.ln(), sigma).expect("valid lognormal").sample(rng)
                } else {
                    median
                }
            }
        }
    }

    fn validate(&self) -> Option<String> {
        match *self {
            Distribution::Constant { value } if value < 0.0 => Some("negative constant".into()),
            Distribution::Uniform { lo, hi } if lo < 0.0 || hi < lo => {
                Some("uniform bounds must satisfy 0 <= lo <= hi".into())
            }
            Distribution::LogNormal { median, sigma } if median <= 0.0 || sigma < 0.0 => {
                Some("lognormal needs median > 0 and sigma >= 0".into())
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserCounts {
    pub fixed: usize,
    pub aeronautical: usize,
    pub maritime: usize,
    pub land_mobile: usize,
}

impl UserCounts {
    pub fn total(&self) -> usize {
        self.fixed + self.aeronautical + self.maritime + self.land_mobile
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demands {
    pub fixed_bps: f64,
    pub aeronautical_bps: f64,
    pub maritime_bps: f64,
    pub land_mobile_bps: f64,
}

impl Default for Demands {
    fn default() -> Self {
        Demands {
            fixed_bps: 100e6,
            aeronautical_bps: 20e6,
            maritime_bps: 50e6,
            land_mobile_bps: 10e6,
        }
    }
}

impl Demands {
    pub fn scaled(&self, k: f64) -> Demands {
        Demands {
            fixed_bps: self.fixed_bps * k,
            aeronautical_bps: self.aeronautical_bps * k,
            maritime_bps: self.maritime_bps * k,
            land_mobile_bps: self.land_mobile_bps * k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl Default for Region {
    fn default() -> Self {
        Region {
            lat_min: -30.0,
            lat_max: 30.0,
            lon_min: -30.0,
            lon_max: 30.0,
        }
    }
}

impl Region {
    pub fn contains(&self, p: &GeoPoint) -> bool {
        (self.lat_min..=self.lat_max).contains(&p.lat_deg)
            && (self.lon_min..=self.lon_max).contains(&p.lon_deg)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GeoPoint {
        // uniform on the sphere patch
        let (s0, s1) = (self.lat_min.to_radians().sin(), self.lat_max.to_radians().sin());
        let lat = rng.random_range(s0..s1).asin().to_degrees();
        let lon = rng.random_range(self.lon_min..self.lon_max);
        GeoPoint::new(lat, lon, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub name: String,
    pub lat_deg: f64,
    pub lon_deg: f64,
}

impl Site {
    pub fn position(&self) -> GeoPoint {
        GeoPoint::new(self.lat_deg, self.lon_deg, 0.0)
    }
}

const DEFAULT_AIRPORTS: &[(&str, f64, f64)] = &[
    ("ALDA", 24.1, -21.3),
    ("BRIX", 18.7, -6.2),
    ("CORV", 27.5, 8.9),
    ("DUNE", 21.2, 19.4),
    ("ESKA", 25.8, 27.1),
    ("FARO", 11.4, -26.7),
    ("GLEN", 13.9, -12.5),
    ("HALO", 9.6, 0.8),
    ("IRIS", 15.2, 11.7),
    ("JUNO", 8.3, 24.6),
    ("KELP", 2.7, -19.8),
    ("LUMA", -1.4, -8.1),
    ("MIRA", 3.9, 5.2),
    ("NOVA", 0.6, 15.9),
    ("ORCA", -2.8, 28.3),
    ("PIKE", -9.5, -27.4),
    ("QUAY", -7.1, -15.3),
    ("ROSA", -11.8, -3.6),
    ("SOLA", -6.4, 9.3),
    ("TIDE", -12.9, 21.8),
    ("UMBR", -19.3, -23.1),
    ("VALE", -17.6, -10.9),
    ("WREN", -21.5, 1.4),
    ("XENA", -16.2, 13.6),
    ("YARO", -23.7, 25.2),
    ("ZEST", -27.4, -14.8),
    ("ARNO", -26.1, 6.7),
    ("BELL", 28.6, -11.2),
    ("CAPE", 5.8, -3.3),
    ("DORA", -4.2, 19.1),
];

const DEFAULT_PORTS: &[(&str, f64, f64)] = &[
    ("P-ANSE", 20.3, -28.5),
    ("P-BAIE", 6.1, -29.2),
    ("P-CALA", -10.7, -28.9),
    ("P-DOCK", -25.8, -27.0),
    ("P-ESTE", 22.9, 29.1),
    ("P-FJOR", 4.4, 29.4),
    ("P-GULF", -14.3, 29.0),
    ("P-HAVN", -28.2, 18.4),
    ("P-ISLA", 0.2, -0.4),
    ("P-JETT", 29.0, 2.6),
    ("P-KAIS", -29.1, -5.3),
    ("P-LAGO", 12.8, 4.1),
];

fn sites(list: &[(&str, f64, f64)]) -> Vec<Site> {
    list.iter()
        .map(|&(n, la, lo)| Site {
            name: n.to_string(),
            lat_deg: la,
            lon_deg: lo,
        })
        .collect()
}

/// Read `name,lat_deg,lon_deg` rows.
pub fn load_sites_csv<R: std::io::Read>(r: R) -> Result<Vec<Site>, ScenarioError> {
    csv::Reader::from_reader(r)
        .deserialize()
        .collect::<Result<Vec<Site>, _>>()
        .map_err(|e| ScenarioError::Sites(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub counts: UserCounts,
    pub uncertainty: UncertaintyLevel,
    pub region: Region,
    pub airports: Vec<Site>,
    pub ports: Vec<Site>,
    pub horizon_s: f64,
    pub seed: u64,
    pub dt_s: f64,
    pub grid: GridConfig,
    pub constellation: Constellation,
    pub demands: Demands,
    /// Departure delay of aeronautical users at high uncertainty.
    pub delay_high: Distribution,
    pub delay_low: Distribution,
    pub max_delay_s: f64,
    /// Mid-route offset of alternative flight paths, km.
    pub deviation_high: Distribution,
    pub deviation_low: Distribution,
    /// How long before the affected service starts an event becomes known.
    pub reveal_lead_s: f64,
    pub gateway_spacing_deg: f64,
    pub fixed_beam_radius_km: f64,
    pub aircraft_speed_kmh: f64,
    pub min_flight_km: f64,
    pub ship_speed_kmh: f64,
    pub land_speed_kmh: f64,
}

/// log-normal spread putting p95 at five times the median
fn wide_sigma() -> f64 {
    5f64.ln() / 1.645
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            counts: UserCounts {
                fixed: 25,
                aeronautical: 200,
                maritime: 10,
                land_mobile: 10,
            },
            uncertainty: UncertaintyLevel::High,
            region: Region::default(),
            airports: sites(DEFAULT_AIRPORTS),
            ports: sites(DEFAULT_PORTS),
            horizon_s: 86_400.0,
            seed: 0,
            dt_s: 60.0,
            grid: GridConfig::default(),
            constellation: Constellation::default(),
            demands: Demands::default(),
            delay_high: Distribution::LogNormal {
                median: 900.0,
                sigma: wide_sigma(),
            },
            delay_low: Distribution::LogNormal {
                median: 900.0,
                sigma: wide_sigma() / 2.0,
            },
            max_delay_s: 3.0 * 3600.0,
            deviation_high: Distribution::LogNormal {
                median: 120.0,
                sigma: 0.5,
            },
            deviation_low: Distribution::LogNormal {
                median: 40.0,
                sigma: 0.5,
            },
            reveal_lead_s: 1800.0,
            gateway_spacing_deg: 15.0,
            fixed_beam_radius_km: 150.0,
            aircraft_speed_kmh: 800.0,
            min_flight_km: 800.0,
            ship_speed_kmh: 30.0,
            land_speed_kmh: 60.0,
        }
    }
}

pub const PRESETS: &[&str] = &["paper-245", "paper-330"];

impl ScenarioSpec {
    /// Named population presets.
    pub fn preset(name: &str) -> Option<ScenarioSpec> {
        let counts = match name {
            "paper-245" => UserCounts {
                fixed: 25,
                aeronautical: 200,
                maritime: 10,
                land_mobile: 10,
            },
            "paper-330" => UserCounts {
                fixed: 50,
                aeronautical: 250,
                maritime: 15,
                land_mobile: 15,
            },
            _ => return None,
        };
        Some(ScenarioSpec {
            counts,
            ..ScenarioSpec::default()
        })
    }

    pub fn empty() -> ScenarioSpec {
        ScenarioSpec {
            counts: UserCounts {
                fixed: 0,
                aeronautical: 0,
                maritime: 0,
                land_mobile: 0,
            },
            ..ScenarioSpec::default()
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::InvalidSpec(m.to_string()));
        if !(self.horizon_s > 0.0) || !(self.dt_s > 0.0) {
            return bad("horizon and dt must be positive");
        }
        let r = &self.region;
        if !(r.lat_min < r.lat_max && r.lon_min < r.lon_max) {
            return bad("empty region");
        }
        if self.counts.aeronautical > 0 && self.airports.len() < 2 {
            return bad("need at least two airports");
        }
        if self.counts.maritime > 0 && self.ports.len() < 2 {
            return bad("need at least two ports");
        }
        for d in [
            &self.delay_high,
            &self.delay_low,
            &self.deviation_high,
            &self.deviation_low,
        ] {
            if let Some(m) = d.validate() {
                return Err(ScenarioError::InvalidSpec(m));
            }
        }
        if !(self.gateway_spacing_deg > 0.0) || !(self.fixed_beam_radius_km > 0.0) {
            return bad("gateway spacing and beam radius must be positive");
        }
        if !(self.aircraft_speed_kmh > 0.0 && self.ship_speed_kmh > 0.0 && self.land_speed_kmh > 0.0) {
            return bad("speeds must be positive");
        }
        let mut v = self.grid.validate();
        v.extend(self.constellation.validate());
        if let Some(m) = v.into_iter().next() {
            return Err(ScenarioError::InvalidSpec(m));
        }
        Ok(())
    }

    pub fn delay_distribution(&self) -> Option<&Distribution> {
        match self.uncertainty {
            UncertaintyLevel::None => None,
            UncertaintyLevel::Low => Some(&self.delay_low),
            UncertaintyLevel::High => Some(&self.delay_high),
        }
    }

    pub fn deviation_distribution(&self) -> Option<&Distribution> {
        match self.uncertainty {
            UncertaintyLevel::None => None,
            UncertaintyLevel::Low => Some(&self.deviation_low),
            UncertaintyLevel::High => Some(&self.deviation_high),
        }
    }

    fn draw_delay<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.delay_distribution() {
            Some(d) => ((d.sample(rng) / 60.0).round() * 60.0).min(self.max_delay_s),
            None => 0.0,
        }
    }
}

fn align_down(t: f64, dt: f64) -> f64 {
    (t / dt).floor() * dt
}

fn align_up(t: f64, dt: f64) -> f64 {
    (t / dt).ceil() * dt
}

const KM: f64 = 1000.0;

fn km_to_rad(km: f64) -> f64 {
    km * KM / EARTH_RADIUS_M
}

/// Timed path through waypoints at constant ground speed, sampled every `step`.
fn timed_path(waypoints: &[GeoPoint], t0: f64, t1: f64, step: f64) -> Trajectory {
    let legs: Vec<f64> = waypoints.windows(2).map(|w| central_angle(&w[0], &w[1])).collect();
    let total: f64 = legs.iter().sum();
    let at = |f: f64| -> GeoPoint {
        let mut d = f * total;
        for (k, &l) in legs.iter().enumerate() {
            if d <= l || k == legs.len() - 1 {
                let x = if l > 0.0 { (d / l).clamp(0.0, 1.0) } else { 0.0 };
                return geometry::slerp(&waypoints[k], &waypoints[k + 1], x);
            }
            d -= l;
        }
        waypoints[waypoints.len() - 1]
    };
    let mut samples = Vec::new();
    let mut t = t0;
    while t < t1 {
        samples.push(TrajectorySample {
            t,
            position: at((t - t0) / (t1 - t0)),
        });
        t += step;
    }
    samples.push(TrajectorySample {
        t: t1,
        position: *waypoints.last().expect("waypoints"),
    });
    Trajectory { samples }
}

fn with_alt(tr: Trajectory, alt_m: f64) -> Trajectory {
    Trajectory {
        samples: tr
            .samples
            .into_iter()
            .map(|mut s| {
                s.position.alt_m = alt_m;
                s
            })
            .collect(),
    }
}

const CRUISE_ALT_M: f64 = 10_000.0;

/// Generate a population, its realized truth, and the event stream.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario, ScenarioError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dt = spec.dt_s;
    let horizon = spec.horizon_s;
    let mut users: Vec<User> = Vec::new();
    let mut truth = Vec::new();
    let mut events = Vec::new();
    let mut next_id: UserId = 0;

    let cities: Vec<GeoPoint> = spec.airports.iter().map(Site::position).collect();
    for _ in 0..spec.counts.fixed {
        // most fixed users cluster around a city, some are scattered
        let p = if !cities.is_empty() && rng.random_bool(0.6) {
            let c = *cities.choose(&mut rng).expect("cities");
            let off = Normal::new(0.0f64, 80.0).expect("normal").sample(&mut rng).abs();
            let q = geometry::destination(&c, rng.random_range(0.0..2.0 * PI), km_to_rad(off));
            if spec.region.contains(&q) {
                q
            } else {
                c
            }
        } else {
            spec.region.sample(&mut rng)
        };
        users.push(User {
            id: next_id,
            kind: UserKind::Fixed,
            demand_bps: spec.demands.fixed_bps,
            t_start: 0.0,
            t_end: horizon,
            trajectory: Trajectory::fixed(p),
            known_a_priori: true,
            uncertainty: UncertaintySpec::default(),
        });
        next_id += 1;
    }

    let airports: Vec<GeoPoint> = spec.airports.iter().map(Site::position).collect();
    for _ in 0..spec.counts.aeronautical {
        let (a, b) = loop {
            let a = *airports.choose(&mut rng).expect("airports");
            let b = *airports.choose(&mut rng).expect("airports");
            if central_angle(&a, &b) * EARTH_RADIUS_M >= spec.min_flight_km * KM {
                break (a, b);
            }
            if airports.len() < 2 {
                return Err(ScenarioError::InvalidSpec("airports too close".into()));
            }
        };
        let dist_km = central_angle(&a, &b) * EARTH_RADIUS_M / KM;
        let dur = align_up(dist_km / spec.aircraft_speed_kmh * 3600.0, dt).min(horizon);
        let t_start = align_down(rng.random_range(0.0..(horizon - dur).max(dt)), dt);
        let t_end = (t_start + dur).min(horizon);
        let (a, b) = (
            GeoPoint::new(a.lat_deg, a.lon_deg, CRUISE_ALT_M),
            GeoPoint::new(b.lat_deg, b.lon_deg, CRUISE_ALT_M),
        );
        let declared = with_alt(timed_path(&[a, b], t_start, t_end, 300.0), CRUISE_ALT_M);
        let mut unc = UncertaintySpec::default();
        let id = next_id;
        next_id += 1;
        if let Some(dev) = spec.deviation_distribution() {
            let n_alt = rng.random_range(2..=4);
            let mid = geometry::slerp(&a, &b, 0.5);
            let course = geometry::bearing(&mid, &b);
            for k in 0..n_alt {
                let side = if k % 2 == 0 { 1.0 } else { -1.0 };
                let off = dev.sample(&mut rng).min(dist_km / 2.0);
                let w = geometry::destination(&mid, course + side * PI / 2.0, km_to_rad(off));
                let w = GeoPoint::new(w.lat_deg, w.lon_deg, CRUISE_ALT_M);
                unc.alt_trajectories
                    .push(with_alt(timed_path(&[a, w, b], t_start, t_end, 300.0), CRUISE_ALT_M));
            }
            unc.max_delay_s = spec.max_delay_s;
            let delay = spec.draw_delay(&mut rng);
            let route = if rng.random_bool(0.5) {
                Some(rng.random_range(0..n_alt))
            } else {
                None
            };
            truth.push(RealizedTruth {
                user_id: id,
                delay_s: delay,
                trajectory: route,
            });
            if delay > 0.0 {
                events.push(Event {
                    t_reveal: (t_start - spec.reveal_lead_s).max(0.0),
                    payload: EventPayload::Delay {
                        user_id: id,
                        delay_s: delay,
                    },
                });
            }
            if let Some(k) = route {
                events.push(Event {
                    t_reveal: (t_start + delay - spec.reveal_lead_s).max(0.0),
                    payload: EventPayload::TrajectoryChange {
                        user_id: id,
                        trajectory: unc.alt_trajectories[k].clone(),
                    },
                });
            }
        }
        users.push(User {
            id,
            kind: UserKind::Aeronautical,
            demand_bps: spec.demands.aeronautical_bps,
            t_start,
            t_end,
            trajectory: declared,
            known_a_priori: true,
            uncertainty: unc,
        });
    }

    let ports: Vec<GeoPoint> = spec.ports.iter().map(Site::position).collect();
    for _ in 0..spec.counts.maritime {
        let (a, b) = loop {
            let a = *ports.choose(&mut rng).expect("ports");
            let b = *ports.choose(&mut rng).expect("ports");
            if central_angle(&a, &b) > 0.0 {
                break (a, b);
            }
        };
        // ship already under way somewhere along its route
        let start = geometry::slerp(&a, &b, rng.random_range(0.0..0.8));
        let remaining_km = central_angle(&start, &b) * EARTH_RADIUS_M / KM;
        let dur = align_up(remaining_km / spec.ship_speed_kmh * 3600.0, dt).min(horizon);
        let end = if dur >= horizon {
            geometry::slerp(
                &start,
                &b,
                horizon / (remaining_km / spec.ship_speed_kmh * 3600.0),
            )
        } else {
            b
        };
        users.push(User {
            id: next_id,
            kind: UserKind::Maritime,
            demand_bps: spec.demands.maritime_bps,
            t_start: 0.0,
            t_end: dur,
            trajectory: timed_path(&[start, end], 0.0, dur, 600.0),
            known_a_priori: true,
            uncertainty: UncertaintySpec::default(),
        });
        next_id += 1;
    }

    let n_land = spec.counts.land_mobile;
    let n_unknown = (spec.uncertainty.land_unknown_fraction() * n_land as f64 - 1e-9).ceil() as usize;
    // which land users stay hidden until they appear
    let mut hidden: Vec<usize> = (0..n_land).collect();
    for k in 0..n_land {
        let j = rng.random_range(k..n_land);
        hidden.swap(k, j);
    }
    hidden.truncate(n_unknown);
    for k in 0..n_land {
        let c = if cities.is_empty() {
            spec.region.sample(&mut rng)
        } else {
            *cities.choose(&mut rng).expect("cities")
        };
        let dur = align_up(rng.random_range(2.0..8.0) * 3600.0, dt).min(horizon);
        let t_start = align_down(rng.random_range(0.0..(horizon - dur).max(dt)), dt);
        let t_end = (t_start + dur).min(horizon);
        let reach = km_to_rad(spec.land_speed_kmh * dur / 3600.0);
        let end = geometry::destination(&c, rng.random_range(0.0..2.0 * PI), reach);
        let known = !hidden.contains(&k);
        let u = User {
            id: next_id,
            kind: UserKind::LandMobile,
            demand_bps: spec.demands.land_mobile_bps,
            t_start,
            t_end,
            trajectory: timed_path(&[c, end], t_start, t_end, 300.0),
            known_a_priori: known,
            uncertainty: UncertaintySpec::default(),
        };
        if !known {
            events.push(Event {
                t_reveal: t_start,
                payload: EventPayload::NewUser { user: u.clone() },
            });
        }
        users.push(u);
        next_id += 1;
    }

    events.sort_by(|x, y| {
        x.t_reveal
            .total_cmp(&y.t_reveal)
            .then(x.payload.user_id().cmp(&y.payload.user_id()))
            .then(event_rank(&x.payload).cmp(&event_rank(&y.payload)))
    });

    let priors = compute_percentiles(spec, PRIOR_SAMPLES).ok();
    Ok(Scenario {
        grid: spec.grid.clone(),
        constellation: spec.constellation.clone(),
        gateways: gateway_grid(&spec.region, spec.gateway_spacing_deg),
        users,
        horizon_s: horizon,
        seed: spec.seed,
        events,
        truth,
        priors,
    })
}

/// Draws behind the percentile priors stored in generated scenarios.
pub const PRIOR_SAMPLES: usize = 2000;

fn event_rank(p: &EventPayload) -> u8 {
    match p {
        EventPayload::Delay { .. } => 0,
        EventPayload::TrajectoryChange { .. } => 1,
        EventPayload::NewUser { .. } => 2,
    }
}

/// Gateways on a regular lat/lon lattice covering the region.
pub fn gateway_grid(region: &Region, spacing_deg: f64) -> Vec<Gateway> {
    let mut v = Vec::new();
    let mut lat = region.lat_min + spacing_deg / 2.0;
    while lat < region.lat_max {
        let mut lon = region.lon_min + spacing_deg / 2.0;
        while lon < region.lon_max {
            v.push(Gateway {
                id: v.len() as u32,
                position: GeoPoint::new(lat, lon, 0.0),
            });
            lon += spacing_deg;
        }
        lat += spacing_deg;
    }
    v
}

/// Linear-interpolated empirical quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (h - lo as f64)
}

fn quantiles(mut v: Vec<f64>) -> Quantiles {
    v.sort_by(f64::total_cmp);
    Quantiles {
        p50: quantile(&v, 0.50),
        p75: quantile(&v, 0.75),
        p95: quantile(&v, 0.95),
    }
}

/// Empirical percentiles of the scenario spec's delay and route-deviation draws.
pub fn compute_percentiles(spec: &ScenarioSpec, n_samples: usize) -> Result<Percentiles, ScenarioError> {
    if n_samples < 100 {
        return Err(ScenarioError::InvalidSpec("need at least 100 samples".into()));
    }
    let (Some(delay), Some(dev)) = (spec.delay_distribution(), spec.deviation_distribution())
    else {
        return Err(ScenarioError::InvalidSpec(
            "no uncertainty, nothing to sample".into(),
        ));
    };
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_9e3c);
    let delays = (0..n_samples)
        .map(|_| delay.sample(&mut rng).min(spec.max_delay_s))
        .collect();
    let devs = (0..n_samples).map(|_| km_to_rad(dev.sample(&mut rng))).collect();
    Ok(Percentiles {
        delay_s: quantiles(delays),
        deviation_rad: quantiles(devs),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedGroup {
    pub center: GeoPoint,
    pub user_ids: Vec<UserId>,
}

/// Greedy disc clustering: open a beam at the unassigned user with the most
/// unassigned neighbours, absorb everyone within the radius, repeat.
pub fn group_fixed_users(users: &[&User], max_beam_radius_rad: f64) -> Vec<FixedGroup> {
    let pos: Vec<GeoPoint> = users.iter().map(|u| u.trajectory.start()).collect();
    let n = users.len();
    let near: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| central_angle(&pos[i], &pos[j]) <= max_beam_radius_rad)
                .collect()
        })
        .collect();
    let mut taken = vec![false; n];
    let mut out = Vec::new();
    loop {
        let best = (0..n)
            .filter(|&i| !taken[i])
            .map(|i| (near[i].iter().filter(|&&j| !taken[j]).count(), i))
            .max_by(|a, b| a.0.cmp(&b.0).then(users[b.1].id.cmp(&users[a.1].id)));
        let Some((_, i)) = best else { break };
        let members: Vec<usize> = near[i].iter().copied().filter(|&j| !taken[j]).collect();
        for &j in &members {
            taken[j] = true;
        }
        let mut ids: Vec<UserId> = members.iter().map(|&j| users[j].id).collect();
        ids.sort_unstable();
        out.push(FixedGroup {
            center: pos[i],
            user_ids: ids,
        });
    }
    out
}

fn closest_gateway(gws: &[Gateway], p: &GeoPoint) -> Option<u32> {
    gws.iter()
        .map(|g| (central_angle(&g.position, p), g.id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|x| x.1)
}

/// Split a mobile service window wherever the closest gateway changes.
pub fn gateway_segments(u: &User, gateways: &[Gateway], dt: f64) -> Vec<(f64, f64)> {
    let steps = geometry::grid_steps(u.t_start, u.t_end, dt);
    let mut cuts = vec![u.t_start];
    let mut prev = None;
    for k in steps {
        let t = k as f64 * dt;
        let g = closest_gateway(gateways, &u.trajectory.position(t));
        if prev.is_some() && g != prev && t > u.t_start {
            cuts.push(t);
        }
        prev = g;
    }
    cuts.push(u.t_end);
    cuts.windows(2)
        .filter(|w| w[0] < w[1])
        .map(|w| (w[0], w[1]))
        .collect()
}

#[derive(Debug, Clone)]
pub struct BeamBuildParams<'a> {
    pub link: &'a LinkParams,
    pub modcods: &'a ModcodTable,
    pub dt_s: f64,
    pub fixed_beam_radius_km: f64,
    pub max_beam_power_w: f64,
}

/// Beams for every user in the scenario, known or not.
///
/// Fixed users are grouped first; mobile users follow in id order, one beam per
/// gateway segment. Ids are therefore stable across knowledge states.
pub fn build_beams(s: &Scenario, p: &BeamBuildParams) -> Result<Vec<Beam>, ScenarioError> {
    let fixed: Vec<&User> = s.users.iter().filter(|u| u.kind == UserKind::Fixed).collect();
    let mut beams = Vec::new();
    let bw = s.grid.channel_bandwidth_hz;
    let n_ch = s.grid.n_channels;
    let mk = |id: BeamId, user: UserId, demand: f64| -> Result<(u32, u32, crate::domain::PowerTable), ScenarioError> {
        let err = |e| ScenarioError::Link { user, source: e };
        let (lo, hi) = compute_b_range(demand, bw, p.link, p.modcods, n_ch, p.max_beam_power_w).map_err(err)?;
        let t = build_power_table(id, demand, lo, hi, bw, p.link, p.modcods).map_err(err)?;
        Ok((lo, hi, t))
    };
    for g in group_fixed_users(&fixed, km_to_rad(p.fixed_beam_radius_km)) {
        let id = beams.len() as BeamId;
        let demand: f64 = g
            .user_ids
            .iter()
            .map(|&u| s.user(u).map_or(0.0, |u| u.demand_bps))
            .sum();
        let (b_min, b_max, table) = mk(id, g.user_ids[0], demand)?;
        beams.push(Beam {
            id,
            user_ids: g.user_ids,
            kind: UserKind::Fixed,
            t_start: 0.0,
            t_end: s.horizon_s,
            demand_bps: demand,
            b_min,
            b_max,
            trajectory: Trajectory::fixed(g.center),
            power_table: table,
        });
    }
    let mut mobile: Vec<&User> = s.users.iter().filter(|u| u.kind.is_mobile()).collect();
    mobile.sort_by_key(|u| u.id);
    for u in mobile {
        beams.extend(user_beams(u, beams.len() as BeamId, s, p, &mk)?);
    }
    Ok(beams)
}

type BeamMaker<'a> =
    dyn Fn(BeamId, UserId, f64) -> Result<(u32, u32, crate::domain::PowerTable), ScenarioError> + 'a;

fn user_beams(
    u: &User,
    first_id: BeamId,
    s: &Scenario,
    p: &BeamBuildParams,
    mk: &BeamMaker,
) -> Result<Vec<Beam>, ScenarioError> {
    let mut v = Vec::new();
    for (k, (a, b)) in gateway_segments(u, &s.gateways, p.dt_s).into_iter().enumerate() {
        let id = first_id + k as BeamId;
        let (b_min, b_max, table) = mk(id, u.id, u.demand_bps)?;
        v.push(Beam {
            id,
            user_ids: vec![u.id],
            kind: u.kind,
            t_start: a,
            t_end: b,
            demand_bps: u.demand_bps,
            b_min,
            b_max,
            trajectory: u.trajectory.clone(),
            power_table: table,
        });
    }
    Ok(v)
}

/// Constraint-builder view of a beam as currently known.
pub fn constraint_beam(beam: &Beam, user: Option<&User>) -> ConstraintBeam {
    let unc = user.map(|u| &u.uncertainty);
    ConstraintBeam {
        id: beam.id,
        t_start: beam.t_start,
        t_end: beam.t_end,
        trajectory: beam.trajectory.clone(),
        uncertain_route: unc.is_some_and(|x| !x.alt_trajectories.is_empty()),
        operational_area: unc.and_then(|x| x.operational_area.clone()),
    }
}

/// A beam as it actually plays out: window moved by the realized delay and
/// position taken from the realized route.
pub fn realized_beam(beam: &Beam, s: &Scenario) -> ConstraintBeam {
    let user = beam.user_ids.first().and_then(|&u| s.user(u));
    let (route, delay) = match user {
        Some(u) if beam.is_mobile() => s.realized(u),
        _ => (beam.trajectory.clone(), 0.0),
    };
    ConstraintBeam {
        id: beam.id,
        t_start: (beam.t_start + delay).min(s.horizon_s),
        t_end: (beam.t_end + delay).min(s.horizon_s),
        trajectory: if delay > 0.0 { route.shifted(delay) } else { route },
        uncertain_route: false,
        operational_area: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed_user(id: UserId, lat: f64, lon: f64) -> User {
        User {
            id,
            kind: UserKind::Fixed,
            demand_bps: 10e6,
            t_start: 0.0,
            t_end: 86_400.0,
            trajectory: Trajectory::fixed(GeoPoint::new(lat, lon, 0.0)),
            known_a_priori: true,
            uncertainty: UncertaintySpec::default(),
        }
    }

    #[test]
    fn empty_counts_give_empty_scenario() {
        let s = generate_scenario(&ScenarioSpec::empty()).unwrap();
        assert!(s.users.is_empty() && s.events.is_empty() && s.truth.is_empty());
    }

    #[test]
    fn low_uncertainty_hides_a_quarter_of_land_users() {
        for n in [1, 4, 10, 15] {
            let mut spec = ScenarioSpec::empty();
            spec.counts.land_mobile = n;
            spec.uncertainty = UncertaintyLevel::Low;
            let s = generate_scenario(&spec).unwrap();
            let hidden = s.users.iter().filter(|u| !u.known_a_priori).count();
            assert_eq!(hidden, (0.25 * n as f64).ceil() as usize);
            spec.uncertainty = UncertaintyLevel::High;
            let s = generate_scenario(&spec).unwrap();
            let hidden = s.users.iter().filter(|u| !u.known_a_priori).count();
            assert_eq!(hidden, (0.75 * n as f64).ceil() as usize);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = ScenarioSpec::preset("paper-245").unwrap();
        let a = generate_scenario(&spec).unwrap().to_json();
        let b = generate_scenario(&spec).unwrap().to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn preset_counts() {
        let s = generate_scenario(&ScenarioSpec::preset("paper-330").unwrap()).unwrap();
        assert_eq!(s.users.len(), 330);
        assert!(crate::domain::validate_scenario(&s).is_empty());
        assert!(ScenarioSpec::preset("nope").is_none());
    }

    #[test]
    fn no_uncertainty_everything_known() {
        let mut spec = ScenarioSpec::preset("paper-245").unwrap();
        spec.uncertainty = UncertaintyLevel::None;
        let s = generate_scenario(&spec).unwrap();
        assert!(s.users.iter().all(|u| u.known_a_priori));
        assert!(s.events.is_empty() && s.truth.is_empty());
    }

    #[test]
    fn constant_delay_percentiles() {
        let mut spec = ScenarioSpec::default();
        spec.delay_high = Distribution::Constant { value: 600.0 };
        let p = compute_percentiles(&spec, 200).unwrap();
        assert_eq!((p.delay_s.p50, p.delay_s.p75, p.delay_s.p95), (600.0, 600.0, 600.0));
    }

    #[test]
    fn uniform_delay_median() {
        let mut spec = ScenarioSpec::default();
        spec.delay_high = Distribution::Uniform { lo: 0.0, hi: 1000.0 };
        let p = compute_percentiles(&spec, 20_000).unwrap();
        assert!((p.delay_s.p50 - 500.0f64).abs() < 15.0);
        assert!((p.delay_s.p95 - 950.0).abs() < 10.0);
    }

    #[test]
    fn default_delay_p95_near_five_medians() {
        let p = compute_percentiles(&ScenarioSpec::default(), 50_000).unwrap();
        assert!((p.delay_s.p50 - 900.0).abs() < 30.0);
        assert!((p.delay_s.p95 - 4500.0).abs() < 300.0);
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(compute_percentiles(&ScenarioSpec::default(), 0).is_err());
    }

    #[test]
    fn one_user_one_group() {
        let u = fixed_user(0, 0.0, 0.0);
        let g = group_fixed_users(&[&u], km_to_rad(100.0));
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].user_ids, vec![0]);
    }

    #[test]
    fn far_users_get_separate_groups() {
        let a = fixed_user(0, 0.0, 0.0);
        let b = fixed_user(1, 0.0, 5.0);
        assert_eq!(group_fixed_users(&[&a, &b], km_to_rad(100.0)).len(), 2);
    }

    #[test]
    fn cluster_plus_isolated() {
        // 20 users within 0.2 deg of the origin, 5 spread far apart
        let mut us: Vec<User> = (0..20)
            .map(|k| {
                let a = k as f64 * PI / 10.0;
                fixed_user(k, 0.2 * a.sin() * (k % 3) as f64 / 2.0, 0.2 * a.cos() * (k % 3) as f64 / 2.0)
            })
            .collect();
        for k in 0..5 {
            us.push(fixed_user(20 + k, 10.0 + 4.0 * k as f64, -10.0));
        }
        let refs: Vec<&User> = us.iter().collect();
        let g = group_fixed_users(&refs, km_to_rad(60.0));
        assert_eq!(g.len(), 6);
        assert_eq!(g[0].user_ids.len(), 20);
        let total: usize = g.iter().map(|x| x.user_ids.len()).sum();
        assert_eq!(total, 25);
    }

    #[test]
    fn gateway_split_at_boundary() {
        let region = Region::default();
        let gws = gateway_grid(&region, 10.0);
        let u = User {
            id: 0,
            kind: UserKind::LandMobile,
            demand_bps: 1e6,
            t_start: 0.0,
            t_end: 3600.0,
            trajectory: Trajectory {
                samples: vec![
                    TrajectorySample { t: 0.0, position: GeoPoint::new(1.0, 1.0, 0.0) },
                    TrajectorySample { t: 3600.0, position: GeoPoint::new(1.0, 14.0, 0.0) },
                ],
            },
            known_a_priori: true,
            uncertainty: UncertaintySpec::default(),
        };
        let seg = gateway_segments(&u, &gws, 60.0);
        assert_eq!(seg.len(), 2);
        assert_eq!(seg[0].0, 0.0);
        assert_eq!(seg[1].1, 3600.0);
        assert_eq!(seg[0].1, seg[1].0);
        assert_eq!(seg[0].1 % 60.0, 0.0);
    }

    #[test]
    fn sites_csv_round() {
        let txt = "name,lat_deg,lon_deg\nX,1.5,-2.0\nY,0,3\n";
        let v = load_sites_csv(txt.as_bytes()).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].lat_deg, 1.5);
        assert!(load_sites_csv("name,lat_deg\nX,a\n".as_bytes()).is_err());
    }
}
