//! Constellation propagation, visibility, routing and angular separations.
//!
//! Earth is a sphere and the frame is Earth-centred and non-rotating, so a
//! ground point keeps fixed coordinates and a satellite returns to the same
//! place after one orbital period.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Beam, GeoPoint};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
pub const MU_EARTH: f64 = 3.986_004_418e14;

pub type Vec3 = [f64; 3];
pub type SatId = u32;

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn scale(a: Vec3, k: f64) -> Vec3 {
    [a[0] * k, a[1] * k, a[2] * k]
}

#[inline]
pub fn unit(a: Vec3) -> Vec3 {
    scale(a, 1.0 / norm(a))
}

/// Angle between two vectors, accurate for tiny and near-pi angles.
#[inline]
pub fn angle_between(a: Vec3, b: Vec3) -> f64 {
    norm(cross(a, b)).atan2(dot(a, b))
}

/// Central angle between two ground points.
pub fn central_angle(a: &GeoPoint, b: &GeoPoint) -> f64 {
    angle_between(a.unit(), b.unit())
}

/// Point reached by travelling `angle` radians of arc from `p` along `bearing_rad`.
pub fn destination(p: &GeoPoint, bearing_rad: f64, angle: f64) -> GeoPoint {
    let lat1 = p.lat_deg.to_radians();
    let lon1 = p.lon_deg.to_radians();
    let lat2 = (lat1.sin() * angle.cos() + lat1.cos() * angle.sin() * bearing_rad.cos()).asin();
    let lon2 = lon1
        + (bearing_rad.sin() * angle.sin() * lat1.cos()).atan2(angle.cos() - lat1.sin() * lat2.sin());
    GeoPoint::new(lat2.to_degrees(), wrap_lon(lon2.to_degrees()), p.alt_m)
}

/// Initial bearing from `a` towards `b`.
pub fn bearing(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let lat1 = a.lat_deg.to_radians();
    let lat2 = b.lat_deg.to_radians();
    let dlon = (b.lon_deg - a.lon_deg).to_radians();
    let y = dlon.sin() * lat2.cos();
    let x = lat1.cos() * lat2.sin() - lat1.sin() * lat2.cos() * dlon.cos();
    y.atan2(x)
}

pub fn wrap_lon(lon: f64) -> f64 {
    let mut l = (lon + 180.0) % 360.0;
    if l < 0.0 {
        l += 360.0;
    }
    l - 180.0
}

/// Great-circle interpolation between two points, altitude linear.
pub fn slerp(a: &GeoPoint, b: &GeoPoint, f: f64) -> GeoPoint {
    let ua = a.unit();
    let ub = b.unit();
    let w = angle_between(ua, ub);
    let alt = a.alt_m + (b.alt_m - a.alt_m) * f;
    if w < 1e-12 {
        return GeoPoint::new(a.lat_deg, a.lon_deg, alt);
    }
    let s = w.sin();
    let ka = ((1.0 - f) * w).sin() / s;
    let kb = (f * w).sin() / s;
    let v = [
        ua[0] * ka + ub[0] * kb,
        ua[1] * ka + ub[1] * kb,
        ua[2] * ka + ub[2] * kb,
    ];
    let mut g = GeoPoint::from_unit(unit(v));
    g.alt_m = alt;
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    pub n_satellites: u32,
    pub altitude_m: f64,
    pub inclination_deg: f64,
    pub raan_deg: f64,
    /// Mean anomaly at epoch per satellite; empty means evenly phased.
    #[serde(default)]
    pub phase_offsets_deg: Vec<f64>,
    pub min_elevation_deg: f64,
}

impl Default for Constellation {
    fn default() -> Self {
        Constellation {
            n_satellites: 7,
            altitude_m: 8_062_000.0,
            inclination_deg: 0.0,
            raan_deg: 0.0,
            phase_offsets_deg: Vec::new(),
            min_elevation_deg: 20.0,
        }
    }
}

impl Constellation {
    pub fn semi_major_axis(&self) -> f64 {
        EARTH_RADIUS_M + self.altitude_m
    }

    pub fn period_s(&self) -> f64 {
        2.0 * std::f64::consts::PI * (self.semi_major_axis().powi(3) / MU_EARTH).sqrt()
    }

    fn epoch_anomaly_rad(&self, k: usize) -> f64 {
        match self.phase_offsets_deg.get(k) {
            Some(d) => d.to_radians(),
            None => 2.0 * std::f64::consts::PI * k as f64 / self.n_satellites as f64,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_satellites == 0 {
            v.push("constellation has no satellites".to_string());
        }
        if self.n_satellites > 64 {
            v.push("constellation exceeds 64 satellites".to_string());
        }
        if !(self.altitude_m > 0.0) {
            v.push("altitude must be positive".to_string());
        }
        if !self.phase_offsets_deg.is_empty()
            && self.phase_offsets_deg.len() != self.n_satellites as usize
        {
            v.push("phase offsets do not match satellite count".to_string());
        }
        if !(0.0..90.0).contains(&self.min_elevation_deg) {
            v.push("elevation mask outside [0, 90)".to_string());
        }
        v
    }

    /// Largest central angle between a ground point and a sub-satellite
    /// point at which the satellite still clears the elevation mask.
    pub fn coverage_half_angle(&self) -> f64 {
        let e = self.min_elevation_deg.to_radians();
        (EARTH_RADIUS_M * e.cos() / self.semi_major_axis()).acos() - e
    }

    /// Slant range to a ground point seen at the elevation mask.
    pub fn max_slant_range(&self) -> f64 {
        let e = self.min_elevation_deg.to_radians();
        let r = EARTH_RADIUS_M;
        let a = self.semi_major_axis();
        (a * a - (r * e.cos()).powi(2)).sqrt() - r * e.sin()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("no satellite visible from ({lat:.3}, {lon:.3}) at t={t}")]
    NoVisibleSatellite { lat: f64, lon: f64, t: f64 },
}

/// Satellite positions at `t`, index k is satellite id k+1.
pub fn propagate(c: &Constellation, t: f64) -> Vec<Vec3> {
    let a = c.semi_major_axis();
    let n = 2.0 * std::f64::consts::PI / c.period_s();
    let inc = c.inclination_deg.to_radians();
    let raan = c.raan_deg.to_radians();
    (0..c.n_satellites as usize)
        .map(|k| {
            let u = c.epoch_anomaly_rad(k) + n * t;
            let (x, y) = (a * u.cos(), a * u.sin());
            // rotate about x by inclination, then about z by raan
            let (yi, zi) = (y * inc.cos(), y * inc.sin());
            [x * raan.cos() - yi * raan.sin(), x * raan.sin() + yi * raan.cos(), zi]
        })
        .collect()
}

/// Sine of the elevation of `sat` seen from ground position `g`.
#[inline]
pub fn sin_elevation(sat: Vec3, g: Vec3) -> f64 {
    let los = sub(sat, g);
    dot(los, g) / (norm(los) * norm(g))
}

/// Above the geometric horizon of `g`.
pub fn visible_from(sat: Vec3, g: Vec3) -> bool {
    sin_elevation(sat, g) >= 0.0
}

pub fn elevation_deg(sat: Vec3, g: Vec3) -> f64 {
    sin_elevation(sat, g).clamp(-1.0, 1.0).asin().to_degrees()
}

const TIE_EPS: f64 = 1e-12;

/// Serving satellite among precomputed positions: highest elevation, lowest id on ties.
pub fn serving_satellite(sats: &[Vec3], g: Vec3, min_elevation_deg: f64) -> Option<SatId> {
    let mask = min_elevation_deg.to_radians().sin() - TIE_EPS;
    let mut best: Option<(usize, f64)> = None;
    for (k, s) in sats.iter().enumerate() {
        let e = sin_elevation(*s, g);
        if e < mask {
            continue;
        }
        match best {
            Some((_, be)) if e <= be + TIE_EPS => {}
            _ => best = Some((k, e)),
        }
    }
    best.map(|(k, _)| k as SatId + 1)
}

pub fn assign_satellite_at(
    pos: &GeoPoint,
    c: &Constellation,
    t: f64,
) -> Result<SatId, GeometryError> {
    let sats = propagate(c, t);
    serving_satellite(&sats, pos.ecef(), c.min_elevation_deg).ok_or(
        GeometryError::NoVisibleSatellite {
            lat: pos.lat_deg,
            lon: pos.lon_deg,
            t,
        },
    )
}

pub fn assign_satellite(beam: &Beam, c: &Constellation, t: f64) -> Result<SatId, GeometryError> {
    assign_satellite_at(&beam.trajectory.position(t), c, t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandoverInterval {
    pub t_from: f64,
    pub t_to: f64,
    pub satellite: SatId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandoverSchedule {
    pub beam_id: u32,
    pub intervals: Vec<HandoverInterval>,
}

impl HandoverSchedule {
    pub fn satellite_at(&self, t: f64) -> Option<SatId> {
        self.intervals
            .iter()
            .find(|iv| iv.t_from <= t && t < iv.t_to)
            .map(|iv| iv.satellite)
    }

    pub fn handovers(&self) -> usize {
        self.intervals.len().saturating_sub(1)
    }
}

/// Grid instants `k*dt` inside `[t_start, t_end)`.
pub fn grid_steps(t_start: f64, t_end: f64, dt: f64) -> std::ops::Range<usize> {
    let first = (t_start / dt).ceil().max(0.0) as usize;
    let last = (t_end / dt).ceil().max(0.0) as usize;
    first..last.max(first)
}

pub fn build_handover_schedule(
    beam: &Beam,
    c: &Constellation,
    dt: f64,
) -> Result<HandoverSchedule, GeometryError> {
    let mut intervals: Vec<HandoverInterval> = Vec::new();
    for k in grid_steps(beam.t_start, beam.t_end, dt) {
        let t = k as f64 * dt;
        let s = assign_satellite(beam, c, t)?;
        match intervals.last_mut() {
            Some(last) if last.satellite == s => last.t_to = (t + dt).min(beam.t_end),
            _ => intervals.push(HandoverInterval {
                t_from: t.max(beam.t_start),
                t_to: (t + dt).min(beam.t_end),
                satellite: s,
            }),
        }
    }
    if let Some(first) = intervals.first_mut() {
        first.t_from = beam.t_start;
    }
    if let Some(last) = intervals.last_mut() {
        last.t_to = beam.t_end;
    }
    Ok(HandoverSchedule {
        beam_id: beam.id,
        intervals,
    })
}

/// Angle at the satellite between the directions to two footprint centres.
pub fn angular_separation(sat: Vec3, p_i: Vec3, p_j: Vec3) -> f64 {
    angle_between(sub(p_i, sat), sub(p_j, sat))
}

/// Minimum separation over all sampled pairs of two position sets.
pub fn set_separation(area_i: &[Vec3], area_j: &[Vec3], sat: Vec3) -> f64 {
    let di: Vec<Vec3> = area_i.iter().map(|p| unit(sub(*p, sat))).collect();
    let dj: Vec<Vec3> = area_j.iter().map(|p| unit(sub(*p, sat))).collect();
    let mut best = f64::INFINITY;
    for a in &di {
        for b in &dj {
            best = best.min(angle_between(*a, *b));
        }
    }
    best
}

/// Disc of `radius_rad` central angle around `center`, sampled as the centre
/// plus `n` evenly spaced boundary points.
pub fn sample_disc(center: &GeoPoint, radius_rad: f64, n: usize) -> Vec<GeoPoint> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(*center);
    if radius_rad > 0.0 {
        for k in 0..n {
            let brg = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            out.push(destination(center, brg, radius_rad));
        }
    }
    out
}

/// Largest ground central angle between two points that can still appear
/// within `threshold_rad` of each other from a satellite of `c`, given that
/// one point sits at most `extra_rad` beyond the coverage edge.
///
/// Found by scanning the worst case geometry (both points in the plane of the
/// satellite, stepping along the line of sight) and padded generously; it is
/// only used to discard pairs early.
pub fn separation_prune_radius(c: &Constellation, threshold_rad: f64, extra_rad: f64) -> f64 {
    let a = c.semi_major_axis();
    let r = EARTH_RADIUS_M;
    let sat = [a, 0.0, 0.0];
    let psi_edge = (c.coverage_half_angle() + extra_rad).min(std::f64::consts::FRAC_PI_2 * 1.2);
    let limb = (r / a).acos();
    let mut worst: f64 = 0.0;
    let n_pos = 200;
    for ip in 0..=n_pos {
        let psi_a = psi_edge * ip as f64 / n_pos as f64;
        let pa = [r * psi_a.cos(), r * psi_a.sin(), 0.0];
        for dir in [-1.0, 1.0] {
            // points past the limb are hidden from the satellite
            let hi = (limb - dir * psi_a).max(0.0) + 1e-9;
            let close = |d: f64| {
                let psi_b = psi_a + dir * d;
                let pb = [r * psi_b.cos(), r * psi_b.sin(), 0.0];
                angular_separation(sat, pa, pb) <= threshold_rad
            };
            let steps = 400;
            let mut lo = 0.0;
            for s in 1..=steps {
                let d = hi * s as f64 / steps as f64;
                if close(d) {
                    lo = d;
                }
            }
            let mut up = (lo + hi / steps as f64).min(hi);
            for _ in 0..60 {
                let mid = 0.5 * (lo + up);
                if close(mid) {
                    lo = mid;
                } else {
                    up = mid;
                }
            }
            worst = worst.max(lo);
        }
    }
    worst * 1.25 + 1e-3
}

/// Any two points closer than this central angle are within `threshold_rad`
/// of each other from every satellite of `c`.
pub fn separation_sure_radius(c: &Constellation, threshold_rad: f64) -> f64 {
    // subtended angle is at most 2 asin(chord / 2h) with h the distance to the
    // nearest point; airborne terminals sit a little closer than the altitude
    let h = c.altitude_m - 20_000.0;
    let chord = 2.0 * h * (threshold_rad / 2.0).sin();
    let x = (chord / (2.0 * EARTH_RADIUS_M)).min(1.0);
    2.0 * x.asin() * (1.0 - 1e-9)
}
