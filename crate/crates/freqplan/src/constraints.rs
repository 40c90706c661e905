//! Pairwise interference (`alpha`) and handover (`beta`) indicators and their
//! collapse into restriction sets over the horizon.
//!
//! Indicators compare beam `i` at its time `t_i` with beam `j` at `t_j`. With a
//! delay horizon `t_d`, a pair is restricted when some `t_i`, `t_j` on the time
//! grid with `|t_i - t_j| <= t_d` triggers the indicator.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::{BeamId, GeoPoint, Trajectory};
use crate::geometry::{
    self, angle_between, dot, norm, sample_disc, sub, separation_prune_radius, separation_sure_radius,
    serving_satellite, visible_from, Constellation, SatId, Vec3, EARTH_RADIUS_M,
};

pub const AREA_BOUNDARY_POINTS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintConfig {
    pub delta_min_rad: f64,
    /// Delay horizon.
    pub t_d_s: f64,
    pub x_min: f64,
    /// Radius (central angle) of operational areas; `None` keeps point positions.
    pub gamma_rad: Option<f64>,
    pub dt_s: f64,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        ConstraintConfig {
            delta_min_rad: 0.8f64.to_radians(),
            t_d_s: 0.0,
            x_min: 1.0,
            gamma_rad: None,
            dt_s: 60.0,
        }
    }
}

impl ConstraintConfig {
    pub fn threshold(&self) -> f64 {
        self.x_min * self.delta_min_rad
    }

    pub fn max_shift_steps(&self) -> usize {
        (self.t_d_s / self.dt_s + 1e-9).floor().max(0.0) as usize
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.delta_min_rad > 0.0) {
            v.push("delta_min must be positive".to_string());
        }
        if !(self.x_min >= 1.0) {
            v.push("x_min must be at least 1".to_string());
        }
        if !(self.t_d_s >= 0.0) {
            v.push("t_d must be non-negative".to_string());
        }
        if !(self.dt_s > 0.0) {
            v.push("dt must be positive".to_string());
        }
        if self.gamma_rad.is_some_and(|g| !(g >= 0.0)) {
            v.push("gamma must be non-negative".to_string());
        }
        v
    }
}

/// Geometric view of a beam as the constraint builder needs it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintBeam {
    pub id: BeamId,
    pub t_start: f64,
    pub t_end: f64,
    pub trajectory: Trajectory,
    /// Route may deviate; widened into a disc of radius gamma.
    pub uncertain_route: bool,
    /// Explicit region the user is known to stay in.
    pub operational_area: Option<Vec<GeoPoint>>,
}

impl ConstraintBeam {
    pub fn fixed_point(id: BeamId, t_start: f64, t_end: f64, p: GeoPoint) -> Self {
        ConstraintBeam {
            id,
            t_start,
            t_end,
            trajectory: Trajectory::fixed(p),
            uncertain_route: false,
            operational_area: None,
        }
    }

    pub fn active_at(&self, t: f64) -> bool {
        self.t_start <= t && t < self.t_end
    }

    /// Possible positions at time `t`.
    pub fn area_at(&self, t: f64, cfg: &ConstraintConfig) -> Vec<GeoPoint> {
        let c = self.trajectory.position(t);
        match (cfg.gamma_rad, &self.operational_area) {
            (Some(_), Some(poly)) => {
                let mut v = vec![c];
                v.extend(poly.iter().copied());
                v
            }
            (Some(g), None) if self.uncertain_route => sample_disc(&c, g, AREA_BOUNDARY_POINTS),
            _ => vec![c],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RestrictionSets {
    /// Interference pairs, `i < j`.
    pub r_a: BTreeSet<(BeamId, BeamId)>,
    /// Handover pairs, `i < j`.
    pub r_e: BTreeSet<(BeamId, BeamId)>,
}

fn key(i: BeamId, j: BeamId) -> (BeamId, BeamId) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

impl RestrictionSets {
    pub fn has_interference(&self, i: BeamId, j: BeamId) -> bool {
        self.r_a.contains(&key(i, j))
    }

    pub fn has_handover(&self, i: BeamId, j: BeamId) -> bool {
        self.r_e.contains(&key(i, j))
    }

    pub fn insert_interference(&mut self, i: BeamId, j: BeamId) {
        if i != j {
            self.r_a.insert(key(i, j));
        }
    }

    pub fn insert_handover(&mut self, i: BeamId, j: BeamId) {
        if i != j {
            self.r_e.insert(key(i, j));
        }
    }

    /// Number of distinct pairs restricted in either set.
    pub fn union_len(&self) -> usize {
        self.r_a.union(&self.r_e).count()
    }

    pub fn is_superset_of(&self, other: &RestrictionSets) -> bool {
        self.r_a.is_superset(&other.r_a) && self.r_e.is_superset(&other.r_e)
    }

    /// One line per pair: `beam_i beam_j type` with type `A` or `E`.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, j) in &self.r_a {
            writeln!(w, "{i} {j} A")?;
        }
        for (i, j) in &self.r_e {
            writeln!(w, "{i} {j} E")?;
        }
        Ok(())
    }
}

/// Satellite positions on the time grid.
pub struct Ephemeris {
    pub dt: f64,
    pub min_elevation_deg: f64,
    pub positions: Vec<Vec<Vec3>>,
}

impl Ephemeris {
    pub fn new(c: &Constellation, horizon_s: f64, dt: f64) -> Self {
        let n = (horizon_s / dt).ceil() as usize;
        Ephemeris {
            dt,
            min_elevation_deg: c.min_elevation_deg,
            positions: (0..n).map(|k| geometry::propagate(c, k as f64 * dt)).collect(),
        }
    }

    pub fn n_steps(&self) -> usize {
        self.positions.len()
    }

    pub fn serving(&self, step: usize, g: Vec3) -> Option<SatId> {
        serving_satellite(&self.positions[step], g, self.min_elevation_deg)
    }

    pub fn sat_position(&self, step: usize, sat: SatId) -> Vec3 {
        self.positions[step][sat as usize - 1]
    }
}

/// Interference indicator for beam `i` at `t_i` and beam `j` at `t_j`,
/// measured from the satellite serving the lower-id beam at its own time.
/// Positions hidden behind the Earth from that satellite do not count.
pub fn alpha(
    bi: &ConstraintBeam,
    bj: &ConstraintBeam,
    t_i: f64,
    t_j: f64,
    c: &Constellation,
    cfg: &ConstraintConfig,
) -> bool {
    if !(bi.active_at(t_i) && bj.active_at(t_j)) {
        return false;
    }
    let (lead, t_lead) = if bi.id <= bj.id { (bi, t_i) } else { (bj, t_j) };
    let sats = geometry::propagate(c, t_lead);
    let centre = lead.trajectory.position(t_lead).ecef();
    let Some(v) = serving_satellite(&sats, centre, c.min_elevation_deg) else {
        return false;
    };
    let sat = sats[v as usize - 1];
    let ai: Vec<Vec3> = bi.area_at(t_i, cfg).iter().map(|p| p.ecef()).collect();
    let aj: Vec<Vec3> = bj.area_at(t_j, cfg).iter().map(|p| p.ecef()).collect();
    visible_separation(&ai, &aj, sat).is_some_and(|d| d <= cfg.threshold())
}

/// Smallest separation between area samples that are above the satellite's
/// horizon; `None` when either area is entirely hidden.
pub fn visible_separation(area_i: &[Vec3], area_j: &[Vec3], sat: Vec3) -> Option<f64> {
    let vi: Vec<Vec3> = area_i.iter().copied().filter(|&p| visible_from(sat, p)).collect();
    let vj: Vec<Vec3> = area_j.iter().copied().filter(|&p| visible_from(sat, p)).collect();
    if vi.is_empty() || vj.is_empty() {
        None
    } else {
        Some(geometry::set_separation(&vi, &vj, sat))
    }
}

/// Handover indicator: both active and served by the same satellite at
/// their respective times.
pub fn beta(bi: &ConstraintBeam, bj: &ConstraintBeam, t_i: f64, t_j: f64, c: &Constellation) -> bool {
    if !(bi.active_at(t_i) && bj.active_at(t_j)) {
        return false;
    }
    let serve = |b: &ConstraintBeam, t: f64| {
        let sats = geometry::propagate(c, t);
        serving_satellite(&sats, b.trajectory.position(t).ecef(), c.min_elevation_deg)
    };
    let a = serve(bi, t_i);
    a.is_some() && a == serve(bj, t_j)
}

const CHUNK: usize = 16;
const ELEVATION_BUCKET: u8 = 5;

struct Prepared {
    /// First grid step.
    k0: usize,
    units: Vec<Vec3>,
    centers: Vec<Vec3>,
    /// Serving satellite and its position per step.
    vantage: Vec<Option<(SatId, Vec3)>>,
    /// Area samples per step; empty when the area is the centre alone.
    areas: Vec<Vec<Vec3>>,
    /// Largest straight-line distance from the centre to an area sample, per step.
    chords: Vec<f64>,
    /// Serving-satellite elevation per step, floored to a bucket boundary.
    elevation_floor: Vec<u8>,
    /// Upper bound on the distance from centre to any area sample.
    radius: f64,
    chunks: Vec<Cap>,
    cap: Cap,
}

#[derive(Clone, Copy)]
struct Cap {
    k_lo: usize,
    k_hi: usize,
    center: Vec3,
    radius: f64,
}

impl Prepared {
    fn k1(&self) -> usize {
        self.k0 + self.centers.len()
    }
}

fn prepare(b: &ConstraintBeam, cfg: &ConstraintConfig, eph: &Ephemeris) -> Prepared {
    let dt = cfg.dt_s;
    let n_steps = eph.n_steps();
    let steps = geometry::grid_steps(b.t_start, b.t_end, dt);
    let k0 = steps.start.min(n_steps);
    let k1 = steps.end.min(n_steps);
    let mut centers = Vec::with_capacity(k1 - k0);
    let mut units = Vec::with_capacity(k1 - k0);
    let mut vantage = Vec::with_capacity(k1 - k0);
    let mut areas = Vec::new();
    let mut chords = Vec::new();
    let mut radius: f64 = 0.0;
    let mut elevation_floor = Vec::with_capacity(k1 - k0);
    let widened = cfg.gamma_rad.is_some() && (b.uncertain_route || b.operational_area.is_some());
    for k in k0..k1 {
        let t = k as f64 * dt;
        let p = b.trajectory.position(t);
        let e = p.ecef();
        centers.push(e);
        units.push(p.unit());
        let v = eph.serving(k, e).map(|s| (s, eph.sat_position(k, s)));
        elevation_floor.push(v.map_or(0, |(_, sat)| {
            let deg = geometry::elevation_deg(sat, e).clamp(0.0, 89.0) as u8;
            deg - deg % ELEVATION_BUCKET
        }));
        vantage.push(v);
        if widened {
            let pts = b.area_at(t, cfg);
            for q in &pts {
                radius = radius.max(geometry::central_angle(&p, q));
            }
            let ecef: Vec<Vec3> = pts.iter().map(|q| q.ecef()).collect();
            chords.push(ecef.iter().map(|q| norm(sub(*q, e))).fold(0.0, f64::max));
            areas.push(ecef);
        }
    }
    let cap_of = |lo: usize, hi: usize| {
        let mid = units[(lo + hi) / 2 - k0];
        let r = (lo..hi).map(|k| angle_between(mid, units[k - k0])).fold(0.0, f64::max);
        Cap {
            k_lo: lo,
            k_hi: hi,
            center: mid,
            radius: r + radius,
        }
    };
    let mut chunks = Vec::new();
    let mut lo = k0;
    while lo < k1 {
        let hi = (lo + CHUNK).min(k1);
        chunks.push(cap_of(lo, hi));
        lo = hi;
    }
    let cap = if k1 > k0 {
        cap_of(k0, k1)
    } else {
        Cap {
            k_lo: k0,
            k_hi: k0,
            center: [1.0, 0.0, 0.0],
            radius: 0.0,
        }
    };
    Prepared {
        k0,
        units,
        centers,
        vantage,
        areas,
        chords,
        elevation_floor,
        radius,
        chunks,
        cap,
    }
}

/// Some `ki` in `[a.0, a.1)` and `kj` in `[b.0, b.1)` with `|ki - kj| <= shift`.
fn time_compatible(a: (usize, usize), b: (usize, usize), shift: usize) -> bool {
    a.0 < a.1 && b.0 < b.1 && a.0 <= b.1 - 1 + shift && b.0 <= a.1 - 1 + shift
}

struct BitMatrix {
    words: usize,
    bits: Vec<u64>,
}

impl BitMatrix {
    fn new(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        BitMatrix {
            words,
            bits: vec![0; words * n],
        }
    }

    fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    fn set(&mut self, i: usize, j: usize) {
        self.bits[i * self.words + j / 64] |= 1 << (j % 64);
    }
}

/// Collapse alpha and beta over the horizon (and over time offsets up to
/// `t_d`) into restriction sets.
pub fn build_restriction_sets(
    beams: &[ConstraintBeam],
    c: &Constellation,
    horizon_s: f64,
    cfg: &ConstraintConfig,
) -> RestrictionSets {
    let eph = Ephemeris::new(c, horizon_s, cfg.dt_s);
    build_with_ephemeris(beams, &eph, c, cfg)
}

pub fn build_with_ephemeris(
    beams: &[ConstraintBeam],
    eph: &Ephemeris,
    c: &Constellation,
    cfg: &ConstraintConfig,
) -> RestrictionSets {
    let prep: Vec<Prepared> = beams.iter().map(|b| prepare(b, cfg, eph)).collect();
    let mut out = RestrictionSets::default();
    handover_pairs(beams, &prep, cfg.max_shift_steps(), &mut out);
    interference_pairs(beams, &prep, c, cfg, &mut out);
    out
}

fn handover_pairs(beams: &[ConstraintBeam], prep: &[Prepared], shift: usize, out: &mut RestrictionSets) {
    // runs of constant serving satellite: (sat, first step, last step, beam)
    let mut runs: Vec<(SatId, usize, usize, usize)> = Vec::new();
    for (i, p) in prep.iter().enumerate() {
        let mut k = 0;
        while k < p.vantage.len() {
            let s = p.vantage[k].map(|v| v.0);
            let mut e = k;
            while e + 1 < p.vantage.len() && p.vantage[e + 1].map(|v| v.0) == s {
                e += 1;
            }
            if let Some(s) = s {
                runs.push((s, p.k0 + k, p.k0 + e, i));
            }
            k = e + 1;
        }
    }
    runs.sort_unstable();
    let mut matrix = BitMatrix::new(beams.len());
    let mut live: Vec<(usize, usize)> = Vec::new();
    let mut cur_sat = None;
    for &(s, lo, hi, i) in &runs {
        if cur_sat != Some(s) {
            live.clear();
            cur_sat = Some(s);
        }
        live.retain(|&(h, _)| h + shift >= lo);
        for &(_, j) in &live {
            if i != j {
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                matrix.set(a, b);
            }
        }
        live.push((hi, i));
    }
    for i in 0..beams.len() {
        for j in i + 1..beams.len() {
            if matrix.get(i, j) {
                out.insert_handover(beams[i].id, beams[j].id);
            }
        }
    }
}

fn interference_pairs(
    beams: &[ConstraintBeam],
    prep: &[Prepared],
    c: &Constellation,
    cfg: &ConstraintConfig,
    out: &mut RestrictionSets,
) {
    let thr = cfg.threshold();
    let shift = cfg.max_shift_steps();
    let max_radius = prep.iter().map(|p| p.radius).fold(0.0, f64::max);
    // prune radius for each vantage elevation actually seen
    let mut prune_by_elevation = vec![f64::NAN; 90];
    for p in prep {
        for &e in &p.elevation_floor {
            let slot = &mut prune_by_elevation[e as usize];
            if slot.is_nan() {
                let mut seen = c.clone();
                seen.min_elevation_deg = c.min_elevation_deg.max(e as f64);
                *slot = separation_prune_radius(&seen, thr, max_radius);
            }
        }
    }
    let prune = prune_by_elevation
        .iter()
        .copied()
        .filter(|x| !x.is_nan())
        .fold(0.0, f64::max);
    let bounds = Bounds {
        thr,
        prune,
        prune_by_elevation,
        // a sure hit presumes points that close share the lead's view
        sure: if c.min_elevation_deg >= 5.0 {
            separation_sure_radius(c, thr)
        } else {
            -1.0
        },
        shift,
    };
    let n = beams.len();
    for i in 0..n {
        for j in i + 1..n {
            let (pi, pj) = (&prep[i], &prep[j]);
            if !time_compatible((pi.k0, pi.k1()), (pj.k0, pj.k1()), shift) {
                continue;
            }
            if angle_between(pi.cap.center, pj.cap.center) - pi.cap.radius - pj.cap.radius
                > bounds.prune
            {
                continue;
            }
            let hit = if beams[i].id <= beams[j].id {
                pair_interferes(pi, pj, &bounds)
            } else {
                pair_interferes(pj, pi, &bounds)
            };
            if hit {
                out.insert_interference(beams[i].id, beams[j].id);
            }
        }
    }
}

struct Bounds {
    thr: f64,
    prune: f64,
    prune_by_elevation: Vec<f64>,
    sure: f64,
    shift: usize,
}

fn pair_interferes(pl: &Prepared, pf: &Prepared, b: &Bounds) -> bool {
    let rr = pl.radius + pf.radius;
    for cl in &pl.chunks {
        for cf in &pf.chunks {
            if !time_compatible((cl.k_lo, cl.k_hi), (cf.k_lo, cf.k_hi), b.shift) {
                continue;
            }
            if angle_between(cl.center, cf.center) - cl.radius - cf.radius > b.prune {
                continue;
            }
            let cf_centre = geometry::scale(cf.center, EARTH_RADIUS_M);
            let cf_chord = 2.0 * EARTH_RADIUS_M * (cf.radius / 2.0).sin() + ALTITUDE_SLACK_M;
            for kl in cl.k_lo..cl.k_hi {
                let kf_lo = kl.saturating_sub(b.shift).max(cf.k_lo);
                let kf_hi = (kl + b.shift + 1).min(cf.k_hi);
                if kf_lo >= kf_hi {
                    continue;
                }
                let Some((_, sat)) = pl.vantage[kl - pl.k0] else {
                    continue;
                };
                let prune = b.prune_by_elevation[pl.elevation_floor[kl - pl.k0] as usize];
                let reach = prune + cf.radius + pl.radius;
                if reach < PI && dot(pl.units[kl - pl.k0], cf.center) < reach.cos() {
                    continue;
                }
                // the whole follower chunk seen from this vantage
                let cl_pt = pl.centers[kl - pl.k0];
                let d = norm(sub(sat, cf_centre));
                let lb = geometry::angular_separation(sat, cl_pt, cf_centre)
                    - spread(pl, kl, cl_pt, sat)
                    - (cf_chord / d).min(1.0).asin();
                if lb > b.thr {
                    continue;
                }
                for kf in kf_lo..kf_hi {
                    let psi = angle_between(pl.units[kl - pl.k0], pf.units[kf - pf.k0]);
                    if psi - rr > prune {
                        continue;
                    }
                    if psi + rr <= b.sure || areas_within(pl, kl, pf, kf, sat, b.thr) {
                        return true;
                    }
                }
            }
        }
    }
    false
}

/// Margin for terminals above the reference sphere.
const ALTITUDE_SLACK_M: f64 = 20_000.0;

/// Largest angle, seen from `sat`, between the centre and any area sample.
fn spread(p: &Prepared, k: usize, c: Vec3, sat: Vec3) -> f64 {
    if p.areas.is_empty() {
        0.0
    } else {
        (p.chords[k - p.k0] / norm(sub(sat, c))).min(1.0).asin()
    }
}

/// Whether the areas are within `thr` seen from `sat`. Areas always contain
/// their centre, and no sample can sit further from it than the area's chord
/// subtends, which settles most cases without the full minimum.
fn areas_within(pi: &Prepared, ki: usize, pj: &Prepared, kj: usize, sat: Vec3, thr: f64) -> bool {
    let (ci, cj) = (pi.centers[ki - pi.k0], pj.centers[kj - pj.k0]);
    let centre = geometry::angular_separation(sat, ci, cj);
    if centre <= thr && visible_from(sat, cj) && visible_from(sat, ci) {
        return true;
    }
    if centre - spread(pi, ki, ci, sat) - spread(pj, kj, cj, sat) > thr {
        return false;
    }
    separation(pi, ki, pj, kj, sat) <= thr
}

fn separation(pi: &Prepared, ki: usize, pj: &Prepared, kj: usize, sat: Vec3) -> f64 {
    let ai = if pi.areas.is_empty() {
        std::slice::from_ref(&pi.centers[ki - pi.k0])
    } else {
        &pi.areas[ki - pi.k0][..]
    };
    let aj = if pj.areas.is_empty() {
        std::slice::from_ref(&pj.centers[kj - pj.k0])
    } else {
        &pj.areas[kj - pj.k0][..]
    };
    visible_separation(ai, aj, sat).unwrap_or(f64::INFINITY)
}
