//! Named framework configurations, the plan and simulate pipeline, and batch
//! aggregation.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{build_with_ephemeris, ConstraintBeam, ConstraintConfig, Ephemeris, RestrictionSets};
use crate::domain::{channel_mask, Beam, FrequencyPlan, GridConfig, Percentiles, Scenario};
use crate::geometry::grid_steps;
use crate::linkbudget::{LinkParams, ModcodTable};
use crate::reactive::{compute_metrics, fifo, simulate_operations, Metrics, OperationsLog, OpsConfig};
use crate::scenario::{
    build_beams, constraint_beam, generate_scenario, BeamBuildParams, ScenarioError, ScenarioSpec, UncertaintyLevel,
};
use crate::solver::{solve_baseline, SolveConfig, SolveError, SolveReport};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown configuration {0:?}")]
    UnknownConfig(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("invalid parameters: {0}")]
    Invalid(String),
}

/// How far ahead in time a beam's constraints are widened.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum DelayHorizon {
    None,
    /// A percentile of the delay prior.
    Percentile(u32),
    /// The whole horizon.
    Horizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub t_d: DelayHorizon,
    /// Percentile of the route-deviation prior used as operational-area radius.
    pub gamma_pct: Option<u32>,
    pub x_min: f64,
    pub x_ch: Option<u32>,
    pub x_slots: Option<u32>,
    pub x_spec: Option<f64>,
}

pub const CONFIG_NAMES: [&str; 19] = [
    "A", "B", "C", "D1", "D2", "D3", "D4", "E1", "E2", "E3", "F1", "F2", "F3", "G1", "G2", "G3", "H1", "H2", "H3",
];

const PCTS: [u32; 3] = [50, 75, 95];

impl ExperimentConfig {
    fn plain(name: &str) -> Self {
        ExperimentConfig {
            name: name.to_string(),
            t_d: DelayHorizon::None,
            gamma_pct: None,
            x_min: 1.0,
            x_ch: None,
            x_slots: None,
            x_spec: None,
        }
    }

    pub fn named(name: &str) -> Result<Self, ExperimentError> {
        let unknown = || ExperimentError::UnknownConfig(name.to_string());
        let mut c = Self::plain(name);
        let (Some(family), Some(idx)) = (name.get(..1), name.get(1..)) else {
            return Err(unknown());
        };
        let k: usize = match idx {
            "" => 0,
            _ => idx.parse().map_err(|_| unknown())?,
        };
        let pct = |n: usize| PCTS.get(n.wrapping_sub(1)).copied().ok_or_else(unknown);
        match (family, k) {
            ("A", 0) => {}
            ("B", 0) => c.x_ch = Some(1),
            ("C", 0) => c.x_slots = Some(1),
            ("D", 1..=4) => c.x_spec = Some(0.05 * k as f64),
            ("E", _) => {
                c.t_d = DelayHorizon::Percentile(pct(k)?);
                c.x_min = [1.15, 1.30, 1.45][k - 1];
            }
            ("F", _) => {
                c.t_d = DelayHorizon::Percentile(pct(k)?);
                c.gamma_pct = Some(pct(k)?);
            }
            ("G", _) => {
                c.t_d = DelayHorizon::Horizon;
                c.gamma_pct = Some(pct(k)?);
            }
            ("H", _) => {
                c.t_d = DelayHorizon::Percentile(pct(k)?);
                c.x_min = [1.15, 1.30, 1.45][k - 1];
                c.x_spec = Some(0.05 * k as f64);
            }
            _ => return Err(unknown()),
        }
        Ok(c)
    }

    pub fn all() -> Vec<ExperimentConfig> {
        CONFIG_NAMES.iter().map(|n| Self::named(n).expect("built-in name")).collect()
    }

    /// Constraint parameters for a scenario. Missing priors (no uncertainty)
    /// read as zero delay and zero deviation.
    pub fn constraint_config(&self, priors: Option<&Percentiles>, horizon_s: f64, p: &PipelineParams) -> ConstraintConfig {
        let q = |sel: fn(&Percentiles) -> f64| priors.map_or(0.0, sel);
        let t_d_s = match self.t_d {
            DelayHorizon::None => 0.0,
            DelayHorizon::Horizon => horizon_s,
            DelayHorizon::Percentile(50) => q(|p| p.delay_s.p50),
            DelayHorizon::Percentile(75) => q(|p| p.delay_s.p75),
            DelayHorizon::Percentile(_) => q(|p| p.delay_s.p95),
        };
        let gamma_rad = self.gamma_pct.map(|k| match k {
            50 => q(|p| p.deviation_rad.p50),
            75 => q(|p| p.deviation_rad.p75),
            _ => q(|p| p.deviation_rad.p95),
        });
        ConstraintConfig {
            delta_min_rad: p.delta_min_rad,
            t_d_s,
            x_min: self.x_min,
            gamma_rad,
            dt_s: p.dt_s,
        }
    }

    pub fn solve_config(&self, seed: u64, horizon_s: f64, p: &PipelineParams) -> SolveConfig {
        SolveConfig {
            x_ch: self.x_ch,
            x_slots: self.x_slots,
            x_spec: self.x_spec,
            seed,
            node_budget: p.node_budget,
            horizon_s,
            dt_s: p.dt_s,
        }
    }
}

/// Physical and numerical parameters shared by every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    /// Slant range is replaced by the constellation's worst case per scenario.
    pub link: LinkParams,
    pub modcods: ModcodTable,
    pub dt_s: f64,
    pub delta_min_rad: f64,
    pub fixed_beam_radius_km: f64,
    /// Per-beam power cap; none means uncapped.
    pub max_beam_power_w: Option<f64>,
    pub p_sat_w: f64,
    pub node_budget: u64,
    /// See [`OpsConfig::displace`].
    #[serde(default)]
    pub displace: bool,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            link: LinkParams::default(),
            modcods: ModcodTable::dvb_s2(),
            dt_s: 60.0,
            delta_min_rad: 0.8f64.to_radians(),
            fixed_beam_radius_km: 150.0,
            max_beam_power_w: None,
            p_sat_w: 1.0,
            node_budget: 200_000,
            displace: false,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Invalid(m.to_string()));
        if !(self.dt_s > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.delta_min_rad > 0.0) {
            return bad("delta_min must be positive");
        }
        if !(self.p_sat_w > 0.0) {
            return bad("satellite power must be positive");
        }
        if self.max_beam_power_w.is_some_and(|p| !(p > 0.0)) {
            return bad("beam power cap must be positive");
        }
        if !(self.fixed_beam_radius_km >= 0.0) {
            return bad("fixed beam radius must be non-negative");
        }
        Ok(())
    }
}

/// Everything a scenario needs before any configuration is applied: beams for
/// all users, the known subset, the ephemeris and cached restriction sets.
pub struct Workbench<'a> {
    pub scenario: &'a Scenario,
    pub params: PipelineParams,
    pub beams: Vec<Beam>,
    /// Indices into `beams` of beams whose users are known before operations.
    pub known: Vec<usize>,
    pub geo: Vec<ConstraintBeam>,
    pub ephemeris: Ephemeris,
    sets: BTreeMap<String, RestrictionSets>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub config: String,
    pub constraints: ConstraintConfig,
    pub n_constraints: usize,
    pub plan: FrequencyPlan,
    pub report: SolveReport,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub baseline: Baseline,
    pub plan: FrequencyPlan,
    pub log: OperationsLog,
    pub metrics: Metrics,
}

impl<'a> Workbench<'a> {
    pub fn new(scenario: &'a Scenario, params: &PipelineParams) -> Result<Self, ExperimentError> {
        params.validate()?;
        let mut params = params.clone();
        params.link.slant_range_m = scenario.constellation.max_slant_range();
        let bp = BeamBuildParams {
            link: &params.link,
            modcods: &params.modcods,
            dt_s: params.dt_s,
            fixed_beam_radius_km: params.fixed_beam_radius_km,
            max_beam_power_w: params.max_beam_power_w.unwrap_or(f64::INFINITY),
        };
        let beams = build_beams(scenario, &bp)?;
        let known: Vec<usize> = (0..beams.len())
            .filter(|&i| beams[i].user_ids.iter().all(|&u| scenario.user(u).is_some_and(|u| u.known_a_priori)))
            .collect();
        let geo = known
            .iter()
            .map(|&i| constraint_beam(&beams[i], scenario.user(beams[i].user_ids[0])))
            .collect();
        let ephemeris = Ephemeris::new(&scenario.constellation, scenario.horizon_s, params.dt_s);
        Ok(Workbench {
            scenario,
            params,
            beams,
            known,
            geo,
            ephemeris,
            sets: BTreeMap::new(),
        })
    }

    pub fn known_beams(&self) -> Vec<Beam> {
        self.known.iter().map(|&i| self.beams[i].clone()).collect()
    }

    pub fn constraint_config(&self, cfg: &ExperimentConfig) -> ConstraintConfig {
        cfg.constraint_config(self.scenario.priors.as_ref(), self.scenario.horizon_s, &self.params)
    }

    /// Restriction sets for a constraint configuration, built once.
    pub fn restriction_sets(&mut self, cc: &ConstraintConfig) -> &RestrictionSets {
        let key = serde_json::to_string(cc).expect("config serializes");
        let (geo, eph, c) = (&self.geo, &self.ephemeris, &self.scenario.constellation);
        self.sets.entry(key).or_insert_with(|| build_with_ephemeris(geo, eph, c, cc))
    }

    pub fn plan(&mut self, cfg: &ExperimentConfig, seed: u64) -> Result<Baseline, ExperimentError> {
        let cc = self.constraint_config(cfg);
        let msgs = cc.validate();
        if !msgs.is_empty() {
            return Err(ExperimentError::Invalid(msgs.join("; ")));
        }
        let sc = cfg.solve_config(seed, self.scenario.horizon_s, &self.params);
        let known = self.known_beams();
        let grid = self.scenario.grid.clone();
        let sets = self.restriction_sets(&cc);
        let n_constraints = sets.union_len();
        let (plan, report) = solve_baseline(&known, sets, &grid, &sc)?;
        Ok(Baseline {
            config: cfg.name.clone(),
            constraints: cc,
            n_constraints,
            plan,
            report,
        })
    }

    pub fn ops_config(&self, cfg: &ExperimentConfig, seed: u64) -> OpsConfig {
        OpsConfig {
            solve: cfg.solve_config(seed, self.scenario.horizon_s, &self.params),
            delta_min_rad: self.params.delta_min_rad,
            dt_s: self.params.dt_s,
            priority: fifo,
            displace: self.params.displace,
        }
    }

    pub fn simulate(&self, baseline: &FrequencyPlan, cfg: &ExperimentConfig, seed: u64) -> (FrequencyPlan, OperationsLog, Metrics) {
        let oc = self.ops_config(cfg, seed);
        let (plan, log) = simulate_operations(baseline, self.scenario, &self.beams, &oc);
        let m = compute_metrics(&plan, self.scenario, &self.beams, &log, self.params.dt_s, self.params.p_sat_w);
        (plan, log, m)
    }

    pub fn run(&mut self, cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput, ExperimentError> {
        let baseline = self.plan(cfg, seed)?;
        let (plan, log, metrics) = self.simulate(&baseline.plan, cfg, seed);
        Ok(RunOutput {
            baseline,
            plan,
            log,
            metrics,
        })
    }
}

/// Power of the ideal case: everything revealed before operations, planned
/// and replayed under configuration A.
pub fn ideal_power(scenario: &Scenario, params: &PipelineParams, seed: u64) -> Result<f64, ExperimentError> {
    let revealed = scenario.with_truth_revealed();
    let mut wb = Workbench::new(&revealed, params)?;
    let out = wb.run(&ExperimentConfig::named("A")?, seed)?;
    Ok(out.metrics.power_w)
}

/// Demand multiplier applied to the scenario defaults in experiment batches.
/// At the default demands the spectrum is rarely contended and all
/// configurations collapse onto the same plan.
pub const DEFAULT_LOAD_FACTOR: f64 = 8.0;

fn default_load_factor() -> f64 {
    DEFAULT_LOAD_FACTOR
}

/// Configurations times seeds times scenario presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub presets: Vec<String>,
    pub uncertainty: UncertaintyLevel,
    pub seeds: Vec<u64>,
    pub configs: Vec<String>,
    #[serde(default = "default_load_factor")]
    pub load_factor: f64,
}

impl BatchSpec {
    pub fn validate(&self) -> Result<Vec<ExperimentConfig>, ExperimentError> {
        if self.presets.is_empty() || self.seeds.is_empty() || self.configs.is_empty() {
            return Err(ExperimentError::Invalid("a batch needs at least one run".into()));
        }
        if !(self.load_factor > 0.0) {
            return Err(ExperimentError::Invalid("load factor must be positive".into()));
        }
        for p in &self.presets {
            if ScenarioSpec::preset(p).is_none() {
                return Err(ExperimentError::Invalid(format!("unknown preset {p:?}")));
            }
        }
        self.configs.iter().map(|c| ExperimentConfig::named(c)).collect()
    }

    /// (preset, seed) pairs in a fixed order.
    pub fn jobs(&self) -> Vec<(String, u64)> {
        let mut v = Vec::new();
        for p in &self.presets {
            for &s in &self.seeds {
                v.push((p.clone(), s));
            }
        }
        v
    }

    pub fn scenario_spec(&self, preset: &str, seed: u64) -> Result<ScenarioSpec, ExperimentError> {
        let mut spec =
            ScenarioSpec::preset(preset).ok_or_else(|| ExperimentError::Invalid(format!("unknown preset {preset:?}")))?;
        spec.seed = seed;
        spec.uncertainty = self.uncertainty;
        spec.demands = spec.demands.scaled(self.load_factor);
        Ok(spec)
    }
}

/// Every configuration on one generated scenario, sharing the ideal power and
/// the constraint cache.
pub fn run_job(
    spec: &ScenarioSpec,
    label: &str,
    configs: &[ExperimentConfig],
    params: &PipelineParams,
) -> Result<Vec<RunRecord>, ExperimentError> {
    let scenario = generate_scenario(spec)?;
    let ideal = ideal_power(&scenario, params, spec.seed)?;
    let mut wb = Workbench::new(&scenario, params)?;
    configs
        .iter()
        .map(|c| wb.run(c, spec.seed).map(|out| RunRecord::new(label, spec.seed, &out, ideal)))
        .collect()
}

/// One row of per-run results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: String,
    pub scenario: String,
    pub seed: u64,
    pub served_fraction: f64,
    pub power_w: f64,
    pub ideal_power_w: f64,
    pub power_ratio: f64,
    pub realloc_per_beam: f64,
    pub n_realloc: u64,
    pub n_beams: usize,
    pub n_constraints: usize,
}

impl RunRecord {
    pub fn new(scenario: &str, seed: u64, out: &RunOutput, ideal_power_w: f64) -> Self {
        let m = &out.metrics;
        RunRecord {
            config: out.baseline.config.clone(),
            scenario: scenario.to_string(),
            seed,
            served_fraction: m.served_fraction,
            power_w: m.power_w,
            ideal_power_w,
            power_ratio: if ideal_power_w > 0.0 { m.power_w / ideal_power_w } else { 0.0 },
            realloc_per_beam: m.realloc_per_beam,
            n_realloc: m.n_realloc,
            n_beams: m.n_beams,
            n_constraints: out.baseline.n_constraints,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Sample standard deviation; zero for a single value.
    pub fn of(xs: &[f64]) -> MeanSd {
        if xs.is_empty() {
            return MeanSd { mean: 0.0, sd: 0.0 };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = if xs.len() < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        MeanSd { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub config: String,
    pub runs: usize,
    pub served_fraction: MeanSd,
    pub power_ratio: MeanSd,
    pub realloc_per_beam: MeanSd,
}

fn config_rank(name: &str) -> (usize, String) {
    let k = CONFIG_NAMES.iter().position(|n| *n == name).unwrap_or(CONFIG_NAMES.len());
    (k, name.to_string())
}

/// Mean and SD per configuration, in canonical configuration order. The
/// result does not depend on the order of `records`.
pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(usize, String), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(config_rank(&r.config)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((_, name), mut rs)| {
            rs.sort_by(|a, b| (&a.scenario, a.seed).cmp(&(&b.scenario, b.seed)));
            let col = |f: fn(&RunRecord) -> f64| MeanSd::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            AggregateRow {
                config: name,
                runs: rs.len(),
                served_fraction: col(|r| r.served_fraction),
                power_ratio: col(|r| r.power_ratio),
                realloc_per_beam: col(|r| r.realloc_per_beam),
            }
        })
        .collect()
}

pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "config",
        "runs",
        "served_mean",
        "served_sd",
        "power_ratio_mean",
        "power_ratio_sd",
        "realloc_per_beam_mean",
        "realloc_per_beam_sd",
    ])?;
    for r in rows {
        out.write_record([
            r.config.clone(),
            r.runs.to_string(),
            format!("{:.6}", r.served_fraction.mean),
            format!("{:.6}", r.served_fraction.sd),
            format!("{:.6}", r.power_ratio.mean),
            format!("{:.6}", r.power_ratio.sd),
            format!("{:.6}", r.realloc_per_beam.mean),
            format!("{:.6}", r.realloc_per_beam.sd),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Channel use per frequency group and grid step, as seen from the spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyRow {
    pub t_s: f64,
    pub g: u32,
    pub p: u32,
    pub beams: u32,
    /// Distinct channels carrying at least one beam.
    pub channels_in_use: u32,
    /// Channels summed over beams; exceeds `channels_in_use` under reuse.
    pub channel_uses: u32,
}

pub fn occupancy(plan: &FrequencyPlan, grid: &GridConfig, horizon_s: f64, dt_s: f64) -> Vec<OccupancyRow> {
    let steps = grid_steps(0.0, horizon_s, dt_s);
    let n_groups = grid.n_groups() as usize;
    let mut acc = vec![(0u32, 0u128, 0u32); steps.len() * n_groups];
    for pieces in plan.assignments.values() {
        for pc in pieces {
            let Some(a) = pc.assignment() else { continue };
            let m = channel_mask(a.f, a.used_channels());
            let row = ((a.g - 1) * grid.n_polarizations + (a.p - 1)) as usize;
            for k in grid_steps(pc.t_from, pc.t_to, dt_s) {
                if k < steps.end {
                    let e = &mut acc[k * n_groups + row];
                    e.0 += 1;
                    e.1 |= m;
                    e.2 += a.used_channels();
                }
            }
        }
    }
    let mut out = Vec::with_capacity(acc.len());
    for k in steps {
        for g in 1..=grid.n_reuses {
            for p in 1..=grid.n_polarizations {
                let e = acc[k * n_groups + ((g - 1) * grid.n_polarizations + (p - 1)) as usize];
                out.push(OccupancyRow {
                    t_s: k as f64 * dt_s,
                    g,
                    p,
                    beams: e.0,
                    channels_in_use: e.1.count_ones(),
                    channel_uses: e.2,
                });
            }
        }
    }
    out
}

pub fn write_occupancy_csv<W: Write>(rows: &[OccupancyRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_of_configurations() {
        let all = ExperimentConfig::all();
        assert_eq!(all.len(), 19);
        let d4 = ExperimentConfig::named("D4").unwrap();
        assert!((d4.x_spec.unwrap() - 0.20).abs() < 1e-12);
        let h2 = ExperimentConfig::named("H2").unwrap();
        assert_eq!(h2.t_d, DelayHorizon::Percentile(75));
        assert_eq!(h2.x_min, 1.30);
        assert!((h2.x_spec.unwrap() - 0.10).abs() < 1e-12);
        for g in ["G1", "G2", "G3"] {
            assert_eq!(ExperimentConfig::named(g).unwrap().t_d, DelayHorizon::Horizon);
        }
        assert_eq!(ExperimentConfig::named("F3").unwrap().gamma_pct, Some(95));
        assert_eq!(ExperimentConfig::named("E1").unwrap().gamma_pct, None);
        assert_eq!(ExperimentConfig::named("B").unwrap().x_ch, Some(1));
        assert_eq!(ExperimentConfig::named("C").unwrap().x_slots, Some(1));
    }

    #[test]
    fn unknown_names_rejected() {
        for n in ["", "Z", "D5", "D0", "E4", "A1", "H", "d1"] {
            assert!(ExperimentConfig::named(n).is_err(), "{n}");
        }
    }

    #[test]
    fn missing_priors_read_as_zero() {
        let p = PipelineParams::default();
        let cc = ExperimentConfig::named("F2").unwrap().constraint_config(None, 86400.0, &p);
        assert_eq!(cc.t_d_s, 0.0);
        assert_eq!(cc.gamma_rad, Some(0.0));
        let g = ExperimentConfig::named("G1").unwrap().constraint_config(None, 86400.0, &p);
        assert_eq!(g.t_d_s, 86400.0);
    }

    fn rec(config: &str, seed: u64, served: f64, ratio: f64) -> RunRecord {
        RunRecord {
            config: config.into(),
            scenario: "s".into(),
            seed,
            served_fraction: served,
            power_w: ratio,
            ideal_power_w: 1.0,
            power_ratio: ratio,
            realloc_per_beam: 0.1 * seed as f64,
            n_realloc: seed,
            n_beams: 10,
            n_constraints: 0,
        }
    }

    #[test]
    fn aggregation_matches_hand_computation() {
        let rs = vec![rec("D1", 1, 1.0, 1.2), rec("A", 2, 0.9, 1.0), rec("D1", 3, 0.8, 1.4), rec("A", 1, 1.0, 1.1)];
        let rows = aggregate(&rs);
        assert_eq!(rows.iter().map(|r| r.config.as_str()).collect::<Vec<_>>(), ["A", "D1"]);
        let d1 = &rows[1];
        assert!((d1.served_fraction.mean - 0.9).abs() < 1e-12);
        assert!((d1.served_fraction.sd - (0.02f64).sqrt()).abs() < 1e-12);
        assert!((d1.power_ratio.mean - 1.3).abs() < 1e-12);
        let mut rev = rs.clone();
        rev.reverse();
        assert_eq!(aggregate(&rev), rows);
        let mut buf = Vec::new();
        write_aggregate_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("config,runs,served_mean"));
    }

    #[test]
    fn occupancy_counts_reuse() {
        use crate::domain::{FrequencyAssignment, PieceState, PlanPiece};
        let grid = GridConfig {
            n_channels: 10,
            n_reuses: 2,
            n_polarizations: 1,
            channel_bandwidth_hz: 1.0,
        };
        let mut plan = FrequencyPlan::default();
        let piece = |f, b, g, t0, t1| PlanPiece {
            t_from: t0,
            t_to: t1,
            state: PieceState::Assigned(FrequencyAssignment::new(0, f, b, g, 1)),
        };
        plan.assignments.insert(0, vec![piece(1, 3, 1, 0.0, 120.0)]);
        plan.assignments.insert(1, vec![piece(2, 3, 1, 60.0, 180.0)]);
        plan.assignments.insert(2, vec![piece(5, 1, 2, 0.0, 60.0)]);
        let rows = occupancy(&plan, &grid, 180.0, 60.0);
        assert_eq!(rows.len(), 6);
        let at = |t: f64, g: u32| rows.iter().find(|r| r.t_s == t && r.g == g).unwrap();
        assert_eq!((at(0.0, 1).beams, at(0.0, 1).channels_in_use), (1, 3));
        assert_eq!((at(60.0, 1).beams, at(60.0, 1).channels_in_use, at(60.0, 1).channel_uses), (2, 4, 6));
        assert_eq!(at(0.0, 2).channels_in_use, 1);
        assert_eq!(at(60.0, 2).beams, 0);
        let mut buf = Vec::new();
        write_occupancy_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t_s,g,p,beams,channels_in_use,channel_uses\n"));
    }

    #[test]
    fn single_value_has_zero_sd() {
        assert_eq!(MeanSd::of(&[2.5]), MeanSd { mean: 2.5, sd: 0.0 });
    }
}
