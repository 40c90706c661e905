use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use freqplan::constraints::ConstraintBeam;
use freqplan::domain::{validate_scenario, FrequencyPlan, Scenario};
use freqplan::experiment::{
    aggregate, occupancy, run_job, write_aggregate_csv, write_occupancy_csv, Baseline, BatchSpec, ExperimentConfig,
    PipelineParams, RunRecord, Workbench, CONFIG_NAMES, DEFAULT_LOAD_FACTOR,
};
use freqplan::linkbudget::ModcodTable;
use freqplan::reactive::Metrics;
use freqplan::scenario::{constraint_beam, generate_scenario, realized_beam, ScenarioSpec, UncertaintyLevel, PRESETS};
use freqplan::solver::{validate_plan, Violation};

/// Worker threads for `experiment`; defaults to all cores.
const WORKERS_ENV: &str = "FREQPLAN_WORKERS";

#[derive(Parser)]
#[command(name = "freqplan", version, about = "Frequency planning for multibeam NGSO constellations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic scenario.
    Generate(GenerateArgs),
    /// Build a baseline plan for a scenario.
    Plan(PlanArgs),
    /// Replay operations over a baseline plan.
    Simulate(SimulateArgs),
    /// Run a batch of configurations and seeds and aggregate the results.
    Experiment(ExperimentArgs),
    /// Check a scenario, and optionally a plan against it.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    None,
    Low,
    High,
}

impl From<Level> for UncertaintyLevel {
    fn from(l: Level) -> Self {
        match l {
            Level::None => UncertaintyLevel::None,
            Level::Low => UncertaintyLevel::Low,
            Level::High => UncertaintyLevel::High,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Population preset (paper-245, paper-330, empty); ignored with --spec.
    #[arg(long, default_value = "paper-245")]
    preset: String,
    /// Scenario spec as JSON.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    uncertainty: Option<Level>,
    /// Multiplier on the default demands.
    #[arg(long)]
    load_factor: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// Pipeline parameters as JSON.
    #[arg(long)]
    params: Option<PathBuf>,
    /// MODCOD table CSV (name,gamma,ebn0_db).
    #[arg(long)]
    modcods: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
}

impl PipelineArgs {
    fn load(&self) -> Result<PipelineParams> {
        let mut p = match &self.params {
            Some(path) => read_json(path)?,
            None => PipelineParams::default(),
        };
        if let Some(path) = &self.modcods {
            p.modcods = ModcodTable::from_csv_path(path).with_context(|| format!("reading {}", path.display()))?;
        }
        if let Some(dt) = self.dt {
            p.dt_s = dt;
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Framework configuration (A, B, C, D1-D4, E1-E3, F1-F3, G1-G3, H1-H3).
    #[arg(long, default_value = "A", value_parser = config_name)]
    config: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Also write the restriction sets as an edge list.
    #[arg(long)]
    edges: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    /// Must match the configuration recorded in the plan when given.
    #[arg(long, value_parser = config_name)]
    config: Option<String>,
    /// Let a waiting beam move aside before a beam is deactivated.
    #[arg(long)]
    displace: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Batch spec as JSON; overrides the other batch flags.
    #[arg(long)]
    batch: Option<PathBuf>,
    #[arg(long = "preset", default_values_t = vec!["paper-330".to_string()])]
    presets: Vec<String>,
    /// Comma-separated configurations; all by default.
    #[arg(long = "config", value_delimiter = ',', value_parser = config_name)]
    configs: Vec<String>,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, value_enum, default_value = "high")]
    uncertainty: Level,
    #[arg(long, default_value_t = DEFAULT_LOAD_FACTOR)]
    load_factor: f64,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Plan file from `plan` or `simulate`.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Stage {
    Baseline,
    Operations,
}

/// A plan tied to the scenario and settings it was made for.
#[derive(Debug, Serialize, Deserialize)]
struct PlanFile {
    scenario_hash: String,
    stage: Stage,
    config: ExperimentConfig,
    seed: u64,
    params: PipelineParams,
    plan: FrequencyPlan,
}

#[derive(Serialize)]
struct PlanReport<'a> {
    scenario_hash: &'a str,
    n_beams: usize,
    n_known_beams: usize,
    n_users: usize,
    served_fraction: f64,
    #[serde(flatten)]
    baseline: &'a Baseline,
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    scenario_hash: &'a str,
    config: &'a str,
    seed: u64,
    #[serde(flatten)]
    metrics: &'a Metrics,
}

#[derive(Serialize)]
struct ValidationReport {
    scenario_errors: Vec<String>,
    plan_errors: Vec<String>,
    violations: Vec<Violation>,
}

fn config_name(s: &str) -> Result<String, String> {
    ExperimentConfig::named(s).map(|c| c.name).map_err(|e| e.to_string())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, v: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    let s: Scenario = read_json(path)?;
    let errs = validate_scenario(&s);
    if !errs.is_empty() {
        bail!("invalid scenario {}: {}", path.display(), errs.join("; "));
    }
    Ok(s)
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => read_json(p)?,
        None if a.preset == "empty" => ScenarioSpec::empty(),
        None => ScenarioSpec::preset(&a.preset)
            .with_context(|| format!("unknown preset {:?} (known: {}, empty)", a.preset, PRESETS.join(", ")))?,
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(u) = a.uncertainty {
        spec.uncertainty = u.into();
    }
    if let Some(k) = a.load_factor {
        spec.demands = spec.demands.scaled(k);
    }
    if let Some(dt) = a.dt {
        spec.dt_s = dt;
    }
    let s = generate_scenario(&spec)?;
    let mut w = create(&a.out_dir, "scenario.json")?;
    w.write_all(s.to_json().as_bytes())?;
    writeln!(w)?;
    w.flush()?;
    eprintln!("{} users, {} events, hash {}", s.users.len(), s.events.len(), s.content_hash());
    Ok(())
}

fn plan(a: &PlanArgs) -> Result<()> {
    let cfg = ExperimentConfig::named(&a.config)?;
    let params = a.pipeline.load()?;
    let s = load_scenario(&a.scenario)?;
    let hash = s.content_hash();
    let mut wb = Workbench::new(&s, &params)?;
    let baseline = wb.plan(&cfg, a.seed)?;
    let n_known = wb.known.len();
    let served = if n_known == 0 {
        0.0
    } else {
        baseline.report.served.len() as f64 / n_known as f64
    };
    if a.edges {
        let cc = baseline.constraints.clone();
        let mut w = create(&a.out_dir, "constraints.txt")?;
        wb.restriction_sets(&cc).write_edge_list(&mut w)?;
        w.flush()?;
    }
    write_json(
        &a.out_dir,
        "report.json",
        &PlanReport {
            scenario_hash: &hash,
            n_beams: wb.beams.len(),
            n_known_beams: n_known,
            n_users: s.users.len(),
            served_fraction: served,
            baseline: &baseline,
        },
    )?;
    write_json(
        &a.out_dir,
        "plan.json",
        &PlanFile {
            scenario_hash: hash,
            stage: Stage::Baseline,
            config: cfg,
            seed: a.seed,
            params: wb.params.clone(),
            plan: baseline.plan,
        },
    )?;
    eprintln!(
        "{}: {} of {} known beams placed, objective {:.6e} W",
        a.config,
        baseline.report.served.len(),
        n_known,
        baseline.report.objective_watts
    );
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let s = load_scenario(&a.scenario)?;
    let pf: PlanFile = read_json(&a.plan)?;
    let hash = s.content_hash();
    if pf.scenario_hash != hash {
        bail!("plan was made for scenario {}, not {}", pf.scenario_hash, hash);
    }
    if pf.stage != Stage::Baseline {
        bail!("simulate needs a baseline plan");
    }
    if let Some(c) = &a.config {
        if *c != pf.config.name {
            bail!("plan was made with configuration {}, not {}", pf.config.name, c);
        }
    }
    let mut params = pf.params.clone();
    params.displace |= a.displace;
    let wb = Workbench::new(&s, &params)?;
    let (final_plan, log, metrics) = wb.simulate(&pf.plan, &pf.config, pf.seed);
    let mut w = create(&a.out_dir, "ops_log.ndjson")?;
    log.write_ndjson(&mut w)?;
    w.flush()?;
    write_json(&a.out_dir, "ops_summary.json", &log.summary())?;
    write_json(
        &a.out_dir,
        "metrics.json",
        &SimulateReport {
            scenario_hash: &hash,
            config: &pf.config.name,
            seed: pf.seed,
            metrics: &metrics,
        },
    )?;
    let rows = occupancy(&final_plan, &s.grid, s.horizon_s, params.dt_s);
    write_occupancy_csv(&rows, create(&a.out_dir, "occupancy.csv")?)?;
    write_json(
        &a.out_dir,
        "final_plan.json",
        &PlanFile {
            scenario_hash: hash,
            stage: Stage::Operations,
            config: pf.config,
            seed: pf.seed,
            params,
            plan: final_plan,
        },
    )?;
    eprintln!(
        "served {:.4}, power {:.6e} W, {} reallocations, {} deactivations",
        metrics.served_fraction, metrics.power_w, metrics.n_realloc, metrics.deactivations
    );
    Ok(())
}

fn workers() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n: usize = v.parse().with_context(|| format!("{WORKERS_ENV}={v:?} is not a count"))?;
            Ok(n.max(1))
        }
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn experiment(a: &ExperimentArgs) -> Result<()> {
    let batch = match &a.batch {
        Some(p) => read_json(p)?,
        None => BatchSpec {
            presets: a.presets.clone(),
            uncertainty: a.uncertainty.into(),
            seeds: (a.seed..a.seed + a.seeds).collect(),
            configs: if a.configs.is_empty() {
                CONFIG_NAMES.iter().map(|s| s.to_string()).collect()
            } else {
                a.configs.clone()
            },
            load_factor: a.load_factor,
        },
    };
    let configs = batch.validate()?;
    let params = a.pipeline.load()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers()?).build()?;
    let results: Vec<Result<Vec<RunRecord>>> = pool.install(|| {
        batch
            .jobs()
            .par_iter()
            .map(|(preset, seed)| {
                let spec = batch.scenario_spec(preset, *seed)?;
                let recs = run_job(&spec, preset, &configs, &params)?;
                eprintln!("{preset} seed {seed}: {} runs", recs.len());
                Ok(recs)
            })
            .collect()
    });
    let mut records = Vec::new();
    for r in results {
        records.extend(r?);
    }
    write_json(&a.out_dir, "batch.json", &batch)?;
    write_json(&a.out_dir, "runs.json", &records)?;
    let mut w = csv::Writer::from_writer(create(&a.out_dir, "runs.csv")?);
    for r in &records {
        w.serialize(r)?;
    }
    w.flush()?;
    let rows = aggregate(&records);
    write_aggregate_csv(&rows, create(&a.out_dir, "summary.csv")?)?;
    for r in &rows {
        eprintln!(
            "{:>3}  served {:.3} ({:.3})  P/P* {:.3} ({:.3})  realloc/beam {:.3} ({:.3})",
            r.config,
            r.served_fraction.mean,
            r.served_fraction.sd,
            r.power_ratio.mean,
            r.power_ratio.sd,
            r.realloc_per_beam.mean,
            r.realloc_per_beam.sd
        );
    }
    Ok(())
}

/// Exit code 2 when the plan or scenario has problems.
fn validate(a: &ValidateArgs) -> Result<bool> {
    let s: Scenario = read_json(&a.scenario)?;
    let mut report = ValidationReport {
        scenario_errors: validate_scenario(&s),
        plan_errors: Vec::new(),
        violations: Vec::new(),
    };
    if let Some(p) = &a.plan {
        let pf: PlanFile = read_json(p)?;
        if pf.scenario_hash != s.content_hash() {
            report.plan_errors.push("plan belongs to a different scenario".to_string());
        } else if report.scenario_errors.is_empty() {
            let wb = Workbench::new(&s, &pf.params)?;
            let (beams, geo): (Vec<_>, Vec<ConstraintBeam>) = match pf.stage {
                Stage::Baseline => {
                    let beams = wb.known_beams();
                    let geo = beams.iter().map(|b| constraint_beam(b, s.user(b.user_ids[0]))).collect();
                    (beams, geo)
                }
                Stage::Operations => {
                    let geo = wb.beams.iter().map(|b| realized_beam(b, &s)).collect();
                    (wb.beams.clone(), geo)
                }
            };
            if pf.stage == Stage::Baseline {
                report.plan_errors = pf.plan.validate_pieces(&beams);
            }
            let cc = wb.constraint_config(&pf.config);
            report.violations = validate_plan(&pf.plan, &beams, &geo, &wb.ephemeris, &s.grid, &cc);
        }
    }
    write_json(&a.out_dir, "validation.json", &report)?;
    let ok = report.scenario_errors.is_empty() && report.plan_errors.is_empty() && report.violations.is_empty();
    eprintln!(
        "{} scenario errors, {} plan errors, {} violations",
        report.scenario_errors.len(),
        report.plan_errors.len(),
        report.violations.len()
    );
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Generate(a) => generate(a).map(|_| true),
        Cmd::Plan(a) => plan(a).map(|_| true),
        Cmd::Simulate(a) => simulate(a).map(|_| true),
        Cmd::Experiment(a) => experiment(a).map(|_| true),
        Cmd::Validate(a) => validate(a),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
