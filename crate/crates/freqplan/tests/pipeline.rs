use std::collections::BTreeMap;

use freqplan::constraints::ConstraintConfig;
use freqplan::domain::{Scenario, UserKind};
use freqplan::experiment::{ExperimentConfig, PipelineParams, RunOutput, Workbench, CONFIG_NAMES};
use freqplan::reactive::Action;
use freqplan::scenario::{generate_scenario, realized_beam, ScenarioSpec, UncertaintyLevel, UserCounts};
use freqplan::solver::validate_plan;

fn small(seed: u64, uncertainty: UncertaintyLevel) -> Scenario {
    let mut spec = ScenarioSpec {
        counts: UserCounts {
            fixed: 4,
            aeronautical: 14,
            maritime: 2,
            land_mobile: 2,
        },
        uncertainty,
        seed,
        ..ScenarioSpec::default()
    };
    spec.demands = spec.demands.scaled(8.0);
    generate_scenario(&spec).unwrap()
}

fn run<'a>(s: &'a Scenario, name: &str, seed: u64) -> (Workbench<'a>, RunOutput) {
    let mut wb = Workbench::new(s, &PipelineParams::default()).unwrap();
    let out = wb.run(&ExperimentConfig::named(name).unwrap(), seed).unwrap();
    (wb, out)
}

/// Power, served count and reallocations recounted step by step from the plan.
fn naive_metrics(wb: &Workbench, out: &RunOutput) -> (f64, usize, u64) {
    let s = wb.scenario;
    let dt = wb.params.dt_s;
    let n_steps = (s.horizon_s / dt).ceil() as usize;
    let mut energy = 0.0;
    for b in &wb.beams {
        for k in 0..n_steps {
            if let Some(a) = out.plan.assignment_at(b.id, k as f64 * dt) {
                energy += b.power(a.b - a.reserved_extra_channels).unwrap() * dt;
            }
        }
    }
    let mut ok: BTreeMap<u32, bool> = s.users.iter().map(|u| (u.id, true)).collect();
    for b in &wb.beams {
        let u = s.user(b.user_ids[0]).unwrap();
        let delay = match (b.kind, s.truth.iter().find(|r| r.user_id == u.id)) {
            (UserKind::Fixed, _) | (_, None) => 0.0,
            (_, Some(r)) => r.delay_s,
        };
        let (t0, t1) = ((b.t_start + delay).min(s.horizon_s), (b.t_end + delay).min(s.horizon_s));
        if t0 >= t1 {
            continue;
        }
        let pieces = out.plan.assignments.get(&b.id);
        let covered = pieces.is_some_and(|ps| {
            ps.iter().all(|p| p.assignment().is_some())
                && ps.first().unwrap().t_from <= t0
                && ps.last().unwrap().t_to >= t1
                && ps.windows(2).all(|w| w[0].t_to == w[1].t_from)
        });
        if !covered {
            for id in &b.user_ids {
                ok.insert(*id, false);
            }
        }
    }
    let served = ok.values().filter(|v| **v).count();
    let realloc = out
        .log
        .records
        .iter()
        .filter(|r| {
            matches!(
                r.action,
                Action::Widened | Action::MovedToSlot | Action::MovedToReservedSpectrum | Action::ReSolved
            )
        })
        .count() as u64;
    (energy / s.horizon_s, served, realloc)
}

#[test]
fn metrics_match_naive_recount() {
    let s = small(3, UncertaintyLevel::High);
    for name in ["A", "C", "D2", "E1", "H2"] {
        let (wb, out) = run(&s, name, 3);
        let m = &out.metrics;
        let (p, served, realloc) = naive_metrics(&wb, &out);
        assert!((m.power_w - p).abs() <= 1e-9 * p.max(1e-300), "{name}: {} vs {p}", m.power_w);
        assert_eq!(m.n_served, served, "{name}");
        assert_eq!(m.n_realloc, realloc, "{name}");
        assert_eq!(m.served_fraction, served as f64 / s.users.len() as f64);
        assert_eq!(m.realloc_per_beam, realloc as f64 / wb.beams.len() as f64);
        assert_eq!(m.deactivations, out.log.records.iter().filter(|r| r.action == Action::Deactivated).count() as u64);
    }
}

#[test]
fn every_config_yields_clean_plans() {
    let s = small(5, UncertaintyLevel::High);
    let mut wb = Workbench::new(&s, &PipelineParams::default()).unwrap();
    let realized: Vec<_> = wb.beams.iter().map(|b| realized_beam(b, &s)).collect();
    let check = ConstraintConfig {
        delta_min_rad: wb.params.delta_min_rad,
        dt_s: wb.params.dt_s,
        ..ConstraintConfig::default()
    };
    for name in CONFIG_NAMES {
        let out = wb.run(&ExperimentConfig::named(name).unwrap(), 5).unwrap();
        let known = wb.known_beams();
        let v = validate_plan(&out.baseline.plan, &known, &wb.geo, &wb.ephemeris, &s.grid, &check);
        assert!(v.is_empty(), "{name} baseline: {:?}", v.first());
        assert!(out.baseline.plan.validate_pieces(&known).is_empty(), "{name}");
        let v = validate_plan(&out.plan, &wb.beams, &realized, &wb.ephemeris, &s.grid, &check);
        assert!(v.is_empty(), "{name} final: {:?}", v.first());
        assert!(out.metrics.served_fraction > 0.0 && out.metrics.served_fraction <= 1.0);
    }
}

#[test]
fn certain_scenarios_need_no_reallocation() {
    for seed in 0..3 {
        let s = small(seed, UncertaintyLevel::None);
        assert!(s.events.is_empty());
        for name in ["A", "D4", "G2", "H3"] {
            let (_, out) = run(&s, name, seed);
            assert!(out.baseline.report.deactivated.is_empty(), "{name}, seed {seed}");
            assert_eq!(out.metrics.n_realloc, 0, "{name}, seed {seed}");
            assert_eq!(out.metrics.served_fraction, 1.0, "{name}, seed {seed}");
            assert!(out.log.records.is_empty());
        }
    }
}

#[test]
fn runs_repeat_exactly() {
    let s = small(8, UncertaintyLevel::High);
    let bytes = |out: &RunOutput| {
        let mut log = Vec::new();
        out.log.write_ndjson(&mut log).unwrap();
        (
            serde_json::to_string(&out.baseline).unwrap(),
            serde_json::to_string(&out.plan).unwrap(),
            log,
            serde_json::to_string(&out.metrics).unwrap(),
        )
    };
    for name in ["B", "D3", "F2"] {
        let (_, a) = run(&s, name, 8);
        let (_, b) = run(&s, name, 8);
        assert_eq!(bytes(&a), bytes(&b), "{name}");
    }
}

#[test]
fn revealed_scenario_serves_everyone_without_events() {
    let s = small(2, UncertaintyLevel::High).with_truth_revealed();
    let (_, out) = run(&s, "A", 2);
    assert_eq!(out.metrics.n_realloc, 0);
    assert_eq!(out.metrics.served_fraction, 1.0);
}
