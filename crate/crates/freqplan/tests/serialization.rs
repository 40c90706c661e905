use freqplan::constraints::RestrictionSets;
use freqplan::domain::*;
use freqplan::experiment::{ExperimentConfig, CONFIG_NAMES};
use freqplan::linkbudget::ModcodTable;
use freqplan::reactive::{Action, EventKind, OperationsLog, OpsRecord};
use freqplan::scenario::{generate_scenario, ScenarioSpec, UncertaintyLevel, UserCounts};
use proptest::prelude::*;

fn geo() -> impl Strategy<Value = GeoPoint> {
    (-89.0..89.0f64, -180.0..180.0f64, 0.0..12_000.0f64).prop_map(|(a, b, h)| GeoPoint::new(a, b, h))
}

fn trajectory() -> impl Strategy<Value = Trajectory> {
    prop::collection::vec((1.0..600.0f64, geo()), 1..6).prop_map(|steps| {
        let mut t = 0.0;
        let samples = steps
            .into_iter()
            .map(|(d, position)| {
                t += d;
                TrajectorySample { t, position }
            })
            .collect();
        Trajectory { samples }
    })
}

fn kind() -> impl Strategy<Value = UserKind> {
    prop_oneof![
        Just(UserKind::Fixed),
        Just(UserKind::Aeronautical),
        Just(UserKind::Maritime),
        Just(UserKind::LandMobile),
    ]
}

fn user() -> impl Strategy<Value = User> {
    (
        any::<u32>(),
        kind(),
        1e5..1e9f64,
        0.0..40_000.0f64,
        1.0..40_000.0f64,
        trajectory(),
        any::<bool>(),
        0.0..10_000.0f64,
        prop::collection::vec(trajectory(), 0..3),
        prop::option::of(prop::collection::vec(geo(), 3..6)),
    )
        .prop_map(|(id, kind, demand_bps, t0, len, trajectory, known, max_delay_s, alts, area)| User {
            id,
            kind,
            demand_bps,
            t_start: t0,
            t_end: t0 + len,
            trajectory,
            known_a_priori: known,
            uncertainty: UncertaintySpec {
                max_delay_s,
                alt_trajectories: alts,
                operational_area: area,
            },
        })
}

fn assignment() -> impl Strategy<Value = FrequencyAssignment> {
    (any::<u32>(), 1..60u32, 1..20u32, 1..9u32, 1..3u32, 0..4u32, prop::collection::vec((1..60u32, 1..9u32, 1..3u32), 0..3))
        .prop_map(|(beam_id, f, b, g, p, extra, slots)| FrequencyAssignment {
            beam_id,
            f,
            b: b + extra,
            g,
            p,
            reserved_extra_channels: extra,
            backup_slots: slots.into_iter().map(|(f, g, p)| Slot { f, g, p }).collect(),
        })
}

fn plan() -> impl Strategy<Value = FrequencyPlan> {
    let piece = (0.0..1e5f64, 1.0..1e4f64, prop::option::of(assignment())).prop_map(|(t, d, a)| PlanPiece {
        t_from: t,
        t_to: t + d,
        state: match a {
            Some(a) => PieceState::Assigned(a),
            None => PieceState::Deactivated,
        },
    });
    prop::collection::btree_map(any::<u32>(), prop::collection::vec(piece, 1..4), 0..8)
        .prop_map(|assignments| FrequencyPlan { assignments })
}

fn event() -> impl Strategy<Value = Event> {
    let payload = prop_oneof![
        (any::<u32>(), 0.0..1e4f64).prop_map(|(user_id, delay_s)| EventPayload::Delay { user_id, delay_s }),
        (any::<u32>(), trajectory())
            .prop_map(|(user_id, trajectory)| EventPayload::TrajectoryChange { user_id, trajectory }),
        user().prop_map(|user| EventPayload::NewUser { user }),
    ];
    (0.0..86_400.0f64, payload).prop_map(|(t_reveal, payload)| Event { t_reveal, payload })
}

fn roundtrip<T>(x: &T) -> T
where
    T: serde::Serialize + serde::de::DeserializeOwned,
{
    serde_json::from_str(&serde_json::to_string(x).unwrap()).unwrap()
}

proptest! {
    #[test]
    fn users_roundtrip(u in user()) {
        prop_assert_eq!(roundtrip(&u), u);
    }

    #[test]
    fn plans_roundtrip(p in plan()) {
        prop_assert_eq!(roundtrip(&p), p);
    }

    #[test]
    fn events_roundtrip(e in event()) {
        prop_assert_eq!(roundtrip(&e), e);
    }

    #[test]
    fn ops_records_roundtrip(
        t in 0.0..86_400.0f64,
        ev in 0..4usize,
        ac in 0..6usize,
        a in prop::option::of(assignment()),
    ) {
        let event = [EventKind::Delay, EventKind::TrajectoryChange, EventKind::NewUser, EventKind::Activation][ev];
        let action = [
            Action::Kept,
            Action::Widened,
            Action::MovedToSlot,
            Action::MovedToReservedSpectrum,
            Action::ReSolved,
            Action::Deactivated,
        ][ac];
        let mut log = OperationsLog::default();
        log.push(OpsRecord { t, event, user_id: 3, beam_id: 4, action, assignment: a });
        prop_assert_eq!(roundtrip(&log), log.clone());
        let mut buf = Vec::new();
        log.write_ndjson(&mut buf).unwrap();
        let line: OpsRecord = serde_json::from_slice(buf.strip_suffix(b"\n").unwrap()).unwrap();
        prop_assert_eq!(&line, &log.records[0]);
    }

    #[test]
    fn restriction_sets_roundtrip(pairs in prop::collection::vec((0..50u32, 0..50u32, any::<bool>()), 0..40)) {
        let mut r = RestrictionSets::default();
        for (i, j, interference) in pairs {
            if i == j {
                continue;
            }
            if interference {
                r.insert_interference(i, j);
            } else {
                r.insert_handover(i, j);
            }
        }
        prop_assert_eq!(roundtrip(&r), r);
    }

    #[test]
    fn modcod_rows_roundtrip_through_csv(gs in prop::collection::btree_set(1u32..500, 1..8)) {
        let mut csv = String::from("name,gamma,ebn0_db\n");
        for (k, g) in gs.iter().enumerate() {
            csv.push_str(&format!("m{k},{},{}\n", *g as f64 / 100.0, k as f64 * 0.7 - 1.0));
        }
        let t = ModcodTable::from_csv_reader(csv.as_bytes()).unwrap();
        prop_assert_eq!(t.rows().len(), gs.len());
        prop_assert_eq!(roundtrip(&t), t);
    }
}

#[test]
fn generated_scenario_roundtrips_with_same_hash() {
    let spec = ScenarioSpec {
        counts: UserCounts {
            fixed: 4,
            aeronautical: 12,
            maritime: 2,
            land_mobile: 2,
        },
        uncertainty: UncertaintyLevel::High,
        seed: 11,
        ..ScenarioSpec::default()
    };
    let s = generate_scenario(&spec).unwrap();
    let back = Scenario::from_json(&s.to_json()).unwrap();
    assert_eq!(back, s);
    assert_eq!(back.content_hash(), s.content_hash());
    assert!(validate_scenario(&back).is_empty());
}

#[test]
fn config_table_roundtrips() {
    for name in CONFIG_NAMES {
        let c = ExperimentConfig::named(name).unwrap();
        assert_eq!(roundtrip(&c), c);
    }
}
