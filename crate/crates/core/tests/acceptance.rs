//! End-to-end acceptance suite.
//!
//! Each test checks one headline guarantee of the simulator and prints a
//! single `ACCEPTANCE PASS` line on success (visible with
//! `--nocapture`); a failed criterion fails its test. Expected values
//! are frozen here, independently of the implementation: timelines were
//! derived by hand from the protocol rules, and the key-derivation
//! checks compare against a from-scratch SHA-256 written in this file.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tzsim_core::audit::{AuditActor, AuditKind};
use tzsim_core::emergency::{
    standard_catalog, DisasterEvent, DisasterKind, EmergencyServices, PolicyVerdict,
    RestrictedRate,
};
use tzsim_core::interconnect::{connectivity_matrix, receiver_for, EntityKind, InterfaceName};
use tzsim_core::local_access::{
    credential_digest, derive_token, KeyScope, KeyScopeRequest, LaaActivation, LocalAccess,
    LocalAccessError,
};
use tzsim_core::metrics::{compute_metrics, RunMetrics};
use tzsim_core::scenario::{load_scenario, Scenario, SubscriberSeed};
use tzsim_core::sim::{central_as_token, run, verify_trace, RunOutput};
use tzsim_core::state_machine::{
    is_valid_transition, next_state, resolve_transient, Ec4Class, TzState,
};
use tzsim_core::trace::{
    channel_crosses_central, event_to_line, read_trace, write_trace, TraceBody,
    AUDIT_ACK_CHANNEL, AUDIT_PUSH_CHANNEL, CENTRAL_AUTH_CHANNEL,
};
use tzsim_core::zone_manager::{
    AuthOrigin, Route, Verdict, ZoneManager, ZoneManagerConfig,
};
use tzsim_core::{SimMs, Trust, UeId};

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn load(name: &str) -> Scenario {
    let text = fs::read_to_string(scenario_path(name)).expect("scenario file readable");
    load_scenario(&text).expect("scenario valid")
}

fn canonical_run() -> RunOutput {
    let scenario = load("disconnection_day.json");
    run(&scenario, scenario.config.seed, 80_000, true).expect("clean checked run")
}

fn transitions(output: &RunOutput) -> Vec<(TzState, TzState, SimMs)> {
    output
        .trace
        .iter()
        .filter_map(|e| match &e.body {
            TraceBody::Transition(t) => Some((t.from, t.to, e.at)),
            _ => None,
        })
        .collect()
}

/// Walk the trace replaying transitions, yielding the zone state in force
/// at each event position.
fn states_along(output: &RunOutput) -> Vec<TzState> {
    let mut state = TzState::Connected;
    output
        .trace
        .iter()
        .map(|e| {
            if let TraceBody::Transition(t) = &e.body {
                state = t.to;
            }
            state
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Criterion 1: the connectivity model is exactly the published edge set
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_connectivity_model_edge_set() {
    use TzState::*;
    let all = [Connected, WeaklyConnected, Lost, Reconnecting, Disconnecting];

    // The full 25-pair validity matrix: the seven directed edges plus a
    // self-loop on each steady state, and nothing else.
    let allowed: BTreeSet<(&str, &str)> = [
        ("C", "W"),
        ("C", "D"),
        ("W", "D"),
        ("W", "R"),
        ("D", "L"),
        ("L", "W"),
        ("R", "C"),
        ("C", "C"),
        ("W", "W"),
        ("L", "L"),
    ]
    .into_iter()
    .collect();
    for from in all {
        for to in all {
            assert_eq!(
                is_valid_transition(from, to),
                allowed.contains(&(from.code(), to.code())),
                "validity of {from:?} -> {to:?}"
            );
        }
    }

    // Classification-driven successor table over the steady states.
    let healthy = Ec4Class::Healthy;
    let weak = Ec4Class::Weak;
    let gone = Ec4Class::Lost;
    let table = [
        (Connected, healthy, Connected),
        (Connected, weak, WeaklyConnected),
        (Connected, gone, Disconnecting),
        (WeaklyConnected, healthy, Reconnecting),
        (WeaklyConnected, weak, WeaklyConnected),
        (WeaklyConnected, gone, Disconnecting),
        (Lost, healthy, WeaklyConnected),
        (Lost, weak, WeaklyConnected),
        (Lost, gone, Lost),
    ];
    for (from, class, to) in table {
        assert_eq!(next_state(from, class).unwrap(), to, "{from:?} on {class:?}");
    }
    // Transient states never consume classifications directly.
    for state in [Reconnecting, Disconnecting] {
        for class in [healthy, weak, gone] {
            assert!(next_state(state, class).is_err(), "{state:?} on {class:?}");
        }
    }
    // Transients resolve to fixed targets; steady states are fixpoints.
    assert_eq!(resolve_transient(Reconnecting), Connected);
    assert_eq!(resolve_transient(Disconnecting), Lost);
    for steady in [Connected, WeaklyConnected, Lost] {
        assert_eq!(resolve_transient(steady), steady);
    }
    // Flags and codes used everywhere else.
    assert_eq!(
        all.map(|s| s.code()),
        ["C", "W", "L", "R", "D"]
    );
    assert_eq!(all.map(|s| s.is_transient()), [false, false, false, true, true]);
    assert_eq!(
        all.map(|s| s.is_disconnected_regime()),
        [false, false, true, false, true]
    );

    println!("ACCEPTANCE PASS: connectivity model exposes exactly the published edge set");
}

// ---------------------------------------------------------------------------
// Criterion 2: randomized report streams can never leave the model
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_randomized_walks_never_leave_the_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE55);
    let classes = [Ec4Class::Healthy, Ec4Class::Weak, Ec4Class::Lost];
    let mut total_records = 0usize;

    for _ in 0..10_000 {
        let mut zm = ZoneManager::new(ZoneManagerConfig {
            transient_dwell_ms: 100,
            reauth_stagger_ms: 200,
        });
        let mut now: SimMs = 0;
        for _ in 0..100 {
            now += 1_000;
            let class = classes[rng.gen_range(0..classes.len())];
            let mut outcomes = zm.on_ec4_report(class, now);
            if zm.tz_state().is_transient() {
                // One dwell expiry must always return to a steady state.
                now += 100;
                outcomes.extend(zm.resolve_transient_now(now));
                assert!(
                    !zm.tz_state().is_transient(),
                    "one resolution did not reach a steady state"
                );
            }
            for outcome in &outcomes {
                if let Some(record) = &outcome.record {
                    total_records += 1;
                    assert!(
                        is_valid_transition(record.from, record.to),
                        "illegal edge {:?} -> {:?}",
                        record.from,
                        record.to
                    );
                    assert!(
                        !(record.from == TzState::Lost && record.to == TzState::Reconnecting),
                        "a lost zone must recover through weak connectivity"
                    );
                }
            }
        }
    }
    assert!(total_records > 100_000, "walks actually moved ({total_records} records)");

    println!(
        "ACCEPTANCE PASS: 10000 random report walks stayed inside the model \
         ({total_records} legal transitions, zero illegal)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: the disconnection-day replay matches the frozen timeline
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_disconnection_day_replay_matches_frozen_timeline() {
    let output = canonical_run();
    use TzState::*;

    // Frozen end-to-end metrics.
    let expected_metrics = RunMetrics {
        emergency_call_availability: 1.0,
        availability_vacuous: false,
        audit_completeness: 1.0,
        completeness_vacuous: false,
        unauthorized_grants: 0,
        forced_reauths: 3,
        local_auth_successes: 1,
        mean_time_in_state: [
            ("C", 15_940.0),
            ("D", 100.0),
            ("L", 46_920.0),
            ("R", 100.0),
            ("W", 1_000.0),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v))
        .collect(),
    };
    assert_eq!(output.metrics, expected_metrics);

    // Frozen transition timeline: three missed probe rounds close the
    // window at 13000, each transient dwells exactly 100ms, recovery
    // needs one healthy window entry at 60020 and a full healthy window
    // at 61020.
    assert_eq!(
        transitions(&output),
        vec![
            (Connected, Disconnecting, 13_000),
            (Disconnecting, Lost, 13_100),
            (Lost, WeaklyConnected, 60_020),
            (WeaklyConnected, Reconnecting, 61_020),
            (Reconnecting, Connected, 61_120),
        ]
    );

    // Frozen autonomous-window audit log: epoch 1, gapless seq 1..=7.
    let audit: Vec<(SimMs, u64, u64, AuditActor, AuditKind, String, String)> = output
        .trace
        .iter()
        .filter_map(|e| match &e.body {
            TraceBody::Audit(a) => Some((
                e.at,
                a.epoch,
                a.seq,
                a.actor,
                a.kind,
                a.ue_id.to_string(),
                a.outcome.clone(),
            )),
            _ => None,
        })
        .collect();
    use AuditActor::{LocalAuth as La, ZoneManager as Zm};
    use AuditKind::*;
    let expected_audit = vec![
        (15_000, 1, 1, Zm, TrustChange, "u3", "untrusted:detach"),
        (16_500, 1, 2, La, LocalAuthenticate, "u3", "trusted"),
        (16_500, 1, 3, La, KeyDerivation, "u3", "<fingerprint>"),
        (16_500, 1, 4, Zm, AccessDecision, "u3", "grant_full:data"),
        (20_500, 1, 5, La, LocalAuthenticate, "u8", "untrusted"),
        (20_500, 1, 6, Zm, AccessDecision, "u8", "grant_emergency_only:data"),
        (21_500, 1, 7, Zm, AccessDecision, "u9", "grant_emergency_only:emergency_call"),
    ];
    assert_eq!(audit.len(), expected_audit.len());
    for (got, want) in audit.iter().zip(&expected_audit) {
        assert_eq!((got.0, got.1, got.2, got.3, got.4, got.5.as_str()),
                   (want.0, want.1, want.2, want.3, want.4, want.5));
        if want.6 == "<fingerprint>" {
            // The derived-key fingerprint: checked byte-for-byte against
            // the independent oracle in criterion 9; here, shape only.
            assert!(got.6.starts_with("as:") && got.6.len() == 11, "{}", got.6);
        } else {
            assert_eq!(got.6, want.6);
        }
    }

    // Frozen access decisions (time, device, verdict, route, reason).
    let decisions: Vec<(SimMs, String, Verdict, Option<Route>, String)> = output
        .trace
        .iter()
        .filter_map(|e| match &e.body {
            TraceBody::Decision(d) => Some((
                e.at,
                d.ue_id.to_string(),
                d.verdict,
                d.route,
                d.reason.clone(),
            )),
            _ => None,
        })
        .collect();
    use Verdict::*;
    let central = Some(Route::CentralVaaa);
    let local = Some(Route::LocalLaa);
    let expected_decisions = [
        (320, "u1", GrantFull, central, "central_accept"),
        (370, "u2", GrantFull, central, "central_accept"),
        (420, "u3", GrantFull, central, "central_accept"),
        (16_500, "u3", GrantFull, local, "local_auth"),
        (20_500, "u8", GrantEmergencyOnly, local, "local_auth_failed"),
        (21_500, "u9", GrantEmergencyOnly, None, "emergency_no_auth"),
        (70_020, "u3", GrantFull, central, "central_accept"),
        (70_520, "u1", GrantFull, central, "central_accept"),
        (71_020, "u2", GrantFull, central, "central_accept"),
    ];
    assert_eq!(decisions.len(), expected_decisions.len());
    for (got, want) in decisions.iter().zip(&expected_decisions) {
        assert_eq!(
            (got.0, got.1.as_str(), got.2, got.3, got.4.as_str()),
            (want.0, want.1, want.2, want.3, want.4)
        );
    }

    // Frozen recovery schedule: the locally-authenticated device first,
    // then central-origin devices in id order, one stagger step apart.
    assert_eq!(output.final_state.schedules.len(), 1);
    let schedule: Vec<(String, SimMs)> = output.final_state.schedules[0]
        .entries
        .iter()
        .map(|e| (e.ue_id.to_string(), e.disconnect_at))
        .collect();
    assert_eq!(
        schedule,
        vec![
            ("u3".to_owned(), 61_220),
            ("u1".to_owned(), 61_420),
            ("u2".to_owned(), 61_620),
        ]
    );
    // Every scheduled entry produced a forced-disconnect delivery.
    let forced: Vec<SimMs> = output
        .trace
        .iter()
        .filter_map(|e| match &e.body {
            TraceBody::Envelope(env) if env.payload == "forced_disconnect" => Some(e.at),
            _ => None,
        })
        .collect();
    assert_eq!(forced, vec![61_220, 61_420, 61_620]);

    // After the flush and the scripted re-requests, every trusted device
    // is centrally authenticated; no local grant survived recovery.
    let by_id: BTreeMap<String, _> = output
        .final_state
        .devices
        .iter()
        .map(|d| (d.ue_id.to_string(), d))
        .collect();
    for id in ["u1", "u2", "u3"] {
        let device = by_id[id];
        assert!(device.attached);
        assert_eq!(device.trust, Trust::Trusted);
        assert_eq!(device.auth_origin, Some(AuthOrigin::Central), "{id}");
    }
    for id in ["u8", "u9"] {
        let device = by_id[id];
        assert!(device.attached);
        assert_eq!(device.trust, Trust::Untrusted);
        assert_eq!(device.auth_origin, None);
    }
    assert!(output
        .final_state
        .devices
        .iter()
        .all(|d| d.auth_origin != Some(AuthOrigin::Local)));

    // The disaster alarm is edge-local and flows during the partition.
    let alarm_channels: Vec<&str> = output
        .trace
        .iter()
        .filter_map(|e| match &e.body {
            TraceBody::Envelope(env) if env.payload == "disaster_alarm" && e.at == 12_000 => {
                Some(env.channel.as_str())
            }
            _ => None,
        })
        .collect();
    assert_eq!(alarm_channels, vec!["Io-Es", "Es-Cm"]);

    // Profile syncs only happen in full connectivity: delivered at tick
    // + one 10ms leg, refused silently otherwise, dropped mid-partition.
    let syncs: Vec<SimMs> = output
        .trace
        .iter()
        .filter_map(|e| match &e.body {
            TraceBody::Metric(m) if m.name == "profile_sync" => Some(e.at),
            _ => None,
        })
        .collect();
    assert_eq!(syncs, vec![5_010, 65_010, 70_010, 75_010]);

    println!("ACCEPTANCE PASS: disconnection-day replay reproduced the frozen timeline exactly");
}

// ---------------------------------------------------------------------------
// Criterion 4: the emergency policy table, all twenty cells
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_emergency_policy_sweep() {
    use PolicyVerdict::*;
    let services = [
        "disaster_alarm",
        "evacuation_guidance",
        "positioning",
        "emergency_call",
        "sms",
    ];
    assert_eq!(
        standard_catalog().iter().map(|s| s.name.clone()).collect::<Vec<_>>(),
        services
    );

    let build = |state: TzState, disaster: bool| {
        let mut es = EmergencyServices::standard(RestrictedRate::default());
        es.set_state(state);
        if disaster {
            es.on_disaster(DisasterEvent {
                event_id: "d1".into(),
                kind: DisasterKind::Fire,
                at: 0,
                ttl_ms: 10_000,
            });
        }
        es
    };

    // The availability grid: the emergency call is reachable without
    // authentication in every (state x trust x disaster) cell, and the
    // disaster-specific services light up with the alarm and only with
    // the alarm, regardless of state or trust.
    let all_states = [
        TzState::Connected,
        TzState::WeaklyConnected,
        TzState::Lost,
        TzState::Reconnecting,
        TzState::Disconnecting,
    ];
    let mut cells = 0;
    for state in all_states {
        for disaster in [false, true] {
            let es = build(state, disaster);
            for trust in [Trust::Trusted, Trust::Untrusted] {
                let call = es.decide("emergency_call", trust, 100).expect("always active");
                assert_eq!(
                    (call.verdict, call.requires_auth),
                    (Allow, false),
                    "emergency_call state={state} trust={trust} disaster={disaster}"
                );
                for service in ["disaster_alarm", "evacuation_guidance"] {
                    let d = es.decide(service, trust, 100).expect("catalog service");
                    let expected = if disaster { Allow } else { Inactive };
                    assert_eq!(
                        (d.verdict, d.requires_auth),
                        (expected, false),
                        "{service} state={state} trust={trust} disaster={disaster}"
                    );
                }
                cells += 1;
            }
        }
    }
    assert_eq!(cells, 20);

    // Complement: every catalog service in the autonomous (lost) state,
    // both trust levels, with and without a disaster.
    let mut checked = 0;
    for disaster in [false, true] {
        let es = build(TzState::Lost, disaster);
        for trust in [Trust::Trusted, Trust::Untrusted] {
            for service in services {
                let decision = es.decide(service, trust, 100).expect("catalog service");
                let expected = match service {
                    "emergency_call" => (Allow, false),
                    "disaster_alarm" | "evacuation_guidance" => {
                        if disaster {
                            (Allow, false)
                        } else {
                            (Inactive, false)
                        }
                    }
                    // Policy-gated services replace authentication with
                    // policy while the zone is autonomous: full for the
                    // trusted, rate-limited for the rest.
                    _ => {
                        if trust == Trust::Trusted {
                            (Allow, false)
                        } else {
                            (AllowRestricted, false)
                        }
                    }
                };
                assert_eq!(
                    (decision.verdict, decision.requires_auth),
                    expected,
                    "{service} trust={trust} disaster={disaster}"
                );
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 20);

    // Contrast: in full connectivity the policy-gated services demand
    // authentication instead.
    let connected = build(TzState::Connected, false);
    for service in ["positioning", "sms"] {
        let decision = connected.decide(service, Trust::Untrusted, 100).unwrap();
        assert_eq!((decision.verdict, decision.requires_auth), (Allow, true));
    }
    // Non-catalog services are not the emergency module's business.
    assert!(connected.decide("data", Trust::Trusted, 100).is_none());

    // Usable sets for an untrusted device in the lost state.
    let with_disaster = build(TzState::Lost, true);
    let names: BTreeSet<String> = services.iter().map(|s| (*s).to_owned()).collect();
    assert_eq!(with_disaster.usable_set(Trust::Untrusted, 100), names);
    let without = build(TzState::Lost, false);
    assert_eq!(
        without.usable_set(Trust::Untrusted, 100),
        ["emergency_call", "positioning", "sms"]
            .into_iter()
            .map(str::to_owned)
            .collect()
    );

    // The restricted lane is rate-limited: five uses per window.
    let mut limited = build(TzState::Lost, false);
    let ue = UeId::from("u8");
    for _ in 0..5 {
        assert!(limited.consume_restricted(&ue, "sms", 1_000));
    }
    assert!(!limited.consume_restricted(&ue, "sms", 1_000));
    assert!(limited.consume_restricted(&ue, "sms", 61_001), "window rolls over");

    println!(
        "ACCEPTANCE PASS: emergency call allowed without auth in all twenty \
         state/trust/disaster cells; full policy table verified"
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: audit records reach storage exactly once, even losing acks
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_audit_exactly_once_even_with_lost_acks() {
    let base = canonical_run();
    let acklost_scenario = load("disconnection_day_acklost.json");
    let acklost = run(&acklost_scenario, acklost_scenario.config.seed, 80_000, true)
        .expect("checked run with a lost ack");

    for (label, output) in [("base", &base), ("acklost", &acklost)] {
        // Independent recount: every audit record in the trace is stored
        // centrally exactly once, and nothing else is stored.
        let trace_records: Vec<(u64, u64)> = output
            .trace
            .iter()
            .filter_map(|e| match &e.body {
                TraceBody::Audit(a) => Some((a.epoch, a.seq)),
                _ => None,
            })
            .collect();
        let unique: BTreeSet<(u64, u64)> = trace_records.iter().copied().collect();
        assert_eq!(trace_records.len(), unique.len(), "{label}: no duplicate records");
        let stored: BTreeSet<(u64, u64)> =
            output.final_state.center_accepted.keys().copied().collect();
        assert_eq!(stored, unique, "{label}: store holds exactly the trace's records");

        // Independent completeness recount over the autonomous window.
        let states = states_along(output);
        let mut reported = 0u64;
        let mut recorded = 0u64;
        for (event, state) in output.trace.iter().zip(&states) {
            if !state.is_disconnected_regime() {
                continue;
            }
            match &event.body {
                TraceBody::Envelope(env)
                    if env.payload == "operation_report"
                        && (env.channel == "Zm-Sa" || env.channel == "La-Sa") =>
                {
                    reported += 1;
                }
                TraceBody::Audit(_) => recorded += 1,
                _ => {}
            }
        }
        assert!(reported > 0, "{label}: the window saw operations");
        assert_eq!(recorded, reported, "{label}: every reported operation was recorded");
        assert_eq!(output.metrics.audit_completeness, 1.0, "{label}");
        assert!(!output.metrics.completeness_vacuous, "{label}");
        assert!(!output.final_state.sa_active, "{label}: recorder drained and shut down");
    }

    // The base run needs no retransmission: one arrival per record.
    assert_eq!(
        base.final_state.center_receive_log.len(),
        base.final_state.center_accepted.len()
    );

    // The ack-lost run retransmits, the center deduplicates.
    assert!(
        acklost.final_state.center_receive_log.len()
            > acklost.final_state.center_accepted.len(),
        "retransmission happened"
    );
    assert!(acklost.trace.iter().any(|e| matches!(
        &e.body,
        TraceBody::Drop(d) if d.channel == AUDIT_ACK_CHANNEL && d.reason == "fault_injected"
    )));
    let pushes = acklost
        .trace
        .iter()
        .filter(|e| matches!(
            &e.body,
            TraceBody::Envelope(env) if env.channel == AUDIT_PUSH_CHANNEL
        ))
        .count();
    assert_eq!(pushes, 2, "original push plus one redelivery");

    // Both variants persist identical evidence.
    assert_eq!(
        base.final_state.center_accepted,
        acklost.final_state.center_accepted
    );

    println!(
        "ACCEPTANCE PASS: audit evidence stored exactly once in both variants \
         (base {} arrivals, ack-lost {} arrivals, {} records)",
        base.final_state.center_receive_log.len(),
        acklost.final_state.center_receive_log.len(),
        base.final_state.center_accepted.len()
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: local agent lifecycle and key scope confinement
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_local_agent_lifecycle_and_key_scope() {
    let seed_profile = |id: &str| {
        SubscriberSeed {
            id: id.to_owned(),
            credential: format!("k-{id}"),
        }
        .profile()
    };
    let mut laa = LocalAccess::new(vec![seed_profile("u1"), seed_profile("u2")]);

    // Activation follows the zone state exactly.
    assert_eq!(laa.activation(), LaaActivation::Inactive);
    let table = [
        (TzState::Connected, LaaActivation::Inactive),
        (TzState::WeaklyConnected, LaaActivation::Inactive),
        (TzState::Disconnecting, LaaActivation::Activated),
        (TzState::Lost, LaaActivation::Active),
        (TzState::Reconnecting, LaaActivation::Deactivated),
    ];
    for (state, expected) in table {
        assert_eq!(laa.set_activation(state), expected, "{state:?}");
    }

    // Dormant agents refuse to authenticate.
    laa.set_activation(TzState::Connected);
    assert!(matches!(
        laa.local_authenticate(&UeId::from("u1"), b"k-u1"),
        Err(LocalAccessError::NotActive(_))
    ));

    // Active agents authenticate, derive AS keys, and refuse NAS scope.
    laa.set_activation(TzState::Lost);
    let (trust, _) = laa.local_authenticate(&UeId::from("u1"), b"k-u1").unwrap();
    assert_eq!(trust, Trust::Trusted);
    let (wrong, _) = laa.local_authenticate(&UeId::from("u1"), b"bad").unwrap();
    assert_eq!(wrong, Trust::Untrusted, "credential mismatch demotes, not errors");
    let (token, _) = laa.derive_as_key(&UeId::from("u1"), KeyScopeRequest::As).unwrap();
    assert_eq!(token.scope, KeyScope::As);
    assert!(matches!(
        laa.derive_as_key(&UeId::from("u1"), KeyScopeRequest::Nas),
        Err(LocalAccessError::ScopeViolation)
    ));
    assert!(matches!(
        laa.derive_as_key(&UeId::from("zz"), KeyScopeRequest::As),
        Err(LocalAccessError::UnknownSubscriber(_))
    ));
    assert!(matches!(
        laa.sync_profiles(&[], 30),
        Err(LocalAccessError::NoConnectivity(_))
    ));
    assert_eq!(laa.issued_token_count(), 1);

    // Reconnection zeroizes the issued-token ledger.
    laa.set_activation(TzState::Reconnecting);
    assert_eq!(laa.issued_token_count(), 0);

    // Fuzz: 100000 random operations; every token that ever comes out is
    // access-stratum scoped, and NAS requests never succeed.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5C0FE);
    let mut fuzz = LocalAccess::new(vec![seed_profile("u1"), seed_profile("u2")]);
    let states = [
        TzState::Connected,
        TzState::WeaklyConnected,
        TzState::Lost,
        TzState::Reconnecting,
        TzState::Disconnecting,
    ];
    let ids = ["u1", "u2", "u3"];
    let mut issued = 0u64;
    let mut nas_attempts = 0u64;
    for op in 0..100_000u64 {
        match rng.gen_range(0..4) {
            0 => {
                fuzz.set_activation(states[rng.gen_range(0..states.len())]);
            }
            1 => {
                let id = ids[rng.gen_range(0..ids.len())];
                let credential = if rng.gen_bool(0.5) {
                    format!("k-{id}")
                } else {
                    "wrong".to_owned()
                };
                let _ = fuzz.local_authenticate(&UeId::from(id), credential.as_bytes());
            }
            2 => {
                let id = ids[rng.gen_range(0..ids.len())];
                let nas = rng.gen_bool(0.3);
                let scope = if nas { KeyScopeRequest::Nas } else { KeyScopeRequest::As };
                let result = fuzz.derive_as_key(&UeId::from(id), scope);
                if nas {
                    nas_attempts += 1;
                    assert!(result.is_err(), "a non-AS key escaped at op {op}");
                } else if let Ok((token, report)) = result {
                    issued += 1;
                    assert_eq!(token.scope, KeyScope::As);
                    assert_eq!(token.fingerprint().len(), 8);
                    assert_eq!(report.kind, AuditKind::KeyDerivation);
                }
            }
            _ => {
                let _ = fuzz.sync_profiles(&[seed_profile("u1")], op);
            }
        }
    }
    assert!(issued > 1_000, "fuzz exercised derivation ({issued} tokens)");
    assert!(nas_attempts > 1_000, "fuzz exercised NAS refusal ({nas_attempts} attempts)");

    println!(
        "ACCEPTANCE PASS: local agent lifecycle verified; {issued} fuzzed tokens all \
         AS-scoped, {nas_attempts} NAS requests all refused"
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: partition faithfulness and the interface matrix
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_partition_faithfulness_and_interface_matrix() {
    use InterfaceName::*;
    // The frozen partition of the twelve interfaces.
    let crossing = [CmMa, OsCm, MeZm, LaLs];
    let edge_local = [CmZm, EsCm, EsZm, IoEs, LaSa, ZmLa, ZmSa, ZmUe];
    for interface in crossing {
        assert!(interface.crosses_central(), "{interface:?}");
        assert!(channel_crosses_central(interface.as_str()));
    }
    for interface in edge_local {
        assert!(!interface.crosses_central(), "{interface:?}");
        assert!(!channel_crosses_central(interface.as_str()));
    }
    // The three out-of-band channels also cross the boundary.
    for channel in [CENTRAL_AUTH_CHANNEL, AUDIT_PUSH_CHANNEL, AUDIT_ACK_CHANNEL] {
        assert!(channel_crosses_central(channel));
    }

    // The directed adjacency of the twelve interfaces, row by row.
    {
        use EntityKind::*;
        let expected: Vec<(InterfaceName, EntityKind, EntityKind)> = vec![
            (CmMa, Cccm, Mano),
            (CmMa, Mano, Cccm),
            (CmZm, Cccm, ZoneManager),
            (CmZm, ZoneManager, Cccm),
            (EsCm, EmergencyServices, Cccm),
            (EsZm, ZoneManager, EmergencyServices),
            (IoEs, IotGateway, EmergencyServices),
            (LaLs, Lss, LocalAuth),
            (LaSa, LocalAuth, SecurityAudit),
            (MeZm, Amf, ZoneManager),
            (OsCm, Cccm, Oss),
            (OsCm, Oss, Cccm),
            (ZmLa, LocalAuth, ZoneManager),
            (ZmLa, ZoneManager, LocalAuth),
            (ZmSa, ZoneManager, SecurityAudit),
            (ZmUe, Ue, ZoneManager),
            (ZmUe, ZoneManager, Ue),
        ];
        let matrix: BTreeSet<(InterfaceName, EntityKind, EntityKind)> =
            connectivity_matrix().into_iter().collect();
        assert_eq!(matrix.len(), 17, "seventeen directed rows");
        for &(interface, sender, receiver) in &expected {
            assert!(
                matrix.contains(&(interface, sender, receiver)),
                "{interface:?}: {sender:?} -> {receiver:?}"
            );
            assert_eq!(receiver_for(interface, sender), Some(receiver));
        }
        let names: BTreeSet<InterfaceName> = expected.iter().map(|&(i, _, _)| i).collect();
        assert_eq!(names.len(), 12, "every interface appears");
        // No row exists outside the table.
        assert_eq!(receiver_for(EsCm, Cccm), None, "alarms flow one way");
        assert_eq!(receiver_for(MeZm, ZoneManager), None, "tokens flow inward");
        assert_eq!(receiver_for(LaLs, LocalAuth), None, "snapshots flow one way");
    }

    // Scan the canonical trace: while the ground link is unreachable, no
    // boundary-crossing channel ever delivers, drops do happen, and
    // edge-local traffic keeps flowing.
    let output = canonical_run();
    let mut lost = false;
    let mut crossing_deliveries_while_lost = 0;
    let mut drops_while_lost = 0;
    let mut local_deliveries_while_lost = 0;
    for event in &output.trace {
        match &event.body {
            TraceBody::Metric(m) if m.name == "link_quality" => {
                lost = m.detail.get("class").map(String::as_str) == Some("lost");
            }
            TraceBody::Envelope(env) if lost => {
                if channel_crosses_central(&env.channel) {
                    crossing_deliveries_while_lost += 1;
                } else {
                    local_deliveries_while_lost += 1;
                }
            }
            TraceBody::Drop(d) if lost => {
                assert!(channel_crosses_central(&d.channel), "only boundary traffic drops");
                drops_while_lost += 1;
            }
            _ => {}
        }
    }
    assert_eq!(crossing_deliveries_while_lost, 0);
    assert!(drops_while_lost > 100, "fifty seconds of probes and syncs were dropped");
    assert!(local_deliveries_while_lost > 50, "the edge stayed alive");

    // Degraded is not partitioned: under a weak link, boundary traffic
    // still flows (with losses), and probe traffic is never dropped.
    let weak_scenario = load("weak_link.json");
    let weak = run(&weak_scenario, weak_scenario.config.seed, 20_000, true).unwrap();
    let weak_deliveries = weak
        .trace
        .iter()
        .filter(|e| matches!(
            &e.body,
            TraceBody::Envelope(env)
                if channel_crosses_central(&env.channel) && e.at >= 5_000 && e.at < 12_000
        ))
        .count();
    assert!(weak_deliveries > 10, "weak links still deliver");
    for event in &weak.trace {
        if let TraceBody::Drop(d) = &event.body {
            assert_eq!(d.reason, "weak_loss");
            assert!(
                d.payload != "probe_request" && d.payload != "probe_response",
                "measurement traffic is exempt"
            );
        }
    }

    println!(
        "ACCEPTANCE PASS: partition verified ({drops_while_lost} boundary drops, \
         zero boundary deliveries, {local_deliveries_while_lost} edge-local deliveries while lost)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: byte-level determinism and report purity
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_byte_determinism_and_report_purity() {
    let render = |output: &RunOutput| {
        let mut bytes = Vec::new();
        write_trace(&mut bytes, &output.trace).unwrap();
        bytes
    };

    // Same scenario, same seed: identical bytes, metrics, and end state.
    let canonical = load("disconnection_day.json");
    let a = run(&canonical, 42, 80_000, true).unwrap();
    let b = run(&canonical, 42, 80_000, true).unwrap();
    assert_eq!(render(&a), render(&b));
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.final_state.devices, b.final_state.devices);

    // Also through the randomized weak-link drop lottery.
    let weak = load("weak_link.json");
    let wa = run(&weak, 7, 20_000, true).unwrap();
    let wb = run(&weak, 7, 20_000, true).unwrap();
    assert_eq!(render(&wa), render(&wb));

    // A different seed reshuffles the lottery but never the physics:
    // same transitions, different drop pattern is permitted.
    let wc = run(&weak, 8, 20_000, true).unwrap();
    assert_eq!(transitions(&wa), transitions(&wc));

    // Report purity: metrics are a pure function of the trace, and the
    // trace round-trips through its file form losslessly.
    assert_eq!(compute_metrics(&a.trace), a.metrics);
    let reread = read_trace(render(&a).as_slice()).unwrap();
    assert_eq!(reread.len(), a.trace.len());
    for (x, y) in a.trace.iter().zip(&reread) {
        assert_eq!(event_to_line(x), event_to_line(y));
    }
    assert_eq!(compute_metrics(&reread), a.metrics);
    // And the stand-alone verifier accepts the re-read trace.
    verify_trace(&reread, canonical.config.transient_dwell_ms).unwrap();

    println!(
        "ACCEPTANCE PASS: determinism holds to the byte ({} trace lines), \
         metrics recompute identically from disk",
        a.trace.len()
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: key derivation against an independent SHA-256
// ---------------------------------------------------------------------------

/// A from-scratch SHA-256 (FIPS 180-4), sharing no code with the crate
/// under test, used as the derivation oracle.
mod sha_oracle {
    const K: [u32; 64] = [
        0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4,
        0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe,
        0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f,
        0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
        0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
        0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
        0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116,
        0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
        0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
        0xc67178f2,
    ];

    pub fn sha256(data: &[u8]) -> [u8; 32] {
        let mut h: [u32; 8] = [
            0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab,
            0x5be0cd19,
        ];
        let mut message = data.to_vec();
        let bit_len = (data.len() as u64) * 8;
        message.push(0x80);
        while message.len() % 64 != 56 {
            message.push(0);
        }
        message.extend_from_slice(&bit_len.to_be_bytes());

        for block in message.chunks_exact(64) {
            let mut w = [0u32; 64];
            for i in 0..16 {
                w[i] = u32::from_be_bytes([
                    block[4 * i],
                    block[4 * i + 1],
                    block[4 * i + 2],
                    block[4 * i + 3],
                ]);
            }
            for i in 16..64 {
                let s0 = w[i - 15].rotate_right(7) ^ w[i - 15].rotate_right(18) ^ (w[i - 15] >> 3);
                let s1 = w[i - 2].rotate_right(17) ^ w[i - 2].rotate_right(19) ^ (w[i - 2] >> 10);
                w[i] = w[i - 16]
                    .wrapping_add(s0)
                    .wrapping_add(w[i - 7])
                    .wrapping_add(s1);
            }
            let [mut a, mut b, mut c, mut d, mut e, mut f, mut g, mut hh] = h;
            for i in 0..64 {
                let s1 = e.rotate_right(6) ^ e.rotate_right(11) ^ e.rotate_right(25);
                let ch = (e & f) ^ (!e & g);
                let t1 = hh
                    .wrapping_add(s1)
                    .wrapping_add(ch)
                    .wrapping_add(K[i])
                    .wrapping_add(w[i]);
                let s0 = a.rotate_right(2) ^ a.rotate_right(13) ^ a.rotate_right(22);
                let maj = (a & b) ^ (a & c) ^ (b & c);
                let t2 = s0.wrapping_add(maj);
                hh = g;
                g = f;
                f = e;
                e = d.wrapping_add(t1);
                d = c;
                c = b;
                b = a;
                a = t1.wrapping_add(t2);
            }
            for (slot, v) in h.iter_mut().zip([a, b, c, d, e, f, g, hh]) {
                *slot = slot.wrapping_add(v);
            }
        }
        let mut out = [0u8; 32];
        for (i, word) in h.iter().enumerate() {
            out[4 * i..4 * i + 4].copy_from_slice(&word.to_be_bytes());
        }
        out
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn criterion_9_key_derivation_matches_independent_oracle() {
    // First prove the oracle itself against published test vectors.
    assert_eq!(
        hex(&sha_oracle::sha256(b"")),
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    );
    assert_eq!(
        hex(&sha_oracle::sha256(b"abc")),
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    );

    // Credential digests match the oracle on random inputs.
    let mut rng = ChaCha8Rng::seed_from_u64(0x0DEC0DE);
    for _ in 0..100 {
        let len = rng.gen_range(0..200);
        let credential: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        assert_eq!(credential_digest(&credential), sha_oracle::sha256(&credential));
    }

    // The local token KDF is SHA-256(digest || counter_be) and the
    // central one prepends its own domain tag — both rebuilt here from
    // the oracle over 100 random (digest, counter) pairs.
    for _ in 0..100 {
        let mut digest = [0u8; 32];
        rng.fill(&mut digest);
        let counter: u64 = rng.gen();

        let mut local_preimage = Vec::new();
        local_preimage.extend_from_slice(&digest);
        local_preimage.extend_from_slice(&counter.to_be_bytes());
        assert_eq!(derive_token(&digest, counter), sha_oracle::sha256(&local_preimage));

        let mut central_preimage = b"amf-as-key".to_vec();
        central_preimage.extend_from_slice(&digest);
        central_preimage.extend_from_slice(&counter.to_be_bytes());
        assert_eq!(
            central_as_token(&digest, counter),
            sha_oracle::sha256(&central_preimage)
        );

        // Domain separation: the two paths can never mint the same token.
        assert_ne!(derive_token(&digest, counter), central_as_token(&digest, counter));
    }

    // Close the loop on the canonical run: the fingerprint recorded in
    // the audit log for u3's locally derived key must equal the oracle's
    // derivation for credential "k-u3", counter 0.
    let expected_token = sha_oracle::sha256(
        &[
            sha_oracle::sha256(b"k-u3").as_slice(),
            0u64.to_be_bytes().as_slice(),
        ]
        .concat(),
    );
    let expected_outcome = format!("as:{}", hex(&expected_token[..4]));
    let output = canonical_run();
    let recorded = output
        .trace
        .iter()
        .find_map(|e| match &e.body {
            TraceBody::Audit(a) if a.kind == AuditKind::KeyDerivation => Some(a.outcome.clone()),
            _ => None,
        })
        .expect("the local derivation was audited");
    assert_eq!(recorded, expected_outcome);

    // The same fingerprint is what the device received in its security
    // mode command during the lost window.
    let delivered = output
        .trace
        .iter()
        .find_map(|e| match &e.body {
            TraceBody::Envelope(env)
                if env.payload == "as_security_mode" && e.at == 16_500 =>
            {
                env.detail.get("fingerprint").cloned()
            }
            _ => None,
        })
        .expect("security mode delivered in the lost window");
    assert_eq!(format!("as:{delivered}"), expected_outcome);

    println!(
        "ACCEPTANCE PASS: key derivation matches the independent SHA-256 oracle \
         (200 random cross-checks plus the recorded run fingerprint {expected_outcome})"
    );
}

// ---------------------------------------------------------------------------
// Whole-suite summary marker
// ---------------------------------------------------------------------------

#[test]
fn acceptance_suite_covers_nine_criteria() {
    // One criterion per test above; this marker keeps the count honest.
    let criteria = [
        "connectivity model edge set",
        "randomized walks stay inside the model",
        "disconnection-day frozen timeline",
        "emergency policy sweep",
        "audit exactly-once under ack loss",
        "local agent lifecycle and key scope",
        "partition faithfulness and interface matrix",
        "byte determinism and report purity",
        "key derivation vs independent oracle",
    ];
    assert_eq!(criteria.len(), 9);
    println!("ACCEPTANCE SUITE: {} criteria covered", criteria.len());
}
