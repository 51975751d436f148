//! Run metrics, computed purely from a trace.
//!
//! Everything here is a fold over the event list: given the same trace,
//! the same numbers come out, whether computed at the end of a live run
//! or recomputed later from the file. The state timeline needed for the
//! time-windowed metrics is rebuilt from the transition events (runs
//! start connected at time zero; the closing `run_end` marker supplies
//! the horizon).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::audit::AuditKind;
use crate::emergency::{standard_catalog, EMERGENCY_CALL};
use crate::state_machine::TzState;
use crate::trace::{TraceBody, TraceEvent};
use crate::zone_manager::Verdict;
use crate::Trust;

/// The report card for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Fraction of emergency-call requests that were actually granted the
    /// emergency call service. 1.0 (with the flag set) when none occurred.
    pub emergency_call_availability: f64,
    pub availability_vacuous: bool,
    /// Fraction of autonomous-period security operations that have an
    /// audit record: records written while disconnected or lost, over
    /// operation reports delivered to the audit entity in those states.
    pub audit_completeness: f64,
    pub completeness_vacuous: bool,
    /// Decisions that handed out more than policy allows: restricted
    /// grants beyond the emergency catalog, or full grants to untrusted
    /// devices.
    pub unauthorized_grants: u64,
    /// Forced disconnections delivered to devices during re-auth flushes.
    pub forced_reauths: u64,
    /// Local authentications that ended in trust.
    pub local_auth_successes: u64,
    /// Mean milliseconds per visit, keyed by state code, for states that
    /// were visited.
    pub mean_time_in_state: BTreeMap<String, f64>,
}

/// Fold a trace into its metrics.
pub fn compute_metrics(events: &[TraceEvent]) -> RunMetrics {
    let catalog: Vec<String> = standard_catalog()
        .into_iter()
        .map(|s| s.name)
        .collect();

    let mut state = TzState::Connected;
    let mut state_entered_at: u64 = 0;
    let mut time_in_state: BTreeMap<TzState, u64> = BTreeMap::new();
    let mut visits: BTreeMap<TzState, u64> = BTreeMap::new();
    visits.insert(state, 1);

    let mut horizon = events.last().map(|e| e.at).unwrap_or(0);
    let mut emergency_requests = 0u64;
    let mut emergency_granted = 0u64;
    let mut audited_autonomous = 0u64;
    let mut reported_autonomous = 0u64;
    let mut unauthorized = 0u64;
    let mut forced = 0u64;
    let mut local_auth_ok = 0u64;

    for event in events {
        let autonomous = matches!(state, TzState::Disconnecting | TzState::Lost);
        match &event.body {
            TraceBody::Transition(t) => {
                *time_in_state.entry(state).or_default() += event.at - state_entered_at;
                state = t.to;
                state_entered_at = event.at;
                *visits.entry(state).or_default() += 1;
            }
            TraceBody::Envelope(envelope) => {
                if envelope.channel == "Zm-Ue" && envelope.payload == "forced_disconnect" {
                    forced += 1;
                }
                if autonomous
                    && envelope.payload == "operation_report"
                    && matches!(envelope.channel.as_str(), "Zm-Sa" | "La-Sa")
                {
                    reported_autonomous += 1;
                }
            }
            TraceBody::Decision(decision) => {
                if decision.service == EMERGENCY_CALL {
                    emergency_requests += 1;
                    if decision.verdict != Verdict::Deny
                        && decision.granted.iter().any(|s| s == EMERGENCY_CALL)
                    {
                        emergency_granted += 1;
                    }
                }
                let over_catalog = decision
                    .granted
                    .iter()
                    .any(|s| !catalog.contains(s));
                if (decision.verdict == Verdict::GrantEmergencyOnly && over_catalog)
                    || (decision.verdict == Verdict::GrantFull
                        && decision.trust == Trust::Untrusted)
                {
                    unauthorized += 1;
                }
            }
            TraceBody::Audit(record) => {
                if autonomous {
                    audited_autonomous += 1;
                }
                if record.kind == AuditKind::LocalAuthenticate && record.outcome == "trusted" {
                    local_auth_ok += 1;
                }
            }
            TraceBody::Metric(marker) => {
                if marker.name == "run_end" {
                    horizon = event.at;
                }
            }
            TraceBody::Drop(_) => {}
        }
    }

    *time_in_state.entry(state).or_default() += horizon.saturating_sub(state_entered_at);

    let mean_time_in_state = time_in_state
        .iter()
        .map(|(s, total)| {
            let n = *visits.get(s).unwrap_or(&1) as f64;
            (s.code().to_string(), *total as f64 / n)
        })
        .collect();

    let (emergency_call_availability, availability_vacuous) = ratio(emergency_granted, emergency_requests);
    let (audit_completeness, completeness_vacuous) = ratio(audited_autonomous, reported_autonomous);

    RunMetrics {
        emergency_call_availability,
        availability_vacuous,
        audit_completeness,
        completeness_vacuous,
        unauthorized_grants: unauthorized,
        forced_reauths: forced,
        local_auth_successes: local_auth_ok,
        mean_time_in_state,
    }
}

/// `num / den`, defined as 1.0 (flagged vacuous) when the denominator is
/// zero: an obligation with no instances is trivially met.
fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (1.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
