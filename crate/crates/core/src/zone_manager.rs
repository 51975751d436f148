//! Zone management: the coordinator that drives trust-zone state
//! transitions, routes access requests to the central or local AAA path,
//! and runs the safe hand-back protocol when connectivity returns.
//!
//! The manager consumes link classifications, owns the device table, and
//! produces immutable outcome values ([`TransitionOutcome`],
//! [`AccessOutcome`]) that the simulation harness turns into bus traffic.
//! Three rules shape the code:
//!
//! * Trust survives a disconnection — devices authenticated before the cut
//!   retain their grants — but every device trusted during that
//!   disconnection is forcibly flushed and re-authenticated centrally once
//!   the link is back (the re-auth schedule, locally-authenticated devices
//!   first).
//! * A local authentication origin is only ever assigned while the zone is
//!   in the lost state; requests arriving in the brief disconnecting state
//!   are parked and replayed on entry to lost.
//! * Decisions never grant an untrusted device anything beyond the
//!   always-available emergency set.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{AuditActor, AuditKind, OperationReport};
use crate::emergency::{EmergencyServices, PolicyVerdict};
use crate::local_access::{AsKeyToken, KeyScopeRequest, LocalAccess, LocalAccessError};
use crate::state_machine::{
    is_valid_transition, next_state, resolve_transient, Ec4Class, TransitionCause,
    TransitionRecord, TzState,
};
use crate::{SimMs, Trust, UeId};

// ---------------------------------------------------------------------------
// Device records
// ---------------------------------------------------------------------------

/// Which AAA path vouched for a device's current trust.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthOrigin {
    Central,
    Local,
}

/// Per-device security bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub ue_id: UeId,
    pub attached: bool,
    pub trust: Trust,
    pub auth_origin: Option<AuthOrigin>,
    pub granted: BTreeSet<String>,
    pub last_auth_at: Option<SimMs>,
    /// Credential the device presents; checked by whichever AAA handles it.
    pub credential: String,
}

impl DeviceRecord {
    fn fresh(ue_id: UeId, credential: String) -> Self {
        DeviceRecord {
            ue_id,
            attached: true,
            trust: Trust::Untrusted,
            auth_origin: None,
            granted: BTreeSet::new(),
            last_auth_at: None,
            credential,
        }
    }

    fn drop_trust(&mut self) {
        self.trust = Trust::Untrusted;
        self.auth_origin = None;
        self.granted.clear();
    }
}

// ---------------------------------------------------------------------------
// Decisions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    GrantFull,
    GrantEmergencyOnly,
    Deny,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::GrantFull => "grant_full",
            Verdict::GrantEmergencyOnly => "grant_emergency_only",
            Verdict::Deny => "deny",
        }
    }
}

/// Which AAA the decision was routed through; `None` on the decision means
/// no AAA was consulted (pure policy answer or an interrupted attempt).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    CentralVaaa,
    LocalLaa,
}

/// The outcome of one access request, immutable once issued.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessDecision {
    pub ue_id: UeId,
    pub service: String,
    pub verdict: Verdict,
    pub route: Option<Route>,
    pub reason: String,
    /// Trust standing after the decision took effect.
    pub trust: Trust,
    /// Services granted by this decision (sorted).
    pub granted: Vec<String>,
    pub at: SimMs,
}

impl AccessDecision {
    fn report(&self) -> OperationReport {
        OperationReport {
            actor: AuditActor::ZoneManager,
            kind: AuditKind::AccessDecision,
            ue_id: self.ue_id.clone(),
            outcome: format!("{}:{}", self.verdict.as_str(), self.service),
        }
    }
}

// ---------------------------------------------------------------------------
// Re-authentication schedule
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReauthEntry {
    pub ue_id: UeId,
    pub disconnect_at: SimMs,
}

/// Pre-scheduled forced disconnections built on entry to the reconnecting
/// state. Covers exactly the devices trusted during the preceding
/// disconnection that are still attached and trusted; locally-authenticated
/// devices are flushed first (highest-risk credentials), then the rest in
/// ascending device order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReauthSchedule {
    pub built_at: SimMs,
    pub entries: Vec<ReauthEntry>,
}

// ---------------------------------------------------------------------------
// Configuration, errors, outcomes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneManagerConfig {
    /// How long the transient states are occupied before resolving.
    pub transient_dwell_ms: SimMs,
    /// Spacing between forced disconnections in the re-auth schedule.
    pub reauth_stagger_ms: SimMs,
}

impl Default for ZoneManagerConfig {
    fn default() -> Self {
        ZoneManagerConfig {
            transient_dwell_ms: 100,
            reauth_stagger_ms: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ZmError {
    /// The device is unknown or not attached.
    #[error("unknown or detached device {0}")]
    UnknownUe(UeId),
    /// The local path was selected but the agent cannot serve it.
    #[error("local authentication agent unavailable: {0}")]
    LaaInactive(LocalAccessError),
    /// A key was requested for a device that is not trusted.
    #[error("device {0} is not trusted")]
    NotTrusted(UeId),
}

/// Everything one state transition produced.
#[derive(Debug, Clone, Default)]
pub struct TransitionOutcome {
    pub record: Option<TransitionRecord>,
    /// Monitoring reports for the audit channel.
    pub reports: Vec<OperationReport>,
    /// Decisions issued as a side effect (demoted in-flight authentications).
    pub decisions: Vec<AccessDecision>,
    /// Devices whose trust was retained on entry to disconnecting.
    pub retained: Option<Vec<UeId>>,
    /// Schedule built on entry to reconnecting.
    pub schedule: Option<ReauthSchedule>,
    /// Requests parked during disconnecting, released on entry to lost.
    pub released: Vec<(UeId, String)>,
}

/// How an access request was disposed of.
#[derive(Debug, Clone, PartialEq)]
pub enum AccessOutcome {
    /// Decided on the spot.
    Decided {
        decision: AccessDecision,
        reports: Vec<OperationReport>,
        key: Option<(AsKeyToken, KeySource)>,
    },
    /// Handed to the central AAA; a reply will arrive asynchronously.
    PendingCentral { ue_id: UeId, service: String },
    /// Parked during the disconnecting state; replayed on entry to lost.
    Deferred { ue_id: UeId, service: String },
}

/// Where a session key token came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeySource {
    CentralAmf,
    LocalLaa,
}

#[derive(Debug, Clone)]
struct PendingAuth {
    service: String,
    #[allow(dead_code)]
    requested_at: SimMs,
}

// ---------------------------------------------------------------------------
// The manager
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ZoneManager {
    config: ZoneManagerConfig,
    tz_state: TzState,
    entered_at: SimMs,
    devices: BTreeMap<UeId, DeviceRecord>,
    /// In-flight central authentications awaiting a reply.
    pending_central: BTreeMap<UeId, PendingAuth>,
    /// Requests parked while the zone is disconnecting.
    deferred: Vec<(UeId, String)>,
    /// Devices trusted at any point during the current disconnection;
    /// the population of the next re-auth schedule.
    disconnection_trusted: BTreeSet<UeId>,
    history: Vec<TransitionRecord>,
    /// Classification that arrived while a transient state was occupied.
    pending_report: Option<Ec4Class>,
}

impl ZoneManager {
    pub fn new(config: ZoneManagerConfig) -> Self {
        ZoneManager {
            config,
            tz_state: TzState::Connected,
            entered_at: 0,
            devices: BTreeMap::new(),
            pending_central: BTreeMap::new(),
            deferred: Vec::new(),
            disconnection_trusted: BTreeSet::new(),
            history: Vec::new(),
            pending_report: None,
        }
    }

    pub fn config(&self) -> &ZoneManagerConfig {
        &self.config
    }

    pub fn tz_state(&self) -> TzState {
        self.tz_state
    }

    pub fn entered_at(&self) -> SimMs {
        self.entered_at
    }

    pub fn device(&self, ue_id: &UeId) -> Option<&DeviceRecord> {
        self.devices.get(ue_id)
    }

    pub fn devices(&self) -> impl Iterator<Item = &DeviceRecord> {
        self.devices.values()
    }

    pub fn history(&self) -> &[TransitionRecord] {
        &self.history
    }

    pub fn pending_central_count(&self) -> usize {
        self.pending_central.len()
    }

    // -- state transitions --------------------------------------------------

    /// Consume a link classification report. Reports identical to the
    /// current steady classification are no-ops; reports arriving while a
    /// transient state is occupied are stored and applied after resolution.
    pub fn on_ec4_report(&mut self, class: Ec4Class, now: SimMs) -> Vec<TransitionOutcome> {
        if self.tz_state.is_transient() {
            self.pending_report = Some(class);
            return Vec::new();
        }
        let next = next_state(self.tz_state, class).expect("steady state checked");
        if next == self.tz_state {
            return Vec::new();
        }
        vec![self.transition_to(next, now, TransitionCause::Ec4(class))]
    }

    /// Resolve the currently occupied transient state (the dwell timer
    /// fired), then apply any classification stored in the meantime.
    pub fn resolve_transient_now(&mut self, now: SimMs) -> Vec<TransitionOutcome> {
        let target = resolve_transient(self.tz_state);
        if target == self.tz_state {
            return Vec::new();
        }
        let mut outcomes = vec![self.transition_to(target, now, TransitionCause::TransientResolution)];
        if let Some(class) = self.pending_report.take() {
            outcomes.extend(self.on_ec4_report(class, now));
        }
        outcomes
    }

    fn transition_to(&mut self, to: TzState, now: SimMs, cause: TransitionCause) -> TransitionOutcome {
        debug_assert!(is_valid_transition(self.tz_state, to), "illegal edge");
        let record = TransitionRecord {
            from: self.tz_state,
            to,
            at: now,
            cause,
        };
        self.history.push(record.clone());
        self.tz_state = to;
        self.entered_at = now;

        let mut outcome = TransitionOutcome {
            record: Some(record),
            ..TransitionOutcome::default()
        };
        match to {
            TzState::Disconnecting => self.on_disconnect(now, &mut outcome),
            TzState::Lost => outcome.released = std::mem::take(&mut self.deferred),
            TzState::Reconnecting => self.on_reconnect(now, &mut outcome),
            TzState::Connected | TzState::WeaklyConnected => {}
        }
        outcome
    }

    /// Entry hook for the disconnecting state: retain trust for devices
    /// with a completed authentication, demote devices whose central
    /// authentication is still in flight.
    fn on_disconnect(&mut self, now: SimMs, outcome: &mut TransitionOutcome) {
        let interrupted: Vec<(UeId, PendingAuth)> = std::mem::take(&mut self.pending_central)
            .into_iter()
            .collect();
        for (ue_id, pending) in interrupted {
            if let Some(rec) = self.devices.get_mut(&ue_id) {
                if rec.trust == Trust::Trusted {
                    rec.drop_trust();
                    outcome.reports.push(OperationReport {
                        actor: AuditActor::ZoneManager,
                        kind: AuditKind::TrustChange,
                        ue_id: ue_id.clone(),
                        outcome: "untrusted:auth_interrupted".to_owned(),
                    });
                }
            }
            let decision = AccessDecision {
                ue_id: ue_id.clone(),
                service: pending.service,
                verdict: Verdict::Deny,
                route: None,
                reason: "central_auth_interrupted".to_owned(),
                trust: Trust::Untrusted,
                granted: Vec::new(),
                at: now,
            };
            outcome.reports.push(decision.report());
            outcome.decisions.push(decision);
        }

        let retained: Vec<UeId> = self
            .devices
            .values()
            .filter(|r| r.attached && r.trust == Trust::Trusted && r.auth_origin.is_some())
            .map(|r| r.ue_id.clone())
            .collect();
        self.disconnection_trusted = retained.iter().cloned().collect();
        outcome.retained = Some(retained);
    }

    /// Entry hook for the reconnecting state: build the forced re-auth
    /// schedule over the devices trusted during the disconnection that are
    /// still attached and trusted, then reset the accumulation.
    fn on_reconnect(&mut self, now: SimMs, outcome: &mut TransitionOutcome) {
        let mut local: Vec<UeId> = Vec::new();
        let mut central: Vec<UeId> = Vec::new();
        for ue_id in &self.disconnection_trusted {
            let Some(rec) = self.devices.get(ue_id) else {
                continue;
            };
            if !rec.attached || rec.trust != Trust::Trusted {
                continue;
            }
            match rec.auth_origin {
                Some(AuthOrigin::Local) => local.push(ue_id.clone()),
                Some(AuthOrigin::Central) => central.push(ue_id.clone()),
                None => {}
            }
        }
        // BTreeSet iteration already yields ascending device order.
        let entries = local
            .into_iter()
            .chain(central)
            .enumerate()
            .map(|(i, ue_id)| ReauthEntry {
                ue_id,
                disconnect_at: now + self.config.reauth_stagger_ms * (i as SimMs + 1),
            })
            .collect();
        self.disconnection_trusted.clear();
        outcome.schedule = Some(ReauthSchedule {
            built_at: now,
            entries,
        });
    }

    // -- attachment ---------------------------------------------------------

    /// A device attached (or re-attached). A returning device starts over
    /// untrusted unless its trust was never dropped.
    pub fn on_ue_attach(&mut self, ue_id: &UeId, credential: &str, _now: SimMs) {
        self.devices
            .entry(ue_id.clone())
            .and_modify(|rec| {
                rec.attached = true;
                rec.credential = credential.to_owned();
            })
            .or_insert_with(|| DeviceRecord::fresh(ue_id.clone(), credential.to_owned()));
    }

    /// A device detached; trusted devices lose their trust with it.
    pub fn on_ue_detach(&mut self, ue_id: &UeId, _now: SimMs) -> Vec<OperationReport> {
        self.pending_central.remove(ue_id);
        let Some(rec) = self.devices.get_mut(ue_id) else {
            return Vec::new();
        };
        rec.attached = false;
        if rec.trust == Trust::Trusted {
            rec.drop_trust();
            return vec![OperationReport {
                actor: AuditActor::ZoneManager,
                kind: AuditKind::TrustChange,
                ue_id: ue_id.clone(),
                outcome: "untrusted:detach".to_owned(),
            }];
        }
        Vec::new()
    }

    // -- access requests ----------------------------------------------------

    /// Route one access request. Connected-side states consult the central
    /// AAA, the lost state consults the local agent, and the disconnecting
    /// state parks the request until the zone settles in lost.
    pub fn handle_access_request(
        &mut self,
        ue_id: &UeId,
        service: &str,
        now: SimMs,
        es: &mut EmergencyServices,
        laa: &mut LocalAccess,
    ) -> Result<AccessOutcome, ZmError> {
        let attached = self
            .devices
            .get(ue_id)
            .map(|r| r.attached)
            .unwrap_or(false);
        if !attached {
            return Err(ZmError::UnknownUe(ue_id.clone()));
        }
        match self.tz_state {
            TzState::Disconnecting => {
                self.deferred.push((ue_id.clone(), service.to_owned()));
                Ok(AccessOutcome::Deferred {
                    ue_id: ue_id.clone(),
                    service: service.to_owned(),
                })
            }
            TzState::Connected | TzState::WeaklyConnected | TzState::Reconnecting => {
                Ok(self.connected_path(ue_id, service, now, es))
            }
            TzState::Lost => self.local_path(ue_id, service, now, es, laa),
        }
    }

    /// C/W/R: full grants ride on existing trust or a central round trip;
    /// the always-available emergency set never waits on either.
    fn connected_path(
        &mut self,
        ue_id: &UeId,
        service: &str,
        now: SimMs,
        es: &mut EmergencyServices,
    ) -> AccessOutcome {
        let rec = self.devices.get_mut(ue_id).expect("attachment checked");
        let policy = es.decide(service, rec.trust, now);

        if let Some(ref pd) = policy {
            if pd.verdict == PolicyVerdict::Inactive {
                return Self::decided(
                    AccessDecision {
                        ue_id: ue_id.clone(),
                        service: service.to_owned(),
                        verdict: Verdict::Deny,
                        route: None,
                        reason: "inactive_service".to_owned(),
                        trust: rec.trust,
                        granted: Vec::new(),
                        at: now,
                    },
                    None,
                );
            }
        }

        if rec.trust == Trust::Trusted {
            rec.granted.insert(service.to_owned());
            return Self::decided(
                AccessDecision {
                    ue_id: ue_id.clone(),
                    service: service.to_owned(),
                    verdict: Verdict::GrantFull,
                    route: Some(Route::CentralVaaa),
                    reason: "retained_trust".to_owned(),
                    trust: Trust::Trusted,
                    granted: vec![service.to_owned()],
                    at: now,
                },
                None,
            );
        }

        if let Some(pd) = policy {
            if !pd.requires_auth {
                return self.emergency_only(ue_id, service, now, es, None, "emergency_no_auth");
            }
        }

        self.pending_central.insert(
            ue_id.clone(),
            PendingAuth {
                service: service.to_owned(),
                requested_at: now,
            },
        );
        AccessOutcome::PendingCentral {
            ue_id: ue_id.clone(),
            service: service.to_owned(),
        }
    }

    /// L: the local agent authenticates against the synchronized store;
    /// failures fall back to the always-available emergency set.
    fn local_path(
        &mut self,
        ue_id: &UeId,
        service: &str,
        now: SimMs,
        es: &mut EmergencyServices,
        laa: &mut LocalAccess,
    ) -> Result<AccessOutcome, ZmError> {
        let rec = self.devices.get_mut(ue_id).expect("attachment checked");
        let policy = es.decide(service, rec.trust, now);

        if let Some(ref pd) = policy {
            if pd.verdict == PolicyVerdict::Inactive {
                return Ok(Self::decided(
                    AccessDecision {
                        ue_id: ue_id.clone(),
                        service: service.to_owned(),
                        verdict: Verdict::Deny,
                        route: None,
                        reason: "inactive_service".to_owned(),
                        trust: rec.trust,
                        granted: Vec::new(),
                        at: now,
                    },
                    None,
                ));
            }
        }

        if rec.trust == Trust::Trusted {
            rec.granted.insert(service.to_owned());
            return Ok(Self::decided(
                AccessDecision {
                    ue_id: ue_id.clone(),
                    service: service.to_owned(),
                    verdict: Verdict::GrantFull,
                    route: Some(Route::LocalLaa),
                    reason: "retained_trust".to_owned(),
                    trust: Trust::Trusted,
                    granted: vec![service.to_owned()],
                    at: now,
                },
                None,
            ));
        }

        if let Some(pd) = policy {
            if !pd.requires_auth {
                return Ok(self.emergency_only(ue_id, service, now, es, None, "emergency_no_auth"));
            }
        }

        // Untrusted device wanting more than the no-auth set: try the agent.
        let credential = self.devices.get(ue_id).expect("attachment checked").credential.clone();
        let (trust, auth_report) = laa
            .local_authenticate(ue_id, credential.as_bytes())
            .map_err(ZmError::LaaInactive)?;

        if trust == Trust::Trusted {
            let (token, key_report) = laa
                .derive_as_key(ue_id, KeyScopeRequest::As)
                .map_err(ZmError::LaaInactive)?;
            let rec = self.devices.get_mut(ue_id).expect("attachment checked");
            rec.trust = Trust::Trusted;
            rec.auth_origin = Some(AuthOrigin::Local);
            rec.last_auth_at = Some(now);
            rec.granted.insert(service.to_owned());
            self.disconnection_trusted.insert(ue_id.clone());
            let decision = AccessDecision {
                ue_id: ue_id.clone(),
                service: service.to_owned(),
                verdict: Verdict::GrantFull,
                route: Some(Route::LocalLaa),
                reason: "local_auth".to_owned(),
                trust: Trust::Trusted,
                granted: vec![service.to_owned()],
                at: now,
            };
            let report = decision.report();
            Ok(AccessOutcome::Decided {
                decision,
                reports: vec![auth_report, key_report, report],
                key: Some((token, KeySource::LocalLaa)),
            })
        } else {
            Ok(self.emergency_only(
                ue_id,
                service,
                now,
                es,
                Some((Route::LocalLaa, auth_report)),
                "local_auth_failed",
            ))
        }
    }

    /// Issue the emergency-only verdict: the granted set is exactly the
    /// always-available emergency services for the current state.
    fn emergency_only(
        &mut self,
        ue_id: &UeId,
        service: &str,
        now: SimMs,
        es: &mut EmergencyServices,
        routed: Option<(Route, OperationReport)>,
        reason: &str,
    ) -> AccessOutcome {
        let usable = es.usable_set(Trust::Untrusted, now);
        if let Some(pd) = es.decide(service, Trust::Untrusted, now) {
            if pd.verdict == PolicyVerdict::AllowRestricted {
                es.consume_restricted(ue_id, service, now);
            }
        }
        let rec = self.devices.get_mut(ue_id).expect("attachment checked");
        rec.granted.extend(usable.iter().cloned());
        let (route, mut reports) = match routed {
            Some((route, auth_report)) => (Some(route), vec![auth_report]),
            None => (None, Vec::new()),
        };
        let decision = AccessDecision {
            ue_id: ue_id.clone(),
            service: service.to_owned(),
            verdict: Verdict::GrantEmergencyOnly,
            route,
            reason: reason.to_owned(),
            trust: Trust::Untrusted,
            granted: usable.into_iter().collect(),
            at: now,
        };
        reports.push(decision.report());
        AccessOutcome::Decided {
            decision,
            reports,
            key: None,
        }
    }

    fn decided(decision: AccessDecision, key: Option<(AsKeyToken, KeySource)>) -> AccessOutcome {
        let report = decision.report();
        AccessOutcome::Decided {
            decision,
            reports: vec![report],
            key,
        }
    }

    /// The central AAA answered an in-flight authentication. Returns `None`
    /// for stale replies (request cancelled or device gone).
    pub fn on_central_auth_reply(
        &mut self,
        ue_id: &UeId,
        accepted: bool,
        token: Option<AsKeyToken>,
        now: SimMs,
    ) -> Option<AccessOutcome> {
        let pending = self.pending_central.remove(ue_id)?;
        let rec = self.devices.get_mut(ue_id)?;
        if !rec.attached {
            return None;
        }
        if accepted {
            rec.trust = Trust::Trusted;
            rec.auth_origin = Some(AuthOrigin::Central);
            rec.last_auth_at = Some(now);
            rec.granted.insert(pending.service.clone());
            let decision = AccessDecision {
                ue_id: ue_id.clone(),
                service: pending.service.clone(),
                verdict: Verdict::GrantFull,
                route: Some(Route::CentralVaaa),
                reason: "central_accept".to_owned(),
                trust: Trust::Trusted,
                granted: vec![pending.service],
                at: now,
            };
            let report = decision.report();
            Some(AccessOutcome::Decided {
                decision,
                reports: vec![report],
                key: token.map(|t| (t, KeySource::CentralAmf)),
            })
        } else {
            let decision = AccessDecision {
                ue_id: ue_id.clone(),
                service: pending.service,
                verdict: Verdict::Deny,
                route: Some(Route::CentralVaaa),
                reason: "central_reject".to_owned(),
                trust: Trust::Untrusted,
                granted: Vec::new(),
                at: now,
            };
            let report = decision.report();
            Some(AccessOutcome::Decided {
                decision,
                reports: vec![report],
                key: None,
            })
        }
    }

    // -- forced re-authentication -------------------------------------------

    /// Execute one re-auth schedule entry: forcibly clear the device's
    /// trust and grants (it stays attached and must re-authenticate
    /// centrally). Entries for devices that detached or already lost trust
    /// are skipped.
    pub fn execute_reauth_entry(&mut self, ue_id: &UeId, _now: SimMs) -> Option<OperationReport> {
        let rec = self.devices.get_mut(ue_id)?;
        if !rec.attached || rec.trust != Trust::Trusted {
            return None;
        }
        rec.drop_trust();
        Some(OperationReport {
            actor: AuditActor::ZoneManager,
            kind: AuditKind::ForcedDisconnect,
            ue_id: ue_id.clone(),
            outcome: "reauth_required".to_owned(),
        })
    }

    /// Fault hook: corrupt the device table by adding a grant directly,
    /// bypassing every decision path. Exists so harnesses can seed a
    /// policy violation and prove the invariant checker catches it.
    /// Returns false when the device is unknown.
    pub fn inject_grant(&mut self, ue_id: &UeId, service: &str) -> bool {
        match self.devices.get_mut(ue_id) {
            Some(rec) => {
                rec.granted.insert(service.to_owned());
                true
            }
            None => false,
        }
    }

    /// Which key path serves a trusted device in the current state.
    pub fn key_source_for(&self, ue_id: &UeId) -> Result<KeySource, ZmError> {
        let rec = self
            .devices
            .get(ue_id)
            .filter(|r| r.attached)
            .ok_or_else(|| ZmError::UnknownUe(ue_id.clone()))?;
        if rec.trust != Trust::Trusted {
            return Err(ZmError::NotTrusted(ue_id.clone()));
        }
        Ok(match self.tz_state {
            TzState::Connected | TzState::WeaklyConnected | TzState::Reconnecting => {
                KeySource::CentralAmf
            }
            TzState::Lost | TzState::Disconnecting => KeySource::LocalLaa,
        })
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
