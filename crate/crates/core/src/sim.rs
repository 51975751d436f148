//! The deterministic discrete-event harness that wires every entity
//! together and executes a scenario.
//!
//! One binary heap of `(time, insertion-id)`-ordered work items drives the
//! run: scripted inputs, poll and sync ticks, transient-state resolution
//! timers, message deliveries, forced re-authentications, audit delivery
//! retries, and fault injections. Scripted inputs are seeded first so they
//! sort ahead of same-instant internal work. All randomness comes from one
//! seeded stream and is consumed only by the weak-link drop lottery, so a
//! `(scenario, seed)` pair fully determines the byte-level trace.
//!
//! Transport model: traffic between edge entities is instantaneous and
//! never lost. Traffic crossing the edge-to-central link is subject to the
//! ground-truth link: while unreachable it is dropped (`partition` at send,
//! `lost_in_flight` at delivery); while degraded it pays a latency
//! multiplier and a drop lottery that spares probe traffic (the
//! measurement itself) and is gentler to traffic classes the monitor has
//! elevated. The zone's *windowed* state decides behaviour (routing,
//! syncing, audit activation); the *instantaneous* link decides transport.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audit::{AuditCenter, AuditRecord, OperationReport, SecurityAudit};
use crate::cccm::{priority_hints, Cccm, FunctionClass, MonitorOutcome, Priority, ProbeReading, ProbeTarget};
use crate::emergency::{standard_catalog, EmergencyServices, RestrictedRate};
use crate::interconnect::{EntityKind, Envelope, Interconnect, InterfaceName, MessagePayload, Scheduled};
use crate::local_access::{credential_digest, AsKeyToken, KeyScope, LocalAccess, SubscriberProfile};
use crate::metrics::{compute_metrics, RunMetrics};
use crate::scenario::{LinkSpec, Scenario, ScenarioConfig, ScenarioEvent};
use crate::state_machine::{is_valid_transition, Ec4Class, TransitionCause, TzState};
use crate::trace::{
    channel_crosses_central, AuditBody, DecisionBody, DropBody, EnvelopeBody, MetricBody,
    TraceBody, TraceCategory, TraceEvent, TransitionBody, AUDIT_ACK_CHANNEL, AUDIT_PUSH_CHANNEL,
    CENTRAL_AUTH_CHANNEL,
};
use crate::zone_manager::{
    AccessDecision, AccessOutcome, DeviceRecord, KeySource, ReauthSchedule, Route,
    TransitionOutcome, Verdict, ZoneManager,
};
use crate::{SimMs, Trust, UeId};

// ---------------------------------------------------------------------------
// Results and errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invariant `{name}` violated at {at}ms (trace seq {seq}): {detail}")]
    InvariantViolation {
        name: String,
        at: SimMs,
        seq: u64,
        detail: String,
    },
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceEvent>,
    pub metrics: RunMetrics,
    pub final_state: FinalState,
}

/// End-of-run snapshot of the world, for assertions and reporting.
#[derive(Debug, Clone)]
pub struct FinalState {
    pub tz_state: TzState,
    pub devices: Vec<DeviceRecord>,
    /// Every re-auth schedule built during the run, in order.
    pub schedules: Vec<ReauthSchedule>,
    pub laa_issued_tokens: usize,
    /// Central audit storage: at most one record per `(epoch, seq)`.
    pub center_accepted: BTreeMap<(u64, u64), AuditRecord>,
    /// Every arrival at the center, duplicates included.
    pub center_receive_log: Vec<(u64, u64)>,
    pub sa_active: bool,
    pub sa_epoch: u64,
}

/// Central key function: derives the access-stratum token handed back on a
/// successful central authentication. Domain-separated from the local
/// derivation so the two paths can never mint colliding tokens.
pub fn central_as_token(credential_digest: &[u8; 32], counter: u64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"amf-as-key");
    hasher.update(credential_digest);
    hasher.update(counter.to_be_bytes());
    hasher.finalize().into()
}

/// Instantaneous classification of the ground-truth link, using the same
/// thresholds the monitor applies to its windowed samples.
fn link_class(link: &LinkSpec, config: &ScenarioConfig) -> Ec4Class {
    if !link.reachable {
        Ec4Class::Lost
    } else if link.loss_rate > config.weak_loss_threshold
        || (link.latency_ms as f64) > config.weak_latency_threshold_ms
        || link.throughput < config.weak_throughput_threshold
    {
        Ec4Class::Weak
    } else {
        Ec4Class::Healthy
    }
}

// ---------------------------------------------------------------------------
// Work queue
// ---------------------------------------------------------------------------

#[derive(Debug)]
struct Item {
    at: SimMs,
    id: u64,
    action: Action,
}

impl PartialEq for Item {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.id == other.id
    }
}

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.id).cmp(&(other.at, other.id))
    }
}

#[derive(Debug)]
enum Action {
    /// A scripted input (index into the scenario's event list).
    Input(usize),
    PollTick,
    SyncTick,
    ResolveTransient { entered_at: SimMs },
    Deliver(Scheduled),
    PseudoDeliver(PseudoDelivery),
    ReauthExecute { ue_id: UeId },
    AuditRetry,
    InjectFault,
}

/// Messages on the harness transports that are not one of the twelve
/// typed interfaces: central authentication and the audit push/ack path.
#[derive(Debug)]
enum PseudoDelivery {
    AuthRequest { ue_id: UeId, credential: String },
    AuthReject { ue_id: UeId },
    AuditPush { records: Vec<AuditRecord> },
    AuditAck { epoch: u64, up_to_seq: u64 },
}

fn pseudo_meta(delivery: &PseudoDelivery) -> (&'static str, &'static str, &'static str, &'static str) {
    match delivery {
        PseudoDelivery::AuthRequest { .. } => (CENTRAL_AUTH_CHANNEL, "zm", "amf", "auth_request"),
        PseudoDelivery::AuthReject { .. } => (CENTRAL_AUTH_CHANNEL, "amf", "zm", "auth_reject"),
        PseudoDelivery::AuditPush { .. } => (AUDIT_PUSH_CHANNEL, "sa", "audit-center", "audit_batch"),
        PseudoDelivery::AuditAck { .. } => (AUDIT_ACK_CHANNEL, "audit-center", "sa", "audit_ack"),
    }
}

fn pseudo_detail(delivery: &PseudoDelivery) -> BTreeMap<String, String> {
    let mut detail = BTreeMap::new();
    match delivery {
        PseudoDelivery::AuthRequest { ue_id, .. } | PseudoDelivery::AuthReject { ue_id } => {
            detail.insert("ue_id".into(), ue_id.to_string());
        }
        PseudoDelivery::AuditPush { records } => {
            detail.insert("count".into(), records.len().to_string());
            if let Some(first) = records.first() {
                detail.insert("epoch".into(), first.epoch.to_string());
            }
        }
        PseudoDelivery::AuditAck { epoch, up_to_seq } => {
            detail.insert("epoch".into(), epoch.to_string());
            detail.insert("up_to_seq".into(), up_to_seq.to_string());
        }
    }
    detail
}

// ---------------------------------------------------------------------------
// The world
// ---------------------------------------------------------------------------

struct World {
    config: ScenarioConfig,
    events: Vec<ScenarioEvent>,
    lss_ids: Vec<String>,
    catalog_names: BTreeSet<String>,

    rng: ChaCha8Rng,
    link: LinkSpec,

    zm: ZoneManager,
    cccm: Cccm,
    es: EmergencyServices,
    laa: LocalAccess,
    sa: SecurityAudit,
    bus: Interconnect,

    /// Central side: subscriber directory, key-function counters, audit center.
    directory: BTreeMap<String, SubscriberProfile>,
    amf_counters: BTreeMap<String, u64>,
    center: AuditCenter,

    /// Probe round id -> send time, for round-trip measurement.
    round_sent: BTreeMap<u64, SimMs>,
    /// An audit retry tick is already queued.
    retry_armed: bool,

    schedules: Vec<ReauthSchedule>,
    trace: Vec<TraceEvent>,
    seq: u64,
    queue: BinaryHeap<Reverse<Item>>,
    next_id: u64,
}

impl World {
    fn new(scenario: &Scenario, seed: u64) -> Self {
        let config = scenario.config.clone();
        let mut directory = BTreeMap::new();
        for sub in &scenario.subscribers {
            directory.insert(sub.id.clone(), sub.profile());
        }
        let lss_profiles: Vec<SubscriberProfile> = scenario
            .lss
            .iter()
            .filter_map(|id| directory.get(id).cloned())
            .collect();
        let mut center = AuditCenter::new();
        center.drop_next_acks(config.faults.audit_ack_drops);

        let mut world = World {
            rng: ChaCha8Rng::seed_from_u64(seed),
            link: config.initial_link,
            zm: ZoneManager::new(config.zm_config()),
            cccm: Cccm::new(config.cccm_config()),
            es: EmergencyServices::standard(RestrictedRate::default()),
            laa: LocalAccess::new(lss_profiles),
            sa: SecurityAudit::new(),
            bus: Interconnect::new(),
            directory,
            amf_counters: BTreeMap::new(),
            center,
            round_sent: BTreeMap::new(),
            retry_armed: false,
            schedules: Vec::new(),
            trace: Vec::new(),
            seq: 0,
            queue: BinaryHeap::new(),
            next_id: 0,
            events: scenario.events.clone(),
            lss_ids: scenario.lss.clone(),
            catalog_names: standard_catalog().into_iter().map(|s| s.name).collect(),
            config,
        };

        for index in 0..world.events.len() {
            world.push(world.events[index].at(), Action::Input(index));
        }
        world.push(0, Action::PollTick);
        world.push(world.config.sync_period_ms, Action::SyncTick);
        if let Some(at) = world.config.faults.inject_unauthorized_grant_at_ms {
            world.push(at, Action::InjectFault);
        }
        world
    }

    // -- queue and trace plumbing -------------------------------------------

    fn push(&mut self, at: SimMs, action: Action) {
        let id = self.next_id;
        self.next_id += 1;
        self.queue.push(Reverse(Item { at, id, action }));
    }

    fn pop_due(&mut self, until: SimMs) -> Option<Item> {
        match self.queue.peek() {
            Some(Reverse(item)) if item.at <= until => self.queue.pop().map(|Reverse(i)| i),
            _ => None,
        }
    }

    fn emit(&mut self, at: SimMs, category: TraceCategory, body: TraceBody) {
        let seq = self.seq;
        self.seq += 1;
        self.trace.push(TraceEvent {
            at,
            seq,
            category,
            body,
        });
    }

    fn metric(&mut self, at: SimMs, name: &str, pairs: Vec<(&'static str, String)>) {
        let detail = pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect();
        self.emit(
            at,
            TraceCategory::Metric,
            TraceBody::Metric(MetricBody {
                name: name.to_owned(),
                detail,
            }),
        );
    }

    fn log_link(&mut self, now: SimMs) {
        let class = self.ground_class();
        let link = self.link;
        self.metric(
            now,
            "link_quality",
            vec![
                ("class", class.as_str().to_owned()),
                ("latency_ms", link.latency_ms.to_string()),
                ("loss_rate", link.loss_rate.to_string()),
                ("reachable", link.reachable.to_string()),
                ("throughput", link.throughput.to_string()),
            ],
        );
    }

    // -- transport ----------------------------------------------------------

    fn ground_class(&self) -> Ec4Class {
        link_class(&self.link, &self.config)
    }

    fn central_latency(&self) -> SimMs {
        let factor = if self.ground_class() == Ec4Class::Weak {
            self.config.weak_latency_factor
        } else {
            1
        };
        self.link.latency_ms * factor
    }

    /// Drop probability for one central-crossing message on a weak link,
    /// honouring the monitor's current priority hints.
    fn drop_probability(&self, class: FunctionClass) -> f64 {
        let elevated = priority_hints(self.zm.tz_state())
            .iter()
            .any(|h| h.function_class == class && h.priority == Priority::High);
        if elevated {
            self.config.weak_drop_probability_high
        } else {
            self.config.weak_drop_probability
        }
    }

    fn log_envelope(&mut self, envelope: &Envelope, receiver: EntityKind, now: SimMs) {
        self.emit(
            now,
            TraceCategory::Envelope,
            TraceBody::Envelope(EnvelopeBody {
                channel: envelope.interface.as_str().to_owned(),
                sender: envelope.sender.as_str().to_owned(),
                receiver: receiver.as_str().to_owned(),
                payload: envelope.payload.kind().to_owned(),
                detail: payload_detail(&envelope.payload),
            }),
        );
    }

    fn log_interface_drop(&mut self, envelope: &Envelope, receiver: EntityKind, reason: &str, now: SimMs) {
        self.emit(
            now,
            TraceCategory::Drop,
            TraceBody::Drop(DropBody {
                channel: envelope.interface.as_str().to_owned(),
                sender: envelope.sender.as_str().to_owned(),
                receiver: receiver.as_str().to_owned(),
                payload: envelope.payload.kind().to_owned(),
                reason: reason.to_owned(),
            }),
        );
    }

    /// Send one typed envelope. Edge-local interfaces deliver immediately;
    /// central-crossing ones face the transport model and a delivery delay.
    fn send_interface(
        &mut self,
        interface: InterfaceName,
        sender: EntityKind,
        payload: MessagePayload,
        now: SimMs,
    ) {
        let envelope = Envelope {
            interface,
            sender,
            payload,
            sent_at: now,
        };
        let receiver = self
            .bus
            .validate(&envelope)
            .expect("harness only uses legal routes");

        if interface.crosses_central() {
            match self.ground_class() {
                Ec4Class::Lost => {
                    self.log_interface_drop(&envelope, receiver, "partition", now);
                    return;
                }
                Ec4Class::Weak if !envelope.payload.is_probe() => {
                    let p = self.drop_probability(envelope.payload.function_class());
                    if self.rng.gen::<f64>() < p {
                        self.log_interface_drop(&envelope, receiver, "weak_loss", now);
                        return;
                    }
                }
                _ => {}
            }
            let latency = self.central_latency();
            let scheduled = self
                .bus
                .schedule(envelope, latency)
                .expect("validated above");
            self.push(scheduled.deliver_at, Action::Deliver(scheduled));
        } else {
            self.log_envelope(&envelope, receiver, now);
            self.dispatch_payload(envelope.sender, receiver, envelope.payload, now);
        }
    }

    fn deliver_scheduled(&mut self, scheduled: Scheduled, now: SimMs) {
        let Scheduled {
            envelope, receiver, ..
        } = scheduled;
        if envelope.interface.crosses_central() && self.ground_class() == Ec4Class::Lost {
            self.log_interface_drop(&envelope, receiver, "lost_in_flight", now);
            return;
        }
        self.log_envelope(&envelope, receiver, now);
        self.dispatch_payload(envelope.sender, receiver, envelope.payload, now);
    }

    fn send_pseudo(&mut self, delivery: PseudoDelivery, class: FunctionClass, now: SimMs) {
        let (channel, sender, receiver, kind) = pseudo_meta(&delivery);
        let dropped = match self.ground_class() {
            Ec4Class::Lost => Some("partition"),
            Ec4Class::Weak => {
                let p = self.drop_probability(class);
                (self.rng.gen::<f64>() < p).then_some("weak_loss")
            }
            Ec4Class::Healthy => None,
        };
        if let Some(reason) = dropped {
            self.emit(
                now,
                TraceCategory::Drop,
                TraceBody::Drop(DropBody {
                    channel: channel.to_owned(),
                    sender: sender.to_owned(),
                    receiver: receiver.to_owned(),
                    payload: kind.to_owned(),
                    reason: reason.to_owned(),
                }),
            );
            return;
        }
        let deliver_at = now + self.central_latency();
        self.push(deliver_at, Action::PseudoDeliver(delivery));
    }

    fn deliver_pseudo(&mut self, delivery: PseudoDelivery, now: SimMs) {
        let (channel, sender, receiver, kind) = pseudo_meta(&delivery);
        if self.ground_class() == Ec4Class::Lost {
            self.emit(
                now,
                TraceCategory::Drop,
                TraceBody::Drop(DropBody {
                    channel: channel.to_owned(),
                    sender: sender.to_owned(),
                    receiver: receiver.to_owned(),
                    payload: kind.to_owned(),
                    reason: "lost_in_flight".to_owned(),
                }),
            );
            return;
        }
        self.emit(
            now,
            TraceCategory::Envelope,
            TraceBody::Envelope(EnvelopeBody {
                channel: channel.to_owned(),
                sender: sender.to_owned(),
                receiver: receiver.to_owned(),
                payload: kind.to_owned(),
                detail: pseudo_detail(&delivery),
            }),
        );
        match delivery {
            PseudoDelivery::AuthRequest { ue_id, credential } => {
                self.central_authenticate(&ue_id, &credential, now);
            }
            PseudoDelivery::AuthReject { ue_id } => {
                if let Some(outcome) = self.zm.on_central_auth_reply(&ue_id, false, None, now) {
                    self.apply_access_outcome(outcome, now);
                }
            }
            PseudoDelivery::AuditPush { records } => match self.center.receive(&records) {
                Some(ack) => self.send_pseudo(
                    PseudoDelivery::AuditAck {
                        epoch: ack.epoch,
                        up_to_seq: ack.up_to_seq,
                    },
                    FunctionClass::Other,
                    now,
                ),
                None => self.emit(
                    now,
                    TraceCategory::Drop,
                    TraceBody::Drop(DropBody {
                        channel: AUDIT_ACK_CHANNEL.to_owned(),
                        sender: "audit-center".to_owned(),
                        receiver: "sa".to_owned(),
                        payload: "audit_ack".to_owned(),
                        reason: "fault_injected".to_owned(),
                    }),
                ),
            },
            PseudoDelivery::AuditAck { epoch, up_to_seq } => {
                let was_active = self.sa.is_active();
                self.sa.on_push_ack(epoch, up_to_seq);
                if was_active && !self.sa.is_active() {
                    let epoch = self.sa.epoch();
                    self.metric(now, "audit_inactive", vec![("epoch", epoch.to_string())]);
                }
            }
        }
    }

    // -- entity dispatch ----------------------------------------------------

    fn dispatch_payload(
        &mut self,
        sender: EntityKind,
        receiver: EntityKind,
        payload: MessagePayload,
        now: SimMs,
    ) {
        match (receiver, payload) {
            (EntityKind::ZoneManager, MessagePayload::Ec4Report { class }) => {
                for outcome in self.zm.on_ec4_report(class, now) {
                    self.apply_transition(outcome, now);
                }
            }
            (EntityKind::ZoneManager, MessagePayload::KeyToken(token)) => {
                let ue_id = token.ue_id.clone();
                if let Some(outcome) = self.zm.on_central_auth_reply(&ue_id, true, Some(token), now)
                {
                    self.apply_access_outcome(outcome, now);
                }
            }
            (EntityKind::ZoneManager, MessagePayload::DetachNotice { ue_id }) => {
                for report in self.zm.on_ue_detach(&ue_id, now) {
                    self.route_report(report, now);
                }
            }
            (EntityKind::ZoneManager, MessagePayload::AccessRequest { ue_id, service }) => {
                self.handle_access(&ue_id, &service, now);
            }
            (EntityKind::Cccm, MessagePayload::StateTransition { to }) => {
                self.cccm.set_state(to);
            }
            (EntityKind::Cccm, MessagePayload::DisasterAlarm(event)) => {
                self.cccm.note_disaster(event);
            }
            (EntityKind::Cccm, MessagePayload::ProbeResponse { round_id, reading }) => {
                let target = if sender == EntityKind::Mano {
                    ProbeTarget::Orchestrator
                } else {
                    ProbeTarget::Oss
                };
                let outcome = self.cccm.on_probe_response(round_id, target, reading, now);
                self.handle_monitor(outcome, now);
            }
            (EntityKind::EmergencyServices, MessagePayload::StateTransition { to }) => {
                self.es.set_state(to);
            }
            (EntityKind::EmergencyServices, MessagePayload::DisasterAlarm(event)) => {
                if let Some(first_time) = self.es.on_disaster(event) {
                    self.send_interface(
                        InterfaceName::EsCm,
                        EntityKind::EmergencyServices,
                        MessagePayload::DisasterAlarm(first_time),
                        now,
                    );
                }
            }
            (EntityKind::LocalAuth, MessagePayload::StateTransition { to }) => {
                self.laa.set_activation(to);
            }
            (EntityKind::LocalAuth, MessagePayload::ProfileSnapshot { profiles }) => {
                match self.laa.sync_profiles(&profiles, now) {
                    Ok(report) => self.metric(
                        now,
                        "profile_sync",
                        vec![
                            ("applied", report.applied.to_string()),
                            ("skipped", report.skipped.to_string()),
                        ],
                    ),
                    Err(err) => self.metric(
                        now,
                        "profile_sync_refused",
                        vec![("reason", err.to_string())],
                    ),
                }
            }
            (EntityKind::SecurityAudit, MessagePayload::OperationReport(report)) => {
                if let Some(record) = self.sa.handle_report(&report, now) {
                    self.emit(
                        now,
                        TraceCategory::Audit,
                        TraceBody::Audit(AuditBody {
                            epoch: record.epoch,
                            seq: record.seq,
                            actor: record.actor,
                            kind: record.kind,
                            ue_id: record.ue_id,
                            outcome: record.outcome,
                        }),
                    );
                }
            }
            (EntityKind::Mano, MessagePayload::ProbeRequest { round_id, .. }) => {
                let reading = self.probe_reading(round_id, now);
                self.send_interface(
                    InterfaceName::CmMa,
                    EntityKind::Mano,
                    MessagePayload::ProbeResponse { round_id, reading },
                    now,
                );
            }
            (EntityKind::Oss, MessagePayload::ProbeRequest { round_id, .. }) => {
                let reading = self.probe_reading(round_id, now);
                self.send_interface(
                    InterfaceName::OsCm,
                    EntityKind::Oss,
                    MessagePayload::ProbeResponse { round_id, reading },
                    now,
                );
            }
            // Devices and the diagnosis sink have no behaviour; delivery
            // (already logged) is the effect.
            (EntityKind::Ue, _) | (EntityKind::Mano, MessagePayload::Diagnosis(_)) => {}
            (receiver, payload) => {
                unreachable!("no handler for {payload:?} at {receiver:?}")
            }
        }
    }

    /// The management vantage points answer a probe with the current link
    /// figures; the reported latency is the measured round trip.
    fn probe_reading(&self, round_id: u64, now: SimMs) -> ProbeReading {
        let sent = self.round_sent.get(&round_id).copied().unwrap_or(now);
        ProbeReading {
            loss_rate: self.link.loss_rate,
            latency_ms: 2 * (now - sent),
            throughput: self.link.throughput,
        }
    }

    // -- monitor ------------------------------------------------------------

    fn handle_monitor(&mut self, outcome: MonitorOutcome, now: SimMs) {
        if let Some(class) = outcome.report {
            self.send_interface(
                InterfaceName::CmZm,
                EntityKind::Cccm,
                MessagePayload::Ec4Report { class },
                now,
            );
        }
        if let Some(diagnosis) = outcome.diagnosis {
            self.send_interface(
                InterfaceName::CmMa,
                EntityKind::Cccm,
                MessagePayload::Diagnosis(diagnosis),
                now,
            );
        }
        if let Some(round_id) = outcome.probes {
            self.round_sent.insert(round_id, now);
            self.send_interface(
                InterfaceName::CmMa,
                EntityKind::Cccm,
                MessagePayload::ProbeRequest {
                    round_id,
                    target: ProbeTarget::Orchestrator,
                },
                now,
            );
            self.send_interface(
                InterfaceName::OsCm,
                EntityKind::Cccm,
                MessagePayload::ProbeRequest {
                    round_id,
                    target: ProbeTarget::Oss,
                },
                now,
            );
        }
    }

    // -- transitions ----------------------------------------------------------

    fn apply_transition(&mut self, outcome: TransitionOutcome, now: SimMs) {
        if let Some(record) = outcome.record.clone() {
            self.emit(
                now,
                TraceCategory::Transition,
                TraceBody::Transition(TransitionBody {
                    from: record.from,
                    to: record.to,
                    cause: record.cause,
                }),
            );
            // State broadcast to the peers that track it over the bus.
            for (interface, kind) in [
                (InterfaceName::CmZm, EntityKind::ZoneManager),
                (InterfaceName::EsZm, EntityKind::ZoneManager),
                (InterfaceName::ZmLa, EntityKind::ZoneManager),
            ] {
                self.send_interface(
                    interface,
                    kind,
                    MessagePayload::StateTransition { to: record.to },
                    now,
                );
            }
            // The audit recorder is co-located with the coordinator and
            // follows the state directly.
            let was_active = self.sa.is_active();
            self.sa.set_active(record.to);
            if self.sa.is_active() != was_active {
                let name = if self.sa.is_active() {
                    "audit_active"
                } else {
                    "audit_inactive"
                };
                let epoch = self.sa.epoch();
                self.metric(now, name, vec![("epoch", epoch.to_string())]);
            }
            if matches!(record.to, TzState::Reconnecting | TzState::Connected) {
                self.send_audit_push(now);
            }
            if record.to.is_transient() {
                self.push(
                    now + self.config.transient_dwell_ms,
                    Action::ResolveTransient { entered_at: now },
                );
            }
        }
        for report in outcome.reports {
            self.route_report(report, now);
        }
        for decision in outcome.decisions {
            self.issue_decision(&decision, now);
        }
        if let Some(retained) = outcome.retained {
            let devices = retained
                .iter()
                .map(UeId::to_string)
                .collect::<Vec<_>>()
                .join(",");
            self.metric(
                now,
                "disconnect_retention",
                vec![
                    ("count", retained.len().to_string()),
                    ("devices", devices),
                ],
            );
        }
        if let Some(schedule) = outcome.schedule {
            let entries = schedule
                .entries
                .iter()
                .map(|e| format!("{}@{}", e.ue_id, e.disconnect_at))
                .collect::<Vec<_>>()
                .join(",");
            self.metric(now, "reauth_schedule", vec![("entries", entries)]);
            for entry in &schedule.entries {
                self.push(
                    entry.disconnect_at,
                    Action::ReauthExecute {
                        ue_id: entry.ue_id.clone(),
                    },
                );
            }
            self.schedules.push(schedule);
        }
        // Parked requests replay only after the state broadcast above, so
        // the local agent is already active when they land.
        for (ue_id, service) in outcome.released {
            self.handle_access(&ue_id, &service, now);
        }
    }

    // -- access -------------------------------------------------------------

    fn handle_access(&mut self, ue_id: &UeId, service: &str, now: SimMs) {
        match self
            .zm
            .handle_access_request(ue_id, service, now, &mut self.es, &mut self.laa)
        {
            Ok(outcome) => self.apply_access_outcome(outcome, now),
            Err(err) => self.metric(
                now,
                "rejected_request",
                vec![
                    ("ue_id", ue_id.to_string()),
                    ("service", service.to_owned()),
                    ("reason", err.to_string()),
                ],
            ),
        }
    }

    fn apply_access_outcome(&mut self, outcome: AccessOutcome, now: SimMs) {
        match outcome {
            AccessOutcome::Decided {
                decision,
                reports,
                key,
            } => {
                self.issue_decision(&decision, now);
                for report in reports {
                    self.route_report(report, now);
                }
                if let Some((token, source)) = key {
                    if source == KeySource::LocalLaa {
                        self.send_interface(
                            InterfaceName::ZmLa,
                            EntityKind::LocalAuth,
                            MessagePayload::KeyToken(token.clone()),
                            now,
                        );
                    }
                    self.send_interface(
                        InterfaceName::ZmUe,
                        EntityKind::ZoneManager,
                        MessagePayload::AsSecurityMode {
                            ue_id: token.ue_id.clone(),
                            token_fingerprint: token.fingerprint(),
                        },
                        now,
                    );
                }
            }
            AccessOutcome::PendingCentral { ue_id, .. } => {
                let credential = self
                    .zm
                    .device(&ue_id)
                    .map(|r| r.credential.clone())
                    .unwrap_or_default();
                self.send_pseudo(
                    PseudoDelivery::AuthRequest { ue_id, credential },
                    FunctionClass::Authentication,
                    now,
                );
            }
            AccessOutcome::Deferred { ue_id, service } => {
                self.metric(
                    now,
                    "deferred_request",
                    vec![("ue_id", ue_id.to_string()), ("service", service)],
                );
            }
        }
    }

    fn issue_decision(&mut self, decision: &AccessDecision, now: SimMs) {
        self.emit(
            now,
            TraceCategory::Decision,
            TraceBody::Decision(DecisionBody {
                ue_id: decision.ue_id.clone(),
                service: decision.service.clone(),
                verdict: decision.verdict,
                route: decision.route,
                reason: decision.reason.clone(),
                trust: decision.trust,
                granted: decision.granted.clone(),
            }),
        );
        self.send_interface(
            InterfaceName::ZmUe,
            EntityKind::ZoneManager,
            MessagePayload::AccessResponse(decision.clone()),
            now,
        );
    }

    fn route_report(&mut self, report: OperationReport, now: SimMs) {
        let (interface, sender) = match report.actor {
            crate::audit::AuditActor::ZoneManager => {
                (InterfaceName::ZmSa, EntityKind::ZoneManager)
            }
            crate::audit::AuditActor::LocalAuth => (InterfaceName::LaSa, EntityKind::LocalAuth),
        };
        self.send_interface(interface, sender, MessagePayload::OperationReport(report), now);
    }

    /// The key function checks the directory and either mints a token
    /// (returned over the typed key interface) or rejects.
    fn central_authenticate(&mut self, ue_id: &UeId, credential: &str, now: SimMs) {
        let accepted = self
            .directory
            .get(ue_id.as_str())
            .map(|p| p.credential_digest == credential_digest(credential.as_bytes()))
            .unwrap_or(false);
        if accepted {
            let digest = self.directory[ue_id.as_str()].credential_digest;
            let counter_slot = self.amf_counters.entry(ue_id.to_string()).or_insert(0);
            let counter = *counter_slot;
            *counter_slot += 1;
            let token = AsKeyToken {
                ue_id: ue_id.clone(),
                scope: KeyScope::As,
                counter,
                token: central_as_token(&digest, counter),
            };
            self.send_interface(
                InterfaceName::MeZm,
                EntityKind::Amf,
                MessagePayload::KeyToken(token),
                now,
            );
        } else {
            self.send_pseudo(
                PseudoDelivery::AuthReject {
                    ue_id: ue_id.clone(),
                },
                FunctionClass::Authentication,
                now,
            );
        }
    }

    // -- periodic work ------------------------------------------------------

    fn sync_tick(&mut self, now: SimMs) {
        if self.zm.tz_state() != TzState::Connected {
            return;
        }
        let profiles: Vec<SubscriberProfile> = self
            .lss_ids
            .iter()
            .filter_map(|id| self.directory.get(id).cloned())
            .collect();
        if profiles.is_empty() {
            return;
        }
        self.send_interface(
            InterfaceName::LaLs,
            EntityKind::Lss,
            MessagePayload::ProfileSnapshot { profiles },
            now,
        );
    }

    fn send_audit_push(&mut self, now: SimMs) {
        let records = self.sa.undelivered();
        if records.is_empty() {
            return;
        }
        self.send_pseudo(
            PseudoDelivery::AuditPush { records },
            FunctionClass::Other,
            now,
        );
        if !self.retry_armed {
            self.retry_armed = true;
            self.push(now + self.config.audit_retry_ms, Action::AuditRetry);
        }
    }

    fn audit_retry(&mut self, now: SimMs) {
        self.retry_armed = false;
        if self.sa.is_active()
            && !self.sa.fully_delivered()
            && matches!(
                self.zm.tz_state(),
                TzState::Reconnecting | TzState::Connected
            )
        {
            self.send_audit_push(now);
        }
    }

    fn execute_reauth(&mut self, ue_id: &UeId, now: SimMs) {
        if let Some(report) = self.zm.execute_reauth_entry(ue_id, now) {
            self.send_interface(
                InterfaceName::ZmUe,
                EntityKind::ZoneManager,
                MessagePayload::ForcedDisconnect {
                    ue_id: ue_id.clone(),
                    reason: "reauth_required".to_owned(),
                },
                now,
            );
            self.route_report(report, now);
        }
    }

    fn inject_fault(&mut self, now: SimMs) {
        let victim = self
            .zm
            .devices()
            .find(|r| r.attached && r.trust == Trust::Untrusted)
            .map(|r| r.ue_id.clone());
        if let Some(ue_id) = victim {
            self.metric(
                now,
                "fault_injected",
                vec![("ue_id", ue_id.to_string()), ("grant", "data".to_owned())],
            );
            self.zm.inject_grant(&ue_id, "data");
        }
    }

    // -- scripted inputs ----------------------------------------------------

    fn apply_input(&mut self, index: usize, now: SimMs) {
        match self.events[index].clone() {
            ScenarioEvent::LinkQuality { link, .. } => {
                self.link = link;
                self.log_link(now);
            }
            ScenarioEvent::Disaster { event, .. } => {
                self.send_interface(
                    InterfaceName::IoEs,
                    EntityKind::IotGateway,
                    MessagePayload::DisasterAlarm(event),
                    now,
                );
            }
            ScenarioEvent::UeAttach {
                ue_id, credential, ..
            } => {
                let envelope = Envelope {
                    interface: InterfaceName::ZmUe,
                    sender: EntityKind::Ue,
                    payload: MessagePayload::AttachRequest {
                        ue_id: ue_id.clone(),
                    },
                    sent_at: now,
                };
                let receiver = self.bus.validate(&envelope).expect("legal route");
                self.log_envelope(&envelope, receiver, now);
                self.zm.on_ue_attach(&ue_id, &credential, now);
            }
            ScenarioEvent::UeDetach { ue_id, .. } => {
                self.send_interface(
                    InterfaceName::ZmUe,
                    EntityKind::Ue,
                    MessagePayload::DetachNotice { ue_id },
                    now,
                );
            }
            ScenarioEvent::UeAccessRequest {
                ue_id, service, ..
            } => {
                self.send_interface(
                    InterfaceName::ZmUe,
                    EntityKind::Ue,
                    MessagePayload::AccessRequest { ue_id, service },
                    now,
                );
            }
            ScenarioEvent::CentralProfileUpdate { profile, .. } => {
                self.metric(
                    now,
                    "central_profile_update",
                    vec![
                        ("subscriber", profile.subscriber_id.clone()),
                        ("sync_version", profile.sync_version.to_string()),
                    ],
                );
                self.directory
                    .insert(profile.subscriber_id.clone(), profile);
            }
        }
    }

    // -- dispatch -----------------------------------------------------------

    fn dispatch(&mut self, item: Item) {
        let now = item.at;
        match item.action {
            Action::Input(index) => self.apply_input(index, now),
            Action::PollTick => {
                let outcome = self.cccm.on_poll_tick(now);
                self.handle_monitor(outcome, now);
                self.push(now + self.config.poll_period_ms, Action::PollTick);
            }
            Action::SyncTick => {
                self.sync_tick(now);
                self.push(now + self.config.sync_period_ms, Action::SyncTick);
            }
            Action::ResolveTransient { entered_at } => {
                if self.zm.tz_state().is_transient() && self.zm.entered_at() == entered_at {
                    for outcome in self.zm.resolve_transient_now(now) {
                        self.apply_transition(outcome, now);
                    }
                }
            }
            Action::Deliver(scheduled) => self.deliver_scheduled(scheduled, now),
            Action::PseudoDeliver(delivery) => self.deliver_pseudo(delivery, now),
            Action::ReauthExecute { ue_id } => self.execute_reauth(&ue_id, now),
            Action::AuditRetry => self.audit_retry(now),
            Action::InjectFault => self.inject_fault(now),
        }
    }

    /// Online check: an untrusted device must never hold a grant outside
    /// the emergency catalog. The only way to get there is corruption.
    fn check_no_escalation(&self, at: SimMs) -> Result<(), SimError> {
        for rec in self.zm.devices() {
            if rec.trust == Trust::Untrusted {
                if let Some(bad) = rec.granted.iter().find(|s| !self.catalog_names.contains(*s)) {
                    return Err(SimError::InvariantViolation {
                        name: "no_escalation".to_owned(),
                        at,
                        seq: self.seq,
                        detail: format!(
                            "untrusted device {} holds grant `{bad}`",
                            rec.ue_id
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    fn final_state(&self) -> FinalState {
        FinalState {
            tz_state: self.zm.tz_state(),
            devices: self.zm.devices().cloned().collect(),
            schedules: self.schedules.clone(),
            laa_issued_tokens: self.laa.issued_token_count(),
            center_accepted: self.center.accepted().clone(),
            center_receive_log: self.center.receive_log().to_vec(),
            sa_active: self.sa.is_active(),
            sa_epoch: self.sa.epoch(),
        }
    }
}

fn payload_detail(payload: &MessagePayload) -> BTreeMap<String, String> {
    let mut detail = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        detail.insert(k.to_owned(), v);
    };
    match payload {
        MessagePayload::Ec4Report { class } => put("class", class.as_str().to_owned()),
        MessagePayload::StateTransition { to } => put("to", to.code().to_owned()),
        MessagePayload::Diagnosis(d) => {
            put("hypothesis", format!("{:?}", d.hypothesis).to_lowercase())
        }
        MessagePayload::ProbeRequest { round_id, .. }
        | MessagePayload::ProbeResponse { round_id, .. } => put("round", round_id.to_string()),
        MessagePayload::DisasterAlarm(event) => put("event_id", event.event_id.clone()),
        MessagePayload::ProfileSnapshot { profiles } => {
            put("profiles", profiles.len().to_string())
        }
        MessagePayload::OperationReport(report) => {
            put("kind", report.kind.as_str().to_owned());
            put("ue_id", report.ue_id.to_string());
        }
        MessagePayload::KeyToken(token) => {
            put("fingerprint", token.fingerprint());
            put("ue_id", token.ue_id.to_string());
        }
        MessagePayload::AttachRequest { ue_id } | MessagePayload::DetachNotice { ue_id } => {
            put("ue_id", ue_id.to_string())
        }
        MessagePayload::AccessRequest { ue_id, service } => {
            put("service", service.clone());
            put("ue_id", ue_id.to_string());
        }
        MessagePayload::AccessResponse(decision) => {
            put("ue_id", decision.ue_id.to_string());
            put("verdict", decision.verdict.as_str().to_owned());
        }
        MessagePayload::AsSecurityMode {
            ue_id,
            token_fingerprint,
        } => {
            put("fingerprint", token_fingerprint.clone());
            put("ue_id", ue_id.to_string());
        }
        MessagePayload::ForcedDisconnect { ue_id, reason } => {
            put("reason", reason.clone());
            put("ue_id", ue_id.to_string());
        }
    }
    detail
}

// ---------------------------------------------------------------------------
// Run driver
// ---------------------------------------------------------------------------

/// Execute a scenario from time zero to `until` (inclusive). With `check`
/// set, the invariant suite runs online and over the finished trace, and
/// the first violation aborts the run as an error.
pub fn run(
    scenario: &Scenario,
    seed: u64,
    until: SimMs,
    check: bool,
) -> Result<RunOutput, SimError> {
    let mut world = World::new(scenario, seed);
    world.metric(
        0,
        "run_start",
        vec![("seed", seed.to_string()), ("until", until.to_string())],
    );
    world.log_link(0);

    while let Some(item) = world.pop_due(until) {
        let at = item.at;
        world.dispatch(item);
        if check {
            world.check_no_escalation(at)?;
        }
    }

    let final_code = world.zm.tz_state().code().to_owned();
    world.metric(until, "run_end", vec![("final_state", final_code)]);

    if check {
        verify_trace(&world.trace, world.config.transient_dwell_ms)?;
    }
    let metrics = compute_metrics(&world.trace);
    let final_state = world.final_state();
    Ok(RunOutput {
        trace: world.trace,
        metrics,
        final_state,
    })
}

// ---------------------------------------------------------------------------
// Trace-level invariant suite
// ---------------------------------------------------------------------------

/// Check every trace-expressible invariant over a finished trace:
/// transition legality, exact transient dwell, routing discipline, gapless
/// audit sequences, partition faithfulness, emergency liveness,
/// decision-level non-escalation, and audit coverage of decisions made
/// while the recorder was active.
pub fn verify_trace(events: &[TraceEvent], transient_dwell_ms: SimMs) -> Result<(), SimError> {
    let catalog: BTreeSet<String> = standard_catalog().into_iter().map(|s| s.name).collect();
    let fail = |name: &str, event: &TraceEvent, detail: String| {
        Err(SimError::InvariantViolation {
            name: name.to_owned(),
            at: event.at,
            seq: event.seq,
            detail,
        })
    };

    let mut state = TzState::Connected;
    let mut entered_transient: Option<SimMs> = None;
    let mut link_lost = false;
    let mut audit_active = false;
    let mut audit_last: BTreeMap<u64, (u64, SimMs)> = BTreeMap::new();
    let mut decisions_needing_audit: Vec<(SimMs, UeId, u64)> = Vec::new();
    let mut audit_decisions_seen: BTreeMap<(SimMs, UeId), u64> = BTreeMap::new();

    for event in events {
        match &event.body {
            TraceBody::Transition(t) => {
                if t.from != state {
                    return fail(
                        "transition_legality",
                        event,
                        format!("record leaves {} but the zone was in {}", t.from, state),
                    );
                }
                if !is_valid_transition(t.from, t.to) {
                    return fail(
                        "transition_legality",
                        event,
                        format!("{} -> {} is not an edge of the model", t.from, t.to),
                    );
                }
                if let Some(since) = entered_transient {
                    if event.at != since + transient_dwell_ms {
                        return fail(
                            "transient_dwell",
                            event,
                            format!(
                                "{} held for {}ms, expected exactly {transient_dwell_ms}ms",
                                t.from,
                                event.at - since
                            ),
                        );
                    }
                    if t.cause != TransitionCause::TransientResolution {
                        return fail(
                            "transient_dwell",
                            event,
                            format!("{} left by {:?}, not by resolution", t.from, t.cause),
                        );
                    }
                }
                state = t.to;
                entered_transient = state.is_transient().then_some(event.at);
            }
            TraceBody::Envelope(envelope) => {
                if link_lost && channel_crosses_central(&envelope.channel) {
                    return fail(
                        "partition_faithfulness",
                        event,
                        format!(
                            "`{}` delivered on {} while the link was unreachable",
                            envelope.payload, envelope.channel
                        ),
                    );
                }
            }
            TraceBody::Decision(decision) => {
                let route_ok = match decision.route {
                    Some(Route::LocalLaa) => state == TzState::Lost,
                    Some(Route::CentralVaaa) => matches!(
                        state,
                        TzState::Connected | TzState::WeaklyConnected | TzState::Reconnecting
                    ),
                    None => true,
                };
                if !route_ok {
                    return fail(
                        "routing_discipline",
                        event,
                        format!(
                            "route {:?} used for {} in state {state}",
                            decision.route, decision.ue_id
                        ),
                    );
                }
                if decision.service == crate::emergency::EMERGENCY_CALL
                    && decision.verdict == Verdict::Deny
                {
                    return fail(
                        "emergency_liveness",
                        event,
                        format!("{} was denied the always-on service", decision.ue_id),
                    );
                }
                if decision.verdict == Verdict::GrantEmergencyOnly {
                    if let Some(bad) = decision.granted.iter().find(|s| !catalog.contains(*s)) {
                        return fail(
                            "no_escalation",
                            event,
                            format!("restricted grant to {} includes `{bad}`", decision.ue_id),
                        );
                    }
                }
                if decision.verdict == Verdict::GrantFull && decision.trust == Trust::Untrusted {
                    return fail(
                        "no_escalation",
                        event,
                        format!("full grant issued to untrusted {}", decision.ue_id),
                    );
                }
                if audit_active {
                    decisions_needing_audit.push((event.at, decision.ue_id.clone(), event.seq));
                }
            }
            TraceBody::Audit(record) => {
                let expected = audit_last
                    .get(&record.epoch)
                    .map(|(seq, _)| seq + 1)
                    .unwrap_or(1);
                if record.seq != expected {
                    return fail(
                        "audit_gapless",
                        event,
                        format!(
                            "epoch {} jumped to seq {} (expected {expected})",
                            record.epoch, record.seq
                        ),
                    );
                }
                if let Some((_, last_at)) = audit_last.get(&record.epoch) {
                    if event.at < *last_at {
                        return fail(
                            "audit_gapless",
                            event,
                            format!("epoch {} time went backwards", record.epoch),
                        );
                    }
                }
                audit_last.insert(record.epoch, (record.seq, event.at));
                if record.kind == crate::audit::AuditKind::AccessDecision {
                    *audit_decisions_seen
                        .entry((event.at, record.ue_id.clone()))
                        .or_default() += 1;
                }
            }
            TraceBody::Metric(marker) => match marker.name.as_str() {
                "link_quality" => {
                    link_lost = marker.detail.get("class").map(String::as_str) == Some("lost")
                }
                "audit_active" => audit_active = true,
                "audit_inactive" => audit_active = false,
                _ => {}
            },
            TraceBody::Drop(_) => {}
        }
    }

    for (at, ue_id, seq) in decisions_needing_audit {
        let slot = audit_decisions_seen.entry((at, ue_id.clone())).or_default();
        if *slot == 0 {
            return Err(SimError::InvariantViolation {
                name: "decision_audit_coverage".to_owned(),
                at,
                seq,
                detail: format!("decision for {ue_id} at {at}ms left no audit record"),
            });
        }
        *slot -= 1;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
