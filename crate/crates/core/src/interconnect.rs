//! Typed message bus: the twelve named interfaces between the trust-zone
//! entities and their central-cloud counterparts.
//!
//! The interface set is closed — [`InterfaceName`] has exactly twelve
//! variants and no other channel is constructible. Each interface admits a
//! fixed set of payload kinds per direction (for instance, a key token may
//! travel on `Zm-La` and `Me-Zm` only); anything else is an
//! [`RouteError::IllegalRoute`], which is a programming error in the
//! caller, not a recoverable condition.
//!
//! Scheduling is FIFO per (interface, sender): an envelope never overtakes
//! an earlier one from the same sender on the same interface, even when
//! per-envelope latencies differ. Whether an envelope crosses the
//! edge-to-central link — and is therefore subject to partition drops and
//! weak-link degradation — is a static property of its interface.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::OperationReport;
use crate::cccm::{Diagnosis, FunctionClass, ProbeReading, ProbeTarget};
use crate::emergency::DisasterEvent;
use crate::local_access::{AsKeyToken, SubscriberProfile};
use crate::state_machine::{Ec4Class, TzState};
use crate::zone_manager::AccessDecision;
use crate::{SimMs, UeId};

// ---------------------------------------------------------------------------
// Entities and interfaces
// ---------------------------------------------------------------------------

/// Every communicating party, edge-side and central-side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    /// Connection monitor (edge).
    Cccm,
    /// Zone manager (edge).
    ZoneManager,
    /// Local authentication agent (edge).
    LocalAuth,
    /// Subscriber store sync source (central side of the profile feed).
    Lss,
    /// Security audit recorder (edge).
    SecurityAudit,
    /// Emergency services module (edge).
    EmergencyServices,
    /// Sensor gateway feeding disaster alarms (edge).
    IotGateway,
    /// A user device (edge).
    Ue,
    /// Operations support system (central).
    Oss,
    /// Orchestrator (central).
    Mano,
    /// Central mobility/key function (central).
    Amf,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Cccm => "cccm",
            EntityKind::ZoneManager => "zm",
            EntityKind::LocalAuth => "laa",
            EntityKind::Lss => "lss",
            EntityKind::SecurityAudit => "sa",
            EntityKind::EmergencyServices => "es",
            EntityKind::IotGateway => "iot",
            EntityKind::Ue => "ue",
            EntityKind::Oss => "oss",
            EntityKind::Mano => "mano",
            EntityKind::Amf => "amf",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The closed set of interfaces. No other channel names exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InterfaceName {
    #[serde(rename = "Cm-Ma")]
    CmMa,
    #[serde(rename = "Cm-Zm")]
    CmZm,
    #[serde(rename = "Es-Cm")]
    EsCm,
    #[serde(rename = "Es-Zm")]
    EsZm,
    #[serde(rename = "Io-Es")]
    IoEs,
    #[serde(rename = "La-Ls")]
    LaLs,
    #[serde(rename = "La-Sa")]
    LaSa,
    #[serde(rename = "Me-Zm")]
    MeZm,
    #[serde(rename = "Os-Cm")]
    OsCm,
    #[serde(rename = "Zm-La")]
    ZmLa,
    #[serde(rename = "Zm-Sa")]
    ZmSa,
    #[serde(rename = "Zm-Ue")]
    ZmUe,
}

impl InterfaceName {
    pub const ALL: [InterfaceName; 12] = [
        InterfaceName::CmMa,
        InterfaceName::CmZm,
        InterfaceName::EsCm,
        InterfaceName::EsZm,
        InterfaceName::IoEs,
        InterfaceName::LaLs,
        InterfaceName::LaSa,
        InterfaceName::MeZm,
        InterfaceName::OsCm,
        InterfaceName::ZmLa,
        InterfaceName::ZmSa,
        InterfaceName::ZmUe,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InterfaceName::CmMa => "Cm-Ma",
            InterfaceName::CmZm => "Cm-Zm",
            InterfaceName::EsCm => "Es-Cm",
            InterfaceName::EsZm => "Es-Zm",
            InterfaceName::IoEs => "Io-Es",
            InterfaceName::LaLs => "La-Ls",
            InterfaceName::LaSa => "La-Sa",
            InterfaceName::MeZm => "Me-Zm",
            InterfaceName::OsCm => "Os-Cm",
            InterfaceName::ZmLa => "Zm-La",
            InterfaceName::ZmSa => "Zm-Sa",
            InterfaceName::ZmUe => "Zm-Ue",
        }
    }

    /// Whether traffic on this interface traverses the edge-to-central
    /// link (and therefore dies with it). Classified by the far end:
    /// orchestrator, operations system, central key function, and the
    /// central subscriber database all live across the link.
    pub fn crosses_central(self) -> bool {
        matches!(
            self,
            InterfaceName::CmMa
                | InterfaceName::OsCm
                | InterfaceName::MeZm
                | InterfaceName::LaLs
        )
    }
}

impl fmt::Display for InterfaceName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

// ---------------------------------------------------------------------------
// Payloads
// ---------------------------------------------------------------------------

/// Every message kind the bus can carry. The interface legality table
/// below is the single source of truth for where each variant may travel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MessagePayload {
    /// Link classification report (monitor → zone manager).
    Ec4Report { class: Ec4Class },
    /// Zone state broadcast (zone manager → peers).
    StateTransition { to: TzState },
    /// Malfunction hypothesis (monitor → orchestrator).
    Diagnosis(Diagnosis),
    ProbeRequest { round_id: u64, target: ProbeTarget },
    ProbeResponse { round_id: u64, reading: ProbeReading },
    DisasterAlarm(DisasterEvent),
    /// Synchronized subscriber profiles (store → agent).
    ProfileSnapshot { profiles: Vec<SubscriberProfile> },
    /// Security-critical operation notice for the audit recorder.
    OperationReport(OperationReport),
    /// Derived session key (agent → zone manager, or central key function
    /// → zone manager). Never travels toward a device in raw form.
    KeyToken(AsKeyToken),
    AttachRequest { ue_id: UeId },
    DetachNotice { ue_id: UeId },
    AccessRequest { ue_id: UeId, service: String },
    AccessResponse(AccessDecision),
    /// Key confirmation toward the device: fingerprint only.
    AsSecurityMode { ue_id: UeId, token_fingerprint: String },
    ForcedDisconnect { ue_id: UeId, reason: String },
}

impl MessagePayload {
    pub fn kind(&self) -> &'static str {
        match self {
            MessagePayload::Ec4Report { .. } => "ec4_report",
            MessagePayload::StateTransition { .. } => "state_transition",
            MessagePayload::Diagnosis(_) => "diagnosis",
            MessagePayload::ProbeRequest { .. } => "probe_request",
            MessagePayload::ProbeResponse { .. } => "probe_response",
            MessagePayload::DisasterAlarm(_) => "disaster_alarm",
            MessagePayload::ProfileSnapshot { .. } => "profile_snapshot",
            MessagePayload::OperationReport(_) => "operation_report",
            MessagePayload::KeyToken(_) => "key_token",
            MessagePayload::AttachRequest { .. } => "attach_request",
            MessagePayload::DetachNotice { .. } => "detach_notice",
            MessagePayload::AccessRequest { .. } => "access_request",
            MessagePayload::AccessResponse(_) => "access_response",
            MessagePayload::AsSecurityMode { .. } => "as_security_mode",
            MessagePayload::ForcedDisconnect { .. } => "forced_disconnect",
        }
    }

    /// Traffic class for weak-link priority treatment.
    pub fn function_class(&self) -> FunctionClass {
        match self {
            MessagePayload::KeyToken(_) | MessagePayload::AsSecurityMode { .. } => {
                FunctionClass::Authentication
            }
            MessagePayload::AccessRequest { .. } | MessagePayload::AccessResponse(_) => {
                FunctionClass::Authorization
            }
            MessagePayload::ProfileSnapshot { .. } => FunctionClass::SubscriberSync,
            _ => FunctionClass::Other,
        }
    }

    /// Probes are the measurement itself; the harness never subjects them
    /// to the weak-link drop lottery.
    pub fn is_probe(&self) -> bool {
        matches!(
            self,
            MessagePayload::ProbeRequest { .. } | MessagePayload::ProbeResponse { .. }
        )
    }
}

// ---------------------------------------------------------------------------
// Legality
// ---------------------------------------------------------------------------

/// Payload-kind sets per directed edge. The tuple is
/// (interface, sender, receiver, allowed payload kinds).
const DIRECTED_EDGES: &[(InterfaceName, EntityKind, EntityKind, &[&str])] = &[
    (
        InterfaceName::CmMa,
        EntityKind::Cccm,
        EntityKind::Mano,
        &["probe_request", "diagnosis"],
    ),
    (
        InterfaceName::CmMa,
        EntityKind::Mano,
        EntityKind::Cccm,
        &["probe_response"],
    ),
    (
        InterfaceName::CmZm,
        EntityKind::Cccm,
        EntityKind::ZoneManager,
        &["ec4_report"],
    ),
    (
        InterfaceName::CmZm,
        EntityKind::ZoneManager,
        EntityKind::Cccm,
        &["state_transition"],
    ),
    (
        InterfaceName::EsCm,
        EntityKind::EmergencyServices,
        EntityKind::Cccm,
        &["disaster_alarm"],
    ),
    (
        InterfaceName::EsZm,
        EntityKind::ZoneManager,
        EntityKind::EmergencyServices,
        &["state_transition"],
    ),
    (
        InterfaceName::IoEs,
        EntityKind::IotGateway,
        EntityKind::EmergencyServices,
        &["disaster_alarm"],
    ),
    (
        InterfaceName::LaLs,
        EntityKind::Lss,
        EntityKind::LocalAuth,
        &["profile_snapshot"],
    ),
    (
        InterfaceName::LaSa,
        EntityKind::LocalAuth,
        EntityKind::SecurityAudit,
        &["operation_report"],
    ),
    (
        InterfaceName::MeZm,
        EntityKind::Amf,
        EntityKind::ZoneManager,
        &["key_token"],
    ),
    (
        InterfaceName::OsCm,
        EntityKind::Cccm,
        EntityKind::Oss,
        &["probe_request"],
    ),
    (
        InterfaceName::OsCm,
        EntityKind::Oss,
        EntityKind::Cccm,
        &["probe_response"],
    ),
    (
        InterfaceName::ZmLa,
        EntityKind::LocalAuth,
        EntityKind::ZoneManager,
        &["key_token"],
    ),
    (
        InterfaceName::ZmLa,
        EntityKind::ZoneManager,
        EntityKind::LocalAuth,
        &["state_transition"],
    ),
    (
        InterfaceName::ZmSa,
        EntityKind::ZoneManager,
        EntityKind::SecurityAudit,
        &["operation_report"],
    ),
    (
        InterfaceName::ZmUe,
        EntityKind::Ue,
        EntityKind::ZoneManager,
        &["attach_request", "detach_notice", "access_request"],
    ),
    (
        InterfaceName::ZmUe,
        EntityKind::ZoneManager,
        EntityKind::Ue,
        &["access_response", "as_security_mode", "forced_disconnect"],
    ),
];

/// The directed adjacency realized by the twelve interfaces.
pub fn connectivity_matrix() -> Vec<(InterfaceName, EntityKind, EntityKind)> {
    DIRECTED_EDGES
        .iter()
        .map(|&(i, s, r, _)| (i, s, r))
        .collect()
}

/// Receiver for a (interface, sender) pair, if that direction exists.
pub fn receiver_for(interface: InterfaceName, sender: EntityKind) -> Option<EntityKind> {
    DIRECTED_EDGES
        .iter()
        .find(|&&(i, s, _, _)| i == interface && s == sender)
        .map(|&(_, _, r, _)| r)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RouteError {
    #[error("payload {payload} from {sender} is not legal on {interface}")]
    IllegalRoute {
        interface: InterfaceName,
        sender: EntityKind,
        payload: &'static str,
    },
}

// ---------------------------------------------------------------------------
// Envelopes and the bus
// ---------------------------------------------------------------------------

/// One message in flight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub interface: InterfaceName,
    pub sender: EntityKind,
    pub payload: MessagePayload,
    pub sent_at: SimMs,
}

/// A validated envelope with its delivery time resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Scheduled {
    pub envelope: Envelope,
    pub receiver: EntityKind,
    pub deliver_at: SimMs,
}

/// The bus: validates envelopes against the legality table and assigns
/// FIFO-respecting delivery times.
#[derive(Debug, Clone, Default)]
pub struct Interconnect {
    /// Latest delivery time handed out per (interface, sender).
    watermarks: BTreeMap<(InterfaceName, EntityKind), SimMs>,
}

impl Interconnect {
    pub fn new() -> Self {
        Interconnect::default()
    }

    /// Validate and schedule an envelope. `latency` is the one-way delay
    /// the harness chose for it; the returned delivery time additionally
    /// respects send order per (interface, sender).
    pub fn schedule(&mut self, envelope: Envelope, latency: SimMs) -> Result<Scheduled, RouteError> {
        let receiver = self.validate(&envelope)?;
        let key = (envelope.interface, envelope.sender);
        let watermark = self.watermarks.get(&key).copied().unwrap_or(0);
        let deliver_at = (envelope.sent_at + latency).max(watermark);
        self.watermarks.insert(key, deliver_at);
        Ok(Scheduled {
            envelope,
            receiver,
            deliver_at,
        })
    }

    /// Check legality without scheduling.
    pub fn validate(&self, envelope: &Envelope) -> Result<EntityKind, RouteError> {
        let kind = envelope.payload.kind();
        for &(i, s, r, kinds) in DIRECTED_EDGES {
            if i == envelope.interface && s == envelope.sender && kinds.contains(&kind) {
                return Ok(r);
            }
        }
        Err(RouteError::IllegalRoute {
            interface: envelope.interface,
            sender: envelope.sender,
            payload: kind,
        })
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
