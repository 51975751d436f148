//! Buffered security auditing for the disconnected regime.
//!
//! While the zone runs without central oversight, every security-critical
//! operation (access decisions, local authentications, key derivations,
//! trust changes, forced disconnects) is appended to an in-memory buffer by
//! the security-audit entity. The entity activates when the zone starts
//! disconnecting, stays active through the lost and reconnecting states,
//! and deactivates only once the buffer has been pushed to the central
//! auditing center and acknowledged. Each activation opens a fresh epoch;
//! the center de-duplicates on `(epoch, seq)`, which makes delivery
//! exactly-once even across push retries after lost acknowledgements.
//!
//! In the steady connected state the buffer can also be read back by the
//! center on demand (pull) instead of pushed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state_machine::TzState;
use crate::{SimMs, UeId};

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

/// Which entity executed the audited operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditActor {
    ZoneManager,
    LocalAuth,
}

impl AuditActor {
    pub fn as_str(self) -> &'static str {
        match self {
            AuditActor::ZoneManager => "zone_manager",
            AuditActor::LocalAuth => "local_auth",
        }
    }
}

/// The security-critical operation kinds that get audited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    AccessDecision,
    LocalAuthenticate,
    KeyDerivation,
    TrustChange,
    ForcedDisconnect,
}

impl AuditKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AuditKind::AccessDecision => "access_decision",
            AuditKind::LocalAuthenticate => "local_authenticate",
            AuditKind::KeyDerivation => "key_derivation",
            AuditKind::TrustChange => "trust_change",
            AuditKind::ForcedDisconnect => "forced_disconnect",
        }
    }
}

/// An operation report as emitted by the acting entity over its monitoring
/// interface; the audit entity turns accepted reports into records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationReport {
    pub actor: AuditActor,
    pub kind: AuditKind,
    pub ue_id: UeId,
    pub outcome: String,
}

/// One appended audit record. `seq` starts at 1 and is gapless within an
/// epoch; `at` never decreases along the sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub epoch: u64,
    pub seq: u64,
    pub at: SimMs,
    pub actor: AuditActor,
    pub kind: AuditKind,
    pub ue_id: UeId,
    pub outcome: String,
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuditError {
    /// Recording while inactive is a caller bug: local security operations
    /// must not run unaudited during the disconnected regime.
    #[error("audit entity is inactive")]
    InactiveAuditor,
    /// Push requires the reconnecting state's restored link.
    #[error("no central connectivity in state {0}")]
    NoConnectivity(TzState),
    /// Pull is served only in the steady connected state.
    #[error("pull refused in state {0}")]
    WrongState(TzState),
}

// ---------------------------------------------------------------------------
// Audit entity
// ---------------------------------------------------------------------------

/// The audit entity: activation life cycle, the per-epoch buffer, and the
/// delivery watermark.
#[derive(Debug, Clone)]
pub struct SecurityAudit {
    active: bool,
    tz_state: TzState,
    epoch: u64,
    next_seq: u64,
    buffer: Vec<AuditRecord>,
    delivered_up_to: u64,
    last_at: SimMs,
}

impl SecurityAudit {
    pub fn new() -> Self {
        SecurityAudit {
            active: false,
            tz_state: TzState::Connected,
            epoch: 0,
            next_seq: 1,
            buffer: Vec::new(),
            delivered_up_to: 0,
            last_at: 0,
        }
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn delivered_up_to(&self) -> u64 {
        self.delivered_up_to
    }

    pub fn buffer(&self) -> &[AuditRecord] {
        &self.buffer
    }

    fn last_seq(&self) -> u64 {
        self.next_seq - 1
    }

    /// True once every buffered record has been acknowledged by the center.
    pub fn fully_delivered(&self) -> bool {
        self.delivered_up_to == self.last_seq()
    }

    /// Track the zone state and derive activation from it.
    ///
    /// Entering the disconnecting state activates the entity and opens a
    /// new epoch (if it is not already active from an unfinished previous
    /// degradation). Reaching the steady connected state deactivates it,
    /// but only once the buffer has been fully delivered — an unfinished
    /// push keeps it active until the acknowledgement lands. All other
    /// states leave activation unchanged. Returns the activation flag.
    pub fn set_active(&mut self, tz_state: TzState) -> bool {
        self.tz_state = tz_state;
        match tz_state {
            TzState::Disconnecting => {
                if !self.active {
                    self.active = true;
                    self.epoch += 1;
                    self.next_seq = 1;
                    self.buffer.clear();
                    self.delivered_up_to = 0;
                }
            }
            TzState::Connected => {
                if self.active && self.fully_delivered() {
                    self.active = false;
                }
            }
            _ => {}
        }
        self.active
    }

    /// Append a record for a security-critical operation.
    pub fn record(&mut self, report: &OperationReport, now: SimMs) -> Result<AuditRecord, AuditError> {
        if !self.active {
            return Err(AuditError::InactiveAuditor);
        }
        debug_assert!(now >= self.last_at, "audit time went backwards");
        let record = AuditRecord {
            epoch: self.epoch,
            seq: self.next_seq,
            at: now,
            actor: report.actor,
            kind: report.kind,
            ue_id: report.ue_id.clone(),
            outcome: report.outcome.clone(),
        };
        self.next_seq += 1;
        self.last_at = now;
        self.buffer.push(record.clone());
        Ok(record)
    }

    /// Monitoring-interface path: record the report if active, otherwise
    /// drop it silently — outside the audit window the central systems see
    /// the operation directly and no local record is owed.
    pub fn handle_report(&mut self, report: &OperationReport, now: SimMs) -> Option<AuditRecord> {
        self.active.then(|| {
            self.record(report, now)
                .expect("record cannot fail while active")
        })
    }

    /// Records not yet acknowledged by the center, for (re)transmission.
    /// The initial push happens in the reconnecting state; retries after a
    /// lost acknowledgement may run on into the connected state.
    pub fn undelivered(&self) -> Vec<AuditRecord> {
        self.buffer
            .iter()
            .filter(|r| r.seq > self.delivered_up_to)
            .cloned()
            .collect()
    }

    /// The center acknowledged everything up to `up_to_seq` for `epoch`.
    /// Returns true when that completed delivery; deactivation follows if
    /// the zone has already reached the steady connected state.
    pub fn on_push_ack(&mut self, epoch: u64, up_to_seq: u64) -> bool {
        if epoch != self.epoch {
            return false;
        }
        self.delivered_up_to = self.delivered_up_to.max(up_to_seq);
        let done = self.fully_delivered();
        if done && self.tz_state == TzState::Connected {
            self.active = false;
        }
        done
    }

    /// Synchronous push for direct use: transmit every undelivered record
    /// and apply the acknowledgement if the center produced one. Returns
    /// the number of records newly acknowledged.
    pub fn push_to_center(&mut self, center: &mut AuditCenter) -> Result<u64, AuditError> {
        if self.tz_state != TzState::Reconnecting {
            return Err(AuditError::NoConnectivity(self.tz_state));
        }
        let batch = self.undelivered();
        let before = self.delivered_up_to;
        if let Some(ack) = center.receive(&batch) {
            self.on_push_ack(ack.epoch, ack.up_to_seq);
        }
        Ok(self.delivered_up_to - before)
    }

    /// Serve a read-back of buffered records starting at `from_seq`
    /// (inclusive); available only in the steady connected state.
    pub fn serve_pull(&self, from_seq: u64) -> Result<Vec<AuditRecord>, AuditError> {
        if self.tz_state != TzState::Connected {
            return Err(AuditError::WrongState(self.tz_state));
        }
        Ok(self
            .buffer
            .iter()
            .filter(|r| r.seq >= from_seq)
            .cloned()
            .collect())
    }
}

impl Default for SecurityAudit {
    fn default() -> Self {
        Self::new()
    }
}

// ---------------------------------------------------------------------------
// Central auditing center
// ---------------------------------------------------------------------------

/// Acknowledgement for one received batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditAck {
    pub epoch: u64,
    pub up_to_seq: u64,
}

/// The central auditing center: stores at most one copy per `(epoch, seq)`
/// and acknowledges what it received. A fault counter lets scenarios drop
/// the next acknowledgements to exercise the retry path.
#[derive(Debug, Clone, Default)]
pub struct AuditCenter {
    accepted: BTreeMap<(u64, u64), AuditRecord>,
    receive_log: Vec<(u64, u64)>,
    drop_acks_remaining: u32,
}

impl AuditCenter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Arm the fault: the next `n` acknowledgements are swallowed after the
    /// records have been stored.
    pub fn drop_next_acks(&mut self, n: u32) {
        self.drop_acks_remaining = n;
    }

    /// Store a batch (idempotently) and acknowledge it, unless the
    /// acknowledgement is eaten by an armed fault. An empty batch is
    /// acknowledged at the current high-water mark of nothing (`None`).
    pub fn receive(&mut self, batch: &[AuditRecord]) -> Option<AuditAck> {
        let mut highest: Option<AuditAck> = None;
        for record in batch {
            let key = (record.epoch, record.seq);
            self.receive_log.push(key);
            self.accepted.entry(key).or_insert_with(|| record.clone());
            let ack = highest.get_or_insert(AuditAck {
                epoch: record.epoch,
                up_to_seq: record.seq,
            });
            ack.epoch = record.epoch;
            ack.up_to_seq = ack.up_to_seq.max(record.seq);
        }
        let ack = highest?;
        if self.drop_acks_remaining > 0 {
            self.drop_acks_remaining -= 1;
            return None;
        }
        Some(ack)
    }

    /// Every stored record, keyed by `(epoch, seq)`.
    pub fn accepted(&self) -> &BTreeMap<(u64, u64), AuditRecord> {
        &self.accepted
    }

    /// Every arrival, including duplicates from retransmissions.
    pub fn receive_log(&self) -> &[(u64, u64)] {
        &self.receive_log
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
