//! Line-delimited run traces.
//!
//! One JSON object per line, fields in fixed order (`at`, `seq`,
//! `category`, `body`), so that identical runs produce byte-identical
//! files and tooling can diff them directly. The `seq` field is a global
//! monotone counter; `(at, seq)` totally orders the trace.
//!
//! Serialization uses the derived writers (struct order is the wire
//! order). Deserialization is manual: the `category` discriminant selects
//! the body type, which keeps the reader independent of field-order
//! guesswork and yields precise line diagnostics for corrupt files.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{AuditActor, AuditKind};
use crate::state_machine::{TransitionCause, TzState};
use crate::zone_manager::{Route, Verdict};
use crate::{SimMs, Trust, UeId};

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceCategory {
    Transition,
    Envelope,
    Decision,
    Audit,
    Metric,
    Drop,
}

/// One trace line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvent {
    pub at: SimMs,
    pub seq: u64,
    pub category: TraceCategory,
    pub body: TraceBody,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum TraceBody {
    Transition(TransitionBody),
    Envelope(EnvelopeBody),
    Decision(DecisionBody),
    Audit(AuditBody),
    Metric(MetricBody),
    Drop(DropBody),
}

/// A zone state change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionBody {
    pub from: TzState,
    pub to: TzState,
    pub cause: TransitionCause,
}

/// A delivered message. `channel` is an interface name, or one of the
/// harness transports (`central-auth`, `audit-push`, `audit-ack`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeBody {
    pub channel: String,
    pub sender: String,
    pub receiver: String,
    pub payload: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub detail: BTreeMap<String, String>,
}

/// An access decision as issued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionBody {
    pub ue_id: UeId,
    pub service: String,
    pub verdict: Verdict,
    pub route: Option<Route>,
    pub reason: String,
    pub trust: Trust,
    pub granted: Vec<String>,
}

/// An audit record at the moment it was written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditBody {
    pub epoch: u64,
    pub seq: u64,
    pub actor: AuditActor,
    pub kind: AuditKind,
    pub ue_id: UeId,
    pub outcome: String,
}

/// A named measurement or marker (`run_start`, `link_quality`,
/// `reauth_schedule`, …) with free-form detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBody {
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub detail: BTreeMap<String, String>,
}

/// A message that was not delivered, and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropBody {
    pub channel: String,
    pub sender: String,
    pub receiver: String,
    pub payload: String,
    pub reason: String,
}

// ---------------------------------------------------------------------------
// Channels
// ---------------------------------------------------------------------------

/// Harness transport channels that also traverse the edge-to-central link
/// without being one of the twelve typed interfaces.
pub const CENTRAL_AUTH_CHANNEL: &str = "central-auth";
pub const AUDIT_PUSH_CHANNEL: &str = "audit-push";
pub const AUDIT_ACK_CHANNEL: &str = "audit-ack";

/// Whether traffic on a trace channel crosses the edge-to-central link.
pub fn channel_crosses_central(channel: &str) -> bool {
    matches!(
        channel,
        "Cm-Ma" | "Os-Cm" | "Me-Zm" | "La-Ls" | CENTRAL_AUTH_CHANNEL | AUDIT_PUSH_CHANNEL
            | AUDIT_ACK_CHANNEL
    )
}

// ---------------------------------------------------------------------------
// Reading and writing
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Serialize one event to its canonical single-line form.
pub fn event_to_line(event: &TraceEvent) -> String {
    serde_json::to_string(event).expect("trace events always serialize")
}

/// Write a whole trace, one line per event.
pub fn write_trace<W: Write>(mut out: W, events: &[TraceEvent]) -> std::io::Result<()> {
    for event in events {
        writeln!(out, "{}", event_to_line(event))?;
    }
    Ok(())
}

/// Parse a whole trace; the error names the first offending line.
pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<TraceEvent>, TraceError> {
    let mut events = Vec::new();
    for (index, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(parse_line(&line).map_err(|message| TraceError::Corrupt {
            line: index + 1,
            message,
        })?);
    }
    Ok(events)
}

fn parse_line(line: &str) -> Result<TraceEvent, String> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let at = value
        .get("at")
        .and_then(|v| v.as_u64())
        .ok_or("missing field `at`")?;
    let seq = value
        .get("seq")
        .and_then(|v| v.as_u64())
        .ok_or("missing field `seq`")?;
    let category: TraceCategory =
        serde_json::from_value(value.get("category").cloned().ok_or("missing field `category`")?)
            .map_err(|e| e.to_string())?;
    let body_value = value.get("body").cloned().ok_or("missing field `body`")?;
    let body = match category {
        TraceCategory::Transition => TraceBody::Transition(
            serde_json::from_value(body_value).map_err(|e| e.to_string())?,
        ),
        TraceCategory::Envelope => {
            TraceBody::Envelope(serde_json::from_value(body_value).map_err(|e| e.to_string())?)
        }
        TraceCategory::Decision => {
            TraceBody::Decision(serde_json::from_value(body_value).map_err(|e| e.to_string())?)
        }
        TraceCategory::Audit => {
            TraceBody::Audit(serde_json::from_value(body_value).map_err(|e| e.to_string())?)
        }
        TraceCategory::Metric => {
            TraceBody::Metric(serde_json::from_value(body_value).map_err(|e| e.to_string())?)
        }
        TraceCategory::Drop => {
            TraceBody::Drop(serde_json::from_value(body_value).map_err(|e| e.to_string())?)
        }
    };
    Ok(TraceEvent {
        at,
        seq,
        category,
        body,
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
