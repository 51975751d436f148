//! Scenario documents: the scripted environment a run executes.
//!
//! A scenario is a JSON object with `version` (must be 1), `config`
//! (every knob optional, with documented defaults), `subscribers` (the
//! central directory), `lss` (which of those subscribers the edge store
//! holds at start), and `events` (time-sorted inputs: link quality
//! changes, disasters, device attach/detach/access, central profile
//! updates). Unknown fields anywhere are validation errors, as are
//! out-of-range thresholds, unsorted events, and references to devices
//! that never attached.
//!
//! Event dispatch is by the `kind` field and is done by hand rather than
//! through a tagged-enum derive so that unknown fields inside each event
//! are reliably rejected and diagnostics can name the offending event.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::emergency::{DisasterEvent, DisasterKind};
use crate::local_access::{credential_digest, SubscriberProfile};
use crate::{SimMs, UeId};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Ground-truth link quality, also the payload of `link_quality` events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    #[serde(default = "default_true")]
    pub reachable: bool,
    #[serde(default)]
    pub loss_rate: f64,
    #[serde(default = "default_latency")]
    pub latency_ms: SimMs,
    #[serde(default = "default_throughput")]
    pub throughput: f64,
}

impl Default for LinkSpec {
    fn default() -> Self {
        LinkSpec {
            reachable: true,
            loss_rate: 0.0,
            latency_ms: 10,
            throughput: 1.0,
        }
    }
}

/// Fault-injection knobs for exercising failure handling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultConfig {
    /// Swallow this many audit acknowledgements before letting one through.
    #[serde(default)]
    pub audit_ack_drops: u32,
    /// At this time, corrupt the device table with an out-of-policy grant
    /// (a seeded bug for the invariant checker to catch).
    #[serde(default)]
    pub inject_unauthorized_grant_at_ms: Option<SimMs>,
}

/// All run parameters. Every field has a default; scenarios override only
/// what they care about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Seed for the run's single named random stream.
    pub seed: u64,
    /// Monitor poll cadence.
    pub poll_period_ms: SimMs,
    /// Classification window length, in samples.
    pub window_size: usize,
    pub weak_loss_threshold: f64,
    pub weak_latency_threshold_ms: f64,
    pub weak_throughput_threshold: f64,
    /// Dwell in the transient states before they resolve.
    pub transient_dwell_ms: SimMs,
    /// Spacing of forced disconnections in the re-auth schedule.
    pub reauth_stagger_ms: SimMs,
    /// Profile sync cadence (runs only while connected).
    pub sync_period_ms: SimMs,
    /// Delay between audit delivery attempts while records are owed.
    pub audit_retry_ms: SimMs,
    /// Latency multiplier for central-crossing traffic on a weak link.
    pub weak_latency_factor: u64,
    /// Drop probability for central-crossing traffic on a weak link.
    pub weak_drop_probability: f64,
    /// Same, for traffic whose class carries a high priority hint.
    pub weak_drop_probability_high: f64,
    /// Link quality before the first `link_quality` event.
    pub initial_link: LinkSpec,
    pub faults: FaultConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 0,
            poll_period_ms: 1000,
            window_size: 3,
            weak_loss_threshold: 0.10,
            weak_latency_threshold_ms: 500.0,
            weak_throughput_threshold: 0.25,
            transient_dwell_ms: 100,
            reauth_stagger_ms: 200,
            sync_period_ms: 5000,
            audit_retry_ms: 1000,
            weak_latency_factor: 10,
            weak_drop_probability: 0.2,
            weak_drop_probability_high: 0.05,
            initial_link: LinkSpec::default(),
            faults: FaultConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn cccm_config(&self) -> crate::cccm::CccmConfig {
        crate::cccm::CccmConfig {
            poll_period_ms: self.poll_period_ms,
            window_size: self.window_size,
            weak_loss_threshold: self.weak_loss_threshold,
            weak_latency_threshold_ms: self.weak_latency_threshold_ms,
            weak_throughput_threshold: self.weak_throughput_threshold,
        }
    }

    pub fn zm_config(&self) -> crate::zone_manager::ZoneManagerConfig {
        crate::zone_manager::ZoneManagerConfig {
            transient_dwell_ms: self.transient_dwell_ms,
            reauth_stagger_ms: self.reauth_stagger_ms,
        }
    }
}

// ---------------------------------------------------------------------------
// Document shape
// ---------------------------------------------------------------------------

/// One entry of the central subscriber directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubscriberSeed {
    pub id: String,
    pub credential: String,
}

impl SubscriberSeed {
    /// The profile the directory (and, if listed, the edge store) holds.
    pub fn profile(&self) -> SubscriberProfile {
        SubscriberProfile {
            subscriber_id: self.id.clone(),
            credential_digest: credential_digest(self.credential.as_bytes()),
            security_log_version: 1,
            sync_version: 1,
            key_counter: 0,
        }
    }
}

/// A validated, time-sorted scripted input.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioEvent {
    LinkQuality { at: SimMs, link: LinkSpec },
    Disaster { at: SimMs, event: DisasterEvent },
    UeAttach { at: SimMs, ue_id: UeId, credential: String },
    UeDetach { at: SimMs, ue_id: UeId },
    UeAccessRequest { at: SimMs, ue_id: UeId, service: String },
    CentralProfileUpdate { at: SimMs, profile: SubscriberProfile },
}

impl ScenarioEvent {
    pub fn at(&self) -> SimMs {
        match self {
            ScenarioEvent::LinkQuality { at, .. }
            | ScenarioEvent::Disaster { at, .. }
            | ScenarioEvent::UeAttach { at, .. }
            | ScenarioEvent::UeDetach { at, .. }
            | ScenarioEvent::UeAccessRequest { at, .. }
            | ScenarioEvent::CentralProfileUpdate { at, .. } => *at,
        }
    }
}

/// A loaded and validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub subscribers: Vec<SubscriberSeed>,
    pub lss: Vec<String>,
    pub events: Vec<ScenarioEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    /// The document does not match the schema.
    #[error("{context}: {message}")]
    Schema { context: String, message: String },
    /// The document is well-formed but internally inconsistent.
    #[error("{context}: {message}")]
    Reference { context: String, message: String },
}

impl ScenarioError {
    fn schema(context: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError::Schema {
            context: context.into(),
            message: message.into(),
        }
    }

    fn reference(context: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError::Reference {
            context: context.into(),
            message: message.into(),
        }
    }
}

// ---------------------------------------------------------------------------
// Raw (wire) forms
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    version: u32,
    #[serde(default)]
    config: ScenarioConfig,
    #[serde(default)]
    subscribers: Vec<SubscriberSeed>,
    #[serde(default)]
    lss: Vec<String>,
    #[serde(default)]
    events: Vec<Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLinkQuality {
    at: SimMs,
    #[serde(default = "default_true")]
    reachable: bool,
    #[serde(default)]
    loss_rate: f64,
    #[serde(default = "default_latency")]
    latency_ms: SimMs,
    #[serde(default = "default_throughput")]
    throughput: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDisaster {
    at: SimMs,
    event_id: String,
    disaster_kind: DisasterKind,
    ttl_ms: SimMs,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUeAttach {
    at: SimMs,
    ue_id: String,
    credential: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUeRef {
    at: SimMs,
    ue_id: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAccessRequest {
    at: SimMs,
    ue_id: String,
    service: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfileUpdate {
    at: SimMs,
    subscriber_id: String,
    credential: String,
    sync_version: u64,
    #[serde(default = "default_log_version")]
    security_log_version: u64,
}

fn default_true() -> bool {
    true
}

fn default_latency() -> SimMs {
    10
}

fn default_throughput() -> f64 {
    1.0
}

fn default_log_version() -> u64 {
    1
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

/// Parse and validate a scenario document. On failure, every diagnostic
/// found is returned (at minimum one).
pub fn load_scenario(text: &str) -> Result<Scenario, Vec<ScenarioError>> {
    let raw: RawScenario = serde_json::from_str(text)
        .map_err(|e| vec![ScenarioError::schema("document", e.to_string())])?;

    let mut errors = Vec::new();
    if raw.version != 1 {
        errors.push(ScenarioError::schema(
            "version",
            format!("unsupported version {} (expected 1)", raw.version),
        ));
    }
    validate_config(&raw.config, &mut errors);

    let mut events = Vec::with_capacity(raw.events.len());
    for (index, value) in raw.events.iter().enumerate() {
        match parse_event(value) {
            Ok(event) => events.push(event),
            Err(message) => errors.push(ScenarioError::schema(format!("events[{index}]"), message)),
        }
    }

    // Only run cross-event checks if every event parsed.
    if errors.is_empty() {
        validate_semantics(&raw, &events, &mut errors);
    }

    if errors.is_empty() {
        Ok(Scenario {
            config: raw.config,
            subscribers: raw.subscribers,
            lss: raw.lss,
            events,
        })
    } else {
        Err(errors)
    }
}

fn parse_event(value: &Value) -> Result<ScenarioEvent, String> {
    let kind = value
        .get("kind")
        .and_then(Value::as_str)
        .ok_or("missing string field `kind`")?
        .to_owned();
    let mut body = value.clone();
    body.as_object_mut()
        .ok_or("event must be an object")?
        .remove("kind");

    match kind.as_str() {
        "link_quality" => {
            let raw: RawLinkQuality = serde_json::from_value(body).map_err(|e| e.to_string())?;
            Ok(ScenarioEvent::LinkQuality {
                at: raw.at,
                link: LinkSpec {
                    reachable: raw.reachable,
                    loss_rate: raw.loss_rate,
                    latency_ms: raw.latency_ms,
                    throughput: raw.throughput,
                },
            })
        }
        "disaster" => {
            let raw: RawDisaster = serde_json::from_value(body).map_err(|e| e.to_string())?;
            Ok(ScenarioEvent::Disaster {
                at: raw.at,
                event: DisasterEvent {
                    event_id: raw.event_id,
                    kind: raw.disaster_kind,
                    at: raw.at,
                    ttl_ms: raw.ttl_ms,
                },
            })
        }
        "ue_attach" => {
            let raw: RawUeAttach = serde_json::from_value(body).map_err(|e| e.to_string())?;
            Ok(ScenarioEvent::UeAttach {
                at: raw.at,
                ue_id: UeId::new(raw.ue_id),
                credential: raw.credential,
            })
        }
        "ue_detach" => {
            let raw: RawUeRef = serde_json::from_value(body).map_err(|e| e.to_string())?;
            Ok(ScenarioEvent::UeDetach {
                at: raw.at,
                ue_id: UeId::new(raw.ue_id),
            })
        }
        "ue_access_request" => {
            let raw: RawAccessRequest = serde_json::from_value(body).map_err(|e| e.to_string())?;
            Ok(ScenarioEvent::UeAccessRequest {
                at: raw.at,
                ue_id: UeId::new(raw.ue_id),
                service: raw.service,
            })
        }
        "central_profile_update" => {
            let raw: RawProfileUpdate = serde_json::from_value(body).map_err(|e| e.to_string())?;
            Ok(ScenarioEvent::CentralProfileUpdate {
                at: raw.at,
                profile: SubscriberProfile {
                    subscriber_id: raw.subscriber_id,
                    credential_digest: credential_digest(raw.credential.as_bytes()),
                    security_log_version: raw.security_log_version,
                    sync_version: raw.sync_version,
                    key_counter: 0,
                },
            })
        }
        other => Err(format!("unknown event kind `{other}`")),
    }
}

fn validate_config(config: &ScenarioConfig, errors: &mut Vec<ScenarioError>) {
    let mut check_fraction = |name: &str, v: f64| {
        if !(0.0..=1.0).contains(&v) {
            errors.push(ScenarioError::schema(
                format!("config.{name}"),
                format!("{v} is outside [0, 1]"),
            ));
        }
    };
    check_fraction("weak_loss_threshold", config.weak_loss_threshold);
    check_fraction("weak_throughput_threshold", config.weak_throughput_threshold);
    check_fraction("weak_drop_probability", config.weak_drop_probability);
    check_fraction(
        "weak_drop_probability_high",
        config.weak_drop_probability_high,
    );
    check_fraction("initial_link.loss_rate", config.initial_link.loss_rate);
    check_fraction("initial_link.throughput", config.initial_link.throughput);
    if config.weak_latency_threshold_ms <= 0.0 {
        errors.push(ScenarioError::schema(
            "config.weak_latency_threshold_ms",
            "must be positive",
        ));
    }
    if config.window_size == 0 {
        errors.push(ScenarioError::schema("config.window_size", "must be at least 1"));
    }
    if config.poll_period_ms == 0 {
        errors.push(ScenarioError::schema("config.poll_period_ms", "must be at least 1"));
    }
    if config.sync_period_ms == 0 {
        errors.push(ScenarioError::schema("config.sync_period_ms", "must be at least 1"));
    }
    if config.audit_retry_ms == 0 {
        errors.push(ScenarioError::schema("config.audit_retry_ms", "must be at least 1"));
    }
}

fn validate_semantics(
    raw: &RawScenario,
    events: &[ScenarioEvent],
    errors: &mut Vec<ScenarioError>,
) {
    // Sorted by time.
    for pair in events.windows(2) {
        if pair[1].at() < pair[0].at() {
            errors.push(ScenarioError::schema(
                "events",
                format!(
                    "events must be sorted by `at` ({} precedes {})",
                    pair[0].at(),
                    pair[1].at()
                ),
            ));
            break;
        }
    }

    // Unique subscribers; local store must be a subset of the directory.
    let mut ids = std::collections::BTreeSet::new();
    for sub in &raw.subscribers {
        if !ids.insert(sub.id.as_str()) {
            errors.push(ScenarioError::schema(
                "subscribers",
                format!("duplicate subscriber id `{}`", sub.id),
            ));
        }
    }
    for id in &raw.lss {
        if !ids.contains(id.as_str()) {
            errors.push(ScenarioError::reference(
                "lss",
                format!("`{id}` is not a listed subscriber"),
            ));
        }
    }

    // Detach and access requests need a prior attach.
    let mut attached = std::collections::BTreeSet::new();
    for (index, event) in events.iter().enumerate() {
        match event {
            ScenarioEvent::UeAttach { ue_id, .. } => {
                attached.insert(ue_id.clone());
            }
            ScenarioEvent::UeDetach { ue_id, .. } | ScenarioEvent::UeAccessRequest { ue_id, .. } => {
                if !attached.contains(ue_id) {
                    errors.push(ScenarioError::reference(
                        format!("events[{index}]"),
                        format!("device `{ue_id}` has no prior attach"),
                    ));
                }
            }
            ScenarioEvent::LinkQuality { at, link } => {
                if !(0.0..=1.0).contains(&link.loss_rate) {
                    errors.push(ScenarioError::schema(
                        format!("events[{index}]"),
                        format!("loss_rate {} is outside [0, 1]", link.loss_rate),
                    ));
                }
                if !(0.0..=1.0).contains(&link.throughput) {
                    errors.push(ScenarioError::schema(
                        format!("events[{index}]"),
                        format!("throughput {} is outside [0, 1]", link.throughput),
                    ));
                }
                let _ = at;
            }
            ScenarioEvent::Disaster { .. } | ScenarioEvent::CentralProfileUpdate { .. } => {}
        }
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
