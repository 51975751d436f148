//! Emergency-service catalog and availability policy.
//!
//! Every catalog entry carries one of three availability classes:
//!
//! - `DisasterSpecific` — dormant until a disaster alarm is active, then
//!   open to everyone without authentication (disaster alarms, evacuation
//!   guidance);
//! - `AlwaysWithPolicy` — always present, but gated by authentication while
//!   central AAA is reachable and rate-limited for unauthenticated users
//!   while it is not (positioning, SMS);
//! - `AlwaysNoAuth` — never refused to anyone in any state (the emergency
//!   call).
//!
//! The policy decision is a pure function of (service class, zone state,
//!   trust standing, disaster activity); the entity around it adds disaster
//! ingestion with exactly-once forwarding to the connection monitor, TTL
//! expiry, and the per-device token bucket backing `AllowRestricted`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::state_machine::TzState;
use crate::{SimMs, Trust, UeId};

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

/// Availability class of an emergency service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvailabilityClass {
    DisasterSpecific,
    AlwaysWithPolicy,
    AlwaysNoAuth,
}

/// A named emergency service. Names are plain strings so deployments can
/// extend the catalog; the standard five live in [`standard_catalog`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmergencyService {
    pub name: String,
    pub class: AvailabilityClass,
}

pub const DISASTER_ALARM: &str = "disaster_alarm";
pub const EVACUATION_GUIDANCE: &str = "evacuation_guidance";
pub const POSITIONING: &str = "positioning";
pub const EMERGENCY_CALL: &str = "emergency_call";
pub const SMS: &str = "sms";

/// The five standard services and their classes.
pub fn standard_catalog() -> Vec<EmergencyService> {
    let entry = |name: &str, class| EmergencyService {
        name: name.to_owned(),
        class,
    };
    vec![
        entry(DISASTER_ALARM, AvailabilityClass::DisasterSpecific),
        entry(EVACUATION_GUIDANCE, AvailabilityClass::DisasterSpecific),
        entry(POSITIONING, AvailabilityClass::AlwaysWithPolicy),
        entry(EMERGENCY_CALL, AvailabilityClass::AlwaysNoAuth),
        entry(SMS, AvailabilityClass::AlwaysWithPolicy),
    ]
}

// ---------------------------------------------------------------------------
// Disasters
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisasterKind {
    Earthquake,
    Fire,
    Explosion,
    Other,
}

/// A disaster alarm ingested from the public-security IoT feed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisasterEvent {
    pub event_id: String,
    pub kind: DisasterKind,
    pub at: SimMs,
    pub ttl_ms: SimMs,
}

impl DisasterEvent {
    /// Active from its start until its TTL elapses.
    pub fn is_active(&self, now: SimMs) -> bool {
        now >= self.at && now < self.at.saturating_add(self.ttl_ms)
    }
}

// ---------------------------------------------------------------------------
// Policy decisions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyVerdict {
    /// Usable, subject to `requires_auth`.
    Allow,
    /// Usable without authentication but behind a per-device rate limit.
    AllowRestricted,
    /// Not currently offered (a disaster-specific service outside a disaster).
    Inactive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub service: String,
    pub verdict: PolicyVerdict,
    pub requires_auth: bool,
}

/// The policy table as a pure function.
///
/// - `AlwaysNoAuth` is allowed to everyone, everywhere, with no
///   authentication — the zone's liveness floor.
/// - `DisasterSpecific` is allowed to everyone without authentication while
///   any disaster is active, and inactive otherwise.
/// - `AlwaysWithPolicy` requires authentication while central AAA is
///   reachable (C, W, R); in the disconnected regime (L, D) it stays fully
///   open to trusted devices and degrades to `AllowRestricted` for
///   untrusted ones.
pub fn decide_policy(
    service: &EmergencyService,
    tz_state: TzState,
    trust: Trust,
    any_active_disaster: bool,
) -> PolicyDecision {
    let (verdict, requires_auth) = match service.class {
        AvailabilityClass::AlwaysNoAuth => (PolicyVerdict::Allow, false),
        AvailabilityClass::DisasterSpecific => {
            if any_active_disaster {
                (PolicyVerdict::Allow, false)
            } else {
                (PolicyVerdict::Inactive, false)
            }
        }
        AvailabilityClass::AlwaysWithPolicy => {
            if tz_state.is_disconnected_regime() {
                match trust {
                    Trust::Trusted => (PolicyVerdict::Allow, false),
                    Trust::Untrusted => (PolicyVerdict::AllowRestricted, false),
                }
            } else {
                (PolicyVerdict::Allow, true)
            }
        }
    };
    PolicyDecision {
        service: service.name.clone(),
        verdict,
        requires_auth,
    }
}

// ---------------------------------------------------------------------------
// Entity
// ---------------------------------------------------------------------------

/// Per-device token bucket backing `AllowRestricted`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct TokenBucket {
    window_start: SimMs,
    used: u32,
}

/// Rate-limit settings for `AllowRestricted` usage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestrictedRate {
    pub capacity: u32,
    pub window_ms: SimMs,
}

impl Default for RestrictedRate {
    fn default() -> Self {
        RestrictedRate {
            capacity: 5,
            window_ms: 60_000,
        }
    }
}

/// The emergency-service entity: catalog, live disaster set, exactly-once
/// forwarding bookkeeping, and restricted-rate buckets.
#[derive(Debug, Clone)]
pub struct EmergencyServices {
    catalog: Vec<EmergencyService>,
    rate: RestrictedRate,
    tz_state: TzState,
    disasters: BTreeMap<String, DisasterEvent>,
    forwarded: BTreeSet<String>,
    buckets: BTreeMap<(UeId, String), TokenBucket>,
}

impl EmergencyServices {
    pub fn new(catalog: Vec<EmergencyService>, rate: RestrictedRate) -> Self {
        EmergencyServices {
            catalog,
            rate,
            tz_state: TzState::Connected,
            disasters: BTreeMap::new(),
            forwarded: BTreeSet::new(),
            buckets: BTreeMap::new(),
        }
    }

    pub fn standard(rate: RestrictedRate) -> Self {
        Self::new(standard_catalog(), rate)
    }

    pub fn set_state(&mut self, state: TzState) {
        self.tz_state = state;
    }

    pub fn catalog(&self) -> &[EmergencyService] {
        &self.catalog
    }

    pub fn service(&self, name: &str) -> Option<&EmergencyService> {
        self.catalog.iter().find(|s| s.name == name)
    }

    /// True while at least one ingested disaster is inside its TTL.
    pub fn any_active_disaster(&self, now: SimMs) -> bool {
        self.disasters.values().any(|d| d.is_active(now))
    }

    pub fn active_disasters(&self, now: SimMs) -> Vec<&DisasterEvent> {
        self.disasters.values().filter(|d| d.is_active(now)).collect()
    }

    /// Ingest a disaster alarm. Returns the event to forward to the
    /// connection monitor exactly once per event id; replays return `None`.
    pub fn on_disaster(&mut self, event: DisasterEvent) -> Option<DisasterEvent> {
        let first_time = self.forwarded.insert(event.event_id.clone());
        self.disasters.insert(event.event_id.clone(), event.clone());
        first_time.then_some(event)
    }

    /// Policy decision for a named service; `None` when the name is not an
    /// emergency service at all.
    pub fn decide(&self, name: &str, trust: Trust, now: SimMs) -> Option<PolicyDecision> {
        let service = self.service(name)?;
        Some(decide_policy(
            service,
            self.tz_state,
            trust,
            self.any_active_disaster(now),
        ))
    }

    /// Decisions for the whole catalog, in catalog order.
    pub fn available_services(&self, trust: Trust, now: SimMs) -> Vec<PolicyDecision> {
        let any = self.any_active_disaster(now);
        self.catalog
            .iter()
            .map(|s| decide_policy(s, self.tz_state, trust, any))
            .collect()
    }

    /// Names a device of the given trust standing may use right now: every
    /// service whose verdict is `Allow` without an unmet authentication
    /// requirement, plus the `AllowRestricted` ones.
    pub fn usable_set(&self, trust: Trust, now: SimMs) -> BTreeSet<String> {
        self.available_services(trust, now)
            .into_iter()
            .filter(|d| match d.verdict {
                PolicyVerdict::Allow => !d.requires_auth || trust == Trust::Trusted,
                PolicyVerdict::AllowRestricted => true,
                PolicyVerdict::Inactive => false,
            })
            .map(|d| d.service)
            .collect()
    }

    /// Consume one token of restricted use for `(ue, service)`. Returns
    /// false once the bucket for the current window is exhausted.
    pub fn consume_restricted(&mut self, ue: &UeId, service: &str, now: SimMs) -> bool {
        let key = (ue.clone(), service.to_owned());
        let bucket = self.buckets.entry(key).or_insert(TokenBucket {
            window_start: now,
            used: 0,
        });
        if now.saturating_sub(bucket.window_start) >= self.rate.window_ms {
            bucket.window_start = now;
            bucket.used = 0;
        }
        if bucket.used < self.rate.capacity {
            bucket.used += 1;
            true
        } else {
            false
        }
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
