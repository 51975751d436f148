//! Deterministic simulation kernel for an edge-cloud security trust zone.
//!
//! A trust zone is the set of security functions serving one edge cloud. Its
//! behavior is driven by the quality of the edge-to-central-cloud connection
//! (EC4): while the connection is healthy the central AAA servers govern
//! subscriber access; when it degrades or vanishes, a local fallback
//! authentication agent takes over against a locally synchronized subscriber
//! store, every security-critical operation is buffered for later audit, and
//! a catalog of emergency services stays reachable under per-situation
//! policy. When the connection returns, locally granted trust is flushed
//! through a staggered forced-reauthentication schedule.
//!
//! The crate is organized around the trust-zone entities plus the harness
//! that wires them together:
//!
//! - [`state_machine`] — the five-state connectivity model and its legal
//!   transition graph.
//! - [`cccm`] — central-cloud connection monitoring: probing, windowed
//!   classification, malfunction diagnosis, resource-priority hints.
//! - [`zone_manager`] — the coordinating entity: state transitions, access
//!   routing, device trust, and the reconnection flush protocol.
//! - [`local_access`] — local authentication agent plus local subscriber
//!   server: offline credential checks and AS-domain key derivation.
//! - [`audit`] — buffered security auditing with exactly-once delivery to
//!   the central auditing center.
//! - [`emergency`] — the emergency-service catalog and its availability
//!   policy.
//! - [`interconnect`] — the typed message bus restricted to the sanctioned
//!   inter-entity interfaces.
//! - [`scenario`] — the scripted scenario file format and its validation.
//! - [`trace`] — the replayable JSON-lines run trace.
//! - [`metrics`] — run metrics, recomputable offline from a trace alone.
//! - [`sim`] — the deterministic discrete-event loop tying it all together.
//!
//! Everything is deterministic: integer-millisecond time, seeded RNG, and
//! ordered containers throughout, so a `(scenario, seed, until)` triple
//! always produces a byte-identical trace.

pub mod audit;
pub mod cccm;
pub mod emergency;
pub mod interconnect;
pub mod local_access;
pub mod metrics;
pub mod scenario;
pub mod sim;
pub mod state_machine;
pub mod trace;
pub mod zone_manager;

use std::fmt;

use serde::{Deserialize, Serialize};

/// Simulation time in integer milliseconds since run start.
pub type SimMs = u64;

/// Identity of a user-equipment device attached to the edge cloud.
///
/// Ordering is lexicographic on the underlying string; every deterministic
/// tie-break in the kernel (forced-reauthentication order, table iteration)
/// relies on it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UeId(pub String);

impl UeId {
    pub fn new(id: impl Into<String>) -> Self {
        UeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for UeId {
    fn from(s: &str) -> Self {
        UeId(s.to_owned())
    }
}

/// Trust standing of a device as seen by the zone manager.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trust {
    Trusted,
    Untrusted,
}

impl fmt::Display for Trust {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trust::Trusted => f.write_str("trusted"),
            Trust::Untrusted => f.write_str("untrusted"),
        }
    }
}
