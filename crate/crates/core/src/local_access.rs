//! Local authentication agent and local subscriber store.
//!
//! While the central connection is away, this pair authenticates known
//! subscribers against locally synchronized profiles and derives
//! access-stratum (AS) session key tokens for them. The agent's activation
//! follows the zone state: armed when disconnection begins, fully active
//! while the zone is lost, torn down (with key-cache zeroization) during
//! reconnection, and dormant whenever central AAA is reachable.
//!
//! Scope discipline is enforced at the type level: the key-token type has a
//! single `As` scope variant, so a non-access-stratum token cannot even be
//! constructed here — asking for one is answered with a `ScopeViolation`.
//! Tokens are derived as `H(credential_digest ‖ key_counter)` with SHA-256
//! and a big-endian 64-bit counter that increments on every derivation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audit::{AuditActor, AuditKind, OperationReport};
use crate::state_machine::TzState;
use crate::{SimMs, Trust, UeId};

// ---------------------------------------------------------------------------
// Profiles
// ---------------------------------------------------------------------------

/// Locally held copy of one subscriber's security profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscriberProfile {
    pub subscriber_id: String,
    /// SHA-256 digest of the subscriber's long-term credential.
    pub credential_digest: [u8; 32],
    pub security_log_version: u64,
    /// Replication version; higher central versions replace local copies.
    pub sync_version: u64,
    /// Monotone derivation counter feeding the key-token KDF.
    pub key_counter: u64,
}

/// Digest a raw credential the way profiles store it.
pub fn credential_digest(credential: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(credential);
    hasher.finalize().into()
}

// ---------------------------------------------------------------------------
// Activation
// ---------------------------------------------------------------------------

/// Activation ladder of the local authentication agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaaActivation {
    /// Central AAA reachable; the agent is dormant.
    Inactive,
    /// Disconnection under way; the agent is armed and may authenticate.
    Activated,
    /// Zone lost; the agent is the authentication authority.
    Active,
    /// Reconnection under way; the agent is torn down and zeroized.
    Deactivated,
}

/// Activation prescribed for each zone state.
pub fn activation_for(state: TzState) -> LaaActivation {
    match state {
        TzState::Connected | TzState::WeaklyConnected => LaaActivation::Inactive,
        TzState::Disconnecting => LaaActivation::Activated,
        TzState::Lost => LaaActivation::Active,
        TzState::Reconnecting => LaaActivation::Deactivated,
    }
}

// ---------------------------------------------------------------------------
// Key tokens
// ---------------------------------------------------------------------------

/// Key scopes this module can mint. There is exactly one: access stratum.
/// The absence of any other variant is the non-escalation guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyScope {
    #[serde(rename = "AS")]
    As,
}

/// What a caller may ask for; only [`KeyScopeRequest::As`] can succeed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyScopeRequest {
    As,
    Nas,
}

/// A derived session key token for one device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsKeyToken {
    pub ue_id: UeId,
    pub scope: KeyScope,
    /// Counter value the token was derived with.
    pub counter: u64,
    pub token: [u8; 32],
}

impl AsKeyToken {
    /// Short hex fingerprint for traces and logs.
    pub fn fingerprint(&self) -> String {
        self.token[..4].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// The token KDF: SHA-256 over the credential digest followed by the
/// big-endian counter.
pub fn derive_token(credential_digest: &[u8; 32], key_counter: u64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(credential_digest);
    hasher.update(key_counter.to_be_bytes());
    hasher.finalize().into()
}

// ---------------------------------------------------------------------------
// Errors and reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LocalAccessError {
    /// The agent only authenticates while armed or fully active.
    #[error("local authentication agent is {0:?}")]
    NotActive(LaaActivation),
    #[error("no local profile for subscriber {0}")]
    UnknownSubscriber(String),
    /// Asked for a key scope this module refuses to represent.
    #[error("only access-stratum keys can be derived locally")]
    ScopeViolation,
    /// Profile sync needs a live central connection.
    #[error("no central connectivity in state {0}")]
    NoConnectivity(TzState),
}

/// Outcome of applying one central profile snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncReport {
    pub applied: usize,
    pub skipped: usize,
}

// ---------------------------------------------------------------------------
// Entity
// ---------------------------------------------------------------------------

/// The local authentication agent plus its subscriber store.
#[derive(Debug, Clone)]
pub struct LocalAccess {
    activation: LaaActivation,
    tz_state: TzState,
    profiles: BTreeMap<String, SubscriberProfile>,
    /// Tokens minted this activation; zeroized on deactivation.
    issued: BTreeMap<UeId, AsKeyToken>,
}

impl LocalAccess {
    pub fn new(initial_profiles: Vec<SubscriberProfile>) -> Self {
        LocalAccess {
            activation: LaaActivation::Inactive,
            tz_state: TzState::Connected,
            profiles: initial_profiles
                .into_iter()
                .map(|p| (p.subscriber_id.clone(), p))
                .collect(),
            issued: BTreeMap::new(),
        }
    }

    pub fn activation(&self) -> LaaActivation {
        self.activation
    }

    pub fn profile(&self, subscriber_id: &str) -> Option<&SubscriberProfile> {
        self.profiles.get(subscriber_id)
    }

    pub fn issued_token_count(&self) -> usize {
        self.issued.len()
    }

    /// Follow a zone state change; entering `Deactivated` zeroizes the
    /// issued-token cache. Returns the new activation.
    pub fn set_activation(&mut self, tz_state: TzState) -> LaaActivation {
        self.tz_state = tz_state;
        self.activation = activation_for(tz_state);
        if self.activation == LaaActivation::Deactivated {
            self.issued.clear();
        }
        self.activation
    }

    fn can_authenticate(&self) -> bool {
        matches!(
            self.activation,
            LaaActivation::Activated | LaaActivation::Active
        )
    }

    /// Check a presented credential against the local profile store.
    ///
    /// A subscriber with no local profile authenticates as `Untrusted`
    /// (that is an outcome, not an error); only an inactive agent refuses
    /// outright. Every invocation yields a monitoring report.
    pub fn local_authenticate(
        &mut self,
        ue_id: &UeId,
        presented_credential: &[u8],
    ) -> Result<(Trust, OperationReport), LocalAccessError> {
        if !self.can_authenticate() {
            return Err(LocalAccessError::NotActive(self.activation));
        }
        let trust = match self.profiles.get(ue_id.as_str()) {
            Some(profile) if profile.credential_digest == credential_digest(presented_credential) => {
                Trust::Trusted
            }
            _ => Trust::Untrusted,
        };
        let report = OperationReport {
            actor: AuditActor::LocalAuth,
            kind: AuditKind::LocalAuthenticate,
            ue_id: ue_id.clone(),
            outcome: trust.to_string(),
        };
        Ok((trust, report))
    }

    /// Derive a fresh access-stratum key token for an authenticated device
    /// and advance the profile's key counter.
    pub fn derive_as_key(
        &mut self,
        ue_id: &UeId,
        scope: KeyScopeRequest,
    ) -> Result<(AsKeyToken, OperationReport), LocalAccessError> {
        if !self.can_authenticate() {
            return Err(LocalAccessError::NotActive(self.activation));
        }
        if scope != KeyScopeRequest::As {
            return Err(LocalAccessError::ScopeViolation);
        }
        let profile = self
            .profiles
            .get_mut(ue_id.as_str())
            .ok_or_else(|| LocalAccessError::UnknownSubscriber(ue_id.to_string()))?;
        let token = AsKeyToken {
            ue_id: ue_id.clone(),
            scope: KeyScope::As,
            counter: profile.key_counter,
            token: derive_token(&profile.credential_digest, profile.key_counter),
        };
        profile.key_counter += 1;
        self.issued.insert(ue_id.clone(), token.clone());
        let report = OperationReport {
            actor: AuditActor::LocalAuth,
            kind: AuditKind::KeyDerivation,
            ue_id: ue_id.clone(),
            outcome: format!("as:{}", token.fingerprint()),
        };
        Ok((token, report))
    }

    /// Apply a central profile snapshot: strictly newer `sync_version`s
    /// replace local copies (key counters merge by maximum so a counter
    /// never runs backwards), unknown subscribers are adopted, and stale or
    /// equal versions are skipped.
    pub fn sync_profiles(
        &mut self,
        snapshot: &[SubscriberProfile],
        _now: SimMs,
    ) -> Result<SyncReport, LocalAccessError> {
        if !matches!(
            self.tz_state,
            TzState::Connected | TzState::WeaklyConnected
        ) {
            return Err(LocalAccessError::NoConnectivity(self.tz_state));
        }
        let mut applied = 0;
        let mut skipped = 0;
        for incoming in snapshot {
            match self.profiles.get_mut(&incoming.subscriber_id) {
                None => {
                    self.profiles
                        .insert(incoming.subscriber_id.clone(), incoming.clone());
                    applied += 1;
                }
                Some(local) if incoming.sync_version > local.sync_version => {
                    let preserved_counter = local.key_counter.max(incoming.key_counter);
                    *local = incoming.clone();
                    local.key_counter = preserved_counter;
                    applied += 1;
                }
                Some(_) => skipped += 1,
            }
        }
        Ok(SyncReport { applied, skipped })
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
