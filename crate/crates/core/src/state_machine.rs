//! Five-state connectivity model for a trust zone.
//!
//! The zone is always in exactly one of five states named after the health
//! of the edge-to-central connection: three steady states — `Connected`
//! (C), `WeaklyConnected` (W), `Lost` (L) — and two transient states —
//! `Reconnecting` (R) and `Disconnecting` (D) — that exist only long enough
//! for the zone to run its transition protocol and then resolve on the next
//! tick.
//!
//! The legal transition graph is closed and small on purpose:
//!
//! ```text
//!   C → W, C → D, W → D, W → R, D → L, L → W, R → C
//! ```
//!
//! plus self-loops on the steady states. There is deliberately no `L → R`
//! edge: a zone that has fully lost its uplink can never jump straight into
//! reconnection; it must first observe the link again (`L → W`) and only
//! then re-enter service through `W → R → C`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::SimMs;

// ---------------------------------------------------------------------------
// States
// ---------------------------------------------------------------------------

/// One of the five connectivity states of a trust zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TzState {
    /// Steady: the central connection is healthy; central AAA governs.
    #[serde(rename = "C")]
    Connected,
    /// Steady: the central connection is degraded but alive.
    #[serde(rename = "W")]
    WeaklyConnected,
    /// Steady: the central connection is gone; the zone runs autonomously.
    #[serde(rename = "L")]
    Lost,
    /// Transient: the link has returned and the zone is flushing local trust.
    #[serde(rename = "R")]
    Reconnecting,
    /// Transient: the link has just been lost and the zone is sealing state.
    #[serde(rename = "D")]
    Disconnecting,
}

/// Whether a state persists until the link quality changes, or resolves by
/// itself after one dwell tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateCharacter {
    Steady,
    Transient,
}

impl TzState {
    /// All five states, in a fixed display order.
    pub const ALL: [TzState; 5] = [
        TzState::Connected,
        TzState::WeaklyConnected,
        TzState::Lost,
        TzState::Reconnecting,
        TzState::Disconnecting,
    ];

    /// Single-letter code used in traces and logs.
    pub fn code(self) -> &'static str {
        match self {
            TzState::Connected => "C",
            TzState::WeaklyConnected => "W",
            TzState::Lost => "L",
            TzState::Reconnecting => "R",
            TzState::Disconnecting => "D",
        }
    }

    pub fn character(self) -> StateCharacter {
        match self {
            TzState::Connected | TzState::WeaklyConnected | TzState::Lost => {
                StateCharacter::Steady
            }
            TzState::Reconnecting | TzState::Disconnecting => StateCharacter::Transient,
        }
    }

    pub fn is_steady(self) -> bool {
        self.character() == StateCharacter::Steady
    }

    pub fn is_transient(self) -> bool {
        self.character() == StateCharacter::Transient
    }

    /// True while the zone operates without central governance (the
    /// disconnected regime in which the local fallback is in charge).
    pub fn is_disconnected_regime(self) -> bool {
        matches!(self, TzState::Lost | TzState::Disconnecting)
    }
}

impl fmt::Display for TzState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

// ---------------------------------------------------------------------------
// Link classification input
// ---------------------------------------------------------------------------

/// Classified quality of the edge-to-central connection.
///
/// Ordered by health: `Lost < Weak < Healthy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ec4Class {
    Healthy,
    Weak,
    Lost,
}

impl Ec4Class {
    pub const ALL: [Ec4Class; 3] = [Ec4Class::Healthy, Ec4Class::Weak, Ec4Class::Lost];

    fn rank(self) -> u8 {
        match self {
            Ec4Class::Lost => 0,
            Ec4Class::Weak => 1,
            Ec4Class::Healthy => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Ec4Class::Healthy => "healthy",
            Ec4Class::Weak => "weak",
            Ec4Class::Lost => "lost",
        }
    }
}

impl PartialOrd for Ec4Class {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ec4Class {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.rank().cmp(&other.rank())
    }
}

impl fmt::Display for Ec4Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

// ---------------------------------------------------------------------------
// Transitions
// ---------------------------------------------------------------------------

/// Why a transition fired: a fresh link classification, or the automatic
/// resolution of a transient state after its dwell tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "class", rename_all = "snake_case")]
pub enum TransitionCause {
    Ec4(Ec4Class),
    TransientResolution,
}

/// One edge taken in the state graph, as recorded in the run trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub from: TzState,
    pub to: TzState,
    pub at: SimMs,
    pub cause: TransitionCause,
}

/// Error raised when a link classification is fed to a transient state.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    /// Transient states advance only by [`resolve_transient`]; link
    /// classifications must wait for the next tick.
    #[error("state {0} is transient and only advances by transient resolution")]
    TransientInput(TzState),
}

/// Whether `from → to` is an edge of the legal transition graph.
///
/// Steady self-loops are legal (and are the no-op case for repeated
/// identical classifications); transient self-loops are not, because a
/// transient state must resolve on the next tick.
pub fn is_valid_transition(from: TzState, to: TzState) -> bool {
    use TzState::*;
    matches!(
        (from, to),
        (Connected, WeaklyConnected)
            | (Connected, Disconnecting)
            | (WeaklyConnected, Disconnecting)
            | (WeaklyConnected, Reconnecting)
            | (Disconnecting, Lost)
            | (Lost, WeaklyConnected)
            | (Reconnecting, Connected)
            | (Connected, Connected)
            | (WeaklyConnected, WeaklyConnected)
            | (Lost, Lost)
    )
}

/// Target state for a steady state receiving a fresh link classification.
///
/// Degradation from `Connected` or `WeaklyConnected` to a lost link always
/// passes through `Disconnecting`, and recovery from `Lost` always passes
/// through `WeaklyConnected` — full immediate recovery is impossible by
/// construction.
pub fn next_state(current: TzState, ec4: Ec4Class) -> Result<TzState, StateError> {
    if current.is_transient() {
        return Err(StateError::TransientInput(current));
    }
    Ok(match (current, ec4) {
        (TzState::Connected, Ec4Class::Healthy) => TzState::Connected,
        (TzState::Connected, Ec4Class::Weak) => TzState::WeaklyConnected,
        (TzState::Connected, Ec4Class::Lost) => TzState::Disconnecting,
        (TzState::WeaklyConnected, Ec4Class::Healthy) => TzState::Reconnecting,
        (TzState::WeaklyConnected, Ec4Class::Weak) => TzState::WeaklyConnected,
        (TzState::WeaklyConnected, Ec4Class::Lost) => TzState::Disconnecting,
        (TzState::Lost, Ec4Class::Healthy | Ec4Class::Weak) => TzState::WeaklyConnected,
        (TzState::Lost, Ec4Class::Lost) => TzState::Lost,
        (TzState::Reconnecting | TzState::Disconnecting, _) => {
            unreachable!("transient input handled above")
        }
    })
}

/// Resolve a transient state after its dwell tick: `R → C`, `D → L`.
/// Steady states resolve to themselves, so the function is total and
/// idempotent on its own output.
pub fn resolve_transient(current: TzState) -> TzState {
    match current {
        TzState::Reconnecting => TzState::Connected,
        TzState::Disconnecting => TzState::Lost,
        steady => steady,
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    use proptest::prelude::*;

    // -- Transition graph --

    /// The ten legal edges, written out once so tests do not depend on the
    /// implementation's own matcher.
    const LEGAL_EDGES: [(TzState, TzState); 10] = {
        use TzState::*;
        [
            (Connected, WeaklyConnected),
            (Connected, Disconnecting),
            (WeaklyConnected, Disconnecting),
            (WeaklyConnected, Reconnecting),
            (Disconnecting, Lost),
            (Lost, WeaklyConnected),
            (Reconnecting, Connected),
            (Connected, Connected),
            (WeaklyConnected, WeaklyConnected),
            (Lost, Lost),
        ]
    };

    #[test]
    fn transition_graph_matches_edge_table_for_all_25_pairs() {
        for from in TzState::ALL {
            for to in TzState::ALL {
                let expected = LEGAL_EDGES.contains(&(from, to));
                assert_eq!(
                    is_valid_transition(from, to),
                    expected,
                    "edge {from} -> {to}"
                );
            }
        }
    }

    #[test]
    fn lost_cannot_jump_straight_to_reconnecting() {
        assert!(!is_valid_transition(TzState::Lost, TzState::Reconnecting));
    }

    #[test]
    fn transient_states_have_no_self_loops() {
        assert!(!is_valid_transition(
            TzState::Reconnecting,
            TzState::Reconnecting
        ));
        assert!(!is_valid_transition(
            TzState::Disconnecting,
            TzState::Disconnecting
        ));
    }

    #[test]
    fn every_state_is_reachable_from_connected() {
        let mut seen = BTreeSet::from([TzState::Connected]);
        let mut frontier = vec![TzState::Connected];
        while let Some(state) = frontier.pop() {
            for next in TzState::ALL {
                if state != next && is_valid_transition(state, next) && seen.insert(next) {
                    frontier.push(next);
                }
            }
        }
        assert_eq!(seen.len(), TzState::ALL.len());
    }

    // -- next_state --

    #[test]
    fn connected_with_weak_link_degrades_to_weakly_connected() {
        assert_eq!(
            next_state(TzState::Connected, Ec4Class::Weak),
            Ok(TzState::WeaklyConnected)
        );
    }

    #[test]
    fn lost_link_from_connected_enters_disconnecting() {
        assert_eq!(
            next_state(TzState::Connected, Ec4Class::Lost),
            Ok(TzState::Disconnecting)
        );
    }

    #[test]
    fn recovered_link_from_weak_enters_reconnecting() {
        assert_eq!(
            next_state(TzState::WeaklyConnected, Ec4Class::Healthy),
            Ok(TzState::Reconnecting)
        );
    }

    #[test]
    fn lost_recovers_only_through_weakly_connected() {
        assert_eq!(
            next_state(TzState::Lost, Ec4Class::Healthy),
            Ok(TzState::WeaklyConnected)
        );
        assert_eq!(
            next_state(TzState::Lost, Ec4Class::Weak),
            Ok(TzState::WeaklyConnected)
        );
    }

    #[test]
    fn transient_states_reject_link_input() {
        assert_eq!(
            next_state(TzState::Reconnecting, Ec4Class::Healthy),
            Err(StateError::TransientInput(TzState::Reconnecting))
        );
        assert_eq!(
            next_state(TzState::Disconnecting, Ec4Class::Lost),
            Err(StateError::TransientInput(TzState::Disconnecting))
        );
    }

    #[test]
    fn steady_self_loop_is_a_no_op_edge() {
        for state in [TzState::Connected, TzState::WeaklyConnected, TzState::Lost] {
            let class = match state {
                TzState::Connected => Ec4Class::Healthy,
                TzState::WeaklyConnected => Ec4Class::Weak,
                _ => Ec4Class::Lost,
            };
            assert_eq!(next_state(state, class), Ok(state));
        }
    }

    #[test]
    fn next_state_output_is_always_a_legal_edge() {
        for from in TzState::ALL.into_iter().filter(|s| s.is_steady()) {
            for class in Ec4Class::ALL {
                let to = next_state(from, class).expect("steady input");
                assert!(is_valid_transition(from, to), "{from} --{class}--> {to}");
            }
        }
    }

    // -- resolve_transient --

    #[test]
    fn transients_resolve_to_their_steady_targets() {
        assert_eq!(resolve_transient(TzState::Reconnecting), TzState::Connected);
        assert_eq!(resolve_transient(TzState::Disconnecting), TzState::Lost);
    }

    #[test]
    fn resolution_is_idempotent_on_steady_states() {
        for state in TzState::ALL {
            let once = resolve_transient(state);
            assert!(once.is_steady());
            assert_eq!(resolve_transient(once), once);
        }
    }

    // -- Ec4Class ordering --

    #[test]
    fn class_order_ranks_by_health() {
        assert!(Ec4Class::Healthy > Ec4Class::Weak);
        assert!(Ec4Class::Weak > Ec4Class::Lost);
    }

    // -- serialized codes --

    #[test]
    fn states_serialize_as_single_letter_codes() {
        assert_eq!(
            serde_json::to_string(&TzState::WeaklyConnected).unwrap(),
            "\"W\""
        );
        assert_eq!(
            serde_json::from_str::<TzState>("\"D\"").unwrap(),
            TzState::Disconnecting
        );
    }

    // -- Properties --

    proptest! {
        /// Driving an arbitrary classification sequence from C, resolving
        /// transients after one step, only ever walks legal edges and never
        /// dwells in a transient state for two consecutive steps.
        #[test]
        fn random_walks_stay_inside_the_graph(classes in proptest::collection::vec(0u8..3, 1..200)) {
            let mut state = TzState::Connected;
            for c in classes {
                let class = Ec4Class::ALL[c as usize];
                let next = if state.is_transient() {
                    resolve_transient(state)
                } else {
                    next_state(state, class).unwrap()
                };
                prop_assert!(is_valid_transition(state, next) || state.is_transient());
                prop_assert!(!(state.is_transient() && next.is_transient()));
                state = next;
            }
        }
    }
}
