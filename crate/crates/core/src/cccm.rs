//! Central-cloud connection monitoring.
//!
//! The monitor periodically probes two management vantage points — the OSS
//! and the NFV orchestrator — over their respective interfaces, merges the
//! two readings pessimistically into one sample, and classifies the
//! connection over a sliding window of recent samples. In degraded states it
//! additionally produces a malfunction diagnosis (congestion, disaster,
//! attack, or unknown) and resource-priority hints that let
//! authentication, authorization, and subscriber-sync traffic jump the queue
//! on a weak link.
//!
//! Classification is windowed on purpose: a single bad sample never flips
//! the zone, and a single good sample never heals it.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emergency::DisasterEvent;
use crate::state_machine::{Ec4Class, TzState};
use crate::SimMs;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Tunables for polling and classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CccmConfig {
    /// How often a fresh probe round starts.
    pub poll_period_ms: SimMs,
    /// Number of samples in the classification window.
    pub window_size: usize,
    /// Mean loss fraction above which a reachable window counts as weak.
    pub weak_loss_threshold: f64,
    /// Mean round-trip latency above which a reachable window counts as weak.
    pub weak_latency_threshold_ms: f64,
    /// Mean throughput fraction below which a reachable window counts as weak.
    pub weak_throughput_threshold: f64,
}

impl Default for CccmConfig {
    fn default() -> Self {
        CccmConfig {
            poll_period_ms: 1_000,
            window_size: 3,
            weak_loss_threshold: 0.10,
            weak_latency_threshold_ms: 500.0,
            weak_throughput_threshold: 0.25,
        }
    }
}

// ---------------------------------------------------------------------------
// Samples and probes
// ---------------------------------------------------------------------------

/// One answered probe: the link figures measured from a single vantage
/// point. An unanswered probe has no reading at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReading {
    pub loss_rate: f64,
    pub latency_ms: SimMs,
    pub throughput: f64,
}

/// Merged outcome of one probe round.
///
/// `latency_ms` is present exactly when the sample is reachable; an
/// unreachable sample carries the pessimal loss and throughput so that the
/// record is self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ec4Sample {
    pub at: SimMs,
    pub reachable: bool,
    pub latency_ms: Option<SimMs>,
    pub loss_rate: f64,
    pub throughput: f64,
}

impl Ec4Sample {
    pub fn unreachable(at: SimMs) -> Self {
        Ec4Sample {
            at,
            reachable: false,
            latency_ms: None,
            loss_rate: 1.0,
            throughput: 0.0,
        }
    }
}

/// Merge the two vantage-point readings pessimistically: if either probe
/// went unanswered the sample is unreachable; otherwise take the worst of
/// each figure (max loss, max latency, min throughput).
pub fn poll_sources(
    oss: Option<&ProbeReading>,
    orchestrator: Option<&ProbeReading>,
    now: SimMs,
) -> Ec4Sample {
    match (oss, orchestrator) {
        (Some(a), Some(b)) => Ec4Sample {
            at: now,
            reachable: true,
            latency_ms: Some(a.latency_ms.max(b.latency_ms)),
            loss_rate: a.loss_rate.max(b.loss_rate),
            throughput: a.throughput.min(b.throughput),
        },
        _ => Ec4Sample::unreachable(now),
    }
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CccmError {
    #[error("classification window is empty")]
    EmptyWindow,
    /// Diagnosis is meaningful only while the zone is degraded.
    #[error("diagnosis requested in state {0}; only W and L are diagnosable")]
    WrongState(TzState),
}

/// Classify a full window of samples.
///
/// `Lost` exactly when every sample is unreachable. Otherwise the means are
/// taken over the reachable samples only, and any threshold breach makes
/// the window `Weak`; a clean window is `Healthy`.
pub fn classify_ec4(window: &[Ec4Sample], config: &CccmConfig) -> Result<Ec4Class, CccmError> {
    if window.is_empty() {
        return Err(CccmError::EmptyWindow);
    }
    let reachable: Vec<&Ec4Sample> = window.iter().filter(|s| s.reachable).collect();
    if reachable.is_empty() {
        return Ok(Ec4Class::Lost);
    }
    let n = reachable.len() as f64;
    let mean_loss = reachable.iter().map(|s| s.loss_rate).sum::<f64>() / n;
    let mean_latency = reachable
        .iter()
        .map(|s| s.latency_ms.unwrap_or(0) as f64)
        .sum::<f64>()
        / n;
    let mean_throughput = reachable.iter().map(|s| s.throughput).sum::<f64>() / n;
    if mean_loss > config.weak_loss_threshold
        || mean_latency > config.weak_latency_threshold_ms
        || mean_throughput < config.weak_throughput_threshold
    {
        Ok(Ec4Class::Weak)
    } else {
        Ok(Ec4Class::Healthy)
    }
}

// ---------------------------------------------------------------------------
// Diagnosis
// ---------------------------------------------------------------------------

/// Best-effort explanation for a degraded connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosisHypothesis {
    /// The link still carries traffic but drops part of it.
    Congestion,
    /// A disaster alarm is active; infrastructure damage is the best guess.
    Disaster,
    /// The link vanished abruptly out of a healthy window: suspected attack.
    Attack,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub at: SimMs,
    pub hypothesis: DiagnosisHypothesis,
    /// Short evidence strings, e.g. `disaster:eq-1` or `loss:0.30`.
    pub evidence: Vec<String>,
}

// ---------------------------------------------------------------------------
// Priority hints
// ---------------------------------------------------------------------------

/// Traffic class a priority hint speaks about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionClass {
    Authentication,
    Authorization,
    SubscriberSync,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Priority {
    High,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorityHint {
    pub function_class: FunctionClass,
    pub priority: Priority,
}

/// Resource-priority hints for the current state: on a weak link the
/// security-critical traffic classes are raised to `High` so that
/// authentication, authorization, and subscriber sync still get through;
/// everywhere else everything rides at `Normal`.
pub fn priority_hints(state: TzState) -> Vec<PriorityHint> {
    let elevated = state == TzState::WeaklyConnected;
    let class_priority = |class: FunctionClass| PriorityHint {
        function_class: class,
        priority: if elevated && class != FunctionClass::Other {
            Priority::High
        } else {
            Priority::Normal
        },
    };
    vec![
        class_priority(FunctionClass::Authentication),
        class_priority(FunctionClass::Authorization),
        class_priority(FunctionClass::SubscriberSync),
        class_priority(FunctionClass::Other),
    ]
}

// ---------------------------------------------------------------------------
// Monitor actor
// ---------------------------------------------------------------------------

/// Target of a single probe within a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeTarget {
    Oss,
    Orchestrator,
}

#[derive(Debug, Clone)]
struct ProbeRound {
    id: u64,
    oss: Option<ProbeReading>,
    orchestrator: Option<ProbeReading>,
}

/// What one monitor step produced; the harness turns these into messages.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonitorOutcome {
    /// A probe round closed and yielded this sample.
    pub sample: Option<Ec4Sample>,
    /// The window was full and classified to this value; report it.
    pub report: Option<Ec4Class>,
    /// Produced in degraded states alongside a classification.
    pub diagnosis: Option<Diagnosis>,
    /// Fresh probes to send, keyed by the new round id.
    pub probes: Option<u64>,
}

/// The connection monitor: owns the probe round life cycle, the sliding
/// window, the last classification, and the degradation bookkeeping that
/// feeds diagnosis.
#[derive(Debug, Clone)]
pub struct Cccm {
    config: CccmConfig,
    window: VecDeque<Ec4Sample>,
    round: Option<ProbeRound>,
    next_round_id: u64,
    tz_state: TzState,
    last_class: Option<Ec4Class>,
    /// Set when the window went straight from healthy to lost in one tick.
    abrupt_cut: bool,
    /// Disaster alarms forwarded by the emergency entity, by event id.
    disasters: BTreeMap<String, DisasterEvent>,
}

impl Cccm {
    pub fn new(config: CccmConfig) -> Self {
        Cccm {
            config,
            window: VecDeque::new(),
            round: None,
            next_round_id: 0,
            tz_state: TzState::Connected,
            last_class: None,
            abrupt_cut: false,
            disasters: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &CccmConfig {
        &self.config
    }

    pub fn last_class(&self) -> Option<Ec4Class> {
        self.last_class
    }

    /// Zone state as learned from the coordinator's broadcasts.
    pub fn set_state(&mut self, state: TzState) {
        self.tz_state = state;
    }

    /// Record a forwarded disaster alarm for diagnosis purposes.
    pub fn note_disaster(&mut self, event: DisasterEvent) {
        self.disasters.insert(event.event_id.clone(), event);
    }

    fn active_disaster_ids(&self, now: SimMs) -> Vec<String> {
        self.disasters
            .values()
            .filter(|d| d.is_active(now))
            .map(|d| d.event_id.clone())
            .collect()
    }

    /// Start of a poll period: close any still-open round pessimistically,
    /// then open a new one.
    pub fn on_poll_tick(&mut self, now: SimMs) -> MonitorOutcome {
        let mut outcome = self
            .round
            .take()
            .map(|round| self.close_round(round, now))
            .unwrap_or_default();
        let id = self.next_round_id;
        self.next_round_id += 1;
        self.round = Some(ProbeRound {
            id,
            oss: None,
            orchestrator: None,
        });
        outcome.probes = Some(id);
        outcome
    }

    /// A probe answer came back. Closes the round early once both vantage
    /// points have answered; late answers for a closed round are discarded.
    pub fn on_probe_response(
        &mut self,
        round_id: u64,
        target: ProbeTarget,
        reading: ProbeReading,
        now: SimMs,
    ) -> MonitorOutcome {
        let Some(round) = self.round.as_mut() else {
            return MonitorOutcome::default();
        };
        if round.id != round_id {
            return MonitorOutcome::default();
        }
        match target {
            ProbeTarget::Oss => round.oss = Some(reading),
            ProbeTarget::Orchestrator => round.orchestrator = Some(reading),
        }
        if round.oss.is_some() && round.orchestrator.is_some() {
            let round = self.round.take().expect("round present");
            self.close_round(round, now)
        } else {
            MonitorOutcome::default()
        }
    }

    fn close_round(&mut self, round: ProbeRound, now: SimMs) -> MonitorOutcome {
        let sample = poll_sources(round.oss.as_ref(), round.orchestrator.as_ref(), now);
        self.window.push_back(sample.clone());
        while self.window.len() > self.config.window_size {
            self.window.pop_front();
        }
        let mut outcome = MonitorOutcome {
            sample: Some(sample),
            ..MonitorOutcome::default()
        };
        if self.window.len() == self.config.window_size {
            let window: Vec<Ec4Sample> = self.window.iter().cloned().collect();
            let class = classify_ec4(&window, &self.config).expect("window is non-empty");
            self.note_class(class);
            outcome.report = Some(class);
            if matches!(self.tz_state, TzState::WeaklyConnected | TzState::Lost) {
                outcome.diagnosis = self.diagnose(now).ok();
            }
        }
        outcome
    }

    fn note_class(&mut self, class: Ec4Class) {
        match (self.last_class, class) {
            (Some(Ec4Class::Healthy), Ec4Class::Lost) => self.abrupt_cut = true,
            (_, Ec4Class::Healthy) => self.abrupt_cut = false,
            _ => {}
        }
        self.last_class = Some(class);
    }

    /// Explain the degradation from the current window and context.
    ///
    /// Ordered by strength of evidence: an active disaster wins, then
    /// observed lossy-but-alive traffic means congestion, then an abrupt
    /// healthy-to-lost cut suggests an attack; anything else is unknown.
    pub fn diagnose(&self, now: SimMs) -> Result<Diagnosis, CccmError> {
        if !matches!(self.tz_state, TzState::WeaklyConnected | TzState::Lost) {
            return Err(CccmError::WrongState(self.tz_state));
        }
        let disasters = self.active_disaster_ids(now);
        if !disasters.is_empty() {
            return Ok(Diagnosis {
                at: now,
                hypothesis: DiagnosisHypothesis::Disaster,
                evidence: disasters.iter().map(|id| format!("disaster:{id}")).collect(),
            });
        }
        let lossy: Vec<&Ec4Sample> = self
            .window
            .iter()
            .filter(|s| s.reachable && s.loss_rate > 0.0)
            .collect();
        if !lossy.is_empty() {
            let worst = lossy
                .iter()
                .map(|s| s.loss_rate)
                .fold(0.0_f64, |a, b| a.max(b));
            return Ok(Diagnosis {
                at: now,
                hypothesis: DiagnosisHypothesis::Congestion,
                evidence: vec![format!("loss:{worst:.2}")],
            });
        }
        if self.abrupt_cut {
            return Ok(Diagnosis {
                at: now,
                hypothesis: DiagnosisHypothesis::Attack,
                evidence: vec!["abrupt-cut".to_owned()],
            });
        }
        Ok(Diagnosis {
            at: now,
            hypothesis: DiagnosisHypothesis::Unknown,
            evidence: Vec::new(),
        })
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
