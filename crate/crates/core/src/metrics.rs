//! Post-run verdicts and aggregation.

use serde::Serialize;

use crate::engine::{AgentCounters, RunRecord};
use crate::graph::NodeId;

/// Relative tolerance for interval membership. Trajectory endpoints come from
/// sums of event times and may sit an ulp outside the exact hull.
const SAFETY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusOutcome {
    Reached,
    NotReached,
    /// Some regular agent was still moving at the horizon.
    Inconclusive,
}

impl ConsensusOutcome {
    pub fn name(self) -> &'static str {
        match self {
            ConsensusOutcome::Reached => "reached",
            ConsensusOutcome::NotReached => "not_reached",
            ConsensusOutcome::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsensusVerdict {
    pub safety_holds: bool,
    pub safety_interval: (f64, f64),
    pub final_spread: f64,
    pub c: f64,
    pub consensus_at_c: bool,
    pub outcome: ConsensusOutcome,
    pub quiesced: bool,
    pub quiescence_time: Option<f64>,
    /// Regular agents that transmitted strictly after the quiescence time.
    pub transmissions_after_quiescence: u64,
    pub per_agent_counters: Vec<(NodeId, AgentCounters)>,
}

/// `[min, max]` of the regular agents' initial states.
pub fn safety_interval(record: &RunRecord, regular: &[NodeId]) -> (f64, f64) {
    regular
        .iter()
        .map(|&i| record.initial_state(i))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x), hi.max(x))
        })
}

/// Largest distance any regular trajectory strays outside the safety
/// interval. Segments are linear, so endpoints suffice.
pub fn safety_violation(record: &RunRecord, regular: &[NodeId]) -> f64 {
    let (lo, hi) = safety_interval(record, regular);
    let mut worst = 0.0f64;
    for &i in regular {
        let segs = &record.segments[i];
        for (k, s) in segs.iter().enumerate() {
            let end = segs.get(k + 1).map_or(record.horizon, |n| n.t_start);
            for x in [s.x_start, s.at(end)] {
                worst = worst.max(lo - x).max(x - hi);
            }
        }
    }
    worst
}

/// Whether every regular trajectory stays within `[min x(0), max x(0)]`.
pub fn check_safety(record: &RunRecord, regular: &[NodeId]) -> bool {
    if regular.is_empty() {
        return true;
    }
    let (lo, hi) = safety_interval(record, regular);
    let scale = 1.0 + lo.abs().max(hi.abs());
    safety_violation(record, regular) <= SAFETY_SLACK * scale
}

/// `max - min` of the regular final states.
pub fn final_spread(record: &RunRecord, regular: &[NodeId]) -> f64 {
    let (lo, hi) = regular
        .iter()
        .map(|&i| record.final_states[i])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x), hi.max(x))
        });
    if regular.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Fraction of the horizon at the end of a run during which regular agents
/// must be motionless for the run to count as quiesced.
pub const DEFAULT_SETTLE_FRACTION: f64 = 0.25;

pub fn default_settle_window(horizon: f64) -> f64 {
    horizon * DEFAULT_SETTLE_FRACTION
}

/// End of the last regular motion: the earliest time after which no agent in
/// `regular` moves, or `None` if one of them is still moving at the horizon.
pub fn quiescence_time(record: &RunRecord, regular: &[NodeId]) -> Option<f64> {
    let mut latest = 0.0f64;
    for &i in regular {
        if !record.final_controls[i].is_zero() {
            return None;
        }
        let segs = &record.segments[i];
        if let Some(pos) = segs.iter().rposition(|s| s.u != 0.0) {
            let stop = segs.get(pos + 1).map_or(record.horizon, |s| s.t_start);
            latest = latest.max(stop);
        }
    }
    Some(latest)
}

/// Whether the regular agents stopped for good: all controls are zero at the
/// horizon and nobody moved during the final `settle` time units. A momentary
/// pause while an adversary keeps pulling does not count.
pub fn is_quiesced(record: &RunRecord, regular: &[NodeId], settle: f64) -> bool {
    quiescence_time(record, regular).is_some_and(|tq| tq <= record.horizon - settle)
}

/// Three-valued consensus check at error level `c` with the default settle
/// window.
pub fn consensus_outcome(record: &RunRecord, regular: &[NodeId], c: f64) -> ConsensusOutcome {
    consensus_outcome_with(record, regular, c, default_settle_window(record.horizon))
}

pub fn consensus_outcome_with(
    record: &RunRecord,
    regular: &[NodeId],
    c: f64,
    settle: f64,
) -> ConsensusOutcome {
    if !is_quiesced(record, regular, settle) {
        ConsensusOutcome::Inconclusive
    } else if final_spread(record, regular) <= c {
        ConsensusOutcome::Reached
    } else {
        ConsensusOutcome::NotReached
    }
}

/// True iff the regular agents quiesced within `c` of each other.
pub fn check_consensus(record: &RunRecord, regular: &[NodeId], c: f64) -> bool {
    consensus_outcome(record, regular, c) == ConsensusOutcome::Reached
}

pub fn verdict(record: &RunRecord, regular: &[NodeId], c: f64) -> ConsensusVerdict {
    verdict_with(record, regular, c, default_settle_window(record.horizon))
}

pub fn verdict_with(
    record: &RunRecord,
    regular: &[NodeId],
    c: f64,
    settle: f64,
) -> ConsensusVerdict {
    let quiesced = is_quiesced(record, regular, settle);
    let quiescence_time = quiescence_time(record, regular).filter(|_| quiesced);
    let outcome = consensus_outcome_with(record, regular, c, settle);
    let transmissions_after_quiescence = match quiescence_time {
        Some(tq) => regular
            .iter()
            .filter(|&&i| record.last_transmission[i].is_some_and(|t| t > tq))
            .count() as u64,
        None => 0,
    };
    ConsensusVerdict {
        safety_holds: check_safety(record, regular),
        safety_interval: safety_interval(record, regular),
        final_spread: final_spread(record, regular),
        c,
        consensus_at_c: outcome == ConsensusOutcome::Reached,
        outcome,
        quiesced,
        quiescence_time,
        transmissions_after_quiescence,
        per_agent_counters: regular.iter().map(|&i| (i, record.counters[i])).collect(),
    }
}

/// Mean updates and mean transmissions per regular agent per run, or `None`
/// when there is nothing to average.
pub fn aggregate_counters(records: &[RunRecord], regular: &[NodeId]) -> Option<(f64, f64)> {
    let samples = (records.len() * regular.len()) as f64;
    if samples == 0.0 {
        return None;
    }
    let (mut updates, mut transmissions) = (0u64, 0u64);
    for r in records {
        for &i in regular {
            updates += r.counters[i].updates;
            transmissions += r.counters[i].transmissions;
        }
    }
    Some((updates as f64 / samples, transmissions as f64 / samples))
}

/// Fraction of verdicts that reached consensus.
pub fn success_rate(verdicts: &[ConsensusVerdict]) -> f64 {
    if verdicts.is_empty() {
        return 0.0;
    }
    verdicts.iter().filter(|v| v.consensus_at_c).count() as f64 / verdicts.len() as f64
}
