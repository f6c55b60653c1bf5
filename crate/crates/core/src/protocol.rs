//! Per-agent hybrid state machines.
//!
//! Between discrete events an agent flows as `x' = u`, with `u` frozen and the
//! self-triggered timer counting down at unit rate. Discrete events recompute
//! `u` from a deadzoned weighted average of stored neighbor values.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{msr_trim, ValueWithSource};
use crate::graph::{DirectedGraph, NodeId};

/// A control value restricted to `{-1, 0, +1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Ternary {
    Negative,
    #[default]
    Zero,
    Positive,
}

impl Ternary {
    /// `sign(z)` with `sign(0) = 0`.
    pub fn sign(z: f64) -> Self {
        if z > 0.0 {
            Ternary::Positive
        } else if z < 0.0 {
            Ternary::Negative
        } else {
            Ternary::Zero
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Ternary::Negative => -1.0,
            Ternary::Zero => 0.0,
            Ternary::Positive => 1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Ternary::Negative => -1,
            Ternary::Zero => 0,
            Ternary::Positive => 1,
        }
    }

    pub fn from_i8(v: i8) -> Option<Self> {
        match v {
            -1 => Some(Ternary::Negative),
            0 => Some(Ternary::Zero),
            1 => Some(Ternary::Positive),
            _ => None,
        }
    }

    pub fn is_zero(self) -> bool {
        self == Ternary::Zero
    }
}

impl fmt::Display for Ternary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_i8())
    }
}

impl Serialize for Ternary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.as_i8())
    }
}

impl<'de> Deserialize<'de> for Ternary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i8::deserialize(d)?;
        Ternary::from_i8(v)
            .ok_or_else(|| serde::de::Error::custom(format!("control must be -1, 0 or 1, got {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    /// Self-triggered ternary consensus over all neighbors, no trimming.
    BaselineSelfTriggered,
    /// Self-triggered with MSR trimming at every timer expiry.
    ResilientSelfTriggered,
    /// Event-triggered: update on every reception, transmit on threshold crossing.
    ResilientEventTriggered,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [
        ProtocolKind::BaselineSelfTriggered,
        ProtocolKind::ResilientSelfTriggered,
        ProtocolKind::ResilientEventTriggered,
    ];

    pub fn is_self_triggered(self) -> bool {
        !matches!(self, ProtocolKind::ResilientEventTriggered)
    }

    pub fn trims(self) -> bool {
        !matches!(self, ProtocolKind::BaselineSelfTriggered)
    }

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::BaselineSelfTriggered => "baseline_self_triggered",
            ProtocolKind::ResilientSelfTriggered => "resilient_self_triggered",
            ProtocolKind::ResilientEventTriggered => "resilient_event_triggered",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Hybrid state of one regular agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: NodeId,
    /// Consensus variable at `last_update_time`.
    pub x: f64,
    pub u: Ternary,
    /// Self-triggered countdown until the next update; infinite for
    /// event-triggered agents.
    pub theta: f64,
    /// Event-triggered transmission threshold.
    pub eta: f64,
    /// Latest value delivered from each neighbor (last write wins).
    pub stored: BTreeMap<NodeId, f64>,
    /// Own value at the last transmission.
    pub last_broadcast: f64,
    pub last_broadcast_time: Option<f64>,
    pub last_update_time: f64,
}

impl AgentState {
    pub fn new(id: NodeId, x: f64, u: Ternary) -> Self {
        AgentState {
            id,
            x,
            u,
            theta: 0.0,
            eta: 0.0,
            stored: BTreeMap::new(),
            last_broadcast: x,
            last_broadcast_time: None,
            last_update_time: 0.0,
        }
    }

    pub fn store(&mut self, from: NodeId, value: f64) {
        self.stored.insert(from, value);
    }

    /// `|x - last_broadcast| - eta`; a transmission is due when this is `>= 0`.
    pub fn trigger_margin(&self) -> f64 {
        (self.last_broadcast - self.x).abs() - self.eta
    }

    fn candidates(&self) -> Vec<ValueWithSource> {
        self.stored
            .iter()
            .map(|(&source, &value)| ValueWithSource { source, value })
            .collect()
    }
}

/// Outcome of one discrete update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub average: f64,
    pub members: Vec<NodeId>,
    pub broadcast: Option<f64>,
}

/// `f_eps(z)`: `z` when `|z| >= eps`, otherwise 0.
pub fn deadzone(z: f64, eps: f64) -> f64 {
    if z.abs() >= eps {
        z
    } else {
        0.0
    }
}

/// `sum_{j in members} a_ij * (stored[j] - reference)`.
pub fn weighted_average(
    agent: &AgentState,
    g: &DirectedGraph,
    members: &[NodeId],
    reference: f64,
) -> Result<f64> {
    let mut sum = 0.0;
    for &j in members {
        let value = agent.stored.get(&j).ok_or_else(|| {
            Error::Internal(format!("agent {} has no stored value from {j}", agent.id))
        })?;
        let weight = g.weight(agent.id, j).ok_or_else(|| {
            Error::Internal(format!("{j} is not an in-neighbor of agent {}", agent.id))
        })?;
        sum += weight * (value - reference);
    }
    Ok(sum)
}

fn filtered_members(
    agent: &AgentState,
    f: usize,
    reference: f64,
    trims: bool,
) -> Result<Vec<NodeId>> {
    if trims {
        msr_trim(reference, &agent.candidates(), f)
    } else {
        Ok(agent.stored.keys().copied().collect())
    }
}

/// Timer expiry of a self-triggered agent at `now`.
///
/// Broadcasts the current state if the agent was moving, trims (unless
/// baseline), and sets `u = sign(f_eps(ave))`, `theta = max(|ave|, eps)`.
pub fn self_triggered_fire(
    agent: &mut AgentState,
    g: &DirectedGraph,
    f: usize,
    eps: f64,
    kind: ProtocolKind,
    now: f64,
) -> Result<UpdateOutcome> {
    if !kind.is_self_triggered() {
        return Err(Error::Internal(format!("{kind} has no timer")));
    }
    if agent.theta > 0.0 {
        return Err(Error::Internal(format!(
            "agent {} fired at t={now} with theta={}",
            agent.id, agent.theta
        )));
    }
    let broadcast = if !agent.u.is_zero() && agent.last_broadcast_time != Some(now) {
        agent.last_broadcast = agent.x;
        agent.last_broadcast_time = Some(now);
        Some(agent.x)
    } else {
        None
    };
    let members = filtered_members(agent, f, agent.x, kind.trims())?;
    let average = weighted_average(agent, g, &members, agent.x)?;
    agent.u = Ternary::sign(deadzone(average, eps));
    agent.theta = average.abs().max(eps);
    agent.last_update_time = now;
    Ok(UpdateOutcome {
        average,
        members,
        broadcast,
    })
}

/// Reception-time update of an event-triggered agent. The new value must
/// already be stored. Trimming and the average are taken relative to the
/// agent's own last broadcast value.
pub fn event_triggered_receive(
    agent: &mut AgentState,
    g: &DirectedGraph,
    f: usize,
    eps: f64,
    now: f64,
) -> Result<UpdateOutcome> {
    let reference = agent.last_broadcast;
    let members = filtered_members(agent, f, reference, true)?;
    let average = weighted_average(agent, g, &members, reference)?;
    agent.u = Ternary::sign(deadzone(average, eps));
    agent.eta = average.abs().max(eps);
    agent.theta = f64::INFINITY;
    agent.last_update_time = now;
    Ok(UpdateOutcome {
        average,
        members,
        broadcast: None,
    })
}

/// Threshold crossing of an event-triggered agent: resets the broadcast
/// reference to the current state and returns the value to transmit.
pub fn event_triggered_threshold_fire(agent: &mut AgentState, now: f64) -> Result<f64> {
    let margin = agent.trigger_margin();
    // crossing times come from closed-form arithmetic and may land an ulp short
    let slack = 1e-12 * (1.0 + agent.eta.abs() + agent.x.abs());
    if margin < -slack {
        return Err(Error::Internal(format!(
            "agent {} threshold fire at t={now} with margin {margin}",
            agent.id
        )));
    }
    agent.last_broadcast = agent.x;
    agent.last_broadcast_time = Some(now);
    Ok(agent.x)
}

/// Unit-rate linear flow over an event-free interval of length `dt`.
pub fn advance_state(agent: &mut AgentState, dt: f64) -> Result<()> {
    if dt < 0.0 {
        return Err(Error::Internal(format!("negative step {dt}")));
    }
    let theta = agent.theta - dt;
    if theta < -1e-12 * (1.0 + agent.theta) {
        return Err(Error::Internal(format!(
            "agent {} stepped {dt} past its timer ({})",
            agent.id, agent.theta
        )));
    }
    agent.x += agent.u.as_f64() * dt;
    agent.theta = theta.max(0.0);
    agent.last_update_time += dt;
    Ok(())
}

/// Largest sensitivity `eps` for which consensus at error level `c` is
/// guaranteed: `w^m (1 - w) c / (1 - w^m)` with `m = (tau + 1) n - 1`.
pub fn epsilon_bound(omega: f64, n: usize, tau: usize, c: f64) -> f64 {
    let m = ((tau + 1) * n).saturating_sub(1) as i32;
    let wm = omega.powi(m);
    wm * (1.0 - omega) * c / (1.0 - wm)
}

/// The `n x (tau + 1) n` update matrix `[I 0] - [D - A_0, -A_1, ..., -A_tau]`.
///
/// `delays[(i, j)]` is the step delay on `j -> i` (missing means 0) and `e[i]`
/// the steps since `i`'s last update. `a_ij` lands in block `e_i + tau_ij`;
/// the self-weight sits on the diagonal of block 0.
pub fn build_delay_augmented_matrix(
    g: &DirectedGraph,
    delays: &BTreeMap<(NodeId, NodeId), usize>,
    e: &[usize],
    tau: usize,
) -> Result<Array2<f64>> {
    let n = g.node_count();
    if e.len() != n {
        return Err(Error::Config(vec![format!(
            "expected {n} update ages, got {}",
            e.len()
        )]));
    }
    let mut w = Array2::<f64>::zeros((n, (tau + 1) * n));
    for i in 0..n {
        w[[i, i]] = g.self_weight(i);
        for edge in g.in_edges(i) {
            let j = edge.from;
            let total = e[i] + delays.get(&(i, j)).copied().unwrap_or(0);
            if total > tau {
                return Err(Error::DelayBound {
                    from: j,
                    to: i,
                    total,
                    bound: tau,
                });
            }
            w[[i, total * n + j]] += edge.weight;
        }
    }
    Ok(w)
}
