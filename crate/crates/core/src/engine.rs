//! Deterministic discrete-event simulation of a scenario.
//!
//! Controls take values in `{-1, 0, +1}`, so every trajectory is piecewise
//! linear and every event time has a closed form. The engine never integrates:
//! an agent's state at time `t` is `x_start + u * (t - t_start)` on its current
//! segment.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{AdversaryProcess, AdversarySpec};
use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, NodeId};
use crate::protocol::{
    event_triggered_receive, event_triggered_threshold_fire, self_triggered_fire, AgentState,
    ProtocolKind, Ternary,
};
use crate::seed::{derive_seed, Stream};

/// Per-message communication delay.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayModel {
    #[default]
    Zero,
    Fixed {
        d: f64,
    },
    UniformRandom {
        max: f64,
    },
}

impl DelayModel {
    /// The largest delay this model can produce.
    pub fn bound(&self) -> f64 {
        match *self {
            DelayModel::Zero => 0.0,
            DelayModel::Fixed { d } => d,
            DelayModel::UniformRandom { max } => max,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let bound = self.bound();
        if bound >= 0.0 && bound.is_finite() {
            Vec::new()
        } else {
            vec![format!(
                "delay bound must be a finite nonnegative number, got {bound}"
            )]
        }
    }
}

/// One delay drawn from `model`. Only `UniformRandom` consumes randomness.
pub fn draw_delay<R: Rng + ?Sized>(model: &DelayModel, rng: &mut R) -> f64 {
    match *model {
        DelayModel::Zero => 0.0,
        DelayModel::Fixed { d } => d,
        DelayModel::UniformRandom { max } => {
            if max > 0.0 {
                rng.gen_range(0.0..=max)
            } else {
                0.0
            }
        }
    }
}

/// A fully resolved single run: concrete graph, initial values and seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub graph: DirectedGraph,
    pub protocol: ProtocolKind,
    pub f: usize,
    pub epsilon: f64,
    pub delay: DelayModel,
    pub adversaries: Vec<AdversarySpec>,
    /// One entry per node; entries for adversaries are ignored.
    pub initial_states: Vec<f64>,
    /// One entry per node; entries for adversaries are ignored.
    pub initial_controls: Vec<Ternary>,
    pub horizon: f64,
    pub seed: u64,
    pub record_events: bool,
}

impl Scenario {
    pub fn new(graph: DirectedGraph, protocol: ProtocolKind, initial_states: Vec<f64>) -> Self {
        let n = graph.node_count();
        Scenario {
            graph,
            protocol,
            f: 0,
            epsilon: 0.1,
            delay: DelayModel::Zero,
            adversaries: Vec::new(),
            initial_states,
            initial_controls: vec![Ternary::Zero; n],
            horizon: 10.0,
            seed: 0,
            record_events: true,
        }
    }

    pub fn adversary_ids(&self) -> Vec<NodeId> {
        self.adversaries.iter().map(|a| a.agent).collect()
    }

    pub fn adversary_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.graph.node_count()];
        for a in &self.adversaries {
            if let Some(slot) = mask.get_mut(a.agent) {
                *slot = true;
            }
        }
        mask
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.graph.node_count();
        let mut problems = Vec::new();
        if n == 0 {
            problems.push("graph has no nodes".to_string());
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            problems.push(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            problems.push(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.initial_states.len() != n {
            problems.push(format!(
                "expected {n} initial states, got {}",
                self.initial_states.len()
            ));
        }
        if self.initial_states.iter().any(|x| !x.is_finite()) {
            problems.push("initial states must be finite".to_string());
        }
        if self.initial_controls.len() != n {
            problems.push(format!(
                "expected {n} initial controls, got {}",
                self.initial_controls.len()
            ));
        }
        problems.extend(self.delay.validate());
        let mut seen = vec![false; n];
        for a in &self.adversaries {
            if a.agent >= n {
                problems.push(format!(
                    "adversary id {} out of range for {n} nodes",
                    a.agent
                ));
                continue;
            }
            if std::mem::replace(&mut seen[a.agent], true) {
                problems.push(format!("adversary {} declared twice", a.agent));
            }
            problems.extend(a.validate(self.epsilon));
        }
        if let Err(e) = self.graph.validate_weights(self.graph.alpha().min(0.5)) {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    Delivery {
        from: NodeId,
        to: NodeId,
        value: f64,
        sent_at: f64,
    },
    AdversarySend {
        agent: NodeId,
        index: u64,
    },
    TimerExpiry {
        agent: NodeId,
    },
    ThresholdCross {
        agent: NodeId,
        generation: u64,
    },
}

impl EventKind {
    /// Tie-break rank at equal times: deliveries first so stores are fresh.
    fn priority(&self) -> u8 {
        match self {
            EventKind::Delivery { .. } => 0,
            EventKind::AdversarySend { .. } => 1,
            EventKind::TimerExpiry { .. } => 2,
            EventKind::ThresholdCross { .. } => 3,
        }
    }

    fn agent(&self) -> NodeId {
        match *self {
            EventKind::Delivery { to, .. } => to,
            EventKind::AdversarySend { agent, .. }
            | EventKind::TimerExpiry { agent }
            | EventKind::ThresholdCross { agent, .. } => agent,
        }
    }
}

/// A scheduled occurrence. Ordered by time, kind priority, agent, then
/// insertion sequence.
#[derive(Debug, Clone, Copy)]
pub struct SimEvent {
    pub time: f64,
    pub kind: EventKind,
    pub seq: u64,
}

impl SimEvent {
    fn key(&self) -> (f64, u8, NodeId, u64) {
        (self.time, self.kind.priority(), self.kind.agent(), self.seq)
    }
}

impl PartialEq for SimEvent {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for SimEvent {}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        let (ta, pa, aa, sa) = self.key();
        let (tb, pb, ab, sb) = other.key();
        ta.total_cmp(&tb)
            .then(pa.cmp(&pb))
            .then(aa.cmp(&ab))
            .then(sa.cmp(&sb))
    }
}

/// One linear piece of a trajectory: `x(t) = x_start + u * (t - t_start)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub t_start: f64,
    pub x_start: f64,
    /// Rate on this piece. Always -1, 0 or 1 for regular agents; adversary
    /// pieces carry the secant slope between consecutive sends.
    pub u: f64,
}

impl Segment {
    pub fn at(&self, t: f64) -> f64 {
        self.x_start + self.u * (t - self.t_start)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LogKind {
    Transmission,
    AdversarySend,
    Delivery,
    TimerExpiry,
    ThresholdCross,
}

impl LogKind {
    pub fn name(self) -> &'static str {
        match self {
            LogKind::Transmission => "transmission",
            LogKind::AdversarySend => "adversary_send",
            LogKind::Delivery => "delivery",
            LogKind::TimerExpiry => "timer_expiry",
            LogKind::ThresholdCross => "threshold_cross",
        }
    }
}

/// A processed event. `value` is the transmitted value for sends and
/// deliveries and the computed average for updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogEntry {
    pub time: f64,
    pub kind: LogKind,
    pub agent: NodeId,
    pub from: Option<NodeId>,
    pub to: Option<NodeId>,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AgentCounters {
    /// Discrete updates recomputing `u`.
    pub updates: u64,
    /// Broadcasts, each counted once regardless of fan-out.
    pub transmissions: u64,
}

/// Everything a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub protocol: ProtocolKind,
    pub f: usize,
    pub epsilon: f64,
    pub horizon: f64,
    pub seed: u64,
    pub adversary: Vec<bool>,
    pub segments: Vec<Vec<Segment>>,
    pub events: Vec<LogEntry>,
    pub counters: Vec<AgentCounters>,
    pub final_states: Vec<f64>,
    pub final_controls: Vec<Ternary>,
    pub last_transmission: Vec<Option<f64>>,
    /// Smallest spacing between consecutive transmissions, per agent.
    pub min_transmission_gap: Vec<Option<f64>>,
    /// Smallest spacing between consecutive timer expiries, per agent.
    pub min_update_gap: Vec<Option<f64>>,
    pub deliveries: u64,
    /// Largest realized message delay.
    pub max_delay: f64,
}

impl RunRecord {
    pub fn node_count(&self) -> usize {
        self.adversary.len()
    }

    pub fn regular(&self) -> Vec<NodeId> {
        (0..self.node_count())
            .filter(|&i| !self.adversary[i])
            .collect()
    }

    pub fn initial_state(&self, i: NodeId) -> f64 {
        self.segments[i].first().map_or(f64::NAN, |s| s.x_start)
    }

    /// State of agent `i` at time `t` reconstructed from its segments.
    pub fn state_at(&self, i: NodeId, t: f64) -> f64 {
        let segs = &self.segments[i];
        let idx = segs.partition_point(|s| s.t_start <= t);
        segs[idx.saturating_sub(1)].at(t)
    }

    pub fn write_trajectory_rows<W: Write>(
        &self,
        trial: usize,
        w: &mut csv::Writer<W>,
    ) -> Result<()> {
        for (agent, segs) in self.segments.iter().enumerate() {
            for s in segs {
                w.serialize((trial, agent, s.t_start, s.x_start, s.u))?;
            }
        }
        Ok(())
    }

    pub fn write_event_rows<W: Write>(&self, trial: usize, w: &mut csv::Writer<W>) -> Result<()> {
        for e in &self.events {
            w.serialize((trial, e.time, e.kind.name(), e.agent, e.from, e.to, e.value))?;
        }
        Ok(())
    }

    pub fn write_counter_rows<W: Write>(&self, trial: usize, w: &mut csv::Writer<W>) -> Result<()> {
        for (agent, c) in self.counters.iter().enumerate() {
            let role = if self.adversary[agent] {
                "adversary"
            } else {
                "regular"
            };
            w.serialize((trial, agent, role, c.updates, c.transmissions))?;
        }
        Ok(())
    }
}

pub const TRAJECTORY_HEADER: [&str; 5] = ["trial", "agent", "t_start", "x_start", "u"];
pub const EVENT_HEADER: [&str; 7] = ["trial", "time", "kind", "agent", "from", "to", "value"];
pub const COUNTER_HEADER: [&str; 5] = ["trial", "agent", "role", "updates", "transmissions"];

type RowWriter<W> = fn(&RunRecord, usize, &mut csv::Writer<W>) -> Result<()>;

fn write_all<W: Write>(
    records: &[RunRecord],
    out: W,
    header: &[&str],
    rows: RowWriter<W>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for (trial, r) in records.iter().enumerate() {
        rows(r, trial, &mut w)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Piecewise-linear trajectories, one row per segment; trial = index.
pub fn write_trajectories_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    write_all(
        records,
        out,
        &TRAJECTORY_HEADER,
        RunRecord::write_trajectory_rows,
    )
}

pub fn write_events_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    write_all(records, out, &EVENT_HEADER, RunRecord::write_event_rows)
}

pub fn write_counters_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    write_all(records, out, &COUNTER_HEADER, RunRecord::write_counter_rows)
}

/// Exact time at which `|last_broadcast - x| = eta` under `x' = u`, or `None`
/// when the agent is not moving. Returns `now` when the margin is already
/// nonnegative.
pub fn schedule_threshold_cross(agent: &AgentState, now: f64) -> Option<f64> {
    let u = agent.u.as_f64();
    if u == 0.0 {
        return None;
    }
    let drift = agent.x - agent.last_broadcast;
    if drift.abs() >= agent.eta {
        return Some(now);
    }
    // solve |drift + u s| = eta for the smallest s > 0; |u| = 1
    Some(now + (agent.eta - u * drift))
}

struct Engine<'a> {
    sc: &'a Scenario,
    adversary: Vec<bool>,
    agents: Vec<AgentState>,
    processes: Vec<Option<AdversaryProcess>>,
    queue: BinaryHeap<std::cmp::Reverse<SimEvent>>,
    seq: u64,
    delay_rng: ChaCha8Rng,
    generation: Vec<u64>,
    last_fire: Vec<Option<f64>>,
    record: RunRecord,
}

impl<'a> Engine<'a> {
    fn new(sc: &'a Scenario) -> Self {
        let n = sc.graph.node_count();
        let adversary = sc.adversary_mask();
        let agents: Vec<AgentState> = (0..n)
            .map(|i| AgentState::new(i, sc.initial_states[i], sc.initial_controls[i]))
            .collect();
        let mut processes: Vec<Option<AdversaryProcess>> = vec![None; n];
        for spec in &sc.adversaries {
            let rng = ChaCha8Rng::seed_from_u64(derive_seed(
                sc.seed,
                Stream::Adversary,
                spec.agent as u64,
            ));
            let mut spec = *spec;
            spec.initial.get_or_insert(sc.initial_states[spec.agent]);
            processes[spec.agent] = Some(AdversaryProcess::new(spec, rng));
        }
        let segments = (0..n)
            .map(|i| {
                if adversary[i] {
                    Vec::new()
                } else {
                    vec![Segment {
                        t_start: 0.0,
                        x_start: sc.initial_states[i],
                        u: sc.initial_controls[i].as_f64(),
                    }]
                }
            })
            .collect();
        let record = RunRecord {
            protocol: sc.protocol,
            f: sc.f,
            epsilon: sc.epsilon,
            horizon: sc.horizon,
            seed: sc.seed,
            adversary: adversary.clone(),
            segments,
            events: Vec::new(),
            counters: vec![AgentCounters::default(); n],
            final_states: vec![0.0; n],
            final_controls: vec![Ternary::Zero; n],
            last_transmission: vec![None; n],
            min_transmission_gap: vec![None; n],
            min_update_gap: vec![None; n],
            deliveries: 0,
            max_delay: 0.0,
        };
        Engine {
            sc,
            adversary,
            agents,
            processes,
            queue: BinaryHeap::new(),
            seq: 0,
            delay_rng: ChaCha8Rng::seed_from_u64(derive_seed(sc.seed, Stream::Delay, 0)),
            generation: vec![0; n],
            last_fire: vec![None; n],
            record,
        }
    }

    fn push(&mut self, time: f64, kind: EventKind) {
        if time > self.sc.horizon {
            return;
        }
        let event = SimEvent {
            time,
            kind,
            seq: self.seq,
        };
        self.seq += 1;
        self.queue.push(std::cmp::Reverse(event));
    }

    fn log(&mut self, entry: LogEntry) {
        if self.sc.record_events {
            self.record.events.push(entry);
        }
    }

    /// Brings agent `i`'s stored state up to `now` from its current segment.
    fn sync(&mut self, i: NodeId, now: f64) {
        let seg = *self.record.segments[i]
            .last()
            .expect("regular agents have a segment");
        let agent = &mut self.agents[i];
        agent.x = seg.at(now);
        agent.last_update_time = now;
    }

    fn note_control(&mut self, i: NodeId, now: f64) {
        let agent = &self.agents[i];
        let u = agent.u.as_f64();
        let segs = &mut self.record.segments[i];
        let last = segs.last().expect("regular agents have a segment");
        if last.u != u {
            if last.t_start == now {
                // replace a zero-length piece
                segs.pop();
            }
            segs.push(Segment {
                t_start: now,
                x_start: agent.x,
                u,
            });
        }
    }

    fn broadcast(&mut self, from: NodeId, value: f64, now: f64) {
        let counters = &mut self.record.counters[from];
        counters.transmissions += 1;
        if let Some(prev) = self.record.last_transmission[from] {
            let gap = now - prev;
            let slot = &mut self.record.min_transmission_gap[from];
            *slot = Some(slot.map_or(gap, |g: f64| g.min(gap)));
        }
        self.record.last_transmission[from] = Some(now);
        let kind = if self.adversary[from] {
            LogKind::AdversarySend
        } else {
            LogKind::Transmission
        };
        self.log(LogEntry {
            time: now,
            kind,
            agent: from,
            from: None,
            to: None,
            value: Some(value),
        });
        let sc = self.sc;
        for &to in sc.graph.out_neighbors(from) {
            if self.adversary[to] {
                continue;
            }
            let delay = draw_delay(&sc.delay, &mut self.delay_rng);
            self.record.max_delay = self.record.max_delay.max(delay);
            self.push(
                now + delay,
                EventKind::Delivery {
                    from,
                    to,
                    value,
                    sent_at: now,
                },
            );
        }
    }

    fn reschedule_threshold(&mut self, i: NodeId, now: f64) {
        self.generation[i] += 1;
        if let Some(t) = schedule_threshold_cross(&self.agents[i], now) {
            let generation = self.generation[i];
            self.push(
                t,
                EventKind::ThresholdCross {
                    agent: i,
                    generation,
                },
            );
        }
    }

    fn bootstrap(&mut self) {
        let n = self.agents.len();
        for i in 0..n {
            if self.processes[i].is_some() {
                self.push(0.0, EventKind::AdversarySend { agent: i, index: 0 });
                continue;
            }
            let x0 = self.agents[i].x;
            self.agents[i].last_broadcast = x0;
            self.agents[i].last_broadcast_time = Some(0.0);
            self.broadcast(i, x0, 0.0);
        }
        for i in 0..n {
            if self.adversary[i] {
                continue;
            }
            if self.sc.protocol.is_self_triggered() {
                self.agents[i].theta = 0.0;
                self.push(0.0, EventKind::TimerExpiry { agent: i });
            } else {
                self.agents[i].eta = self.sc.epsilon;
                self.agents[i].theta = f64::INFINITY;
                self.reschedule_threshold(i, 0.0);
            }
        }
    }

    fn handle(&mut self, event: SimEvent) -> Result<()> {
        let now = event.time;
        let sc = self.sc;
        match event.kind {
            EventKind::Delivery {
                from,
                to,
                value,
                sent_at,
            } => {
                self.record.deliveries += 1;
                debug_assert!(now >= sent_at);
                self.agents[to].store(from, value);
                self.log(LogEntry {
                    time: now,
                    kind: LogKind::Delivery,
                    agent: to,
                    from: Some(from),
                    to: Some(to),
                    value: Some(value),
                });
                if !sc.protocol.is_self_triggered() {
                    self.sync(to, now);
                    event_triggered_receive(
                        &mut self.agents[to],
                        &sc.graph,
                        sc.f,
                        sc.epsilon,
                        now,
                    )?;
                    self.record.counters[to].updates += 1;
                    self.note_control(to, now);
                    self.reschedule_threshold(to, now);
                }
            }
            EventKind::AdversarySend { agent, index } => {
                let process = self.processes[agent]
                    .as_mut()
                    .ok_or_else(|| Error::Internal(format!("{agent} is not an adversary")))?;
                let value = process.send(now);
                let interval = process.spec().interval(sc.epsilon);
                let next = (index + 1) as f64 * interval;
                let slope = (process.value_at(next) - value) / interval;
                let segs = &mut self.record.segments[agent];
                segs.push(Segment {
                    t_start: now,
                    x_start: value,
                    u: slope,
                });
                self.broadcast(agent, value, now);
                self.push(
                    next,
                    EventKind::AdversarySend {
                        agent,
                        index: index + 1,
                    },
                );
            }
            EventKind::TimerExpiry { agent } => {
                self.sync(agent, now);
                self.agents[agent].theta = 0.0;
                let out = self_triggered_fire(
                    &mut self.agents[agent],
                    &sc.graph,
                    sc.f,
                    sc.epsilon,
                    sc.protocol,
                    now,
                )?;
                self.record.counters[agent].updates += 1;
                if let Some(prev) = self.last_fire[agent] {
                    let gap = now - prev;
                    let slot = &mut self.record.min_update_gap[agent];
                    *slot = Some(slot.map_or(gap, |g: f64| g.min(gap)));
                }
                self.last_fire[agent] = Some(now);
                self.log(LogEntry {
                    time: now,
                    kind: LogKind::TimerExpiry,
                    agent,
                    from: None,
                    to: None,
                    value: Some(out.average),
                });
                if let Some(value) = out.broadcast {
                    self.broadcast(agent, value, now);
                }
                self.note_control(agent, now);
                let theta = self.agents[agent].theta;
                self.push(now + theta, EventKind::TimerExpiry { agent });
            }
            EventKind::ThresholdCross { agent, generation } => {
                if generation != self.generation[agent] {
                    return Ok(());
                }
                self.sync(agent, now);
                let value = event_triggered_threshold_fire(&mut self.agents[agent], now)?;
                self.log(LogEntry {
                    time: now,
                    kind: LogKind::ThresholdCross,
                    agent,
                    from: None,
                    to: None,
                    value: Some(value),
                });
                self.broadcast(agent, value, now);
                self.reschedule_threshold(agent, now);
            }
        }
        Ok(())
    }

    fn finish(mut self) -> RunRecord {
        let horizon = self.sc.horizon;
        for i in 0..self.agents.len() {
            if let Some(process) = &self.processes[i] {
                self.record.final_states[i] = process.value_at(horizon);
            } else {
                self.record.final_states[i] = self.record.segments[i]
                    .last()
                    .expect("regular agents have a segment")
                    .at(horizon);
                self.record.final_controls[i] = self.agents[i].u;
            }
        }
        self.record
    }
}

/// Simulates `scenario` from `t = 0` to its horizon.
///
/// Every regular agent broadcasts its initial state at `t = 0`; self-triggered
/// agents then fire at `t = 0` with whatever has been delivered. Events at
/// equal times run deliveries first, then adversary sends, timer expiries and
/// threshold crossings, each group by agent id and insertion order.
pub fn run(scenario: &Scenario) -> Result<RunRecord> {
    scenario.validate()?;
    let mut engine = Engine::new(scenario);
    engine.bootstrap();
    while let Some(std::cmp::Reverse(event)) = engine.queue.pop() {
        engine.handle(event)?;
    }
    Ok(engine.finish())
}
