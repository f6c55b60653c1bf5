//! Malicious agents: autonomous value generators that broadcast the same value
//! to every out-neighbor on a fixed schedule and ignore incoming messages.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    /// `offset + amplitude * sin(2 pi t / period)`.
    Sine {
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_period")]
        period: f64,
        #[serde(default = "default_offset")]
        offset: f64,
    },
    /// Unit-integrator state driven by a control redrawn uniformly from
    /// `[lo, hi]` at every send.
    RandomControl { lo: f64, hi: f64 },
}

fn default_amplitude() -> f64 {
    0.5
}
fn default_period() -> f64 {
    10.0
}
fn default_offset() -> f64 {
    0.5
}

impl Behavior {
    pub fn default_sine() -> Self {
        Behavior::Sine {
            amplitude: default_amplitude(),
            period: default_period(),
            offset: default_offset(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversarySpec {
    pub agent: NodeId,
    pub behavior: Behavior,
    /// Time between sends; the scenario's `epsilon` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub send_interval: Option<f64>,
    /// Starting state for `RandomControl`; the node's entry in the initial
    /// states when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<f64>,
}

impl AdversarySpec {
    pub fn new(agent: NodeId, behavior: Behavior) -> Self {
        AdversarySpec {
            agent,
            behavior,
            send_interval: None,
            initial: None,
        }
    }

    pub fn interval(&self, epsilon: f64) -> f64 {
        self.send_interval.unwrap_or(epsilon)
    }

    /// Problems with this spec, empty when valid.
    pub fn validate(&self, epsilon: f64) -> Vec<String> {
        let mut problems = Vec::new();
        if self.initial.is_some_and(|x| !x.is_finite()) {
            problems.push(format!(
                "adversary {}: initial state must be finite",
                self.agent
            ));
        }
        let interval = self.interval(epsilon);
        if !(interval >= epsilon && interval.is_finite()) {
            problems.push(format!(
                "adversary {}: send_interval {interval} is below epsilon {epsilon}",
                self.agent
            ));
        }
        match self.behavior {
            Behavior::Sine {
                period,
                amplitude,
                offset,
            } => {
                if !(period > 0.0) {
                    problems.push(format!("adversary {}: sine period must be > 0", self.agent));
                }
                if !amplitude.is_finite() || !offset.is_finite() || !period.is_finite() {
                    problems.push(format!(
                        "adversary {}: sine parameters must be finite",
                        self.agent
                    ));
                }
            }
            Behavior::RandomControl { lo, hi } => {
                if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                    problems.push(format!(
                        "adversary {}: random control range [{lo}, {hi}] is empty",
                        self.agent
                    ));
                }
            }
        }
        problems
    }
}

/// Running state of one adversary.
#[derive(Debug, Clone)]
pub struct AdversaryProcess {
    spec: AdversarySpec,
    rng: ChaCha8Rng,
    value: f64,
    control: f64,
    since: f64,
}

impl AdversaryProcess {
    pub fn new(spec: AdversarySpec, rng: ChaCha8Rng) -> Self {
        AdversaryProcess {
            spec,
            rng,
            value: spec.initial.unwrap_or(0.0),
            control: 0.0,
            since: 0.0,
        }
    }

    pub fn spec(&self) -> &AdversarySpec {
        &self.spec
    }

    /// Control currently driving a `RandomControl` adversary.
    pub fn control(&self) -> f64 {
        self.control
    }

    /// State at `now`, which must not precede the last send.
    pub fn value_at(&self, now: f64) -> f64 {
        match self.spec.behavior {
            Behavior::Sine {
                amplitude,
                period,
                offset,
            } => offset + amplitude * (std::f64::consts::TAU * now / period).sin(),
            Behavior::RandomControl { .. } => self.value + self.control * (now - self.since),
        }
    }

    /// The value broadcast at `now`. Random controls are redrawn afterwards.
    pub fn send(&mut self, now: f64) -> f64 {
        let value = self.value_at(now);
        if let Behavior::RandomControl { lo, hi } = self.spec.behavior {
            self.value = value;
            self.since = now;
            self.control = if lo < hi {
                self.rng.gen_range(lo..=hi)
            } else {
                lo
            };
        }
        value
    }
}

/// Value of an adversary at `now` given its running state.
pub fn adversary_value(process: &AdversaryProcess, now: f64) -> f64 {
    process.value_at(now)
}

/// Send instants `0, h, 2h, ...` up to and including `horizon`.
pub fn send_times(interval: f64, horizon: f64) -> impl Iterator<Item = f64> {
    (0u64..)
        .map(move |k| k as f64 * interval)
        .take_while(move |&t| t <= horizon)
}

/// Every `(time, value)` transmission an adversary makes over `[0, horizon]`.
pub fn schedule_adversary(
    spec: AdversarySpec,
    epsilon: f64,
    horizon: f64,
    rng: ChaCha8Rng,
) -> Vec<(f64, f64)> {
    let mut process = AdversaryProcess::new(spec, rng);
    send_times(spec.interval(epsilon), horizon)
        .map(|t| (t, process.send(t)))
        .collect()
}
