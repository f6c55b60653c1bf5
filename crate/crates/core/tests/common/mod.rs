//! Checks shared by the property tests and the acceptance suite. Each returns
//! `Err` with a description of the first violation.
#![allow(dead_code)]

use std::collections::BTreeMap;

use resilient_consensus::adversary::{AdversarySpec, Behavior};
use resilient_consensus::engine::{run, DelayModel, LogKind, RunRecord, Scenario};
use resilient_consensus::filter::{msr_trim, ValueWithSource};
use resilient_consensus::graph::{DirectedGraph, NodeId};
use resilient_consensus::protocol::{build_delay_augmented_matrix, ProtocolKind};

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub fn candidates(values: &[f64]) -> Vec<ValueWithSource> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| ValueWithSource::new(i + 1, v))
        .collect()
}

/// Graph on `n` nodes whose edges are picked by the bits of `bits`.
pub fn graph_from_bits(n: usize, bits: u64, undirected: bool) -> DirectedGraph {
    let mut g = DirectedGraph::new(n);
    let mut k = 0;
    for i in 0..n {
        for j in 0..n {
            if i == j || (undirected && j < i) {
                continue;
            }
            if bits >> (k % 64) & 1 == 1 {
                if undirected {
                    g.add_bidirectional(i, j).unwrap();
                } else {
                    g.add_edge(i, j).unwrap();
                }
            }
            k += 1;
        }
    }
    g.with_uniform_weights()
}

/// Direct transcription of the robustness definition over explicit subsets.
pub fn robust_oracle(g: &DirectedGraph, r: usize, s: usize) -> bool {
    let n = g.node_count();
    let reach = |set: &[NodeId]| -> usize {
        set.iter()
            .filter(|&&v| {
                g.in_edges(v)
                    .iter()
                    .filter(|e| !set.contains(&e.from))
                    .count()
                    >= r
            })
            .count()
    };
    // label every node 0 (outside), 1 (in V1) or 2 (in V2)
    for code in 0..3usize.pow(n as u32) {
        let (mut v1, mut v2) = (Vec::new(), Vec::new());
        let mut c = code;
        for v in 0..n {
            match c % 3 {
                1 => v1.push(v),
                2 => v2.push(v),
                _ => {}
            }
            c /= 3;
        }
        if v1.is_empty() || v2.is_empty() {
            continue;
        }
        let (x1, x2) = (reach(&v1), reach(&v2));
        if !(x1 == v1.len() || x2 == v2.len() || x1 + x2 >= s) {
            return false;
        }
    }
    true
}

/// Cardinality, extremes-first removal and survival of ties.
pub fn msr_shape(own: f64, values: &[f64], f: usize) -> Check {
    let cands = candidates(values);
    let kept = msr_trim(own, &cands, f).map_err(|e| e.to_string())?;
    let above = values.iter().filter(|&&v| v > own).count();
    let below = values.iter().filter(|&&v| v < own).count();
    ensure!(
        kept.len() == values.len() - above.min(f) - below.min(f),
        "kept {} of {} with f={f}",
        kept.len(),
        values.len()
    );
    ensure!(
        kept.windows(2).all(|w| w[0] < w[1]),
        "survivors not sorted: {kept:?}"
    );
    let kept_vals: Vec<f64> = cands
        .iter()
        .filter(|c| kept.contains(&c.source))
        .map(|c| c.value)
        .collect();
    for c in &cands {
        if kept.contains(&c.source) {
            continue;
        }
        ensure!(c.value != own, "dropped a value equal to the reference");
        if c.value > own {
            ensure!(
                kept_vals.iter().all(|&k| k <= c.value),
                "dropped {} above a survivor",
                c.value
            );
        } else {
            ensure!(
                kept_vals.iter().all(|&k| k >= c.value),
                "dropped {} below a survivor",
                c.value
            );
        }
    }
    Ok(())
}

/// With at most `f` arbitrary values mixed in, every survivor lies in the hull
/// of the reference and the honest values.
pub fn msr_sandwich(own: f64, honest: &[f64], faulty: &[f64], f: usize) -> Check {
    let mut all = honest.to_vec();
    all.extend_from_slice(faulty);
    let cands = candidates(&all);
    let kept = msr_trim(own, &cands, f).map_err(|e| e.to_string())?;
    let lo = honest.iter().copied().fold(own, f64::min);
    let hi = honest.iter().copied().fold(own, f64::max);
    for c in cands.iter().filter(|c| kept.contains(&c.source)) {
        ensure!(
            c.value >= lo && c.value <= hi,
            "survivor {} outside [{lo}, {hi}]",
            c.value
        );
    }
    Ok(())
}

pub fn msr_permutation(own: f64, values: &[f64], f: usize, perm_seed: u64) -> Check {
    let cands = candidates(values);
    let mut shuffled = cands.clone();
    let mut state = perm_seed;
    for i in (1..shuffled.len()).rev() {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        shuffled.swap(i, (state >> 33) as usize % (i + 1));
    }
    let a = msr_trim(own, &cands, f).map_err(|e| e.to_string())?;
    let b = msr_trim(own, &shuffled, f).map_err(|e| e.to_string())?;
    ensure!(a == b, "order changed the result: {a:?} vs {b:?}");
    Ok(())
}

/// Every row of the delay-augmented matrix, over every admissible age and
/// in-edge delay of that row, sums to 1 with nonzero entries at least omega.
pub fn delay_rows(g: &DirectedGraph, tau: usize) -> Check {
    let n = g.node_count();
    let omega = g.omega();
    ensure!(omega > 0.0, "omega {omega}");
    // a row depends only on its own age and in-edge delays
    for i in 0..n {
        let sources: Vec<NodeId> = g.in_edges(i).iter().map(|e| e.from).collect();
        for age in 0..=tau {
            let room = tau - age + 1;
            for code in 0..room.pow(sources.len() as u32) {
                let mut delays = BTreeMap::new();
                let mut c = code;
                for &j in &sources {
                    delays.insert((i, j), c % room);
                    c /= room;
                }
                let mut e = vec![0; n];
                e[i] = age;
                let w =
                    build_delay_augmented_matrix(g, &delays, &e, tau).map_err(|e| e.to_string())?;
                let row = w.row(i);
                ensure!(
                    (row.sum() - 1.0).abs() < 1e-12,
                    "row {i} sums to {}",
                    row.sum()
                );
                for &x in row.iter() {
                    ensure!(
                        x == 0.0 || x >= omega - 1e-15,
                        "entry {x} below omega {omega}"
                    );
                }
            }
        }
    }
    Ok(())
}

/// A small random scenario.
#[derive(Debug, Clone)]
pub struct Case {
    pub n: usize,
    pub bits: u64,
    pub protocol: ProtocolKind,
    pub f: usize,
    pub adversary: Option<(usize, bool)>,
    pub epsilon: f64,
    pub delay: f64,
    pub initial: Vec<f64>,
    pub seed: u64,
}

impl Case {
    pub fn scenario(&self) -> Scenario {
        let mut g = graph_from_bits(self.n, self.bits, true);
        // a path through all nodes so runs are not trivially static
        for i in 1..self.n {
            if !g.has_edge(i - 1, i) {
                g.add_bidirectional(i - 1, i).unwrap();
            }
        }
        let mut sc = Scenario::new(
            g.with_uniform_weights(),
            self.protocol,
            self.initial.clone(),
        );
        sc.f = self.f;
        sc.epsilon = self.epsilon;
        sc.horizon = 6.0;
        sc.seed = self.seed;
        sc.delay = if self.delay > 0.0 {
            DelayModel::UniformRandom { max: self.delay }
        } else {
            DelayModel::Zero
        };
        if let Some((agent, sine)) = self.adversary {
            let behavior = if sine {
                Behavior::default_sine()
            } else {
                Behavior::RandomControl { lo: -2.0, hi: 2.0 }
            };
            sc.adversaries
                .push(AdversarySpec::new(agent % self.n, behavior));
        }
        sc
    }
}

/// Regular rates stay in {-1, 0, 1}.
pub fn ternary(rec: &RunRecord) -> Check {
    for i in rec.regular() {
        for s in &rec.segments[i] {
            ensure!(
                s.u == -1.0 || s.u == 0.0 || s.u == 1.0,
                "agent {i} rate {}",
                s.u
            );
        }
        let u = rec.final_controls[i].as_f64();
        ensure!(
            u == -1.0 || u == 0.0 || u == 1.0,
            "agent {i} final control {u}"
        );
    }
    Ok(())
}

/// Consecutive timer expiries and consecutive transmissions of one regular
/// agent are at least `eps` apart.
pub fn zeno(rec: &RunRecord, eps: f64) -> Check {
    let floor = eps * (1.0 - 1e-9);
    for i in rec.regular() {
        if let Some(gap) = rec.min_update_gap[i] {
            ensure!(gap >= floor, "agent {i} timer gap {gap} < {eps}");
        }
        if let Some(gap) = rec.min_transmission_gap[i] {
            ensure!(gap >= floor, "agent {i} transmission gap {gap} < {eps}");
        }
    }
    // the same bound read straight off the log
    let mut last: BTreeMap<NodeId, f64> = BTreeMap::new();
    for e in rec
        .events
        .iter()
        .filter(|e| e.kind == LogKind::Transmission)
    {
        if let Some(prev) = last.insert(e.agent, e.time) {
            ensure!(
                e.time - prev >= floor,
                "agent {} sent at {prev} and {}",
                e.agent,
                e.time
            );
        }
    }
    Ok(())
}

pub fn deterministic(sc: &Scenario) -> Check {
    let a = run(sc).map_err(|e| e.to_string())?;
    let b = run(sc).map_err(|e| e.to_string())?;
    ensure!(a == b, "two runs of one scenario differ");
    Ok(())
}

/// Without adversaries and with F = 0 the baseline and the resilient
/// self-triggered protocol produce the same run.
pub fn baseline_equivalence(case: &Case) -> Check {
    let mut c = case.clone();
    c.f = 0;
    c.adversary = None;
    c.protocol = ProtocolKind::BaselineSelfTriggered;
    let base = run(&c.scenario()).map_err(|e| e.to_string())?;
    c.protocol = ProtocolKind::ResilientSelfTriggered;
    let res = run(&c.scenario()).map_err(|e| e.to_string())?;
    ensure!(base.events == res.events, "event logs differ");
    ensure!(base.segments == res.segments, "trajectories differ");
    ensure!(base.counters == res.counters, "counters differ");
    Ok(())
}
