//! Scenario files: parsing, validation and per-trial resolution.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{AdversarySpec, Behavior};
use crate::engine::{DelayModel, Scenario};
use crate::error::{Error, Result};
use crate::graph::{
    check_robustness, random_geometric, DirectedGraph, NodeId, DEFAULT_EXHAUSTIVE_LIMIT,
};
use crate::metrics::default_settle_window;
use crate::protocol::{epsilon_bound, ProtocolKind, Ternary};
use crate::seed::{derive_seed, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiteralGraph {
    pub n: usize,
    pub edges: Vec<(NodeId, NodeId)>,
    /// Insert every listed edge in both directions.
    #[serde(default = "yes")]
    pub bidirectional: bool,
    /// `(i, j, a_ij)` overrides applied after uniform weights.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<(NodeId, NodeId, f64)>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    Literal(LiteralGraph),
    /// Fresh random geometric graph per trial.
    Geometric {
        n: usize,
        range: f64,
    },
    Complete {
        n: usize,
    },
    Cycle {
        n: usize,
    },
}

impl GraphSource {
    pub fn node_count(&self) -> usize {
        match self {
            GraphSource::Literal(g) => g.n,
            GraphSource::Geometric { n, .. }
            | GraphSource::Complete { n }
            | GraphSource::Cycle { n } => *n,
        }
    }

    /// Same graph for every trial.
    pub fn is_fixed(&self) -> bool {
        !matches!(self, GraphSource::Geometric { .. })
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.node_count() == 0 {
            out.push("graph must have at least one node".to_string());
        }
        match self {
            GraphSource::Literal(lit) => {
                for &(a, b) in &lit.edges {
                    if a >= lit.n || b >= lit.n {
                        out.push(format!("edge ({a}, {b}) out of range for {} nodes", lit.n));
                    } else if a == b {
                        out.push(format!("self-loop on node {a}"));
                    }
                }
                for &(i, j, w) in &lit.weights {
                    let listed = lit
                        .edges
                        .iter()
                        .any(|&(a, b)| (a, b) == (j, i) || (lit.bidirectional && (a, b) == (i, j)));
                    if !listed {
                        out.push(format!(
                            "weight override a[{i}][{j}] names a missing edge {j}->{i}"
                        ));
                    }
                    if !w.is_finite() {
                        out.push(format!("weight override a[{i}][{j}] is not finite"));
                    }
                }
            }
            GraphSource::Geometric { range, .. } => {
                if !(*range > 0.0 && *range <= std::f64::consts::SQRT_2) {
                    out.push(format!(
                        "geometric range must lie in (0, sqrt 2], got {range}"
                    ));
                }
            }
            GraphSource::Complete { .. } | GraphSource::Cycle { .. } => {}
        }
        out
    }

    /// The graph for a trial; `seed` only matters for geometric sources.
    pub fn build(&self, seed: u64) -> Result<DirectedGraph> {
        match self {
            GraphSource::Literal(lit) => {
                let mut g = if lit.bidirectional {
                    DirectedGraph::from_undirected(lit.n, &lit.edges)?
                } else {
                    DirectedGraph::from_edges(lit.n, &lit.edges)?
                }
                .with_uniform_weights();
                for &(i, j, w) in &lit.weights {
                    g.set_weight(i, j, w)?;
                }
                Ok(g)
            }
            GraphSource::Geometric { n, range } => Ok(random_geometric(*n, *range, seed)),
            GraphSource::Complete { n } => Ok(DirectedGraph::complete(*n)),
            GraphSource::Cycle { n } => Ok(DirectedGraph::cycle(*n)),
        }
    }
}

/// Initial states as an explicit list or a per-trial uniform draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialStates {
    /// One value per regular agent in id order, or one per node.
    List(Vec<f64>),
    Uniform {
        uniform: (f64, f64),
    },
}

/// Monte Carlo axes. Every combination is run `trials` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Geometric ranges; the config's own range when empty.
    #[serde(default)]
    pub ranges: Vec<f64>,
    /// Numbers of adversaries, placed on the highest node ids.
    #[serde(default)]
    pub adversary_counts: Vec<usize>,
    /// The config's own protocol when empty.
    #[serde(default)]
    pub protocols: Vec<ProtocolKind>,
    #[serde(default = "default_sweep_behavior")]
    pub behavior: Behavior,
    /// Use `F = n_A` at each point instead of the config's `f`.
    #[serde(default = "yes")]
    pub f_from_adversaries: bool,
}

fn default_sweep_behavior() -> Behavior {
    Behavior::RandomControl {
        lo: -10.0,
        hi: 10.0,
    }
}

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub range: Option<f64>,
    pub adversaries: usize,
    pub protocol: ProtocolKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub graph: GraphSource,
    pub protocol: ProtocolKind,
    #[serde(default)]
    pub f: usize,
    pub epsilon: f64,
    /// Target error level; `2 * epsilon` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default)]
    pub delay: DelayModel,
    /// Delay bound in update steps for the sensitivity bound; 0 when delays
    /// are zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<usize>,
    #[serde(default)]
    pub adversaries: Vec<AdversarySpec>,
    pub initial_states: InitialStates,
    /// Controls at `t = 0`, same layout rules as a state list; all zero when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_controls: Option<Vec<Ternary>>,
    pub horizon: f64,
    /// Trailing time with no regular motion required to call a run
    /// quiesced; a quarter of the horizon when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settle_window: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub trials: usize,
    /// Enforce the hypotheses of the consensus guarantee.
    #[serde(default)]
    pub theorem_scoped: bool,
    #[serde(default = "yes")]
    pub record_events: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

fn one() -> usize {
    1
}

/// Validation outcome that is not fatal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checked {
    pub warnings: Vec<String>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<(Self, Checked)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_json(&text).map_err(|source| Error::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let checked = cfg.validate()?;
        Ok((cfg, checked))
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn c(&self) -> f64 {
        self.c.unwrap_or(2.0 * self.epsilon)
    }

    pub fn settle_window(&self) -> f64 {
        self.settle_window
            .unwrap_or_else(|| default_settle_window(self.horizon))
    }

    pub fn tau(&self) -> usize {
        self.tau.unwrap_or(0)
    }

    pub fn adversary_ids(&self) -> Vec<NodeId> {
        self.adversaries.iter().map(|a| a.agent).collect()
    }

    pub fn regular_ids(&self) -> Vec<NodeId> {
        regular_ids(self.node_count(), &self.adversary_ids())
    }

    /// Same config with every default written out.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        out.c = Some(self.c());
        out.settle_window = Some(self.settle_window());
        out.tau = Some(self.tau());
        for a in &mut out.adversaries {
            a.send_interval = Some(a.interval(self.epsilon));
        }
        if let Some(sweep) = &mut out.sweep {
            if sweep.protocols.is_empty() {
                sweep.protocols = vec![self.protocol];
            }
            if sweep.adversary_counts.is_empty() {
                sweep.adversary_counts = vec![self.adversaries.len()];
            }
            if sweep.ranges.is_empty() {
                if let GraphSource::Geometric { range, .. } = self.graph {
                    sweep.ranges = vec![range];
                }
            }
        }
        out
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<Checked> {
        let mut problems = self.graph.problems();
        let mut warnings = Vec::new();
        let n = self.node_count();

        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            problems.push(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            problems.push(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.c() >= 0.0 && self.c().is_finite()) {
            problems.push(format!("c must be nonnegative, got {}", self.c()));
        }
        if !(self.settle_window() >= 0.0 && self.settle_window() < self.horizon) {
            problems.push(format!(
                "settle_window must lie in [0, horizon), got {}",
                self.settle_window()
            ));
        }
        if self.trials == 0 {
            problems.push("trials must be at least 1".to_string());
        }
        problems.extend(self.delay.validate());

        let mut seen = vec![false; n];
        for a in &self.adversaries {
            if a.agent >= n {
                problems.push(format!(
                    "adversary id {} out of range for {n} nodes",
                    a.agent
                ));
            } else if std::mem::replace(&mut seen[a.agent], true) {
                problems.push(format!("adversary {} declared twice", a.agent));
            }
            problems.extend(a.validate(self.epsilon));
        }
        let n_regular = n - seen.iter().filter(|&&s| s).count();

        match &self.initial_states {
            InitialStates::List(xs) => {
                if xs.len() != n_regular && xs.len() != n {
                    problems.push(format!(
                        "initial_states has {} entries; expected {n_regular} (regular agents) or {n} (all nodes)",
                        xs.len()
                    ));
                }
                if xs.iter().any(|x| !x.is_finite()) {
                    problems.push("initial_states must be finite".to_string());
                }
            }
            InitialStates::Uniform { uniform: (lo, hi) } => {
                if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                    problems.push(format!("initial state range [{lo}, {hi}] is empty"));
                }
            }
        }
        if let Some(us) = &self.initial_controls {
            if us.len() != n_regular && us.len() != n {
                problems.push(format!(
                    "initial_controls has {} entries; expected {n_regular} or {n}",
                    us.len()
                ));
            }
        }

        if let Some(sweep) = &self.sweep {
            if !sweep.ranges.is_empty() && !matches!(self.graph, GraphSource::Geometric { .. }) {
                problems.push("sweep.ranges requires a geometric graph".to_string());
            }
            for &r in &sweep.ranges {
                if !(r > 0.0 && r <= std::f64::consts::SQRT_2) {
                    problems.push(format!("sweep range {r} outside (0, sqrt 2]"));
                }
            }
            for &k in &sweep.adversary_counts {
                if k >= n {
                    problems.push(format!("sweep adversary count {k} leaves no regular agent"));
                }
            }
            if !sweep.adversary_counts.is_empty() && !self.adversaries.is_empty() {
                problems.push(
                    "sweep.adversary_counts replaces the adversaries list; give one or the other"
                        .to_string(),
                );
            }
            if !sweep.adversary_counts.is_empty()
                && !matches!(self.initial_states, InitialStates::Uniform { .. })
                && self.initial_states_len() != Some(n)
            {
                problems.push(
                    "sweeping adversary counts needs uniform initial states or one value per node"
                        .to_string(),
                );
            }
            let probe = AdversarySpec::new(0, sweep.behavior);
            problems.extend(probe.validate(self.epsilon));
        }

        if self.theorem_scoped && problems.is_empty() {
            self.theorem_checks(&mut problems);
        } else if !self.theorem_scoped && self.graph.is_fixed() && problems.is_empty() {
            if let Ok(g) = self.graph.build(0) {
                let bound = epsilon_bound(g.omega(), n, self.tau(), self.c());
                if exceeds_bound(self.epsilon, bound) {
                    warnings.push(format!(
                        "epsilon {} exceeds the guaranteed-consensus bound {bound:.6e} for c = {}",
                        self.epsilon,
                        self.c()
                    ));
                }
            }
        }

        if problems.is_empty() {
            Ok(Checked { warnings })
        } else {
            Err(Error::Config(problems))
        }
    }

    fn initial_states_len(&self) -> Option<usize> {
        match &self.initial_states {
            InitialStates::List(xs) => Some(xs.len()),
            InitialStates::Uniform { .. } => None,
        }
    }

    fn theorem_checks(&self, problems: &mut Vec<String>) {
        let n = self.node_count();
        if self.adversaries.len() > self.f {
            problems.push(format!(
                "theorem-scoped run has {} adversaries but F = {}",
                self.adversaries.len(),
                self.f
            ));
        }
        if self.sweep.is_some() {
            problems.push("theorem-scoped runs cannot sweep".to_string());
        }
        if !self.graph.is_fixed() {
            problems.push("theorem-scoped runs need a fixed graph".to_string());
            return;
        }
        if self.delay.bound() > 0.0 && self.tau.is_none() {
            problems.push("theorem-scoped runs with delays need an explicit tau".to_string());
        }
        let Ok(g) = self.graph.build(0) else {
            return;
        };
        let bound = epsilon_bound(g.omega(), n, self.tau(), self.c());
        if exceeds_bound(self.epsilon, bound) {
            problems.push(format!(
                "epsilon {} exceeds the guaranteed-consensus bound {bound:.6e} for c = {}",
                self.epsilon,
                self.c()
            ));
        }
        let r = 2 * self.f + 1;
        if r < n && n <= DEFAULT_EXHAUSTIVE_LIMIT {
            match check_robustness(&g, r, 1) {
                Ok(v) if !v.holds => problems.push(format!("graph is not {r}-robust")),
                Ok(_) => {}
                Err(e) => problems.push(e.to_string()),
            }
        }
    }

    /// Seed shared by everything in trial `trial`.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(self.seed, Stream::Trial, trial as u64)
    }

    /// The concrete single run for `trial`.
    pub fn scenario(&self, trial: usize) -> Result<Scenario> {
        let point = SweepPoint {
            range: None,
            adversaries: self.adversaries.len(),
            protocol: self.protocol,
        };
        self.scenario_at(&point, trial, false)
    }

    /// Every sweep point in output order: range, then adversary count, then
    /// protocol.
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let resolved = self.resolved();
        let Some(sweep) = resolved.sweep else {
            return vec![SweepPoint {
                range: match self.graph {
                    GraphSource::Geometric { range, .. } => Some(range),
                    _ => None,
                },
                adversaries: self.adversaries.len(),
                protocol: self.protocol,
            }];
        };
        let ranges: Vec<Option<f64>> = if sweep.ranges.is_empty() {
            vec![None]
        } else {
            sweep.ranges.iter().copied().map(Some).collect()
        };
        let mut out = Vec::new();
        for &range in &ranges {
            for &adversaries in &sweep.adversary_counts {
                for &protocol in &sweep.protocols {
                    out.push(SweepPoint {
                        range,
                        adversaries,
                        protocol,
                    });
                }
            }
        }
        out
    }

    /// The concrete run for `trial` at a sweep point. The graph, initial
    /// states and delays depend only on the trial, so points are compared on
    /// common random numbers.
    pub fn scenario_at(
        &self,
        point: &SweepPoint,
        trial: usize,
        sweeping: bool,
    ) -> Result<Scenario> {
        let n = self.node_count();
        let seed = self.trial_seed(trial);
        let graph_seed = derive_seed(seed, Stream::Graph, 0);
        let graph = match (&self.graph, point.range) {
            (GraphSource::Geometric { n, .. }, Some(range)) => {
                random_geometric(*n, range, graph_seed)
            }
            (source, _) => source.build(graph_seed)?,
        };

        let (adversaries, f) = match (&self.sweep, sweeping) {
            (Some(sweep), true) if !sweep.adversary_counts.is_empty() => {
                let specs = (n - point.adversaries..n)
                    .map(|a| AdversarySpec::new(a, sweep.behavior))
                    .collect();
                let f = if sweep.f_from_adversaries {
                    point.adversaries
                } else {
                    self.f
                };
                (specs, f)
            }
            _ => (self.adversaries.clone(), self.f),
        };
        let adversary_ids: Vec<NodeId> = adversaries.iter().map(|a| a.agent).collect();
        let regular = regular_ids(n, &adversary_ids);

        let initial_states = match &self.initial_states {
            InitialStates::List(xs) => spread(xs, n, &regular, 0.0),
            InitialStates::Uniform { uniform: (lo, hi) } => {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(seed, Stream::InitialStates, 0));
                (0..n)
                    .map(|_| {
                        if lo < hi {
                            rng.gen_range(*lo..*hi)
                        } else {
                            *lo
                        }
                    })
                    .collect()
            }
        };
        let initial_controls = match &self.initial_controls {
            Some(us) => spread(us, n, &regular, Ternary::Zero),
            None => vec![Ternary::Zero; n],
        };

        Ok(Scenario {
            graph,
            protocol: point.protocol,
            f,
            epsilon: self.epsilon,
            delay: self.delay,
            adversaries,
            initial_states,
            initial_controls,
            horizon: self.horizon,
            seed,
            record_events: self.record_events && !sweeping,
        })
    }
}

/// `epsilon > bound` beyond rounding; self-weights are computed as `1 - sum`.
fn exceeds_bound(epsilon: f64, bound: f64) -> bool {
    epsilon > bound * (1.0 + 1e-9)
}

pub fn regular_ids(n: usize, adversaries: &[NodeId]) -> Vec<NodeId> {
    (0..n).filter(|i| !adversaries.contains(i)).collect()
}

/// Expands a per-regular list to one entry per node, or passes a per-node
/// list through.
fn spread<T: Copy>(values: &[T], n: usize, regular: &[NodeId], fill: T) -> Vec<T> {
    if values.len() == n {
        return values.to_vec();
    }
    let mut out = vec![fill; n];
    for (&i, &v) in regular.iter().zip(values) {
        out[i] = v;
    }
    out
}
