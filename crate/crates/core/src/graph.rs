//! Directed weighted communication graphs.
//!
//! Edges are stored per receiver: `in_edges[i]` lists every `j` that can send
//! to `i` together with the weight `a_ij` agent `i` applies to `j`'s value.
//! The self-weight `1 - sum_j a_ij` is implicit.

use std::collections::VecDeque;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Largest node count the exhaustive robustness checker accepts by default.
pub const DEFAULT_EXHAUSTIVE_LIMIT: usize = 16;

/// Hard ceiling on the exhaustive limit; subset tables are `2^n` bytes.
const MAX_EXHAUSTIVE_LIMIT: usize = 26;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InEdge {
    pub from: NodeId,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectedGraph {
    n: usize,
    in_edges: Vec<Vec<InEdge>>,
    out_edges: Vec<Vec<NodeId>>,
}

impl DirectedGraph {
    /// Graph with `n` nodes and no edges.
    pub fn new(n: usize) -> Self {
        DirectedGraph {
            n,
            in_edges: vec![Vec::new(); n],
            out_edges: vec![Vec::new(); n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        let mut g = DirectedGraph::new(n);
        for &(from, to) in edges {
            g.add_edge(from, to)?;
        }
        Ok(g)
    }

    /// Undirected edge list, each pair inserted in both directions.
    pub fn from_undirected(n: usize, pairs: &[(NodeId, NodeId)]) -> Result<Self> {
        let mut g = DirectedGraph::new(n);
        for &(a, b) in pairs {
            g.add_bidirectional(a, b)?;
        }
        Ok(g)
    }

    /// Complete bidirectional graph with uniform weights.
    pub fn complete(n: usize) -> Self {
        let mut g = DirectedGraph::new(n);
        for i in 0..n {
            for j in (i + 1)..n {
                g.add_bidirectional(i, j).expect("indices in range");
            }
        }
        g.with_uniform_weights()
    }

    /// Bidirectional ring `0 - 1 - ... - (n-1) - 0` with uniform weights.
    pub fn cycle(n: usize) -> Self {
        let mut g = DirectedGraph::new(n);
        if n >= 2 {
            for i in 0..n {
                let j = (i + 1) % n;
                if i != j {
                    g.add_bidirectional(i, j).expect("indices in range");
                }
            }
        }
        g.with_uniform_weights()
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.in_edges.iter().map(Vec::len).sum()
    }

    fn check_node(&self, node: NodeId) -> Result<()> {
        if node < self.n {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange { node, n: self.n })
        }
    }

    /// Adds the directed edge `from -> to`. Re-adding an existing edge is a no-op.
    /// Fresh edges carry weight 0 until weights are assigned.
    pub fn add_edge(&mut self, from: NodeId, to: NodeId) -> Result<()> {
        self.check_node(from)?;
        self.check_node(to)?;
        if from == to {
            return Err(Error::SelfLoop(from));
        }
        let incoming = &mut self.in_edges[to];
        match incoming.binary_search_by_key(&from, |e| e.from) {
            Ok(_) => return Ok(()),
            Err(pos) => incoming.insert(pos, InEdge { from, weight: 0.0 }),
        }
        let outgoing = &mut self.out_edges[from];
        if let Err(pos) = outgoing.binary_search(&to) {
            outgoing.insert(pos, to);
        }
        Ok(())
    }

    pub fn add_bidirectional(&mut self, a: NodeId, b: NodeId) -> Result<()> {
        self.add_edge(a, b)?;
        self.add_edge(b, a)
    }

    pub fn has_edge(&self, from: NodeId, to: NodeId) -> bool {
        to < self.n
            && self.in_edges[to]
                .binary_search_by_key(&from, |e| e.from)
                .is_ok()
    }

    /// In-neighbors of `i`: every node that can send to `i`, ascending.
    pub fn neighbors(&self, i: NodeId) -> Result<Vec<NodeId>> {
        self.check_node(i)?;
        Ok(self.in_edges[i].iter().map(|e| e.from).collect())
    }

    /// Incoming edges of `i` with their weights, ascending by sender.
    pub fn in_edges(&self, i: NodeId) -> &[InEdge] {
        &self.in_edges[i]
    }

    /// Receivers of `i`'s broadcasts, ascending.
    pub fn out_neighbors(&self, i: NodeId) -> &[NodeId] {
        &self.out_edges[i]
    }

    pub fn in_degree(&self, i: NodeId) -> usize {
        self.in_edges[i].len()
    }

    pub fn min_in_degree(&self) -> usize {
        self.in_edges.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn mean_in_degree(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.edge_count() as f64 / self.n as f64
    }

    /// `a_ij`, the weight receiver `i` puts on sender `j`.
    pub fn weight(&self, i: NodeId, j: NodeId) -> Option<f64> {
        let edges = self.in_edges.get(i)?;
        edges
            .binary_search_by_key(&j, |e| e.from)
            .ok()
            .map(|pos| edges[pos].weight)
    }

    pub fn self_weight(&self, i: NodeId) -> f64 {
        1.0 - self.in_edges[i].iter().map(|e| e.weight).sum::<f64>()
    }

    /// Overrides a single `a_ij`. The edge `j -> i` must exist.
    pub fn set_weight(&mut self, i: NodeId, j: NodeId, weight: f64) -> Result<()> {
        self.check_node(i)?;
        self.check_node(j)?;
        let edges = &mut self.in_edges[i];
        match edges.binary_search_by_key(&j, |e| e.from) {
            Ok(pos) => {
                edges[pos].weight = weight;
                Ok(())
            }
            Err(_) => Err(Error::InvalidWeight {
                to: i,
                from: j,
                weight,
                reason: "no such edge",
            }),
        }
    }

    /// Sets `a_ij = 1 / (d_i + 1)` for every incoming edge, leaving the same
    /// share as self-weight.
    pub fn with_uniform_weights(mut self) -> Self {
        for edges in &mut self.in_edges {
            let share = 1.0 / (edges.len() as f64 + 1.0);
            for e in edges.iter_mut() {
                e.weight = share;
            }
        }
        debug_assert!(
            self.in_edges.iter().all(Vec::is_empty) || self.alpha() <= 0.5,
            "uniform weights put at most 1/2 on any edge"
        );
        self
    }

    /// Induced weight lower bound: the smallest incoming weight or self-weight
    /// over nodes that have neighbors. Isolated nodes contribute nothing.
    pub fn alpha(&self) -> f64 {
        self.min_positive_weight().unwrap_or(1.0)
    }

    fn min_positive_weight(&self) -> Option<f64> {
        let mut min: Option<f64> = None;
        for (i, edges) in self.in_edges.iter().enumerate() {
            if edges.is_empty() {
                continue;
            }
            let candidates = edges
                .iter()
                .map(|e| e.weight)
                .chain(std::iter::once(self.self_weight(i)));
            for w in candidates {
                min = Some(min.map_or(w, |m: f64| m.min(w)));
            }
        }
        min
    }

    /// Smallest nonzero entry any delay-augmented update matrix can take: the
    /// minimum over edge weights and self-weights (self-weight 1 for isolated
    /// nodes).
    pub fn omega(&self) -> f64 {
        let mut min = self.alpha();
        for i in 0..self.n {
            if self.in_edges[i].is_empty() {
                min = min.min(1.0);
            }
        }
        min
    }

    /// Checks `alpha <= a_ij < 1` on every edge and `self-weight >= alpha` on
    /// every node.
    pub fn validate_weights(&self, alpha: f64) -> Result<()> {
        if !(alpha > 0.0 && alpha <= 0.5) {
            return Err(Error::Config(vec![format!(
                "weight lower bound alpha must lie in (0, 1/2], got {alpha}"
            )]));
        }
        for i in 0..self.n {
            for e in &self.in_edges[i] {
                if !(e.weight >= alpha) {
                    return Err(Error::InvalidWeight {
                        to: i,
                        from: e.from,
                        weight: e.weight,
                        reason: "below the lower bound alpha",
                    });
                }
                if e.weight >= 1.0 {
                    return Err(Error::InvalidWeight {
                        to: i,
                        from: e.from,
                        weight: e.weight,
                        reason: "must be < 1",
                    });
                }
            }
            let own = self.self_weight(i);
            if own < alpha - 1e-12 {
                return Err(Error::InvalidWeight {
                    to: i,
                    from: i,
                    weight: own,
                    reason: "self-weight below alpha; incoming weights sum too large",
                });
            }
        }
        Ok(())
    }

    /// Strong connectivity of the directed edge set. For bidirectional graphs
    /// this is ordinary connectivity.
    pub fn is_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let reach = |forward: bool| -> usize {
            let mut seen = vec![false; self.n];
            let mut queue = VecDeque::from([0]);
            seen[0] = true;
            let mut count = 1;
            while let Some(v) = queue.pop_front() {
                let next: Box<dyn Iterator<Item = NodeId>> = if forward {
                    Box::new(self.out_edges[v].iter().copied())
                } else {
                    Box::new(self.in_edges[v].iter().map(|e| e.from))
                };
                for w in next {
                    if !seen[w] {
                        seen[w] = true;
                        count += 1;
                        queue.push_back(w);
                    }
                }
            }
            count
        };
        reach(true) == self.n && reach(false) == self.n
    }

    /// Edge list `(from, to, weight)` ordered by receiver then sender.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.in_edges
            .iter()
            .enumerate()
            .flat_map(|(to, edges)| edges.iter().map(move |e| (e.from, to, e.weight)))
    }

    /// Writes `from,to,weight` rows, one per directed edge.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["from", "to", "weight"])?;
        for (from, to, weight) in self.edges() {
            writer.serialize((from, to, weight))?;
        }
        writer.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Outcome of an exhaustive (r, s)-robustness check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RobustnessVerdict {
    pub holds: bool,
    /// First violating pair `(V1, V2)` in enumeration order when `holds` is false.
    pub witness: Option<(Vec<NodeId>, Vec<NodeId>)>,
}

/// Exhaustive (r, s)-robustness with the default node limit.
pub fn check_robustness(g: &DirectedGraph, r: usize, s: usize) -> Result<RobustnessVerdict> {
    check_robustness_with_limit(g, r, s, DEFAULT_EXHAUSTIVE_LIMIT)
}

/// Enumerates every pair of nonempty disjoint subsets `(V1, V2)`. A pair
/// passes when all of `V1` has `r` in-neighbors outside `V1`, or the same for
/// `V2`, or at least `s` nodes across both do.
///
/// Subsets are visited in `(size, bitmask)` order, `V1` outermost, so the
/// reported witness is deterministic.
pub fn check_robustness_with_limit(
    g: &DirectedGraph,
    r: usize,
    s: usize,
    limit: usize,
) -> Result<RobustnessVerdict> {
    let n = g.node_count();
    if r == 0 || s == 0 || r >= n || s >= n {
        return Err(Error::RobustnessParameter { r, s, n });
    }
    let limit = limit.min(MAX_EXHAUSTIVE_LIMIT);
    if n > limit {
        return Err(Error::Capacity { n, limit });
    }

    let in_mask: Vec<u32> = (0..n)
        .map(|i| g.in_edges(i).iter().fold(0u32, |m, e| m | (1u32 << e.from)))
        .collect();

    let universe: u32 = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let subsets = 1usize << n;

    // reachable[S] = |X^r_S|, the nodes of S with at least r in-neighbors outside S.
    let mut reachable = vec![0u8; subsets];
    for (set, slot) in reachable.iter_mut().enumerate().skip(1) {
        let set = set as u32;
        let outside = !set & universe;
        let mut count = 0u8;
        let mut rest = set;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if (in_mask[v] & outside).count_ones() as usize >= r {
                count += 1;
            }
        }
        *slot = count;
    }
    let saturated = |set: u32| reachable[set as usize] as u32 == set.count_ones();

    let mut order: Vec<u32> = (1..subsets as u32).collect();
    order.sort_by_key(|&m| (m.count_ones(), m));

    let key = |m: u32| (m.count_ones(), m);
    for &v1 in &order {
        if saturated(v1) {
            continue;
        }
        let budget = reachable[v1 as usize] as usize;
        let complement = !v1 & universe;
        let mut best: Option<u32> = None;
        let mut v2 = complement;
        while v2 != 0 {
            if !saturated(v2)
                && budget + (reachable[v2 as usize] as usize) < s
                && best.is_none_or(|b| key(v2) < key(b))
            {
                best = Some(v2);
            }
            v2 = (v2 - 1) & complement;
        }
        if let Some(v2) = best {
            return Ok(RobustnessVerdict {
                holds: false,
                witness: Some((mask_nodes(v1), mask_nodes(v2))),
            });
        }
    }
    Ok(RobustnessVerdict {
        holds: true,
        witness: None,
    })
}

fn mask_nodes(mask: u32) -> Vec<NodeId> {
    (0..32).filter(|b| mask & (1 << b) != 0).collect()
}

/// `|X^r_S|` computed directly from the graph, for checking witnesses.
pub fn nodes_with_outside_neighbors(g: &DirectedGraph, set: &[NodeId], r: usize) -> Vec<NodeId> {
    set.iter()
        .copied()
        .filter(|&v| {
            g.in_edges(v)
                .iter()
                .filter(|e| !set.contains(&e.from))
                .count()
                >= r
        })
        .collect()
}

/// A random geometric graph together with the sampled node positions.
#[derive(Debug, Clone)]
pub struct GeometricGraph {
    pub graph: DirectedGraph,
    pub points: Vec<(f64, f64)>,
}

/// `n` points uniform on the unit square, bidirectional edges between every
/// pair at distance `<= range`, uniform weights. Deterministic in `seed`.
pub fn random_geometric(n: usize, range: f64, seed: u64) -> DirectedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_geometric_with(n, range, &mut rng).graph
}

pub fn random_geometric_with<R: Rng + ?Sized>(n: usize, range: f64, rng: &mut R) -> GeometricGraph {
    let points: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.gen::<f64>(), rng.gen::<f64>()))
        .collect();
    let mut graph = DirectedGraph::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let (dx, dy) = (points[i].0 - points[j].0, points[i].1 - points[j].1);
            if dx.hypot(dy) <= range {
                graph.add_bidirectional(i, j).expect("indices in range");
            }
        }
    }
    GeometricGraph {
        graph: graph.with_uniform_weights(),
        points,
    }
}

/// Probability that two independent uniform points on the unit square lie
/// within distance `r`.
pub fn unit_square_pair_probability(r: f64) -> f64 {
    use std::f64::consts::{PI, SQRT_2};
    if r <= 0.0 {
        return 0.0;
    }
    if r >= SQRT_2 {
        return 1.0;
    }
    let s = r * r;
    if r <= 1.0 {
        return PI * s - 8.0 * r * s / 3.0 + s * s / 2.0;
    }
    let root = (s - 1.0).sqrt();
    1.0 / 3.0 - 2.0 * s - s * s / 2.0
        + 4.0 * (2.0 * s + 1.0) * root / 3.0
        + 2.0 * s * ((1.0 / r).asin() - (1.0 / r).acos())
}

/// Expected degree of a node in a random geometric graph on the unit square.
pub fn expected_mean_degree(n: usize, range: f64) -> f64 {
    (n.saturating_sub(1)) as f64 * unit_square_pair_probability(range)
}

/// Range (capped at 1) giving an `n`-node geometric graph the same expected
/// degree as a `reference_n`-node graph at `reference_range`.
pub fn range_preserving_mean_degree(reference_n: usize, reference_range: f64, n: usize) -> f64 {
    let target = expected_mean_degree(reference_n, reference_range);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    if expected_mean_degree(n, hi) <= target {
        return hi;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if expected_mean_degree(n, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
