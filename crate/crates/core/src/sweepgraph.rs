//! Sweep scheduling on the element dependency graph of one ordinate.
//!
//! Vertex `u` has an edge to `v` whenever `v` receives inflow from `u`. Strongly connected
//! components are found with Tarjan's algorithm; each nontrivial component is broken by a
//! minimum-weight feedback arc set, solved exactly by subset dynamic programming on small
//! components and by the weighted Eades–Lin–Smyth heuristic on large ones. Removed (lagged)
//! edges use previous-iterate data during the sweep.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{Debug, Write as _};
use std::ops::{Add, Sub};

use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::TransportOperator;
use crate::linalg::LuFactor;
use crate::scalar::Real;

/// Largest component the exact solver accepts.
pub const MAX_EXACT_THRESHOLD: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("total mass matrix of element {elem} is singular; sigma-inverse-face weights are undefined")]
    SingularMass { elem: usize },
    #[error("component of {size} vertices exceeds the exact solver limit {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error("exact threshold {0} exceeds {MAX_EXACT_THRESHOLD}")]
    InvalidThreshold(usize),
}

/// Edge weighting `z_{u,v}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Every edge weighs 1.
    Unity,
    /// Largest entry of the coupling block `F_{v,u}`.
    Face,
    /// Largest entry of `M_{t,v}^{-1} F_{v,u}`.
    SigInvFace,
}

impl Weighting {
    pub const ALL: [Weighting; 3] = [Weighting::Unity, Weighting::Face, Weighting::SigInvFace];

    pub fn name(self) -> &'static str {
        match self {
            Self::Unity => "unity",
            Self::Face => "face",
            Self::SigInvFace => "sig-inv-face",
        }
    }
}

impl std::str::FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|w| w.name() == s)
            .ok_or_else(|| format!("unknown weighting '{s}' (expected unity, face or sig-inv-face)"))
    }
}

/// Edge weights usable by the feedback arc set solvers.
pub trait EdgeWeight: Copy + PartialOrd + Zero + Add<Output = Self> + Sub<Output = Self> + Debug {}

impl<W: Copy + PartialOrd + Zero + Add<Output = W> + Sub<Output = W> + Debug> EdgeWeight for W {}

/// Directed graph with positive edge weights and no self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct DependencyGraph<W> {
    /// Successors of each vertex, sorted by target.
    out: Vec<Vec<(usize, W)>>,
}

impl<W: EdgeWeight> DependencyGraph<W> {
    pub fn new(n: usize) -> Self {
        Self { out: vec![Vec::new(); n] }
    }

    /// Builds a graph from `(u, v, w)` triples; parallel edges are merged by summing.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, W)>) -> Self {
        let mut g = Self::new(n);
        for (u, v, w) in edges {
            g.add_edge(u, v, w);
        }
        g
    }

    /// # Panics
    /// On self-loops, out-of-range vertices and weights that are not strictly positive.
    pub fn add_edge(&mut self, u: usize, v: usize, w: W) {
        assert!(u != v, "self-loop at vertex {u}");
        assert!(u < self.out.len() && v < self.out.len(), "edge ({u}, {v}) out of range");
        assert!(w > W::zero(), "edge ({u}, {v}) weight {w:?} is not positive");
        let list = &mut self.out[u];
        match list.binary_search_by_key(&v, |e| e.0) {
            Ok(i) => list[i].1 = list[i].1 + w,
            Err(i) => list.insert(i, (v, w)),
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.out.len()
    }

    pub fn num_edges(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn successors(&self, u: usize) -> &[(usize, W)] {
        &self.out[u]
    }

    pub fn weight(&self, u: usize, v: usize) -> Option<W> {
        self.out[u]
            .binary_search_by_key(&v, |e| e.0)
            .ok()
            .map(|i| self.out[u][i].1)
    }

    /// All edges `(u, v, w)` in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, W)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().map(move |&(v, w)| (u, v, w)))
    }
}

/// Dependency graph of ordinate `d`: `u -> v` for every stored coupling block `F_{v,u}`.
pub fn build_graph<T: Real>(
    op: &TransportOperator<T>,
    d: usize,
    weighting: Weighting,
) -> Result<DependencyGraph<T>, GraphError> {
    let blocks = op.ordinate(d);
    let mut g = DependencyGraph::new(op.num_elements());
    for (v, couplings) in blocks.upwind.iter().enumerate() {
        if couplings.is_empty() {
            continue;
        }
        let lu = match weighting {
            Weighting::SigInvFace => {
                Some(LuFactor::new(op.mass_t(v)).map_err(|_| GraphError::SingularMass { elem: v })?)
            }
            _ => None,
        };
        for c in couplings {
            let w = match weighting {
                Weighting::Unity => T::one(),
                Weighting::Face => c.block.max_abs(),
                Weighting::SigInvFace => lu.as_ref().map(|lu| lu.solve_matrix(&c.block).max_abs()).unwrap_or_default(),
            };
            if !(w > T::zero() && w.is_finite()) {
                return Err(GraphError::SingularMass { elem: v });
            }
            g.add_edge(c.from, v, w);
        }
    }
    Ok(g)
}

/// Strongly connected components in reverse topological order of the condensation (every
/// edge between components points from a later to an earlier component). Vertices within a
/// component are sorted.
pub fn tarjan_scc<W: EdgeWeight>(g: &DependencyGraph<W>) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let n = g.num_vertices();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut components = Vec::new();
    let mut next = 0usize;
    // explicit DFS frames: (vertex, next successor position)
    let mut frames: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        frames.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = frames.last_mut() {
            let succ = g.successors(v);
            if *pos < succ.len() {
                let w = succ[*pos].0;
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            frames.pop();
            if let Some(&(parent, _)) = frames.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                components.push(comp);
            }
        }
    }
    components
}

/// Ordering of a vertex subset together with its backward (lagged) edges.
#[derive(Debug, Clone, PartialEq)]
pub struct FasSolution<W> {
    pub order: Vec<usize>,
    pub lagged: Vec<(usize, usize, W)>,
    pub weight: W,
}

/// Backward edges of `order` restricted to the vertices in `order`.
fn backward_edges<W: EdgeWeight>(g: &DependencyGraph<W>, order: &[usize]) -> FasSolution<W> {
    let pos: BTreeMap<usize, usize> = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut lagged = Vec::new();
    let mut weight = W::zero();
    for &u in order {
        for &(v, w) in g.successors(u) {
            if let Some(&pv) = pos.get(&v) {
                if pv < pos[&u] {
                    lagged.push((u, v, w));
                    weight = weight + w;
                }
            }
        }
    }
    lagged.sort_by_key(|e| (e.0, e.1));
    FasSolution {
        order: order.to_vec(),
        lagged,
        weight,
    }
}

/// Minimum-weight feedback arc set of the subgraph induced by `vertices`, by dynamic
/// programming over vertex subsets. `O(2^n n^2)`; `vertices.len()` must not exceed `limit`.
///
/// `best[S]` is the least backward weight of any ordering of `S` placed first; appending
/// `v` after `S` makes every edge `v -> S` backward. Ties go to the smallest vertex id.
pub fn min_fas_exact<W: EdgeWeight>(
    g: &DependencyGraph<W>,
    vertices: &[usize],
    limit: usize,
) -> Result<FasSolution<W>, GraphError> {
    let limit = limit.min(MAX_EXACT_THRESHOLD);
    let k = vertices.len();
    if k > limit {
        return Err(GraphError::TooLarge { size: k, limit });
    }
    let mut sorted = vertices.to_vec();
    sorted.sort_unstable();
    let local: BTreeMap<usize, usize> = sorted.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    // internal successors of each local vertex
    let succ: Vec<Vec<(usize, W)>> = sorted
        .iter()
        .map(|&u| {
            g.successors(u)
                .iter()
                .filter_map(|&(v, w)| local.get(&v).map(|&j| (j, w)))
                .collect()
        })
        .collect();
    let full = (1usize << k) - 1;
    let mut best: Vec<Option<W>> = vec![None; full + 1];
    let mut last = vec![u8::MAX; full + 1];
    best[0] = Some(W::zero());
    for set in 0..full {
        let Some(base) = best[set] else { continue };
        for v in 0..k {
            if set & (1 << v) != 0 {
                continue;
            }
            let mut cost = base;
            for &(j, w) in &succ[v] {
                if set & (1 << j) != 0 {
                    cost = cost + w;
                }
            }
            let next = set | (1 << v);
            let better = match best[next] {
                None => true,
                Some(b) => cost < b,
            };
            if better {
                best[next] = Some(cost);
                last[next] = v as u8;
            }
        }
    }
    let mut order = Vec::with_capacity(k);
    let mut set = full;
    while set != 0 {
        let v = last[set] as usize;
        order.push(sorted[v]);
        set &= !(1 << v);
    }
    order.reverse();
    let sol = backward_edges(g, &order);
    debug_assert!(sol.weight == best[full].unwrap_or_else(W::zero));
    Ok(sol)
}

/// Remaining-subgraph bookkeeping of the Eades–Lin–Smyth heuristic.
struct Peeling<W> {
    succ: Vec<Vec<(usize, W)>>,
    pred: Vec<Vec<(usize, W)>>,
    out_count: Vec<usize>,
    in_count: Vec<usize>,
    out_w: Vec<W>,
    in_w: Vec<W>,
    alive: Vec<bool>,
    sinks: BTreeSet<usize>,
    sources: BTreeSet<usize>,
}

impl<W: EdgeWeight> Peeling<W> {
    fn remove(&mut self, v: usize) {
        self.alive[v] = false;
        self.sinks.remove(&v);
        self.sources.remove(&v);
        for &(j, w) in &self.succ[v] {
            if self.alive[j] {
                self.in_count[j] -= 1;
                self.in_w[j] = self.in_w[j] - w;
                if self.in_count[j] == 0 && self.out_count[j] > 0 {
                    self.sources.insert(j);
                }
            }
        }
        for &(i, w) in &self.pred[v] {
            if self.alive[i] {
                self.out_count[i] -= 1;
                self.out_w[i] = self.out_w[i] - w;
                if self.out_count[i] == 0 {
                    self.sources.remove(&i);
                    self.sinks.insert(i);
                }
            }
        }
    }
}

/// Weighted Eades–Lin–Smyth ordering of the subgraph induced by `vertices`.
///
/// Sinks are peeled onto the tail and sources onto the head; otherwise the vertex with the
/// largest weighted out-degree minus in-degree moves to the head. Ties go to the smallest id.
pub fn min_fas_heuristic<W: EdgeWeight>(g: &DependencyGraph<W>, vertices: &[usize]) -> FasSolution<W> {
    let mut sorted = vertices.to_vec();
    sorted.sort_unstable();
    let k = sorted.len();
    let local: BTreeMap<usize, usize> = sorted.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut succ: Vec<Vec<(usize, W)>> = vec![Vec::new(); k];
    let mut pred: Vec<Vec<(usize, W)>> = vec![Vec::new(); k];
    for (i, &u) in sorted.iter().enumerate() {
        for &(v, w) in g.successors(u) {
            if let Some(&j) = local.get(&v) {
                succ[i].push((j, w));
                pred[j].push((i, w));
            }
        }
    }
    let mut state = Peeling {
        out_count: succ.iter().map(Vec::len).collect(),
        in_count: pred.iter().map(Vec::len).collect(),
        out_w: succ.iter().map(|s| s.iter().fold(W::zero(), |a, e| a + e.1)).collect(),
        in_w: pred.iter().map(|s| s.iter().fold(W::zero(), |a, e| a + e.1)).collect(),
        alive: vec![true; k],
        sinks: BTreeSet::new(),
        sources: BTreeSet::new(),
        succ,
        pred,
    };
    state.sinks = (0..k).filter(|&i| state.out_count[i] == 0).collect();
    state.sources = (0..k)
        .filter(|&i| state.in_count[i] == 0 && state.out_count[i] > 0)
        .collect();
    let mut head = Vec::with_capacity(k);
    let mut tail = Vec::new();
    for _ in 0..k {
        if let Some(&v) = state.sinks.first() {
            state.remove(v);
            tail.push(v);
        } else if let Some(&v) = state.sources.first() {
            state.remove(v);
            head.push(v);
        } else {
            let mut pick: Option<(usize, W)> = None;
            for v in (0..k).filter(|&v| state.alive[v]) {
                let delta = state.out_w[v] - state.in_w[v];
                if pick.map_or(true, |(_, b)| delta > b) {
                    pick = Some((v, delta));
                }
            }
            let (v, _) = pick.expect("a live vertex remains");
            state.remove(v);
            head.push(v);
        }
    }
    head.extend(tail.into_iter().rev());
    let order: Vec<usize> = head.into_iter().map(|i| sorted[i]).collect();
    backward_edges(g, &order)
}

/// Global element order for one ordinate and the edges it lags.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOrdering<W> {
    /// Elements in sweep order.
    pub order: Vec<usize>,
    /// `position[e]` is the index of `e` in `order`.
    pub position: Vec<usize>,
    /// Lagged edges `(u, v, w)` with `position[u] > position[v]`, sorted.
    pub lagged: Vec<(usize, usize, W)>,
    pub lagged_weight: W,
    /// Strongly connected components in sweep order.
    pub components: Vec<Vec<usize>>,
}

impl<W: EdgeWeight> SweepOrdering<W> {
    /// True when the coupling `u -> v` uses previous-iterate data.
    pub fn is_lagged(&self, u: usize, v: usize) -> bool {
        self.position[u] > self.position[v]
    }
}

/// Kahn's algorithm on the edges for which `keep` holds.
pub fn is_acyclic<W: EdgeWeight>(g: &DependencyGraph<W>, keep: impl Fn(usize, usize) -> bool) -> bool {
    let n = g.num_vertices();
    let mut indeg = vec![0usize; n];
    for (u, v, _) in g.edges() {
        if keep(u, v) {
            indeg[v] += 1;
        }
    }
    let mut ready: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(u) = ready.pop() {
        seen += 1;
        for &(v, _) in g.successors(u) {
            if keep(u, v) {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    ready.push(v);
                }
            }
        }
    }
    seen == n
}

/// Sweep order: components in topological order, each ordered internally by the exact
/// solver (at most `exact_threshold` vertices) or the heuristic.
///
/// # Panics
/// If the retained edges contain a cycle, which would be a bug in this module.
pub fn sweep_ordering<W: EdgeWeight>(
    g: &DependencyGraph<W>,
    exact_threshold: usize,
) -> Result<SweepOrdering<W>, GraphError> {
    if exact_threshold > MAX_EXACT_THRESHOLD {
        return Err(GraphError::InvalidThreshold(exact_threshold));
    }
    let mut components = tarjan_scc(g);
    components.reverse();
    let n = g.num_vertices();
    let mut order = Vec::with_capacity(n);
    let mut lagged = Vec::new();
    let mut lagged_weight = W::zero();
    for comp in &components {
        if comp.len() == 1 {
            order.push(comp[0]);
            continue;
        }
        let sol = if comp.len() <= exact_threshold {
            min_fas_exact(g, comp, exact_threshold)?
        } else {
            min_fas_heuristic(g, comp)
        };
        order.extend_from_slice(&sol.order);
        lagged_weight = lagged_weight + sol.weight;
        lagged.extend(sol.lagged);
    }
    let mut position = vec![0usize; n];
    for (i, &v) in order.iter().enumerate() {
        position[v] = i;
    }
    lagged.sort_by_key(|e| (e.0, e.1));
    assert!(
        is_acyclic(g, |u, v| position[u] < position[v]),
        "retained sweep edges contain a cycle"
    );
    assert!(g.edges().all(|(u, v, _)| position[u] < position[v] || lagged.binary_search_by_key(&(u, v), |e| (e.0, e.1)).is_ok()));
    Ok(SweepOrdering {
        order,
        position,
        lagged,
        lagged_weight,
        components,
    })
}

/// Cycle statistics of one ordinate's graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphSummary {
    pub vertices: usize,
    pub edges: usize,
    /// Component size -> number of components, for sizes above 1.
    pub scc_sizes: BTreeMap<usize, usize>,
    /// Components of exactly two elements (mutually upwind pairs).
    pub simple_cycles: usize,
    /// Components of more than two elements.
    pub large_components: usize,
    pub elements_in_large: usize,
    pub lagged_edges: usize,
    pub lagged_weight: f64,
}

impl GraphSummary {
    pub fn new<T: Real>(g: &DependencyGraph<T>, ordering: &SweepOrdering<T>) -> Self {
        let mut scc_sizes = BTreeMap::new();
        for c in ordering.components.iter().filter(|c| c.len() > 1) {
            *scc_sizes.entry(c.len()).or_insert(0) += 1;
        }
        let large: Vec<&Vec<usize>> = ordering.components.iter().filter(|c| c.len() > 2).collect();
        Self {
            vertices: g.num_vertices(),
            edges: g.num_edges(),
            simple_cycles: scc_sizes.get(&2).copied().unwrap_or(0),
            large_components: large.len(),
            elements_in_large: large.iter().map(|c| c.len()).sum(),
            scc_sizes,
            lagged_edges: ordering.lagged.len(),
            lagged_weight: ordering.lagged_weight.to_f64_lossy(),
        }
    }

    pub fn is_acyclic(&self) -> bool {
        self.scc_sizes.is_empty()
    }

    /// Component histogram as `size:count` pairs separated by spaces.
    pub fn histogram(&self) -> String {
        self.scc_sizes
            .iter()
            .map(|(s, c)| format!("{s}:{c}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Graphviz rendering; lagged edges are dashed.
pub fn to_dot<T: Real>(g: &DependencyGraph<T>, ordering: Option<&SweepOrdering<T>>, name: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "digraph \"{name}\" {{");
    for v in 0..g.num_vertices() {
        let _ = writeln!(s, "  {v};");
    }
    for (u, v, w) in g.edges() {
        let lagged = ordering.is_some_and(|o| o.is_lagged(u, v));
        let style = if lagged { ", style=dashed, color=red" } else { "" };
        let _ = writeln!(s, "  {u} -> {v} [label=\"{:.3e}\"{style}];", w.to_f64_lossy());
    }
    s.push_str("}\n");
    s
}
