//! Directed state graphs, connectivity predicates, covering walks and the
//! per-edge control matrices `B_e`.
//!
//! Vertices are `0..m` internally. File formats use 1-based ids; the
//! conversion lives in [`crate::io`].

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub type Vertex = usize;
pub type EdgeId = usize;

/// A directed graph without self-loops or duplicate edges.
///
/// Edges carry stable ids given by their insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    m: usize,
    edges: Vec<(Vertex, Vertex)>,
    reverse: Vec<Option<EdgeId>>,
    out_edges: Vec<Vec<EdgeId>>,
    in_edges: Vec<Vec<EdgeId>>,
}

impl Graph {
    /// Builds a graph on `m >= 2` vertices from 0-based `(source, target)` pairs.
    pub fn new(m: usize, edges: &[(Vertex, Vertex)]) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidGraph(format!(
                "need at least 2 vertices, got {m}"
            )));
        }
        let mut index = std::collections::HashMap::with_capacity(edges.len());
        let mut out_edges = vec![Vec::new(); m];
        let mut in_edges = vec![Vec::new(); m];
        for (id, &(s, t)) in edges.iter().enumerate() {
            if s >= m || t >= m {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) has an endpoint outside 1..={m}",
                    s + 1,
                    t + 1
                )));
            }
            if s == t {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {}", s + 1)));
            }
            if index.insert((s, t), id).is_some() {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({}, {})",
                    s + 1,
                    t + 1
                )));
            }
            out_edges[s].push(id);
            in_edges[t].push(id);
        }
        let reverse = edges
            .iter()
            .map(|&(s, t)| index.get(&(t, s)).copied())
            .collect();
        Ok(Self {
            m,
            edges: edges.to_vec(),
            reverse,
            out_edges,
            in_edges,
        })
    }

    /// Same as [`Graph::new`] but with 1-based vertex ids.
    pub fn from_one_based(m: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut zero = Vec::with_capacity(edges.len());
        for &(s, t) in edges {
            if s == 0 || t == 0 {
                return Err(Error::InvalidGraph("vertex ids are 1-based".into()));
            }
            zero.push((s - 1, t - 1));
        }
        Self::new(m, &zero)
    }

    /// Bidirected path `1 <-> 2 <-> ... <-> m`, edges ordered
    /// `(1,2), (2,1), (2,3), (3,2), ...`.
    pub fn chain(m: usize) -> Result<Self> {
        let edges: Vec<_> = (0..m.saturating_sub(1))
            .flat_map(|i| [(i, i + 1), (i + 1, i)])
            .collect();
        Self::new(m, &edges)
    }

    /// Bidirected 4-neighbour grid with `rows * cols` vertices numbered
    /// row-major. Horizontal links come before vertical ones.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        let id = |r: usize, c: usize| r * cols + c;
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols.saturating_sub(1) {
                edges.push((id(r, c), id(r, c + 1)));
                edges.push((id(r, c + 1), id(r, c)));
            }
        }
        for r in 0..rows.saturating_sub(1) {
            for c in 0..cols {
                edges.push((id(r, c), id(r + 1, c)));
                edges.push((id(r + 1, c), id(r, c)));
            }
        }
        Self::new(rows * cols, &edges)
    }

    pub fn vertex_count(&self) -> usize {
        self.m
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(Vertex, Vertex)] {
        &self.edges
    }

    pub fn source(&self, e: EdgeId) -> Vertex {
        self.edges[e].0
    }

    pub fn target(&self, e: EdgeId) -> Vertex {
        self.edges[e].1
    }

    /// The edge `(T(e), S(e))`, if present.
    pub fn reverse(&self, e: EdgeId) -> Option<EdgeId> {
        self.reverse[e]
    }

    pub fn out_edges(&self, v: Vertex) -> &[EdgeId] {
        &self.out_edges[v]
    }

    pub fn in_edges(&self, v: Vertex) -> &[EdgeId] {
        &self.in_edges[v]
    }

    pub fn find_edge(&self, s: Vertex, t: Vertex) -> Option<EdgeId> {
        self.out_edges
            .get(s)?
            .iter()
            .copied()
            .find(|&e| self.edges[e].1 == t)
    }

    pub fn is_bidirected(&self) -> bool {
        self.reverse.iter().all(Option::is_some)
    }

    /// Errors with the first edge lacking a reverse.
    pub fn require_bidirected(&self) -> Result<()> {
        match self.reverse.iter().position(Option::is_none) {
            Some(e) => Err(Error::NotBidirected(e + 1)),
            None => Ok(()),
        }
    }

    pub fn is_strongly_connected(&self) -> bool {
        self.strongly_connected_components().len() == 1
    }

    pub fn require_strongly_connected(&self) -> Result<()> {
        if self.is_strongly_connected() {
            Ok(())
        } else {
            Err(Error::NotStronglyConnected)
        }
    }

    /// Tarjan's algorithm, iterative. Components are returned in reverse
    /// topological order of the condensation; vertices inside a component are
    /// sorted.
    pub fn strongly_connected_components(&self) -> Vec<Vec<Vertex>> {
        const UNVISITED: usize = usize::MAX;
        let m = self.m;
        let mut index = vec![UNVISITED; m];
        let mut low = vec![0; m];
        let mut on_stack = vec![false; m];
        let mut stack = Vec::new();
        let mut components = Vec::new();
        let mut counter = 0;

        for root in 0..m {
            if index[root] != UNVISITED {
                continue;
            }
            // (vertex, next out-edge position)
            let mut call: Vec<(Vertex, usize)> = vec![(root, 0)];
            index[root] = counter;
            low[root] = counter;
            counter += 1;
            stack.push(root);
            on_stack[root] = true;

            while let Some(&mut (v, ref mut pos)) = call.last_mut() {
                if let Some(&e) = self.out_edges[v].get(*pos) {
                    *pos += 1;
                    let w = self.edges[e].1;
                    if index[w] == UNVISITED {
                        index[w] = counter;
                        low[w] = counter;
                        counter += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        call.push((w, 0));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                    continue;
                }
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    while let Some(w) = stack.pop() {
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

    /// Vertices reachable from `v` by a directed path, including `v`.
    pub fn descendants(&self, v: Vertex) -> Vec<bool> {
        self.bfs_mark(v, |e| &self.out_edges[e], |e| self.edges[e].1)
    }

    /// Vertices with a directed path to `v`, including `v`.
    pub fn ancestors(&self, v: Vertex) -> Vec<bool> {
        self.bfs_mark(v, |e| &self.in_edges[e], |e| self.edges[e].0)
    }

    fn bfs_mark<'a>(
        &'a self,
        start: Vertex,
        adj: impl Fn(Vertex) -> &'a Vec<EdgeId>,
        other: impl Fn(EdgeId) -> Vertex,
    ) -> Vec<bool> {
        let mut seen = vec![false; self.m];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &e in adj(v) {
                let w = other(e);
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    /// Shortest directed path from `from` to `to` as an edge list. Ties are
    /// broken by edge id, so the result is deterministic.
    pub fn shortest_path(&self, from: Vertex, to: Vertex) -> Option<Vec<EdgeId>> {
        if from == to {
            return Some(Vec::new());
        }
        let mut pred: Vec<Option<EdgeId>> = vec![None; self.m];
        let mut seen = vec![false; self.m];
        seen[from] = true;
        let mut queue = VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            for &e in &self.out_edges[v] {
                let w = self.edges[e].1;
                if seen[w] {
                    continue;
                }
                seen[w] = true;
                pred[w] = Some(e);
                if w == to {
                    let mut path = Vec::new();
                    let mut cur = to;
                    while let Some(e) = pred[cur] {
                        path.push(e);
                        cur = self.edges[e].0;
                    }
                    path.reverse();
                    return Some(path);
                }
                queue.push_back(w);
            }
        }
        None
    }

    /// Certificate that the graph is not strongly connected, built from the
    /// lexicographically smallest pair `(v1, v2)` with no path from `v2` to
    /// `v1`. `None` iff the graph is strongly connected.
    pub fn nonconnectivity_witness(&self) -> Option<Witness> {
        if self.is_strongly_connected() {
            return None;
        }
        (0..self.m).find_map(|v1| {
            let anc = self.ancestors(v1);
            (0..self.m)
                .find(|&v2| !anc[v2])
                .and_then(|v2| self.witness_for_pair(v1, v2))
        })
    }

    /// Witness built from a specific pair; `None` if `v2` reaches `v1`.
    pub fn witness_for_pair(&self, v1: Vertex, v2: Vertex) -> Option<Witness> {
        let anc = self.ancestors(v1);
        if anc[v2] {
            return None;
        }
        let desc = self.descendants(v2);
        let collect = |mask: &[bool]| -> Vec<Vertex> {
            mask.iter()
                .enumerate()
                .filter_map(|(v, &b)| b.then_some(v))
                .collect()
        };
        Some(Witness {
            v1,
            v2,
            upstream: collect(&anc),
            downstream: collect(&desc),
        })
    }

    /// Closed walk from `start` visiting every vertex: shortest paths to each
    /// not-yet-visited vertex in ascending order, then back to `start`.
    pub fn covering_closed_walk(&self, start: Vertex) -> Result<Walk> {
        if start >= self.m {
            return Err(Error::InvalidGraph(format!("no vertex {}", start + 1)));
        }
        self.require_strongly_connected()?;
        let mut visited = vec![false; self.m];
        visited[start] = true;
        let mut edges = Vec::new();
        let mut cur = start;
        for v in 0..self.m {
            if visited[v] {
                continue;
            }
            let path = self
                .shortest_path(cur, v)
                .ok_or(Error::NotStronglyConnected)?;
            for &e in &path {
                visited[self.edges[e].1] = true;
            }
            edges.extend(path);
            cur = v;
        }
        edges.extend(
            self.shortest_path(cur, start)
                .ok_or(Error::NotStronglyConnected)?,
        );
        Ok(Walk::from_edges(self, start, edges))
    }

    /// Dense `B_e`: `-1` at `(S(e), S(e))`, `+1` at `(T(e), S(e))`.
    pub fn control_matrix(&self, e: EdgeId) -> DMatrix<f64> {
        let (s, t) = self.edges[e];
        let mut b = DMatrix::zeros(self.m, self.m);
        b[(s, s)] = -1.0;
        b[(t, s)] = 1.0;
        b
    }

    /// Transition-rate matrix `sum_e rates[e] * B_e`.
    pub fn generator(&self, rates: &[f64]) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(self.m, self.m);
        for (e, &(s, t)) in self.edges.iter().enumerate() {
            q[(s, s)] -= rates[e];
            q[(t, s)] += rates[e];
        }
        q
    }

    /// Symmetric graph Laplacian of the underlying undirected graph. Only
    /// meaningful for bidirected graphs, where each unordered pair is counted
    /// once.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.m, self.m);
        for &(s, t) in &self.edges {
            if s < t || self.find_edge(t, s).is_none() {
                l[(s, t)] -= 1.0;
                l[(t, s)] -= 1.0;
                l[(s, s)] += 1.0;
                l[(t, t)] += 1.0;
            }
        }
        l
    }
}

/// Disjoint vertex sets `V1` (ancestors of `v1`) and `V2` (descendants of
/// `v2`) certifying that the graph is not strongly connected.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub v1: Vertex,
    pub v2: Vertex,
    pub upstream: Vec<Vertex>,
    pub downstream: Vec<Vertex>,
}

impl Witness {
    /// `sum_{V2} x_v - sum_{V1} x_v`; nondecreasing along every trajectory
    /// driven by nonnegative rates.
    pub fn functional(&self, x: &[f64]) -> f64 {
        self.downstream.iter().map(|&v| x[v]).sum::<f64>()
            - self.upstream.iter().map(|&v| x[v]).sum::<f64>()
    }
}

/// A closed edge walk starting and ending at `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct Walk {
    pub start: Vertex,
    pub edges: Vec<EdgeId>,
    /// `v_0, T(e_1), ..., T(e_s)`.
    pub vertices: Vec<Vertex>,
    pub covering: bool,
}

impl Walk {
    fn from_edges(g: &Graph, start: Vertex, edges: Vec<EdgeId>) -> Self {
        let mut vertices = Vec::with_capacity(edges.len() + 1);
        vertices.push(start);
        vertices.extend(edges.iter().map(|&e| g.target(e)));
        let mut seen = vec![false; g.vertex_count()];
        for &v in &vertices {
            seen[v] = true;
        }
        Self {
            start,
            edges,
            vertices,
            covering: seen.into_iter().all(|b| b),
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Consecutive edges chain, and the walk returns to `start`.
    pub fn is_closed(&self, g: &Graph) -> bool {
        let mut cur = self.start;
        for &e in &self.edges {
            if g.source(e) != cur {
                return false;
            }
            cur = g.target(e);
        }
        cur == self.start
    }
}
